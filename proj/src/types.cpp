#include "gainrag/types.hpp"

#include <cmath>
#include <stdexcept>

namespace gainrag {

std::string to_string(PassageOrigin origin) {
    return origin == PassageOrigin::Pseudo ? "pseudo" : "retrieved";
}

PassageOrigin passage_origin_from_string(const std::string& s) {
    if (s == "pseudo") return PassageOrigin::Pseudo;
    if (s == "retrieved") return PassageOrigin::Retrieved;
    throw std::invalid_argument("unknown passage origin: \"" + s + "\"");
}

void TokenScoreSeq::validate() const {
    if (tokens.empty()) {
        throw std::invalid_argument("TokenScoreSeq: empty token list");
    }
    if (tokens.size() != logprobs.size()) {
        throw std::invalid_argument("TokenScoreSeq: tokens/logprobs length mismatch");
    }
    if (normalized) {
        for (double lp : logprobs) {
            if (!(lp <= 1e-12)) {
                throw std::invalid_argument("TokenScoreSeq: normalized logprob > 0");
            }
        }
    }
    if (full_distributions) {
        if (full_distributions->size() != tokens.size()) {
            throw std::invalid_argument("TokenScoreSeq: full distribution count mismatch");
        }
        for (const auto& dist : *full_distributions) {
            double sum = 0.0;
            for (const auto& [tok, lp] : dist) sum += std::exp(lp);
            if (std::abs(sum - 1.0) > 1e-6) {
                throw std::invalid_argument("TokenScoreSeq: per-step distribution does not sum to 1");
            }
        }
    }
}

double label_from_gain(double gain) {
    if (gain < 0.0 || !std::isfinite(gain)) {
        throw std::invalid_argument("gain must be finite and >= 0");
    }
    return -std::log(gain + 1.0);
}

} // namespace gainrag
