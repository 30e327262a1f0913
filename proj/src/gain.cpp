#include "gainrag/gain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gainrag::gain {

std::string to_string(GainMode mode) {
    return mode == GainMode::Exact ? "exact" : "approximate";
}

GainMode gain_mode_from_string(const std::string& s) {
    if (s == "exact") return GainMode::Exact;
    if (s == "approximate") return GainMode::Approximate;
    throw std::invalid_argument("unknown gain mode: \"" + s + "\"");
}

void GainConfig::validate() const {
    if (alpha < 0.0 || !std::isfinite(alpha)) {
        throw std::invalid_argument("gain alpha must be finite and >= 0");
    }
}

double perplexity(const TokenScoreSeq& scores) {
    if (scores.tokens.empty()) {
        throw std::invalid_argument("perplexity: empty score sequence");
    }
    double sum = 0.0;
    for (double lp : scores.logprobs) sum += lp;
    const double mean = sum / static_cast<double>(scores.logprobs.size());
    return std::exp(-mean);
}

namespace {

/// Stable log(sum(exp(values))).
double log_sum_exp(const std::vector<double>& values) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (double v : values) max_v = std::max(max_v, v);
    if (!std::isfinite(max_v)) return max_v;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - max_v);
    return max_v + std::log(sum);
}

} // namespace

TokenScoreSeq contrastive_score_seq(const TokenScoreSeq& with_ctx,
                                    const TokenScoreSeq& without_ctx, double alpha,
                                    GainMode mode) {
    if (with_ctx.tokens != without_ctx.tokens) {
        throw std::invalid_argument(
            "contrastive_score_seq: token mismatch between paired scorings; the backend "
            "cannot support contrastive scoring for this continuation");
    }
    if (with_ctx.tokens.empty()) {
        throw std::invalid_argument("contrastive_score_seq: empty sequences");
    }

    TokenScoreSeq out;
    out.tokens = with_ctx.tokens;

    if (mode == GainMode::Approximate) {
        out.normalized = false;
        out.logprobs.reserve(out.tokens.size());
        for (std::size_t j = 0; j < out.tokens.size(); ++j) {
            out.logprobs.push_back((1.0 + alpha) * with_ctx.logprobs[j] -
                                   alpha * without_ctx.logprobs[j]);
        }
        return out;
    }

    if (!with_ctx.full_distributions || !without_ctx.full_distributions) {
        throw lm::CapabilityError(
            "contrastive_score_seq: exact mode requires full per-step distributions");
    }

    out.normalized = true;
    out.full_distributions.emplace();
    for (std::size_t j = 0; j < out.tokens.size(); ++j) {
        const auto& dist_with = (*with_ctx.full_distributions)[j];
        const auto& dist_without = (*without_ctx.full_distributions)[j];
        if (dist_with.size() != dist_without.size()) {
            throw std::invalid_argument(
                "contrastive_score_seq: per-step distribution support mismatch");
        }

        std::vector<double> adjusted;
        adjusted.reserve(dist_with.size());
        for (const auto& [token, lp_with] : dist_with) {
            auto it = dist_without.find(token);
            if (it == dist_without.end()) {
                throw std::invalid_argument(
                    "contrastive_score_seq: per-step distribution support mismatch");
            }
            adjusted.push_back((1.0 + alpha) * lp_with - alpha * it->second);
        }
        const double log_z = log_sum_exp(adjusted);

        std::map<std::string, double> step;
        std::size_t i = 0;
        for (const auto& [token, lp_with] : dist_with) {
            (void)lp_with;
            step[token] = adjusted[i++] - log_z;
        }

        auto realized = step.find(out.tokens[j]);
        if (realized == step.end()) {
            throw std::invalid_argument("contrastive_score_seq: realized token \"" +
                                        out.tokens[j] + "\" missing from step distribution");
        }
        out.logprobs.push_back(realized->second);
        out.full_distributions->push_back(std::move(step));
    }
    return out;
}

double gain_signal(lm::LMBackend& backend, const std::string& question,
                   const std::string& passage_text, const std::string& answer,
                   const GainConfig& config) {
    if (answer.empty()) {
        throw std::invalid_argument("gain_signal: empty answer");
    }
    config.validate();
    const bool want_full = config.mode == GainMode::Exact;
    if (want_full && !backend.descriptor().supports_full_distributions) {
        throw lm::CapabilityError("gain_signal: exact mode requires a backend with full "
                              "per-step distribution support");
    }

    const std::string ctx_with = config.generation_template.render(passage_text, question);
    const std::string ctx_without = config.generation_template.render("", question);

    TokenScoreSeq with_ctx = backend.score_continuation(ctx_with, answer, want_full);
    TokenScoreSeq without_ctx = backend.score_continuation(ctx_without, answer, want_full);

    TokenScoreSeq adjusted = contrastive_score_seq(with_ctx, without_ctx, config.alpha, config.mode);
    return perplexity(adjusted);
}

} // namespace gainrag::gain
