#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gainrag {

enum class PassageOrigin { Retrieved, Pseudo };

std::string to_string(PassageOrigin origin);
PassageOrigin passage_origin_from_string(const std::string& s);

/// A retrievable text unit. Pseudo passages are generated from the model's
/// internal knowledge and, when present, occupy index 0 of candidate lists.
struct Passage {
    std::string id;
    std::optional<std::string> title;
    std::string text;
    PassageOrigin origin = PassageOrigin::Retrieved;
};

/// Per-token log-probability record of a continuation under a given context.
///
/// `normalized` distinguishes true log-probabilities (exp sums to 1 per step,
/// every entry <= 0) from unnormalized contrastive scores, which may be
/// positive. Full per-step distributions map token -> logprob and, when
/// present, must normalize to 1 within 1e-6 per step.
struct TokenScoreSeq {
    std::vector<std::string> tokens;
    std::vector<double> logprobs;
    std::optional<std::vector<std::map<std::string, double>>> full_distributions;
    bool normalized = true;

    std::size_t size() const { return tokens.size(); }

    /// Throws std::invalid_argument if any structural invariant is violated.
    void validate() const;
};

/// One question with its gold answers.
struct QASample {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
};

/// One (question, passage) supervision tuple: the raw gain value (a
/// contrastive perplexity, lower is better) and its training label.
struct GainRecord {
    std::string query_id;
    std::string passage_id;
    PassageOrigin origin = PassageOrigin::Retrieved;
    double gain = 0.0;
    double label = 0.0;
};

/// Training label for a raw gain value: -log(v + 1). Strictly decreasing in
/// v, so lower contrastive perplexity maps to a higher softmax target.
double label_from_gain(double gain);

} // namespace gainrag
