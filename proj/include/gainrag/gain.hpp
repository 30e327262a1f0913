#pragma once

#include "gainrag/lm_backend.hpp"
#include "gainrag/prompts.hpp"
#include "gainrag/types.hpp"

namespace gainrag::gain {

/// Exact mode renormalizes the contrastively adjusted per-step distribution
/// over the full vocabulary and needs a backend that reports full
/// distributions. Approximate mode adjusts only the realized token's score,
/// without renormalization, and is labeled a deviation wherever it is used.
enum class GainMode { Exact, Approximate };

std::string to_string(GainMode mode);
GainMode gain_mode_from_string(const std::string& s);

struct GainConfig {
    double alpha = 0.5;
    GainMode mode = GainMode::Exact;
    prompts::PromptTemplate generation_template = prompts::default_generation_template();

    void validate() const;
};

/// exp(-(1/N) * sum(logprobs)). The mean is taken before exponentiation, so
/// long low-probability sequences stay in range. Result >= 1 whenever all
/// logprobs are <= 0.
double perplexity(const TokenScoreSeq& scores);

/// Contrastive adjustment of a scored continuation.
///
/// Exact mode: per step, the adjusted score of every vocabulary token is
/// (1 + alpha) * logp_with - alpha * logp_without, renormalized by softmax;
/// the realized token's adjusted log-probability is recorded and the full
/// adjusted distribution is attached. Log-probabilities stand in for logits:
/// they differ from logits by a per-step constant, which softmax cancels.
///
/// Approximate mode: only the realized token is adjusted, with no
/// renormalization; the output is marked unnormalized.
///
/// With alpha = 0 both modes reproduce `with_ctx`.
TokenScoreSeq contrastive_score_seq(const TokenScoreSeq& with_ctx,
                                    const TokenScoreSeq& without_ctx, double alpha,
                                    GainMode mode);

/// The gain of passage `passage_text` for generating answer `answer` to
/// question `question`: the perplexity of the contrastively adjusted answer
/// scores. Lower means higher gain. The without-context score uses the same
/// template with the passage slot empty, isolating the passage's
/// contribution.
double gain_signal(lm::LMBackend& backend, const std::string& question,
                   const std::string& passage_text, const std::string& answer,
                   const GainConfig& config);

} // namespace gainrag::gain
