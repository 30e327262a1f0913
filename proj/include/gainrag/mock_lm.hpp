#pragma once

#include "gainrag/lm_backend.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace gainrag::lm {

/// A next-token distribution over the mock vocabulary. Must cover every
/// vocabulary token and sum to 1 within 1e-9.
using TokenDistribution = std::map<std::string, double>;

struct ConditionalRule {
    std::string context_contains;
    TokenDistribution distribution;
};

struct CompletionRule {
    std::string prompt_contains;
    std::string completion;
};

/// Fully tabulated deterministic language model. Tokenization is whitespace
/// splitting, so every score is hand-computable. Rule order is significant:
/// the first conditional rule whose substring occurs in the effective
/// context (original context plus already-scored continuation prefix) wins.
struct MockLMSpec {
    std::vector<std::string> vocabulary;
    TokenDistribution default_distribution;
    std::vector<ConditionalRule> rules;
    std::vector<CompletionRule> completions;

    /// Throws std::invalid_argument on violated invariants.
    void validate() const;

    /// Parses the JSON spec format. Distributions may carry a "*" entry
    /// whose probability is split uniformly across vocabulary tokens not
    /// mentioned explicitly; the loaded distribution always covers the full
    /// vocabulary.
    static MockLMSpec from_json(const nlohmann::json& doc);
    static MockLMSpec load(const std::string& path);

    nlohmann::json to_json() const;
};

class MockBackend : public LMBackend {
public:
    explicit MockBackend(MockLMSpec spec);

    const BackendDescriptor& descriptor() const override { return descriptor_; }
    const MockLMSpec& spec() const { return spec_; }

    std::string complete(const std::string& prompt, int max_tokens,
                         const std::optional<std::vector<std::string>>& stop = std::nullopt) override;

    TokenScoreSeq score_continuation(const std::string& context, const std::string& continuation,
                                     bool want_full_distributions) override;

private:
    const TokenDistribution& distribution_for(const std::string& effective_context) const;

    MockLMSpec spec_;
    BackendDescriptor descriptor_;
};

} // namespace gainrag::lm
