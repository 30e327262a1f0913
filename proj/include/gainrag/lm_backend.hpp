#pragma once

#include "gainrag/types.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gainrag::lm {

enum class BackendKind { Remote, Mock };

/// Connection and capability description of a generator backend.
struct BackendDescriptor {
    BackendKind kind = BackendKind::Mock;
    std::string endpoint;            // remote only
    double timeout_seconds = 30.0;
    int max_parallel = 4;
    bool supports_full_distributions = false;

    /// Throws std::invalid_argument on violated invariants (endpoint present
    /// iff remote, timeout > 0, max_parallel >= 1).
    void validate() const;
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when full per-step distributions are requested from a backend that
/// cannot provide them.
struct CapabilityError : BackendError {
    using BackendError::BackendError;
};

/// Uniform access to a generator that can complete prompts and report
/// per-token log-probabilities of a fixed continuation. Implementations are
/// safe for concurrent use by multiple callers.
class LMBackend {
public:
    virtual ~LMBackend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    /// Generates text for a prompt. `stop`, when provided, truncates
    /// generation at the first occurrence of any stop token.
    virtual std::string complete(const std::string& prompt, int max_tokens,
                                 const std::optional<std::vector<std::string>>& stop = std::nullopt) = 0;

    /// Scores a fixed continuation under a context. The returned tokens
    /// concatenate (under the backend's own tokenization) to the
    /// continuation, and logprobs[j] = log p(token_j | context, token_<j).
    /// For a fixed backend the token split depends only on the continuation,
    /// never on the context; callers pairing two contexts rely on this.
    virtual TokenScoreSeq score_continuation(const std::string& context,
                                             const std::string& continuation,
                                             bool want_full_distributions) = 0;
};

using BackendPtr = std::shared_ptr<LMBackend>;

} // namespace gainrag::lm
