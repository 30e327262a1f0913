#pragma once

#include "gainrag/lm_backend.hpp"

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>

namespace gainrag::lm {

/// HTTP client for the generator wire contract:
///
///   POST /v1/complete  {"prompt", "max_tokens", "stop"?}      -> {"text"}
///   POST /v1/score     {"context", "continuation", "full"}    ->
///       {"tokens", "logprobs", "full_distributions"?}
///
/// Bodies are JSON, UTF-8. A bearer token is attached from the
/// GAINRAG_BACKEND_TOKEN environment variable when set. Transient network
/// failures are retried once; HTTP error statuses are not. The configured
/// parallelism bound is enforced internally, so any number of callers may
/// share one instance.
class RemoteBackend : public LMBackend {
public:
    explicit RemoteBackend(BackendDescriptor descriptor);
    ~RemoteBackend() override;

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    std::string complete(const std::string& prompt, int max_tokens,
                         const std::optional<std::vector<std::string>>& stop = std::nullopt) override;

    TokenScoreSeq score_continuation(const std::string& context, const std::string& continuation,
                                     bool want_full_distributions) override;

private:
    std::string post_json(const std::string& path, const std::string& body);

    BackendDescriptor descriptor_;
    std::string bearer_token_;

    std::mutex slots_mutex_;
    std::condition_variable slots_cv_;
    int slots_in_use_ = 0;
};

} // namespace gainrag::lm
