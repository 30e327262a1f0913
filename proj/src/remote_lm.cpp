#include "gainrag/remote_lm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace gainrag::lm {

void BackendDescriptor::validate() const {
    if (kind == BackendKind::Remote && endpoint.empty()) {
        throw std::invalid_argument("backend descriptor: remote backend requires an endpoint");
    }
    if (kind == BackendKind::Mock && !endpoint.empty()) {
        throw std::invalid_argument("backend descriptor: mock backend must not set an endpoint");
    }
    if (!(timeout_seconds > 0.0)) {
        throw std::invalid_argument("backend descriptor: timeout must be > 0");
    }
    if (max_parallel < 1) {
        throw std::invalid_argument("backend descriptor: max_parallel must be >= 1");
    }
}

namespace {

struct SlotGuard {
    std::mutex& mutex;
    std::condition_variable& cv;
    int& in_use;

    SlotGuard(std::mutex& m, std::condition_variable& c, int& counter, int limit)
        : mutex(m), cv(c), in_use(counter) {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return in_use < limit; });
        ++in_use;
    }
    ~SlotGuard() {
        {
            std::lock_guard lock(mutex);
            --in_use;
        }
        cv.notify_one();
    }
};

bool is_transient(httplib::Error error) {
    switch (error) {
        case httplib::Error::Connection:
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::Read:
        case httplib::Error::Write:
            return true;
        default:
            return false;
    }
}

} // namespace

RemoteBackend::RemoteBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    descriptor_.validate();
    if (descriptor_.kind != BackendKind::Remote) {
        throw std::invalid_argument("RemoteBackend: descriptor kind must be remote");
    }
    if (const char* token = std::getenv("GAINRAG_BACKEND_TOKEN")) {
        bearer_token_ = token;
    }
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::post_json(const std::string& path, const std::string& body) {
    SlotGuard slot(slots_mutex_, slots_cv_, slots_in_use_, descriptor_.max_parallel);

    httplib::Client client(descriptor_.endpoint);
    const time_t timeout_s = static_cast<time_t>(descriptor_.timeout_seconds);
    const time_t timeout_us = static_cast<time_t>(
        (descriptor_.timeout_seconds - std::floor(descriptor_.timeout_seconds)) * 1e6);
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);
    if (!bearer_token_.empty()) {
        client.set_bearer_token_auth(bearer_token_);
    }

    // One retry on transient network failure, then error: interrupted signal
    // synthesis must be resumable rather than silently lossy.
    httplib::Result result{nullptr, httplib::Error::Unknown};
    for (int attempt = 0; attempt < 2; ++attempt) {
        result = client.Post(path, body, "application/json");
        if (result) break;
        if (!is_transient(result.error())) break;
    }
    if (!result) {
        throw BackendError("backend request failed: " + descriptor_.endpoint + path + ": " +
                           httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        throw BackendError("backend request failed: " + descriptor_.endpoint + path +
                           " returned status " + std::to_string(result->status));
    }
    return result->body;
}

std::string RemoteBackend::complete(const std::string& prompt, int max_tokens,
                                    const std::optional<std::vector<std::string>>& stop) {
    if (prompt.empty()) {
        throw std::invalid_argument("complete: empty prompt");
    }
    if (max_tokens < 1) {
        throw std::invalid_argument("complete: max_tokens must be >= 1");
    }
    nlohmann::json request = {{"prompt", prompt}, {"max_tokens", max_tokens}};
    if (stop) request["stop"] = *stop;

    const std::string body = post_json("/v1/complete", request.dump());
    try {
        return nlohmann::json::parse(body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("malformed response from /v1/complete: " + std::string(e.what()));
    }
}

TokenScoreSeq RemoteBackend::score_continuation(const std::string& context,
                                                const std::string& continuation,
                                                bool want_full_distributions) {
    if (continuation.empty()) {
        throw std::invalid_argument("score_continuation: empty continuation");
    }
    if (want_full_distributions && !descriptor_.supports_full_distributions) {
        throw CapabilityError(
            "score_continuation: backend does not support full per-step distributions");
    }
    const nlohmann::json request = {
        {"context", context}, {"continuation", continuation}, {"full", want_full_distributions}};

    const std::string body = post_json("/v1/score", request.dump());
    TokenScoreSeq seq;
    try {
        const auto doc = nlohmann::json::parse(body);
        seq.tokens = doc.at("tokens").get<std::vector<std::string>>();
        seq.logprobs = doc.at("logprobs").get<std::vector<double>>();
        if (want_full_distributions) {
            if (!doc.contains("full_distributions") || doc.at("full_distributions").is_null()) {
                throw BackendError(
                    "malformed response from /v1/score: full_distributions missing despite "
                    "the capability flag");
            }
            seq.full_distributions =
                doc.at("full_distributions").get<std::vector<std::map<std::string, double>>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("malformed response from /v1/score: " + std::string(e.what()));
    }
    try {
        seq.validate();
    } catch (const std::invalid_argument& e) {
        throw BackendError("malformed response from /v1/score: " + std::string(e.what()));
    }
    return seq;
}

} // namespace gainrag::lm
