#include "gainrag/mock_lm.hpp"

#include "gainrag/jsonl.hpp"
#include "gainrag/text.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace gainrag::lm {

namespace {

void validate_distribution(const TokenDistribution& dist, const std::vector<std::string>& vocab,
                           const std::string& what) {
    if (dist.size() != vocab.size()) {
        throw std::invalid_argument(what + ": distribution must cover the full vocabulary");
    }
    double sum = 0.0;
    for (const auto& tok : vocab) {
        auto it = dist.find(tok);
        if (it == dist.end()) {
            throw std::invalid_argument(what + ": missing vocabulary token \"" + tok + "\"");
        }
        if (it->second < 0.0) {
            throw std::invalid_argument(what + ": negative probability for \"" + tok + "\"");
        }
        sum += it->second;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument(what + ": probabilities sum to " + std::to_string(sum) +
                                    ", expected 1");
    }
}

TokenDistribution expand_distribution(const nlohmann::json& obj,
                                      const std::vector<std::string>& vocab,
                                      const std::string& what) {
    if (!obj.is_object()) {
        throw std::invalid_argument(what + ": distribution must be a JSON object");
    }
    TokenDistribution dist;
    double rest_mass = 0.0;
    bool has_rest = false;
    for (const auto& [tok, value] : obj.items()) {
        if (tok == "*") {
            rest_mass = value.get<double>();
            has_rest = true;
        } else {
            dist[tok] = value.get<double>();
        }
    }
    if (has_rest) {
        std::size_t unmentioned = 0;
        for (const auto& tok : vocab) {
            if (!dist.count(tok)) ++unmentioned;
        }
        if (unmentioned == 0) {
            throw std::invalid_argument(what + ": \"*\" given but every token is explicit");
        }
        const double share = rest_mass / static_cast<double>(unmentioned);
        for (const auto& tok : vocab) {
            if (!dist.count(tok)) dist[tok] = share;
        }
    }
    return dist;
}

} // namespace

void MockLMSpec::validate() const {
    if (vocabulary.empty()) {
        throw std::invalid_argument("mock spec: empty vocabulary");
    }
    std::set<std::string> seen;
    for (const auto& tok : vocabulary) {
        if (!seen.insert(tok).second) {
            throw std::invalid_argument("mock spec: duplicate vocabulary token \"" + tok + "\"");
        }
    }
    validate_distribution(default_distribution, vocabulary, "mock spec default distribution");
    for (std::size_t i = 0; i < rules.size(); ++i) {
        validate_distribution(rules[i].distribution, vocabulary,
                              "mock spec rule " + std::to_string(i));
    }
}

MockLMSpec MockLMSpec::from_json(const nlohmann::json& doc) {
    MockLMSpec spec;
    spec.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    spec.default_distribution =
        expand_distribution(doc.at("default_distribution"), spec.vocabulary, "default_distribution");
    if (doc.contains("rules")) {
        for (const auto& rule : doc.at("rules")) {
            spec.rules.push_back({rule.at("context_contains").get<std::string>(),
                                  expand_distribution(rule.at("distribution"), spec.vocabulary,
                                                      "rule distribution")});
        }
    }
    if (doc.contains("completions")) {
        for (const auto& entry : doc.at("completions")) {
            spec.completions.push_back({entry.at("prompt_contains").get<std::string>(),
                                        entry.at("completion").get<std::string>()});
        }
    }
    spec.validate();
    return spec;
}

MockLMSpec MockLMSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open mock spec: " + path);
    }
    nlohmann::json doc;
    in >> doc;
    return from_json(doc);
}

nlohmann::json MockLMSpec::to_json() const {
    nlohmann::json doc;
    doc["vocabulary"] = vocabulary;
    doc["default_distribution"] = default_distribution;
    doc["rules"] = nlohmann::json::array();
    for (const auto& rule : rules) {
        doc["rules"].push_back(
            {{"context_contains", rule.context_contains}, {"distribution", rule.distribution}});
    }
    doc["completions"] = nlohmann::json::array();
    for (const auto& entry : completions) {
        doc["completions"].push_back(
            {{"prompt_contains", entry.prompt_contains}, {"completion", entry.completion}});
    }
    return doc;
}

MockBackend::MockBackend(MockLMSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    descriptor_.kind = BackendKind::Mock;
    descriptor_.supports_full_distributions = true;
    descriptor_.validate();
}

std::string MockBackend::complete(const std::string& prompt, int max_tokens,
                                  const std::optional<std::vector<std::string>>& stop) {
    if (prompt.empty()) {
        throw std::invalid_argument("complete: empty prompt");
    }
    if (max_tokens < 1) {
        throw std::invalid_argument("complete: max_tokens must be >= 1");
    }
    (void)stop; // completion-table entries are returned verbatim
    for (const auto& entry : spec_.completions) {
        if (prompt.find(entry.prompt_contains) != std::string::npos) {
            return entry.completion;
        }
    }
    return "";
}

const TokenDistribution& MockBackend::distribution_for(const std::string& effective_context) const {
    for (const auto& rule : spec_.rules) {
        if (effective_context.find(rule.context_contains) != std::string::npos) {
            return rule.distribution;
        }
    }
    return spec_.default_distribution;
}

TokenScoreSeq MockBackend::score_continuation(const std::string& context,
                                              const std::string& continuation,
                                              bool want_full_distributions) {
    if (continuation.empty() || text::whitespace_tokens(continuation).empty()) {
        throw std::invalid_argument("score_continuation: empty continuation");
    }
    TokenScoreSeq seq;
    seq.tokens = text::whitespace_tokens(continuation);
    seq.normalized = true;
    if (want_full_distributions) {
        seq.full_distributions.emplace();
    }

    std::string effective = context;
    for (const auto& token : seq.tokens) {
        const TokenDistribution& dist = distribution_for(effective);
        auto it = dist.find(token);
        if (it == dist.end()) {
            throw BackendError("score_continuation: token \"" + token +
                               "\" not in mock vocabulary");
        }
        if (it->second <= 0.0) {
            throw BackendError("score_continuation: token \"" + token +
                               "\" has zero probability under the matched rule");
        }
        seq.logprobs.push_back(std::log(it->second));
        if (want_full_distributions) {
            std::map<std::string, double> step;
            for (const auto& [tok, p] : dist) {
                if (p > 0.0) step[tok] = std::log(p);
            }
            seq.full_distributions->push_back(std::move(step));
        }
        effective += " " + token;
    }
    return seq;
}

} // namespace gainrag::lm
