#pragma once

#include "gainrag/gain.hpp"
#include "gainrag/inference.hpp"
#include "gainrag/lm_backend.hpp"
#include "gainrag/prompts.hpp"
#include "gainrag/retrieval.hpp"
#include "gainrag/selector.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gainrag::config {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendConfig {
    lm::BackendDescriptor descriptor;
    std::string mock_spec_path; // mock only
};

struct RetrievalConfig {
    int k = 100;          // inference-time candidate count
    int training_k = 20;  // candidates gathered per training question
    retrieval::RetrievalMode mode = retrieval::RetrievalMode::Lexical;
};

struct PseudoConfig {
    int max_tokens = 160;
    bool include_na = false; // keep an "N/A" response as a candidate during synthesis
    bool skip = false;       // skip pseudo generation at inference time
};

struct TrainSection {
    selector::TrainConfig train;
    std::size_t group_size = 16;
    bool filter = true;
};

/// Aggregated pipeline configuration, loaded from a single JSON document
/// with flag overrides on top. Validation errors name the offending field
/// path.
struct PipelineConfig {
    BackendConfig backend;
    std::string corpus_path;
    std::string dataset_path;
    std::optional<std::string> external_scores_path;
    RetrievalConfig retrieval;
    gain::GainConfig gain;
    TrainSection train;
    PseudoConfig pseudo;
    prompts::PromptTemplate generation_template = prompts::default_generation_template();
    prompts::PromptTemplate pseudo_template = prompts::default_pseudo_template();
    inference::Mode inference_mode = inference::Mode::GainRAG;
    int max_answer_tokens = 64;
    std::vector<int> coverage_ks = {1, 5, 10, 20, 50, 100};
    std::uint64_t seed = 17;
    std::string output_dir = "out";

    /// Parses a config document; absent fields keep their defaults.
    static PipelineConfig from_json(const nlohmann::json& doc);
    static PipelineConfig load(const std::string& path);

    /// The fully resolved configuration, as echoed into artifact
    /// directories.
    nlohmann::json to_json() const;

    /// Structural validation; file existence is checked per command.
    void validate() const;
};

} // namespace gainrag::config
