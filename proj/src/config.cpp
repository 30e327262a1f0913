#include "gainrag/config.hpp"

#include "gainrag/jsonl.hpp"

#include <fstream>

namespace gainrag::config {

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const std::string& path, const char* key, T& out) {
    if (!doc.contains(key) || doc.at(key).is_null()) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field \"" + path + key + "\": " + e.what());
    }
}

} // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc) {
    PipelineConfig cfg;

    if (doc.contains("backend")) {
        const auto& b = doc.at("backend");
        std::string kind = "mock";
        read_field(b, "backend.", "kind", kind);
        if (kind == "mock") {
            cfg.backend.descriptor.kind = lm::BackendKind::Mock;
        } else if (kind == "remote") {
            cfg.backend.descriptor.kind = lm::BackendKind::Remote;
        } else {
            throw ConfigError("config field \"backend.kind\": expected \"mock\" or \"remote\"");
        }
        read_field(b, "backend.", "mock_spec_path", cfg.backend.mock_spec_path);
        read_field(b, "backend.", "endpoint", cfg.backend.descriptor.endpoint);
        read_field(b, "backend.", "timeout_seconds", cfg.backend.descriptor.timeout_seconds);
        read_field(b, "backend.", "max_parallel", cfg.backend.descriptor.max_parallel);
        read_field(b, "backend.", "supports_full_distributions",
                   cfg.backend.descriptor.supports_full_distributions);
        if (cfg.backend.descriptor.kind == lm::BackendKind::Mock) {
            cfg.backend.descriptor.supports_full_distributions = true;
        }
    }

    read_field(doc, "", "corpus_path", cfg.corpus_path);
    read_field(doc, "", "dataset_path", cfg.dataset_path);
    if (doc.contains("external_scores_path") && !doc.at("external_scores_path").is_null()) {
        cfg.external_scores_path = doc.at("external_scores_path").get<std::string>();
    }

    if (doc.contains("retrieval")) {
        const auto& r = doc.at("retrieval");
        read_field(r, "retrieval.", "k", cfg.retrieval.k);
        read_field(r, "retrieval.", "training_k", cfg.retrieval.training_k);
        std::string mode = "lexical";
        read_field(r, "retrieval.", "mode", mode);
        if (mode == "lexical") {
            cfg.retrieval.mode = retrieval::RetrievalMode::Lexical;
        } else if (mode == "external") {
            cfg.retrieval.mode = retrieval::RetrievalMode::External;
        } else {
            throw ConfigError(
                "config field \"retrieval.mode\": expected \"lexical\" or \"external\"");
        }
    }

    if (doc.contains("gain")) {
        const auto& g = doc.at("gain");
        read_field(g, "gain.", "alpha", cfg.gain.alpha);
        std::string mode = to_string(cfg.gain.mode);
        read_field(g, "gain.", "mode", mode);
        try {
            cfg.gain.mode = gain::gain_mode_from_string(mode);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config field \"gain.mode\": " + std::string(e.what()));
        }
    }

    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        read_field(t, "train.", "epochs", cfg.train.train.epochs);
        read_field(t, "train.", "batch_size", cfg.train.train.batch_size);
        read_field(t, "train.", "learning_rate", cfg.train.train.learning_rate);
        read_field(t, "train.", "hidden_width", cfg.train.train.hidden_width);
        read_field(t, "train.", "temperature", cfg.train.train.temperature);
        read_field(t, "train.", "group_size", cfg.train.group_size);
        read_field(t, "train.", "filter", cfg.train.filter);
        if (t.contains("seed")) {
            read_field(t, "train.", "seed", cfg.train.train.seed);
        }
    }

    if (doc.contains("pseudo")) {
        const auto& p = doc.at("pseudo");
        read_field(p, "pseudo.", "max_tokens", cfg.pseudo.max_tokens);
        read_field(p, "pseudo.", "include_na", cfg.pseudo.include_na);
        read_field(p, "pseudo.", "skip", cfg.pseudo.skip);
    }

    if (doc.contains("prompts")) {
        const auto& p = doc.at("prompts");
        read_field(p, "prompts.", "generation", cfg.generation_template.text);
        read_field(p, "prompts.", "pseudo", cfg.pseudo_template.text);
    }

    if (doc.contains("inference")) {
        const auto& i = doc.at("inference");
        std::string mode = to_string(cfg.inference_mode);
        read_field(i, "inference.", "mode", mode);
        try {
            cfg.inference_mode = inference::mode_from_string(mode);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config field \"inference.mode\": " + std::string(e.what()));
        }
        read_field(i, "inference.", "max_answer_tokens", cfg.max_answer_tokens);
    }

    read_field(doc, "", "coverage_ks", cfg.coverage_ks);
    read_field(doc, "", "seed", cfg.seed);
    if (!doc.contains("train") || !doc.at("train").contains("seed")) {
        cfg.train.train.seed = cfg.seed;
    }
    read_field(doc, "", "output_dir", cfg.output_dir);

    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    return from_json(doc);
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json doc;
    doc["backend"] = {
        {"kind", backend.descriptor.kind == lm::BackendKind::Mock ? "mock" : "remote"},
        {"mock_spec_path", backend.mock_spec_path},
        {"endpoint", backend.descriptor.endpoint},
        {"timeout_seconds", backend.descriptor.timeout_seconds},
        {"max_parallel", backend.descriptor.max_parallel},
        {"supports_full_distributions", backend.descriptor.supports_full_distributions}};
    doc["corpus_path"] = corpus_path;
    doc["dataset_path"] = dataset_path;
    doc["external_scores_path"] =
        external_scores_path ? nlohmann::json(*external_scores_path) : nlohmann::json(nullptr);
    doc["retrieval"] = {
        {"k", retrieval.k},
        {"training_k", retrieval.training_k},
        {"mode", retrieval.mode == retrieval::RetrievalMode::Lexical ? "lexical" : "external"}};
    doc["gain"] = {{"alpha", gain.alpha}, {"mode", to_string(gain.mode)}};
    doc["train"] = {{"epochs", train.train.epochs},
                    {"batch_size", train.train.batch_size},
                    {"learning_rate", train.train.learning_rate},
                    {"hidden_width", train.train.hidden_width},
                    {"temperature", train.train.temperature},
                    {"seed", train.train.seed},
                    {"group_size", train.group_size},
                    {"filter", train.filter}};
    doc["pseudo"] = {{"max_tokens", pseudo.max_tokens},
                     {"include_na", pseudo.include_na},
                     {"skip", pseudo.skip}};
    doc["prompts"] = {{"generation", generation_template.text}, {"pseudo", pseudo_template.text}};
    doc["inference"] = {{"mode", to_string(inference_mode)},
                        {"max_answer_tokens", max_answer_tokens}};
    doc["coverage_ks"] = coverage_ks;
    doc["seed"] = seed;
    doc["output_dir"] = output_dir;
    return doc;
}

void PipelineConfig::validate() const {
    try {
        backend.descriptor.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config field \"backend\": " + std::string(e.what()));
    }
    if (backend.descriptor.kind == lm::BackendKind::Mock && backend.mock_spec_path.empty()) {
        throw ConfigError("config field \"backend.mock_spec_path\": required for mock backends");
    }
    if (retrieval.k < 1) {
        throw ConfigError("config field \"retrieval.k\": must be >= 1");
    }
    if (retrieval.training_k < 1) {
        throw ConfigError("config field \"retrieval.training_k\": must be >= 1");
    }
    if (retrieval.mode == retrieval::RetrievalMode::External && !external_scores_path) {
        throw ConfigError(
            "config field \"external_scores_path\": required when retrieval.mode is external");
    }
    try {
        gain.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config field \"gain.alpha\": " + std::string(e.what()));
    }
    try {
        train.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config field \"train\": " + std::string(e.what()));
    }
    if (train.group_size < 1) {
        throw ConfigError("config field \"train.group_size\": must be >= 1");
    }
    if (pseudo.max_tokens < 1) {
        throw ConfigError("config field \"pseudo.max_tokens\": must be >= 1");
    }
    if (max_answer_tokens < 1) {
        throw ConfigError("config field \"inference.max_answer_tokens\": must be >= 1");
    }
    if (coverage_ks.empty()) {
        throw ConfigError("config field \"coverage_ks\": must not be empty");
    }
    for (std::size_t i = 0; i < coverage_ks.size(); ++i) {
        if (coverage_ks[i] < 1 || (i > 0 && coverage_ks[i] <= coverage_ks[i - 1])) {
            throw ConfigError("config field \"coverage_ks\": must be strictly ascending and >= 1");
        }
    }
    if (output_dir.empty()) {
        throw ConfigError("config field \"output_dir\": must not be empty");
    }
}

} // namespace gainrag::config
