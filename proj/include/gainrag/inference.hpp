#pragma once

#include "gainrag/lm_backend.hpp"
#include "gainrag/prompts.hpp"
#include "gainrag/retrieval.hpp"
#include "gainrag/selector.hpp"
#include "gainrag/types.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gainrag::inference {

enum class Mode { GainRAG, StandardRAG, PseudoOnly, NoRetrieval };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct StageTimings {
    double pseudo_ms = 0.0;
    double retrieve_ms = 0.0;
    double score_ms = 0.0;
    double generate_ms = 0.0;
};

/// Full record of one answer run: candidates, scores, the chosen passage,
/// and the generated answer.
struct InferenceTrace {
    std::string query_id;
    std::string query_text;
    std::optional<Passage> pseudo_passage;
    std::vector<retrieval::ScoredEntry> candidates; // pseudo first when present
    std::vector<double> selector_scores;            // one per candidate (gainrag mode)
    std::optional<std::string> chosen_id;
    std::optional<std::string> chosen_origin;
    std::string answer;
    StageTimings timings;
};

struct InferenceOptions {
    int k = 100;
    int max_answer_tokens = 64;
    int pseudo_max_tokens = 160;
    bool skip_pseudo = false; // latency escape hatch; the workflow default generates it
    prompts::PromptTemplate generation_template = prompts::default_generation_template();
    prompts::PromptTemplate pseudo_template = prompts::default_pseudo_template();
};

/// Runs one query through the selected workflow.
///
/// gainrag: generate the pseudo passage, retrieve k candidates, score every
/// candidate with the selector, pick the argmax (ties go to the lowest
/// index, favoring the pseudo passage), and generate with the chosen
/// passage. Errors with "degenerate: no candidates" when retrieval returns
/// nothing and no pseudo passage was produced.
///
/// standard-rag: generate with the retrieval rank-1 passage; no pseudo
/// passage is involved. pseudo-only: generate with the pseudo passage
/// alone. no-retrieval: generate with the passage slot left empty.
InferenceTrace answer(lm::LMBackend& backend, const retrieval::Retriever& retriever,
                      const selector::SelectorModel* model, const std::string& query_id,
                      const std::string& query_text, Mode mode,
                      const InferenceOptions& options = {});

/// Trace serialization. Timings are carried in a separate object so primary
/// artifacts stay byte-identical across reruns; `include_timings` inlines
/// them for standalone use.
nlohmann::json trace_to_json(const InferenceTrace& trace, bool include_timings = true);
nlohmann::json timings_to_json(const InferenceTrace& trace);
InferenceTrace trace_from_json(const nlohmann::json& obj);

} // namespace gainrag::inference
