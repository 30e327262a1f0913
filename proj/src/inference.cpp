#include "gainrag/inference.hpp"

#include "gainrag/pseudo_passage.hpp"

#include <chrono>
#include <stdexcept>

namespace gainrag::inference {

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::GainRAG: return "gainrag";
        case Mode::StandardRAG: return "standard-rag";
        case Mode::PseudoOnly: return "pseudo-only";
        case Mode::NoRetrieval: return "no-retrieval";
    }
    throw std::logic_error("unreachable mode");
}

Mode mode_from_string(const std::string& s) {
    if (s == "gainrag") return Mode::GainRAG;
    if (s == "standard-rag") return Mode::StandardRAG;
    if (s == "pseudo-only") return Mode::PseudoOnly;
    if (s == "no-retrieval") return Mode::NoRetrieval;
    throw std::invalid_argument("unknown inference mode: \"" + s + "\"");
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string generate_answer(lm::LMBackend& backend, const InferenceOptions& options,
                            const std::string& passage_text, const std::string& query) {
    const std::string prompt = options.generation_template.render(passage_text, query);
    return backend.complete(prompt, options.max_answer_tokens);
}

} // namespace

InferenceTrace answer(lm::LMBackend& backend, const retrieval::Retriever& retriever,
                      const selector::SelectorModel* model, const std::string& query_id,
                      const std::string& query_text, Mode mode, const InferenceOptions& options) {
    if (query_text.empty()) {
        throw std::invalid_argument("answer: empty query");
    }
    if (options.k < 1) {
        throw std::invalid_argument("answer: k must be >= 1");
    }
    if (mode == Mode::GainRAG && model == nullptr) {
        throw std::invalid_argument("answer: gainrag mode requires a selector model");
    }

    InferenceTrace trace;
    trace.query_id = query_id;
    trace.query_text = query_text;

    const bool wants_pseudo =
        (mode == Mode::GainRAG && !options.skip_pseudo) || mode == Mode::PseudoOnly;
    if (wants_pseudo) {
        const auto start = Clock::now();
        trace.pseudo_passage = pseudo::generate_pseudo(backend, query_text,
                                                       options.pseudo_max_tokens,
                                                       options.pseudo_template);
        trace.timings.pseudo_ms = ms_since(start);
    }

    std::vector<selector::Candidate> candidates;
    if (mode == Mode::GainRAG || mode == Mode::StandardRAG) {
        const auto start = Clock::now();
        const auto ranked = retriever.retrieve(query_id, query_text, options.k);
        trace.timings.retrieve_ms = ms_since(start);

        if (trace.pseudo_passage) {
            candidates.push_back({*trace.pseudo_passage, 0.0});
            trace.candidates.push_back({trace.pseudo_passage->id, 0.0});
        }
        for (const auto& entry : ranked.entries) {
            candidates.push_back({retriever.corpus().at(entry.passage_id), entry.score});
            trace.candidates.push_back(entry);
        }
    } else if (mode == Mode::PseudoOnly && trace.pseudo_passage) {
        candidates.push_back({*trace.pseudo_passage, 0.0});
        trace.candidates.push_back({trace.pseudo_passage->id, 0.0});
    }

    const Passage* chosen = nullptr;
    switch (mode) {
        case Mode::GainRAG: {
            if (candidates.empty()) {
                throw std::runtime_error("degenerate: no candidates for query \"" + query_id +
                                         "\"");
            }
            const auto start = Clock::now();
            std::size_t best = 0;
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                const double s = selector::score(*model, query_text, candidates[i].passage,
                                                 candidates[i].retrieval_score);
                trace.selector_scores.push_back(s);
                if (trace.selector_scores[i] > trace.selector_scores[best]) {
                    best = i;
                }
            }
            trace.timings.score_ms = ms_since(start);
            chosen = &candidates[best].passage;
            break;
        }
        case Mode::StandardRAG: {
            if (candidates.empty()) {
                throw std::runtime_error("degenerate: no candidates for query \"" + query_id +
                                         "\"");
            }
            chosen = &candidates.front().passage;
            break;
        }
        case Mode::PseudoOnly: {
            if (candidates.empty()) {
                throw std::runtime_error("degenerate: no candidates for query \"" + query_id +
                                         "\"");
            }
            chosen = &candidates.front().passage;
            break;
        }
        case Mode::NoRetrieval:
            break;
    }

    {
        const auto start = Clock::now();
        trace.answer =
            generate_answer(backend, options, chosen ? chosen->text : "", query_text);
        trace.timings.generate_ms = ms_since(start);
    }
    if (chosen) {
        trace.chosen_id = chosen->id;
        trace.chosen_origin = to_string(chosen->origin);
    }
    return trace;
}

nlohmann::json trace_to_json(const InferenceTrace& trace, bool include_timings) {
    nlohmann::json obj;
    obj["query_id"] = trace.query_id;
    obj["query_text"] = trace.query_text;
    if (trace.pseudo_passage) {
        obj["pseudo_passage"] = {{"id", trace.pseudo_passage->id},
                                 {"text", trace.pseudo_passage->text},
                                 {"origin", to_string(trace.pseudo_passage->origin)}};
    } else {
        obj["pseudo_passage"] = nullptr;
    }
    obj["candidates"] = nlohmann::json::array();
    for (const auto& entry : trace.candidates) {
        obj["candidates"].push_back(
            {{"passage_id", entry.passage_id}, {"retrieval_score", entry.score}});
    }
    obj["selector_scores"] = trace.selector_scores;
    obj["chosen_id"] = trace.chosen_id ? nlohmann::json(*trace.chosen_id) : nlohmann::json(nullptr);
    obj["chosen_origin"] =
        trace.chosen_origin ? nlohmann::json(*trace.chosen_origin) : nlohmann::json(nullptr);
    obj["answer"] = trace.answer;
    if (include_timings) {
        obj["timings_ms"] = timings_to_json(trace)["timings_ms"];
    }
    return obj;
}

nlohmann::json timings_to_json(const InferenceTrace& trace) {
    return {{"query_id", trace.query_id},
            {"timings_ms",
             {{"pseudo", trace.timings.pseudo_ms},
              {"retrieve", trace.timings.retrieve_ms},
              {"score", trace.timings.score_ms},
              {"generate", trace.timings.generate_ms}}}};
}

InferenceTrace trace_from_json(const nlohmann::json& obj) {
    InferenceTrace trace;
    trace.query_id = obj.at("query_id").get<std::string>();
    trace.query_text = obj.at("query_text").get<std::string>();
    if (obj.contains("pseudo_passage") && !obj.at("pseudo_passage").is_null()) {
        const auto& p = obj.at("pseudo_passage");
        Passage passage;
        passage.id = p.at("id").get<std::string>();
        passage.text = p.at("text").get<std::string>();
        passage.origin = passage_origin_from_string(p.at("origin").get<std::string>());
        trace.pseudo_passage = std::move(passage);
    }
    for (const auto& entry : obj.at("candidates")) {
        trace.candidates.push_back({entry.at("passage_id").get<std::string>(),
                                    entry.at("retrieval_score").get<double>()});
    }
    trace.selector_scores = obj.at("selector_scores").get<std::vector<double>>();
    if (!obj.at("chosen_id").is_null()) {
        trace.chosen_id = obj.at("chosen_id").get<std::string>();
    }
    if (!obj.at("chosen_origin").is_null()) {
        trace.chosen_origin = obj.at("chosen_origin").get<std::string>();
    }
    trace.answer = obj.at("answer").get<std::string>();
    if (obj.contains("timings_ms")) {
        const auto& t = obj.at("timings_ms");
        trace.timings.pseudo_ms = t.at("pseudo").get<double>();
        trace.timings.retrieve_ms = t.at("retrieve").get<double>();
        trace.timings.score_ms = t.at("score").get<double>();
        trace.timings.generate_ms = t.at("generate").get<double>();
    }
    return trace;
}

} // namespace gainrag::inference
