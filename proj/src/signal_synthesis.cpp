#include "gainrag/signal_synthesis.hpp"

#include "gainrag/jsonl.hpp"
#include "gainrag/eval.hpp"
#include "gainrag/pseudo_passage.hpp"
#include "gainrag/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gainrag::synthesis {

std::vector<QASample> load_dataset(const std::string& path) {
    std::vector<QASample> samples;
    std::set<std::string> ids;
    jsonl::for_each(path, [&](std::size_t line_no, const jsonl::json& obj) {
        QASample sample;
        try {
            sample.id = obj.at("id").get<std::string>();
            sample.question = obj.at("question").get<std::string>();
            sample.gold_answers = obj.at("answers").get<std::vector<std::string>>();
        } catch (const jsonl::json::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": malformed sample: " + e.what());
        }
        if (sample.gold_answers.empty()) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": sample needs at least one gold answer");
        }
        if (!ids.insert(sample.id).second) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": duplicate sample id \"" + sample.id + "\"");
        }
        samples.push_back(std::move(sample));
    });
    return samples;
}

SynthesisResult synthesize(const std::vector<QASample>& dataset,
                           const retrieval::Retriever& retriever, lm::LMBackend& backend,
                           const gain::GainConfig& gain_config, const SynthesisOptions& options,
                           const std::set<RecordKey>& existing) {
    if (dataset.empty()) {
        throw std::invalid_argument("synthesize: empty dataset");
    }
    if (options.retrieval_k < 1) {
        throw std::invalid_argument("synthesize: retrieval_k must be >= 1");
    }
    gain_config.validate();

    std::vector<const QASample*> ordered;
    ordered.reserve(dataset.size());
    for (const auto& sample : dataset) ordered.push_back(&sample);
    std::sort(ordered.begin(), ordered.end(),
              [](const QASample* a, const QASample* b) { return a->id < b->id; });

    SynthesisResult result;
    for (const QASample* sample : ordered) {
        try {
            std::vector<Passage> candidates;

            auto pseudo_passage =
                pseudo::generate_pseudo(backend, sample->question, options.pseudo_max_tokens,
                                        options.pseudo_template);
            if (!pseudo_passage && options.include_na_pseudo) {
                Passage na;
                na.id = pseudo::pseudo_id(sample->question);
                na.text = "N/A";
                na.origin = PassageOrigin::Pseudo;
                pseudo_passage = std::move(na);
            }
            if (pseudo_passage) {
                candidates.push_back(*pseudo_passage);
            }

            const auto ranked =
                retriever.retrieve(sample->id, sample->question, options.retrieval_k);
            for (const auto& entry : ranked.entries) {
                candidates.push_back(retriever.corpus().at(entry.passage_id));
            }

            const std::string& answer = sample->gold_answers.front();
            bool emitted_pseudo = false;
            for (const auto& candidate : candidates) {
                if (existing.count({sample->id, candidate.id})) {
                    ++result.skipped_existing;
                    continue;
                }
                GainRecord record;
                record.query_id = sample->id;
                record.passage_id = candidate.id;
                record.origin = candidate.origin;
                record.gain =
                    gain::gain_signal(backend, sample->question, candidate.text, answer,
                                      gain_config);
                record.label = label_from_gain(record.gain);
                result.records.push_back(std::move(record));
                if (candidate.origin == PassageOrigin::Pseudo) emitted_pseudo = true;
            }
            if (pseudo_passage && emitted_pseudo) {
                result.pseudo_passages.push_back(std::move(*pseudo_passage));
            }
        } catch (const std::exception& e) {
            result.failures.push_back({sample->id, e.what()});
        }
    }
    return result;
}

void TrainingGroup::validate() const {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (!ids.insert(members[i].record.passage_id).second) {
            throw std::invalid_argument("training group " + query_id +
                                        ": duplicate member passage id");
        }
        if (members[i].record.origin == PassageOrigin::Pseudo && i != 0) {
            throw std::invalid_argument("training group " + query_id +
                                        ": pseudo member must sit at index 0");
        }
    }
}

std::vector<TrainingGroup> assemble_groups(const std::vector<GainRecord>& records,
                                           const std::map<std::string, QASample>& samples_by_id,
                                           const PassageResolver& resolve_passage,
                                           std::size_t group_size, std::uint64_t seed,
                                           const RetrievalScoreFn& retrieval_score) {
    if (group_size < 1) {
        throw std::invalid_argument("assemble_groups: group_size must be >= 1");
    }

    // Bucket records per query, pseudo separated from the rest.
    std::map<std::string, std::vector<const GainRecord*>> real_by_query;
    std::map<std::string, const GainRecord*> pseudo_by_query;
    for (const auto& record : records) {
        if (record.origin == PassageOrigin::Pseudo) {
            if (pseudo_by_query.count(record.query_id)) {
                throw std::invalid_argument("assemble_groups: query \"" + record.query_id +
                                            "\" has more than one pseudo record");
            }
            pseudo_by_query[record.query_id] = &record;
        } else {
            real_by_query[record.query_id].push_back(&record);
        }
    }

    std::set<std::string> query_ids;
    for (const auto& [qid, _] : real_by_query) query_ids.insert(qid);
    for (const auto& [qid, _] : pseudo_by_query) query_ids.insert(qid);

    std::vector<TrainingGroup> groups;
    for (const auto& qid : query_ids) {
        auto sample_it = samples_by_id.find(qid);
        if (sample_it == samples_by_id.end()) {
            throw std::runtime_error("assemble_groups: no dataset sample for query \"" + qid +
                                     "\"");
        }

        TrainingGroup group;
        group.query_id = qid;
        group.question = sample_it->second.question;

        std::vector<const GainRecord*> chosen;
        const GainRecord* pseudo_record = nullptr;
        if (auto it = pseudo_by_query.find(qid); it != pseudo_by_query.end()) {
            pseudo_record = it->second;
        }

        std::size_t real_budget = group_size - (pseudo_record ? 1 : 0);
        const auto& pool = real_by_query[qid];
        if (pool.size() <= real_budget) {
            chosen.assign(pool.begin(), pool.end());
        } else {
            std::mt19937_64 gen(rng::derive_seed(seed, qid));
            for (std::size_t idx : rng::sample_without_replacement(gen, pool.size(), real_budget)) {
                chosen.push_back(pool[idx]);
            }
        }
        if (pseudo_record) {
            chosen.insert(chosen.begin(), pseudo_record);
        }

        for (const GainRecord* record : chosen) {
            GroupMember member;
            member.record = *record;
            const Passage& passage = resolve_passage(record->passage_id);
            member.passage_text = passage.text;
            member.retrieval_score =
                retrieval_score ? retrieval_score(qid, group.question, passage) : 0.0;
            group.members.push_back(std::move(member));
        }
        group.group_size_used = group.members.size(); // actual softmax width
        group.validate();
        groups.push_back(std::move(group));
    }
    return groups;
}

FilterResult filter_groups(const std::vector<TrainingGroup>& groups,
                           const std::map<std::string, QASample>& samples_by_id,
                           lm::LMBackend& backend,
                           const prompts::PromptTemplate& generation_template,
                           int max_answer_tokens) {
    FilterResult result;
    for (const auto& group : groups) {
        if (group.members.empty()) {
            ++result.dropped_count;
            result.drop_log.push_back(group.query_id + ": empty group");
            continue;
        }
        auto sample_it = samples_by_id.find(group.query_id);
        if (sample_it == samples_by_id.end()) {
            ++result.dropped_count;
            result.drop_log.push_back(group.query_id + ": no dataset sample");
            continue;
        }
        // Highest transformed label = lowest contrastive perplexity. Ties
        // resolve to the earliest member, which favors the pseudo passage.
        std::size_t best = 0;
        for (std::size_t i = 1; i < group.members.size(); ++i) {
            if (group.members[i].record.label > group.members[best].record.label) {
                best = i;
            }
        }
        try {
            const std::string prompt = generation_template.render(
                group.members[best].passage_text, group.question);
            const std::string answer = backend.complete(prompt, max_answer_tokens);
            if (eval::em_nonstrict(answer, sample_it->second.gold_answers) == 1) {
                result.kept.push_back(group);
                ++result.kept_count;
            } else {
                ++result.dropped_count;
                result.drop_log.push_back(group.query_id + ": best passage generated \"" + answer +
                                          "\", not EM-correct");
            }
        } catch (const std::exception& e) {
            ++result.dropped_count;
            result.drop_log.push_back(group.query_id + ": backend failure: " + e.what());
        }
    }
    return result;
}

GainRecord gain_record_from_json(const nlohmann::json& obj) {
    GainRecord record;
    record.query_id = obj.at("query_id").get<std::string>();
    record.passage_id = obj.at("passage_id").get<std::string>();
    record.origin = passage_origin_from_string(obj.at("origin").get<std::string>());
    record.gain = obj.at("gain").get<double>();
    record.label = obj.at("label").get<double>();
    if (std::abs(record.label - label_from_gain(record.gain)) > 1e-12) {
        throw std::runtime_error("gain record (" + record.query_id + ", " + record.passage_id +
                                 "): label does not match -log(gain + 1)");
    }
    return record;
}

nlohmann::json gain_record_to_json(const GainRecord& record) {
    return {{"query_id", record.query_id},
            {"passage_id", record.passage_id},
            {"origin", to_string(record.origin)},
            {"gain", record.gain},
            {"label", record.label}};
}

std::vector<GainRecord> load_gain_records(const std::string& path) {
    std::vector<GainRecord> records;
    jsonl::for_each(path, [&](std::size_t line_no, const jsonl::json& obj) {
        try {
            records.push_back(gain_record_from_json(obj));
        } catch (const jsonl::json::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": malformed gain record: " + e.what());
        }
    });
    return records;
}

} // namespace gainrag::synthesis
