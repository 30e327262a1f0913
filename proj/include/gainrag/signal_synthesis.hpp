#pragma once

#include "gainrag/gain.hpp"
#include "gainrag/lm_backend.hpp"
#include "gainrag/retrieval.hpp"
#include "gainrag/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace gainrag::synthesis {

/// JSON Lines dataset loader: {"id", "question", "answers": [string, ...]}
/// per line. Ids must be unique and every sample needs at least one gold
/// answer.
std::vector<QASample> load_dataset(const std::string& path);

struct SynthesisOptions {
    int retrieval_k = 20;        // candidates per question before the pseudo passage
    int pseudo_max_tokens = 160;
    bool include_na_pseudo = false; // keep an "N/A" response as an empty-ish candidate
    prompts::PromptTemplate pseudo_template = prompts::default_pseudo_template();
};

struct SynthesisFailure {
    std::string sample_id;
    std::string error;
};

struct SynthesisResult {
    std::vector<GainRecord> records;      // newly emitted, ordered by sample id
    std::vector<Passage> pseudo_passages; // generated this run, one per sample at most
    std::vector<SynthesisFailure> failures;
    std::size_t skipped_existing = 0;
};

using RecordKey = std::pair<std::string, std::string>; // (query id, passage id)

/// Builds the enriched gain dataset: per sample, generate the pseudo
/// passage, retrieve candidates, compute the contrastive-perplexity gain of
/// every candidate for the first gold answer, and emit records with
/// transformed labels. Samples are processed in ascending id order. Pairs in
/// `existing` are skipped, which makes interrupted runs resumable. A backend
/// failure aborts only the current sample and is recorded as a failure.
SynthesisResult synthesize(const std::vector<QASample>& dataset,
                           const retrieval::Retriever& retriever, lm::LMBackend& backend,
                           const gain::GainConfig& gain_config,
                           const SynthesisOptions& options = {},
                           const std::set<RecordKey>& existing = {});

/// One group member: the supervision record plus what the selector needs to
/// featurize it.
struct GroupMember {
    GainRecord record;
    std::string passage_text;
    double retrieval_score = 0.0;
};

/// All candidates of one query that enter a single distillation softmax.
struct TrainingGroup {
    std::string query_id;
    std::string question;
    std::vector<GroupMember> members; // pseudo first when present
    std::size_t group_size_used = 0;

    void validate() const;
};

using PassageResolver = std::function<const Passage&(const std::string& passage_id)>;
using RetrievalScoreFn =
    std::function<double(const std::string& query_id, const std::string& question,
                         const Passage& passage)>;

/// Subsamples each query's records into a training group: a seeded random
/// subset of `group_size` drawn without replacement, or all records when
/// fewer are available. The pseudo member always survives subsampling and
/// sits at index 0. Group composition depends only on (seed, query id), not
/// on processing order.
std::vector<TrainingGroup> assemble_groups(const std::vector<GainRecord>& records,
                                           const std::map<std::string, QASample>& samples_by_id,
                                           const PassageResolver& resolve_passage,
                                           std::size_t group_size, std::uint64_t seed,
                                           const RetrievalScoreFn& retrieval_score = nullptr);

struct FilterResult {
    std::vector<TrainingGroup> kept;
    std::size_t kept_count = 0;
    std::size_t dropped_count = 0;
    std::vector<std::string> drop_log; // query id + reason
};

/// Drops groups whose best candidate fails generation: augment the question
/// with the member of highest label, generate, and keep the group iff the
/// answer passes non-strict EM against the gold set. Backend failures drop
/// the group with a logged reason.
FilterResult filter_groups(const std::vector<TrainingGroup>& groups,
                           const std::map<std::string, QASample>& samples_by_id,
                           lm::LMBackend& backend,
                           const prompts::PromptTemplate& generation_template,
                           int max_answer_tokens = 64);

// GainRecord JSON Lines: {"query_id", "passage_id", "origin", "gain", "label"}.
GainRecord gain_record_from_json(const nlohmann::json& obj);
nlohmann::json gain_record_to_json(const GainRecord& record);
std::vector<GainRecord> load_gain_records(const std::string& path);

} // namespace gainrag::synthesis
