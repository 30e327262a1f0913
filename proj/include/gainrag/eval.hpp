#pragma once

#include "gainrag/lm_backend.hpp"
#include "gainrag/prompts.hpp"
#include "gainrag/retrieval.hpp"
#include "gainrag/types.hpp"

#include <string>
#include <vector>

namespace gainrag::eval {

/// QA answer normalization: lowercase, strip punctuation, drop the articles
/// {a, an, the}, split on whitespace.
std::vector<std::string> normalize(const std::string& s);

/// 1 iff some gold answer's normalized token sequence occurs contiguously in
/// the normalized prediction. Containment is token-level, so "art" does not
/// match inside "start". A gold that normalizes to empty matches only an
/// empty prediction.
int em_nonstrict(const std::string& prediction, const std::vector<std::string>& golds);

/// Max over golds of the token-multiset F1 between normalized prediction and
/// gold. If either side normalizes to empty the pair scores 0 unless both
/// are empty, which scores 1.
double f1(const std::string& prediction, const std::vector<std::string>& golds);

struct SampleVerdict {
    std::string query_id;
    std::string prediction;
    int em = 0;
    double f1 = 0.0;
};

struct EvalResult {
    std::string dataset_id;
    std::string mode;
    std::size_t sample_count = 0;
    double em_percent = 0.0;
    double f1_percent = 0.0;
    double avg_percent = 0.0; // arithmetic mean of the two
    std::vector<SampleVerdict> per_sample;
};

/// A minimal view of a completed inference run: the prediction for one query.
struct AnswerRecord {
    std::string query_id;
    std::string answer;
};

/// Scores predictions against the dataset. Every sample must have exactly
/// one answer record; a missing record is an error naming the sample id.
EvalResult evaluate(const std::vector<QASample>& dataset,
                    const std::vector<AnswerRecord>& answers, const std::string& dataset_id = "",
                    const std::string& mode = "");

struct CoveragePoint {
    int k = 0;
    double recall = 0.0;      // fraction of samples with a gold string in some top-k passage
    double em_coverage = 0.0; // fraction where some single-passage generation is EM-correct
    double f1_coverage = 0.0; // mean over samples of the best single-passage F1
};

struct CoverageOptions {
    prompts::PromptTemplate generation_template = prompts::default_generation_template();
    int max_answer_tokens = 64;
};

/// Retrieval-quality curves over a list of cutoffs (ascending). Each sample
/// is retrieved once at max(ks); per-passage generations are computed once
/// and shared across cutoffs. Backend failures are logged per sample and
/// count as not covered.
std::vector<CoveragePoint> coverage_curves(const std::vector<QASample>& dataset,
                                           const retrieval::Retriever& retriever,
                                           lm::LMBackend& backend, const std::vector<int>& ks,
                                           const CoverageOptions& options = {},
                                           std::vector<std::string>* failure_log = nullptr);

struct WinTieLose {
    std::size_t win = 0;
    std::size_t tie = 0;
    std::size_t lose = 0;
};

/// Per-sample comparison of two runs by Avg(EM, F1). Both answer sets must
/// cover exactly the dataset's samples.
WinTieLose win_tie_lose(const std::vector<AnswerRecord>& answers_a,
                        const std::vector<AnswerRecord>& answers_b,
                        const std::vector<QASample>& dataset);

} // namespace gainrag::eval
