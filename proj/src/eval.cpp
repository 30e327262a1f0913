#include "gainrag/eval.hpp"

#include "gainrag/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace gainrag::eval {

std::vector<std::string> normalize(const std::string& s) {
    std::string cleaned;
    cleaned.reserve(s.size());
    for (unsigned char c : s) {
        if (std::isalnum(c) || c >= 0x80) {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            cleaned.push_back(' ');
        }
        // other punctuation is deleted outright
    }
    std::vector<std::string> tokens;
    for (auto& tok : text::whitespace_tokens(cleaned)) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

int em_nonstrict(const std::string& prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) {
        throw std::invalid_argument("em_nonstrict: empty gold list");
    }
    const auto pred_tokens = normalize(prediction);
    for (const auto& gold : golds) {
        const auto gold_tokens = normalize(gold);
        if (gold_tokens.empty()) {
            if (pred_tokens.empty()) return 1;
            continue;
        }
        if (text::contains_subsequence(pred_tokens, gold_tokens)) return 1;
    }
    return 0;
}

namespace {

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() || gold.empty()) {
        return (pred.empty() && gold.empty()) ? 1.0 : 0.0;
    }
    std::map<std::string, std::size_t> gold_counts;
    for (const auto& tok : gold) ++gold_counts[tok];
    std::size_t common = 0;
    for (const auto& tok : pred) {
        auto it = gold_counts.find(tok);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

} // namespace

double f1(const std::string& prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) {
        throw std::invalid_argument("f1: empty gold list");
    }
    const auto pred_tokens = normalize(prediction);
    double best = 0.0;
    for (const auto& gold : golds) {
        best = std::max(best, f1_single(pred_tokens, normalize(gold)));
    }
    return best;
}

EvalResult evaluate(const std::vector<QASample>& dataset, const std::vector<AnswerRecord>& answers,
                    const std::string& dataset_id, const std::string& mode) {
    if (dataset.empty()) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    std::map<std::string, const AnswerRecord*> by_id;
    for (const auto& rec : answers) by_id[rec.query_id] = &rec;

    EvalResult result;
    result.dataset_id = dataset_id;
    result.mode = mode;
    result.sample_count = dataset.size();

    double em_sum = 0.0;
    double f1_sum = 0.0;
    for (const auto& sample : dataset) {
        auto it = by_id.find(sample.id);
        if (it == by_id.end()) {
            throw std::runtime_error("evaluate: missing answer record for sample \"" + sample.id +
                                     "\"");
        }
        SampleVerdict verdict;
        verdict.query_id = sample.id;
        verdict.prediction = it->second->answer;
        verdict.em = em_nonstrict(verdict.prediction, sample.gold_answers);
        verdict.f1 = f1(verdict.prediction, sample.gold_answers);
        em_sum += verdict.em;
        f1_sum += verdict.f1;
        result.per_sample.push_back(std::move(verdict));
    }
    const double n = static_cast<double>(dataset.size());
    result.em_percent = 100.0 * em_sum / n;
    result.f1_percent = 100.0 * f1_sum / n;
    result.avg_percent = (result.em_percent + result.f1_percent) / 2.0;
    return result;
}

std::vector<CoveragePoint> coverage_curves(const std::vector<QASample>& dataset,
                                           const retrieval::Retriever& retriever,
                                           lm::LMBackend& backend, const std::vector<int>& ks,
                                           const CoverageOptions& options,
                                           std::vector<std::string>* failure_log) {
    if (ks.empty() || !std::is_sorted(ks.begin(), ks.end()) || ks.front() < 1) {
        throw std::invalid_argument("coverage_curves: ks must be ascending positive integers");
    }
    if (dataset.empty()) {
        throw std::invalid_argument("coverage_curves: empty dataset");
    }
    const int max_k = ks.back();

    std::vector<CoveragePoint> points(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) points[i].k = ks[i];

    for (const auto& sample : dataset) {
        const auto ranked = retriever.retrieve(sample.id, sample.question, max_k);

        // Per-rank gold containment and single-passage generation quality.
        std::vector<int> contains_gold(ranked.entries.size(), 0);
        std::vector<int> gen_em(ranked.entries.size(), 0);
        std::vector<double> gen_f1(ranked.entries.size(), 0.0);
        for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
            const auto& passage = retriever.corpus().at(ranked.entries[r].passage_id);
            const auto passage_tokens = normalize(passage.text);
            for (const auto& gold : sample.gold_answers) {
                const auto gold_tokens = normalize(gold);
                if (!gold_tokens.empty() &&
                    text::contains_subsequence(passage_tokens, gold_tokens)) {
                    contains_gold[r] = 1;
                    break;
                }
            }
            try {
                const std::string prompt =
                    options.generation_template.render(passage.text, sample.question);
                const std::string answer =
                    backend.complete(prompt, options.max_answer_tokens);
                gen_em[r] = em_nonstrict(answer, sample.gold_answers);
                gen_f1[r] = f1(answer, sample.gold_answers);
            } catch (const std::exception& e) {
                if (failure_log) {
                    failure_log->push_back(sample.id + ": " + e.what());
                }
            }
        }

        for (std::size_t i = 0; i < ks.size(); ++i) {
            const std::size_t cutoff =
                std::min(ranked.entries.size(), static_cast<std::size_t>(ks[i]));
            bool recalled = false;
            bool em_covered = false;
            double best_f1 = 0.0;
            for (std::size_t r = 0; r < cutoff; ++r) {
                recalled = recalled || contains_gold[r] != 0;
                em_covered = em_covered || gen_em[r] != 0;
                best_f1 = std::max(best_f1, gen_f1[r]);
            }
            points[i].recall += recalled ? 1.0 : 0.0;
            points[i].em_coverage += em_covered ? 1.0 : 0.0;
            points[i].f1_coverage += best_f1;
        }
    }

    const double n = static_cast<double>(dataset.size());
    for (auto& point : points) {
        point.recall /= n;
        point.em_coverage /= n;
        point.f1_coverage /= n;
    }
    return points;
}

WinTieLose win_tie_lose(const std::vector<AnswerRecord>& answers_a,
                        const std::vector<AnswerRecord>& answers_b,
                        const std::vector<QASample>& dataset) {
    std::map<std::string, const AnswerRecord*> map_a;
    std::map<std::string, const AnswerRecord*> map_b;
    for (const auto& rec : answers_a) map_a[rec.query_id] = &rec;
    for (const auto& rec : answers_b) map_b[rec.query_id] = &rec;

    WinTieLose out;
    for (const auto& sample : dataset) {
        auto ita = map_a.find(sample.id);
        auto itb = map_b.find(sample.id);
        if (ita == map_a.end() || itb == map_b.end()) {
            throw std::runtime_error("win_tie_lose: misaligned trace sets, missing sample \"" +
                                     sample.id + "\"");
        }
        const double avg_a = (em_nonstrict(ita->second->answer, sample.gold_answers) +
                              f1(ita->second->answer, sample.gold_answers)) /
                             2.0;
        const double avg_b = (em_nonstrict(itb->second->answer, sample.gold_answers) +
                              f1(itb->second->answer, sample.gold_answers)) /
                             2.0;
        if (avg_a > avg_b) {
            ++out.win;
        } else if (avg_a < avg_b) {
            ++out.lose;
        } else {
            ++out.tie;
        }
    }
    return out;
}

} // namespace gainrag::eval
