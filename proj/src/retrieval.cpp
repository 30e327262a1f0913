#include "gainrag/retrieval.hpp"

#include "gainrag/jsonl.hpp"
#include "gainrag/text.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gainrag::retrieval {

const Passage& Corpus::at(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
        throw std::out_of_range("unknown passage id: \"" + id + "\"");
    }
    return passages[it->second];
}

Corpus ingest_corpus(const std::string& path) {
    Corpus corpus;
    jsonl::for_each(path, [&](std::size_t line_no, const jsonl::json& obj) {
        Passage p;
        try {
            p.id = obj.at("id").get<std::string>();
            if (obj.contains("title") && !obj.at("title").is_null()) {
                p.title = obj.at("title").get<std::string>();
            }
            p.text = obj.at("text").get<std::string>();
        } catch (const jsonl::json::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": malformed passage: " + e.what());
        }
        if (p.text.empty()) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": passage text must be nonempty");
        }
        p.origin = PassageOrigin::Retrieved;
        if (corpus.by_id.count(p.id)) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": duplicate passage id \"" + p.id + "\"");
        }
        corpus.by_id[p.id] = corpus.passages.size();
        corpus.passages.push_back(std::move(p));
    });
    return corpus;
}

Index build_index(CorpusPtr corpus, double k1, double b) {
    if (!corpus || corpus->passages.empty()) {
        throw std::invalid_argument("build_index: empty corpus");
    }
    Index index;
    index.corpus_ = std::move(corpus);
    index.k1_ = k1;
    index.b_ = b;

    std::size_t total_length = 0;
    for (std::size_t pos = 0; pos < index.corpus_->passages.size(); ++pos) {
        const auto tokens = text::index_tokens(index.corpus_->passages[pos].text);
        index.doc_lengths_.push_back(tokens.size());
        total_length += tokens.size();

        std::map<std::string, std::size_t> tf;
        for (const auto& tok : tokens) ++tf[tok];
        for (const auto& [term, count] : tf) {
            index.postings_[term].emplace_back(pos, count);
        }
    }
    index.average_length_ =
        static_cast<double>(total_length) / static_cast<double>(index.doc_lengths_.size());
    return index;
}

const std::vector<std::pair<std::size_t, std::size_t>>* Index::postings(
    const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

double Index::idf(const std::string& term) const {
    const auto* plist = postings(term);
    const double df = plist ? static_cast<double>(plist->size()) : 0.0;
    const double n = static_cast<double>(document_count());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

namespace {

/// Query terms deduplicated in first-occurrence order. Ordering matters for
/// exact score reproducibility: per-passage contributions are accumulated in
/// this term order by both the index path and the brute-force oracle.
std::vector<std::string> unique_query_terms(const std::string& query) {
    std::vector<std::string> out;
    for (const auto& tok : text::index_tokens(query)) {
        if (std::find(out.begin(), out.end(), tok) == out.end()) {
            out.push_back(tok);
        }
    }
    return out;
}

void sort_and_truncate(std::vector<ScoredEntry>& entries, int k) {
    std::sort(entries.begin(), entries.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.passage_id < b.passage_id;
    });
    if (entries.size() > static_cast<std::size_t>(k)) {
        entries.resize(static_cast<std::size_t>(k));
    }
}

} // namespace

double Index::score_passage(const std::string& query, const std::string& passage_id) const {
    auto it = corpus_->by_id.find(passage_id);
    if (it == corpus_->by_id.end()) return 0.0;
    const std::size_t pos = it->second;

    std::map<std::string, std::size_t> tf;
    for (const auto& tok : text::index_tokens(corpus_->passages[pos].text)) ++tf[tok];

    const double len_norm = 1.0 - b_ + b_ * static_cast<double>(doc_lengths_[pos]) / average_length_;
    double score = 0.0;
    for (const auto& term : unique_query_terms(query)) {
        auto tf_it = tf.find(term);
        if (tf_it == tf.end()) continue;
        const double f = static_cast<double>(tf_it->second);
        score += idf(term) * (f * (k1_ + 1.0)) / (f + k1_ * len_norm);
    }
    return score;
}

RetrievalResult retrieve(const Index& index, const std::string& query, int k) {
    if (k < 1) {
        throw std::invalid_argument("retrieve: k must be >= 1");
    }
    const auto& corpus = *index.corpus();
    std::vector<double> scores(corpus.size(), 0.0);

    for (const auto& term : unique_query_terms(query)) {
        const auto* plist = index.postings(term);
        if (!plist) continue;
        const double idf = index.idf(term);
        for (const auto& [pos, tf] : *plist) {
            const double f = static_cast<double>(tf);
            const double len_norm =
                1.0 - index.b() +
                index.b() * static_cast<double>(index.doc_length(pos)) / index.average_length();
            scores[pos] += idf * (f * (index.k1() + 1.0)) / (f + index.k1() * len_norm);
        }
    }

    RetrievalResult result;
    result.query = query;
    for (std::size_t pos = 0; pos < scores.size(); ++pos) {
        if (scores[pos] > 0.0) {
            result.entries.push_back({corpus.passages[pos].id, scores[pos]});
        }
    }
    sort_and_truncate(result.entries, k);
    return result;
}

ExternalScores import_external_scores(const std::string& path) {
    ExternalScores out;
    jsonl::for_each(path, [&](std::size_t line_no, const jsonl::json& obj) {
        try {
            auto key = std::make_pair(obj.at("query_id").get<std::string>(),
                                      obj.at("passage_id").get<std::string>());
            out.scores[std::move(key)] = obj.at("score").get<double>();
        } catch (const jsonl::json::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": malformed score entry: " + e.what());
        }
    });
    return out;
}

RetrievalResult retrieve_external(const ExternalScores& scores, const Corpus& corpus,
                                  const std::string& query_id, const std::string& query_text,
                                  int k) {
    if (k < 1) {
        throw std::invalid_argument("retrieve: k must be >= 1");
    }
    RetrievalResult result;
    result.query = query_text;
    for (const auto& passage : corpus.passages) {
        auto it = scores.scores.find({query_id, passage.id});
        if (it == scores.scores.end()) {
            throw std::runtime_error("external scores: missing entry for (\"" + query_id +
                                     "\", \"" + passage.id + "\")");
        }
        result.entries.push_back({passage.id, it->second});
    }
    sort_and_truncate(result.entries, k);
    return result;
}

Retriever::Retriever(const Index& index, RetrievalMode mode, const ExternalScores* external)
    : index_(&index), mode_(mode), external_(external) {
    if (mode_ == RetrievalMode::External && external_ == nullptr) {
        throw std::invalid_argument("Retriever: external mode requires imported scores");
    }
}

RetrievalResult Retriever::retrieve(const std::string& query_id, const std::string& query_text,
                                    int k) const {
    if (mode_ == RetrievalMode::Lexical) {
        return retrieval::retrieve(*index_, query_text, k);
    }
    return retrieve_external(*external_, *index_->corpus(), query_id, query_text, k);
}

double Retriever::score_passage(const std::string& query_id, const std::string& query_text,
                                const Passage& passage) const {
    if (passage.origin == PassageOrigin::Pseudo) return 0.0;
    if (mode_ == RetrievalMode::Lexical) {
        return index_->score_passage(query_text, passage.id);
    }
    auto it = external_->scores.find({query_id, passage.id});
    if (it == external_->scores.end()) {
        throw std::runtime_error("external scores: missing entry for (\"" + query_id + "\", \"" +
                                 passage.id + "\")");
    }
    return it->second;
}

} // namespace gainrag::retrieval
