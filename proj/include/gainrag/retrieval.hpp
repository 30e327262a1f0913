#pragma once

#include "gainrag/types.hpp"

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gainrag::retrieval {

struct Corpus {
    std::vector<Passage> passages;
    std::map<std::string, std::size_t> by_id;

    bool contains(const std::string& id) const { return by_id.count(id) > 0; }
    const Passage& at(const std::string& id) const;
    std::size_t size() const { return passages.size(); }
};

using CorpusPtr = std::shared_ptr<const Corpus>;

struct ScoredEntry {
    std::string passage_id;
    double score = 0.0;
};

/// Ranked result for one query: scores non-increasing, at most k entries, no
/// duplicate passage ids.
struct RetrievalResult {
    std::string query;
    std::vector<ScoredEntry> entries;
};

/// Immutable inverted index with Okapi-style scoring. Tokenization is
/// lowercase + split on non-alphanumeric. The IDF uses the non-negative
/// log(1 + (N - df + 0.5) / (df + 0.5)) form, so every matching term
/// contributes a positive score.
class Index {
public:
    static constexpr double kDefaultK1 = 1.2;
    static constexpr double kDefaultB = 0.75;

    std::size_t document_count() const { return doc_lengths_.size(); }
    std::size_t doc_length(std::size_t pos) const { return doc_lengths_.at(pos); }
    double average_length() const { return average_length_; }
    double k1() const { return k1_; }
    double b() const { return b_; }
    const CorpusPtr& corpus() const { return corpus_; }

    /// Posting list for a term: (corpus position, term frequency) pairs.
    const std::vector<std::pair<std::size_t, std::size_t>>* postings(const std::string& term) const;

    /// IDF of a term; terms absent from the corpus get the df = 0 value.
    double idf(const std::string& term) const;

    /// Okapi score of one passage for a query, by direct lookup. Pseudo or
    /// otherwise unknown ids score 0.
    double score_passage(const std::string& query, const std::string& passage_id) const;

    friend Index build_index(CorpusPtr corpus, double k1, double b);

private:
    CorpusPtr corpus_;
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> postings_;
    std::vector<std::size_t> doc_lengths_;
    double average_length_ = 0.0;
    double k1_ = kDefaultK1;
    double b_ = kDefaultB;
};

/// Parses a JSON Lines corpus file: {"id": string, "title": string?,
/// "text": string} per line. Rejects duplicate ids (reporting the id and
/// line number) and malformed lines. An empty file is a valid empty corpus.
Corpus ingest_corpus(const std::string& path);

/// Builds the inverted index. Throws on an empty corpus.
Index build_index(CorpusPtr corpus, double k1 = Index::kDefaultK1, double b = Index::kDefaultB);

/// Top-k by Okapi score, ties broken by ascending passage id. Returns fewer
/// than k entries only when fewer passages score nonzero.
RetrievalResult retrieve(const Index& index, const std::string& query, int k);

/// Externally supplied scores keyed by (query id, passage id).
struct ExternalScores {
    std::map<std::pair<std::string, std::string>, double> scores;
};

/// Parses a JSON Lines scores file: {"query_id", "passage_id", "score"}.
ExternalScores import_external_scores(const std::string& path);

/// External-mode retrieval: every corpus passage is a candidate and must
/// have a score for the query, otherwise an error names the missing pair.
/// Same ordering rule as lexical retrieval.
RetrievalResult retrieve_external(const ExternalScores& scores, const Corpus& corpus,
                                  const std::string& query_id, const std::string& query_text,
                                  int k);

enum class RetrievalMode { Lexical, External };

/// Dispatch facade over the two retrieval modes, so pipeline stages do not
/// care where candidate rankings come from.
class Retriever {
public:
    Retriever(const Index& index, RetrievalMode mode, const ExternalScores* external = nullptr);

    RetrievalResult retrieve(const std::string& query_id, const std::string& query_text,
                             int k) const;

    /// Retrieval score of an arbitrary (query, passage) pair, used when
    /// featurizing training groups. Pseudo passages score 0 in both modes.
    double score_passage(const std::string& query_id, const std::string& query_text,
                         const Passage& passage) const;

    const Corpus& corpus() const { return *index_->corpus(); }
    const Index& index() const { return *index_; }
    RetrievalMode mode() const { return mode_; }

private:
    const Index* index_;
    RetrievalMode mode_;
    const ExternalScores* external_;
};

} // namespace gainrag::retrieval
