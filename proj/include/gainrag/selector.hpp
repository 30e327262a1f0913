#pragma once

#include "gainrag/retrieval.hpp"
#include "gainrag/signal_synthesis.hpp"
#include "gainrag/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gainrag::selector {

/// Feature identifiers, in the order they may appear in a FeatureConfig.
enum class Feature {
    LexicalOverlap,   // fraction of unique query tokens present in the passage
    IdfOverlap,       // idf-weighted version of the same fraction
    RetrievalScore,   // raw retrieval score; 0 for pseudo passages
    PassageLengthLog, // log(1 + token count)
    QueryLengthLog,   // log(1 + token count)
    IsPseudo,         // 1 for pseudo passages
    BigramOverlap,    // fraction of query bigrams present in the passage
};

std::string to_string(Feature feature);
Feature feature_from_string(const std::string& s);
std::vector<Feature> default_features();

/// Per-feature affine normalization: z = (x - mean) / scale.
struct FeatureNorm {
    double mean = 0.0;
    double scale = 1.0;
};

/// Feature list, normalization constants, and the corpus statistics needed
/// by the idf-weighted overlap. Fixed at training time and serialized with
/// the model.
struct FeatureConfig {
    std::vector<Feature> features = default_features();
    std::vector<FeatureNorm> norms; // per feature; identity when empty
    std::size_t corpus_doc_count = 0;
    std::map<std::string, double> idf; // corpus terms only; misses use a default weight

    void validate() const;

    /// Captures idf statistics from a built index.
    static FeatureConfig from_index(const retrieval::Index& index,
                                    std::vector<Feature> features = default_features());
};

/// Deterministic feature vector for one (question, passage) pair. Pseudo
/// passages get is-pseudo = 1 and retrieval score 0 regardless of the given
/// score. Normalization constants are applied when present.
std::vector<double> featurize(const std::string& question, const Passage& passage,
                              double retrieval_score, const FeatureConfig& config);

/// One-hidden-layer scorer: output = w2 . tanh(W1 x + b1) + b2.
struct SelectorModel {
    FeatureConfig feature_config;
    std::size_t hidden_width = 0;
    std::vector<double> w1; // hidden_width x feature_count, row-major
    std::vector<double> b1; // hidden_width
    std::vector<double> w2; // hidden_width
    double b2 = 0.0;

    // Training metadata.
    int epochs_trained = 0;
    std::uint64_t seed = 0;
    std::vector<double> loss_curve;

    std::size_t feature_count() const { return feature_config.features.size(); }
    void validate() const;

    /// Raw scorer over a prepared feature vector.
    double score_features(const std::vector<double>& features) const;
};

/// Convenience: featurize then score.
double score(const SelectorModel& model, const std::string& question, const Passage& passage,
             double retrieval_score);

/// KL(P || Q) with P = softmax(V / tau) and Q = softmax(V_hat / tau).
double kl_loss(const std::vector<double>& labels, const std::vector<double>& scores,
               double temperature = 1.0);

/// Gradient of kl_loss with respect to the scores: (Q - P) / tau.
std::vector<double> kl_grad(const std::vector<double>& labels, const std::vector<double>& scores,
                            double temperature = 1.0);

struct TrainConfig {
    int epochs = 2;
    int batch_size = 8; // groups per step
    double learning_rate = 0.05;
    std::size_t hidden_width = 16;
    std::uint64_t seed = 17;
    double temperature = 1.0;

    void validate() const;
};

/// A featurized group ready for the distillation loss.
struct GroupFeatures {
    std::vector<std::vector<double>> member_features;
    std::vector<double> labels;
};

/// Flat parameter order: w1, b1, w2, b2.
std::vector<double> flatten_parameters(const SelectorModel& model);
void set_parameters(SelectorModel& model, const std::vector<double>& flat);

/// KL loss of one group under the current parameters.
double group_loss(const SelectorModel& model, const GroupFeatures& group, double temperature);

/// Loss plus its gradient with respect to every parameter (flat order),
/// chained through the hidden layer. This is the quantity gradient descent
/// steps on; tests check it against finite differences.
double group_loss_grad(const SelectorModel& model, const GroupFeatures& group, double temperature,
                       std::vector<double>& grad_flat);

/// Core trainer: mini-batch gradient descent on the mean per-group KL loss.
/// Normalization constants are fitted on the given features before descent
/// and stored in the returned model. Deterministic given the seed. Aborts
/// with the epoch number if the loss stops being finite.
SelectorModel train_on_features(const std::vector<GroupFeatures>& groups, FeatureConfig config,
                                const TrainConfig& train_config);

/// Featurizes training groups and runs the core trainer. Each group needs at
/// least two members.
SelectorModel train(const std::vector<synthesis::TrainingGroup>& groups, FeatureConfig config,
                    const TrainConfig& train_config);

/// Argmax of the selector score over candidates; ties resolve to the lowest
/// index, which favors the pseudo passage at index 0.
struct Candidate {
    Passage passage;
    double retrieval_score = 0.0;
};
const Candidate& select_best(const SelectorModel& model, const std::string& question,
                             const std::vector<Candidate>& candidates);

/// Versioned JSON container with a content checksum. Loading verifies both.
void save_model(const SelectorModel& model, const std::string& path);
SelectorModel load_model(const std::string& path);

} // namespace gainrag::selector
