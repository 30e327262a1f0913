#include "gainrag/selector.hpp"

#include "gainrag/jsonl.hpp"
#include "gainrag/rng.hpp"
#include "gainrag/text.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace gainrag::selector {

std::string to_string(Feature feature) {
    switch (feature) {
        case Feature::LexicalOverlap: return "lexical_overlap";
        case Feature::IdfOverlap: return "idf_overlap";
        case Feature::RetrievalScore: return "retrieval_score";
        case Feature::PassageLengthLog: return "passage_length_log";
        case Feature::QueryLengthLog: return "query_length_log";
        case Feature::IsPseudo: return "is_pseudo";
        case Feature::BigramOverlap: return "bigram_overlap";
    }
    throw std::logic_error("unreachable feature");
}

Feature feature_from_string(const std::string& s) {
    for (Feature f : {Feature::LexicalOverlap, Feature::IdfOverlap, Feature::RetrievalScore,
                      Feature::PassageLengthLog, Feature::QueryLengthLog, Feature::IsPseudo,
                      Feature::BigramOverlap}) {
        if (to_string(f) == s) return f;
    }
    throw std::invalid_argument("unknown feature: \"" + s + "\"");
}

std::vector<Feature> default_features() {
    return {Feature::LexicalOverlap, Feature::IdfOverlap,     Feature::RetrievalScore,
            Feature::PassageLengthLog, Feature::QueryLengthLog, Feature::IsPseudo,
            Feature::BigramOverlap};
}

void FeatureConfig::validate() const {
    if (features.empty()) {
        throw std::invalid_argument("feature config: empty feature list");
    }
    std::set<Feature> seen(features.begin(), features.end());
    if (seen.size() != features.size()) {
        throw std::invalid_argument("feature config: duplicate features");
    }
    if (!norms.empty() && norms.size() != features.size()) {
        throw std::invalid_argument("feature config: norm count does not match feature count");
    }
    for (const auto& norm : norms) {
        if (!(norm.scale > 0.0)) {
            throw std::invalid_argument("feature config: norm scale must be > 0");
        }
    }
}

FeatureConfig FeatureConfig::from_index(const retrieval::Index& index,
                                        std::vector<Feature> features) {
    FeatureConfig config;
    config.features = std::move(features);
    config.corpus_doc_count = index.document_count();
    const auto& corpus = *index.corpus();
    std::set<std::string> terms;
    for (const auto& passage : corpus.passages) {
        for (const auto& tok : text::index_tokens(passage.text)) terms.insert(tok);
    }
    for (const auto& term : terms) {
        config.idf[term] = index.idf(term);
    }
    config.validate();
    return config;
}

namespace {

double default_idf(const FeatureConfig& config) {
    if (config.corpus_doc_count == 0) return 1.0;
    const double n = static_cast<double>(config.corpus_doc_count);
    return std::log(1.0 + (n + 0.5) / 0.5); // the df = 0 value
}

double idf_of(const FeatureConfig& config, const std::string& term) {
    auto it = config.idf.find(term);
    return it == config.idf.end() ? default_idf(config) : it->second;
}

std::vector<std::string> unique_tokens(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& tok : tokens) {
        if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
    }
    return out;
}

std::set<std::pair<std::string, std::string>> bigrams(const std::vector<std::string>& tokens) {
    std::set<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        out.insert({tokens[i], tokens[i + 1]});
    }
    return out;
}

} // namespace

std::vector<double> featurize(const std::string& question, const Passage& passage,
                              double retrieval_score, const FeatureConfig& config) {
    config.validate();
    const auto q_tokens = text::index_tokens(question);
    const auto p_tokens = text::index_tokens(passage.text);
    const auto q_unique = unique_tokens(q_tokens);
    const std::set<std::string> p_set(p_tokens.begin(), p_tokens.end());
    const bool is_pseudo = passage.origin == PassageOrigin::Pseudo;

    std::vector<double> out;
    out.reserve(config.features.size());
    for (std::size_t i = 0; i < config.features.size(); ++i) {
        double value = 0.0;
        switch (config.features[i]) {
            case Feature::LexicalOverlap: {
                if (!q_unique.empty()) {
                    std::size_t hits = 0;
                    for (const auto& tok : q_unique) hits += p_set.count(tok);
                    value = static_cast<double>(hits) / static_cast<double>(q_unique.size());
                }
                break;
            }
            case Feature::IdfOverlap: {
                double total = 0.0;
                double hit = 0.0;
                for (const auto& tok : q_unique) {
                    const double w = idf_of(config, tok);
                    total += w;
                    if (p_set.count(tok)) hit += w;
                }
                value = total > 0.0 ? hit / total : 0.0;
                break;
            }
            case Feature::RetrievalScore:
                value = is_pseudo ? 0.0 : retrieval_score;
                break;
            case Feature::PassageLengthLog:
                value = std::log(1.0 + static_cast<double>(p_tokens.size()));
                break;
            case Feature::QueryLengthLog:
                value = std::log(1.0 + static_cast<double>(q_tokens.size()));
                break;
            case Feature::IsPseudo:
                value = is_pseudo ? 1.0 : 0.0;
                break;
            case Feature::BigramOverlap: {
                const auto q_bi = bigrams(q_tokens);
                if (!q_bi.empty()) {
                    const auto p_bi = bigrams(p_tokens);
                    std::size_t hits = 0;
                    for (const auto& bg : q_bi) hits += p_bi.count(bg);
                    value = static_cast<double>(hits) / static_cast<double>(q_bi.size());
                }
                break;
            }
        }
        if (!config.norms.empty()) {
            value = (value - config.norms[i].mean) / config.norms[i].scale;
        }
        out.push_back(value);
    }
    return out;
}

void SelectorModel::validate() const {
    feature_config.validate();
    if (hidden_width < 1) {
        throw std::invalid_argument("selector model: hidden width must be >= 1");
    }
    const std::size_t f = feature_count();
    if (w1.size() != hidden_width * f || b1.size() != hidden_width || w2.size() != hidden_width) {
        throw std::invalid_argument("selector model: weight shapes inconsistent");
    }
    for (double v : w1) {
        if (!std::isfinite(v)) throw std::invalid_argument("selector model: non-finite weight");
    }
    for (double v : b1) {
        if (!std::isfinite(v)) throw std::invalid_argument("selector model: non-finite weight");
    }
    for (double v : w2) {
        if (!std::isfinite(v)) throw std::invalid_argument("selector model: non-finite weight");
    }
    if (!std::isfinite(b2)) throw std::invalid_argument("selector model: non-finite weight");
}

double SelectorModel::score_features(const std::vector<double>& features) const {
    const std::size_t f = feature_count();
    if (features.size() != f) {
        throw std::invalid_argument("selector model: feature count mismatch (model expects " +
                                    std::to_string(f) + ", got " +
                                    std::to_string(features.size()) + ")");
    }
    double out = b2;
    for (std::size_t h = 0; h < hidden_width; ++h) {
        double z = b1[h];
        for (std::size_t i = 0; i < f; ++i) {
            z += w1[h * f + i] * features[i];
        }
        out += w2[h] * std::tanh(z);
    }
    return out;
}

double score(const SelectorModel& model, const std::string& question, const Passage& passage,
             double retrieval_score) {
    return model.score_features(
        featurize(question, passage, retrieval_score, model.feature_config));
}

namespace {

/// Stable softmax.
std::vector<double> softmax(const std::vector<double>& values, double temperature) {
    double max_v = values.front() / temperature;
    for (double v : values) max_v = std::max(max_v, v / temperature);
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::exp(values[i] / temperature - max_v);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

} // namespace

double kl_loss(const std::vector<double>& labels, const std::vector<double>& scores,
               double temperature) {
    if (labels.size() != scores.size()) {
        throw std::invalid_argument("kl_loss: length mismatch");
    }
    if (labels.size() < 2) {
        throw std::invalid_argument("kl_loss: need at least two entries");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("kl_loss: temperature must be > 0");
    }
    const auto p = softmax(labels, temperature);
    const auto q = softmax(scores, temperature);
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            loss += p[i] * (std::log(p[i]) - std::log(q[i]));
        }
    }
    return std::max(loss, 0.0); // clamp away negative rounding residue
}

std::vector<double> kl_grad(const std::vector<double>& labels, const std::vector<double>& scores,
                            double temperature) {
    if (labels.size() != scores.size()) {
        throw std::invalid_argument("kl_grad: length mismatch");
    }
    if (labels.size() < 2) {
        throw std::invalid_argument("kl_grad: need at least two entries");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("kl_grad: temperature must be > 0");
    }
    const auto p = softmax(labels, temperature);
    const auto q = softmax(scores, temperature);
    std::vector<double> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        grad[i] = (q[i] - p[i]) / temperature;
    }
    return grad;
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || hidden_width < 1) {
        throw std::invalid_argument("train config: epochs, batch size, hidden width must be >= 1");
    }
    if (!(learning_rate > 0.0) || !(temperature > 0.0)) {
        throw std::invalid_argument("train config: learning rate and temperature must be > 0");
    }
}

namespace {

struct Gradients {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    explicit Gradients(const SelectorModel& model)
        : w1(model.w1.size(), 0.0), b1(model.b1.size(), 0.0), w2(model.w2.size(), 0.0) {}

    void scale(double s) {
        for (double& v : w1) v *= s;
        for (double& v : b1) v *= s;
        for (double& v : w2) v *= s;
        b2 *= s;
    }
};

/// Forward + backward through one group; accumulates parameter gradients of
/// the group's KL loss and returns the loss.
double group_backprop(const SelectorModel& model, const GroupFeatures& group, double temperature,
                      Gradients& grads) {
    const std::size_t n = group.member_features.size();
    const std::size_t f = model.feature_count();
    const std::size_t h_width = model.hidden_width;

    std::vector<double> scores(n);
    std::vector<std::vector<double>> hidden(n, std::vector<double>(h_width));
    for (std::size_t m = 0; m < n; ++m) {
        const auto& x = group.member_features[m];
        double out = model.b2;
        for (std::size_t h = 0; h < h_width; ++h) {
            double z = model.b1[h];
            for (std::size_t i = 0; i < f; ++i) z += model.w1[h * f + i] * x[i];
            hidden[m][h] = std::tanh(z);
            out += model.w2[h] * hidden[m][h];
        }
        scores[m] = out;
    }

    const double loss = kl_loss(group.labels, scores, temperature);
    const auto seed_grad = kl_grad(group.labels, scores, temperature);

    for (std::size_t m = 0; m < n; ++m) {
        const double g = seed_grad[m];
        const auto& x = group.member_features[m];
        grads.b2 += g;
        for (std::size_t h = 0; h < h_width; ++h) {
            const double t = hidden[m][h];
            grads.w2[h] += g * t;
            const double gz = g * model.w2[h] * (1.0 - t * t);
            grads.b1[h] += gz;
            for (std::size_t i = 0; i < f; ++i) {
                grads.w1[h * f + i] += gz * x[i];
            }
        }
    }
    return loss;
}

std::vector<FeatureNorm> fit_norms(const std::vector<GroupFeatures>& groups,
                                   std::size_t feature_count) {
    std::vector<double> sum(feature_count, 0.0);
    std::vector<double> sum_sq(feature_count, 0.0);
    std::size_t n = 0;
    for (const auto& group : groups) {
        for (const auto& x : group.member_features) {
            for (std::size_t i = 0; i < feature_count; ++i) {
                sum[i] += x[i];
                sum_sq[i] += x[i] * x[i];
            }
            ++n;
        }
    }
    std::vector<FeatureNorm> norms(feature_count);
    if (n == 0) return norms;
    for (std::size_t i = 0; i < feature_count; ++i) {
        const double mean = sum[i] / static_cast<double>(n);
        const double var = std::max(0.0, sum_sq[i] / static_cast<double>(n) - mean * mean);
        const double stddev = std::sqrt(var);
        norms[i].mean = mean;
        norms[i].scale = stddev > 1e-12 ? stddev : 1.0;
    }
    return norms;
}

} // namespace

std::vector<double> flatten_parameters(const SelectorModel& model) {
    std::vector<double> flat;
    flat.reserve(model.w1.size() + model.b1.size() + model.w2.size() + 1);
    flat.insert(flat.end(), model.w1.begin(), model.w1.end());
    flat.insert(flat.end(), model.b1.begin(), model.b1.end());
    flat.insert(flat.end(), model.w2.begin(), model.w2.end());
    flat.push_back(model.b2);
    return flat;
}

void set_parameters(SelectorModel& model, const std::vector<double>& flat) {
    const std::size_t expected = model.w1.size() + model.b1.size() + model.w2.size() + 1;
    if (flat.size() != expected) {
        throw std::invalid_argument("set_parameters: expected " + std::to_string(expected) +
                                    " values, got " + std::to_string(flat.size()));
    }
    std::size_t pos = 0;
    for (double& v : model.w1) v = flat[pos++];
    for (double& v : model.b1) v = flat[pos++];
    for (double& v : model.w2) v = flat[pos++];
    model.b2 = flat[pos];
}

double group_loss(const SelectorModel& model, const GroupFeatures& group, double temperature) {
    std::vector<double> scores;
    scores.reserve(group.member_features.size());
    for (const auto& x : group.member_features) {
        scores.push_back(model.score_features(x));
    }
    return kl_loss(group.labels, scores, temperature);
}

double group_loss_grad(const SelectorModel& model, const GroupFeatures& group, double temperature,
                       std::vector<double>& grad_flat) {
    Gradients grads(model);
    const double loss = group_backprop(model, group, temperature, grads);
    grad_flat.clear();
    grad_flat.reserve(grads.w1.size() + grads.b1.size() + grads.w2.size() + 1);
    grad_flat.insert(grad_flat.end(), grads.w1.begin(), grads.w1.end());
    grad_flat.insert(grad_flat.end(), grads.b1.begin(), grads.b1.end());
    grad_flat.insert(grad_flat.end(), grads.w2.begin(), grads.w2.end());
    grad_flat.push_back(grads.b2);
    return loss;
}

SelectorModel train_on_features(const std::vector<GroupFeatures>& groups, FeatureConfig config,
                                const TrainConfig& train_config) {
    train_config.validate();
    // Incoming features are raw; normalization constants are fitted here and
    // serialized with the model, so any pre-set constants are discarded.
    config.norms.clear();
    config.validate();
    if (groups.empty()) {
        throw std::invalid_argument("train: need at least one group");
    }
    const std::size_t f = config.features.size();
    for (const auto& group : groups) {
        if (group.member_features.size() < 2 ||
            group.member_features.size() != group.labels.size()) {
            throw std::invalid_argument("train: every group needs >= 2 members with labels");
        }
        for (const auto& x : group.member_features) {
            if (x.size() != f) {
                throw std::invalid_argument("train: member feature count mismatch");
            }
        }
    }

    // Fit normalization on raw features, then train in normalized space.
    const auto norms = fit_norms(groups, f);
    std::vector<GroupFeatures> normalized = groups;
    for (auto& group : normalized) {
        for (auto& x : group.member_features) {
            for (std::size_t i = 0; i < f; ++i) {
                x[i] = (x[i] - norms[i].mean) / norms[i].scale;
            }
        }
    }
    config.norms = norms;

    SelectorModel model;
    model.feature_config = std::move(config);
    model.hidden_width = train_config.hidden_width;
    model.seed = train_config.seed;
    model.w1.resize(model.hidden_width * f);
    model.b1.assign(model.hidden_width, 0.0);
    model.w2.resize(model.hidden_width);

    std::mt19937_64 gen(train_config.seed);
    const double a1 = std::sqrt(6.0 / static_cast<double>(f + model.hidden_width));
    for (double& w : model.w1) w = rng::uniform_range(gen, -a1, a1);
    const double a2 = std::sqrt(6.0 / static_cast<double>(model.hidden_width + 1));
    for (double& w : model.w2) w = rng::uniform_range(gen, -a2, a2);

    std::vector<std::size_t> order(normalized.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        rng::shuffle(order, gen);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(train_config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(train_config.batch_size));
            Gradients grads(model);
            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                batch_loss +=
                    group_backprop(model, normalized[order[b]], train_config.temperature, grads);
            }
            const double batch_n = static_cast<double>(end - start);
            batch_loss /= batch_n;
            grads.scale(1.0 / batch_n);
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: loss diverged at epoch " +
                                         std::to_string(epoch + 1));
            }
            epoch_loss += batch_loss * batch_n;
            seen += end - start;

            for (std::size_t i = 0; i < model.w1.size(); ++i) {
                model.w1[i] -= train_config.learning_rate * grads.w1[i];
            }
            for (std::size_t i = 0; i < model.b1.size(); ++i) {
                model.b1[i] -= train_config.learning_rate * grads.b1[i];
            }
            for (std::size_t i = 0; i < model.w2.size(); ++i) {
                model.w2[i] -= train_config.learning_rate * grads.w2[i];
            }
            model.b2 -= train_config.learning_rate * grads.b2;
        }
        model.loss_curve.push_back(epoch_loss / static_cast<double>(seen));
        ++model.epochs_trained;
    }
    model.validate();
    return model;
}

SelectorModel train(const std::vector<synthesis::TrainingGroup>& groups, FeatureConfig config,
                    const TrainConfig& train_config) {
    config.norms.clear(); // featurize raw; train_on_features fits the constants
    config.validate();
    std::vector<GroupFeatures> features;
    features.reserve(groups.size());
    for (const auto& group : groups) {
        GroupFeatures gf;
        for (const auto& member : group.members) {
            Passage passage;
            passage.id = member.record.passage_id;
            passage.text = member.passage_text;
            passage.origin = member.record.origin;
            gf.member_features.push_back(
                featurize(group.question, passage, member.retrieval_score, config));
            gf.labels.push_back(member.record.label);
        }
        features.push_back(std::move(gf));
    }
    return train_on_features(features, std::move(config), train_config);
}

const Candidate& select_best(const SelectorModel& model, const std::string& question,
                             const std::vector<Candidate>& candidates) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_best: empty candidate list");
    }
    std::size_t best = 0;
    double best_score = score(model, question, candidates[0].passage, candidates[0].retrieval_score);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double s = score(model, question, candidates[i].passage, candidates[i].retrieval_score);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return candidates[best];
}

namespace {

constexpr const char* kModelVersion = "gainrag-selector-v1";

nlohmann::json model_payload(const SelectorModel& model) {
    nlohmann::json fc;
    fc["features"] = nlohmann::json::array();
    for (Feature f : model.feature_config.features) fc["features"].push_back(to_string(f));
    fc["norms"] = nlohmann::json::array();
    for (const auto& norm : model.feature_config.norms) {
        fc["norms"].push_back({{"mean", norm.mean}, {"scale", norm.scale}});
    }
    fc["corpus_doc_count"] = model.feature_config.corpus_doc_count;
    fc["idf"] = model.feature_config.idf;

    nlohmann::json doc;
    doc["feature_config"] = std::move(fc);
    doc["hidden_width"] = model.hidden_width;
    doc["w1"] = model.w1;
    doc["b1"] = model.b1;
    doc["w2"] = model.w2;
    doc["b2"] = model.b2;
    doc["metadata"] = {{"epochs_trained", model.epochs_trained},
                       {"seed", model.seed},
                       {"loss_curve", model.loss_curve}};
    return doc;
}

} // namespace

void save_model(const SelectorModel& model, const std::string& path) {
    model.validate();
    const nlohmann::json payload = model_payload(model);
    const std::string payload_str = payload.dump();
    nlohmann::json doc;
    doc["version"] = kModelVersion;
    doc["checksum"] = rng::hex64(rng::fnv1a64(payload_str));
    doc["model"] = payload;
    jsonl::write_file(path, doc.dump(2) + "\n");
}

SelectorModel load_model(const std::string& path) {
    const std::string content = jsonl::read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("model file corrupt (checksum cannot be verified): " +
                                 std::string(e.what()));
    }
    const std::string version = doc.at("version").get<std::string>();
    if (version != kModelVersion) {
        throw std::runtime_error("model version mismatch: expected \"" +
                                 std::string(kModelVersion) + "\", found \"" + version + "\"");
    }
    const std::string payload_str = doc.at("model").dump();
    const std::string checksum = rng::hex64(rng::fnv1a64(payload_str));
    if (checksum != doc.at("checksum").get<std::string>()) {
        throw std::runtime_error("model file corrupt: checksum mismatch");
    }

    const auto& payload = doc.at("model");
    SelectorModel model;
    const auto& fc = payload.at("feature_config");
    model.feature_config.features.clear();
    for (const auto& name : fc.at("features")) {
        model.feature_config.features.push_back(feature_from_string(name.get<std::string>()));
    }
    for (const auto& norm : fc.at("norms")) {
        model.feature_config.norms.push_back(
            {norm.at("mean").get<double>(), norm.at("scale").get<double>()});
    }
    model.feature_config.corpus_doc_count = fc.at("corpus_doc_count").get<std::size_t>();
    model.feature_config.idf = fc.at("idf").get<std::map<std::string, double>>();
    model.hidden_width = payload.at("hidden_width").get<std::size_t>();
    model.w1 = payload.at("w1").get<std::vector<double>>();
    model.b1 = payload.at("b1").get<std::vector<double>>();
    model.w2 = payload.at("w2").get<std::vector<double>>();
    model.b2 = payload.at("b2").get<double>();
    model.epochs_trained = payload.at("metadata").at("epochs_trained").get<int>();
    model.seed = payload.at("metadata").at("seed").get<std::uint64_t>();
    model.loss_curve = payload.at("metadata").at("loss_curve").get<std::vector<double>>();
    model.validate();
    return model;
}

} // namespace gainrag::selector
