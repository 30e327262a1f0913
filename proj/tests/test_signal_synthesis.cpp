#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gainrag/jsonl.hpp"
#include "gainrag/mock_lm.hpp"
#include "gainrag/pseudo_passage.hpp"
#include "gainrag/signal_synthesis.hpp"
#include "gainrag/rng.hpp"
#include "support/temp_dir.hpp"

#include <cmath>
#include <random>

using namespace gainrag;
using namespace gainrag::synthesis;

namespace {

struct SynthFixture {
    retrieval::CorpusPtr corpus;
    std::unique_ptr<retrieval::Index> index;
    std::unique_ptr<retrieval::Retriever> retriever;
    std::unique_ptr<lm::MockBackend> backend;
    std::vector<QASample> dataset;

    SynthFixture() {
        retrieval::Corpus c;
        auto add = [&](const std::string& id, const std::string& body) {
            Passage p;
            p.id = id;
            p.text = body;
            c.by_id[p.id] = c.passages.size();
            c.passages.push_back(std::move(p));
        };
        add("p1", "alpha topic one");
        add("p2", "alpha topic two");
        add("p3", "unrelated text");
        corpus = std::make_shared<const retrieval::Corpus>(std::move(c));
        index = std::make_unique<retrieval::Index>(retrieval::build_index(corpus));
        retriever =
            std::make_unique<retrieval::Retriever>(*index, retrieval::RetrievalMode::Lexical);

        lm::MockLMSpec spec;
        spec.vocabulary = {"alpha", "beta"};
        spec.default_distribution = {{"alpha", 0.5}, {"beta", 0.5}};
        spec.rules.push_back({"topic one", {{"alpha", 0.8}, {"beta", 0.2}}});
        spec.completions.push_back({"Question:", "pseudo background text"});
        backend = std::make_unique<lm::MockBackend>(spec);

        dataset = {{"s1", "alpha topic", {"alpha"}}};
    }
};

GainRecord record_of(const std::string& qid, const std::string& pid, double gain,
                     PassageOrigin origin = PassageOrigin::Retrieved) {
    GainRecord r;
    r.query_id = qid;
    r.passage_id = pid;
    r.origin = origin;
    r.gain = gain;
    r.label = label_from_gain(gain);
    return r;
}

} // namespace

TEST_CASE("the label transform matches -log(v + 1)") {
    CHECK(label_from_gain(4.0) == doctest::Approx(-std::log(5.0)).epsilon(1e-15));
    CHECK(label_from_gain(4.0) == doctest::Approx(-1.6094).epsilon(1e-4));
    CHECK(label_from_gain(0.0) == 0.0);
    CHECK_THROWS_AS(label_from_gain(-0.5), std::invalid_argument);
}

TEST_CASE("labels are strictly decreasing in the raw gain") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 200; ++i) {
        const double a = rng::uniform_range(gen, 0.0, 50.0);
        const double b = rng::uniform_range(gen, 0.0, 50.0);
        if (a == b) continue;
        const bool gain_less = a < b;
        const bool label_greater = label_from_gain(a) > label_from_gain(b);
        CHECK(gain_less == label_greater);
    }
}

TEST_CASE("softmax over labels peaks at the minimum raw gain") {
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng::uniform_below(gen, 15);
        std::vector<double> gains(n);
        for (auto& g : gains) g = rng::uniform_range(gen, 0.0, 30.0);

        std::size_t min_gain = 0;
        std::size_t max_label = 0;
        std::vector<double> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = label_from_gain(gains[i]);
            if (gains[i] < gains[min_gain]) min_gain = i;
            if (labels[i] > labels[max_label]) max_label = i;
        }
        // softmax is monotone, so the argmax label pins the argmax probability
        CHECK(min_gain == max_label);
    }
}

TEST_CASE("one sample with k = 2 and a pseudo passage emits 3 records") {
    SynthFixture fx;
    SynthesisOptions options;
    options.retrieval_k = 2;

    const auto result =
        synthesize(fx.dataset, *fx.retriever, *fx.backend, gain::GainConfig{}, options);
    CHECK(result.failures.empty());
    REQUIRE(result.records.size() == 3);
    CHECK(result.records[0].origin == PassageOrigin::Pseudo);
    REQUIRE(result.pseudo_passages.size() == 1);
    CHECK(result.pseudo_passages[0].text == "pseudo background text");

    for (const auto& record : result.records) {
        CHECK(record.gain > 0.0);
        CHECK(record.label == doctest::Approx(-std::log(record.gain + 1.0)).epsilon(1e-15));
    }
}

TEST_CASE("synthesis is resumable: skipping emitted pairs reproduces the full run") {
    SynthFixture fx;
    SynthesisOptions options;
    options.retrieval_k = 2;

    const auto full =
        synthesize(fx.dataset, *fx.retriever, *fx.backend, gain::GainConfig{}, options);
    REQUIRE(full.records.size() == 3);

    // Interrupt after two records, then rerun with those marked as done.
    std::set<RecordKey> existing;
    for (std::size_t i = 0; i < 2; ++i) {
        existing.insert({full.records[i].query_id, full.records[i].passage_id});
    }
    const auto resumed =
        synthesize(fx.dataset, *fx.retriever, *fx.backend, gain::GainConfig{}, options, existing);
    CHECK(resumed.skipped_existing == 2);
    REQUIRE(resumed.records.size() == 1);
    CHECK(resumed.records[0].passage_id == full.records[2].passage_id);
    CHECK(resumed.records[0].gain == full.records[2].gain);
}

TEST_CASE("the include_na knob keeps a declined pseudo as an N/A candidate") {
    SynthFixture fx;
    // Replace the pseudo completion with the decline sentinel.
    lm::MockLMSpec spec = fx.backend->spec();
    spec.completions = {{"Question:", "N/A"}};
    lm::MockBackend na_backend(spec);

    SynthesisOptions options;
    options.retrieval_k = 2;
    const auto dropped =
        synthesize(fx.dataset, *fx.retriever, na_backend, gain::GainConfig{}, options);
    CHECK(dropped.records.size() == 2); // pseudo dropped

    options.include_na_pseudo = true;
    const auto kept =
        synthesize(fx.dataset, *fx.retriever, na_backend, gain::GainConfig{}, options);
    REQUIRE(kept.records.size() == 3);
    CHECK(kept.records[0].origin == PassageOrigin::Pseudo);
    REQUIRE(kept.pseudo_passages.size() == 1);
    CHECK(kept.pseudo_passages[0].text == "N/A");
}

TEST_CASE("a failing sample is logged and does not abort the run") {
    SynthFixture fx;
    // Answer token outside the mock vocabulary forces a backend error.
    fx.dataset.push_back({"s0", "alpha topic", {"unknowable"}});
    SynthesisOptions options;
    options.retrieval_k = 2;

    const auto result =
        synthesize(fx.dataset, *fx.retriever, *fx.backend, gain::GainConfig{}, options);
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].sample_id == "s0");
    CHECK(result.records.size() == 3); // s1 still processed
}

TEST_CASE("dataset loading enforces unique ids and nonempty answers") {
    testsupport::TempDir dir;
    const auto dup = dir.write("dup.jsonl",
                               R"({"id": "s1", "question": "a", "answers": ["x"]})"
                               "\n"
                               R"({"id": "s1", "question": "b", "answers": ["y"]})"
                               "\n");
    CHECK_THROWS_WITH_AS(load_dataset(dup), doctest::Contains("s1"), std::runtime_error);

    const auto empty = dir.write("empty.jsonl",
                                 R"({"id": "s1", "question": "a", "answers": []})"
                                 "\n");
    CHECK_THROWS_AS(load_dataset(empty), std::runtime_error);
}

TEST_CASE("gain records round-trip through their file form") {
    testsupport::TempDir dir;
    const auto a = record_of("q1", "p1", 4.0);
    const auto b = record_of("q1", pseudo::pseudo_id("q"), 0.25, PassageOrigin::Pseudo);
    jsonl::write_all(dir.file("records.jsonl"),
                     {gain_record_to_json(a), gain_record_to_json(b)});
    const auto loaded = load_gain_records(dir.file("records.jsonl"));
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].gain == a.gain);
    CHECK(loaded[0].label == a.label);
    CHECK(loaded[1].origin == PassageOrigin::Pseudo);

    // A tampered label is rejected on load.
    auto bad = gain_record_to_json(a);
    bad["label"] = -0.1;
    jsonl::write_all(dir.file("bad.jsonl"), {bad});
    CHECK_THROWS_AS(load_gain_records(dir.file("bad.jsonl")), std::runtime_error);
}

namespace {

struct GroupFixture {
    std::vector<GainRecord> records;
    std::map<std::string, QASample> samples;
    std::map<std::string, Passage> passages;

    explicit GroupFixture(std::size_t real_count, bool with_pseudo) {
        samples["q1"] = {"q1", "the question", {"gold"}};
        std::mt19937_64 gen(9);
        if (with_pseudo) {
            const std::string pid = pseudo::pseudo_id("the question");
            records.push_back(record_of("q1", pid, rng::uniform_range(gen, 0.5, 8.0),
                                        PassageOrigin::Pseudo));
            Passage p;
            p.id = pid;
            p.text = "pseudo text";
            p.origin = PassageOrigin::Pseudo;
            passages[pid] = p;
        }
        for (std::size_t i = 0; i < real_count; ++i) {
            const std::string pid = "p" + std::to_string(i);
            records.push_back(record_of("q1", pid, rng::uniform_range(gen, 0.5, 8.0)));
            Passage p;
            p.id = pid;
            p.text = "passage " + std::to_string(i);
            passages[pid] = p;
        }
    }

    PassageResolver resolver() const {
        return [this](const std::string& id) -> const Passage& { return passages.at(id); };
    }
};

} // namespace

TEST_CASE("21 records subsample to a 16-member group with the pseudo kept first") {
    GroupFixture fx(20, true);
    const auto groups = assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 42);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].members.size() == 16);
    CHECK(groups[0].members[0].record.origin == PassageOrigin::Pseudo);
    CHECK(groups[0].group_size_used == 16);
    CHECK_NOTHROW(groups[0].validate());
}

TEST_CASE("groups smaller than the target take every record") {
    GroupFixture fx(5, false);
    const auto groups = assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 42);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].members.size() == 5);
    CHECK(groups[0].group_size_used == 5); // the softmax width actually used
}

TEST_CASE("group subsampling is deterministic in the seed") {
    GroupFixture fx(20, true);
    auto ids_of = [](const TrainingGroup& g) {
        std::vector<std::string> ids;
        for (const auto& m : g.members) ids.push_back(m.record.passage_id);
        return ids;
    };
    const auto a = assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 42);
    const auto b = assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 42);
    const auto c = assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 43);
    CHECK(ids_of(a[0]) == ids_of(b[0]));
    CHECK(ids_of(a[0]) != ids_of(c[0]));
}

TEST_CASE("the pseudo member survives every subsampling") {
    GroupFixture fx(20, true);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto groups = assemble_groups(fx.records, fx.samples, fx.resolver(), 4, seed);
        REQUIRE(groups[0].members.size() == 4);
        CHECK(groups[0].members[0].record.origin == PassageOrigin::Pseudo);
    }
}

TEST_CASE("retrieval scores flow into group members") {
    GroupFixture fx(3, true);
    auto score_fn = [](const std::string&, const std::string&, const Passage& passage) {
        return passage.origin == PassageOrigin::Pseudo ? 0.0 : 2.5;
    };
    const auto groups =
        assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 1, score_fn);
    CHECK(groups[0].members[0].retrieval_score == 0.0);
    CHECK(groups[0].members[1].retrieval_score == 2.5);
}

TEST_CASE("filter keeps groups whose best passage generates the gold answer") {
    // 10 groups; in 6 of them the highest-label member carries "good text",
    // which the mock completes into the gold answer.
    std::map<std::string, QASample> samples;
    std::vector<TrainingGroup> groups;
    for (int i = 0; i < 10; ++i) {
        const std::string qid = "q" + std::to_string(i);
        samples[qid] = {qid, "question " + std::to_string(i), {"gold"}};
        TrainingGroup group;
        group.query_id = qid;
        group.question = samples[qid].question;
        group.group_size_used = 2;
        const bool good = i < 6;
        GroupMember top;
        top.record = record_of(qid, "top", 0.5); // label ~ -0.405, the maximum
        top.passage_text = good ? "good text " + std::to_string(i)
                                : "bad text " + std::to_string(i);
        GroupMember rest;
        rest.record = record_of(qid, "rest", 5.0);
        rest.passage_text = "irrelevant";
        group.members = {top, rest};
        groups.push_back(std::move(group));
    }

    lm::MockLMSpec spec;
    spec.vocabulary = {"x"};
    spec.default_distribution = {{"x", 1.0}};
    spec.completions.push_back({"good text", "gold"});
    spec.completions.push_back({"### Instruction", "wrong"});
    lm::MockBackend backend(spec);

    const auto result = filter_groups(groups, samples, backend,
                                      prompts::default_generation_template());
    CHECK(result.kept_count == 6);
    CHECK(result.dropped_count == 4);
    CHECK(result.kept.size() == 6);
    CHECK(result.drop_log.size() == 4);
}

TEST_CASE("two pseudo records for one query are rejected") {
    GroupFixture fx(2, true);
    auto second = record_of("q1", "pseudo:other", 1.0, PassageOrigin::Pseudo);
    fx.records.push_back(second);
    Passage p;
    p.id = "pseudo:other";
    p.text = "another";
    p.origin = PassageOrigin::Pseudo;
    fx.passages[p.id] = p;
    CHECK_THROWS_AS(assemble_groups(fx.records, fx.samples, fx.resolver(), 16, 1),
                    std::invalid_argument);
}

TEST_CASE("group invariants reject duplicates and misplaced pseudo members") {
    TrainingGroup group;
    group.query_id = "q";
    GroupMember a;
    a.record = record_of("q", "p1", 1.0);
    GroupMember b;
    b.record = record_of("q", "p1", 2.0);
    group.members = {a, b};
    CHECK_THROWS_AS(group.validate(), std::invalid_argument);

    TrainingGroup misplaced;
    misplaced.query_id = "q";
    GroupMember real;
    real.record = record_of("q", "p1", 1.0);
    GroupMember pseudo_member;
    pseudo_member.record = record_of("q", "pseudo:x", 1.0, PassageOrigin::Pseudo);
    misplaced.members = {real, pseudo_member};
    CHECK_THROWS_AS(misplaced.validate(), std::invalid_argument);
}
