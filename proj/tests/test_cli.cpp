#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gainrag/cli.hpp"
#include "gainrag/jsonl.hpp"
#include "support/cli_fixture.hpp"
#include "support/temp_dir.hpp"

#include <sstream>

using namespace gainrag;
using namespace gainrag::testsupport;

namespace {

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr,
            std::string* err_text = nullptr) {
    std::ostringstream out;
    std::ostringstream err;
    const int status = cli::run(args, out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return status;
}

} // namespace

TEST_CASE("an unknown command exits nonzero with usage text") {
    std::string out;
    std::string err;
    CHECK(run_cli({"badcommand"}, &out, &err) != 0);
    CHECK(err.find("Usage") != std::string::npos);
}

TEST_CASE("running without a command prints usage and fails") {
    std::string err;
    CHECK(run_cli({}, nullptr, &err) != 0);
    CHECK(err.find("Usage") != std::string::npos);
}

TEST_CASE("--help succeeds") {
    std::string out;
    CHECK(run_cli({"--help"}, &out) == 0);
    CHECK(out.find("synthesize") != std::string::npos);
}

TEST_CASE("a config validation failure names the field path") {
    TempDir dir;
    const auto config = dir.write(
        "config.json",
        R"({"backend": {"kind": "mock", "mock_spec_path": "spec.json"}, "retrieval": {"k": 0}})");
    std::string err;
    CHECK(run_cli({"ingest", "--config", config}, nullptr, &err) != 0);
    CHECK(err.find("retrieval.k") != std::string::npos);

    const auto bad_backend = dir.write("bad_backend.json", R"({"backend": {"kind": "mock"}})");
    std::string err2;
    CHECK(run_cli({"ingest", "--config", bad_backend}, nullptr, &err2) != 0);
    CHECK(err2.find("backend.mock_spec_path") != std::string::npos);
}

TEST_CASE("a missing config file is an error") {
    std::string err;
    CHECK(run_cli({"ingest", "--config", "/nonexistent/config.json"}, nullptr, &err) != 0);
    CHECK(err.find("config") != std::string::npos);
}

TEST_CASE("config parsing reports dotted field paths for bad values") {
    TempDir dir;
    const std::string base =
        R"("backend": {"kind": "mock", "mock_spec_path": "spec.json"})";

    struct BadCase {
        const char* body;
        const char* expect;
    };
    const std::vector<BadCase> cases = {
        {R"({"backend": {"kind": "submarine"}})", "backend.kind"},
        {"{%BASE%, \"gain\": {\"mode\": \"fuzzy\"}}", "gain.mode"},
        {"{%BASE%, \"gain\": {\"alpha\": -1.0}}", "gain.alpha"},
        {"{%BASE%, \"inference\": {\"mode\": \"psychic\"}}", "inference.mode"},
        {"{%BASE%, \"coverage_ks\": [5, 1]}", "coverage_ks"},
        {"{%BASE%, \"train\": {\"epochs\": 0}}", "train"},
        {"{%BASE%, \"retrieval\": {\"mode\": \"astral\"}}", "retrieval.mode"},
    };
    int index = 0;
    for (const auto& c : cases) {
        std::string body = c.body;
        if (auto pos = body.find("%BASE%"); pos != std::string::npos) {
            body.replace(pos, 6, base);
        }
        const auto path = dir.write("bad" + std::to_string(index++) + ".json", body);
        std::string err;
        CHECK(run_cli({"ingest", "--config", path}, nullptr, &err) != 0);
        CHECK(err.find(c.expect) != std::string::npos);
    }
}

TEST_CASE("prompt templates can be overridden from the config") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 2;
    const auto fixture = make_pipeline_fixture(dir, spec);

    // A custom generation template that drops the instruction wrapper: the
    // mock's catch-all completion no longer matches, so answers are empty.
    auto config = nlohmann::json::parse(jsonl::read_file(fixture.config_path));
    config["prompts"] = {{"generation", "{passage} || {query}"}};
    jsonl::write_file(fixture.config_path, config.dump(2));

    std::string out;
    REQUIRE(run_cli({"infer", "--config", fixture.config_path, "--mode", "no-retrieval"},
                    &out) == 0);
    const auto traces = jsonl::read_all(dir.file("out/traces_no-retrieval.jsonl"));
    REQUIRE(traces.size() == 2);
    CHECK(traces[0].at("answer") == "");
}

TEST_CASE("ingest summarizes the corpus and echoes the config") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 3;
    spec.pseudo_backgrounds = true;
    const auto fixture = make_pipeline_fixture(dir, spec);

    std::string out;
    REQUIRE(run_cli({"ingest", "--config", fixture.config_path}, &out) == 0);
    CHECK(out.find("ingest ok passages=" + std::to_string(fixture.passage_count)) !=
          std::string::npos);
    CHECK(jsonl::file_exists(dir.file("out/resolved_config.json")));
    CHECK(jsonl::file_exists(dir.file("out/ingest.json")));
}

TEST_CASE("retrieve answers an ad-hoc query") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 3;
    const auto fixture = make_pipeline_fixture(dir, spec);

    std::string out;
    REQUIRE(run_cli({"retrieve", "--config", fixture.config_path, "--query",
                     fixture_question(0), "--k", "3"},
                    &out) == 0);
    CHECK(out.find("retrieve ok queries=1 k=3") != std::string::npos);
    const auto lines = jsonl::read_all(dir.file("out/retrieve.jsonl"));
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].at("entries").size() == 3);
    // The stuffed passage outranks the helpful one.
    CHECK(lines[0].at("entries")[0].at("passage_id") == "pm000");
}

TEST_CASE("synthesize emits one record per candidate, resumably") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 3;
    spec.fillers = 0;
    spec.training_k = 2;
    spec.pseudo_backgrounds = true;
    const auto fixture = make_pipeline_fixture(dir, spec);

    std::string out;
    REQUIRE(run_cli({"synthesize", "--config", fixture.config_path}, &out) == 0);
    // 3 samples x (2 retrieved + 1 pseudo)
    CHECK(out.find("records=9") != std::string::npos);
    const auto records = jsonl::read_all(dir.file("out/gain_records.jsonl"));
    CHECK(records.size() == 9);
    const auto before = jsonl::read_file(dir.file("out/gain_records.jsonl"));

    // Rerunning skips every already-emitted pair and leaves the file as is.
    std::string again;
    REQUIRE(run_cli({"synthesize", "--config", fixture.config_path}, &again) == 0);
    CHECK(again.find("records=0") != std::string::npos);
    CHECK(again.find("skipped=9") != std::string::npos);
    CHECK(jsonl::read_file(dir.file("out/gain_records.jsonl")) == before);
}

TEST_CASE("the full pipeline runs through train, infer, evaluate and compare") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 6;
    spec.training_k = 3;
    spec.pseudo_backgrounds = true;
    const auto fixture = make_pipeline_fixture(dir, spec);

    std::string out;
    REQUIRE(run_cli({"synthesize", "--config", fixture.config_path}, &out) == 0);

    REQUIRE(run_cli({"train", "--config", fixture.config_path}, &out) == 0);
    CHECK(out.find("train ok") != std::string::npos);
    CHECK(jsonl::file_exists(dir.file("out/model.json")));
    CHECK(jsonl::file_exists(dir.file("out/training_report.json")));

    REQUIRE(run_cli({"infer", "--config", fixture.config_path}, &out) == 0);
    CHECK(jsonl::file_exists(dir.file("out/traces_gainrag.jsonl")));
    CHECK(jsonl::file_exists(dir.file("out/timings_gainrag.jsonl")));
    // Primary traces carry no timings; those live in the side file.
    const auto traces = jsonl::read_all(dir.file("out/traces_gainrag.jsonl"));
    REQUIRE(traces.size() == 6);
    for (const auto& trace : traces) {
        CHECK_FALSE(trace.contains("timings_ms"));
    }

    REQUIRE(run_cli({"infer", "--config", fixture.config_path, "--mode", "standard-rag"},
                    &out) == 0);
    CHECK(jsonl::file_exists(dir.file("out/traces_standard-rag.jsonl")));

    REQUIRE(run_cli({"evaluate", "--config", fixture.config_path}, &out) == 0);
    CHECK(out.find("evaluate ok n=6") != std::string::npos);
    const auto eval_doc =
        nlohmann::json::parse(jsonl::read_file(dir.file("out/eval_traces_gainrag.json")));
    CHECK(eval_doc.contains("em"));
    CHECK(eval_doc.contains("f1"));
    CHECK(eval_doc.contains("avg"));
    CHECK(eval_doc.at("per_sample").size() == 6);

    REQUIRE(run_cli({"compare", "--config", fixture.config_path, "--traces-a",
                     dir.file("out/traces_gainrag.jsonl"), "--traces-b",
                     dir.file("out/traces_standard-rag.jsonl")},
                    &out) == 0);
    CHECK(out.find("compare ok") != std::string::npos);
    const auto compare_doc =
        nlohmann::json::parse(jsonl::read_file(dir.file("out/compare.json")));
    const std::size_t total = compare_doc.at("win").get<std::size_t>() +
                              compare_doc.at("tie").get<std::size_t>() +
                              compare_doc.at("lose").get<std::size_t>();
    CHECK(total == 6);
}

TEST_CASE("infer rejects gainrag mode without a trained model") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 2;
    const auto fixture = make_pipeline_fixture(dir, spec);
    std::string err;
    CHECK(run_cli({"infer", "--config", fixture.config_path}, nullptr, &err) != 0);
    CHECK(err.find("model") != std::string::npos);
}

TEST_CASE("no-retrieval inference needs no model") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 2;
    const auto fixture = make_pipeline_fixture(dir, spec);
    std::string out;
    REQUIRE(run_cli({"infer", "--config", fixture.config_path, "--mode", "no-retrieval"},
                    &out) == 0);
    const auto traces = jsonl::read_all(dir.file("out/traces_no-retrieval.jsonl"));
    REQUIRE(traces.size() == 2);
    CHECK(traces[0].at("candidates").empty());
    CHECK(traces[0].at("chosen_id").is_null());
}

TEST_CASE("retrieve can rank by imported external scores") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 2;
    spec.fillers = 0;
    const auto fixture = make_pipeline_fixture(dir, spec);

    // Score every corpus passage for the query, inverting the lexical order.
    std::vector<nlohmann::json> scores;
    double value = 1.0;
    for (const auto& passage : jsonl::read_all(fixture.corpus_path)) {
        scores.push_back({{"query_id", "qx"},
                          {"passage_id", passage.at("id").get<std::string>()},
                          {"score", value}});
        value += 1.0;
    }
    const auto scores_path = dir.file("scores.jsonl");
    jsonl::write_all(scores_path, scores);

    auto config = nlohmann::json::parse(jsonl::read_file(fixture.config_path));
    config["external_scores_path"] = scores_path;
    config["retrieval"]["mode"] = "external";
    jsonl::write_file(fixture.config_path, config.dump(2));

    std::string out;
    REQUIRE(run_cli({"retrieve", "--config", fixture.config_path, "--query", "anything",
                     "--query-id", "qx", "--k", "2"},
                    &out) == 0);
    const auto lines = jsonl::read_all(dir.file("out/retrieve.jsonl"));
    REQUIRE(lines.size() == 1);
    // The last corpus passage got the highest external score.
    const auto last_id =
        jsonl::read_all(fixture.corpus_path).back().at("id").get<std::string>();
    CHECK(lines[0].at("entries")[0].at("passage_id") == last_id);

    // A query id absent from the file is a hard error.
    std::string err;
    CHECK(run_cli({"retrieve", "--config", fixture.config_path, "--query", "anything",
                   "--query-id", "missing", "--k", "2"},
                  nullptr, &err) != 0);
    CHECK(err.find("missing") != std::string::npos);
}

TEST_CASE("coverage writes a plot-ready csv") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 3;
    const auto fixture = make_pipeline_fixture(dir, spec);

    // Narrow the cutoffs to the fixture scale.
    auto config = nlohmann::json::parse(jsonl::read_file(fixture.config_path));
    config["coverage_ks"] = {1, 2, 4};
    jsonl::write_file(fixture.config_path, config.dump(2));

    std::string out;
    REQUIRE(run_cli({"coverage", "--config", fixture.config_path}, &out) == 0);
    const auto csv = jsonl::read_file(dir.file("out/coverage.csv"));
    CHECK(csv.rfind("k,recall,em_coverage,f1_coverage\n", 0) == 0);
    CHECK(csv.find("\n1,") != std::string::npos);
    CHECK(csv.find("\n4,") != std::string::npos);
}

TEST_CASE("identical seeds reproduce byte-identical primary artifacts") {
    TempDir dir;
    FixtureSpec spec;
    spec.questions = 4;
    spec.training_k = 3;
    spec.pseudo_backgrounds = true;
    spec.epochs = 4;

    spec.output_dir = dir.file("run_a");
    const auto fixture_a = make_pipeline_fixture(dir, spec);
    REQUIRE(run_cli({"synthesize", "--config", fixture_a.config_path}) == 0);
    REQUIRE(run_cli({"train", "--config", fixture_a.config_path}) == 0);
    REQUIRE(run_cli({"infer", "--config", fixture_a.config_path}) == 0);

    TempDir dir_b;
    FixtureSpec spec_b = spec;
    spec_b.output_dir = dir_b.file("run_b");
    const auto fixture_b = make_pipeline_fixture(dir_b, spec_b);
    REQUIRE(run_cli({"synthesize", "--config", fixture_b.config_path}) == 0);
    REQUIRE(run_cli({"train", "--config", fixture_b.config_path}) == 0);
    REQUIRE(run_cli({"infer", "--config", fixture_b.config_path}) == 0);

    for (const std::string name :
         {"gain_records.jsonl", "pseudo_passages.jsonl", "traces_gainrag.jsonl"}) {
        CHECK(jsonl::read_file(dir.file("run_a/" + name)) ==
              jsonl::read_file(dir_b.file("run_b/" + name)));
    }
    // The model differs only in file location, never in content.
    CHECK(jsonl::read_file(dir.file("run_a/model.json")) ==
          jsonl::read_file(dir_b.file("run_b/model.json")));
}
