#include "gainrag/cli.hpp"

#include "gainrag/config.hpp"
#include "gainrag/eval.hpp"
#include "gainrag/inference.hpp"
#include "gainrag/jsonl.hpp"
#include "gainrag/mock_lm.hpp"
#include "gainrag/remote_lm.hpp"
#include "gainrag/signal_synthesis.hpp"
#include "gainrag/text.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace gainrag::cli {

namespace fs = std::filesystem;

namespace {

using config::PipelineConfig;

struct CommonFlags {
    std::string config_path;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Pipeline configuration file")->required();
    cmd->add_option("--output-dir", flags.output_dir, "Override the artifact directory");
    cmd->add_option("--seed", flags.seed, "Override the pipeline seed");
}

PipelineConfig load_config(const CommonFlags& flags) {
    PipelineConfig cfg = PipelineConfig::load(flags.config_path);
    if (!flags.output_dir.empty()) cfg.output_dir = flags.output_dir;
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.train.train.seed = *flags.seed;
    }
    return cfg;
}

void require_file(const std::string& path, const std::string& field) {
    if (path.empty()) {
        throw config::ConfigError("config field \"" + field + "\": required for this command");
    }
    if (!jsonl::file_exists(path)) {
        throw config::ConfigError("config field \"" + field + "\": file not found: " + path);
    }
}

std::shared_ptr<lm::LMBackend> make_backend(const PipelineConfig& cfg) {
    if (cfg.backend.descriptor.kind == lm::BackendKind::Mock) {
        require_file(cfg.backend.mock_spec_path, "backend.mock_spec_path");
        return std::make_shared<lm::MockBackend>(lm::MockLMSpec::load(cfg.backend.mock_spec_path));
    }
    return std::make_shared<lm::RemoteBackend>(cfg.backend.descriptor);
}

struct RetrievalStack {
    retrieval::CorpusPtr corpus;
    std::unique_ptr<retrieval::Index> index;
    std::unique_ptr<retrieval::ExternalScores> external;
    std::unique_ptr<retrieval::Retriever> retriever;
};

RetrievalStack make_retrieval(const PipelineConfig& cfg) {
    require_file(cfg.corpus_path, "corpus_path");
    RetrievalStack stack;
    stack.corpus =
        std::make_shared<const retrieval::Corpus>(retrieval::ingest_corpus(cfg.corpus_path));
    stack.index = std::make_unique<retrieval::Index>(retrieval::build_index(stack.corpus));
    if (cfg.retrieval.mode == retrieval::RetrievalMode::External) {
        require_file(*cfg.external_scores_path, "external_scores_path");
        stack.external = std::make_unique<retrieval::ExternalScores>(
            retrieval::import_external_scores(*cfg.external_scores_path));
    }
    stack.retriever = std::make_unique<retrieval::Retriever>(*stack.index, cfg.retrieval.mode,
                                                             stack.external.get());
    return stack;
}

std::vector<QASample> load_dataset_checked(const PipelineConfig& cfg) {
    require_file(cfg.dataset_path, "dataset_path");
    return synthesis::load_dataset(cfg.dataset_path);
}

std::map<std::string, QASample> dataset_by_id(const std::vector<QASample>& samples) {
    std::map<std::string, QASample> out;
    for (const auto& sample : samples) out[sample.id] = sample;
    return out;
}

void write_config_echo(const PipelineConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    jsonl::write_file((fs::path(cfg.output_dir) / "resolved_config.json").string(),
                      cfg.to_json().dump(2) + "\n");
}

std::string artifact(const PipelineConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

std::string format_double(double value) {
    std::ostringstream ss;
    ss << std::setprecision(10) << value;
    return ss.str();
}

gain::GainConfig make_gain_config(const PipelineConfig& cfg) {
    gain::GainConfig gc = cfg.gain;
    gc.generation_template = cfg.generation_template;
    return gc;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_ingest(const PipelineConfig& cfg, std::ostream& out) {
    auto stack = make_retrieval(cfg);
    write_config_echo(cfg);
    std::set<std::string> terms;
    for (const auto& passage : stack.corpus->passages) {
        for (const auto& tok : text::index_tokens(passage.text)) terms.insert(tok);
    }
    nlohmann::json report = {{"passages", stack.corpus->size()},
                             {"terms", terms.size()},
                             {"average_length", stack.index->average_length()}};
    jsonl::write_file(artifact(cfg, "ingest.json"), report.dump(2) + "\n");
    out << "ingest ok passages=" << stack.corpus->size() << " terms=" << terms.size()
        << " out=" << cfg.output_dir << "\n";
    return 0;
}

int cmd_retrieve(const PipelineConfig& cfg, const std::string& query,
                 const std::string& query_id, int k, std::ostream& out) {
    auto stack = make_retrieval(cfg);
    write_config_echo(cfg);
    const int effective_k = k > 0 ? k : cfg.retrieval.k;

    std::vector<nlohmann::json> lines;
    std::size_t queries = 0;
    auto run_one = [&](const std::string& qid, const std::string& qtext) {
        const auto result = stack.retriever->retrieve(qid, qtext, effective_k);
        nlohmann::json obj = {{"query_id", qid}, {"query", qtext}};
        obj["entries"] = nlohmann::json::array();
        for (const auto& entry : result.entries) {
            obj["entries"].push_back(
                {{"passage_id", entry.passage_id}, {"score", entry.score}});
        }
        lines.push_back(std::move(obj));
        ++queries;
    };

    if (!query.empty()) {
        run_one(query_id.empty() ? "query" : query_id, query);
    } else {
        for (const auto& sample : load_dataset_checked(cfg)) {
            run_one(sample.id, sample.question);
        }
    }
    jsonl::write_all(artifact(cfg, "retrieve.jsonl"), lines);
    out << "retrieve ok queries=" << queries << " k=" << effective_k
        << " out=" << cfg.output_dir << "\n";
    return 0;
}

int cmd_synthesize(const PipelineConfig& cfg, std::ostream& out) {
    auto stack = make_retrieval(cfg);
    auto backend = make_backend(cfg);
    const auto dataset = load_dataset_checked(cfg);
    write_config_echo(cfg);

    const std::string records_path = artifact(cfg, "gain_records.jsonl");
    const std::string pseudo_path = artifact(cfg, "pseudo_passages.jsonl");

    std::set<synthesis::RecordKey> existing;
    if (jsonl::file_exists(records_path)) {
        for (const auto& record : synthesis::load_gain_records(records_path)) {
            existing.insert({record.query_id, record.passage_id});
        }
    }

    synthesis::SynthesisOptions options;
    options.retrieval_k = cfg.retrieval.training_k;
    options.pseudo_max_tokens = cfg.pseudo.max_tokens;
    options.include_na_pseudo = cfg.pseudo.include_na;
    options.pseudo_template = cfg.pseudo_template;

    const auto result = synthesis::synthesize(dataset, *stack.retriever, *backend,
                                              make_gain_config(cfg), options, existing);

    for (const auto& record : result.records) {
        jsonl::append(records_path, synthesis::gain_record_to_json(record));
    }
    for (const auto& passage : result.pseudo_passages) {
        jsonl::append(pseudo_path, {{"id", passage.id},
                                    {"text", passage.text},
                                    {"origin", to_string(passage.origin)}});
    }
    if (!result.failures.empty()) {
        std::vector<nlohmann::json> failures;
        for (const auto& failure : result.failures) {
            failures.push_back({{"sample_id", failure.sample_id}, {"error", failure.error}});
        }
        jsonl::write_all(artifact(cfg, "synthesis_failures.jsonl"), failures);
    }
    nlohmann::json meta = {{"records", result.records.size()},
                           {"pseudo_passages", result.pseudo_passages.size()},
                           {"skipped_existing", result.skipped_existing},
                           {"failures", result.failures.size()},
                           {"gain_mode", to_string(cfg.gain.mode)},
                           {"alpha", cfg.gain.alpha},
                           {"retrieval_k", cfg.retrieval.training_k}};
    jsonl::write_file(artifact(cfg, "synthesis_meta.json"), meta.dump(2) + "\n");

    out << "synthesize ok records=" << result.records.size()
        << " pseudo=" << result.pseudo_passages.size()
        << " skipped=" << result.skipped_existing << " failures=" << result.failures.size()
        << " mode=" << to_string(cfg.gain.mode) << " out=" << cfg.output_dir << "\n";
    return result.failures.empty() ? 0 : 1;
}

int cmd_train(const PipelineConfig& cfg, bool skip_filter, std::ostream& out) {
    auto stack = make_retrieval(cfg);
    auto backend = make_backend(cfg);
    const auto dataset = load_dataset_checked(cfg);
    const auto samples = dataset_by_id(dataset);
    write_config_echo(cfg);

    const std::string records_path = artifact(cfg, "gain_records.jsonl");
    require_file(records_path, "gain_records");
    const auto records = synthesis::load_gain_records(records_path);

    std::map<std::string, Passage> pseudo_passages;
    const std::string pseudo_path = artifact(cfg, "pseudo_passages.jsonl");
    if (jsonl::file_exists(pseudo_path)) {
        jsonl::for_each(pseudo_path, [&](std::size_t, const nlohmann::json& obj) {
            Passage passage;
            passage.id = obj.at("id").get<std::string>();
            passage.text = obj.at("text").get<std::string>();
            passage.origin = PassageOrigin::Pseudo;
            pseudo_passages[passage.id] = std::move(passage);
        });
    }

    auto resolve = [&](const std::string& id) -> const Passage& {
        if (auto it = pseudo_passages.find(id); it != pseudo_passages.end()) {
            return it->second;
        }
        return stack.corpus->at(id);
    };
    auto score_fn = [&](const std::string& qid, const std::string& question,
                        const Passage& passage) {
        return stack.retriever->score_passage(qid, question, passage);
    };

    const auto groups = synthesis::assemble_groups(records, samples, resolve,
                                                   cfg.train.group_size, cfg.seed, score_fn);

    std::vector<synthesis::TrainingGroup> trainable;
    std::size_t kept = groups.size();
    std::size_t dropped = 0;
    if (cfg.train.filter && !skip_filter) {
        auto filtered = synthesis::filter_groups(groups, samples, *backend,
                                                 cfg.generation_template, cfg.max_answer_tokens);
        kept = filtered.kept_count;
        dropped = filtered.dropped_count;
        trainable = std::move(filtered.kept);
        if (!filtered.drop_log.empty()) {
            std::vector<nlohmann::json> log_lines;
            for (const auto& line : filtered.drop_log) {
                log_lines.push_back({{"reason", line}});
            }
            jsonl::write_all(artifact(cfg, "filter_log.jsonl"), log_lines);
        }
    } else {
        trainable = groups;
    }
    // Groups below two members cannot enter the listwise softmax.
    std::erase_if(trainable,
                  [](const synthesis::TrainingGroup& g) { return g.members.size() < 2; });
    if (trainable.empty()) {
        throw std::runtime_error("train: no usable groups after filtering");
    }

    auto feature_config = selector::FeatureConfig::from_index(*stack.index);
    const auto model = selector::train(trainable, std::move(feature_config), cfg.train.train);
    const std::string model_path = artifact(cfg, "model.json");
    selector::save_model(model, model_path);

    nlohmann::json report = {{"groups", groups.size()},
                             {"kept", kept},
                             {"dropped", dropped},
                             {"trained_on", trainable.size()},
                             {"epochs", model.epochs_trained},
                             {"loss_curve", model.loss_curve}};
    jsonl::write_file(artifact(cfg, "training_report.json"), report.dump(2) + "\n");

    out << "train ok groups=" << groups.size() << " kept=" << kept << " dropped=" << dropped
        << " epochs=" << model.epochs_trained
        << " final_loss=" << format_double(model.loss_curve.back()) << " model=" << model_path
        << "\n";
    return 0;
}

int cmd_infer(const PipelineConfig& cfg, const std::string& model_path_override,
              const std::string& mode_override, std::ostream& out) {
    auto stack = make_retrieval(cfg);
    auto backend = make_backend(cfg);
    const auto dataset = load_dataset_checked(cfg);
    write_config_echo(cfg);

    inference::Mode mode = cfg.inference_mode;
    if (!mode_override.empty()) {
        mode = inference::mode_from_string(mode_override);
    }

    std::optional<selector::SelectorModel> model;
    if (mode == inference::Mode::GainRAG) {
        const std::string model_path =
            model_path_override.empty() ? artifact(cfg, "model.json") : model_path_override;
        require_file(model_path, "model");
        model = selector::load_model(model_path);
    }

    inference::InferenceOptions options;
    options.k = cfg.retrieval.k;
    options.max_answer_tokens = cfg.max_answer_tokens;
    options.pseudo_max_tokens = cfg.pseudo.max_tokens;
    options.skip_pseudo = cfg.pseudo.skip;
    options.generation_template = cfg.generation_template;
    options.pseudo_template = cfg.pseudo_template;

    std::vector<nlohmann::json> trace_lines;
    std::vector<nlohmann::json> timing_lines;
    for (const auto& sample : dataset) {
        const auto trace = inference::answer(*backend, *stack.retriever,
                                             model ? &*model : nullptr, sample.id,
                                             sample.question, mode, options);
        trace_lines.push_back(inference::trace_to_json(trace, /*include_timings=*/false));
        timing_lines.push_back(inference::timings_to_json(trace));
    }

    const std::string mode_name = inference::to_string(mode);
    const std::string traces_path = artifact(cfg, "traces_" + mode_name + ".jsonl");
    jsonl::write_all(traces_path, trace_lines);
    jsonl::write_all(artifact(cfg, "timings_" + mode_name + ".jsonl"), timing_lines);

    out << "infer ok queries=" << dataset.size() << " mode=" << mode_name
        << " traces=" << traces_path << "\n";
    return 0;
}

int cmd_evaluate(const PipelineConfig& cfg, const std::string& traces_override,
                 std::ostream& out) {
    const auto dataset = load_dataset_checked(cfg);
    write_config_echo(cfg);

    const std::string mode_name = inference::to_string(cfg.inference_mode);
    const std::string traces_path = traces_override.empty()
                                        ? artifact(cfg, "traces_" + mode_name + ".jsonl")
                                        : traces_override;
    require_file(traces_path, "traces");

    std::vector<eval::AnswerRecord> answers;
    jsonl::for_each(traces_path, [&](std::size_t, const nlohmann::json& obj) {
        answers.push_back(
            {obj.at("query_id").get<std::string>(), obj.at("answer").get<std::string>()});
    });

    const auto result = eval::evaluate(dataset, answers, cfg.dataset_path, mode_name);

    nlohmann::json doc = {{"dataset_id", result.dataset_id},
                          {"mode", result.mode},
                          {"sample_count", result.sample_count},
                          {"em", result.em_percent},
                          {"f1", result.f1_percent},
                          {"avg", result.avg_percent}};
    doc["per_sample"] = nlohmann::json::array();
    for (const auto& verdict : result.per_sample) {
        doc["per_sample"].push_back({{"query_id", verdict.query_id},
                                     {"prediction", verdict.prediction},
                                     {"em", verdict.em},
                                     {"f1", verdict.f1}});
    }
    const std::string eval_name =
        "eval_" + fs::path(traces_path).stem().string() + ".json";
    jsonl::write_file(artifact(cfg, eval_name), doc.dump(2) + "\n");

    out << "evaluate ok n=" << result.sample_count << " em=" << format_double(result.em_percent)
        << " f1=" << format_double(result.f1_percent)
        << " avg=" << format_double(result.avg_percent) << " out=" << artifact(cfg, eval_name)
        << "\n";
    return 0;
}

int cmd_coverage(const PipelineConfig& cfg, std::ostream& out) {
    auto stack = make_retrieval(cfg);
    auto backend = make_backend(cfg);
    const auto dataset = load_dataset_checked(cfg);
    write_config_echo(cfg);

    eval::CoverageOptions options;
    options.generation_template = cfg.generation_template;
    options.max_answer_tokens = cfg.max_answer_tokens;

    std::vector<std::string> failures;
    const auto points = eval::coverage_curves(dataset, *stack.retriever, *backend,
                                              cfg.coverage_ks, options, &failures);

    std::ostringstream csv;
    csv << "k,recall,em_coverage,f1_coverage\n";
    for (const auto& point : points) {
        csv << point.k << "," << format_double(point.recall) << ","
            << format_double(point.em_coverage) << "," << format_double(point.f1_coverage)
            << "\n";
    }
    jsonl::write_file(artifact(cfg, "coverage.csv"), csv.str());
    if (!failures.empty()) {
        std::vector<nlohmann::json> lines;
        for (const auto& failure : failures) lines.push_back({{"error", failure}});
        jsonl::write_all(artifact(cfg, "coverage_failures.jsonl"), lines);
    }

    std::ostringstream ks;
    for (std::size_t i = 0; i < cfg.coverage_ks.size(); ++i) {
        if (i) ks << ",";
        ks << cfg.coverage_ks[i];
    }
    out << "coverage ok ks=" << ks.str() << " samples=" << dataset.size()
        << " failures=" << failures.size() << " out=" << artifact(cfg, "coverage.csv") << "\n";
    return 0;
}

int cmd_compare(const PipelineConfig& cfg, const std::string& traces_a,
                const std::string& traces_b, std::ostream& out) {
    const auto dataset = load_dataset_checked(cfg);
    write_config_echo(cfg);
    require_file(traces_a, "traces-a");
    require_file(traces_b, "traces-b");

    auto load_answers = [](const std::string& path) {
        std::vector<eval::AnswerRecord> answers;
        jsonl::for_each(path, [&](std::size_t, const nlohmann::json& obj) {
            answers.push_back(
                {obj.at("query_id").get<std::string>(), obj.at("answer").get<std::string>()});
        });
        return answers;
    };

    const auto result = eval::win_tie_lose(load_answers(traces_a), load_answers(traces_b), dataset);
    nlohmann::json doc = {{"traces_a", traces_a},
                          {"traces_b", traces_b},
                          {"win", result.win},
                          {"tie", result.tie},
                          {"lose", result.lose}};
    jsonl::write_file(artifact(cfg, "compare.json"), doc.dump(2) + "\n");

    out << "compare ok win=" << result.win << " tie=" << result.tie << " lose=" << result.lose
        << " out=" << artifact(cfg, "compare.json") << "\n";
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"gain-oriented retrieve-select-generate pipeline"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "Parse the corpus and build the index");
    CommonFlags ingest_flags;
    add_common(ingest, ingest_flags);

    auto* retrieve = app.add_subcommand("retrieve", "Rank passages for queries");
    CommonFlags retrieve_flags;
    add_common(retrieve, retrieve_flags);
    std::string query;
    std::string query_id;
    int retrieve_k = 0;
    retrieve->add_option("--query", query, "Single ad-hoc query text");
    retrieve->add_option("--query-id", query_id, "Query id for external-score lookups");
    retrieve->add_option("--k", retrieve_k, "Override retrieval depth");

    auto* synthesize = app.add_subcommand("synthesize", "Build gain records for the dataset");
    CommonFlags synthesize_flags;
    add_common(synthesize, synthesize_flags);
    std::optional<double> alpha_override;
    std::string gain_mode_override;
    std::optional<int> training_k_override;
    synthesize->add_option("--alpha", alpha_override, "Override the contrast strength");
    synthesize->add_option("--gain-mode", gain_mode_override, "exact or approximate");
    synthesize->add_option("--training-k", training_k_override,
                           "Candidates retrieved per training question");

    auto* train = app.add_subcommand("train", "Distill gain records into the selector");
    CommonFlags train_flags;
    add_common(train, train_flags);
    bool skip_filter = false;
    std::optional<int> epochs_override;
    std::optional<std::size_t> group_size_override;
    train->add_flag("--skip-filter", skip_filter, "Train on unfiltered groups");
    train->add_option("--epochs", epochs_override, "Override training epochs");
    train->add_option("--group-size", group_size_override, "Override the training group size");

    auto* infer = app.add_subcommand("infer", "Answer every dataset question");
    CommonFlags infer_flags;
    add_common(infer, infer_flags);
    std::string mode_override;
    std::string model_override;
    std::optional<int> k_override;
    infer->add_option("--mode", mode_override,
                      "gainrag, standard-rag, pseudo-only or no-retrieval");
    infer->add_option("--model", model_override, "Selector model file");
    infer->add_option("--k", k_override, "Override retrieval depth");

    auto* evaluate = app.add_subcommand("evaluate", "Score a trace file against the dataset");
    CommonFlags evaluate_flags;
    add_common(evaluate, evaluate_flags);
    std::string traces_override;
    evaluate->add_option("--traces", traces_override, "Trace file to score");

    auto* coverage = app.add_subcommand("coverage", "Retrieval coverage curves");
    CommonFlags coverage_flags;
    add_common(coverage, coverage_flags);

    auto* compare = app.add_subcommand("compare", "Win-tie-lose between two trace files");
    CommonFlags compare_flags;
    add_common(compare, compare_flags);
    std::string traces_a;
    std::string traces_b;
    compare->add_option("--traces-a", traces_a, "First trace file")->required();
    compare->add_option("--traces-b", traces_b, "Second trace file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (ingest->parsed()) {
            return cmd_ingest(load_config(ingest_flags), out);
        }
        if (retrieve->parsed()) {
            return cmd_retrieve(load_config(retrieve_flags), query, query_id, retrieve_k, out);
        }
        if (synthesize->parsed()) {
            PipelineConfig cfg = load_config(synthesize_flags);
            if (alpha_override) cfg.gain.alpha = *alpha_override;
            if (!gain_mode_override.empty()) {
                cfg.gain.mode = gain::gain_mode_from_string(gain_mode_override);
            }
            if (training_k_override) cfg.retrieval.training_k = *training_k_override;
            cfg.validate();
            return cmd_synthesize(cfg, out);
        }
        if (train->parsed()) {
            PipelineConfig cfg = load_config(train_flags);
            if (epochs_override) cfg.train.train.epochs = *epochs_override;
            if (group_size_override) cfg.train.group_size = *group_size_override;
            cfg.validate();
            return cmd_train(cfg, skip_filter, out);
        }
        if (infer->parsed()) {
            PipelineConfig cfg = load_config(infer_flags);
            if (k_override) cfg.retrieval.k = *k_override;
            cfg.validate();
            return cmd_infer(cfg, model_override, mode_override, out);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(load_config(evaluate_flags), traces_override, out);
        }
        if (coverage->parsed()) {
            return cmd_coverage(load_config(coverage_flags), out);
        }
        if (compare->parsed()) {
            return cmd_compare(load_config(compare_flags), traces_a, traces_b, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no command selected\n" << app.help();
    return 1;
}

} // namespace gainrag::cli
