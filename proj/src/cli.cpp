#include "flowsentry/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowsentry/captures.hpp"
#include "flowsentry/csv.hpp"
#include "flowsentry/detector.hpp"
#include "flowsentry/drl.hpp"
#include "flowsentry/error.hpp"
#include "flowsentry/flowdata.hpp"
#include "flowsentry/harness.hpp"
#include "flowsentry/preprocess.hpp"
#include "flowsentry/reference.hpp"
#include "flowsentry/report.hpp"

namespace flowsentry {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string run_config_path;
    json run_config = json::object();
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

/// A JSON literal or the path of a JSON file.
json json_argument(const std::string& text) {
    if (text.empty()) return json::object();
    const auto first = text.find_first_not_of(" \t\n");
    if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw InvalidArgument(std::string("malformed JSON argument: ") + e.what());
        }
    }
    return read_json_file(text);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

struct DataDir {
    EncodedDataset train;
    EncodedDataset eval;
    Scenario scenario = Scenario::Binary;
    std::string name;
};

EncodedDataset read_split(const fs::path& path, const FeatureSchema& schema, const std::vector<std::string>& names) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return read_dataset_csv(in, schema, names);
    } catch (const ParseError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

DataDir load_data_dir(const fs::path& dir) {
    auto schema_json = read_json_file(dir / "schema.json");
    DataDir d;
    auto schema = schema_from_json(schema_json);
    auto names = class_names_from_json(schema_json);
    d.train = read_split(dir / "train.csv", schema, names);
    d.eval = read_split(dir / "eval.csv", schema, names);
    d.scenario = parse_scenario(schema_json.value("scenario", std::string("binary")));
    d.name = schema_json.value("dataset", fs::absolute(dir).lexically_normal().filename().string());
    if (d.train.size() == 0) throw DataError("training split in " + dir.string() + " is empty");
    return d;
}

void print_scores(std::ostream& out, const ScoreSummary& s) {
    out << "accuracy\t" << csv::format_double(s.accuracy) << "\n"
        << "macro_precision\t" << csv::format_double(s.macro_precision) << "\n"
        << "macro_recall\t" << csv::format_double(s.macro_recall) << "\n"
        << "macro_fpr\t" << csv::format_double(s.macro_fpr) << "\n"
        << "macro_f1\t" << csv::format_double(s.macro_f1) << "\n";
}

std::vector<EvalRun> read_runs_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return read_runs_csv(in);
    } catch (const ParseError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

const std::vector<std::string> kAllDatasets = {"1-1-full", "1-1-large", "1-1-medium", "1-1-small", "20-1",
                                               "21-1",     "34-1",      "42-1",       "44-1"};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Flow-based IoT intrusion detection experiments", "flowsentry"};
    app.require_subcommand(1);
    // Global options are accepted after the subcommand too.
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Globals g;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> jobs_flag;
    app.add_option("--seed", seed_flag, "Random seed (falls back to FLOWSENTRY_SEED, then 1)");
    app.add_option("--jobs", jobs_flag, "Maximum worker threads")->check(CLI::PositiveNumber);
    app.add_option("--run-config", g.run_config_path, "JSON run configuration; flags override its values");

    // summarize
    auto* summarize_cmd = app.add_subcommand("summarize", "Print per-class flow counts of a labeled conn.log");
    std::string log_path;
    std::string malware_type;
    std::string dataset_name;
    summarize_cmd->add_option("log", log_path, "Labeled conn.log")->required();
    summarize_cmd->add_option("--malware-type", malware_type, "Malware family to report");
    summarize_cmd->add_option("--dataset", dataset_name, "Published dataset name to compare against");

    // preprocess
    auto* preprocess_cmd = app.add_subcommand("preprocess", "Encode a capture into train/eval CSVs and a schema");
    std::string out_dir;
    std::string scenario_text = "binary";
    double eval_fraction = 0.2;
    preprocess_cmd->add_option("log", log_path, "Labeled conn.log")->required();
    preprocess_cmd->add_option("--out", out_dir, "Output directory")->required();
    preprocess_cmd->add_option("--scenario", scenario_text, "binary or multiclass");
    preprocess_cmd->add_option("--eval-fraction", eval_fraction, "Share of each class held out for evaluation");
    preprocess_cmd->add_option("--dataset", dataset_name, "Dataset name recorded in the schema");

    // carve
    auto* carve_cmd = app.add_subcommand("carve", "Carve the large, medium and small subsets from capture 1-1");
    carve_cmd->add_option("log", log_path, "Labeled conn.log of capture 1-1")->required();
    carve_cmd->add_option("--out", out_dir, "Output directory")->required();

    // train / crossval / gridsearch
    std::string model_text;
    std::string data_dir;
    std::string config_text;
    std::string grid_text;
    std::size_t folds = 5;
    auto* train_cmd = app.add_subcommand("train", "Fit one model configuration on a training split");
    train_cmd->add_option("model", model_text, "svm, xgboost, lightgbm, iforest, lof or drl")->required();
    train_cmd->add_option("--data", data_dir, "Directory written by preprocess")->required();
    train_cmd->add_option("--config", config_text, "Config JSON (literal or file)");
    train_cmd->add_option("--out", out_dir, "Output directory for model.json")->required();

    auto* crossval_cmd = app.add_subcommand("crossval", "Stratified k-fold cross-validation of one configuration");
    crossval_cmd->add_option("model", model_text, "Model name")->required();
    crossval_cmd->add_option("--data", data_dir, "Directory written by preprocess")->required();
    crossval_cmd->add_option("--config", config_text, "Config JSON (literal or file)");
    crossval_cmd->add_option("--folds", folds, "Number of folds")->check(CLI::Range(2, 1000));

    auto* grid_cmd = app.add_subcommand("gridsearch", "Cross-validate every grid point and pick the best");
    grid_cmd->add_option("model", model_text, "Model name")->required();
    grid_cmd->add_option("--data", data_dir, "Directory written by preprocess")->required();
    grid_cmd->add_option("--grid", grid_text, "Grid as a JSON array of configs (literal or file)");
    grid_cmd->add_option("--folds", folds, "Number of folds")->check(CLI::Range(2, 1000));
    grid_cmd->add_option("--out", out_dir, "Optional directory for grid.csv");

    auto* drl_cmd = app.add_subcommand("drl-train", "Train the reinforcement-learning agent");
    drl_cmd->add_option("--data", data_dir, "Directory written by preprocess")->required();
    drl_cmd->add_option("--config", config_text, "Agent config JSON (literal or file)");
    drl_cmd->add_option("--out", out_dir, "Output directory for model.json and episodes.csv")->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a saved model on an evaluation split");
    std::string model_file;
    std::string split = "eval";
    evaluate_cmd->add_option("model-file", model_file, "model.json written by train or drl-train")->required();
    evaluate_cmd->add_option("--data", data_dir, "Directory written by preprocess")->required();
    evaluate_cmd->add_option("--split", split, "eval or train")->check(CLI::IsMember({"eval", "train"}));
    evaluate_cmd->add_option("--out", out_dir, "Optional directory for runs.csv");

    auto* report_cmd = app.add_subcommand("report", "Render CSV, Markdown and SVG outputs from runs.csv");
    std::string runs_path;
    report_cmd->add_option("--runs", runs_path, "runs.csv")->required();
    report_cmd->add_option("--out", out_dir, "Output directory")->required();

    auto* compare_cmd = app.add_subcommand("compare", "Print produced scores against the published ones");
    compare_cmd->add_option("--runs", runs_path, "runs.csv")->required();

    auto* reproduce_cmd = app.add_subcommand("reproduce", "Run the full experiment grid on a capture directory");
    std::string captures_dir;
    std::vector<std::string> models;
    std::vector<std::string> datasets;
    std::vector<std::string> scenarios;
    reproduce_cmd->add_option("--captures", captures_dir, "Directory with the IoT-23 captures");
    reproduce_cmd->add_option("--out", out_dir, "Output directory");
    reproduce_cmd->add_option("--models", models, "Models to run (default: all)");
    reproduce_cmd->add_option("--datasets", datasets, "Datasets to run (default: all found)");
    reproduce_cmd->add_option("--scenarios", scenarios, "binary and/or multiclass (default: both)");
    reproduce_cmd->add_option("--folds", folds, "Number of CV folds")->check(CLI::Range(2, 1000));
    reproduce_cmd->add_option("--eval-fraction", eval_fraction, "Share held out for evaluation");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (!g.run_config_path.empty()) {
            g.run_config = read_json_file(g.run_config_path);
            if (!g.run_config.is_object()) throw InvalidArgument("run config must be a JSON object");
        }
        const auto& rc = g.run_config;
        if (seed_flag) {
            g.seed = *seed_flag;
        } else if (rc.contains("seed")) {
            g.seed = rc.at("seed").get<std::uint64_t>();
        } else if (const char* env = std::getenv("FLOWSENTRY_SEED"); env && *env) {
            try {
                g.seed = std::stoull(env);
            } catch (const std::exception&) {
                throw InvalidArgument(std::string("FLOWSENTRY_SEED is not an integer: ") + env);
            }
        }
        g.jobs = jobs_flag ? *jobs_flag : rc.value("jobs", 1);
        auto from_rc = [&](CLI::App* cmd, const char* flag, auto& target, const char* key) {
            if (cmd->count(flag) == 0 && rc.contains(key)) target = rc.at(key).get<std::decay_t<decltype(target)>>();
        };

        if (*summarize_cmd) {
            auto flows = parse_conn_log_file(log_path);
            std::optional<std::string> type;
            if (!malware_type.empty()) type = malware_type;
            auto summary = summarize_capture(flows, type);
            out << "capture\t" << log_path << "\n";
            if (summary.malware_type) out << "malware_type\t" << *summary.malware_type << "\n";
            out << "total\t" << summary.total_samples << "\n";
            for (const auto& [cls, count] : summary.per_class) out << cls << "\t" << count << "\n";
            if (!dataset_name.empty()) {
                for (const auto& p : published_datasets()) {
                    if (p.name != dataset_name) continue;
                    out << "published_total\t" << p.total_samples << "\n";
                    for (const auto& [cls, count] : p.malicious_classes) out << "published " << cls << "\t" << count << "\n";
                }
            }
            return kExitOk;
        }

        if (*preprocess_cmd) {
            const auto scenario = parse_scenario(scenario_text);
            auto flows = parse_conn_log_file(log_path);
            SplitSpec spec;
            spec.eval_fraction = eval_fraction;
            spec.seed = g.seed;
            auto prepared = prepare_capture(std::move(flows), scenario, spec);
            ensure_dir(out_dir);
            auto schema = schema_to_json(prepared.train.schema, prepared.train.class_names);
            schema["scenario"] = std::string(to_string(scenario));
            if (!dataset_name.empty()) schema["dataset"] = dataset_name;
            write_text(fs::path(out_dir) / "schema.json", schema.dump(2) + "\n");
            std::ostringstream train_csv, eval_csv;
            write_dataset_csv(train_csv, prepared.train);
            write_dataset_csv(eval_csv, prepared.eval);
            write_text(fs::path(out_dir) / "train.csv", train_csv.str());
            write_text(fs::path(out_dir) / "eval.csv", eval_csv.str());
            out << "train\t" << prepared.train.size() << "\neval\t" << prepared.eval.size() << "\nfeatures\t"
                << prepared.train.features.cols() << "\n";
            return kExitOk;
        }

        if (*carve_cmd) {
            auto flows = parse_conn_log_file(log_path);
            auto carved = carve_subsets(flows, g.seed);
            ensure_dir(out_dir);
            auto emit = [&](const std::string& name, const std::vector<FlowRecord>& subset) {
                std::ostringstream text;
                write_conn_log(text, subset);
                write_text(fs::path(out_dir) / (name + ".conn.log.labeled"), text.str());
                out << name << "\t" << subset.size() << "\n";
            };
            emit("1-1-large", carved.large);
            emit("1-1-medium", carved.medium);
            emit("1-1-small", carved.small);
            return kExitOk;
        }

        if (*train_cmd || *crossval_cmd || *grid_cmd) {
            const auto kind = parse_model_kind(model_text);
            auto data = load_data_dir(data_dir);
            if (!supports(kind, data.scenario)) {
                throw InvalidArgument(std::string(to_string(kind)) + " supports only the binary scenario");
            }
            auto rows = model_training_rows(kind, data.train, g.seed);
            auto train = subset(labeled(data.train, data.scenario), rows);
            auto factory = detector_factory(kind, g.seed);

            if (*train_cmd) {
                auto detector = factory(json_argument(config_text));
                const auto start = std::chrono::steady_clock::now();
                detector->fit(train.x, train.y, train.n_classes);
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                ensure_dir(out_dir);
                auto file = model_file_json(*detector, data.scenario, data.train.scenario_class_names(data.scenario));
                write_text(fs::path(out_dir) / "model.json", file.dump() + "\n");
                out << "model\t" << to_string(kind) << "\nrows\t" << train.x.rows() << "\nwall_time_s\t"
                    << csv::format_double(secs) << "\n";
                print_scores(out, summarize(evaluate_predictions(train.y, detector->predict(train.x), train.n_classes)));
                return kExitOk;
            }
            if (*crossval_cmd) {
                auto cv = cross_validate(factory, json_argument(config_text), train, folds, g.seed);
                for (std::size_t f = 0; f < cv.fold_scores.size(); ++f) {
                    out << "fold " << f << "\t" << csv::format_double(cv.fold_scores[f]) << "\n";
                }
                out << "mean_macro_f1\t" << csv::format_double(cv.mean) << "\n";
                return kExitOk;
            }
            std::vector<json> grid;
            if (grid_text.empty()) {
                auto share = static_cast<double>(std::count(train.y.begin(), train.y.end(), std::size_t{1})) /
                             static_cast<double>(train.y.size());
                grid = default_grid(kind, data.scenario == Scenario::Binary ? share : 0.05);
            } else {
                auto j = json_argument(grid_text);
                if (!j.is_array()) throw InvalidArgument("grid must be a JSON array of configs");
                grid.assign(j.begin(), j.end());
            }
            auto result = grid_search(factory, grid, train, folds, g.seed, g.jobs);
            std::ostringstream table;
            table << "config,mean_macro_f1\n";
            for (const auto& p : result.points) {
                table << csv::escape(p.config.dump()) << ',' << csv::format_double(p.cv.mean) << "\n";
            }
            out << table.str();
            out << "best\t" << result.best_config.dump() << "\t" << csv::format_double(result.best_score) << "\n";
            if (!out_dir.empty()) {
                ensure_dir(out_dir);
                write_text(fs::path(out_dir) / "grid.csv", table.str());
            }
            return kExitOk;
        }

        if (*drl_cmd) {
            auto data = load_data_dir(data_dir);
            auto train = labeled(data.train, data.scenario);
            auto config_json = to_json(AgentConfig{});
            auto overrides = json_argument(config_text);
            if (!overrides.is_object()) throw InvalidArgument("agent config must be a JSON object");
            config_json.update(overrides);
            const auto config = agent_config_from_json(config_json);
            auto result = train_agent(train.x, train.y, train.n_classes, config, g.seed);
            ensure_dir(out_dir);
            auto params = to_json(result.network);
            params["converged"] = result.converged;
            params["episodes"] = result.episodes.size();
            json file = {{"model", "drl"},
                         {"scenario", std::string(to_string(data.scenario))},
                         {"class_names", data.train.scenario_class_names(data.scenario)},
                         {"config", to_json(config)},
                         {"params", std::move(params)}};
            write_text(fs::path(out_dir) / "model.json", file.dump() + "\n");
            std::ostringstream log;
            write_episode_log(log, result.episodes);
            write_text(fs::path(out_dir) / "episodes.csv", log.str());
            out << "episodes\t" << result.episodes.size() << "\nconverged\t" << (result.converged ? "yes" : "no")
                << "\n";
            if (!result.converged) err << "warning: no loss stability within " << config.max_episodes << " episodes\n";
            return kExitOk;
        }

        if (*evaluate_cmd) {
            auto loaded = load_model_file(read_json_file(model_file));
            auto data = load_data_dir(data_dir);
            if (loaded.scenario != data.scenario) throw DataError("model and data were prepared for different scenarios");
            if (loaded.class_names != data.train.scenario_class_names(data.scenario)) {
                throw DataError("model and data have different class lists");
            }
            auto target = labeled(split == "eval" ? data.eval : data.train, data.scenario);
            const auto start = std::chrono::steady_clock::now();
            auto pred = loaded.detector->predict(target.x);
            EvalRun run;
            run.model = std::string(to_string(loaded.detector->kind()));
            run.dataset = data.name;
            run.scenario = data.scenario;
            run.phase = Phase::Eval;
            run.config = loaded.detector->config_json();
            run.scores = summarize(evaluate_predictions(target.y, pred, target.n_classes));
            run.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            print_scores(out, run.scores);
            if (!out_dir.empty()) {
                ensure_dir(out_dir);
                std::ostringstream text;
                std::vector<EvalRun> runs = {run};
                write_runs_csv(text, runs);
                write_text(fs::path(out_dir) / "runs.csv", text.str());
            }
            return kExitOk;
        }

        if (*report_cmd) {
            auto runs = read_runs_file(runs_path);
            auto deltas = compare_to_reference(runs);
            render_report(runs, deltas, out_dir);
            out << "wrote " << runs.size() << " runs to " << out_dir << "\n";
            return kExitOk;
        }

        if (*compare_cmd) {
            auto runs = read_runs_file(runs_path);
            out << render_delta_table(compare_to_reference(runs));
            return kExitOk;
        }

        if (*reproduce_cmd) {
            from_rc(reproduce_cmd, "--captures", captures_dir, "captures");
            from_rc(reproduce_cmd, "--out", out_dir, "out");
            from_rc(reproduce_cmd, "--models", models, "models");
            from_rc(reproduce_cmd, "--datasets", datasets, "datasets");
            from_rc(reproduce_cmd, "--scenarios", scenarios, "scenarios");
            from_rc(reproduce_cmd, "--folds", folds, "folds");
            from_rc(reproduce_cmd, "--eval-fraction", eval_fraction, "eval_fraction");
            if (captures_dir.empty() || out_dir.empty()) throw InvalidArgument("reproduce needs --captures and --out");
            if (!fs::is_directory(captures_dir)) throw DataError("capture directory not found: " + captures_dir);
            if (datasets.empty()) datasets = kAllDatasets;
            if (scenarios.empty()) scenarios = {"binary", "multiclass"};
            std::vector<ModelKind> kinds;
            if (models.empty()) kinds = all_model_kinds();
            for (const auto& m : models) kinds.push_back(parse_model_kind(m));
            const json grids = rc.value("grid", json::object());

            CaptureLibrary library(captures_dir, g.seed);
            std::vector<EvalRun> runs;
            for (const auto& dataset : datasets) {
                if (!library.available(dataset)) {
                    err << "skipping " << dataset << ": capture not found\n";
                    continue;
                }
                auto flows = library.load(dataset);
                for (const auto& sc : scenarios) {
                    const auto scenario = parse_scenario(sc);
                    if (scenario == Scenario::Multiclass && !multiclass_dataset(dataset)) continue;
                    SplitSpec spec;
                    spec.eval_fraction = eval_fraction;
                    spec.seed = g.seed;
                    auto prepared = prepare_capture(flows, scenario, spec);
                    for (auto kind : kinds) {
                        if (!supports(kind, scenario)) continue;
                        ExperimentOptions options;
                        options.seed = g.seed;
                        options.jobs = g.jobs;
                        options.folds = folds;
                        const auto key = std::string(to_string(kind));
                        if (grids.contains(key)) options.grid = grids.at(key).get<std::vector<json>>();
                        err << dataset << " " << sc << " " << key << "...\n";
                        auto result = run_experiment(kind, dataset, scenario, prepared, options);
                        for (auto& r : result.runs) {
                            err << "  " << to_string(r.phase) << " macro_f1 " << csv::format_double(r.scores.macro_f1)
                                << "\n";
                            runs.push_back(std::move(r));
                        }
                    }
                }
            }
            if (runs.empty()) throw DataError("no runs were produced");
            auto deltas = compare_to_reference(runs);
            render_report(runs, deltas, out_dir);
            out << "wrote " << runs.size() << " runs to " << out_dir << "\n";
            return kExitOk;
        }
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    err << app.help();
    return kExitUsage;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace flowsentry
