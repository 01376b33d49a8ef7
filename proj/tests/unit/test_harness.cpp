#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "flowsentry/error.hpp"
#include "flowsentry/harness.hpp"
#include "flowsentry/reference.hpp"
#include "flowsentry/report.hpp"
#include "support.hpp"

using namespace flowsentry;
namespace fs = std::filesystem;

namespace {

// Label-reading oracle: column 0 carries the class.
class OracleDetector : public Detector {
public:
    ModelKind kind() const noexcept override { return ModelKind::Svm; }
    void fit(const Matrix&, std::span<const std::size_t>, std::size_t) override {}
    std::vector<std::size_t> predict(const Matrix& x) const override {
        std::vector<std::size_t> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = static_cast<std::size_t>(x(i, 0));
        return out;
    }
    nlohmann::json config_json() const override { return nlohmann::json::object(); }
    nlohmann::json params_json() const override { return nlohmann::json::object(); }
    void load_params(const nlohmann::json&) override {}
};

// Predicts the oracle label when config "good" is true, else a constant class.
class ConfiguredDetector : public OracleDetector {
public:
    explicit ConfiguredDetector(nlohmann::json c) : config_(std::move(c)) {}
    void fit(const Matrix&, std::span<const std::size_t>, std::size_t) override {
        if (config_.value("fail", false)) throw DataError("boom");
    }
    std::vector<std::size_t> predict(const Matrix& x) const override {
        if (config_.value("good", false)) return OracleDetector::predict(x);
        return std::vector<std::size_t>(x.rows(), config_.value("constant", std::size_t{0}));
    }
    nlohmann::json config_json() const override { return config_; }

private:
    nlohmann::json config_;
};

DetectorFactory configured() {
    return [](const nlohmann::json& c) { return std::make_unique<ConfiguredDetector>(c); };
}

LabeledData oracle_data(std::size_t n, std::size_t classes = 2) {
    LabeledData d;
    d.x = Matrix(n, 2);
    d.y.resize(n);
    d.n_classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        d.y[i] = i % classes;
        d.x(i, 0) = static_cast<double>(d.y[i]);
        d.x(i, 1) = static_cast<double>(i);
    }
    return d;
}

EvalRun make_run(std::string model, std::string dataset, Scenario s, Phase p, double f1) {
    EvalRun r;
    r.model = std::move(model);
    r.dataset = std::move(dataset);
    r.scenario = s;
    r.phase = p;
    r.config = nlohmann::json{{"c", 0.01}};
    r.scores.accuracy = f1;
    r.scores.macro_f1 = f1;
    r.wall_time_s = 0.5;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("cross-validation scores") {
    auto data = oracle_data(100);
    auto oracle = cross_validate(configured(), nlohmann::json{{"good", true}}, data, 5, 1);
    CHECK(oracle.fold_scores.size() == 5);
    CHECK(oracle.mean == doctest::Approx(100.0));

    auto constant = cross_validate(configured(), nlohmann::json{{"constant", 1}}, data, 5, 1);
    CHECK(constant.mean == doctest::Approx(100.0 / 3.0).epsilon(1e-9));
    double sum = 0;
    for (double s : constant.fold_scores) sum += s;
    CHECK(std::abs(constant.mean - sum / 5) < 1e-12);
    CHECK(constant.mean_summary.macro_f1 == doctest::Approx(constant.mean));

    try {
        cross_validate(configured(), nlohmann::json{{"fail", true}}, data, 5, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("fold") != std::string::npos);
    }
}

TEST_CASE("CV mean is the mean of fold scores for a real model") {
    Matrix x;
    std::vector<std::size_t> y;
    testsupport::separable_blobs(200, 3, 2, x, y, 1.0);
    LabeledData d{x, y, 2};
    auto cv = cross_validate(detector_factory(ModelKind::Svm, 1), nlohmann::json{{"c", 0.1}}, d, 5, 4);
    double sum = 0;
    for (double s : cv.fold_scores) sum += s;
    CHECK(std::abs(cv.mean - sum / 5.0) < 1e-12);
}

TEST_CASE("grid search selection") {
    auto data = oracle_data(60);
    std::vector<nlohmann::json> one{{{"constant", 1}}};
    CHECK(grid_search(configured(), one, data, 5, 1).best_config == one[0]);

    std::vector<nlohmann::json> grid{{{"constant", 0}}, {{"good", true}}, {{"constant", 1}}};
    auto r = grid_search(configured(), grid, data, 5, 1);
    CHECK(r.best_config == grid[1]);
    CHECK(r.best_score == doctest::Approx(100.0));
    CHECK(r.points.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.points[i].config == grid[i]);

    // Ties go to the earliest point, also when evaluated concurrently.
    std::vector<nlohmann::json> tied{{{"constant", 1}}, {{"constant", 0}}};
    CHECK(grid_search(configured(), tied, data, 5, 1, 2).best_config == tied[0]);
    auto parallel = grid_search(configured(), grid, data, 5, 1, 3);
    CHECK(parallel.best_config == grid[1]);
    for (std::size_t i = 0; i < 3; ++i) CHECK(parallel.points[i].cv.fold_scores == r.points[i].cv.fold_scores);
    std::set<std::string> members;
    for (const auto& g : grid) members.insert(g.dump());
    CHECK(members.count(parallel.best_config.dump()) == 1);
}

TEST_CASE("grid search recovers the C that separates a known margin") {
    // Two clusters whose margin survives only light regularisation: with
    // tiny C the squared hinge weight collapses and everything lands on one side.
    auto rng = make_rng(9);
    std::normal_distribution<double> z(0, 0.02);
    LabeledData d;
    d.x = Matrix(200, 1);
    d.y.resize(200);
    for (std::size_t i = 0; i < 200; ++i) {
        d.y[i] = i < 150 ? 0 : 1;  // imbalanced, so a collapsed model favours class 0
        d.x(i, 0) = (d.y[i] ? 0.06 : -0.06) + z(rng);
    }
    std::vector<nlohmann::json> grid{{{"c", 0.0001}}, {{"c", 10.0}}};
    auto r = grid_search(detector_factory(ModelKind::Svm, 1), grid, d, 5, 2);
    CHECK(r.best_config == grid[1]);
    CHECK(r.points[1].cv.mean > r.points[0].cv.mean);
}

TEST_CASE("default grids span the configured ranges") {
    CHECK(default_grid(ModelKind::Svm).size() == 3);
    CHECK(default_grid(ModelKind::Xgboost).size() == 54);
    CHECK(default_grid(ModelKind::Lightgbm).size() == 27);
    CHECK(default_grid(ModelKind::Iforest, 0.05).size() == 6);
    CHECK(default_grid(ModelKind::Iforest, 0.01).size() == 8);
    CHECK(default_grid(ModelKind::Lof, 0.03).size() == 16);
    CHECK(default_grid(ModelKind::Drl).size() == 1);
    for (const auto& g : default_grid(ModelKind::Iforest, 0.9)) {
        CHECK(g.at("contamination").get<double>() <= 0.05);
        CHECK(g.at("contamination").get<double>() >= 0.001);
    }
}

TEST_CASE("final evaluation") {
    auto data = oracle_data(40, 3);
    auto fe = final_evaluate(configured(), nlohmann::json{{"good", true}}, data, data);
    CHECK(fe.run.scores.macro_f1 == doctest::Approx(100.0));
    CHECK(fe.run.phase == Phase::Eval);
    CHECK(fe.report.accuracy == 1.0);
}

TEST_CASE("experiments on a synthetic capture") {
    auto flows = testsupport::make_capture({{"Benign", 120}, {"POAHPS", 80}, {"C&C", 20}});
    SplitSpec spec;
    auto bin = prepare_capture(flows, Scenario::Binary, spec);
    auto multi = prepare_capture(flows, Scenario::Multiclass, spec);

    ExperimentOptions opt;
    opt.folds = 3;
    opt.grid = std::vector<nlohmann::json>{{{"c", 0.1}}};
    auto svm = run_experiment(ModelKind::Svm, "synthetic", Scenario::Multiclass, multi, opt);
    REQUIRE(svm.runs.size() == 2);
    CHECK(svm.runs[0].phase == Phase::Cv);
    CHECK(svm.runs[1].phase == Phase::Eval);
    CHECK(svm.runs[1].dataset == "synthetic");
    CHECK(svm.class_names == std::vector<std::string>{"Benign", "C&C", "POAHPS"});

    ExperimentOptions drl_opt;
    auto drl = run_experiment(ModelKind::Drl, "synthetic", Scenario::Binary, bin, drl_opt);
    REQUIRE(drl.runs.size() == 1);
    CHECK(drl.runs[0].phase == Phase::Eval);

    CHECK_THROWS_AS(run_experiment(ModelKind::Iforest, "synthetic", Scenario::Multiclass, multi, opt),
                    InvalidArgument);

    // Unsupervised detectors see a training set with a 5% malicious share.
    auto rows = model_training_rows(ModelKind::Iforest, bin.train, 1);
    std::size_t malicious = 0;
    for (auto r : rows) malicious += bin.train.binary_targets[r];
    CHECK(static_cast<double>(malicious) / static_cast<double>(rows.size()) <= 0.05 + 1.0 / rows.size());
    CHECK(model_training_rows(ModelKind::Svm, bin.train, 1).size() == bin.train.size());

    ExperimentOptions lof_opt;
    lof_opt.folds = 3;
    auto lof = run_experiment(ModelKind::Lof, "synthetic", Scenario::Binary, bin, lof_opt);
    for (const auto& p : lof.search->points) CHECK(p.config.at("k").get<std::size_t>() < rows.size());
}

TEST_CASE("published reference cells") {
    CHECK(published_score("lightgbm", "34-1", Scenario::Binary, Phase::Eval) == 99.76);
    CHECK(published_score("drl", "44-1", Scenario::Binary, Phase::Eval) == 75.39);
    CHECK(published_score("iforest", "34-1", Scenario::Binary, Phase::Eval) == 75.08);
    CHECK(published_score("drl", "44-1", Scenario::Multiclass, Phase::Eval) == 88.38);
    CHECK_FALSE(published_score("drl", "44-1", Scenario::Binary, Phase::Cv).has_value());
    CHECK(published_datasets().size() == 9);
    CHECK(published_datasets().front().total_samples > 0);
}

TEST_CASE("comparison against the reference") {
    std::vector<EvalRun> runs{make_run("lightgbm", "34-1", Scenario::Binary, Phase::Eval, 99.5)};
    auto deltas = compare_to_reference(runs);
    bool found = false, missing_flagged = false;
    for (const auto& d : deltas) {
        if (d.model == "lightgbm" && d.dataset == "34-1" && d.scenario == Scenario::Binary && d.phase == Phase::Eval) {
            found = true;
            CHECK(d.status() == "ok");
            CHECK(*d.delta == doctest::Approx(-0.26).epsilon(1e-9));
        }
        if (d.model == "drl" && d.dataset == "44-1" && d.phase == Phase::Eval && d.scenario == Scenario::Binary) {
            CHECK(d.status() == "missing_run");
            CHECK(*d.reference == 75.39);
            missing_flagged = true;
        }
    }
    CHECK(found);
    CHECK(missing_flagged);

    std::vector<ScoreCell> a{{"svm", "x", Scenario::Binary, Phase::Eval, 90.0},
                             {"svm", "y", Scenario::Binary, Phase::Eval, 80.0}};
    std::vector<ScoreCell> b{{"svm", "x", Scenario::Binary, Phase::Eval, 95.5},
                             {"lof", "y", Scenario::Binary, Phase::Eval, 70.0}};
    auto ab = compare_cells(a, b);
    auto ba = compare_cells(b, a);
    REQUIRE(ab.size() == ba.size());
    for (std::size_t i = 0; i < ab.size(); ++i) {
        CHECK(ab[i].model == ba[i].model);
        CHECK(ab[i].delta.has_value() == ba[i].delta.has_value());
        if (ab[i].delta) CHECK(*ab[i].delta == -*ba[i].delta);
    }
    std::vector<ScoreCell> none;
    auto only_runs = compare_cells(a, none);
    for (const auto& d : only_runs) CHECK(d.status() == "no_reference");
}

TEST_CASE("runs CSV round trip") {
    std::vector<EvalRun> runs{make_run("svm", "42-1", Scenario::Binary, Phase::Cv, 100.0),
                              make_run("xgboost", "44-1", Scenario::Multiclass, Phase::Eval, 97.123456789)};
    runs[1].config = nlohmann::json{{"split_method", "exact"}, {"learning_rate", 0.01}};
    std::ostringstream out;
    write_runs_csv(out, runs);
    std::istringstream in(out.str());
    auto back = read_runs_csv(in);
    REQUIRE(back.size() == 2);
    CHECK(back[1].config == runs[1].config);
    CHECK(back[1].scores.macro_f1 == runs[1].scores.macro_f1);
    CHECK(back[0].phase == Phase::Cv);
    CHECK(back[1].scenario == Scenario::Multiclass);
}

TEST_CASE("report rendering") {
    testsupport::TempDir dir;
    std::vector<EvalRun> one{make_run("svm", "42-1", Scenario::Binary, Phase::Eval, 99.0)};
    auto deltas = compare_to_reference(one);
    render_report(one, deltas, dir.path / "a");
    auto csv = slurp(dir.path / "a" / "runs.csv");
    CHECK(count(csv, "\n") == 2);
    CHECK(count(slurp(dir.path / "a" / "binary.svg"), "<title>") == 1);
    CHECK(count(slurp(dir.path / "a" / "multiclass.svg"), "<title>") == 0);
    for (auto name : {"runs.csv", "deltas.csv", "report.md", "binary.svg", "multiclass.svg"})
        CHECK(fs::exists(dir.path / "a" / name));

    std::vector<EvalRun> full;
    const std::vector<std::string> models{"svm", "xgboost", "lightgbm", "iforest", "lof", "drl"};
    for (const auto& m : models)
        for (const auto& d : published_datasets()) full.push_back(make_run(m, d.name, Scenario::Binary, Phase::Eval, 90));
    auto full_deltas = compare_to_reference(full);
    render_report(full, full_deltas, dir.path / "b");
    render_report(full, full_deltas, dir.path / "c");
    for (auto name : {"runs.csv", "deltas.csv", "report.md", "binary.svg", "multiclass.svg"})
        CHECK(slurp(dir.path / "b" / name) == slurp(dir.path / "c" / name));
    auto svg = slurp(dir.path / "b" / "binary.svg");
    CHECK(count(svg, "<title>") == 54);
    CHECK(count(svg, "text-anchor=\"middle\"") == 6);

    std::vector<EvalRun> empty;
    CHECK_THROWS_AS(render_report(empty, full_deltas, dir.path / "d"), InvalidArgument);
}

TEST_CASE("model files reload to the same predictions") {
    Matrix x;
    std::vector<std::size_t> y;
    testsupport::separable_blobs(120, 3, 5, x, y);
    for (auto kind : all_model_kinds()) {
        auto det = make_detector(kind, nlohmann::json::object(), 3);
        if (kind == ModelKind::Lof) det = make_detector(kind, nlohmann::json{{"k", 10}}, 3);
        det->fit(x, y, 2);
        auto file = model_file_json(*det, Scenario::Binary, {"Benign", "Malicious"});
        auto loaded = load_model_file(nlohmann::json::parse(file.dump()));
        INFO(to_string(kind));
        CHECK(loaded.detector->predict(x) == det->predict(x));
        CHECK(loaded.class_names == std::vector<std::string>{"Benign", "Malicious"});
        CHECK(parse_model_kind(to_string(kind)) == kind);
    }
}
