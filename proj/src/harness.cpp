#include "flowsentry/harness.hpp"

#include <algorithm>
#include <chrono>
#include <tuple>

#include "flowsentry/error.hpp"
#include "flowsentry/parallel.hpp"
#include "flowsentry/reference.hpp"

namespace flowsentry {

namespace {

double elapsed_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<nlohmann::json> cartesian(const std::vector<std::pair<std::string, std::vector<nlohmann::json>>>& axes) {
    std::vector<nlohmann::json> out = {nlohmann::json::object()};
    for (const auto& [name, values] : axes) {
        std::vector<nlohmann::json> next;
        for (const auto& base : out) {
            for (const auto& v : values) {
                auto point = base;
                point[name] = v;
                next.push_back(std::move(point));
            }
        }
        out = std::move(next);
    }
    return out;
}

std::vector<nlohmann::json> contamination_axis(double observed) {
    std::vector<double> values = {0.001, 0.0255, 0.05};
    const double clipped = std::clamp(observed, 0.001, 0.05);
    if (std::find(values.begin(), values.end(), clipped) == values.end()) values.push_back(clipped);
    std::sort(values.begin(), values.end());
    return {values.begin(), values.end()};
}

double malicious_share(std::span<const std::size_t> binary) {
    if (binary.empty()) return 0.0;
    const auto m = std::count(binary.begin(), binary.end(), std::size_t{1});
    return static_cast<double>(m) / static_cast<double>(binary.size());
}

// LOF needs k <= n - 1 on the smallest CV training split.
std::vector<nlohmann::json> feasible_lof_grid(const std::vector<nlohmann::json>& grid, const LabeledData& train,
                                              const ExperimentOptions& options) {
    auto folds = make_folds(train.y, options.folds, options.seed);
    std::size_t largest_fold = 0;
    for (const auto& f : folds) largest_fold = std::max(largest_fold, f.size());
    const std::size_t smallest_train = train.y.size() - largest_fold;
    std::vector<nlohmann::json> out;
    for (const auto& point : grid) {
        if (point.value("k", std::size_t{35}) + 1 <= smallest_train) out.push_back(point);
    }
    if (out.empty()) throw DataError("training set too small for every LOF neighbour count in the grid");
    return out;
}

}  // namespace

DetectorFactory detector_factory(ModelKind kind, std::uint64_t seed) {
    return [kind, seed](const nlohmann::json& config) { return make_detector(kind, config, seed); };
}

LabeledData labeled(const EncodedDataset& data, Scenario scenario) {
    LabeledData out;
    out.x = data.features;
    out.y = data.targets(scenario);
    out.n_classes = data.scenario_class_names(scenario).size();
    return out;
}

LabeledData subset(const LabeledData& data, std::span<const std::size_t> rows) {
    return {data.x.select_rows(rows), select(data.y, rows), data.n_classes};
}

ScoreSummary summarize(const MetricReport& r) {
    return {100.0 * r.accuracy, 100.0 * r.macro_precision, 100.0 * r.macro_recall, 100.0 * r.macro_fpr,
            100.0 * r.macro_f1};
}

CvResult cross_validate(const DetectorFactory& factory, const nlohmann::json& config, const LabeledData& data,
                        std::size_t k, std::uint64_t seed) {
    auto folds = make_folds(data.y, k, seed);
    CvResult result;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train_rows;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_rows.begin(), train_rows.end());
        auto train = subset(data, train_rows);
        auto held = subset(data, folds[f]);
        ScoreSummary s;
        try {
            auto detector = factory(config);
            detector->fit(train.x, train.y, train.n_classes);
            s = summarize(evaluate_predictions(held.y, detector->predict(held.x), data.n_classes));
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("fold " + std::to_string(f) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("fold " + std::to_string(f) + ": " + e.what());
        }
        result.fold_scores.push_back(s.macro_f1);
        result.mean_summary.accuracy += s.accuracy;
        result.mean_summary.macro_precision += s.macro_precision;
        result.mean_summary.macro_recall += s.macro_recall;
        result.mean_summary.macro_fpr += s.macro_fpr;
        result.mean_summary.macro_f1 += s.macro_f1;
    }
    const double n = static_cast<double>(folds.size());
    result.mean_summary.accuracy /= n;
    result.mean_summary.macro_precision /= n;
    result.mean_summary.macro_recall /= n;
    result.mean_summary.macro_fpr /= n;
    result.mean_summary.macro_f1 /= n;
    result.mean = result.mean_summary.macro_f1;
    return result;
}

GridSearchResult grid_search(const DetectorFactory& factory, const std::vector<nlohmann::json>& grid,
                             const LabeledData& data, std::size_t k, std::uint64_t seed, int jobs) {
    if (grid.empty()) throw InvalidArgument("grid search needs at least one grid point");
    GridSearchResult result;
    result.points.resize(grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t i) {
        result.points[i] = {grid[i], cross_validate(factory, grid[i], data, k, seed)};
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.points.size(); ++i) {
        if (result.points[i].cv.mean > result.points[best].cv.mean) best = i;
    }
    result.best_config = result.points[best].config;
    result.best_score = result.points[best].cv.mean;
    return result;
}

std::vector<nlohmann::json> default_grid(ModelKind kind, double observed_contamination) {
    switch (kind) {
        case ModelKind::Svm: return cartesian({{"c", {0.001, 0.01, 0.1}}});
        case ModelKind::Xgboost:
            return cartesian({{"split_method", {"exact", "histogram"}},
                              {"min_child_weight", {1.2, 50.6, 100.0}},
                              {"n_estimators", {60, 70, 80}},
                              {"learning_rate", {0.001, 0.0055, 0.01}}});
        case ModelKind::Lightgbm:
            return cartesian({{"min_child_samples", {2, 1001, 2000}},
                              {"n_estimators", {60, 80, 100}},
                              {"learning_rate", {0.001, 0.0205, 0.04}}});
        case ModelKind::Iforest:
            return cartesian({{"max_samples", {100, 250}}, {"contamination", contamination_axis(observed_contamination)}});
        case ModelKind::Lof:
            return cartesian({{"k", {35, 100, 250, 520}}, {"contamination", contamination_axis(observed_contamination)}});
        case ModelKind::Drl: return {nlohmann::json::object()};
    }
    return {nlohmann::json::object()};
}

std::string_view to_string(Phase phase) noexcept { return phase == Phase::Cv ? "cv" : "eval"; }

Phase parse_phase(std::string_view text) {
    if (text == "cv") return Phase::Cv;
    if (text == "eval") return Phase::Eval;
    throw InvalidArgument("unknown phase '" + std::string(text) + "'");
}

FinalEvaluation final_evaluate(const DetectorFactory& factory, const nlohmann::json& config,
                               const LabeledData& train, const LabeledData& eval) {
    const auto start = std::chrono::steady_clock::now();
    FinalEvaluation out;
    out.detector = factory(config);
    out.detector->fit(train.x, train.y, train.n_classes);
    out.report = evaluate_predictions(eval.y, out.detector->predict(eval.x), train.n_classes);
    out.run.model = std::string(to_string(out.detector->kind()));
    out.run.phase = Phase::Eval;
    out.run.config = config;
    out.run.scores = summarize(out.report);
    out.run.wall_time_s = elapsed_since(start);
    return out;
}

std::vector<std::size_t> model_training_rows(ModelKind kind, const EncodedDataset& train, std::uint64_t seed) {
    if (is_unsupervised(kind)) return subsample_contamination(train.binary_targets, kUnsupervisedContamination, seed);
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
}

ExperimentResult run_experiment(ModelKind kind, const std::string& dataset, Scenario scenario,
                                const PreparedData& data, const ExperimentOptions& options) {
    if (!supports(kind, scenario)) {
        throw InvalidArgument(std::string(to_string(kind)) + " supports only the binary scenario");
    }
    ExperimentResult out;
    out.class_names = data.train.scenario_class_names(scenario);
    auto rows = model_training_rows(kind, data.train, options.seed);
    auto full_train = labeled(data.train, scenario);
    auto train = rows.size() == data.train.size() ? full_train : subset(full_train, rows);
    auto eval = labeled(data.eval, scenario);
    auto factory = detector_factory(kind, options.seed);
    auto grid = options.grid ? *options.grid : default_grid(kind, malicious_share(select(data.train.binary_targets, rows)));

    if (kind == ModelKind::Lof) grid = feasible_lof_grid(grid, train, options);

    nlohmann::json chosen = grid.front();
    if (kind != ModelKind::Drl) {
        const auto start = std::chrono::steady_clock::now();
        auto search = grid_search(factory, grid, train, options.folds, options.seed, options.jobs);
        EvalRun cv;
        cv.model = std::string(to_string(kind));
        cv.dataset = dataset;
        cv.scenario = scenario;
        cv.phase = Phase::Cv;
        cv.config = search.best_config;
        for (const auto& p : search.points) {
            if (p.config == search.best_config) {
                cv.scores = p.cv.mean_summary;
                break;
            }
        }
        cv.wall_time_s = elapsed_since(start);
        chosen = search.best_config;
        out.runs.push_back(std::move(cv));
        out.search = std::move(search);
    }
    auto final_eval = final_evaluate(factory, chosen, train, eval);
    final_eval.run.dataset = dataset;
    final_eval.run.scenario = scenario;
    out.runs.push_back(std::move(final_eval.run));
    out.detector = std::move(final_eval.detector);
    return out;
}

void sort_runs(std::vector<EvalRun>& runs) {
    auto model_rank = [](const std::string& m) {
        const auto& kinds = all_model_kinds();
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            if (m == to_string(kinds[i])) return i;
        }
        return kinds.size();
    };
    std::stable_sort(runs.begin(), runs.end(), [&](const EvalRun& a, const EvalRun& b) {
        return std::make_tuple(static_cast<int>(a.scenario), static_cast<int>(a.phase), model_rank(a.model), a.model,
                               dataset_rank(a.dataset), a.dataset) <
               std::make_tuple(static_cast<int>(b.scenario), static_cast<int>(b.phase), model_rank(b.model), b.model,
                               dataset_rank(b.dataset), b.dataset);
    });
}

}  // namespace flowsentry
