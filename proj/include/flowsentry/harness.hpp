#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsentry/detector.hpp"
#include "flowsentry/matrix.hpp"
#include "flowsentry/metrics.hpp"
#include "flowsentry/preprocess.hpp"

namespace flowsentry {

/// Builds a fresh, unfitted detector for one configuration.
using DetectorFactory = std::function<std::unique_ptr<Detector>(const nlohmann::json& config)>;

DetectorFactory detector_factory(ModelKind kind, std::uint64_t seed);

/// Labelled rows a model is trained or scored on.
struct LabeledData {
    Matrix x;
    std::vector<std::size_t> y;
    std::size_t n_classes = 2;
};

LabeledData labeled(const EncodedDataset& data, Scenario scenario);
LabeledData subset(const LabeledData& data, std::span<const std::size_t> rows);

/// Metric values in percent, as in the result tables.
struct ScoreSummary {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_fpr = 0.0;
    double macro_f1 = 0.0;
};

ScoreSummary summarize(const MetricReport& report);

struct CvResult {
    std::vector<double> fold_scores;  // macro-F1 per fold, percent
    double mean = 0.0;                // arithmetic mean of fold_scores
    ScoreSummary mean_summary;        // every metric averaged over folds
};

/// k-fold stratified cross-validation scored by macro-F1. Training errors are
/// rethrown with the fold index in the message.
CvResult cross_validate(const DetectorFactory& factory, const nlohmann::json& config, const LabeledData& data,
                        std::size_t k, std::uint64_t seed);

struct GridPointResult {
    nlohmann::json config;
    CvResult cv;
};

struct GridSearchResult {
    nlohmann::json best_config;
    double best_score = 0.0;
    std::vector<GridPointResult> points;  // grid order
};

/// Cross-validates every grid point (up to `jobs` at once) and returns the
/// highest mean; ties go to the earliest point.
GridSearchResult grid_search(const DetectorFactory& factory, const std::vector<nlohmann::json>& grid,
                             const LabeledData& data, std::size_t k, std::uint64_t seed, int jobs = 1);

/// Endpoints and midpoints of the configured hyperparameter ranges.
/// `observed_contamination` (the malicious share of the unsupervised training
/// set) is added, clipped to [0.001, 0.05], to the contamination axis.
std::vector<nlohmann::json> default_grid(ModelKind kind, double observed_contamination = 0.05);

enum class Phase { Cv, Eval };
std::string_view to_string(Phase phase) noexcept;
Phase parse_phase(std::string_view text);

struct EvalRun {
    std::string model;    // ModelKind key
    std::string dataset;
    Scenario scenario = Scenario::Binary;
    Phase phase = Phase::Eval;
    nlohmann::json config;
    ScoreSummary scores;
    double wall_time_s = 0.0;
};

struct FinalEvaluation {
    EvalRun run;
    MetricReport report;
    std::unique_ptr<Detector> detector;
};

/// Retrains on all of `train` and scores `eval`.
FinalEvaluation final_evaluate(const DetectorFactory& factory, const nlohmann::json& config,
                               const LabeledData& train, const LabeledData& eval);

/// Malicious share kept in the training set of the unsupervised detectors.
inline constexpr double kUnsupervisedContamination = 0.05;

struct ExperimentOptions {
    std::uint64_t seed = 1;
    int jobs = 1;
    std::size_t folds = 5;
    /// Replaces the default grid when set.
    std::optional<std::vector<nlohmann::json>> grid;
};

struct ExperimentResult {
    std::vector<EvalRun> runs;  // cv (when run) then eval
    std::optional<GridSearchResult> search;
    std::unique_ptr<Detector> detector;
    std::vector<std::string> class_names;
};

/// Grid search with CV then final evaluation for one model on one prepared
/// dataset. Unsupervised models train on the contamination-subsampled
/// training set; DRL skips CV and uses the first grid point.
ExperimentResult run_experiment(ModelKind kind, const std::string& dataset, Scenario scenario,
                                const PreparedData& data, const ExperimentOptions& options);

/// Training rows an unsupervised model sees (all rows for other models).
std::vector<std::size_t> model_training_rows(ModelKind kind, const EncodedDataset& train, std::uint64_t seed);

/// Canonical ordering: scenario, phase, model, then dataset.
void sort_runs(std::vector<EvalRun>& runs);

}  // namespace flowsentry
