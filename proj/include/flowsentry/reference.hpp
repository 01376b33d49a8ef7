#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowsentry/harness.hpp"
#include "flowsentry/preprocess.hpp"

namespace flowsentry {

/// One published score: F1 for binary cells, macro-F1 for multi-class cells.
struct ScoreCell {
    std::string model;  // ModelKind key
    std::string dataset;
    Scenario scenario = Scenario::Binary;
    Phase phase = Phase::Eval;
    double score = 0.0;
};

/// The published cross-validation and evaluation scores.
const std::vector<ScoreCell>& published_scores();

std::optional<double> published_score(std::string_view model, std::string_view dataset, Scenario scenario,
                                      Phase phase);

struct DatasetProfile {
    std::string name;
    std::string malware_type;
    std::size_t total_samples = 0;
    std::vector<std::pair<std::string, std::size_t>> malicious_classes;
};

/// Class make-up of the nine published datasets.
const std::vector<DatasetProfile>& published_datasets();

/// Position in the published dataset order; unknown names sort after, by name.
std::size_t dataset_rank(std::string_view dataset);

/// Datasets of the multi-class scenario.
bool multiclass_dataset(std::string_view dataset);

struct DeltaRow {
    std::string model;
    std::string dataset;
    Scenario scenario = Scenario::Binary;
    Phase phase = Phase::Eval;
    std::optional<double> produced;
    std::optional<double> reference;
    std::optional<double> delta;  // produced - reference

    /// "ok", "missing_run" or "no_reference".
    std::string status() const;
};

/// Cell-wise comparison over the union of both cell sets, in canonical order.
std::vector<DeltaRow> compare_cells(std::span<const ScoreCell> produced, std::span<const ScoreCell> reference);

/// Macro-F1 of every run as a cell.
std::vector<ScoreCell> run_cells(std::span<const EvalRun> runs);

std::vector<DeltaRow> compare_to_reference(std::span<const EvalRun> runs);

}  // namespace flowsentry
