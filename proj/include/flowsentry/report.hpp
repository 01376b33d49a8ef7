#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flowsentry/harness.hpp"
#include "flowsentry/reference.hpp"

namespace flowsentry {

/// Columns: model, dataset, scenario, phase, config, accuracy,
/// macro_precision, macro_recall, macro_fpr, macro_f1, wall_time_s.
void write_runs_csv(std::ostream& out, std::span<const EvalRun> runs);
std::vector<EvalRun> read_runs_csv(std::istream& in);

void write_deltas_csv(std::ostream& out, std::span<const DeltaRow> deltas);
std::string render_markdown(std::span<const EvalRun> runs, std::span<const DeltaRow> deltas);
std::string render_delta_table(std::span<const DeltaRow> deltas);

/// Grouped bars of the evaluation-phase macro-F1: one group per model, one
/// bar per dataset.
std::string render_svg(std::span<const EvalRun> runs, Scenario scenario);

/// Writes runs.csv, deltas.csv, report.md, binary.svg and multiclass.svg.
void render_report(std::span<const EvalRun> runs, std::span<const DeltaRow> deltas,
                   const std::filesystem::path& out_dir);

}  // namespace flowsentry
