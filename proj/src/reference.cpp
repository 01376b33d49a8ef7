#include "flowsentry/reference.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "flowsentry/detector.hpp"

namespace flowsentry {

namespace {

const std::vector<std::string> kBinaryDatasets = {"1-1-full", "1-1-large", "1-1-medium", "1-1-small", "20-1",
                                                  "21-1",     "34-1",      "42-1",       "44-1"};
const std::vector<std::string> kMulticlassDatasets = {"1-1-full", "1-1-large", "34-1", "42-1", "44-1"};

void add_rows(std::vector<ScoreCell>& out, Scenario scenario, Phase phase, const std::vector<std::string>& datasets,
              const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
    for (const auto& [model, scores] : rows) {
        for (std::size_t d = 0; d < datasets.size(); ++d) out.push_back({model, datasets[d], scenario, phase, scores[d]});
    }
}

std::vector<ScoreCell> build_scores() {
    std::vector<ScoreCell> cells;
    add_rows(cells, Scenario::Binary, Phase::Cv, kBinaryDatasets,
             {{"svm", {100, 100, 100, 100, 100, 97.99, 99.30, 100, 97.84}},
              {"xgboost", {99.99, 99.99, 99.99, 99.99, 100, 89.98, 98.14, 100, 97.84}},
              {"lightgbm", {100, 99.99, 99.99, 99.99, 100, 97.99, 99.73, 100, 97.84}},
              {"iforest", {76.62, 71.88, 71.82, 73.36, 93.75, 68.15, 88.20, 100, 88.79}},
              {"lof", {62.18, 61.88, 61.03, 80.64, 93.54, 91.66, 97.43, 79.97, 87.89}}});
    add_rows(cells, Scenario::Binary, Phase::Eval, kBinaryDatasets,
             {{"svm", {100, 100, 100, 100, 95.43, 94.42, 99.43, 100, 100}},
              {"xgboost", {99.99, 99.99, 99.99, 99.99, 95.43, 94.42, 98.84, 100, 96.28}},
              {"lightgbm", {100, 99.99, 100, 100, 95.43, 94.42, 99.76, 100, 96.28}},
              {"iforest", {96.46, 94.80, 94.68, 95.37, 100, 89.95, 75.08, 100, 90.91}},
              {"lof", {53.46, 53.40, 54.66, 80.18, 89.95, 87.45, 96.80, 49.96, 100}},
              {"drl", {99.91, 99.91, 99.97, 99.98, 78.49, 83.28, 98.65, 83.31, 75.39}}});
    add_rows(cells, Scenario::Multiclass, Phase::Cv, kMulticlassDatasets,
             {{"svm", {66.67, 80.00, 95.67, 59.97, 97.66}},
              {"xgboost", {66.66, 80.00, 97.30, 46.67, 96.44}},
              {"lightgbm", {66.66, 80.00, 98.77, 59.99, 97.66}}});
    add_rows(cells, Scenario::Multiclass, Phase::Eval, kMulticlassDatasets,
             {{"svm", {66.67, 66.67, 95.89, 33.31, 100}},
              {"xgboost", {66.66, 66.66, 95.59, 33.33, 100}},
              {"lightgbm", {66.66, 66.67, 99.64, 66.65, 100}},
              {"drl", {66.64, 66.64, 63.75, 33.38, 88.38}}});
    return cells;
}

std::size_t model_rank(std::string_view model) {
    const auto& kinds = all_model_kinds();
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (model == to_string(kinds[i])) return i;
    }
    return kinds.size();
}

using CellKey = std::tuple<int, int, std::size_t, std::string, std::size_t, std::string>;

CellKey key_of(const ScoreCell& c) {
    return {static_cast<int>(c.scenario), static_cast<int>(c.phase), model_rank(c.model), c.model,
            dataset_rank(c.dataset), c.dataset};
}

}  // namespace

const std::vector<ScoreCell>& published_scores() {
    static const std::vector<ScoreCell> cells = build_scores();
    return cells;
}

std::optional<double> published_score(std::string_view model, std::string_view dataset, Scenario scenario,
                                      Phase phase) {
    for (const auto& c : published_scores()) {
        if (c.model == model && c.dataset == dataset && c.scenario == scenario && c.phase == phase) return c.score;
    }
    return std::nullopt;
}

const std::vector<DatasetProfile>& published_datasets() {
    static const std::vector<DatasetProfile> profiles = {
        {"1-1-full", "Hide and Seek", 1008749, {{"POAHPS", 539465}, {"C&C", 8}}},
        {"1-1-large", "Hide and Seek", 400000, {{"POAHPS", 199996}, {"C&C", 4}}},
        {"1-1-medium", "Hide and Seek", 200000, {{"POAHPS", 99999}, {"C&C", 1}}},
        {"1-1-small", "Hide and Seek", 20000, {{"POAHPS", 10000}}},
        {"20-1", "Torii", 3210, {{"C&C-Torii", 16}}},
        {"21-1", "Torii", 3287, {{"C&C-Torii", 14}}},
        {"34-1", "Mirai", 23146, {{"DDoS", 14394}, {"C&C", 6706}, {"POAHPS", 122}}},
        {"42-1", "Trojan", 4427, {{"FileDownload", 3}, {"C&C-FD", 3}}},
        {"44-1", "Mirai", 238, {{"C&C", 14}, {"C&C-FD", 11}, {"DDoS", 1}}},
    };
    return profiles;
}

std::size_t dataset_rank(std::string_view dataset) {
    for (std::size_t i = 0; i < kBinaryDatasets.size(); ++i) {
        if (dataset == kBinaryDatasets[i]) return i;
    }
    return kBinaryDatasets.size();
}

bool multiclass_dataset(std::string_view dataset) {
    return std::find(kMulticlassDatasets.begin(), kMulticlassDatasets.end(), dataset) != kMulticlassDatasets.end();
}

std::string DeltaRow::status() const {
    if (!produced) return "missing_run";
    if (!reference) return "no_reference";
    return "ok";
}

std::vector<DeltaRow> compare_cells(std::span<const ScoreCell> produced, std::span<const ScoreCell> reference) {
    std::map<CellKey, DeltaRow> rows;
    auto row_for = [&](const ScoreCell& c) -> DeltaRow& {
        auto [it, inserted] = rows.try_emplace(key_of(c));
        if (inserted) {
            it->second.model = c.model;
            it->second.dataset = c.dataset;
            it->second.scenario = c.scenario;
            it->second.phase = c.phase;
        }
        return it->second;
    };
    for (const auto& c : produced) row_for(c).produced = c.score;
    for (const auto& c : reference) row_for(c).reference = c.score;
    std::vector<DeltaRow> out;
    out.reserve(rows.size());
    for (auto& [key, row] : rows) {
        if (row.produced && row.reference) row.delta = *row.produced - *row.reference;
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<ScoreCell> run_cells(std::span<const EvalRun> runs) {
    std::vector<ScoreCell> cells;
    for (const auto& r : runs) cells.push_back({r.model, r.dataset, r.scenario, r.phase, r.scores.macro_f1});
    return cells;
}

std::vector<DeltaRow> compare_to_reference(std::span<const EvalRun> runs) {
    auto cells = run_cells(runs);
    return compare_cells(cells, published_scores());
}

}  // namespace flowsentry
