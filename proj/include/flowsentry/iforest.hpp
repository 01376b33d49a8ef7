#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"
#include "flowsentry/random.hpp"

namespace flowsentry {

/// Internal nodes send x[feature] < split to the left child; leaves keep the
/// number of training rows that reached them.
struct IsolationNode {
    int feature = -1;
    double split = 0.0;
    int left = -1;
    int right = -1;
    std::size_t size = 0;

    bool is_leaf() const noexcept { return left < 0; }
};

struct IsolationTree {
    std::vector<IsolationNode> nodes;  // nodes[0] is the root

    /// Edges to the leaf plus c(leaf size).
    double path_length(std::span<const double> row) const;
    int depth() const;
};

struct IForestConfig {
    std::size_t n_estimators = 100;
    std::size_t max_samples = 250;  // psi
    double contamination = 0.05;

    void validate() const;
};

struct IForestModel {
    std::vector<IsolationTree> trees;
    IForestConfig config;
    std::size_t n_features = 0;
    double threshold = 0.0;
};

/// Average unsuccessful-search path length of a binary search tree on n
/// points; 0 for n <= 1.
double expected_path_length_c(double n);

/// ceil(log2(psi)).
int isolation_height_limit(std::size_t psi);

/// Isolates the given rows; recursion stops at the height limit, one row, or
/// rows that are identical on every feature.
IsolationTree build_isolation_tree(const Matrix& x, std::span<const std::size_t> rows, int height_limit, Rng& rng);

/// 2^(-E[h(x)] / c(psi)).
double anomaly_score(const IForestModel& model, std::span<const double> row);
std::vector<double> anomaly_scores(const IForestModel& model, const Matrix& x);

/// Fits the trees and the training-score threshold.
IForestModel iforest_fit(const Matrix& x, const IForestConfig& config, std::uint64_t seed);

/// 1 for anomaly (score above threshold), 0 otherwise.
std::vector<std::size_t> iforest_predict(const IForestModel& model, const Matrix& x);

struct IForestFit {
    IForestModel model;
    std::vector<std::size_t> predictions;  // on the training rows
};

IForestFit iforest_fit_predict(const Matrix& x, const IForestConfig& config, std::uint64_t seed);

nlohmann::json to_json(const IForestConfig& config);
IForestConfig iforest_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IForestModel& model);
IForestModel iforest_from_json(const nlohmann::json& j);

}  // namespace flowsentry
