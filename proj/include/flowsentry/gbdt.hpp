#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"

namespace flowsentry {

enum class TreeGrowth { LevelWise, LeafWise };
enum class SplitMethod { Exact, Histogram, Goss };

std::string to_string(TreeGrowth growth);
std::string to_string(SplitMethod method);

struct GbdtConfig {
    TreeGrowth growth = TreeGrowth::LevelWise;
    SplitMethod split_method = SplitMethod::Exact;
    int max_depth = 5;
    int max_leaves = 25;  // leaf-wise only
    double feature_subsample = 0.7;
    double min_loss_reduction = 0.01;  // gamma
    double l2_lambda = 1.0;
    double min_child_weight = 1.2;       // hessian sum per child
    std::size_t min_child_samples = 1;   // rows per child
    int n_estimators = 60;
    double learning_rate = 0.01;
    double goss_a = 0.2;
    double goss_b = 0.1;
    int histogram_bins = 256;

    /// Throws InvalidArgument when a knob is out of range.
    void validate() const;
};

/// Level-wise exact configuration (the XGBoost-style preset).
GbdtConfig level_wise_preset();
/// Leaf-wise GOSS configuration (the LightGBM-style preset).
GbdtConfig leaf_wise_preset();

nlohmann::json to_json(const GbdtConfig& config);
GbdtConfig gbdt_config_from_json(const nlohmann::json& j);

/// Internal nodes send x[feature] <= threshold to the left child. Leaves hold
/// their learning-rate-scaled output. count/hessian are training statistics.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::size_t count = 0;
    double hessian = 0.0;

    bool is_leaf() const noexcept { return left < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> row) const;
    int depth() const;
    std::size_t leaf_count() const;
    bool operator==(const RegressionTree&) const = default;
};

struct GbdtEnsemble {
    std::vector<RegressionTree> trees;  // round-major: trees[round * outputs + k]
    std::size_t outputs = 1;            // 1 for binary, NC for multi-class
    std::size_t n_features = 0;
    double base_score = 0.0;
    GbdtConfig config;
};

struct GradientPairs {
    std::vector<double> g;
    std::vector<double> h;
};

/// Binary cross-entropy: g = p - y, h = p(1 - p).
GradientPairs logistic_gradients(std::span<const double> probabilities, std::span<const double> targets);

/// Softmax cross-entropy for class k: g = p_k - [y == k], h = p_k(1 - p_k).
GradientPairs softmax_gradients(const Matrix& probabilities, std::span<const std::size_t> labels, std::size_t k);

double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma);
double leaf_weight(double g, double h, double lambda);

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

struct SplitSettings {
    SplitMethod method = SplitMethod::Exact;  // Goss scans like Exact
    int bins = 256;
    double lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 0.0;
    std::size_t min_child_samples = 1;
};

/// Best split of the node rows over the candidate features, or nothing when
/// the best gain is not positive or no boundary satisfies the child limits.
std::optional<SplitCandidate> find_best_split(const Matrix& x, std::span<const std::size_t> rows,
                                              std::span<const double> g, std::span<const double> h,
                                              std::span<const std::size_t> features, const SplitSettings& settings);

struct GossSample {
    std::vector<std::size_t> indices;  // ascending
    std::vector<double> weights;       // aligned with indices
};

/// Keeps the top ceil(a n) rows by |g| and ceil(b n) random others weighted
/// (1 - a) / b.
GossSample goss_sample(std::span<const double> g, double a, double b, std::uint64_t seed);

/// Grows one tree on the given rows (g, h already weighted), restricted to
/// the candidate features.
RegressionTree grow_tree(const Matrix& x, std::span<const std::size_t> rows, std::span<const double> g,
                         std::span<const double> h, std::span<const std::size_t> features,
                         const GbdtConfig& config);

/// n_classes == 2 trains a single-output logistic model; more classes train
/// one tree per class per round under softmax.
GbdtEnsemble gbdt_train(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes,
                        const GbdtConfig& config, std::uint64_t seed);

struct GbdtPrediction {
    Matrix probabilities;  // n x 1 (P(class 1)) for binary, n x NC otherwise
    std::vector<std::size_t> labels;
};

GbdtPrediction gbdt_predict(const GbdtEnsemble& ensemble, const Matrix& x);

/// Mean cross-entropy with probabilities clamped to [1e-15, 1 - 1e-15].
double gbdt_log_loss(const GbdtEnsemble& ensemble, const Matrix& x, std::span<const std::size_t> y);

nlohmann::json to_json(const GbdtEnsemble& ensemble);
GbdtEnsemble gbdt_from_json(const nlohmann::json& j);

}  // namespace flowsentry
