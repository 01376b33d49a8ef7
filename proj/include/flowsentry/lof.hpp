#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"

namespace flowsentry {

struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;

    bool operator==(const Neighbor&) const = default;
};

/// Exact Euclidean k-NN index. Results are distance-ascending with ties
/// broken by the lower index.
class KdTree {
public:
    KdTree() = default;
    explicit KdTree(const Matrix& points, std::size_t leaf_size = 30);

    /// k nearest points; `exclude` removes one index from consideration.
    std::vector<Neighbor> knn(std::span<const double> query, std::size_t k,
                              std::optional<std::size_t> exclude = std::nullopt) const;

    std::size_t size() const noexcept { return points_ ? points_->rows() : 0; }

private:
    struct Node {
        std::size_t begin = 0;
        std::size_t end = 0;
        int left = -1;
        int right = -1;
        std::vector<double> lo;
        std::vector<double> hi;
    };

    int build(std::size_t begin, std::size_t end);

    const Matrix* points_ = nullptr;
    std::size_t leaf_size_ = 30;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

struct LofConfig {
    std::size_t k = 35;
    double contamination = 0.05;
};

/// Novelty-mode LOF: queries are scored against training neighborhoods only.
/// Holds a pointer-owning index, so the model is movable but not copyable.
struct LofModel {
    LofModel() = default;
    LofModel(LofModel&&) = default;
    LofModel& operator=(LofModel&&) = default;
    LofModel(const LofModel&) = delete;
    LofModel& operator=(const LofModel&) = delete;

    std::unique_ptr<Matrix> points;
    KdTree index;
    LofConfig config;
    std::vector<double> k_distance;
    std::vector<double> lrd;
    double threshold = 0.0;
};

inline constexpr double kLrdSentinel = 1e9;

/// k divided by the summed reachability distances from the point to its
/// neighbors; kLrdSentinel when that sum is 0.
double local_reachability_density(const LofModel& model, std::span<const Neighbor> neighbors);

double lof_score(const LofModel& model, std::span<const double> query);
std::vector<double> lof_scores(const LofModel& model, const Matrix& x);

/// Builds the index, the k-distances and densities (each training point
/// excluded from its own neighborhood) and the training-score threshold.
LofModel lof_fit(const Matrix& x, const LofConfig& config);

/// Training-set LOF scores, self excluded.
std::vector<double> lof_training_scores(const LofModel& model);

/// 1 for anomaly (score above threshold), 0 otherwise.
std::vector<std::size_t> lof_predict(const LofModel& model, const Matrix& x);

struct LofFit {
    LofModel model;
    std::vector<std::size_t> predictions;  // on the training rows
};

LofFit lof_fit_predict(const Matrix& x, const LofConfig& config);

nlohmann::json to_json(const LofConfig& config);
LofConfig lof_config_from_json(const nlohmann::json& j);
/// Points, config and threshold; the index and densities are rebuilt on load.
nlohmann::json to_json(const LofModel& model);
LofModel lof_from_json(const nlohmann::json& j);

}  // namespace flowsentry
