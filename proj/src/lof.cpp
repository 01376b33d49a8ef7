#include "flowsentry/lof.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "flowsentry/error.hpp"
#include "flowsentry/threshold.hpp"

namespace flowsentry {

namespace {

struct Candidate {
    double dist2;
    std::size_t index;
    bool operator<(const Candidate& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index); }
};

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

KdTree::KdTree(const Matrix& points, std::size_t leaf_size) : points_(&points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    order_.resize(points.rows());
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, order_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
    const auto& x = *points_;
    const std::size_t d = x.cols();
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.assign(d, std::numeric_limits<double>::infinity());
    node.hi.assign(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t f = 0; f < d; ++f) {
            node.lo[f] = std::min(node.lo[f], x(order_[i], f));
            node.hi[f] = std::max(node.hi[f], x(order_[i], f));
        }
    }
    std::size_t dim = 0;
    double spread = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
        if (node.hi[f] - node.lo[f] > spread) {
            spread = node.hi[f] - node.lo[f];
            dim = f;
        }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
    if (end - begin <= leaf_size_ || spread == 0.0) return id;

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](auto a, auto b) { return x(a, dim) < x(b, dim); });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

std::vector<Neighbor> KdTree::knn(std::span<const double> query, std::size_t k,
                                  std::optional<std::size_t> exclude) const {
    const std::size_t available = size() - (exclude && *exclude < size() ? 1 : 0);
    if (k > available) throw InvalidArgument("k exceeds the number of indexed points");
    if (k == 0) return {};
    const auto& x = *points_;
    if (query.size() != x.cols()) throw InvalidArgument("k-NN query has the wrong dimension");

    std::priority_queue<Candidate> heap;  // worst candidate on top
    auto box_distance = [&](const Node& n) {
        double s = 0.0;
        for (std::size_t f = 0; f < query.size(); ++f) {
            double d = 0.0;
            if (query[f] < n.lo[f]) d = n.lo[f] - query[f];
            else if (query[f] > n.hi[f]) d = query[f] - n.hi[f];
            s += d * d;
        }
        return s;
    };
    // Only prune a box whose lower bound is strictly worse than the current
    // k-th candidate, so equal-distance points with lower indices still win.
    auto prunable = [&](double bound) { return heap.size() == k && bound > heap.top().dist2; };

    std::vector<std::pair<double, int>> stack = {{box_distance(nodes_[0]), 0}};
    while (!stack.empty()) {
        auto [bound, id] = stack.back();
        stack.pop_back();
        if (prunable(bound)) continue;
        const auto& node = nodes_[static_cast<std::size_t>(id)];
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const auto idx = order_[i];
                if (exclude && idx == *exclude) continue;
                Candidate c{squared_distance(query, x.row(idx)), idx};
                if (heap.size() < k) {
                    heap.push(c);
                } else if (c < heap.top()) {
                    heap.pop();
                    heap.push(c);
                }
            }
            continue;
        }
        const double bl = box_distance(nodes_[static_cast<std::size_t>(node.left)]);
        const double br = box_distance(nodes_[static_cast<std::size_t>(node.right)]);
        // Push the farther child first so the nearer one is explored first.
        if (bl <= br) {
            stack.emplace_back(br, node.right);
            stack.emplace_back(bl, node.left);
        } else {
            stack.emplace_back(bl, node.left);
            stack.emplace_back(br, node.right);
        }
    }
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = {heap.top().index, std::sqrt(heap.top().dist2)};
        heap.pop();
    }
    return out;
}

double local_reachability_density(const LofModel& model, std::span<const Neighbor> neighbors) {
    double sum = 0.0;
    for (const auto& n : neighbors) sum += std::max(model.k_distance[n.index], n.distance);
    if (sum == 0.0) return kLrdSentinel;
    return static_cast<double>(neighbors.size()) / sum;
}

namespace {

double lof_from_neighbors(const LofModel& model, std::span<const Neighbor> neighbors) {
    const double own = local_reachability_density(model, neighbors);
    double mean = 0.0;
    for (const auto& n : neighbors) mean += model.lrd[n.index];
    mean /= static_cast<double>(neighbors.size());
    return mean / own;
}

}  // namespace

double lof_score(const LofModel& model, std::span<const double> query) {
    auto neighbors = model.index.knn(query, model.config.k);
    return lof_from_neighbors(model, neighbors);
}

std::vector<double> lof_scores(const LofModel& model, const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = lof_score(model, x.row(i));
    return out;
}

namespace {

void fit_densities(LofModel& model) {
    const auto& x = *model.points;
    const std::size_t n = x.rows();
    const std::size_t k = model.config.k;
    std::vector<std::vector<Neighbor>> neighbors(n);
    model.k_distance.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        neighbors[i] = model.index.knn(x.row(i), k, i);
        model.k_distance[i] = neighbors[i].back().distance;
    }
    model.lrd.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) model.lrd[i] = local_reachability_density(model, neighbors[i]);
}

void check_fit_inputs(const Matrix& x, const LofConfig& config) {
    check_contamination(config.contamination);
    if (config.k == 0) throw InvalidArgument("LOF k must be positive");
    if (x.rows() < 2 || config.k > x.rows() - 1) {
        throw InvalidArgument("LOF k must not exceed the training size minus one");
    }
}

}  // namespace

std::vector<double> lof_training_scores(const LofModel& model) {
    const auto& x = *model.points;
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto neighbors = model.index.knn(x.row(i), model.config.k, i);
        out[i] = lof_from_neighbors(model, neighbors);
    }
    return out;
}

LofModel lof_fit(const Matrix& x, const LofConfig& config) {
    check_fit_inputs(x, config);
    LofModel model;
    model.config = config;
    model.points = std::make_unique<Matrix>(x);
    model.index = KdTree(*model.points);
    fit_densities(model);
    auto scores = lof_training_scores(model);
    model.threshold = contamination_threshold(scores, config.contamination);
    return model;
}

std::vector<std::size_t> lof_predict(const LofModel& model, const Matrix& x) {
    std::vector<std::size_t> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = lof_score(model, x.row(i)) > model.threshold ? 1 : 0;
    return out;
}

LofFit lof_fit_predict(const Matrix& x, const LofConfig& config) {
    LofFit fit{lof_fit(x, config), {}};
    auto scores = lof_training_scores(fit.model);
    fit.predictions.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) fit.predictions[i] = scores[i] > fit.model.threshold ? 1 : 0;
    return fit;
}

nlohmann::json to_json(const LofConfig& c) { return {{"k", c.k}, {"contamination", c.contamination}}; }

LofConfig lof_config_from_json(const nlohmann::json& j) {
    LofConfig c;
    c.k = j.value("k", c.k);
    c.contamination = j.value("contamination", c.contamination);
    if (c.k == 0) throw InvalidArgument("LOF k must be positive");
    check_contamination(c.contamination);
    return c;
}

nlohmann::json to_json(const LofModel& model) {
    const auto& x = *model.points;
    nlohmann::json points = nlohmann::json::array();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        points.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"config", to_json(model.config)}, {"threshold", model.threshold}, {"points", std::move(points)}};
}

LofModel lof_from_json(const nlohmann::json& j) {
    LofModel model;
    model.config = lof_config_from_json(j.at("config"));
    model.threshold = j.at("threshold").get<double>();
    auto rows = j.at("points").get<std::vector<std::vector<double>>>();
    model.points = std::make_unique<Matrix>(Matrix::from_rows(rows));
    check_fit_inputs(*model.points, model.config);
    model.index = KdTree(*model.points);
    fit_densities(model);
    return model;
}

}  // namespace flowsentry
