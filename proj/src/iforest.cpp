#include "flowsentry/iforest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowsentry/error.hpp"
#include "flowsentry/threshold.hpp"

namespace flowsentry {

namespace {

constexpr double kEulerGamma = 0.5772156649;

struct Pending {
    int node;
    int depth;
    std::vector<std::size_t> rows;
};

std::vector<std::size_t> draw_sample(std::size_t n, std::size_t psi, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(psi);
    if (psi > n) {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < psi; ++i) out.push_back(pick(rng));
        return out;
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < psi; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(all[i], all[pick(rng)]);
        out.push_back(all[i]);
    }
    return out;
}

}  // namespace

double IsolationTree::path_length(std::span<const double> row) const {
    std::size_t i = 0;
    double edges = 0.0;
    while (!nodes[i].is_leaf()) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right);
        edges += 1.0;
    }
    return edges + expected_path_length_c(static_cast<double>(nodes[i].size));
}

int IsolationTree::depth() const {
    std::vector<std::pair<std::size_t, int>> stack = {{0, 0}};
    int deepest = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (!nodes[i].is_leaf()) {
            stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
        }
    }
    return deepest;
}

void IForestConfig::validate() const {
    if (n_estimators == 0) throw InvalidArgument("iForest needs at least one tree");
    if (max_samples < 2) throw InvalidArgument("iForest max_samples must be at least 2");
    check_contamination(contamination);
}

double expected_path_length_c(double n) {
    if (n <= 1.0) return 0.0;
    return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

int isolation_height_limit(std::size_t psi) {
    int h = 0;
    while ((std::size_t{1} << h) < psi) ++h;
    return h;
}

IsolationTree build_isolation_tree(const Matrix& x, std::span<const std::size_t> rows, int height_limit, Rng& rng) {
    IsolationTree tree;
    tree.nodes.push_back({});
    std::vector<Pending> stack;
    stack.push_back({0, 0, std::vector<std::size_t>(rows.begin(), rows.end())});
    const std::size_t nf = x.cols();
    std::vector<double> lo(nf), hi(nf);
    std::vector<std::size_t> candidates;
    while (!stack.empty()) {
        Pending p = std::move(stack.back());
        stack.pop_back();
        auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
        node.size = p.rows.size();
        if (p.depth >= height_limit || p.rows.size() <= 1) continue;

        std::fill(lo.begin(), lo.end(), std::numeric_limits<double>::infinity());
        std::fill(hi.begin(), hi.end(), -std::numeric_limits<double>::infinity());
        for (auto r : p.rows) {
            for (std::size_t f = 0; f < nf; ++f) {
                lo[f] = std::min(lo[f], x(r, f));
                hi[f] = std::max(hi[f], x(r, f));
            }
        }
        candidates.clear();
        for (std::size_t f = 0; f < nf; ++f) {
            if (hi[f] > lo[f]) candidates.push_back(f);
        }
        if (candidates.empty()) continue;

        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        const auto f = candidates[pick(rng)];
        std::uniform_real_distribution<double> value(lo[f], hi[f]);
        double split = value(rng);
        while (!(split > lo[f] && split < hi[f])) split = value(rng);

        std::vector<std::size_t> left, right;
        for (auto r : p.rows) (x(r, f) < split ? left : right).push_back(r);
        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        auto& parent = tree.nodes[static_cast<std::size_t>(p.node)];
        parent.feature = static_cast<int>(f);
        parent.split = split;
        parent.left = left_id;
        parent.right = left_id + 1;
        stack.push_back({left_id + 1, p.depth + 1, std::move(right)});
        stack.push_back({left_id, p.depth + 1, std::move(left)});
    }
    return tree;
}

double anomaly_score(const IForestModel& model, std::span<const double> row) {
    if (row.size() != model.n_features) throw InvalidArgument("iForest input has the wrong feature count");
    double total = 0.0;
    for (const auto& t : model.trees) total += t.path_length(row);
    const double mean = total / static_cast<double>(model.trees.size());
    return std::pow(2.0, -mean / expected_path_length_c(static_cast<double>(model.config.max_samples)));
}

std::vector<double> anomaly_scores(const IForestModel& model, const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = anomaly_score(model, x.row(i));
    return out;
}

IForestModel iforest_fit(const Matrix& x, const IForestConfig& config, std::uint64_t seed) {
    config.validate();
    if (x.rows() < 2) throw InvalidArgument("iForest needs at least 2 training rows");
    IForestModel model;
    model.config = config;
    model.n_features = x.cols();
    const int limit = isolation_height_limit(config.max_samples);
    for (std::size_t t = 0; t < config.n_estimators; ++t) {
        auto rng = make_rng(seed, t);
        auto sample = draw_sample(x.rows(), config.max_samples, rng);
        model.trees.push_back(build_isolation_tree(x, sample, limit, rng));
    }
    auto scores = anomaly_scores(model, x);
    model.threshold = contamination_threshold(scores, config.contamination);
    return model;
}

std::vector<std::size_t> iforest_predict(const IForestModel& model, const Matrix& x) {
    std::vector<std::size_t> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = anomaly_score(model, x.row(i)) > model.threshold ? 1 : 0;
    return out;
}

IForestFit iforest_fit_predict(const Matrix& x, const IForestConfig& config, std::uint64_t seed) {
    IForestFit fit{iforest_fit(x, config, seed), {}};
    fit.predictions = iforest_predict(fit.model, x);
    return fit;
}

nlohmann::json to_json(const IForestConfig& c) {
    return {{"n_estimators", c.n_estimators}, {"max_samples", c.max_samples}, {"contamination", c.contamination}};
}

IForestConfig iforest_config_from_json(const nlohmann::json& j) {
    IForestConfig c;
    c.n_estimators = j.value("n_estimators", c.n_estimators);
    c.max_samples = j.value("max_samples", c.max_samples);
    c.contamination = j.value("contamination", c.contamination);
    c.validate();
    return c;
}

nlohmann::json to_json(const IForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"size", n.size}});
            } else {
                nodes.push_back({{"feature", n.feature}, {"split", n.split}, {"left", n.left}, {"right", n.right},
                                 {"size", n.size}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    return {{"config", to_json(model.config)}, {"n_features", model.n_features}, {"threshold", model.threshold},
            {"trees", std::move(trees)}};
}

IForestModel iforest_from_json(const nlohmann::json& j) {
    IForestModel model;
    model.config = iforest_config_from_json(j.at("config"));
    model.n_features = j.at("n_features").get<std::size_t>();
    model.threshold = j.at("threshold").get<double>();
    for (const auto& t : j.at("trees")) {
        IsolationTree tree;
        for (const auto& n : t) {
            IsolationNode node;
            node.size = n.at("size").get<std::size_t>();
            if (n.contains("feature")) {
                node.feature = n.at("feature").get<int>();
                node.split = n.at("split").get<double>();
                node.left = n.at("left").get<int>();
                node.right = n.at("right").get<int>();
            }
            tree.nodes.push_back(node);
        }
        if (tree.nodes.empty()) throw DataError("iForest tree JSON has no nodes");
        model.trees.push_back(std::move(tree));
    }
    if (model.trees.empty()) throw DataError("iForest JSON has no trees");
    return model;
}

}  // namespace flowsentry
