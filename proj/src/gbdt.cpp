#include "flowsentry/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowsentry/error.hpp"
#include "flowsentry/random.hpp"

namespace flowsentry {

namespace {

constexpr double kProbabilityClamp = 1e-15;

using RowList = std::vector<std::uint32_t>;

class SplitTracker {
public:
    void offer(std::size_t feature, double threshold, double gain) {
        if (gain > 0.0 && (!best_ || gain > best_->gain)) best_ = SplitCandidate{feature, threshold, gain};
    }
    std::optional<SplitCandidate> result() const { return best_; }

private:
    std::optional<SplitCandidate> best_;
};

bool children_allowed(double hl, std::size_t cl, double hr, std::size_t cr, const SplitSettings& s) {
    return hl >= s.min_child_weight && hr >= s.min_child_weight && cl >= s.min_child_samples &&
           cr >= s.min_child_samples && cl > 0 && cr > 0;
}

double midpoint(double lo, double hi) {
    double mid = lo + (hi - lo) / 2.0;
    return mid < hi ? mid : lo;
}

// Rows are sorted ascending by x[feature].
void scan_exact(const Matrix& x, const RowList& sorted, std::size_t feature, std::span<const double> g,
                std::span<const double> h, double total_g, double total_h, const SplitSettings& s,
                SplitTracker& tracker) {
    const std::size_t m = sorted.size();
    double gl = 0.0;
    double hl = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const auto r = sorted[i];
        gl += g[r];
        hl += h[r];
        const double v = x(r, feature);
        const double next = x(sorted[i + 1], feature);
        if (v == next) continue;
        const std::size_t cl = i + 1;
        const double gr = total_g - gl;
        const double hr = total_h - hl;
        if (!children_allowed(hl, cl, hr, m - cl, s)) continue;
        tracker.offer(feature, midpoint(v, next), split_gain(gl, hl, gr, hr, s.lambda, s.gamma));
    }
}

// Bin j holds values in (lo + j w, lo + (j + 1) w]; bin 0 also holds lo.
std::size_t bin_of(double v, double lo, double width, std::size_t bins) {
    auto upper = [&](std::size_t j) { return lo + static_cast<double>(j + 1) * width; };
    auto j = static_cast<std::size_t>(std::clamp(std::floor((v - lo) / width), 0.0, static_cast<double>(bins - 1)));
    while (j > 0 && v <= upper(j - 1)) --j;
    while (j + 1 < bins && v > upper(j)) ++j;
    return j;
}

void scan_histogram(const Matrix& x, const RowList& sorted, std::size_t feature, std::span<const double> g,
                    std::span<const double> h, double total_g, double total_h, const SplitSettings& s,
                    SplitTracker& tracker) {
    const double lo = x(sorted.front(), feature);
    const double hi = x(sorted.back(), feature);
    if (!(hi > lo)) return;
    const auto bins = static_cast<std::size_t>(s.bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<double> hg(bins, 0.0), hh(bins, 0.0);
    std::vector<std::size_t> hc(bins, 0);
    for (auto r : sorted) {
        auto j = bin_of(x(r, feature), lo, width, bins);
        hg[j] += g[r];
        hh[j] += h[r];
        ++hc[j];
    }
    double gl = 0.0;
    double hl = 0.0;
    std::size_t cl = 0;
    const std::size_t m = sorted.size();
    for (std::size_t j = 0; j + 1 < bins; ++j) {
        gl += hg[j];
        hl += hh[j];
        cl += hc[j];
        if (cl == 0 || cl == m || hc[j] == 0) continue;
        const double gr = total_g - gl;
        const double hr = total_h - hl;
        if (!children_allowed(hl, cl, hr, m - cl, s)) continue;
        tracker.offer(feature, lo + static_cast<double>(j + 1) * width,
                      split_gain(gl, hl, gr, hr, s.lambda, s.gamma));
    }
}

struct BuildNode {
    int id = 0;
    int depth = 0;
    std::vector<RowList> sorted;  // one list per candidate feature
    double g = 0.0;
    double h = 0.0;
    std::optional<SplitCandidate> best;

    std::size_t count() const { return sorted.empty() ? 0 : sorted.front().size(); }
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> g, std::span<const double> h,
                std::span<const std::size_t> features, const GbdtConfig& config)
        : x_(x), g_(g), h_(h), features_(features.begin(), features.end()), config_(config),
          go_left_(x.rows(), 0) {
        settings_.method = config.split_method == SplitMethod::Histogram ? SplitMethod::Histogram : SplitMethod::Exact;
        settings_.bins = config.histogram_bins;
        settings_.lambda = config.l2_lambda;
        settings_.gamma = config.min_loss_reduction;
        settings_.min_child_weight = config.min_child_weight;
        settings_.min_child_samples = config.min_child_samples;
    }

    RegressionTree build(std::vector<RowList> root_sorted) {
        BuildNode root;
        root.sorted = std::move(root_sorted);
        sum_node(root);
        root.id = add_leaf(root);
        if (config_.growth == TreeGrowth::LevelWise) {
            grow_level_wise(std::move(root));
        } else {
            grow_leaf_wise(std::move(root));
        }
        return std::move(tree_);
    }

private:
    void sum_node(BuildNode& node) const {
        node.g = 0.0;
        node.h = 0.0;
        if (node.sorted.empty()) return;
        for (auto r : node.sorted.front()) {
            node.g += g_[r];
            node.h += h_[r];
        }
    }

    int add_leaf(const BuildNode& node) {
        TreeNode leaf;
        leaf.value = config_.learning_rate * leaf_weight(node.g, node.h, config_.l2_lambda);
        leaf.count = node.count();
        leaf.hessian = node.h;
        tree_.nodes.push_back(leaf);
        return static_cast<int>(tree_.nodes.size() - 1);
    }

    std::optional<SplitCandidate> best_split(const BuildNode& node) const {
        if (node.depth >= config_.max_depth || node.count() < 2) return std::nullopt;
        SplitTracker tracker;
        for (std::size_t k = 0; k < features_.size(); ++k) {
            if (settings_.method == SplitMethod::Histogram) {
                scan_histogram(x_, node.sorted[k], features_[k], g_, h_, node.g, node.h, settings_, tracker);
            } else {
                scan_exact(x_, node.sorted[k], features_[k], g_, h_, node.g, node.h, settings_, tracker);
            }
        }
        return tracker.result();
    }

    std::pair<BuildNode, BuildNode> split(BuildNode& node, const SplitCandidate& split) {
        for (auto r : node.sorted.front()) go_left_[r] = x_(r, split.feature) <= split.threshold ? 1 : 0;
        BuildNode left;
        BuildNode right;
        left.depth = right.depth = node.depth + 1;
        left.sorted.resize(node.sorted.size());
        right.sorted.resize(node.sorted.size());
        for (std::size_t k = 0; k < node.sorted.size(); ++k) {
            for (auto r : node.sorted[k]) (go_left_[r] ? left : right).sorted[k].push_back(r);
            RowList().swap(node.sorted[k]);
        }
        sum_node(left);
        sum_node(right);
        left.id = add_leaf(left);
        right.id = add_leaf(right);
        auto& parent = tree_.nodes[static_cast<std::size_t>(node.id)];
        parent.feature = static_cast<int>(split.feature);
        parent.threshold = split.threshold;
        parent.value = 0.0;
        parent.left = left.id;
        parent.right = right.id;
        return {std::move(left), std::move(right)};
    }

    void grow_level_wise(BuildNode root) {
        std::vector<BuildNode> level;
        level.push_back(std::move(root));
        while (!level.empty()) {
            std::vector<BuildNode> next;
            for (auto& node : level) {
                auto candidate = best_split(node);
                if (!candidate) continue;
                auto [l, r] = split(node, *candidate);
                next.push_back(std::move(l));
                next.push_back(std::move(r));
            }
            level = std::move(next);
        }
    }

    void grow_leaf_wise(BuildNode root) {
        std::vector<BuildNode> open;
        root.best = best_split(root);
        open.push_back(std::move(root));
        int leaves = 1;
        while (leaves < config_.max_leaves) {
            std::optional<std::size_t> pick;
            for (std::size_t i = 0; i < open.size(); ++i) {
                if (!open[i].best) continue;
                if (!pick || open[i].best->gain > open[*pick].best->gain ||
                    (open[i].best->gain == open[*pick].best->gain && open[i].id < open[*pick].id)) {
                    pick = i;
                }
            }
            if (!pick) break;
            BuildNode node = std::move(open[*pick]);
            open.erase(open.begin() + static_cast<std::ptrdiff_t>(*pick));
            auto [l, r] = split(node, *node.best);
            l.best = best_split(l);
            r.best = best_split(r);
            open.push_back(std::move(l));
            open.push_back(std::move(r));
            ++leaves;
        }
    }

    const Matrix& x_;
    std::span<const double> g_;
    std::span<const double> h_;
    std::vector<std::size_t> features_;
    const GbdtConfig& config_;
    SplitSettings settings_;
    std::vector<char> go_left_;
    RegressionTree tree_;
};

std::vector<RowList> sort_rows_by_features(const Matrix& x, std::span<const std::size_t> rows,
                                           std::span<const std::size_t> features) {
    std::vector<RowList> sorted(features.size());
    for (std::size_t k = 0; k < features.size(); ++k) {
        auto& list = sorted[k];
        list.reserve(rows.size());
        for (auto r : rows) list.push_back(static_cast<std::uint32_t>(r));
        const auto f = features[k];
        std::stable_sort(list.begin(), list.end(), [&](auto a, auto b) { return x(a, f) < x(b, f); });
    }
    return sorted;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void softmax_row(std::span<const double> scores, std::span<double> out) {
    double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        out[k] = std::exp(scores[k] - mx);
        sum += out[k];
    }
    for (auto& v : out) v /= sum;
}

Matrix probabilities_from_scores(const Matrix& scores) {
    Matrix p(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        if (scores.cols() == 1) {
            p(i, 0) = sigmoid(scores(i, 0));
        } else {
            softmax_row(scores.row(i), p.row(i));
        }
    }
    return p;
}

std::vector<std::size_t> labels_from_probabilities(const Matrix& p) {
    std::vector<std::size_t> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        if (p.cols() == 1) {
            out[i] = p(i, 0) > 0.5 ? 1 : 0;
            continue;
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < p.cols(); ++k) {
            if (p(i, k) > p(i, best)) best = k;
        }
        out[i] = best;
    }
    return out;
}

std::vector<std::size_t> sample_features(std::size_t n_features, double fraction, Rng& rng) {
    auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_features)));
    count = std::clamp<std::size_t>(count, 1, n_features);
    std::vector<std::size_t> all(n_features);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_features - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

std::string to_string(TreeGrowth growth) { return growth == TreeGrowth::LevelWise ? "level_wise" : "leaf_wise"; }

std::string to_string(SplitMethod method) {
    switch (method) {
        case SplitMethod::Exact: return "exact";
        case SplitMethod::Histogram: return "histogram";
        case SplitMethod::Goss: return "goss";
    }
    return "exact";
}

namespace {

bool valid_goss_fractions(double a, double b) {
    if (!(a > 0.0 && a <= 1.0)) return false;
    return a == 1.0 || (b > 0.0 && a + b <= 1.0 + 1e-12);
}

}  // namespace

void GbdtConfig::validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw InvalidArgument("learning_rate must lie in (0, 1]");
    if (!(feature_subsample > 0.0 && feature_subsample <= 1.0)) {
        throw InvalidArgument("feature_subsample must lie in (0, 1]");
    }
    if (max_depth < 1) throw InvalidArgument("max_depth must be at least 1");
    if (growth == TreeGrowth::LeafWise && max_leaves < 2) throw InvalidArgument("max_leaves must be at least 2");
    if (n_estimators < 0) throw InvalidArgument("n_estimators must be non-negative");
    if (l2_lambda < 0.0 || min_loss_reduction < 0.0 || min_child_weight < 0.0) {
        throw InvalidArgument("lambda, gamma and min_child_weight must be non-negative");
    }
    if (split_method == SplitMethod::Histogram && histogram_bins < 2) {
        throw InvalidArgument("histogram_bins must be at least 2");
    }
    if (split_method == SplitMethod::Goss && !valid_goss_fractions(goss_a, goss_b)) {
        throw InvalidArgument("GOSS fractions need a > 0, b > 0, a + b <= 1 (b is ignored when a = 1)");
    }
}

GbdtConfig level_wise_preset() {
    GbdtConfig c;
    c.growth = TreeGrowth::LevelWise;
    c.split_method = SplitMethod::Exact;
    c.max_depth = 5;
    c.feature_subsample = 0.7;
    c.min_loss_reduction = 0.01;
    c.l2_lambda = 1.0;
    c.min_child_weight = 1.2;
    c.min_child_samples = 1;
    c.n_estimators = 60;
    c.learning_rate = 0.01;
    return c;
}

GbdtConfig leaf_wise_preset() {
    GbdtConfig c;
    c.growth = TreeGrowth::LeafWise;
    c.split_method = SplitMethod::Goss;
    c.max_depth = 5;
    c.max_leaves = 25;
    c.feature_subsample = 0.7;
    c.min_loss_reduction = 0.01;
    c.l2_lambda = 1.0;
    c.min_child_weight = 1e-3;
    c.min_child_samples = 2;
    c.n_estimators = 60;
    c.learning_rate = 0.04;
    c.goss_a = 0.2;
    c.goss_b = 0.1;
    return c;
}

nlohmann::json to_json(const GbdtConfig& c) {
    return {
        {"growth", to_string(c.growth)},
        {"split_method", to_string(c.split_method)},
        {"max_depth", c.max_depth},
        {"max_leaves", c.max_leaves},
        {"feature_subsample", c.feature_subsample},
        {"min_loss_reduction", c.min_loss_reduction},
        {"l2_lambda", c.l2_lambda},
        {"min_child_weight", c.min_child_weight},
        {"min_child_samples", c.min_child_samples},
        {"n_estimators", c.n_estimators},
        {"learning_rate", c.learning_rate},
        {"goss_a", c.goss_a},
        {"goss_b", c.goss_b},
        {"histogram_bins", c.histogram_bins},
    };
}

GbdtConfig gbdt_config_from_json(const nlohmann::json& j) {
    GbdtConfig c;
    auto growth = j.value("growth", std::string("level_wise"));
    if (growth == "level_wise") c.growth = TreeGrowth::LevelWise;
    else if (growth == "leaf_wise") c.growth = TreeGrowth::LeafWise;
    else throw InvalidArgument("unknown tree growth '" + growth + "'");
    c = c.growth == TreeGrowth::LevelWise ? level_wise_preset() : leaf_wise_preset();
    auto method = j.value("split_method", to_string(c.split_method));
    if (method == "exact") c.split_method = SplitMethod::Exact;
    else if (method == "histogram") c.split_method = SplitMethod::Histogram;
    else if (method == "goss") c.split_method = SplitMethod::Goss;
    else throw InvalidArgument("unknown split method '" + method + "'");
    c.max_depth = j.value("max_depth", c.max_depth);
    c.max_leaves = j.value("max_leaves", c.max_leaves);
    c.feature_subsample = j.value("feature_subsample", c.feature_subsample);
    c.min_loss_reduction = j.value("min_loss_reduction", c.min_loss_reduction);
    c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
    c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
    c.min_child_samples = j.value("min_child_samples", c.min_child_samples);
    c.n_estimators = j.value("n_estimators", c.n_estimators);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.goss_a = j.value("goss_a", c.goss_a);
    c.goss_b = j.value("goss_b", c.goss_b);
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    c.validate();
    return c;
}

double RegressionTree::predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

int RegressionTree::depth() const {
    if (nodes.empty()) return 0;
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

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

GradientPairs logistic_gradients(std::span<const double> probabilities, std::span<const double> targets) {
    if (probabilities.size() != targets.size()) throw InvalidArgument("gradient inputs differ in length");
    GradientPairs out;
    out.g.resize(probabilities.size());
    out.h.resize(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = probabilities[i];
        out.g[i] = p - targets[i];
        out.h[i] = p * (1.0 - p);
    }
    return out;
}

GradientPairs softmax_gradients(const Matrix& probabilities, std::span<const std::size_t> labels, std::size_t k) {
    if (probabilities.rows() != labels.size()) throw InvalidArgument("gradient inputs differ in length");
    GradientPairs out;
    out.g.resize(labels.size());
    out.h.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = probabilities(i, k);
        out.g[i] = p - (labels[i] == k ? 1.0 : 0.0);
        out.h[i] = p * (1.0 - p);
    }
    return out;
}

double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
    const double g = gl + gr;
    const double h = hl + hr;
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

double leaf_weight(double g, double h, double lambda) {
    const double den = h + lambda;
    return den > 0.0 ? -g / den : 0.0;
}

std::optional<SplitCandidate> find_best_split(const Matrix& x, std::span<const std::size_t> rows,
                                              std::span<const double> g, std::span<const double> h,
                                              std::span<const std::size_t> features, const SplitSettings& settings) {
    if (rows.size() < 2) return std::nullopt;
    if (settings.method == SplitMethod::Histogram && settings.bins < 2) {
        throw InvalidArgument("histogram split needs at least 2 bins");
    }
    double total_g = 0.0;
    double total_h = 0.0;
    for (auto r : rows) {
        total_g += g[r];
        total_h += h[r];
    }
    auto sorted = sort_rows_by_features(x, rows, features);
    SplitTracker tracker;
    for (std::size_t k = 0; k < features.size(); ++k) {
        if (settings.method == SplitMethod::Histogram) {
            scan_histogram(x, sorted[k], features[k], g, h, total_g, total_h, settings, tracker);
        } else {
            scan_exact(x, sorted[k], features[k], g, h, total_g, total_h, settings, tracker);
        }
    }
    return tracker.result();
}

GossSample goss_sample(std::span<const double> g, double a, double b, std::uint64_t seed) {
    if (!valid_goss_fractions(a, b)) {
        throw InvalidArgument("GOSS fractions need a > 0, b > 0, a + b <= 1 (b is ignored when a = 1)");
    }
    const std::size_t n = g.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return std::abs(g[i]) > std::abs(g[j]); });

    const auto top = std::min(n, static_cast<std::size_t>(std::ceil(a * static_cast<double>(n) - 1e-9)));
    std::vector<std::pair<std::size_t, double>> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < top; ++i) kept.emplace_back(order[i], 1.0);

    const std::size_t rest = n - top;
    if (rest > 0) {
        const auto draw = std::min(rest, static_cast<std::size_t>(std::ceil(b * static_cast<double>(n) - 1e-9)));
        const double weight = (1.0 - a) / b;
        auto rng = make_rng(seed);
        for (std::size_t i = 0; i < draw; ++i) {
            std::uniform_int_distribution<std::size_t> pick(top + i, n - 1);
            std::swap(order[top + i], order[pick(rng)]);
            kept.emplace_back(order[top + i], weight);
        }
    }
    std::sort(kept.begin(), kept.end());
    GossSample out;
    for (auto& [i, w] : kept) {
        out.indices.push_back(i);
        out.weights.push_back(w);
    }
    return out;
}

RegressionTree grow_tree(const Matrix& x, std::span<const std::size_t> rows, std::span<const double> g,
                         std::span<const double> h, std::span<const std::size_t> features,
                         const GbdtConfig& config) {
    config.validate();
    if (rows.empty()) throw InvalidArgument("cannot grow a tree on no rows");
    TreeBuilder builder(x, g, h, features, config);
    return builder.build(sort_rows_by_features(x, rows, features));
}

GbdtEnsemble gbdt_train(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes,
                        const GbdtConfig& config, std::uint64_t seed) {
    config.validate();
    if (x.rows() != y.size()) throw InvalidArgument("GBDT feature and label counts differ");
    if (x.rows() == 0 || x.cols() == 0) throw InvalidArgument("GBDT needs a non-empty feature matrix");
    if (n_classes < 2) throw InvalidArgument("GBDT needs at least 2 classes");
    std::vector<bool> seen(n_classes, false);
    std::size_t distinct = 0;
    for (auto v : y) {
        if (v >= n_classes) throw InvalidArgument("GBDT label out of range");
        if (!seen[v]) {
            seen[v] = true;
            ++distinct;
        }
    }
    if (distinct < 2) throw InvalidArgument("GBDT training needs at least 2 classes present");

    const std::size_t n = x.rows();
    GbdtEnsemble ens;
    ens.outputs = n_classes == 2 ? 1 : n_classes;
    ens.n_features = x.cols();
    ens.base_score = 0.0;
    ens.config = config;

    // Global per-feature orderings reused by every tree.
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::vector<std::size_t> all_features(x.cols());
    std::iota(all_features.begin(), all_features.end(), 0);
    const auto presorted = sort_rows_by_features(x, all_rows, all_features);

    Matrix scores(n, ens.outputs, ens.base_score);
    std::vector<double> binary_targets(n);
    for (std::size_t i = 0; i < n; ++i) binary_targets[i] = y[i] == 1 ? 1.0 : 0.0;
    std::vector<double> wg(n), wh(n);
    std::vector<char> member(n);

    for (int round = 0; round < config.n_estimators; ++round) {
        const Matrix prob = probabilities_from_scores(scores);
        for (std::size_t k = 0; k < ens.outputs; ++k) {
            const auto tree_index = static_cast<std::uint64_t>(round) * ens.outputs + k;
            GradientPairs gp;
            if (ens.outputs == 1) {
                std::vector<double> p(n);
                for (std::size_t i = 0; i < n; ++i) p[i] = prob(i, 0);
                gp = logistic_gradients(p, binary_targets);
            } else {
                gp = softmax_gradients(prob, y, k);
            }

            std::fill(member.begin(), member.end(), 0);
            if (config.split_method == SplitMethod::Goss) {
                auto sample = goss_sample(gp.g, config.goss_a, config.goss_b, derive_seed(seed, 2'000'000 + tree_index));
                std::fill(wg.begin(), wg.end(), 0.0);
                std::fill(wh.begin(), wh.end(), 0.0);
                for (std::size_t s = 0; s < sample.indices.size(); ++s) {
                    const auto i = sample.indices[s];
                    member[i] = 1;
                    wg[i] = sample.weights[s] * gp.g[i];
                    wh[i] = sample.weights[s] * gp.h[i];
                }
            } else {
                std::fill(member.begin(), member.end(), 1);
                wg = gp.g;
                wh = gp.h;
            }

            auto feature_rng = make_rng(seed, 1'000 + tree_index);
            auto features = sample_features(x.cols(), config.feature_subsample, feature_rng);
            std::vector<RowList> root(features.size());
            for (std::size_t j = 0; j < features.size(); ++j) {
                const auto& order = presorted[features[j]];
                root[j].reserve(n);
                for (auto r : order) {
                    if (member[r]) root[j].push_back(r);
                }
            }

            TreeBuilder builder(x, wg, wh, features, config);
            ens.trees.push_back(builder.build(std::move(root)));
            const auto& tree = ens.trees.back();
            for (std::size_t i = 0; i < n; ++i) scores(i, k) += tree.predict(x.row(i));
        }
    }
    return ens;
}

GbdtPrediction gbdt_predict(const GbdtEnsemble& ens, const Matrix& x) {
    if (x.cols() != ens.n_features) throw InvalidArgument("GBDT input has the wrong feature count");
    Matrix scores(x.rows(), ens.outputs, ens.base_score);
    for (std::size_t t = 0; t < ens.trees.size(); ++t) {
        const auto k = t % ens.outputs;
        for (std::size_t i = 0; i < x.rows(); ++i) scores(i, k) += ens.trees[t].predict(x.row(i));
    }
    GbdtPrediction out;
    out.probabilities = probabilities_from_scores(scores);
    out.labels = labels_from_probabilities(out.probabilities);
    return out;
}

double gbdt_log_loss(const GbdtEnsemble& ens, const Matrix& x, std::span<const std::size_t> y) {
    auto pred = gbdt_predict(ens, x);
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double p = ens.outputs == 1 ? (y[i] == 1 ? pred.probabilities(i, 0) : 1.0 - pred.probabilities(i, 0))
                                    : pred.probabilities(i, y[i]);
        p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
        loss -= std::log(p);
    }
    return loss / static_cast<double>(x.rows());
}

nlohmann::json to_json(const GbdtEnsemble& ens) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : ens.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"value", n.value}, {"count", n.count}, {"hessian", n.hessian}});
            } else {
                nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
                                 {"right", n.right}, {"count", n.count}, {"hessian", n.hessian}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    return {{"config", to_json(ens.config)}, {"outputs", ens.outputs}, {"n_features", ens.n_features},
            {"base_score", ens.base_score}, {"trees", std::move(trees)}};
}

GbdtEnsemble gbdt_from_json(const nlohmann::json& j) {
    GbdtEnsemble ens;
    ens.config = gbdt_config_from_json(j.at("config"));
    ens.outputs = j.at("outputs").get<std::size_t>();
    ens.n_features = j.at("n_features").get<std::size_t>();
    ens.base_score = j.at("base_score").get<double>();
    for (const auto& t : j.at("trees")) {
        RegressionTree tree;
        for (const auto& n : t) {
            TreeNode node;
            node.count = n.value("count", std::size_t{0});
            node.hessian = n.value("hessian", 0.0);
            if (n.contains("feature")) {
                node.feature = n.at("feature").get<int>();
                node.threshold = n.at("threshold").get<double>();
                node.left = n.at("left").get<int>();
                node.right = n.at("right").get<int>();
            } else {
                node.value = n.at("value").get<double>();
            }
            tree.nodes.push_back(node);
        }
        const auto size = static_cast<int>(tree.nodes.size());
        for (const auto& node : tree.nodes) {
            if (!node.is_leaf() && (node.left >= size || node.right >= size || node.right < 0)) {
                throw DataError("GBDT tree JSON has dangling child indices");
            }
        }
        if (tree.nodes.empty()) throw DataError("GBDT tree JSON has no nodes");
        ens.trees.push_back(std::move(tree));
    }
    if (ens.outputs == 0) throw DataError("GBDT JSON has zero outputs");
    return ens;
}

}  // namespace flowsentry
