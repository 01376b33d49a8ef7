#include "flowsentry/linsvm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowsentry/error.hpp"

namespace flowsentry {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// theta = (w_0..w_{d-1}, b)
class SquaredHingeProblem {
public:
    SquaredHingeProblem(const Matrix& x, std::span<const int> y, double c) : x_(x), y_(y), c_(c) {}

    std::size_t dim() const { return x_.cols() + 1; }

    double objective(std::span<const double> theta) const {
        return svm_objective(x_, y_, theta.first(x_.cols()), theta.back(), c_);
    }

    // Gradient at theta; also records the active set (margin violators).
    double gradient(std::span<const double> theta, std::vector<double>& grad) {
        const std::size_t d = x_.cols();
        auto w = theta.first(d);
        const double b = theta.back();
        grad.assign(dim(), 0.0);
        for (std::size_t j = 0; j < d; ++j) grad[j] = w[j];
        active_.clear();
        double obj = 0.5 * dot(w, w);
        for (std::size_t i = 0; i < x_.rows(); ++i) {
            auto row = x_.row(i);
            const double yi = y_[i];
            const double slack = 1.0 - yi * (dot(w, row) + b);
            if (slack <= 0.0) continue;
            active_.push_back(i);
            obj += c_ * slack * slack;
            const double coef = -2.0 * c_ * slack * yi;
            for (std::size_t j = 0; j < d; ++j) grad[j] += coef * row[j];
            grad[d] += coef;
        }
        return obj;
    }

    // Generalized Hessian-vector product on the current active set.
    void hessian_times(std::span<const double> v, std::vector<double>& out) const {
        const std::size_t d = x_.cols();
        out.assign(dim(), 0.0);
        for (std::size_t j = 0; j < d; ++j) out[j] = v[j];
        for (auto i : active_) {
            auto row = x_.row(i);
            const double s = 2.0 * c_ * (dot(row, v.first(d)) + v[d]);
            for (std::size_t j = 0; j < d; ++j) out[j] += s * row[j];
            out[d] += s;
        }
    }

private:
    const Matrix& x_;
    std::span<const int> y_;
    double c_;
    std::vector<std::size_t> active_;
};

// Approximately solves H s = -g by conjugate gradients.
std::vector<double> conjugate_gradient(const SquaredHingeProblem& problem, std::span<const double> grad) {
    const std::size_t n = grad.size();
    std::vector<double> s(n, 0.0), r(n), p(n), hp;
    for (std::size_t i = 0; i < n; ++i) r[i] = -grad[i];
    p = r;
    double rr = dot(r, r);
    const double stop = 0.01 * rr;  // |r| <= 0.1 |g|
    const std::size_t max_steps = std::max<std::size_t>(n, 50);
    for (std::size_t step = 0; step < max_steps && rr > stop; ++step) {
        problem.hessian_times(p, hp);
        const double php = dot(p, hp);
        if (php <= 0.0) break;
        const double alpha = rr / php;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        const double rr_next = dot(r, r);
        const double beta = rr_next / rr;
        rr = rr_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    return s;
}

}  // namespace

double svm_objective(const Matrix& x, std::span<const int> y, std::span<const double> w, double b, double c) {
    double obj = 0.5 * dot(w, w);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double slack = 1.0 - y[i] * (dot(w, x.row(i)) + b);
        if (slack > 0.0) obj += c * slack * slack;
    }
    return obj;
}

LinearSvmModel train_linear_svm(const Matrix& x, std::span<const int> y, double c,
                                const SvmSolverOptions& options) {
    if (!(c > 0.0)) throw InvalidArgument("SVM regularization C must be positive");
    if (x.rows() != y.size()) throw InvalidArgument("SVM feature and label counts differ");
    bool has_pos = false;
    bool has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw InvalidArgument("SVM labels must be -1 or +1");
    }
    if (!has_pos || !has_neg) throw InvalidArgument("SVM training needs samples of both signs");

    SquaredHingeProblem problem(x, y, c);
    std::vector<double> theta(problem.dim(), 0.0);
    std::vector<double> grad;
    std::vector<double> trial(problem.dim());
    double obj = problem.gradient(theta, grad);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (std::sqrt(dot(grad, grad)) < options.gradient_tolerance) break;
        auto step = conjugate_gradient(problem, grad);
        const double slope = dot(grad, step);
        if (slope >= 0.0) break;

        double alpha = 1.0;
        double trial_obj = obj;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] + alpha * step[i];
            trial_obj = problem.objective(trial);
            if (trial_obj <= obj + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
        theta = trial;
        obj = problem.gradient(theta, grad);
        if (options.on_iteration) options.on_iteration(iter, obj);
    }

    LinearSvmModel model;
    model.weights.emplace_back(theta.begin(), theta.end() - 1);
    model.bias.push_back(theta.back());
    model.c_value = c;
    return model;
}

LinearSvmModel train_ova(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes, double c,
                         const SvmSolverOptions& options) {
    if (n_classes < 2) throw InvalidArgument("One-vs-All needs at least 2 classes");
    LinearSvmModel model;
    model.c_value = c;
    std::vector<int> signs(y.size());
    for (std::size_t cls = 0; cls < n_classes; ++cls) {
        for (std::size_t i = 0; i < y.size(); ++i) signs[i] = y[i] == cls ? 1 : -1;
        // A class absent from this training set gets a function that never fires.
        if (std::find(signs.begin(), signs.end(), 1) == signs.end()) {
            model.weights.emplace_back(x.cols(), 0.0);
            model.bias.push_back(-1.0);
            continue;
        }
        try {
            auto binary = train_linear_svm(x, signs, c, options);
            model.weights.push_back(std::move(binary.weights.front()));
            model.bias.push_back(binary.bias.front());
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("One-vs-All class " + std::to_string(cls) + ": " + e.what());
        }
    }
    return model;
}

std::vector<double> decision_values(const LinearSvmModel& model, std::span<const double> row) {
    if (row.size() != model.feature_count()) throw InvalidArgument("SVM input has the wrong feature count");
    std::vector<double> out;
    out.reserve(model.weights.size());
    for (std::size_t k = 0; k < model.weights.size(); ++k) out.push_back(dot(model.weights[k], row) + model.bias[k]);
    return out;
}

std::vector<std::size_t> svm_predict(const LinearSvmModel& model, const Matrix& x) {
    if (model.weights.empty()) throw InvalidArgument("SVM model is empty");
    if (x.cols() != model.feature_count()) throw InvalidArgument("SVM input has the wrong feature count");
    std::vector<std::size_t> out;
    out.reserve(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto values = decision_values(model, x.row(i));
        if (!model.one_vs_all()) {
            out.push_back(values.front() > 0.0 ? 1 : 0);
            continue;
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < values.size(); ++k) {
            if (values[k] > values[best]) best = k;
        }
        out.push_back(best);
    }
    return out;
}

nlohmann::json to_json(const LinearSvmModel& model) {
    return {{"weights", model.weights}, {"bias", model.bias}, {"c", model.c_value}};
}

LinearSvmModel linear_svm_from_json(const nlohmann::json& j) {
    LinearSvmModel m;
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.bias = j.at("bias").get<std::vector<double>>();
    m.c_value = j.at("c").get<double>();
    if (m.weights.size() != m.bias.size()) throw DataError("SVM model JSON has mismatched weights and biases");
    return m;
}

}  // namespace flowsentry
