#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"

namespace flowsentry {

/// Linear decision functions. One function means a binary model (positive
/// side = class 1); several mean One-vs-All, one function per class.
struct LinearSvmModel {
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
    double c_value = 0.0;

    bool one_vs_all() const noexcept { return weights.size() > 1; }
    std::size_t feature_count() const noexcept { return weights.empty() ? 0 : weights.front().size(); }
};

struct SvmSolverOptions {
    double gradient_tolerance = 1e-6;
    int max_iterations = 10'000;
    /// Called after every accepted step with (iteration, objective).
    std::function<void(int, double)> on_iteration;
};

/// 0.5 * |w|^2 + c * sum max(0, 1 - y (w.x + b))^2
double svm_objective(const Matrix& x, std::span<const int> y, std::span<const double> w, double b, double c);

/// Primal squared-hinge L2 SVM, y in {-1, +1}. Solved by Newton steps with a
/// conjugate-gradient inner solve and Armijo backtracking, starting from zero.
LinearSvmModel train_linear_svm(const Matrix& x, std::span<const int> y, double c,
                                const SvmSolverOptions& options = {});

/// One binary model per class with that class as the positive side.
LinearSvmModel train_ova(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes, double c,
                         const SvmSolverOptions& options = {});

std::vector<double> decision_values(const LinearSvmModel& model, std::span<const double> row);

/// Binary: 1 iff w.x + b > 0. One-vs-All: argmax, lowest index on ties.
std::vector<std::size_t> svm_predict(const LinearSvmModel& model, const Matrix& x);

nlohmann::json to_json(const LinearSvmModel& model);
LinearSvmModel linear_svm_from_json(const nlohmann::json& j);

}  // namespace flowsentry
