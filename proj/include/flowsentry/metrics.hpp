#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flowsentry {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t classes() const noexcept { return counts.size(); }
    std::size_t total() const;
    std::size_t true_count(std::size_t cls) const;       // row sum
    std::size_t predicted_count(std::size_t cls) const;  // column sum
};

ConfusionMatrix confusion(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                          std::size_t n_classes, std::vector<std::string> class_names = {});

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;  // true positive rate
    double fpr = 0.0;
    double f1 = 0.0;
};

/// One-vs-rest scores of one class. Every 0/0 ratio is defined as 0.
ClassScores class_scores(const ConfusionMatrix& cm, std::size_t cls);

struct BinaryReport {
    double accuracy = 0.0;
    ClassScores positive;
};

BinaryReport binary_metrics(const ConfusionMatrix& cm, std::size_t positive);

struct MetricReport {
    double accuracy = 0.0;
    std::vector<ClassScores> per_class;
    /// Classes that occur in the truth or the predictions; only these enter
    /// the macro averages.
    std::vector<bool> present;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_fpr = 0.0;
    double macro_f1 = 0.0;
};

/// Per-class one-vs-rest scores, unweighted mean over present classes.
/// Accuracy stays global.
MetricReport macro_metrics(const ConfusionMatrix& cm);

MetricReport evaluate_predictions(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                  std::size_t n_classes);

}  // namespace flowsentry
