#include "flowsentry/metrics.hpp"

#include "flowsentry/error.hpp"

namespace flowsentry {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
        for (auto c : row) n += c;
    }
    return n;
}

std::size_t ConfusionMatrix::true_count(std::size_t cls) const {
    std::size_t n = 0;
    for (auto c : counts[cls]) n += c;
    return n;
}

std::size_t ConfusionMatrix::predicted_count(std::size_t cls) const {
    std::size_t n = 0;
    for (const auto& row : counts) n += row[cls];
    return n;
}

ConfusionMatrix confusion(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                          std::size_t n_classes, std::vector<std::string> class_names) {
    if (y_true.size() != y_pred.size()) throw InvalidArgument("label vectors differ in length");
    if (y_true.empty()) throw InvalidArgument("cannot build a confusion matrix from no samples");
    if (n_classes == 0) throw InvalidArgument("need at least one class");
    if (!class_names.empty() && class_names.size() != n_classes) {
        throw InvalidArgument("class name count does not match n_classes");
    }
    ConfusionMatrix cm;
    cm.class_names = std::move(class_names);
    cm.counts.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] >= n_classes || y_pred[i] >= n_classes) throw InvalidArgument("class index out of range");
        ++cm.counts[y_true[i]][y_pred[i]];
    }
    return cm;
}

ClassScores class_scores(const ConfusionMatrix& cm, std::size_t cls) {
    const double n = static_cast<double>(cm.total());
    const double tp = static_cast<double>(cm.counts[cls][cls]);
    const double fn = static_cast<double>(cm.true_count(cls)) - tp;
    const double fp = static_cast<double>(cm.predicted_count(cls)) - tp;
    const double tn = n - tp - fn - fp;
    ClassScores s;
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.fpr = ratio(fp, fp + tn);
    s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
    return s;
}

BinaryReport binary_metrics(const ConfusionMatrix& cm, std::size_t positive) {
    if (cm.classes() != 2) throw InvalidArgument("binary metrics need a 2x2 confusion matrix");
    if (positive > 1) throw InvalidArgument("positive class index must be 0 or 1");
    BinaryReport r;
    r.accuracy = ratio(static_cast<double>(cm.counts[0][0] + cm.counts[1][1]), static_cast<double>(cm.total()));
    r.positive = class_scores(cm, positive);
    return r;
}

MetricReport macro_metrics(const ConfusionMatrix& cm) {
    if (cm.classes() < 2) throw InvalidArgument("macro metrics need at least 2 classes");
    MetricReport r;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) correct += cm.counts[c][c];
    r.accuracy = ratio(static_cast<double>(correct), static_cast<double>(cm.total()));

    std::size_t present = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        r.per_class.push_back(class_scores(cm, c));
        bool is_present = cm.true_count(c) > 0 || cm.predicted_count(c) > 0;
        r.present.push_back(is_present);
        if (!is_present) continue;
        ++present;
        r.macro_precision += r.per_class.back().precision;
        r.macro_recall += r.per_class.back().recall;
        r.macro_fpr += r.per_class.back().fpr;
        r.macro_f1 += r.per_class.back().f1;
    }
    if (present > 0) {
        const double p = static_cast<double>(present);
        r.macro_precision /= p;
        r.macro_recall /= p;
        r.macro_fpr /= p;
        r.macro_f1 /= p;
    }
    return r;
}

MetricReport evaluate_predictions(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                  std::size_t n_classes) {
    return macro_metrics(confusion(y_true, y_pred, n_classes));
}

}  // namespace flowsentry
