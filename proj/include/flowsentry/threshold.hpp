#pragma once

#include <span>

namespace flowsentry {

/// Throws InvalidArgument unless contamination lies in (0, 0.5].
void check_contamination(double contamination);

/// Linearly interpolated q-quantile of the values (q in [0, 1]).
double quantile(std::span<const double> values, double q);

/// The (1 - contamination) quantile of the training scores. Rows scoring
/// strictly above it are flagged as anomalies.
double contamination_threshold(std::span<const double> scores, double contamination);

}  // namespace flowsentry
