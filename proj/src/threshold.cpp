#include "flowsentry/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowsentry/error.hpp"

namespace flowsentry {

void check_contamination(double contamination) {
    if (!(contamination > 0.0 && contamination <= 0.5)) {
        throw InvalidArgument("contamination must lie in (0, 0.5]");
    }
}

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw InvalidArgument("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double contamination_threshold(std::span<const double> scores, double contamination) {
    check_contamination(contamination);
    return quantile(scores, 1.0 - contamination);
}

}  // namespace flowsentry
