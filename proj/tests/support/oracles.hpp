#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace lanemerge::testing {

/// Nearest rank by counting: the smallest sample x with #(s <= x) >= max(1, ceil(p n / 100)).
/// Never sorts, so it shares no code path with the production routine.
inline double brute_percentile(const std::vector<double>& s, double p) {
    const double n = static_cast<double>(s.size());
    double rank = 1;
    while (rank * 100.0 < p * n - 1e-7) ++rank;
    double best = std::numeric_limits<double>::infinity();
    for (double x : s) {
        double le = 0;
        for (double y : s) le += y <= x;
        if (le >= rank && x < best) best = x;
    }
    return best;
}

/// F(x) = #(s <= x) / n.
inline double brute_ecdf(const std::vector<double>& s, double x) {
    double le = 0;
    for (double y : s) le += y <= x;
    return s.empty() ? 0.0 : le / static_cast<double>(s.size());
}

}  // namespace lanemerge::testing
