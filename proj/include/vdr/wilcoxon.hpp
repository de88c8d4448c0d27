#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vdr/volume.hpp"

namespace vdr {

// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are
// dropped; if every pair ties the test is vacuous and p = 1 by convention.
// Exact null distribution (subset-sum DP) when n <= 20 and the |differences|
// are tie-free; otherwise the normal approximation with tie variance and
// continuity corrections.
inline double wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DataError("wilcoxon: length mismatch");
    std::vector<double> d;
    d.reserve(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = x[i] - y[i];
        if (v != 0.0) d.push_back(v);
    }
    const size_t n = d.size();
    if (n == 0) return 1.0;

    // rank |d| with average ranks for ties
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&d](size_t a, size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
    std::vector<double> rank(n);
    std::vector<size_t> tie_sizes;
    bool any_tie = false;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        tie_sizes.push_back(j - i + 1);
        if (j > i) any_tie = true;
        i = j + 1;
    }

    double w_plus = 0;
    for (size_t i = 0; i < n; ++i)
        if (d[i] > 0) w_plus += rank[i];
    const double total = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
    const double stat = std::min(w_plus, total - w_plus);

    if (n <= 20 && !any_tie) {
        // counts of subsets of {1..n} by rank sum
        const size_t max_sum = static_cast<size_t>(total);
        std::vector<double> cnt(max_sum + 1, 0.0);
        cnt[0] = 1.0;
        for (size_t r = 1; r <= n; ++r)
            for (size_t s = max_sum; s >= r; --s) cnt[s] += cnt[s - r];
        double below = 0;
        const size_t t = static_cast<size_t>(stat);
        for (size_t s = 0; s <= t; ++s) below += cnt[s];
        const double p = 2.0 * below / std::pow(2.0, static_cast<double>(n));
        return std::min(p, 1.0);
    }

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (size_t t : tie_sizes) {
        const double tt = static_cast<double>(t);
        var -= (tt * tt * tt - tt) / 48.0;
    }
    if (var <= 0.0) return 1.0;  // all ranks tied away
    double z = stat - mean;
    z += 0.5;  // continuity correction toward the mean (stat <= mean)
    z /= std::sqrt(var);
    const double p = 2.0 * 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::min(std::max(p, 0.0), 1.0);
}

}  // namespace vdr
