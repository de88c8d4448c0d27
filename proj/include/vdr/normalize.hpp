#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vdr/volume.hpp"

namespace vdr {

// Linear-interpolation percentile of a sorted range, p in [0,100].
inline double percentile_sorted(const std::vector<float>& sorted, double p) {
    if (sorted.empty()) throw DataError("percentile of empty range");
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(rank);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double f = rank - static_cast<double>(lo);
    return (1.0 - f) * sorted[lo] + f * sorted[lo + 1];
}

// Per-slice percentile clip and rescale to [0,1]. A degenerate slice, where the
// two percentiles coincide, becomes all zeros.
inline Volume percentile_normalize_slicewise(const Volume& v, double p_lo = 1.0, double p_hi = 99.0) {
    if (!(p_lo >= 0.0 && p_hi <= 100.0 && p_lo < p_hi))
        throw UsageError("percentile bounds must satisfy 0 <= lo < hi <= 100");
    for (float x : v.data)
        if (!std::isfinite(x)) throw DataError("normalize: non-finite voxel");

    Volume out = v;
    const int64_t hw = v.height * v.width;
    std::vector<float> sorted(static_cast<size_t>(hw));
    for (int64_t z = 0; z < v.depth; ++z) {
        const float* src = v.slice(z);
        std::copy_n(src, hw, sorted.begin());
        std::sort(sorted.begin(), sorted.end());
        const double qlo = percentile_sorted(sorted, p_lo);
        const double qhi = percentile_sorted(sorted, p_hi);
        float* dst = out.slice(z);
        if (qhi <= qlo) {
            std::fill_n(dst, hw, 0.0f);
            continue;
        }
        const double inv = 1.0 / (qhi - qlo);
        for (int64_t i = 0; i < hw; ++i) {
            const double c = std::clamp(static_cast<double>(src[i]), qlo, qhi);
            dst[i] = static_cast<float>((c - qlo) * inv);
        }
    }
    return out;
}

}  // namespace vdr
