#pragma once

#include <algorithm>
#include <cmath>

#include "vdr/volume.hpp"

namespace vdr {

namespace detail {

// Source coordinate for align-corners interpolation: endpoints map to endpoints.
inline double align_corners_coord(int64_t i_out, int64_t n_out, int64_t n_in) {
    if (n_out <= 1 || n_in <= 1) return 0.0;
    return static_cast<double>(i_out) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
}

// Keys cubic convolution kernel, a = -0.5.
inline double cubic_weight(double x) {
    x = std::abs(x);
    constexpr double a = -0.5;
    if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

}  // namespace detail

// Piecewise-linear interpolation along z through the original slices, endpoints
// pinned to the first and last planes. Lateral dims pass through unchanged.
inline Volume trilinear_axial_upsample(const Volume& v, int64_t target_depth) {
    if (target_depth < v.depth) throw UsageError("axial upsample: target depth below input depth");
    Volume out(target_depth, v.height, v.width);
    out.spacing = v.spacing;
    if (target_depth > 1 && v.depth > 1)
        out.spacing.dz = v.spacing.dz * static_cast<double>(v.depth - 1) / static_cast<double>(target_depth - 1);
    out.roi_id = v.roi_id;
    out.channel_tag = v.channel_tag;
    const int64_t hw = v.height * v.width;
    for (int64_t zo = 0; zo < target_depth; ++zo) {
        float* dst = out.slice(zo);
        if (v.depth == 1) {
            std::copy_n(v.slice(0), hw, dst);
            continue;
        }
        const double zc = detail::align_corners_coord(zo, target_depth, v.depth);
        const int64_t z0 = std::min(static_cast<int64_t>(zc), v.depth - 2);
        const double f = zc - static_cast<double>(z0);
        const float* a = v.slice(z0);
        const float* b = v.slice(z0 + 1);
        for (int64_t i = 0; i < hw; ++i)
            dst[i] = static_cast<float>((1.0 - f) * a[i] + f * b[i]);
    }
    return out;
}

// Full separable linear resize with align-corners on every axis. Axes of size 1
// replicate. Used for the interpolated-input baseline and condition resampling.
inline Volume trilinear_resize(const Volume& v, int64_t td, int64_t th, int64_t tw) {
    if (td < 1 || th < 1 || tw < 1) throw UsageError("trilinear resize: target dims must be >= 1");
    Volume out(td, th, tw);
    out.spacing = v.spacing;
    out.roi_id = v.roi_id;
    out.channel_tag = v.channel_tag;
    for (int64_t zo = 0; zo < td; ++zo) {
        const double zc = detail::align_corners_coord(zo, td, v.depth);
        const int64_t z0 = std::min(static_cast<int64_t>(zc), std::max<int64_t>(v.depth - 2, 0));
        const int64_t z1 = std::min(z0 + 1, v.depth - 1);
        const double fz = zc - static_cast<double>(z0);
        for (int64_t yo = 0; yo < th; ++yo) {
            const double yc = detail::align_corners_coord(yo, th, v.height);
            const int64_t y0 = std::min(static_cast<int64_t>(yc), std::max<int64_t>(v.height - 2, 0));
            const int64_t y1 = std::min(y0 + 1, v.height - 1);
            const double fy = yc - static_cast<double>(y0);
            for (int64_t xo = 0; xo < tw; ++xo) {
                const double xc = detail::align_corners_coord(xo, tw, v.width);
                const int64_t x0 = std::min(static_cast<int64_t>(xc), std::max<int64_t>(v.width - 2, 0));
                const int64_t x1 = std::min(x0 + 1, v.width - 1);
                const double fx = xc - static_cast<double>(x0);
                const double c00 = (1 - fx) * v.at(z0, y0, x0) + fx * v.at(z0, y0, x1);
                const double c01 = (1 - fx) * v.at(z0, y1, x0) + fx * v.at(z0, y1, x1);
                const double c10 = (1 - fx) * v.at(z1, y0, x0) + fx * v.at(z1, y0, x1);
                const double c11 = (1 - fx) * v.at(z1, y1, x0) + fx * v.at(z1, y1, x1);
                const double c0 = (1 - fy) * c00 + fy * c01;
                const double c1 = (1 - fy) * c10 + fy * c11;
                out.at(zo, yo, xo) = static_cast<float>((1 - fz) * c0 + fz * c1);
            }
        }
    }
    return out;
}

// Slice-wise bicubic resize: Keys kernel (a = -0.5), half-pixel sample centers,
// clamp-to-edge taps. Separable, applied rows then columns.
inline Volume bicubic_lateral_resize(const Volume& v, int64_t target_h, int64_t target_w) {
    if (target_h < 1 || target_w < 1) throw UsageError("bicubic resize: target dims must be >= 1");
    struct Taps {
        int64_t idx[4];
        double w[4];
    };
    auto plan_axis = [](int64_t n_out, int64_t n_in) {
        std::vector<Taps> plan(static_cast<size_t>(n_out));
        const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (int64_t i = 0; i < n_out; ++i) {
            const double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
            const int64_t base = static_cast<int64_t>(std::floor(src)) - 1;
            Taps t;
            double sum = 0;
            for (int k = 0; k < 4; ++k) {
                const int64_t j = base + k;
                t.idx[k] = std::clamp<int64_t>(j, 0, n_in - 1);
                t.w[k] = detail::cubic_weight(src - static_cast<double>(j));
                sum += t.w[k];
            }
            for (int k = 0; k < 4; ++k) t.w[k] /= sum;
            plan[static_cast<size_t>(i)] = t;
        }
        return plan;
    };
    const auto rows = plan_axis(target_h, v.height);
    const auto cols = plan_axis(target_w, v.width);

    Volume out(v.depth, target_h, target_w);
    out.spacing = v.spacing;
    out.roi_id = v.roi_id;
    out.channel_tag = v.channel_tag;
    std::vector<double> tmp(static_cast<size_t>(v.height) * target_w);
    for (int64_t z = 0; z < v.depth; ++z) {
        const float* src = v.slice(z);
        for (int64_t y = 0; y < v.height; ++y)
            for (int64_t x = 0; x < target_w; ++x) {
                const Taps& t = cols[static_cast<size_t>(x)];
                double s = 0;
                for (int k = 0; k < 4; ++k) s += t.w[k] * src[y * v.width + t.idx[k]];
                tmp[static_cast<size_t>(y) * target_w + x] = s;
            }
        float* dst = out.slice(z);
        for (int64_t y = 0; y < target_h; ++y) {
            const Taps& t = rows[static_cast<size_t>(y)];
            for (int64_t x = 0; x < target_w; ++x) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += t.w[k] * tmp[static_cast<size_t>(t.idx[k]) * target_w + x];
                dst[y * target_w + x] = static_cast<float>(s);
            }
        }
    }
    return out;
}

}  // namespace vdr
