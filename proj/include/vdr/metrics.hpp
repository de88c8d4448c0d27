#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "vdr/volume.hpp"

namespace vdr {

struct Profile1D {
    std::vector<double> values;
    std::vector<double> coordinates;
};

namespace detail {

inline void require_same_shape(const Volume& a, const Volume& b, const char* op) {
    if (!a.same_dims(b)) throw DataError(std::string(op) + ": shape mismatch");
}

// Box-window moment maps over valid (fully interior) windows via prefix sums.
// Population normalization: moments divide by the window area exactly.
struct WindowMoments {
    int64_t rows = 0, cols = 0;  // number of valid window centers
    std::vector<double> mu_a, mu_b, var_a, var_b, cov;
};

inline WindowMoments window_moments(const float* a, const float* b, int64_t h, int64_t w,
                                    int64_t win) {
    const int64_t oh = h - win + 1, ow = w - win + 1;
    if (oh <= 0 || ow <= 0) throw DataError("window_moments: image smaller than window");
    WindowMoments m;
    m.rows = oh;
    m.cols = ow;
    const size_t cells = static_cast<size_t>((h + 1) * (w + 1));
    std::vector<double> pa(cells, 0), pb(cells, 0), paa(cells, 0), pbb(cells, 0), pab(cells, 0);
    auto P = [w](std::vector<double>& p, int64_t y, int64_t x) -> double& {
        return p[static_cast<size_t>(y * (w + 1) + x)];
    };
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double va = a[y * w + x], vb = b[y * w + x];
            P(pa, y + 1, x + 1) = va + P(pa, y, x + 1) + P(pa, y + 1, x) - P(pa, y, x);
            P(pb, y + 1, x + 1) = vb + P(pb, y, x + 1) + P(pb, y + 1, x) - P(pb, y, x);
            P(paa, y + 1, x + 1) = va * va + P(paa, y, x + 1) + P(paa, y + 1, x) - P(paa, y, x);
            P(pbb, y + 1, x + 1) = vb * vb + P(pbb, y, x + 1) + P(pbb, y + 1, x) - P(pbb, y, x);
            P(pab, y + 1, x + 1) = va * vb + P(pab, y, x + 1) + P(pab, y + 1, x) - P(pab, y, x);
        }
    const double area = static_cast<double>(win * win);
    const size_t n = static_cast<size_t>(oh * ow);
    m.mu_a.resize(n);
    m.mu_b.resize(n);
    m.var_a.resize(n);
    m.var_b.resize(n);
    m.cov.resize(n);
    auto box = [&](std::vector<double>& p, int64_t y, int64_t x) {
        return P(p, y + win, x + win) - P(p, y, x + win) - P(p, y + win, x) + P(p, y, x);
    };
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            const size_t i = static_cast<size_t>(y * ow + x);
            const double ma = box(pa, y, x) / area;
            const double mb = box(pb, y, x) / area;
            m.mu_a[i] = ma;
            m.mu_b[i] = mb;
            m.var_a[i] = box(paa, y, x) / area - ma * ma;
            m.var_b[i] = box(pbb, y, x) / area - mb * mb;
            m.cov[i] = box(pab, y, x) / area - ma * mb;
        }
    return m;
}

struct SsimSums {
    double ssim = 0, cs = 0;
    int64_t count = 0;
};

inline SsimSums ssim_sums(const float* a, const float* b, int64_t h, int64_t w, int64_t win,
                          double c1, double c2) {
    auto m = window_moments(a, b, h, w, win);
    SsimSums s;
    for (size_t i = 0; i < m.mu_a.size(); ++i) {
        const double lum = (2 * m.mu_a[i] * m.mu_b[i] + c1) /
                           (m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + c1);
        const double cs = (2 * m.cov[i] + c2) / (m.var_a[i] + m.var_b[i] + c2);
        s.ssim += lum * cs;
        s.cs += cs;
        ++s.count;
    }
    return s;
}

}  // namespace detail

inline double psnr(const Volume& a, const Volume& b, double data_range = 1.0) {
    detail::require_same_shape(a, b, "psnr");
    double se = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

inline double rmse(const Volume& a, const Volume& b) {
    detail::require_same_shape(a, b, "rmse");
    double se = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        se += d * d;
    }
    return std::sqrt(se / static_cast<double>(a.data.size()));
}

// Mean over depth of 2D SSIM with a uniform box window over valid positions.
// Window moments use population normalization.
inline double ssim(const Volume& a, const Volume& b, int64_t window = 7, double data_range = 1.0) {
    detail::require_same_shape(a, b, "ssim");
    if (a.height < window || a.width < window) throw DataError("ssim: image smaller than window");
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double acc = 0;
    for (int64_t z = 0; z < a.depth; ++z) {
        auto s = detail::ssim_sums(a.slice(z), b.slice(z), a.height, a.width, window, c1, c2);
        acc += s.ssim / static_cast<double>(s.count);
    }
    return acc / static_cast<double>(a.depth);
}

// Five-scale MS-SSIM (contrast-sensitivity means at coarse scales, full SSIM
// at the last), 2x2 average-pool downsampling with floor cropping, slice-wise
// mean over depth. Falls back to plain SSIM with a warning when the lateral
// dims cannot support all scales.
inline double ms_ssim(const Volume& a, const Volume& b, int64_t window = 7, double data_range = 1.0,
                      WarningSink* warnings = nullptr) {
    detail::require_same_shape(a, b, "ms_ssim");
    static constexpr double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    const int64_t need = window * 16;  // four halvings
    if (a.height < need || a.width < need) {
        warn(warnings, "ms_ssim: lateral dims below " + std::to_string(need) +
                           ", falling back to single-scale ssim");
        return ssim(a, b, window, data_range);
    }
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    auto pool2 = [](std::vector<float>& img, int64_t& h, int64_t& w) {
        const int64_t nh = h / 2, nw = w / 2;
        std::vector<float> out(static_cast<size_t>(nh * nw));
        for (int64_t y = 0; y < nh; ++y)
            for (int64_t x = 0; x < nw; ++x)
                out[static_cast<size_t>(y * nw + x)] =
                    0.25f * (img[static_cast<size_t>(2 * y * w + 2 * x)] +
                             img[static_cast<size_t>(2 * y * w + 2 * x + 1)] +
                             img[static_cast<size_t>((2 * y + 1) * w + 2 * x)] +
                             img[static_cast<size_t>((2 * y + 1) * w + 2 * x + 1)]);
        img = std::move(out);
        h = nh;
        w = nw;
    };

    double acc = 0;
    for (int64_t z = 0; z < a.depth; ++z) {
        std::vector<float> ia(a.slice(z), a.slice(z) + a.height * a.width);
        std::vector<float> ib(b.slice(z), b.slice(z) + b.height * b.width);
        int64_t h = a.height, w = a.width;
        double value = 1.0;
        for (int scale = 0; scale < 5; ++scale) {
            auto s = detail::ssim_sums(ia.data(), ib.data(), h, w, window, c1, c2);
            const double mcs = std::max(s.cs / static_cast<double>(s.count), 0.0);
            const double mssim = std::max(s.ssim / static_cast<double>(s.count), 0.0);
            value *= std::pow(scale < 4 ? mcs : mssim, kWeights[scale]);
            if (scale < 4) {
                int64_t hb = h, wb = w;
                pool2(ia, h, w);
                pool2(ib, hb, wb);
            }
        }
        acc += value;
    }
    return acc / static_cast<double>(a.depth);
}

// Concordance correlation, population moments. Degenerate profiles return 0.
inline double ccc(const Profile1D& x, const Profile1D& y) {
    if (x.values.size() != y.values.size()) throw DataError("ccc: length mismatch");
    const size_t n = x.values.size();
    if (n < 2) throw DataError("ccc: need at least 2 samples");
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x.values[i];
        my += y.values[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cv = 0;
    for (size_t i = 0; i < n; ++i) {
        vx += (x.values[i] - mx) * (x.values[i] - mx);
        vy += (y.values[i] - my) * (y.values[i] - my);
        cv += (x.values[i] - mx) * (y.values[i] - my);
    }
    vx /= static_cast<double>(n);
    vy /= static_cast<double>(n);
    cv /= static_cast<double>(n);
    const double denom = vx + vy + (mx - my) * (mx - my);
    if (denom == 0.0) return 0.0;
    return 2.0 * cv / denom;
}

inline double pcc(const Profile1D& x, const Profile1D& y) {
    if (x.values.size() != y.values.size()) throw DataError("pcc: length mismatch");
    const size_t n = x.values.size();
    if (n < 2) throw DataError("pcc: need at least 2 samples");
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x.values[i];
        my += y.values[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cv = 0;
    for (size_t i = 0; i < n; ++i) {
        vx += (x.values[i] - mx) * (x.values[i] - mx);
        vy += (y.values[i] - my) * (y.values[i] - my);
        cv += (x.values[i] - mx) * (y.values[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return cv / std::sqrt(vx * vy);
}

// Sliding-window 1D SSIM with the same constants and population moments as
// the 2D version, so a profile replicated into rows reduces exactly.
inline double ssim_1d(const Profile1D& x, const Profile1D& y, int64_t window = 7,
                      double data_range = 1.0) {
    if (x.values.size() != y.values.size()) throw DataError("ssim_1d: length mismatch");
    const int64_t n = static_cast<int64_t>(x.values.size());
    if (n < window) throw DataError("ssim_1d: profile shorter than window");
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double acc = 0;
    int64_t count = 0;
    for (int64_t s = 0; s + window <= n; ++s, ++count) {
        double ma = 0, mb = 0;
        for (int64_t i = 0; i < window; ++i) {
            ma += x.values[static_cast<size_t>(s + i)];
            mb += y.values[static_cast<size_t>(s + i)];
        }
        ma /= static_cast<double>(window);
        mb /= static_cast<double>(window);
        double va = 0, vb = 0, cv = 0;
        for (int64_t i = 0; i < window; ++i) {
            const double da = x.values[static_cast<size_t>(s + i)] - ma;
            const double db = y.values[static_cast<size_t>(s + i)] - mb;
            va += da * da;
            vb += db * db;
            cv += da * db;
        }
        va /= static_cast<double>(window);
        vb /= static_cast<double>(window);
        cv /= static_cast<double>(window);
        acc += ((2 * ma * mb + c1) * (2 * cv + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(count);
}

// Main-diagonal scan of one slice. Square slices walk (i,i); non-square ones
// sample the nearest grid point along the normalized diagonal.
inline Profile1D extract_diagonal_profile(const Volume& v, int64_t z) {
    if (z < 0 || z >= v.depth) throw DataError("diagonal profile: slice index out of range");
    const int64_t L = std::max(v.height, v.width);
    Profile1D p;
    p.values.reserve(static_cast<size_t>(L));
    p.coordinates.reserve(static_cast<size_t>(L));
    for (int64_t t = 0; t < L; ++t) {
        int64_t y, x;
        if (L == 1) {
            y = x = 0;
        } else {
            y = std::llround(static_cast<double>(t) * static_cast<double>(v.height - 1) /
                             static_cast<double>(L - 1));
            x = std::llround(static_cast<double>(t) * static_cast<double>(v.width - 1) /
                             static_cast<double>(L - 1));
        }
        p.values.push_back(v.at(z, y, x));
        p.coordinates.push_back(static_cast<double>(t));
    }
    return p;
}

// Variance of the 4-neighbor Laplacian response, taken over interior pixels
// where every tap is a real sample. Any border extension biases either affine
// images or high-frequency patterns, so borders stay out of the statistic.
inline double laplacian_variance(const Volume& v, int64_t z) {
    if (v.height < 3 || v.width < 3) throw DataError("laplacian variance: dims must be >= 3");
    const float* s = v.slice(z);
    const int64_t h = v.height, w = v.width;
    double sum = 0, sum2 = 0;
    for (int64_t y = 1; y < h - 1; ++y)
        for (int64_t x = 1; x < w - 1; ++x) {
            const double lap = s[(y - 1) * w + x] + s[(y + 1) * w + x] + s[y * w + x - 1] +
                               s[y * w + x + 1] - 4.0 * s[y * w + x];
            sum += lap;
            sum2 += lap * lap;
        }
    const double n = static_cast<double>((h - 2) * (w - 2));
    const double mean = sum / n;
    return sum2 / n - mean * mean;
}

}  // namespace vdr
