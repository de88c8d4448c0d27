#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vdr/rng.hpp"
#include "vdr/tensor.hpp"
#include "vdr/volume.hpp"

namespace vdr {

struct DegradeConfig {
    double sigma_lateral = 2.0;            // voxels
    double sigma_axial = 4.0;              // voxels
    int64_t factor_axial = 4;
    int64_t factor_lateral = 4;
    std::optional<double> target_snr;      // none: skip the noise stage
    bool attenuate = false;                // depth-dependent intensity falloff
    double attenuation_z0 = 40.0;          // slices
    uint64_t seed = 0;
};

// Separable anisotropic Gaussian held as its three axis profiles. Each profile
// is normalized to sum 1, so the outer product sums to 1 as well.
struct PsfKernel {
    std::vector<double> kz, ky, kx;

    int64_t radius_z() const { return static_cast<int64_t>(kz.size()) / 2; }
    int64_t radius_y() const { return static_cast<int64_t>(ky.size()) / 2; }
    int64_t radius_x() const { return static_cast<int64_t>(kx.size()) / 2; }

    Tensor<double> dense() const {
        Tensor<double> k({static_cast<int64_t>(kz.size()), static_cast<int64_t>(ky.size()),
                          static_cast<int64_t>(kx.size())});
        for (size_t a = 0; a < kz.size(); ++a)
            for (size_t b = 0; b < ky.size(); ++b)
                for (size_t c = 0; c < kx.size(); ++c)
                    k.at(int64_t(a), int64_t(b), int64_t(c)) = kz[a] * ky[b] * kx[c];
        return k;
    }
};

namespace detail {

inline std::vector<double> gaussian_profile(double sigma) {
    if (!(sigma > 0)) throw UsageError("psf sigma must be positive");
    const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (int64_t i = -radius; i <= radius; ++i) {
        const double x = static_cast<double>(i) / sigma;
        k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * x * x);
        sum += k[static_cast<size_t>(i + radius)];
    }
    for (auto& w : k) w /= sum;
    return k;
}

// reflect-101 (mirror about the edge sample, edge not repeated)
inline int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace detail

inline PsfKernel anisotropic_psf_kernel(const DegradeConfig& cfg) {
    PsfKernel k;
    k.kz = detail::gaussian_profile(cfg.sigma_axial);
    k.ky = detail::gaussian_profile(cfg.sigma_lateral);
    k.kx = detail::gaussian_profile(cfg.sigma_lateral);
    return k;
}

// Separable convolution with reflect-101 borders; shape preserved.
inline Volume psf_convolve(const Volume& v, const PsfKernel& k) {
    if (k.radius_z() >= v.depth || k.radius_y() >= v.height || k.radius_x() >= v.width)
        throw DataError("psf kernel radius exceeds volume extent");

    Volume a = v, b = v;
    auto pass = [](const Volume& src, Volume& dst, const std::vector<double>& prof, int axis) {
        const int64_t r = static_cast<int64_t>(prof.size()) / 2;
        const int64_t n = axis == 0 ? src.depth : (axis == 1 ? src.height : src.width);
        for (int64_t z = 0; z < src.depth; ++z)
            for (int64_t y = 0; y < src.height; ++y)
                for (int64_t x = 0; x < src.width; ++x) {
                    double s = 0;
                    for (int64_t t = -r; t <= r; ++t) {
                        int64_t zz = z, yy = y, xx = x;
                        int64_t& c = axis == 0 ? zz : (axis == 1 ? yy : xx);
                        c = detail::reflect_index(c + t, n);
                        s += prof[static_cast<size_t>(t + r)] * src.at(zz, yy, xx);
                    }
                    dst.at(z, y, x) = static_cast<float>(s);
                }
    };
    pass(v, a, k.kz, 0);
    pass(a, b, k.ky, 1);
    pass(b, a, k.kx, 2);
    return a;
}

// Strided decimation keeping indices 0, f, 2f, ...
inline Volume downsample(const Volume& v, int64_t factor_z, int64_t factor_xy) {
    if (factor_z < 1 || factor_xy < 1) throw UsageError("downsample factors must be >= 1");
    if (v.depth % factor_z != 0 || v.height % factor_xy != 0 || v.width % factor_xy != 0)
        throw DataError("downsample: dims not divisible by factors");
    Volume out(v.depth / factor_z, v.height / factor_xy, v.width / factor_xy);
    out.spacing = {v.spacing.dz * static_cast<double>(factor_z),
                   v.spacing.dy * static_cast<double>(factor_xy),
                   v.spacing.dx * static_cast<double>(factor_xy)};
    out.roi_id = v.roi_id;
    out.channel_tag = v.channel_tag;
    for (int64_t z = 0; z < out.depth; ++z)
        for (int64_t y = 0; y < out.height; ++y)
            for (int64_t x = 0; x < out.width; ++x)
                out.at(z, y, x) = v.at(z * factor_z, y * factor_xy, x * factor_xy);
    return out;
}

// Additive zero-mean Gaussian noise with std = mean(v) / target_snr.
inline Volume add_noise_to_snr(const Volume& v, double target_snr, uint64_t seed) {
    if (!(target_snr > 0)) throw UsageError("target snr must be positive");
    const double sd = v.mean() / target_snr;
    Volume out = v;
    Rng rng(seed, 0x6e01);
    for (auto& x : out.data) x = static_cast<float>(x + sd * rng.normal());
    return out;
}

// Per-slice exponential intensity falloff exp(-z / z0).
inline Volume attenuate_depth(const Volume& v, double z0) {
    if (!(z0 > 0)) throw UsageError("attenuation depth constant must be positive");
    Volume out = v;
    for (int64_t z = 0; z < v.depth; ++z) {
        const float g = static_cast<float>(std::exp(-static_cast<double>(z) / z0));
        float* s = out.slice(z);
        for (int64_t i = 0; i < v.height * v.width; ++i) s[i] *= g;
    }
    return out;
}

// blur -> optional depth falloff -> decimate -> optional noise
inline PairedCube simulate_acquisition(const Volume& hq, const DegradeConfig& cfg) {
    PairedCube pc;
    pc.hq = hq;
    Volume lq = psf_convolve(hq, anisotropic_psf_kernel(cfg));
    if (cfg.attenuate) lq = attenuate_depth(lq, cfg.attenuation_z0);
    lq = downsample(lq, cfg.factor_axial, cfg.factor_lateral);
    if (cfg.target_snr) lq = add_noise_to_snr(lq, *cfg.target_snr, cfg.seed);
    pc.lq = std::move(lq);
    pc.degradation_tag = "sim:s" + std::to_string(cfg.sigma_lateral) + "x" +
                         std::to_string(cfg.sigma_axial) + ":f" + std::to_string(cfg.factor_axial) +
                         "x" + std::to_string(cfg.factor_lateral) +
                         (cfg.target_snr ? ":snr" + std::to_string(*cfg.target_snr) : ":clean");
    return pc;
}

}  // namespace vdr
