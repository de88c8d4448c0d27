#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <fftw3.h>

#include "vdr/volume.hpp"

namespace vdr {

// Radially binned 2D power spectrum. Frequencies are normalized per axis by
// the Nyquist rate, so r runs to sqrt(2) at the corners; the bins cover the
// full disc and their sum (with 1/(H*W) DFT normalization) equals the image
// power, which keeps Parseval checkable. Plan creation is not thread safe;
// call from one thread at a time.
struct RadialSpectrum {
    std::vector<double> radii;  // bin centers
    std::vector<double> power;  // summed |F|^2 / (H*W) per bin
};

inline RadialSpectrum radial_power_spectrum(const float* img, int64_t h, int64_t w,
                                            int64_t nbins = 64) {
    if (h < 1 || w < 1 || nbins < 1) throw UsageError("radial spectrum: bad dims");
    const size_t n = static_cast<size_t>(h * w);
    std::vector<std::complex<double>> in(n), out(n);
    for (size_t i = 0; i < n; ++i) in[i] = {static_cast<double>(img[i]), 0.0};
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w),
                                      reinterpret_cast<fftw_complex*>(in.data()),
                                      reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                      FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    const double rmax = std::sqrt(2.0);
    RadialSpectrum spec;
    spec.radii.resize(static_cast<size_t>(nbins));
    spec.power.assign(static_cast<size_t>(nbins), 0.0);
    for (int64_t b = 0; b < nbins; ++b)
        spec.radii[static_cast<size_t>(b)] = (static_cast<double>(b) + 0.5) * rmax / static_cast<double>(nbins);

    const double ny_y = static_cast<double>(h) / 2.0;
    const double ny_x = static_cast<double>(w) / 2.0;
    for (int64_t u = 0; u < h; ++u)
        for (int64_t v = 0; v < w; ++v) {
            const double fu = (u <= h / 2 ? static_cast<double>(u) : static_cast<double>(u - h)) / ny_y;
            const double fv = (v <= w / 2 ? static_cast<double>(v) : static_cast<double>(v - w)) / ny_x;
            const double r = std::sqrt(fu * fu + fv * fv);
            int64_t b = static_cast<int64_t>(r / rmax * static_cast<double>(nbins));
            if (b >= nbins) b = nbins - 1;
            const auto& c = out[static_cast<size_t>(u * w + v)];
            spec.power[static_cast<size_t>(b)] += std::norm(c) / static_cast<double>(h * w);
        }
    return spec;
}

// The high-frequency band: bins whose centers fall in r in [0.75, 1].
inline RadialSpectrum hf_radial_spectrum(const Volume& vol, int64_t z, int64_t nbins = 64) {
    auto full = radial_power_spectrum(vol.slice(z), vol.height, vol.width, nbins);
    RadialSpectrum band;
    for (size_t i = 0; i < full.radii.size(); ++i)
        if (full.radii[i] >= 0.75 && full.radii[i] <= 1.0) {
            band.radii.push_back(full.radii[i]);
            band.power.push_back(full.power[i]);
        }
    return band;
}

// Mean absolute power difference over the HF band bins of one slice.
inline double hf_spectral_error_slice(const Volume& pred, const Volume& gt, int64_t z,
                                      int64_t nbins = 64) {
    if (!pred.same_dims(gt)) throw DataError("hf spectral error: shape mismatch");
    auto a = hf_radial_spectrum(pred, z, nbins);
    auto b = hf_radial_spectrum(gt, z, nbins);
    double acc = 0;
    for (size_t i = 0; i < a.power.size(); ++i) acc += std::abs(a.power[i] - b.power[i]);
    return acc / static_cast<double>(a.power.size());
}

// Slice-mean HF spectral error over a volume.
inline double hf_spectral_error(const Volume& pred, const Volume& gt, int64_t nbins = 64) {
    if (!pred.same_dims(gt)) throw DataError("hf spectral error: shape mismatch");
    double acc = 0;
    for (int64_t z = 0; z < pred.depth; ++z) acc += hf_spectral_error_slice(pred, gt, z, nbins);
    return acc / static_cast<double>(pred.depth);
}

}  // namespace vdr
