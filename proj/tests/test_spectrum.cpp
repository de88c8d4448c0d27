#include <catch_amalgamated.hpp>

#include <cmath>

#include "vdr/rng.hpp"
#include "vdr/spectrum.hpp"

TEST_CASE("constant image has no high-frequency power") {
    vdr::Volume v(1, 32, 32);
    std::fill(v.data.begin(), v.data.end(), 0.7f);
    auto band = vdr::hf_radial_spectrum(v, 0);
    REQUIRE(!band.power.empty());
    for (double p : band.power) REQUIRE(p == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("binned power satisfies parseval") {
    vdr::Rng r(3, 0);
    vdr::Volume v(1, 40, 56);
    for (auto& x : v.data) x = float(r.normal());
    auto spec = vdr::radial_power_spectrum(v.slice(0), 40, 56, 48);
    double binned = 0;
    for (double p : spec.power) binned += p;
    double img = 0;
    for (float x : v.data) img += double(x) * double(x);
    REQUIRE(binned == Catch::Approx(img).epsilon(1e-6));
}

TEST_CASE("a tone near nyquist lands in the hf band") {
    const int64_t n = 40;
    vdr::Volume v(1, n, n);
    // frequency index 18 of 40 -> 0.9 of nyquist (20)
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x)
            v.at(0, y, x) = float(std::cos(2.0 * M_PI * 18.0 * double(x) / double(n)));
    auto full = vdr::radial_power_spectrum(v.slice(0), n, n, 64);
    double total_nondc = 0, in_band = 0;
    for (size_t i = 0; i < full.radii.size(); ++i) {
        if (full.radii[i] < 0.02) continue;  // DC bin
        total_nondc += full.power[i];
        if (full.radii[i] >= 0.75 && full.radii[i] <= 1.0) in_band += full.power[i];
    }
    REQUIRE(in_band / total_nondc >= 0.99);
}

TEST_CASE("hf spectral error is zero on identity and symmetric") {
    vdr::Rng r(9, 0);
    vdr::Volume a(2, 48, 48), b(2, 48, 48);
    for (auto& x : a.data) x = float(r.uniform());
    for (auto& x : b.data) x = float(r.uniform());
    REQUIRE(vdr::hf_spectral_error(a, a) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(vdr::hf_spectral_error(a, b) == Catch::Approx(vdr::hf_spectral_error(b, a)).margin(1e-12));
    REQUIRE(vdr::hf_spectral_error(a, b) > 0.0);

    // brute-force bin-wise oracle for one slice
    auto sa = vdr::hf_radial_spectrum(a, 0);
    auto sb = vdr::hf_radial_spectrum(b, 0);
    double acc = 0;
    for (size_t i = 0; i < sa.power.size(); ++i) acc += std::abs(sa.power[i] - sb.power[i]);
    acc /= double(sa.power.size());
    REQUIRE(vdr::hf_spectral_error_slice(a, b, 0) == Catch::Approx(acc).margin(1e-12));

    vdr::Volume c(2, 48, 32);
    REQUIRE_THROWS_AS(vdr::hf_spectral_error(a, c), vdr::DataError);
}
