#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vdr/common.hpp"
#include "vdr/rng.hpp"
#include "vdr/volume.hpp"

namespace vdr {

struct PhantomConfig {
    int64_t depth = 20, height = 256, width = 256;
    int64_t ellipsoids = 6;  // nucleus-like soft blobs
    int64_t tubes = 3;       // axon-like random-walk filaments
    int64_t sheets = 1;      // membrane-like planes
    double intensity_lo = 0.45, intensity_hi = 0.95;
    double background = 0.08;
    uint64_t seed = 0;

    void validate() const {
        if (depth < 1 || height < 1 || width < 1)
            throw UsageError("phantom: dims must be >= 1");
        if (ellipsoids < 0 || tubes < 0 || sheets < 0)
            throw UsageError("phantom: object counts must be >= 0");
        if (!(0.0 <= intensity_lo && intensity_lo <= intensity_hi && intensity_hi <= 1.0))
            throw UsageError("phantom: intensity range must satisfy 0 <= lo <= hi <= 1");
        if (background < 0.0 || background > 1.0)
            throw UsageError("phantom: background must lie in [0,1]");
    }
};

namespace detail {

// Soft-edged ellipsoid: peak intensity at the centroid, Gaussian falloff in
// the normalized radius, negligible beyond twice the semi-axes.
inline void splat_ellipsoid(Volume& v, double cz, double cy, double cx, double az, double ay,
                            double ax, double intensity) {
    const int64_t z0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cz - 2.5 * az)));
    const int64_t z1 = std::min(v.depth - 1, static_cast<int64_t>(std::ceil(cz + 2.5 * az)));
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - 2.5 * ay)));
    const int64_t y1 = std::min(v.height - 1, static_cast<int64_t>(std::ceil(cy + 2.5 * ay)));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - 2.5 * ax)));
    const int64_t x1 = std::min(v.width - 1, static_cast<int64_t>(std::ceil(cx + 2.5 * ax)));
    for (int64_t z = z0; z <= z1; ++z)
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                const double rz = (static_cast<double>(z) - cz) / az;
                const double ry = (static_cast<double>(y) - cy) / ay;
                const double rx = (static_cast<double>(x) - cx) / ax;
                const double rho2 = rz * rz + ry * ry + rx * rx;
                if (rho2 > 6.25) continue;
                v.at(z, y, x) += static_cast<float>(intensity * std::exp(-1.5 * rho2));
            }
}

// Gaussian tube cross-section deposited around one centerline point.
inline void splat_bead(Volume& v, double cz, double cy, double cx, double radius,
                       double intensity) {
    const double reach = 2.5 * radius;
    const int64_t z0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cz - reach)));
    const int64_t z1 = std::min(v.depth - 1, static_cast<int64_t>(std::ceil(cz + reach)));
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - reach)));
    const int64_t y1 = std::min(v.height - 1, static_cast<int64_t>(std::ceil(cy + reach)));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - reach)));
    const int64_t x1 = std::min(v.width - 1, static_cast<int64_t>(std::ceil(cx + reach)));
    const double inv = 1.0 / (2.0 * radius * radius);
    for (int64_t z = z0; z <= z1; ++z)
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                const double dz = static_cast<double>(z) - cz;
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                const double d2 = dz * dz + dy * dy + dx * dx;
                if (d2 > reach * reach) continue;
                float& cell = v.at(z, y, x);
                cell = std::max(cell, static_cast<float>(intensity * std::exp(-d2 * inv)));
            }
}

}  // namespace detail

// Deterministic synthetic volume: soft ellipsoids, curved random-walk tubes,
// and planar sheets over a constant background, clamped to [0,1].  Placement
// retries a bounded number of times; when an object cannot be fitted the
// volume simply carries fewer objects and a warning is recorded.
inline Volume generate_phantom(const PhantomConfig& cfg, WarningSink* warnings = nullptr) {
    cfg.validate();
    Rng rng(cfg.seed, 0x9e77);
    Volume v(cfg.depth, cfg.height, cfg.width);
    v.roi_id = "phantom-" + std::to_string(cfg.seed);
    std::fill(v.data.begin(), v.data.end(), static_cast<float>(cfg.background));

    auto intensity = [&]() { return rng.uniform(cfg.intensity_lo, cfg.intensity_hi); };
    const double minside = static_cast<double>(std::min({cfg.depth, cfg.height, cfg.width}));

    // Ellipsoids: semi-axes scale with the volume; the bounding box (2.5x the
    // semi-axes, where the profile is negligible) must fit inside the grid.
    int64_t placed = 0;
    for (int64_t i = 0; i < cfg.ellipsoids; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < 25 && !ok; ++attempt) {
            const double az = std::max(1.0, rng.uniform(0.06, 0.16) * cfg.depth);
            const double ay = std::max(1.5, rng.uniform(0.04, 0.11) * cfg.height);
            const double ax = std::max(1.5, rng.uniform(0.04, 0.11) * cfg.width);
            if (5.0 * az > cfg.depth || 5.0 * ay > cfg.height || 5.0 * ax > cfg.width) continue;
            const double cz = rng.uniform(2.5 * az, cfg.depth - 1 - 2.5 * az);
            const double cy = rng.uniform(2.5 * ay, cfg.height - 1 - 2.5 * ay);
            const double cx = rng.uniform(2.5 * ax, cfg.width - 1 - 2.5 * ax);
            detail::splat_ellipsoid(v, cz, cy, cx, az, ay, ax, intensity());
            ok = true;
        }
        if (ok) ++placed;
    }
    if (placed < cfg.ellipsoids)
        warn(warnings, "phantom: placed " + std::to_string(placed) + " of " +
                           std::to_string(cfg.ellipsoids) + " ellipsoids");

    // Tubes: random-walk centerline with direction jitter, reflected at the
    // faces, beads deposited along the way.
    for (int64_t i = 0; i < cfg.tubes; ++i) {
        const double radius = std::max(0.8, rng.uniform(0.012, 0.03) * minside);
        const double amp = intensity();
        double pz = rng.uniform(radius, cfg.depth - 1 - radius);
        double py = rng.uniform(radius, cfg.height - 1 - radius);
        double px = rng.uniform(radius, cfg.width - 1 - radius);
        double dz = rng.normal(), dy = rng.normal(), dx = rng.normal();
        const int64_t steps = static_cast<int64_t>(2.0 * minside);
        const double step_len = 0.9;
        for (int64_t s = 0; s < steps; ++s) {
            const double norm = std::sqrt(dz * dz + dy * dy + dx * dx) + 1e-12;
            dz /= norm;
            dy /= norm;
            dx /= norm;
            detail::splat_bead(v, pz, py, px, radius, amp);
            pz += step_len * dz;
            py += step_len * dy;
            px += step_len * dx;
            if (pz < 0 || pz > cfg.depth - 1) dz = -dz, pz = std::clamp(pz, 0.0, cfg.depth - 1.0);
            if (py < 0 || py > cfg.height - 1)
                dy = -dy, py = std::clamp(py, 0.0, cfg.height - 1.0);
            if (px < 0 || px > cfg.width - 1) dx = -dx, px = std::clamp(px, 0.0, cfg.width - 1.0);
            dz += 0.25 * rng.normal();
            dy += 0.25 * rng.normal();
            dx += 0.25 * rng.normal();
        }
    }

    // Sheets: soft planes through a random interior point.
    for (int64_t i = 0; i < cfg.sheets; ++i) {
        double nz = rng.normal(), ny = rng.normal(), nx = rng.normal();
        const double norm = std::sqrt(nz * nz + ny * ny + nx * nx) + 1e-12;
        nz /= norm;
        ny /= norm;
        nx /= norm;
        const double pz = rng.uniform(0.25, 0.75) * (cfg.depth - 1);
        const double py = rng.uniform(0.25, 0.75) * (cfg.height - 1);
        const double px = rng.uniform(0.25, 0.75) * (cfg.width - 1);
        const double thick = std::max(0.8, 0.015 * minside);
        const double amp = intensity();
        const double inv = 1.0 / (2.0 * thick * thick);
        for (int64_t z = 0; z < cfg.depth; ++z)
            for (int64_t y = 0; y < cfg.height; ++y)
                for (int64_t x = 0; x < cfg.width; ++x) {
                    const double dist = (static_cast<double>(z) - pz) * nz +
                                        (static_cast<double>(y) - py) * ny +
                                        (static_cast<double>(x) - px) * nx;
                    const double g = amp * std::exp(-dist * dist * inv);
                    if (g > 1e-4) v.at(z, y, x) += static_cast<float>(g);
                }
    }

    for (float& f : v.data) f = std::clamp(f, 0.0f, 1.0f);
    return v;
}

}  // namespace vdr
