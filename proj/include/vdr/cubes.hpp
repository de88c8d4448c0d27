#pragma once

#include <string>
#include <vector>

#include "vdr/resample.hpp"
#include "vdr/volume.hpp"

namespace vdr {

// Overlapping z-windows (given stride) crossed with a non-overlapping lateral
// tiling. Windows are emitted only where they fit entirely inside the volume.
inline std::vector<Volume> extract_cubes(const Volume& v, int64_t depth, int64_t height,
                                         int64_t width, int64_t stride_z,
                                         WarningSink* warnings = nullptr) {
    if (depth < 1 || height < 1 || width < 1 || stride_z < 1)
        throw UsageError("extract_cubes: window dims and stride must be >= 1");
    std::vector<Volume> cubes;
    if (depth > v.depth || height > v.height || width > v.width) {
        warn(warnings, "extract_cubes: window " + std::to_string(depth) + "x" + std::to_string(height) +
                           "x" + std::to_string(width) + " exceeds volume, no cubes emitted");
        return cubes;
    }
    int64_t n = 0;
    for (int64_t z = 0; z + depth <= v.depth; z += stride_z)
        for (int64_t y = 0; y + height <= v.height; y += height)
            for (int64_t x = 0; x + width <= v.width; x += width) {
                Volume c(depth, height, width);
                c.spacing = v.spacing;
                c.channel_tag = v.channel_tag;
                c.roi_id = v.roi_id + "/z" + std::to_string(z) + "y" + std::to_string(y) + "x" +
                           std::to_string(x);
                for (int64_t dz = 0; dz < depth; ++dz)
                    for (int64_t dy = 0; dy < height; ++dy)
                        std::copy_n(v.slice(z + dz) + (y + dy) * v.width + x, width,
                                    c.slice(dz) + dy * width);
                cubes.push_back(std::move(c));
                ++n;
            }
    (void)n;
    return cubes;
}

struct TimeSeriesCubeParams {
    int64_t time_points = 10;   // frames interleaved along the stack axis
    int64_t target_depth = 8;   // depth after z standardization
    int64_t central = 512;      // side of the central lateral window
    int64_t patch = 256;        // side of each extracted patch
    int64_t stride = 256;       // lateral patch stride inside the window
};

// Paired low/high stacks whose z axis interleaves T time points of k planes
// each (frame-major: planes t*k .. t*k+k-1 belong to time point t). Per time
// point: center-crop depth to target (skip the pair when k is below target),
// bicubically upsample the low stack to the high lateral dims, then cut the
// stride-grid of patches from the central window.
inline std::vector<PairedCube> prepare_biotisr_cubes(const Volume& lq_raw, const Volume& hq_raw,
                                                     const TimeSeriesCubeParams& p = {},
                                                     WarningSink* warnings = nullptr) {
    if (p.time_points < 1 || p.target_depth < 1 || p.patch < 1 || p.stride < 1 || p.central < p.patch)
        throw UsageError("time-series cube params out of range");
    if (lq_raw.depth % p.time_points != 0 || hq_raw.depth % p.time_points != 0)
        throw DataError("time-series stack depth not divisible by time point count");
    if (lq_raw.depth != hq_raw.depth)
        throw DataError("paired stacks disagree on total plane count");
    if (hq_raw.height < p.central || hq_raw.width < p.central)
        throw DataError("high stack smaller than the central window");

    std::vector<PairedCube> out;
    const int64_t k = lq_raw.depth / p.time_points;
    if (k < p.target_depth) {
        warn(warnings, "time-series stack " + lq_raw.roi_id + ": frame depth " + std::to_string(k) +
                           " below target " + std::to_string(p.target_depth) + ", skipped");
        return out;
    }
    const int64_t zoff = (k - p.target_depth) / 2;
    const int64_t oy = (hq_raw.height - p.central) / 2;
    const int64_t ox = (hq_raw.width - p.central) / 2;

    auto frame = [&](const Volume& raw, int64_t t) {
        Volume f(p.target_depth, raw.height, raw.width);
        f.spacing = raw.spacing;
        f.channel_tag = raw.channel_tag;
        for (int64_t z = 0; z < p.target_depth; ++z)
            std::copy_n(raw.slice(t * k + zoff + z), raw.height * raw.width, f.slice(z));
        return f;
    };
    auto patch_at = [&](const Volume& f, int64_t y0, int64_t x0) {
        Volume c(p.target_depth, p.patch, p.patch);
        c.spacing = f.spacing;
        c.channel_tag = f.channel_tag;
        for (int64_t z = 0; z < p.target_depth; ++z)
            for (int64_t y = 0; y < p.patch; ++y)
                std::copy_n(f.slice(z) + (y0 + y) * f.width + x0, p.patch,
                            c.slice(z) + y * p.patch);
        return c;
    };

    for (int64_t t = 0; t < p.time_points; ++t) {
        Volume hq = frame(hq_raw, t);
        Volume lq = frame(lq_raw, t);
        if (lq.height != hq.height || lq.width != hq.width)
            lq = bicubic_lateral_resize(lq, hq.height, hq.width);
        for (int64_t py = 0; py + p.patch <= p.central; py += p.stride)
            for (int64_t px = 0; px + p.patch <= p.central; px += p.stride) {
                PairedCube pc;
                pc.lq = patch_at(lq, oy + py, ox + px);
                pc.hq = patch_at(hq, oy + py, ox + px);
                pc.degradation_tag = "sim_paired";
                const std::string tag = "/t" + std::to_string(t) + "_y" + std::to_string(oy + py) +
                                        "_x" + std::to_string(ox + px);
                pc.lq.roi_id = lq_raw.roi_id + tag;
                pc.hq.roi_id = hq_raw.roi_id + tag;
                out.push_back(std::move(pc));
            }
    }
    return out;
}

}  // namespace vdr
