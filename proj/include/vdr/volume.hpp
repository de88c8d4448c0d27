#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdr/common.hpp"

namespace vdr {

struct Spacing {
    double dz = 1.0, dy = 1.0, dx = 1.0;
    bool operator==(const Spacing&) const = default;
};

// A D x H x W scalar grid (z-major, row-major) with voxel spacing metadata.
// The universal pixel-space carrier: raw acquisitions, cubes, restored output.
struct Volume {
    int64_t depth = 0, height = 0, width = 0;
    std::vector<float> data;  // depth*height*width values
    Spacing spacing;
    std::string roi_id;
    std::string channel_tag;

    Volume() = default;
    Volume(int64_t d, int64_t h, int64_t w)
        : depth(d), height(h), width(w), data(static_cast<size_t>(d * h * w), 0.0f) {}

    int64_t voxels() const { return depth * height * width; }

    float& at(int64_t z, int64_t y, int64_t x) {
        return data[static_cast<size_t>((z * height + y) * width + x)];
    }
    float at(int64_t z, int64_t y, int64_t x) const {
        return data[static_cast<size_t>((z * height + y) * width + x)];
    }

    const float* slice(int64_t z) const { return data.data() + z * height * width; }
    float* slice(int64_t z) { return data.data() + z * height * width; }

    bool same_dims(const Volume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }

    void validate() const {
        if (depth < 1 || height < 1 || width < 1)
            throw DataError("invalid volume: all dims must be >= 1");
        if (static_cast<int64_t>(data.size()) != voxels())
            throw DataError("invalid volume: payload size does not match dims");
        for (float v : data)
            if (!std::isfinite(v)) throw DataError("invalid volume: non-finite value");
        if (spacing.dz <= 0 || spacing.dy <= 0 || spacing.dx <= 0)
            throw DataError("invalid volume: spacing must be positive");
    }

    double mean() const {
        double s = 0.0;
        for (float v : data) s += v;
        return voxels() ? s / static_cast<double>(voxels()) : 0.0;
    }
};

// A matched low-quality / high-quality pair sharing one ROI.
struct PairedCube {
    Volume lq;
    Volume hq;
    std::string degradation_tag;
};

struct DatasetSplit {
    std::vector<std::string> train, val, test;
};

}  // namespace vdr
