#pragma once

#include <array>
#include <string>
#include <vector>

#include "vdr/rng.hpp"
#include "vdr/volume.hpp"

namespace vdr {

// Deterministic ROI-level split. Shuffles under the seed, takes floor-
// proportional counts, hands remainders to train, then val, then test, and
// finally guarantees every split at least one ROI by pulling from the largest.
inline DatasetSplit split_rois(std::vector<std::string> roi_ids,
                               std::array<int, 3> ratios = {7, 1, 2}, uint64_t seed = 0) {
    const size_t n = roi_ids.size();
    if (n < 3) throw DataError("split_rois: need at least 3 ROIs for 3 splits");
    if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0)
        throw UsageError("split_rois: ratios must be positive");

    Rng rng(seed, 0x5bd1);  // fixed stream for splitting
    for (size_t i = n - 1; i > 0; --i) {
        const size_t j = rng.uniform_index(i + 1);
        std::swap(roi_ids[i], roi_ids[j]);
    }

    const int64_t total = ratios[0] + ratios[1] + ratios[2];
    std::array<size_t, 3> count{};
    size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        count[static_cast<size_t>(s)] = static_cast<size_t>(
            static_cast<int64_t>(n) * ratios[static_cast<size_t>(s)] / total);
        assigned += count[static_cast<size_t>(s)];
    }
    for (int s = 0; assigned < n; s = (s + 1) % 3) {
        ++count[static_cast<size_t>(s)];
        ++assigned;
    }
    for (int s = 0; s < 3; ++s) {
        if (count[static_cast<size_t>(s)] > 0) continue;
        size_t largest = 0;
        for (size_t t = 1; t < 3; ++t)
            if (count[t] > count[largest]) largest = t;
        --count[largest];
        ++count[static_cast<size_t>(s)];
    }

    DatasetSplit out;
    size_t pos = 0;
    for (size_t i = 0; i < count[0]; ++i) out.train.push_back(roi_ids[pos++]);
    for (size_t i = 0; i < count[1]; ++i) out.val.push_back(roi_ids[pos++]);
    for (size_t i = 0; i < count[2]; ++i) out.test.push_back(roi_ids[pos++]);
    return out;
}

}  // namespace vdr
