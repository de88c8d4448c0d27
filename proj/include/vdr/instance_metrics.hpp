#pragma once

#include <map>
#include <vector>

#include "vdr/tensor.hpp"

namespace vdr {

// H x W integer grid; 0 is background, positive values are instance ids.
using InstanceMap = Tensor<int32_t>;

inline double dice(const Tensor<uint8_t>& a, const Tensor<uint8_t>& b) {
    if (a.shape() != b.shape()) throw DataError("dice: shape mismatch");
    int64_t na = 0, nb = 0, inter = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const bool pa = a.data()[i] != 0, pb = b.data()[i] != 0;
        na += pa;
        nb += pb;
        inter += (pa && pb);
    }
    if (na + nb == 0) return 1.0;  // both empty
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

struct PanopticResult {
    double pq = 0, sq = 0, rq = 0;
    int64_t tp = 0, fp = 0, fn = 0;
    double iou_sum = 0;
};

namespace detail {

struct InstanceMatching {
    std::vector<std::pair<int32_t, int32_t>> matches;  // (pred id, gt id)
    std::vector<double> ious;
    int64_t n_pred = 0, n_gt = 0;
};

// Pairs with IoU strictly above the threshold; unique by construction for
// thresholds >= 0.5 since two instances cannot both overlap one by more than
// half its area.
inline InstanceMatching match_instances(const InstanceMap& pred, const InstanceMap& gt,
                                        double iou_thresh) {
    if (pred.shape() != gt.shape()) throw DataError("instance matching: shape mismatch");
    std::map<int32_t, int64_t> area_p, area_g;
    std::map<std::pair<int32_t, int32_t>, int64_t> inter;
    for (int64_t i = 0; i < pred.size(); ++i) {
        const int32_t p = pred.data()[i], g = gt.data()[i];
        if (p < 0 || g < 0) throw DataError("instance map: negative label");
        if (p > 0) ++area_p[p];
        if (g > 0) ++area_g[g];
        if (p > 0 && g > 0) ++inter[{p, g}];
    }
    InstanceMatching m;
    m.n_pred = static_cast<int64_t>(area_p.size());
    m.n_gt = static_cast<int64_t>(area_g.size());
    for (const auto& [key, cnt] : inter) {
        const auto [p, g] = key;
        const double u = static_cast<double>(area_p[p] + area_g[g] - cnt);
        const double iou = static_cast<double>(cnt) / u;
        if (iou > iou_thresh) {
            m.matches.push_back(key);
            m.ious.push_back(iou);
        }
    }
    return m;
}

}  // namespace detail

// PQ = sum IoU(TP) / (TP + FP/2 + FN/2), SQ = sum IoU / TP, RQ = TP / (TP + FP/2 + FN/2).
// Two empty maps count as a perfect score.
inline PanopticResult panoptic_quality(const InstanceMap& pred, const InstanceMap& gt,
                                       double iou_thresh = 0.5) {
    auto m = detail::match_instances(pred, gt, iou_thresh);
    PanopticResult r;
    r.tp = static_cast<int64_t>(m.matches.size());
    r.fp = m.n_pred - r.tp;
    r.fn = m.n_gt - r.tp;
    for (double i : m.ious) r.iou_sum += i;
    if (m.n_pred == 0 && m.n_gt == 0) {
        r.pq = r.sq = r.rq = 1.0;
        return r;
    }
    const double denom = static_cast<double>(r.tp) + 0.5 * static_cast<double>(r.fp) +
                         0.5 * static_cast<double>(r.fn);
    r.sq = r.tp > 0 ? r.iou_sum / static_cast<double>(r.tp) : 0.0;
    r.rq = denom > 0 ? static_cast<double>(r.tp) / denom : 0.0;
    r.pq = denom > 0 ? r.iou_sum / denom : 0.0;
    return r;
}

// Detection F1 under the same matching rule as panoptic quality.
inline double f1_detection(const InstanceMap& pred, const InstanceMap& gt, double iou_thresh = 0.5) {
    auto m = detail::match_instances(pred, gt, iou_thresh);
    const int64_t tp = static_cast<int64_t>(m.matches.size());
    const int64_t fp = m.n_pred - tp;
    const int64_t fn = m.n_gt - tp;
    if (m.n_pred == 0 && m.n_gt == 0) return 1.0;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
}

}  // namespace vdr
