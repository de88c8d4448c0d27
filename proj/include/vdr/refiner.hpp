#pragma once

#include <string>

#include "vdr/common.hpp"
#include "vdr/nn.hpp"
#include "vdr/tape.hpp"

namespace vdr {

// Residual channel-attention block: two 3x3 convs, a squeeze-excite gate over
// channels, and an identity skip.
template <typename T>
struct Rcab {
    Conv2dLayer<T> conv1, conv2;
    LinearLayer<T> fc1, fc2;  // channel gate, 4x reduction

    Rcab() = default;
    Rcab(ParamRegistry<T>& reg, const std::string& prefix, int64_t channels, Rng& rng)
        : conv1(reg, prefix + ".conv1", channels, channels, 3, 1, 1, rng),
          conv2(reg, prefix + ".conv2", channels, channels, 3, 1, 1, rng),
          fc1(reg, prefix + ".fc1", channels, std::max<int64_t>(1, channels / 4), rng),
          fc2(reg, prefix + ".fc2", std::max<int64_t>(1, channels / 4), channels, rng) {}

    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        Var u = conv2.apply(t, reg, t.gelu(conv1.apply(t, reg, x)));
        Var gate = t.sigmoid(fc2.apply(t, reg, t.gelu(fc1.apply(t, reg, t.mean_hw(u)))));
        return t.add(x, t.scale_channels(u, gate));
    }
};

// Latent-to-image decoder used after sampling.  A single pixel-shuffle stage
// lifts the latent grid 8x to image resolution ("plain" path); a residual
// branch conditioned on the upsampled degraded input adds high-frequency
// detail.  The residual branch ends in a zero-initialised conv, so at init
// the refined output equals the plain decode exactly — the detail branch has
// to earn its contribution during finetuning.
template <typename T>
struct Refiner {
    static constexpr int64_t kFactor = 8;
    int64_t latent_channels = 4;
    int64_t feat = 8;   // image-resolution feature channels out of the shuffle
    int64_t width = 8;  // residual branch width

    Conv2dLayer<T> conv_ps;   // C -> feat*64, consumed by pixel_shuffle(8)
    Conv2dLayer<T> conv_img;  // feat -> 1
    Conv2dLayer<T> conv_in;   // feat+1 -> width
    Rcab<T> rcab1, rcab2;
    Conv2dLayer<T> conv_out;  // width -> 1, zero-init

    Refiner() = default;
    Refiner(ParamRegistry<T>& reg, const std::string& prefix, int64_t latent_channels_, Rng& rng,
            int64_t feat_ = 8, int64_t width_ = 8)
        : latent_channels(latent_channels_),
          feat(feat_),
          width(width_),
          conv_ps(reg, prefix + ".conv_ps", latent_channels_, feat_ * kFactor * kFactor, 3, 1, 1,
                  rng),
          conv_img(reg, prefix + ".conv_img", feat_, 1, 3, 1, 1, rng),
          conv_in(reg, prefix + ".conv_in", feat_ + 1, width_, 3, 1, 1, rng),
          rcab1(reg, prefix + ".rcab1", width_, rng),
          rcab2(reg, prefix + ".rcab2", width_, rng),
          conv_out(reg, prefix + ".conv_out", width_, 1, 3, 1, 1, rng, Init::kZero) {}

    // [D, C, h, w] -> [D, feat, 8h, 8w]
    Var features(Tape<T>& t, ParamRegistry<T>& reg, Var z) const {
        const auto& s = t.val(z).shape();
        if (s.size() != 4 || s[1] != latent_channels)
            throw DataError("refiner: expected latent stack [D, C, h, w]");
        return t.gelu(t.pixel_shuffle(conv_ps.apply(t, reg, z), kFactor));
    }

    // Plain decode without the detail branch: [D, C, h, w] -> [D, 1, 8h, 8w].
    Var plain(Tape<T>& t, ParamRegistry<T>& reg, Var z) const {
        return t.sigmoid(conv_img.apply(t, reg, features(t, reg, z)));
    }

    // Refined decode conditioned on the upsampled degraded volume lq_up
    // [D, 1, 8h, 8w].
    Var refine(Tape<T>& t, ParamRegistry<T>& reg, Var z, Var lq_up) const {
        Var f = features(t, reg, z);
        const auto& fs = t.val(f).shape();
        const auto& ls = t.val(lq_up).shape();
        if (ls.size() != 4 || ls[0] != fs[0] || ls[1] != 1 || ls[2] != fs[2] || ls[3] != fs[3])
            throw DataError("refiner: degraded input must be [D, 1, 8h, 8w]");
        Var base = conv_img.apply(t, reg, f);
        Var r = t.gelu(conv_in.apply(t, reg, t.concat(f, lq_up, 1)));
        r = rcab2.apply(t, reg, rcab1.apply(t, reg, r));
        return t.sigmoid(t.add(base, conv_out.apply(t, reg, r)));
    }
};

}  // namespace vdr
