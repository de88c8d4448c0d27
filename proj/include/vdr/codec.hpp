#pragma once

#include <string>

#include "vdr/common.hpp"
#include "vdr/nn.hpp"
#include "vdr/tape.hpp"

namespace vdr {

// Slice-wise convolutional autoencoder mapping intensity stacks [D, 1, H, W]
// to a compact latent grid [D, C, H/8, W/8] and back.  Depth behaves as the
// batch axis, so latents of neighbouring slices never mix here; cross-slice
// reasoning is the denoiser's job.  All upsampling is conv + pixel shuffle.
template <typename T>
struct SliceCodec {
    static constexpr int64_t kFactor = 8;
    int64_t latent_channels = 4;

    Conv2dLayer<T> enc1, enc2, enc3, enc4;
    Conv2dLayer<T> dec_in, up1, up2, up3, dec_out;

    SliceCodec() = default;
    SliceCodec(ParamRegistry<T>& reg, const std::string& prefix, int64_t latent_channels_,
               Rng& rng)
        : latent_channels(latent_channels_),
          enc1(reg, prefix + ".enc1", 1, 16, 3, 2, 1, rng),
          enc2(reg, prefix + ".enc2", 16, 32, 3, 2, 1, rng),
          enc3(reg, prefix + ".enc3", 32, 32, 3, 2, 1, rng),
          enc4(reg, prefix + ".enc4", 32, latent_channels_, 3, 1, 1, rng),
          dec_in(reg, prefix + ".dec_in", latent_channels_, 32, 3, 1, 1, rng),
          up1(reg, prefix + ".up1", 32, 128, 3, 1, 1, rng),
          up2(reg, prefix + ".up2", 32, 128, 3, 1, 1, rng),
          up3(reg, prefix + ".up3", 32, 128, 3, 1, 1, rng),
          dec_out(reg, prefix + ".dec_out", 32, 1, 3, 1, 1, rng) {}

    // [D, 1, H, W] -> [D, C, H/8, W/8].  H and W must be multiples of 8.
    Var encode(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        const auto& s = t.val(x).shape();
        if (s.size() != 4 || s[1] != 1) throw DataError("codec encode: expected [D, 1, H, W]");
        if (s[2] % kFactor != 0 || s[3] % kFactor != 0)
            throw DataError("codec encode: H and W must be multiples of 8");
        Var h = t.gelu(enc1.apply(t, reg, x));
        h = t.gelu(enc2.apply(t, reg, h));
        h = t.gelu(enc3.apply(t, reg, h));
        return enc4.apply(t, reg, h);
    }

    // [D, C, h, w] -> [D, 1, 8h, 8w], intensities squashed to (0, 1).
    Var decode(Tape<T>& t, ParamRegistry<T>& reg, Var z) const {
        const auto& s = t.val(z).shape();
        if (s.size() != 4 || s[1] != latent_channels)
            throw DataError("codec decode: expected [D, C, h, w]");
        Var h = t.gelu(dec_in.apply(t, reg, z));
        h = t.gelu(t.pixel_shuffle(up1.apply(t, reg, h), 2));
        h = t.gelu(t.pixel_shuffle(up2.apply(t, reg, h), 2));
        h = t.gelu(t.pixel_shuffle(up3.apply(t, reg, h), 2));
        return t.sigmoid(dec_out.apply(t, reg, h));
    }
};

}  // namespace vdr
