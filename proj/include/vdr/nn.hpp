#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vdr/params.hpp"
#include "vdr/rng.hpp"
#include "vdr/tape.hpp"

namespace vdr {

enum class Init { kFanIn, kZero };

template <typename T>
Tensor<T> uniform_tensor(std::vector<int64_t> shape, double bound, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Tensor<T> normal_tensor(std::vector<int64_t> shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(stddev * rng.normal());
    return t;
}

// Dense layer y = x W^T + b with fan-in uniform init (or zeros for the
// AdaLN-zero modulation generators and output heads).
template <typename T>
struct LinearLayer {
    int64_t w = -1, b = -1;
    int64_t in = 0, out = 0;

    LinearLayer() = default;
    LinearLayer(ParamRegistry<T>& reg, const std::string& prefix, int64_t in_dim, int64_t out_dim,
                Rng& rng, Init init = Init::kFanIn)
        : in(in_dim), out(out_dim) {
        if (init == Init::kZero) {
            w = reg.add(prefix + ".w", Tensor<T>({out_dim, in_dim}));
            b = reg.add(prefix + ".b", Tensor<T>({out_dim}));
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
            w = reg.add(prefix + ".w", uniform_tensor<T>({out_dim, in_dim}, bound, rng));
            b = reg.add(prefix + ".b", uniform_tensor<T>({out_dim}, bound, rng));
        }
    }

    // x must be [rows, in].
    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        return t.linear(x, t.param(reg, w), t.param(reg, b));
    }
};

template <typename T>
struct Conv2dLayer {
    int64_t w = -1, b = -1;
    int64_t stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(ParamRegistry<T>& reg, const std::string& prefix, int64_t cin, int64_t cout,
                int64_t ksize, int64_t stride_, int64_t pad_, Rng& rng, Init init = Init::kFanIn)
        : stride(stride_), pad(pad_) {
        if (init == Init::kZero) {
            w = reg.add(prefix + ".w", Tensor<T>({cout, cin, ksize, ksize}));
            b = reg.add(prefix + ".b", Tensor<T>({cout}));
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(cin * ksize * ksize));
            w = reg.add(prefix + ".w",
                        uniform_tensor<T>({cout, cin, ksize, ksize}, bound, rng));
            b = reg.add(prefix + ".b", uniform_tensor<T>({cout}, bound, rng));
        }
    }

    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        return t.conv2d(x, t.param(reg, w), t.param(reg, b), stride, pad);
    }
};

// Affine layer norm over the trailing axis.
template <typename T>
struct LayerNormLayer {
    int64_t g = -1, b = -1;

    LayerNormLayer() = default;
    LayerNormLayer(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim) {
        g = reg.add(prefix + ".g", Tensor<T>::full({dim}, T(1)));
        b = reg.add(prefix + ".b", Tensor<T>({dim}));
    }

    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        return t.layernorm(x, t.param(reg, g), t.param(reg, b));
    }
};

// Transformer feed-forward: Linear -> GELU -> Linear with 4x expansion.
template <typename T>
struct MlpBlock {
    LinearLayer<T> fc1, fc2;

    MlpBlock() = default;
    MlpBlock(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim, Rng& rng,
             int64_t expansion = 4)
        : fc1(reg, prefix + ".fc1", dim, dim * expansion, rng),
          fc2(reg, prefix + ".fc2", dim * expansion, dim, rng) {}

    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        return fc2.apply(t, reg, t.gelu(fc1.apply(t, reg, x)));
    }
};

}  // namespace vdr
