#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdr/common.hpp"
#include "vdr/tensor.hpp"

namespace vdr {

// Named trainable tensors plus their optimizer state. Names are stable and
// hierarchical ("denoiser.block0.attn_lat.wq"), so checkpoints written by one
// build reload in another as long as the architecture config matches.
template <typename T>
struct ParamRegistry {
    struct Param {
        std::string name;
        Tensor<T> value;
        Tensor<T> m, v;  // Adam moment estimates, zero until the first step
    };

    std::vector<Param> params;
    std::unordered_map<std::string, int64_t> index;

    int64_t add(std::string name, Tensor<T> init) {
        if (index.count(name)) throw UsageError("duplicate parameter name: " + name);
        const int64_t id = static_cast<int64_t>(params.size());
        Param p;
        p.m = Tensor<T>(init.shape());
        p.v = Tensor<T>(init.shape());
        p.value = std::move(init);
        p.name = std::move(name);
        index.emplace(p.name, id);
        params.push_back(std::move(p));
        return id;
    }

    Param& at(int64_t id) { return params[static_cast<size_t>(id)]; }
    const Param& at(int64_t id) const { return params[static_cast<size_t>(id)]; }

    int64_t find(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("unknown parameter: " + name);
        return it->second;
    }

    int64_t count() const { return static_cast<int64_t>(params.size()); }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }

    // Copy values (not optimizer state) into a registry of another scalar
    // type; names and order must already match. Used by the 64-bit gradient
    // checks, which rebuild the model at double precision.
    template <typename U>
    void copy_values_to(ParamRegistry<U>& dst) const {
        if (dst.count() != count()) throw DataError("registry size mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            if (dst.params[i].name != params[i].name)
                throw DataError("registry name mismatch at " + params[i].name);
            dst.params[i].value = params[i].value.template cast<U>();
        }
    }
};

// Decoupled-weight-decay Adam. Single logical stream: `step` consumes the
// gradients of one backward pass and advances the shared timestep.
template <typename T>
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int64_t steps = 0;

    void step(ParamRegistry<T>& reg,
              const std::vector<std::pair<int64_t, const Tensor<T>*>>& grads) {
        ++steps;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
        for (const auto& [pid, g] : grads) {
            auto& p = reg.at(pid);
            if (!g->same_shape(p.value)) throw DataError("gradient shape mismatch: " + p.name);
            T* w = p.value.data();
            T* m = p.m.data();
            T* v = p.v.data();
            const T* gd = g->data();
            const int64_t n = p.value.size();
            for (int64_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(gd[i]);
                const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
                const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double update = (mi / c1) / (std::sqrt(vi / c2) + eps);
                w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                      lr * (update + weight_decay * static_cast<double>(w[i])));
            }
        }
    }
};

}  // namespace vdr
