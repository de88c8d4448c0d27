#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vdr/common.hpp"
#include "vdr/dit.hpp"
#include "vdr/tape.hpp"
#include "vdr/tensor.hpp"

namespace vdr {

// Variance schedule for the latent diffusion process.  All cumulative
// products are carried in 64-bit regardless of the model scalar type.
struct DiffusionSchedule {
    int64_t steps = 1000;
    std::vector<double> beta, alpha, alpha_bar;

    static DiffusionSchedule linear(int64_t steps = 1000, double beta_lo = 1e-4,
                                    double beta_hi = 0.02) {
        if (steps < 2) throw UsageError("diffusion schedule: need at least 2 steps");
        DiffusionSchedule s;
        s.steps = steps;
        s.beta.resize(steps);
        s.alpha.resize(steps);
        s.alpha_bar.resize(steps);
        double prod = 1.0;
        for (int64_t t = 0; t < steps; ++t) {
            s.beta[t] = beta_lo + (beta_hi - beta_lo) * static_cast<double>(t) /
                                      static_cast<double>(steps - 1);
            s.alpha[t] = 1.0 - s.beta[t];
            prod *= s.alpha[t];
            s.alpha_bar[t] = prod;
        }
        return s;
    }

    // Cumulative signal fraction; t = -1 denotes the clean end of the chain.
    double abar(int64_t t) const {
        if (t < -1 || t >= steps) throw UsageError("diffusion schedule: timestep out of range");
        return t < 0 ? 1.0 : alpha_bar[static_cast<size_t>(t)];
    }
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, elementwise in double.
template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& z0, const Tensor<T>& eps, int64_t t,
                          const DiffusionSchedule& sch) {
    if (!z0.same_shape(eps)) throw DataError("forward_diffuse: shape mismatch");
    const double sa = std::sqrt(sch.abar(t));
    const double sb = std::sqrt(1.0 - sch.abar(t));
    Tensor<T> out(z0.shape());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(sa * static_cast<double>(z0[i]) +
                                sb * static_cast<double>(eps[i]));
    return out;
}

// Noise-prediction objective on the tape: diffuse z0 with the given noise at
// step t, run the denoiser, and penalise the squared error against that
// noise.  Gradients flow into z0 and every model parameter.
template <typename T>
Var diffusion_loss(Tape<T>& t, ParamRegistry<T>& reg, const Denoiser<T>& den, Var z0,
                   Var c_local, Var c_fused, int64_t step, const DiffusionSchedule& sch,
                   const Tensor<T>& eps) {
    Var eps_in = t.input(eps);
    Var z_t = t.add(t.scale(z0, std::sqrt(sch.abar(step))),
                    t.scale(eps_in, std::sqrt(1.0 - sch.abar(step))));
    Var eps_hat = den.forward(t, reg, z_t, c_local, c_fused);
    return t.mse(eps_hat, eps_in);
}

// Seeded convenience form: draws the timestep uniformly over {0..T-1} and the
// noise from a unit Gaussian, both from the given seed, then evaluates the
// objective above.  Training loops and reproducibility tests use this; the
// explicit-argument overload stays available for gradient checks.
template <typename T>
Var diffusion_loss(Tape<T>& t, ParamRegistry<T>& reg, const Denoiser<T>& den, Var z0,
                   Var c_local, Var c_fused, const DiffusionSchedule& sch, uint64_t seed) {
    Rng rng(seed, 0xd1f5);
    const int64_t step = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(sch.steps)));
    Tensor<T> eps(t.val(z0).shape());
    for (int64_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(rng.normal());
    return diffusion_loss(t, reg, den, z0, c_local, c_fused, step, sch, eps);
}

// One deterministic (eta = 0) reverse-process step t -> t_prev using the
// model's noise estimate.  t_prev = -1 lands on the clean sample.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z_t, const Tensor<T>& eps_hat, int64_t t, int64_t t_prev,
                    const DiffusionSchedule& sch) {
    if (!z_t.same_shape(eps_hat)) throw DataError("ddim_step: shape mismatch");
    if (t_prev > t) throw UsageError("ddim_step: t_prev must not exceed t");
    const double sa_t = std::sqrt(sch.abar(t)), sb_t = std::sqrt(1.0 - sch.abar(t));
    const double sa_p = std::sqrt(sch.abar(t_prev)), sb_p = std::sqrt(1.0 - sch.abar(t_prev));
    Tensor<T> out(z_t.shape());
    for (int64_t i = 0; i < out.size(); ++i) {
        const double e = static_cast<double>(eps_hat[i]);
        const double z0_hat = (static_cast<double>(z_t[i]) - sb_t * e) / sa_t;
        out[i] = static_cast<T>(sa_p * z0_hat + sb_p * e);
    }
    return out;
}

// Clean-sample estimate implied by a noise estimate at step t.
template <typename T>
Tensor<T> predict_clean(const Tensor<T>& z_t, const Tensor<T>& eps_hat, int64_t t,
                        const DiffusionSchedule& sch) {
    if (!z_t.same_shape(eps_hat)) throw DataError("predict_clean: shape mismatch");
    const double sa = std::sqrt(sch.abar(t)), sb = std::sqrt(1.0 - sch.abar(t));
    Tensor<T> out(z_t.shape());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>((static_cast<double>(z_t[i]) -
                                 sb * static_cast<double>(eps_hat[i])) /
                                sa);
    return out;
}

// Evenly spaced sampling subsequence 0 = tau_0 < ... < tau_{n-1} = steps-1.
inline std::vector<int64_t> ddim_taus(int64_t train_steps, int64_t sample_steps) {
    if (sample_steps < 1 || sample_steps > train_steps)
        throw UsageError("ddim_taus: sample step count out of range");
    std::vector<int64_t> taus(sample_steps);
    if (sample_steps == 1) {
        taus[0] = train_steps - 1;
        return taus;
    }
    for (int64_t i = 0; i < sample_steps; ++i)
        taus[i] = (i * (train_steps - 1)) / (sample_steps - 1);
    for (size_t i = 1; i < taus.size(); ++i)
        if (taus[i] <= taus[i - 1]) taus[i] = taus[i - 1] + 1;
    return taus;
}

// Deterministic sampler: walk the subsequence from pure noise down to the
// clean sample, querying eps_at(z, t) for the model's noise estimate.
template <typename T, typename EpsFn>
Tensor<T> ddim_sample(EpsFn&& eps_at, Tensor<T> z, const std::vector<int64_t>& taus,
                      const DiffusionSchedule& sch) {
    if (taus.empty()) throw UsageError("ddim_sample: empty timestep subsequence");
    for (int64_t i = static_cast<int64_t>(taus.size()) - 1; i >= 0; --i) {
        const int64_t t = taus[static_cast<size_t>(i)];
        const int64_t t_prev = i > 0 ? taus[static_cast<size_t>(i - 1)] : -1;
        Tensor<T> eps = eps_at(z, t);
        z = ddim_step(z, eps, t, t_prev, sch);
    }
    return z;
}

}  // namespace vdr
