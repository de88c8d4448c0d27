// Acceptance gate for the restoration pipeline: nine criteria, one verdict
// line each, exit 0 only if every criterion passes.
//
// Each criterion builds its own inputs, computes reference values with
// independent straight-loop implementations where the library is under test,
// and compares under tolerances pinned in this file.  The two end-to-end
// criteria (7, 8) train real models; their budgets assume an 8-core machine,
// so a single-core run is expected to exceed the wall-clock notes
// proportionally while producing the same numbers.
//
// Development knobs (the registered ctest invocation sets neither):
//   VDR_ACCEPT_ONLY=1,4,9   run a subset of criteria
//   VDR_ACCEPT_SCALE=0.2    scale the end-to-end training budgets; prints a
//                           rehearsal banner since a scaled run is not a
//                           verdict on the full budgets

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "vdr/attention.hpp"
#include "vdr/degrade.hpp"
#include "vdr/diffusion.hpp"
#include "vdr/dit.hpp"
#include "vdr/instance_metrics.hpp"
#include "vdr/mask.hpp"
#include "vdr/metrics.hpp"
#include "vdr/model.hpp"
#include "vdr/phantom.hpp"
#include "vdr/split.hpp"
#include "vdr/train.hpp"
#include "vdr/volume.hpp"

namespace fs = std::filesystem;
using vdr::Rng;
using vdr::Tensor;
using vdr::Volume;

namespace {

double g_scale = 1.0;  // end-to-end budget scale (VDR_ACCEPT_SCALE)

void note(const std::string& msg) {
    std::fprintf(stderr, "    .. %s\n", msg.c_str());
    std::fflush(stderr);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return std::string(buf);
}

template <typename T>
Tensor<T> randn(const std::vector<int64_t>& shape, Rng& rng, double scale = 1.0) {
    Tensor<T> t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(scale * rng.normal());
    return t;
}

struct Verdict {
    bool pass = true;
    std::vector<std::string> failures;
    std::string summary;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures.push_back(what);
        }
    }
};

// ---------------------------------------------------------------------------
// Criterion 1: the lateral, axial, and decomposed attention stages match an
// explicit-loop softmax oracle within 1e-5 at 32-bit precision on 50 random
// inputs up to 4 slices x 16 tokens x 32 channels, and the factorization's
// locality is exact: the lateral stage commutes bitwise with depth
// permutations, the axial stage with lateral permutations.
// ---------------------------------------------------------------------------

// Straight-loop multi-head softmax attention in double precision, reading the
// stage's projection weights directly from the registry.
Tensor<float> oracle_attention(const vdr::ParamRegistry<float>& reg,
                               const vdr::AttentionStage<float>& st, const Tensor<float>& x) {
    const int64_t B = x.dim(0), L = x.dim(1), dim = x.dim(2);
    const int64_t heads = st.heads, dh = dim / heads;
    auto project = [&](const vdr::LinearLayer<float>& lin, std::vector<double>& out) {
        const auto& W = reg.at(lin.w).value;
        const auto& b = reg.at(lin.b).value;
        out.assign(static_cast<size_t>(B * L * dim), 0.0);
        for (int64_t r = 0; r < B * L; ++r)
            for (int64_t o = 0; o < dim; ++o) {
                double acc = static_cast<double>(b[o]);
                for (int64_t i = 0; i < dim; ++i)
                    acc += static_cast<double>(W[o * dim + i]) * static_cast<double>(x[r * dim + i]);
                out[static_cast<size_t>(r * dim + o)] = acc;
            }
    };
    std::vector<double> q, k, v;
    project(st.q, q);
    project(st.k, k);
    project(st.v, v);

    std::vector<double> merged(static_cast<size_t>(B * L * dim), 0.0);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> scores(static_cast<size_t>(L));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t i = 0; i < L; ++i) {
                double mx = -1e300;
                for (int64_t j = 0; j < L; ++j) {
                    double s = 0;
                    for (int64_t c = 0; c < dh; ++c)
                        s += q[static_cast<size_t>((b * L + i) * dim + h * dh + c)] *
                             k[static_cast<size_t>((b * L + j) * dim + h * dh + c)];
                    scores[static_cast<size_t>(j)] = s * inv_sqrt;
                    mx = std::max(mx, scores[static_cast<size_t>(j)]);
                }
                double z = 0;
                for (int64_t j = 0; j < L; ++j) {
                    scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
                    z += scores[static_cast<size_t>(j)];
                }
                for (int64_t c = 0; c < dh; ++c) {
                    double acc = 0;
                    for (int64_t j = 0; j < L; ++j)
                        acc += scores[static_cast<size_t>(j)] / z *
                               v[static_cast<size_t>((b * L + j) * dim + h * dh + c)];
                    merged[static_cast<size_t>((b * L + i) * dim + h * dh + c)] = acc;
                }
            }

    const auto& Wo = reg.at(st.o.w).value;
    const auto& bo = reg.at(st.o.b).value;
    Tensor<float> out({B, L, dim});
    for (int64_t r = 0; r < B * L; ++r)
        for (int64_t o = 0; o < dim; ++o) {
            double acc = static_cast<double>(bo[o]);
            for (int64_t i = 0; i < dim; ++i)
                acc += static_cast<double>(Wo[o * dim + i]) * merged[static_cast<size_t>(r * dim + i)];
            out[r * dim + o] = static_cast<float>(acc);
        }
    return out;
}

Tensor<float> run_stage(vdr::ParamRegistry<float>& reg, const vdr::AttentionStage<float>& st,
                        const Tensor<float>& x, vdr::AttnAxis axis) {
    vdr::Tape<float> t;
    return t.val(st.apply(t, reg, t.input(x), axis));
}

Tensor<float> permute_rows(const Tensor<float>& x, const std::vector<int64_t>& perm) {
    const int64_t B = x.dim(0), stride = x.dim(1) * x.dim(2);
    Tensor<float> out(x.shape());
    for (int64_t b = 0; b < B; ++b)
        std::memcpy(out.data() + b * stride, x.data() + perm[static_cast<size_t>(b)] * stride,
                    static_cast<size_t>(stride) * sizeof(float));
    return out;
}

Tensor<float> permute_cols(const Tensor<float>& x, const std::vector<int64_t>& perm) {
    const int64_t B = x.dim(0), L = x.dim(1), dim = x.dim(2);
    Tensor<float> out(x.shape());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l)
            std::memcpy(out.data() + (b * L + l) * dim,
                        x.data() + (b * L + perm[static_cast<size_t>(l)]) * dim,
                        static_cast<size_t>(dim) * sizeof(float));
    return out;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), static_cast<size_t>(a.size()) * sizeof(float)) == 0;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

Verdict criterion_attention_oracle() {
    constexpr double kTol = 1e-5;  // 32-bit stage vs double oracle
    Verdict v;
    Rng rng(101, 0xacc1);
    double worst = 0;

    for (int trial = 0; trial < 50; ++trial) {
        const int64_t D = 1 + static_cast<int64_t>(rng.uniform_index(4));    // up to 4
        const int64_t N = 1 + static_cast<int64_t>(rng.uniform_index(16));   // up to 16
        const std::array<int64_t, 3> dims{8, 16, 32};
        const int64_t dim = dims[rng.uniform_index(3)];
        const std::array<int64_t, 3> headchoices{1, 2, 4};
        const int64_t heads = headchoices[rng.uniform_index(3)];

        vdr::ParamRegistry<float> reg;
        Rng init(rng.next_u64(), 0x11);
        vdr::AttentionStage<float> st(reg, "st", dim, heads, init);
        Tensor<float> x = randn<float>({D, N, dim}, rng);

        Tensor<float> lib = run_stage(reg, st, x, vdr::AttnAxis::kLateral);
        Tensor<float> ora = oracle_attention(reg, st, x);
        worst = std::max(worst, max_abs_diff(lib, ora));

        // Axial arrangement of the same stage: tokens-through-depth batches.
        Tensor<float> xt = randn<float>({N, D, dim}, rng);
        worst = std::max(worst, max_abs_diff(run_stage(reg, st, xt, vdr::AttnAxis::kAxial),
                                             oracle_attention(reg, st, xt)));
    }
    v.require(worst < kTol, fmt("stage vs oracle max |diff| %.3g >= %.0e", worst, kTol));

    // Decomposed (lateral then axial) against the composed oracle.
    double worst_dec = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t D = 2 + static_cast<int64_t>(rng.uniform_index(3));
        const int64_t N = 2 + static_cast<int64_t>(rng.uniform_index(15));
        vdr::ParamRegistry<float> reg;
        Rng init(rng.next_u64(), 0x12);
        vdr::DecomposedAttention<float> dec(reg, "dec", 32, 4, init);
        Tensor<float> x = randn<float>({D, N, 32}, rng);

        vdr::Tape<float> t;
        Tensor<float> lib = t.val(dec.apply(t, reg, t.input(x)));

        Tensor<float> lat = oracle_attention(reg, dec.lateral, x);
        // permute to [N, D, dim], run the axial stage's oracle, permute back
        std::vector<int64_t> ident;
        Tensor<float> latT({N, D, 32});
        for (int64_t d = 0; d < D; ++d)
            for (int64_t n = 0; n < N; ++n)
                std::memcpy(latT.data() + (n * D + d) * 32, lat.data() + (d * N + n) * 32,
                            32 * sizeof(float));
        Tensor<float> axT = oracle_attention(reg, dec.axial, latT);
        Tensor<float> ora({D, N, 32});
        for (int64_t d = 0; d < D; ++d)
            for (int64_t n = 0; n < N; ++n)
                std::memcpy(ora.data() + (d * N + n) * 32, axT.data() + (n * D + d) * 32,
                            32 * sizeof(float));
        worst_dec = std::max(worst_dec, max_abs_diff(lib, ora));
    }
    v.require(worst_dec < kTol, fmt("decomposed vs oracle max |diff| %.3g >= %.0e", worst_dec, kTol));

    // Locality: the lateral stage commutes with depth permutations, the axial
    // arrangement with permutations of the lateral sites.  Asserted bitwise on
    // random 4 x 9 x 16 inputs (the pinned contract geometry, where the batched
    // projections keep every row in a full GEMM panel).  At other geometries
    // the remainder-panel kernels may round differently, so locality is
    // additionally checked there at float-rounding tolerance.
    bool exact = true;
    double worst_loc = 0;
    for (int trial = 0; trial < 16; ++trial) {
        const bool pinned = trial < 8;
        const int64_t D = pinned ? 4 : 2 + static_cast<int64_t>(rng.uniform_index(3));
        const int64_t N = pinned ? 9 : 2 + static_cast<int64_t>(rng.uniform_index(15));
        vdr::ParamRegistry<float> reg;
        Rng init(rng.next_u64(), 0x13);
        vdr::DecomposedAttention<float> dec(reg, "dec", 16, 2, init);
        Tensor<float> x = randn<float>({D, N, 16}, rng);

        std::vector<int64_t> pd(static_cast<size_t>(D)), pn(static_cast<size_t>(N));
        for (int64_t i = 0; i < D; ++i) pd[static_cast<size_t>(i)] = i;
        for (int64_t i = 0; i < N; ++i) pn[static_cast<size_t>(i)] = i;
        for (int64_t i = D - 1; i > 0; --i)
            std::swap(pd[static_cast<size_t>(i)], pd[rng.uniform_index(static_cast<uint64_t>(i + 1))]);
        for (int64_t i = N - 1; i > 0; --i)
            std::swap(pn[static_cast<size_t>(i)], pn[rng.uniform_index(static_cast<uint64_t>(i + 1))]);

        auto lat = [&](const Tensor<float>& in) {
            vdr::Tape<float> t;
            return t.val(dec.apply_lateral(t, reg, t.input(in)));
        };
        auto ax = [&](const Tensor<float>& in) {
            vdr::Tape<float> t;
            return t.val(dec.apply_axial(t, reg, t.input(in)));
        };
        if (pinned) {
            exact = exact && same_bits(lat(permute_rows(x, pd)), permute_rows(lat(x), pd));
            exact = exact && same_bits(ax(permute_cols(x, pn)), permute_cols(ax(x), pn));
        } else {
            worst_loc = std::max(
                worst_loc, max_abs_diff(lat(permute_rows(x, pd)), permute_rows(lat(x), pd)));
            worst_loc = std::max(
                worst_loc, max_abs_diff(ax(permute_cols(x, pn)), permute_cols(ax(x), pn)));
        }
    }
    v.require(exact, "permutation locality is not bitwise exact at the pinned geometry");
    v.require(worst_loc < 1e-6,
              fmt("permutation locality at random geometries %.2e >= 1e-6", worst_loc));

    v.summary = fmt("max |stage-oracle| %.2e, |decomposed-oracle| %.2e (tol 1e-5); "
                    "locality bitwise at 4x9x16, %.1e elsewhere",
                    worst, worst_dec, worst_loc);
    return v;
}

// ---------------------------------------------------------------------------
// Criterion 2: instrumented attention-score multiply-accumulate counts scale
// as D*N^2 for the lateral stage and N*D^2 for the axial stage across
// (D, N) in {4,8} x {64,256}; every measured/theoretical ratio within 1%.
// ---------------------------------------------------------------------------

Verdict criterion_mac_scaling() {
    constexpr double kTol = 0.01;
    constexpr int64_t kDim = 32, kHeads = 4;
    Verdict v;
    const std::array<int64_t, 2> Ds{4, 8}, Ns{64, 256};
    std::map<std::pair<int64_t, int64_t>, uint64_t> lat, ax;

    for (int64_t D : Ds)
        for (int64_t N : Ns) {
            vdr::ParamRegistry<float> reg;
            Rng init(7, 0x14);
            vdr::AttentionStage<float> st(reg, "st", kDim, kHeads, init);
            Rng rng(D * 1000 + N, 0x15);

            vdr::attn_macs().reset();
            run_stage(reg, st, randn<float>({D, N, kDim}, rng), vdr::AttnAxis::kLateral);
            lat[{D, N}] = vdr::attn_macs().lateral;

            vdr::attn_macs().reset();
            run_stage(reg, st, randn<float>({N, D, kDim}, rng), vdr::AttnAxis::kAxial);
            ax[{D, N}] = vdr::attn_macs().axial;
        }

    auto ratio_ok = [&](double measured, double theory) {
        return std::abs(measured / theory - 1.0) <= kTol;
    };
    for (int64_t N : Ns) {
        v.require(ratio_ok(double(lat[{8, N}]) / double(lat[{4, N}]), 2.0),
                  fmt("lateral D-scaling at N=%lld", static_cast<long long>(N)));
        v.require(ratio_ok(double(ax[{8, N}]) / double(ax[{4, N}]), 4.0),
                  fmt("axial D-scaling at N=%lld", static_cast<long long>(N)));
    }
    for (int64_t D : Ds) {
        v.require(ratio_ok(double(lat[{D, 256}]) / double(lat[{D, 64}]), 16.0),
                  fmt("lateral N-scaling at D=%lld", static_cast<long long>(D)));
        v.require(ratio_ok(double(ax[{D, 256}]) / double(ax[{D, 64}]), 4.0),
                  fmt("axial N-scaling at D=%lld", static_cast<long long>(D)));
    }
    // The instrumented counts themselves equal the closed forms.
    for (int64_t D : Ds)
        for (int64_t N : Ns) {
            v.require(lat[{D, N}] == static_cast<uint64_t>(D * N * N * kDim),
                      fmt("lateral count at D=%lld N=%lld", (long long)D, (long long)N));
            v.require(ax[{D, N}] == static_cast<uint64_t>(N * D * D * kDim),
                      fmt("axial count at D=%lld N=%lld", (long long)D, (long long)N));
        }

    v.summary = fmt("lateral macs %llu..%llu = D*N^2*d, axial %llu..%llu = N*D^2*d; ratios within 1%%",
                    (unsigned long long)lat[{4, 64}], (unsigned long long)lat[{8, 256}],
                    (unsigned long long)ax[{4, 64}], (unsigned long long)ax[{8, 256}]);
    return v;
}

// ---------------------------------------------------------------------------
// Criterion 3: central finite differences at 64-bit agree with the analytic
// gradients (relative error < 1e-4) for a transformer block, the full
// denoiser forward, the refining decoder, and the training objective, on a
// two-block toy model.
// ---------------------------------------------------------------------------

vdr::ModelConfig toy_2block_config() {
    vdr::ModelConfig mc;
    mc.dim = 8;
    mc.heads = 2;
    mc.blocks = 2;
    mc.patch = 1;
    mc.latent_channels = 2;
    mc.depth = 3;
    mc.target_h = 16;
    mc.target_w = 16;
    mc.refiner_feat = 2;
    mc.refiner_width = 4;
    mc.diffusion_steps = 50;
    return mc;
}

Verdict criterion_gradients() {
    constexpr double kTol = 1e-4;
    Verdict v;
    double worst = 0;

    {  // one transformer block in isolation
        vdr::ParamRegistry<double> reg;
        Rng init(11, 0x21);
        vdr::DitBlock<double> blk(reg, "blk", 8, 2, 2, init);
        Rng data(12, 0x22);
        const int64_t s_id = reg.add("acc.s", randn<double>({2, 4, 8}, data, 0.5));
        const int64_t c_id = reg.add("acc.cond", randn<double>({2, 4, 2}, data, 0.5));
        const int64_t f_id = reg.add("acc.fused", randn<double>({1, 8}, data, 0.5));
        auto rep = gc::check(
            reg,
            [&](vdr::Tape<double>& t) {
                auto out = blk.apply(t, reg, t.param(reg, s_id), t.param(reg, c_id),
                                     t.param(reg, f_id));
                Tensor<double> z1(t.val(out.tokens).shape()), z2(t.val(out.injection).shape());
                return t.add(t.mse(out.tokens, t.input(z1)), t.mse(out.injection, t.input(z2)));
            },
            8, 31, kTol);
        v.require(rep.ok(kTol), "dit block gradients: " +
                                    (rep.failures.empty() ? "no coordinates checked"
                                                          : rep.failures.front()));
        worst = std::max(worst, rep.max_rel);
        note(fmt("dit block: %d coords, max rel %.2e", rep.checked, rep.max_rel));
    }

    vdr::RestorationModel<double> M(toy_2block_config(), 13);
    Rng data(14, 0x23);
    const auto latent_shape = std::vector<int64_t>{3, 2, 2, 2};

    {  // denoiser forward
        const int64_t z_id = M.reg.add("acc.zt", randn<double>(latent_shape, data, 0.7));
        const int64_t c_id = M.reg.add("acc.cl", randn<double>(latent_shape, data, 0.7));
        const int64_t f_id = M.reg.add("acc.cf", randn<double>({1, 8}, data, 0.7));
        auto rep = gc::check(
            M.reg,
            [&](vdr::Tape<double>& t) {
                vdr::Var eps = M.den.forward(t, M.reg, t.param(M.reg, z_id), t.param(M.reg, c_id),
                                             t.param(M.reg, f_id));
                Tensor<double> zero(t.val(eps).shape());
                return t.mse(eps, t.input(zero));
            },
            8, 32, kTol);
        v.require(rep.ok(kTol), "denoiser forward gradients: " +
                                    (rep.failures.empty() ? "no coordinates checked"
                                                          : rep.failures.front()));
        worst = std::max(worst, rep.max_rel);
        note(fmt("denoiser forward: %d coords, max rel %.2e", rep.checked, rep.max_rel));
    }

    {  // refining decoder
        const int64_t z_id = M.reg.add("acc.z0", randn<double>(latent_shape, data, 0.7));
        const int64_t l_id = M.reg.add("acc.lq", randn<double>({3, 1, 16, 16}, data, 0.3));
        Tensor<double> target = randn<double>({3, 1, 16, 16}, data, 0.3);
        auto rep = gc::check(
            M.reg,
            [&](vdr::Tape<double>& t) {
                vdr::Var out = M.refiner.refine(t, M.reg, t.param(M.reg, z_id),
                                                t.param(M.reg, l_id));
                return t.mse(out, t.input(target));
            },
            8, 33, kTol);
        v.require(rep.ok(kTol), "refine-decode gradients: " +
                                    (rep.failures.empty() ? "no coordinates checked"
                                                          : rep.failures.front()));
        worst = std::max(worst, rep.max_rel);
        note(fmt("refine decode: %d coords, max rel %.2e", rep.checked, rep.max_rel));
    }

    {  // training objective at a fixed diffusion draw
        const int64_t z_id = M.reg.add("acc.dz0", randn<double>(latent_shape, data, 0.7));
        const int64_t c_id = M.reg.add("acc.dcl", randn<double>(latent_shape, data, 0.7));
        const int64_t f_id = M.reg.add("acc.dcf", randn<double>({1, 8}, data, 0.7));
        Tensor<double> eps = randn<double>(latent_shape, data);
        auto rep = gc::check(
            M.reg,
            [&](vdr::Tape<double>& t) {
                return vdr::diffusion_loss(t, M.reg, M.den, t.param(M.reg, z_id),
                                           t.param(M.reg, c_id), t.param(M.reg, f_id), 17,
                                           M.sched, eps);
            },
            8, 34, kTol);
        v.require(rep.ok(kTol), "diffusion loss gradients: " +
                                    (rep.failures.empty() ? "no coordinates checked"
                                                          : rep.failures.front()));
        worst = std::max(worst, rep.max_rel);
        note(fmt("diffusion loss: %d coords, max rel %.2e", rep.checked, rep.max_rel));
    }

    v.summary = fmt("four targets, max relative error %.2e (tol 1e-4)", worst);
    return v;
}

// ---------------------------------------------------------------------------
// Criterion 4: diffusion algebra.  Monte-Carlo forward marginals within 2%
// (z0 ~ N(0,1) keeps Var(z_t) = 1 at every step); running the sampler with
// the exactly-planted noise recovers the clean latent to 1e-6 across a
// 50-step subsequence, and a single oracle step recovers it to 1e-5.
// ---------------------------------------------------------------------------

Verdict criterion_diffusion_algebra() {
    Verdict v;
    auto sch = vdr::DiffusionSchedule::linear(1000, 1e-4, 0.02);
    Rng rng(404, 0x41);

    {  // Monte-Carlo marginals at a mid-schedule step
        const int64_t t = 600, n = 4000, dim = 512;
        const double sa = std::sqrt(sch.abar(t)), want_var_c = 1.0 - sch.abar(t);
        double sum = 0, sum2 = 0, csum = 0, csum2 = 0;
        for (int64_t d = 0; d < n; ++d) {
            for (int64_t i = 0; i < dim; ++i) {
                const double z0 = rng.normal(), eps = rng.normal();
                const double zt = sa * z0 + std::sqrt(want_var_c) * eps;
                sum += zt;
                sum2 += zt * zt;
                const double c = zt - sa * z0;  // conditional residual
                csum += c;
                csum2 += c * c;
            }
        }
        const double cnt = static_cast<double>(n * dim);
        const double mean = sum / cnt, var = sum2 / cnt - mean * mean;
        const double cmean = csum / cnt, cvar = csum2 / cnt - cmean * cmean;
        v.require(std::abs(mean) < 0.02, fmt("marginal mean %.4f outside 2%%", mean));
        v.require(std::abs(var - 1.0) < 0.02, fmt("Var(z_t) %.4f not within 2%% of 1", var));
        v.require(std::abs(cvar - want_var_c) / want_var_c < 0.02,
                  fmt("conditional variance off by %.2f%%",
                      100.0 * std::abs(cvar - want_var_c) / want_var_c));
        v.summary = fmt("MC Var(z_t)=%.4f (want 1 within 2%%)", var);

        // The library's forward step agrees with the closed form it samples.
        Tensor<double> z0 = randn<double>({64}, rng), eps = randn<double>({64}, rng);
        Tensor<double> zt = vdr::forward_diffuse(z0, eps, t, sch);
        double md = 0;
        for (int64_t i = 0; i < 64; ++i)
            md = std::max(md, std::abs(zt[i] - (sa * z0[i] + std::sqrt(want_var_c) * eps[i])));
        v.require(md < 1e-12, "forward step disagrees with its closed form");
    }

    {  // exact-noise inversion across the strided subsequence
        Tensor<double> z0 = randn<double>({2, 3, 8, 8}, rng);
        Tensor<double> eps = randn<double>({2, 3, 8, 8}, rng);
        double worst = 0;
        for (int64_t t : {0L, 399L, 999L}) {
            Tensor<double> zt = vdr::forward_diffuse(z0, eps, t, sch);
            Tensor<double> rec = vdr::ddim_step(zt, eps, t, int64_t{-1}, sch);
            for (int64_t i = 0; i < rec.size(); ++i)
                worst = std::max(worst, std::abs(rec[i] - z0[i]));
        }
        Tensor<double> zT = vdr::forward_diffuse(z0, eps, 999, sch);
        auto taus = vdr::ddim_taus(1000, 50);
        Tensor<double> rec = vdr::ddim_sample(
            [&](const Tensor<double>&, int64_t) { return eps; }, zT, taus, sch);
        for (int64_t i = 0; i < rec.size(); ++i)
            worst = std::max(worst, std::abs(rec[i] - z0[i]));
        v.require(worst < 1e-6, fmt("exact-noise inversion error %.2e >= 1e-6", worst));
        v.summary += fmt("; 50-step inversion max err %.1e", worst);
    }

    {  // single-step oracle sampler
        Tensor<double> z0 = randn<double>({128}, rng);
        Tensor<double> eps = randn<double>({128}, rng);
        Tensor<double> zT = vdr::forward_diffuse(z0, eps, 999, sch);
        auto taus = vdr::ddim_taus(1000, 1);
        Tensor<double> rec = vdr::ddim_sample(
            [&](const Tensor<double>&, int64_t) { return eps; }, zT, taus, sch);
        double worst = 0;
        for (int64_t i = 0; i < rec.size(); ++i)
            worst = std::max(worst, std::abs(rec[i] - z0[i]));
        v.require(worst < 1e-5, fmt("single-step recovery error %.2e >= 1e-5", worst));
        v.summary += fmt("; single-step max err %.1e", worst);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Criterion 5: metric hand values match to four decimals and independent
// straight-loop references agree; panoptic quality factors exactly into
// segmentation and recognition quality on random instance maps.
// ---------------------------------------------------------------------------

vdr::InstanceMap random_instances(Rng& rng, int64_t h, int64_t w, const vdr::InstanceMap* near) {
    vdr::InstanceMap m({h, w});
    if (near && rng.uniform() < 0.5) {
        // jittered copy: each instance shifted by up to +/-2 in each axis
        const int64_t dy = static_cast<int64_t>(rng.uniform_index(5)) - 2;
        const int64_t dx = static_cast<int64_t>(rng.uniform_index(5)) - 2;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const int64_t sy = y - dy, sx = x - dx;
                if (sy >= 0 && sy < h && sx >= 0 && sx < w) m.at(y, x) = near->at(sy, sx);
            }
        return m;
    }
    const int64_t k = static_cast<int64_t>(rng.uniform_index(5));
    for (int64_t label = 1; label <= k; ++label) {
        const int64_t y0 = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(h - 3)));
        const int64_t x0 = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(w - 3)));
        const int64_t hh = 2 + static_cast<int64_t>(rng.uniform_index(5));
        const int64_t ww = 2 + static_cast<int64_t>(rng.uniform_index(5));
        for (int64_t y = y0; y < std::min(h, y0 + hh); ++y)
            for (int64_t x = x0; x < std::min(w, x0 + ww); ++x)
                m.at(y, x) = static_cast<int32_t>(label);
    }
    return m;
}

// Exhaustive-IoU panoptic quality, independent of the library's matcher.
void brute_pq(const vdr::InstanceMap& pred, const vdr::InstanceMap& gt, double* pq, double* sq,
              double* rq) {
    std::set<int32_t> pl, gl;
    for (int64_t i = 0; i < pred.size(); ++i)
        if (pred[i] > 0) pl.insert(pred[i]);
    for (int64_t i = 0; i < gt.size(); ++i)
        if (gt[i] > 0) gl.insert(gt[i]);
    int64_t tp = 0;
    double iou_sum = 0;
    std::set<int32_t> matched_p, matched_g;
    for (int32_t a : pl)
        for (int32_t b : gl) {
            int64_t inter = 0, ua = 0, ub = 0;
            for (int64_t i = 0; i < pred.size(); ++i) {
                const bool ia = pred[i] == a, ib = gt[i] == b;
                inter += ia && ib;
                ua += ia;
                ub += ib;
            }
            const double iou = static_cast<double>(inter) / static_cast<double>(ua + ub - inter);
            if (iou > 0.5) {  // IoU > 0.5 matches are provably one-to-one
                ++tp;
                iou_sum += iou;
                matched_p.insert(a);
                matched_g.insert(b);
            }
        }
    const int64_t fp = static_cast<int64_t>(pl.size() - matched_p.size());
    const int64_t fn = static_cast<int64_t>(gl.size() - matched_g.size());
    *sq = tp > 0 ? iou_sum / static_cast<double>(tp) : 0.0;
    const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn);
    *rq = denom > 0 ? static_cast<double>(tp) / denom : 0.0;
    *pq = *sq * *rq;
}

Verdict criterion_metrics() {
    constexpr double kHand = 5e-5;  // four-decimal agreement
    Verdict v;

    {  // PSNR 6.0206 dB: all-zero vs all-0.5, range 1
        Volume a(2, 4, 4), b(2, 4, 4);
        std::fill(b.data.begin(), b.data.end(), 0.5f);
        v.require(std::abs(vdr::psnr(a, b) - 6.0206) < kHand,
                  fmt("psnr hand value %.6f != 6.0206", vdr::psnr(a, b)));
    }
    {  // CCC 4/7 and 8/13
        vdr::Profile1D x, y1, y2;
        x.values = {0, 1, 2};
        y1.values = {1, 2, 3};
        y2.values = {0, 2, 4};
        v.require(std::abs(vdr::ccc(x, y1) - 4.0 / 7.0) < kHand, "ccc([0,1,2],[1,2,3]) != 4/7");
        v.require(std::abs(vdr::ccc(x, y2) - 8.0 / 13.0) < kHand, "ccc([0,1,2],[0,2,4]) != 8/13");
    }
    {  // Dice 0.6667: |A|=4, |B|=2, |A/\B|=2
        Tensor<uint8_t> a({4, 4}), b({4, 4});
        a.at(int64_t{0}, int64_t{0}) = a.at(int64_t{0}, int64_t{1}) = 1;
        a.at(int64_t{1}, int64_t{0}) = a.at(int64_t{1}, int64_t{1}) = 1;
        b.at(int64_t{0}, int64_t{0}) = b.at(int64_t{0}, int64_t{1}) = 1;
        v.require(std::abs(vdr::dice(a, b) - 2.0 / 3.0) < kHand, "dice hand value != 0.6667");
    }
    {  // PQ 0.5333: one match at IoU 0.8 plus one unmatched prediction
        vdr::InstanceMap gt({4, 8}), pred({4, 8});
        for (int64_t i = 0; i < 5; ++i) gt.at(int64_t{0}, i) = 1;
        for (int64_t i = 0; i < 4; ++i) pred.at(int64_t{0}, i) = 1;
        pred.at(int64_t{3}, int64_t{5}) = pred.at(int64_t{3}, int64_t{6}) =
            pred.at(int64_t{3}, int64_t{7}) = 2;
        auto r = vdr::panoptic_quality(pred, gt);
        v.require(r.tp == 1 && r.fp == 1 && r.fn == 0, "pq hand case: wrong match counts");
        v.require(std::abs(r.pq - 0.5333) < kHand, fmt("pq hand value %.6f != 0.5333", r.pq));
    }
    {  // SSIM of constant 0 vs constant 1 at range 1: C1 / (1 + C1)
        Volume a(1, 16, 16), b(1, 16, 16);
        std::fill(b.data.begin(), b.data.end(), 1.0f);
        const double c1 = 1e-4, want = c1 / (1.0 + c1);  // = 9.999e-5 to four figures
        const double got = vdr::ssim(a, b);
        v.require(std::abs(got - want) < 1e-12, "ssim constant-offset closed form");
        v.require(std::abs(got - 9.999e-5) < 5e-9, fmt("ssim offset %.6e != 9.999e-5", got));
    }

    Rng rng(505, 0x51);
    {  // PSNR / RMSE against their definitions
        Volume a(2, 9, 9), b(2, 9, 9);
        for (auto& x : a.data) x = static_cast<float>(rng.uniform());
        for (auto& x : b.data) x = static_cast<float>(rng.uniform());
        double se = 0;
        for (size_t i = 0; i < a.data.size(); ++i) {
            const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
            se += d * d;
        }
        const double mse = se / static_cast<double>(a.data.size());
        v.require(std::abs(vdr::rmse(a, b) - std::sqrt(mse)) < 1e-12, "rmse brute force");
        v.require(std::abs(vdr::psnr(a, b) - 10.0 * std::log10(1.0 / mse)) < 1e-10,
                  "psnr brute force");
    }
    {  // CCC / PCC against brute-force moments on random profiles
        for (int trial = 0; trial < 20; ++trial) {
            const int64_t n = 31;
            vdr::Profile1D x, y;
            for (int64_t i = 0; i < n; ++i) {
                x.values.push_back(rng.normal());
                y.values.push_back(0.4 * x.values.back() + rng.normal());
            }
            double mx = 0, my = 0;
            for (int64_t i = 0; i < n; ++i) mx += x.values[i], my += y.values[i];
            mx /= n;
            my /= n;
            double vx = 0, vy = 0, cxy = 0;
            for (int64_t i = 0; i < n; ++i) {
                vx += (x.values[i] - mx) * (x.values[i] - mx);
                vy += (y.values[i] - my) * (y.values[i] - my);
                cxy += (x.values[i] - mx) * (y.values[i] - my);
            }
            vx /= n;
            vy /= n;
            cxy /= n;
            const double want_ccc = 2 * cxy / (vx + vy + (mx - my) * (mx - my));
            const double want_pcc = cxy / std::sqrt(vx * vy);
            v.require(std::abs(vdr::ccc(x, y) - want_ccc) < 1e-10, "ccc brute force");
            v.require(std::abs(vdr::pcc(x, y) - want_pcc) < 1e-10, "pcc brute force");
        }
    }
    {  // SSIM against a naive valid-window double loop
        Volume a(1, 24, 24), b(1, 24, 24);
        for (auto& x : a.data) x = static_cast<float>(rng.uniform());
        for (size_t i = 0; i < b.data.size(); ++i)
            b.data[i] = std::clamp(a.data[i] + 0.2f * static_cast<float>(rng.normal()), 0.0f, 1.0f);
        const int64_t win = 7, h = 24, w = 24;
        const double c1 = 1e-4, c2 = 9e-4;
        double acc = 0;
        int64_t cnt = 0;
        for (int64_t y = 0; y + win <= h; ++y)
            for (int64_t x = 0; x + win <= w; ++x) {
                double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
                for (int64_t dy = 0; dy < win; ++dy)
                    for (int64_t dx = 0; dx < win; ++dx) {
                        const double va = a.at(0, y + dy, x + dx), vb = b.at(0, y + dy, x + dx);
                        ma += va;
                        mb += vb;
                        aa += va * va;
                        bb += vb * vb;
                        ab += va * vb;
                    }
                const double n = static_cast<double>(win * win);
                ma /= n;
                mb /= n;
                const double va = aa / n - ma * ma, vb = bb / n - mb * mb, cab = ab / n - ma * mb;
                acc += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1) * (2 * cab + c2) /
                       (va + vb + c2);
                ++cnt;
            }
        v.require(std::abs(vdr::ssim(a, b) - acc / static_cast<double>(cnt)) < 1e-10,
                  "ssim brute force");
    }
    {  // PQ = SQ * RQ and the independent matcher on 100 random instance maps
        double worst_fact = 0, worst_ref = 0;
        for (int trial = 0; trial < 100; ++trial) {
            vdr::InstanceMap gt = random_instances(rng, 16, 16, nullptr);
            vdr::InstanceMap pred = random_instances(rng, 16, 16, &gt);
            auto r = vdr::panoptic_quality(pred, gt);
            worst_fact = std::max(worst_fact, std::abs(r.pq - r.sq * r.rq));
            double pq, sq, rq;
            brute_pq(pred, gt, &pq, &sq, &rq);
            worst_ref = std::max({worst_ref, std::abs(r.pq - pq), std::abs(r.sq - sq),
                                  std::abs(r.rq - rq)});
        }
        v.require(worst_fact < 1e-12, fmt("pq factorization residual %.2e", worst_fact));
        v.require(worst_ref < 1e-12, fmt("pq vs exhaustive matcher diff %.2e", worst_ref));
        v.summary = fmt("hand values to 4 decimals; brute-force refs; pq=sq*rq residual %.1e",
                        worst_fact);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Criterion 6: degradation statistics.  Mask-vs-identity branch frequencies
// within [0.88,0.92] / [0.08,0.12] over 1e5 draws; masked ratios uniform on
// [0.5,0.75] by a Kolmogorov-Smirnov test at alpha = 0.01; the calibrated
// noise stage lands within 5% of its target SNR; separable PSF convolution
// matches a dense triple-loop oracle within 1e-5.
// ---------------------------------------------------------------------------

int64_t reflect101(int64_t i, int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

Verdict criterion_degradation_stats() {
    Verdict v;

    {  // branch frequencies and ratio distribution
        const int64_t draws = 100000, D = 6, N = 24;
        int64_t masked = 0;
        std::vector<double> ratios;
        ratios.reserve(static_cast<size_t>(draws));
        bool counts_exact = true;
        for (int64_t i = 0; i < draws; ++i) {
            auto m = vdr::sample_mask(D, N, static_cast<uint64_t>(7000000 + i));
            if (m.count() > 0) {
                ++masked;
                ratios.push_back(m.ratio);
                counts_exact = counts_exact &&
                               m.count() == std::llround(m.ratio * static_cast<double>(D * N));
            }
        }
        const double f = static_cast<double>(masked) / static_cast<double>(draws);
        v.require(f >= 0.88 && f <= 0.92, fmt("masked branch frequency %.4f outside [0.88,0.92]", f));
        v.require(1.0 - f >= 0.08 && 1.0 - f <= 0.12,
                  fmt("identity branch frequency %.4f outside [0.08,0.12]", 1.0 - f));
        v.require(counts_exact, "masked position count != round(ratio * D * N)");

        std::sort(ratios.begin(), ratios.end());
        const double n = static_cast<double>(ratios.size());
        double ks = 0;
        for (size_t i = 0; i < ratios.size(); ++i) {
            const double F = std::clamp((ratios[i] - 0.5) / 0.25, 0.0, 1.0);
            ks = std::max(ks, std::abs(static_cast<double>(i) / n - F));
            ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - F));
        }
        const double crit = 1.6276 / std::sqrt(n);  // alpha = 0.01 asymptotic
        v.require(ks < crit, fmt("ratio KS statistic %.5f >= %.5f (alpha 0.01)", ks, crit));
        v.summary = fmt("mask branch %.3f/%.3f, KS %.4f < %.4f", f, 1.0 - f, ks, crit);
    }

    {  // empirical SNR of the calibrated noise stage
        vdr::PhantomConfig pc;
        pc.depth = 8;
        pc.height = 48;
        pc.width = 48;
        pc.ellipsoids = 3;
        pc.tubes = 2;
        pc.sheets = 0;
        pc.seed = 606;
        Volume clean = vdr::generate_phantom(pc);
        for (double target : {1.0, 2.0, 8.0}) {
            Volume noisy = vdr::add_noise_to_snr(clean, target, 909);
            double se = 0;
            for (size_t i = 0; i < clean.data.size(); ++i) {
                const double d = static_cast<double>(noisy.data[i]) -
                                 static_cast<double>(clean.data[i]);
                se += d * d;
            }
            const double sd = std::sqrt(se / static_cast<double>(clean.data.size()));
            const double est = static_cast<double>(clean.mean()) / sd;
            v.require(std::abs(est / target - 1.0) <= 0.05,
                      fmt("empirical snr %.3f vs target %.1f off by >5%%", est, target));
        }
    }

    {  // separable PSF convolution vs a dense triple-loop oracle
        vdr::DegradeConfig dc;
        dc.sigma_axial = 1.5;
        dc.sigma_lateral = 0.8;
        auto k = vdr::anisotropic_psf_kernel(dc);
        Rng rng(707, 0x61);
        Volume x(8, 12, 12);
        for (auto& p : x.data) p = static_cast<float>(rng.uniform());
        Volume lib = vdr::psf_convolve(x, k);

        const int64_t rz = k.radius_z(), ry = k.radius_y(), rx = k.radius_x();
        double worst = 0;
        for (int64_t z = 0; z < x.depth; ++z)
            for (int64_t y = 0; y < x.height; ++y)
                for (int64_t c = 0; c < x.width; ++c) {
                    double acc = 0;
                    for (int64_t dz = -rz; dz <= rz; ++dz)
                        for (int64_t dy = -ry; dy <= ry; ++dy)
                            for (int64_t dx = -rx; dx <= rx; ++dx)
                                acc += k.kz[static_cast<size_t>(dz + rz)] *
                                       k.ky[static_cast<size_t>(dy + ry)] *
                                       k.kx[static_cast<size_t>(dx + rx)] *
                                       static_cast<double>(
                                           x.at(reflect101(z + dz, x.depth),
                                                reflect101(y + dy, x.height),
                                                reflect101(c + dx, x.width)));
                    worst = std::max(worst,
                                     std::abs(acc - static_cast<double>(lib.at(z, y, c))));
                }
        v.require(worst < 1e-5, fmt("psf convolution vs oracle max |diff| %.2e >= 1e-5", worst));
        v.summary += fmt("; snr within 5%%; psf oracle %.1e", worst);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Criteria 7 and 8 share a phantom corpus, an ROI-level split, and (in the
// transfer direction the pipeline is built around) the pretrained weights.
// ---------------------------------------------------------------------------

constexpr uint64_t kE2eSeed = 20250819;
constexpr int64_t kCorpusSize = 96;

// Training budgets for the end-to-end runs.  Step counts for the two
// diffusion stages are the contract (1000 pretraining, 2000 finetuning);
// the codec and denoise budgets are desk-scale choices.
constexpr int64_t kCodecSteps = 400;
constexpr int64_t kPretrainSteps = 1000;
constexpr int64_t kFinetuneSteps = 2000;
constexpr int64_t kDenoiseFinetuneSteps = 600;
constexpr double kCodecLr = 2e-3;
constexpr double kDiffusionLr = 1e-3;

int64_t scaled(int64_t steps) {
    return std::max<int64_t>(1, static_cast<int64_t>(std::llround(g_scale * steps)));
}

struct SrData {
    std::vector<Volume> clean;
    std::vector<const Volume*> train, test;
};

SrData make_corpus() {
    SrData d;
    d.clean.reserve(kCorpusSize);
    std::vector<std::string> ids;
    for (int64_t i = 0; i < kCorpusSize; ++i) {
        vdr::PhantomConfig pc;
        pc.depth = 12;
        pc.height = 96;
        pc.width = 96;  // production geometry scaled down; object counts kept
        pc.seed = 9000 + static_cast<uint64_t>(i);
        d.clean.push_back(vdr::generate_phantom(pc));
        ids.push_back(d.clean.back().roi_id);
    }
    auto split = vdr::split_rois(ids, {7, 1, 2}, kE2eSeed);
    std::map<std::string, const Volume*> by_id;
    for (const Volume& v : d.clean) by_id[v.roi_id] = &v;
    for (const auto& id : split.train) d.train.push_back(by_id.at(id));
    for (const auto& id : split.test) d.test.push_back(by_id.at(id));
    return d;
}

std::vector<vdr::PairedCube> degrade_set(const std::vector<const Volume*>& vols,
                                         vdr::DegradeConfig dc, uint64_t seed0) {
    std::vector<vdr::PairedCube> out;
    out.reserve(vols.size());
    for (size_t i = 0; i < vols.size(); ++i) {
        dc.seed = seed0 + i;
        out.push_back(vdr::simulate_acquisition(*vols[i], dc));
    }
    return out;
}

// The 16-fold super-resolution acquisition at the downscaled grid: the
// production-scale blur is shrunk with the volume (20 slices -> 12, 256 px ->
// 96) so its kernel keeps the same physical proportion.
vdr::DegradeConfig sr_degrade() {
    vdr::DegradeConfig dc;
    dc.sigma_axial = 2.4;
    dc.sigma_lateral = 0.75;
    dc.factor_axial = 4;
    dc.factor_lateral = 4;
    return dc;
}

// The low-signal acquisition: shape-preserving (no decimation), light optics
// blur, calibrated noise at SNR 2.
vdr::DegradeConfig denoise_degrade() {
    vdr::DegradeConfig dc;
    dc.sigma_axial = 0.6;
    dc.sigma_lateral = 0.6;
    dc.factor_axial = 1;
    dc.factor_lateral = 1;
    dc.target_snr = 2.0;
    return dc;
}

vdr::TrainConfig stage_config(const std::string& stage, int64_t steps, double lr) {
    vdr::TrainConfig tc;
    tc.stage = stage;
    tc.steps = steps;
    tc.lr = lr;
    tc.seed = kE2eSeed;
    tc.log_every = std::max<int64_t>(1, steps / 4);
    return tc;
}

// Snapshot of all parameter values, for carrying the pretrained state into
// the denoising task without retracing the first two stages.
std::vector<Tensor<float>> snapshot_params(const vdr::RestorationModel<float>& M) {
    std::vector<Tensor<float>> s;
    s.reserve(M.reg.params.size());
    for (const auto& p : M.reg.params) s.push_back(p.value);
    return s;
}

void load_params(vdr::RestorationModel<float>& M, const std::vector<Tensor<float>>& s) {
    if (s.size() != M.reg.params.size())
        throw vdr::DataError("pretrained snapshot does not match the model");
    for (size_t i = 0; i < s.size(); ++i) M.reg.params[i].value = s[i];
}

std::optional<std::vector<Tensor<float>>> g_pretrained;  // filled by criterion 7 run 1

// One full super-resolution chain: codec, pretraining, finetuning,
// restoration of the held-out split, metrics report.
vdr::MetricsReport run_sr_chain(const SrData& data, bool keep_pretrained) {
    std::vector<Volume> train_clean;
    for (const Volume* v : data.train) train_clean.push_back(*v);
    auto train_pairs = degrade_set(data.train, sr_degrade(), kE2eSeed);
    auto test_pairs = degrade_set(data.test, sr_degrade(), kE2eSeed + 1000);

    vdr::RestorationModel<float> M(vdr::ModelConfig{}, kE2eSeed);

    auto tc = stage_config("codec", scaled(kCodecSteps), kCodecLr);
    auto res = vdr::train_codec(M, train_clean, tc);
    const double rmse = vdr::codec_reconstruction_rmse(M, train_clean);
    note(fmt("codec: %lld steps, loss %.4f, reconstruction rmse %.4f",
             (long long)tc.steps, res.last_loss, rmse));

    tc = stage_config("pretrain", scaled(kPretrainSteps), kDiffusionLr);
    tc.checkpoint_every = std::max<int64_t>(1, tc.steps / 4);
    res = vdr::pretrain(M, train_clean, sr_degrade(), tc,
                        [&](int64_t s) { note(fmt("pretrain step %lld", (long long)s)); });
    note(fmt("pretrain: %lld steps (sim %lld / masked %lld / identity %lld), loss %.4f",
             (long long)tc.steps, (long long)res.sim_steps, (long long)res.masked_steps,
             (long long)res.identity_steps, res.last_loss));
    if (keep_pretrained) g_pretrained = snapshot_params(M);

    tc = stage_config("finetune", scaled(kFinetuneSteps), kDiffusionLr);
    tc.checkpoint_every = std::max<int64_t>(1, tc.steps / 4);
    res = vdr::finetune(M, train_pairs, tc,
                        [&](int64_t s) { note(fmt("finetune step %lld", (long long)s)); });
    note(fmt("finetune: %lld steps, loss %.4f", (long long)tc.steps, res.last_loss));

    vdr::EvalConfig ec;
    ec.sample_steps = 25;
    ec.seed = kE2eSeed;
    return vdr::evaluate(M, test_pairs, ec);
}

Verdict criterion_toy_super_resolution() {
    Verdict v;
    SrData data = make_corpus();
    note(fmt("corpus: %d volumes, %zu train / %zu held-out rois", (int)kCorpusSize,
             data.train.size(), data.test.size()));

    note("run 1 of 2");
    vdr::MetricsReport rep1 = run_sr_chain(data, /*keep_pretrained=*/true);
    note("run 2 of 2 (reproducibility)");
    vdr::MetricsReport rep2 = run_sr_chain(data, /*keep_pretrained=*/false);

    const std::string j1 = rep1.to_json().dump(2), j2 = rep2.to_json().dump(2);
    v.require(j1 == j2, "two identical runs produced different reports");

    const double dpsnr = rep1.method_mean.at("psnr") - rep1.baseline_mean.at("psnr");
    const double dssim = rep1.method_mean.at("ssim") - rep1.baseline_mean.at("ssim");
    int64_t ccc_up = 0;
    for (const auto& row : rep1.volumes)
        if (row.method.at("ccc") > row.baseline.at("ccc")) ++ccc_up;
    const double ccc_frac =
        static_cast<double>(ccc_up) / static_cast<double>(rep1.volumes.size());

    v.require(dpsnr >= 2.0, fmt("psnr gain %.3f dB < 2.0 dB", dpsnr));
    v.require(dssim >= 0.05, fmt("ssim gain %.4f < 0.05", dssim));
    v.require(ccc_frac >= 0.70, fmt("ccc improved on %.0f%% of held-out volumes < 70%%",
                                    100.0 * ccc_frac));
    v.summary = fmt("+%.2f dB psnr, +%.3f ssim, ccc up on %lld/%zu; two runs bit-identical",
                    dpsnr, dssim, (long long)ccc_up, rep1.volumes.size());
    return v;
}

Verdict criterion_toy_denoise() {
    Verdict v;
    SrData data = make_corpus();
    auto train_pairs = degrade_set(data.train, denoise_degrade(), kE2eSeed + 2000);
    auto test_pairs = degrade_set(data.test, denoise_degrade(), kE2eSeed + 3000);

    vdr::RestorationModel<float> M(vdr::ModelConfig{}, kE2eSeed);
    if (g_pretrained) {
        note("starting from the super-resolution run's pretrained weights");
        load_params(M, *g_pretrained);
    } else {
        note("no pretrained weights in this invocation; training codec + pretraining here");
        std::vector<Volume> train_clean;
        for (const Volume* vol : data.train) train_clean.push_back(*vol);
        auto tc = stage_config("codec", scaled(kCodecSteps), kCodecLr);
        vdr::train_codec(M, train_clean, tc);
        tc = stage_config("pretrain", scaled(kPretrainSteps), kDiffusionLr);
        vdr::pretrain(M, train_clean, sr_degrade(), tc);
    }

    auto tc = stage_config("finetune", scaled(kDenoiseFinetuneSteps), kDiffusionLr);
    tc.checkpoint_every = std::max<int64_t>(1, tc.steps / 4);
    auto res = vdr::finetune(M, train_pairs, tc,
                             [&](int64_t s) { note(fmt("finetune step %lld", (long long)s)); });
    note(fmt("denoise finetune: %lld steps, loss %.4f", (long long)tc.steps, res.last_loss));

    vdr::EvalConfig ec;
    ec.sample_steps = 25;
    ec.seed = kE2eSeed + 1;
    vdr::MetricsReport rep = vdr::evaluate(M, test_pairs, ec);

    // Shape-preserving task: the evaluation baseline is the noisy input.
    const double dpsnr = rep.method_mean.at("psnr") - rep.baseline_mean.at("psnr");
    v.require(dpsnr >= 3.0, fmt("psnr gain over the noisy input %.3f dB < 3.0 dB", dpsnr));
    v.summary = fmt("restored %.2f dB vs noisy input %.2f dB: +%.2f dB (need >= 3)",
                    rep.method_mean.at("psnr"), rep.baseline_mean.at("psnr"), dpsnr);
    return v;
}

// ---------------------------------------------------------------------------
// Criterion 9: the command-line pipeline, run twice end to end under fixed
// seeds in separate directories, emits bit-identical metric reports (and
// checkpoints) on one worker.
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict criterion_cli_reproducibility() {
    Verdict v;
    const std::string cli = HARNESS_CLI_PATH;
    const fs::path root = fs::temp_directory_path() / "vdr_acceptance_c9";
    std::error_code ec;
    fs::remove_all(root, ec);
    fs::create_directories(root);

    const fs::path cfg = root / "cfg.json";
    std::ofstream(cfg) << R"({
  "seed": 7,
  "model": {"dim": 16, "heads": 2, "blocks": 2, "patch": 2, "latent_channels": 2,
            "depth": 8, "target_h": 32, "target_w": 32,
            "refiner_feat": 4, "refiner_width": 4, "diffusion_steps": 200},
  "phantom": {"depth": 8, "height": 32, "width": 32, "ellipsoids": 3, "tubes": 2, "sheets": 0},
  "degrade": {"sigma_axial": 1.5, "factor_axial": 2, "factor_lateral": 2},
  "train": {"steps": 30, "lr": 0.002, "log_every": 10},
  "sample": {"steps": 8}
})";

    auto chain = [&](const std::string& run) -> bool {
        const fs::path d = root / run;
        fs::create_directories(d);
        const std::string base = cli + " ";
        const std::string tail = " --config " + cfg.string() + " >> " + (d / "log.txt").string() +
                                 " 2>&1";
        const std::vector<std::string> cmds = {
            "synth --out " + (d / "clean").string() + " --count 6" + tail,
            "degrade --in " + (d / "clean").string() + " --out " + (d / "pairs").string() + tail,
            "train-codec --data " + (d / "clean").string() + " --out " +
                (d / "codec.ckpt").string() + " --steps 60" + tail,
            "pretrain --data " + (d / "clean").string() + " --init " +
                (d / "codec.ckpt").string() + " --out " + (d / "pre.ckpt").string() + tail,
            "finetune --data " + (d / "pairs").string() + " --init " + (d / "pre.ckpt").string() +
                " --out " + (d / "fine.ckpt").string() + tail,
            "restore --in " + (d / "pairs" / "phantom-0002.lq.vol").string() + " --checkpoint " +
                (d / "fine.ckpt").string() + " --out " + (d / "restored.vol").string() + tail,
            "eval --data " + (d / "pairs").string() + " --checkpoint " +
                (d / "fine.ckpt").string() + " --out " + (d / "report.json").string() + tail,
        };
        for (const auto& c : cmds)
            if (std::system((base + c).c_str()) != 0) {
                v.require(false, "command failed in run " + run + ": " + c.substr(0, c.find(' ')));
                return false;
            }
        return true;
    };

    if (chain("a") && chain("b")) {
        const std::string ra = slurp(root / "a" / "report.json");
        const std::string rb = slurp(root / "b" / "report.json");
        v.require(!ra.empty() && ra == rb, "metric reports differ between identical runs");
        const std::string ca = slurp(root / "a" / "fine.ckpt");
        const std::string cb = slurp(root / "b" / "fine.ckpt");
        v.require(!ca.empty() && ca == cb, "checkpoints differ between identical runs");
        v.summary = fmt("two CLI chains: report %zu bytes and checkpoint %zu bytes identical",
                        ra.size(), ca.size());
    }
    fs::remove_all(root, ec);
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        const char* name;
        Verdict (*run)();
    };
    const std::array<Criterion, 9> criteria{{
        {"attention stages match explicit-loop oracles; permutation locality exact",
         criterion_attention_oracle},
        {"attention score MACs scale as D*N^2 (lateral) and N*D^2 (axial)",
         criterion_mac_scaling},
        {"64-bit finite-difference gradient checks on a two-block toy", criterion_gradients},
        {"diffusion marginals, exact-noise inversion, single-step recovery",
         criterion_diffusion_algebra},
        {"metric hand values and brute-force references", criterion_metrics},
        {"masking statistics, SNR calibration, PSF oracle", criterion_degradation_stats},
        {"end-to-end toy super-resolution on a held-out split, reproduced bit-exactly",
         criterion_toy_super_resolution},
        {"end-to-end toy denoising at SNR 2", criterion_toy_denoise},
        {"command-line pipeline emits bit-identical reports across two runs",
         criterion_cli_reproducibility},
    }};

    std::set<int> selected;
    if (const char* only = std::getenv("VDR_ACCEPT_ONLY")) {
        std::stringstream ss(only);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) selected.insert(std::atoi(tok.c_str()));
    }
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    if (const char* sc = std::getenv("VDR_ACCEPT_SCALE")) {
        g_scale = std::atof(sc);
        if (!(g_scale > 0) || g_scale > 1.0) {
            std::fprintf(stderr, "VDR_ACCEPT_SCALE must be in (0, 1]\n");
            return 1;
        }
    }

    std::printf("acceptance: %zu criteria\n", criteria.size());
    if (g_scale != 1.0)
        std::printf("!! REHEARSAL at %.0f%% of the end-to-end training budgets — "
                    "not a verdict on the full configuration\n",
                    100.0 * g_scale);
    std::fflush(stdout);

    int passed = 0, ran = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].run();
        } catch (const std::exception& e) {
            v.pass = false;
            v.failures.push_back(std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%d/9] %s  %s%s%s  (%.1f s)\n", id, v.pass ? "PASS" : "FAIL",
                    criteria[i].name, v.summary.empty() ? "" : ": ", v.summary.c_str(), secs);
        for (const auto& f : v.failures) std::printf("      !! %s\n", f.c_str());
        std::fflush(stdout);
        if (v.pass) ++passed;
    }

    std::printf("acceptance: %d/%d criteria passed\n", passed, ran);
    return passed == ran && ran > 0 ? 0 : 1;
}
