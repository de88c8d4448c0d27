#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vdr/common.hpp"
#include "vdr/degrade.hpp"
#include "vdr/diffusion.hpp"
#include "vdr/mask.hpp"
#include "vdr/metrics.hpp"
#include "vdr/model.hpp"
#include "vdr/resample.hpp"
#include "vdr/rng.hpp"
#include "vdr/spectrum.hpp"
#include "vdr/wilcoxon.hpp"

namespace vdr {

// Bring a measured or simulated acquisition onto the model's working grid:
// trilinear interpolation along the optical axis, then bicubic in-plane.
// Also produces the interpolation baseline that evaluation compares against.
inline Volume resample_to(const Volume& v, int64_t depth, int64_t height, int64_t width) {
    Volume out = v;
    if (out.depth != depth) out = trilinear_resize(out, depth, out.height, out.width);
    if (out.height != height || out.width != width)
        out = bicubic_lateral_resize(out, height, width);
    return out;
}

// ---------------------------------------------------------------------------
// Training configuration and loop bookkeeping
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::string stage = "pretrain";  // "codec" | "pretrain" | "finetune"
    int64_t steps = 1000;            // optimizer updates (batch size 1)
    int64_t batch_slices = 2;        // codec stage: 2D slices per update
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double mask_loss_weight = 1.0;   // pretraining, masking pathway
    double sim_loss_weight = 1.0;    // pretraining, degradation-simulation pathway
    double pixel_loss_weight = 1.0;  // finetuning, refiner pixel term
    int64_t checkpoint_every = 0;    // 0 = final checkpoint only
    int64_t log_every = 50;
    uint64_t seed = 0;

    void validate() const {
        if (stage != "codec" && stage != "pretrain" && stage != "finetune")
            throw UsageError("train: unknown stage '" + stage + "'");
        if (steps < 0) throw UsageError("train: step count must be >= 0");
        if (batch_slices < 1) throw UsageError("train: batch_slices must be >= 1");
        if (!(lr > 0.0)) throw UsageError("train: learning rate must be positive");
        if (weight_decay < 0.0) throw UsageError("train: weight decay must be >= 0");
        if (mask_loss_weight < 0.0 || sim_loss_weight < 0.0 || pixel_loss_weight < 0.0)
            throw UsageError("train: loss weights must be >= 0");
        if (checkpoint_every < 0) throw UsageError("train: checkpoint cadence must be >= 0");
        if (log_every < 1) throw UsageError("train: log_every must be >= 1");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"stage", stage},
                              {"steps", steps},
                              {"batch_slices", batch_slices},
                              {"lr", lr},
                              {"weight_decay", weight_decay},
                              {"mask_loss_weight", mask_loss_weight},
                              {"sim_loss_weight", sim_loss_weight},
                              {"pixel_loss_weight", pixel_loss_weight},
                              {"checkpoint_every", checkpoint_every},
                              {"log_every", log_every},
                              {"seed", seed}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.stage = j.value("stage", c.stage);
        c.steps = j.value("steps", c.steps);
        c.batch_slices = j.value("batch_slices", c.batch_slices);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.mask_loss_weight = j.value("mask_loss_weight", c.mask_loss_weight);
        c.sim_loss_weight = j.value("sim_loss_weight", c.sim_loss_weight);
        c.pixel_loss_weight = j.value("pixel_loss_weight", c.pixel_loss_weight);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.log_every = j.value("log_every", c.log_every);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    }
};

struct StepLog {
    int64_t step = 0;  // 1-based optimizer step
    double loss = 0.0;
};

struct TrainResult {
    std::vector<StepLog> log;  // every log_every steps plus the final step
    double last_loss = std::numeric_limits<double>::quiet_NaN();
    // Pretraining pathway counters: degradation simulation, block masking,
    // and identity draws of the mask sampler (the unmasked ~10%).
    int64_t sim_steps = 0;
    int64_t masked_steps = 0;
    int64_t identity_steps = 0;
};

// Called after selected optimizer steps (checkpoint cadence, final step) so
// the driver can write intermediate checkpoints without the loop knowing
// about files.
using StepHook = std::function<void(int64_t step)>;

// Zero Adam moments. Each training stage starts from fresh optimizer state;
// only parameter values carry over between stages.
template <typename T>
void reset_optimizer_state(ParamRegistry<T>& reg) {
    for (auto& p : reg.params) {
        p.m.fill(T{});
        p.v.fill(T{});
    }
}

namespace detail {

// Deterministic per-step stream: one base stream per stage, one child per
// optimizer step, so a run is reproducible regardless of logging or hooks.
constexpr uint64_t kCodecStream = 0xc0dec;
constexpr uint64_t kPretrainStream = 0x93e7;
constexpr uint64_t kFinetuneStream = 0xf17e;
constexpr uint64_t kPretrainValStream = 0x9e7a;
constexpr uint64_t kFinetuneValStream = 0xf17a;
constexpr uint64_t kRestoreStream = 0x5a3e;
constexpr uint64_t kEvalStream = 0xe7a1;

inline void log_step(TrainResult& res, const TrainConfig& tc, int64_t step, double loss) {
    if (!std::isfinite(loss))
        throw NumericError("training loss is not finite at step " + std::to_string(step));
    res.last_loss = loss;
    if (step % tc.log_every == 0 || step == tc.steps) res.log.push_back({step, loss});
}

// One materialised pretraining example: the conditioning view, the mask
// channel, the clean latents, and the diffusion draw.
template <typename T>
struct TrainExample {
    Tensor<T> cond_img;      // [D,1,H,W] degraded or masked view on the working grid
    Tensor<T> mask_channel;  // [D,1,H,W] 1 inside masked blocks, 0 elsewhere
    Tensor<T> z0;            // [D,C,h,w] latents of the clean cube
    int64_t step = 0;
    Tensor<T> eps;
    double weight = 1.0;
    bool masked = false;    // masking pathway, non-identity draw
    bool identity = false;  // masking pathway, identity draw
};

// Build one pretraining example from a clean cube. Time-series cubes take the
// block-masking pathway (whose sampler keeps roughly 10% of draws unmasked);
// volumetric cubes take the acquisition-simulation pathway. Consumes draws
// from `r` in a fixed order: pathway inputs first, then timestep, then noise.
template <typename T>
TrainExample<T> make_pretrain_example(RestorationModel<T>& M, const Volume& vol,
                                      const Tensor<T>& z0, const DegradeConfig& dc,
                                      const TrainConfig& tc, Rng& r) {
    const ModelConfig& cfg = M.cfg;
    if (vol.depth != cfg.depth || vol.height != cfg.target_h || vol.width != cfg.target_w)
        throw DataError("pretrain: cube dims do not match the model's working grid");
    TrainExample<T> ex;
    ex.z0 = z0;
    if (vol.channel_tag == "timeseries") {
        const int64_t gh = cfg.latent_h() / cfg.patch;
        const int64_t gw = cfg.latent_w() / cfg.patch;
        MaskSpec m = sample_mask(vol.depth, gh * gw, r.next_u64());
        MaskedVolume mv = apply_mask_volume(vol, m, gh, gw);
        ex.cond_img = volume_to_tensor<T>(mv.masked);
        ex.mask_channel = volume_to_tensor<T>(mv.mask_channel);
        ex.masked = m.count() > 0;
        ex.identity = !ex.masked;
        ex.weight = tc.mask_loss_weight;
    } else {
        DegradeConfig d = dc;
        d.seed = r.next_u64();
        PairedCube pc = simulate_acquisition(vol, d);
        Volume lq_up = resample_to(pc.lq, cfg.depth, cfg.target_h, cfg.target_w);
        ex.cond_img = volume_to_tensor<T>(lq_up);
        ex.mask_channel = Tensor<T>({cfg.depth, 1, cfg.target_h, cfg.target_w});
        ex.weight = tc.sim_loss_weight;
    }
    ex.step = static_cast<int64_t>(r.uniform_index(static_cast<uint64_t>(M.sched.steps)));
    ex.eps = Tensor<T>(ex.z0.shape());
    for (int64_t i = 0; i < ex.eps.size(); ++i) ex.eps[i] = static_cast<T>(r.normal());
    return ex;
}

// Conditioned noise-prediction loss of one example, built on the tape so the
// condition encoders and denoiser all receive gradients. The latents enter as
// a plain input: the codec stays frozen outside its own training stage.
template <typename T>
Var pretrain_example_loss(RestorationModel<T>& M, Tape<T>& t, const TrainExample<T>& ex) {
    Var img = t.input(ex.cond_img);
    Var c_local = M.local.apply(t, M.reg, t.concat(img, t.input(ex.mask_channel), 1));
    Var c_fused = t.add(M.time.apply(t, M.reg, static_cast<double>(ex.step)),
                        M.global.apply(t, M.reg, img));
    Var loss = diffusion_loss(t, M.reg, M.den, t.input(ex.z0), c_local, c_fused, ex.step,
                              M.sched, ex.eps);
    return ex.weight == 1.0 ? loss : t.scale(loss, ex.weight);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1: slice codec
// ---------------------------------------------------------------------------

// Train the 2D codec as a plain autoencoder on randomly drawn slices. All
// volumes must share one slice geometry. Only codec parameters appear in the
// graph, so nothing else moves.
template <typename T>
TrainResult train_codec(RestorationModel<T>& M, const std::vector<Volume>& corpus,
                        const TrainConfig& tc, const StepHook& hook = {}) {
    tc.validate();
    if (corpus.empty()) throw DataError("train codec: empty corpus");
    const int64_t h = corpus.front().height, w = corpus.front().width;
    for (const Volume& v : corpus)
        if (v.height != h || v.width != w) throw DataError("train codec: mixed slice geometry");
    reset_optimizer_state(M.reg);
    AdamW<T> opt;
    opt.lr = tc.lr;
    opt.weight_decay = tc.weight_decay;
    Rng base(tc.seed, detail::kCodecStream);
    TrainResult res;
    for (int64_t s = 1; s <= tc.steps; ++s) {
        Rng r = base.derive(static_cast<uint64_t>(s));
        Tensor<T> batch({tc.batch_slices, 1, h, w});
        for (int64_t b = 0; b < tc.batch_slices; ++b) {
            const Volume& v = corpus[r.uniform_index(corpus.size())];
            const float* src = v.slice(static_cast<int64_t>(r.uniform_index(
                static_cast<uint64_t>(v.depth))));
            T* dst = batch.data() + b * h * w;
            for (int64_t i = 0; i < h * w; ++i) dst[i] = static_cast<T>(src[i]);
        }
        Tape<T> t;
        Var x = t.input(batch);
        Var loss = t.mse(M.codec.decode(t, M.reg, M.codec.encode(t, M.reg, x)), x);
        t.backward(loss);
        opt.step(M.reg, t.param_grads());
        detail::log_step(res, tc, s, static_cast<double>(t.val(loss)[0]));
        if (hook && tc.checkpoint_every > 0 && s % tc.checkpoint_every == 0) hook(s);
    }
    return res;
}

// Mean slice-wise reconstruction RMSE of the frozen codec over a corpus.
template <typename T>
double codec_reconstruction_rmse(RestorationModel<T>& M, const std::vector<Volume>& corpus) {
    if (corpus.empty()) throw DataError("codec rmse: empty corpus");
    double se = 0.0;
    int64_t n = 0;
    for (const Volume& v : corpus) {
        Tensor<T> x = volume_to_tensor<T>(v);
        Tape<T> t;
        Var y = M.codec.decode(t, M.reg, M.codec.encode(t, M.reg, t.input(x)));
        const Tensor<T>& rec = t.val(y);
        for (int64_t i = 0; i < x.size(); ++i) {
            const double d = static_cast<double>(rec[i]) - static_cast<double>(x[i]);
            se += d * d;
        }
        n += x.size();
    }
    return std::sqrt(se / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Stage 2: conditional denoiser pretraining
// ---------------------------------------------------------------------------

// Pretrain the condition encoders and denoiser on clean cubes. Each step
// draws a cube, builds a degraded or masked view of it (see
// make_pretrain_example), and takes one noise-prediction step. The codec is
// frozen: latents are encoded outside the tape.
template <typename T>
TrainResult pretrain(RestorationModel<T>& M, const std::vector<Volume>& corpus,
                     const DegradeConfig& dc, const TrainConfig& tc, const StepHook& hook = {}) {
    tc.validate();
    if (corpus.empty()) throw DataError("pretrain: empty corpus");
    std::vector<Tensor<T>> latents;
    latents.reserve(corpus.size());
    for (const Volume& v : corpus) latents.push_back(M.encode_volume(v));
    reset_optimizer_state(M.reg);
    AdamW<T> opt;
    opt.lr = tc.lr;
    opt.weight_decay = tc.weight_decay;
    Rng base(tc.seed, detail::kPretrainStream);
    TrainResult res;
    for (int64_t s = 1; s <= tc.steps; ++s) {
        Rng r = base.derive(static_cast<uint64_t>(s));
        const uint64_t idx = r.uniform_index(corpus.size());
        auto ex = detail::make_pretrain_example(M, corpus[idx], latents[idx], dc, tc, r);
        Tape<T> t;
        Var loss = detail::pretrain_example_loss(M, t, ex);
        t.backward(loss);
        opt.step(M.reg, t.param_grads());
        if (ex.masked)
            ++res.masked_steps;
        else if (ex.identity)
            ++res.identity_steps;
        else
            ++res.sim_steps;
        detail::log_step(res, tc, s, static_cast<double>(t.val(loss)[0]));
        if (hook && tc.checkpoint_every > 0 && s % tc.checkpoint_every == 0) hook(s);
    }
    return res;
}

// Pretraining loss over a fixed validation batch: one example per cube with
// draws keyed by corpus position, not by optimizer step, so the same call on
// the same model is bit-reproducible and comparable across checkpoints.
template <typename T>
double pretrain_validation_loss(RestorationModel<T>& M, const std::vector<Volume>& corpus,
                                const DegradeConfig& dc, const TrainConfig& tc) {
    if (corpus.empty()) throw DataError("pretrain validation: empty corpus");
    Rng base(tc.seed, detail::kPretrainValStream);
    double total = 0.0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        Rng r = base.derive(static_cast<uint64_t>(i));
        Tensor<T> z0 = M.encode_volume(corpus[i]);
        auto ex = detail::make_pretrain_example(M, corpus[i], z0, dc, tc, r);
        Tape<T> t;
        Var loss = detail::pretrain_example_loss(M, t, ex);
        total += static_cast<double>(t.val(loss)[0]);
    }
    return total / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// Stage 3: finetuning on measured pairs
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
struct FinetunePair {
    Tensor<T> lq_up;  // [D,1,H,W] measured acquisition on the working grid
    Tensor<T> hq;     // [D,1,H,W] registered target
    Tensor<T> z0;     // [D,C,h,w] latents of the target
};

template <typename T>
std::vector<FinetunePair<T>> prepare_finetune_pairs(RestorationModel<T>& M,
                                                    const std::vector<PairedCube>& pairs) {
    const ModelConfig& cfg = M.cfg;
    std::vector<FinetunePair<T>> out;
    out.reserve(pairs.size());
    for (const PairedCube& pc : pairs) {
        if (pc.hq.depth != cfg.depth || pc.hq.height != cfg.target_h ||
            pc.hq.width != cfg.target_w)
            throw DataError("finetune: target dims do not match the model's working grid");
        FinetunePair<T> fp;
        fp.lq_up = volume_to_tensor<T>(resample_to(pc.lq, cfg.depth, cfg.target_h, cfg.target_w));
        fp.hq = volume_to_tensor<T>(pc.hq);
        fp.z0 = M.encode_volume(pc.hq);
        out.push_back(std::move(fp));
    }
    return out;
}

// Joint finetuning loss of one pair at one diffusion draw: the
// noise-prediction term plus a pixel term that decodes the implied clean
// latents through the refiner against the registered target. The pixel term
// is weighted by the signal fraction of the drawn step, so nearly-clean draws
// dominate it, and its gradient flows through the noise estimate into the
// denoiser as well as the refiner.
template <typename T>
Var finetune_pair_loss(RestorationModel<T>& M, Tape<T>& t, const FinetunePair<T>& fp,
                       int64_t step, const Tensor<T>& eps, double pixel_loss_weight) {
    Var lq = t.input(fp.lq_up);
    Var mask = t.input(Tensor<T>(fp.lq_up.shape()));
    Var c_local = M.local.apply(t, M.reg, t.concat(lq, mask, 1));
    Var c_fused = t.add(M.time.apply(t, M.reg, static_cast<double>(step)),
                        M.global.apply(t, M.reg, lq));
    const double abar = M.sched.abar(step);
    const double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
    Var z0 = t.input(fp.z0);
    Var eps_in = t.input(eps);
    Var z_t = t.add(t.scale(z0, sa), t.scale(eps_in, sb));
    Var eps_hat = M.den.forward(t, M.reg, z_t, c_local, c_fused);
    Var loss = t.mse(eps_hat, eps_in);
    if (pixel_loss_weight > 0.0) {
        Var z0_hat = t.scale(t.sub(z_t, t.scale(eps_hat, sb)), 1.0 / sa);
        Var rec = M.refiner.refine(t, M.reg, z0_hat, lq);
        loss = t.add(loss, t.scale(t.mse(rec, t.input(fp.hq)), pixel_loss_weight * abar));
    }
    return loss;
}

}  // namespace detail

// Finetune the condition encoders, denoiser, and refiner on measured
// low/high-quality pairs. Conditions always come from the measured
// acquisition; the codec stays frozen.
template <typename T>
TrainResult finetune(RestorationModel<T>& M, const std::vector<PairedCube>& pairs,
                     const TrainConfig& tc, const StepHook& hook = {}) {
    tc.validate();
    if (pairs.empty()) throw DataError("finetune: empty pair list");
    auto prepared = detail::prepare_finetune_pairs(M, pairs);
    reset_optimizer_state(M.reg);
    AdamW<T> opt;
    opt.lr = tc.lr;
    opt.weight_decay = tc.weight_decay;
    Rng base(tc.seed, detail::kFinetuneStream);
    TrainResult res;
    for (int64_t s = 1; s <= tc.steps; ++s) {
        Rng r = base.derive(static_cast<uint64_t>(s));
        const auto& fp = prepared[r.uniform_index(prepared.size())];
        const int64_t step = static_cast<int64_t>(
            r.uniform_index(static_cast<uint64_t>(M.sched.steps)));
        Tensor<T> eps(fp.z0.shape());
        for (int64_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(r.normal());
        Tape<T> t;
        Var loss = detail::finetune_pair_loss(M, t, fp, step, eps, tc.pixel_loss_weight);
        t.backward(loss);
        opt.step(M.reg, t.param_grads());
        detail::log_step(res, tc, s, static_cast<double>(t.val(loss)[0]));
        if (hook && tc.checkpoint_every > 0 && s % tc.checkpoint_every == 0) hook(s);
    }
    return res;
}

// Finetuning loss over a fixed validation batch; draws keyed by pair index.
template <typename T>
double finetune_validation_loss(RestorationModel<T>& M, const std::vector<PairedCube>& pairs,
                                const TrainConfig& tc) {
    if (pairs.empty()) throw DataError("finetune validation: empty pair list");
    auto prepared = detail::prepare_finetune_pairs(M, pairs);
    Rng base(tc.seed, detail::kFinetuneValStream);
    double total = 0.0;
    for (size_t i = 0; i < prepared.size(); ++i) {
        Rng r = base.derive(static_cast<uint64_t>(i));
        const int64_t step = static_cast<int64_t>(
            r.uniform_index(static_cast<uint64_t>(M.sched.steps)));
        Tensor<T> eps(prepared[i].z0.shape());
        for (int64_t k = 0; k < eps.size(); ++k) eps[k] = static_cast<T>(r.normal());
        Tape<T> t;
        Var loss = detail::finetune_pair_loss(M, t, prepared[i], step, eps,
                                              tc.pixel_loss_weight);
        total += static_cast<double>(t.val(loss)[0]);
    }
    return total / static_cast<double>(prepared.size());
}

// ---------------------------------------------------------------------------
// Restoration (sampling) and evaluation
// ---------------------------------------------------------------------------

struct SampleConfig {
    int64_t steps = 25;  // reverse-process steps (deterministic sampler)
    uint64_t seed = 0;

    void validate() const {
        if (steps < 1) throw UsageError("sample: steps must be >= 1");
    }
};

// Restore one acquisition: resample it onto the working grid, condition the
// denoiser on it, run the deterministic sampler from seeded Gaussian latents,
// and decode through the refiner. Output intensities are clamped to [0,1].
template <typename T>
Volume restore_volume(RestorationModel<T>& M, const Volume& lq, const SampleConfig& sc) {
    sc.validate();
    const ModelConfig& cfg = M.cfg;
    Volume lq_up = resample_to(lq, cfg.depth, cfg.target_h, cfg.target_w);
    Tensor<T> c_local = M.condition_local(lq_up);
    Tensor<T> c_global = M.condition_global(lq_up);
    Rng r(sc.seed, detail::kRestoreStream);
    Tensor<T> z({cfg.depth, cfg.latent_channels, cfg.latent_h(), cfg.latent_w()});
    for (int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<T>(r.normal());
    const std::vector<int64_t> taus = ddim_taus(M.sched.steps, sc.steps);
    auto eps_at = [&](const Tensor<T>& z_t, int64_t step) {
        return M.predict_noise(z_t, c_local, M.fuse_condition(c_global, step));
    };
    Tensor<T> z0 = ddim_sample(eps_at, std::move(z), taus, M.sched);
    Volume out = M.refine_decode(z0, lq_up);
    out.roi_id = lq.roi_id;
    out.channel_tag = lq.channel_tag;
    return out;
}

// Full-reference quality row for one prediction: intensity metrics over the
// volume, concordance/correlation of the mid-slice diagonal profile, and the
// high-frequency spectral error.
inline std::map<std::string, double> metric_row(const Volume& pred, const Volume& gt) {
    std::map<std::string, double> m;
    m["psnr"] = psnr(pred, gt);
    m["rmse"] = rmse(pred, gt);
    m["ssim"] = ssim(pred, gt);
    m["ms_ssim"] = ms_ssim(pred, gt);
    const int64_t zc = gt.depth / 2;
    const Profile1D pp = extract_diagonal_profile(pred, zc);
    const Profile1D pg = extract_diagonal_profile(gt, zc);
    m["ccc"] = ccc(pp, pg);
    m["pcc"] = pcc(pp, pg);
    m["hf_err"] = hf_spectral_error(pred, gt);
    return m;
}

struct EvalConfig {
    int64_t sample_steps = 25;
    uint64_t seed = 0;
};

// Per-volume and aggregate quality of the model against the interpolation
// baseline on a held-out test set. Serialises deterministically: object keys
// are sorted, no timestamps, and non-finite values (e.g. the PSNR of an exact
// match) become JSON null.
struct MetricsReport {
    struct Row {
        std::string roi_id;
        std::map<std::string, double> method;    // restored vs target
        std::map<std::string, double> baseline;  // resampled input vs target
    };

    nlohmann::json model_config;
    int64_t sample_steps = 0;
    uint64_t seed = 0;
    std::vector<Row> volumes;
    std::map<std::string, double> method_mean;
    std::map<std::string, double> baseline_mean;
    std::map<std::string, double> wilcoxon_p;  // method vs baseline, per metric

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const Row& r : volumes)
            rows.push_back(nlohmann::json{
                {"roi_id", r.roi_id}, {"method", r.method}, {"baseline", r.baseline}});
        return nlohmann::json{{"model", model_config},
                              {"sample_steps", sample_steps},
                              {"seed", seed},
                              {"volumes", rows},
                              {"aggregate",
                               nlohmann::json{{"method", method_mean},
                                              {"baseline", baseline_mean}}},
                              {"wilcoxon_p", wilcoxon_p}};
    }

    static MetricsReport from_json(const nlohmann::json& j) {
        MetricsReport rep;
        rep.model_config = j.at("model");
        rep.sample_steps = j.at("sample_steps").get<int64_t>();
        rep.seed = j.at("seed").get<uint64_t>();
        auto as_map = [](const nlohmann::json& o) {
            std::map<std::string, double> m;
            for (auto it = o.begin(); it != o.end(); ++it)
                m[it.key()] = it.value().is_null() ? std::numeric_limits<double>::infinity()
                                                   : it.value().get<double>();
            return m;
        };
        for (const auto& r : j.at("volumes")) {
            Row row;
            row.roi_id = r.at("roi_id").get<std::string>();
            row.method = as_map(r.at("method"));
            row.baseline = as_map(r.at("baseline"));
            rep.volumes.push_back(std::move(row));
        }
        rep.method_mean = as_map(j.at("aggregate").at("method"));
        rep.baseline_mean = as_map(j.at("aggregate").at("baseline"));
        rep.wilcoxon_p = as_map(j.at("wilcoxon_p"));
        return rep;
    }
};

// Restore every pair's acquisition and score it against the registered
// target, next to the interpolation baseline. Sampling seeds derive from the
// evaluation seed and the pair's position, so reruns are bit-reproducible.
template <typename T>
MetricsReport evaluate(RestorationModel<T>& M, const std::vector<PairedCube>& pairs,
                       const EvalConfig& ec) {
    if (pairs.empty()) throw DataError("evaluate: empty test set");
    const ModelConfig& cfg = M.cfg;
    MetricsReport rep;
    rep.model_config = cfg.to_json();
    rep.sample_steps = ec.sample_steps;
    rep.seed = ec.seed;
    Rng base(ec.seed, detail::kEvalStream);
    for (size_t i = 0; i < pairs.size(); ++i) {
        const PairedCube& pc = pairs[i];
        if (pc.hq.depth != cfg.depth || pc.hq.height != cfg.target_h ||
            pc.hq.width != cfg.target_w)
            throw DataError("evaluate: target dims do not match the model's working grid");
        SampleConfig sc;
        sc.steps = ec.sample_steps;
        sc.seed = base.derive(static_cast<uint64_t>(i)).next_u64();
        MetricsReport::Row row;
        row.roi_id = pc.hq.roi_id;
        row.method = metric_row(restore_volume(M, pc.lq, sc), pc.hq);
        row.baseline =
            metric_row(resample_to(pc.lq, cfg.depth, cfg.target_h, cfg.target_w), pc.hq);
        rep.volumes.push_back(std::move(row));
    }
    for (const auto& [key, unused] : rep.volumes.front().method) {
        (void)unused;
        std::vector<double> mv, bv;  // finite pairs only: an exact match has no rank
        double msum = 0.0, bsum = 0.0;
        for (const auto& row : rep.volumes) {
            const double a = row.method.at(key), b = row.baseline.at(key);
            msum += a;
            bsum += b;
            if (std::isfinite(a) && std::isfinite(b)) {
                mv.push_back(a);
                bv.push_back(b);
            }
        }
        rep.method_mean[key] = msum / static_cast<double>(rep.volumes.size());
        rep.baseline_mean[key] = bsum / static_cast<double>(rep.volumes.size());
        rep.wilcoxon_p[key] = mv.empty() ? 1.0 : wilcoxon_signed_rank(mv, bv);
    }
    return rep;
}

}  // namespace vdr
