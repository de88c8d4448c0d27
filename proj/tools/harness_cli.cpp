// Command-line driver for the volumetric restoration pipeline.
//
// One declarative JSON config feeds every subcommand; any config key can be
// overridden on the command line as --section.key value. The top-level seed
// governs every stochastic stage, so identical invocations produce identical
// volumes, checkpoints, and reports.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vdr/attention.hpp"
#include "vdr/checkpoint.hpp"
#include "vdr/phantom.hpp"
#include "vdr/train.hpp"
#include "vdr/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vdr;

namespace {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

json default_config() {
    json io = {{"in", ""},      {"out", ""},    {"data", ""}, {"checkpoint", ""},
               {"init", ""},    {"report", ""}, {"count", 8}};
    json phantom = {{"depth", 20},          {"height", 256},       {"width", 256},
                    {"ellipsoids", 6},      {"tubes", 3},          {"sheets", 1},
                    {"intensity_lo", 0.45}, {"intensity_hi", 0.95}, {"background", 0.08}};
    json degrade = {{"sigma_lateral", 2.0}, {"sigma_axial", 4.0},
                    {"factor_axial", 4},    {"factor_lateral", 4},
                    {"target_snr", nullptr}, {"attenuate", false},
                    {"attenuation_z0", 40.0}};
    json sample = {{"steps", 25}};
    return json{{"seed", 0},
                {"model", ModelConfig().to_json()},
                {"phantom", phantom},
                {"degrade", degrade},
                {"train", TrainConfig().to_json()},
                {"sample", sample},
                {"io", io}};
}

// Parse a flag value: numbers, booleans, and null pass through as JSON
// scalars; everything else stays a string.
json parse_flag_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    if (!v.is_discarded() && (v.is_number() || v.is_boolean() || v.is_null())) return v;
    return json(raw);
}

void set_path(json& cfg, const std::string& dotted, const json& value) {
    json* node = &cfg;
    size_t pos = 0;
    while (true) {
        const size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw UsageError("bad flag name: --" + dotted);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

struct Cli {
    std::string subcommand;
    json cfg;
};

const char* kUsage =
    "usage: harness-cli <subcommand> [--config file.json] [--key value ...]\n"
    "\n"
    "subcommands:\n"
    "  synth         generate synthetic phantom volumes      (--out dir --count n)\n"
    "  degrade       simulate acquisitions as lq/hq pairs    (--in dir --out dir)\n"
    "  train-codec   train the slice codec                   (--data dir --out ckpt)\n"
    "  pretrain      pretrain the conditional denoiser       (--data dir --out ckpt)\n"
    "  finetune      finetune on measured pairs              (--data dir --init ckpt --out ckpt)\n"
    "  restore       restore one acquisition                 (--in vol --checkpoint ckpt --out vol)\n"
    "  eval          score restorations against targets      (--data dir --checkpoint ckpt --out report)\n"
    "  profile       print compute and parameter profile     (--out file, optional)\n"
    "  report-plots  render a metrics report as SVG plots    (--report file --out dir)\n"
    "\n"
    "Any config key can be overridden as --section.key value (e.g. --train.lr 3e-4,\n"
    "--model.dim 128). Shorthand flags: --seed, --steps, --count, --in, --out,\n"
    "--data, --checkpoint, --init, --report, --config.\n";

Cli parse_cli(int argc, char** argv) {
    if (argc < 2) throw UsageError("no subcommand given");
    Cli cli;
    cli.subcommand = argv[1];
    if (cli.subcommand == "-h" || cli.subcommand == "--help" || cli.subcommand == "help") {
        std::fputs(kUsage, stdout);
        std::exit(0);
    }
    static const std::vector<std::string> subs = {"synth",    "degrade", "train-codec",
                                                  "pretrain", "finetune", "restore",
                                                  "eval",     "profile", "report-plots"};
    if (std::find(subs.begin(), subs.end(), cli.subcommand) == subs.end())
        throw UsageError("unknown subcommand: " + cli.subcommand);

    cli.cfg = default_config();

    // First pass: the config file, so later flags override its keys.
    std::vector<std::pair<std::string, std::string>> flags;
    for (int i = 2; i < argc; ++i) {
        std::string a = argv[i];
        if (a.rfind("--", 0) != 0) throw UsageError("expected a --flag, got: " + a);
        a = a.substr(2);
        if (i + 1 >= argc) throw UsageError("flag --" + a + " needs a value");
        flags.emplace_back(a, argv[++i]);
    }
    for (const auto& [key, value] : flags) {
        if (key != "config") continue;
        std::ifstream f(value);
        if (!f) throw UsageError("cannot open config file: " + value);
        json user = json::parse(f, nullptr, false);
        if (user.is_discarded() || !user.is_object())
            throw UsageError("config file is not a JSON object: " + value);
        cli.cfg.merge_patch(user);
    }

    // Shorthand flags map onto config paths; --steps means training steps for
    // the training stages and sampler steps for restore/eval.
    const bool training = cli.subcommand == "train-codec" || cli.subcommand == "pretrain" ||
                          cli.subcommand == "finetune";
    std::map<std::string, std::string> alias = {
        {"in", "io.in"},     {"out", "io.out"},         {"data", "io.data"},
        {"init", "io.init"}, {"checkpoint", "io.checkpoint"}, {"report", "io.report"},
        {"count", "io.count"}, {"steps", training ? "train.steps" : "sample.steps"}};

    for (const auto& [key, value] : flags) {
        if (key == "config") continue;
        std::string path = key;
        if (auto it = alias.find(key); it != alias.end()) path = it->second;
        const std::string head = path.substr(0, path.find('.'));
        static const std::vector<std::string> sections = {"seed",  "model",  "phantom",
                                                          "degrade", "train", "sample", "io"};
        if (std::find(sections.begin(), sections.end(), head) == sections.end())
            throw UsageError("unknown flag: --" + key);
        set_path(cli.cfg, path, parse_flag_value(value));
    }
    return cli;
}

// ---------------------------------------------------------------------------
// Config readers
// ---------------------------------------------------------------------------

uint64_t seed_of(const json& cfg) { return cfg.at("seed").get<uint64_t>(); }

ModelConfig model_of(const json& cfg) { return ModelConfig::from_json(cfg.at("model")); }

TrainConfig train_of(const json& cfg, const std::string& stage) {
    TrainConfig tc = TrainConfig::from_json(cfg.at("train"));
    tc.stage = stage;
    tc.seed = seed_of(cfg);
    tc.validate();
    return tc;
}

DegradeConfig degrade_of(const json& cfg) {
    const json& j = cfg.at("degrade");
    DegradeConfig dc;
    dc.sigma_lateral = j.value("sigma_lateral", dc.sigma_lateral);
    dc.sigma_axial = j.value("sigma_axial", dc.sigma_axial);
    dc.factor_axial = j.value("factor_axial", dc.factor_axial);
    dc.factor_lateral = j.value("factor_lateral", dc.factor_lateral);
    if (j.contains("target_snr") && !j.at("target_snr").is_null())
        dc.target_snr = j.at("target_snr").get<double>();
    dc.attenuate = j.value("attenuate", dc.attenuate);
    dc.attenuation_z0 = j.value("attenuation_z0", dc.attenuation_z0);
    return dc;
}

PhantomConfig phantom_of(const json& cfg) {
    const json& j = cfg.at("phantom");
    PhantomConfig pc;
    pc.depth = j.value("depth", pc.depth);
    pc.height = j.value("height", pc.height);
    pc.width = j.value("width", pc.width);
    pc.ellipsoids = j.value("ellipsoids", pc.ellipsoids);
    pc.tubes = j.value("tubes", pc.tubes);
    pc.sheets = j.value("sheets", pc.sheets);
    pc.intensity_lo = j.value("intensity_lo", pc.intensity_lo);
    pc.intensity_hi = j.value("intensity_hi", pc.intensity_hi);
    pc.background = j.value("background", pc.background);
    pc.validate();
    return pc;
}

std::string io_of(const json& cfg, const std::string& key, bool required) {
    const std::string v = cfg.at("io").value(key, std::string());
    if (required && v.empty()) throw UsageError("missing required flag: --" + key);
    return v;
}

// ---------------------------------------------------------------------------
// Dataset directories
// ---------------------------------------------------------------------------

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> sorted_volume_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".vol") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Clean (target-quality) volumes: every .vol that is not the lq half of a
// pair. Accepts both plain synthesis output and pair directories.
std::vector<Volume> load_clean_volumes(const std::string& dir) {
    std::vector<Volume> out;
    for (const auto& p : sorted_volume_files(dir)) {
        if (ends_with(p.filename().string(), ".lq.vol")) continue;
        out.push_back(load_volume_native(p.string()));
    }
    if (out.empty()) throw DataError("no volumes found in " + dir);
    return out;
}

// Measured pairs: <stem>.lq.vol next to <stem>.hq.vol.
std::vector<PairedCube> load_pairs(const std::string& dir) {
    std::vector<PairedCube> out;
    for (const auto& p : sorted_volume_files(dir)) {
        const std::string name = p.filename().string();
        if (!ends_with(name, ".lq.vol")) continue;
        fs::path hq = p.parent_path() / (name.substr(0, name.size() - 7) + ".hq.vol");
        if (!fs::exists(hq)) throw DataError("pair incomplete, missing " + hq.string());
        PairedCube pc;
        pc.lq = load_volume_native(p.string());
        pc.hq = load_volume_native(hq.string());
        out.push_back(std::move(pc));
    }
    if (out.empty()) throw DataError("no .lq.vol/.hq.vol pairs found in " + dir);
    return out;
}

// Build the model from a checkpoint when one is given, otherwise fresh from
// the config. Returns the loaded meta when a checkpoint was read.
std::optional<CheckpointMeta> init_model(std::unique_ptr<RestorationModel<float>>& M,
                                         const json& cfg, const std::string& ckpt_path) {
    if (ckpt_path.empty()) {
        M = std::make_unique<RestorationModel<float>>(model_of(cfg), seed_of(cfg));
        return std::nullopt;
    }
    CheckpointMeta meta;
    const ModelConfig mc = load_checkpoint_config(ckpt_path, &meta);
    M = std::make_unique<RestorationModel<float>>(mc, seed_of(cfg));
    load_checkpoint<float>(ckpt_path, M->reg);
    return meta;
}

void print_log(const TrainResult& res) {
    for (const auto& l : res.log) std::printf("step %6lld  loss %.6f\n", (long long)l.step, l.loss);
}

StepHook checkpoint_hook(const std::string& out, const ModelConfig& mc,
                         const ParamRegistry<float>& reg, const std::string& stage,
                         uint64_t seed) {
    return [&, out, stage, seed](int64_t step) {
        CheckpointMeta meta{stage, step, seed};
        save_checkpoint(out + ".step" + std::to_string(step), mc, reg, meta);
    };
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const json& cfg) {
    const std::string out = io_of(cfg, "out", true);
    const int64_t count = cfg.at("io").at("count").get<int64_t>();
    if (count < 1) throw UsageError("synth: --count must be >= 1");
    fs::create_directories(out);
    PhantomConfig pc = phantom_of(cfg);
    WarningSink warnings;
    for (int64_t i = 0; i < count; ++i) {
        pc.seed = seed_of(cfg) + static_cast<uint64_t>(i);
        const Volume v = generate_phantom(pc, &warnings);
        char name[64];
        std::snprintf(name, sizeof name, "phantom-%04lld.vol", (long long)i);
        save_volume_native(v, (fs::path(out) / name).string());
    }
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %lld volumes to %s\n", (long long)count, out.c_str());
    return 0;
}

int cmd_degrade(const json& cfg) {
    const std::string in = io_of(cfg, "in", true);
    const std::string out = io_of(cfg, "out", true);
    fs::create_directories(out);
    DegradeConfig dc = degrade_of(cfg);
    int64_t n = 0;
    for (const auto& p : sorted_volume_files(in)) {
        const std::string name = p.filename().string();
        if (ends_with(name, ".lq.vol") || ends_with(name, ".hq.vol"))
            throw DataError("degrade: input already contains pairs: " + name);
        dc.seed = seed_of(cfg) + static_cast<uint64_t>(n);
        const PairedCube pc = simulate_acquisition(load_volume_native(p.string()), dc);
        const std::string stem = p.stem().string();
        save_volume_native(pc.lq, (fs::path(out) / (stem + ".lq.vol")).string());
        save_volume_native(pc.hq, (fs::path(out) / (stem + ".hq.vol")).string());
        ++n;
    }
    if (n == 0) throw DataError("no volumes found in " + in);
    std::printf("wrote %lld pairs to %s (%s)\n", (long long)n, out.c_str(),
                simulate_acquisition(load_volume_native(sorted_volume_files(in)[0].string()), dc)
                    .degradation_tag.c_str());
    return 0;
}

int train_stage(const json& cfg, const std::string& stage) {
    const std::string data = io_of(cfg, "data", true);
    const std::string out = io_of(cfg, "out", true);
    const std::string init = io_of(cfg, "init", false);
    std::unique_ptr<RestorationModel<float>> M;
    init_model(M, cfg, init);
    TrainConfig tc = train_of(cfg, stage);
    const StepHook hook = checkpoint_hook(out, M->cfg, M->reg, stage, tc.seed);

    TrainResult res;
    if (stage == "codec") {
        res = train_codec(*M, load_clean_volumes(data), tc, hook);
    } else if (stage == "pretrain") {
        res = pretrain(*M, load_clean_volumes(data), degrade_of(cfg), tc, hook);
        std::printf("pathways: simulation %lld, masked %lld, identity %lld\n",
                    (long long)res.sim_steps, (long long)res.masked_steps,
                    (long long)res.identity_steps);
    } else {
        res = finetune(*M, load_pairs(data), tc, hook);
    }
    print_log(res);
    CheckpointMeta meta{stage, tc.steps, tc.seed};
    save_checkpoint(out, M->cfg, M->reg, meta);
    std::printf("wrote checkpoint %s after %lld steps\n", out.c_str(), (long long)tc.steps);
    return 0;
}

int cmd_restore(const json& cfg) {
    const std::string in = io_of(cfg, "in", true);
    const std::string out = io_of(cfg, "out", true);
    const std::string ckpt = io_of(cfg, "checkpoint", true);
    std::unique_ptr<RestorationModel<float>> M;
    init_model(M, cfg, ckpt);
    SampleConfig sc;
    sc.steps = cfg.at("sample").at("steps").get<int64_t>();
    sc.seed = seed_of(cfg);
    const Volume lq = load_volume(in, format_from_extension(in));
    const Volume restored = restore_volume(*M, lq, sc);
    save_volume(restored, out, format_from_extension(out));
    std::printf("restored %s -> %s (%lldx%lldx%lld)\n", in.c_str(), out.c_str(),
                (long long)restored.depth, (long long)restored.height,
                (long long)restored.width);
    return 0;
}

int cmd_eval(const json& cfg) {
    const std::string data = io_of(cfg, "data", true);
    const std::string out = io_of(cfg, "out", true);
    const std::string ckpt = io_of(cfg, "checkpoint", true);
    std::unique_ptr<RestorationModel<float>> M;
    init_model(M, cfg, ckpt);
    EvalConfig ec;
    ec.sample_steps = cfg.at("sample").at("steps").get<int64_t>();
    ec.seed = seed_of(cfg);
    const MetricsReport rep = evaluate(*M, load_pairs(data), ec);
    std::ofstream f(out, std::ios::binary);
    if (!f) throw DataError("cannot write report: " + out);
    f << rep.to_json().dump(2) << "\n";
    for (const auto& [key, mean] : rep.method_mean)
        std::printf("%-8s method %12.6f   baseline %12.6f   p %.6f\n", key.c_str(), mean,
                    rep.baseline_mean.at(key), rep.wilcoxon_p.at(key));
    std::printf("wrote report %s (%zu volumes)\n", out.c_str(), rep.volumes.size());
    return 0;
}

int cmd_profile(const json& cfg) {
    const ModelConfig mc = model_of(cfg);
    RestorationModel<float> M(mc, seed_of(cfg));
    Rng rng(seed_of(cfg), 0x9f0f);
    Tensor<float> z({mc.depth, mc.latent_channels, mc.latent_h(), mc.latent_w()});
    for (int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
    Volume probe(mc.depth, mc.target_h, mc.target_w);
    const Tensor<float> c_local = M.condition_local(probe);
    const Tensor<float> c_global = M.condition_global(probe);
    const Tensor<float> c_fused = M.fuse_condition(c_global, 0);
    attn_macs().reset();
    M.predict_noise(z, c_local, c_fused);

    std::map<std::string, int64_t> params;
    for (const auto& p : M.reg.params) {
        const std::string head = p.name.substr(0, p.name.find('.'));
        params[head] += p.value.size();
        params["total"] += p.value.size();
    }
    json prof = {{"model", mc.to_json()},
                 {"attention_macs",
                  {{"lateral", attn_macs().lateral}, {"axial", attn_macs().axial}}},
                 {"tokens_per_slice", mc.denoiser().tokens_per_slice()},
                 {"parameters", params}};
    const std::string text = prof.dump(2) + "\n";
    const std::string out = io_of(cfg, "out", false);
    if (out.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream f(out, std::ios::binary);
        if (!f) throw DataError("cannot write profile: " + out);
        f << text;
        std::printf("wrote profile %s\n", out.c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// report-plots: render a metrics report as paired-dot SVG charts
// ---------------------------------------------------------------------------

std::string fmt_num(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_metric_svg(const fs::path& path, const std::string& metric,
                      const MetricsReport& rep) {
    const int64_t n = static_cast<int64_t>(rep.volumes.size());
    const int width = 720, row_h = 22, top = 48, left = 180, plot_w = width - left - 130;
    const int height = top + static_cast<int>(n) * row_h + 36;

    double lo = 0, hi = 1;
    bool first = true;
    auto widen = [&](double v) {
        if (!std::isfinite(v)) return;
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
    };
    for (const auto& r : rep.volumes) {
        widen(r.method.at(metric));
        widen(r.baseline.at(metric));
    }
    if (first) {
        lo = 0;
        hi = 1;
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.06 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto xpos = [&](double v) {
        if (!std::isfinite(v)) v = v > 0 ? hi : lo;
        return left + (v - lo) / (hi - lo) * plot_w;
    };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"16\" y=\"24\" font-size=\"16\">" + metric +
         " — method (filled) vs baseline (open)</text>\n";
    s += "<text x=\"16\" y=\"40\" font-size=\"11\" fill=\"#555\">mean method " +
         fmt_num(rep.method_mean.at(metric)) + ", baseline " +
         fmt_num(rep.baseline_mean.at(metric)) + ", signed-rank p " +
         fmt_num(rep.wilcoxon_p.at(metric)) + "</text>\n";
    for (int64_t i = 0; i < n; ++i) {
        const auto& r = rep.volumes[static_cast<size_t>(i)];
        const int y = top + static_cast<int>(i) * row_h + row_h / 2;
        const double m = r.method.at(metric), b = r.baseline.at(metric);
        s += "<text x=\"16\" y=\"" + std::to_string(y + 4) + "\" font-size=\"11\">" + r.roi_id +
             "</text>\n";
        s += "<line x1=\"" + fmt_num(xpos(b)) + "\" y1=\"" + std::to_string(y) + "\" x2=\"" +
             fmt_num(xpos(m)) + "\" y2=\"" + std::to_string(y) +
             "\" stroke=\"#bbb\" stroke-width=\"2\"/>\n";
        s += "<circle cx=\"" + fmt_num(xpos(b)) + "\" cy=\"" + std::to_string(y) +
             "\" r=\"5\" fill=\"white\" stroke=\"#d08020\" stroke-width=\"2\"/>\n";
        s += "<circle cx=\"" + fmt_num(xpos(m)) + "\" cy=\"" + std::to_string(y) +
             "\" r=\"5\" fill=\"#2060c0\"/>\n";
        s += "<text x=\"" + std::to_string(left + plot_w + 12) + "\" y=\"" +
             std::to_string(y + 4) + "\" font-size=\"10\" fill=\"#333\">" + fmt_num(m) + " / " +
             fmt_num(b) + "</text>\n";
    }
    const int axis_y = top + static_cast<int>(n) * row_h + 12;
    s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(axis_y) + "\" x2=\"" +
         std::to_string(left + plot_w) + "\" y2=\"" + std::to_string(axis_y) +
         "\" stroke=\"#333\"/>\n";
    s += "<text x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(axis_y + 14) +
         "\" font-size=\"10\">" + fmt_num(lo) + "</text>\n";
    s += "<text x=\"" + std::to_string(left + plot_w - 40) + "\" y=\"" +
         std::to_string(axis_y + 14) + "\" font-size=\"10\">" + fmt_num(hi) + "</text>\n";
    s += "</svg>\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write plot: " + path.string());
    f << s;
}

int cmd_report_plots(const json& cfg) {
    const std::string report = io_of(cfg, "report", true);
    const std::string out = io_of(cfg, "out", true);
    std::ifstream f(report);
    if (!f) throw DataError("cannot open report: " + report);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw DataError("report is not valid JSON: " + report);
    const MetricsReport rep = MetricsReport::from_json(j);
    fs::create_directories(out);
    for (const auto& [metric, unused] : rep.method_mean) {
        (void)unused;
        write_metric_svg(fs::path(out) / (metric + ".svg"), metric, rep);
    }
    std::printf("wrote %zu plots to %s\n", rep.method_mean.size(), out.c_str());
    return 0;
}

int run(int argc, char** argv) {
    const Cli cli = parse_cli(argc, argv);
    if (cli.subcommand == "synth") return cmd_synth(cli.cfg);
    if (cli.subcommand == "degrade") return cmd_degrade(cli.cfg);
    if (cli.subcommand == "train-codec") return train_stage(cli.cfg, "codec");
    if (cli.subcommand == "pretrain") return train_stage(cli.cfg, "pretrain");
    if (cli.subcommand == "finetune") return train_stage(cli.cfg, "finetune");
    if (cli.subcommand == "restore") return cmd_restore(cli.cfg);
    if (cli.subcommand == "eval") return cmd_eval(cli.cfg);
    if (cli.subcommand == "profile") return cmd_profile(cli.cfg);
    return cmd_report_plots(cli.cfg);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n%s", e.what(), argc < 2 ? kUsage : "");
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
