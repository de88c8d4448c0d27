#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "vdr/common.hpp"
#include "vdr/model.hpp"
#include "vdr/params.hpp"
#include "vdr/volume_io.hpp"

namespace vdr {

struct CheckpointMeta {
    std::string stage;  // "init", "codec", "pretrain", "finetune"
    int64_t step = 0;
    uint64_t seed = 0;
};

inline uint64_t fnv1a64(const uint8_t* p, size_t n) {
    uint64_t h = 14695981039346656037ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// Checkpoint file layout: one JSON header line (config, training metadata,
// parameter names/shapes in registry order, content digest of the blob),
// then the parameters as float32 little-endian in that order.
template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamRegistry<T>& reg, const CheckpointMeta& meta) {
    std::vector<uint8_t> blob;
    nlohmann::json params = nlohmann::json::array();
    for (int64_t i = 0; i < reg.count(); ++i) {
        const auto& p = reg.at(i);
        params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
        for (int64_t j = 0; j < p.value.size(); ++j)
            detail::put_f32le(blob, static_cast<float>(p.value[j]));
    }
    nlohmann::json hdr;
    hdr["vdr_checkpoint"] = 1;
    hdr["config"] = cfg.to_json();
    hdr["meta"] = {{"stage", meta.stage}, {"step", meta.step}, {"seed", meta.seed}};
    hdr["params"] = std::move(params);
    hdr["digest"] = hex64(fnv1a64(blob.data(), blob.size()));

    std::string line = hdr.dump();
    line.push_back('\n');
    std::vector<uint8_t> buf;
    buf.reserve(line.size() + blob.size());
    buf.insert(buf.end(), line.begin(), line.end());
    buf.insert(buf.end(), blob.begin(), blob.end());
    detail::write_all(path, buf);
}

namespace detail {

inline nlohmann::json checkpoint_header(const std::vector<uint8_t>& buf, const std::string& path,
                                        size_t* payload_at) {
    auto nl = std::find(buf.begin(), buf.end(), uint8_t('\n'));
    if (nl == buf.end()) throw DataError("checkpoint: missing header line: " + path);
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(std::string(buf.begin(), nl));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: bad header JSON: " + std::string(e.what()));
    }
    if (!hdr.contains("vdr_checkpoint") || !hdr.contains("params") || !hdr.contains("digest") ||
        !hdr.contains("config"))
        throw DataError("checkpoint: header missing required fields: " + path);
    *payload_at = static_cast<size_t>(nl - buf.begin()) + 1;
    return hdr;
}

}  // namespace detail

// Read just the model config, so the caller can construct the model before
// loading values into its registry.
inline ModelConfig load_checkpoint_config(const std::string& path, CheckpointMeta* meta = nullptr) {
    auto buf = detail::read_all(path);
    size_t at = 0;
    auto hdr = detail::checkpoint_header(buf, path, &at);
    if (meta && hdr.contains("meta")) {
        meta->stage = hdr["meta"].value("stage", std::string());
        meta->step = hdr["meta"].value("step", int64_t(0));
        meta->seed = hdr["meta"].value("seed", uint64_t(0));
    }
    return ModelConfig::from_json(hdr["config"]);
}

// Load parameter values into a registry whose layout was created from the
// checkpoint's config.  Verifies the digest, then matches by name and shape.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, ParamRegistry<T>& reg) {
    auto buf = detail::read_all(path);
    size_t at = 0;
    auto hdr = detail::checkpoint_header(buf, path, &at);

    const size_t blob_len = buf.size() - at;
    const std::string digest = hex64(fnv1a64(buf.data() + at, blob_len));
    if (digest != hdr["digest"].get<std::string>())
        throw DataError("checkpoint: content digest mismatch (corrupt file): " + path);

    const auto& params = hdr["params"];
    if (static_cast<int64_t>(params.size()) != reg.count())
        throw DataError("checkpoint: parameter count mismatch: file has " +
                        std::to_string(params.size()) + ", model has " +
                        std::to_string(reg.count()));
    size_t off = at;
    for (const auto& pj : params) {
        const std::string name = pj["name"].get<std::string>();
        const std::vector<int64_t> shape = pj["shape"].get<std::vector<int64_t>>();
        const int64_t pid = reg.find(name);
        if (pid < 0) throw DataError("checkpoint: unknown parameter in file: " + name);
        auto& p = reg.at(pid);
        if (p.value.shape() != shape)
            throw DataError("checkpoint: shape mismatch for parameter: " + name);
        const size_t bytes = static_cast<size_t>(p.value.size()) * 4;
        if (off + bytes > buf.size()) throw DataError("checkpoint: truncated payload: " + path);
        for (int64_t j = 0; j < p.value.size(); ++j)
            p.value[j] = static_cast<T>(detail::get_f32(buf.data() + off + 4 * j, true));
        off += bytes;
    }
    if (off != buf.size()) throw DataError("checkpoint: trailing bytes after parameters: " + path);

    CheckpointMeta meta;
    if (hdr.contains("meta")) {
        meta.stage = hdr["meta"].value("stage", std::string());
        meta.step = hdr["meta"].value("step", int64_t(0));
        meta.seed = hdr["meta"].value("seed", uint64_t(0));
    }
    return meta;
}

}  // namespace vdr
