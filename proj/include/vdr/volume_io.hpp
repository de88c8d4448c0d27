#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdr/volume.hpp"

namespace vdr {

enum class VolumeFormat { Native, TiffStack, Mrc };

inline VolumeFormat format_from_extension(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".tif" || ext == ".tiff") return VolumeFormat::TiffStack;
    if (ext == ".mrc" || ext == ".map" || ext == ".rec") return VolumeFormat::Mrc;
    return VolumeFormat::Native;
}

namespace detail {

inline void put_u16le(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32le(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f32le(std::vector<uint8_t>& b, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32le(b, v);
}
inline uint16_t get_u16(const uint8_t* p, bool le) {
    return le ? static_cast<uint16_t>(p[0] | (p[1] << 8)) : static_cast<uint16_t>((p[0] << 8) | p[1]);
}
inline uint32_t get_u32(const uint8_t* p, bool le) {
    return le ? (uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24))
              : (uint32_t(p[3]) | (uint32_t(p[2]) << 8) | (uint32_t(p[1]) << 16) | (uint32_t(p[0]) << 24));
}
inline float get_f32(const uint8_t* p, bool le) {
    uint32_t v = get_u32(p, le);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}
inline int32_t get_i32(const uint8_t* p, bool le) { return static_cast<int32_t>(get_u32(p, le)); }

inline std::vector<uint8_t> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    auto n = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw DataError("short read: " + path);
    return buf;
}

inline void write_all(const std::string& path, const std::vector<uint8_t>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("write failed: " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Native container: one UTF-8 JSON header line terminated by '\n', followed by
// depth*height*width little-endian float32 values in z-major, row-major order.
// ---------------------------------------------------------------------------

inline void save_volume_native(const Volume& v, const std::string& path) {
    nlohmann::json hdr;
    hdr["vdr_volume"] = 1;
    hdr["dims"] = {v.depth, v.height, v.width};
    hdr["spacing"] = {v.spacing.dz, v.spacing.dy, v.spacing.dx};
    hdr["roi_id"] = v.roi_id;
    hdr["channel_tag"] = v.channel_tag;
    std::string line = hdr.dump();
    line.push_back('\n');

    std::vector<uint8_t> buf;
    buf.reserve(line.size() + static_cast<size_t>(v.voxels()) * 4);
    buf.insert(buf.end(), line.begin(), line.end());
    for (float f : v.data) detail::put_f32le(buf, f);
    detail::write_all(path, buf);
}

inline Volume load_volume_native(const std::string& path) {
    auto buf = detail::read_all(path);
    auto nl = std::find(buf.begin(), buf.end(), uint8_t('\n'));
    if (nl == buf.end()) throw DataError("native volume: missing header line: " + path);
    std::string line(buf.begin(), nl);
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("native volume: bad header JSON: " + std::string(e.what()));
    }
    if (!hdr.contains("dims") || hdr["dims"].size() != 3)
        throw DataError("native volume: header missing dims");
    Volume v;
    v.depth = hdr["dims"][0].get<int64_t>();
    v.height = hdr["dims"][1].get<int64_t>();
    v.width = hdr["dims"][2].get<int64_t>();
    if (v.depth < 1 || v.height < 1 || v.width < 1)
        throw DataError("native volume: dims must be >= 1");
    if (hdr.contains("spacing") && hdr["spacing"].size() == 3) {
        v.spacing.dz = hdr["spacing"][0].get<double>();
        v.spacing.dy = hdr["spacing"][1].get<double>();
        v.spacing.dx = hdr["spacing"][2].get<double>();
    }
    v.roi_id = hdr.value("roi_id", std::string());
    v.channel_tag = hdr.value("channel_tag", std::string());

    const size_t payload = buf.end() - (nl + 1);
    const size_t expect = static_cast<size_t>(v.voxels()) * 4;
    if (payload != expect)
        throw DataError("native volume: payload length mismatch (got " + std::to_string(payload) +
                        " bytes, expected " + std::to_string(expect) + ")");
    v.data.resize(static_cast<size_t>(v.voxels()));
    const uint8_t* p = &*(nl + 1);
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = detail::get_f32(p + 4 * i, true);
    return v;
}

// ---------------------------------------------------------------------------
// TIFF: minimal classic-TIFF multi-page reader/writer. Writer emits one
// uncompressed float32 grayscale page per slice, single strip. Reader accepts
// uncompressed grayscale 8/16-bit unsigned or 32-bit float, II or MM byte
// order, multi-strip pages. Sample values pass through unscaled.
// ---------------------------------------------------------------------------

inline void save_volume_tiff(const Volume& v, const std::string& path) {
    std::vector<uint8_t> buf;
    buf.reserve(16 + static_cast<size_t>(v.voxels()) * 4 + static_cast<size_t>(v.depth) * 200);
    buf.push_back('I');
    buf.push_back('I');
    detail::put_u16le(buf, 42);
    const size_t first_ifd_patch = buf.size();
    detail::put_u32le(buf, 0);  // patched below

    const uint32_t strip_bytes = static_cast<uint32_t>(v.height * v.width * 4);
    std::vector<uint32_t> strip_offsets(static_cast<size_t>(v.depth));
    for (int64_t z = 0; z < v.depth; ++z) {
        strip_offsets[static_cast<size_t>(z)] = static_cast<uint32_t>(buf.size());
        const float* s = v.slice(z);
        for (int64_t i = 0; i < v.height * v.width; ++i) detail::put_f32le(buf, s[i]);
    }

    auto entry = [&buf](uint16_t tag, uint16_t type, uint32_t count, uint32_t value) {
        detail::put_u16le(buf, tag);
        detail::put_u16le(buf, type);
        detail::put_u32le(buf, count);
        detail::put_u32le(buf, value);
    };

    uint32_t prev_next_patch = static_cast<uint32_t>(first_ifd_patch);
    for (int64_t z = 0; z < v.depth; ++z) {
        const uint32_t ifd_off = static_cast<uint32_t>(buf.size());
        // Patch the previous "next IFD" pointer.
        buf[prev_next_patch + 0] = static_cast<uint8_t>(ifd_off & 0xff);
        buf[prev_next_patch + 1] = static_cast<uint8_t>((ifd_off >> 8) & 0xff);
        buf[prev_next_patch + 2] = static_cast<uint8_t>((ifd_off >> 16) & 0xff);
        buf[prev_next_patch + 3] = static_cast<uint8_t>((ifd_off >> 24) & 0xff);

        detail::put_u16le(buf, 10);  // entry count, ascending tag order required
        entry(256, 4, 1, static_cast<uint32_t>(v.width));      // ImageWidth
        entry(257, 4, 1, static_cast<uint32_t>(v.height));     // ImageLength
        entry(258, 3, 1, 32);                                  // BitsPerSample
        entry(259, 3, 1, 1);                                   // Compression: none
        entry(262, 3, 1, 1);                                   // Photometric: BlackIsZero
        entry(273, 4, 1, strip_offsets[static_cast<size_t>(z)]);  // StripOffsets
        entry(277, 3, 1, 1);                                   // SamplesPerPixel
        entry(278, 4, 1, static_cast<uint32_t>(v.height));     // RowsPerStrip
        entry(279, 4, 1, strip_bytes);                         // StripByteCounts
        entry(339, 3, 1, 3);                                   // SampleFormat: IEEE float
        prev_next_patch = static_cast<uint32_t>(buf.size());
        detail::put_u32le(buf, 0);  // next IFD (patched on next page)
    }
    detail::write_all(path, buf);
}

inline Volume load_volume_tiff(const std::string& path) {
    auto buf = detail::read_all(path);
    if (buf.size() < 8) throw DataError("tiff: truncated header: " + path);
    bool le;
    if (buf[0] == 'I' && buf[1] == 'I') le = true;
    else if (buf[0] == 'M' && buf[1] == 'M') le = false;
    else throw DataError("tiff: bad byte-order mark: " + path);
    if (detail::get_u16(&buf[2], le) != 42) throw DataError("tiff: bad magic: " + path);

    auto need = [&buf, &path](size_t off, size_t n) {
        if (off + n > buf.size()) throw DataError("tiff: truncated file: " + path);
    };

    struct Page {
        uint32_t width = 0, height = 0, bits = 0, sfmt = 1, comp = 1, spp = 1, rows_per_strip = 0;
        std::vector<uint32_t> strip_offsets, strip_counts;
    };
    std::vector<Page> pages;

    uint32_t ifd_off = detail::get_u32(&buf[4], le);
    int guard = 0;
    while (ifd_off != 0) {
        if (++guard > 100000) throw DataError("tiff: IFD chain loop: " + path);
        need(ifd_off, 2);
        const uint16_t n_entries = detail::get_u16(&buf[ifd_off], le);
        need(ifd_off + 2, static_cast<size_t>(n_entries) * 12 + 4);
        Page pg;
        for (uint16_t i = 0; i < n_entries; ++i) {
            const uint8_t* e = &buf[ifd_off + 2 + i * 12];
            const uint16_t tag = detail::get_u16(e, le);
            const uint16_t type = detail::get_u16(e + 2, le);
            const uint32_t count = detail::get_u32(e + 4, le);
            const size_t type_size = type == 3 ? 2 : (type == 4 ? 4 : (type == 1 ? 1 : 0));
            auto values = [&](size_t k) -> uint32_t {
                if (type_size == 0) throw DataError("tiff: unsupported field type");
                const size_t total = type_size * count;
                const uint8_t* base = total <= 4 ? e + 8 : &buf[detail::get_u32(e + 8, le)];
                if (total > 4) need(detail::get_u32(e + 8, le), total);
                const uint8_t* p = base + k * type_size;
                if (type == 3) return detail::get_u16(p, le);
                if (type == 4) return detail::get_u32(p, le);
                return *p;
            };
            switch (tag) {
                case 256: pg.width = values(0); break;
                case 257: pg.height = values(0); break;
                case 258: pg.bits = values(0); break;
                case 259: pg.comp = values(0); break;
                case 273:
                    for (uint32_t k = 0; k < count; ++k) pg.strip_offsets.push_back(values(k));
                    break;
                case 277: pg.spp = values(0); break;
                case 278: pg.rows_per_strip = values(0); break;
                case 279:
                    for (uint32_t k = 0; k < count; ++k) pg.strip_counts.push_back(values(k));
                    break;
                case 322: throw DataError("tiff: tiled layout unsupported: " + path);
                case 339: pg.sfmt = values(0); break;
                default: break;
            }
        }
        if (pg.comp != 1) throw DataError("tiff: compressed data unsupported: " + path);
        if (pg.spp != 1) throw DataError("tiff: only single-sample grayscale supported: " + path);
        if (pg.width == 0 || pg.height == 0) throw DataError("tiff: page with zero dimension: " + path);
        if (pg.rows_per_strip == 0) pg.rows_per_strip = pg.height;
        pages.push_back(std::move(pg));
        ifd_off = detail::get_u32(&buf[ifd_off + 2 + n_entries * 12], le);
    }
    if (pages.empty()) throw DataError("tiff: no pages: " + path);
    for (const auto& pg : pages)
        if (pg.width != pages[0].width || pg.height != pages[0].height || pg.bits != pages[0].bits)
            throw DataError("tiff: pages with inconsistent geometry: " + path);

    Volume v(static_cast<int64_t>(pages.size()), pages[0].height, pages[0].width);
    for (size_t z = 0; z < pages.size(); ++z) {
        const Page& pg = pages[z];
        const size_t bytes_per_sample = pg.bits / 8;
        if (!(pg.bits == 8 || pg.bits == 16 || pg.bits == 32))
            throw DataError("tiff: unsupported bit depth: " + path);
        if (pg.bits == 32 && pg.sfmt != 3)
            throw DataError("tiff: 32-bit integer samples unsupported: " + path);
        size_t written = 0;
        float* out = v.slice(static_cast<int64_t>(z));
        const size_t total = static_cast<size_t>(pg.width) * pg.height;
        for (size_t s = 0; s < pg.strip_offsets.size() && written < total; ++s) {
            const uint32_t off = pg.strip_offsets[s];
            const uint32_t nbytes = s < pg.strip_counts.size()
                                        ? pg.strip_counts[s]
                                        : static_cast<uint32_t>((total - written) * bytes_per_sample);
            need(off, nbytes);
            const size_t nsamp = nbytes / bytes_per_sample;
            for (size_t k = 0; k < nsamp && written < total; ++k, ++written) {
                const uint8_t* p = &buf[off + k * bytes_per_sample];
                if (pg.bits == 8) out[written] = static_cast<float>(*p);
                else if (pg.bits == 16) out[written] = static_cast<float>(detail::get_u16(p, le));
                else out[written] = detail::get_f32(p, le);
            }
        }
        if (written != total) throw DataError("tiff: strip data does not cover page: " + path);
    }
    return v;
}

// ---------------------------------------------------------------------------
// MRC: 1024-byte MRC2014-style header. Writer emits mode 2 (float32, little
// endian). Reader accepts modes 0 (int8), 1 (int16), 2 (float32), 6 (uint16)
// in either byte order. The cell size field carries spacing * grid dims; the
// unit passes through unchanged (we use micrometers throughout).
// ---------------------------------------------------------------------------

inline void save_volume_mrc(const Volume& v, const std::string& path) {
    std::vector<uint8_t> buf;
    buf.reserve(1024 + static_cast<size_t>(v.voxels()) * 4);
    auto i32 = [&buf](int32_t x) { detail::put_u32le(buf, static_cast<uint32_t>(x)); };
    auto f32 = [&buf](float x) { detail::put_f32le(buf, x); };

    i32(static_cast<int32_t>(v.width));   // nx: columns
    i32(static_cast<int32_t>(v.height));  // ny: rows
    i32(static_cast<int32_t>(v.depth));   // nz: sections
    i32(2);                               // mode: float32
    i32(0); i32(0); i32(0);               // nxstart..
    i32(static_cast<int32_t>(v.width));   // mx
    i32(static_cast<int32_t>(v.height));  // my
    i32(static_cast<int32_t>(v.depth));   // mz
    f32(static_cast<float>(v.spacing.dx * static_cast<double>(v.width)));   // cella
    f32(static_cast<float>(v.spacing.dy * static_cast<double>(v.height)));
    f32(static_cast<float>(v.spacing.dz * static_cast<double>(v.depth)));
    f32(90.0f); f32(90.0f); f32(90.0f);   // cellb
    i32(1); i32(2); i32(3);               // mapc, mapr, maps

    float mn = v.data.empty() ? 0.0f : v.data[0], mx_ = mn;
    double mean = 0.0;
    for (float x : v.data) {
        mn = std::min(mn, x);
        mx_ = std::max(mx_, x);
        mean += x;
    }
    if (!v.data.empty()) mean /= static_cast<double>(v.data.size());
    f32(mn); f32(mx_); f32(static_cast<float>(mean));  // dmin dmax dmean
    i32(0);  // ispg: image stack
    i32(0);  // nsymbt
    while (buf.size() < 208) buf.push_back(0);  // extra space
    buf.push_back('M'); buf.push_back('A'); buf.push_back('P'); buf.push_back(' ');
    buf.push_back(0x44); buf.push_back(0x44); buf.push_back(0x00); buf.push_back(0x00);  // machst LE
    f32(0.0f);  // rms (unset)
    i32(0);     // nlabl
    while (buf.size() < 1024) buf.push_back(0);

    for (int64_t z = 0; z < v.depth; ++z) {
        const float* s = v.slice(z);
        for (int64_t i = 0; i < v.height * v.width; ++i) detail::put_f32le(buf, s[i]);
    }
    detail::write_all(path, buf);
}

inline Volume load_volume_mrc(const std::string& path) {
    auto buf = detail::read_all(path);
    if (buf.size() < 1024) throw DataError("mrc: truncated header: " + path);
    // Byte order from the machine stamp, falling back on a mode sanity check.
    bool le = true;
    const uint8_t ms0 = buf[212];
    if (ms0 == 0x11) le = false;
    else if (ms0 != 0x44) {
        const int32_t mode_le = detail::get_i32(&buf[12], true);
        le = (mode_le >= 0 && mode_le <= 16);
    }
    const int32_t nx = detail::get_i32(&buf[0], le);
    const int32_t ny = detail::get_i32(&buf[4], le);
    const int32_t nz = detail::get_i32(&buf[8], le);
    const int32_t mode = detail::get_i32(&buf[12], le);
    if (nx < 1 || ny < 1 || nz < 1) throw DataError("mrc: dimension of zero or less: " + path);
    const int32_t nsymbt = detail::get_i32(&buf[92], le);
    if (nsymbt < 0) throw DataError("mrc: negative extended header size: " + path);
    const size_t data_off = 1024 + static_cast<size_t>(nsymbt);

    size_t bps;
    switch (mode) {
        case 0: bps = 1; break;
        case 1: bps = 2; break;
        case 2: bps = 4; break;
        case 6: bps = 2; break;
        default: throw DataError("mrc: unsupported mode " + std::to_string(mode) + ": " + path);
    }
    const size_t n = static_cast<size_t>(nx) * ny * nz;
    if (data_off + n * bps > buf.size()) throw DataError("mrc: truncated data: " + path);

    Volume v(nz, ny, nx);
    const int32_t mx = detail::get_i32(&buf[28], le);
    const int32_t my = detail::get_i32(&buf[32], le);
    const int32_t mz = detail::get_i32(&buf[36], le);
    const float cx = detail::get_f32(&buf[40], le);
    const float cy = detail::get_f32(&buf[44], le);
    const float cz = detail::get_f32(&buf[48], le);
    if (mx > 0 && cx > 0) v.spacing.dx = static_cast<double>(cx) / mx;
    if (my > 0 && cy > 0) v.spacing.dy = static_cast<double>(cy) / my;
    if (mz > 0 && cz > 0) v.spacing.dz = static_cast<double>(cz) / mz;

    const uint8_t* p = &buf[data_off];
    for (size_t i = 0; i < n; ++i) {
        switch (mode) {
            case 0: v.data[i] = static_cast<float>(static_cast<int8_t>(p[i])); break;
            case 1: v.data[i] = static_cast<float>(static_cast<int16_t>(detail::get_u16(p + 2 * i, le))); break;
            case 2: v.data[i] = detail::get_f32(p + 4 * i, le); break;
            case 6: v.data[i] = static_cast<float>(detail::get_u16(p + 2 * i, le)); break;
        }
    }
    return v;
}

inline Volume load_volume(const std::string& path, VolumeFormat fmt) {
    switch (fmt) {
        case VolumeFormat::Native: return load_volume_native(path);
        case VolumeFormat::TiffStack: return load_volume_tiff(path);
        case VolumeFormat::Mrc: return load_volume_mrc(path);
    }
    throw DataError("unknown volume format");
}

inline void save_volume(const Volume& v, const std::string& path, VolumeFormat fmt) {
    if (v.depth < 1 || v.height < 1 || v.width < 1)
        throw DataError("save_volume: dims must be >= 1");
    switch (fmt) {
        case VolumeFormat::Native: save_volume_native(v, path); return;
        case VolumeFormat::TiffStack: save_volume_tiff(v, path); return;
        case VolumeFormat::Mrc: save_volume_mrc(v, path); return;
    }
}

}  // namespace vdr
