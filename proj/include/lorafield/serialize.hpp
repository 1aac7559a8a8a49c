#pragma once

// Bit-exact persistence: NFCKPT1 checkpoints, NFLORA1 adapter files and the
// video bundle directory layout. Parameters are stored as little-endian
// 32-bit floats with a trailing 64-bit FNV-1a content hash; in-memory
// artifacts hold the same values widened to double, so save -> load -> save
// is byte-identical. Writes are whole-file atomic.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lorafield/errors.hpp"
#include "lorafield/field.hpp"
#include "lorafield/io_util.hpp"

namespace lorafield {

namespace detail {

constexpr char kCheckpointMagic[8] = {'N', 'F', 'C', 'K', 'P', 'T', '1', '\0'};
constexpr char kAdapterMagic[8] = {'N', 'F', 'L', 'O', 'R', 'A', '1', '\0'};

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct ByteReader {
    const std::uint8_t* p;
    const std::uint8_t* end;
    std::string path;

    std::size_t remaining() const { return static_cast<std::size_t>(end - p); }

    void need(std::size_t n) const {
        if (remaining() < n) throw IoError(path + ": truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline void put_arch(std::vector<std::uint8_t>& out, const FieldArchitecture& a) {
    put_u32(out, static_cast<std::uint32_t>(a.input_dim));
    put_u32(out, static_cast<std::uint32_t>(a.encoding_levels));
    put_u32(out, static_cast<std::uint32_t>(a.hidden_width));
    put_u32(out, static_cast<std::uint32_t>(a.hidden_layers));
    put_u32(out, static_cast<std::uint32_t>(a.output_dim));
    put_u32(out, static_cast<std::uint32_t>(a.activation));
}

inline FieldArchitecture read_arch(ByteReader& r) {
    FieldArchitecture a;
    a.input_dim = static_cast<int>(r.u32());
    a.encoding_levels = static_cast<int>(r.u32());
    a.hidden_width = static_cast<int>(r.u32());
    a.hidden_layers = static_cast<int>(r.u32());
    a.output_dim = static_cast<int>(r.u32());
    const std::uint32_t act = r.u32();
    if (act != 0) throw IoError(r.path + ": unknown activation id " + std::to_string(act));
    a.activation = Activation::relu;
    try {
        a.validate();
    } catch (const std::exception& e) {
        throw IoError(r.path + ": invalid architecture block (" + e.what() + ")");
    }
    return a;
}

// The serialized image of a checkpoint minus the trailing hash; the content
// hash is the FNV-1a of these bytes.
inline std::vector<std::uint8_t> checkpoint_body(const FieldArchitecture& arch,
                                                 const FieldWeights& weights) {
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
    put_arch(out, arch);
    for (std::size_t l = 0; l < weights.weight.size(); ++l) {
        for (double v : weights.weight[l].data()) put_f32(out, static_cast<float>(v));
        for (double v : weights.bias[l]) put_f32(out, static_cast<float>(v));
    }
    return out;
}

} // namespace detail

// Rounds every parameter through 32-bit floats (the on-disk precision).
inline FieldWeights quantize_weights(FieldWeights w) {
    for (auto& m : w.weight)
        for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
    for (auto& b : w.bias)
        for (double& v : b) v = static_cast<double>(static_cast<float>(v));
    return w;
}

inline AdapterSet quantize_adapters(AdapterSet a) {
    for (auto& m : a.down)
        for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
    for (auto& m : a.up)
        for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
    return a;
}

// Trained field plus its architecture and content hash. Weights are always
// held at 32-bit precision so serialization is lossless.
struct BaseCheckpoint {
    FieldArchitecture arch;
    FieldWeights weights;
    std::uint64_t content_hash = 0;
};

inline BaseCheckpoint make_checkpoint(const FieldArchitecture& arch, FieldWeights weights) {
    validate_weights(arch, weights);
    BaseCheckpoint ckpt;
    ckpt.arch = arch;
    ckpt.weights = quantize_weights(std::move(weights));
    const auto body = detail::checkpoint_body(ckpt.arch, ckpt.weights);
    ckpt.content_hash = detail::fnv1a(body.data(), body.size());
    return ckpt;
}

inline void save_checkpoint(const BaseCheckpoint& ckpt, const std::string& path) {
    auto bytes = detail::checkpoint_body(ckpt.arch, ckpt.weights);
    detail::put_u64(bytes, detail::fnv1a(bytes.data(), bytes.size()));
    write_file_atomic(path, bytes);
}

inline BaseCheckpoint load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 8 + 24 + 8) throw IoError(path + ": truncated file");
    if (std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0)
        throw IoError(path + ": bad magic (not an NFCKPT1 checkpoint)");

    detail::ByteReader r{bytes.data() + 8, bytes.data() + bytes.size() - 8, path};
    FieldArchitecture arch = detail::read_arch(r);

    FieldWeights w;
    for (int l = 0; l < arch.layer_count(); ++l) {
        const int d_in = arch.layer_in(l), d_out = arch.layer_out(l);
        DenseMatrix wm(d_out, d_in);
        for (double& v : wm.data()) v = static_cast<double>(r.f32());
        std::vector<double> bias(d_out);
        for (double& v : bias) v = static_cast<double>(r.f32());
        w.weight.push_back(std::move(wm));
        w.bias.push_back(std::move(bias));
    }
    if (r.remaining() != 0) throw IoError(path + ": payload longer than the architecture implies");

    const std::uint64_t want = detail::fnv1a(bytes.data(), bytes.size() - 8);
    detail::ByteReader tail{bytes.data() + bytes.size() - 8, bytes.data() + bytes.size(), path};
    if (tail.u64() != want) throw IoError(path + ": content hash mismatch (file corrupted)");

    BaseCheckpoint ckpt;
    ckpt.arch = arch;
    ckpt.weights = std::move(w);
    ckpt.content_hash = want;
    return ckpt;
}

// ---------------------------------------------------------------------------
// Adapter files
// ---------------------------------------------------------------------------

struct LoadedAdapter {
    AdapterSet adapters;
    std::uint64_t base_hash = 0;
};

inline void save_adapter(const AdapterSet& adapters, std::uint64_t base_hash,
                         const std::string& path) {
    std::vector<std::uint8_t> out(detail::kAdapterMagic, detail::kAdapterMagic + 8);
    detail::put_u32(out, static_cast<std::uint32_t>(adapters.nominal_rank));
    detail::put_u32(out, static_cast<std::uint32_t>(adapters.layer_count()));
    detail::put_u64(out, base_hash);
    for (int l = 0; l < adapters.layer_count(); ++l) {
        detail::put_u32(out, static_cast<std::uint32_t>(adapters.down[l].cols())); // d_in
        detail::put_u32(out, static_cast<std::uint32_t>(adapters.up[l].rows()));   // d_out
        detail::put_u32(out, static_cast<std::uint32_t>(adapters.down[l].rows())); // r_eff
        for (double v : adapters.down[l].data()) detail::put_f32(out, static_cast<float>(v));
        for (double v : adapters.up[l].data()) detail::put_f32(out, static_cast<float>(v));
    }
    detail::put_u64(out, detail::fnv1a(out.data(), out.size()));
    write_file_atomic(path, out);
}

inline LoadedAdapter load_adapter(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 8 + 4 + 4 + 8 + 8) throw IoError(path + ": truncated file");
    if (std::memcmp(bytes.data(), detail::kAdapterMagic, 8) != 0)
        throw IoError(path + ": bad magic (not an NFLORA1 adapter)");

    const std::uint64_t want = detail::fnv1a(bytes.data(), bytes.size() - 8);
    detail::ByteReader tail{bytes.data() + bytes.size() - 8, bytes.data() + bytes.size(), path};
    if (tail.u64() != want) throw IoError(path + ": content hash mismatch (file corrupted)");

    detail::ByteReader r{bytes.data() + 8, bytes.data() + bytes.size() - 8, path};
    LoadedAdapter out;
    out.adapters.nominal_rank = static_cast<int>(r.u32());
    const std::uint32_t layers = r.u32();
    if (out.adapters.nominal_rank < 1 || layers < 2 || layers > 4096)
        throw IoError(path + ": implausible adapter header");
    out.base_hash = r.u64();
    for (std::uint32_t l = 0; l < layers; ++l) {
        const std::uint32_t d_in = r.u32();
        const std::uint32_t d_out = r.u32();
        const std::uint32_t r_eff = r.u32();
        if (r_eff < 1 || r_eff > std::min(d_in, d_out))
            throw IoError(path + ": invalid effective rank in layer " + std::to_string(l));
        DenseMatrix down(r_eff, d_in);
        for (double& v : down.data()) v = static_cast<double>(r.f32());
        DenseMatrix up(d_out, r_eff);
        for (double& v : up.data()) v = static_cast<double>(r.f32());
        out.adapters.down.push_back(std::move(down));
        out.adapters.up.push_back(std::move(up));
    }
    if (r.remaining() != 0) throw IoError(path + ": payload longer than the header implies");
    return out;
}

// Loads an adapter and checks it was trained against `base`; pass
// force = true to attach despite a hash mismatch.
inline AdapterSet load_adapter_for(const std::string& path, const BaseCheckpoint& base,
                                   bool force = false) {
    LoadedAdapter loaded = load_adapter(path);
    if (!force && loaded.base_hash != base.content_hash)
        throw IoError(path + ": adapter was trained against a different base checkpoint "
                             "(hash mismatch); pass --force to attach anyway");
    validate_adapters(base.arch, loaded.adapters);
    return std::move(loaded.adapters);
}

// ---------------------------------------------------------------------------
// Video bundles: directory with base checkpoint, numbered adapters, manifest
// ---------------------------------------------------------------------------

struct VideoBundle {
    BaseCheckpoint base;
    std::vector<AdapterSet> adapters; // adapters[k] encodes frame k + 2
    std::string mode;                 // "sequential" or "parallel"
    int frame_count = 0;
};

inline void save_bundle(const VideoBundle& bundle, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_checkpoint(bundle.base, dir + "/base.nfc");
    nlohmann::json manifest;
    manifest["format"] = "nfbundle-v1";
    manifest["mode"] = bundle.mode;
    manifest["frames"] = bundle.frame_count;
    manifest["base"] = "base.nfc";
    std::vector<std::string> names;
    for (std::size_t k = 0; k < bundle.adapters.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "adapter_%04zu.nfl", k + 2);
        save_adapter(bundle.adapters[k], bundle.base.content_hash, dir + "/" + name);
        names.emplace_back(name);
    }
    manifest["adapters"] = names;
    write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

inline VideoBundle load_bundle(const std::string& dir) {
    const auto manifest_bytes = read_file_bytes(dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir + "/manifest.json: " + e.what());
    }
    if (manifest.value("format", "") != "nfbundle-v1")
        throw IoError(dir + ": unknown bundle format");
    VideoBundle bundle;
    bundle.mode = manifest.value("mode", "sequential");
    if (bundle.mode != "sequential" && bundle.mode != "parallel")
        throw IoError(dir + ": unknown bundle mode '" + bundle.mode + "'");
    bundle.frame_count = manifest.value("frames", 0);
    bundle.base = load_checkpoint(dir + "/" + manifest.value("base", "base.nfc"));
    for (const auto& name : manifest.at("adapters"))
        bundle.adapters.push_back(
            load_adapter_for(dir + "/" + name.get<std::string>(), bundle.base));
    if (bundle.frame_count != static_cast<int>(bundle.adapters.size()) + 1)
        throw IoError(dir + ": manifest frame count disagrees with adapter list");
    return bundle;
}

// Frame 1 is the base; later frames apply adapters cumulatively (sequential)
// or the frame's own adapter alone (parallel).
inline FieldWeights decode_bundle_frame(const VideoBundle& bundle, int frame) {
    if (frame < 1 || frame > bundle.frame_count)
        throw std::invalid_argument("decode: frame " + std::to_string(frame) + " outside [1, " +
                                    std::to_string(bundle.frame_count) + "]");
    FieldWeights w = bundle.base.weights;
    if (frame == 1) return w;
    if (bundle.mode == "parallel") return merge_adapters(w, bundle.adapters[frame - 2]);
    for (int k = 0; k + 2 <= frame; ++k) w = merge_adapters(w, bundle.adapters[k]);
    return w;
}

} // namespace lorafield
