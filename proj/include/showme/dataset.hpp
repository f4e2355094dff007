#pragma once

// Dataset persistence: one archive per sample plus a plain-text manifest.
//
//   <dir>/manifest.txt
//     showme-dataset 1
//     count <N>
//     <file> <action> <target> <frames> <height> <width>     (N lines)
//   <dir>/sample_000000.bin ...

#include "showme/archive.hpp"
#include "showme/synthworld.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace showme::data {

using synth::SyntheticSample;

inline TensorArchive to_archive(const SyntheticSample& s) {
    TensorArchive ar;
    ar.put("frames", s.frames);
    ar.put("depth", s.depth);
    ar.put("edges", s.edges);
    ar.put("flows", s.flows);
    ar.put("instruction", torch::tensor({static_cast<int64_t>(s.instruction.action),
                                         static_cast<int64_t>(s.instruction.target)}, torch::kLong));
    ar.put("instruction.amount", torch::tensor({s.instruction.amount}, torch::kDouble));
    ar.put_text("instruction.text", s.instruction.text);
    const auto& sc = s.scene;
    ar.put("scene.canvas", torch::tensor({static_cast<int64_t>(sc.height), static_cast<int64_t>(sc.width),
                                          static_cast<int64_t>(sc.seed)}, torch::kLong));
    ar.put("scene.background", torch::tensor({sc.background[0], sc.background[1], sc.background[2]}, torch::kDouble));
    auto objs = torch::zeros({static_cast<int64_t>(sc.objects.size()), 9}, torch::kDouble);
    auto acc = objs.accessor<double, 2>();
    for (size_t i = 0; i < sc.objects.size(); ++i) {
        const auto& o = sc.objects[i];
        const double row[9] = {static_cast<double>(o.kind), o.cx, o.cy, o.width, o.height,
                               o.color[0], o.color[1], o.color[2], o.depth};
        for (int k = 0; k < 9; ++k) acc[static_cast<int64_t>(i)][k] = row[k];
    }
    ar.put("scene.objects", objs);
    return ar;
}

inline const torch::Tensor& field(const TensorArchive& ar, const std::string& name, torch::ScalarType type,
                                  int64_t rank, const std::string& origin) {
    if (!ar.contains(name)) fail(ErrorKind::schema, origin + ": missing field '" + name + "'");
    const auto& t = ar.get(name);
    if (t.scalar_type() != type || t.dim() != rank)
        fail(ErrorKind::schema, origin + ": field '" + name + "' has wrong dtype or rank");
    return t;
}

inline SyntheticSample from_archive(const TensorArchive& ar, const std::string& origin) {
    SyntheticSample s;
    s.frames = field(ar, "frames", torch::kFloat, 4, origin);
    s.depth = field(ar, "depth", torch::kFloat, 4, origin);
    s.edges = field(ar, "edges", torch::kFloat, 4, origin);
    s.flows = field(ar, "flows", torch::kFloat, 4, origin);
    const auto L = s.frames.size(0), H = s.frames.size(2), W = s.frames.size(3);
    if (L < 2 || s.frames.size(1) != 3) fail(ErrorKind::schema, origin + ": field 'frames' has wrong shape");
    if (s.depth.sizes() != torch::IntArrayRef({L, 1, H, W})) fail(ErrorKind::schema, origin + ": field 'depth' has wrong shape");
    if (s.edges.sizes() != torch::IntArrayRef({L, 1, H, W})) fail(ErrorKind::schema, origin + ": field 'edges' has wrong shape");
    if (s.flows.sizes() != torch::IntArrayRef({L - 1, 2, H, W})) fail(ErrorKind::schema, origin + ": field 'flows' has wrong shape");

    const auto& in = field(ar, "instruction", torch::kLong, 1, origin);
    if (in.numel() != 2) fail(ErrorKind::schema, origin + ": field 'instruction' has wrong shape");
    s.instruction.action = static_cast<int>(in[0].item<int64_t>());
    s.instruction.target = static_cast<int>(in[1].item<int64_t>());
    s.instruction.amount = field(ar, "instruction.amount", torch::kDouble, 1, origin)[0].item<double>();
    field(ar, "instruction.text", torch::kUInt8, 1, origin);
    s.instruction.text = ar.text("instruction.text");

    const auto& canvas = field(ar, "scene.canvas", torch::kLong, 1, origin);
    const auto& bg = field(ar, "scene.background", torch::kDouble, 1, origin);
    const auto& objs = field(ar, "scene.objects", torch::kDouble, 2, origin);
    if (canvas.numel() != 3) fail(ErrorKind::schema, origin + ": field 'scene.canvas' has wrong shape");
    if (bg.numel() != 3) fail(ErrorKind::schema, origin + ": field 'scene.background' has wrong shape");
    if (objs.size(1) != 9) fail(ErrorKind::schema, origin + ": field 'scene.objects' has wrong shape");
    s.scene.height = static_cast<int>(canvas[0].item<int64_t>());
    s.scene.width = static_cast<int>(canvas[1].item<int64_t>());
    s.scene.seed = static_cast<uint64_t>(canvas[2].item<int64_t>());
    for (int c = 0; c < 3; ++c) s.scene.background[c] = bg[c].item<double>();
    auto acc = objs.accessor<double, 2>();
    for (int64_t i = 0; i < objs.size(0); ++i) {
        synth::ObjectSpec o;
        o.kind = static_cast<synth::ShapeKind>(static_cast<int>(acc[i][0]));
        o.cx = acc[i][1];
        o.cy = acc[i][2];
        o.width = acc[i][3];
        o.height = acc[i][4];
        o.color = {acc[i][5], acc[i][6], acc[i][7]};
        o.depth = acc[i][8];
        s.scene.objects.push_back(o);
    }
    if (s.scene.height != H || s.scene.width != W)
        fail(ErrorKind::schema, origin + ": field 'scene.canvas' disagrees with frame size");
    return s;
}

inline std::string sample_file_name(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%06zu.bin", i);
    return buf;
}

inline void write_dataset(const std::vector<SyntheticSample>& samples, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create dataset directory " + dir.string() + ": " + ec.message());
    std::ostringstream manifest;
    manifest << "showme-dataset 1\ncount " << samples.size() << "\n";
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto name = sample_file_name(i);
        to_archive(samples[i]).save(dir / name);
        const auto& s = samples[i];
        manifest << name << ' ' << s.instruction.action << ' ' << s.instruction.target << ' ' << s.frames.size(0) << ' '
                 << s.frames.size(2) << ' ' << s.frames.size(3) << '\n';
    }
    std::ofstream os(dir / "manifest.txt", std::ios::trunc);
    os << manifest.str();
    if (!os) fail(ErrorKind::io, "cannot write manifest in " + dir.string());
}

struct ManifestEntry {
    std::string file;
    int action = 0, target = 0;
    int64_t frames = 0, height = 0, width = 0;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.txt";
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "missing dataset manifest " + path.string());
    std::string magic;
    int version = 0;
    std::string count_kw;
    size_t count = 0;
    if (!(is >> magic >> version) || magic != "showme-dataset" || version != 1)
        fail(ErrorKind::schema, path.string() + ": bad manifest header");
    if (!(is >> count_kw >> count) || count_kw != "count") fail(ErrorKind::schema, path.string() + ": missing count");
    std::vector<ManifestEntry> out(count);
    for (size_t i = 0; i < count; ++i) {
        auto& e = out[i];
        if (!(is >> e.file >> e.action >> e.target >> e.frames >> e.height >> e.width))
            fail(ErrorKind::schema, path.string() + ": manifest entry " + std::to_string(i) + " is malformed");
    }
    return out;
}

inline std::vector<SyntheticSample> read_dataset(const std::filesystem::path& dir) {
    std::vector<SyntheticSample> out;
    for (const auto& e : read_manifest(dir)) {
        auto s = from_archive(TensorArchive::load(dir / e.file), (dir / e.file).string());
        if (s.instruction.action != e.action || s.frames.size(0) != e.frames)
            fail(ErrorKind::schema, e.file + ": contents disagree with manifest");
        out.push_back(std::move(s));
    }
    return out;
}

/// Per-sample seed derived from the split seed (splitmix64 finalizer).
inline uint64_t sample_seed(uint64_t split_seed, uint64_t index) {
    uint64_t z = split_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Actions cycle through the vocabulary so every split is balanced.
inline std::vector<SyntheticSample> generate_split(size_t count, uint64_t seed, int H, int W, int L) {
    std::vector<SyntheticSample> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const auto action = static_cast<synth::Action>(i % synth::kNumActions);
        auto [scene, instr] = synth::generate_spec(sample_seed(seed, i), H, W, L, action);
        out.push_back(synth::render_clip(scene, instr, L));
    }
    return out;
}

} // namespace showme::data
