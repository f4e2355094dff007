#pragma once

// 8-bit binary PPM (P6) images, image grids and a minimal line plot.

#include "showme/common.hpp"

#include <filesystem>
#include <fstream>

namespace showme::image {

/// (3,H,W) in [0,1] -> P6 bytes; values are rounded to the nearest level.
inline std::string encode_ppm(const torch::Tensor& img) {
    if (img.dim() != 3 || img.size(0) != 3) fail(ErrorKind::shape, "ppm: expected (3,H,W), got " + shape_str(img));
    const auto H = img.size(1), W = img.size(2);
    auto bytes = (img.to(torch::kDouble).clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
    std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    out.append(reinterpret_cast<const char*>(bytes.data_ptr<uint8_t>()), static_cast<size_t>(bytes.numel()));
    return out;
}

inline void write_ppm(const std::filesystem::path& path, const torch::Tensor& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << encode_ppm(img);
}

/// P6 file -> (3,H,W) float in [0,1].
inline torch::Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read " + path.string());
    std::string magic;
    int64_t W = 0, H = 0, maxval = 0;
    auto skip = [&] {
        while (true) {
            in >> std::ws;
            if (in.peek() != '#') return;
            std::string comment;
            std::getline(in, comment);
        }
    };
    in >> magic;
    skip();
    in >> W;
    skip();
    in >> H;
    skip();
    in >> maxval;
    in.get();
    if (magic != "P6" || W < 1 || H < 1 || maxval != 255) fail(ErrorKind::schema, path.string() + ": not an 8-bit P6 image");
    std::string data(static_cast<size_t>(3 * W * H), '\0');
    in.read(data.data(), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size())) fail(ErrorKind::schema, path.string() + ": truncated pixel data");
    auto t = torch::from_blob(data.data(), {H, W, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat).div(255.0).contiguous();
}

/// Tiles (3,H,W) images row-major, `cols` per row, separated by `pad` white pixels.
inline torch::Tensor grid(const std::vector<torch::Tensor>& images, int64_t cols, int64_t pad = 2) {
    if (images.empty()) fail(ErrorKind::usage, "grid: no images");
    const auto H = images[0].size(1), W = images[0].size(2);
    const auto n = static_cast<int64_t>(images.size());
    cols = std::max<int64_t>(1, std::min(cols, n));
    const auto rows = (n + cols - 1) / cols;
    auto out = torch::ones({3, rows * H + (rows + 1) * pad, cols * W + (cols + 1) * pad}, torch::kFloat);
    for (int64_t i = 0; i < n; ++i) {
        require_same_shape(images[static_cast<size_t>(i)], images[0], "grid");
        const auto r = i / cols, c = i % cols;
        out.narrow(1, pad + r * (H + pad), H).narrow(2, pad + c * (W + pad), W).copy_(images[static_cast<size_t>(i)].to(torch::kFloat));
    }
    return out;
}

/// Line plot of one or more series on shared axes; white background, one color per series.
inline torch::Tensor plot(const std::vector<std::vector<double>>& series, int64_t width = 480, int64_t height = 240) {
    static const float colors[][3] = {{0.8f, 0.1f, 0.1f}, {0.1f, 0.4f, 0.8f}, {0.1f, 0.6f, 0.2f}, {0.6f, 0.2f, 0.7f}, {0.9f, 0.5f, 0.0f}};
    auto img = torch::ones({3, height, width}, torch::kFloat);
    auto acc = img.accessor<float, 3>();
    double lo = INFINITY, hi = -INFINITY;
    size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.size());
        for (double v : s)
            if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    const int64_t m = 8;
    for (int64_t x = m; x < width - m; ++x) acc[0][height - m][x] = acc[1][height - m][x] = acc[2][height - m][x] = 0.0f;
    for (int64_t y = m; y <= height - m; ++y) acc[0][y][m] = acc[1][y][m] = acc[2][y][m] = 0.0f;
    if (longest < 2 || !(hi >= lo)) return img;
    if (hi == lo) hi = lo + 1;
    auto px = [&](size_t i) { return m + static_cast<int64_t>(std::lround(static_cast<double>(i) / static_cast<double>(longest - 1) * static_cast<double>(width - 2 * m - 1))); };
    auto py = [&](double v) { return height - m - static_cast<int64_t>(std::lround((v - lo) / (hi - lo) * static_cast<double>(height - 2 * m - 1))); };
    for (size_t k = 0; k < series.size(); ++k) {
        const auto* c = colors[k % 5];
        const auto& s = series[k];
        for (size_t i = 0; i + 1 < s.size(); ++i) {
            if (!std::isfinite(s[i]) || !std::isfinite(s[i + 1])) continue;
            const auto x0 = px(i), x1 = px(i + 1), y0 = py(s[i]), y1 = py(s[i + 1]);
            const auto steps = std::max<int64_t>({1, std::abs(x1 - x0), std::abs(y1 - y0)});
            for (int64_t t = 0; t <= steps; ++t) {
                const auto x = x0 + (x1 - x0) * t / steps, y = y0 + (y1 - y0) * t / steps;
                if (x < 0 || x >= width || y < 0 || y >= height) continue;
                for (int ch = 0; ch < 3; ++ch) acc[ch][y][x] = c[ch];
            }
        }
    }
    return img;
}

} // namespace showme::image
