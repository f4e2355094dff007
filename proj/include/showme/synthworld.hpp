#pragma once

// Parametric sprite scenes with exact depth, edge and optical-flow ground truth.
//
// Rendering is hard rasterization at pixel centers; each element is a
// canonical shape placed by a similarity transform (center, angle, scale).
// Objects are shaded by their depth layer (nearer is brighter), which is the
// only monocular depth cue the reward network can learn from.

#include "showme/common.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace showme::synth {

using Rgb = std::array<double, 3>;

enum class ShapeKind : int { disc = 0, rectangle = 1, triangle = 2 };
inline constexpr int kNumShapeKinds = 3;

struct ObjectSpec {
    ShapeKind kind = ShapeKind::disc;
    double cx = 0, cy = 0;          // center, pixels
    double width = 0, height = 0;   // extent, pixels (discs use width == height)
    Rgb color{0, 0, 0};
    double depth = 0.5;             // layer in (0,1], smaller is nearer
    bool operator==(const ObjectSpec&) const = default;
};

struct SceneSpec {
    int height = 32, width = 32;
    std::vector<ObjectSpec> objects;
    Rgb background{0.5, 0.5, 0.5};
    uint64_t seed = 0;
    bool operator==(const SceneSpec&) const = default;
};

enum class Action : int {
    move_left = 0,
    move_right,
    move_up,
    move_down,
    rotate_cw,
    rotate_ccw,
    scale_up,
    scale_down,
    recolor,
    fall_off,
    cover,
    uncover,
};
inline constexpr int kNumActions = 12;

inline const char* action_name(Action a) {
    static constexpr const char* names[kNumActions] = {
        "move-left", "move-right", "move-up",  "move-down", "rotate-cw", "rotate-ccw",
        "scale-up",  "scale-down", "recolor",  "fall-off",  "cover",     "uncover"};
    return names[static_cast<int>(a)];
}

/// `amount` is pixels for moves, degrees for rotations, the final scale factor
/// for scaling and a palette index for recolor; fall-off and cover/uncover
/// derive their displacement from the scene.
struct InstructionToken {
    int action = 0;
    int target = 0;
    double amount = 0;
    std::string text;
    bool operator==(const InstructionToken&) const = default;
};

inline constexpr std::array<Rgb, 6> kPalette{{
    {0.90, 0.20, 0.20},
    {0.20, 0.80, 0.30},
    {0.20, 0.30, 0.90},
    {0.90, 0.80, 0.15},
    {0.70, 0.25, 0.85},
    {0.15, 0.80, 0.80},
}};
inline constexpr std::array<const char*, 6> kPaletteNames{"red", "green", "blue", "yellow", "purple", "cyan"};
inline constexpr Rgb kSheetColor{0.55, 0.40, 0.25};

inline int palette_index(const Rgb& c) {
    for (size_t i = 0; i < kPalette.size(); ++i)
        if (kPalette[i] == c) return static_cast<int>(i);
    return -1;
}

inline const char* shape_name(ShapeKind k) {
    switch (k) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::rectangle: return "rectangle";
    default: return "triangle";
    }
}

/// One drawable at one instant: canonical shape plus its pose.
struct Element {
    ShapeKind kind = ShapeKind::rectangle;
    double cx = 0, cy = 0, width = 0, height = 0;
    double angle = 0;  // radians, positive is clockwise on screen (y points down)
    double scale = 1;
    Rgb color{0, 0, 0};
    double depth = 1;
    bool operator==(const Element&) const = default;

    /// Maps a canvas point into the canonical frame.
    std::array<double, 2> to_local(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(angle), s = std::sin(angle);
        return {(c * dx + s * dy) / scale, (-s * dx + c * dy) / scale};
    }

    std::array<double, 2> to_canvas(double lx, double ly) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {cx + scale * (c * lx - s * ly), cy + scale * (s * lx + c * ly)};
    }

    bool covers(double x, double y) const {
        const auto [qx, qy] = to_local(x, y);
        const double hw = width / 2, hh = height / 2;
        switch (kind) {
        case ShapeKind::disc: return (qx / hw) * (qx / hw) + (qy / hh) * (qy / hh) <= 1.0;
        case ShapeKind::rectangle: return std::abs(qx) <= hw && std::abs(qy) <= hh;
        case ShapeKind::triangle: return qy <= hh && qy >= -hh && std::abs(qx) <= hw * (qy + hh) / (2 * hh);
        }
        return false;
    }

    /// Axis-aligned bounds {x0, y0, x1, y1}.
    std::array<double, 4> bbox() const {
        const double hw = width / 2, hh = height / 2;
        if (kind == ShapeKind::disc) {
            const double r = std::max(hw, hh) * scale;
            return {cx - r, cy - r, cx + r, cy + r};
        }
        std::vector<std::array<double, 2>> pts;
        if (kind == ShapeKind::rectangle)
            pts = {{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}};
        else
            pts = {{0, -hh}, {-hw, hh}, {hw, hh}};
        std::array<double, 4> b{1e300, 1e300, -1e300, -1e300};
        for (auto [lx, ly] : pts) {
            auto [x, y] = to_canvas(lx, ly);
            b[0] = std::min(b[0], x);
            b[1] = std::min(b[1], y);
            b[2] = std::max(b[2], x);
            b[3] = std::max(b[3], y);
        }
        return b;
    }

    Rgb shaded() const {
        const double f = 1.0 - 0.5 * depth;
        return {color[0] * f, color[1] * f, color[2] * f};
    }
};

/// A scene frozen at one instant; elements include the cover sheet when present.
struct PosedScene {
    int height = 32, width = 32;
    Rgb background{0.5, 0.5, 0.5};
    std::vector<Element> elements;
};

struct SyntheticSample {
    torch::Tensor frames;  // (L,3,H,W) float32 in [0,1]
    torch::Tensor depth;   // (L,1,H,W)
    torch::Tensor edges;   // (L,1,H,W)
    torch::Tensor flows;   // (L-1,2,H,W), channel 0 = x displacement, 1 = y
    InstructionToken instruction;
    SceneSpec scene;

    int64_t length() const { return frames.size(0); }
};

inline Element element_of(const ObjectSpec& o) {
    return Element{o.kind, o.cx, o.cy, o.width, o.height, 0.0, 1.0, o.color, o.depth};
}

inline bool inside_canvas(const Element& e, int height, int width) {
    const auto b = e.bbox();
    constexpr double tol = 1e-9;
    return b[0] >= -tol && b[1] >= -tol && b[2] <= width + tol && b[3] <= height + tol;
}

inline void validate_scene(const SceneSpec& scene) {
    if (scene.height < 4 || scene.width < 4) fail(ErrorKind::usage, "scene: canvas too small");
    const auto n = scene.objects.size();
    if (n < 1 || n > 4) fail(ErrorKind::usage, "scene: object count must be in [1,4]");
    for (size_t i = 0; i < n; ++i) {
        const auto& o = scene.objects[i];
        if (!(o.depth > 0 && o.depth <= 1)) fail(ErrorKind::usage, "scene: depth layer outside (0,1]");
        if (o.width <= 0 || o.height <= 0) fail(ErrorKind::usage, "scene: non-positive object size");
        if (!inside_canvas(element_of(o), scene.height, scene.width))
            fail(ErrorKind::usage, "scene: object " + std::to_string(i) + " does not fit the canvas");
        for (size_t j = 0; j < i; ++j)
            if (scene.objects[j].depth == o.depth) fail(ErrorKind::usage, "scene: depth layers must be distinct");
    }
}

// ---------------------------------------------------------------------------
// Action trajectories

/// Start and end states of every element; intermediate frames interpolate
/// each pose parameter linearly.
struct Trajectory {
    std::vector<Element> start, end;

    Element at(size_t idx, double s) const {
        const auto& a = start[idx];
        const auto& b = end[idx];
        if (a == b) return a;
        Element e = a;
        auto lerp = [s](double x, double y) { return x + s * (y - x); };
        e.cx = lerp(a.cx, b.cx);
        e.cy = lerp(a.cy, b.cy);
        e.angle = lerp(a.angle, b.angle);
        e.scale = lerp(a.scale, b.scale);
        for (int c = 0; c < 3; ++c) e.color[c] = lerp(a.color[c], b.color[c]);
        return e;
    }

    bool moving(size_t idx) const {
        const auto& a = start[idx];
        const auto& b = end[idx];
        return a.cx != b.cx || a.cy != b.cy || a.angle != b.angle || a.scale != b.scale;
    }
};

inline int find_support(const SceneSpec& scene, int target) {
    const auto tb = element_of(scene.objects[target]).bbox();
    int best = -1;
    double best_overlap = 0;
    for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
        if (i == target || scene.objects[i].cy <= scene.objects[target].cy) continue;
        const auto sb = element_of(scene.objects[i]).bbox();
        const double ox = std::min(tb[2], sb[2]) - std::max(tb[0], sb[0]);
        const double oy = std::min(tb[3], sb[3]) - std::max(tb[1], sb[1]);
        if (ox <= 0 || oy <= 0) continue;
        if (ox * oy > best_overlap) {
            best_overlap = ox * oy;
            best = i;
        }
    }
    return best;
}

inline std::string describe(const SceneSpec& scene, const InstructionToken& instr) {
    const auto& o = scene.objects[instr.target];
    const int pi = palette_index(o.color);
    std::string obj = std::string(pi >= 0 ? kPaletteNames[pi] : "colored") + " " + shape_name(o.kind);
    switch (static_cast<Action>(instr.action)) {
    case Action::move_left: return "move the " + obj + " left";
    case Action::move_right: return "move the " + obj + " right";
    case Action::move_up: return "move the " + obj + " up";
    case Action::move_down: return "move the " + obj + " down";
    case Action::rotate_cw: return "rotate the " + obj + " clockwise";
    case Action::rotate_ccw: return "rotate the " + obj + " counterclockwise";
    case Action::scale_up: return "make the " + obj + " bigger";
    case Action::scale_down: return "make the " + obj + " smaller";
    case Action::recolor: {
        const int ni = static_cast<int>(instr.amount);
        return "paint the " + obj + " " + ((ni >= 0 && ni < 6) ? kPaletteNames[ni] : "a new color");
    }
    case Action::fall_off: return "push the " + obj + " off its support";
    case Action::cover: return "cover the " + obj;
    case Action::uncover: return "uncover the " + obj;
    }
    return "";
}

inline Trajectory make_trajectory(const SceneSpec& scene, const InstructionToken& instr, int L) {
    validate_scene(scene);
    if (L < 2 || L > 32) fail(ErrorKind::usage, "render: frame count must be in [2,32]");
    if (instr.action < 0 || instr.action >= kNumActions) fail(ErrorKind::usage, "instruction: unknown action id");
    if (instr.target < 0 || instr.target >= static_cast<int>(scene.objects.size()))
        fail(ErrorKind::usage, "instruction: target index out of range");

    Trajectory tr;
    for (const auto& o : scene.objects) tr.start.push_back(element_of(o));
    tr.end = tr.start;
    const auto t = static_cast<size_t>(instr.target);
    Element& goal = tr.end[t];
    const auto action = static_cast<Action>(instr.action);
    const double steps = L - 1;
    const double pi = std::numbers::pi;

    switch (action) {
    case Action::move_left: goal.cx -= instr.amount; break;
    case Action::move_right: goal.cx += instr.amount; break;
    case Action::move_up: goal.cy -= instr.amount; break;
    case Action::move_down: goal.cy += instr.amount; break;
    case Action::rotate_cw:
    case Action::rotate_ccw:
        if (goal.kind == ShapeKind::disc) fail(ErrorKind::infeasible_action, "rotating a disc changes nothing");
        goal.angle += (action == Action::rotate_cw ? 1.0 : -1.0) * instr.amount * pi / 180.0;
        break;
    case Action::scale_up:
    case Action::scale_down:
        if (instr.amount <= 0 || (action == Action::scale_up) != (instr.amount > 1.0))
            fail(ErrorKind::infeasible_action, "scale factor does not match the scaling direction");
        goal.scale = instr.amount;
        break;
    case Action::recolor: {
        const int ni = static_cast<int>(instr.amount);
        if (ni < 0 || ni >= static_cast<int>(kPalette.size()) || kPalette[ni] == goal.color)
            fail(ErrorKind::infeasible_action, "recolor needs a different palette color");
        goal.color = kPalette[ni];
        break;
    }
    case Action::fall_off: {
        const int support = find_support(scene, instr.target);
        if (support < 0) fail(ErrorKind::infeasible_action, "fall-off target has no supporting object");
        const double gap = tr.start[support].bbox()[3] - tr.start[t].bbox()[1];
        const double per_frame = std::ceil(gap / steps);
        goal.cy += per_frame * steps;
        break;
    }
    case Action::cover:
    case Action::uncover: {
        const auto b = tr.start[t].bbox();
        const double x0 = std::floor(b[0]) - 1, x1 = std::ceil(b[2]) + 1;
        const double y0 = std::floor(b[1]) - 1, y1 = std::ceil(b[3]) + 1;
        const double w = x1 - x0;
        const double travel = std::ceil(w / steps) * steps;
        double nearest = 1.0;
        for (const auto& o : scene.objects) nearest = std::min(nearest, o.depth);
        Element sheet{ShapeKind::rectangle, 0, (y0 + y1) / 2, w, y1 - y0, 0, 1, kSheetColor, nearest / 2};
        sheet.cx = (x0 + x1) / 2 - (action == Action::cover ? travel : 0.0);
        Element sheet_end = sheet;
        sheet_end.cx += travel;
        tr.start.push_back(sheet);
        tr.end.push_back(sheet_end);
        break;
    }
    }

    for (size_t i = 0; i < tr.start.size(); ++i)
        for (int f = 0; f < L; ++f)
            if (!inside_canvas(tr.at(i, f / steps), scene.height, scene.width))
                fail(ErrorKind::infeasible_action,
                     std::string(action_name(action)) + " would leave the canvas");
    return tr;
}

inline PosedScene pose_at(const SceneSpec& scene, const Trajectory& tr, double s) {
    PosedScene ps{scene.height, scene.width, scene.background, {}};
    for (size_t i = 0; i < tr.start.size(); ++i) ps.elements.push_back(tr.at(i, s));
    return ps;
}

// ---------------------------------------------------------------------------
// Rasterization

/// Index of the nearest element covering each pixel center, -1 for background.
inline std::vector<int> visible_ids(const PosedScene& ps) {
    std::vector<int> ids(static_cast<size_t>(ps.height) * ps.width, -1);
    for (int y = 0; y < ps.height; ++y)
        for (int x = 0; x < ps.width; ++x) {
            double best = 2.0;
            int id = -1;
            for (size_t e = 0; e < ps.elements.size(); ++e) {
                const auto& el = ps.elements[e];
                if (el.depth < best && el.covers(x + 0.5, y + 0.5)) {
                    best = el.depth;
                    id = static_cast<int>(e);
                }
            }
            ids[static_cast<size_t>(y) * ps.width + x] = id;
        }
    return ids;
}

/// Per-pixel nearest depth layer among covering elements; background is 1.
inline torch::Tensor analytic_depth(const PosedScene& ps) {
    auto out = torch::ones({1, ps.height, ps.width}, torch::kFloat);
    auto acc = out.accessor<float, 3>();
    const auto ids = visible_ids(ps);
    for (int y = 0; y < ps.height; ++y)
        for (int x = 0; x < ps.width; ++x) {
            const int id = ids[static_cast<size_t>(y) * ps.width + x];
            if (id >= 0) acc[0][y][x] = static_cast<float>(ps.elements[id].depth);
        }
    return out;
}

inline torch::Tensor render_rgb(const PosedScene& ps, const std::vector<int>& ids) {
    auto out = torch::empty({3, ps.height, ps.width}, torch::kFloat);
    auto acc = out.accessor<float, 3>();
    for (int y = 0; y < ps.height; ++y)
        for (int x = 0; x < ps.width; ++x) {
            const int id = ids[static_cast<size_t>(y) * ps.width + x];
            const Rgb c = id >= 0 ? ps.elements[id].shaded() : ps.background;
            for (int ch = 0; ch < 3; ++ch) acc[ch][y][x] = static_cast<float>(c[ch]);
        }
    return out;
}

/// Normalized gradient magnitude of luminance with 3x3 difference kernels and
/// replicate borders, rescaled so each frame peaks at 1 (constant frames map
/// to zero). Accepts (N,3,H,W) or (3,H,W); differentiable.
inline torch::Tensor analytic_edges(const torch::Tensor& frames) {
    const bool single = frames.dim() == 3;
    auto x = single ? frames.unsqueeze(0) : frames;
    if (x.dim() != 4 || x.size(1) != 3) fail(ErrorKind::shape, "analytic_edges: expected (N,3,H,W), got " + shape_str(frames));
    const auto opts = x.options();
    auto lum_w = torch::tensor({0.299, 0.587, 0.114}, opts.dtype(torch::kDouble)).to(x.scalar_type()).view({1, 3, 1, 1});
    auto lum = (x * lum_w).sum(1, true);
    auto padded = torch::nn::functional::pad(lum, torch::nn::functional::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
    auto kx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts.dtype(torch::kDouble))
                  .to(x.scalar_type())
                  .view({1, 1, 3, 3}) / 8.0;
    auto ky = kx.transpose(2, 3);
    auto gx = torch::conv2d(padded, kx);
    auto gy = torch::conv2d(padded, ky);
    auto sq = gx * gx + gy * gy;
    // sqrt has an infinite derivative at 0; route flat pixels around it.
    auto pos = sq > 0;
    auto mag = torch::where(pos, torch::sqrt(torch::where(pos, sq, torch::ones_like(sq))), torch::zeros_like(sq));
    auto peak = std::get<0>(mag.flatten(1).max(1)).view({-1, 1, 1, 1});
    auto safe = torch::where(peak > 0, peak, torch::ones_like(peak));
    auto out = mag / safe;
    return single ? out.squeeze(0) : out;
}

/// Forward displacement of the visible surface from frame s0 to s1.
inline torch::Tensor analytic_flow(const SceneSpec& scene, const Trajectory& tr, double s0, double s1) {
    const auto ps = pose_at(scene, tr, s0);
    const auto next = pose_at(scene, tr, s1);
    const auto ids = visible_ids(ps);
    auto out = torch::zeros({2, scene.height, scene.width}, torch::kFloat);
    auto acc = out.accessor<float, 3>();
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            const int id = ids[static_cast<size_t>(y) * scene.width + x];
            if (id < 0 || !tr.moving(static_cast<size_t>(id))) continue;
            const double px = x + 0.5, py = y + 0.5;
            const auto [lx, ly] = ps.elements[id].to_local(px, py);
            const auto [nx, ny] = next.elements[id].to_canvas(lx, ly);
            acc[0][y][x] = static_cast<float>(nx - px);
            acc[1][y][x] = static_cast<float>(ny - py);
        }
    return out;
}

inline SyntheticSample render_clip(const SceneSpec& scene, const InstructionToken& instruction, int L) {
    const auto tr = make_trajectory(scene, instruction, L);
    const int H = scene.height, W = scene.width;
    SyntheticSample s;
    s.frames = torch::empty({L, 3, H, W}, torch::kFloat);
    s.depth = torch::empty({L, 1, H, W}, torch::kFloat);
    s.flows = torch::empty({L - 1, 2, H, W}, torch::kFloat);
    const double steps = L - 1;
    for (int f = 0; f < L; ++f) {
        const auto ps = pose_at(scene, tr, f / steps);
        const auto ids = visible_ids(ps);
        s.frames[f].copy_(render_rgb(ps, ids));
        s.depth[f].copy_(analytic_depth(ps));
        if (f + 1 < L) s.flows[f].copy_(analytic_flow(scene, tr, f / steps, (f + 1) / steps));
    }
    s.edges = analytic_edges(s.frames);
    s.instruction = instruction;
    if (s.instruction.text.empty()) s.instruction.text = describe(scene, instruction);
    s.scene = scene;
    return s;
}

/// Uniform draw over ordered index pairs i < j.
inline std::pair<int, int> sample_pair_indices(int64_t L, at::Generator& gen) {
    if (L < 2) fail(ErrorKind::usage, "sample_state_pair: clip needs at least 2 frames");
    const int64_t k = randint(gen, L * (L - 1) / 2);
    int64_t rem = k;
    for (int i = 0; i < L - 1; ++i) {
        const int64_t row = L - 1 - i;
        if (rem < row) return {i, static_cast<int>(i + 1 + rem)};
        rem -= row;
    }
    return {static_cast<int>(L - 2), static_cast<int>(L - 1)};
}

/// Returns (x0, x*) frames with x0 strictly earlier.
inline std::pair<torch::Tensor, torch::Tensor> sample_state_pair(const SyntheticSample& s, at::Generator& gen) {
    const auto [i, j] = sample_pair_indices(s.length(), gen);
    return {s.frames[i], s.frames[j]};
}

// ---------------------------------------------------------------------------
// Random scene generation

inline ObjectSpec random_object(std::mt19937_64& eng, int H, int W, int color_index) {
    ObjectSpec o;
    o.kind = static_cast<ShapeKind>(uniform_index(eng, kNumShapeKinds));
    const double lo = 0.2 * std::min(H, W), hi = 0.34 * std::min(H, W);
    o.width = std::round(lo + (hi - lo) * uniform01(eng));
    o.height = o.kind == ShapeKind::disc ? o.width : std::round(lo + (hi - lo) * uniform01(eng));
    const double r = o.kind == ShapeKind::disc ? o.width / 2 : 0;
    const double hw = o.kind == ShapeKind::disc ? r : o.width / 2;
    const double hh = o.kind == ShapeKind::disc ? r : o.height / 2;
    o.cx = std::round(hw + (W - 2 * hw) * uniform01(eng));
    o.cy = std::round(hh + (H - 2 * hh) * uniform01(eng));
    o.color = kPalette[static_cast<size_t>(color_index)];
    return o;
}

inline SceneSpec random_scene(std::mt19937_64& eng, int H, int W, uint64_t seed) {
    SceneSpec sc;
    sc.height = H;
    sc.width = W;
    sc.seed = seed;
    const int n = 1 + static_cast<int>(uniform_index(eng, 4));
    std::vector<int> colors{0, 1, 2, 3, 4, 5};
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<size_t>(i + uniform_index(eng, 6 - i));
        std::swap(colors[static_cast<size_t>(i)], colors[k]);
        sc.objects.push_back(random_object(eng, H, W, colors[static_cast<size_t>(i)]));
    }
    std::vector<double> layers;
    for (auto& o : sc.objects) {
        double d;
        bool clash;
        do {
            d = std::round((0.15 + 0.75 * uniform01(eng)) * 100.0) / 100.0;
            clash = false;
            for (double l : layers) clash |= std::abs(l - d) < 0.05;
        } while (clash);
        layers.push_back(d);
        o.depth = d;
    }
    return sc;
}

inline bool action_completes(const SyntheticSample& s) {
    const auto diff = (s.frames[s.length() - 1] - s.frames[0]).abs().amax(0) > 1e-6;
    return diff.to(torch::kDouble).mean().item<double>() >= 0.01;
}

/// Draws a feasible (scene, instruction) pair for the requested action.
inline std::pair<SceneSpec, InstructionToken> generate_spec(uint64_t seed, int H, int W, int L,
                                                            std::optional<Action> forced = std::nullopt) {
    std::mt19937_64 eng(seed);
    const auto action = forced.value_or(static_cast<Action>(uniform_index(eng, kNumActions)));
    for (int attempt = 0; attempt < 10000; ++attempt) {
        SceneSpec sc = random_scene(eng, H, W, seed);
        InstructionToken in;
        in.action = static_cast<int>(action);
        in.target = static_cast<int>(uniform_index(eng, static_cast<int64_t>(sc.objects.size())));
        auto& tgt = sc.objects[static_cast<size_t>(in.target)];
        const int max_step = std::max(1, (W / 2) / (L - 1));
        switch (action) {
        case Action::move_left:
        case Action::move_right:
        case Action::move_up:
        case Action::move_down:
            in.amount = static_cast<double>((1 + uniform_index(eng, max_step)) * (L - 1));
            break;
        case Action::rotate_cw:
        case Action::rotate_ccw: in.amount = std::round(30 + 30 * uniform01(eng)); break;
        case Action::scale_up: in.amount = std::round((1.3 + 0.3 * uniform01(eng)) * 20) / 20; break;
        case Action::scale_down: in.amount = std::round((0.5 + 0.25 * uniform01(eng)) * 20) / 20; break;
        case Action::recolor: {
            int ni = palette_index(tgt.color);
            while (ni == palette_index(tgt.color)) ni = static_cast<int>(uniform_index(eng, 6));
            in.amount = ni;
            break;
        }
        case Action::fall_off: {
            if (sc.objects.size() < 2) continue;
            const size_t sup = (static_cast<size_t>(in.target) + 1) % sc.objects.size();
            auto& so = sc.objects[sup];
            // Rest the target on the top edge of its support, in front of it.
            const auto sb = element_of(so).bbox();
            tgt.cx = std::round(so.cx);
            tgt.cy = std::round(sb[1]);
            if (tgt.depth > so.depth) std::swap(tgt.depth, so.depth);
            break;
        }
        case Action::cover:
        case Action::uncover: break;
        }
        try {
            validate_scene(sc);
            in.text = describe(sc, in);
            auto sample = render_clip(sc, in, L);
            if (action_completes(sample)) return {sc, in};
        } catch (const Error&) {
        }
    }
    fail(ErrorKind::infeasible_action, std::string("could not place a feasible ") + action_name(action));
}

} // namespace showme::synth
