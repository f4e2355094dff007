#pragma once

// Metrics against an in-repo feature encoder, plus the dual-similarity
// curation filter.

#include "showme/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>

namespace showme::eval {

namespace F = torch::nn::functional;

/// Small conv classifier over synthworld frames. The embedding is the
/// penultimate activation; the action head sees a frame together with its
/// embedding change from the clip's first frame.
class FeatureEncoderImpl : public torch::nn::Module {
public:
    explicit FeatureEncoderImpl(int64_t dim = 32) : dim_(dim) {
        c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 16, 3).padding(1)));
        c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)));
        c3 = register_module("c3", torch::nn::Conv2d(torch::nn::Conv2dOptions(32, 32, 3).stride(2).padding(1)));
        fc = register_module("fc", torch::nn::Linear(32 * 16, dim));
        action_head = register_module("action_head", torch::nn::Linear(2 * dim, synth::kNumActions));
        shape_head = register_module("shape_head", torch::nn::Linear(dim, synth::kNumShapeKinds));
    }

    int64_t dim() const { return dim_; }

    /// (N,3,H,W) -> (N,d)
    torch::Tensor embed(const torch::Tensor& x) {
        auto h = F::silu(c1(x.to(torch::kFloat)));
        h = F::silu(c2(h));
        h = F::silu(c3(h));
        h = F::adaptive_avg_pool2d(h, F::AdaptiveAvgPool2dFuncOptions({4, 4})).flatten(1);
        return F::silu(fc(h));
    }

    /// Action logits for frames x given first frames x0.
    torch::Tensor action_logits(const torch::Tensor& x0, const torch::Tensor& x) {
        auto e = embed(x);
        return action_head(torch::cat({e, e - embed(x0)}, 1));
    }

    torch::Tensor shape_logits(const torch::Tensor& x) { return shape_head(embed(x)); }

    torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr};
    torch::nn::Linear fc{nullptr}, action_head{nullptr}, shape_head{nullptr};

private:
    int64_t dim_;
};
TORCH_MODULE(FeatureEncoder);

struct EncoderTrainingConfig {
    int64_t steps = 600;
    int64_t batch = 32;
    double lr = 2e-3;
    uint64_t seed = 13;
};

struct EncoderTrainingReport {
    double action_accuracy = 0;
    double shape_accuracy = 0;
};

/// Trains both heads on (first frame, later frame) pairs and freezes the encoder.
inline EncoderTrainingReport train_feature_encoder(FeatureEncoder& enc, const std::vector<synth::SyntheticSample>& samples,
                                                   const EncoderTrainingConfig& cfg) {
    if (samples.empty()) fail(ErrorKind::usage, "feature encoder: no training samples");
    auto data = train::TrainingData::from(samples);
    std::vector<int64_t> shapes;
    for (const auto& s : samples) shapes.push_back(static_cast<int64_t>(s.scene.objects.at(static_cast<size_t>(s.instruction.target)).kind));
    auto shape_labels = torch::tensor(shapes, torch::kLong);
    const auto S = data.size(), L = data.frames_per_clip();
    auto gen = make_generator(cfg.seed);
    for (auto& p : enc->parameters()) p.set_requires_grad(true);
    enc->train();
    torch::optim::Adam opt(enc->parameters(), torch::optim::AdamOptions(cfg.lr));
    for (int64_t step = 0; step < cfg.steps; ++step) {
        auto idx = torch::randint(S, {cfg.batch}, gen, torch::kLong);
        auto j = torch::randint(1, L, {cfg.batch}, gen, torch::kLong);
        auto clips = data.frames.index_select(0, idx);
        auto ar = torch::arange(cfg.batch);
        auto x0 = clips.select(1, 0);
        auto x = clips.index({ar, j});
        auto loss = F::cross_entropy(enc->action_logits(x0, x), data.actions.index_select(0, idx)) +
                    F::cross_entropy(enc->shape_logits(x), shape_labels.index_select(0, idx));
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    for (auto& p : enc->parameters()) p.set_requires_grad(false);
    enc->eval();
    EncoderTrainingReport rep;
    torch::NoGradGuard ng;
    auto x0 = data.frames.select(1, 0), xl = data.frames.select(1, L - 1);
    rep.action_accuracy = (enc->action_logits(x0, xl).argmax(1) == data.actions).to(torch::kDouble).mean().item<double>();
    rep.shape_accuracy = (enc->shape_logits(xl).argmax(1) == shape_labels).to(torch::kDouble).mean().item<double>();
    return rep;
}

inline void save_encoder(TensorArchive& ar, FeatureEncoder& enc, const std::string& fingerprint) {
    ar.put_text("meta/format", "showme-encoder 1");
    ar.put_text("meta/fingerprint", fingerprint);
    ar.put("encoder/dim", torch::tensor({enc->dim()}, torch::kLong));
    for (const auto& item : enc->named_parameters()) ar.put("encoder/" + item.key(), item.value());
}

inline FeatureEncoder load_encoder(const TensorArchive& ar, const std::string& origin, const std::string& expected_fingerprint = "") {
    if (!ar.contains("meta/format") || ar.text("meta/format") != "showme-encoder 1")
        fail(ErrorKind::schema, origin + ": not a feature encoder checkpoint");
    if (!expected_fingerprint.empty() && ar.text("meta/fingerprint") != expected_fingerprint)
        fail(ErrorKind::prerequisite, origin + ": config fingerprint " + expected_fingerprint + " does not match checkpoint fingerprint " +
                                          ar.text("meta/fingerprint"));
    FeatureEncoder enc(ar.get("encoder/dim")[0].item<int64_t>());
    torch::NoGradGuard ng;
    for (auto& item : enc->named_parameters()) {
        const auto key = "encoder/" + item.key();
        if (!ar.contains(key)) fail(ErrorKind::schema, origin + ": missing '" + key + "'");
        item.value().copy_(ar.get(key));
        item.value().set_requires_grad(false);
    }
    enc->eval();
    return enc;
}

// ---------------------------------------------------------------------------
// Metrics

/// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}) with lambda*I added to
/// both covariances. The cross term is symmetrized over the two factor orders.
inline double frechet_distance(const torch::Tensor& a, const torch::Tensor& b, double lambda = 1e-6) {
    if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1))
        fail(ErrorKind::shape, "frechet_distance: expected (n,d) and (m,d), got " + shape_str(a) + " and " + shape_str(b));
    if (a.size(0) < 2 || b.size(0) < 2) fail(ErrorKind::usage, "frechet_distance: need at least 2 samples per set");
    if (lambda < 0) fail(ErrorKind::usage, "frechet_distance: regularization must be >= 0");
    torch::NoGradGuard ng;
    const auto d = a.size(1);
    auto fit = [&](const torch::Tensor& x) {
        auto xd = x.to(torch::kDouble);
        auto mu = xd.mean(0);
        auto c = xd - mu;
        auto cov = c.t().matmul(c) / static_cast<double>(x.size(0) - 1) + lambda * torch::eye(d, torch::kDouble);
        return std::make_pair(mu, 0.5 * (cov + cov.t()));
    };
    auto [mu_a, sa] = fit(a);
    auto [mu_b, sb] = fit(b);
    auto sym_sqrt = [](const torch::Tensor& m) {
        auto [w, v] = torch::linalg_eigh(m);
        return v.matmul(torch::diag(w.clamp_min(0).sqrt())).matmul(v.t());
    };
    if (lambda == 0) {
        for (const auto& s : {sa, sb}) {
            auto w = std::get<0>(torch::linalg_eigh(s));
            if (w.min().item<double>() <= 1e-12 * std::max(1.0, w.max().item<double>()))
                fail(ErrorKind::numeric, "frechet_distance: degenerate covariance; use a positive regularization");
        }
    }
    auto cross = [&](const torch::Tensor& x, const torch::Tensor& y) {
        auto r = sym_sqrt(x);
        auto m = r.matmul(y).matmul(r);
        auto w = std::get<0>(torch::linalg_eigh(0.5 * (m + m.t())));
        return w.clamp_min(0).sqrt().sum().item<double>();
    };
    const double tr_cross = 0.5 * (cross(sa, sb) + cross(sb, sa));
    const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
    const double value = mean_term + sa.trace().item<double>() + sb.trace().item<double>() - 2.0 * tr_cross;
    return std::max(0.0, value);
}

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE), capped at 100 dB when MSE < 1e-10.
inline double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    require_same_shape(a, b, "psnr");
    const double mse = (a.to(torch::kDouble) - b.to(torch::kDouble)).pow(2).mean().item<double>();
    if (mse < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Row-wise cosine of two (N,d) embedding batches.
inline torch::Tensor cosine(const torch::Tensor& ea, const torch::Tensor& eb) {
    require_same_shape(ea, eb, "cosine");
    auto a = ea.to(torch::kDouble), b = eb.to(torch::kDouble);
    auto na = a.norm(2, 1), nb = b.norm(2, 1);
    if ((na < 1e-12).any().item<bool>() || (nb < 1e-12).any().item<bool>())
        fail(ErrorKind::numeric, "context_similarity: zero-norm embedding, similarity undefined");
    return ((a * b).sum(1) / (na * nb)).clamp(-1.0, 1.0);
}

/// Cosine similarity of encoder embeddings for frame batches (N,3,H,W).
inline torch::Tensor context_similarity(FeatureEncoder& enc, const torch::Tensor& a, const torch::Tensor& b) {
    torch::NoGradGuard ng;
    const bool single = a.dim() == 3;
    auto x = single ? a.unsqueeze(0) : a, y = single ? b.unsqueeze(0) : b;
    require_same_shape(x, y, "context_similarity");
    return cosine(enc->embed(x), enc->embed(y));
}

struct MotionScore {
    double dynamic = 0, smoothness = 0, score = 0;
};

inline double harmonic_mean(double a, double b) { return (a <= 0 || b <= 0) ? 0.0 : 2.0 * a * b / (a + b); }

/// Per-step motion magnitudes m_1..m_{L-1} -> dynamic degree, smoothness, harmonic mean.
inline MotionScore motion_score_from_magnitudes(const std::vector<double>& m, double reference) {
    if (m.size() < 2) fail(ErrorKind::usage, "motion_score: need a clip of at least 3 frames");
    if (!(reference > 0)) fail(ErrorKind::usage, "motion_score: reference must be positive");
    MotionScore s;
    double mean = 0, jerk = 0;
    for (double v : m) mean += v;
    mean /= static_cast<double>(m.size());
    for (size_t i = 0; i + 1 < m.size(); ++i) jerk += std::abs(m[i + 1] - m[i]);
    jerk /= static_cast<double>(m.size() - 1);
    s.dynamic = std::min(1.0, mean / reference);
    s.smoothness = std::clamp(1.0 - jerk / reference, 0.0, 1.0);
    s.score = harmonic_mean(s.dynamic, s.smoothness);
    return s;
}

/// Flows (L-1,2,H,W): magnitude is the mean per-pixel displacement length.
inline MotionScore motion_score_flows(const torch::Tensor& flows, double reference) {
    if (flows.dim() != 4 || flows.size(1) != 2) fail(ErrorKind::shape, "motion_score: expected flows (L-1,2,H,W)");
    auto m = flows.to(torch::kDouble).pow(2).sum(1).sqrt().mean({1, 2}).contiguous();
    return motion_score_from_magnitudes({m.data_ptr<double>(), m.data_ptr<double>() + m.numel()}, reference);
}

/// Frames (L,3,H,W): magnitude is the mean per-pixel RGB change between frames.
inline MotionScore motion_score_frames(const torch::Tensor& frames, double reference) {
    if (frames.dim() != 4 || frames.size(1) != 3) fail(ErrorKind::shape, "motion_score: expected frames (L,3,H,W)");
    if (frames.size(0) < 3) fail(ErrorKind::usage, "motion_score: need a clip of at least 3 frames");
    auto f = frames.to(torch::kDouble);
    const auto L = f.size(0);
    auto d = f.narrow(0, 1, L - 1) - f.narrow(0, 0, L - 1);
    auto m = d.pow(2).sum(1).sqrt().mean({1, 2}).contiguous();
    return motion_score_from_magnitudes({m.data_ptr<double>(), m.data_ptr<double>() + m.numel()}, reference);
}

// ---------------------------------------------------------------------------
// Curation

inline constexpr int64_t kFilterCandidates = 8;

/// The up-to-8 last frames (index >= 1), taken every `stride` frames back from the end, ascending.
inline std::vector<int64_t> filter_candidates(int64_t L, int64_t stride = 1) {
    if (L < 2) fail(ErrorKind::usage, "dual_similarity_filter: clip needs at least 2 frames");
    if (stride < 1) fail(ErrorKind::usage, "dual_similarity_filter: stride must be >= 1");
    std::vector<int64_t> out;
    for (int64_t i = L - 1; i >= 1 && static_cast<int64_t>(out.size()) < kFilterCandidates; i -= stride) out.push_back(i);
    std::reverse(out.begin(), out.end());
    return out;
}

struct FilterResult {
    bool kept = false;
    int64_t index = -1;           // best candidate, also reported when rejected
    double score = 0;             // its combined score
    std::vector<int64_t> inspected;
};

using FrameScorer = std::function<double(int64_t frame)>;

/// combined = semantic * visual per candidate; keep the argmax (earliest on
/// ties) when it reaches the threshold.
inline FilterResult dual_similarity_filter(int64_t L, const FrameScorer& semantic, const FrameScorer& visual,
                                           double threshold = 0.1, int64_t stride = 1) {
    FilterResult r;
    r.inspected = filter_candidates(L, stride);
    for (auto i : r.inspected) {
        const double c = semantic(i) * visual(i);
        if (r.index < 0 || c > r.score) {
            r.index = i;
            r.score = c;
        }
    }
    r.kept = r.score >= threshold;
    return r;
}

/// Filter over a real clip: semantic = action-head probability of the
/// instructed action, visual = (1 + cos) / 2 against the first frame.
inline FilterResult curate_clip(FeatureEncoder& enc, const torch::Tensor& frames, int64_t action, double threshold,
                                int64_t stride = 1) {
    torch::NoGradGuard ng;
    const auto L = frames.size(0);
    auto x0 = frames.select(0, 0).unsqueeze(0).expand({L, -1, -1, -1});
    auto probs = torch::softmax(enc->action_logits(x0, frames).to(torch::kDouble), 1).select(1, action).contiguous();
    auto vis = ((1.0 + cosine(enc->embed(x0), enc->embed(frames))) / 2.0).contiguous();
    const double* p = probs.data_ptr<double>();
    const double* v = vis.data_ptr<double>();
    return dual_similarity_filter(
        L, [&](int64_t i) { return p[i]; }, [&](int64_t i) { return v[i]; }, threshold, stride);
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
    std::string task;
    std::vector<std::pair<std::string, double>> values;
    int64_t count = 0;
    std::string fingerprint;
    std::string checkpoint_hash;

    void set(const std::string& name, double v) {
        if (!std::isfinite(v)) fail(ErrorKind::numeric, "metric '" + name + "' is not finite");
        for (auto& [k, x] : values)
            if (k == name) {
                x = v;
                return;
            }
        values.emplace_back(name, v);
    }

    double at(const std::string& name) const {
        for (const auto& [k, x] : values)
            if (k == name) return x;
        fail(ErrorKind::usage, "report has no metric '" + name + "'");
    }

    std::string table() const {
        std::ostringstream os;
        os << "task         " << task << "\nsamples      " << count << "\nfingerprint  " << fingerprint << "\ncheckpoint   "
           << checkpoint_hash << "\n\n";
        os << std::left << std::setw(22) << "metric" << "value\n";
        for (const auto& [k, v] : values) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", v);
            os << std::left << std::setw(22) << k << buf << "\n";
        }
        return os.str();
    }

    std::string key_values() const {
        std::ostringstream os;
        os << "task=" << task << "\ncount=" << count << "\nfingerprint=" << fingerprint << "\ncheckpoint=" << checkpoint_hash << "\n";
        for (const auto& [k, v] : values) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << k << "=" << buf << "\n";
        }
        return os.str();
    }

    static MetricReport parse_key_values(const std::string& text) {
        MetricReport r;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const auto k = line.substr(0, eq), v = line.substr(eq + 1);
            if (k == "task") r.task = v;
            else if (k == "count") r.count = std::stoll(v);
            else if (k == "fingerprint") r.fingerprint = v;
            else if (k == "checkpoint") r.checkpoint_hash = v;
            else r.values.emplace_back(k, std::stod(v));
        }
        return r;
    }

    /// Writes `<base>.txt` (table) and `<base>.kv` (machine-readable).
    void write(const std::filesystem::path& base) const {
        if (count <= 0) fail(ErrorKind::usage, "report: sample count must be positive");
        if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
        std::ofstream(base.string() + ".txt", std::ios::binary) << table();
        std::ofstream(base.string() + ".kv", std::ios::binary) << key_values();
    }
};

/// Frozen models and constants shared by both evaluation protocols.
struct EvalContext {
    FeatureEncoder encoder{nullptr};
    rewards::DepthNet depth{nullptr};
    double frame_reference = 0.02;  // mean per-pixel RGB change counted as full motion
    double floor = 1e-6;
};

using ImageGenerator = std::function<torch::Tensor(const torch::Tensor& x0, const torch::Tensor& actions)>;
using ClipGenerator = std::function<torch::Tensor(const torch::Tensor& x0, const torch::Tensor& actions)>;

inline MetricReport evaluate_manipulation(const ImageGenerator& generate, const train::TrainingData& test, EvalContext& ec) {
    if (!ec.encoder || !ec.depth) fail(ErrorKind::prerequisite, "evaluate: encoder and depth reward network are required");
    torch::NoGradGuard ng;
    const auto L = test.frames_per_clip();
    auto x0 = test.frames.select(1, 0), target = test.frames.select(1, L - 1);
    auto gen = generate(x0, test.actions).to(torch::kFloat);
    require_same_shape(gen, target, "evaluate_manipulation");
    MetricReport r;
    r.task = "manipulation";
    r.count = test.size();
    r.set("context_similarity", context_similarity(ec.encoder, gen, target).mean().item<double>());
    double p = 0;
    for (int64_t i = 0; i < r.count; ++i) p += psnr(gen[i], target[i]);
    r.set("psnr", p / static_cast<double>(r.count));
    r.set("frechet", frechet_distance(ec.encoder->embed(gen), ec.encoder->embed(target)));
    r.set("depth_l1", (ec.depth->forward(gen) - ec.depth->forward(target)).abs().mean().item<double>());
    r.set("edge_l1", (synth::analytic_edges(gen) - synth::analytic_edges(target)).abs().mean().item<double>());
    return r;
}

/// Per-clip feature: mean frame embedding joined with the mean first difference.
inline torch::Tensor clip_features(FeatureEncoder& enc, const torch::Tensor& clips) {
    const auto N = clips.size(0), L = clips.size(1);
    auto e = enc->embed(clips.flatten(0, 1)).view({N, L, -1});
    auto diff = e.narrow(1, 1, L - 1) - e.narrow(1, 0, L - 1);
    return torch::cat({e.mean(1), diff.mean(1)}, 1);
}

inline MetricReport evaluate_prediction(const ClipGenerator& generate, const train::TrainingData& test, const PatchCodec& codec,
                                        EvalContext& ec) {
    if (!ec.encoder) fail(ErrorKind::prerequisite, "evaluate: encoder is required");
    torch::NoGradGuard ng;
    const auto L = test.frames_per_clip();
    auto clips = generate(test.frames.select(1, 0), test.actions).to(torch::kFloat);
    require_same_shape(clips, test.frames, "evaluate_prediction");
    MetricReport r;
    r.task = "prediction";
    r.count = test.size();
    r.set("fvd_proxy", frechet_distance(clip_features(ec.encoder, clips), clip_features(ec.encoder, test.frames)));
    r.set("fid_proxy", frechet_distance(ec.encoder->embed(clips.flatten(0, 1)), ec.encoder->embed(test.frames.flatten(0, 1))));
    r.set("goal_similarity", context_similarity(ec.encoder, clips.select(1, L - 1), test.frames.select(1, L - 1)).mean().item<double>());
    double ms = 0;
    for (int64_t i = 0; i < r.count; ++i) ms += motion_score_frames(clips[i], ec.frame_reference).score;
    r.set("motion_score", ms / static_cast<double>(r.count));
    auto z = codec.encode(clips.to(torch::kDouble));
    r.set("motion_kl", rewards::motion_reward(z, test.flows.to(torch::kDouble), ec.floor).item<double>());
    return r;
}

} // namespace showme::eval
