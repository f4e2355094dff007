#pragma once

// Inference: image mode runs the spatial-stage adapters with temporal blocks
// off; video mode enables temporal blocks and every attached adapter set.

#include "showme/trainer.hpp"

namespace showme::pipeline {

enum class GenMode { image, video };

inline GenMode parse_mode(const std::string& s) {
    if (s == "image") return GenMode::image;
    if (s == "video") return GenMode::video;
    fail(ErrorKind::usage, "unknown sampling mode '" + s + "' (expected image or video)");
}

/// Active adapter sets for a mode; errors if the checkpoint lacks them.
inline std::set<std::string> mode_adapters(const model::Denoiser& m, GenMode mode) {
    using train::kSpatialStage;
    using train::kTemporalStage;
    if (mode == GenMode::image) {
        if (!m->has_adapter(kSpatialStage))
            fail(ErrorKind::prerequisite, "image mode needs the adapter group '" + kSpatialStage + "', which the checkpoint lacks");
        return {kSpatialStage};
    }
    if (!m->has_adapter(kTemporalStage))
        fail(ErrorKind::prerequisite, "video mode needs the adapter group '" + kTemporalStage + "', which the checkpoint lacks");
    std::set<std::string> out{kTemporalStage};
    if (m->has_adapter(kSpatialStage)) out.insert(kSpatialStage);
    return out;
}

/// x0 (N,3,H,W), actions (N) -> images (N,3,H,W) or clips (N,L,3,H,W) in [0,1].
inline torch::Tensor generate(ckpt::ModelBundle& mb, const torch::Tensor& x0, const torch::Tensor& actions, GenMode mode,
                              int64_t L, const diffusion::SamplerConfig& sc, int64_t chunk = 16) {
    torch::NoGradGuard ng;
    if (x0.dim() != 4 || x0.size(1) != 3) fail(ErrorKind::shape, "generate: expected x0 (N,3,H,W), got " + shape_str(x0));
    if (actions.numel() != x0.size(0)) fail(ErrorKind::shape, "generate: need one action per input frame");
    if (mode == GenMode::video && L < 2) fail(ErrorKind::usage, "generate: video mode needs at least 2 frames");
    auto& model = mb.model;
    model::ForwardContext ctx;
    ctx.temporal_enabled = mode == GenMode::video;
    ctx.active = mode_adapters(model, mode);
    const auto frames = mode == GenMode::video ? L : 1;
    const auto cmode = mode == GenMode::video ? model::CondMode::prediction : model::CondMode::manipulation;
    std::vector<torch::Tensor> outs;
    for (int64_t start = 0, c = 0; start < x0.size(0); start += chunk, ++c) {
        const auto n = std::min(chunk, x0.size(0) - start);
        auto xs = x0.slice(0, start, start + n).to(model->dtype());
        auto z0 = mb.codec.encode(xs);
        auto pack = model->assemble(z0, actions.slice(0, start, start + n), cmode, frames, torch::zeros({n}, torch::kBool), ctx);
        auto upack = model->unconditional(pack);
        auto predictor = [&](const model::ConditioningPack& p) {
            return [&, p](const torch::Tensor& z, int64_t t) {
                return model->forward(z, torch::full({n}, t, torch::kLong), p, ctx);
            };
        };
        auto cfg = sc;
        cfg.seed = sc.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(c);
        auto z = diffusion::ddim_sample(predictor(pack), predictor(upack), mb.schedule,
                                        {n, frames, z0.size(1), z0.size(2), z0.size(3)}, cfg, model->dtype());
        auto x = mb.codec.decode(z).clamp(0.0, 1.0).to(torch::kFloat);
        outs.push_back(mode == GenMode::video ? x : x.squeeze(1));
    }
    return torch::cat(outs, 0);
}

} // namespace showme::pipeline
