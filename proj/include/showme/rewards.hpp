#pragma once

#include "showme/codec.hpp"
#include "showme/synthworld.hpp"

#include <functional>
#include <memory>

namespace showme::rewards {

namespace F = torch::nn::functional;

/// Small fully convolutional depth regressor; output in (0,1) via sigmoid.
class DepthNetImpl : public torch::nn::Module {
public:
    explicit DepthNetImpl(int64_t width = 24) {
        c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, width, 3).padding(1)));
        c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1)));
        c3 = register_module("c3", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 1)));
        c4 = register_module("c4", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, 1, 1)));
    }

    /// (N,3,H,W) -> (N,1,H,W)
    torch::Tensor forward(const torch::Tensor& x) {
        auto h = F::silu(c1(x));
        h = F::silu(c2(h));
        h = F::silu(c3(h));
        return torch::sigmoid(c4(h));
    }

    torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr}, c4{nullptr};
};
TORCH_MODULE(DepthNet);

struct DepthTrainingConfig {
    int64_t steps = 1500;
    int64_t batch = 64;
    double lr = 2e-3;
    uint64_t seed = 7;
};

struct DepthTrainingReport {
    double initial_mae = 0;
    double final_mae = 0;
};

inline double depth_mae(DepthNet& net, const torch::Tensor& frames, const torch::Tensor& depth) {
    torch::NoGradGuard ng;
    return (net->forward(frames) - depth).abs().mean().item<double>();
}

/// Fits a depth network on (frames, depth) pairs; reports held-out MAE before
/// and after. Throws a numeric error if the final MAE exceeds 0.1.
inline DepthTrainingReport train_depth_reward(DepthNet& net, const torch::Tensor& frames, const torch::Tensor& depth,
                                              const torch::Tensor& heldout_frames, const torch::Tensor& heldout_depth,
                                              const DepthTrainingConfig& cfg) {
    DepthTrainingReport rep;
    rep.initial_mae = depth_mae(net, heldout_frames, heldout_depth);
    auto gen = make_generator(cfg.seed);
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
    const auto n = frames.size(0);
    for (int64_t step = 0; step < cfg.steps; ++step) {
        auto idx = torch::randint(n, {std::min(cfg.batch, n)}, gen, torch::kLong);
        // Squared error: under L1 the background-dominated maps collapse to the median (1.0).
        auto loss = (net->forward(frames.index_select(0, idx)) - depth.index_select(0, idx)).pow(2).mean();
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    rep.final_mae = depth_mae(net, heldout_frames, heldout_depth);
    if (!(rep.final_mae <= 0.1))
        fail(ErrorKind::numeric, "depth reward network did not converge: held-out MAE " + std::to_string(rep.final_mae));
    for (auto& p : net->parameters()) p.set_requires_grad(false);
    net->eval();
    return rep;
}

inline void save_depth(TensorArchive& ar, const DepthNet& net, const std::string& fingerprint) {
    ar.put_text("meta/format", "showme-depth 1");
    ar.put_text("meta/fingerprint", fingerprint);
    for (const auto& item : net->named_parameters()) ar.put("depth/" + item.key(), item.value());
}

/// Loads a frozen depth network; a non-empty `expected_fingerprint` must match.
inline DepthNet load_depth(const TensorArchive& ar, const std::string& origin, const std::string& expected_fingerprint = "") {
    if (!ar.contains("meta/format") || ar.text("meta/format") != "showme-depth 1")
        fail(ErrorKind::schema, origin + ": not a depth reward checkpoint");
    if (!expected_fingerprint.empty() && ar.text("meta/fingerprint") != expected_fingerprint)
        fail(ErrorKind::prerequisite, origin + ": config fingerprint " + expected_fingerprint + " does not match checkpoint fingerprint " +
                                          ar.text("meta/fingerprint"));
    DepthNet net;
    torch::NoGradGuard ng;
    for (auto& item : net->named_parameters()) {
        const auto key = "depth/" + item.key();
        if (!ar.contains(key)) fail(ErrorKind::schema, origin + ": missing '" + key + "'");
        item.value().copy_(ar.get(key));
        item.value().set_requires_grad(false);
    }
    net->eval();
    return net;
}

/// Frozen reward models plus the weights and timestep caps of both reward families.
struct RewardBundle {
    DepthNet depth{nullptr};
    double depth_weight = 1.0;
    double edge_weight = 1.0;
    double motion_weight = 0.001;
    int64_t structure_gamma = 200;
    int64_t motion_gamma = 500;
    double floor = 1e-6;
    bool use_depth = true;
    bool use_edge = true;
};

struct StructureTerms {
    torch::Tensor depth;   // mean |R_depth(D(z)) - R_depth(x*)|
    torch::Tensor edge;    // mean |edges(D(z)) - edges(x*)|
    torch::Tensor total;   // mean over the enabled reward models
};

/// Structure reward on one-step-denoised latents (N,C,h,w) against targets (N,3,H,W).
inline StructureTerms structure_reward(const torch::Tensor& z0_hat, const torch::Tensor& target, const PatchCodec& codec,
                                       const RewardBundle& bundle) {
    auto decoded = codec.decode(z0_hat);
    require_same_shape(decoded, target, "structure_reward");
    StructureTerms out;
    auto zero = torch::zeros({}, decoded.options());
    std::vector<torch::Tensor> terms;
    out.depth = zero;
    out.edge = zero;
    if (bundle.use_depth) {
        if (!bundle.depth) fail(ErrorKind::prerequisite, "structure_reward: depth reward network missing");
        auto net = bundle.depth;
        torch::Tensor ref;
        {
            torch::NoGradGuard ng;
            ref = net->forward(target.to(decoded.scalar_type()));
        }
        out.depth = (net->forward(decoded) - ref).abs().mean();
        terms.push_back(out.depth);
    }
    if (bundle.use_edge) {
        auto ref = synth::analytic_edges(target.to(decoded.scalar_type())).detach();
        out.edge = (synth::analytic_edges(decoded) - ref).abs().mean();
        terms.push_back(out.edge);
    }
    out.total = terms.empty() ? zero : torch::stack(terms).mean();
    return out;
}

/// ||z_{i+1} - z_i||_2 over channels: (...,L,C,h,w) -> (...,L-1,h,w).
inline torch::Tensor latent_motion_magnitude(const torch::Tensor& z) {
    if (z.dim() < 4) fail(ErrorKind::shape, "latent_motion_magnitude: expected (...,L,C,h,w)");
    const auto L = z.size(-4);
    if (L < 2) fail(ErrorKind::shape, "latent_motion_magnitude: need at least 2 frames");
    auto d = z.narrow(-4, 1, L - 1) - z.narrow(-4, 0, L - 1);
    auto sq = d.pow(2).sum(-3);
    auto pos = sq > 0;
    return torch::where(pos, torch::sqrt(torch::where(pos, sq, torch::ones_like(sq))), torch::zeros_like(sq));
}

/// (seq + floor) / sum_time(seq + floor); time is dim -3 of (...,T,h,w).
inline torch::Tensor temporal_normalize(const torch::Tensor& seq, double floor) {
    auto s = seq + floor;
    return s / s.sum(-3, true);
}

/// Per-pixel flow magnitude, area-pooled to the latent grid: (...,2,H,W) -> (...,h,w).
inline torch::Tensor downsample_flow(const torch::Tensor& flow, int64_t h, int64_t w) {
    if (flow.dim() < 3 || flow.size(-3) != 2) fail(ErrorKind::shape, "downsample_flow: expected (...,2,H,W)");
    const auto H = flow.size(-2), W = flow.size(-1);
    if (h < 1 || w < 1 || H % h != 0 || W % w != 0)
        fail(ErrorKind::shape, "downsample_flow: " + std::to_string(H) + "x" + std::to_string(W) + " not divisible into " +
                                   std::to_string(h) + "x" + std::to_string(w));
    auto mag = flow.pow(2).sum(-3).sqrt();
    auto lead = mag.sizes().slice(0, mag.dim() - 2).vec();
    auto pooled = F::avg_pool2d(mag.reshape({-1, 1, H, W}), F::AvgPool2dFuncOptions({H / h, W / w}));
    lead.insert(lead.end(), {h, w});
    return pooled.reshape(lead);
}

/// sum_i P_i (log(P_i + floor) - log(Q_i + floor)) over time dim -3; 0 log 0 = 0.
inline torch::Tensor temporal_kl(const torch::Tensor& P, const torch::Tensor& Q, double floor) {
    require_same_shape(P, Q, "temporal_kl");
    auto safeP = torch::where(P > 0, P, torch::ones_like(P));
    auto terms = torch::where(P > 0, P * (torch::log(safeP + floor) - torch::log(Q + floor)), torch::zeros_like(P));
    return terms.sum(-3);
}

/// L_mo = E_{h,w}[KL(P || Q)]: latents (...,L,C,h,w), flows (...,L-1,2,H,W).
/// Gradients reach the latents through Q only.
inline torch::Tensor motion_reward(const torch::Tensor& z0_hat, const torch::Tensor& flows, double floor) {
    if (z0_hat.dim() < 4 || flows.dim() != z0_hat.dim()) fail(ErrorKind::shape, "motion_reward: rank mismatch");
    if (flows.size(-4) != z0_hat.size(-4) - 1)
        fail(ErrorKind::shape, "motion_reward: need L-1 flows for L latent frames");
    auto Q = temporal_normalize(latent_motion_magnitude(z0_hat), floor);
    auto P = temporal_normalize(downsample_flow(flows.to(z0_hat.scalar_type()), z0_hat.size(-2), z0_hat.size(-1)), floor).detach();
    return temporal_kl(P, Q, floor).mean();
}

} // namespace showme::rewards
