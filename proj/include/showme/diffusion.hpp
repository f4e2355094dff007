#pragma once

#include "showme/common.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace showme::diffusion {

/// Timesteps are 1-based: alpha_bar(t) = prod_{i<=t} (1 - beta_i).
struct NoiseSchedule {
    int64_t steps = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;

    double alpha_bar(int64_t t) const {
        if (t == 0) return 1.0;
        check(t);
        return alpha_bars[static_cast<size_t>(t - 1)];
    }

    void check(int64_t t) const {
        if (t < 1 || t > steps)
            fail(ErrorKind::usage, "timestep " + std::to_string(t) + " outside [1," + std::to_string(steps) + "]");
    }

    /// alpha_bar gathered per batch element, shaped to broadcast against `like`.
    torch::Tensor alpha_bar_like(const torch::Tensor& t, const torch::Tensor& like) const {
        auto tt = t.to(torch::kLong).flatten();
        if (tt.numel() > 0) {
            check(tt.min().item<int64_t>());
            check(tt.max().item<int64_t>());
        }
        auto table = torch::tensor(alpha_bars, torch::kDouble);
        auto ab = table.index_select(0, tt - 1).to(like.scalar_type());
        std::vector<int64_t> shape{tt.numel()};
        for (int64_t d = 1; d < like.dim(); ++d) shape.push_back(1);
        return ab.view(shape);
    }
};

inline NoiseSchedule make_schedule(std::vector<double> betas) {
    NoiseSchedule s;
    s.steps = static_cast<int64_t>(betas.size());
    if (s.steps < 1) fail(ErrorKind::usage, "schedule: need at least one step");
    double prod = 1.0;
    for (double b : betas) {
        if (!(b > 0 && b < 1)) fail(ErrorKind::usage, "schedule: every beta must lie in (0,1)");
        prod *= 1.0 - b;
        s.alpha_bars.push_back(prod);
    }
    s.betas = std::move(betas);
    return s;
}

inline NoiseSchedule make_linear_schedule(int64_t T, double beta_min, double beta_max) {
    if (T < 1) fail(ErrorKind::usage, "schedule: T must be >= 1");
    if (!(beta_min > 0 && beta_min <= beta_max && beta_max < 1))
        fail(ErrorKind::usage, "schedule: need 0 < beta_min <= beta_max < 1");
    std::vector<double> betas(static_cast<size_t>(T));
    for (int64_t i = 0; i < T; ++i)
        betas[static_cast<size_t>(i)] = T == 1 ? beta_min : beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(T - 1);
    return make_schedule(std::move(betas));
}

/// z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps, with one timestep per leading-dim element.
inline torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                                     const NoiseSchedule& s) {
    require_same_shape(z0, eps, "forward_diffuse");
    auto ab = s.alpha_bar_like(t, z0);
    return ab.sqrt() * z0 + (1 - ab).sqrt() * eps;
}

inline torch::Tensor forward_diffuse(const torch::Tensor& z0, int64_t t, const torch::Tensor& eps, const NoiseSchedule& s) {
    require_same_shape(z0, eps, "forward_diffuse");
    const double ab = s.alpha_bar(t);
    return std::sqrt(ab) * z0 + std::sqrt(1 - ab) * eps;
}

/// Mean squared error over all elements.
inline torch::Tensor noise_loss(const torch::Tensor& eps_hat, const torch::Tensor& eps) {
    require_same_shape(eps_hat, eps, "noise_loss");
    return (eps_hat - eps).pow(2).mean();
}

inline constexpr double kMinSqrtAlphaBar = 1e-6;

/// z0_hat = (z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t); differentiable in both inputs.
inline torch::Tensor one_step_denoise(const torch::Tensor& z_t, const torch::Tensor& eps_hat, const torch::Tensor& t,
                                      const NoiseSchedule& s) {
    require_same_shape(z_t, eps_hat, "one_step_denoise");
    auto ab = s.alpha_bar_like(t, z_t);
    return (z_t - (1 - ab).sqrt() * eps_hat) / ab.sqrt().clamp_min(kMinSqrtAlphaBar);
}

inline torch::Tensor one_step_denoise(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int64_t t,
                                      const NoiseSchedule& s) {
    require_same_shape(z_t, eps_hat, "one_step_denoise");
    const double ab = s.alpha_bar(t);
    return (z_t - std::sqrt(1 - ab) * eps_hat) / std::max(std::sqrt(ab), kMinSqrtAlphaBar);
}

struct GuidanceConfig {
    double scale = 7.5;
    double drop_probability = 0.1;

    void validate() const {
        if (scale < 0) fail(ErrorKind::usage, "guidance scale must be >= 0");
        if (drop_probability < 0 || drop_probability > 1) fail(ErrorKind::usage, "drop probability must be in [0,1]");
    }
};

/// eps_u + s (eps_c - eps_u), evaluated as s eps_c + (1 - s) eps_u so that
/// s = 0 and s = 1 reproduce their inputs exactly.
inline torch::Tensor cfg_epsilon(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond, double s) {
    require_same_shape(eps_cond, eps_uncond, "cfg_epsilon");
    if (s < 0) fail(ErrorKind::usage, "cfg_epsilon: guidance scale must be >= 0");
    return s * eps_cond + (1.0 - s) * eps_uncond;
}

/// Uniformly strided timesteps tau_1 < ... < tau_n = T.
inline std::vector<int64_t> ddim_timesteps(int64_t T, int64_t n) {
    if (n < 1 || n > T) fail(ErrorKind::usage, "ddim: steps must be in [1,T]");
    std::vector<int64_t> taus;
    for (int64_t i = 1; i <= n; ++i) {
        auto tau = static_cast<int64_t>(std::llround(static_cast<double>(i) * static_cast<double>(T) / static_cast<double>(n)));
        taus.push_back(std::max<int64_t>(tau, taus.empty() ? 1 : taus.back() + 1));
    }
    return taus;
}

/// Predicts noise for a batch of latents at one shared timestep.
using EpsPredictor = std::function<torch::Tensor(const torch::Tensor& z_t, int64_t t)>;

struct SamplerConfig {
    int64_t steps = 50;
    double guidance = 7.5;
    uint64_t seed = 0;
};

/// Deterministic (eta = 0) DDIM. `uncond` may be empty when guidance == 1.
inline torch::Tensor ddim_sample(const EpsPredictor& cond, const EpsPredictor& uncond, const NoiseSchedule& s,
                                 std::vector<int64_t> shape, const SamplerConfig& cfg,
                                 torch::ScalarType dtype = torch::kFloat) {
    torch::NoGradGuard ng;
    auto gen = make_generator(cfg.seed);
    auto z = torch::randn(shape, gen, dtype);
    const auto taus = ddim_timesteps(s.steps, cfg.steps);
    for (auto it = taus.rbegin(); it != taus.rend(); ++it) {
        const int64_t t = *it;
        const int64_t prev = std::next(it) == taus.rend() ? 0 : *std::next(it);
        auto eps = cond(z, t);
        require_same_shape(eps, z, "ddim_sample predictor");
        if (cfg.guidance != 1.0) {
            if (!uncond) fail(ErrorKind::usage, "ddim_sample: guidance needs an unconditional predictor");
            auto eps_u = uncond(z, t);
            require_same_shape(eps_u, z, "ddim_sample predictor");
            eps = cfg_epsilon(eps, eps_u, cfg.guidance);
        }
        auto z0 = one_step_denoise(z, eps, t, s);
        const double ab_prev = s.alpha_bar(prev);
        z = std::sqrt(ab_prev) * z0 + std::sqrt(1 - ab_prev) * eps;
    }
    return z;
}

} // namespace showme::diffusion
