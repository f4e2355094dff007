#pragma once

#include "showme/config.hpp"
#include "showme/image_io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

namespace testutil {

using namespace showme;

/// Small network for fast tests: 16x16 frames, patch 2 -> 8x8 latents, C = 12.
inline model::NetworkConfig tiny_network() {
    model::NetworkConfig c;
    c.latent_channels = 12;
    c.base_width = 16;
    c.levels = 2;
    c.heads = 2;
    c.embed_dim = 16;
    c.context_tokens = 2;
    c.groups = 4;
    c.max_frames = 8;
    return c;
}

inline train::ExperimentSetup tiny_setup() {
    train::ExperimentSetup s;
    s.network = tiny_network();
    s.patch = 2;
    s.diffusion_steps = 100;
    s.beta_min = 1e-3;
    s.beta_max = 0.05;
    s.spatial_rank = 4;
    s.temporal_rank = 2;
    s.fingerprint = "tiny";
    return s;
}

inline const std::vector<synth::SyntheticSample>& tiny_samples() {
    static const auto samples = data::generate_split(24, 99, 16, 16, 4);
    return samples;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kDouble) - b.to(torch::kDouble)).abs().max().item<double>();
}

/// Snapshot of every named parameter.
inline std::map<std::string, torch::Tensor> snapshot(torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& item : m.named_parameters()) out[item.key()] = item.value().detach().clone();
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("showme-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Runs a shell command and returns its exit status.
inline int run(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

template <class F>
ErrorKind error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a showme::Error";
    return ErrorKind::io;
}

} // namespace testutil
