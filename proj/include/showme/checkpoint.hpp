#pragma once

// Checkpoint layout (one TensorArchive):
//   meta/format        "showme-checkpoint 1"
//   meta/stage         stage id that produced the file
//   meta/fingerprint   config fingerprint the model was built under
//   meta/network       NetworkConfig as key=value lines
//   meta/schedule      "T beta_min beta_max"
//   meta/adapters      one line per set: name rank dropout scaling target,target,...
//   codec/...          latent codec parameters
//   param/<group>/<name>  parameters, group in {base, embeddings, adapter:<set>}
//   train/...          optimizer and RNG state (resumable checkpoints only)

#include "showme/archive.hpp"
#include "showme/codec.hpp"
#include "showme/denoiser.hpp"
#include "showme/diffusion.hpp"

#include <sstream>

namespace showme::ckpt {

using model::AdapterSpec;
using model::Denoiser;
using model::NetworkConfig;

inline std::string network_to_text(const NetworkConfig& c) {
    std::ostringstream os;
    os << "latent_channels=" << c.latent_channels << "\nbase_width=" << c.base_width << "\nlevels=" << c.levels
       << "\nblocks_per_level=" << c.blocks_per_level << "\nheads=" << c.heads << "\nmax_frames=" << c.max_frames
       << "\nembed_dim=" << c.embed_dim << "\ncontext_tokens=" << c.context_tokens << "\nnum_actions=" << c.num_actions
       << "\ngroups=" << c.groups << "\n";
    return os.str();
}

inline NetworkConfig network_from_text(const std::string& text) {
    NetworkConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto key = line.substr(0, eq);
        const auto v = std::stoll(line.substr(eq + 1));
        if (key == "latent_channels") c.latent_channels = v;
        else if (key == "base_width") c.base_width = v;
        else if (key == "levels") c.levels = v;
        else if (key == "blocks_per_level") c.blocks_per_level = v;
        else if (key == "heads") c.heads = v;
        else if (key == "max_frames") c.max_frames = v;
        else if (key == "embed_dim") c.embed_dim = v;
        else if (key == "context_tokens") c.context_tokens = v;
        else if (key == "num_actions") c.num_actions = v;
        else if (key == "groups") c.groups = v;
        else fail(ErrorKind::schema, "checkpoint: unknown network key '" + key + "'");
    }
    return c;
}

inline std::string adapters_to_text(const Denoiser& m) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& [name, st] : m->adapters()) {
        const auto& s = st.spec;
        os << s.name << ' ' << s.rank << ' ' << s.dropout << ' ' << s.scaling << ' ';
        for (size_t i = 0; i < s.targets.size(); ++i) os << (i ? "," : "") << s.targets[i];
        os << '\n';
    }
    return os.str();
}

inline std::vector<AdapterSpec> adapters_from_text(const std::string& text) {
    std::vector<AdapterSpec> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        AdapterSpec s;
        std::string targets;
        if (!(ls >> s.name >> s.rank >> s.dropout >> s.scaling >> targets))
            fail(ErrorKind::schema, "checkpoint: malformed adapter line '" + line + "'");
        std::istringstream ts(targets);
        std::string t;
        while (std::getline(ts, t, ',')) s.targets.push_back(t);
        out.push_back(s);
    }
    return out;
}

inline void save_parameters(TensorArchive& ar, const torch::nn::Module& m) {
    for (const auto& item : m.named_parameters())
        ar.put("param/" + model::parameter_group(item.key()) + "/" + item.key(), item.value());
}

/// Copies matching parameters into `m`; every parameter of `m` must be present.
inline void load_parameters(const TensorArchive& ar, torch::nn::Module& m) {
    torch::NoGradGuard ng;
    for (auto& item : m.named_parameters()) {
        const auto key = "param/" + model::parameter_group(item.key()) + "/" + item.key();
        if (!ar.contains(key)) fail(ErrorKind::schema, "checkpoint: missing parameter '" + key + "'");
        const auto& src = ar.get(key);
        if (src.sizes() != item.value().sizes()) fail(ErrorKind::schema, "checkpoint: parameter '" + key + "' has wrong shape");
        item.value().copy_(src);
    }
}

/// Whether the checkpoint carries parameters for a group (e.g. "adapter:spatial-stage").
inline bool has_group(const TensorArchive& ar, const std::string& group) {
    const auto prefix = "param/" + group + "/";
    for (const auto& [name, t] : ar.records())
        if (name.rfind(prefix, 0) == 0) return true;
    return false;
}

struct ModelBundle {
    PatchCodec codec;
    Denoiser model{nullptr};
    diffusion::NoiseSchedule schedule;
    double beta_min = 0, beta_max = 0;
    std::string stage;
    std::string fingerprint;
};

inline void save_model(TensorArchive& ar, const ModelBundle& mb) {
    ar.put_text("meta/format", "showme-checkpoint 1");
    ar.put_text("meta/stage", mb.stage);
    ar.put_text("meta/fingerprint", mb.fingerprint);
    ar.put_text("meta/network", network_to_text(mb.model->config()));
    std::ostringstream sched;
    sched.precision(17);
    sched << mb.schedule.steps << ' ' << mb.beta_min << ' ' << mb.beta_max;
    ar.put_text("meta/schedule", sched.str());
    ar.put_text("meta/adapters", adapters_to_text(mb.model));
    mb.codec.save(ar);
    save_parameters(ar, *mb.model);
}

/// Rebuilds codec, schedule and network (with adapters) from a checkpoint.
/// A non-empty `expected_fingerprint` must match the stored one.
inline ModelBundle load_model(const TensorArchive& ar, const std::string& origin, const std::string& expected_fingerprint = "") {
    if (!ar.contains("meta/format") || ar.text("meta/format") != "showme-checkpoint 1")
        fail(ErrorKind::schema, origin + ": not a model checkpoint");
    ModelBundle mb;
    mb.stage = ar.text("meta/stage");
    mb.fingerprint = ar.text("meta/fingerprint");
    if (!expected_fingerprint.empty() && expected_fingerprint != mb.fingerprint)
        fail(ErrorKind::prerequisite, origin + ": config fingerprint " + expected_fingerprint +
                                          " does not match checkpoint fingerprint " + mb.fingerprint);
    std::istringstream sched(ar.text("meta/schedule"));
    int64_t T = 0;
    sched >> T >> mb.beta_min >> mb.beta_max;
    mb.schedule = diffusion::make_linear_schedule(T, mb.beta_min, mb.beta_max);
    mb.codec = PatchCodec::load(ar);
    mb.model = model::make_denoiser(network_from_text(ar.text("meta/network")), 0);
    for (const auto& spec : adapters_from_text(ar.text("meta/adapters"))) mb.model->attach_adapters(spec, 0);
    load_parameters(ar, *mb.model);
    mb.model->set_noise_levels(mb.schedule.alpha_bars);
    return mb;
}

} // namespace showme::ckpt
