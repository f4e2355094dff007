#pragma once

// Run configuration: flat "namespace.key" settings with defaults. Files use
// `key = value` lines, optionally grouped under `[namespace]` headers;
// command-line overrides use `--namespace.key=value`.

#include "showme/evalsuite.hpp"

#include <cstdlib>
#include <fstream>

namespace showme {

class RunConfig {
public:
    RunConfig() {
        // data
        def("data.train_count", "2000");
        def("data.test_count", "48");
        def("data.frames", "8");
        def("data.height", "32");
        def("data.width", "32");
        def("data.seed", "1");
        def("data.test_seed", "2");
        // model
        def("model.base_width", "32");
        def("model.levels", "2");
        def("model.blocks_per_level", "1");
        def("model.heads", "2");
        def("model.max_frames", "32");
        def("model.embed_dim", "32");
        def("model.context_tokens", "4");
        def("model.groups", "8");
        def("model.patch", "2");
        def("model.seed", "5");
        def("model.codec_seed", "11");
        // schedule
        def("schedule.steps", "1000");
        def("schedule.beta_min", "0.0001");
        def("schedule.beta_max", "0.02");
        // adapters
        def("adapters.spatial_rank", "8");
        def("adapters.temporal_rank", "4");
        def("adapters.dropout", "0.1");
        def("adapters.scaling", "1.0");
        // rewards
        def("rewards.depth_weight", "1.0");
        def("rewards.edge_weight", "1.0");
        def("rewards.motion_weight", "0.001");
        def("rewards.structure_gamma", "200");
        def("rewards.motion_gamma", "500");
        def("rewards.floor", "1e-6");
        def("rewards.depth_steps", "1500");
        def("rewards.depth_batch", "64");
        def("rewards.depth_lr", "0.002");
        def("rewards.depth_seed", "7");
        // trainer
        def("trainer.stage", "1a");
        def("trainer.grad_clip", "1.0");
        def("trainer.drop_probability", "0.1");
        def("trainer.skip_stage1", "false");
        stage_defaults("base", "3000", "8", "0.002", "21");
        stage_defaults("1a", "1000", "32", "0.0001", "22");
        stage_defaults("1b", "1000", "32", "0.0001", "23");
        stage_defaults("2", "600", "4", "0.0001", "24");
        def("trainer.encoder.steps", "600");
        def("trainer.encoder.batch", "32");
        def("trainer.encoder.lr", "0.002");
        def("trainer.encoder.seed", "13");
        // eval
        def("eval.task", "manipulation");
        def("eval.ddim_steps", "50");
        def("eval.guidance", "7.5");
        def("eval.seed", "3");
        def("eval.frame_reference", "0.02");
        def("eval.threshold", "0.1");
        def("eval.stride", "1");
        def("eval.report", "");
        // paths
        const char* root = std::getenv("SHOWME_OUTPUT_ROOT");
        def("paths.root", root && *root ? root : "showme-out");
        def("paths.dataset", "");
        def("paths.checkpoints", "");
        def("paths.outputs", "");
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) {
        if (!has(key)) fail(ErrorKind::usage, "unknown config key '" + key + "'");
        values_[key] = value;
    }

    /// Applies one `--namespace.key=value` (or `namespace.key=value`) override.
    void apply_override(std::string arg) {
        if (arg.rfind("--", 0) == 0) arg = arg.substr(2);
        const auto eq = arg.find('=');
        if (eq == std::string::npos) fail(ErrorKind::usage, "config override '" + arg + "' lacks '='");
        set(trim(arg.substr(0, eq)), trim(arg.substr(eq + 1)));
    }

    void load_text(const std::string& text, const std::string& origin) {
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') fail(ErrorKind::usage, origin + ":" + std::to_string(lineno) + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(ErrorKind::usage, origin + ":" + std::to_string(lineno) + ": expected key = value");
            auto key = trim(line.substr(0, eq));
            if (!section.empty()) key = section + "." + key;
            if (!has(key)) fail(ErrorKind::usage, origin + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
            values_[key] = trim(line.substr(eq + 1));
        }
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::io, "cannot read config file " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        load_text(ss.str(), path.string());
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) fail(ErrorKind::usage, "unknown config key '" + key + "'");
        return it->second;
    }

    int64_t integer(const std::string& key) const {
        const auto& v = str(key);
        size_t used = 0;
        int64_t out = 0;
        try {
            out = std::stoll(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) fail(ErrorKind::usage, "config key '" + key + "' expects an integer, got '" + v + "'");
        return out;
    }

    double real(const std::string& key) const {
        const auto& v = str(key);
        size_t used = 0;
        double out = 0;
        try {
            out = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) fail(ErrorKind::usage, "config key '" + key + "' expects a number, got '" + v + "'");
        return out;
    }

    bool boolean(const std::string& key) const {
        const auto& v = str(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(ErrorKind::usage, "config key '" + key + "' expects true or false, got '" + v + "'");
    }

    /// `key=value` lines for every key, sorted.
    std::string dump(const std::string& prefix = "") const {
        std::string out;
        for (const auto& [k, v] : values_)
            if (k.rfind(prefix, 0) == 0) out += k + "=" + v + "\n";
        return out;
    }

    /// Hash of the model-defining namespaces; checkpoints carry it and must match.
    std::string fingerprint() const {
        return sha1_hex(dump("data.") + dump("model.") + dump("schedule.") + dump("adapters.")).substr(0, 16);
    }

    /// Hash of the data namespace alone; datasets carry it.
    std::string data_fingerprint() const { return sha1_hex(dump("data.")).substr(0, 16); }

    std::filesystem::path root() const { return str("paths.root"); }
    std::filesystem::path dataset_dir() const { return or_default("paths.dataset", root() / "data"); }
    std::filesystem::path checkpoint_dir() const { return or_default("paths.checkpoints", root() / "checkpoints"); }
    std::filesystem::path output_dir() const { return or_default("paths.outputs", root() / "outputs"); }

    model::NetworkConfig network() const {
        model::NetworkConfig n;
        const auto p = integer("model.patch");
        n.latent_channels = 3 * p * p;
        n.base_width = integer("model.base_width");
        n.levels = integer("model.levels");
        n.blocks_per_level = integer("model.blocks_per_level");
        n.heads = integer("model.heads");
        n.max_frames = integer("model.max_frames");
        n.embed_dim = integer("model.embed_dim");
        n.context_tokens = integer("model.context_tokens");
        n.groups = integer("model.groups");
        n.validate();
        return n;
    }

    train::ExperimentSetup setup() const {
        train::ExperimentSetup s;
        s.network = network();
        s.patch = static_cast<int>(integer("model.patch"));
        s.codec_seed = static_cast<uint64_t>(integer("model.codec_seed"));
        s.model_seed = static_cast<uint64_t>(integer("model.seed"));
        s.diffusion_steps = integer("schedule.steps");
        s.beta_min = real("schedule.beta_min");
        s.beta_max = real("schedule.beta_max");
        s.spatial_rank = integer("adapters.spatial_rank");
        s.temporal_rank = integer("adapters.temporal_rank");
        s.adapter_dropout = real("adapters.dropout");
        s.adapter_scaling = real("adapters.scaling");
        s.fingerprint = fingerprint();
        const auto H = integer("data.height"), W = integer("data.width");
        if (H % s.patch != 0 || W % s.patch != 0) fail(ErrorKind::usage, "data resolution must be divisible by model.patch");
        if (integer("data.frames") > s.network.max_frames) fail(ErrorKind::usage, "data.frames exceeds model.max_frames");
        return s;
    }

    train::StageConfig stage(train::StageId id) const {
        auto c = train::StageConfig::defaults(id);
        const auto ns = "trainer." + train::stage_name(id) + ".";
        c.steps = integer(ns + "steps");
        c.batch = integer(ns + "batch");
        c.lr = real(ns + "lr");
        c.seed = static_cast<uint64_t>(integer(ns + "seed"));
        c.eval_interval = integer(ns + "eval_interval");
        c.grad_clip = real("trainer.grad_clip");
        c.drop_probability = real("trainer.drop_probability");
        c.depth_weight = real("rewards.depth_weight");
        c.edge_weight = real("rewards.edge_weight");
        c.motion_weight = real("rewards.motion_weight");
        if (id == train::StageId::s1b) c.reward_gamma = integer("rewards.structure_gamma");
        if (id == train::StageId::s2) {
            c.reward_gamma = integer("rewards.motion_gamma");
            c.skip_stage1 = boolean("trainer.skip_stage1");
            if (c.skip_stage1) c.frozen_adapters.clear();
        }
        c.validate();
        return c;
    }

    rewards::RewardBundle reward_bundle() const {
        rewards::RewardBundle rb;
        rb.depth_weight = real("rewards.depth_weight");
        rb.edge_weight = real("rewards.edge_weight");
        rb.motion_weight = real("rewards.motion_weight");
        rb.structure_gamma = integer("rewards.structure_gamma");
        rb.motion_gamma = integer("rewards.motion_gamma");
        rb.floor = real("rewards.floor");
        return rb;
    }

    rewards::DepthTrainingConfig depth_training() const {
        return {integer("rewards.depth_steps"), integer("rewards.depth_batch"), real("rewards.depth_lr"),
                static_cast<uint64_t>(integer("rewards.depth_seed"))};
    }

    eval::EncoderTrainingConfig encoder_training() const {
        return {integer("trainer.encoder.steps"), integer("trainer.encoder.batch"), real("trainer.encoder.lr"),
                static_cast<uint64_t>(integer("trainer.encoder.seed"))};
    }

    diffusion::SamplerConfig sampler() const {
        diffusion::SamplerConfig s;
        s.steps = integer("eval.ddim_steps");
        s.guidance = real("eval.guidance");
        s.seed = static_cast<uint64_t>(integer("eval.seed"));
        return s;
    }

private:
    void def(const std::string& key, const std::string& value) { values_[key] = value; }

    void stage_defaults(const std::string& stage, const char* steps, const char* batch, const char* lr, const char* seed) {
        def("trainer." + stage + ".steps", steps);
        def("trainer." + stage + ".batch", batch);
        def("trainer." + stage + ".lr", lr);
        def("trainer." + stage + ".seed", seed);
        def("trainer." + stage + ".eval_interval", "0");
    }

    std::filesystem::path or_default(const std::string& key, const std::filesystem::path& fallback) const {
        const auto& v = str(key);
        return v.empty() ? fallback : std::filesystem::path(v);
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

} // namespace showme
