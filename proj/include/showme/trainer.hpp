#pragma once

// Stage orchestration.
//
//   base  instruction-agnostic image/video denoising that trains the backbone
//         (stands in for the pretrained video model; instructions stay null)
//   1a    spatial-only manipulation, noise loss, spatial-stage adapters
//   1b    1a plus depth/edge structure rewards on one-step-denoised latents
//   2     spatiotemporal prediction, noise loss plus latent motion reward,
//         temporal-stage adapters trained, spatial-stage adapters frozen

#include "showme/checkpoint.hpp"
#include "showme/dataset.hpp"
#include "showme/rewards.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>

namespace showme::train {

using diffusion::NoiseSchedule;
using model::CondMode;
using model::ForwardContext;

inline const std::string kSpatialStage = "spatial-stage";
inline const std::string kTemporalStage = "temporal-stage";

enum class StageId { base, s1a, s1b, s2 };

inline std::string stage_name(StageId s) {
    switch (s) {
    case StageId::base: return "base";
    case StageId::s1a: return "1a";
    case StageId::s1b: return "1b";
    case StageId::s2: return "2";
    }
    return "?";
}

inline StageId parse_stage(const std::string& s) {
    if (s == "base") return StageId::base;
    if (s == "1a") return StageId::s1a;
    if (s == "1b") return StageId::s1b;
    if (s == "2") return StageId::s2;
    fail(ErrorKind::usage, "unknown training stage '" + s + "'");
}

struct StageConfig {
    StageId stage = StageId::s1a;
    bool temporal_enabled = false;
    std::vector<std::string> trainable_groups;
    std::vector<std::string> frozen_adapters;
    double noise_weight = 1.0;
    double depth_weight = 1.0;
    double edge_weight = 1.0;
    double motion_weight = 0.001;
    int64_t reward_gamma = 0;
    int64_t steps = 100;
    int64_t batch = 8;
    double lr = 1e-4;
    uint64_t seed = 0;
    int64_t eval_interval = 0;
    double grad_clip = 1.0;
    double drop_probability = 0.1;
    bool with_rewards = false;
    bool skip_stage1 = false;  // stage 2 ablation: start from the base model

    static StageConfig defaults(StageId id) {
        StageConfig c;
        c.stage = id;
        switch (id) {
        case StageId::base:
            c.temporal_enabled = true;
            c.trainable_groups = {"base", "embeddings"};
            break;
        case StageId::s1a:
            c.trainable_groups = {"adapter:" + kSpatialStage};
            break;
        case StageId::s1b:
            c.trainable_groups = {"adapter:" + kSpatialStage};
            c.with_rewards = true;
            c.reward_gamma = 200;
            break;
        case StageId::s2:
            c.temporal_enabled = true;
            c.trainable_groups = {"adapter:" + kTemporalStage};
            c.frozen_adapters = {kSpatialStage};
            c.reward_gamma = 500;
            break;
        }
        return c;
    }

    void validate() const {
        const bool spatial_only = stage == StageId::s1a || stage == StageId::s1b;
        if (spatial_only && temporal_enabled) fail(ErrorKind::usage, "stage 1 runs with temporal modules disabled");
        if (stage == StageId::s2 && !temporal_enabled) fail(ErrorKind::usage, "stage 2 runs with temporal modules enabled");
        if (stage == StageId::s2 && !skip_stage1 &&
            std::find(frozen_adapters.begin(), frozen_adapters.end(), kSpatialStage) == frozen_adapters.end())
            fail(ErrorKind::usage, "stage 2 must keep the spatial-stage adapters frozen");
        if (steps < 0 || batch < 1 || lr <= 0) fail(ErrorKind::usage, "stage: invalid step count, batch or learning rate");
        if (with_rewards && reward_gamma < 1) fail(ErrorKind::usage, "stage: reward timestep cap must be >= 1");
        if (drop_probability < 0 || drop_probability > 1) fail(ErrorKind::usage, "stage: drop probability outside [0,1]");
    }

    /// Everything except the step budget; resuming requires an exact match.
    std::string identity() const {
        std::ostringstream os;
        os.precision(17);
        os << stage_name(stage) << ' ' << temporal_enabled << ' ' << noise_weight << ' ' << depth_weight << ' '
           << edge_weight << ' ' << motion_weight << ' ' << reward_gamma << ' ' << batch << ' ' << lr << ' ' << seed << ' '
           << eval_interval << ' ' << grad_clip << ' ' << drop_probability << ' ' << with_rewards << ' ' << skip_stage1;
        for (const auto& g : trainable_groups) os << " +" << g;
        for (const auto& g : frozen_adapters) os << " -" << g;
        return os.str();
    }
};

struct LossRecord {
    double noise = 0, depth = 0, edge = 0, motion = 0, total = 0;
    bool operator==(const LossRecord&) const = default;
};

/// Dataset split stacked into tensors.
struct TrainingData {
    torch::Tensor frames;   // (S,L,3,H,W)
    torch::Tensor flows;    // (S,L-1,2,H,W)
    torch::Tensor actions;  // (S)

    int64_t size() const { return frames.size(0); }
    int64_t frames_per_clip() const { return frames.size(1); }

    static TrainingData from(const std::vector<synth::SyntheticSample>& samples) {
        if (samples.empty()) fail(ErrorKind::usage, "training data: empty split");
        std::vector<torch::Tensor> fr, fl;
        std::vector<int64_t> acts;
        for (const auto& s : samples) {
            fr.push_back(s.frames);
            fl.push_back(s.flows);
            acts.push_back(s.instruction.action);
        }
        return {torch::stack(fr), torch::stack(fl), torch::tensor(acts, torch::kLong)};
    }

    TrainingData head(int64_t n) const {
        n = std::min(n, size());
        return {frames.slice(0, 0, n), flows.slice(0, 0, n), actions.slice(0, 0, n)};
    }
};

/// Adaptive-moment optimizer whose state lives in plain named tensors.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr) : params_(std::move(params)), lr_(lr) {
        for (const auto& [name, p] : params_) {
            m_[name] = torch::zeros_like(p);
            v_[name] = torch::zeros_like(p);
        }
    }

    void step() {
        torch::NoGradGuard ng;
        ++t_;
        const double bc1 = 1 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, p] : params_) {
            if (!p.grad().defined()) continue;
            const auto& g = p.grad();
            auto& m = m_.at(name);
            auto& v = v_.at(name);
            m.mul_(beta1_).add_(g, 1 - beta1_);
            v.mul_(beta2_).addcmul_(g, g, 1 - beta2_);
            p.addcdiv_(m / bc1, (v / bc2).sqrt_().add_(eps_), -lr_);
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_)
            if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
    }

    std::vector<torch::Tensor> tensors() const {
        std::vector<torch::Tensor> out;
        for (const auto& [n, p] : params_) out.push_back(p);
        return out;
    }

    const std::vector<std::pair<std::string, torch::Tensor>>& parameters() const { return params_; }

    void save(TensorArchive& ar) const {
        ar.put("train/adam/t", torch::tensor({t_}, torch::kLong));
        for (const auto& [name, p] : params_) {
            ar.put("train/adam/m/" + name, m_.at(name));
            ar.put("train/adam/v/" + name, v_.at(name));
        }
    }

    void load(const TensorArchive& ar) {
        t_ = ar.get("train/adam/t")[0].item<int64_t>();
        for (auto& [name, p] : params_) {
            m_[name] = ar.get("train/adam/m/" + name).clone();
            v_[name] = ar.get("train/adam/v/" + name).clone();
        }
    }

private:
    std::vector<std::pair<std::string, torch::Tensor>> params_;
    std::map<std::string, torch::Tensor> m_, v_;
    double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

class Trainer {
public:
    Trainer(StageConfig cfg, ckpt::ModelBundle mb, rewards::RewardBundle rb)
        : cfg_(std::move(cfg)), mb_(std::move(mb)), rb_(std::move(rb)), gen_(make_generator(cfg_.seed)) {
        cfg_.validate();
        configure_parameters();
    }

    const StageConfig& config() const { return cfg_; }
    ckpt::ModelBundle& bundle() { return mb_; }
    const rewards::RewardBundle& reward_bundle() const { return rb_; }
    int64_t step_count() const { return step_; }
    const std::vector<LossRecord>& trace() const { return trace_; }
    const std::vector<double>& eval_trace() const { return eval_trace_; }
    at::Generator& generator() { return gen_; }

    /// Number of scalar parameters the optimizer updates.
    int64_t trainable_parameter_count() const {
        int64_t n = 0;
        for (const auto& [name, p] : adam_.parameters()) n += p.numel();
        return n;
    }

    const Adam& optimizer() const { return adam_; }

    /// Draws a batch for the configured stage and takes one optimizer step.
    LossRecord step(const TrainingData& data) {
        const auto B = cfg_.batch, L = data.frames_per_clip();
        auto idx = torch::randint(data.size(), {B}, gen_, torch::kLong);
        auto frames = data.frames.index_select(0, idx);
        auto actions = data.actions.index_select(0, idx);
        switch (cfg_.stage) {
        case StageId::base: return training_step_base(frames);
        case StageId::s2: return training_step_stage2(frames, data.flows.index_select(0, idx), actions);
        default: {
            std::vector<torch::Tensor> x0, xs;
            for (int64_t b = 0; b < B; ++b) {
                const auto [i, j] = synth::sample_pair_indices(L, gen_);
                x0.push_back(frames[b][i]);
                xs.push_back(frames[b][j]);
            }
            return training_step_stage1(torch::stack(x0), torch::stack(xs), actions, cfg_.with_rewards);
        }
        }
    }

    /// Manipulation step on (x0, x*) pairs; the model runs frame-wise.
    LossRecord training_step_stage1(const torch::Tensor& x0, const torch::Tensor& xstar, const torch::Tensor& actions,
                                    bool with_rewards) {
        if (cfg_.temporal_enabled) fail(ErrorKind::usage, "stage 1 step requires temporal modules disabled");
        if (!mb_.model->has_adapter(kSpatialStage) || !mb_.model->adapters().at(kSpatialStage).trainable)
            fail(ErrorKind::usage, "stage 1 step requires trainable spatial-stage adapters");
        auto ctx = context(false);
        auto& model = mb_.model;
        auto z = mb_.codec.encode(xstar).unsqueeze(1);
        auto pack = model->build_conditioning(mb_.codec, x0, actions, CondMode::manipulation, 1, cfg_.drop_probability, gen_, ctx);
        LossRecord rec;
        auto loss = noise_term(z, pack, ctx, rec);
        if (with_rewards) {
            auto t = torch::randint(1, cfg_.reward_gamma + 1, {z.size(0)}, gen_, torch::kLong);
            auto eps = torch::randn(z.sizes(), gen_, z.options());
            auto zt = diffusion::forward_diffuse(z, t, eps, mb_.schedule);
            auto z0 = diffusion::one_step_denoise(zt, model->forward(zt, t, pack, ctx), t, mb_.schedule);
            auto terms = rewards::structure_reward(z0.squeeze(1), xstar, mb_.codec, rb_);
            rec.depth = terms.depth.item<double>();
            rec.edge = terms.edge.item<double>();
            loss = loss + cfg_.depth_weight * terms.depth + cfg_.edge_weight * terms.edge;
        }
        return finish(loss, rec);
    }

    /// Prediction step on whole clips with zero-padded first-frame conditioning.
    LossRecord training_step_stage2(const torch::Tensor& frames, const torch::Tensor& flows, const torch::Tensor& actions) {
        if (!cfg_.temporal_enabled) fail(ErrorKind::usage, "stage 2 step requires temporal modules enabled");
        if (!mb_.model->has_adapter(kTemporalStage) || !mb_.model->adapters().at(kTemporalStage).trainable)
            fail(ErrorKind::usage, "stage 2 step requires trainable temporal-stage adapters");
        auto ctx = context(true);
        auto& model = mb_.model;
        const auto L = frames.size(1);
        auto z = mb_.codec.encode(frames);
        auto x0 = frames.select(1, 0);
        auto pack = model->build_conditioning(mb_.codec, x0, actions, CondMode::prediction, L, cfg_.drop_probability, gen_, ctx);
        LossRecord rec;
        auto loss = noise_term(z, pack, ctx, rec);
        if (cfg_.motion_weight > 0) {
            auto t = torch::randint(1, cfg_.reward_gamma + 1, {z.size(0)}, gen_, torch::kLong);
            auto eps = torch::randn(z.sizes(), gen_, z.options());
            auto zt = diffusion::forward_diffuse(z, t, eps, mb_.schedule);
            auto z0 = diffusion::one_step_denoise(zt, model->forward(zt, t, pack, ctx), t, mb_.schedule);
            auto motion = rewards::motion_reward(z0, flows, rb_.floor);
            rec.motion = motion.item<double>();
            loss = loss + cfg_.motion_weight * motion;
        }
        return finish(loss, rec);
    }

    /// Instruction-agnostic backbone training: even steps denoise whole clips
    /// conditioned on a random frame repeated at every position; odd steps
    /// denoise single frames with temporal modules off.
    LossRecord training_step_base(const torch::Tensor& frames) {
        const auto B = frames.size(0), L = frames.size(1);
        const bool video = step_ % 2 == 0;
        auto ctx = context(video);
        auto& model = mb_.model;
        auto k = torch::randint(L, {B}, gen_, torch::kLong);
        auto ar = torch::arange(B);
        auto cond = mb_.codec.encode(frames.index({ar, k}));
        torch::Tensor z;
        if (video) {
            z = mb_.codec.encode(frames);
        } else {
            auto j = torch::randint(L, {B}, gen_, torch::kLong);
            z = mb_.codec.encode(frames.index({ar, j})).unsqueeze(1);
        }
        auto drop = torch::rand({B}, gen_, torch::kDouble) < cfg_.drop_probability;
        auto pack = model->assemble(cond, torch::zeros({B}, torch::kLong), CondMode::repeated, z.size(1), drop, ctx);
        pack.instruction = model->null_instruction.unsqueeze(0).expand({B, -1});
        LossRecord rec;
        auto loss = noise_term(z, pack, ctx, rec);
        return finish(loss, rec);
    }

    /// Deterministic held-out noise loss: fixed noise, timesteps and pairs.
    double evaluation_loss(const TrainingData& heldout, int64_t max_clips = 16) {
        torch::NoGradGuard ng;
        auto data = heldout.head(max_clips);
        auto gen = make_generator(cfg_.seed ^ 0x5eedULL);
        ForwardContext ctx;
        ctx.active = mb_.model->active_adapters();
        const auto N = data.size(), L = data.frames_per_clip();
        auto x0 = data.frames.select(1, 0);
        torch::Tensor z;
        model::ConditioningPack pack;
        auto none = torch::zeros({N}, torch::kBool);
        if (cfg_.stage == StageId::s1a || cfg_.stage == StageId::s1b) {
            ctx.temporal_enabled = false;
            z = mb_.codec.encode(data.frames.select(1, L - 1)).unsqueeze(1);
            pack = mb_.model->assemble(mb_.codec.encode(x0), data.actions, CondMode::manipulation, 1, none, ctx);
        } else {
            z = mb_.codec.encode(data.frames);
            const auto mode = cfg_.stage == StageId::base ? CondMode::repeated : CondMode::prediction;
            pack = mb_.model->assemble(mb_.codec.encode(x0), data.actions, mode, L, none, ctx);
            if (cfg_.stage == StageId::base) pack.instruction = mb_.model->null_instruction.unsqueeze(0).expand({N, -1});
        }
        auto t = torch::randint(1, mb_.schedule.steps + 1, {N}, gen, torch::kLong);
        auto eps = torch::randn(z.sizes(), gen, z.options());
        auto zt = diffusion::forward_diffuse(z, t, eps, mb_.schedule);
        return diffusion::noise_loss(mb_.model->forward(zt, t, pack, ctx), eps).item<double>();
    }

    void record_evaluation(const TrainingData& heldout) { eval_trace_.push_back(evaluation_loss(heldout)); }

    void save(TensorArchive& ar) const {
        ckpt::save_model(ar, mb_);
        ar.put_text("train/stage_config", cfg_.identity());
        ar.put("train/step", torch::tensor({step_}, torch::kLong));
        ar.put("train/rng", gen_.get_state());
        adam_.save(ar);
        auto tr = torch::zeros({static_cast<int64_t>(trace_.size()), 5}, torch::kDouble);
        for (size_t i = 0; i < trace_.size(); ++i) {
            const auto& r = trace_[i];
            const double row[5] = {r.noise, r.depth, r.edge, r.motion, r.total};
            for (int k = 0; k < 5; ++k) tr[static_cast<int64_t>(i)][k] = row[k];
        }
        ar.put("train/trace", tr);
        ar.put("train/eval", torch::tensor(eval_trace_, torch::kDouble));
    }

    /// Restores optimizer, RNG, counters and traces saved by `save`.
    void restore(const TensorArchive& ar) {
        if (!ar.contains("train/stage_config") || ar.text("train/stage_config") != cfg_.identity())
            fail(ErrorKind::prerequisite, "resume: checkpoint was produced under a different stage configuration");
        step_ = ar.get("train/step")[0].item<int64_t>();
        gen_.set_state(ar.get("train/rng"));
        adam_.load(ar);
        trace_.clear();
        const auto& tr = ar.get("train/trace");
        for (int64_t i = 0; i < tr.size(0); ++i)
            trace_.push_back({tr[i][0].item<double>(), tr[i][1].item<double>(), tr[i][2].item<double>(),
                              tr[i][3].item<double>(), tr[i][4].item<double>()});
        const auto& ev = ar.get("train/eval");
        eval_trace_.assign(ev.data_ptr<double>(), ev.data_ptr<double>() + ev.numel());
    }

private:
    ForwardContext context(bool temporal) {
        ForwardContext ctx;
        ctx.temporal_enabled = temporal;
        ctx.active = mb_.model->active_adapters();
        ctx.training = true;
        ctx.gen = &gen_;
        return ctx;
    }

    torch::Tensor noise_term(const torch::Tensor& z, const model::ConditioningPack& pack, const ForwardContext& ctx, LossRecord& rec) {
        auto t = torch::randint(1, mb_.schedule.steps + 1, {z.size(0)}, gen_, torch::kLong);
        auto eps = torch::randn(z.sizes(), gen_, z.options());
        auto zt = diffusion::forward_diffuse(z, t, eps, mb_.schedule);
        auto loss = diffusion::noise_loss(mb_.model->forward(zt, t, pack, ctx), eps);
        rec.noise = loss.item<double>();
        return cfg_.noise_weight * loss;
    }

    LossRecord finish(const torch::Tensor& loss, LossRecord rec) {
        rec.total = cfg_.noise_weight * rec.noise + cfg_.depth_weight * rec.depth + cfg_.edge_weight * rec.edge +
                    cfg_.motion_weight * rec.motion;
        if (!std::isfinite(loss.item<double>()) || !std::isfinite(rec.total))
            fail(ErrorKind::numeric, "non-finite loss at step " + std::to_string(step_) + " (noise " + std::to_string(rec.noise) +
                                         ", depth " + std::to_string(rec.depth) + ", edge " + std::to_string(rec.edge) +
                                         ", motion " + std::to_string(rec.motion) + ")");
        adam_.zero_grad();
        loss.backward();
        if (cfg_.grad_clip > 0) torch::nn::utils::clip_grad_norm_(adam_.tensors(), cfg_.grad_clip);
        adam_.step();
        ++step_;
        trace_.push_back(rec);
        return rec;
    }

    void configure_parameters() {
        auto& model = mb_.model;
        for (const auto& [name, st] : model->adapters()) {
            const bool train = std::count(cfg_.trainable_groups.begin(), cfg_.trainable_groups.end(), "adapter:" + name) > 0;
            model->set_adapter_trainable(name, train);
            model->set_adapter_active(name, true);
        }
        std::vector<std::pair<std::string, torch::Tensor>> params;
        for (auto& item : model->named_parameters()) {
            const auto group = model::parameter_group(item.key());
            const bool train = std::count(cfg_.trainable_groups.begin(), cfg_.trainable_groups.end(), group) > 0;
            item.value().set_requires_grad(train);
            if (train) params.emplace_back(item.key(), item.value());
        }
        if (params.empty()) fail(ErrorKind::usage, "stage " + stage_name(cfg_.stage) + ": no trainable parameters");
        adam_ = Adam(std::move(params), cfg_.lr);
    }

    StageConfig cfg_;
    ckpt::ModelBundle mb_;
    rewards::RewardBundle rb_;
    at::Generator gen_;
    Adam adam_;
    int64_t step_ = 0;
    std::vector<LossRecord> trace_;
    std::vector<double> eval_trace_;
};

/// Model-defining settings shared by every stage of one experiment.
struct ExperimentSetup {
    model::NetworkConfig network;
    int patch = 2;
    uint64_t codec_seed = 11;
    uint64_t model_seed = 5;
    int64_t diffusion_steps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    int64_t spatial_rank = 8;
    int64_t temporal_rank = 4;
    double adapter_dropout = 0.1;
    double adapter_scaling = 1.0;
    std::string fingerprint;
};

struct StageRun {
    std::optional<std::filesystem::path> init;       // prerequisite checkpoint
    std::optional<std::filesystem::path> resume;     // continue an interrupted run of this stage
    std::filesystem::path output;
    int64_t stop_after = -1;                         // save and return after this many steps
    std::function<void(int64_t, const LossRecord&)> on_step;
};

inline std::string required_init_stage(const StageConfig& cfg) {
    switch (cfg.stage) {
    case StageId::base: return "";
    case StageId::s1a: return "base";
    case StageId::s1b: return "1a";
    case StageId::s2: return cfg.skip_stage1 ? "base" : "1b";
    }
    return "";
}

/// Builds the model for a fresh run of `cfg.stage` from its prerequisite.
inline ckpt::ModelBundle initial_bundle(const StageConfig& cfg, const ExperimentSetup& setup, const StageRun& run,
                                        const TrainingData& train) {
    ckpt::ModelBundle mb;
    if (cfg.stage == StageId::base) {
        mb.codec = PatchCodec::random(setup.patch, setup.codec_seed);
        mb.codec.fit_whitening(train.frames.flatten(0, 1));
        auto net = setup.network;
        net.latent_channels = mb.codec.channels();
        mb.model = model::make_denoiser(net, setup.model_seed);
        mb.schedule = diffusion::make_linear_schedule(setup.diffusion_steps, setup.beta_min, setup.beta_max);
        mb.model->set_noise_levels(mb.schedule.alpha_bars);
        mb.beta_min = setup.beta_min;
        mb.beta_max = setup.beta_max;
    } else {
        const auto need = required_init_stage(cfg);
        if (!run.init || !std::filesystem::exists(*run.init))
            fail(ErrorKind::prerequisite, "stage " + stage_name(cfg.stage) + " requires a stage-" + need + " checkpoint");
        const auto ar = TensorArchive::load(*run.init);
        mb = ckpt::load_model(ar, run.init->string(), setup.fingerprint);
        if (mb.stage != need)
            fail(ErrorKind::prerequisite, "stage " + stage_name(cfg.stage) + " requires a stage-" + need +
                                              " checkpoint, got stage " + mb.stage);
        if (cfg.stage == StageId::s1a)
            mb.model->attach_adapters({kSpatialStage, setup.spatial_rank, setup.adapter_dropout, setup.adapter_scaling,
                                       mb.model->spatial_stage_targets()},
                                      setup.model_seed + 1);
        if (cfg.stage == StageId::s2)
            mb.model->attach_adapters({kTemporalStage, setup.temporal_rank, setup.adapter_dropout, setup.adapter_scaling,
                                       mb.model->temporal_stage_targets()},
                                      setup.model_seed + 2);
    }
    mb.stage = stage_name(cfg.stage);
    mb.fingerprint = setup.fingerprint;
    return mb;
}

struct StageResult {
    ckpt::ModelBundle bundle;
    std::vector<LossRecord> trace;
    std::vector<double> eval_trace;
    bool complete = false;
};

/// Runs (or resumes) one stage and writes its checkpoint to `run.output`.
inline StageResult run_stage(const StageConfig& cfg, const ExperimentSetup& setup, const StageRun& run,
                                   const TrainingData& train, const TrainingData& heldout, const rewards::RewardBundle& rb) {
    cfg.validate();
    if (cfg.stage == StageId::s1b && !rb.depth) fail(ErrorKind::prerequisite, "stage 1b requires the depth reward checkpoint");
    std::optional<Trainer> trainer;
    if (run.resume) {
        const auto ar = TensorArchive::load(*run.resume);
        auto mb = ckpt::load_model(ar, run.resume->string(), setup.fingerprint);
        if (mb.stage != stage_name(cfg.stage))
            fail(ErrorKind::prerequisite, "resume: checkpoint belongs to stage " + mb.stage);
        trainer.emplace(cfg, std::move(mb), rb);
        trainer->restore(ar);
    } else {
        trainer.emplace(cfg, initial_bundle(cfg, setup, run, train), rb);
    }
    while (trainer->step_count() < cfg.steps) {
        if (run.stop_after >= 0 && trainer->step_count() >= run.stop_after) break;
        const auto rec = trainer->step(train);
        if (run.on_step) run.on_step(trainer->step_count(), rec);
        if (cfg.eval_interval > 0 && trainer->step_count() % cfg.eval_interval == 0) trainer->record_evaluation(heldout);
    }
    TensorArchive ar;
    trainer->save(ar);
    ar.save(run.output);
    return {trainer->bundle(), trainer->trace(), trainer->eval_trace(), trainer->step_count() >= cfg.steps};
}

} // namespace showme::train
