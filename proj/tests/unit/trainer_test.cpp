#include "helpers.hpp"

using namespace showme;
using namespace showme::train;

namespace {

struct Chain {
    std::filesystem::path dir;
    ExperimentSetup setup = testutil::tiny_setup();
    TrainingData data = TrainingData::from(testutil::tiny_samples());
    rewards::RewardBundle rb;

    Chain() {
        dir = testutil::temp_dir("trainer");
        torch::manual_seed(17);
        rb.depth = rewards::DepthNet(8);
        for (auto& p : rb.depth->parameters()) p.set_requires_grad(false);
    }
    ~Chain() { std::filesystem::remove_all(dir); }

    StageConfig cfg(StageId id, int64_t steps = 3) {
        auto c = StageConfig::defaults(id);
        c.steps = steps;
        c.batch = 2;
        c.lr = 1e-3;
        c.seed = 40 + static_cast<uint64_t>(id);
        c.reward_gamma = id == StageId::s1b ? 20 : id == StageId::s2 ? 50 : 0;
        return c;
    }

    std::filesystem::path path(const std::string& stage) const { return dir / (stage + ".ckpt"); }

    StageResult run(StageId id, int64_t steps = 3) {
        const auto init = required_init_stage(cfg(id));
        StageRun r;
        if (!init.empty()) r.init = path(init);
        r.output = path(stage_name(id));
        return run_stage(cfg(id, steps), setup, r, data, data, rb);
    }

    /// Independent copy of a stage checkpoint's model.
    ckpt::ModelBundle load(const std::string& stage) const {
        return ckpt::load_model(TensorArchive::load(path(stage)), stage, setup.fingerprint);
    }

    /// Fresh trainer for `id`, built from the prerequisite checkpoint.
    Trainer trainer(StageId id, StageConfig c) {
        StageRun r;
        r.init = path(required_init_stage(c));
        return Trainer(c, initial_bundle(c, setup, r, data), rb);
    }
};

std::map<std::string, torch::Tensor> changed(const std::map<std::string, torch::Tensor>& before, torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& item : m.named_parameters())
        if (!torch::equal(before.at(item.key()), item.value())) out[item.key()] = item.value();
    return out;
}

Chain& shared_chain() {
    static Chain c;
    static const bool ready = [] {
        c.run(StageId::base);
        c.run(StageId::s1a);
        c.run(StageId::s1b);
        return true;
    }();
    (void)ready;
    return c;
}

} // namespace

TEST(StageConfig, Validation) {
    auto c = StageConfig::defaults(StageId::s1a);
    c.temporal_enabled = true;
    EXPECT_EQ(testutil::error_kind([&] { c.validate(); }), ErrorKind::usage);
    auto s2 = StageConfig::defaults(StageId::s2);
    s2.frozen_adapters.clear();
    EXPECT_EQ(testutil::error_kind([&] { s2.validate(); }), ErrorKind::usage);
    s2.skip_stage1 = true;
    EXPECT_NO_THROW(s2.validate());
    EXPECT_EQ(testutil::error_kind([] { parse_stage("3"); }), ErrorKind::usage);
    EXPECT_EQ(parse_stage("1b"), StageId::s1b);
    auto a = StageConfig::defaults(StageId::s1b), b = a;
    b.steps = 999;
    EXPECT_EQ(a.identity(), b.identity());
    b.lr = 3e-4;
    EXPECT_NE(a.identity(), b.identity());
}

TEST(Adam, MatchesLibraryOptimizer) {
    auto gen = make_generator(3);
    auto p0 = torch::randn({4, 3}, gen, torch::kDouble);
    auto mine = p0.clone().requires_grad_(true), ref = p0.clone().requires_grad_(true);
    Adam adam({{"p", mine}}, 0.01);
    torch::optim::Adam lib({ref}, torch::optim::AdamOptions(0.01));
    for (int k = 0; k < 5; ++k) {
        auto g = torch::randn({4, 3}, gen, torch::kDouble);
        adam.zero_grad();
        lib.zero_grad();
        (mine * g).sum().backward();
        (ref * g).sum().backward();
        adam.step();
        lib.step();
    }
    EXPECT_LE(testutil::max_abs_diff(mine, ref), 1e-12);
}

TEST(Trainer, Stage1UpdatesOnlySpatialAdapters) {
    auto& ch = shared_chain();
    auto tr = ch.trainer(StageId::s1a, ch.cfg(StageId::s1a));
    auto& model = tr.bundle().model;
    auto before = testutil::snapshot(*model);
    auto rec = tr.step(ch.data);
    EXPECT_EQ(rec.depth, 0.0);
    EXPECT_EQ(rec.edge, 0.0);
    EXPECT_EQ(rec.motion, 0.0);
    auto diff = changed(before, *model);
    EXPECT_FALSE(diff.empty());
    for (const auto& [name, t] : diff) EXPECT_EQ(model::parameter_group(name), "adapter:spatial-stage") << name;
    for (const auto& item : model->named_parameters())
        if (model::parameter_group(item.key()) != "adapter:spatial-stage") {
            EXPECT_FALSE(item.value().requires_grad()) << item.key();
            EXPECT_FALSE(item.value().grad().defined()) << item.key();
        }
    int64_t adapter_scalars = 0;
    for (auto& p : model->adapter_parameters(kSpatialStage)) adapter_scalars += p.numel();
    EXPECT_EQ(tr.trainable_parameter_count(), adapter_scalars);
}

TEST(Trainer, FixedSeedReproducesTrace) {
    auto& ch = shared_chain();
    auto c = ch.cfg(StageId::s1a, 50);
    auto a = ch.trainer(StageId::s1a, c), b = ch.trainer(StageId::s1a, c);
    for (int k = 0; k < 50; ++k) {
        a.step(ch.data);
        b.step(ch.data);
    }
    ASSERT_EQ(a.trace().size(), 50u);
    EXPECT_TRUE(a.trace() == b.trace());
    for (const auto& r : a.trace()) EXPECT_NEAR(r.total, r.noise, 1e-10);
}

TEST(Trainer, Stage1bRecordsRewardsAndLeavesRewardModelsAlone) {
    auto& ch = shared_chain();
    auto depth_before = testutil::snapshot(*ch.rb.depth);
    auto c = ch.cfg(StageId::s1b);
    c.depth_weight = 0.7;
    c.edge_weight = 1.3;
    auto tr = ch.trainer(StageId::s1b, c);
    for (int k = 0; k < 3; ++k) {
        auto r = tr.step(ch.data);
        EXPECT_GT(r.depth, 0.0);
        EXPECT_GT(r.edge, 0.0);
        EXPECT_NEAR(r.total, r.noise + 0.7 * r.depth + 1.3 * r.edge, 1e-10);
    }
    EXPECT_TRUE(changed(depth_before, *ch.rb.depth).empty());
}

TEST(Trainer, Stage2KeepsSpatialAdaptersFrozen) {
    auto& ch = shared_chain();
    auto c = ch.cfg(StageId::s2);
    auto tr = ch.trainer(StageId::s2, c);
    auto& model = tr.bundle().model;
    auto before = testutil::snapshot(*model);
    for (int k = 0; k < 100; ++k) {
        auto r = tr.step(ch.data);
        EXPECT_NEAR(r.total, r.noise + c.motion_weight * r.motion, 1e-10);
    }
    auto diff = changed(before, *model);
    EXPECT_FALSE(diff.empty());
    for (const auto& [name, t] : diff) EXPECT_EQ(model::parameter_group(name), "adapter:temporal-stage") << name;
    EXPECT_TRUE(model->adapters().at(kSpatialStage).active);
}

TEST(Trainer, Stage2WithoutMotionWeightSkipsTheTerm) {
    auto& ch = shared_chain();
    auto c = ch.cfg(StageId::s2);
    c.motion_weight = 0;
    auto tr = ch.trainer(StageId::s2, c);
    for (int k = 0; k < 3; ++k) {
        auto r = tr.step(ch.data);
        EXPECT_EQ(r.motion, 0.0);
        EXPECT_EQ(r.total, r.noise);
    }
}

TEST(Trainer, BaseStageTrainsBackboneOnly) {
    auto& ch = shared_chain();
    auto mb = ch.load("base");
    auto before = testutil::snapshot(*mb.model);
    Trainer tr(ch.cfg(StageId::base), mb, ch.rb);
    tr.step(ch.data);
    tr.step(ch.data);
    for (const auto& [name, t] : changed(before, *mb.model)) EXPECT_NE(model::parameter_group(name).rfind("adapter:", 0), 0u);
}

TEST(RunStage, MissingOrWrongPrerequisite) {
    auto& ch = shared_chain();
    StageRun r;
    r.output = ch.dir / "x.ckpt";
    EXPECT_EQ(testutil::error_kind([&] { run_stage(ch.cfg(StageId::s2), ch.setup, r, ch.data, ch.data, ch.rb); }), ErrorKind::prerequisite);
    r.init = ch.path("base");
    EXPECT_EQ(testutil::error_kind([&] { run_stage(ch.cfg(StageId::s1b), ch.setup, r, ch.data, ch.data, ch.rb); }), ErrorKind::prerequisite);
    auto other = ch.setup;
    other.fingerprint = "different";
    r.init = ch.path("1a");
    EXPECT_EQ(testutil::error_kind([&] { run_stage(ch.cfg(StageId::s1b), other, r, ch.data, ch.data, ch.rb); }), ErrorKind::prerequisite);
    auto no_depth = ch.rb;
    no_depth.depth = nullptr;
    EXPECT_EQ(testutil::error_kind([&] { run_stage(ch.cfg(StageId::s1b), ch.setup, r, ch.data, ch.data, no_depth); }), ErrorKind::prerequisite);
    EXPECT_FALSE(std::filesystem::exists(r.output));
}

TEST(RunStage, ResumeMatchesUninterruptedRun) {
    auto& ch = shared_chain();
    auto c = ch.cfg(StageId::s1a, 10);
    c.eval_interval = 5;
    StageRun straight;
    straight.init = ch.path("base");
    straight.output = ch.dir / "straight.ckpt";
    auto full = run_stage(c, ch.setup, straight, ch.data, ch.data, ch.rb);
    EXPECT_TRUE(full.complete);
    EXPECT_EQ(full.eval_trace.size(), 2u);

    StageRun first = straight;
    first.output = ch.dir / "partial.ckpt";
    first.stop_after = 4;
    auto part = run_stage(c, ch.setup, first, ch.data, ch.data, ch.rb);
    EXPECT_FALSE(part.complete);
    EXPECT_EQ(part.trace.size(), 4u);
    StageRun second;
    second.resume = first.output;
    second.output = ch.dir / "resumed.ckpt";
    run_stage(c, ch.setup, second, ch.data, ch.data, ch.rb);
    EXPECT_EQ(TensorArchive::read_file(straight.output), TensorArchive::read_file(second.output));

    auto changed_cfg = c;
    changed_cfg.lr = 5e-4;
    EXPECT_EQ(testutil::error_kind([&] { run_stage(changed_cfg, ch.setup, second, ch.data, ch.data, ch.rb); }), ErrorKind::prerequisite);
}

TEST(RunStage, CheckpointReproducesEvaluationLoss) {
    auto& ch = shared_chain();
    auto c = ch.cfg(StageId::s1b);
    StageRun r;
    r.init = ch.path("1a");
    r.output = ch.dir / "eval.ckpt";
    auto res = run_stage(c, ch.setup, r, ch.data, ch.data, ch.rb);
    Trainer live(c, res.bundle, ch.rb);
    Trainer loaded(c, ckpt::load_model(TensorArchive::load(r.output), "eval", ch.setup.fingerprint), ch.rb);
    EXPECT_NEAR(live.evaluation_loss(ch.data), loaded.evaluation_loss(ch.data), 1e-6);
}
