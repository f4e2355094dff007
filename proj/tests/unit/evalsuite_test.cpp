#include "helpers.hpp"

#include <Eigen/Dense>

using namespace showme;
using namespace showme::eval;

namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
    auto c = t.to(torch::kDouble).contiguous();
    Eigen::MatrixXd m(c.size(0), c.size(1));
    for (int64_t i = 0; i < c.size(0); ++i)
        for (int64_t j = 0; j < c.size(1); ++j) m(i, j) = c[i][j].item<double>();
    return m;
}

// Textbook form: tr(Sa Sb)^{1/2} as the sum of square roots of the eigenvalues of Sa Sb.
double frechet_oracle(const torch::Tensor& a, const torch::Tensor& b, double lambda) {
    auto A = to_eigen(a), B = to_eigen(b);
    const auto d = A.cols();
    Eigen::RowVectorXd ma = A.colwise().mean(), mb = B.colwise().mean();
    Eigen::MatrixXd ca = A.rowwise() - ma, cb = B.rowwise() - mb;
    Eigen::MatrixXd sa = ca.transpose() * ca / static_cast<double>(A.rows() - 1) + lambda * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd sb = cb.transpose() * cb / static_cast<double>(B.rows() - 1) + lambda * Eigen::MatrixXd::Identity(d, d);
    Eigen::EigenSolver<Eigen::MatrixXd> es(sa * sb);
    double tr = 0;
    for (int i = 0; i < d; ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
    return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2 * tr;
}

FeatureEncoder random_encoder(uint64_t seed) {
    torch::manual_seed(seed);
    FeatureEncoder enc;
    for (auto& p : enc->parameters()) p.set_requires_grad(false);
    enc->eval();
    return enc;
}

struct TestSet {
    train::TrainingData data = train::TrainingData::from(data::generate_split(24, 31, 16, 16, 4));
};

const TestSet& test_set() {
    static TestSet t;
    return t;
}

} // namespace

TEST(Frechet, IdenticalSetsScoreZero) {
    auto a = torch::randn({64, 5}, torch::kDouble);
    EXPECT_LE(frechet_distance(a, a), 1e-8);
}

TEST(Frechet, MeanShiftGivesSquaredNorm) {
    auto a = torch::randn({50, 4}, torch::kDouble);
    auto delta = torch::tensor({1.0, -2.0, 0.5, 3.0}, torch::kDouble);
    EXPECT_NEAR(frechet_distance(a, a + delta), 1.0 + 4.0 + 0.25 + 9.0, 1e-6);
}

TEST(Frechet, MatchesEigenOracle) {
    auto gen = make_generator(12);
    for (int k = 0; k < 5; ++k) {
        auto mix_a = torch::randn({4, 4}, gen, torch::kDouble), mix_b = torch::randn({4, 4}, gen, torch::kDouble);
        auto a = torch::randn({80, 4}, gen, torch::kDouble).matmul(mix_a);
        auto b = torch::randn({60, 4}, gen, torch::kDouble).matmul(mix_b) + 0.3;
        EXPECT_NEAR(frechet_distance(a, b), frechet_oracle(a, b, 1e-6), 1e-6);
        EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-8);
        EXPECT_NEAR(frechet_distance(a, b, 0.0), frechet_oracle(a, b, 0.0), 1e-6);
    }
}

TEST(Frechet, DegenerateCovarianceNeedsRegularization) {
    auto a = torch::randn({10, 3}, torch::kDouble);
    a.select(1, 2).zero_();
    EXPECT_EQ(testutil::error_kind([&] { frechet_distance(a, a, 0.0); }), ErrorKind::numeric);
    EXPECT_GE(frechet_distance(a, a, 1e-6), 0.0);
    EXPECT_EQ(testutil::error_kind([&] { frechet_distance(a, torch::randn({10, 4})); }), ErrorKind::shape);
}

TEST(Psnr, Cases) {
    auto a = torch::rand({3, 8, 8}, torch::kDouble);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    auto b = a + 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    auto c = torch::rand({3, 8, 8}, torch::kDouble);
    double mse = 0;
    for (int i = 0; i < 3; ++i)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) mse += std::pow(a[i][y][x].item<double>() - c[i][y][x].item<double>(), 2);
    mse /= 192;
    EXPECT_NEAR(psnr(a, c), 10 * std::log10(1 / mse), 1e-9);
}

TEST(ContextSimilarity, Cases) {
    auto enc = random_encoder(2);
    auto x = torch::rand({3, 3, 16, 16});
    auto same = context_similarity(enc, x, x);
    EXPECT_LE((same - 1.0).abs().max().item<double>(), 1e-6);
    auto e = torch::randn({4, 6}, torch::kDouble);
    EXPECT_LE((cosine(e, -e) + 1.0).abs().max().item<double>(), 1e-12);
    auto f = torch::randn({4, 6}, torch::kDouble);
    auto c = cosine(e, f);
    for (int i = 0; i < 4; ++i) {
        double dot = 0, na = 0, nb = 0;
        for (int j = 0; j < 6; ++j) {
            const double u = e[i][j].item<double>(), v = f[i][j].item<double>();
            dot += u * v, na += u * u, nb += v * v;
        }
        EXPECT_NEAR(c[i].item<double>(), dot / std::sqrt(na * nb), 1e-8);
    }
    EXPECT_EQ(testutil::error_kind([&] { cosine(torch::zeros({1, 6}), torch::ones({1, 6})); }), ErrorKind::numeric);
}

TEST(MotionScore, Components) {
    auto full = motion_score_from_magnitudes({1.0, 1.0, 1.0}, 1.0);
    EXPECT_DOUBLE_EQ(full.dynamic, 1.0);
    EXPECT_DOUBLE_EQ(full.smoothness, 1.0);
    EXPECT_DOUBLE_EQ(full.score, 1.0);
    EXPECT_DOUBLE_EQ(harmonic_mean(0.5, 1.0), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(harmonic_mean(0.0, 1.0), 0.0);
    auto still = torch::ones({5, 3, 8, 8}) * 0.4;
    EXPECT_EQ(motion_score_frames(still, 0.02).score, 0.0);
    EXPECT_EQ(motion_score_flows(torch::zeros({4, 2, 8, 8}), 1.0).score, 0.0);
    EXPECT_EQ(testutil::error_kind([] { motion_score_frames(torch::zeros({2, 3, 4, 4}), 0.02); }), ErrorKind::usage);
    EXPECT_EQ(testutil::error_kind([] { motion_score_from_magnitudes({1.0}, 1.0); }), ErrorKind::usage);
}

TEST(MotionScore, ConstantFlowIsSmoothAndDynamic) {
    auto flows = torch::zeros({4, 2, 8, 8}, torch::kDouble);
    flows.select(1, 0).fill_(2.0);
    auto s = motion_score_flows(flows, 1.0);
    EXPECT_DOUBLE_EQ(s.score, 1.0);
    // One jerky step lowers smoothness only.
    flows[2].select(0, 0).fill_(2.5);
    auto j = motion_score_flows(flows, 1.0);
    EXPECT_DOUBLE_EQ(j.dynamic, 1.0);
    EXPECT_NEAR(j.smoothness, 1.0 - (0.5 + 0.5) / 3.0, 1e-12);
}

TEST(Filter, CandidatesAreTheLastFramesAfterTheFirst) {
    EXPECT_EQ(filter_candidates(20), (std::vector<int64_t>{12, 13, 14, 15, 16, 17, 18, 19}));
    EXPECT_EQ(filter_candidates(5), (std::vector<int64_t>{1, 2, 3, 4}));
    EXPECT_EQ(filter_candidates(2), (std::vector<int64_t>{1}));
    EXPECT_EQ(filter_candidates(20, 2), (std::vector<int64_t>{5, 7, 9, 11, 13, 15, 17, 19}));
    EXPECT_EQ(testutil::error_kind([] { filter_candidates(1); }), ErrorKind::usage);
    EXPECT_EQ(testutil::error_kind([] { filter_candidates(5, 0); }), ErrorKind::usage);
}

TEST(Filter, CombinedScoreAndThreshold) {
    auto r = dual_similarity_filter(3, [](int64_t) { return 0.5; }, [](int64_t) { return 0.4; });
    EXPECT_TRUE(r.kept);
    EXPECT_DOUBLE_EQ(r.score, 0.2);
    auto low = dual_similarity_filter(6, [](int64_t i) { return 0.01 * static_cast<double>(i); }, [](int64_t) { return 0.5; });
    EXPECT_FALSE(low.kept);
    EXPECT_EQ(low.index, 5);
    auto edge = dual_similarity_filter(4, [](int64_t) { return 0.25; }, [](int64_t) { return 0.4; });
    EXPECT_TRUE(edge.kept);  // exactly 0.1
}

TEST(Filter, TiesGoToTheEarliestFrame) {
    auto r = dual_similarity_filter(6, [](int64_t i) { return i == 2 || i == 4 ? 0.9 : 0.1; }, [](int64_t) { return 1.0; });
    EXPECT_EQ(r.index, 2);
}

TEST(Filter, ArgmaxInvariantUnderIncreasingTransform) {
    auto gen = make_generator(4);
    auto sem = torch::rand({12}, gen, torch::kDouble), vis = torch::rand({12}, gen, torch::kDouble);
    auto s = [&](int64_t i) { return sem[i].item<double>(); };
    auto v = [&](int64_t i) { return vis[i].item<double>(); };
    auto a = dual_similarity_filter(12, s, v, 0.0);
    auto b = dual_similarity_filter(12, [&](int64_t i) { return s(i) * s(i); }, [&](int64_t i) { return v(i) * v(i); }, 0.0);
    EXPECT_EQ(a.index, b.index);
    double best = -1;
    int64_t arg = -1;
    for (int64_t i = 4; i < 12; ++i)
        if (s(i) * v(i) > best) best = s(i) * v(i), arg = i;
    EXPECT_EQ(a.index, arg);
}

TEST(Filter, CurateClipThresholdEndpoints) {
    auto enc = random_encoder(3);
    const auto& ts = test_set().data;
    for (int64_t i = 0; i < 4; ++i) {
        EXPECT_TRUE(curate_clip(enc, ts.frames[i], ts.actions[i].item<int64_t>(), 0.0).kept);
        auto r = curate_clip(enc, ts.frames[i], ts.actions[i].item<int64_t>(), 1.01);
        EXPECT_FALSE(r.kept);
        EXPECT_GE(r.index, 1);
        EXPECT_LE(r.score, 1.0);
    }
}

TEST(Report, KeyValuesRoundTrip) {
    MetricReport r;
    r.task = "manipulation";
    r.count = 3;
    r.fingerprint = "abc";
    r.checkpoint_hash = "0123";
    r.set("psnr", 21.123456789012345);
    r.set("frechet", 1.0 / 3.0);
    auto back = MetricReport::parse_key_values(r.key_values());
    EXPECT_EQ(back.task, r.task);
    EXPECT_EQ(back.count, 3);
    EXPECT_EQ(back.checkpoint_hash, "0123");
    EXPECT_EQ(back.values, r.values);
    EXPECT_EQ(testutil::error_kind([&] { r.set("bad", std::nan("")); }), ErrorKind::numeric);
    EXPECT_EQ(testutil::error_kind([&] { r.at("missing"); }), ErrorKind::usage);
    MetricReport empty;
    EXPECT_EQ(testutil::error_kind([&] { empty.write("/tmp/never"); }), ErrorKind::usage);
}

TEST(Manipulation, OracleGeneratorScoresPerfectly) {
    EvalContext ec{random_encoder(5), rewards::DepthNet(8)};
    const auto& ts = test_set().data;
    auto oracle = [&](const torch::Tensor&, const torch::Tensor&) { return ts.frames.select(1, 3); };
    auto r = evaluate_manipulation(oracle, ts, ec);
    EXPECT_EQ(r.at("psnr"), kPsnrCap);
    EXPECT_LE(r.at("frechet"), 1e-4);
    EXPECT_NEAR(r.at("context_similarity"), 1.0, 1e-6);
    EXPECT_LE(r.at("depth_l1"), 1e-4);
    EXPECT_LE(r.at("edge_l1"), 1e-4);
    auto again = evaluate_manipulation(oracle, ts, ec);
    EXPECT_EQ(again.key_values(), r.key_values());
}

TEST(Manipulation, IdentityGeneratorMissesTheStructure) {
    EvalContext ec{random_encoder(5), rewards::DepthNet(8)};
    const auto& ts = test_set().data;
    auto identity = [](const torch::Tensor& x0, const torch::Tensor&) { return x0; };
    auto r = evaluate_manipulation(identity, ts, ec);
    EXPECT_GT(r.at("depth_l1"), 0.0);
    EXPECT_GT(r.at("edge_l1"), 0.0);
    EXPECT_LT(r.at("psnr"), kPsnrCap);
    for (int64_t i = 0; i < ts.size(); ++i) {
        const auto a = static_cast<synth::Action>(ts.actions[i].item<int64_t>());
        if (a == synth::Action::recolor) continue;
        auto e0 = synth::analytic_edges(ts.frames[i][0]), e1 = synth::analytic_edges(ts.frames[i][3]);
        EXPECT_GT((e0 - e1).abs().mean().item<float>(), 0.0f) << synth::action_name(a);
    }
    EvalContext missing;
    EXPECT_EQ(testutil::error_kind([&] { evaluate_manipulation(identity, ts, missing); }), ErrorKind::prerequisite);
}

TEST(Prediction, OracleAndStaticClips) {
    EvalContext ec{random_encoder(6), rewards::DepthNet(8)};
    const auto& ts = test_set().data;
    auto codec = PatchCodec::random(2, 7);
    auto oracle = [&](const torch::Tensor&, const torch::Tensor&) { return ts.frames; };
    auto still = [&](const torch::Tensor& x0, const torch::Tensor&) { return x0.unsqueeze(1).expand_as(ts.frames).contiguous(); };
    auto ro = evaluate_prediction(oracle, ts, codec, ec);
    auto rs = evaluate_prediction(still, ts, codec, ec);
    EXPECT_LE(ro.at("fvd_proxy"), 1e-4);
    EXPECT_LE(ro.at("fid_proxy"), 1e-4);
    EXPECT_NEAR(ro.at("goal_similarity"), 1.0, 1e-6);
    EXPECT_GT(ro.at("motion_score"), 0.0);
    EXPECT_EQ(rs.at("motion_score"), 0.0);
    EXPECT_GT(rs.at("fvd_proxy"), ro.at("fvd_proxy"));
    // Latent change sits where colour changes, flow where the object moves, so
    // even the ground truth keeps a positive divergence.
    EXPECT_GT(ro.at("motion_kl"), 0.1);
    EXPECT_GE(rs.at("motion_kl"), 0.0);
    EXPECT_EQ(evaluate_prediction(oracle, ts, codec, ec).key_values(), ro.key_values());
}

TEST(Encoder, SaveLoadRoundTrip) {
    auto enc = random_encoder(8);
    TensorArchive ar;
    save_encoder(ar, enc, "fp");
    auto back = load_encoder(TensorArchive::deserialize(ar.serialize(), "m"), "m", "fp");
    auto x = torch::rand({2, 3, 16, 16});
    torch::NoGradGuard ng;
    EXPECT_TRUE(torch::equal(back->embed(x), enc->embed(x)));
    EXPECT_EQ(testutil::error_kind([&] { load_encoder(ar, "m", "zz"); }), ErrorKind::prerequisite);
}

TEST(Encoder, TrainingIsSeededAndFreezes) {
    auto samples = data::generate_split(24, 41, 16, 16, 3);
    auto a = random_encoder(9), b = random_encoder(9);
    train_feature_encoder(a, samples, {10, 8, 2e-3, 1});
    train_feature_encoder(b, samples, {10, 8, 2e-3, 1});
    auto pa = a->parameters(), pb = b->parameters();
    for (size_t i = 0; i < pa.size(); ++i) {
        EXPECT_TRUE(torch::equal(pa[i], pb[i]));
        EXPECT_FALSE(pa[i].requires_grad());
    }
}
