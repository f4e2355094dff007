#include "helpers.hpp"

using namespace showme;

namespace {

// Loop-based space-to-depth: channel index c*p*p + dy*p + dx.
torch::Tensor oracle_unshuffle(const torch::Tensor& x, int p) {
    const auto H = x.size(1), W = x.size(2);
    auto out = torch::zeros({3 * p * p, H / p, W / p}, torch::kDouble);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                out[c * p * p + (y % p) * p + (xx % p)][y / p][xx / p] = x[c][y][xx].item<double>();
    return out;
}

PatchCodec whitened(int p, uint64_t seed) {
    auto codec = PatchCodec::random(p, seed);
    auto gen = make_generator(seed + 1);
    codec = PatchCodec(p, codec.mixing(), torch::rand({3 * p * p}, gen, torch::kDouble) + 0.5,
                       torch::randn({3 * p * p}, gen, torch::kDouble));
    return codec;
}

} // namespace

TEST(Codec, MixingIsOrthonormal) {
    for (int p : {1, 2, 4}) {
        auto m = PatchCodec::random(p, 11).mixing();
        EXPECT_LE(testutil::max_abs_diff(m.t().matmul(m), torch::eye(m.size(0), torch::kDouble)), 1e-6);
    }
}

TEST(Codec, EncodeMatchesLoopOracle) {
    auto codec = whitened(2, 4);
    auto x = torch::rand({3, 6, 8}, torch::kDouble);
    auto y = oracle_unshuffle(x, 2);
    auto z = codec.encode(x);
    const auto C = codec.channels();
    for (int64_t k = 0; k < C; ++k)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 4; ++j) {
                double acc = 0;
                for (int64_t c = 0; c < C; ++c) acc += codec.mixing()[k][c].item<double>() * y[c][i][j].item<double>();
                const double expect = (acc - codec.shift()[k].item<double>()) / codec.scale()[k].item<double>();
                ASSERT_NEAR(z[k][i][j].item<double>(), expect, 1e-12);
            }
}

TEST(Codec, RoundTrip) {
    auto codec = whitened(4, 2);
    auto x = torch::rand({5, 3, 32, 32});
    EXPECT_LE(testutil::max_abs_diff(codec.decode(codec.encode(x)), x), 1e-5);
    auto z = torch::randn({2, codec.channels(), 8, 8}, torch::kDouble);
    EXPECT_LE(testutil::max_abs_diff(codec.encode(codec.decode(z)), z), 1e-10);
}

TEST(Codec, IdentityCodecWithUnitPatch) {
    PatchCodec id(1, torch::eye(3, torch::kDouble), torch::ones({3}, torch::kDouble), torch::zeros({3}, torch::kDouble));
    auto x = torch::rand({2, 3, 5, 7});
    EXPECT_TRUE(torch::equal(id.encode(x), x));
    EXPECT_TRUE(torch::equal(id.decode(x), x));
}

TEST(Codec, ZeroFrameWithZeroShiftEncodesToZero) {
    auto codec = PatchCodec::random(2, 3);
    auto z = codec.encode(torch::zeros({3, 8, 8}));
    EXPECT_EQ(z.abs().max().item<float>(), 0.0f);
}

TEST(Codec, LinearWithoutShift) {
    auto codec = PatchCodec::random(2, 3);
    auto a = torch::rand({3, 8, 8}, torch::kDouble), b = torch::rand({3, 8, 8}, torch::kDouble);
    EXPECT_LE(testutil::max_abs_diff(codec.encode(2.5 * a - 0.75 * b), 2.5 * codec.encode(a) - 0.75 * codec.encode(b)), 1e-12);
}

TEST(Codec, DecodeGradientMatchesFiniteDifferences) {
    auto codec = whitened(2, 8);
    auto z = torch::randn({codec.channels(), 3, 3}, torch::kDouble).requires_grad_(true);
    auto w = torch::randn({3, 6, 6}, torch::kDouble);
    (codec.decode(z) * w).sum().backward();
    auto grad = z.grad();
    const double h = 1e-3;
    auto zd = z.detach();
    for (int64_t k = 0; k < zd.numel(); k += 5) {
        auto e = torch::zeros_like(zd).flatten();
        e[k] = h;
        e = e.view_as(zd);
        const double fp = (codec.decode(zd + e) * w).sum().item<double>();
        const double fm = (codec.decode(zd - e) * w).sum().item<double>();
        const double fd = (fp - fm) / (2 * h);
        const double g = grad.flatten()[k].item<double>();
        EXPECT_LE(std::abs(fd - g), 1e-4 * std::max(1.0, std::abs(g)));
    }
}

TEST(Codec, ClipIsFrameWise) {
    auto codec = whitened(2, 5);
    auto clip = torch::rand({4, 3, 8, 8});
    auto z = codec.encode_clip(clip);
    for (int i = 0; i < 4; ++i) EXPECT_TRUE(torch::equal(z[i], codec.encode(clip[i])));
    auto perm = torch::tensor({2, 0, 3, 1}, torch::kLong);
    EXPECT_TRUE(torch::equal(codec.encode_clip(clip.index_select(0, perm)), z.index_select(0, perm)));
    auto one = clip.narrow(0, 0, 1);
    EXPECT_TRUE(torch::equal(codec.encode_clip(one)[0], codec.encode(clip[0])));
    auto longer = torch::rand({12, 3, 8, 8});
    EXPECT_LE(testutil::max_abs_diff(codec.decode_clip(codec.encode_clip(longer)), longer), 1e-5);
}

TEST(Codec, WhiteningStandardizesLatents) {
    auto codec = PatchCodec::random(2, 6);
    auto frames = torch::rand({16, 3, 8, 8}, torch::kDouble) * 0.3 + 0.2;
    codec.fit_whitening(frames);
    auto z = codec.encode(frames).transpose(0, 1).reshape({codec.channels(), -1});
    EXPECT_LE(z.mean(1).abs().max().item<double>(), 1e-10);
    EXPECT_LE((z.std(1, false) - 1).abs().max().item<double>(), 1e-10);
}

TEST(Codec, ShapeErrors) {
    auto codec = PatchCodec::random(4, 1);
    EXPECT_EQ(testutil::error_kind([&] { codec.encode(torch::zeros({3, 30, 32})); }), ErrorKind::shape);
    EXPECT_EQ(testutil::error_kind([&] { codec.encode(torch::zeros({4, 32, 32})); }), ErrorKind::shape);
    EXPECT_EQ(testutil::error_kind([&] { codec.decode(torch::zeros({47, 8, 8})); }), ErrorKind::shape);
    EXPECT_EQ(testutil::error_kind([&] {
        PatchCodec(2, torch::eye(12, torch::kDouble), -torch::ones({12}, torch::kDouble), torch::zeros({12}, torch::kDouble));
    }), ErrorKind::usage);
}

TEST(Codec, SaveLoadRoundTrip) {
    auto codec = whitened(2, 9);
    TensorArchive ar;
    codec.save(ar);
    auto back = PatchCodec::load(TensorArchive::deserialize(ar.serialize(), "mem"));
    auto x = torch::rand({3, 8, 8});
    EXPECT_TRUE(torch::equal(back.encode(x), codec.encode(x)));
}
