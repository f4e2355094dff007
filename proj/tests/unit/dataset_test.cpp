#include "helpers.hpp"

using namespace showme;

namespace {

void expect_same(const synth::SyntheticSample& a, const synth::SyntheticSample& b) {
    EXPECT_TRUE(torch::equal(a.frames, b.frames));
    EXPECT_TRUE(torch::equal(a.depth, b.depth));
    EXPECT_TRUE(torch::equal(a.edges, b.edges));
    EXPECT_TRUE(torch::equal(a.flows, b.flows));
    EXPECT_EQ(a.instruction, b.instruction);
    EXPECT_EQ(a.scene, b.scene);
}

} // namespace

TEST(Dataset, RoundTripIsExact) {
    auto dir = testutil::temp_dir("ds-roundtrip");
    auto split = data::generate_split(8, 21, 16, 16, 4);
    data::write_dataset(split, dir);
    auto back = data::read_dataset(dir);
    ASSERT_EQ(back.size(), split.size());
    for (size_t i = 0; i < split.size(); ++i) expect_same(split[i], back[i]);
    std::filesystem::remove_all(dir);
}

TEST(Dataset, ManifestCountMatchesFiles) {
    auto dir = testutil::temp_dir("ds-count");
    auto split = data::generate_split(100, 3, 12, 12, 2);
    data::write_dataset(split, dir);
    auto manifest = data::read_manifest(dir);
    EXPECT_EQ(manifest.size(), 100u);
    size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".bin";
    EXPECT_EQ(files, 100u);
    for (size_t i = 0; i < manifest.size(); ++i) EXPECT_EQ(manifest[i].action, split[i].instruction.action);
    std::filesystem::remove_all(dir);
}

TEST(Dataset, TruncatedFileIsSchemaErrorNamingTheRecord) {
    auto dir = testutil::temp_dir("ds-trunc");
    data::write_dataset(data::generate_split(2, 4, 16, 16, 3), dir);
    const auto file = dir / data::sample_file_name(1);
    const auto bytes = TensorArchive::read_file(file);
    {
        std::ofstream os(file, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        data::read_dataset(dir);
        FAIL() << "truncated dataset loaded";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::schema);
        EXPECT_NE(std::string(e.what()).find("record"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find(data::sample_file_name(1)), std::string::npos) << e.what();
    }
    std::filesystem::remove_all(dir);
}

TEST(Dataset, MissingFieldIsSchemaError) {
    auto s = data::generate_split(1, 4, 16, 16, 3)[0];
    auto ar = data::to_archive(s);
    TensorArchive partial;
    for (const auto& [name, t] : ar.records())
        if (name != "flows") partial.put(name, t);
    try {
        data::from_archive(partial, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::schema);
        EXPECT_NE(std::string(e.what()).find("flows"), std::string::npos);
    }
}

TEST(Dataset, MissingManifestIsIoError) {
    auto dir = testutil::temp_dir("ds-empty");
    EXPECT_EQ(testutil::error_kind([&] { data::read_dataset(dir); }), ErrorKind::io);
    std::filesystem::remove_all(dir);
}

TEST(Archive, RoundTripsEveryDtype) {
    TensorArchive ar;
    ar.put("f", torch::randn({2, 3}));
    ar.put("d", torch::randn({4}, torch::kDouble));
    ar.put("l", torch::arange(5, torch::kLong));
    ar.put("empty", torch::zeros({0, 3}));
    ar.put_text("t", "hello world");
    auto back = TensorArchive::deserialize(ar.serialize(), "mem");
    ASSERT_EQ(back.records().size(), 5u);
    for (const auto& [name, t] : ar.records()) EXPECT_TRUE(torch::equal(t, back.get(name))) << name;
    EXPECT_EQ(back.text("t"), "hello world");
    EXPECT_EQ(back.serialize(), ar.serialize());
}

TEST(Archive, RejectsCorruption) {
    TensorArchive ar;
    ar.put("x", torch::ones({3}));
    auto bytes = ar.serialize();
    EXPECT_EQ(testutil::error_kind([&] { TensorArchive::deserialize("NOTMAGIC", "m"); }), ErrorKind::schema);
    EXPECT_EQ(testutil::error_kind([&] { TensorArchive::deserialize(bytes + "z", "m"); }), ErrorKind::schema);
    EXPECT_EQ(testutil::error_kind([&] { TensorArchive::deserialize(bytes.substr(0, bytes.size() - 1), "m"); }), ErrorKind::schema);
    EXPECT_EQ(testutil::error_kind([&] { ar.put("i", torch::ones({2}, torch::kInt)); }), ErrorKind::schema);
}
