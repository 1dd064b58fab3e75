#include "monce/io.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

using namespace monce;
namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<unsigned char>;

void le32(Bytes& b, std::uint32_t v) {
    b.push_back(static_cast<unsigned char>(v));
    b.push_back(static_cast<unsigned char>(v >> 8));
    b.push_back(static_cast<unsigned char>(v >> 16));
    b.push_back(static_cast<unsigned char>(v >> 24));
}

void lef(Bytes& b, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    le32(b, u);
}

// Hand-assembled file: layer ids 3 and 7, N=4, D=3, values already unit rows
// so they survive float32 exactly.
Bytes two_layer_file() {
    Bytes b{'M', 'N', 'C', 'E'};
    le32(b, 1);
    le32(b, 2);
    const float rows[2][4][3] = {
        {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.6f, 0.8f, 0}},
        {{0, 0, -1}, {0.8f, 0, 0.6f}, {0, -1, 0}, {1, 0, 0}},
    };
    const std::uint32_t ids[2] = {3, 7};
    for (int l = 0; l < 2; ++l) {
        le32(b, ids[l]);
        le32(b, 4);
        le32(b, 3);
        for (const auto& r : rows[l])
            for (float v : r) lef(b, v);
    }
    return b;
}

LayeredFeatureSet random_layers(std::mt19937& rng, int layers, int n) {
    LayeredFeatureSet out;
    for (int l = 0; l < layers; ++l)
        out.layers.push_back(monce::testing::to_features(monce::testing::random_unit_rows(n, 2 + l, rng),
                                                         static_cast<std::uint32_t>(2 * l + 1)));
    return out;
}

ErrorKind decode_kind(const Bytes& b) {
    try {
        io::decode_features(b);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "decode succeeded";
    return ErrorKind::Io;
}

fs::path scratch_dir() {
    auto p = fs::temp_directory_path() / ("monce_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                          "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(FeatureFile, DecodesHandAssembledFile) {
    const auto lfs = io::decode_features(two_layer_file());
    ASSERT_EQ(lfs.layers.size(), 2u);
    EXPECT_EQ(lfs.layers[0].layer_id, 3u);
    EXPECT_EQ(lfs.layers[1].layer_id, 7u);
    EXPECT_EQ(lfs.layers[0].n_patches(), 4);
    EXPECT_EQ(lfs.layers[0].dim(), 3);
    EXPECT_NEAR(lfs.layers[0].data(3, 1), 0.8, 1e-7);
    EXPECT_EQ(lfs.layers[1].data(0, 2), -1.0);
}

TEST(FeatureFile, EncodesByteForByte) {
    const auto lfs = io::decode_features(two_layer_file());
    EXPECT_EQ(io::encode_features(lfs), two_layer_file());
}

TEST(FeatureFile, NormalizesOnLoad) {
    Bytes b{'M', 'N', 'C', 'E'};
    le32(b, 1);
    le32(b, 1);
    le32(b, 0);
    le32(b, 2);
    le32(b, 2);
    for (float v : {3.0f, 4.0f, 0.0f, -2.0f}) lef(b, v);
    const auto lfs = io::decode_features(b);
    EXPECT_NEAR(lfs.layers[0].data(0, 0), 0.6, 1e-7);
    EXPECT_NEAR(lfs.layers[0].data(0, 1), 0.8, 1e-7);
    EXPECT_EQ(lfs.layers[0].data(1, 1), -1.0);
}

TEST(FeatureFile, RoundTripWithinFloatPrecision) {
    std::mt19937 rng(1);
    const auto dir = scratch_dir();
    for (int trial = 0; trial < 10; ++trial) {
        const auto lfs = random_layers(rng, 1 + trial % 4, 2 + trial);
        const auto path = dir / "f.mnce";
        io::write_features(path, lfs);
        const auto back = io::read_features(path);
        ASSERT_EQ(back.layers.size(), lfs.layers.size());
        for (std::size_t l = 0; l < lfs.layers.size(); ++l) {
            EXPECT_EQ(back.layers[l].layer_id, lfs.layers[l].layer_id);
            EXPECT_LE((back.layers[l].data - lfs.layers[l].data).cwiseAbs().maxCoeff(), 1e-6);
        }
        EXPECT_FALSE(fs::exists(dir / "f.mnce.tmp"));
    }
    fs::remove_all(dir);
}

TEST(FeatureFile, HeaderErrors) {
    Bytes b = two_layer_file();
    b[0] = 'X';
    EXPECT_EQ(decode_kind(b), ErrorKind::BadMagic);
    EXPECT_EQ(decode_kind(Bytes{'M', 'N'}), ErrorKind::BadMagic);
    EXPECT_EQ(decode_kind(Bytes{'M', 'N', 'C', 'E', 1, 0}), ErrorKind::TruncatedFile);

    b = two_layer_file();
    b[4] = 2;
    EXPECT_EQ(decode_kind(b), ErrorKind::BadVersion);

    b = two_layer_file();
    b.push_back(0);
    EXPECT_EQ(decode_kind(b), ErrorKind::TrailingData);

    b = two_layer_file();
    b[8] = 1;  // claims one layer, second layer becomes trailing bytes
    EXPECT_EQ(decode_kind(b), ErrorKind::TrailingData);

    b = two_layer_file();
    b[8] = 3;
    EXPECT_EQ(decode_kind(b), ErrorKind::TruncatedFile);
}

TEST(FeatureFile, TruncationNamesLayer) {
    const Bytes full = two_layer_file();
    // cut inside the second layer's data
    const Bytes cut(full.begin(), full.end() - 5);
    try {
        io::decode_features(cut);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TruncatedFile);
        EXPECT_NE(std::string(e.what()).find("layer index 1"), std::string::npos) << e.what();
    }
}

TEST(FeatureFile, ContentErrors) {
    Bytes b = two_layer_file();
    // first float of layer 0 -> NaN
    b[24] = 0x00;
    b[25] = 0x00;
    b[26] = 0xC0;
    b[27] = 0x7F;
    EXPECT_EQ(decode_kind(b), ErrorKind::NonFinite);

    b = two_layer_file();
    std::fill(b.begin() + 24, b.begin() + 36, 0);  // row 0 of layer 0
    try {
        io::decode_features(b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ZeroRow);
        EXPECT_NE(std::string(e.what()).find("id 3"), std::string::npos) << e.what();
    }

    b = two_layer_file();
    b[16] = 0;  // N of layer 0
    EXPECT_EQ(decode_kind(b), ErrorKind::BadShape);

    b = two_layer_file();
    b[72] = 2;  // second layer id 2 < 3
    EXPECT_EQ(decode_kind(b), ErrorKind::LayerMismatch);

    Bytes empty{'M', 'N', 'C', 'E'};
    le32(empty, 1);
    le32(empty, 0);
    EXPECT_EQ(decode_kind(empty), ErrorKind::LayerMismatch);
}

TEST(FeatureFile, HugeDeclaredShapeIsTruncation) {
    Bytes b{'M', 'N', 'C', 'E'};
    le32(b, 1);
    le32(b, 1);
    le32(b, 0);
    le32(b, 0xFFFFFFFFu);
    le32(b, 0xFFFFFFFFu);
    EXPECT_EQ(decode_kind(b), ErrorKind::TruncatedFile);
}

TEST(FeatureFile, EveryTruncationAndByteFlipIsHandled) {
    const Bytes full = two_layer_file();
    for (std::size_t len = 0; len < full.size(); ++len) {
        const Bytes cut(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(len));
        EXPECT_THROW(io::decode_features(cut), Error) << "length " << len;
    }
    std::mt19937 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        Bytes b = full;
        b[rng() % b.size()] ^= static_cast<unsigned char>(1u + rng() % 255u);
        try {
            const auto lfs = io::decode_features(b);
            for (const auto& l : lfs.layers) EXPECT_TRUE(l.data.allFinite());
        } catch (const Error&) {
        }
    }
}

TEST(FeatureFile, MissingFile) {
    try {
        io::read_features("/nonexistent/monce/file.mnce");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
}

TEST(Csv, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 6.02214076e23, 0.31326168751822286}) {
        const auto s = io::format_double(v);
        EXPECT_EQ(std::stod(s), v) << s;
    }
    EXPECT_EQ(io::format_double(0.5), "0.5");
    EXPECT_EQ(io::format_double(2.0), "2");
}

TEST(Csv, SingleCellTable) {
    const io::Table t{{"loss"}, {{0.25}}};
    EXPECT_EQ(io::to_csv(t), "loss\n0.25\n");
}

TEST(Csv, MixedCellsAndWidthCheck) {
    io::Table t{{"mode", "loss"}, {{std::string("monce"), 1.5}, {std::string("patchnce"), 2.0}}};
    EXPECT_EQ(io::to_csv(t), "mode,loss\nmonce,1.5\npatchnce,2\n");
    t.rows.push_back({1.0});
    EXPECT_THROW(io::to_csv(t), Error);
}

TEST(Csv, WriteIsAtomic) {
    const auto dir = scratch_dir();
    const auto path = dir / "t.csv";
    io::write_csv(path, {{"a", "b"}, {{1.0, 2.0}}});
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(all, "a,b\n1,2\n");
    EXPECT_FALSE(fs::exists(dir / "t.csv.tmp"));
    EXPECT_THROW(io::write_csv(dir / "missing" / "t.csv", {{"a"}, {}}), Error);
    fs::remove_all(dir);
}

TEST(Config, ParsesAllKeys) {
    const auto cfg = io::parse_config(
        "# run\n"
        "tau = 0.1\n"
        "beta=0.5  # trailing\n"
        "q = 2\n"
        "epsilon = 0.01\n"
        "tol = 1e-8\n"
        "max_iter = 50\n"
        "seed = 12345678901\n"
        "strategy = easy\n"
        "mode = monce\n"
        "bidirectional = true\n"
        "\n");
    EXPECT_EQ(cfg.loss.tau, 0.1);
    EXPECT_EQ(cfg.loss.beta, 0.5);
    EXPECT_EQ(cfg.loss.q, 2.0);
    EXPECT_EQ(cfg.loss.sinkhorn.epsilon, 0.01);
    EXPECT_EQ(cfg.loss.sinkhorn.tol, 1e-8);
    EXPECT_EQ(cfg.loss.sinkhorn.max_iter, 50);
    EXPECT_EQ(cfg.seed, 12345678901u);
    EXPECT_EQ(cfg.loss.strategy, Strategy::easy);
    EXPECT_EQ(cfg.loss.mode, Mode::monce);
    EXPECT_TRUE(cfg.loss.bidirectional);
}

TEST(Config, EmptyKeepsDefaults) {
    const auto cfg = io::parse_config("");
    EXPECT_EQ(cfg.loss.tau, 0.07);
    EXPECT_EQ(cfg.loss.beta, 0.1);
    EXPECT_EQ(cfg.loss.sinkhorn.epsilon, 0.05);
    EXPECT_EQ(cfg.loss.mode, Mode::patchnce);
}

TEST(Config, Rejections) {
    for (const char* text : {"gamma = 1\n", "tau\n", "tau = 0\n", "tau = -1\n", "tau = abc\n", "tau = 0.1x\n",
                             "beta = inf\n", "max_iter = 0\n", "max_iter = 1.5\n", "strategy = medium\n",
                             "mode = nce\n", "bidirectional = yes\n", "seed = -1\n"}) {
        try {
            io::parse_config(text);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::BadConfig) << text;
        }
    }
}

TEST(Config, ErrorNamesLine) {
    try {
        io::parse_config("tau = 0.1\n\nwhat = 2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("what"), std::string::npos);
    }
}
