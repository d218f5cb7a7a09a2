// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <queue>
#include <set>

#include "pickdraw/synthetic.hpp"

using namespace pickdraw;
using namespace pickdraw::data;

namespace {

std::string temp_dir(const char* tag) {
    auto p = std::filesystem::temp_directory_path() /
             (std::string("pickdraw_") + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p.string();
}

bool mask_connected(const Tensor& mask) {
    const int h = mask.dim(0), w = mask.dim(1);
    int total = 0, sy = -1, sx = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x) > 0.5) {
                ++total;
                sy = y;
                sx = x;
            }
    if (total == 0) return false;
    std::vector<char> seen(static_cast<size_t>(h) * w, 0);
    std::queue<std::pair<int, int>> q;
    q.emplace(sy, sx);
    seen[static_cast<size_t>(sy) * w + sx] = 1;
    int reached = 0;
    while (!q.empty()) {  // 8-connectivity
        auto [y, x] = q.front();
        q.pop();
        ++reached;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                if (seen[static_cast<size_t>(ny) * w + nx] || mask.at(ny, nx) < 0.5) continue;
                seen[static_cast<size_t>(ny) * w + nx] = 1;
                q.emplace(ny, nx);
            }
    }
    return reached == total;
}

}  // namespace

TEST(Vocab, BijectionAndBudget) {
    const Vocab& v = Vocab::instance();
    EXPECT_LE(v.size(), 32);
    std::set<std::string> words;
    for (int i = 0; i < v.size(); ++i) {
        words.insert(v.word(i));
        EXPECT_EQ(v.id(v.word(i)), i);
    }
    EXPECT_EQ(static_cast<int>(words.size()), v.size());
    EXPECT_GE(v.sks_id(), 0);
    EXPECT_TRUE(v.is_subject(v.sks_id()));
    EXPECT_FALSE(v.is_subject(v.id("red")));
}

TEST(Tokenize, GrammarExample) {
    Caption c = tokenize("a red circle on grass");
    EXPECT_EQ(c.length, 5);
    EXPECT_EQ(c.subject_index, 2);
    EXPECT_EQ(c.tokens[2], Vocab::instance().id("circle"));
    EXPECT_EQ(static_cast<int>(c.tokens.size()), kMaxCaptionLen);
    for (int i = c.length; i < kMaxCaptionLen; ++i) EXPECT_EQ(c.tokens[static_cast<size_t>(i)], 0);
}

TEST(Tokenize, Errors) {
    try {
        tokenize("a red banana on grass");
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("banana"), std::string::npos);
    }
    EXPECT_THROW(tokenize(""), std::invalid_argument);
    EXPECT_THROW(tokenize("a circle on grass a star on sky"), std::invalid_argument);
}

TEST(Tokenize, RoundTripOverFullGrammar) {
    for (int sh = 0; sh < kNumShapes; ++sh)
        for (int tx = 0; tx < kNumTextures; ++tx)
            for (int col = 0; col < kNumColors; ++col)
                for (int bg = 0; bg < kNumBackgrounds; ++bg)
                    for (int style = 0; style < 4; ++style) {
                        SceneSpec spec;
                        spec.shape = static_cast<Shape>(sh);
                        spec.texture = static_cast<Texture>(tx);
                        spec.color = col;
                        spec.background = static_cast<Background>(bg);
                        CaptionStyle cs;
                        cs.with_texture = style & 1;
                        cs.with_color = style & 2;
                        const std::string text = caption_text(spec, cs);
                        Caption c = tokenize(text);
                        EXPECT_EQ(detokenize(c), text);
                        EXPECT_TRUE(Vocab::instance().is_subject(
                            c.tokens[static_cast<size_t>(c.subject_index)]));
                    }
}

TEST(SceneSpec, AllPaletteBackgroundPairsContrast) {
    // The palette is tuned so the stratified builder never hits a rejected
    // color/background combination.
    for (int col = 0; col < kNumColors; ++col)
        for (int bg = 0; bg < kNumBackgrounds; ++bg) {
            SceneSpec s;
            s.color = col;
            s.background = static_cast<Background>(bg);
            EXPECT_NO_THROW(validate_spec(s)) << col << " on " << bg;
        }
}

TEST(SceneSpec, RejectsOutOfBoundsAndBadScale) {
    SceneSpec s;
    s.cell = 0;
    s.scale = 0.6;  // corner cell center is 9px from the edge, radius is 9.6px
    EXPECT_THROW(validate_spec(s), std::invalid_argument);
    s.scale = 0.2;
    EXPECT_THROW(validate_spec(s), std::invalid_argument);
    s.scale = 0.7;
    EXPECT_THROW(validate_spec(s), std::invalid_argument);
}

TEST(GenerateScene, DeterministicPerSpecAndSeed) {
    SceneSpec s;
    s.shape = Shape::star;
    s.texture = Texture::striped;
    s.color = 3;
    s.background = Background::water;
    Sample a = generate_scene(s, 7);
    Sample b = generate_scene(s, 7);
    ASSERT_EQ(a.image.numel(), b.image.numel());
    for (size_t i = 0; i < a.image.numel(); ++i) ASSERT_EQ(a.image[i], b.image[i]);
    for (size_t i = 0; i < a.mask.numel(); ++i) ASSERT_EQ(a.mask[i], b.mask[i]);

    Sample c = generate_scene(s, 8);
    double diff = 0.0;
    for (size_t i = 0; i < a.image.numel(); ++i) diff += std::abs(a.image[i] - c.image[i]);
    EXPECT_GT(diff, 0.0);  // different seed jitters the render
}

TEST(GenerateScene, CircleMaskAreaMatchesAnalyticOracle) {
    SceneSpec s;  // defaults: solid red circle on plain, center cell, scale 0.5
    Sample smp = generate_scene(s, 0);
    const double area = smp.mask.sum() / (kImageSize * kImageSize);
    const double want = M_PI * 0.25 * 0.25;
    EXPECT_NEAR(area, want, 0.05 * want);
}

TEST(GenerateScene, MaskAreaScalesQuadratically) {
    SceneSpec small, big;
    small.scale = 0.25;
    big.scale = 0.5;
    const double a_small = generate_scene(small, 0).mask.sum();
    const double a_big = generate_scene(big, 0).mask.sum();
    EXPECT_NEAR(a_big / a_small, 4.0, 0.4);
}

TEST(GenerateScene, MasksNonemptyAndConnected) {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        SceneSpec s;
        s.shape = static_cast<Shape>(rng.uniform_int(0, kNumShapes - 1));
        s.texture = static_cast<Texture>(rng.uniform_int(0, kNumTextures - 1));
        s.color = rng.uniform_int(0, kNumColors - 1);
        s.background = static_cast<Background>(rng.uniform_int(0, kNumBackgrounds - 1));
        s.cell = rng.uniform_int(0, 8);
        s.scale = rng.uniform(0.25, 0.5);
        Sample smp = generate_scene(s, static_cast<uint64_t>(trial));
        EXPECT_TRUE(mask_connected(smp.mask)) << "trial " << trial;
        EXPECT_TRUE(smp.image.all_finite());
        EXPECT_GE(smp.image.min(), 0.0);
        EXPECT_LE(smp.image.max(), 1.0);
    }
}

TEST(BuildDataset, StratifiedOverShapesAndBackgrounds) {
    Dataset ds = build_dataset(400, 11);
    ASSERT_EQ(ds.samples.size(), 400u);
    int shape_counts[kNumShapes] = {0};
    int cell_counts[kNumShapes][kNumBackgrounds] = {{0}};
    for (const auto& s : ds.samples) {
        ++shape_counts[int(s.spec.shape)];
        ++cell_counts[int(s.spec.shape)][int(s.spec.background)];
    }
    for (int i = 0; i < kNumShapes; ++i) EXPECT_NEAR(shape_counts[i], 100, 2);  // 400/4 within 2%
    for (int i = 0; i < kNumShapes; ++i)
        for (int j = 0; j < kNumBackgrounds; ++j) EXPECT_GE(cell_counts[i][j], 1);
}

TEST(BuildDataset, MinimalAndDeterministic) {
    Dataset one = build_dataset(1, 5);
    ASSERT_EQ(one.samples.size(), 1u);
    EXPECT_GT(one.samples[0].mask.sum(), 0.0);

    Dataset a = build_dataset(12, 5);
    Dataset b = build_dataset(12, 5);
    for (size_t i = 0; i < a.samples.size(); ++i) {
        for (size_t k = 0; k < a.samples[i].image.numel(); ++k)
            ASSERT_EQ(a.samples[i].image[k], b.samples[i].image[k]);
        ASSERT_EQ(a.samples[i].text, b.samples[i].text);
    }
}

TEST(Dataset, SaveLoadRoundTrip) {
    const std::string dir = temp_dir("dataset");
    Dataset ds = build_dataset(8, 21);
    save_dataset(ds, dir);
    ASSERT_TRUE(io::file_exists(dir + "/index.json"));
    ASSERT_TRUE(io::file_exists(dir + "/previews/sample_00000.png"));

    Dataset back = load_dataset(dir);
    ASSERT_EQ(back.samples.size(), ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& a = ds.samples[i];
        const Sample& b = back.samples[i];
        EXPECT_EQ(a.text, b.text);
        EXPECT_EQ(a.caption.subject_index, b.caption.subject_index);
        EXPECT_EQ(int(a.spec.shape), int(b.spec.shape));
        EXPECT_EQ(a.spec.cell, b.spec.cell);
        for (size_t k = 0; k < a.image.numel(); ++k)
            ASSERT_NEAR(a.image[k], b.image[k], 1e-7);  // f32 quantization
        for (size_t k = 0; k < a.mask.numel(); ++k) ASSERT_EQ(a.mask[k], b.mask[k]);
    }
    std::filesystem::remove_all(dir);
}

TEST(Png, EncodesValidSignatureAndDims) {
    Rng rng(4);
    Tensor img = rng.uniform_tensor({5, 7, 3}, 0.0, 1.0);
    auto bytes = io::png_encode_rgb8(7, 5, io::tensor_to_rgb8(img));
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    ASSERT_GE(bytes.size(), 33u);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(bytes[static_cast<size_t>(i)], sig[i]);
    // IHDR width/height are big-endian at offsets 16 and 20.
    EXPECT_EQ(bytes[19], 7);
    EXPECT_EQ(bytes[23], 5);
}
