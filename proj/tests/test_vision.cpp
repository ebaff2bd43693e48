#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "chartsim/harness/corpus.hpp"
#include "chartsim/vision.hpp"
#include "oracles.hpp"

using namespace chartsim;

TEST(Extractor, DeterministicFromSeed) {
  EXPECT_EQ(init_extractor(3), init_extractor(3));
  EXPECT_NE(init_extractor(3), init_extractor(4));
}

TEST(Extractor, InitRangeFollowsFanIn) {
  const auto params = init_extractor(1);
  for (int k = 0; k < kNumConvBlocks; ++k) {
    const auto& b = params.blocks[static_cast<std::size_t>(k)];
    const double s = std::sqrt(6.0 / (9.0 * kConvChannels[static_cast<std::size_t>(k)]));
    float lo = 1e9f, hi = -1e9f;
    for (float w : b.kernel) {
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
    EXPECT_GE(lo, -s);
    EXPECT_LE(hi, s);
    EXPECT_LT(lo, -0.9 * s);  // the range is actually used
    EXPECT_GT(hi, 0.9 * s);
    for (float v : b.bias) EXPECT_EQ(v, 0.0f);
  }
  EXPECT_NEAR(std::sqrt(6.0 / 27.0), 0.4714045207910317, 1e-15);
}

TEST(Extractor, FirstWeightsComeFromSingleStream) {
  const auto params = init_extractor(9);
  SplitMix64 rng(9);
  const double s = std::sqrt(6.0 / 27.0);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(params.blocks[0].kernel[static_cast<std::size_t>(i)], static_cast<float>(rng.uniform(-s, s)));
}

TEST(Extractor, DifferentSeedsGiveDifferentSimilarities) {
  const auto a = render(parse("chart bar\nseries \"a\" color 0 values 1 2 3\n"));
  const auto b = render(parse("chart line\nseries \"a\" color 4 values 3 1 2\n"));
  EXPECT_NE(visual_similarity(a, b, init_extractor(1)), visual_similarity(a, b, init_extractor(2)));
}

TEST(Weights, FileRoundTripAndErrors) {
  const auto path = (std::filesystem::temp_directory_path() / "chartsim_weights_test.cslw").string();
  const auto params = init_extractor(5);
  save_weights(params, path);
  EXPECT_EQ(load_weights(path), params);

  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::string& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << b;
  };
  auto kind = [&]() {
    try {
      load_weights(path);
    } catch (const cslw::FormatError& e) {
      return e.kind();
    }
    return cslw::FormatError::Kind::io;
  };
  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(kind(), cslw::FormatError::Kind::truncated);
  std::string magic = bytes;
  magic[1] = '?';
  write(magic);
  EXPECT_EQ(kind(), cslw::FormatError::Kind::bad_magic);
  auto wrong = to_tensors(params);
  wrong[0].shape = {4, 6, 3, 3};  // same element count, wrong shape
  cslw::save(wrong, path);
  EXPECT_EQ(kind(), cslw::FormatError::Kind::shape_mismatch);
  std::filesystem::remove(path);
}

TEST(Features, ShapesAndZeroImage) {
  const auto params = init_extractor(1);
  const auto pyr = features(RasterImage{}, params);
  const int expected[4][3] = {{8, 32, 32}, {16, 16, 16}, {32, 8, 8}, {64, 4, 4}};
  for (int k = 0; k < 4; ++k) {
    const auto& m = pyr[static_cast<std::size_t>(k)];
    EXPECT_EQ(m.channels, expected[k][0]);
    EXPECT_EQ(m.height, expected[k][1]);
    EXPECT_EQ(m.width, expected[k][2]);
    for (double v : m.data) ASSERT_EQ(v, 0.0);
  }
  EXPECT_EQ(visual_similarity(RasterImage{}, RasterImage{}, params), 1.0);
}

TEST(Features, NonNegative) {
  const auto pyr = features(render(parse("chart pie\nseries \"a\" color 0 values 1 2 3\n")), init_extractor(2));
  for (const auto& m : pyr)
    for (double v : m.data) ASSERT_GE(v, 0.0);
}

TEST(Conv, HandComputedFiveByFiveProbe) {
  // single channel, 5x5 input 1..25, kernel 1..9, bias -10 -> 3x3 output
  ConvBlock block{1, 1, {1, 2, 3, 4, 5, 6, 7, 8, 9}, {-10.0f}};
  FeatureMap in{1, 5, 5, {}};
  for (int i = 1; i <= 25; ++i) in.data.push_back(i);
  const FeatureMap out = conv_block(in, block);
  ASSERT_EQ(out.height, 3);
  ASSERT_EQ(out.width, 3);
  // out(0,0): taps (ky,kx) in {1,2}x{1,2} over input (0..1, 0..1):
  // 5*1 + 6*2 + 8*6 + 9*7 - 10 = 118
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 118.0);
  // out(1,1): full 3x3 window centered at input (2,2): sum k*in = 1*7+2*8+3*9+4*12+5*13+6*14+7*17+8*18+9*19 - 10
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 7 + 16 + 27 + 48 + 65 + 84 + 119 + 144 + 171 - 10);
  // ReLU clamps negative outputs
  ConvBlock neg{1, 1, std::vector<float>(9, -1.0f), {0.0f}};
  for (double v : conv_block(in, neg).data) EXPECT_EQ(v, 0.0);
}

TEST(Conv, MatchesNaiveOracle) {
  SplitMix64 rng(31);
  const auto params = init_extractor(17);
  for (int trial = 0; trial < 3; ++trial) {
    RasterImage img;
    for (double& v : img.pixels()) v = rng.uniform();
    FeatureMap cur = to_feature_map(img);
    for (int k = 0; k < kNumConvBlocks; ++k) {
      const auto& b = params.blocks[static_cast<std::size_t>(k)];
      const auto expected = oracle::naive_conv(cur.data, cur.channels, cur.height, cur.width, b, b.out_channels);
      const FeatureMap next = conv_block(cur, b);
      ASSERT_EQ(next.data.size(), expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i) {
        ASSERT_LE(std::abs(next.data[i] - expected[i]), 1e-6 * std::max(1.0, std::abs(expected[i])));
      }
      cur = next;
    }
  }
}

TEST(VisualSimilarity, IdentityAndSymmetry) {
  const auto params = init_extractor(1);
  SplitMix64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto a = render(random_program(rng));
    const auto b = render(random_program(rng));
    EXPECT_NEAR(visual_similarity(a, a, params), 1.0, 1e-6);
    const double ab = visual_similarity(a, b, params);
    EXPECT_NEAR(ab, visual_similarity(b, a, params), 1e-9);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(VisualSimilarity, ZeroVectorConventions) {
  EXPECT_EQ(block_cosine({0, 0}, {0, 0}), 1.0);
  EXPECT_EQ(block_cosine({0, 0}, {1, 0}), 0.0);
  EXPECT_EQ(block_cosine({1, 0}, {0, 0}), 0.0);
  EXPECT_NEAR(block_cosine({1, 1}, {1, 0}), std::sqrt(0.5), 1e-15);
}

TEST(VisualSimilarity, PerturbationSweepIsMonotoneOnAverage) {
  const auto params = init_extractor(7);
  SplitMix64 rng(3);
  double mean = 0.0;
  for (int i = 0; i < 20; ++i) mean += oracle::perturbation_spearman(render(random_program(rng)), params, rng);
  mean /= 20.0;
  EXPECT_LE(mean, -0.9);
}

TEST(Classic, IdentityImages) {
  const auto img = render(parse("chart hist\ngrid on\nseries \"q\" color 5 values 3 1 4 1 5\n"));
  EXPECT_EQ(mse(img, img), 0.0);
  EXPECT_EQ(classic_metric(img, img, VisMetric::mse), 1.0);
  EXPECT_EQ(classic_metric(img, img, VisMetric::psnr), 1.0);
  EXPECT_DOUBLE_EQ(ssim(img, img), 1.0);
  EXPECT_DOUBLE_EQ(classic_metric(img, img, VisMetric::ssim), 1.0);
}

TEST(Classic, UniformHalfVersusSixTenths) {
  const auto a = RasterImage::filled(0.5), b = RasterImage::filled(0.6);
  EXPECT_NEAR(mse(a, b), 0.01, 1e-12);
  EXPECT_NEAR(psnr_db(a, b), 20.0, 1e-9);
  EXPECT_NEAR(classic_metric(a, b, "psnr"), 0.4, 1e-11);
  EXPECT_NEAR(classic_metric(a, b, "mse"), 0.99, 1e-12);
}

TEST(Classic, PsnrCapBelowThreshold) {
  const auto a = RasterImage::filled(0.5), b = RasterImage::filled(0.5 + 0.003);  // MSE 9e-6
  EXPECT_EQ(psnr_db(a, b), 50.0);
}

TEST(Classic, SsimOfUniformShiftMatchesHandComputation) {
  // constant windows: variances and covariance vanish, so SSIM reduces to the
  // luminance term (2*0.5*0.6 + C1) / (0.25 + 0.36 + C1) times C2/C2
  const double expected = (2 * 0.5 * 0.6 + 1e-4) / (0.25 + 0.36 + 1e-4);
  EXPECT_NEAR(ssim(RasterImage::filled(0.5), RasterImage::filled(0.6)), expected, 1e-9);
  EXPECT_NEAR(ssim_window(0.5, 0.6, 0.0, 0.0, 0.0), expected, 1e-12);
}

TEST(Classic, SsimSingleWindowWithStructure) {
  // one 8x8 window in channel 0 carries a ramp; every other window is equal
  RasterImage a = RasterImage::filled(0.2), b = RasterImage::filled(0.2);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double u = (x + 8 * y) / 63.0, v = 0.5 * u + 0.25 * ((x * 7 + y * 3) % 5) / 4.0;
      a.at(x, y, 0) = u;
      b.at(x, y, 0) = v;
      sx += u, sy += v, sxx += u * u, syy += v * v, sxy += u * v;
    }
  const double mx = sx / 64, my = sy / 64;
  const double vx = sxx / 64 - mx * mx, vy = syy / 64 - my * my, cxy = sxy / 64 - mx * my;
  const double w = ((2 * mx * my + 1e-4) * (2 * cxy + 9e-4)) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
  const double expected = (w + (3 * 64 - 1)) / (3 * 64);
  EXPECT_NEAR(ssim(a, b), expected, 1e-9);
}

TEST(Classic, UnknownKindIsConfigError) {
  const RasterImage a;
  EXPECT_THROW(classic_metric(a, a, "lpips"), ConfigError);
  EXPECT_THROW(classic_metric(a, a, VisMetric::cnn), ConfigError);
}
