#pragma once

// Visual similarity: a four-block strided CNN feature extractor compared by
// per-block cosine, plus pixel-space baselines (MSE, SSIM, PSNR).

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "chartsim/attributes.hpp"
#include "chartsim/cslw.hpp"
#include "chartsim/raster.hpp"
#include "chartsim/rng.hpp"

namespace chartsim {

inline constexpr int kNumConvBlocks = 4;
inline constexpr std::array<int, kNumConvBlocks + 1> kConvChannels = {3, 8, 16, 32, 64};

/// One 3x3 stride-2 convolution block; kernel layout [out][in][3][3].
struct ConvBlock {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<float> kernel;
  std::vector<float> bias;

  float weight(int o, int i, int ky, int kx) const {
    return kernel[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx];
  }

  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct ExtractorParams {
  std::array<ConvBlock, kNumConvBlocks> blocks;

  friend bool operator==(const ExtractorParams&, const ExtractorParams&) = default;
};

/// Channel-major feature map (C x H x W).
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

using FeaturePyramid = std::array<FeatureMap, kNumConvBlocks>;

/// Uniform(-s, s) weights with s = sqrt(6 / fan_in), drawn block by block from a
/// single splitmix64 stream; zero biases.
inline ExtractorParams init_extractor(std::uint64_t seed) {
  ExtractorParams params;
  SplitMix64 rng(seed);
  for (int k = 0; k < kNumConvBlocks; ++k) {
    ConvBlock& b = params.blocks[static_cast<std::size_t>(k)];
    b.in_channels = kConvChannels[static_cast<std::size_t>(k)];
    b.out_channels = kConvChannels[static_cast<std::size_t>(k + 1)];
    const double fan_in = 9.0 * b.in_channels;
    const double s = std::sqrt(6.0 / fan_in);
    b.kernel.resize(static_cast<std::size_t>(b.out_channels) * b.in_channels * 9);
    for (float& w : b.kernel) w = static_cast<float>(rng.uniform(-s, s));
    b.bias.assign(static_cast<std::size_t>(b.out_channels), 0.0f);
  }
  return params;
}

inline std::vector<cslw::Tensor> to_tensors(const ExtractorParams& params) {
  std::vector<cslw::Tensor> out;
  for (int k = 0; k < kNumConvBlocks; ++k) {
    const ConvBlock& b = params.blocks[static_cast<std::size_t>(k)];
    const std::string prefix = "block" + std::to_string(k + 1);
    out.push_back({prefix + ".kernel", cslw::DType::f32,
                   {static_cast<std::uint32_t>(b.out_channels), static_cast<std::uint32_t>(b.in_channels), 3, 3},
                   std::vector<double>(b.kernel.begin(), b.kernel.end())});
    out.push_back({prefix + ".bias", cslw::DType::f32,
                   {static_cast<std::uint32_t>(b.out_channels)},
                   std::vector<double>(b.bias.begin(), b.bias.end())});
  }
  return out;
}

inline ExtractorParams from_tensors(const std::vector<cslw::Tensor>& tensors) {
  ExtractorParams params;
  for (int k = 0; k < kNumConvBlocks; ++k) {
    ConvBlock& b = params.blocks[static_cast<std::size_t>(k)];
    b.in_channels = kConvChannels[static_cast<std::size_t>(k)];
    b.out_channels = kConvChannels[static_cast<std::size_t>(k + 1)];
    const std::string prefix = "block" + std::to_string(k + 1);
    const auto& kernel = cslw::expect(tensors, prefix + ".kernel",
                                      {static_cast<std::uint32_t>(b.out_channels),
                                       static_cast<std::uint32_t>(b.in_channels), 3, 3});
    const auto& bias = cslw::expect(tensors, prefix + ".bias", {static_cast<std::uint32_t>(b.out_channels)});
    for (double v : kernel.data) {
      if (!std::isfinite(v)) throw cslw::FormatError(cslw::FormatError::Kind::shape_mismatch, "non-finite weight");
    }
    b.kernel.assign(kernel.data.begin(), kernel.data.end());
    b.bias.assign(bias.data.begin(), bias.data.end());
  }
  return params;
}

inline void save_weights(const ExtractorParams& params, const std::string& path) {
  cslw::save(to_tensors(params), path);
}

inline ExtractorParams load_weights(const std::string& path) { return from_tensors(cslw::load(path)); }

/// 3x3 convolution, stride 2, zero padding 1, bias, ReLU.
inline FeatureMap conv_block(const FeatureMap& in, const ConvBlock& block) {
  FeatureMap out;
  out.channels = block.out_channels;
  out.height = (in.height - 1) / 2 + 1;
  out.width = (in.width - 1) / 2 + 1;
  out.data.assign(static_cast<std::size_t>(out.channels) * out.height * out.width, 0.0);
  for (int o = 0; o < out.channels; ++o) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double acc = block.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < in.channels; ++i) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * y + ky - 1;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * x + kx - 1;
              if (ix < 0 || ix >= in.width) continue;
              acc += static_cast<double>(block.weight(o, i, ky, kx)) * in.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc > 0.0 ? acc : 0.0;
      }
    }
  }
  return out;
}

inline FeatureMap to_feature_map(const RasterImage& img) {
  FeatureMap m;
  m.channels = RasterImage::channels;
  m.height = RasterImage::height;
  m.width = RasterImage::width;
  m.data.resize(RasterImage::size);
  for (int c = 0; c < m.channels; ++c) {
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) m.at(c, y, x) = img.at(x, y, c);
    }
  }
  return m;
}

inline FeaturePyramid features(const RasterImage& img, const ExtractorParams& params) {
  FeaturePyramid pyramid;
  FeatureMap current = to_feature_map(img);
  for (int k = 0; k < kNumConvBlocks; ++k) {
    current = conv_block(current, params.blocks[static_cast<std::size_t>(k)]);
    pyramid[static_cast<std::size_t>(k)] = current;
  }
  return pyramid;
}

/// Cosine of two nonnegative vectors in [0,1]; both zero scores 1, one zero scores 0.
inline double block_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

inline double visual_similarity(const FeaturePyramid& a, const FeaturePyramid& b) {
  double sum = 0.0;
  for (int k = 0; k < kNumConvBlocks; ++k) {
    sum += block_cosine(a[static_cast<std::size_t>(k)].data, b[static_cast<std::size_t>(k)].data);
  }
  return sum / kNumConvBlocks;
}

inline double visual_similarity(const RasterImage& a, const RasterImage& b, const ExtractorParams& params) {
  return visual_similarity(features(a, params), features(b, params));
}

// ---------------------------------------------------------------------------
// Pixel-space baselines

inline double mse(const RasterImage& a, const RasterImage& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < RasterImage::size; ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(RasterImage::size);
}

inline constexpr double kPsnrCapDb = 50.0;

// Peak signal-to-noise ratio for unit peak, capped at 50 dB when MSE < 1e-5.
inline double psnr_db(const RasterImage& a, const RasterImage& b) {
  const double m = mse(a, b);
  if (m < 1e-5) return kPsnrCapDb;
  return 10.0 * std::log10(1.0 / m);
}

inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// SSIM of one window given its first and second moments (population statistics).
inline double ssim_window(double mu_x, double mu_y, double var_x, double var_y, double cov_xy) {
  return ((2.0 * mu_x * mu_y + kSsimC1) * (2.0 * cov_xy + kSsimC2)) /
         ((mu_x * mu_x + mu_y * mu_y + kSsimC1) * (var_x + var_y + kSsimC2));
}

/// Mean SSIM over non-overlapping 8x8 windows and the three channels.
inline double ssim(const RasterImage& a, const RasterImage& b) {
  constexpr int n = kSsimWindow * kSsimWindow;
  double total = 0.0;
  int windows = 0;
  for (int c = 0; c < RasterImage::channels; ++c) {
    for (int wy = 0; wy < RasterImage::height; wy += kSsimWindow) {
      for (int wx = 0; wx < RasterImage::width; wx += kSsimWindow) {
        double sx = 0.0;
        double sy = 0.0;
        for (int y = wy; y < wy + kSsimWindow; ++y) {
          for (int x = wx; x < wx + kSsimWindow; ++x) {
            sx += a.at(x, y, c);
            sy += b.at(x, y, c);
          }
        }
        const double mx = sx / n;
        const double my = sy / n;
        double vx = 0.0;
        double vy = 0.0;
        double cxy = 0.0;
        for (int y = wy; y < wy + kSsimWindow; ++y) {
          for (int x = wx; x < wx + kSsimWindow; ++x) {
            const double dx = a.at(x, y, c) - mx;
            const double dy = b.at(x, y, c) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
          }
        }
        total += ssim_window(mx, my, vx / n, vy / n, cxy / n);
        ++windows;
      }
    }
  }
  return total / windows;
}

enum class VisMetric { cnn, mse, ssim, psnr };

inline constexpr std::array<VisMetric, 4> kAllVisMetrics = {VisMetric::mse, VisMetric::ssim, VisMetric::psnr,
                                                            VisMetric::cnn};

constexpr std::string_view to_string(VisMetric m) noexcept {
  switch (m) {
    case VisMetric::cnn: return "cnn";
    case VisMetric::mse: return "mse";
    case VisMetric::ssim: return "ssim";
    case VisMetric::psnr: return "psnr";
  }
  return "?";
}

inline VisMetric parse_vis_metric(std::string_view name) {
  for (VisMetric m : kAllVisMetrics) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown visual metric '" + std::string(name) + "'");
}

/// Pixel-space reward in [0,1]: 1 - MSE, clamp(SSIM, 0, 1), or min(PSNR, 50) / 50.
inline double classic_metric(const RasterImage& a, const RasterImage& b, VisMetric kind) {
  switch (kind) {
    case VisMetric::mse: return 1.0 - mse(a, b);
    case VisMetric::ssim: return std::clamp(ssim(a, b), 0.0, 1.0);
    case VisMetric::psnr: return std::min(psnr_db(a, b), kPsnrCapDb) / kPsnrCapDb;
    case VisMetric::cnn: break;
  }
  throw ConfigError("classic_metric: '" + std::string(to_string(kind)) + "' is not a pixel-space metric");
}

inline double classic_metric(const RasterImage& a, const RasterImage& b, std::string_view kind) {
  return classic_metric(a, b, parse_vis_metric(kind));
}

}  // namespace chartsim
