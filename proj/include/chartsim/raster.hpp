#pragma once

// Deterministic 64x64 RGB rasterizer for ChartProgram.
//
// Layout (x = column, y = row, origin top-left):
//   rows 1-5      title pseudo-glyphs, starting at column 1
//   row 8         value strip: one pixel per series value, columns 9 + 12*s + j
//   x 8..60, y 10..58   1-px black frame; data is drawn in the interior
//   cols 1-5, rows 10-56  ylabel pseudo-glyphs, rotated, 4-px advance
//   rows 59-63    xlabel pseudo-glyphs, starting at column 8
//   cols 2-4, rows 59-63  chart-type badge
//
// No transcendental functions are used except atan2 for pie sectors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chartsim/dsl.hpp"
#include "chartsim/rng.hpp"

namespace chartsim {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{1.0, 1.0, 1.0};
inline constexpr Rgb kBlack{0.0, 0.0, 0.0};
inline constexpr Rgb kGridGray{0.85, 0.85, 0.85};

inline constexpr std::array<Rgb, kPaletteSize> kPalette = {{
    {0.12, 0.47, 0.71},
    {1.00, 0.50, 0.05},
    {0.17, 0.63, 0.17},
    {0.84, 0.15, 0.16},
    {0.58, 0.40, 0.74},
    {0.55, 0.34, 0.29},
    {0.89, 0.47, 0.76},
    {0.50, 0.50, 0.50},
}};

/// Fixed-size RGB image, channel-last, row-major, values in [0,1].
class RasterImage {
 public:
  static constexpr int width = 64;
  static constexpr int height = 64;
  static constexpr int channels = 3;
  static constexpr std::size_t size = static_cast<std::size_t>(width) * height * channels;

  RasterImage() : pixels_(size, 0.0) {}

  static RasterImage filled(double value) {
    RasterImage img;
    std::fill(img.pixels_.begin(), img.pixels_.end(), value);
    return img;
  }

  double& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }

  Rgb rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }

  void set(int x, int y, Rgb color) {
    const std::size_t i = index(x, y, 0);
    pixels_[i] = color.r;
    pixels_[i + 1] = color.g;
    pixels_[i + 2] = color.b;
  }

  const std::vector<double>& pixels() const noexcept { return pixels_; }
  std::vector<double>& pixels() noexcept { return pixels_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  static std::size_t index(int x, int y, int c) {
    return (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * channels +
           static_cast<std::size_t>(c);
  }

  std::vector<double> pixels_;
};

// ---------------------------------------------------------------------------
// Pseudo-glyphs

inline constexpr int kGlyphWidth = 3;
inline constexpr int kGlyphHeight = 5;
inline constexpr int kGlyphAdvance = 4;

// 15-bit 3x5 bitmap; bit (row * 3 + col).
constexpr std::uint16_t glyph_bits(char c) noexcept {
  return static_cast<std::uint16_t>(splitmix64(static_cast<unsigned char>(c)) & 0x7FFF);
}

/// A run of glyph slots. Horizontal regions draw upright glyphs left to right;
/// vertical regions draw glyphs rotated a quarter turn, top to bottom. Text
/// longer than `slots` wraps to the first slot again.
struct GlyphRegion {
  int x0;
  int y0;
  int slots;
  bool vertical = false;
};

inline constexpr GlyphRegion kTitleRegion{1, 1, 16, false};
inline constexpr GlyphRegion kXLabelRegion{8, 59, 14, false};
inline constexpr GlyphRegion kYLabelRegion{1, 10, 12, true};

namespace detail {

inline void toggle_ink(RasterImage& img, int x, int y) {
  if (x < 0 || y < 0 || x >= RasterImage::width || y >= RasterImage::height) return;
  img.set(x, y, img.rgb(x, y) == kBlack ? kWhite : kBlack);
}

inline void draw_glyph(RasterImage& img, std::uint16_t bits, int x0, int y0, bool rotated) {
  for (int r = 0; r < kGlyphHeight; ++r) {
    for (int c = 0; c < kGlyphWidth; ++c) {
      if (!((bits >> (r * kGlyphWidth + c)) & 1U)) continue;
      if (rotated) {
        toggle_ink(img, x0 + r, y0 + (kGlyphWidth - 1 - c));
      } else {
        toggle_ink(img, x0 + c, y0 + r);
      }
    }
  }
}

}  // namespace detail

/// Draws `text` as pseudo-glyphs. Each set glyph bit toggles its pixel between
/// black and white, so wrapped characters never fully hide earlier ones.
inline void glyph_band(RasterImage& img, std::string_view text, const GlyphRegion& region) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int slot = static_cast<int>(i % static_cast<std::size_t>(region.slots));
    const int offset = slot * kGlyphAdvance;
    const std::uint16_t bits = glyph_bits(text[i]);
    if (region.vertical) {
      detail::draw_glyph(img, bits, region.x0, region.y0 + offset, true);
    } else {
      detail::draw_glyph(img, bits, region.x0 + offset, region.y0, false);
    }
  }
}

// ---------------------------------------------------------------------------
// Chart rendering

namespace detail {

inline constexpr int kFrameLeft = 8;
inline constexpr int kFrameRight = 60;
inline constexpr int kFrameTop = 10;
inline constexpr int kFrameBottom = 58;
inline constexpr int kPlotLeft = kFrameLeft + 1;      // 9
inline constexpr int kPlotRight = kFrameRight - 1;    // 59
inline constexpr int kPlotTop = kFrameTop + 1;        // 11
inline constexpr int kPlotBottom = kFrameBottom - 1;  // 57
inline constexpr int kPlotWidth = kPlotRight - kPlotLeft + 1;    // 51
inline constexpr int kPlotSpan = kPlotBottom - kPlotTop;         // 46
inline constexpr int kStripRow = 8;
inline constexpr int kStripStride = 12;

inline void plot(RasterImage& img, int x, int y, Rgb color) {
  if (x < kPlotLeft || x > kPlotRight || y < kPlotTop || y > kPlotBottom) return;
  img.set(x, y, color);
}

inline void fill_column(RasterImage& img, int x, int y_top, Rgb color) {
  for (int y = std::max(y_top, kPlotTop); y <= kPlotBottom; ++y) plot(img, x, y, color);
}

inline void line_segment(RasterImage& img, int x0, int y0, int x1, int y1, Rgb color) {
  const int dx = std::abs(x1 - x0);
  const int sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0);
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    plot(img, x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline Rgb tint(Rgb c, double amount) {
  return {c.r + (1.0 - c.r) * amount, c.g + (1.0 - c.g) * amount, c.b + (1.0 - c.b) * amount};
}

inline Rgb scale(Rgb c, double k) { return {c.r * k, c.g * k, c.b * k}; }

struct Slot {
  int begin;
  int end;  // inclusive
  int center;
};

inline Slot slot(int i, int n) {
  const int b = kPlotLeft + (i * kPlotWidth) / n;
  const int e = kPlotLeft + ((i + 1) * kPlotWidth) / n - 1;
  return {b, e, (b + e) / 2};
}

inline void draw_pie(RasterImage& img, const Series& s) {
  constexpr int cx = (kPlotLeft + kPlotRight) / 2;
  constexpr int cy = (kPlotTop + kPlotBottom) / 2;
  constexpr int radius = 21;
  constexpr double kTwoPi = 6.283185307179586;
  double total = 0.0;
  for (double v : s.values) total += v;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (double v : s.values) {
    acc += v;
    cumulative.push_back(acc / total);
  }
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      const int dx = x - cx;
      const int dy = y - cy;
      if (dx * dx + dy * dy > radius * radius) continue;
      // Angle measured clockwise from twelve o'clock.
      double frac = std::atan2(static_cast<double>(dx), static_cast<double>(-dy)) / kTwoPi;
      if (frac < 0.0) frac += 1.0;
      std::size_t k = 0;
      while (k + 1 < cumulative.size() && frac >= cumulative[k]) ++k;
      plot(img, x, y, kPalette[static_cast<std::size_t>((s.color + static_cast<int>(k)) % kPaletteSize)]);
    }
  }
}

}  // namespace detail

/// Renders a valid program. Pure: same program, same pixels.
inline RasterImage render(const ChartProgram& p) {
  using namespace detail;
  RasterImage img = RasterImage::filled(1.0);

  for (int x = kFrameLeft; x <= kFrameRight; ++x) {
    img.set(x, kFrameTop, kBlack);
    img.set(x, kFrameBottom, kBlack);
  }
  for (int y = kFrameTop; y <= kFrameBottom; ++y) {
    img.set(kFrameLeft, y, kBlack);
    img.set(kFrameRight, y, kBlack);
  }

  // Grid rules at 1/5..4/5 of the scale; they cross the frame so they stay
  // visible under fully covering data.
  if (p.grid) {
    for (int level = 1; level <= 4; ++level) {
      const int y = kPlotBottom - (level * kPlotSpan * 2 + 5) / 10;
      for (int x = kFrameLeft; x <= kFrameRight; ++x) img.set(x, y, kGridGray);
    }
  }

  double max_value = 0.0;
  std::size_t n = 0;
  for (const Series& s : p.series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) max_value = std::max(max_value, v);
  }
  if (max_value == 0.0) max_value = 1.0;
  auto row_of = [max_value](double v) {
    return kPlotBottom - static_cast<int>(std::floor(v / max_value * kPlotSpan + 0.5));
  };
  const int slots = static_cast<int>(n);
  const int series_count = static_cast<int>(p.series.size());

  switch (p.chart_type) {
    case ChartType::bar:
      for (int si = 0; si < series_count; ++si) {
        const Series& s = p.series[static_cast<std::size_t>(si)];
        const Rgb color = kPalette[static_cast<std::size_t>(s.color)];
        for (int i = 0; i < static_cast<int>(s.values.size()); ++i) {
          const Slot sl = slot(i, slots);
          const int w = sl.end - sl.begin + 1;
          const int margin = w >= series_count + 2 ? 1 : 0;
          const int inner = w - 2 * margin;
          const int b = sl.begin + margin + (si * inner) / series_count;
          const int e = std::max(b, sl.begin + margin + ((si + 1) * inner) / series_count - 1);
          const int top = row_of(s.values[static_cast<std::size_t>(i)]);
          for (int x = b; x <= e; ++x) fill_column(img, x, top, color);
        }
      }
      break;
    case ChartType::hist:
      for (const Series& s : p.series) {
        const Rgb color = kPalette[static_cast<std::size_t>(s.color)];
        for (int i = 0; i < static_cast<int>(s.values.size()); ++i) {
          const Slot sl = slot(i, slots);
          const int top = row_of(s.values[static_cast<std::size_t>(i)]);
          for (int x = sl.begin; x <= sl.end; ++x) fill_column(img, x, top, color);
        }
      }
      break;
    case ChartType::line:
    case ChartType::area:
      for (const Series& s : p.series) {
        const Rgb color = kPalette[static_cast<std::size_t>(s.color)];
        const int count = static_cast<int>(s.values.size());
        if (p.chart_type == ChartType::area) {
          const Rgb fill = tint(color, 0.5);
          if (count == 1) fill_column(img, slot(0, slots).center, row_of(s.values[0]), fill);
          for (int i = 0; i + 1 < count; ++i) {
            const int x0 = slot(i, slots).center;
            const int x1 = slot(i + 1, slots).center;
            const int y0 = row_of(s.values[static_cast<std::size_t>(i)]);
            const int y1 = row_of(s.values[static_cast<std::size_t>(i + 1)]);
            for (int x = x0; x <= x1; ++x) {
              const int num = (y1 - y0) * (x - x0);
              const int den = x1 - x0;
              // Round-half-away division keeps the fill symmetric.
              const int dy = num >= 0 ? (2 * num + den) / (2 * den) : -((-2 * num + den) / (2 * den));
              fill_column(img, x, y0 + dy, fill);
            }
          }
        }
        for (int i = 0; i < count; ++i) {
          const Slot a = slot(i, slots);
          const int ya = row_of(s.values[static_cast<std::size_t>(i)]);
          if (i + 1 < count) {
            const Slot b = slot(i + 1, slots);
            line_segment(img, a.center, ya, b.center, row_of(s.values[static_cast<std::size_t>(i + 1)]), color);
          } else {
            plot(img, a.center, ya, color);
          }
        }
      }
      break;
    case ChartType::scatter:
      for (const Series& s : p.series) {
        const Rgb color = kPalette[static_cast<std::size_t>(s.color)];
        for (int i = 0; i < static_cast<int>(s.values.size()); ++i) {
          const int cx = slot(i, slots).center;
          const int cy = row_of(s.values[static_cast<std::size_t>(i)]);
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) plot(img, cx + dx, cy + dy, color);
          }
        }
      }
      break;
    case ChartType::pie:
      draw_pie(img, p.series.front());
      break;
  }

  // Value strip: absolute value as color intensity, independent of the y-scale.
  for (int si = 0; si < series_count; ++si) {
    const Series& s = p.series[static_cast<std::size_t>(si)];
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      const double level = 0.25 + 0.75 * s.values[j] / kMaxQuantum;
      img.set(kPlotLeft + si * kStripStride + static_cast<int>(j), kStripRow,
              scale(kPalette[static_cast<std::size_t>(s.color)], level));
    }
  }

  detail::draw_glyph(img, static_cast<std::uint16_t>(splitmix64(0x10000ULL + static_cast<unsigned>(p.chart_type)) & 0x7FFF),
                     2, 59, false);
  if (p.title) glyph_band(img, *p.title, kTitleRegion);
  if (p.xlabel) glyph_band(img, *p.xlabel, kXLabelRegion);
  if (p.ylabel) glyph_band(img, *p.ylabel, kYLabelRegion);
  return img;
}

// ---------------------------------------------------------------------------
// PPM (P6) I/O

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::uint8_t quantize_channel(double v) {
  const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(q);
}

inline std::string encode_ppm(const RasterImage& img) {
  std::string out = "P6\n64 64\n255\n";
  out.reserve(out.size() + RasterImage::size);
  for (double v : img.pixels()) out.push_back(static_cast<char>(quantize_channel(v)));
  return out;
}

inline RasterImage decode_ppm(std::string_view data) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      const char c = data[pos];
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> int {
    skip_space();
    if (pos >= data.size() || data[pos] < '0' || data[pos] > '9') {
      throw ImageIoError("malformed PPM header");
    }
    long v = 0;
    while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
      v = v * 10 + (data[pos++] - '0');
      if (v > 1'000'000) throw ImageIoError("malformed PPM header");
    }
    return static_cast<int>(v);
  };
  if (data.substr(0, 2) != "P6") throw ImageIoError("not a binary PPM (P6) file");
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w != RasterImage::width || h != RasterImage::height) {
    throw ImageIoError("PPM must be 64x64, got " + std::to_string(w) + "x" + std::to_string(h));
  }
  if (maxval != 255) throw ImageIoError("PPM maxval must be 255");
  if (pos >= data.size() || !(data[pos] == ' ' || data[pos] == '\n' || data[pos] == '\t' || data[pos] == '\r')) {
    throw ImageIoError("malformed PPM header");
  }
  ++pos;
  if (data.size() - pos < RasterImage::size) throw ImageIoError("truncated PPM pixel data");
  RasterImage img;
  for (std::size_t i = 0; i < RasterImage::size; ++i) {
    img.pixels()[i] = static_cast<unsigned char>(data[pos + i]) / 255.0;
  }
  return img;
}

inline void write_ppm(const RasterImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("cannot open " + path + " for writing");
  const std::string bytes = encode_ppm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ImageIoError("write failed: " + path);
}

inline RasterImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("cannot open " + path);
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(data);
}

}  // namespace chartsim
