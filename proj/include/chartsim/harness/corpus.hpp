#pragma once

// Synthetic chart corpus (stand-in for harvested chart images) and the
// chart-type classification filter.

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chartsim/dsl.hpp"
#include "chartsim/parallel.hpp"
#include "chartsim/raster.hpp"
#include "chartsim/rng.hpp"

namespace chartsim {

inline constexpr std::array<std::string_view, 200> kLexicon = {
    "net", "loss", "gain", "rate", "time", "year", "month", "week", "day", "hour", "cost", "price",
    "sales", "revenue", "profit", "margin", "growth", "share", "users", "visits", "clicks", "views",
    "score", "accuracy", "error", "speed", "load", "power", "energy", "heat", "temp", "depth",
    "height", "width", "size", "count", "total", "mean", "median", "peak", "low", "high", "max",
    "min", "avg", "sum", "delta", "ratio", "index", "value", "level", "range", "trend", "cycle",
    "phase", "wave", "signal", "noise", "band", "freq", "pulse", "flow", "flux", "mass", "force",
    "stress", "strain", "yield", "cell", "gene", "rna", "dna", "protein", "dose", "drug", "trial",
    "group", "cohort", "age", "risk", "odds", "hazard", "rank", "tier", "grade", "class", "label",
    "token", "model", "layer", "epoch", "batch", "step", "iter", "train", "test", "valid", "eval",
    "query", "doc", "page", "site", "node", "edge", "graph", "tree", "path", "route", "city",
    "town", "region", "state", "nation", "world", "north", "south", "east", "west", "urban",
    "rural", "farm", "crop", "wheat", "corn", "rice", "soil", "water", "rain", "snow", "wind",
    "solar", "coal", "gas", "oil", "fuel", "grid", "plant", "motor", "engine", "wheel", "brake",
    "gear", "shaft", "pump", "valve", "tank", "pipe", "wire", "chip", "core", "disk", "cache",
    "memory", "cpu", "gpu", "ram", "bus", "link", "port", "host", "server", "client", "cloud",
    "alpha", "beta", "gamma", "omega", "sigma", "theta", "lambda", "kappa", "zeta", "red", "blue",
    "green", "amber", "ivory", "coral", "jade", "onyx", "ruby", "pearl", "apple", "pear", "plum",
    "lime", "mango", "kiwi", "melon", "olive", "maple", "cedar", "pine", "oak", "elm", "birch",
    "fern", "moss", "reed", "lotus",
};

/// Prior over synthesized programs.
struct CorpusKnobs {
  double title_prob = 0.5;
  int max_title_words = 2;
  double xlabel_prob = 0.3;
  double ylabel_prob = 0.3;
  double series_continue = 0.35;  // series count ~ 1 + Geometric, capped at 4
  int min_values = 2;
  int max_values = 6;
  double grid_prob = 0.3;
  bool shared_length = true;   // all series in a chart share one value count
  bool lexicon_text = true;    // false: random strings over the full DSL alphabet
};

// Knobs covering the whole grammar; used for property tests.
inline CorpusKnobs wide_knobs() {
  CorpusKnobs k;
  k.title_prob = 0.6;
  k.max_title_words = 4;
  k.xlabel_prob = 0.5;
  k.ylabel_prob = 0.5;
  k.series_continue = 0.6;
  k.min_values = 1;
  k.max_values = kMaxValues;
  k.shared_length = false;
  k.lexicon_text = false;
  return k;
}

namespace detail {

inline std::string random_text(SplitMix64& rng, const CorpusKnobs& knobs, int max_words) {
  if (!knobs.lexicon_text) {
    const int len = rng.range(1, static_cast<int>(kMaxStringLength));
    std::string s;
    for (int i = 0; i < len; ++i) s += Vocabulary::charset[rng.below(Vocabulary::charset.size())];
    return s;
  }
  const int words = rng.range(1, max_words);
  std::string s;
  for (int i = 0; i < words; ++i) {
    const std::string_view w = kLexicon[rng.below(kLexicon.size())];
    if (s.size() + (s.empty() ? 0 : 1) + w.size() > kMaxStringLength) break;
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

}  // namespace detail

/// Draws one valid program from the prior.
inline ChartProgram random_program(SplitMix64& rng, const CorpusKnobs& knobs = {}) {
  ChartProgram p;
  p.chart_type = kAllChartTypes[rng.below(kNumChartTypes)];
  if (rng.bernoulli(knobs.title_prob)) p.title = detail::random_text(rng, knobs, knobs.max_title_words);
  if (rng.bernoulli(knobs.xlabel_prob)) p.xlabel = detail::random_text(rng, knobs, 1);
  if (rng.bernoulli(knobs.ylabel_prob)) p.ylabel = detail::random_text(rng, knobs, 1);
  p.grid = rng.bernoulli(knobs.grid_prob);
  int count = 1;
  if (p.chart_type != ChartType::pie) {
    while (count < kMaxSeries && rng.bernoulli(knobs.series_continue)) ++count;
  }
  const int shared = rng.range(knobs.min_values, knobs.max_values);
  for (int s = 0; s < count; ++s) {
    Series series;
    series.name = detail::random_text(rng, knobs, 1);
    series.color = static_cast<int>(rng.below(kPaletteSize));
    const int n = knobs.shared_length ? shared : rng.range(knobs.min_values, knobs.max_values);
    for (int i = 0; i < n; ++i) series.values.push_back(quantum_value(static_cast<int>(rng.below(kNumQuanta))));
    p.series.push_back(std::move(series));
  }
  if (p.chart_type == ChartType::pie) {
    auto& values = p.series.front().values;
    if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) {
      values.front() = quantum_value(1 + static_cast<int>(rng.below(kNumQuanta - 1)));
    }
  }
  return p;
}

struct CorpusItem {
  std::size_t id = 0;
  ChartProgram program;
  RasterImage image;
};

/// n programs with renders; item i depends only on (seed, i).
inline std::vector<CorpusItem> synthesize_corpus(std::size_t n, std::uint64_t seed, const CorpusKnobs& knobs = {}) {
  std::vector<CorpusItem> items(n);
  parallel_for(n, [&](std::size_t i) {
    SplitMix64 rng(derive_seed(seed, 0xC0B9u, i));
    items[i].id = i;
    items[i].program = random_program(rng, knobs);
    items[i].image = render(items[i].program);
  });
  return items;
}

struct FilterResult {
  std::vector<CorpusItem> kept;
  std::size_t discarded = 0;
};

/// Keeps items whose chart type is in `allowed`. The type is read from the
/// program, i.e. a perfect classifier.
inline FilterResult classify_filter(std::vector<CorpusItem> items, const std::set<ChartType>& allowed) {
  FilterResult out;
  for (auto& item : items) {
    if (allowed.count(item.program.chart_type)) {
      out.kept.push_back(std::move(item));
    } else {
      ++out.discarded;
    }
  }
  return out;
}

inline std::set<ChartType> all_chart_types() { return {kAllChartTypes.begin(), kAllChartTypes.end()}; }

}  // namespace chartsim
