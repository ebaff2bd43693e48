#pragma once

// Semantic attribute extraction and attribute-set similarity metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chartsim/dsl.hpp"
#include "chartsim/raster.hpp"

namespace chartsim {

enum class AttributeCategory { type, text, color, numeric, layout };

inline constexpr std::array<AttributeCategory, 5> kAllCategories = {
    AttributeCategory::type, AttributeCategory::text, AttributeCategory::color,
    AttributeCategory::numeric, AttributeCategory::layout};

constexpr std::string_view to_string(AttributeCategory c) noexcept {
  switch (c) {
    case AttributeCategory::type: return "type";
    case AttributeCategory::text: return "text";
    case AttributeCategory::color: return "color";
    case AttributeCategory::numeric: return "numeric";
    case AttributeCategory::layout: return "layout";
  }
  return "?";
}

struct AttributeElement {
  AttributeCategory category;
  std::string key;                     // e.g. "type:bar", "text:loss"; "num" for numerics
  std::optional<double> numeric_value;  // present iff category == numeric

  friend bool operator==(const AttributeElement&, const AttributeElement&) = default;
};

/// Bag of attributes. Discrete elements are counted by key; numeric elements
/// are kept as a value list because they match under a tolerance, not by key.
class AttributeMultiset {
 public:
  void add(AttributeCategory category, const std::string& key, int count = 1) {
    auto& slot = discrete_[key];
    slot.category = category;
    slot.count += count;
  }

  void add_numeric(double v) { numerics_.push_back(v); }

  std::size_t size() const noexcept {
    std::size_t n = numerics_.size();
    for (const auto& [key, e] : discrete_) n += static_cast<std::size_t>(e.count);
    return n;
  }

  bool empty() const noexcept { return size() == 0; }

  int count(const std::string& key) const {
    const auto it = discrete_.find(key);
    return it == discrete_.end() ? 0 : it->second.count;
  }

  const std::vector<double>& numerics() const noexcept { return numerics_; }

  // Sub-multiset holding only one category.
  AttributeMultiset restricted_to(AttributeCategory category) const {
    AttributeMultiset out;
    for (const auto& [key, e] : discrete_) {
      if (e.category == category) out.add(category, key, e.count);
    }
    if (category == AttributeCategory::numeric) out.numerics_ = numerics_;
    return out;
  }

  // Flat element list, one entry per unit of multiplicity (discrete first,
  // then numerics in insertion order).
  std::vector<AttributeElement> elements() const {
    std::vector<AttributeElement> out;
    for (const auto& [key, e] : discrete_) {
      for (int i = 0; i < e.count; ++i) out.push_back({e.category, key, std::nullopt});
    }
    for (double v : numerics_) out.push_back({AttributeCategory::numeric, "num", v});
    return out;
  }

  template <typename Fn>
  void for_each_discrete(Fn&& fn) const {
    for (const auto& [key, e] : discrete_) fn(key, e.category, e.count);
  }

 private:
  struct Entry {
    AttributeCategory category = AttributeCategory::type;
    int count = 0;
  };

  std::map<std::string, Entry> discrete_;
  std::vector<double> numerics_;
};

namespace detail {

inline void add_words(AttributeMultiset& out, std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.add(AttributeCategory::text, "text:" + std::string(s.substr(start, i - start)));
  }
}

}  // namespace detail

/// Attribute extraction G. Reads the AST; the image is accepted for interface
/// parity with an image-plus-code extractor and is not inspected.
inline AttributeMultiset extract(const ChartProgram& p, const RasterImage& /*img*/) {
  AttributeMultiset out;
  out.add(AttributeCategory::type, "type:" + std::string(to_string(p.chart_type)));
  if (p.title) detail::add_words(out, *p.title);
  if (p.xlabel) detail::add_words(out, *p.xlabel);
  if (p.ylabel) detail::add_words(out, *p.ylabel);
  for (const Series& s : p.series) {
    detail::add_words(out, s.name);
    out.add(AttributeCategory::color, "color:" + std::to_string(s.color));
    for (double v : s.values) out.add_numeric(v);
  }
  out.add(AttributeCategory::layout, "layout:series_count=" + std::to_string(p.series.size()));
  out.add(AttributeCategory::layout, std::string("layout:grid=") + (p.grid ? "on" : "off"));
  return out;
}

inline AttributeMultiset extract(const ChartProgram& p) { return extract(p, RasterImage{}); }

// True when candidate value `a` matches reference value `b`.
constexpr bool numeric_match(double a, double b) noexcept {
  const double diff = a - b;
  const double tol = 0.01 * (b < 0 ? -b : b);
  return (diff < 0 ? -diff : diff) <= tol;
}

/// Maximum one-to-one matching between candidate values `a` and reference
/// values `b` under |a - b| <= 0.01 |b|. Each reference value accepts an
/// interval whose endpoints are both monotone in b, so the two-pointer greedy
/// over sorted inputs is optimal.
inline std::size_t match_numeric(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t matches = 0;
  while (i < a.size() && j < b.size()) {
    const double tol = 0.01 * std::abs(b[j]);
    if (a[i] < b[j] - tol) {
      ++i;
    } else if (a[i] > b[j] + tol) {
      ++j;
    } else {
      ++matches;
      ++i;
      ++j;
    }
  }
  return matches;
}

enum class AttrMetric { jaccard, precision, recall, f1 };

inline constexpr std::array<AttrMetric, 4> kAllAttrMetrics = {
    AttrMetric::precision, AttrMetric::recall, AttrMetric::f1, AttrMetric::jaccard};

constexpr std::string_view to_string(AttrMetric m) noexcept {
  switch (m) {
    case AttrMetric::jaccard: return "jaccard";
    case AttrMetric::precision: return "precision";
    case AttrMetric::recall: return "recall";
    case AttrMetric::f1: return "f1";
  }
  return "?";
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline AttrMetric parse_attr_metric(std::string_view name) {
  for (AttrMetric m : kAllAttrMetrics) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown attribute metric '" + std::string(name) + "'");
}

// |A ∩ B| with min-multiplicity on discrete keys plus tolerant numeric matching.
inline std::size_t intersection_size(const AttributeMultiset& candidate, const AttributeMultiset& reference) {
  std::size_t n = 0;
  candidate.for_each_discrete([&](const std::string& key, AttributeCategory, int count) {
    n += static_cast<std::size_t>(std::min(count, reference.count(key)));
  });
  return n + match_numeric(candidate.numerics(), reference.numerics());
}

/// Table of overlap metrics between a candidate multiset A and a reference B.
/// Both empty scores 1; exactly one empty scores 0.
inline double similarity(const AttributeMultiset& a, const AttributeMultiset& b, AttrMetric metric) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double inter = static_cast<double>(intersection_size(a, b));
  switch (metric) {
    case AttrMetric::jaccard: return inter / (na + nb - inter);
    case AttrMetric::precision: return inter / na;
    case AttrMetric::recall: return inter / nb;
    case AttrMetric::f1: return inter / ((na + nb) / 2.0);
  }
  throw ConfigError("unknown attribute metric");
}

inline double similarity(const AttributeMultiset& a, const AttributeMultiset& b, std::string_view metric) {
  return similarity(a, b, parse_attr_metric(metric));
}

}  // namespace chartsim
