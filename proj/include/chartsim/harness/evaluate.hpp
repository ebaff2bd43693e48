#pragma once

// Direct-mimic evaluation: greedy-decode one candidate per reference and report
// execution rate plus per-category attribute F1.

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "chartsim/attributes.hpp"
#include "chartsim/grpo.hpp"
#include "chartsim/parallel.hpp"
#include "chartsim/policy.hpp"
#include "chartsim/reward.hpp"

namespace chartsim {

struct EvalReport {
  double exec_rate = 0.0;
  std::array<double, 5> category_f1{};  // indexed like kAllCategories
  double overall_f1 = 0.0;
  double mean_attr = 0.0;
  double mean_vis = 0.0;
  std::size_t samples = 0;

  double f1(AttributeCategory c) const { return category_f1[static_cast<std::size_t>(c)]; }

  std::string to_text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "samples %zu\nexec_rate %.4f\nf1.text %.4f\nf1.layout %.4f\nf1.type %.4f\nf1.color %.4f\n"
                  "f1.numeric %.4f\nf1.overall %.4f\nmean_attr %.4f\nmean_vis %.4f\n",
                  samples, exec_rate, f1(AttributeCategory::text), f1(AttributeCategory::layout),
                  f1(AttributeCategory::type), f1(AttributeCategory::color), f1(AttributeCategory::numeric),
                  overall_f1, mean_attr, mean_vis);
    return buf;
  }
};

/// F1 between candidate and reference restricted to one category.
inline double category_f1(const AttributeMultiset& candidate, const AttributeMultiset& reference,
                          AttributeCategory category) {
  return similarity(candidate.restricted_to(category), reference.restricted_to(category), AttrMetric::f1);
}

/// Scores one candidate stream per reference. Failed candidates contribute 0
/// to every category.
inline EvalReport evaluate_candidates(const std::vector<TokenStream>& candidates, const std::vector<Prompt>& prompts,
                                      const ExtractorParams& extractor, const RewardConfig& reward = {}) {
  struct Row {
    bool executed = false;
    std::array<double, 5> f1{};
    double attr = 0.0;
    double vis = 0.0;
  };
  std::vector<Row> rows(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    const auto r = score(candidates[i], prompts[i].reference, reward, extractor);
    rows[i].attr = r.score.attr;
    rows[i].vis = r.score.vis;
    if (!r.score.executed) return;
    rows[i].executed = true;
    for (std::size_t c = 0; c < kAllCategories.size(); ++c) {
      rows[i].f1[c] = category_f1(*r.attributes, prompts[i].reference.attributes, kAllCategories[c]);
    }
  });
  EvalReport report;
  report.samples = prompts.size();
  if (prompts.empty()) return report;
  const double n = static_cast<double>(prompts.size());
  for (const Row& row : rows) {
    report.exec_rate += row.executed ? 1.0 : 0.0;
    double mean = 0.0;
    for (std::size_t c = 0; c < row.f1.size(); ++c) {
      report.category_f1[c] += row.f1[c];
      mean += row.f1[c];
    }
    report.overall_f1 += mean / static_cast<double>(row.f1.size());
    report.mean_attr += row.attr;
    report.mean_vis += row.vis;
  }
  report.exec_rate /= n;
  for (double& v : report.category_f1) v /= n;
  report.overall_f1 /= n;
  report.mean_attr /= n;
  report.mean_vis /= n;
  return report;
}

/// Greedy-decodes one candidate per reference with `policy`.
inline EvalReport evaluate(const PolicyParams& policy, const std::vector<Prompt>& prompts,
                           const ExtractorParams& extractor, SamplerConfig sampler = {},
                           const RewardConfig& reward = {}) {
  sampler.greedy = true;
  std::vector<TokenStream> candidates(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    candidates[i] = sample(policy, prompts[i].condition, sampler).tokens;
  });
  return evaluate_candidates(candidates, prompts, extractor, reward);
}

}  // namespace chartsim
