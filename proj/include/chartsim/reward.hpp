#pragma once

// Chart similarity reward R = w_attr * R_attr + w_vis * R_vis and group-relative
// advantages.

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartsim/attributes.hpp"
#include "chartsim/dsl.hpp"
#include "chartsim/raster.hpp"
#include "chartsim/vision.hpp"

namespace chartsim {

struct RewardConfig {
  AttrMetric attr_metric = AttrMetric::jaccard;
  VisMetric vis_metric = VisMetric::cnn;
  double attr_weight = 1.0;
  double vis_weight = 1.0;
  double std_floor = 1e-6;

  void validate() const {
    if (!(attr_weight >= 0.0) || !(vis_weight >= 0.0)) throw ConfigError("reward weights must be >= 0");
    if (!(std_floor >= 0.0)) throw ConfigError("std_floor must be >= 0");
  }

  double max_reward() const noexcept { return attr_weight + vis_weight; }
};

/// Reference chart with everything the reward needs precomputed.
struct Reference {
  ChartProgram program;
  RasterImage image;
  AttributeMultiset attributes;
  FeaturePyramid features;
};

inline Reference make_reference(ChartProgram program, const ExtractorParams& params) {
  Reference ref;
  ref.image = render(program);
  ref.attributes = extract(program, ref.image);
  ref.features = features(ref.image, params);
  ref.program = std::move(program);
  return ref;
}

struct ScoreBreakdown {
  double total = 0.0;
  double attr = 0.0;
  double vis = 0.0;
  bool executed = false;
  std::string failure;  // empty when executed
};

/// Candidate after execution: the parsed program, its render and attributes
/// when it executed.
struct ScoredCandidate {
  ScoreBreakdown score;
  std::optional<ChartProgram> program;
  std::optional<RasterImage> render;
  std::optional<AttributeMultiset> attributes;
};

inline double visual_reward(const RasterImage& candidate, const FeaturePyramid* candidate_features,
                            const Reference& ref, VisMetric metric, const ExtractorParams& params) {
  if (metric == VisMetric::cnn) {
    if (candidate_features) return visual_similarity(*candidate_features, ref.features);
    return visual_similarity(features(candidate, params), ref.features);
  }
  return classic_metric(candidate, ref.image, metric);
}

inline ScoredCandidate score_program(const ChartProgram& program, const Reference& ref, const RewardConfig& cfg,
                                     const ExtractorParams& params) {
  ScoredCandidate out;
  out.render = render(program);
  out.attributes = extract(program, *out.render);
  out.score.executed = true;
  out.score.attr = similarity(*out.attributes, ref.attributes, cfg.attr_metric);
  // Skip the CNN pass entirely for attribute-only ablations.
  out.score.vis = cfg.vis_weight == 0.0 ? 0.0 : visual_reward(*out.render, nullptr, ref, cfg.vis_metric, params);
  out.score.total = cfg.attr_weight * out.score.attr + cfg.vis_weight * out.score.vis;
  out.program = program;
  return out;
}

/// Executes a candidate token stream and scores it. Failures to parse or
/// validate yield reward 0 with the reason recorded.
inline ScoredCandidate score(const TokenStream& candidate, const Reference& ref, const RewardConfig& cfg,
                             const ExtractorParams& params) {
  ChartProgram program;
  try {
    program = detokenize(candidate);
  } catch (const ParseError& e) {
    ScoredCandidate failed;
    failed.score.failure = std::string("ParseError: ") + e.what();
    return failed;
  }
  return score_program(program, ref, cfg, params);
}

/// Text-level variant used by the CLI: the candidate is DSL source.
inline ScoredCandidate score_text(std::string_view candidate, const Reference& ref, const RewardConfig& cfg,
                                  const ExtractorParams& params) {
  ChartProgram program;
  try {
    program = parse(candidate);
  } catch (const ParseError& e) {
    ScoredCandidate failed;
    failed.score.failure = std::string("ParseError: ") + e.what();
    return failed;
  }
  return score_program(program, ref, cfg, params);
}

/// Group-relative advantages (R_i - mean) / std with the population standard
/// deviation. Groups whose std falls below `std_floor` get all-zero advantages.
inline std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (!(sd >= std_floor) || sd == 0.0) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

struct Candidate {
  TokenStream tokens;
  std::vector<double> old_logprobs;  // per-token log-probabilities under the sampling snapshot
  ScoredCandidate result;
  double advantage = 0.0;
};

struct CandidateGroup {
  std::size_t reference_index = 0;
  std::vector<Candidate> candidates;

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(candidates.size());
    for (const auto& c : candidates) r.push_back(c.result.score.total);
    return r;
  }
};

}  // namespace chartsim
