#pragma once

// Group relative policy optimization with the chart similarity reward.
//
// Objective maximized per batch of G groups, M candidates each:
//
//   J = 1/G sum_g 1/M sum_i 1/|o_i| sum_t [ min(r_it A_i, clip(r_it, 1-eps, 1+eps) A_i) - beta k3_it ]
//   r_it  = pi_theta(o_it) / pi_old(o_it)
//   k3_it = x - log x - 1,  x = pi_ref(o_it) / pi_theta(o_it)
//
// In sequence-ratio mode r_i = pi_theta(o_i) / pi_old(o_i) over the whole
// sequence and the surrogate is not averaged over tokens (the KL term still is).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartsim/parallel.hpp"
#include "chartsim/policy.hpp"
#include "chartsim/reward.hpp"
#include "chartsim/rng.hpp"

namespace chartsim {

enum class RatioMode { token, sequence };

struct GrpoConfig {
  int group_size = 4;
  double clip_eps = 0.2;
  bool clip = true;  // false disables clipping (REINFORCE-with-baseline when beta = 0)
  double kl_coef = 0.04;
  int inner_epochs = 1;
  int iterations = 300;
  int batch_groups = 32;
  double learning_rate = 0.005;
  double momentum = 0.9;
  RatioMode ratio_mode = RatioMode::token;
  std::uint64_t seed = 42;
  int eval_every = 50;
  int eval_samples = 4;  // sampled candidates per held-out reference
  SamplerConfig sampler{};
  RewardConfig reward{};
  RewardConfig eval_reward{};  // held-out scoring always uses this (default: combined reward)
  unsigned threads = default_threads();

  void validate() const {
    if (group_size < 2) throw ConfigError("group size M must be >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip epsilon must be in (0, 1)");
    if (!(kl_coef >= 0.0)) throw ConfigError("KL coefficient must be >= 0");
    if (inner_epochs < 1) throw ConfigError("inner epochs must be >= 1");
    if (batch_groups < 1) throw ConfigError("batch groups must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
    sampler.validate();
    reward.validate();
    eval_reward.validate();
  }
};

/// A reference chart together with the policy's view of it.
struct Prompt {
  Reference reference;
  std::vector<double> condition;
};

inline Prompt make_prompt(ChartProgram program, const ExtractorParams& extractor) {
  Prompt p;
  p.reference = make_reference(std::move(program), extractor);
  p.condition = condition(p.reference.image, extractor);
  return p;
}

struct TrainLogRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_attr = 0.0;
  double mean_vis = 0.0;
  double exec_rate = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double loss = 0.0;
};

struct HeldoutRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_attr = 0.0;
  double mean_vis = 0.0;
  double exec_rate = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<HeldoutRow> heldout;

  std::string train_csv() const {
    std::ostringstream out;
    out << "iteration,mean_reward,mean_attr,mean_vis,exec_rate,mean_kl,clip_fraction,loss\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d,%.9f,%.9f,%.9f,%.6f,%.9e,%.6f,%.9e\n", r.iteration, r.mean_reward,
                    r.mean_attr, r.mean_vis, r.exec_rate, r.mean_kl, r.clip_fraction, r.loss);
      out << buf;
    }
    return out.str();
  }

  std::string heldout_csv() const {
    std::ostringstream out;
    out << "iteration,mean_reward,mean_attr,mean_vis,exec_rate\n";
    char buf[192];
    for (const auto& r : heldout) {
      std::snprintf(buf, sizeof buf, "%d,%.9f,%.9f,%.9f,%.6f\n", r.iteration, r.mean_reward, r.mean_attr,
                    r.mean_vis, r.exec_rate);
      out << buf;
    }
    return out.str();
  }
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Rollout

/// Samples M candidates per selected prompt under `snapshot`, scores them and
/// fills group advantages. Candidate j of group g draws from seed
/// derive_seed(seed, g, j), so results do not depend on the thread count.
inline std::vector<CandidateGroup> rollout(const PolicySnapshot& snapshot, const std::vector<Prompt>& prompts,
                                           const std::vector<std::size_t>& batch, int group_size,
                                           const SamplerConfig& sampler, const RewardConfig& reward,
                                           const ExtractorParams& extractor, std::uint64_t seed,
                                           unsigned threads = default_threads()) {
  std::vector<CandidateGroup> groups(batch.size());
  parallel_for(
      batch.size(),
      [&](std::size_t g) {
        CandidateGroup& group = groups[g];
        group.reference_index = batch[g];
        const Prompt& prompt = prompts[batch[g]];
        group.candidates.resize(static_cast<std::size_t>(group_size));
        for (int j = 0; j < group_size; ++j) {
          SamplerConfig cfg = sampler;
          cfg.seed = derive_seed(seed, g, static_cast<std::uint64_t>(j));
          SampledSequence s = sample(snapshot, prompt.condition, cfg);
          Candidate& c = group.candidates[static_cast<std::size_t>(j)];
          c.result = score(s.tokens, prompt.reference, reward, extractor);
          c.tokens = std::move(s.tokens);
          c.old_logprobs = std::move(s.logprobs);
        }
        const auto adv = group_advantages(group.rewards(), reward.std_floor);
        for (std::size_t j = 0; j < adv.size(); ++j) group.candidates[j].advantage = adv[j];
      },
      threads);
  return groups;
}

inline double execution_rate(const std::vector<CandidateGroup>& groups) {
  std::size_t ok = 0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      ok += c.result.score.executed ? 1 : 0;
      ++n;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Update

struct GrpoStepStats {
  double loss = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t tokens = 0;
};

// Non-negative per-token KL estimator x - log x - 1 with x = pi_ref / pi_theta.
inline double k3_estimate(double logp_theta, double logp_ref) {
  const double log_x = logp_ref - logp_theta;
  return std::exp(log_x) - log_x - 1.0;
}

namespace detail {

inline void check_advantages(const CandidateGroup& g) {
  double mean = 0.0;
  bool all_zero = true;
  for (const auto& c : g.candidates) {
    mean += c.advantage;
    all_zero = all_zero && c.advantage == 0.0;
  }
  if (all_zero) return;
  const double n = static_cast<double>(g.candidates.size());
  mean /= n;
  double var = 0.0;
  for (const auto& c : g.candidates) var += (c.advantage - mean) * (c.advantage - mean);
  if (std::abs(mean) > 1e-9 || std::abs(std::sqrt(var / n) - 1.0) > 1e-6) {
    throw std::logic_error("group advantages are not normalized");
  }
}

struct CandidateGradient {
  PolicyParams grad;
  double objective = 0.0;
  double kl_sum = 0.0;
  std::size_t clipped = 0;
  std::size_t tokens = 0;
};

}  // namespace detail

/// Gradient of the loss -J for the given groups (accumulated into `grad`) and
/// step statistics. Exposed separately from grpo_step for gradient checks.
inline GrpoStepStats grpo_loss_and_grad(const PolicyParams& params, const std::vector<CandidateGroup>& groups,
                                        const std::vector<Prompt>& prompts, const PolicySnapshot& reference,
                                        const GrpoConfig& cfg, PolicyParams& grad) {
  const double num_groups = static_cast<double>(groups.size());
  std::vector<detail::CandidateGradient> parts(groups.size());

  parallel_for(
      groups.size(),
      [&](std::size_t gi) {
        const CandidateGroup& group = groups[gi];
        detail::check_advantages(group);
        detail::CandidateGradient& part = parts[gi];
        part.grad = params.zeros_like();
        const Prompt& prompt = prompts[group.reference_index];
        const bool active = std::any_of(group.candidates.begin(), group.candidates.end(),
                                        [](const Candidate& c) { return c.advantage != 0.0; });
        const double m = static_cast<double>(group.candidates.size());
        for (const Candidate& cand : group.candidates) {
          if (cand.tokens.empty()) continue;
          const auto ref_lp = log_prob(reference, prompt.condition, cand.tokens);
          const double len = static_cast<double>(cand.tokens.size());
          const double adv = cand.advantage;
          const double w = 1.0 / (num_groups * m);

          double seq_ratio = 1.0;
          bool seq_clipped = false;
          if (cfg.ratio_mode == RatioMode::sequence) {
            const auto cur = log_prob(params, prompt.condition, cand.tokens);
            double diff = 0.0;
            for (std::size_t t = 0; t < cur.size(); ++t) diff += cur[t] - cand.old_logprobs[t];
            seq_ratio = std::exp(diff);
            const double unclipped = seq_ratio * adv;
            const double clipped = std::clamp(seq_ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
            seq_clipped = cfg.clip && clipped < unclipped;
            if (active) part.objective += w * (cfg.clip ? std::min(unclipped, clipped) : unclipped);
          }

          auto coef = [&](std::size_t t, double lp) -> double {
            const double kl = k3_estimate(lp, ref_lp[t]);
            part.kl_sum += kl;
            ++part.tokens;
            if (!active) return 0.0;
            // d(-beta k3)/d logp = beta (x - 1)
            const double x = std::exp(ref_lp[t] - lp);
            double d_obj = cfg.kl_coef * (x - 1.0) / len;
            part.objective -= w * cfg.kl_coef * kl / len;
            if (cfg.ratio_mode == RatioMode::token) {
              const double r = std::exp(lp - cand.old_logprobs[t]);
              const double unclipped = r * adv;
              const double clipped = std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
              if (cfg.clip && clipped < unclipped) {
                ++part.clipped;
                part.objective += w * clipped / len;
              } else {
                part.objective += w * unclipped / len;
                d_obj += unclipped / len;  // d(r A)/d logp = r A
              }
            } else {
              if (seq_clipped) {
                ++part.clipped;
              } else {
                d_obj += seq_ratio * adv;
              }
            }
            return -w * d_obj;  // gradient of the loss -J
          };
          accumulate_sequence_grad(params, prompt.condition, cand.tokens, coef, part.grad);
        }
      },
      cfg.threads);

  GrpoStepStats stats;
  double objective = 0.0;
  double kl = 0.0;
  std::size_t clipped = 0;
  for (auto& part : parts) {
    grad += part.grad;
    objective += part.objective;
    kl += part.kl_sum;
    clipped += part.clipped;
    stats.tokens += part.tokens;
  }
  stats.loss = -objective;
  stats.mean_kl = stats.tokens ? kl / static_cast<double>(stats.tokens) : 0.0;
  stats.clip_fraction = stats.tokens ? static_cast<double>(clipped) / static_cast<double>(stats.tokens) : 0.0;
  return stats;
}

/// One gradient step on -J. Aborts on a non-finite loss or parameters.
inline GrpoStepStats grpo_step(PolicyParams& params, MomentumSgd& opt, const std::vector<CandidateGroup>& groups,
                               const std::vector<Prompt>& prompts, const PolicySnapshot& reference,
                               const GrpoConfig& cfg) {
  PolicyParams grad = params.zeros_like();
  const GrpoStepStats stats = grpo_loss_and_grad(params, groups, prompts, reference, cfg, grad);
  if (!std::isfinite(stats.loss) || !grad.all_finite()) {
    std::ostringstream msg;
    msg << "non-finite GRPO loss (loss=" << stats.loss << ", mean_kl=" << stats.mean_kl
        << ", clip_fraction=" << stats.clip_fraction << ", groups=" << groups.size() << ")";
    throw TrainingAborted(msg.str());
  }
  opt.step(params, grad);
  if (!params.all_finite()) throw TrainingAborted("non-finite policy parameters after GRPO update");
  return stats;
}

// ---------------------------------------------------------------------------
// Held-out evaluation and training loop

/// Expected reward of the sampling policy on `prompts`: `samples` draws per
/// prompt from fixed seeds, so successive checkpoints are compared on common
/// random numbers.
inline HeldoutRow heldout_evaluate(const PolicyParams& params, const std::vector<Prompt>& prompts,
                                   const SamplerConfig& sampler, const RewardConfig& reward,
                                   const ExtractorParams& extractor, int samples, std::uint64_t seed,
                                   unsigned threads = default_threads()) {
  struct Acc {
    double reward = 0.0, attr = 0.0, vis = 0.0;
    int executed = 0;
  };
  std::vector<Acc> acc(prompts.size());
  parallel_for(
      prompts.size(),
      [&](std::size_t i) {
        for (int j = 0; j < samples; ++j) {
          SamplerConfig cfg = sampler;
          cfg.seed = derive_seed(seed, i, static_cast<std::uint64_t>(j));
          const auto s = sample(params, prompts[i].condition, cfg);
          const auto r = score(s.tokens, prompts[i].reference, reward, extractor);
          acc[i].reward += r.score.total;
          acc[i].attr += r.score.attr;
          acc[i].vis += r.score.vis;
          acc[i].executed += r.score.executed ? 1 : 0;
        }
      },
      threads);
  HeldoutRow row;
  double n = 0.0;
  for (const auto& a : acc) {
    row.mean_reward += a.reward;
    row.mean_attr += a.attr;
    row.mean_vis += a.vis;
    row.exec_rate += a.executed;
    n += samples;
  }
  if (n > 0) {
    row.mean_reward /= n;
    row.mean_attr /= n;
    row.mean_vis /= n;
    row.exec_rate /= n;
  }
  return row;
}

struct TrainResult {
  PolicyParams params;
  TrainLog log;
};

/// GRPO training from an SFT checkpoint. pi_ref stays pinned to `initial`;
/// pi_old is re-snapshotted before every rollout. Held-out evaluation runs at
/// iteration 0, every `eval_every` iterations, and after the last iteration.
inline TrainResult train(const PolicyParams& initial, const std::vector<Prompt>& train_prompts,
                         const std::vector<Prompt>& heldout_prompts, const GrpoConfig& cfg,
                         const ExtractorParams& extractor, std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_prompts.empty()) throw ConfigError("training set is empty");
  const PolicySnapshot reference = initial;
  TrainResult result{initial, {}};
  MomentumSgd opt(cfg.learning_rate, cfg.momentum);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xE7A1ULL);

  auto evaluate_now = [&](int iteration) {
    if (heldout_prompts.empty()) return;
    HeldoutRow row = heldout_evaluate(result.params, heldout_prompts, cfg.sampler, cfg.eval_reward, extractor,
                                      cfg.eval_samples, eval_seed, cfg.threads);
    row.iteration = iteration;
    result.log.heldout.push_back(row);
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "[heldout] iter %4d  reward %.4f  attr %.4f  vis %.4f  exec %.3f\n", iteration,
                    row.mean_reward, row.mean_attr, row.mean_vis, row.exec_rate);
      *progress << buf << std::flush;
    }
  };

  // Epoch-wise shuffled order over the training prompts.
  std::vector<std::size_t> order(train_prompts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 shuffle_rng(derive_seed(cfg.seed, 0x5A0FULL));
  std::size_t cursor = order.size();

  evaluate_now(0);
  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<std::size_t> batch;
    for (int b = 0; b < cfg.batch_groups; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    const PolicySnapshot old = result.params;
    const auto groups = rollout(old, train_prompts, batch, cfg.group_size, cfg.sampler, cfg.reward, extractor,
                                derive_seed(cfg.seed, static_cast<std::uint64_t>(it)), cfg.threads);

    TrainLogRow row;
    row.iteration = it;
    double n = 0.0;
    for (const auto& g : groups) {
      for (const auto& c : g.candidates) {
        row.mean_reward += c.result.score.total;
        row.mean_attr += c.result.score.attr;
        row.mean_vis += c.result.score.vis;
        n += 1.0;
      }
    }
    row.mean_reward /= n;
    row.mean_attr /= n;
    row.mean_vis /= n;
    row.exec_rate = execution_rate(groups);

    GrpoStepStats stats;
    for (int e = 0; e < cfg.inner_epochs; ++e) {
      const GrpoStepStats s = grpo_step(result.params, opt, groups, train_prompts, reference, cfg);
      if (e == 0) stats = s;  // statistics of the first inner step (before any update)
    }
    row.mean_kl = stats.mean_kl;
    row.clip_fraction = stats.clip_fraction;
    row.loss = stats.loss;
    result.log.rows.push_back(row);

    if (progress) {
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "iter %4d  reward %.4f  attr %.4f  vis %.4f  exec %.3f  kl %.5f  clip %.3f  loss %+.5f\n", it,
                    row.mean_reward, row.mean_attr, row.mean_vis, row.exec_rate, row.mean_kl, row.clip_fraction,
                    row.loss);
      *progress << buf << std::flush;
    }
    if ((cfg.eval_every > 0 && it % cfg.eval_every == 0) || it == cfg.iterations) {
      if (result.log.heldout.empty() || result.log.heldout.back().iteration != it) evaluate_now(it);
    }
  }
  return result;
}

}  // namespace chartsim
