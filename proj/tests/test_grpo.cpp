#include <gtest/gtest.h>

#include <cmath>

#include "chartsim/grpo.hpp"
#include "chartsim/harness/corpus.hpp"
#include "oracles.hpp"

using namespace chartsim;

namespace {

const ExtractorParams& extractor() {
  static const ExtractorParams params = init_extractor(7);
  return params;
}

std::vector<Prompt> chart_prompts(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_prompt(random_program(rng), extractor()));
  return out;
}

// Groups with hand-set advantages over random-token candidates (so every token
// has a non-trivial probability under the policy).
std::vector<CandidateGroup> synthetic_groups(const PolicyParams& old, const std::vector<Prompt>& prompts,
                                             SplitMix64& rng, int groups, int m) {
  std::vector<CandidateGroup> out;
  for (int g = 0; g < groups; ++g) {
    CandidateGroup group;
    group.reference_index = static_cast<std::size_t>(g) % prompts.size();
    std::vector<double> rewards;
    for (int j = 0; j < m; ++j) {
      Candidate c;
      const int len = rng.range(3, 9);
      for (int t = 0; t < len; ++t) c.tokens.push_back(static_cast<TokenId>(rng.range(1, Vocabulary::size - 1)));
      c.old_logprobs = log_prob(old, prompts[group.reference_index].condition, c.tokens);
      rewards.push_back(rng.uniform(0.0, 2.0));
      group.candidates.push_back(std::move(c));
    }
    const auto adv = group_advantages(rewards, 1e-6);
    for (int j = 0; j < m; ++j) group.candidates[static_cast<std::size_t>(j)].advantage = adv[static_cast<std::size_t>(j)];
    out.push_back(std::move(group));
  }
  return out;
}

double grpo_loss(const PolicyParams& p, const std::vector<CandidateGroup>& groups, const std::vector<Prompt>& prompts,
                 const PolicyParams& ref, const GrpoConfig& cfg) {
  PolicyParams scratch = p.zeros_like();
  return grpo_loss_and_grad(p, groups, prompts, ref, cfg, scratch).loss;
}

double worst_fd_error(PolicyParams& p, const std::vector<CandidateGroup>& groups, const std::vector<Prompt>& prompts,
                      const PolicyParams& ref, const GrpoConfig& cfg, SplitMix64& rng, int probes) {
  PolicyParams grad = p.zeros_like();
  grpo_loss_and_grad(p, groups, prompts, ref, cfg, grad);
  auto flat = p.flat();
  const std::size_t w2_begin = static_cast<std::size_t>(p.w2().data() - flat.data());
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    // alternate between anywhere and the output layer, where every probe is live
    const std::size_t idx = i % 2 ? rng.below(flat.size()) : w2_begin + rng.below(p.w2().size());
    const double numeric = oracle::central_difference([&] { return grpo_loss(p, groups, prompts, ref, cfg); },
                                                      flat[idx], 1e-5);
    const double analytic = grad.flat()[idx];
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
  }
  return worst;
}

void perturb(PolicyParams& p, SplitMix64& rng, double scale) {
  for (double& v : p.flat()) v += rng.uniform(-scale, scale);
}

PolicyShape bandit_shape() { return PolicyShape{2, 2, 2, 1, 2, 1, 0}; }

}  // namespace

TEST(K3, NonNegativeAndZeroOnlyWhenEqual) {
  EXPECT_EQ(k3_estimate(-1.2, -1.2), 0.0);
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-8, 0), b = rng.uniform(-8, 0);
    ASSERT_GE(k3_estimate(a, b), 0.0);
    if (a != b) {
      ASSERT_GT(k3_estimate(a, b), 0.0);
    }
  }
}

TEST(Surrogate, RatiosStartAtOneAndKlAtZero) {
  SplitMix64 rng(2);
  const auto prompts = chart_prompts(3, 1);
  const auto p = init_policy(PolicyShape{}, 3);
  const auto groups = synthetic_groups(p, prompts, rng, 3, 4);
  GrpoConfig cfg;
  PolicyParams grad = p.zeros_like();
  const auto stats = grpo_loss_and_grad(p, groups, prompts, p, cfg, grad);
  EXPECT_EQ(stats.mean_kl, 0.0);
  EXPECT_EQ(stats.clip_fraction, 0.0);
  // with r = 1 the loss is -(1/GM) sum_i A_i, which is 0 for normalized advantages
  EXPECT_NEAR(stats.loss, 0.0, 1e-12);

  // policy-gradient consistency: grad = -(1/GM) sum_i A_i/|o_i| sum_t grad log pi
  PolicyParams pg = p.zeros_like();
  const double gm = 12.0;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      const double k = -c.advantage / (gm * static_cast<double>(c.tokens.size()));
      accumulate_sequence_grad(p, prompts[g.reference_index].condition, c.tokens, [k](std::size_t, double) { return k; }, pg);
    }
  }
  for (std::size_t i = 0; i < pg.size(); ++i) ASSERT_NEAR(grad.flat()[i], pg.flat()[i], 1e-12);
}

TEST(Surrogate, GradientMatchesFiniteDifferencesTokenMode) {
  SplitMix64 rng(4);
  const auto prompts = chart_prompts(2, 2);
  auto old = init_policy(PolicyShape{}, 5);
  const auto groups = synthetic_groups(old, prompts, rng, 2, 4);
  PolicyParams ref = old;
  perturb(ref, rng, 0.05);  // non-trivial KL term
  GrpoConfig cfg;
  cfg.kl_coef = 0.3;
  auto p = old;  // E = 1: ratios are 1
  EXPECT_LE(worst_fd_error(p, groups, prompts, ref, cfg, rng, 120), 1e-4);
  perturb(p, rng, 0.01);  // later inner epoch: ratios away from 1, mostly unclipped
  EXPECT_LE(worst_fd_error(p, groups, prompts, ref, cfg, rng, 60), 1e-4);
}

TEST(Surrogate, GradientMatchesFiniteDifferencesSequenceMode) {
  SplitMix64 rng(6);
  const auto prompts = chart_prompts(2, 3);
  auto old = init_policy(PolicyShape{}, 7);
  const auto groups = synthetic_groups(old, prompts, rng, 2, 4);
  PolicyParams ref = old;
  perturb(ref, rng, 0.05);
  GrpoConfig cfg;
  cfg.kl_coef = 0.3;
  cfg.ratio_mode = RatioMode::sequence;
  auto p = old;
  EXPECT_LE(worst_fd_error(p, groups, prompts, ref, cfg, rng, 100), 1e-4);
}

TEST(Surrogate, ClippedBranchHasZeroGradient) {
  // one-token candidates, A = +1 / -1; a large first step pushes both ratios
  // outside [1 - eps, 1 + eps] in the direction of their advantage
  const PolicyShape shape = bandit_shape();
  auto p = init_policy(shape, 8);
  const std::vector<Prompt> prompts = {Prompt{Reference{}, {0.3, 0.7}}};
  CandidateGroup g;
  for (TokenId tok : {1, 0}) {
    Candidate c;
    c.tokens = {tok};
    c.old_logprobs = log_prob(p, prompts[0].condition, c.tokens);
    c.advantage = tok == 1 ? 1.0 : -1.0;
    g.candidates.push_back(c);
  }
  const std::vector<CandidateGroup> groups = {g};
  GrpoConfig cfg;
  cfg.kl_coef = 0.0;
  MomentumSgd opt(20.0, 0.0);
  grpo_step(p, opt, groups, prompts, p, cfg);  // inner epoch 1
  PolicyParams grad = p.zeros_like();
  const auto stats = grpo_loss_and_grad(p, groups, prompts, p, cfg, grad);  // inner epoch 2
  const double r1 = std::exp(log_prob(p, prompts[0].condition, g.candidates[0].tokens)[0] - g.candidates[0].old_logprobs[0]);
  const double r0 = std::exp(log_prob(p, prompts[0].condition, g.candidates[1].tokens)[0] - g.candidates[1].old_logprobs[0]);
  ASSERT_GT(r1, 1.0 + cfg.clip_eps);
  ASSERT_LT(r0, 1.0 - cfg.clip_eps);
  EXPECT_EQ(stats.clip_fraction, 1.0);
  for (double v : grad.flat()) EXPECT_EQ(v, 0.0);
  SplitMix64 rng(9);
  auto flat = p.flat();
  for (int i = 0; i < 20; ++i) {
    const double fd = oracle::central_difference([&] { return grpo_loss(p, groups, prompts, p, cfg); },
                                                 flat[rng.below(flat.size())], 1e-6);
    EXPECT_NEAR(fd, 0.0, 1e-9);
  }
  // without clipping the same state has a live gradient
  cfg.clip = false;
  PolicyParams live = p.zeros_like();
  grpo_loss_and_grad(p, groups, prompts, p, cfg, live);
  EXPECT_GT(std::abs(live.b2()[1]), 0.0);
}

TEST(Bandit, ReinforceUpdateMatchesClosedForm) {
  // two arms, reward 1 for token 1 and 0 for token 0; M = 2, beta = 0, no clip.
  // A mixed group has advantages (+1, -1) and contributes
  // d J / d b2 = (1/(G M)) [(e1 - p) - (e0 - p)] = (e1 - e0) / (G M).
  const PolicyShape shape = bandit_shape();
  const auto p = init_policy(shape, 10);
  const std::vector<Prompt> prompts = {Prompt{Reference{}, {0.5, -0.2}}};
  std::vector<CandidateGroup> groups;
  const std::vector<std::pair<TokenId, TokenId>> draws = {{1, 0}, {0, 1}, {1, 1}, {0, 0}, {1, 0}};
  int mixed = 0;
  for (auto [a, b] : draws) {
    CandidateGroup g;
    for (TokenId t : {a, b}) {
      Candidate c;
      c.tokens = {t};
      c.old_logprobs = log_prob(p, prompts[0].condition, c.tokens);
      g.candidates.push_back(c);
    }
    const std::vector<double> rewards = {static_cast<double>(a), static_cast<double>(b)};
    const auto adv = group_advantages(rewards, 1e-6);
    g.candidates[0].advantage = adv[0];
    g.candidates[1].advantage = adv[1];
    mixed += a != b ? 1 : 0;
    groups.push_back(g);
  }
  GrpoConfig cfg;
  cfg.kl_coef = 0.0;
  cfg.clip = false;
  PolicyParams grad = p.zeros_like();
  grpo_loss_and_grad(p, groups, prompts, p, cfg, grad);
  const double expected = static_cast<double>(mixed) / (5.0 * 2.0);
  EXPECT_NEAR(grad.b2()[1], -expected, 1e-15);  // loss gradient = -dJ
  EXPECT_NEAR(grad.b2()[0], expected, 1e-15);
  // so a descent step raises the probability of the rewarded arm
  auto q = p;
  MomentumSgd opt(0.5, 0.0);
  opt.step(q, grad);
  EXPECT_GT(std::exp(log_prob(q, prompts[0].condition, TokenStream{1})[0]),
            std::exp(log_prob(p, prompts[0].condition, TokenStream{1})[0]));
}

namespace {

// Sampled GRPO on the two-arm bandit; returns the mean KL over the last 100 iterations.
double bandit_kl_at_convergence(double beta) {
  const PolicyShape shape = bandit_shape();
  PolicyParams p(shape);  // uniform reference
  const PolicyParams ref = p;
  const std::vector<Prompt> prompts = {Prompt{Reference{}, {0.0, 0.0}}};
  GrpoConfig cfg;
  cfg.kl_coef = beta;
  cfg.threads = 1;
  MomentumSgd opt(0.2, 0.0);
  double kl = 0.0;
  for (int it = 0; it < 400; ++it) {
    std::vector<CandidateGroup> groups(32);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      std::vector<double> rewards;
      for (int j = 0; j < 4; ++j) {
        SamplerConfig s;
        s.seed = derive_seed(17, static_cast<std::uint64_t>(it), g * 4 + static_cast<std::size_t>(j));
        const auto out = sample(p, prompts[0].condition, s);
        Candidate c;
        c.tokens = out.tokens;
        c.old_logprobs = out.logprobs;
        rewards.push_back(c.tokens[0] == 1 ? 1.0 : 0.0);
        groups[g].candidates.push_back(c);
      }
      const auto adv = group_advantages(rewards, 1e-6);
      for (std::size_t j = 0; j < adv.size(); ++j) groups[g].candidates[j].advantage = adv[j];
    }
    const auto stats = grpo_step(p, opt, groups, prompts, ref, cfg);
    if (it >= 300) kl += stats.mean_kl;
  }
  return kl / 100.0;
}

}  // namespace

TEST(Bandit, DoublingBetaLowersKl) {
  const double kl1 = bandit_kl_at_convergence(0.5);
  const double kl2 = bandit_kl_at_convergence(1.0);
  EXPECT_GT(kl1, 0.0);
  EXPECT_LT(kl2, kl1);
}

TEST(Rollout, LogProbsExecutionRateAndDeterminism) {
  const auto prompts = chart_prompts(4, 5);
  const auto p = init_policy(PolicyShape{}, 11);
  SamplerConfig s;
  s.max_length = 40;
  const std::vector<std::size_t> batch = {0, 1, 2, 3, 1};
  const auto groups = rollout(p, prompts, batch, 4, s, {}, extractor(), 77, 2);
  ASSERT_EQ(groups.size(), 5u);
  std::size_t ok = 0;
  for (const auto& g : groups) {
    ASSERT_EQ(g.candidates.size(), 4u);
    for (const auto& c : g.candidates) {
      const auto lp = log_prob(p, prompts[g.reference_index].condition, c.tokens);
      for (std::size_t t = 0; t < lp.size(); ++t) ASSERT_NEAR(lp[t], c.old_logprobs[t], 1e-9);
      ok += c.result.score.executed ? 1 : 0;
      if (!c.result.score.executed) {
        ASSERT_EQ(c.result.score.total, 0.0);
      }
    }
  }
  EXPECT_EQ(execution_rate(groups), static_cast<double>(ok) / 20.0);
  const auto again = rollout(p, prompts, batch, 4, s, {}, extractor(), 77, 1);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t j = 0; j < 4; ++j) ASSERT_EQ(again[g].candidates[j].tokens, groups[g].candidates[j].tokens);
}

TEST(Rollout, DeterministicPolicyGivesZeroAdvantages) {
  const auto prompts = chart_prompts(3, 6);
  const auto p = init_policy(PolicyShape{}, 12);
  SamplerConfig s;
  s.top_k = 1;
  const auto groups = rollout(p, prompts, {0, 1, 2}, 4, s, {}, extractor(), 5);
  for (const auto& g : groups)
    for (const auto& c : g.candidates) EXPECT_EQ(c.advantage, 0.0);
  GrpoConfig cfg;
  PolicyParams grad = p.zeros_like();
  grpo_loss_and_grad(p, groups, prompts, p, cfg, grad);
  for (double v : grad.flat()) ASSERT_EQ(v, 0.0);  // no update for uniform groups
}

TEST(Update, RejectsUnnormalizedAdvantages) {
  SplitMix64 rng(13);
  const auto prompts = chart_prompts(1, 7);
  const auto p = init_policy(PolicyShape{}, 13);
  auto groups = synthetic_groups(p, prompts, rng, 1, 4);
  groups[0].candidates[0].advantage += 0.5;
  PolicyParams grad = p.zeros_like();
  EXPECT_THROW(grpo_loss_and_grad(p, groups, prompts, p, GrpoConfig{}, grad), std::logic_error);
}

TEST(Config, Validation) {
  GrpoConfig cfg;
  cfg.group_size = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.clip_eps = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.inner_epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, ReproducibleAndThreadIndependent) {
  const auto train_prompts = chart_prompts(6, 8);
  const auto heldout = chart_prompts(3, 9);
  const auto init = init_policy(PolicyShape{}, 14);
  GrpoConfig cfg;
  cfg.iterations = 3;
  cfg.batch_groups = 4;
  cfg.eval_every = 2;
  cfg.eval_samples = 2;
  cfg.sampler.max_length = 40;
  cfg.threads = 1;
  const auto a = train(init, train_prompts, heldout, cfg, extractor());
  cfg.threads = 3;
  const auto b = train(init, train_prompts, heldout, cfg, extractor());
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.log.train_csv(), b.log.train_csv());
  EXPECT_EQ(a.log.heldout_csv(), b.log.heldout_csv());
  ASSERT_EQ(a.log.rows.size(), 3u);
  ASSERT_EQ(a.log.heldout.size(), 3u);  // iterations 0, 2, 3
  EXPECT_EQ(a.log.heldout[1].iteration, 2);
  for (const auto& r : a.log.rows) {
    EXPECT_TRUE(std::isfinite(r.loss) && std::isfinite(r.mean_kl));
    EXPECT_GE(r.exec_rate, 0.0);
    EXPECT_LE(r.exec_rate, 1.0);
  }
}
