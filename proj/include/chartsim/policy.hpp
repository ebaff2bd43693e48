#pragma once

// Autoregressive token policy pi(y_t | y_<t, image).
//
// Each step sees the image condition (projected to `embed` dims), the last
// `context` token embeddings (zero-padded before the start) and the scalar
// position / max_length:
//
//   x = [P c ; e(y_{t-1}) ; ... ; e(y_{t-K}) ; t / max_length]
//   h = tanh(W1 x + b1)
//   logits = W2 h + b2
//
// Gradients are derived by hand; see accumulate_sequence_grad.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartsim/cslw.hpp"
#include "chartsim/dsl.hpp"
#include "chartsim/raster.hpp"
#include "chartsim/rng.hpp"
#include "chartsim/vision.hpp"

namespace chartsim {

struct PolicyShape {
  int vocab = Vocabulary::size;
  int embed = 32;
  int hidden = 64;
  int context = 4;
  int cond = 64;
  int max_length = 160;
  TokenId eos = Vocabulary::eos;

  int input_dim() const noexcept { return context * embed + embed + 1; }

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

/// All policy parameters in one flat buffer; the same type carries gradients
/// and optimizer state.
class PolicyParams {
 public:
  PolicyParams() = default;

  explicit PolicyParams(const PolicyShape& shape) : shape_(shape) {
    const std::size_t v = static_cast<std::size_t>(shape.vocab);
    const std::size_t d = static_cast<std::size_t>(shape.embed);
    const std::size_t h = static_cast<std::size_t>(shape.hidden);
    const std::size_t in = static_cast<std::size_t>(shape.input_dim());
    const std::size_t c = static_cast<std::size_t>(shape.cond);
    off_embedding_ = 0;
    off_cond_proj_ = off_embedding_ + v * d;
    off_w1_ = off_cond_proj_ + d * c;
    off_b1_ = off_w1_ + h * in;
    off_w2_ = off_b1_ + h;
    off_b2_ = off_w2_ + v * h;
    data_.assign(off_b2_ + v, 0.0);
  }

  const PolicyShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  // [vocab][embed]
  std::span<double> embedding() noexcept { return slice(off_embedding_, off_cond_proj_); }
  std::span<const double> embedding() const noexcept { return slice(off_embedding_, off_cond_proj_); }
  // [embed][cond]
  std::span<double> cond_proj() noexcept { return slice(off_cond_proj_, off_w1_); }
  std::span<const double> cond_proj() const noexcept { return slice(off_cond_proj_, off_w1_); }
  // [hidden][input_dim]
  std::span<double> w1() noexcept { return slice(off_w1_, off_b1_); }
  std::span<const double> w1() const noexcept { return slice(off_w1_, off_b1_); }
  std::span<double> b1() noexcept { return slice(off_b1_, off_w2_); }
  std::span<const double> b1() const noexcept { return slice(off_b1_, off_w2_); }
  // [vocab][hidden]
  std::span<double> w2() noexcept { return slice(off_w2_, off_b2_); }
  std::span<const double> w2() const noexcept { return slice(off_w2_, off_b2_); }
  std::span<double> b2() noexcept { return slice(off_b2_, data_.size()); }
  std::span<const double> b2() const noexcept { return slice(off_b2_, data_.size()); }

  PolicyParams zeros_like() const {
    PolicyParams z = *this;
    std::fill(z.data_.begin(), z.data_.end(), 0.0);
    return z;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  PolicyParams& operator+=(const PolicyParams& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  PolicyParams& operator*=(double k) {
    for (double& v : data_) v *= k;
    return *this;
  }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::span<double> slice(std::size_t b, std::size_t e) noexcept { return {data_.data() + b, e - b}; }
  std::span<const double> slice(std::size_t b, std::size_t e) const noexcept { return {data_.data() + b, e - b}; }

  PolicyShape shape_;
  std::vector<double> data_;
  std::size_t off_embedding_ = 0, off_cond_proj_ = 0, off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_b2_ = 0;
};

// Frozen copy used as pi_old or pi_ref.
using PolicySnapshot = PolicyParams;

inline PolicyParams init_policy(const PolicyShape& shape, std::uint64_t seed) {
  PolicyParams p(shape);
  SplitMix64 rng(seed);
  auto fill = [&rng](std::span<double> s, double a) {
    for (double& v : s) v = rng.uniform(-a, a);
  };
  fill(p.embedding(), 0.5);
  fill(p.cond_proj(), std::sqrt(6.0 / (shape.cond + shape.embed)));
  fill(p.w1(), std::sqrt(6.0 / (shape.input_dim() + shape.hidden)));
  fill(p.w2(), 0.05);
  return p;
}

// ---------------------------------------------------------------------------
// Image conditioning

inline constexpr int kConditionDim = 64;

/// Block-4 CNN features mean-pooled per channel.
inline std::vector<double> condition(const RasterImage& img, const ExtractorParams& extractor) {
  const FeaturePyramid pyr = features(img, extractor);
  const FeatureMap& top = pyr.back();
  std::vector<double> out(static_cast<std::size_t>(top.channels), 0.0);
  const int area = top.height * top.width;
  for (int c = 0; c < top.channels; ++c) {
    double s = 0.0;
    for (int i = 0; i < area; ++i) s += top.data[static_cast<std::size_t>(c * area + i)];
    out[static_cast<std::size_t>(c)] = s / area;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace detail {

struct StepCache {
  std::vector<double> x;       // input_dim
  std::vector<double> hidden;  // hidden
  std::vector<double> logits;  // vocab
};

inline std::vector<double> project_condition(const PolicyParams& p, std::span<const double> cond) {
  const PolicyShape& s = p.shape();
  if (static_cast<int>(cond.size()) != s.cond) throw std::invalid_argument("condition vector has wrong length");
  std::vector<double> out(static_cast<std::size_t>(s.embed), 0.0);
  const auto proj = p.cond_proj();
  for (int r = 0; r < s.embed; ++r) {
    double acc = 0.0;
    const double* row = proj.data() + static_cast<std::size_t>(r) * s.cond;
    for (int c = 0; c < s.cond; ++c) acc += row[c] * cond[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

// Forward for the token at position `t` (predicting tokens[t] from tokens[0..t)).
inline void forward_step(const PolicyParams& p, std::span<const double> projected, std::span<const TokenId> prefix,
                         std::size_t t, StepCache& cache) {
  const PolicyShape& s = p.shape();
  const std::size_t d = static_cast<std::size_t>(s.embed);
  const std::size_t in = static_cast<std::size_t>(s.input_dim());
  cache.x.assign(in, 0.0);
  std::copy(projected.begin(), projected.end(), cache.x.begin());
  const auto emb = p.embedding();
  for (int k = 0; k < s.context; ++k) {
    if (t < static_cast<std::size_t>(k + 1)) break;
    const TokenId tok = prefix[t - static_cast<std::size_t>(k) - 1];
    if (tok < 0 || tok >= s.vocab) throw std::out_of_range("token index out of range: " + std::to_string(tok));
    std::copy_n(emb.data() + static_cast<std::size_t>(tok) * d, d, cache.x.begin() + static_cast<std::ptrdiff_t>(d * (k + 1)));
  }
  cache.x[in - 1] = static_cast<double>(t) / s.max_length;

  const auto w1 = p.w1();
  const auto b1 = p.b1();
  cache.hidden.resize(static_cast<std::size_t>(s.hidden));
  for (int j = 0; j < s.hidden; ++j) {
    const double* row = w1.data() + static_cast<std::size_t>(j) * in;
    double acc = b1[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * cache.x[i];
    cache.hidden[static_cast<std::size_t>(j)] = std::tanh(acc);
  }

  const auto w2 = p.w2();
  const auto b2 = p.b2();
  const std::size_t h = static_cast<std::size_t>(s.hidden);
  cache.logits.resize(static_cast<std::size_t>(s.vocab));
  for (int v = 0; v < s.vocab; ++v) {
    const double* row = w2.data() + static_cast<std::size_t>(v) * h;
    double acc = b2[static_cast<std::size_t>(v)];
    for (std::size_t j = 0; j < h; ++j) acc += row[j] * cache.hidden[j];
    cache.logits[static_cast<std::size_t>(v)] = acc;
  }
}

// In-place log-softmax; returns nothing, logits become log-probabilities.
inline void log_softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  for (double& v : z) v -= lse;
}

}  // namespace detail

/// Logits for the next token after `prefix`.
inline std::vector<double> logits(const PolicyParams& p, std::span<const double> cond, std::span<const TokenId> prefix) {
  const auto projected = detail::project_condition(p, cond);
  detail::StepCache cache;
  // forward_step reads prefix[0..t); pass t = prefix.size().
  std::vector<TokenId> padded(prefix.begin(), prefix.end());
  padded.push_back(p.shape().eos);
  detail::forward_step(p, projected, padded, prefix.size(), cache);
  return cache.logits;
}

/// Per-token log pi(y_t | y_<t, cond) for every position of `sequence`.
inline std::vector<double> log_prob(const PolicyParams& p, std::span<const double> cond, std::span<const TokenId> sequence) {
  const auto projected = detail::project_condition(p, cond);
  detail::StepCache cache;
  std::vector<double> out(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const TokenId y = sequence[t];
    if (y < 0 || y >= p.shape().vocab) throw std::out_of_range("token index out of range: " + std::to_string(y));
    detail::forward_step(p, projected, sequence, t, cache);
    detail::log_softmax_inplace(cache.logits);
    out[t] = cache.logits[static_cast<std::size_t>(y)];
  }
  return out;
}

inline double sequence_log_prob(const PolicyParams& p, std::span<const double> cond, std::span<const TokenId> sequence) {
  const auto lp = log_prob(p, cond, sequence);
  return std::accumulate(lp.begin(), lp.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Backward pass

/// Adds sum_t coef_t * d log pi(y_t) / d theta into `grad` and returns the
/// per-token log-probabilities. `coef(t, logp_t)` is evaluated after the forward
/// pass of step t, so it may depend on that token's own log-probability.
inline std::vector<double> accumulate_sequence_grad(const PolicyParams& p, std::span<const double> cond,
                                                    std::span<const TokenId> sequence,
                                                    const std::function<double(std::size_t, double)>& coef,
                                                    PolicyParams& grad) {
  const PolicyShape& s = p.shape();
  const std::size_t d = static_cast<std::size_t>(s.embed);
  const std::size_t h = static_cast<std::size_t>(s.hidden);
  const std::size_t in = static_cast<std::size_t>(s.input_dim());
  const std::size_t vocab = static_cast<std::size_t>(s.vocab);

  const auto projected = detail::project_condition(p, cond);
  detail::StepCache cache;
  std::vector<double> g_hidden(h);
  std::vector<double> g_x(in);
  std::vector<double> g_projected(d, 0.0);
  std::vector<double> out(sequence.size());

  const auto w1 = p.w1();
  const auto w2 = p.w2();
  auto gw1 = grad.w1();
  auto gb1 = grad.b1();
  auto gw2 = grad.w2();
  auto gb2 = grad.b2();
  auto gemb = grad.embedding();

  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const TokenId y = sequence[t];
    if (y < 0 || y >= s.vocab) throw std::out_of_range("token index out of range: " + std::to_string(y));
    detail::forward_step(p, projected, sequence, t, cache);
    detail::log_softmax_inplace(cache.logits);
    const double lp = cache.logits[static_cast<std::size_t>(y)];
    out[t] = lp;
    const double c = coef(t, lp);
    if (c == 0.0) continue;

    // d logp_y / d z = onehot(y) - softmax(z)
    std::fill(g_hidden.begin(), g_hidden.end(), 0.0);
    for (std::size_t v = 0; v < vocab; ++v) {
      const double gz = c * ((static_cast<TokenId>(v) == y ? 1.0 : 0.0) - std::exp(cache.logits[v]));
      gb2[v] += gz;
      double* grow = gw2.data() + v * h;
      const double* wrow = w2.data() + v * h;
      for (std::size_t j = 0; j < h; ++j) {
        grow[j] += gz * cache.hidden[j];
        g_hidden[j] += gz * wrow[j];
      }
    }
    std::fill(g_x.begin(), g_x.end(), 0.0);
    for (std::size_t j = 0; j < h; ++j) {
      const double ga = g_hidden[j] * (1.0 - cache.hidden[j] * cache.hidden[j]);
      gb1[j] += ga;
      double* grow = gw1.data() + j * in;
      const double* wrow = w1.data() + j * in;
      for (std::size_t i = 0; i < in; ++i) {
        grow[i] += ga * cache.x[i];
        g_x[i] += ga * wrow[i];
      }
    }
    for (std::size_t r = 0; r < d; ++r) g_projected[r] += g_x[r];
    for (int k = 0; k < s.context; ++k) {
      if (t < static_cast<std::size_t>(k + 1)) break;
      const TokenId tok = sequence[t - static_cast<std::size_t>(k) - 1];
      double* erow = gemb.data() + static_cast<std::size_t>(tok) * d;
      const double* src = g_x.data() + d * static_cast<std::size_t>(k + 1);
      for (std::size_t r = 0; r < d; ++r) erow[r] += src[r];
    }
  }

  auto gproj = grad.cond_proj();
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < static_cast<std::size_t>(s.cond); ++c) {
      gproj[r * static_cast<std::size_t>(s.cond) + c] += g_projected[r] * cond[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

struct SamplerConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k = 80;
  int max_length = 160;
  bool greedy = false;  // argmax decoding, the temperature -> 0 limit
  std::uint64_t seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
    if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
    if (max_length < 1) throw std::invalid_argument("max_length must be >= 1");
  }
};

struct SampledSequence {
  TokenStream tokens;
  std::vector<double> logprobs;  // unfiltered log-softmax of the policy at each step
};

/// Sampling distribution over the vocabulary after temperature, top-k and
/// top-p filtering; zero outside the kept set.
inline std::vector<double> filtered_distribution(std::span<const double> logits, const SamplerConfig& cfg) {
  const std::size_t v = logits.size();
  std::vector<std::size_t> order(v);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Highest logit first; ties keep the lower token id.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), v);
  const double top = logits[order[0]];
  std::vector<double> probs(v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = std::exp((logits[order[i]] - top) / cfg.temperature);
    probs[order[i]] = w;
    total += w;
  }
  // Nucleus: smallest prefix (in probability order) reaching top_p.
  double cumulative = 0.0;
  std::size_t keep = k;
  for (std::size_t i = 0; i < k; ++i) {
    cumulative += probs[order[i]] / total;
    if (cumulative >= cfg.top_p) {
      keep = i + 1;
      break;
    }
  }
  double kept_total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (i >= keep) {
      probs[order[i]] = 0.0;
    } else {
      kept_total += probs[order[i]];
    }
  }
  for (double& q : probs) q /= kept_total;
  return probs;
}

inline std::size_t draw(std::span<const double> probs, SplitMix64& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Samples until end-of-sequence or max_length, drawing from an rng seeded
/// with cfg.seed.
inline SampledSequence sample(const PolicyParams& p, std::span<const double> cond, const SamplerConfig& cfg) {
  if (!cfg.greedy) cfg.validate();
  SplitMix64 rng(cfg.seed);
  const auto projected = detail::project_condition(p, cond);
  detail::StepCache cache;
  SampledSequence out;
  const int limit = std::min(cfg.max_length, p.shape().max_length);
  for (int t = 0; t < limit; ++t) {
    out.tokens.push_back(p.shape().eos);  // placeholder; forward_step only reads the prefix
    detail::forward_step(p, projected, out.tokens, static_cast<std::size_t>(t), cache);
    std::vector<double> lp = cache.logits;
    detail::log_softmax_inplace(lp);
    std::size_t tok;
    if (cfg.greedy) {
      tok = argmax(cache.logits);
    } else {
      tok = draw(filtered_distribution(cache.logits, cfg), rng);
    }
    out.tokens.back() = static_cast<TokenId>(tok);
    out.logprobs.push_back(lp[tok]);
    if (static_cast<TokenId>(tok) == p.shape().eos) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and supervised fine-tuning

/// Gradient descent with heavy-ball momentum: v <- mu v + g; theta <- theta - lr v.
class MomentumSgd {
 public:
  MomentumSgd(double lr, double momentum = 0.9) : lr_(lr), momentum_(momentum) {}

  void step(PolicyParams& params, const PolicyParams& grad) {
    if (velocity_.size() != params.size()) velocity_ = params.zeros_like();
    auto v = velocity_.flat();
    auto g = grad.flat();
    auto theta = params.flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      theta[i] -= lr_ * v[i];
    }
  }

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  PolicyParams velocity_;
};

struct SftExample {
  std::vector<double> cond;
  TokenStream target;
};

/// Mean over sequences of the per-token negative log-likelihood; adds its
/// gradient into `grad`.
inline double sft_loss_and_grad(const PolicyParams& p, std::span<const SftExample> batch, PolicyParams& grad) {
  double loss = 0.0;
  const double nb = static_cast<double>(batch.size());
  for (const SftExample& ex : batch) {
    const double scale = -1.0 / (nb * static_cast<double>(ex.target.size()));
    const auto lp = accumulate_sequence_grad(p, ex.cond, ex.target, [scale](std::size_t, double) { return scale; }, grad);
    double s = 0.0;
    for (double v : lp) s += v;
    loss += -s / static_cast<double>(ex.target.size());
  }
  return loss / nb;
}

inline double sft_loss(const PolicyParams& p, std::span<const SftExample> batch) {
  double loss = 0.0;
  for (const SftExample& ex : batch) {
    const auto lp = log_prob(p, ex.cond, ex.target);
    loss += -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(ex.target.size());
  }
  return loss / static_cast<double>(batch.size());
}

/// One optimizer step on the batch; returns the pre-update loss.
inline double sft_step(PolicyParams& p, MomentumSgd& opt, std::span<const SftExample> batch) {
  PolicyParams grad = p.zeros_like();
  const double loss = sft_loss_and_grad(p, batch, grad);
  opt.step(p, grad);
  return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::vector<cslw::Tensor> to_tensors(const PolicyParams& p) {
  const PolicyShape& s = p.shape();
  auto u = [](int v) { return static_cast<std::uint32_t>(v); };
  auto tensor = [](std::string tag, std::vector<std::uint32_t> shape, std::span<const double> data) {
    return cslw::Tensor{std::move(tag), cslw::DType::f64, std::move(shape), std::vector<double>(data.begin(), data.end())};
  };
  const std::vector<double> meta = {static_cast<double>(s.max_length), static_cast<double>(s.eos)};
  return {
      tensor("policy.meta", {2}, meta),
      tensor("policy.embedding", {u(s.vocab), u(s.embed)}, p.embedding()),
      tensor("policy.cond_proj", {u(s.embed), u(s.cond)}, p.cond_proj()),
      tensor("policy.w1", {u(s.hidden), u(s.input_dim())}, p.w1()),
      tensor("policy.b1", {u(s.hidden)}, p.b1()),
      tensor("policy.w2", {u(s.vocab), u(s.hidden)}, p.w2()),
      tensor("policy.b2", {u(s.vocab)}, p.b2()),
  };
}

inline PolicyParams policy_from_tensors(const std::vector<cslw::Tensor>& tensors) {
  auto find = [&](std::string_view tag) -> const cslw::Tensor& {
    for (const auto& t : tensors) {
      if (t.tag == tag) return t;
    }
    throw cslw::FormatError(cslw::FormatError::Kind::shape_mismatch, "missing tensor '" + std::string(tag) + "'");
  };
  const auto& emb = find("policy.embedding");
  const auto& proj = find("policy.cond_proj");
  const auto& w1 = find("policy.w1");
  const auto& meta = find("policy.meta");
  if (emb.shape.size() != 2 || proj.shape.size() != 2 || w1.shape.size() != 2 || meta.data.size() != 2) {
    throw cslw::FormatError(cslw::FormatError::Kind::shape_mismatch, "malformed policy checkpoint");
  }
  PolicyShape s;
  s.vocab = static_cast<int>(emb.shape[0]);
  s.embed = static_cast<int>(emb.shape[1]);
  s.cond = static_cast<int>(proj.shape[1]);
  s.hidden = static_cast<int>(w1.shape[0]);
  const int in = static_cast<int>(w1.shape[1]);
  if (s.embed <= 0 || (in - s.embed - 1) % s.embed != 0) {
    throw cslw::FormatError(cslw::FormatError::Kind::shape_mismatch, "policy input width inconsistent with embedding");
  }
  s.context = (in - s.embed - 1) / s.embed;
  s.max_length = static_cast<int>(meta.data[0]);
  s.eos = static_cast<TokenId>(meta.data[1]);
  PolicyParams p(s);
  auto copy = [&](std::string_view tag, std::vector<std::uint32_t> shape, std::span<double> dst) {
    const auto& t = cslw::expect(tensors, tag, shape);
    std::copy(t.data.begin(), t.data.end(), dst.begin());
  };
  auto u = [](int v) { return static_cast<std::uint32_t>(v); };
  copy("policy.embedding", {u(s.vocab), u(s.embed)}, p.embedding());
  copy("policy.cond_proj", {u(s.embed), u(s.cond)}, p.cond_proj());
  copy("policy.w1", {u(s.hidden), u(in)}, p.w1());
  copy("policy.b1", {u(s.hidden)}, p.b1());
  copy("policy.w2", {u(s.vocab), u(s.hidden)}, p.w2());
  copy("policy.b2", {u(s.vocab)}, p.b2());
  if (!p.all_finite()) throw cslw::FormatError(cslw::FormatError::Kind::shape_mismatch, "non-finite policy parameter");
  return p;
}

inline void save_policy(const PolicyParams& p, const std::string& path) { cslw::save(to_tensors(p), path); }
inline PolicyParams load_policy(const std::string& path) { return policy_from_tensors(cslw::load(path)); }

}  // namespace chartsim
