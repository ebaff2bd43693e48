#pragma once

// End-to-end experiment plumbing: configuration, corpus splits, dataset,
// supervised fine-tuning and GRPO, shared by the CLI and the acceptance suite.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chartsim/attributes.hpp"
#include "chartsim/grpo.hpp"
#include "chartsim/harness/corpus.hpp"
#include "chartsim/harness/dataset.hpp"
#include "chartsim/policy.hpp"
#include "chartsim/vision.hpp"

namespace chartsim {

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::size_t train_size = 256;
  std::size_t heldout_size = 64;
  CorpusKnobs knobs{};
  std::set<ChartType> allowed_types = all_chart_types();
  TeacherConfig teacher{};
  std::uint64_t extractor_seed = 7;
  std::string extractor_weights;  // optional CSLW file overriding extractor_seed
  int sft_epochs = 5;
  int sft_batch = 1;
  double sft_lr = 0.05;
  double sft_momentum = 0.9;
  GrpoConfig rl{};
  int ablate_iterations = 40;

  PolicyShape policy_shape() const {
    PolicyShape s;
    s.max_length = rl.sampler.max_length;
    return s;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    try {
      out = static_cast<T>(std::stod(value, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw ConfigError("bad number for " + key + ": '" + value + "'");
  } else {
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
      throw ConfigError("bad integer for " + key + ": '" + value + "'");
    }
  }
  return out;
}

inline bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("bad flag for " + key + ": '" + value + "'");
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are configuration errors.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_flag;
  using detail::parse_number;
  auto& rl = cfg.rl;
  if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
    rl.seed = cfg.seed;
  } else if (key == "corpus.train") cfg.train_size = parse_number<std::size_t>(key, value);
  else if (key == "corpus.heldout") cfg.heldout_size = parse_number<std::size_t>(key, value);
  else if (key == "corpus.title_prob") cfg.knobs.title_prob = parse_number<double>(key, value);
  else if (key == "corpus.max_title_words") cfg.knobs.max_title_words = parse_number<int>(key, value);
  else if (key == "corpus.xlabel_prob") cfg.knobs.xlabel_prob = parse_number<double>(key, value);
  else if (key == "corpus.ylabel_prob") cfg.knobs.ylabel_prob = parse_number<double>(key, value);
  else if (key == "corpus.series_continue") cfg.knobs.series_continue = parse_number<double>(key, value);
  else if (key == "corpus.min_values") cfg.knobs.min_values = parse_number<int>(key, value);
  else if (key == "corpus.max_values") cfg.knobs.max_values = parse_number<int>(key, value);
  else if (key == "corpus.grid_prob") cfg.knobs.grid_prob = parse_number<double>(key, value);
  else if (key == "corpus.allowed_types") {
    cfg.allowed_types.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto t = chart_type_from_string(detail::trim(item));
      if (!t) throw ConfigError("unknown chart type in corpus.allowed_types: '" + item + "'");
      cfg.allowed_types.insert(*t);
    }
  } else if (key == "teacher.p_exact") cfg.teacher.p_exact = parse_number<double>(key, value);
  else if (key == "teacher.p_corrupt") cfg.teacher.p_corrupt = parse_number<double>(key, value);
  else if (key == "extractor.seed") cfg.extractor_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "extractor.weights") cfg.extractor_weights = value;
  else if (key == "sft.epochs") cfg.sft_epochs = parse_number<int>(key, value);
  else if (key == "sft.batch") cfg.sft_batch = parse_number<int>(key, value);
  else if (key == "sft.lr") cfg.sft_lr = parse_number<double>(key, value);
  else if (key == "sft.momentum") cfg.sft_momentum = parse_number<double>(key, value);
  else if (key == "rl.group_size") rl.group_size = parse_number<int>(key, value);
  else if (key == "rl.clip_eps") rl.clip_eps = parse_number<double>(key, value);
  else if (key == "rl.clip") rl.clip = parse_flag(key, value);
  else if (key == "rl.kl_coef") rl.kl_coef = parse_number<double>(key, value);
  else if (key == "rl.inner_epochs") rl.inner_epochs = parse_number<int>(key, value);
  else if (key == "rl.iterations") rl.iterations = parse_number<int>(key, value);
  else if (key == "rl.batch_groups") rl.batch_groups = parse_number<int>(key, value);
  else if (key == "rl.lr") rl.learning_rate = parse_number<double>(key, value);
  else if (key == "rl.momentum") rl.momentum = parse_number<double>(key, value);
  else if (key == "rl.ratio_mode") {
    if (value == "token") rl.ratio_mode = RatioMode::token;
    else if (value == "sequence") rl.ratio_mode = RatioMode::sequence;
    else throw ConfigError("rl.ratio_mode must be token or sequence");
  } else if (key == "rl.eval_every") rl.eval_every = parse_number<int>(key, value);
  else if (key == "rl.eval_samples") rl.eval_samples = parse_number<int>(key, value);
  else if (key == "sampler.temperature") rl.sampler.temperature = parse_number<double>(key, value);
  else if (key == "sampler.top_p") rl.sampler.top_p = parse_number<double>(key, value);
  else if (key == "sampler.top_k") rl.sampler.top_k = parse_number<int>(key, value);
  else if (key == "sampler.max_length") rl.sampler.max_length = parse_number<int>(key, value);
  else if (key == "reward.attr_metric") rl.reward.attr_metric = parse_attr_metric(value);
  else if (key == "reward.vis_metric") rl.reward.vis_metric = parse_vis_metric(value);
  else if (key == "reward.attr_weight") rl.reward.attr_weight = parse_number<double>(key, value);
  else if (key == "reward.vis_weight") rl.reward.vis_weight = parse_number<double>(key, value);
  else if (key == "reward.std_floor") {
    rl.reward.std_floor = parse_number<double>(key, value);
    rl.eval_reward.std_floor = rl.reward.std_floor;
  } else if (key == "ablate.iterations") cfg.ablate_iterations = parse_number<int>(key, value);
  else if (key == "threads") rl.threads = std::max(1u, parse_number<unsigned>(key, value));
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Line-oriented `key = value` text; `#` starts a comment.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void load_config(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str());
}

inline ExtractorParams make_extractor(const ExperimentConfig& cfg) {
  if (!cfg.extractor_weights.empty()) return load_weights(cfg.extractor_weights);
  return init_extractor(cfg.extractor_seed);
}

// ---------------------------------------------------------------------------
// Pipeline stages

struct CorpusSplits {
  std::vector<CorpusItem> train;
  std::vector<CorpusItem> heldout;
  std::size_t discarded = 0;
};

/// Synthesizes train + held-out charts from one seeded stream and applies the
/// chart-type filter to both.
inline CorpusSplits make_splits(const ExperimentConfig& cfg) {
  auto corpus = synthesize_corpus(cfg.train_size + cfg.heldout_size, cfg.seed, cfg.knobs);
  CorpusSplits out;
  std::vector<CorpusItem> train(std::make_move_iterator(corpus.begin()),
                                std::make_move_iterator(corpus.begin() + static_cast<std::ptrdiff_t>(cfg.train_size)));
  std::vector<CorpusItem> heldout(std::make_move_iterator(corpus.begin() + static_cast<std::ptrdiff_t>(cfg.train_size)),
                                  std::make_move_iterator(corpus.end()));
  auto kept_train = classify_filter(std::move(train), cfg.allowed_types);
  auto kept_heldout = classify_filter(std::move(heldout), cfg.allowed_types);
  out.train = std::move(kept_train.kept);
  out.heldout = std::move(kept_heldout.kept);
  out.discarded = kept_train.discarded + kept_heldout.discarded;
  return out;
}

inline Dataset make_dataset(const ExperimentConfig& cfg, const std::vector<CorpusItem>& train) {
  return build_dataset(train, cfg.teacher, derive_seed(cfg.seed, 0xDA7Au));
}

inline std::vector<SftExample> sft_examples(const Dataset& ds, const ExtractorParams& extractor) {
  std::vector<SftExample> out(ds.records.size());
  parallel_for(out.size(), [&](std::size_t i) {
    out[i].cond = condition(ds.images[i], extractor);
    out[i].target = tokenize(parse(ds.records[i].code));
  });
  return out;
}

inline std::vector<Prompt> prompts_from_dataset(const Dataset& ds, const ExtractorParams& extractor) {
  std::vector<Prompt> out(ds.records.size());
  parallel_for(out.size(), [&](std::size_t i) { out[i] = make_prompt(parse(ds.records[i].code), extractor); });
  return out;
}

inline std::vector<Prompt> prompts_from_corpus(const std::vector<CorpusItem>& items, const ExtractorParams& extractor) {
  std::vector<Prompt> out(items.size());
  parallel_for(out.size(), [&](std::size_t i) { out[i] = make_prompt(items[i].program, extractor); });
  return out;
}

struct SftResult {
  PolicyParams params;
  std::vector<double> epoch_loss;
};

/// Mini-batch SFT with momentum gradient descent; batches follow a seeded
/// per-epoch shuffle.
inline SftResult run_sft(const ExperimentConfig& cfg, const std::vector<SftExample>& examples,
                         std::ostream* progress = nullptr) {
  if (examples.empty()) throw ConfigError("SFT needs at least one example");
  if (cfg.sft_batch < 1 || cfg.sft_epochs < 0) throw ConfigError("bad SFT batch/epochs");
  SftResult out{init_policy(cfg.policy_shape(), derive_seed(cfg.seed, 0x9011C7u)), {}};
  MomentumSgd opt(cfg.sft_lr, cfg.sft_momentum);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(derive_seed(cfg.seed, 0x5F75u));
  for (int epoch = 0; epoch < cfg.sft_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.sft_batch)) {
      std::vector<SftExample> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + static_cast<std::size_t>(cfg.sft_batch)); ++k) {
        batch.push_back(examples[order[k]]);
      }
      total += sft_step(out.params, opt, batch);
      ++batches;
    }
    out.epoch_loss.push_back(total / static_cast<double>(batches));
    if (progress) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "[sft] epoch %d  loss %.5f\n", epoch + 1, out.epoch_loss.back());
      *progress << buf << std::flush;
    }
  }
  return out;
}

/// Everything criterion-style runs need, built once from a config.
struct Experiment {
  ExperimentConfig cfg;
  ExtractorParams extractor;
  CorpusSplits splits;
  Dataset dataset;
  std::vector<Prompt> train_prompts;
  std::vector<Prompt> heldout_prompts;
  SftResult sft;
};

/// Builds corpus, dataset and prompts; runs SFT unless `with_sft` is false.
inline Experiment prepare_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr,
                                     bool with_sft = true) {
  Experiment ex;
  ex.cfg = cfg;
  ex.extractor = make_extractor(cfg);
  ex.splits = make_splits(cfg);
  ex.dataset = make_dataset(cfg, ex.splits.train);
  if (progress) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "[data] %zu train charts -> %zu records (yield %.3f), %zu held-out\n",
                  ex.splits.train.size(), ex.dataset.records.size(), ex.dataset.stats.yield_rate(),
                  ex.splits.heldout.size());
    *progress << buf << std::flush;
  }
  ex.train_prompts = prompts_from_dataset(ex.dataset, ex.extractor);
  ex.heldout_prompts = prompts_from_corpus(ex.splits.heldout, ex.extractor);
  if (with_sft) ex.sft = run_sft(cfg, sft_examples(ex.dataset, ex.extractor), progress);
  return ex;
}

inline TrainResult run_rl(const Experiment& ex, const GrpoConfig& rl, std::ostream* progress = nullptr) {
  return train(ex.sft.params, ex.train_prompts, ex.heldout_prompts, rl, ex.extractor, progress);
}

inline std::string sft_log_csv(const SftResult& r) {
  std::string out = "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < r.epoch_loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", i + 1, r.epoch_loss[i]);
    out += buf;
  }
  return out;
}

}  // namespace chartsim
