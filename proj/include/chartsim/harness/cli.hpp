#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chartsim/harness/evaluate.hpp"
#include "chartsim/harness/experiment.hpp"

namespace chartsim {

namespace cli_detail {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace cli_detail

/// Runs one CLI invocation. Results and progress go to `out`, errors to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using cli_detail::fixed4;
  using cli_detail::read_text;
  using cli_detail::write_text;
  namespace fs = std::filesystem;

  CLI::App app{"chartsim: chart-to-code lab with similarity-reward GRPO"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::optional<std::size_t> count;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("-n", count, "number of charts (gen-corpus)");
  app.add_option("--set", overrides, "extra key=value setting, applied after --config");

  auto* gen_corpus = app.add_subcommand("gen-corpus", "synthesize charts: programs/*.cdsl and images/*.ppm");
  auto* gen_data = app.add_subcommand("gen-data", "teacher generation + execution filter -> dataset.jsonl");
  auto* sft = app.add_subcommand("sft", "supervised fine-tuning -> sft.cslw");
  std::string init_path;
  auto* rl = app.add_subcommand("rl", "GRPO from an SFT checkpoint -> rl.cslw and CSV logs");
  rl->add_option("--init", init_path, "SFT checkpoint; trained from scratch when omitted");
  std::string ckpt_path;
  auto* eval = app.add_subcommand("eval", "greedy direct-mimic evaluation on the held-out split");
  eval->add_option("checkpoint", ckpt_path, "policy checkpoint")->required();
  std::string ref_path, cand_path;
  auto* reward = app.add_subcommand("reward", "score a candidate program against a reference program");
  reward->add_option("ref", ref_path)->required();
  reward->add_option("cand", cand_path)->required();
  std::string prog_path, ppm_path;
  auto* render_cmd = app.add_subcommand("render", "render a program to PPM");
  render_cmd->add_option("prog", prog_path)->required();
  render_cmd->add_option("out", ppm_path)->required();
  auto* ablate = app.add_subcommand("ablate", "sweep attribute metric x visual metric");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) load_config(cfg, config_path);
    for (const auto& kv : overrides) apply_config_text(cfg, kv);
    if (seed) apply_setting(cfg, "seed", std::to_string(*seed));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const fs::path dir(out_dir);
    if (*gen_corpus) {
      const std::size_t n = count.value_or(cfg.train_size + cfg.heldout_size);
      if (n == 0) {
        err << "error: -n must be at least 1\n";
        return 1;
      }
      const auto corpus = synthesize_corpus(n, cfg.seed, cfg.knobs);
      fs::create_directories(dir / "programs");
      fs::create_directories(dir / "images");
      for (const auto& item : corpus) {
        char id[32];
        std::snprintf(id, sizeof id, "%06zu", item.id);
        write_text(dir / "programs" / (std::string(id) + ".cdsl"), serialize(item.program));
        write_ppm(item.image, (dir / "images" / (std::string(id) + ".ppm")).string());
      }
      out << "wrote " << corpus.size() << " charts to " << dir.string() << "\n";
    } else if (*gen_data) {
      const auto splits = make_splits(cfg);
      const Dataset ds = make_dataset(cfg, splits.train);
      write_dataset(ds, dir);
      const auto& st = ds.stats;
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "input %zu\nkept %zu\ndiscarded %zu\nexact %zu\nmutated %zu\ncorrupted_kept %zu\n"
                    "corrupted_discarded %zu\ntype_filtered %zu\nyield_rate %.4f\n",
                    st.input, st.kept, st.discarded, st.exact, st.mutated, st.corrupted_kept,
                    st.corrupted_discarded, splits.discarded, st.yield_rate());
      write_text(dir / "stats.txt", buf);
      out << buf;
    } else if (*sft) {
      const Experiment ex = prepare_experiment(cfg, &out);
      fs::create_directories(dir);
      save_policy(ex.sft.params, (dir / "sft.cslw").string());
      write_text(dir / "sft_log.csv", sft_log_csv(ex.sft));
      out << evaluate(ex.sft.params, ex.heldout_prompts, ex.extractor, cfg.rl.sampler, cfg.rl.eval_reward).to_text();
    } else if (*rl) {
      Experiment ex = prepare_experiment(cfg, &out, init_path.empty());
      if (!init_path.empty()) ex.sft.params = load_policy(init_path);
      fs::create_directories(dir);
      if (init_path.empty()) {
        save_policy(ex.sft.params, (dir / "sft.cslw").string());
        write_text(dir / "sft_log.csv", sft_log_csv(ex.sft));
      }
      const TrainResult res = run_rl(ex, cfg.rl, &out);
      save_policy(res.params, (dir / "rl.cslw").string());
      write_text(dir / "train_log.csv", res.log.train_csv());
      write_text(dir / "heldout_log.csv", res.log.heldout_csv());
      const EvalReport report = evaluate(res.params, ex.heldout_prompts, ex.extractor, cfg.rl.sampler,
                                         cfg.rl.eval_reward);
      write_text(dir / "eval.txt", report.to_text());
      out << report.to_text();
    } else if (*eval) {
      const PolicyParams policy = load_policy(ckpt_path);
      const ExtractorParams extractor = make_extractor(cfg);
      const auto splits = make_splits(cfg);
      const auto prompts = prompts_from_corpus(splits.heldout, extractor);
      if (prompts.empty()) throw std::runtime_error("held-out split is empty");
      out << evaluate(policy, prompts, extractor, cfg.rl.sampler, cfg.rl.eval_reward).to_text();
    } else if (*reward) {
      const ExtractorParams extractor = make_extractor(cfg);
      const Reference ref = make_reference(parse(read_text(ref_path)), extractor);
      const ScoredCandidate s = score_text(read_text(cand_path), ref, cfg.rl.reward, extractor);
      out << "total " << fixed4(s.score.total) << "\nattr " << fixed4(s.score.attr) << "\nvis "
          << fixed4(s.score.vis) << "\nexecuted " << (s.score.executed ? "yes" : "no") << "\n";
      if (!s.score.executed) out << "failure " << s.score.failure << "\n";
    } else if (*render_cmd) {
      write_ppm(render(parse(read_text(prog_path))), ppm_path);
    } else if (*ablate) {
      const Experiment ex = prepare_experiment(cfg, &out);
      const HeldoutRow base = heldout_evaluate(ex.sft.params, ex.heldout_prompts, cfg.rl.sampler,
                                               cfg.rl.eval_reward, ex.extractor, cfg.rl.eval_samples,
                                               derive_seed(cfg.rl.seed, 0xE7A1ULL), cfg.rl.threads);
      std::string table = "attr_metric,vis_metric,heldout_reward,gain,heldout_attr,heldout_vis,exec_rate\n";
      char buf[192];
      for (AttrMetric a : kAllAttrMetrics) {
        for (VisMetric v : kAllVisMetrics) {
          GrpoConfig g = cfg.rl;
          g.iterations = cfg.ablate_iterations;
          g.eval_every = 0;
          g.reward.attr_metric = a;
          g.reward.vis_metric = v;
          const TrainResult res = train(ex.sft.params, ex.train_prompts, ex.heldout_prompts, g, ex.extractor);
          const HeldoutRow& last = res.log.heldout.back();
          std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%+.4f,%.4f,%.4f,%.4f\n", std::string(to_string(a)).c_str(),
                        std::string(to_string(v)).c_str(), last.mean_reward, last.mean_reward - base.mean_reward,
                        last.mean_attr, last.mean_vis, last.exec_rate);
          table += buf;
          out << "[ablate] " << buf << std::flush;
        }
      }
      write_text(dir / "ablation.csv", table);
      out << table;
    }
  } catch (const ParseError& e) {
    err << "ParseError: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace chartsim
