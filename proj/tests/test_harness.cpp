#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "chartsim/harness/dataset.hpp"
#include "chartsim/harness/evaluate.hpp"
#include "chartsim/harness/experiment.hpp"
#include "oracles.hpp"

using namespace chartsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("chartsim_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const ExtractorParams& extractor() {
  static const ExtractorParams params = init_extractor(7);
  return params;
}

}  // namespace

TEST(Corpus, DeterministicAndIndexStable) {
  const auto a = synthesize_corpus(40, 9);
  const auto b = synthesize_corpus(60, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, i);
    EXPECT_EQ(a[i].program, b[i].program);
    EXPECT_EQ(a[i].image, b[i].image);
  }
  const auto c = synthesize_corpus(40, 10);
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i].program == c[i].program ? 1 : 0;
  EXPECT_LT(same, 3);
}

TEST(Corpus, ProgramsAreValidAndRoundTrip) {
  for (const auto& knobs : {CorpusKnobs{}, wide_knobs()}) {
    for (const auto& item : synthesize_corpus(500, 11, knobs)) {
      ASSERT_TRUE(is_valid(item.program));
      ASSERT_EQ(parse(serialize(item.program)), item.program);
      ASSERT_EQ(item.image, render(item.program));
    }
  }
}

TEST(Corpus, ChartTypesAreUniform) {
  std::array<int, kNumChartTypes> hist{};
  const std::size_t n = 6000;
  for (const auto& item : synthesize_corpus(n, 12)) ++hist[static_cast<std::size_t>(item.program.chart_type)];
  const double expected = static_cast<double>(n) / kNumChartTypes;
  const double sigma = std::sqrt(static_cast<double>(n) * (1.0 / kNumChartTypes) * (1.0 - 1.0 / kNumChartTypes));
  for (int h : hist) EXPECT_LE(std::abs(h - expected), 3.0 * sigma);
}

TEST(Corpus, ClassifyFilter) {
  const auto corpus = synthesize_corpus(300, 13);
  auto all = classify_filter(corpus, all_chart_types());
  EXPECT_EQ(all.kept.size(), 300u);
  EXPECT_EQ(all.discarded, 0u);
  auto none = classify_filter(corpus, {});
  EXPECT_EQ(none.kept.size(), 0u);
  EXPECT_EQ(none.discarded, 300u);
  const std::set<ChartType> bars = {ChartType::bar, ChartType::pie};
  std::size_t expected = 0;
  for (const auto& item : corpus) expected += bars.count(item.program.chart_type);
  auto some = classify_filter(corpus, bars);
  EXPECT_EQ(some.kept.size(), expected);
  EXPECT_EQ(some.discarded, 300u - expected);
  for (const auto& item : some.kept) EXPECT_TRUE(bars.count(item.program.chart_type));
  // order preserved
  for (std::size_t i = 1; i < some.kept.size(); ++i) EXPECT_LT(some.kept[i - 1].id, some.kept[i].id);
}

TEST(Teacher, MutationChangesExactlyOneAttribute) {
  SplitMix64 rng(14);
  for (const auto& item : synthesize_corpus(300, 14)) {
    const ChartProgram q = mutate_attribute(item.program, rng);
    ASSERT_TRUE(is_valid(q));
    ASSERT_FALSE(q == item.program);
  }
}

TEST(Dataset, ExactTeacherKeepsEverything) {
  const auto corpus = synthesize_corpus(200, 15);
  const Dataset ds = build_dataset(corpus, TeacherConfig{1.0, 0.0}, 3);
  EXPECT_EQ(ds.stats.kept, 200u);
  EXPECT_EQ(ds.stats.yield_rate(), 1.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(ds.records[i].code, serialize(corpus[i].program));
    EXPECT_EQ(ds.records[i].source, "exact");
    EXPECT_EQ(ds.images[i], corpus[i].image);
  }
}

TEST(Dataset, YieldMatchesAnalyticExpectation) {
  // Per item, keep probability = p_exact + p_mutate + p_corrupt * q, where q is
  // the fraction of (position, replacement) corruptions that still parse,
  // enumerated exhaustively.
  const std::size_t n = 2000;
  const TeacherConfig teacher{0.7, 0.15};
  const auto corpus = synthesize_corpus(n, 16);
  double mean = 0.0, var = 0.0;
  for (const auto& item : corpus) {
    const TokenStream tokens = tokenize(item.program);
    std::size_t ok = 0, total = 0;
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
      for (int r = 0; r < Vocabulary::size; ++r) {
        if (r == tokens[pos]) continue;
        ++total;
        try {
          detokenize(corrupt_token(tokens, pos, static_cast<TokenId>(r)));
          ++ok;
        } catch (const ParseError&) {
        }
      }
    }
    const double q = static_cast<double>(ok) / static_cast<double>(total);
    const double p = 1.0 - teacher.p_corrupt + teacher.p_corrupt * q;
    mean += p;
    var += p * (1.0 - p);
  }
  const Dataset ds = build_dataset(corpus, teacher, 17);
  EXPECT_LE(std::abs(static_cast<double>(ds.stats.kept) - mean), 3.0 * std::sqrt(var))
      << "kept " << ds.stats.kept << " expected " << mean;
  EXPECT_EQ(ds.stats.kept + ds.stats.discarded, n);
  EXPECT_EQ(ds.stats.discarded, ds.stats.corrupted_discarded);
  EXPECT_GT(ds.stats.corrupted_discarded, 0u);
  EXPECT_GT(ds.stats.corrupted_kept, 0u);
}

TEST(Dataset, EveryRecordExecutesAndMatchesItsImage) {
  const auto corpus = synthesize_corpus(150, 18);
  const Dataset ds = build_dataset(corpus, TeacherConfig{0.5, 0.3}, 19);
  const fs::path dir = scratch_dir("verify");
  write_dataset(ds, dir);
  EXPECT_TRUE(verify_dataset(dir).empty());
  const auto records = read_dataset(dir / "dataset.jsonl");
  ASSERT_EQ(records, ds.records);
  for (const auto& r : records) {
    EXPECT_EQ(r.instruction_text, kInstructionTemplates[static_cast<std::size_t>(r.instruction_id)]);
    EXPECT_EQ(r.instruction_text.rfind(kImagePlaceholder, 0), 0u);
    EXPECT_EQ(r.chart_type, to_string(parse(r.code).chart_type));
  }
  // a tampered image is reported
  write_ppm(RasterImage{}, (dir / records.front().image_path).string());
  const auto bad = verify_dataset(dir);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad.front(), records.front().id);
  fs::remove_all(dir);
}

TEST(Dataset, RecordJsonRoundTripAndTemplates) {
  EXPECT_EQ(kInstructionTemplates.size(), 20u);
  std::set<std::string_view> distinct(kInstructionTemplates.begin(), kInstructionTemplates.end());
  EXPECT_EQ(distinct.size(), 20u);
  DatasetRecord r{"000007", "images/000007.ppm", 3, std::string(kInstructionTemplates[3]), "chart bar\n", "bar", "exact"};
  const auto j = to_json(r);
  EXPECT_EQ(j.at("meta").at("source"), "exact");
  EXPECT_EQ(record_from_json(nlohmann::json::parse(j.dump())), r);
  auto broken = j;
  broken["instruction_id"] = 20;
  EXPECT_THROW(record_from_json(broken), std::runtime_error);
}

TEST(Dataset, DeterministicAcrossRuns) {
  ExperimentConfig cfg;
  cfg.train_size = 80;
  cfg.heldout_size = 10;
  const auto s1 = make_splits(cfg);
  const auto s2 = make_splits(cfg);
  const Dataset a = make_dataset(cfg, s1.train);
  const Dataset b = make_dataset(cfg, s2.train);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(s1.heldout.size(), 10u);
}

TEST(Config, ParsesKeyValueText) {
  ExperimentConfig cfg;
  apply_config_text(cfg,
                    "# comment\n"
                    "seed = 5\n"
                    "rl.group_size = 8   # trailing comment\n"
                    "\n"
                    "reward.attr_metric = jaccard\n"
                    "reward.vis_metric = ssim\n"
                    "rl.clip = off\n"
                    "corpus.allowed_types = bar, pie\n"
                    "sampler.top_p = 0.9\n");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.rl.group_size, 8);
  EXPECT_EQ(cfg.rl.reward.attr_metric, AttrMetric::jaccard);
  EXPECT_EQ(cfg.rl.reward.vis_metric, VisMetric::ssim);
  EXPECT_FALSE(cfg.rl.clip);
  EXPECT_EQ(cfg.allowed_types, (std::set<ChartType>{ChartType::bar, ChartType::pie}));
  EXPECT_DOUBLE_EQ(cfg.rl.sampler.top_p, 0.9);
  EXPECT_THROW(apply_config_text(cfg, "no.such.key = 1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "seed = abc\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "seed 5\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "reward.attr_metric = cosine\n"), ConfigError);
  EXPECT_THROW(load_config(cfg, "/nonexistent/chartsim.cfg"), ConfigError);
}

TEST(Evaluate, IdentityAndEmptyText) {
  SplitMix64 rng(20);
  std::vector<Prompt> prompts;
  std::vector<TokenStream> same, untitled;
  for (int i = 0; i < 20; ++i) {
    ChartProgram p = random_program(rng);
    p.title = "sales";
    prompts.push_back(make_prompt(p, extractor()));
    same.push_back(tokenize(p));
    ChartProgram q = p;
    q.title.reset();
    q.xlabel.reset();
    q.ylabel.reset();
    for (auto& s : q.series) s.name = " ";  // no words
    untitled.push_back(tokenize(q));
  }
  const EvalReport id = evaluate_candidates(same, prompts, extractor());
  EXPECT_EQ(id.exec_rate, 1.0);
  for (double f : id.category_f1) EXPECT_EQ(f, 1.0);
  EXPECT_EQ(id.overall_f1, 1.0);
  const EvalReport empty = evaluate_candidates(untitled, prompts, extractor());
  EXPECT_EQ(empty.f1(AttributeCategory::type), 1.0);
  EXPECT_EQ(empty.f1(AttributeCategory::text), 0.0);
  EXPECT_EQ(empty.exec_rate, 1.0);
}

TEST(Evaluate, CategoryF1MatchesOracle) {
  SplitMix64 rng(21);
  std::vector<Prompt> prompts;
  std::vector<TokenStream> cands;
  std::vector<ChartProgram> cand_programs;
  for (int i = 0; i < 200; ++i) {
    const ChartProgram ref = random_program(rng);
    const ChartProgram cand = i % 3 == 0 ? mutate_attribute(ref, rng) : random_program(rng);
    prompts.push_back(make_prompt(ref, extractor()));
    cands.push_back(tokenize(cand));
    cand_programs.push_back(cand);
  }
  cands[7] = {Vocabulary::eos};  // one failure
  const EvalReport rep = evaluate_candidates(cands, prompts, extractor());
  EXPECT_NEAR(rep.exec_rate, 199.0 / 200.0, 1e-15);
  for (AttributeCategory c : kAllCategories) {
    double expected = 0.0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (i == 7) continue;
      expected += oracle::metric(oracle::to_bag(extract(cand_programs[i]).restricted_to(c)),
                                 oracle::to_bag(prompts[i].reference.attributes.restricted_to(c)), AttrMetric::f1);
    }
    EXPECT_NEAR(rep.f1(c), expected / 200.0, 1e-12) << to_string(c);
  }
}

TEST(Evaluate, GreedyEvaluationIsDeterministic) {
  const auto corpus = synthesize_corpus(12, 22);
  const auto prompts = prompts_from_corpus(corpus, extractor());
  const auto p = init_policy(PolicyShape{}, 23);
  SamplerConfig s;
  s.max_length = 60;
  EXPECT_EQ(evaluate(p, prompts, extractor(), s).to_text(), evaluate(p, prompts, extractor(), s).to_text());
}

TEST(Sft, LossDecreasesOnTinyCorpus) {
  ExperimentConfig cfg;
  cfg.train_size = 24;
  cfg.heldout_size = 4;
  cfg.sft_epochs = 3;
  const Experiment ex = prepare_experiment(cfg);
  ASSERT_EQ(ex.sft.epoch_loss.size(), 3u);
  EXPECT_LT(ex.sft.epoch_loss.back(), ex.sft.epoch_loss.front());
  EXPECT_EQ(sft_log_csv(ex.sft).rfind("epoch,loss\n", 0), 0u);
  const Experiment again = prepare_experiment(cfg);
  EXPECT_EQ(again.sft.params, ex.sft.params);
}
