#pragma once

// Generate-then-filter dataset construction: a simulated teacher writes code
// for each chart, every output is re-executed, and failures are discarded.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chartsim/dsl.hpp"
#include "chartsim/harness/corpus.hpp"
#include "chartsim/raster.hpp"
#include "chartsim/rng.hpp"

namespace chartsim {

inline constexpr std::string_view kImagePlaceholder = "<image>";

inline constexpr std::array<std::string_view, 20> kInstructionTemplates = {
    "<image> Please generate chart DSL code to recreate the picture shown.",
    "<image> Write the chart program that reproduces this figure.",
    "<image> Recreate this chart as DSL code.",
    "<image> What chart program draws this image? Output only the code.",
    "<image> Convert the chart above into chart DSL statements.",
    "<image> Produce code that renders exactly this chart.",
    "<image> Reverse-engineer the plotting code for this chart.",
    "<image> Give the chart DSL source for the figure.",
    "<image> Transcribe this chart into a chart program, preserving labels, colors and values.",
    "<image> Write code that redraws this chart with the same type, series and styling.",
    "<image> Generate a program in the chart language that matches this image.",
    "<image> Reproduce the chart shown using chart DSL code.",
    "<image> Emit the chart description that would render this picture.",
    "<image> Study the chart and write code to recreate it faithfully.",
    "<image> Output chart DSL that regenerates the given visualization.",
    "<image> Rebuild this plot as code in the chart language.",
    "<image> Provide the source program for this chart image.",
    "<image> Write the minimal chart program that reproduces the figure.",
    "<image> Recover the chart code, including title, axis labels and every series.",
    "<image> Translate this chart image into executable chart DSL code.",
};

struct DatasetRecord {
  std::string id;
  std::string image_path;  // relative to the dataset file's directory
  int instruction_id = 0;
  std::string instruction_text;
  std::string code;
  std::string chart_type;
  std::string source;  // exact | mutated | corrupted

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

inline nlohmann::json to_json(const DatasetRecord& r) {
  return nlohmann::json{{"id", r.id},
                        {"image_path", r.image_path},
                        {"instruction_id", r.instruction_id},
                        {"instruction_text", r.instruction_text},
                        {"code", r.code},
                        {"meta", {{"chart_type", r.chart_type}, {"source", r.source}}}};
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  r.id = j.at("id").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  r.instruction_id = j.at("instruction_id").get<int>();
  r.instruction_text = j.at("instruction_text").get<std::string>();
  r.code = j.at("code").get<std::string>();
  r.chart_type = j.at("meta").at("chart_type").get<std::string>();
  r.source = j.at("meta").at("source").get<std::string>();
  if (r.instruction_id < 0 || r.instruction_id >= static_cast<int>(kInstructionTemplates.size())) {
    throw std::runtime_error("record " + r.id + ": instruction_id out of range");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Teacher

struct TeacherConfig {
  double p_exact = 0.7;    // emit the ground-truth program
  double p_corrupt = 0.15;  // replace one token of the ground truth with a random token
  // remaining mass: mutate one attribute (always a valid program)

  void validate() const {
    if (!(p_exact >= 0.0 && p_corrupt >= 0.0 && p_exact + p_corrupt <= 1.0 + 1e-12)) {
      throw std::invalid_argument("teacher probabilities must be >= 0 and sum to at most 1");
    }
  }
};

/// Changes exactly one attribute; the result is valid and differs from `p`.
inline ChartProgram mutate_attribute(const ChartProgram& p, SplitMix64& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    ChartProgram q = p;
    Series& s = q.series[rng.below(q.series.size())];
    switch (rng.below(6)) {
      case 0: {  // chart type
        q.chart_type = kAllChartTypes[rng.below(kNumChartTypes)];
        break;
      }
      case 1: {  // title word
        const std::string w(kLexicon[rng.below(kLexicon.size())]);
        if (!q.title || q.title->size() + 1 + w.size() > kMaxStringLength) {
          q.title = w;
        } else {
          *q.title += " " + w;
        }
        break;
      }
      case 2:
        s.color = static_cast<int>(rng.below(kPaletteSize));
        break;
      case 3:
        s.values[rng.below(s.values.size())] = quantum_value(static_cast<int>(rng.below(kNumQuanta)));
        break;
      case 4:
        q.grid = !q.grid;
        break;
      default:
        s.name = std::string(kLexicon[rng.below(kLexicon.size())]);
        break;
    }
    if (!(q == p) && is_valid(q)) return q;
  }
  ChartProgram q = p;
  q.grid = !q.grid;
  return q;
}

/// Replaces token `position` of the canonical stream with `replacement`.
inline TokenStream corrupt_token(const TokenStream& tokens, std::size_t position, TokenId replacement) {
  TokenStream out = tokens;
  out.at(position) = replacement;
  return out;
}

struct TeacherOutput {
  std::string source;  // exact | mutated | corrupted
  TokenStream tokens;
};

inline TeacherOutput teacher_generate(const ChartProgram& truth, const TeacherConfig& cfg, SplitMix64& rng) {
  const double u = rng.uniform();
  if (u < cfg.p_exact) return {"exact", tokenize(truth)};
  if (u < cfg.p_exact + cfg.p_corrupt) {
    const TokenStream tokens = tokenize(truth);
    const std::size_t pos = rng.below(tokens.size());
    TokenId replacement = static_cast<TokenId>(rng.below(Vocabulary::size - 1));
    if (replacement >= tokens[pos]) ++replacement;  // uniform over the other tokens
    return {"corrupted", corrupt_token(tokens, pos, replacement)};
  }
  return {"mutated", tokenize(mutate_attribute(truth, rng))};
}

struct DatasetStats {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t discarded = 0;
  std::size_t exact = 0;
  std::size_t mutated = 0;
  std::size_t corrupted_kept = 0;
  std::size_t corrupted_discarded = 0;

  double yield_rate() const noexcept {
    return input == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(input);
  }
};

struct Dataset {
  std::vector<DatasetRecord> records;
  std::vector<RasterImage> images;  // parallel to records
  DatasetStats stats;
};

/// Teacher generation followed by the execution filter. Item i uses an rng
/// seeded from (seed, i); record ids and image paths derive from the corpus id.
inline Dataset build_dataset(const std::vector<CorpusItem>& corpus, const TeacherConfig& teacher, std::uint64_t seed) {
  teacher.validate();
  if (corpus.empty()) throw std::invalid_argument("build_dataset: corpus is empty");
  struct Slot {
    std::optional<DatasetRecord> record;
    RasterImage image;
    std::string source;
  };
  std::vector<Slot> slots(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    SplitMix64 rng(derive_seed(seed, 0x7EAC4u, corpus[i].id));
    const TeacherOutput out = teacher_generate(corpus[i].program, teacher, rng);
    const int instruction = static_cast<int>(rng.below(kInstructionTemplates.size()));
    slots[i].source = out.source;
    ChartProgram program;
    try {
      program = detokenize(out.tokens);
    } catch (const ParseError&) {
      return;  // failed execution: discarded
    }
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", corpus[i].id);
    DatasetRecord r;
    r.id = id;
    r.image_path = std::string("images/") + id + ".ppm";
    r.instruction_id = instruction;
    r.instruction_text = std::string(kInstructionTemplates[static_cast<std::size_t>(instruction)]);
    r.code = serialize(program);
    r.chart_type = std::string(to_string(program.chart_type));
    r.source = out.source;
    slots[i].image = render(program);
    slots[i].record = std::move(r);
  });

  Dataset ds;
  ds.stats.input = corpus.size();
  for (auto& s : slots) {
    if (s.source == "exact") ++ds.stats.exact;
    if (s.source == "mutated") ++ds.stats.mutated;
    if (s.record) {
      if (s.source == "corrupted") ++ds.stats.corrupted_kept;
      ds.records.push_back(std::move(*s.record));
      ds.images.push_back(std::move(s.image));
    } else {
      ++ds.stats.corrupted_discarded;
    }
  }
  ds.stats.kept = ds.records.size();
  ds.stats.discarded = ds.stats.input - ds.stats.kept;
  return ds;
}

/// Writes `dataset.jsonl` and `images/<id>.ppm` under `dir`; the JSONL writer
/// is the single serialization point.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream f(dir / "dataset.jsonl", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (dir / "dataset.jsonl").string());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    f << to_json(ds.records[i]).dump() << '\n';
    write_ppm(ds.images[i], (dir / ds.records[i].image_path).string());
  }
  if (!f) throw std::runtime_error("write failed: dataset.jsonl");
}

inline std::vector<DatasetRecord> read_dataset(const std::filesystem::path& jsonl) {
  std::ifstream f(jsonl, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + jsonl.string());
  std::vector<DatasetRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

/// Re-parses and re-renders every record; returns ids that fail to match
/// their stored image bit-exactly.
inline std::vector<std::string> verify_dataset(const std::filesystem::path& dir) {
  std::vector<std::string> bad;
  for (const DatasetRecord& r : read_dataset(dir / "dataset.jsonl")) {
    try {
      const RasterImage stored = read_ppm((dir / r.image_path).string());
      const ChartProgram p = parse(r.code);
      if (encode_ppm(render(p)) != encode_ppm(stored) || serialize(p) != r.code) bad.push_back(r.id);
    } catch (const std::exception&) {
      bad.push_back(r.id);
    }
  }
  return bad;
}

}  // namespace chartsim
