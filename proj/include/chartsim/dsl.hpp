#pragma once

// The chart description language: a line-oriented stand-in for plotting code.
//
//   chart bar
//   title "net loss"
//   xlabel "epoch"
//   grid on
//   series "train" color 0 values 1.00 2.50 0.25
//
// Numeric literals are restricted to the quantized set {0.00, 0.25, ..., 15.75}.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chartsim {

enum class ChartType : std::uint8_t { bar = 0, line = 1, scatter = 2, area = 3, pie = 4, hist = 5 };

inline constexpr int kNumChartTypes = 6;
inline constexpr std::array<ChartType, kNumChartTypes> kAllChartTypes = {
    ChartType::bar, ChartType::line, ChartType::scatter,
    ChartType::area, ChartType::pie, ChartType::hist};

inline constexpr std::array<std::string_view, kNumChartTypes> kChartTypeNames = {
    "bar", "line", "scatter", "area", "pie", "hist"};

constexpr std::string_view to_string(ChartType t) noexcept {
  return kChartTypeNames[static_cast<std::size_t>(t)];
}

constexpr std::optional<ChartType> chart_type_from_string(std::string_view s) noexcept {
  for (int i = 0; i < kNumChartTypes; ++i) {
    if (kChartTypeNames[static_cast<std::size_t>(i)] == s) return static_cast<ChartType>(i);
  }
  return std::nullopt;
}

// Quantized numeric set Q.
inline constexpr int kNumQuanta = 64;
inline constexpr double kQuantumStep = 0.25;
inline constexpr double kMaxQuantum = (kNumQuanta - 1) * kQuantumStep;

constexpr double quantum_value(int index) noexcept { return index * kQuantumStep; }

// Index of `v` in Q, or -1 when v is not a member.
inline int quantum_index(double v) noexcept {
  if (!(v >= 0.0 && v <= kMaxQuantum)) return -1;
  const double scaled = v / kQuantumStep;
  const int idx = static_cast<int>(scaled);
  return static_cast<double>(idx) == scaled ? idx : -1;
}

inline constexpr int kPaletteSize = 8;
inline constexpr int kMaxSeries = 4;
inline constexpr int kMaxValues = 12;
inline constexpr std::size_t kMaxStringLength = 24;

constexpr bool is_string_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == ' ';
}

struct Series {
  std::string name;
  int color = 0;
  std::vector<double> values;

  friend bool operator==(const Series&, const Series&) = default;
};

struct ChartProgram {
  ChartType chart_type = ChartType::bar;
  std::optional<std::string> title;
  std::optional<std::string> xlabel;
  std::optional<std::string> ylabel;
  bool grid = false;
  std::vector<Series> series;

  friend bool operator==(const ChartProgram&, const ChartProgram&) = default;
};

/// Raised for malformed DSL text or token streams. Syntax errors are lexical
/// or grammatical; validation errors are well-formed programs that break a
/// ChartProgram constraint. Both count as execution failures downstream.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { syntax, validation };

  ParseError(Kind kind, int line, int column, const std::string& message)
      : std::runtime_error(format(kind, line, column, message)),
        kind_(kind),
        line_(line),
        column_(column) {}

  Kind kind() const noexcept { return kind_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  static std::string format(Kind kind, int line, int column, const std::string& message) {
    return std::string(kind == Kind::syntax ? "syntax error" : "validation error") + " at " +
           std::to_string(line) + ":" + std::to_string(column) + ": " + message;
  }

  Kind kind_;
  int line_;
  int column_;
};

namespace detail {

inline void check_string(const std::string& s, std::string_view what, int line, int column) {
  if (s.empty() || s.size() > kMaxStringLength) {
    throw ParseError(ParseError::Kind::validation, line, column,
                     std::string(what) + " must be 1-24 characters");
  }
  for (char c : s) {
    if (!is_string_char(c)) {
      throw ParseError(ParseError::Kind::validation, line, column,
                       std::string(what) + " contains a character outside [a-z0-9_ ]");
    }
  }
}

}  // namespace detail

// Throws ParseError(validation) when `p` breaks a ChartProgram invariant.
// `line`/`column` locate the error for callers that know the source position.
inline void validate(const ChartProgram& p, int line = 0, int column = 0) {
  using K = ParseError::Kind;
  if (static_cast<std::size_t>(p.chart_type) >= static_cast<std::size_t>(kNumChartTypes)) {
    throw ParseError(K::validation, line, column, "unknown chart type");
  }
  if (p.title) detail::check_string(*p.title, "title", line, column);
  if (p.xlabel) detail::check_string(*p.xlabel, "xlabel", line, column);
  if (p.ylabel) detail::check_string(*p.ylabel, "ylabel", line, column);
  if (p.series.empty() || p.series.size() > static_cast<std::size_t>(kMaxSeries)) {
    throw ParseError(K::validation, line, column, "a chart needs 1-4 series");
  }
  for (const Series& s : p.series) {
    detail::check_string(s.name, "series name", line, column);
    if (s.color < 0 || s.color >= kPaletteSize) {
      throw ParseError(K::validation, line, column, "color index must be 0-7");
    }
    if (s.values.empty() || s.values.size() > static_cast<std::size_t>(kMaxValues)) {
      throw ParseError(K::validation, line, column, "a series needs 1-12 values");
    }
    for (double v : s.values) {
      if (quantum_index(v) < 0) {
        throw ParseError(K::validation, line, column, "value outside the quantized set");
      }
    }
  }
  if (p.chart_type == ChartType::pie) {
    if (p.series.size() != 1) {
      throw ParseError(K::validation, line, column, "pie charts take exactly one series");
    }
    double sum = 0.0;
    for (double v : p.series.front().values) sum += v;
    if (!(sum > 0.0)) {
      throw ParseError(K::validation, line, column, "pie values must have a positive sum");
    }
  }
}

inline bool is_valid(const ChartProgram& p) noexcept {
  try {
    validate(p);
    return true;
  } catch (const ParseError&) {
    return false;
  }
}

// Canonical two-decimal rendering of a member of Q.
inline std::string format_value(double v) {
  const int idx = quantum_index(v);
  if (idx < 0) throw std::invalid_argument("format_value: value outside the quantized set");
  static constexpr std::array<const char*, 4> kFrac = {".00", ".25", ".50", ".75"};
  return std::to_string(idx / 4) + kFrac[static_cast<std::size_t>(idx % 4)];
}

namespace detail {

class Lexer {
 public:
  enum class Kind { word, number, string, newline, end };

  struct Token {
    Kind kind;
    std::string text;
    int line;
    int column;
  };

  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) advance();
    const int line = line_;
    const int column = column_;
    if (pos_ >= src_.size()) return {Kind::end, {}, line, column};

    const char c = src_[pos_];
    if (c == '\n') {
      advance();
      return {Kind::newline, "\n", line, column};
    }
    if (c >= 'a' && c <= 'z') {
      std::string text;
      while (pos_ < src_.size() && src_[pos_] >= 'a' && src_[pos_] <= 'z') text += advance();
      if (pos_ < src_.size() && !is_separator(src_[pos_])) {
        throw ParseError(ParseError::Kind::syntax, line_, column_, "unexpected character after word");
      }
      return {Kind::word, std::move(text), line, column};
    }
    if (c >= '0' && c <= '9') {
      std::string text;
      while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') text += advance();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        text += advance();
        if (pos_ >= src_.size() || src_[pos_] < '0' || src_[pos_] > '9') {
          throw ParseError(ParseError::Kind::syntax, line_, column_, "digit expected after '.'");
        }
        while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') text += advance();
      }
      if (pos_ < src_.size() && !is_separator(src_[pos_])) {
        throw ParseError(ParseError::Kind::syntax, line_, column_, "malformed number");
      }
      return {Kind::number, std::move(text), line, column};
    }
    if (c == '"') {
      advance();
      std::string text;
      while (true) {
        if (pos_ >= src_.size() || src_[pos_] == '\n') {
          throw ParseError(ParseError::Kind::syntax, line, column, "unterminated string");
        }
        const char d = src_[pos_];
        if (d == '"') break;
        if (!is_string_char(d)) {
          throw ParseError(ParseError::Kind::syntax, line_, column_, "illegal character in string");
        }
        text += advance();
      }
      advance();
      if (pos_ < src_.size() && !is_separator(src_[pos_])) {
        throw ParseError(ParseError::Kind::syntax, line_, column_, "unexpected character after string");
      }
      return {Kind::string, std::move(text), line, column};
    }
    throw ParseError(ParseError::Kind::syntax, line, column, "unexpected character");
  }

 private:
  static bool is_separator(char c) noexcept { return c == ' ' || c == '\t' || c == '\n'; }

  char advance() noexcept {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return c;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

class Parser {
 public:
  using Kind = Lexer::Kind;
  using Token = Lexer::Token;

  explicit Parser(std::string_view src) : lexer_(src) { shift(); }

  ChartProgram run() {
    skip_newlines();
    expect_keyword("chart");
    const Token type_tok = expect(Kind::word, "chart type");
    const auto type = chart_type_from_string(type_tok.text);
    if (!type) syntax(type_tok, "unknown chart type '" + type_tok.text + "'");
    ChartProgram p;
    p.chart_type = *type;
    end_of_statement();

    bool seen_grid = false;
    while (true) {
      skip_newlines();
      if (cur_.kind == Kind::end) break;
      const Token stmt = expect(Kind::word, "statement keyword");
      if (stmt.text == "title" || stmt.text == "xlabel" || stmt.text == "ylabel") {
        auto& slot = stmt.text == "title" ? p.title : stmt.text == "xlabel" ? p.xlabel : p.ylabel;
        if (slot) invalid(stmt, "duplicate " + stmt.text);
        const Token s = expect(Kind::string, "string");
        check_string(s.text, stmt.text, s.line, s.column);
        slot = s.text;
      } else if (stmt.text == "grid") {
        if (seen_grid) invalid(stmt, "duplicate grid");
        seen_grid = true;
        const Token flag = expect(Kind::word, "'on' or 'off'");
        if (flag.text == "on") {
          p.grid = true;
        } else if (flag.text == "off") {
          p.grid = false;
        } else {
          syntax(flag, "expected 'on' or 'off'");
        }
      } else if (stmt.text == "series") {
        if (p.series.size() >= static_cast<std::size_t>(kMaxSeries)) invalid(stmt, "more than 4 series");
        Series s;
        const Token name = expect(Kind::string, "series name");
        check_string(name.text, "series name", name.line, name.column);
        s.name = name.text;
        expect_keyword("color");
        const Token color = expect(Kind::number, "color index");
        if (color.text.find('.') != std::string::npos) syntax(color, "color index must be an integer");
        if (color.text.size() > 1 || color.text[0] > '7') invalid(color, "color index must be 0-7");
        s.color = color.text[0] - '0';
        expect_keyword("values");
        if (cur_.kind != Kind::number) syntax(cur_, "at least one value expected");
        while (cur_.kind == Kind::number) {
          const Token v = cur_;
          shift();
          const double value = std::strtod(v.text.c_str(), nullptr);
          if (quantum_index(value) < 0) invalid(v, "value " + v.text + " outside the quantized set");
          if (s.values.size() >= static_cast<std::size_t>(kMaxValues)) invalid(v, "more than 12 values");
          s.values.push_back(value);
        }
        p.series.push_back(std::move(s));
      } else {
        syntax(stmt, "unknown statement '" + stmt.text + "'");
      }
      end_of_statement();
    }
    validate(p, cur_.line, cur_.column);
    return p;
  }

 private:
  void shift() { cur_ = lexer_.next(); }

  [[noreturn]] static void syntax(const Token& t, const std::string& msg) {
    throw ParseError(ParseError::Kind::syntax, t.line, t.column, msg);
  }
  [[noreturn]] static void invalid(const Token& t, const std::string& msg) {
    throw ParseError(ParseError::Kind::validation, t.line, t.column, msg);
  }

  Token expect(Kind kind, std::string_view what) {
    if (cur_.kind != kind) syntax(cur_, std::string(what) + " expected");
    Token t = cur_;
    shift();
    return t;
  }

  void expect_keyword(std::string_view kw) {
    if (cur_.kind != Kind::word || cur_.text != kw) syntax(cur_, "'" + std::string(kw) + "' expected");
    shift();
  }

  void end_of_statement() {
    if (cur_.kind == Kind::end) return;
    if (cur_.kind != Kind::newline) syntax(cur_, "end of line expected");
    shift();
  }

  void skip_newlines() {
    while (cur_.kind == Kind::newline) shift();
  }

  Lexer lexer_;
  Token cur_{Kind::end, {}, 1, 1};
};

}  // namespace detail

/// Parses DSL source. Throws ParseError carrying the 1-based line/column.
inline ChartProgram parse(std::string_view text) { return detail::Parser(text).run(); }

/// Canonical form: fixed statement order, `grid off` omitted, two-decimal numerics,
/// one statement per line, trailing LF.
inline std::string serialize(const ChartProgram& p) {
  std::string out = "chart ";
  out += to_string(p.chart_type);
  out += '\n';
  auto quoted = [&out](std::string_view kw, const std::string& s) {
    out += kw;
    out += " \"";
    out += s;
    out += "\"\n";
  };
  if (p.title) quoted("title", *p.title);
  if (p.xlabel) quoted("xlabel", *p.xlabel);
  if (p.ylabel) quoted("ylabel", *p.ylabel);
  if (p.grid) out += "grid on\n";
  for (const Series& s : p.series) {
    out += "series \"" + s.name + "\" color " + std::to_string(s.color) + " values";
    for (double v : s.values) {
      out += ' ';
      out += format_value(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token vocabulary

using TokenId = std::int32_t;
using TokenStream = std::vector<TokenId>;

/// Fixed vocabulary layout:
///   0 end-of-sequence, 1 string delimiter, 2..11 keywords, 12..17 chart types,
///   18..25 palette indices, 26..89 members of Q, 90..127 string characters.
struct Vocabulary {
  static constexpr TokenId eos = 0;
  static constexpr TokenId quote = 1;

  static constexpr TokenId kw_chart = 2;
  static constexpr TokenId kw_title = 3;
  static constexpr TokenId kw_xlabel = 4;
  static constexpr TokenId kw_ylabel = 5;
  static constexpr TokenId kw_grid = 6;
  static constexpr TokenId kw_on = 7;
  static constexpr TokenId kw_off = 8;
  static constexpr TokenId kw_series = 9;
  static constexpr TokenId kw_color = 10;
  static constexpr TokenId kw_values = 11;

  static constexpr TokenId type_base = 12;
  static constexpr TokenId palette_base = type_base + kNumChartTypes;
  static constexpr TokenId number_base = palette_base + kPaletteSize;
  static constexpr TokenId char_base = number_base + kNumQuanta;
  static constexpr std::string_view charset = "abcdefghijklmnopqrstuvwxyz0123456789_ ";
  static constexpr TokenId size = char_base + static_cast<TokenId>(charset.size());

  static constexpr TokenId type_token(ChartType t) noexcept {
    return type_base + static_cast<TokenId>(t);
  }
  static constexpr TokenId palette_token(int color) noexcept { return palette_base + color; }
  static constexpr TokenId number_token(int quantum) noexcept { return number_base + quantum; }
  static constexpr TokenId char_token(char c) noexcept {
    return char_base + static_cast<TokenId>(charset.find(c));
  }

  static constexpr bool is_type(TokenId t) noexcept { return t >= type_base && t < palette_base; }
  static constexpr bool is_palette(TokenId t) noexcept { return t >= palette_base && t < number_base; }
  static constexpr bool is_number(TokenId t) noexcept { return t >= number_base && t < char_base; }
  static constexpr bool is_char(TokenId t) noexcept { return t >= char_base && t < size; }

  // Human-readable name of a token, for diagnostics.
  static std::string name(TokenId t) {
    static constexpr std::array<std::string_view, 12> kFixed = {
        "<eos>", "\"", "chart", "title", "xlabel", "ylabel",
        "grid", "on", "off", "series", "color", "values"};
    if (t >= 0 && t < type_base) return std::string(kFixed[static_cast<std::size_t>(t)]);
    if (is_type(t)) return std::string(kChartTypeNames[static_cast<std::size_t>(t - type_base)]);
    if (is_palette(t)) return "#" + std::to_string(t - palette_base);
    if (is_number(t)) return format_value(quantum_value(t - number_base));
    if (is_char(t)) return std::string(1, charset[static_cast<std::size_t>(t - char_base)]);
    return "<bad:" + std::to_string(t) + ">";
  }
};

/// Canonical token stream; `p` must be valid.
inline TokenStream tokenize(const ChartProgram& p) {
  TokenStream out;
  out.push_back(Vocabulary::kw_chart);
  out.push_back(Vocabulary::type_token(p.chart_type));
  auto quoted = [&out](const std::string& s) {
    out.push_back(Vocabulary::quote);
    for (char c : s) out.push_back(Vocabulary::char_token(c));
    out.push_back(Vocabulary::quote);
  };
  if (p.title) {
    out.push_back(Vocabulary::kw_title);
    quoted(*p.title);
  }
  if (p.xlabel) {
    out.push_back(Vocabulary::kw_xlabel);
    quoted(*p.xlabel);
  }
  if (p.ylabel) {
    out.push_back(Vocabulary::kw_ylabel);
    quoted(*p.ylabel);
  }
  if (p.grid) {
    out.push_back(Vocabulary::kw_grid);
    out.push_back(Vocabulary::kw_on);
  }
  for (const Series& s : p.series) {
    out.push_back(Vocabulary::kw_series);
    quoted(s.name);
    out.push_back(Vocabulary::kw_color);
    out.push_back(Vocabulary::palette_token(s.color));
    out.push_back(Vocabulary::kw_values);
    for (double v : s.values) out.push_back(Vocabulary::number_token(quantum_index(v)));
  }
  out.push_back(Vocabulary::eos);
  return out;
}

/// Inverse of tokenize. Accepts statements in any order (as the text parser
/// does); a stream that ends before end-of-sequence is rejected. Errors report
/// line 0 and the offending token index as the column.
inline ChartProgram detokenize(const TokenStream& tokens) {
  using V = Vocabulary;
  std::size_t pos = 0;
  auto fail = [&](ParseError::Kind kind, const std::string& msg) -> void {
    throw ParseError(kind, 0, static_cast<int>(pos), msg);
  };
  auto next = [&]() -> TokenId {
    if (pos >= tokens.size()) fail(ParseError::Kind::syntax, "stream ended before end-of-sequence");
    const TokenId t = tokens[pos++];
    if (t < 0 || t >= V::size) fail(ParseError::Kind::syntax, "token id out of range");
    return t;
  };
  auto peek = [&]() -> TokenId {
    if (pos >= tokens.size()) fail(ParseError::Kind::syntax, "stream ended before end-of-sequence");
    return tokens[pos];
  };
  auto string_literal = [&]() -> std::string {
    if (next() != V::quote) fail(ParseError::Kind::syntax, "string delimiter expected");
    std::string s;
    while (true) {
      const TokenId t = next();
      if (t == V::quote) break;
      if (!V::is_char(t)) fail(ParseError::Kind::syntax, "non-character token inside string");
      s += V::charset[static_cast<std::size_t>(t - V::char_base)];
      if (s.size() > kMaxStringLength) fail(ParseError::Kind::validation, "string longer than 24 characters");
    }
    if (s.empty()) fail(ParseError::Kind::validation, "empty string");
    return s;
  };

  ChartProgram p;
  if (next() != V::kw_chart) fail(ParseError::Kind::syntax, "'chart' expected");
  const TokenId type = next();
  if (!V::is_type(type)) fail(ParseError::Kind::syntax, "chart type expected");
  p.chart_type = static_cast<ChartType>(type - V::type_base);

  bool seen_grid = false;
  while (true) {
    const TokenId t = next();
    if (t == V::eos) break;
    switch (t) {
      case V::kw_title:
      case V::kw_xlabel:
      case V::kw_ylabel: {
        auto& slot = t == V::kw_title ? p.title : t == V::kw_xlabel ? p.xlabel : p.ylabel;
        if (slot) fail(ParseError::Kind::validation, "duplicate label statement");
        slot = string_literal();
        break;
      }
      case V::kw_grid: {
        if (seen_grid) fail(ParseError::Kind::validation, "duplicate grid");
        seen_grid = true;
        const TokenId flag = next();
        if (flag != V::kw_on && flag != V::kw_off) fail(ParseError::Kind::syntax, "'on' or 'off' expected");
        p.grid = flag == V::kw_on;
        break;
      }
      case V::kw_series: {
        if (p.series.size() >= static_cast<std::size_t>(kMaxSeries)) {
          fail(ParseError::Kind::validation, "more than 4 series");
        }
        Series s;
        s.name = string_literal();
        if (next() != V::kw_color) fail(ParseError::Kind::syntax, "'color' expected");
        const TokenId c = next();
        if (!V::is_palette(c)) fail(ParseError::Kind::syntax, "palette index expected");
        s.color = c - V::palette_base;
        if (next() != V::kw_values) fail(ParseError::Kind::syntax, "'values' expected");
        if (!V::is_number(peek())) fail(ParseError::Kind::syntax, "at least one value expected");
        while (V::is_number(peek())) {
          if (s.values.size() >= static_cast<std::size_t>(kMaxValues)) {
            fail(ParseError::Kind::validation, "more than 12 values");
          }
          s.values.push_back(quantum_value(next() - V::number_base));
        }
        p.series.push_back(std::move(s));
        break;
      }
      default:
        --pos;
        fail(ParseError::Kind::syntax, "statement keyword expected, got " + V::name(t));
    }
  }
  if (pos != tokens.size()) fail(ParseError::Kind::syntax, "tokens after end-of-sequence");
  validate(p, 0, static_cast<int>(pos));
  return p;
}

}  // namespace chartsim
