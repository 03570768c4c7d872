#pragma once

// Run configuration read from a TOML file. The reader covers the part of TOML
// the configuration uses: [tables], bare or quoted keys, strings, integers,
// floats, booleans and (nested, multi-line) arrays.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinject/data.hpp"
#include "kinject/error.hpp"
#include "kinject/eval.hpp"
#include "kinject/interpret.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/losses.hpp"
#include "kinject/models.hpp"
#include "kinject/train.hpp"

namespace kinject {
namespace toml {

struct Value {
  enum class Kind { string, integer, floating, boolean, array };
  Kind kind = Kind::string;
  std::string text;
  std::int64_t integer = 0;
  double floating = 0.0;
  bool boolean = false;
  std::vector<Value> items;
  std::size_t line = 0;

  bool is_number() const { return kind == Kind::integer || kind == Kind::floating; }
  double number() const { return kind == Kind::integer ? static_cast<double>(integer) : floating; }
};

inline std::string kind_name(Value::Kind k) {
  switch (k) {
    case Value::Kind::string: return "string";
    case Value::Kind::integer: return "integer";
    case Value::Kind::floating: return "float";
    case Value::Kind::boolean: return "boolean";
    case Value::Kind::array: return "array";
  }
  return "value";
}

struct Entry {
  std::string key;
  Value value;
};

struct Table {
  std::string name;
  std::size_t line = 0;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
};

/// Tables in file order; the first one is the unnamed root.
struct Document {
  std::vector<Table> tables;

  const Table* table(std::string_view name) const {
    for (const auto& t : tables)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  Document run() {
    Document doc;
    doc.tables.push_back({"", 1, {}});
    std::set<std::string> names{""};
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        const std::size_t header_line = line_;
        get();
        skip_spaces();
        std::string name = key();
        skip_spaces();
        expect(']');
        if (!names.insert(name).second) fail("table [" + name + "] defined twice");
        end_of_line();
        doc.tables.push_back({name, header_line, {}});
        continue;
      }
      const std::size_t key_line = line_;
      std::string k = key();
      skip_spaces();
      expect('=');
      skip_spaces();
      Value v = value();
      end_of_line();
      Table& t = doc.tables.back();
      if (t.find(k)) {
        line_ = key_line;
        fail("duplicate key '" + k + "'");
      }
      t.entries.push_back({std::move(k), std::move(v)});
    }
    return doc;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t line_start_ = 0;

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  char get() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      line_start_ = pos_;
    }
    return c;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what, line_, pos_ - line_start_ + 1);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    get();
  }

  void skip_spaces() {
    while (peek() == ' ' || peek() == '\t') get();
  }

  void skip_comment() {
    if (peek() == '#')
      while (!at_end() && peek() != '\n') get();
  }

  void skip_blank_lines() {
    while (!at_end()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') get();
      if (peek() != '\n') return;
      get();
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (!at_end()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r')
        get();
      else
        return;
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') get();
    if (at_end()) return;
    if (peek() != '\n') fail("unexpected characters after value");
    get();
  }

  static bool bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string key() {
    if (peek() == '"' || peek() == '\'') return string_value();
    std::string out;
    while (bare_char(peek())) out += get();
    if (out.empty()) fail("expected a key");
    return out;
  }

  std::string string_value() {
    const char quote = get();
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      char c = get();
      if (c == quote) return out;
      if (quote == '"' && c == '\\') {
        if (at_end()) fail("unterminated string");
        c = get();
        switch (c) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          default: fail(std::string("unsupported escape '\\") + c + "'");
        }
        continue;
      }
      out += c;
    }
  }

  Value value() {
    Value v;
    v.line = line_;
    const char c = peek();
    if (c == '"' || c == '\'') {
      v.kind = Value::Kind::string;
      v.text = string_value();
      return v;
    }
    if (c == '[') {
      get();
      v.kind = Value::Kind::array;
      skip_array_space();
      while (peek() != ']') {
        v.items.push_back(value());
        skip_array_space();
        if (peek() == ',') {
          get();
          skip_array_space();
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
      get();
      return v;
    }
    std::string word;
    while (!at_end() && (bare_char(peek()) || peek() == '.' || peek() == '+')) word += get();
    if (word == "true" || word == "false") {
      v.kind = Value::Kind::boolean;
      v.boolean = word == "true";
      return v;
    }
    if (word.empty()) fail("expected a value");
    std::string digits;
    for (char d : word)
      if (d != '_') digits += d;
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    const char* first = digits.data() + (digits[0] == '+' ? 1 : 0);
    const char* last = digits.data() + digits.size();
    if (is_float) {
      v.kind = Value::Kind::floating;
      auto [p, ec] = std::from_chars(first, last, v.floating);
      if (ec != std::errc() || p != last || !std::isfinite(v.floating)) fail("invalid number '" + word + "'");
    } else {
      v.kind = Value::Kind::integer;
      auto [p, ec] = std::from_chars(first, last, v.integer);
      if (ec != std::errc() || p != last) fail("invalid value '" + word + "'");
    }
    return v;
  }
};

}  // namespace detail

inline Document parse(std::string_view text) { return detail::Reader(text).run(); }

}  // namespace toml

// ---------------------------------------------------------------------------

struct DataConfig {
  std::string path;
  std::optional<TableFormat> format;  // from the extension when unset
  std::string label = "label";
  std::vector<std::string> features;  // empty: all, or the top-k
  std::optional<std::size_t> select_top_k;

  TableFormat resolved_format() const {
    if (format) return *format;
    return std::filesystem::path(path).extension() == ".arff" ? TableFormat::arff : TableFormat::csv;
  }
};

struct ModelConfig {
  Architecture arch = Architecture::mlp;
  std::vector<int> hidden;  // empty: the architecture default
  Activation activation = Activation::tanh;
  int skip_every = 2;

  NetworkSpec spec(std::size_t inputs) const {
    const int p = static_cast<int>(inputs);
    NetworkSpec s = arch == Architecture::mlp ? NetworkSpec::default_mlp(p) : NetworkSpec::default_resnet(p);
    if (!hidden.empty()) {
      s.layer_sizes = {p};
      s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
      s.layer_sizes.push_back(1);
    }
    s.activation = activation;
    s.skip_every = skip_every;
    s.validate();
    return s;
  }
};

struct SearchConfig {
  std::optional<LambdaWeights> lambda;
  std::vector<LambdaWeights> grid;  // used when lambda is unset
  bool table1 = true;               // grid is the 16-cell default
  std::size_t bootstrap = 10;
  double split = 0.75;
  LambdaWeights baseline = LambdaWeights::make(1, 0, 0);

  std::vector<LambdaWeights> cells() const {
    if (lambda) return {*lambda};
    return table1 ? table1_grid() : grid;
  }
};

struct ScarcityConfig {
  std::vector<double> fractions = default_scarcity_fractions();
  std::optional<LambdaWeights> with_knowledge;
  std::optional<LambdaWeights> without_knowledge;
};

struct AleConfig {
  std::vector<std::string> features;  // empty: every model feature
  std::size_t bins = kDefaultAleBins;
  bool aware = true;
  bool on_logit = false;  // probability scale unless set
};

enum class BaselineKind { mean, zero };

struct ExplainConfig {
  std::size_t steps = kDefaultIgSteps;
  BaselineKind baseline = BaselineKind::mean;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output = "runs";
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  SearchConfig search;
  std::vector<std::pair<std::string, std::string>> knowledge;
  ScarcityConfig scarcity;
  AleConfig ale;
  ExplainConfig explain;

  /// The master seed also drives training.
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }
};

namespace detail {

class ConfigBuilder {
 public:
  explicit ConfigBuilder(const toml::Document& doc) : doc_(doc) {}

  RunConfig build() {
    static const std::set<std::string> known{"",        "data", "model", "train",  "search",
                                             "knowledge", "scarcity", "ale", "explain"};
    for (const auto& t : doc_.tables)
      if (!known.count(t.name)) throw ConfigurationError("unknown section [" + t.name + "]");

    RunConfig c;
    if (const toml::Table* t = doc_.table("")) {
      Section s(*t);
      if (auto v = s.get("seed")) c.seed = unsigned_integer(*v, "seed");
      if (auto v = s.get("output")) c.output = string(*v, "output");
      s.finish();
    }
    if (const toml::Table* t = doc_.table("data")) {
      Section s(*t);
      if (auto v = s.get("path")) c.data.path = string(*v, "data.path");
      if (auto v = s.get("format")) {
        const std::string f = string(*v, "data.format");
        if (f == "csv")
          c.data.format = TableFormat::csv;
        else if (f == "arff")
          c.data.format = TableFormat::arff;
        else
          throw ConfigurationError("data.format must be csv or arff, got '" + f + "'");
      }
      if (auto v = s.get("label")) c.data.label = string(*v, "data.label");
      if (auto v = s.get("features")) c.data.features = strings(*v, "data.features");
      if (auto v = s.get("select_top_k")) c.data.select_top_k = unsigned_integer(*v, "data.select_top_k");
      s.finish();
      if (!c.data.features.empty() && c.data.select_top_k)
        throw ConfigurationError("data.features and data.select_top_k are mutually exclusive");
    }
    if (c.data.path.empty()) throw ConfigurationError("data.path is required");

    if (const toml::Table* t = doc_.table("model")) {
      Section s(*t);
      wrap("model.arch", [&] {
        if (auto v = s.get("arch")) c.model.arch = parse_architecture(string(*v, "model.arch"));
      });
      if (auto v = s.get("layer_sizes")) {
        for (const auto& item : array(*v, "model.layer_sizes").items) {
          const auto n = unsigned_integer(item, "model.layer_sizes");
          if (n < 1 || n > 100000) throw ConfigurationError("model.layer_sizes entries must be positive");
          c.model.hidden.push_back(static_cast<int>(n));
        }
      }
      wrap("model.activation", [&] {
        if (auto v = s.get("activation")) c.model.activation = parse_activation(string(*v, "model.activation"));
      });
      if (auto v = s.get("skip_every")) c.model.skip_every = static_cast<int>(unsigned_integer(*v, "model.skip_every"));
      s.finish();
      wrap("model", [&] { c.model.spec(1); });
    }

    if (const toml::Table* t = doc_.table("train")) {
      Section s(*t);
      wrap("train.optimizer", [&] {
        if (auto v = s.get("optimizer")) c.train.optimizer = parse_optimizer(string(*v, "train.optimizer"));
      });
      if (auto v = s.get("lr")) c.train.lr = number(*v, "train.lr");
      if (auto v = s.get("beta1")) c.train.beta1 = number(*v, "train.beta1");
      if (auto v = s.get("beta2")) c.train.beta2 = number(*v, "train.beta2");
      if (auto v = s.get("epsilon")) c.train.epsilon = number(*v, "train.epsilon");
      if (auto v = s.get("momentum")) c.train.momentum = number(*v, "train.momentum");
      if (auto v = s.get("epochs")) c.train.epochs = static_cast<int>(unsigned_integer(*v, "train.epochs"));
      if (auto v = s.get("batch")) c.train.batch_size = static_cast<int>(unsigned_integer(*v, "train.batch"));
      wrap("train.knowledge_mode", [&] {
        if (auto v = s.get("knowledge_mode"))
          c.train.knowledge_mode = parse_knowledge_mode(string(*v, "train.knowledge_mode"));
      });
      if (auto v = s.get("seed")) {
        const std::uint64_t seed = unsigned_integer(*v, "train.seed");
        if (doc_.tables.front().find("seed") && seed != c.seed)
          throw ConfigurationError("seed and train.seed disagree");
        c.seed = seed;
      }
      s.finish();
      wrap("train", [&] { c.train.validate(static_cast<std::size_t>(c.train.batch_size)); });
    }

    if (const toml::Table* t = doc_.table("search")) {
      Section s(*t);
      auto lambda = s.get("lambda");
      auto grid = s.get("lambda_grid");
      if (lambda && grid) throw ConfigurationError("search.lambda and search.lambda_grid are mutually exclusive");
      if (lambda) c.search.lambda = weights(*lambda, "search.lambda");
      if (grid) {
        if (grid->kind == toml::Value::Kind::string) {
          if (grid->text != "table1")
            throw ConfigurationError("search.lambda_grid must be \"table1\" or a list of triples");
        } else {
          c.search.table1 = false;
          for (const auto& item : array(*grid, "search.lambda_grid").items)
            c.search.grid.push_back(weights(item, "search.lambda_grid"));
          if (c.search.grid.empty()) throw ConfigurationError("search.lambda_grid is empty");
        }
      }
      if (auto v = s.get("bootstrap")) c.search.bootstrap = unsigned_integer(*v, "search.bootstrap");
      if (c.search.bootstrap < 2) throw ConfigurationError("search.bootstrap must be at least 2");
      if (auto v = s.get("split")) c.search.split = number(*v, "search.split");
      if (!(c.search.split > 0.0 && c.search.split < 1.0))
        throw ConfigurationError("search.split must lie in (0, 1)");
      if (auto v = s.get("baseline")) c.search.baseline = weights(*v, "search.baseline");
      s.finish();
    }

    if (const toml::Table* t = doc_.table("knowledge")) {
      for (const auto& e : t->entries) {
        const std::string expr = string(e.value, "knowledge." + e.key);
        wrap("knowledge." + e.key, [&] { parse_knowledge_function(expr); });
        c.knowledge.emplace_back(e.key, expr);
      }
    }

    if (const toml::Table* t = doc_.table("scarcity")) {
      Section s(*t);
      if (auto v = s.get("fractions")) {
        c.scarcity.fractions.clear();
        for (const auto& item : array(*v, "scarcity.fractions").items) {
          const double f = number(item, "scarcity.fractions");
          if (!(f > 0.0 && f < 1.0)) throw ConfigurationError("scarcity.fractions must lie in (0, 1)");
          c.scarcity.fractions.push_back(f);
        }
        if (c.scarcity.fractions.empty()) throw ConfigurationError("scarcity.fractions is empty");
      }
      if (auto v = s.get("with_knowledge")) c.scarcity.with_knowledge = weights(*v, "scarcity.with_knowledge");
      if (auto v = s.get("without_knowledge"))
        c.scarcity.without_knowledge = weights(*v, "scarcity.without_knowledge");
      s.finish();
    }

    if (const toml::Table* t = doc_.table("ale")) {
      Section s(*t);
      if (auto v = s.get("features")) c.ale.features = strings(*v, "ale.features");
      if (auto v = s.get("bins")) c.ale.bins = unsigned_integer(*v, "ale.bins");
      if (c.ale.bins < 1) throw ConfigurationError("ale.bins must be at least 1");
      if (auto v = s.get("aware")) c.ale.aware = boolean(*v, "ale.aware");
      if (auto v = s.get("scale")) {
        const std::string scale = string(*v, "ale.scale");
        if (scale != "probability" && scale != "logit")
          throw ConfigurationError("ale.scale must be probability or logit");
        c.ale.on_logit = scale == "logit";
      }
      s.finish();
    }

    if (const toml::Table* t = doc_.table("explain")) {
      Section s(*t);
      if (auto v = s.get("steps")) c.explain.steps = unsigned_integer(*v, "explain.steps");
      if (c.explain.steps < 1) throw ConfigurationError("explain.steps must be at least 1");
      if (auto v = s.get("baseline")) {
        const std::string b = string(*v, "explain.baseline");
        if (b == "mean")
          c.explain.baseline = BaselineKind::mean;
        else if (b == "zero")
          c.explain.baseline = BaselineKind::zero;
        else
          throw ConfigurationError("explain.baseline must be mean or zero");
      }
      s.finish();
    }
    return c;
  }

 private:
  const toml::Document& doc_;

  // Tracks which keys were read so leftovers can be reported.
  class Section {
   public:
    explicit Section(const toml::Table& t) : table_(t) {}
    const toml::Value* get(std::string_view key) {
      const toml::Entry* e = table_.find(key);
      if (!e) return nullptr;
      used_.insert(std::string(key));
      return &e->value;
    }
    void finish() const {
      for (const auto& e : table_.entries)
        if (!used_.count(e.key))
          throw ConfigurationError("unknown key '" + e.key + "'" +
                                   (table_.name.empty() ? std::string() : " in [" + table_.name + "]") +
                                   " at line " + std::to_string(e.value.line));
    }

   private:
    const toml::Table& table_;
    std::set<std::string> used_;
  };

  template <class F>
  static void wrap(const std::string& where, F&& f) {
    try {
      f();
    } catch (const ConfigurationError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigurationError(where + ": " + e.what());
    }
  }

  static void require(const toml::Value& v, toml::Value::Kind kind, const std::string& where) {
    if (v.kind != kind)
      throw ConfigurationError(where + " must be a " + toml::kind_name(kind) + ", got " + toml::kind_name(v.kind) +
                               " at line " + std::to_string(v.line));
  }
  static std::string string(const toml::Value& v, const std::string& where) {
    require(v, toml::Value::Kind::string, where);
    return v.text;
  }
  static bool boolean(const toml::Value& v, const std::string& where) {
    require(v, toml::Value::Kind::boolean, where);
    return v.boolean;
  }
  static const toml::Value& array(const toml::Value& v, const std::string& where) {
    require(v, toml::Value::Kind::array, where);
    return v;
  }
  static double number(const toml::Value& v, const std::string& where) {
    if (!v.is_number())
      throw ConfigurationError(where + " must be a number at line " + std::to_string(v.line));
    return v.number();
  }
  static std::uint64_t unsigned_integer(const toml::Value& v, const std::string& where) {
    require(v, toml::Value::Kind::integer, where);
    if (v.integer < 0) throw ConfigurationError(where + " must be nonnegative");
    return static_cast<std::uint64_t>(v.integer);
  }
  static std::vector<std::string> strings(const toml::Value& v, const std::string& where) {
    std::vector<std::string> out;
    for (const auto& item : array(v, where).items) out.push_back(string(item, where));
    return out;
  }
  static LambdaWeights weights(const toml::Value& v, const std::string& where) {
    const auto& a = array(v, where);
    if (a.items.size() != 3)
      throw ConfigurationError(where + " needs three weights (fit, complexity, knowledge)");
    LambdaWeights w{number(a.items[0], where), number(a.items[1], where), number(a.items[2], where)};
    wrap(where, [&] { w.validate(); });
    return w;
  }
};

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

inline std::string number_text(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string weights_text(const LambdaWeights& w) {
  return "[" + number_text(w.fit) + ", " + number_text(w.complexity) + ", " + number_text(w.knowledge) + "]";
}

inline std::string strings_text(const std::vector<std::string>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + quote(v[i]);
  return s + "]";
}

}  // namespace detail

/// Parses configuration text. Syntax problems surface as ParseError,
/// invalid settings as ConfigurationError.
inline RunConfig parse_run_config(std::string_view text) {
  const toml::Document doc = toml::parse(text);
  return detail::ConfigBuilder(doc).build();
}

/// Reads a configuration file; a relative data path is taken relative to the
/// file's directory.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c = parse_run_config(buf.str());
  const std::filesystem::path data(c.data.path);
  if (data.is_relative()) c.data.path = (std::filesystem::path(path).parent_path() / data).lexically_normal().string();
  return c;
}

/// Every setting spelled out, defaults included. Parsing the result gives
/// back the same configuration.
inline std::string to_toml(const RunConfig& c) {
  using detail::number_text;
  using detail::quote;
  std::ostringstream o;
  o << "seed = " << c.seed << "\n";
  o << "output = " << quote(c.output) << "\n\n";

  o << "[data]\npath = " << quote(c.data.path) << "\n";
  o << "format = " << quote(c.data.resolved_format() == TableFormat::csv ? "csv" : "arff") << "\n";
  o << "label = " << quote(c.data.label) << "\n";
  if (!c.data.features.empty()) o << "features = " << detail::strings_text(c.data.features) << "\n";
  if (c.data.select_top_k) o << "select_top_k = " << *c.data.select_top_k << "\n";

  o << "\n[model]\narch = " << quote(to_string(c.model.arch)) << "\n";
  if (!c.model.hidden.empty()) {
    o << "layer_sizes = [";
    for (std::size_t i = 0; i < c.model.hidden.size(); ++i) o << (i ? ", " : "") << c.model.hidden[i];
    o << "]\n";
  }
  o << "activation = " << quote(c.model.activation == Activation::tanh ? "tanh" : "relu") << "\n";
  o << "skip_every = " << c.model.skip_every << "\n";

  o << "\n[train]\noptimizer = " << quote(to_string(c.train.optimizer)) << "\n";
  o << "lr = " << number_text(c.train.lr) << "\n";
  o << "beta1 = " << number_text(c.train.beta1) << "\n";
  o << "beta2 = " << number_text(c.train.beta2) << "\n";
  o << "epsilon = " << number_text(c.train.epsilon) << "\n";
  o << "momentum = " << number_text(c.train.momentum) << "\n";
  o << "epochs = " << c.train.epochs << "\n";
  o << "batch = " << c.train.batch_size << "\n";
  o << "knowledge_mode = " << quote(to_string(c.train.knowledge_mode)) << "\n";

  o << "\n[search]\n";
  if (c.search.lambda) {
    o << "lambda = " << detail::weights_text(*c.search.lambda) << "\n";
  } else if (c.search.table1) {
    o << "lambda_grid = \"table1\"\n";
  } else {
    o << "lambda_grid = [\n";
    for (const auto& w : c.search.grid) o << "  " << detail::weights_text(w) << ",\n";
    o << "]\n";
  }
  o << "bootstrap = " << c.search.bootstrap << "\n";
  o << "split = " << number_text(c.search.split) << "\n";
  o << "baseline = " << detail::weights_text(c.search.baseline) << "\n";

  o << "\n[knowledge]\n";
  for (const auto& [name, expr] : c.knowledge) o << quote(name) << " = " << quote(expr) << "\n";

  o << "\n[scarcity]\nfractions = [";
  for (std::size_t i = 0; i < c.scarcity.fractions.size(); ++i)
    o << (i ? ", " : "") << number_text(c.scarcity.fractions[i]);
  o << "]\n";
  if (c.scarcity.with_knowledge) o << "with_knowledge = " << detail::weights_text(*c.scarcity.with_knowledge) << "\n";
  if (c.scarcity.without_knowledge)
    o << "without_knowledge = " << detail::weights_text(*c.scarcity.without_knowledge) << "\n";

  o << "\n[ale]\n";
  if (!c.ale.features.empty()) o << "features = " << detail::strings_text(c.ale.features) << "\n";
  o << "bins = " << c.ale.bins << "\n";
  o << "aware = " << (c.ale.aware ? "true" : "false") << "\n";
  o << "scale = " << quote(c.ale.on_logit ? "logit" : "probability") << "\n";

  o << "\n[explain]\nsteps = " << c.explain.steps << "\n";
  o << "baseline = " << quote(c.explain.baseline == BaselineKind::mean ? "mean" : "zero") << "\n";
  return o.str();
}

}  // namespace kinject
