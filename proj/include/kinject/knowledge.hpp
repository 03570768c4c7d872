#pragma once

// Per-feature knowledge functions k_j: raw feature value -> [-1, 1].
//
// Positive k penalizes a positive partial derivative (the effect should be
// decreasing), negative k penalizes a negative one, zero means no knowledge.
// The logistic form never goes below 0, so it can only discourage increasing
// effects; encouraging them needs Constant(-1) or negative piecewise knots.

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "kinject/error.hpp"

namespace kinject {

struct ZeroKnowledge {};

struct ConstantKnowledge {
  double value = 0.0;
};

struct LogisticKnowledge {
  double slope = 100.0;
  double center = 0.0;
};

struct PiecewiseKnowledge {
  /// (x, k) knots, x strictly increasing.
  std::vector<std::pair<double, double>> knots;
};

class KnowledgeFunction {
 public:
  using Form = std::variant<ZeroKnowledge, ConstantKnowledge, LogisticKnowledge,
                            PiecewiseKnowledge>;

  KnowledgeFunction() = default;

  static KnowledgeFunction zero() { return KnowledgeFunction(ZeroKnowledge{}); }

  static KnowledgeFunction constant(double c) {
    if (!std::isfinite(c) || std::abs(c) > 1.0)
      throw ValidationError("constant knowledge must lie in [-1, 1], got " +
                            format_number(c));
    return KnowledgeFunction(ConstantKnowledge{c});
  }

  static KnowledgeFunction logistic(double slope = 100.0, double center = 0.0) {
    if (!std::isfinite(slope) || !std::isfinite(center))
      throw ValidationError("logistic knowledge needs finite slope and center");
    return KnowledgeFunction(LogisticKnowledge{slope, center});
  }

  static KnowledgeFunction piecewise(std::vector<std::pair<double, double>> knots) {
    if (knots.empty())
      throw ValidationError("piecewise knowledge needs at least one knot");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      const auto [x, k] = knots[i];
      if (!std::isfinite(x) || !std::isfinite(k) || std::abs(k) > 1.0)
        throw ValidationError("piecewise knot values must lie in [-1, 1]");
      if (i > 0 && !(x > knots[i - 1].first))
        throw ValidationError("piecewise knots must be strictly increasing in x");
    }
    return KnowledgeFunction(PiecewiseKnowledge{std::move(knots)});
  }

  const Form& form() const { return form_; }
  bool is_zero() const { return std::holds_alternative<ZeroKnowledge>(form_); }

  double operator()(double x) const {
    return std::visit(
        [x](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ZeroKnowledge>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, ConstantKnowledge>) {
            return f.value;
          } else if constexpr (std::is_same_v<T, LogisticKnowledge>) {
            return 1.0 / (1.0 + std::exp(-f.slope * (x - f.center)));
          } else {
            const auto& kn = f.knots;
            if (x <= kn.front().first) return kn.front().second;
            if (x >= kn.back().first) return kn.back().second;
            std::size_t hi = 1;
            while (kn[hi].first < x) ++hi;
            const auto [x0, k0] = kn[hi - 1];
            const auto [x1, k1] = kn[hi];
            if (x == x1) return k1;
            const double t = (x - x0) / (x1 - x0);
            return k0 + t * (k1 - k0);
          }
        },
        form_);
  }

  /// Config syntax, parseable by parse_knowledge_function.
  std::string to_string() const {
    return std::visit(
        [](const auto& f) -> std::string {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ZeroKnowledge>) {
            return "zero";
          } else if constexpr (std::is_same_v<T, ConstantKnowledge>) {
            return "constant(" + format_number(f.value) + ")";
          } else if constexpr (std::is_same_v<T, LogisticKnowledge>) {
            return "logistic(slope=" + format_number(f.slope) +
                   ", center=" + format_number(f.center) + ")";
          } else {
            std::string out = "piecewise(";
            for (std::size_t i = 0; i < f.knots.size(); ++i) {
              if (i) out += ",";
              out += "(" + format_number(f.knots[i].first) + "," +
                     format_number(f.knots[i].second) + ")";
            }
            return out + ")";
          }
        },
        form_);
  }

  static std::string format_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }

 private:
  explicit KnowledgeFunction(Form f) : form_(std::move(f)) {}
  Form form_ = ZeroKnowledge{};
};

/// Knowledge for every feature of a p-dimensional input; unlisted features
/// carry no knowledge.
class KnowledgeSpec {
 public:
  KnowledgeSpec() = default;
  explicit KnowledgeSpec(std::size_t features) : features_(features) {}

  std::size_t features() const { return features_; }

  void set(std::size_t feature, KnowledgeFunction k) {
    if (feature >= features_)
      throw ValidationError("knowledge feature index " + std::to_string(feature) +
                            " outside [0, " + std::to_string(features_) + ")");
    if (k.is_zero())
      entries_.erase(feature);
    else
      entries_[feature] = std::move(k);
  }

  const KnowledgeFunction& at(std::size_t feature) const {
    static const KnowledgeFunction kZero;
    auto it = entries_.find(feature);
    return it == entries_.end() ? kZero : it->second;
  }

  const std::map<std::size_t, KnowledgeFunction>& entries() const {
    return entries_;
  }

  /// True when every feature has zero knowledge.
  bool empty() const { return entries_.empty(); }

  std::vector<double> eval(std::span<const double> x) const {
    if (x.size() != features_)
      throw ContractError("eval_k: expected " + std::to_string(features_) +
                          " features, got " + std::to_string(x.size()));
    std::vector<double> out(features_, 0.0);
    for (const auto& [j, k] : entries_) out[j] = k(x[j]);
    return out;
  }

  /// Row-wise evaluation over an n x p matrix of raw values.
  Eigen::MatrixXd eval(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != features_)
      throw ContractError("eval_k: expected " + std::to_string(features_) +
                          " columns, got " + std::to_string(x.cols()));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    for (const auto& [j, k] : entries_) {
      const auto col = static_cast<Eigen::Index>(j);
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, col) = k(x(i, col));
    }
    return out;
  }

 private:
  std::size_t features_ = 0;
  std::map<std::size_t, KnowledgeFunction> entries_;
};

inline std::vector<double> eval_k(const KnowledgeSpec& spec,
                                  std::span<const double> x) {
  return spec.eval(x);
}

namespace detail {

class ExprCursor {
 public:
  explicit ExprCursor(std::string_view s) : s_(s) {}

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  std::string identifier() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected identifier");
    return std::string(s_.substr(start, pos_ - start));
  }
  double number() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) ||
            std::string_view("+-.eE").find(s_[pos_]) != std::string_view::npos))
      ++pos_;
    const std::string tok(s_.substr(start, pos_ - start));
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      pos_ = start;
      fail("expected number");
    }
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " in knowledge expression '" + std::string(s_) + "'",
                     0, 0);
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses `zero | constant(c) | logistic(slope=s, center=m) |
/// piecewise((x1,k1),(x2,k2),...)`. Logistic arguments default to slope 100,
/// center 0 and may be given positionally.
inline KnowledgeFunction parse_knowledge_function(std::string_view text) {
  detail::ExprCursor cur(text);
  const std::string kind = cur.identifier();
  KnowledgeFunction out;
  if (kind == "zero") {
    if (cur.accept('(')) cur.expect(')');
    out = KnowledgeFunction::zero();
  } else if (kind == "constant") {
    cur.expect('(');
    const double c = cur.number();
    cur.expect(')');
    out = KnowledgeFunction::constant(c);
  } else if (kind == "logistic") {
    double slope = 100.0, center = 0.0;
    cur.expect('(');
    int positional = 0;
    if (!cur.accept(')')) {
      do {
        cur.skip_ws();
        // Named (slope=..) or positional argument.
        detail::ExprCursor probe = cur;
        std::string name;
        try {
          name = probe.identifier();
        } catch (const ParseError&) {
        }
        if (!name.empty() && probe.accept('=')) {
          cur = probe;
          const double v = cur.number();
          if (name == "slope")
            slope = v;
          else if (name == "center")
            center = v;
          else
            cur.fail("unknown logistic argument '" + name + "'");
        } else {
          const double v = cur.number();
          if (positional == 0)
            slope = v;
          else if (positional == 1)
            center = v;
          else
            cur.fail("too many logistic arguments");
          ++positional;
        }
      } while (cur.accept(','));
      cur.expect(')');
    }
    out = KnowledgeFunction::logistic(slope, center);
  } else if (kind == "piecewise") {
    std::vector<std::pair<double, double>> knots;
    cur.expect('(');
    do {
      cur.expect('(');
      const double x = cur.number();
      cur.expect(',');
      const double k = cur.number();
      cur.expect(')');
      knots.emplace_back(x, k);
    } while (cur.accept(','));
    cur.expect(')');
    out = KnowledgeFunction::piecewise(std::move(knots));
  } else {
    cur.fail("unknown knowledge function '" + kind + "'");
  }
  if (!cur.done()) cur.fail("trailing characters");
  return out;
}

/// Builds a spec from `featureName = expression` entries.
inline KnowledgeSpec parse_knowledge_spec(
    const std::vector<std::pair<std::string, std::string>>& entries,
    std::span<const std::string> feature_names) {
  KnowledgeSpec spec(feature_names.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < feature_names.size(); ++j) index[feature_names[j]] = j;

  std::vector<std::string> unknown;
  std::map<std::size_t, std::string> seen;
  for (const auto& [name, expr] : entries) {
    auto it = index.find(name);
    if (it == index.end()) {
      unknown.push_back(name);
      continue;
    }
    if (seen.count(it->second))
      throw ValidationError("duplicate knowledge entry for feature '" + name + "'");
    seen[it->second] = name;
    spec.set(it->second, parse_knowledge_function(expr));
  }
  if (!unknown.empty()) {
    std::string names;
    for (const auto& u : unknown) names += (names.empty() ? "" : ", ") + u;
    throw ValidationError("knowledge refers to unknown features: " + names);
  }
  return spec;
}

/// Parses the body of a `[knowledge]` section: one `name = expr` per line,
/// `#` comments and blank lines ignored.
inline KnowledgeSpec parse_knowledge_spec(std::string_view text,
                                          std::span<const std::string> feature_names) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    auto trim = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
      return s;
    };
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ParseError("expected 'feature = expression'", line_no, 1);
      std::string_view value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        value = value.substr(1, value.size() - 2);
      entries.emplace_back(std::string(trim(line.substr(0, eq))),
                           std::string(value));
    }
    start = end + 1;
  }
  return parse_knowledge_spec(entries, feature_names);
}

}  // namespace kinject
