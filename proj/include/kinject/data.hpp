#pragma once

// Tabular ingestion (CSV, numeric ARFF), train-split imputation and
// standardization, stratified splitting and ROC-based feature ranking.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kinject/error.hpp"
#include "kinject/metrics.hpp"
#include "kinject/random.hpp"

namespace kinject {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

struct Dataset {
  std::vector<std::string> feature_names;
  /// n x p raw values; NaN marks a missing cell.
  Eigen::MatrixXd raw;
  std::vector<int> labels;
  std::string label_name;

  std::size_t rows() const { return static_cast<std::size_t>(raw.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(raw.cols()); }

  std::size_t feature_index(std::string_view name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j)
      if (feature_names[j] == name) return j;
    throw ConfigurationError("unknown feature '" + std::string(name) + "'");
  }

  std::vector<std::size_t> missing_counts() const {
    std::vector<std::size_t> out(features(), 0);
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      for (Eigen::Index j = 0; j < raw.cols(); ++j)
        if (is_missing(raw(i, j))) ++out[static_cast<std::size_t>(j)];
    return out;
  }

  Dataset select_columns(std::span<const std::size_t> columns) const {
    Dataset out;
    out.label_name = label_name;
    out.labels = labels;
    out.raw.resize(raw.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] >= features()) throw ContractError("column index out of range");
      out.feature_names.push_back(feature_names[columns[c]]);
      out.raw.col(static_cast<Eigen::Index>(c)) =
          raw.col(static_cast<Eigen::Index>(columns[c]));
    }
    return out;
  }

  Dataset select_rows(std::span<const std::size_t> rows_) const {
    Dataset out;
    out.label_name = label_name;
    out.feature_names = feature_names;
    out.raw.resize(static_cast<Eigen::Index>(rows_.size()), raw.cols());
    out.labels.reserve(rows_.size());
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (rows_[r] >= rows()) throw ContractError("row index out of range");
      out.raw.row(static_cast<Eigen::Index>(r)) =
          raw.row(static_cast<Eigen::Index>(rows_[r]));
      out.labels.push_back(labels[rows_[r]]);
    }
    return out;
  }
};

/// Per-feature training statistics. Everything downstream that works in raw
/// units (knowledge functions, ALE, attributions) maps through these.
struct FeatureStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::size_t> missing_count;
  std::vector<bool> constant;
  std::vector<std::string> warnings;

  std::size_t features() const { return mean.size(); }

  /// Identity stats (mean 0, sd 1) for p features.
  static FeatureStats identity(std::size_t p) {
    FeatureStats s;
    for (std::size_t j = 0; j < p; ++j) s.names.push_back("x" + std::to_string(j));
    s.mean.assign(p, 0.0);
    s.sd.assign(p, 1.0);
    s.missing_count.assign(p, 0);
    s.constant.assign(p, false);
    return s;
  }

  /// Raw -> z-scores; missing cells are imputed with the training mean.
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw) const {
    check_width(raw.cols());
    Eigen::MatrixXd z(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const auto jj = static_cast<std::size_t>(j);
      for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const double v = raw(i, j);
        z(i, j) = is_missing(v) ? 0.0 : (v - mean[jj]) / sd[jj];
      }
    }
    return z;
  }

  /// z-scores -> raw units.
  Eigen::MatrixXd restore(const Eigen::MatrixXd& z) const {
    check_width(z.cols());
    Eigen::MatrixXd raw(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const auto jj = static_cast<std::size_t>(j);
      raw.col(j) = z.col(j).array() * sd[jj] + mean[jj];
    }
    return raw;
  }

  /// Raw values with missing cells replaced by the training mean.
  Eigen::MatrixXd impute(const Eigen::MatrixXd& raw) const {
    check_width(raw.cols());
    Eigen::MatrixXd out = raw;
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
      for (Eigen::Index i = 0; i < raw.rows(); ++i)
        if (is_missing(out(i, j))) out(i, j) = mean[static_cast<std::size_t>(j)];
    return out;
  }

  Eigen::RowVectorXd inverse_sd() const {
    Eigen::RowVectorXd out(static_cast<Eigen::Index>(sd.size()));
    for (std::size_t j = 0; j < sd.size(); ++j)
      out(static_cast<Eigen::Index>(j)) = 1.0 / sd[j];
    return out;
  }

 private:
  void check_width(Eigen::Index cols) const {
    if (static_cast<std::size_t>(cols) != mean.size())
      throw ContractError("expected " + std::to_string(mean.size()) +
                          " features, got " + std::to_string(cols));
  }
};

struct StandardizedData {
  /// All rows, imputed and z-scored with training statistics.
  Eigen::MatrixXd z;
  FeatureStats stats;
};

/// Computes mean and sample sd of each feature over `train_rows` (missing
/// cells skipped), imputes missing cells with the training mean and z-scores
/// every row with the training statistics.
inline StandardizedData impute_and_standardize(const Dataset& data,
                                               std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw ContractError("impute_and_standardize: no training rows");
  const std::size_t p = data.features();
  FeatureStats stats;
  stats.names = data.feature_names;
  stats.mean.assign(p, 0.0);
  stats.sd.assign(p, 1.0);
  stats.missing_count.assign(p, 0);
  stats.constant.assign(p, false);
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r : train_rows) {
      if (r >= data.rows()) throw ContractError("training row index out of range");
      const double v = data.raw(static_cast<Eigen::Index>(r), col);
      if (is_missing(v)) {
        ++stats.missing_count[j];
      } else {
        sum += v;
        ++count;
      }
    }
    if (count == 0)
      throw SchemaError("column '" + data.feature_names[j] +
                        "' has no observed values in the training rows");
    if (2 * stats.missing_count[j] > train_rows.size())
      stats.warnings.push_back("column '" + data.feature_names[j] + "' is " +
                               std::to_string(100 * stats.missing_count[j] /
                                              train_rows.size()) +
                               "% missing in the training rows");
    double mean = sum / static_cast<double>(count);
    // Second pass removes the rounding left in the first, which matters for
    // columns whose spread is tiny next to their magnitude.
    double drift = 0.0;
    for (std::size_t r : train_rows) {
      const double v = data.raw(static_cast<Eigen::Index>(r), col);
      if (!is_missing(v)) drift += v - mean;
    }
    mean += drift / static_cast<double>(count);
    // Deviations of imputed cells are zero, so they only count toward n.
    double ss = 0.0;
    for (std::size_t r : train_rows) {
      const double v = data.raw(static_cast<Eigen::Index>(r), col);
      if (!is_missing(v)) ss += (v - mean) * (v - mean);
    }
    const double n = static_cast<double>(train_rows.size());
    const double sd = n > 1.0 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    stats.mean[j] = mean;
    if (sd > 0.0 && std::isfinite(sd)) {
      stats.sd[j] = sd;
    } else {
      stats.sd[j] = 1.0;
      stats.constant[j] = true;
      stats.warnings.push_back("column '" + data.feature_names[j] +
                               "' is constant in the training rows");
    }
  }
  StandardizedData out;
  out.z = stats.standardize(data.raw);
  out.stats = std::move(stats);
  return out;
}

// ---------------------------------------------------------------------------
// Loading

enum class TableFormat { csv, arff };

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Splits one record on commas, honoring double quotes ("" escapes a quote)
/// and, when `single_quotes` is set, ARFF-style single quotes.
inline std::vector<std::string> split_record(std::string_view line, std::size_t line_no,
                                             bool single_quotes = false) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  char quote = '"';
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == quote) {
        if (i + 1 < line.size() && line[i + 1] == quote) {
          cur.push_back(c);
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' || (single_quotes && c == '\'')) {
      quoted = true;
      quote = c;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  fields.emplace_back(trim(cur));
  return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline double parse_cell(std::string_view cell, std::size_t line_no, std::size_t column) {
  cell = trim(cell);
  if (cell.empty() || cell == "?") return kMissing;
  auto v = parse_number(cell);
  if (!v)
    throw ParseError("non-numeric value '" + std::string(cell) + "'", line_no, column);
  return *v;
}

inline int parse_label(std::string_view cell, std::size_t line_no) {
  cell = trim(cell);
  const std::string l = lower(cell);
  if (l == "true") return 1;
  if (l == "false") return 0;
  if (auto v = parse_number(cell)) {
    if (*v == 0.0) return 0;
    if (*v == 1.0) return 1;
  }
  throw SchemaError("unknown label value '" + std::string(cell) + "' on line " +
                    std::to_string(line_no));
}

inline bool getline_crlf(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace detail

/// CSV with a header row; `?` or an empty cell marks a missing value.
inline Dataset parse_csv(std::istream& in, const std::string& label_column) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (detail::getline_crlf(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_record(line, line_no);
      break;
    }
  }
  if (header.empty()) throw ParseError("empty CSV input");
  std::size_t label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == label_column) label_col = c;
  if (label_col == header.size())
    throw SchemaError("label column '" + label_column + "' not found in CSV header");

  Dataset out;
  out.label_name = label_column;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_col) out.feature_names.push_back(header[c]);

  std::vector<std::vector<double>> rows;
  while (detail::getline_crlf(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_record(line, line_no);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    std::vector<double> row;
    row.reserve(header.size() - 1);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_col)
        out.labels.push_back(detail::parse_label(fields[c], line_no));
      else
        row.push_back(detail::parse_cell(fields[c], line_no, c + 1));
    }
    rows.push_back(std::move(row));
  }
  out.raw.resize(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(out.feature_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out.raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

/// ARFF restricted to numeric attributes plus a nominal class attribute.
inline Dataset parse_arff(std::istream& in, const std::string& label_column) {
  struct Attribute {
    std::string name;
    bool numeric;
  };
  std::vector<Attribute> attributes;
  std::string line;
  std::size_t line_no = 0;
  bool in_data = false;
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;

  auto read_name = [&](std::string_view& rest) {
    rest = detail::trim(rest);
    std::string name;
    if (!rest.empty() && (rest.front() == '\'' || rest.front() == '"')) {
      const char q = rest.front();
      const auto close = rest.find(q, 1);
      if (close == std::string_view::npos)
        throw ParseError("unterminated attribute name", line_no);
      name = std::string(rest.substr(1, close - 1));
      rest = rest.substr(close + 1);
    } else {
      std::size_t end = 0;
      while (end < rest.size() && !std::isspace(static_cast<unsigned char>(rest[end]))) ++end;
      name = std::string(rest.substr(0, end));
      rest = rest.substr(end);
    }
    return name;
  };

  while (detail::getline_crlf(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '%') continue;
    if (in_data) {
      if (view.front() == '{') throw ParseError("sparse ARFF rows are not supported", line_no);
      records.push_back(detail::split_record(view, line_no, true));
      record_lines.push_back(line_no);
      continue;
    }
    if (view.front() != '@') throw ParseError("expected an @ declaration", line_no, 1);
    std::size_t kw_end = 0;
    while (kw_end < view.size() && !std::isspace(static_cast<unsigned char>(view[kw_end])))
      ++kw_end;
    const std::string keyword = detail::lower(view.substr(0, kw_end));
    std::string_view rest = view.substr(kw_end);
    if (keyword == "@relation") {
      continue;
    } else if (keyword == "@attribute") {
      std::string name = read_name(rest);
      rest = detail::trim(rest);
      const std::string type = detail::lower(rest);
      if (type == "numeric" || type == "real" || type == "integer") {
        attributes.push_back({name, true});
      } else if (!rest.empty() && rest.front() == '{') {
        if (name != label_column)
          throw SchemaError("nominal attribute '" + name +
                            "' is not supported (only the label may be nominal)");
        attributes.push_back({name, false});
      } else {
        throw SchemaError("attribute '" + name + "' has unsupported type '" +
                          std::string(rest) + "'");
      }
    } else if (keyword == "@data") {
      in_data = true;
    } else {
      throw ParseError("unknown declaration '" + keyword + "'", line_no, 1);
    }
  }
  if (!in_data) throw ParseError("missing @data section");

  std::size_t label_col = attributes.size();
  for (std::size_t c = 0; c < attributes.size(); ++c)
    if (attributes[c].name == label_column) label_col = c;
  if (label_col == attributes.size())
    throw SchemaError("label attribute '" + label_column + "' not declared");

  Dataset out;
  out.label_name = label_column;
  for (std::size_t c = 0; c < attributes.size(); ++c)
    if (c != label_col) out.feature_names.push_back(attributes[c].name);
  out.raw.resize(static_cast<Eigen::Index>(records.size()),
                 static_cast<Eigen::Index>(out.feature_names.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& fields = records[i];
    if (fields.size() != attributes.size())
      throw ParseError("expected " + std::to_string(attributes.size()) +
                           " values, got " + std::to_string(fields.size()),
                       record_lines[i]);
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_col)
        out.labels.push_back(detail::parse_label(fields[c], record_lines[i]));
      else
        out.raw(static_cast<Eigen::Index>(i), j++) =
            detail::parse_cell(fields[c], record_lines[i], c + 1);
    }
  }
  return out;
}

inline Dataset load_table(const std::string& path, TableFormat format,
                          const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return format == TableFormat::csv ? parse_csv(in, label_column)
                                    : parse_arff(in, label_column);
}

/// Writes the dataset as CSV (features then label) at full precision.
inline void write_csv(const Dataset& data, std::ostream& out) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& name : data.feature_names) out << quote(name) << ',';
  out << quote(data.label_name) << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.features(); ++j) {
      const double v = data.raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (is_missing(v))
        out << '?';
      else
        out << v;
      out << ',';
    }
    out << data.labels[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting and feature ranking

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffle and cut so both sides keep the class proportions
/// (within one row per class). Each class needs at least two rows.
inline Split stratified_split(std::span<const int> labels, double fraction,
                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ContractError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  Split out;
  for (int c = 0; c < 2; ++c) {
    auto& rows = by_class[c];
    if (rows.size() < 2)
      throw ValidationError("class " + std::to_string(c) + " has " +
                            std::to_string(rows.size()) +
                            " rows; stratified splitting needs at least 2");
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    shuffle(std::span<std::size_t>(rows), rng);
    auto take = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(rows.size())));
    take = std::clamp<std::size_t>(take, 1, rows.size() - 1);
    out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline Split stratified_split(const Dataset& data, double fraction, std::uint64_t seed) {
  return stratified_split(std::span<const int>(data.labels), fraction, seed);
}

struct FeatureScore {
  std::size_t index = 0;
  std::string name;
  double auroc = 0.5;
  /// max(auroc, 1 - auroc).
  double score = 0.5;
};

/// Ranks features by how well each one alone separates the classes, in
/// either direction. Missing cells are skipped per feature. `rows` restricts
/// the ranking to a subset (e.g. the training split); empty means all rows.
inline std::vector<FeatureScore> roc_feature_select(const Dataset& data, std::size_t k,
                                                    std::span<const std::size_t> rows = {}) {
  if (k > data.features())
    throw ContractError("cannot select " + std::to_string(k) + " of " +
                        std::to_string(data.features()) + " features");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(data.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  std::vector<FeatureScore> scores;
  for (std::size_t j = 0; j < data.features(); ++j) {
    std::vector<double> x;
    std::vector<int> y;
    for (std::size_t r : rows) {
      const double v = data.raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      if (is_missing(v)) continue;
      x.push_back(v);
      y.push_back(data.labels[r]);
    }
    FeatureScore s;
    s.index = j;
    s.name = data.feature_names[j];
    s.auroc = auroc(x, y);
    s.score = std::max(s.auroc, 1.0 - s.auroc);
    scores.push_back(std::move(s));
  }
  std::stable_sort(scores.begin(), scores.end(),
                   [](const FeatureScore& a, const FeatureScore& b) { return a.score > b.score; });
  scores.resize(k);
  return scores;
}

}  // namespace kinject
