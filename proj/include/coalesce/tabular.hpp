#pragma once

// Tabular ingestion: CSV parsing, schema inference, treatment-coded design
// matrix, and the Gram system X^T X / X^T f shared by every solver.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "coalesce/error.hpp"

namespace coalesce {

enum class FeatureKind { Numeric, Categorical };

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  std::vector<std::string> levels;  // lexicographic; levels[0] is the reference level

  bool is_categorical() const { return kind == FeatureKind::Categorical; }
  /// Number of design columns the feature owns.
  std::size_t width() const { return is_categorical() ? levels.size() - 1 : 1; }
};

struct FeatureSchema {
  std::vector<Feature> features;
  std::string prediction_column;  // empty when predictions come from a separate file

  std::size_t size() const { return features.size(); }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(f.name);
    return out;
  }
};

/// Contiguous half-open slice [first, first + count) of design columns.
struct ColumnRange {
  std::size_t first = 0;
  std::size_t count = 0;
  std::size_t end() const { return first + count; }
};

struct DesignMatrix {
  Eigen::MatrixXd values;                // N_train x q, column 0 is the intercept
  std::vector<ColumnRange> column_map;   // one entry per feature, in schema order
  static constexpr std::size_t intercept = 0;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

struct PredictionVector {
  Eigen::VectorXd values;

  PredictionVector() = default;
  explicit PredictionVector(Eigen::VectorXd v) : values(std::move(v)) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw Error(ErrorKind::NonFiniteValue, "prediction " + std::to_string(i) + " is not finite")
            .with_row(static_cast<std::size_t>(i));
      }
    }
  }
  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

struct GramSystem {
  Eigen::MatrixXd Q;  // X^T X
  Eigen::VectorXd m;  // X^T f
  double max_diag = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(Q.rows()); }
};

/// Column selection and type overrides applied while loading a table.
struct TableHints {
  std::set<std::string> categorical;
  std::set<std::string> numeric;
  std::set<std::string> drop;
  std::string prediction_column;  // moved out of the features into `predictions`
};

struct Table {
  FeatureSchema schema;
  std::vector<std::vector<std::string>> rows;  // feature cells, aligned with schema.features
  std::optional<PredictionVector> predictions;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.emplace_back(trim(cell));
  return out;
}

inline bool is_missing(std::string_view cell) { return cell.empty() || cell == "NA"; }

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline RawTable read_csv(std::istream& in) {
  RawTable t;
  std::string line;
  bool have_header = false;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      if (!cells.empty() && cells[0].size() >= 3 && cells[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        cells[0].erase(0, 3);  // UTF-8 BOM
      }
      std::set<std::string> seen;
      for (const auto& name : cells) {
        if (name.empty()) throw Error(ErrorKind::InvalidArgument, "empty column name in header");
        if (!seen.insert(name).second) throw Error(ErrorKind::DuplicateColumn, "duplicate column '" + name + "'");
      }
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(ErrorKind::MissingCell, "row " + std::to_string(data_row) + " has " +
                                              std::to_string(cells.size()) + " cells, expected " +
                                              std::to_string(t.header.size()))
          .with_row(data_row);
    }
    t.rows.push_back(std::move(cells));
    ++data_row;
  }
  if (!have_header) throw Error(ErrorKind::EmptyTable, "no header row");
  return t;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return in;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorKind::UnknownColumn, "no column named '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace detail

/// Parses a header-plus-rows CSV stream and infers the feature schema.
/// A column is categorical iff any of its cells is not a number, unless a hint
/// says otherwise. Rows with a missing cell are rejected.
inline Table load_table(std::istream& in, const TableHints& hints = {}) {
  auto raw = detail::read_csv(in);
  if (raw.rows.empty()) throw Error(ErrorKind::EmptyTable, "table has a header but no rows");

  for (const auto* group : {&hints.categorical, &hints.numeric, &hints.drop}) {
    for (const auto& name : *group) detail::column_index(raw.header, name);
  }
  for (const auto& name : hints.categorical) {
    if (hints.numeric.count(name)) {
      throw Error(ErrorKind::InvalidArgument, "column '" + name + "' hinted both numeric and categorical");
    }
  }

  std::optional<std::size_t> pred_col;
  if (!hints.prediction_column.empty()) pred_col = detail::column_index(raw.header, hints.prediction_column);

  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    for (std::size_t c = 0; c < raw.header.size(); ++c) {
      if (hints.drop.count(raw.header[c])) continue;
      if (detail::is_missing(raw.rows[r][c])) {
        throw Error(ErrorKind::MissingCell,
                    "row " + std::to_string(r) + " is missing a value for column '" + raw.header[c] + "'")
            .with_row(r);
      }
    }
  }

  Table table;
  table.schema.prediction_column = hints.prediction_column;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    const auto& name = raw.header[c];
    if (hints.drop.count(name) || (pred_col && *pred_col == c)) continue;

    bool all_numeric = true;
    for (const auto& row : raw.rows) {
      if (!detail::parse_number(row[c])) {
        all_numeric = false;
        break;
      }
    }
    Feature f;
    f.name = name;
    if (hints.numeric.count(name)) {
      if (!all_numeric) throw Error(ErrorKind::InvalidArgument, "column '" + name + "' hinted numeric but has non-numeric cells");
      f.kind = FeatureKind::Numeric;
    } else if (hints.categorical.count(name) || !all_numeric) {
      f.kind = FeatureKind::Categorical;
      std::set<std::string> levels;
      for (const auto& row : raw.rows) levels.insert(row[c]);
      f.levels.assign(levels.begin(), levels.end());
      if (f.levels.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, "categorical column '" + name + "' has fewer than 2 levels");
      }
    }
    table.schema.features.push_back(std::move(f));
    feature_cols.push_back(c);
  }
  if (table.schema.features.empty()) throw Error(ErrorKind::EmptyTable, "no feature columns left");

  table.rows.reserve(raw.rows.size());
  for (auto& row : raw.rows) {
    std::vector<std::string> cells;
    cells.reserve(feature_cols.size());
    for (auto c : feature_cols) cells.push_back(std::move(row[c]));
    table.rows.push_back(std::move(cells));
  }

  if (pred_col) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(raw.rows.size()));
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      auto v = detail::parse_number(raw.rows[r][*pred_col]);
      if (!v) {
        throw Error(ErrorKind::NonFiniteValue, "prediction in row " + std::to_string(r) + " is not a number")
            .with_row(r);
      }
      f[static_cast<Eigen::Index>(r)] = *v;
    }
    table.predictions = PredictionVector(std::move(f));
  }
  return table;
}

inline Table load_table(const std::string& path, const TableHints& hints = {}) {
  auto in = detail::open_input(path);
  return load_table(in, hints);
}

/// Reads a single-column predictions file. A non-numeric first line is taken as a header.
inline PredictionVector load_predictions(std::istream& in) {
  std::vector<double> values;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    auto cell = detail::trim(line);
    if (cell.empty()) continue;
    auto v = detail::parse_number(cell);
    if (!v) {
      if (first) {
        first = false;
        continue;
      }
      throw Error(ErrorKind::NonFiniteValue, "prediction '" + std::string(cell) + "' is not a number")
          .with_row(values.size());
    }
    first = false;
    values.push_back(*v);
  }
  if (values.empty()) throw Error(ErrorKind::EmptyTable, "predictions file has no values");
  return PredictionVector(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

inline PredictionVector load_predictions(const std::string& path) {
  auto in = detail::open_input(path);
  return load_predictions(in);
}

/// Reads rows to explain; columns are matched to the schema by name and extra
/// columns are ignored. Missing cells are kept (as empty strings) so that the
/// failure is reported per row by encode_row.
inline std::vector<std::vector<std::string>> load_rows(std::istream& in, const FeatureSchema& schema) {
  auto raw = detail::read_csv(in);
  std::vector<std::size_t> cols;
  for (const auto& f : schema.features) {
    auto it = std::find(raw.header.begin(), raw.header.end(), f.name);
    if (it == raw.header.end()) {
      throw Error(ErrorKind::MissingFeature, "rows to explain lack feature column '" + f.name + "'");
    }
    cols.push_back(static_cast<std::size_t>(it - raw.header.begin()));
  }
  std::vector<std::vector<std::string>> rows;
  rows.reserve(raw.rows.size());
  for (const auto& r : raw.rows) {
    std::vector<std::string> cells;
    for (auto c : cols) cells.push_back(detail::is_missing(r[c]) ? std::string() : r[c]);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::vector<std::vector<std::string>> load_rows(const std::string& path, const FeatureSchema& schema) {
  auto in = detail::open_input(path);
  return load_rows(in, schema);
}

/// Column layout implied by a schema: intercept first, then each feature's
/// columns in schema order.
inline std::vector<ColumnRange> column_map_for(const FeatureSchema& schema) {
  std::vector<ColumnRange> map;
  std::size_t next = 1;
  for (const auto& f : schema.features) {
    map.push_back({next, f.width()});
    next += f.width();
  }
  return map;
}

inline std::size_t design_width(const std::vector<ColumnRange>& column_map) {
  return column_map.empty() ? 1 : column_map.back().end();
}

namespace detail {

inline void encode_into(const FeatureSchema& schema, const std::vector<ColumnRange>& column_map,
                        std::span<const std::string> cells, double* out) {
  if (cells.size() != schema.size()) {
    throw Error(ErrorKind::MissingFeature, "expected " + std::to_string(schema.size()) + " feature values, got " +
                                               std::to_string(cells.size()));
  }
  out[0] = 1.0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema.features[i];
    const auto& range = column_map[i];
    const auto& cell = cells[i];
    if (is_missing(cell)) throw Error(ErrorKind::MissingFeature, "no value for feature '" + f.name + "'");
    if (f.is_categorical()) {
      auto it = std::lower_bound(f.levels.begin(), f.levels.end(), cell);
      if (it == f.levels.end() || *it != cell) {
        throw Error(ErrorKind::UnseenLevel, "level '" + cell + "' unseen for feature '" + f.name + "'");
      }
      auto level = static_cast<std::size_t>(it - f.levels.begin());
      for (std::size_t k = 0; k < range.count; ++k) out[range.first + k] = (level == k + 1) ? 1.0 : 0.0;
    } else {
      auto v = parse_number(cell);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorKind::NonFiniteValue, "value '" + cell + "' of feature '" + f.name + "' is not a finite number");
      }
      out[range.first] = *v;
    }
  }
}

}  // namespace detail

/// Encodes one instance with the same treatment coding as build_design.
inline Eigen::VectorXd encode_row(const FeatureSchema& schema, const std::vector<ColumnRange>& column_map,
                                  std::span<const std::string> x_star) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(design_width(column_map)));
  detail::encode_into(schema, column_map, x_star, out.data());
  return out;
}

inline DesignMatrix build_design(const FeatureSchema& schema, const std::vector<std::vector<std::string>>& rows) {
  DesignMatrix d;
  d.column_map = column_map_for(schema);
  const auto q = design_width(d.column_map);
  d.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(q));
  Eigen::VectorXd buf(static_cast<Eigen::Index>(q));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    try {
      detail::encode_into(schema, d.column_map, rows[r], buf.data());
    } catch (Error& e) {
      e.with_row(r);
      throw;
    }
    d.values.row(static_cast<Eigen::Index>(r)) = buf.transpose();
  }
  if (rows.size() < q) {
    throw Error(ErrorKind::InvalidArgument, std::to_string(rows.size()) + " training rows cannot identify " +
                                                std::to_string(q) + " design columns");
  }
  return d;
}

/// Q = X^T X (upper triangle accumulated, then mirrored) and m = X^T f.
inline GramSystem compute_gram(const DesignMatrix& design, const PredictionVector& f) {
  if (design.rows() != f.size()) {
    throw Error(ErrorKind::DimensionMismatch, "design has " + std::to_string(design.rows()) + " rows but " +
                                                  std::to_string(f.size()) + " predictions");
  }
  const auto n = static_cast<Eigen::Index>(design.rows());
  const auto q = static_cast<Eigen::Index>(design.cols());
  const auto& X = design.values;
  GramSystem g;
  g.Q.resize(q, q);
  g.m.resize(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) s += X(r, i) * X(r, j);
      g.Q(i, j) = s;
      g.Q(j, i) = s;
    }
    double s = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) s += X(r, j) * f.values[r];
    g.m[j] = s;
  }
  g.max_diag = q > 0 ? g.Q.diagonal().maxCoeff() : 0.0;
  return g;
}

}  // namespace coalesce
