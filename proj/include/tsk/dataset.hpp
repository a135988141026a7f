#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "tsk/error.hpp"
#include "tsk/rng.hpp"

namespace tsk {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// N x D feature matrix with contiguous integer labels 0..C-1.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<std::string> feature_names;
  /// Raw label value for each class index, when loaded from a file.
  std::vector<long long> class_values;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool empty() const { return features.rows() == 0; }

  void validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw ShapeError("dataset has " + std::to_string(features.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels");
    if (num_classes < 1) throw SchemaError("dataset must have at least one class");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw SchemaError("label " + std::to_string(y) + " outside 0.." +
                          std::to_string(num_classes - 1));
  }

  /// Rows selected by `rows`, in that order. Class metadata is kept.
  Dataset subset(std::span<const Index> rows) const {
    Dataset out;
    out.features.resize(static_cast<Index>(rows.size()), dim());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.features.row(static_cast<Index>(i)) = features.row(rows[i]);
      out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
    }
    out.num_classes = num_classes;
    out.feature_names = feature_names;
    out.class_values = class_values;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Loading

enum class CsvFormat { WithHeader, NoHeader };

struct CsvOptions {
  CsvFormat format = CsvFormat::NoHeader;
  /// Column holding the labels. Negative values count from the end (-1 is
  /// the last column). Ignored when `label_name` is set.
  int label_column = -1;
  /// Header name of the label column; requires CsvFormat::WithHeader.
  std::optional<std::string> label_name;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Sorted distinct raw labels define the class indices.
inline void remap_labels(const std::vector<long long>& raw, Dataset& ds) {
  std::vector<long long> distinct = raw;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  ds.labels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    ds.labels[i] = static_cast<int>(
        std::lower_bound(distinct.begin(), distinct.end(), raw[i]) - distinct.begin());
  ds.num_classes = static_cast<int>(distinct.size());
  ds.class_values = std::move(distinct);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open data file '" + path + "'");
  return in;
}

}  // namespace detail

/// Parses comma-separated rows. Row numbers in errors are 1-based file lines.
inline Dataset parse_dense(std::istream& in, const CsvOptions& opts = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> width;
  std::size_t label_col = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;

  auto resolve_label_column = [&](std::size_t n_fields) {
    if (opts.label_name) {
      const auto it = std::find(names.begin(), names.end(), *opts.label_name);
      if (it == names.end()) throw SchemaError("no column named '" + *opts.label_name + "'");
      return static_cast<std::size_t>(it - names.begin());
    }
    const long long idx = opts.label_column < 0 ? static_cast<long long>(n_fields) + opts.label_column
                                                : opts.label_column;
    if (idx < 0 || idx >= static_cast<long long>(n_fields))
      throw SchemaError("label column " + std::to_string(opts.label_column) + " out of range");
    return static_cast<std::size_t>(idx);
  };

  bool header_pending = opts.format == CsvFormat::WithHeader;
  if (opts.label_name && !header_pending)
    throw ConfigError("a named label column requires a header row");

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, ',');
    if (fields.size() < 2)
      throw ParseError("row " + std::to_string(line_no) + ": expected at least 2 fields, found " +
                       std::to_string(fields.size()));
    if (header_pending) {
      for (auto f : fields) names.emplace_back(f);
      width = fields.size();
      label_col = resolve_label_column(fields.size());
      header_pending = false;
      continue;
    }
    if (!width) {
      width = fields.size();
      label_col = resolve_label_column(fields.size());
    } else if (fields.size() != *width) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(*width) +
                       " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> values;
    values.reserve(fields.size() - 1);
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j == label_col) {
        const auto label = detail::parse_integer(fields[j]);
        if (!label)
          throw SchemaError("row " + std::to_string(line_no) + ": label '" + std::string(fields[j]) +
                            "' is not an integer");
        raw_labels.push_back(*label);
        continue;
      }
      const auto v = detail::parse_real(fields[j]);
      if (!v)
        throw ParseError("row " + std::to_string(line_no) + ": cannot parse '" +
                         std::string(fields[j]) + "' as a number");
      values.push_back(*v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError("no data rows");

  Dataset ds;
  const Index d = static_cast<Index>(*width - 1);
  ds.features.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index j = 0; j < d; ++j) ds.features(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  if (!names.empty()) {
    names.erase(names.begin() + static_cast<std::ptrdiff_t>(label_col));
    ds.feature_names = std::move(names);
  }
  detail::remap_labels(raw_labels, ds);
  return ds;
}

inline Dataset load_dense(const std::string& path, const CsvOptions& opts = {}) {
  auto in = detail::open_input(path);
  return parse_dense(in, opts);
}

/// Parses "label idx:val idx:val ..." lines with 1-based ascending indices.
/// Unlisted entries are zero; D is the largest index in the input.
inline Dataset parse_sparse_index_value(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<std::pair<long long, double>>> rows;
  std::vector<long long> raw_labels;
  long long max_index = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest = detail::trim(line);
    if (rest.empty()) continue;
    std::istringstream tokens{std::string(rest)};
    std::string tok;
    tokens >> tok;
    const auto label = detail::parse_integer(tok);
    if (!label)
      throw SchemaError("row " + std::to_string(line_no) + ": label '" + tok + "' is not an integer");
    std::vector<std::pair<long long, double>> entries;
    long long prev = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw ParseError("row " + std::to_string(line_no) + ": expected idx:val, found '" + tok + "'");
      const auto idx = detail::parse_integer(std::string_view(tok).substr(0, colon));
      const auto val = detail::parse_real(std::string_view(tok).substr(colon + 1));
      if (!idx || !val || *idx < 1)
        throw ParseError("row " + std::to_string(line_no) + ": malformed entry '" + tok + "'");
      if (*idx <= prev)
        throw ParseError("row " + std::to_string(line_no) + ": index " + std::to_string(*idx) +
                         " is not strictly ascending");
      prev = *idx;
      max_index = std::max(max_index, *idx);
      entries.emplace_back(*idx, *val);
    }
    raw_labels.push_back(*label);
    rows.push_back(std::move(entries));
  }
  if (rows.empty()) throw ParseError("no data rows");
  if (max_index == 0) throw ParseError("no feature entries in any row");

  Dataset ds;
  ds.features = Matrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(max_index));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [idx, val] : rows[i]) ds.features(static_cast<Index>(i), static_cast<Index>(idx - 1)) = val;
  detail::remap_labels(raw_labels, ds);
  return ds;
}

inline Dataset load_sparse_index_value(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_sparse_index_value(in);
}

/// Writes features and the raw label (last column) at round-trip precision.
inline void write_dense(std::ostream& out, const Dataset& ds, bool header = true) {
  if (header) {
    for (Index j = 0; j < ds.dim(); ++j)
      out << (static_cast<std::size_t>(j) < ds.feature_names.size() ? ds.feature_names[static_cast<std::size_t>(j)]
                                                                     : "x" + std::to_string(j))
          << ',';
    out << "label\n";
  }
  char buf[64];
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.features(i, j));
      out.write(buf, ptr - buf);
      out << ',';
    }
    const int y = ds.labels[static_cast<std::size_t>(i)];
    if (!ds.class_values.empty())
      out << ds.class_values[static_cast<std::size_t>(y)];
    else
      out << y;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-column z-score statistics. `stdev` is the population standard
/// deviation (divide by N); a zero entry marks a constant column, which is
/// only mean-centred.
struct NormStats {
  Vector mean;
  Vector stdev;

  static NormStats fit(const Dataset& train) {
    if (train.empty()) throw PreconditionError("cannot fit z-score statistics on an empty dataset");
    NormStats s;
    const double n = static_cast<double>(train.size());
    s.mean = train.features.colwise().mean().transpose();
    s.stdev.resize(train.dim());
    for (Index j = 0; j < train.dim(); ++j) {
      const double var = (train.features.col(j).array() - s.mean(j)).square().sum() / n;
      s.stdev(j) = std::sqrt(var);
    }
    return s;
  }

  void apply(Dataset& ds) const {
    if (ds.dim() != mean.size())
      throw ShapeError("normalization expects D=" + std::to_string(mean.size()) + ", found D=" +
                       std::to_string(ds.dim()));
    for (Index j = 0; j < ds.dim(); ++j) {
      auto col = ds.features.col(j);
      col.array() -= mean(j);
      if (stdev(j) > 0.0) col.array() /= stdev(j);
    }
  }

  void invert(Dataset& ds) const {
    if (ds.dim() != mean.size()) throw ShapeError("normalization dimension mismatch");
    for (Index j = 0; j < ds.dim(); ++j) {
      auto col = ds.features.col(j);
      if (stdev(j) > 0.0) col.array() *= stdev(j);
      col.array() += mean(j);
    }
  }
};

/// Fits statistics on `train` only and applies them unchanged to `others`.
inline std::tuple<Dataset, std::vector<Dataset>, NormStats> zscore_fit_transform(
    Dataset train, std::vector<Dataset> others) {
  NormStats stats = NormStats::fit(train);
  stats.apply(train);
  for (auto& ds : others) stats.apply(ds);
  return {std::move(train), std::move(others), std::move(stats)};
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train_fraction = 0.7;
  /// Carved out of the training portion.
  double validation_fraction_of_train = 0.1;
  std::uint64_t seed = 0;
  bool allow_empty_test = false;
};

struct SplitSizes {
  Index train = 0;
  Index val = 0;
  Index test = 0;
};

/// Floor rounding: the training pool is floor(N * train_fraction); the fit
/// set is floor(pool * (1 - val_fraction)); validation takes the rest of the
/// pool and test takes everything outside it.
inline SplitSizes split_sizes(Index n, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0))
    throw ConfigError("train_fraction must lie in (0, 1]");
  if (!(spec.validation_fraction_of_train >= 0.0 && spec.validation_fraction_of_train < 1.0))
    throw ConfigError("validation_fraction_of_train must lie in [0, 1)");
  // The small slack keeps products such as 0.29 * 100 from flooring to 28.
  constexpr double slack = 1e-9;
  const Index pool = static_cast<Index>(std::floor(static_cast<double>(n) * spec.train_fraction + slack));
  SplitSizes s;
  s.train = static_cast<Index>(
      std::floor(static_cast<double>(pool) * (1.0 - spec.validation_fraction_of_train) + slack));
  s.val = pool - s.train;
  s.test = n - pool;
  if (s.train < 1) throw ConfigError("split leaves the training set empty (N=" + std::to_string(n) + ")");
  if (spec.validation_fraction_of_train > 0.0 && s.val < 1)
    throw ConfigError("split leaves the validation set empty (N=" + std::to_string(n) + ")");
  if (s.test < 1 && (spec.train_fraction < 1.0 || !spec.allow_empty_test))
    throw ConfigError("split leaves the test set empty (N=" + std::to_string(n) + ")");
  return s;
}

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<Index> train_rows;
  std::vector<Index> val_rows;
  std::vector<Index> test_rows;
};

inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  const SplitSizes sizes = split_sizes(ds.size(), spec);
  std::vector<Index> perm(static_cast<std::size_t>(ds.size()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Index>(i);
  Rng rng(derive_seed(spec.seed, "split"));
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitResult out;
  const auto b = perm.begin();
  out.train_rows.assign(b, b + sizes.train);
  out.val_rows.assign(b + sizes.train, b + sizes.train + sizes.val);
  out.test_rows.assign(b + sizes.train + sizes.val, perm.end());
  out.train = ds.subset(out.train_rows);
  out.val = ds.subset(out.val_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class Labeling { Random, ClusterSeparable };

struct SynthOptions {
  /// Mean shift applied to a class's block of dimensions (cluster-separable).
  double mu = 3.0;
  /// Dimensions per class block; class k owns dims [k*w, (k+1)*w) modulo D.
  Index block_width = 8;
};

/// i.i.d. standard normal features with uniformly drawn labels. Under
/// ClusterSeparable each class's mean is shifted by +mu on its own block of
/// dimensions.
inline Dataset synth_gaussian(Index n, Index d, int c, std::uint64_t seed, Labeling labeling,
                              const SynthOptions& opts = {}) {
  if (n < 1 || d < 1 || c < 1) throw ConfigError("synth_gaussian needs positive n, d and c");
  Dataset ds;
  ds.num_classes = c;
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.features.resize(n, d);

  Rng label_rng = make_rng(seed, "synth/labels");
  std::uniform_int_distribution<int> pick(0, c - 1);
  for (auto& y : ds.labels) y = pick(label_rng);

  Rng feature_rng = make_rng(seed, "synth/features");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) ds.features(i, j) = normal(feature_rng);

  if (labeling == Labeling::ClusterSeparable) {
    const Index w = std::max<Index>(1, opts.block_width);
    for (Index i = 0; i < n; ++i) {
      const Index k = ds.labels[static_cast<std::size_t>(i)];
      for (Index j = 0; j < w; ++j) ds.features(i, (k * w + j) % d) += opts.mu;
    }
  }
  ds.class_values.resize(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) ds.class_values[static_cast<std::size_t>(k)] = k;
  return ds;
}

}  // namespace tsk
