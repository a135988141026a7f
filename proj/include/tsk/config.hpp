#pragma once

// Flat "section.key = value" run configuration. A file supplies values,
// command-line flags override them, and the fully resolved set is written
// next to every run's outputs.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/error.hpp"

namespace tsk {

struct ConfigKey {
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

inline constexpr ConfigKey kConfigKeys[] = {
    {"run.seed", "0", "master seed; every random stage derives a named sub-stream"},
    {"run.out_dir", "out", "output directory"},
    {"run.jobs", "1", "worker threads for sweeps"},

    {"data.path", "", "input data file"},
    {"data.format", "csv", "csv | csv-header | sparse"},
    {"data.label_column", "-1", "label column index (negative counts from the end)"},
    {"data.label_name", "", "label column name (csv-header only)"},

    {"split.train_fraction", "0.7", "fraction of samples used for training (incl. validation)"},
    {"split.validation_fraction", "0.1", "fraction of the training portion held out for early stopping"},
    {"split.allow_empty_test", "false", "permit train_fraction = 1"},

    {"model.rules", "30", "number of rules R"},
    {"model.variant", "htsk", "vanilla | htsk | logtsk | l1 | l2"},
    {"model.log_epsilon", "1e-12", "LogTSK denominator offset"},

    {"init.h", "1", "mean of the initial width distribution"},
    {"init.sigma_spread", "0.2", "standard deviation of the initial width distribution"},
    {"init.kmeans_iters", "100", "Lloyd iterations per restart"},
    {"init.kmeans_restarts", "10", "k-means restarts"},

    {"train.learning_rate", "0.01", "Adam learning rate"},
    {"train.batch_size", "512", "requested mini-batch size"},
    {"train.max_epochs", "200", "epoch limit"},
    {"train.patience", "20", "early-stopping patience in epochs"},
    {"train.beta1", "0.9", "Adam beta1"},
    {"train.beta2", "0.999", "Adam beta2"},
    {"train.adam_eps", "1e-8", "Adam epsilon"},
    {"train.loss", "ce", "ce | mse"},

    {"diag.landscape", "false", "probe the loss along every batch gradient"},
    {"diag.eta", "1", "landscape probe step"},

    {"sweep.variants", "vanilla", "comma-separated variants"},
    {"sweep.dims", "5,10,20,50,100,200,500,1000,2000", "input dimensionalities"},
    {"sweep.rules", "5,20,50,100,200", "rule counts"},
    {"sweep.h", "1", "width locations h"},
    {"sweep.epochs_at", "0,30", "epochs at which fired rules are measured"},
    {"sweep.repeats", "10", "repeats per grid point"},
    {"sweep.n_samples", "500", "samples per synthetic dataset"},
    {"sweep.kmeans_iters", "100", "Lloyd iterations for sweep models"},
    {"sweep.kmeans_restarts", "1", "k-means restarts for sweep models"},

    {"hsweep.variants", "htsk,logtsk", "variants trained at each h"},
    {"hsweep.h", "0.1,0.5,1,5,10", "width locations h"},
    {"hsweep.repeats", "1", "seeds per (variant, h)"},

    {"synth.n", "2000", "samples"},
    {"synth.d", "500", "dimensions"},
    {"synth.c", "2", "classes"},
    {"synth.labeling", "cluster-separable", "random | cluster-separable"},
    {"synth.mu", "3", "class mean shift"},
    {"synth.block_width", "8", "dimensions shifted per class"},
    {"synth.out", "synth.csv", "output CSV path"},

    {"eval.checkpoint", "", "checkpoint JSON"},
    {"eval.normalize", "true", "apply the checkpoint's z-score statistics to the data"},

    {"gradcheck.configs", "20", "random configurations to check"},
    {"gradcheck.dims", "1,5,50", "input dimensionalities"},
    {"gradcheck.rules", "1,3,10", "rule counts"},
    {"gradcheck.classes", "2,5", "class counts"},
    {"gradcheck.batch", "4", "samples per batch"},
    {"gradcheck.step", "1e-5", "central-difference step"},
    {"gradcheck.tolerance", "1e-4", "maximum relative error"},
    {"gradcheck.max_coords", "2000", "coordinates checked per configuration"},
};

inline const ConfigKey* find_config_key(std::string_view key) {
  for (const ConfigKey& k : kConfigKeys)
    if (k.key == key) return &k;
  return nullptr;
}

class RunConfig {
 public:
  RunConfig() {
    for (const ConfigKey& k : kConfigKeys) values_[std::string(k.key)] = std::string(k.default_value);
  }

  void set(std::string_view key, std::string_view value) {
    if (!find_config_key(key)) throw ConfigError("unknown config key '" + std::string(key) + "'");
    values_[std::string(key)] = std::string(value);
  }

  /// "key = value" lines; '#' starts a comment, blank lines are ignored.
  void parse(std::istream& in, const std::string& origin = "config") {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trimmed = detail::trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      set(detail::trim(trimmed.substr(0, eq)), detail::trim(trimmed.substr(eq + 1)));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    parse(in, path);
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  }

  const std::string& str(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    return it->second;
  }

  double real(std::string_view key) const { return parse_real_value(key, str(key)); }

  long long integer(std::string_view key) const { return parse_int_value(key, str(key)); }

  std::uint64_t unsigned_integer(std::string_view key) const {
    const long long v = integer(key);
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  bool boolean(std::string_view key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(std::string(key) + ": expected a boolean, found '" + v + "'");
  }

  std::vector<std::string> list(std::string_view key) const {
    std::vector<std::string> out;
    for (auto f : detail::split_fields(str(key), ','))
      if (!f.empty()) out.emplace_back(f);
    return out;
  }

  std::vector<double> real_list(std::string_view key) const {
    std::vector<double> out;
    for (const auto& f : list(key)) out.push_back(parse_real_value(key, f));
    return out;
  }

  std::vector<long long> int_list(std::string_view key) const {
    std::vector<long long> out;
    for (const auto& f : list(key)) out.push_back(parse_int_value(key, f));
    return out;
  }

 private:
  static double parse_real_value(std::string_view key, std::string_view v) {
    const auto r = detail::parse_real(v);
    if (!r) throw ConfigError(std::string(key) + ": expected a number, found '" + std::string(v) + "'");
    return *r;
  }

  static long long parse_int_value(std::string_view key, std::string_view v) {
    const auto r = detail::parse_integer(v);
    if (!r) throw ConfigError(std::string(key) + ": expected an integer, found '" + std::string(v) + "'");
    return *r;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace tsk
