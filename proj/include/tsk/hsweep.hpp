#pragma once

// Test accuracy as a function of the initial width location h. Every
// (variant, h) pair sees the same split and the same k-means seed for a
// given repeat, so differences come from h alone.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/error.hpp"
#include "tsk/init.hpp"
#include "tsk/model.hpp"
#include "tsk/rng.hpp"
#include "tsk/trainer.hpp"

namespace tsk {

struct HSweepSpec {
  std::vector<DefuzzVariant> variants{DefuzzVariant::HTSK, DefuzzVariant::LogTSK};
  std::vector<double> h_values{0.1, 0.5, 1.0, 5.0, 10.0};
  int repeats = 1;
  Index rules = 30;
  double log_epsilon = kLogEpsilon;
  SplitSpec split{};
  InitSpec init{};
  TrainConfig train{};
  std::uint64_t seed = 0;

  void validate() const {
    if (variants.empty() || h_values.empty()) throw ConfigError("h sweep needs at least one variant and one h");
    if (repeats < 1) throw ConfigError("h sweep repeats must be positive");
    if (rules < 1) throw ConfigError("rule count must be positive");
    for (double h : h_values)
      if (!(h > 0.0)) throw ConfigError("h values must be positive");
    train.validate();
  }
};

struct HSweepRow {
  DefuzzVariant variant{};
  double h = 0.0;
  int repeat = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double val_accuracy = 0.0;
  int best_epoch = 0;
};

/// Rows ordered by (variant, h, repeat). Repeat k uses seed
/// derive_seed(spec.seed, k) for its split, initialization and shuffling.
inline std::vector<HSweepRow> h_sensitivity(const Dataset& data, const HSweepSpec& spec) {
  spec.validate();
  struct Prepared {
    Dataset train, val, test;
    std::uint64_t seed;
  };
  std::vector<Prepared> splits;
  for (int k = 0; k < spec.repeats; ++k) {
    const std::uint64_t seed = derive_seed(spec.seed, static_cast<std::uint64_t>(k));
    SplitSpec sp = spec.split;
    sp.seed = seed;
    auto s = split(data, sp);
    if (s.test.empty()) throw ConfigError("h sweep needs a non-empty test split");
    auto [tr, others, stats] = zscore_fit_transform(std::move(s.train), {std::move(s.val), std::move(s.test)});
    splits.push_back({std::move(tr), std::move(others[0]), std::move(others[1]), seed});
  }

  std::vector<HSweepRow> rows;
  for (DefuzzVariant v : spec.variants)
    for (double h : spec.h_values)
      for (int k = 0; k < spec.repeats; ++k) {
        const Prepared& p = splits[static_cast<std::size_t>(k)];
        InitSpec is = spec.init;
        is.h = h;
        is.seed = p.seed;
        TskModel model = init_model(p.train, spec.rules, v, is);
        model.set_log_epsilon(spec.log_epsilon);
        TrainConfig cfg = spec.train;
        cfg.seed = p.seed;
        const TrainResult res = train(std::move(model), p.train, p.val, cfg);
        const Evaluation ev = evaluate(res.model, p.test, cfg.loss);
        rows.push_back({v, h, k, ev.accuracy, ev.loss, res.report.best_val_accuracy, res.report.best_epoch});
      }
  return rows;
}

struct HSweepSummary {
  DefuzzVariant variant{};
  double h = 0.0;
  double mean_test_accuracy = 0.0;
};

inline std::vector<HSweepSummary> summarize_h_sweep(const std::vector<HSweepRow>& rows) {
  std::vector<HSweepSummary> out;
  std::vector<int> counts;
  for (const HSweepRow& r : rows) {
    if (out.empty() || out.back().variant != r.variant || out.back().h != r.h) {
      out.push_back({r.variant, r.h, 0.0});
      counts.push_back(0);
    }
    out.back().mean_test_accuracy += r.test_accuracy;
    ++counts.back();
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].mean_test_accuracy /= counts[i];
  return out;
}

/// max - min of the mean test accuracy over the listed h values (all h
/// present in `summary` when `h_values` is empty).
inline double accuracy_spread(const std::vector<HSweepSummary>& summary, DefuzzVariant variant,
                              const std::vector<double>& h_values = {}) {
  double lo = 1.0, hi = 0.0;
  bool any = false;
  for (const HSweepSummary& s : summary) {
    if (s.variant != variant) continue;
    if (!h_values.empty() && std::find(h_values.begin(), h_values.end(), s.h) == h_values.end()) continue;
    lo = std::min(lo, s.mean_test_accuracy);
    hi = std::max(hi, s.mean_test_accuracy);
    any = true;
  }
  if (!any) throw PreconditionError("no h sweep results for variant " + std::string(to_string(variant)));
  return hi - lo;
}

}  // namespace tsk
