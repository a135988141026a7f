#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/error.hpp"
#include "tsk/gradients.hpp"
#include "tsk/init.hpp"
#include "tsk/model.hpp"
#include "tsk/trainer.hpp"

namespace tsk {

// ---------------------------------------------------------------------------
// Firing statistics

/// Mean over samples of the number of rules with fbar_r > 1e-4.
inline double count_fired_rules(const TskModel& model, const Matrix& xs) {
  if (xs.rows() == 0) throw PreconditionError("count_fired_rules needs at least one sample");
  const Matrix fbar = model.firing_levels(xs);
  return static_cast<double>((fbar.array() > kFiredThreshold).count()) / static_cast<double>(xs.rows());
}

/// A_r: per-rule mean of the normalized firing levels over xs.
inline Vector average_firing(const TskModel& model, const Matrix& xs) {
  if (xs.rows() == 0) throw PreconditionError("average_firing needs at least one sample");
  return model.firing_levels(xs).colwise().mean().transpose();
}

inline constexpr std::array<double, 5> kPercentileLevels{5.0, 25.0, 50.0, 75.0, 95.0};

/// Linear interpolation between closest ranks (the numpy default).
inline double percentile(std::vector<double> values, double level) {
  if (values.empty()) throw PreconditionError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = level / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline std::array<double, 5> percentile_summary(const Vector& v) {
  std::vector<double> vals(v.data(), v.data() + v.size());
  std::array<double, 5> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = percentile(vals, kPercentileLevels[i]);
  return out;
}

struct DiagnosticsRecord {
  int epoch = 0;
  std::optional<std::size_t> batch;
  double mean_fired_rules = 0.0;
  Vector a_r;
  std::array<double, 5> a_r_percentiles{};
  GradL1 grad_l1{};
  std::vector<double> landscape_losses;
};

// ---------------------------------------------------------------------------
// Loss-landscape probe

/// Step fractions along the eta-scaled gradient; 0 is the baseline.
inline constexpr std::array<double, 5> kLandscapeGrid{0.0, 0.25, 0.5, 0.75, 1.0};

/// f(theta - s * eta * grad) for each s in grid. Non-finite losses are
/// recorded as NaN (missing) rather than raised.
template <class LossFn>
std::vector<double> probe_along(const Vector& theta, const Vector& grad, LossFn&& f, double eta,
                                std::span<const double> grid = kLandscapeGrid) {
  if (!(eta > 0.0)) throw PreconditionError("landscape probe needs eta > 0");
  std::vector<double> out;
  out.reserve(grid.size());
  Vector moved(theta.size());
  for (double s : grid) {
    moved = theta - (s * eta) * grad;
    const double l = static_cast<double>(f(moved));
    out.push_back(std::isfinite(l) ? l : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

inline std::vector<double> landscape_probe(const TskModel& model, const Matrix& xs, std::span<const int> ys,
                                           const LossSpec& loss, const GradientSet& grads, double eta,
                                           std::span<const double> grid = kLandscapeGrid) {
  TskModel scratch = model;
  const auto f = [&](const Vector& theta) {
    scratch.flat() = theta;
    try {
      return batch_loss(scratch, xs, ys, loss);
    } catch (const NumericError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  return probe_along(model.flat(), grads.flat(), f, eta, grid);
}

/// Losses along the current batch gradient. The model is only read.
inline std::vector<double> landscape_probe(const TskModel& model, const Matrix& xs, std::span<const int> ys,
                                           const LossSpec& loss, double eta,
                                           std::span<const double> grid = kLandscapeGrid) {
  const LossAndGrad lg = loss_and_grad(model, xs, ys, loss);
  return landscape_probe(model, xs, ys, loss, lg.grads, eta, grid);
}

/// Smoothness statistic across runs that share an initialization.
/// runs[k][t] holds the probe losses of run k at batch t. For each batch the
/// across-run standard deviation is taken at every step fraction s > 0 and
/// averaged; NaN entries are skipped.
inline std::vector<double> landscape_spread(const std::vector<std::vector<std::vector<double>>>& runs) {
  if (runs.empty()) return {};
  std::size_t batches = runs.front().size();
  for (const auto& r : runs) batches = std::min(batches, r.size());
  std::vector<double> out(batches, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < batches; ++t) {
    const std::size_t points = runs.front()[t].size();
    double acc = 0.0;
    int used = 0;
    for (std::size_t s = 1; s < points; ++s) {
      double sum = 0.0, sq = 0.0;
      int n = 0;
      for (const auto& r : runs) {
        if (s >= r[t].size() || !std::isfinite(r[t][s])) continue;
        sum += r[t][s];
        sq += r[t][s] * r[t][s];
        ++n;
      }
      if (n < 1) continue;
      const double mean = sum / n;
      acc += std::sqrt(std::max(0.0, sq / n - mean * mean));
      ++used;
    }
    if (used > 0) out[t] = acc / used;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training observer

/// Records firing statistics at every epoch and gradient norms (optionally
/// landscape probes) at every batch.
class DiagnosticsRecorder : public TrainObserver {
 public:
  struct Options {
    bool landscape = false;
    double eta = 1.0;
    LossSpec loss{};
  };

  DiagnosticsRecorder(const Matrix& probe_xs, Options opts) : probe_xs_(probe_xs), opts_(opts) {}
  explicit DiagnosticsRecorder(const Matrix& probe_xs) : DiagnosticsRecorder(probe_xs, Options{}) {}

  void on_batch(const BatchEvent& ev) override {
    DiagnosticsRecord rec;
    rec.epoch = ev.epoch;
    rec.batch = ev.batch;
    rec.grad_l1 = grad_l1_norms(ev.grads);
    if (opts_.landscape)
      rec.landscape_losses = landscape_probe(ev.model, ev.xs, ev.ys, opts_.loss, ev.grads, opts_.eta);
    pending_.push_back(rec.grad_l1);
    batches_.push_back(std::move(rec));
  }

  void on_epoch(const EpochEvent& ev) override {
    DiagnosticsRecord rec;
    rec.epoch = ev.epoch;
    rec.mean_fired_rules = count_fired_rules(ev.model, probe_xs_);
    rec.a_r = average_firing(ev.model, probe_xs_);
    rec.a_r_percentiles = percentile_summary(rec.a_r);
    if (!pending_.empty()) {
      for (const GradL1& g : pending_) {
        rec.grad_l1.m += g.m;
        rec.grad_l1.sigma += g.sigma;
        rec.grad_l1.b += g.b;
      }
      const double n = static_cast<double>(pending_.size());
      rec.grad_l1 = {rec.grad_l1.m / n, rec.grad_l1.sigma / n, rec.grad_l1.b / n};
      pending_.clear();
    }
    epochs_.push_back(std::move(rec));
  }

  /// One record per epoch; grad_l1 is the mean over that epoch's batches.
  const std::vector<DiagnosticsRecord>& epochs() const { return epochs_; }
  const std::vector<DiagnosticsRecord>& batches() const { return batches_; }

 private:
  const Matrix& probe_xs_;
  Options opts_;
  std::vector<GradL1> pending_;
  std::vector<DiagnosticsRecord> epochs_;
  std::vector<DiagnosticsRecord> batches_;
};

// ---------------------------------------------------------------------------
// Tidy output

/// One row of the long-format metrics table shared with the plotting scripts.
struct TidyRow {
  std::string variant;
  Index dim = 0;
  Index rules = 0;
  double h = 0.0;
  int epoch = 0;
  int repeat = 0;
  std::string metric;
  double value = 0.0;
};

inline constexpr const char* kTidyHeader = "variant,D,R,h,epoch,repeat,metric,value";

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_tidy_csv(std::ostream& out, std::span<const TidyRow> rows) {
  out << kTidyHeader << '\n';
  for (const TidyRow& r : rows)
    out << r.variant << ',' << r.dim << ',' << r.rules << ',' << format_real(r.h) << ',' << r.epoch << ','
        << r.repeat << ',' << r.metric << ',' << format_real(r.value) << '\n';
}

inline constexpr const char* kLandscapeHeader = "variant,D,R,h,epoch,batch,repeat,s,loss";

/// Landscape probes recorded per batch: one row per grid point s.
inline void write_landscape_csv(std::ostream& out, std::span<const DiagnosticsRecord> batches, DefuzzVariant variant,
                                const Shape& shape, double h, int repeat = 0) {
  out << kLandscapeHeader << '\n';
  for (const DiagnosticsRecord& r : batches)
    for (std::size_t i = 0; i < r.landscape_losses.size() && i < kLandscapeGrid.size(); ++i)
      out << to_string(variant) << ',' << shape.inputs << ',' << shape.rules << ',' << format_real(h) << ','
          << r.epoch << ',' << r.batch.value_or(0) << ',' << repeat << ',' << format_real(kLandscapeGrid[i]) << ','
          << format_real(r.landscape_losses[i]) << '\n';
}

/// Per-epoch training diagnostics in tidy form.
inline std::vector<TidyRow> diagnostics_rows(std::span<const DiagnosticsRecord> records, DefuzzVariant variant,
                                             const Shape& shape, double h, int repeat = 0) {
  std::vector<TidyRow> rows;
  const std::string v(to_string(variant));
  auto add = [&](int epoch, const char* metric, double value) {
    rows.push_back({v, shape.inputs, shape.rules, h, epoch, repeat, metric, value});
  };
  static constexpr const char* pnames[] = {"a_r_p5", "a_r_p25", "a_r_p50", "a_r_p75", "a_r_p95"};
  for (const DiagnosticsRecord& r : records) {
    add(r.epoch, "mean_fired_rules", r.mean_fired_rules);
    for (std::size_t i = 0; i < 5; ++i) add(r.epoch, pnames[i], r.a_r_percentiles[i]);
    if (r.epoch > 0) {
      add(r.epoch, "grad_l1_m", r.grad_l1.m);
      add(r.epoch, "grad_l1_sigma", r.grad_l1.sigma);
      add(r.epoch, "grad_l1_b", r.grad_l1.b);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Saturation sweep

struct SweepSpec {
  std::vector<Index> dims{5, 50, 500, 2000};
  std::vector<Index> rule_counts{5, 20, 50, 100, 200};
  std::vector<double> h_values{1.0};
  std::vector<int> epochs_at{0, 30};
  int repeats = 10;
  std::uint64_t seed = 0;
  Index n_samples = 500;
  int num_classes = 2;
  double sigma_spread = 0.2;
  int kmeans_iters = 100;
  int kmeans_restarts = 1;
  double learning_rate = 0.01;
  Index batch_size = 512;

  void validate() const {
    if (dims.empty() || rule_counts.empty() || h_values.empty() || epochs_at.empty())
      throw ConfigError("sweep lists must be non-empty");
    if (repeats < 1) throw ConfigError("sweep repeats must be positive");
    for (Index d : dims)
      if (d < 1) throw ConfigError("sweep dims must be positive");
    for (Index r : rule_counts)
      if (r < 1 || r > n_samples) throw ConfigError("sweep rule counts must lie in [1, n_samples]");
    for (double h : h_values)
      if (!(h > 0.0)) throw ConfigError("sweep h values must be positive");
    for (int e : epochs_at)
      if (e < 0) throw ConfigError("sweep epochs must be non-negative");
  }
};

struct SweepRow {
  Index dim = 0;
  Index rules = 0;
  double h = 0.0;
  int epoch = 0;
  int repeat = 0;
  double mean_fired_rules = 0.0;
};

namespace detail {

class FiredRuleProbe : public TrainObserver {
 public:
  FiredRuleProbe(const Matrix& xs, std::span<const int> epochs) : xs_(xs), epochs_(epochs) {}
  void on_epoch(const EpochEvent& ev) override {
    if (std::find(epochs_.begin(), epochs_.end(), ev.epoch) != epochs_.end())
      values.emplace_back(ev.epoch, count_fired_rules(ev.model, xs_));
  }
  std::vector<std::pair<int, double>> values;

 private:
  const Matrix& xs_;
  std::span<const int> epochs_;
};

}  // namespace detail

/// Fired-rule counts on random-label Gaussian data over a (D, R, h) grid.
/// The data for a (D, repeat) pair is shared across R and h; every grid point
/// derives its own init and shuffle seeds, so results do not depend on
/// `jobs`. Rows are ordered by D, R, h, epoch, repeat.
inline std::vector<SweepRow> saturation_sweep(const SweepSpec& spec, DefuzzVariant variant, int jobs = 1) {
  spec.validate();
  struct Task {
    Index dim, rules;
    double h;
    int repeat;
  };
  std::vector<Task> tasks;
  for (Index d : spec.dims)
    for (Index r : spec.rule_counts)
      for (double h : spec.h_values)
        for (int k = 0; k < spec.repeats; ++k) tasks.push_back({d, r, h, k});

  std::vector<int> epochs = spec.epochs_at;
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  const int last_epoch = epochs.back();

  std::vector<std::vector<std::pair<int, double>>> results(tasks.size());
  auto run_task = [&](std::size_t i) {
    const Task& t = tasks[i];
    const std::uint64_t data_seed =
        derive_seed(derive_seed(derive_seed(spec.seed, "sweep/data"), static_cast<std::uint64_t>(t.dim)),
                    static_cast<std::uint64_t>(t.repeat));
    const Dataset data = synth_gaussian(spec.n_samples, t.dim, spec.num_classes, data_seed, Labeling::Random);
    const std::uint64_t point_seed = derive_seed(data_seed, static_cast<std::uint64_t>(i));

    InitSpec init;
    init.h = t.h;
    init.sigma_spread = spec.sigma_spread;
    init.kmeans_iters = spec.kmeans_iters;
    init.kmeans_restarts = spec.kmeans_restarts;
    init.seed = derive_seed(point_seed, "init");
    TskModel model = init_model(data, t.rules, variant, init);

    detail::FiredRuleProbe probe(data.features, epochs);
    TrainObserver* observers[] = {&probe};
    if (last_epoch == 0) {
      probe.on_epoch(EpochEvent{0, model, nullptr});
    } else {
      TrainConfig cfg;
      cfg.learning_rate = spec.learning_rate;
      cfg.batch_size = spec.batch_size;
      cfg.seed = derive_seed(point_seed, "train");
      fit_epochs(std::move(model), data, cfg, last_epoch, observers);
    }
    results[i] = std::move(probe.values);
  };

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
          try {
            run_task(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<SweepRow> rows;
  std::size_t base = 0;
  for (Index d : spec.dims)
    for (Index r : spec.rule_counts)
      for (double h : spec.h_values) {
        for (int e : spec.epochs_at)
          for (int k = 0; k < spec.repeats; ++k) {
            const auto& vals = results[base + static_cast<std::size_t>(k)];
            const auto it = std::find_if(vals.begin(), vals.end(), [e](const auto& p) { return p.first == e; });
            rows.push_back({d, r, h, e, k, it->second});
          }
        base += static_cast<std::size_t>(spec.repeats);
      }
  return rows;
}

inline std::vector<TidyRow> sweep_rows(std::span<const SweepRow> rows, DefuzzVariant variant) {
  std::vector<TidyRow> out;
  out.reserve(rows.size());
  for (const SweepRow& r : rows)
    out.push_back({std::string(to_string(variant)), r.dim, r.rules, r.h, r.epoch, r.repeat, "mean_fired_rules",
                   r.mean_fired_rules});
  return out;
}

/// Mean and percentile band across repeats for one grid point.
struct SweepSummary {
  Index dim = 0;
  Index rules = 0;
  double h = 0.0;
  int epoch = 0;
  double mean = 0.0;
  std::array<double, 5> percentiles{};
};

inline std::vector<SweepSummary> summarize_sweep(std::span<const SweepRow> rows) {
  std::vector<SweepSummary> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    std::vector<double> vals;
    while (j < rows.size() && rows[j].dim == rows[i].dim && rows[j].rules == rows[i].rules &&
           rows[j].h == rows[i].h && rows[j].epoch == rows[i].epoch)
      vals.push_back(rows[j++].mean_fired_rules);
    SweepSummary s{rows[i].dim, rows[i].rules, rows[i].h, rows[i].epoch, 0.0, {}};
    for (double v : vals) s.mean += v;
    s.mean /= static_cast<double>(vals.size());
    for (std::size_t p = 0; p < 5; ++p) s.percentiles[p] = percentile(vals, kPercentileLevels[p]);
    out.push_back(s);
    i = j;
  }
  return out;
}

}  // namespace tsk
