#pragma once

// Finite-difference verification oracle for the analytic gradients.
//
// The loss used here is a separate forward-only implementation evaluated in
// extended precision with compensated summation, so that the central
// difference is limited by truncation error rather than by round-off in a
// loss that sums hundreds of squared distances.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tsk/error.hpp"
#include "tsk/gradients.hpp"
#include "tsk/model.hpp"
#include "tsk/rng.hpp"

namespace tsk {

/// Central differences (f(t + h e_i) - f(t - h e_i)) / (2h) at the listed
/// coordinates. The divisor is the step actually representable in double.
template <class F>
Vector central_difference_at(F&& f, Vector theta, double step, std::span<const Index> coords) {
  if (!(step > 0.0)) throw PreconditionError("finite-difference step must be positive");
  Vector out(static_cast<Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const Index i = coords[k];
    const double orig = theta(i);
    const double plus = orig + step;
    const double minus = orig - step;
    theta(i) = plus;
    const auto f_plus = f(theta);
    theta(i) = minus;
    const auto f_minus = f(theta);
    theta(i) = orig;
    out(static_cast<Index>(k)) = static_cast<double>((f_plus - f_minus) / (plus - minus));
  }
  return out;
}

template <class F>
Vector central_difference(F&& f, const Vector& theta, double step) {
  std::vector<Index> all(static_cast<std::size_t>(theta.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
  return central_difference_at(std::forward<F>(f), theta, step, all);
}

namespace detail {

using Wide = long double;

struct KahanSum {
  Wide sum = 0;
  Wide comp = 0;
  void add(Wide v) {
    const Wide y = v - comp;
    const Wide t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

}  // namespace detail

/// Batch-mean loss of the model described by (shape, variant, theta),
/// computed from the membership definitions without reusing the model's
/// evaluation code.
inline long double reference_loss(const Shape& sh, DefuzzVariant variant, double log_epsilon, const Vector& theta,
                                  const Matrix& xs, std::span<const int> ys, const LossSpec& loss) {
  using detail::Wide;
  const Index R = sh.rules, D = sh.inputs, C = sh.classes;
  const double* m = theta.data();
  const double* sig = m + R * D;
  const double* b = sig + R * D;
  const Wide kappa = variant == DefuzzVariant::HTSK ? Wide(1) / Wide(D) : Wide(1);

  std::vector<Wide> z(static_cast<std::size_t>(R)), f(static_cast<std::size_t>(R)), out(static_cast<std::size_t>(C));
  detail::KahanSum total;
  for (Index n = 0; n < xs.rows(); ++n) {
    for (Index r = 0; r < R; ++r) {
      detail::KahanSum q;
      for (Index d = 0; d < D; ++d) {
        Wide s = std::fabs(static_cast<Wide>(sig[r * D + d]));
        if (s < Wide(kSigmaMin)) s = kSigmaMin;
        const Wide t = (static_cast<Wide>(xs(n, d)) - static_cast<Wide>(m[r * D + d])) / s;
        q.add(t * t / 2);
      }
      z[static_cast<std::size_t>(r)] = -kappa * q.sum;
    }

    Wide norm = 0;
    switch (variant) {
      case DefuzzVariant::VanillaSoftmax:
      case DefuzzVariant::HTSK: {
        Wide zmax = z[0];
        for (Wide v : z) zmax = std::max(zmax, v);
        for (std::size_t r = 0; r < z.size(); ++r) norm += (f[r] = std::exp(z[r] - zmax));
        break;
      }
      case DefuzzVariant::LogTSK:
        for (std::size_t r = 0; r < z.size(); ++r) norm += (f[r] = Wide(1) / (-z[r] + Wide(log_epsilon)));
        break;
      case DefuzzVariant::L1Norm:
        for (std::size_t r = 0; r < z.size(); ++r) norm += std::fabs(f[r] = z[r]);
        break;
      case DefuzzVariant::L2Norm:
        for (std::size_t r = 0; r < z.size(); ++r) norm += (f[r] = z[r]) * z[r];
        norm = std::sqrt(norm);
        break;
    }

    for (Index c = 0; c < C; ++c) {
      detail::KahanSum acc;
      for (Index r = 0; r < R; ++r) {
        const double* br = b + r * (D + 1) * C;
        detail::KahanSum y;
        y.add(br[c]);
        for (Index d = 0; d < D; ++d) y.add(static_cast<Wide>(br[(d + 1) * C + c]) * static_cast<Wide>(xs(n, d)));
        acc.add(f[static_cast<std::size_t>(r)] / norm * y.sum);
      }
      out[static_cast<std::size_t>(c)] = acc.sum;
    }

    const int label = ys[static_cast<std::size_t>(n)];
    if (loss.kind == LossKind::MeanSquaredError) {
      const Wide e = out[0] - Wide(label);
      total.add(e * e);
    } else {
      Wide omax = out[0];
      for (Wide v : out) omax = std::max(omax, v);
      Wide s = 0;
      for (Wide v : out) s += std::exp(v - omax);
      total.add(omax + std::log(s) - out[static_cast<std::size_t>(label)]);
    }
  }
  return total.sum / static_cast<Wide>(xs.rows());
}

/// Central-difference gradient at the listed flat-parameter coordinates.
inline Vector finite_diff_entries(const TskModel& model, const Matrix& xs, std::span<const int> ys,
                                  const LossSpec& loss, double step, std::span<const Index> coords) {
  detail::check_loss_inputs(model.shape(), xs, ys, loss);
  const auto f = [&](const Vector& theta) {
    return reference_loss(model.shape(), model.variant(), model.log_epsilon(), theta, xs, ys, loss);
  };
  return central_difference_at(f, model.flat(), step, coords);
}

/// Central-difference gradient for every parameter.
inline GradientSet finite_diff_grad(const TskModel& model, const Matrix& xs, std::span<const int> ys,
                                    const LossSpec& loss, double step) {
  if (!(step > 0.0)) throw PreconditionError("finite-difference step must be positive");
  std::vector<Index> all(static_cast<std::size_t>(model.shape().num_params()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
  return GradientSet(model.shape(), finite_diff_entries(model, xs, ys, loss, step, all));
}

/// Elementwise |a - f| / max(|a|, |f|, floor), maximised over entries.
inline double max_relative_error(const Vector& analytic, const Vector& numeric, double floor = 1e-8) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), floor});
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
  }
  return worst;
}


/// Model with N(0,1) centres, widths in [0.6, 1.4] and N(0, 0.25) consequents.
inline TskModel random_model(Shape shape, DefuzzVariant variant, Rng& rng) {
  TskModel m(shape, variant);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.6, 1.4);
  for (auto& v : m.centers().reshaped()) v = normal(rng);
  for (auto& v : m.widths().reshaped()) v = width(rng);
  for (auto& v : m.consequent_params()) v = 0.5 * normal(rng);
  return m;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index coords_checked = 0;
};

/// Compares loss_and_grad with central differences on every coordinate, or
/// on a random subset of `max_coords` coordinates for larger models.
inline GradCheckResult check_gradients(const TskModel& model, const Matrix& xs, std::span<const int> ys,
                                       const LossSpec& loss, double step, Index max_coords, Rng& rng) {
  const Index p = model.shape().num_params();
  std::vector<Index> coords(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<Index>(i);
  if (max_coords > 0 && p > max_coords) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(max_coords));
    std::sort(coords.begin(), coords.end());
  }
  const Vector analytic_all = loss_and_grad(model, xs, ys, loss).grads.flat();
  Vector analytic(static_cast<Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) analytic(static_cast<Index>(k)) = analytic_all(coords[k]);
  const Vector numeric = finite_diff_entries(model, xs, ys, loss, step, coords);
  return {max_relative_error(analytic, numeric), static_cast<Index>(coords.size())};
}

struct GradCheckSpec {
  int configs = 20;
  std::vector<DefuzzVariant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::vector<Index> dims{1, 5, 50};
  std::vector<Index> rules{1, 3, 10};
  std::vector<Index> classes{2, 5};
  Index batch = 4;
  double step = 1e-5;
  double tolerance = 1e-4;
  Index max_coords = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    if (configs < 1) throw ConfigError("gradcheck configs must be positive");
    if (variants.empty() || dims.empty() || rules.empty() || classes.empty())
      throw ConfigError("gradcheck lists must be non-empty");
    if (batch < 1) throw ConfigError("gradcheck batch must be positive");
    if (!(step > 0.0)) throw ConfigError("gradcheck step must be positive");
    for (Index c : classes)
      if (c < 2) throw ConfigError("gradcheck uses cross-entropy, which needs at least 2 classes");
    for (Index d : dims)
      if (d < 1) throw ConfigError("gradcheck dims must be positive");
    for (Index r : rules)
      if (r < 1) throw ConfigError("gradcheck rules must be positive");
  }
};

struct GradCheckRow {
  int index = 0;
  DefuzzVariant variant{};
  Shape shape{};
  GradCheckResult result{};
  bool passed = false;
};

/// Configuration i takes entry i (mod the grid size) of the grid ordered
/// with D varying fastest, then variant, R and C, so any prefix of a
/// full-grid-sized run touches every listed value of each factor early.
inline std::vector<GradCheckRow> run_gradcheck(const GradCheckSpec& spec) {
  spec.validate();
  const std::size_t nd = spec.dims.size(), nv = spec.variants.size(), nr = spec.rules.size();
  const std::size_t grid = nd * nv * nr * spec.classes.size();
  std::vector<GradCheckRow> rows;
  for (int i = 0; i < spec.configs; ++i) {
    std::size_t g = static_cast<std::size_t>(i) % grid;
    const Index d = spec.dims[g % nd];
    g /= nd;
    const DefuzzVariant v = spec.variants[g % nv];
    g /= nv;
    const Index r = spec.rules[g % nr];
    g /= nr;
    const Index c = spec.classes[g];

    Rng rng = make_rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)), "gradcheck");
    const Shape shape{r, d, c};
    const TskModel model = random_model(shape, v, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, static_cast<int>(c) - 1);
    Matrix xs(spec.batch, d);
    for (auto& x : xs.reshaped()) x = normal(rng);
    std::vector<int> ys(static_cast<std::size_t>(spec.batch));
    for (auto& y : ys) y = label(rng);

    GradCheckRow row{i, v, shape, check_gradients(model, xs, ys, LossSpec{}, spec.step, spec.max_coords, rng), false};
    row.passed = row.result.max_relative_error <= spec.tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tsk
