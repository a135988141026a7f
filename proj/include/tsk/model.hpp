#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/error.hpp"

namespace tsk {

/// Widths below this are clamped when evaluated; the stored value is free.
inline constexpr double kSigmaMin = 1e-8;
/// Added to -Z in the LogTSK denominator so a sample on a centre stays finite.
inline constexpr double kLogEpsilon = 1e-12;
/// A rule counts as fired when its normalized firing level exceeds this.
inline constexpr double kFiredThreshold = 1e-4;

using RowVector = Eigen::RowVectorXd;

enum class DefuzzVariant { VanillaSoftmax, HTSK, LogTSK, L1Norm, L2Norm };

inline constexpr DefuzzVariant kAllVariants[] = {DefuzzVariant::VanillaSoftmax, DefuzzVariant::HTSK,
                                                 DefuzzVariant::LogTSK, DefuzzVariant::L1Norm,
                                                 DefuzzVariant::L2Norm};

inline std::string_view to_string(DefuzzVariant v) {
  switch (v) {
    case DefuzzVariant::VanillaSoftmax: return "vanilla";
    case DefuzzVariant::HTSK: return "htsk";
    case DefuzzVariant::LogTSK: return "logtsk";
    case DefuzzVariant::L1Norm: return "l1";
    case DefuzzVariant::L2Norm: return "l2";
  }
  return "?";
}

inline DefuzzVariant parse_variant(std::string_view name) {
  for (DefuzzVariant v : kAllVariants)
    if (to_string(v) == name) return v;
  throw ConfigError("unknown defuzzification variant '" + std::string(name) +
                    "' (expected vanilla, htsk, logtsk, l1 or l2)");
}

/// Softmax-family variants produce firing levels on the probability simplex.
inline bool is_simplex_variant(DefuzzVariant v) {
  return v == DefuzzVariant::VanillaSoftmax || v == DefuzzVariant::HTSK || v == DefuzzVariant::LogTSK;
}

inline double effective_width(double sigma) { return std::max(std::abs(sigma), kSigmaMin); }

/// Rules, inputs and outputs of a TSK system.
struct Shape {
  Index rules = 0;
  Index inputs = 0;
  Index classes = 0;

  Index antecedent_size() const { return rules * inputs; }
  Index consequent_size() const { return rules * (inputs + 1) * classes; }
  Index num_params() const { return 2 * antecedent_size() + consequent_size(); }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "R=" + std::to_string(rules) + " D=" + std::to_string(inputs) + " C=" + std::to_string(classes);
  }
};

/// Views into a flat parameter vector laid out as
/// [centres R x D | widths R x D | consequents R x (D+1) x C], all row-major.
/// Shared by the model and by gradient sets so that both index the same way.
template <class Derived>
class ParameterLayout {
 public:
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  MatrixMap centers() { return {flat().data(), shape().rules, shape().inputs}; }
  ConstMatrixMap centers() const { return {flat().data(), shape().rules, shape().inputs}; }

  MatrixMap widths() { return {flat().data() + shape().antecedent_size(), shape().rules, shape().inputs}; }
  ConstMatrixMap widths() const {
    return {flat().data() + shape().antecedent_size(), shape().rules, shape().inputs};
  }

  /// Rule r's (D+1) x C consequent block; row 0 is the bias.
  MatrixMap consequent(Index r) {
    return {flat().data() + consequent_offset(r), shape().inputs + 1, shape().classes};
  }
  ConstMatrixMap consequent(Index r) const {
    return {flat().data() + consequent_offset(r), shape().inputs + 1, shape().classes};
  }

  /// Flat slice holding every consequent parameter.
  auto consequent_params() { return flat().segment(2 * shape().antecedent_size(), shape().consequent_size()); }
  auto consequent_params() const {
    return flat().segment(2 * shape().antecedent_size(), shape().consequent_size());
  }

 private:
  const Shape& shape() const { return static_cast<const Derived&>(*this).shape(); }
  Vector& flat() { return static_cast<Derived&>(*this).flat(); }
  const Vector& flat() const { return static_cast<const Derived&>(*this).flat(); }
  Index consequent_offset(Index r) const {
    return 2 * shape().antecedent_size() + r * (shape().inputs + 1) * shape().classes;
  }
};

/// Per-sample view of one forward pass.
struct FiringState {
  Vector z;              ///< R log-firing values (D-averaged under HTSK)
  Vector fbar;           ///< R normalized firing levels
  Matrix rule_outputs;   ///< R x C affine consequent outputs
  Vector output;         ///< C
};

// ---------------------------------------------------------------------------
// Defuzzification

namespace detail {

inline void require_finite(const Vector& z) {
  if (!z.allFinite()) throw PreconditionError("defuzzify: Z must be finite");
}

}  // namespace detail

/// Maps a Z vector to normalized firing levels.
///
/// Softmax variants subtract max(Z) before exponentiating. LogTSK normalizes
/// g_r = 1/(-Z_r + log_epsilon); it is evaluated as min(u)/u_r so that it
/// neither overflows nor loses scale invariance. L1/L2 divide the raw
/// (non-positive) Z by its norm and therefore return negative levels.
inline Vector defuzzify(const Vector& z, DefuzzVariant variant, double log_epsilon = kLogEpsilon) {
  detail::require_finite(z);
  if (z.size() == 0) throw PreconditionError("defuzzify: empty Z");
  switch (variant) {
    case DefuzzVariant::VanillaSoftmax:
    case DefuzzVariant::HTSK: {
      const double zmax = z.maxCoeff();
      Vector e = (z.array() - zmax).exp().matrix();
      return e / e.sum();
    }
    case DefuzzVariant::LogTSK: {
      if ((z.array() > 0.0).any()) throw PreconditionError("defuzzify: LogTSK requires Z <= 0");
      const Eigen::ArrayXd u = -z.array() + log_epsilon;
      const double umin = u.minCoeff();
      if (umin <= 0.0) {
        // Limit as the smallest denominators go to zero: those rules share all mass.
        Vector out = (u <= 0.0).cast<double>().matrix();
        return out / out.sum();
      }
      Vector g = (umin / u).matrix();
      return g / g.sum();
    }
    case DefuzzVariant::L1Norm: {
      const double norm = z.lpNorm<1>();
      if (norm == 0.0) throw DegenerateInputError("defuzzify: L1 norm of Z is zero");
      return z / norm;
    }
    case DefuzzVariant::L2Norm: {
      const double norm = z.stableNorm();
      if (norm == 0.0) throw DegenerateInputError("defuzzify: L2 norm of Z is zero");
      return z / norm;
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Model

class TskModel : public ParameterLayout<TskModel> {
 public:
  TskModel() = default;
  TskModel(Shape shape, DefuzzVariant variant)
      : shape_(shape), variant_(variant), theta_(Vector::Zero(shape.num_params())) {
    if (shape.rules < 1 || shape.inputs < 1 || shape.classes < 1)
      throw ConfigError("model needs R, D, C >= 1, got " + shape.str());
    widths().setOnes();
  }

  const Shape& shape() const { return shape_; }
  Index num_rules() const { return shape_.rules; }
  Index input_dim() const { return shape_.inputs; }
  Index num_classes() const { return shape_.classes; }

  DefuzzVariant variant() const { return variant_; }
  void set_variant(DefuzzVariant v) { variant_ = v; }

  double log_epsilon() const { return log_epsilon_; }
  void set_log_epsilon(double eps) { log_epsilon_ = eps; }

  Vector& flat() { return theta_; }
  const Vector& flat() const { return theta_; }

  /// Scale applied to the summed squared distance: 1/D under HTSK.
  double z_scale() const {
    return variant_ == DefuzzVariant::HTSK ? 1.0 / static_cast<double>(shape_.inputs) : 1.0;
  }

  /// 1 / s^2 with s = max(|sigma|, sigma_min), R x D.
  Matrix inverse_width_sq() const {
    return widths().unaryExpr([](double s) {
      const double w = effective_width(s);
      return 1.0 / (w * w);
    });
  }

  /// Gaussian membership degrees of x in every fuzzy set of rule r.
  Vector membership(const Vector& x, Index r) const {
    check_input(x);
    Vector mu(shape_.inputs);
    for (Index d = 0; d < shape_.inputs; ++d) {
      const double s = effective_width(widths()(r, d));
      const double t = (x(d) - centers()(r, d)) / s;
      mu(d) = std::exp(-0.5 * t * t);
    }
    return mu;
  }

  /// Log-firing values, evaluated directly in the log domain.
  Vector compute_z(const Vector& x) const {
    check_input(x);
    const Matrix inv = inverse_width_sq();
    return compute_z(x, inv);
  }

  Vector compute_z(const Vector& x, const Matrix& inv_width_sq) const {
    const double scale = -0.5 * z_scale();
    Vector z(shape_.rules);
    for (Index r = 0; r < shape_.rules; ++r)
      z(r) = scale * ((x.transpose() - centers().row(r)).array().square() * inv_width_sq.row(r).array()).sum();
    return z;
  }

  /// R x C consequent outputs b_r0 + sum_d b_rd x_d.
  Matrix rule_outputs(const Vector& x) const {
    Matrix out(shape_.rules, shape_.classes);
    for (Index r = 0; r < shape_.rules; ++r) {
      const auto b = consequent(r);
      out.row(r) = b.row(0) + x.transpose() * b.bottomRows(shape_.inputs);
    }
    return out;
  }

  FiringState forward(const Vector& x) const {
    check_input(x);
    FiringState st;
    st.z = compute_z(x);
    st.fbar = defuzzify(st.z, variant_, log_epsilon_);
    st.rule_outputs = rule_outputs(x);
    st.output = st.rule_outputs.transpose() * st.fbar;
    return st;
  }

  /// Normalized firing levels for every row of xs, N x R.
  Matrix firing_levels(const Matrix& xs) const {
    check_batch(xs);
    const Matrix inv = inverse_width_sq();
    Matrix out(xs.rows(), shape_.rules);
    for (Index n = 0; n < xs.rows(); ++n)
      out.row(n) = defuzzify(compute_z(xs.row(n).transpose(), inv), variant_, log_epsilon_).transpose();
    return out;
  }

  /// Model outputs for every row of xs, N x C.
  Matrix scores(const Matrix& xs) const {
    const Matrix fbar = firing_levels(xs);
    Matrix out = Matrix::Zero(xs.rows(), shape_.classes);
    for (Index r = 0; r < shape_.rules; ++r) {
      const auto b = consequent(r);
      Matrix y = xs * b.bottomRows(shape_.inputs);
      y.rowwise() += b.row(0);
      out += fbar.col(r).asDiagonal() * y;
    }
    return out;
  }

  void check_input(const Vector& x) const {
    if (x.size() != shape_.inputs)
      throw ShapeError("model expects D=" + std::to_string(shape_.inputs) + ", found D=" +
                       std::to_string(x.size()));
  }

  void check_batch(const Matrix& xs) const {
    if (xs.cols() != shape_.inputs)
      throw ShapeError("model expects D=" + std::to_string(shape_.inputs) + ", found D=" +
                       std::to_string(xs.cols()));
  }

 private:
  Shape shape_;
  DefuzzVariant variant_ = DefuzzVariant::HTSK;
  double log_epsilon_ = kLogEpsilon;
  Vector theta_;
};

/// Lowest index wins ties.
inline int argmax_row(const Eigen::Ref<const RowVector>& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c)
    if (row(c) > row(best)) best = c;
  return static_cast<int>(best);
}

struct Prediction {
  std::vector<int> labels;
  Matrix scores;
};

inline Prediction predict_batch(const TskModel& model, const Matrix& xs) {
  Prediction p;
  p.scores = model.scores(xs);
  p.labels.resize(static_cast<std::size_t>(xs.rows()));
  for (Index n = 0; n < xs.rows(); ++n) p.labels[static_cast<std::size_t>(n)] = argmax_row(p.scores.row(n));
  return p;
}

/// The model with every width multiplied by sqrt(D) and the variant switched
/// to VanillaSoftmax; its firing levels equal the HTSK firing levels of `m`.
inline TskModel widen_for_vanilla(const TskModel& m) {
  TskModel out = m;
  out.set_variant(DefuzzVariant::VanillaSoftmax);
  out.widths() *= std::sqrt(static_cast<double>(m.input_dim()));
  return out;
}

}  // namespace tsk
