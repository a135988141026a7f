#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tsk/error.hpp"
#include "tsk/model.hpp"

namespace tsk {

/// dL/dm, dL/dsigma and dL/db in the model's flat layout.
class GradientSet : public ParameterLayout<GradientSet> {
 public:
  GradientSet() = default;
  explicit GradientSet(Shape shape) : shape_(shape), flat_(Vector::Zero(shape.num_params())) {}
  GradientSet(Shape shape, Vector flat) : shape_(shape), flat_(std::move(flat)) {
    if (flat_.size() != shape_.num_params()) throw ShapeError("gradient vector does not match " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }

 private:
  Shape shape_;
  Vector flat_;
};

enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError };

struct LossSpec {
  LossKind kind = LossKind::SoftmaxCrossEntropy;
};

struct GradL1 {
  double m = 0.0;
  double sigma = 0.0;
  double b = 0.0;
};

/// Sum of absolute values per parameter group.
inline GradL1 grad_l1_norms(const GradientSet& g) {
  return {g.centers().cwiseAbs().sum(), g.widths().cwiseAbs().sum(), g.consequent_params().cwiseAbs().sum()};
}

namespace detail {

inline void check_loss_inputs(const Shape& shape, const Matrix& xs, std::span<const int> ys, const LossSpec& loss) {
  if (xs.rows() < 1) throw PreconditionError("loss needs a non-empty batch");
  if (xs.cols() != shape.inputs)
    throw ShapeError("model expects D=" + std::to_string(shape.inputs) + ", found D=" + std::to_string(xs.cols()));
  if (static_cast<Index>(ys.size()) != xs.rows()) throw ShapeError("batch has mismatched feature and label counts");
  if (loss.kind == LossKind::SoftmaxCrossEntropy) {
    if (shape.classes < 2) throw ConfigError("cross-entropy loss requires C >= 2");
    for (int y : ys)
      if (y < 0 || y >= shape.classes) throw ShapeError("label " + std::to_string(y) + " outside model classes");
  } else if (shape.classes != 1) {
    throw ConfigError("mean-squared-error loss requires C = 1");
  }
}

/// Loss of one output vector and its gradient with respect to that vector.
inline double output_loss(const Vector& out, int y, LossKind kind, Vector* grad) {
  if (kind == LossKind::MeanSquaredError) {
    const double e = out(0) - static_cast<double>(y);
    if (grad) *grad = Vector::Constant(1, 2.0 * e);
    return e * e;
  }
  const double omax = out.maxCoeff();
  const Eigen::ArrayXd e = (out.array() - omax).exp();
  const double sum = e.sum();
  if (grad) {
    *grad = (e / sum).matrix();
    (*grad)(y) -= 1.0;
  }
  return omax + std::log(sum) - out(y);
}

}  // namespace detail

/// Batch-mean loss without gradients.
inline double batch_loss(const TskModel& model, const Matrix& xs, std::span<const int> ys, const LossSpec& loss = {}) {
  detail::check_loss_inputs(model.shape(), xs, ys, loss);
  const Matrix scores = model.scores(xs);
  double total = 0.0;
  for (Index n = 0; n < xs.rows(); ++n)
    total += detail::output_loss(scores.row(n).transpose(), ys[static_cast<std::size_t>(n)], loss.kind, nullptr);
  return total / static_cast<double>(xs.rows());
}

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// Batch-mean loss and its exact gradient with respect to every parameter.
///
/// With a = dL/dfbar, the firing Jacobians are
///   softmax:  dL/dz_r = fbar_r (a_r - sum_i fbar_i a_i)
///   LogTSK:   dL/dz_r = fbar_r (a_r - sum_i fbar_i a_i) / (-z_r + eps)
///   L1:       dL/dz_r = (a_r - sign(z_r) sum_i fbar_i a_i) / |z|_1
///   L2:       dL/dz_r = (a_r - fbar_r sum_i fbar_i a_i) / |z|_2
/// The centred term is taken relative to the dominant rule, which keeps
/// relative precision when one rule holds nearly all the mass.
inline LossAndGrad loss_and_grad(const TskModel& model, const Matrix& xs, std::span<const int> ys,
                                 const LossSpec& loss = {}, std::size_t batch_index = 0) {
  const Shape& sh = model.shape();
  detail::check_loss_inputs(sh, xs, ys, loss);
  const Index batch = xs.rows();
  const Index rules = sh.rules;
  const Index classes = sh.classes;
  const double kappa = model.z_scale();
  const DefuzzVariant variant = model.variant();

  const Matrix inv = model.inverse_width_sq();
  const auto centers = model.centers();

  std::vector<Matrix> rule_out(static_cast<std::size_t>(rules));
  for (Index r = 0; r < rules; ++r) {
    const auto b = model.consequent(r);
    rule_out[static_cast<std::size_t>(r)] = xs * b.bottomRows(sh.inputs);
    rule_out[static_cast<std::size_t>(r)].rowwise() += b.row(0);
  }

  LossAndGrad res{0.0, GradientSet(sh)};
  Matrix d_m = Matrix::Zero(rules, sh.inputs);
  Matrix d_s = Matrix::Zero(rules, sh.inputs);
  Matrix weights(batch, rules);
  Matrix out_grad(batch, classes);

  Matrix y_n(rules, classes);
  Vector g_out;
  Vector dz(rules);
  RowVector diff(sh.inputs);
  for (Index n = 0; n < batch; ++n) {
    const auto x = xs.row(n);
    const Vector z = model.compute_z(x.transpose(), inv);
    const Vector fbar = defuzzify(z, variant, model.log_epsilon());
    for (Index r = 0; r < rules; ++r) y_n.row(r) = rule_out[static_cast<std::size_t>(r)].row(n);
    const Vector out = y_n.transpose() * fbar;
    const double l = detail::output_loss(out, ys[static_cast<std::size_t>(n)], loss.kind, &g_out);
    if (!std::isfinite(l))
      throw NumericError("non-finite loss in batch " + std::to_string(batch_index) + " at sample " +
                         std::to_string(n));
    res.loss += l;

    const Vector a = y_n * g_out;
    switch (variant) {
      case DefuzzVariant::VanillaSoftmax:
      case DefuzzVariant::HTSK:
      case DefuzzVariant::LogTSK: {
        Index p = 0;
        fbar.maxCoeff(&p);
        const double centred = (fbar.array() * (a.array() - a(p))).sum();
        dz = (fbar.array() * ((a.array() - a(p)) - centred)).matrix();
        if (variant == DefuzzVariant::LogTSK) dz.array() /= (-z.array() + model.log_epsilon());
        break;
      }
      case DefuzzVariant::L1Norm: {
        const double s = fbar.dot(a);
        dz = ((a.array() - z.array().sign() * s) / z.lpNorm<1>()).matrix();
        break;
      }
      case DefuzzVariant::L2Norm: {
        const double s = fbar.dot(a);
        dz = ((a.array() - fbar.array() * s) / z.stableNorm()).matrix();
        break;
      }
    }

    for (Index r = 0; r < rules; ++r) {
      if (dz(r) == 0.0) continue;
      diff = x - centers.row(r);
      const double k = dz(r) * kappa;
      d_m.row(r).array() += k * diff.array() * inv.row(r).array();
      d_s.row(r).array() += k * diff.array().square() * inv.row(r).array();
    }
    weights.row(n) = fbar.transpose();
    out_grad.row(n) = g_out.transpose();
  }

  const double inv_b = 1.0 / static_cast<double>(batch);
  res.loss *= inv_b;

  // dZ/ds carries an extra 1/s; the clamp passes the gradient only when inactive.
  const auto widths = model.widths();
  auto g_m = res.grads.centers();
  auto g_s = res.grads.widths();
  g_m = d_m * inv_b;
  for (Index r = 0; r < rules; ++r)
    for (Index d = 0; d < sh.inputs; ++d) {
      const double sigma = widths(r, d);
      const double mag = std::abs(sigma);
      g_s(r, d) = mag > kSigmaMin ? d_s(r, d) * inv_b / mag * (sigma > 0.0 ? 1.0 : -1.0) : 0.0;
    }

  for (Index r = 0; r < rules; ++r) {
    const Matrix weighted = weights.col(r).asDiagonal() * out_grad;
    auto g_b = res.grads.consequent(r);
    g_b.row(0) = weighted.colwise().sum() * inv_b;
    g_b.bottomRows(sh.inputs) = xs.transpose() * weighted * inv_b;
  }

  if (!res.grads.flat().allFinite())
    throw NumericError("non-finite gradient in batch " + std::to_string(batch_index));
  return res;
}

}  // namespace tsk
