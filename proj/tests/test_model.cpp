#include <gtest/gtest.h>

#include <cmath>

#include "tsk/finite_diff.hpp"
#include "tsk/model.hpp"

using namespace tsk;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Output of the model from the product of per-dimension memberships,
// without any log-domain evaluation.
Vector product_form_output(const TskModel& m, const Vector& x) {
  const Index R = m.num_rules(), D = m.input_dim(), C = m.num_classes();
  const double widen = m.variant() == DefuzzVariant::HTSK ? std::sqrt(static_cast<double>(D)) : 1.0;
  std::vector<long double> f(static_cast<std::size_t>(R));
  for (Index r = 0; r < R; ++r) {
    long double prod = 1;
    for (Index d = 0; d < D; ++d) {
      const long double s = std::fabs(m.widths()(r, d)) * widen;
      const long double t = (x(d) - m.centers()(r, d)) / s;
      prod *= std::exp(-t * t / 2);
    }
    f[static_cast<std::size_t>(r)] = prod;
  }
  std::vector<long double> w(f.size());
  long double norm = 0;
  for (std::size_t r = 0; r < f.size(); ++r) {
    switch (m.variant()) {
      case DefuzzVariant::VanillaSoftmax:
      case DefuzzVariant::HTSK: w[r] = f[r]; norm += w[r]; break;
      case DefuzzVariant::LogTSK: w[r] = 1 / (-std::log(f[r]) + m.log_epsilon()); norm += w[r]; break;
      case DefuzzVariant::L1Norm: w[r] = std::log(f[r]); norm += std::fabs(w[r]); break;
      case DefuzzVariant::L2Norm: w[r] = std::log(f[r]); norm += w[r] * w[r]; break;
    }
  }
  if (m.variant() == DefuzzVariant::L2Norm) norm = std::sqrt(norm);
  Vector out = Vector::Zero(C);
  for (Index c = 0; c < C; ++c) {
    long double acc = 0;
    for (Index r = 0; r < R; ++r) {
      const auto b = m.consequent(r);
      long double y = b(0, c);
      for (Index d = 0; d < D; ++d) y += static_cast<long double>(b(d + 1, c)) * x(d);
      acc += w[static_cast<std::size_t>(r)] / norm * y;
    }
    out(c) = static_cast<double>(acc);
  }
  return out;
}

}  // namespace

TEST(Defuzzify, SoftmaxSmallExample) {
  const Vector z = vec({-0.1, -0.5, -0.3});
  const Vector f = defuzzify(z, DefuzzVariant::VanillaSoftmax);
  long double s = 0;
  for (Index i = 0; i < 3; ++i) s += std::exp(static_cast<long double>(z(i)));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(f(i), static_cast<double>(std::exp(static_cast<long double>(z(i))) / s), 1e-15);
  EXPECT_NEAR(f(0), 0.4018, 1e-4);
  EXPECT_NEAR(f(1), 0.2693, 1e-4);
  EXPECT_NEAR(f(2), 0.3289, 1e-4);
}

TEST(Defuzzify, SoftmaxSaturatedExample) {
  const Vector f = defuzzify(vec({-10, -50, -30}), DefuzzVariant::VanillaSoftmax);
  EXPECT_NEAR(f(0), 1.0, 1e-8);
  EXPECT_NEAR(std::log10(f(1)), std::log10(4e-18), 0.1);
  EXPECT_NEAR(std::log10(f(2)), std::log10(2e-9), 0.1);
  EXPECT_NEAR(f(1) / 4e-18, 1.0, 0.25);
  EXPECT_NEAR(f(2) / 2e-9, 1.0, 0.25);
}

TEST(Defuzzify, EqualZGivesUniformLevels) {
  const Vector z = Vector::Constant(7, -3.5);
  for (DefuzzVariant v : kAllVariants) {
    const Vector f = defuzzify(z, v);
    for (Index i = 1; i < f.size(); ++i) EXPECT_DOUBLE_EQ(f(i), f(0)) << to_string(v);
    if (is_simplex_variant(v)) EXPECT_NEAR(f(0), 1.0 / 7.0, 1e-15) << to_string(v);
  }
}

TEST(Defuzzify, HugeNegativeZDoesNotUnderflow) {
  const Vector z = vec({-1e6, -1e6 - 1, -1e6 - 2});
  for (DefuzzVariant v : kAllVariants) {
    const Vector f = defuzzify(z, v);
    EXPECT_TRUE(f.allFinite()) << to_string(v);
    if (is_simplex_variant(v)) EXPECT_NEAR(f.sum(), 1.0, 1e-12) << to_string(v);
  }
  EXPECT_NEAR(defuzzify(z, DefuzzVariant::VanillaSoftmax)(0), 1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Defuzzify, ScaleInvariantVariants) {
  const Vector z = vec({-0.3, -2.0, -7.5, -0.01});
  for (DefuzzVariant v : {DefuzzVariant::L1Norm, DefuzzVariant::L2Norm, DefuzzVariant::LogTSK}) {
    const Vector base = defuzzify(z, v, 0.0);
    for (double h : {0.01, 1.0, 100.0})
      EXPECT_LT((defuzzify(h * z, v, 0.0) - base).cwiseAbs().maxCoeff(), 1e-12) << to_string(v) << " h=" << h;
  }
}

TEST(Defuzzify, ZeroNormIsDegenerate) {
  EXPECT_THROW(defuzzify(Vector::Zero(3), DefuzzVariant::L1Norm), DegenerateInputError);
  EXPECT_THROW(defuzzify(Vector::Zero(3), DefuzzVariant::L2Norm), DegenerateInputError);
}

TEST(Defuzzify, LogTskZeroDistanceTakesAllMass) {
  const Vector f = defuzzify(vec({0.0, -1.0, -2.0}), DefuzzVariant::LogTSK, 0.0);
  EXPECT_EQ(f(0), 1.0);
  EXPECT_EQ(f(1), 0.0);
}

TEST(Defuzzify, NonFiniteZIsRejected) {
  EXPECT_THROW(defuzzify(vec({-1.0, std::nan("")}), DefuzzVariant::HTSK), PreconditionError);
}

TEST(Model, MembershipValues) {
  TskModel m(Shape{1, 2, 1}, DefuzzVariant::VanillaSoftmax);
  m.centers() << 0.5, -1.0;
  m.widths() << 2.0, 1.0;
  const Vector mu = m.membership(vec({0.5, 0.0}), 0);
  EXPECT_DOUBLE_EQ(mu(0), 1.0);
  EXPECT_NEAR(mu(1), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(std::exp(-0.5), 0.6065, 1e-4);
}

TEST(Model, WidthClampEngages) {
  TskModel m(Shape{1, 1, 1}, DefuzzVariant::VanillaSoftmax);
  m.widths()(0, 0) = 0.0;
  m.centers()(0, 0) = 0.0;
  const Vector z = m.compute_z(vec({1e-8}));
  EXPECT_NEAR(z(0), -0.5, 1e-12);
  EXPECT_EQ(effective_width(-3.0), 3.0);
}

TEST(Model, ZForVanillaAndHtsk) {
  TskModel m(Shape{1, 2, 1}, DefuzzVariant::VanillaSoftmax);
  m.centers().setZero();
  EXPECT_DOUBLE_EQ(m.compute_z(vec({1.0, 1.0}))(0), -1.0);
  m.set_variant(DefuzzVariant::HTSK);
  EXPECT_DOUBLE_EQ(m.compute_z(vec({1.0, 1.0}))(0), -0.5);
  TskModel one(Shape{1, 1, 1}, DefuzzVariant::VanillaSoftmax);
  one.centers()(0, 0) = 0.25;
  EXPECT_EQ(one.compute_z(vec({0.25}))(0), 0.0);
}

TEST(Model, HtskMatchesWidenedVanilla) {
  Rng rng(7);
  std::normal_distribution<double> normal;
  for (Index d : {2, 50, 784}) {
    const TskModel htsk = random_model(Shape{6, d, 2}, DefuzzVariant::HTSK, rng);
    TskModel vanilla = htsk;
    vanilla.set_variant(DefuzzVariant::VanillaSoftmax);
    for (auto& s : vanilla.widths().reshaped()) s *= std::sqrt(static_cast<double>(d));
    Matrix xs(5, d);
    for (auto& x : xs.reshaped()) x = normal(rng);
    EXPECT_LT((htsk.firing_levels(xs) - vanilla.firing_levels(xs)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((widen_for_vanilla(htsk).flat() - vanilla.flat()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Model, MatchesProductOfMemberships) {
  Rng rng(3);
  std::normal_distribution<double> normal;
  for (DefuzzVariant v : kAllVariants)
    for (Index d : {1, 4, 8}) {
      const TskModel m = random_model(Shape{3, d, 2}, v, rng);
      for (int trial = 0; trial < 5; ++trial) {
        Vector x(d);
        for (auto& e : x) e = normal(rng);
        const Vector expect = product_form_output(m, x);
        EXPECT_LT((m.forward(x).output - expect).cwiseAbs().maxCoeff(), 1e-10) << to_string(v) << " D=" << d;
      }
    }
}

TEST(Model, SingleRuleOutputsItsConsequent) {
  Rng rng(5);
  for (DefuzzVariant v : kAllVariants) {
    const TskModel m = random_model(Shape{1, 3, 2}, v, rng);
    const Vector x = vec({0.3, -0.2, 1.1});
    const FiringState st = m.forward(x);
    if (is_simplex_variant(v)) {
      EXPECT_DOUBLE_EQ(st.fbar(0), 1.0);
      EXPECT_LT((st.output - m.rule_outputs(x).row(0).transpose()).cwiseAbs().maxCoeff(), 1e-14);
    } else {
      // A single negative Z normalizes to -1.
      EXPECT_DOUBLE_EQ(st.fbar(0), -1.0);
    }
  }
}

TEST(Model, SharedConsequentPassesThrough) {
  Rng rng(8);
  for (DefuzzVariant v : {DefuzzVariant::VanillaSoftmax, DefuzzVariant::HTSK, DefuzzVariant::LogTSK}) {
    TskModel m = random_model(Shape{4, 3, 2}, v, rng);
    for (Index r = 1; r < 4; ++r) m.consequent(r) = m.consequent(0);
    const Vector x = vec({1.0, -0.5, 0.25});
    EXPECT_LT((m.forward(x).output - m.rule_outputs(x).row(0).transpose()).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Model, ShiftInvarianceOfSoftmax) {
  const Vector z = vec({-1.0, -4.0, -2.5});
  const Vector a = defuzzify(z, DefuzzVariant::VanillaSoftmax);
  const Vector b = defuzzify((z.array() - 300.0).matrix(), DefuzzVariant::VanillaSoftmax);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, BatchMatchesPerSample) {
  Rng rng(2);
  std::normal_distribution<double> normal;
  const TskModel m = random_model(Shape{5, 4, 3}, DefuzzVariant::LogTSK, rng);
  Matrix xs(6, 4);
  for (auto& x : xs.reshaped()) x = normal(rng);
  const Prediction p = predict_batch(m, xs);
  for (Index n = 0; n < xs.rows(); ++n) {
    const Vector out = m.forward(xs.row(n).transpose()).output;
    EXPECT_LT((p.scores.row(n).transpose() - out).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Model, ArgmaxAndTies) {
  RowVector a(2), b(2);
  a << 0.2, 0.8;
  b << 0.5, 0.5;
  EXPECT_EQ(argmax_row(a), 1);
  EXPECT_EQ(argmax_row(b), 0);
}

TEST(Model, WrongInputWidthNamesBothDims) {
  const TskModel m(Shape{2, 3, 2}, DefuzzVariant::HTSK);
  try {
    m.forward(Vector::Zero(4));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_STREQ(e.what(), "model expects D=3, found D=4");
  }
}

TEST(Model, VariantNamesRoundTrip) {
  for (DefuzzVariant v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("tsk"), ConfigError);
}
