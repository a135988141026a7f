#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/error.hpp"
#include "tsk/model.hpp"
#include "tsk/rng.hpp"

namespace tsk {

struct InitSpec {
  /// Location of the width distribution, sigma ~ N(h, sigma_spread^2).
  double h = 1.0;
  double sigma_spread = 0.2;
  int kmeans_iters = 100;
  int kmeans_restarts = 10;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Matrix centers;
  std::vector<Index> assignment;
  double inertia = 0.0;
  int iterations = 0;
};

namespace detail {

/// Squared distances from every row of xs to every centre, N x K.
inline Matrix pairwise_sq_dist(const Matrix& xs, const Matrix& centers) {
  const Vector xn = xs.rowwise().squaredNorm();
  const RowVector cn = centers.rowwise().squaredNorm().transpose();
  Matrix d = -2.0 * xs * centers.transpose();
  d.colwise() += xn;
  d.rowwise() += cn;
  return d.cwiseMax(0.0);
}

inline Matrix kmeanspp_seed(const Matrix& xs, Index k, Rng& rng) {
  const Index n = xs.rows();
  Matrix centers(k, xs.cols());
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<Index> first(0, n - 1);
  Index pick = first(rng);
  centers.row(0) = xs.row(pick);
  taken[static_cast<std::size_t>(pick)] = true;
  Vector nearest = (xs.rowwise() - xs.row(pick)).rowwise().squaredNorm();

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index c = 1; c < k; ++c) {
    const double total = nearest.sum();
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = -1;
      for (Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (nearest(i) > 0.0 && acc >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0)
        for (Index i = n - 1; i >= 0; --i)
          if (nearest(i) > 0.0) {
            pick = i;
            break;
          }
    } else {
      // Every remaining point coincides with a centre: take an unused row.
      std::vector<Index> free;
      for (Index i = 0; i < n; ++i)
        if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
      std::uniform_int_distribution<std::size_t> any(0, free.size() - 1);
      pick = free[any(rng)];
    }
    centers.row(c) = xs.row(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    nearest = nearest.cwiseMin((xs.rowwise() - xs.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

inline KMeansResult lloyd(const Matrix& xs, Matrix centers, int max_iters) {
  const Index n = xs.rows();
  const Index k = centers.rows();
  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> counts(static_cast<std::size_t>(k));
  Vector point_dist(n);

  for (int it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    const Matrix dist = pairwise_sq_dist(xs, centers);
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      dist.row(i).minCoeff(&best);  // first minimum: lowest index wins ties
      point_dist(i) = dist(i, best);
      if (res.assignment[static_cast<std::size_t>(i)] != best) {
        res.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && it > 0) break;

    Matrix sums = Matrix::Zero(k, xs.cols());
    std::fill(counts.begin(), counts.end(), 0);
    for (Index i = 0; i < n; ++i) {
      const Index a = res.assignment[static_cast<std::size_t>(i)];
      sums.row(a) += xs.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: reseed at the point farthest from its nearest centre.
      Index far = 0;
      point_dist.maxCoeff(&far);
      centers.row(c) = xs.row(far);
      point_dist(far) = 0.0;
      res.assignment[static_cast<std::size_t>(far)] = c;
    }
  }

  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i)
    res.inertia += (xs.row(i) - centers.row(res.assignment[static_cast<std::size_t>(i)])).squaredNorm();
  res.centers = std::move(centers);
  return res;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// within-cluster sum of squares wins, earlier restarts winning ties.
inline KMeansResult kmeans(const Matrix& xs, Index k, const InitSpec& spec) {
  if (k < 1) throw ConfigError("k-means needs at least one cluster");
  if (xs.rows() < k)
    throw ConfigError("k-means needs N >= R, got N=" + std::to_string(xs.rows()) + " R=" + std::to_string(k));
  if (spec.kmeans_iters < 1 || spec.kmeans_restarts < 1)
    throw ConfigError("k-means iterations and restarts must be positive");
  const std::uint64_t base = derive_seed(spec.seed, "init/kmeans");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < spec.kmeans_restarts; ++restart) {
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(restart)));
    KMeansResult res = detail::lloyd(xs, detail::kmeanspp_seed(xs, k, rng), spec.kmeans_iters);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

inline Matrix kmeans_centers(const Dataset& train, Index r, const InitSpec& spec) {
  return kmeans(train.features, r, spec).centers;
}

/// Centres from k-means, widths |N(h, sigma_spread^2)| clamped to sigma_min
/// (the sign of a width never matters to the membership), consequents
/// ~ N(0, 2/(D+1)) including the bias.
inline TskModel init_model(const Dataset& train, Index r, DefuzzVariant variant, const InitSpec& spec) {
  if (!(spec.h > 0.0)) throw ConfigError("init h must be positive");
  if (!(spec.sigma_spread >= 0.0)) throw ConfigError("init sigma_spread must be non-negative");
  TskModel model(Shape{r, train.dim(), train.num_classes}, variant);
  model.centers() = kmeans_centers(train, r, spec);

  Rng sigma_rng = make_rng(spec.seed, "init/sigma");
  std::normal_distribution<double> sigma_dist(spec.h, spec.sigma_spread);
  auto widths = model.widths();
  for (Index i = 0; i < widths.rows(); ++i)
    for (Index j = 0; j < widths.cols(); ++j) {
      const double s = spec.sigma_spread > 0.0 ? sigma_dist(sigma_rng) : spec.h;
      widths(i, j) = std::max(std::abs(s), kSigmaMin);
    }

  Rng b_rng = make_rng(spec.seed, "init/consequent");
  std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(train.dim() + 1)));
  for (auto& v : model.consequent_params()) v = he(b_rng);
  return model;
}

}  // namespace tsk
