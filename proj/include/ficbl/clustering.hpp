#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ficbl/error.hpp"
#include "ficbl/matrix.hpp"
#include "ficbl/parallel.hpp"
#include "ficbl/random.hpp"

namespace ficbl {

enum class ClusterKind { KMeans, Gmm };

inline constexpr double kVarianceFloor = 1e-6;

/// R clusters with a hard assignment rule. Cluster indices are 0-based.
/// For KMeans only `means` (the centers) is populated.
struct ClusterModel {
  ClusterKind kind = ClusterKind::KMeans;
  Matrix means;                 // R x dim
  std::vector<double> weights;  // R, Gmm only
  Matrix variances;             // R x dim, Gmm only

  std::size_t clusters() const noexcept { return means.rows(); }
  std::size_t dim() const noexcept { return means.cols(); }

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

struct KMeansOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 300;
};

struct EmOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 200;
  KMeansOptions init;
};

/// Per-iteration objective: k-means inertia or EM total log-likelihood.
struct FitTrace {
  std::vector<double> objective;
};

namespace detail {

inline void check_fit_input(const Matrix& points, std::size_t clusters) {
  if (clusters == 0) throw DomainError("cluster count must be positive");
  if (points.rows() < clusters) {
    throw NumericError("cannot form " + std::to_string(clusters) + " clusters from " +
                       std::to_string(points.rows()) + " points");
  }
}

inline std::size_t nearest(const Matrix& centers, std::span<const double> x, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    const double d = squared_distance(centers.row(k), x);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

inline Matrix kmeans_plus_plus(const Matrix& points, std::size_t clusters, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers(clusters, points.cols());
  std::size_t first = rng.index(n);
  std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));
  for (std::size_t k = 1; k < clusters; ++k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(k).begin());
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(k)));
    }
  }
  return centers;
}

inline double log_sum_exp(std::span<const double> v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

// log w_k + log N(x | mu_k, diag var_k) for every component.
inline void component_log_densities(const ClusterModel& m, std::span<const double> x,
                                    std::span<double> out) {
  static const double log_two_pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t k = 0; k < m.clusters(); ++k) {
    if (m.weights[k] <= 0.0) {
      out[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const auto mu = m.means.row(k);
    const auto var = m.variances.row(k);
    double s = std::log(m.weights[k]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - mu[j];
      s -= 0.5 * (log_two_pi + std::log(var[j]) + diff * diff / var[j]);
    }
    out[k] = s;
  }
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations. An empty cluster is
/// re-seeded with the point farthest from its assigned center, so R is kept.
inline ClusterModel fit_kmeans(const Matrix& points, std::size_t clusters, std::uint64_t seed,
                               const KMeansOptions& options = {}, FitTrace* trace = nullptr) {
  detail::check_fit_input(points, clusters);
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  Rng rng(seed);
  ClusterModel model;
  model.kind = ClusterKind::KMeans;
  model.means = detail::kmeans_plus_plus(points, clusters, rng);

  std::vector<std::size_t> label(n);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    parallel_for(n, [&](std::size_t i) { label[i] = detail::nearest(model.means, points.row(i), &dist[i]); });
    double objective = 0.0;
    for (double d : dist) objective += d;
    if (trace) trace->objective.push_back(objective);

    Matrix next(clusters, dim);
    std::vector<std::size_t> count(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = next.row(label[i]);
      const auto x = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) row[j] += x[j];
      ++count[label[i]];
    }
    for (std::size_t k = 0; k < clusters; ++k) {
      if (count[k] == 0) {
        const auto far = static_cast<std::size_t>(
            std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy(points.row(far).begin(), points.row(far).end(), next.row(k).begin());
        dist[far] = 0.0;
        continue;
      }
      for (double& v : next.row(k)) v /= static_cast<double>(count[k]);
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < clusters; ++k) {
      shift = std::max(shift, std::sqrt(squared_distance(next.row(k), model.means.row(k))));
    }
    model.means = std::move(next);
    if (shift < options.tolerance) break;
  }
  return model;
}

/// Posterior component probabilities for one point (Gmm), or a one-hot
/// nearest-center vector (KMeans).
inline std::vector<double> responsibilities(const ClusterModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) throw DomainError("embedding dimension mismatch");
  std::vector<double> r(model.clusters(), 0.0);
  if (model.kind == ClusterKind::KMeans) {
    r[detail::nearest(model.means, x)] = 1.0;
    return r;
  }
  detail::component_log_densities(model, x, r);
  const double lse = detail::log_sum_exp(r);
  for (double& v : r) v = std::exp(v - lse);
  return r;
}

/// Diagonal-covariance Gaussian mixture fitted by EM, initialized from k-means.
inline ClusterModel fit_em_gmm(const Matrix& points, std::size_t clusters, std::uint64_t seed,
                               const EmOptions& options = {}, FitTrace* trace = nullptr) {
  detail::check_fit_input(points, clusters);
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();

  ClusterModel model = fit_kmeans(points, clusters, seed, options.init);
  model.kind = ClusterKind::Gmm;

  // initial variances and weights from the hard k-means partition
  {
    std::vector<double> global_mean(dim, 0.0), global_var(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) global_mean[j] += points(i, j);
    }
    for (double& v : global_mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = points(i, j) - global_mean[j];
        global_var[j] += d * d;
      }
    }
    for (double& v : global_var) v = std::max(kVarianceFloor, v / static_cast<double>(n));

    model.variances = Matrix(clusters, dim);
    std::vector<std::size_t> count(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = detail::nearest(model.means, points.row(i));
      ++count[k];
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = points(i, j) - model.means(k, j);
        model.variances(k, j) += d * d;
      }
    }
    model.weights.assign(clusters, 0.0);
    for (std::size_t k = 0; k < clusters; ++k) {
      const std::size_t c = std::max<std::size_t>(count[k], 1);
      model.weights[k] = static_cast<double>(c);
      for (std::size_t j = 0; j < dim; ++j) {
        model.variances(k, j) = count[k] > 1
                                    ? std::max(kVarianceFloor, model.variances(k, j) / static_cast<double>(count[k]))
                                    : global_var[j];
      }
    }
    double total = 0.0;
    for (double w : model.weights) total += w;
    for (double& w : model.weights) w /= total;
  }

  Matrix resp(n, clusters);
  std::vector<double> point_ll(n);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    parallel_for(n, [&](std::size_t i) {
      auto r = resp.row(i);
      detail::component_log_densities(model, points.row(i), r);
      const double lse = detail::log_sum_exp(r);
      point_ll[i] = lse;
      for (double& v : r) v = std::exp(v - lse);
    });
    double ll = 0.0;
    for (double v : point_ll) ll += v;
    if (trace) trace->objective.push_back(ll);
    if (it > 0 && ll - previous < options.tolerance) break;
    previous = ll;

    std::vector<double> mass(clusters, 0.0);
    Matrix sum(clusters, dim), sq(clusters, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = points.row(i);
      const auto r = resp.row(i);
      for (std::size_t k = 0; k < clusters; ++k) {
        if (r[k] == 0.0) continue;
        mass[k] += r[k];
        auto s = sum.row(k);
        for (std::size_t j = 0; j < dim; ++j) s[j] += r[k] * x[j];
      }
    }
    for (std::size_t k = 0; k < clusters; ++k) {
      model.weights[k] = mass[k] / static_cast<double>(n);
      if (mass[k] <= 0.0) continue;
      for (std::size_t j = 0; j < dim; ++j) model.means(k, j) = sum(k, j) / mass[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = points.row(i);
      const auto r = resp.row(i);
      for (std::size_t k = 0; k < clusters; ++k) {
        if (r[k] == 0.0) continue;
        auto q = sq.row(k);
        const auto mu = model.means.row(k);
        for (std::size_t j = 0; j < dim; ++j) {
          const double d = x[j] - mu[j];
          q[j] += r[k] * d * d;
        }
      }
    }
    for (std::size_t k = 0; k < clusters; ++k) {
      if (mass[k] <= 0.0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        model.variances(k, j) = std::max(kVarianceFloor, sq(k, j) / mass[k]);
      }
    }
  }
  return model;
}

/// Hard assignment: nearest center (KMeans) or largest posterior (Gmm).
/// Ties go to the smallest index.
inline std::size_t assign(const ClusterModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw DomainError("embedding has dimension " + std::to_string(x.size()) + ", model expects " +
                      std::to_string(model.dim()));
  }
  if (model.kind == ClusterKind::KMeans) return detail::nearest(model.means, x);
  std::vector<double> logp(model.clusters());
  detail::component_log_densities(model, x, logp);
  return static_cast<std::size_t>(std::max_element(logp.begin(), logp.end()) - logp.begin());
}

/// Assigns every row of `points`; pointwise and order-independent.
inline std::vector<std::size_t> assign_all(const ClusterModel& model, const Matrix& points) {
  std::vector<std::size_t> out(points.rows());
  parallel_for(points.rows(), [&](std::size_t i) { out[i] = assign(model, points.row(i)); });
  return out;
}

}  // namespace ficbl
