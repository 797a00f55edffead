#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ficbl/clustering.hpp"
#include "ficbl/dataset.hpp"
#include "ficbl/embedding.hpp"
#include "ficbl/error.hpp"
#include "ficbl/freq_model.hpp"

namespace ficbl {

inline constexpr double kDefaultEpsilon = 1e-6;

/// Per-cluster counts of a new image's patch embeddings.
struct Occupancy {
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }

  static Occupancy from_assignments(std::span<const std::size_t> assignment, std::size_t clusters) {
    Occupancy occ{std::vector<std::uint64_t>(clusters, 0)};
    for (std::size_t l : assignment) {
      if (l >= clusters) throw DomainError("cluster index out of range");
      ++occ.counts[l];
    }
    return occ;
  }

  friend bool operator==(const Occupancy&, const Occupancy&) = default;
};

/// Patch -> embed -> assign -> tally.
inline Occupancy occupancy(const ClusterModel& clusters, const Embedder& embedder,
                           const GrayImage& image, const PatchConfig& cfg) {
  const auto patches = extract_patches(image, cfg);
  Occupancy occ{std::vector<std::uint64_t>(clusters.clusters(), 0)};
  for (const auto& p : patches) ++occ.counts[assign(clusters, embed(embedder, p))];
  return occ;
}

struct Prediction {
  std::vector<std::vector<double>> posterior;       // p(r,v|E*) at [r][v-1]
  std::vector<std::vector<double>> log_likelihood;  // sum_l s_l log p(l|r,v), no coefficient
  std::vector<double> log_evidence;                 // log P{E*} per concept, with coefficient

  double evidence(std::size_t r) const { return std::exp(log_evidence.at(r)); }

  /// Most probable value of concept r (1-based); ties go to the smaller value.
  int argmax(std::size_t r) const {
    const auto& p = posterior.at(r);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
  }
};

/// Posterior concept probabilities under the multinomial cluster-occupancy
/// likelihood. Zero and no-data conditionals are replaced by epsilon.
/// Computed in log space; the multinomial coefficient cancels in the
/// posterior and enters only the reported evidence.
inline Prediction predict(const ProbabilityModel& model, const Occupancy& occ,
                          double epsilon = kDefaultEpsilon) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (occ.counts.size() != model.clusters) {
    throw DomainError("occupancy has " + std::to_string(occ.counts.size()) +
                      " clusters, model has " + std::to_string(model.clusters));
  }
  const double log_eps = std::log(epsilon);
  double log_coef = std::lgamma(static_cast<double>(occ.total()) + 1.0);
  for (auto s : occ.counts) log_coef -= std::lgamma(static_cast<double>(s) + 1.0);

  const auto& schema = model.schema;
  Prediction out;
  out.posterior.resize(schema.size());
  out.log_likelihood.resize(schema.size());
  out.log_evidence.resize(schema.size());
  for (std::size_t r = 0; r < schema.size(); ++r) {
    const int nr = schema.cardinality(r);
    std::vector<double> ll(nr, 0.0), joint(nr);
    for (int v = 1; v <= nr; ++v) {
      const auto& cond = model.conditional(r, v);
      double s = 0.0;
      for (std::size_t l = 0; l < model.clusters; ++l) {
        if (occ.counts[l] == 0) continue;
        const double p = cond ? (*cond)[l] : 0.0;
        s += static_cast<double>(occ.counts[l]) * (p > epsilon ? std::log(p) : log_eps);
      }
      ll[v - 1] = s;
      const double prior = model.prior(r, v);
      joint[v - 1] = prior > 0.0 ? s + std::log(prior) : -std::numeric_limits<double>::infinity();
    }
    const double lse = detail::log_sum_exp(joint);
    if (!std::isfinite(lse)) {
      throw NumericError("posterior of concept '" + schema.name(r) + "' cannot be normalized");
    }
    std::vector<double> post(nr);
    for (int k = 0; k < nr; ++k) post[k] = std::exp(joint[k] - lse);
    out.posterior[r] = std::move(post);
    out.log_likelihood[r] = std::move(ll);
    out.log_evidence[r] = lse + log_coef;
  }
  return out;
}

/// Values with posterior >= threshold, per concept, ascending.
inline std::vector<std::vector<int>> decide(const Prediction& pred, std::span<const double> thresholds) {
  if (thresholds.size() != pred.posterior.size()) {
    throw DomainError("one threshold per concept is required");
  }
  std::vector<std::vector<int>> out(pred.posterior.size());
  for (std::size_t r = 0; r < pred.posterior.size(); ++r) {
    if (!(thresholds[r] >= 0.0 && thresholds[r] <= 1.0)) {
      throw DomainError("thresholds must lie in [0, 1]");
    }
    for (std::size_t k = 0; k < pred.posterior[r].size(); ++k) {
      if (pred.posterior[r][k] >= thresholds[r]) out[r].push_back(static_cast<int>(k) + 1);
    }
  }
  return out;
}

}  // namespace ficbl
