#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ficbl/concept.hpp"
#include "ficbl/error.hpp"
#include "ficbl/rules.hpp"

namespace ficbl {

// Frequency tables over (cluster x concept value x combination). Clusters are
// 0-based; concept values are 1-based and stored at index v-1.
struct CountTables {
  ConceptSchema schema;
  std::size_t clusters = 0;

  std::uint64_t images = 0;           // N
  std::uint64_t complete_images = 0;  // images with every concept labelled
  std::uint64_t embeddings = 0;       // S

  std::vector<std::uint64_t> cluster_sizes;  // s_l

  // value_clusters[r][v-1][l] = s_v^(r)(l)
  std::vector<std::vector<std::vector<std::uint64_t>>> value_clusters;

  // labeled_embeddings[r] = S_r, embeddings from images labelled on concept r
  std::vector<std::uint64_t> labeled_embeddings;

  std::map<Combination, std::uint64_t> combination_images;                // N_z
  std::map<Combination, std::vector<std::uint64_t>> combination_clusters;  // n(l, z)

  std::uint64_t value_cluster_count(std::size_t r, int v, std::size_t l) const {
    return value_clusters.at(r).at(v - 1).at(l);
  }

  /// s_v^(r)
  std::uint64_t value_count(std::size_t r, int v) const {
    std::uint64_t s = 0;
    for (auto c : value_clusters.at(r).at(v - 1)) s += c;
    return s;
  }

  /// Whether an embedding of an image labelled z landed in cluster l.
  bool combination_in_cluster(const Combination& z, std::size_t l) const {
    const auto it = combination_clusters.find(z);
    return it != combination_clusters.end() && it->second.at(l) > 0;
  }

  friend bool operator==(const CountTables&, const CountTables&) = default;
};

/// Tallies cluster assignments (one list per image, 0-based cluster indices)
/// against image labels. Images missing concept r are left out of that
/// concept's tables but still count toward s_l and S.
inline CountTables fit_counts(const std::vector<std::vector<std::size_t>>& assignments,
                              const std::vector<ConceptVector>& labels, std::size_t clusters,
                              const ConceptSchema& schema) {
  if (assignments.empty()) throw DomainError("cannot count an empty dataset");
  if (assignments.size() != labels.size()) {
    throw DomainError("assignment and label lists differ in length");
  }
  if (clusters == 0) throw DomainError("cluster count must be positive");

  CountTables t;
  t.schema = schema;
  t.clusters = clusters;
  t.images = assignments.size();
  t.cluster_sizes.assign(clusters, 0);
  t.labeled_embeddings.assign(schema.size(), 0);
  t.value_clusters.resize(schema.size());
  for (std::size_t r = 0; r < schema.size(); ++r) {
    t.value_clusters[r].assign(schema.cardinality(r), std::vector<std::uint64_t>(clusters, 0));
  }

  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto& label = labels[i];
    validate_vector(schema, label);
    std::vector<std::uint64_t> occupancy(clusters, 0);
    for (std::size_t l : assignments[i]) {
      if (l >= clusters) {
        throw DomainError("cluster index " + std::to_string(l) + " out of range 0.." +
                          std::to_string(clusters - 1));
      }
      ++occupancy[l];
    }
    const std::uint64_t patches = assignments[i].size();
    t.embeddings += patches;
    for (std::size_t l = 0; l < clusters; ++l) t.cluster_sizes[l] += occupancy[l];
    for (std::size_t r = 0; r < schema.size(); ++r) {
      if (label[r] == kMissing) continue;
      t.labeled_embeddings[r] += patches;
      auto& row = t.value_clusters[r][label[r] - 1];
      for (std::size_t l = 0; l < clusters; ++l) row[l] += occupancy[l];
    }
    if (is_complete(label)) {
      ++t.complete_images;
      ++t.combination_images[label];
      auto& per_cluster = t.combination_clusters[label];
      if (per_cluster.empty()) per_cluster.assign(clusters, 0);
      for (std::size_t l = 0; l < clusters; ++l) per_cluster[l] += occupancy[l];
    }
  }
  return t;
}

/// Probabilities of one concept. conditional[v-1] is p(.|r,v) over clusters,
/// or nullopt when no embedding carries value v ("no data").
struct ConceptProbabilities {
  std::vector<double> prior;
  std::vector<std::optional<std::vector<double>>> conditional;

  friend bool operator==(const ConceptProbabilities&, const ConceptProbabilities&) = default;
};

struct ProbabilityModel {
  ConceptSchema schema;
  std::size_t clusters = 0;
  std::vector<ConceptProbabilities> concepts;
  std::vector<double> cluster_prob;      // p(l)
  std::map<Combination, double> joint;   // P{C=z}
  std::optional<std::string> rule;       // rule applied, if any

  double prior(std::size_t r, int v) const { return concepts.at(r).prior.at(v - 1); }

  const std::optional<std::vector<double>>& conditional(std::size_t r, int v) const {
    return concepts.at(r).conditional.at(v - 1);
  }

  friend bool operator==(const ProbabilityModel&, const ProbabilityModel&) = default;
};

/// p(l|r,v) = s_v^(r)(l) / s_v^(r); p(r,v) = s_v^(r) / S_r; p(l) = s_l / S;
/// P{C=z} = N_z over fully labelled images.
inline ProbabilityModel probability_model(const CountTables& counts) {
  ProbabilityModel m;
  m.schema = counts.schema;
  m.clusters = counts.clusters;
  m.concepts.resize(counts.schema.size());
  for (std::size_t r = 0; r < counts.schema.size(); ++r) {
    const int nr = counts.schema.cardinality(r);
    auto& c = m.concepts[r];
    c.prior.assign(nr, 0.0);
    c.conditional.assign(nr, std::nullopt);
    const double total = static_cast<double>(counts.labeled_embeddings[r]);
    for (int v = 1; v <= nr; ++v) {
      const std::uint64_t sv = counts.value_count(r, v);
      c.prior[v - 1] = total > 0 ? static_cast<double>(sv) / total : 1.0 / nr;
      if (sv == 0) continue;
      std::vector<double> cond(counts.clusters);
      for (std::size_t l = 0; l < counts.clusters; ++l) {
        cond[l] = static_cast<double>(counts.value_cluster_count(r, v, l)) / static_cast<double>(sv);
      }
      c.conditional[v - 1] = std::move(cond);
    }
  }
  m.cluster_prob.assign(counts.clusters, 0.0);
  for (std::size_t l = 0; l < counts.clusters; ++l) {
    m.cluster_prob[l] = counts.embeddings > 0 ? static_cast<double>(counts.cluster_sizes[l]) /
                                                    static_cast<double>(counts.embeddings)
                                              : 0.0;
  }
  if (counts.complete_images > 0) {
    for (const auto& [z, n] : counts.combination_images) {
      m.joint.emplace(z, static_cast<double>(n) / static_cast<double>(counts.complete_images));
    }
  }
  return m;
}

/// In-cluster concept posteriors p(r,v|l) = s_v^(r)(l) / s_l, indexed
/// [l][r][v-1]. Uses the embeddings labelled on r as the denominator, which
/// equals s_l when every image is fully labelled. nullopt marks a cluster with
/// no labelled embeddings for r.
inline std::vector<std::vector<std::optional<std::vector<double>>>> cluster_posteriors(
    const CountTables& counts) {
  std::vector<std::vector<std::optional<std::vector<double>>>> out(counts.clusters);
  for (std::size_t l = 0; l < counts.clusters; ++l) {
    out[l].resize(counts.schema.size());
    for (std::size_t r = 0; r < counts.schema.size(); ++r) {
      const int nr = counts.schema.cardinality(r);
      std::uint64_t total = 0;
      for (int v = 1; v <= nr; ++v) total += counts.value_cluster_count(r, v, l);
      if (total == 0) continue;
      std::vector<double> p(nr);
      for (int v = 1; v <= nr; ++v) {
        p[v - 1] = static_cast<double>(counts.value_cluster_count(r, v, l)) / static_cast<double>(total);
      }
      out[l][r] = std::move(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expert-rule updates

struct PriorUpdate {
  std::vector<std::vector<double>> coefficient;  // U_v^(r) at [r][v-1]
  std::vector<std::vector<double>> prior;        // p'(r,v)
  std::vector<double> normalizer;                // P{g=1} per concept
};

/// Conditioning of the priors on g(C)=1:
///   A(r,v) = sum over z with z_r = v of pi(z) P{C=z}
///   P{g=1} = sum_v A(r,v) p(r,v)
///   p'(r,v) = A(r,v) p(r,v) / P{g=1}
inline PriorUpdate rule_update_priors(const ProbabilityModel& model, const RuleExpr& rule) {
  const auto& schema = model.schema;
  PriorUpdate out;
  out.coefficient.resize(schema.size());
  out.prior.resize(schema.size());
  out.normalizer.assign(schema.size(), 0.0);
  for (std::size_t r = 0; r < schema.size(); ++r) {
    std::vector<double> mass(schema.cardinality(r), 0.0);
    for (const auto& [z, p] : model.joint) mass[z[r] - 1] += truth_prob(rule, z) * p;
    double norm = 0.0;
    for (int v = 1; v <= schema.cardinality(r); ++v) norm += mass[v - 1] * model.prior(r, v);
    if (!(norm > 0.0)) {
      throw RuleInconsistentError("rule inconsistent with data: P{g=1} is zero for concept '" +
                                  schema.name(r) + "'");
    }
    out.normalizer[r] = norm;
    out.coefficient[r].resize(mass.size());
    out.prior[r].resize(mass.size());
    for (std::size_t k = 0; k < mass.size(); ++k) {
      out.coefficient[r][k] = mass[k] / norm;
      out.prior[r][k] = out.coefficient[r][k] * model.concepts[r].prior[k];
    }
  }
  return out;
}

struct ConditionalUpdate {
  // [r][v-1] -> per-cluster V_v^(r)(l) and p'(l|r,v); nullopt for no-data values
  std::vector<std::vector<std::optional<std::vector<double>>>> coefficient;
  std::vector<std::vector<std::optional<std::vector<double>>>> conditional;
  std::vector<std::vector<double>> normalizer;  // per (r, v)
};

/// Conditioning of p(l|r,v) on g(C)=1. C_{r,v}(l) holds the combinations with
/// z_r = v that have at least one embedding in cluster l; each member adds its
/// full P{C=z}:
///   B(l) = sum over z in C_{r,v}(l) of pi(z) P{C=z}
///   p'(l|r,v) = B(l) p(l|r,v) / sum_l B(l) p(l|r,v)
inline ConditionalUpdate rule_update_conditionals(const ProbabilityModel& model,
                                                  const CountTables& counts, const RuleExpr& rule) {
  const auto& schema = model.schema;
  const std::size_t R = model.clusters;
  if (counts.clusters != R) throw DomainError("count tables and model disagree on cluster count");

  // B(l) for every (r, v), accumulated in one pass over the observed combinations
  std::vector<std::vector<std::vector<double>>> mass(schema.size());
  for (std::size_t r = 0; r < schema.size(); ++r) {
    mass[r].assign(schema.cardinality(r), std::vector<double>(R, 0.0));
  }
  for (const auto& [z, per_cluster] : counts.combination_clusters) {
    const auto it = model.joint.find(z);
    if (it == model.joint.end()) continue;
    const double w = truth_prob(rule, z) * it->second;
    for (std::size_t l = 0; l < R; ++l) {
      if (per_cluster[l] == 0) continue;
      for (std::size_t r = 0; r < schema.size(); ++r) mass[r][z[r] - 1][l] += w;
    }
  }

  ConditionalUpdate out;
  out.coefficient.resize(schema.size());
  out.conditional.resize(schema.size());
  out.normalizer.resize(schema.size());
  for (std::size_t r = 0; r < schema.size(); ++r) {
    const int nr = schema.cardinality(r);
    out.coefficient[r].assign(nr, std::nullopt);
    out.conditional[r].assign(nr, std::nullopt);
    out.normalizer[r].assign(nr, 0.0);
    for (int v = 1; v <= nr; ++v) {
      const auto& cond = model.conditional(r, v);
      if (!cond) continue;
      const auto& b = mass[r][v - 1];
      double norm = 0.0;
      for (std::size_t l = 0; l < R; ++l) norm += b[l] * (*cond)[l];
      if (!(norm > 0.0)) {
        throw RuleInconsistentError("rule inconsistent with data: conditional normalizer is zero for concept '" +
                                    schema.name(r) + "' value " + std::to_string(v));
      }
      out.normalizer[r][v - 1] = norm;
      std::vector<double> coef(R), updated(R);
      for (std::size_t l = 0; l < R; ++l) {
        coef[l] = b[l] / norm;
        updated[l] = coef[l] * (*cond)[l];
      }
      out.coefficient[r][v - 1] = std::move(coef);
      out.conditional[r][v - 1] = std::move(updated);
    }
  }
  return out;
}

/// The model with both priors and conditionals conditioned on the rule.
inline ProbabilityModel apply_rule(const ProbabilityModel& model, const CountTables& counts,
                                   const RuleExpr& rule) {
  const auto priors = rule_update_priors(model, rule);
  const auto conditionals = rule_update_conditionals(model, counts, rule);
  ProbabilityModel out = model;
  for (std::size_t r = 0; r < model.schema.size(); ++r) {
    out.concepts[r].prior = priors.prior[r];
    out.concepts[r].conditional = conditionals.conditional[r];
  }
  out.rule = to_string(rule, model.schema);
  return out;
}

/// P{C=z} restricted to combinations where the hard rule holds, renormalized.
inline ProbabilityModel restrict_joint(const ProbabilityModel& model, const RuleExpr& rule) {
  ProbabilityModel out = model;
  out.joint.clear();
  double total = 0.0;
  for (const auto& [z, p] : model.joint) {
    if (eval_rule(rule, z) == 1) total += p;
  }
  if (!(total > 0.0)) throw RuleInconsistentError("rule excludes every observed combination");
  for (const auto& [z, p] : model.joint) {
    if (eval_rule(rule, z) == 1) out.joint.emplace(z, p / total);
  }
  return out;
}

}  // namespace ficbl
