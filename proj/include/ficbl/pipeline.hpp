#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ficbl/clustering.hpp"
#include "ficbl/dataset.hpp"
#include "ficbl/embedding.hpp"
#include "ficbl/freq_model.hpp"
#include "ficbl/inference.hpp"
#include "ficbl/parallel.hpp"
#include "ficbl/random.hpp"
#include "ficbl/rules.hpp"

namespace ficbl {

enum class ClusterAlgorithm { KMeans, Em };

struct TrainConfig {
  PatchConfig patch;
  std::size_t embed_dim = 16;
  std::size_t clusters = 80;
  ClusterAlgorithm algorithm = ClusterAlgorithm::Em;
  std::uint64_t seed = 0;
};

/// The label-independent part of a trained model.
struct FeatureModel {
  PatchConfig patch;
  Embedder embedder;
  ClusterModel clusters;

  friend bool operator==(const FeatureModel&, const FeatureModel&) = default;
};

struct TrainedModel {
  FeatureModel features;
  CountTables counts;
  std::vector<std::string> rules;  // active rules, DSL text

  const ConceptSchema& schema() const { return counts.schema; }

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

inline std::vector<Patch> dataset_patches(const Dataset& data, const PatchConfig& cfg) {
  std::vector<Patch> all;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto p = extract_patches(data.records[i].image, cfg, i);
    std::move(p.begin(), p.end(), std::back_inserter(all));
  }
  return all;
}

/// Fits the embedder and the clusters on every training patch.
inline FeatureModel fit_features(const Dataset& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw DomainError("cannot train on an empty dataset");
  FeatureModel f;
  f.patch = cfg.patch;
  const auto patches = dataset_patches(data, cfg.patch);
  if (patches.size() < cfg.clusters) {
    throw NumericError("cannot form " + std::to_string(cfg.clusters) + " clusters from " +
                       std::to_string(patches.size()) + " patches");
  }
  f.embedder = fit_pca(patches, cfg.embed_dim, derive_seed(cfg.seed, 1));
  const Matrix embeddings = embed_all(f.embedder, patches);
  f.clusters = cfg.algorithm == ClusterAlgorithm::KMeans
                   ? fit_kmeans(embeddings, cfg.clusters, derive_seed(cfg.seed, 2))
                   : fit_em_gmm(embeddings, cfg.clusters, derive_seed(cfg.seed, 2));
  return f;
}

/// Cluster index of every patch of every image.
inline std::vector<std::vector<std::size_t>> assign_images(const FeatureModel& f, const Dataset& data) {
  std::vector<std::vector<std::size_t>> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto patches = extract_patches(data.records[i].image, f.patch, i);
    out[i].reserve(patches.size());
    for (const auto& p : patches) out[i].push_back(assign(f.clusters, embed(f.embedder, p)));
  });
  return out;
}

inline std::vector<Occupancy> occupancies(const FeatureModel& f, const Dataset& data) {
  const auto assigned = assign_images(f, data);
  std::vector<Occupancy> out;
  out.reserve(assigned.size());
  for (const auto& a : assigned) out.push_back(Occupancy::from_assignments(a, f.clusters.clusters()));
  return out;
}

inline TrainedModel train(const Dataset& data, const TrainConfig& cfg) {
  TrainedModel m;
  m.features = fit_features(data, cfg);
  m.counts = fit_counts(assign_images(m.features, data), data.labels(), cfg.clusters, data.schema);
  return m;
}

/// The probability model of a trained model with its active rules applied.
inline ProbabilityModel effective_model(const TrainedModel& m,
                                        const std::vector<RuleExpr>& extra_rules = {}) {
  std::vector<RuleExpr> rules;
  for (const auto& text : m.rules) rules.push_back(parse_rule(text, m.schema()));
  rules.insert(rules.end(), extra_rules.begin(), extra_rules.end());
  ProbabilityModel pm = probability_model(m.counts);
  if (auto g = combine_rules(rules)) pm = apply_rule(pm, m.counts, *g);
  return pm;
}

}  // namespace ficbl
