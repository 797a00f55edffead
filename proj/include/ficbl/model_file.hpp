#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ficbl/format.hpp"
#include "ficbl/pipeline.hpp"

namespace ficbl {

// Text model format. Counts are exact integers; reals are 17-digit decimal
// strings so that save -> load -> save is byte-identical. Probabilities are
// not stored: they are re-derived from the counts on load.

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson reals_to_json(std::span<const double> v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(format_real(x));
  return a;
}

inline std::vector<double> reals_from_json(const ojson& a) {
  std::vector<double> v;
  v.reserve(a.size());
  for (const auto& x : a) v.push_back(parse_real(x.get<std::string>()));
  return v;
}

inline ojson matrix_to_json(const Matrix& m) {
  ojson rows = ojson::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(reals_to_json(m.row(i)));
  return rows;
}

inline Matrix matrix_from_json(const ojson& rows, std::size_t cols) {
  Matrix m(0, cols);
  for (const auto& row : rows) m.append_row(reals_from_json(row));
  return m;
}

inline void check(bool ok, const std::string& what) {
  if (!ok) throw IoError("invalid model file: " + what);
}

}  // namespace detail

inline std::string serialize_model(const TrainedModel& m) {
  using detail::ojson;
  ojson j;
  j["format"] = "ficbl-model";
  j["format_version"] = kModelFormatVersion;
  j["schema"] = schema_to_json(m.schema());
  const auto& pc = m.features.patch;
  j["patch"] = {{"width", pc.patch_w}, {"height", pc.patch_h},
                {"stride_x", pc.stride_x}, {"stride_y", pc.stride_y}};
  const auto& e = m.features.embedder;
  j["embedder"] = {{"input_dim", e.input_dim()},
                   {"dim", e.dim()},
                   {"mean", detail::reals_to_json(e.mean)},
                   {"variances", detail::reals_to_json(e.variances)},
                   {"components", detail::matrix_to_json(e.components)}};
  const auto& c = m.features.clusters;
  ojson cj = {{"kind", c.kind == ClusterKind::KMeans ? "kmeans" : "gmm"},
              {"count", c.clusters()},
              {"dim", c.dim()},
              {"means", detail::matrix_to_json(c.means)}};
  if (c.kind == ClusterKind::Gmm) {
    cj["weights"] = detail::reals_to_json(c.weights);
    cj["variances"] = detail::matrix_to_json(c.variances);
  }
  j["clusters"] = cj;
  const auto& t = m.counts;
  ojson combos = ojson::array();
  for (const auto& [z, n] : t.combination_images) {
    combos.push_back({{"z", z}, {"images", n}, {"clusters", t.combination_clusters.at(z)}});
  }
  j["counts"] = {{"images", t.images},
                 {"complete_images", t.complete_images},
                 {"embeddings", t.embeddings},
                 {"cluster_sizes", t.cluster_sizes},
                 {"labeled_embeddings", t.labeled_embeddings},
                 {"value_clusters", t.value_clusters},
                 {"combinations", combos}};
  j["rules"] = m.rules;
  return j.dump(1) + "\n";
}

inline TrainedModel deserialize_model(const std::string& text) {
  using detail::check;
  using detail::ojson;
  TrainedModel m;
  try {
    const ojson j = ojson::parse(text);
    check(j.at("format") == "ficbl-model", "not a model file");
    check(j.at("format_version") == kModelFormatVersion, "unsupported format_version");
    const ConceptSchema schema = schema_from_json(j.at("schema"));

    const auto& pj = j.at("patch");
    m.features.patch = {pj.at("width"), pj.at("height"), pj.at("stride_x"), pj.at("stride_y")};

    const auto& ej = j.at("embedder");
    auto& e = m.features.embedder;
    const std::size_t input_dim = ej.at("input_dim");
    e.mean = detail::reals_from_json(ej.at("mean"));
    e.variances = detail::reals_from_json(ej.at("variances"));
    e.components = detail::matrix_from_json(ej.at("components"), input_dim);
    check(e.mean.size() == input_dim, "embedder mean size");
    check(e.components.rows() == ej.at("dim").get<std::size_t>(), "embedder dimension");
    check(input_dim == m.features.patch.patch_dim(), "embedder does not match patch size");
    for (std::size_t a = 0; a < e.dim(); ++a) {
      for (std::size_t b = a; b < e.dim(); ++b) {
        const double target = a == b ? 1.0 : 0.0;
        check(std::abs(dot(e.components.row(a), e.components.row(b)) - target) <= 1e-8,
              "embedder components are not orthonormal");
      }
    }

    const auto& cj = j.at("clusters");
    auto& c = m.features.clusters;
    const std::string kind = cj.at("kind");
    check(kind == "kmeans" || kind == "gmm", "unknown cluster kind");
    c.kind = kind == "kmeans" ? ClusterKind::KMeans : ClusterKind::Gmm;
    const std::size_t dim = cj.at("dim");
    c.means = detail::matrix_from_json(cj.at("means"), dim);
    check(c.clusters() == cj.at("count").get<std::size_t>(), "cluster count");
    check(dim == e.dim(), "cluster dimension does not match embedder");
    if (c.kind == ClusterKind::Gmm) {
      c.weights = detail::reals_from_json(cj.at("weights"));
      c.variances = detail::matrix_from_json(cj.at("variances"), dim);
      check(c.weights.size() == c.clusters() && c.variances.rows() == c.clusters(),
            "mixture parameter sizes");
      double total = 0.0;
      for (double w : c.weights) total += w;
      check(std::abs(total - 1.0) <= 1e-9, "mixture weights do not sum to 1");
      for (double v : c.variances.data()) check(v >= kVarianceFloor, "variance below floor");
    }

    const auto& tj = j.at("counts");
    auto& t = m.counts;
    t.schema = schema;
    t.clusters = c.clusters();
    t.images = tj.at("images");
    t.complete_images = tj.at("complete_images");
    t.embeddings = tj.at("embeddings");
    t.cluster_sizes = tj.at("cluster_sizes").get<std::vector<std::uint64_t>>();
    t.labeled_embeddings = tj.at("labeled_embeddings").get<std::vector<std::uint64_t>>();
    t.value_clusters =
        tj.at("value_clusters").get<std::vector<std::vector<std::vector<std::uint64_t>>>>();
    for (const auto& entry : tj.at("combinations")) {
      Combination z = entry.at("z").get<Combination>();
      validate_vector(schema, z);
      check(is_complete(z), "incomplete combination");
      t.combination_images[z] = entry.at("images");
      t.combination_clusters[z] = entry.at("clusters").get<std::vector<std::uint64_t>>();
      check(t.combination_clusters[z].size() == t.clusters, "combination cluster counts");
    }
    check(t.cluster_sizes.size() == t.clusters, "cluster_sizes length");
    std::uint64_t s = 0;
    for (auto v : t.cluster_sizes) s += v;
    check(s == t.embeddings, "cluster sizes do not sum to the embedding count");
    check(t.value_clusters.size() == schema.size() && t.labeled_embeddings.size() == schema.size(),
          "per-concept tables");
    for (std::size_t r = 0; r < schema.size(); ++r) {
      check(t.value_clusters[r].size() == static_cast<std::size_t>(schema.cardinality(r)),
            "value table size");
      std::uint64_t sr = 0;
      for (const auto& row : t.value_clusters[r]) {
        check(row.size() == t.clusters, "value table width");
        for (auto v : row) sr += v;
      }
      check(sr == t.labeled_embeddings[r], "per-concept counts do not sum to S_r");
    }
    std::uint64_t complete = 0;
    for (const auto& [z, n] : t.combination_images) complete += n;
    check(complete == t.complete_images, "combination counts do not sum to complete images");

    m.rules = j.at("rules").get<std::vector<std::string>>();
    for (const auto& rule : m.rules) parse_rule(rule, schema);
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("invalid model file: ") + ex.what());
  } catch (const DomainError& ex) {
    throw IoError(std::string("invalid model file: ") + ex.what());
  }
  return m;
}

inline void save_model(const std::string& path, const TrainedModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out << serialize_model(m);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace ficbl
