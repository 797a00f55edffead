#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ficbl/error.hpp"

namespace ficbl {

/// Sentinel for an unlabeled concept. Concept values are 1-based.
inline constexpr int kMissing = 0;

/// One value per concept, concept 0 first. Entries are in 1..n_r or kMissing.
using ConceptVector = std::vector<int>;

/// A fully specified ConceptVector: one element of the Cartesian product of
/// all outcome sets.
using Combination = std::vector<int>;

struct Concept {
  std::string name;
  int cardinality = 2;

  friend bool operator==(const Concept&, const Concept&) = default;
};

/// Ordered concept list. Index 0 is the target concept.
class ConceptSchema {
 public:
  ConceptSchema() = default;

  explicit ConceptSchema(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
    if (concepts_.empty()) throw DomainError("schema has no concepts");
    std::set<std::string> seen;
    for (const auto& c : concepts_) {
      if (c.name.empty()) throw DomainError("concept name is empty");
      if (c.cardinality < 2) {
        throw DomainError("concept '" + c.name + "' needs at least 2 values");
      }
      if (!seen.insert(c.name).second) {
        throw DomainError("duplicate concept name '" + c.name + "'");
      }
    }
  }

  std::size_t size() const noexcept { return concepts_.size(); }
  const Concept& operator[](std::size_t r) const { return concepts_.at(r); }
  int cardinality(std::size_t r) const { return concepts_.at(r).cardinality; }
  const std::string& name(std::size_t r) const { return concepts_.at(r).name; }
  const std::vector<Concept>& concepts() const noexcept { return concepts_; }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t r = 0; r < concepts_.size(); ++r) {
      if (concepts_[r].name == name) return r;
    }
    return std::nullopt;
  }

  /// Product of all cardinalities.
  std::uint64_t combination_count() const {
    std::uint64_t n = 1;
    for (const auto& c : concepts_) n *= static_cast<std::uint64_t>(c.cardinality);
    return n;
  }

  bool contains(std::size_t r, int v) const {
    return r < concepts_.size() && v >= 1 && v <= concepts_[r].cardinality;
  }

  friend bool operator==(const ConceptSchema&, const ConceptSchema&) = default;

 private:
  std::vector<Concept> concepts_;
};

inline void validate_vector(const ConceptSchema& schema, const ConceptVector& values) {
  if (values.size() != schema.size()) {
    throw DomainError("concept vector has " + std::to_string(values.size()) +
                      " entries, schema has " + std::to_string(schema.size()));
  }
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (values[r] != kMissing && !schema.contains(r, values[r])) {
      throw DomainError("value " + std::to_string(values[r]) + " out of range for concept '" +
                        schema.name(r) + "'");
    }
  }
}

inline bool is_complete(const ConceptVector& values) {
  for (int v : values) {
    if (v == kMissing) return false;
  }
  return true;
}

namespace detail {

// Odometer increment with concept 0 most significant. Returns false on wrap.
inline bool next_combination(const ConceptSchema& schema, Combination& z,
                             std::optional<std::size_t> fixed = std::nullopt) {
  for (std::size_t k = schema.size(); k-- > 0;) {
    if (fixed && *fixed == k) continue;
    if (z[k] < schema.cardinality(k)) {
      ++z[k];
      return true;
    }
    z[k] = 1;
  }
  return false;
}

}  // namespace detail

/// All combinations in lexicographic order, concept 0 most significant.
inline std::vector<Combination> enumerate_combinations(const ConceptSchema& schema) {
  std::vector<Combination> out;
  out.reserve(schema.combination_count());
  Combination z(schema.size(), 1);
  do {
    out.push_back(z);
  } while (detail::next_combination(schema, z));
  return out;
}

/// The combinations with concept r fixed to v, in lexicographic order.
inline std::vector<Combination> restrict_combinations(const ConceptSchema& schema,
                                                      std::size_t r, int v) {
  if (!schema.contains(r, v)) {
    throw DomainError("value " + std::to_string(v) + " out of range for concept " +
                      std::to_string(r));
  }
  std::vector<Combination> out;
  out.reserve(schema.combination_count() / schema.cardinality(r));
  Combination z(schema.size(), 1);
  z[r] = v;
  do {
    out.push_back(z);
  } while (detail::next_combination(schema, z, r));
  return out;
}

/// Image count per observed combination.
inline std::map<Combination, std::uint64_t> combination_counts(
    const std::vector<ConceptVector>& labels, const ConceptSchema& schema) {
  std::map<Combination, std::uint64_t> counts;
  for (const auto& label : labels) {
    validate_vector(schema, label);
    if (!is_complete(label)) throw DomainError("label has missing concept values");
    ++counts[label];
  }
  return counts;
}

/// P{C=z} = N_z / N over the observed combinations. Unobserved combinations
/// are absent (probability zero).
inline std::map<Combination, double> empirical_joint(const std::vector<ConceptVector>& labels,
                                                     const ConceptSchema& schema) {
  if (labels.empty()) throw DomainError("empirical joint of an empty label list");
  const auto counts = combination_counts(labels, schema);
  std::map<Combination, double> joint;
  const double n = static_cast<double>(labels.size());
  for (const auto& [z, count] : counts) joint.emplace(z, static_cast<double>(count) / n);
  return joint;
}

}  // namespace ficbl
