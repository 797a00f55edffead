#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ficbl/dataset.hpp"
#include "ficbl/error.hpp"
#include "ficbl/format.hpp"
#include "ficbl/matrix.hpp"
#include "ficbl/parallel.hpp"
#include "ficbl/random.hpp"

namespace ficbl {

/// Linear patch embedder e = components * (x - mean).
struct Embedder {
  std::vector<double> mean;       // input_dim
  Matrix components;              // dim x input_dim, orthonormal rows
  std::vector<double> variances;  // explained variance per component

  std::size_t dim() const noexcept { return components.rows(); }
  std::size_t input_dim() const noexcept { return mean.size(); }

  friend bool operator==(const Embedder&, const Embedder&) = default;
};

struct PcaOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

namespace detail {

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Removes the projections onto the first `count` rows of `basis`.
inline void orthogonalize(std::span<double> v, const Matrix& basis, std::size_t count) {
  for (std::size_t j = 0; j < count; ++j) {
    const auto u = basis.row(j);
    const double p = dot(u, v);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * u[i];
  }
}

inline void fix_sign(std::span<double> v) {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0) {
        for (double& y : v) y = -y;
      }
      return;
    }
  }
}

}  // namespace detail

/// PCA by power iteration with deflation on the sample covariance.
/// Components past the data rank are filled with canonical basis vectors
/// orthogonalized against the span found so far.
inline Embedder fit_pca(std::span<const Patch> patches, std::size_t dim, std::uint64_t seed,
                        const PcaOptions& options = {}) {
  if (dim == 0) throw DomainError("embedding size must be positive");
  if (patches.size() < dim + 1) {
    throw NumericError("PCA needs at least " + std::to_string(dim + 1) + " patches, got " +
                       std::to_string(patches.size()));
  }
  const std::size_t d = patches.front().pixels.size();
  if (dim > d) throw DomainError("embedding size exceeds patch dimension");
  const std::size_t n = patches.size();

  Embedder out;
  out.mean.assign(d, 0.0);
  for (const auto& p : patches) {
    if (p.pixels.size() != d) throw DomainError("patches differ in size");
    for (std::size_t i = 0; i < d; ++i) out.mean[i] += p.pixels[i];
  }
  for (double& m : out.mean) m /= static_cast<double>(n);

  // Centered data, one row per pixel, so covariance entries are row dot products.
  Matrix centered_t(d, n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < d; ++i) centered_t(i, k) = patches[k].pixels[i] - out.mean[i];
  }
  Matrix cov(d, d);
  parallel_for(d, [&](std::size_t i) {
    const auto xi = centered_t.row(i);
    for (std::size_t j = i; j < d; ++j) cov(i, j) = dot(xi, centered_t.row(j)) / static_cast<double>(n);
  });
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) cov(i, j) = cov(j, i);
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov(i, i);
  const double zero_level = 1e-12 * std::max(1.0, trace);

  out.components = Matrix(dim, d);
  out.variances.assign(dim, 0.0);
  Rng rng(seed);
  std::vector<double> v(d), w(d);
  std::size_t found = 0;
  for (; found < dim; ++found) {
    for (double& x : v) x = rng.uniform() - 0.5;
    detail::orthogonalize(v, out.components, found);
    double nv = detail::norm(v);
    if (nv == 0.0) break;
    for (double& x : v) x /= nv;

    double lambda = 0.0;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      parallel_for(d, [&](std::size_t i) { w[i] = dot(cov.row(i), v); });
      detail::orthogonalize(w, out.components, found);
      lambda = detail::norm(w);
      if (lambda <= zero_level) break;
      double change = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double next = w[i] / lambda;
        change += (next - v[i]) * (next - v[i]);
        v[i] = next;
      }
      if (std::sqrt(change) < options.tolerance) break;
    }
    if (lambda <= zero_level) break;
    // one more pass keeps the rows orthonormal to machine precision
    detail::orthogonalize(v, out.components, found);
    nv = detail::norm(v);
    for (double& x : v) x /= nv;
    detail::fix_sign(v);
    std::copy(v.begin(), v.end(), out.components.row(found).begin());
    out.variances[found] = lambda;
  }

  // rank-deficient data: pad with canonical directions outside the span
  for (std::size_t axis = 0; found < dim && axis < d; ++axis) {
    std::fill(v.begin(), v.end(), 0.0);
    v[axis] = 1.0;
    detail::orthogonalize(v, out.components, found);
    detail::orthogonalize(v, out.components, found);
    const double nv = detail::norm(v);
    if (nv < 1e-6) continue;
    for (double& x : v) x /= nv;
    detail::fix_sign(v);
    std::copy(v.begin(), v.end(), out.components.row(found).begin());
    out.variances[found] = 0.0;
    ++found;
  }
  return out;
}

inline std::vector<double> embed(const Embedder& embedder, std::span<const double> pixels) {
  if (pixels.size() != embedder.input_dim()) {
    throw DomainError("patch has " + std::to_string(pixels.size()) + " pixels, embedder expects " +
                      std::to_string(embedder.input_dim()));
  }
  std::vector<double> centered(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) centered[i] = pixels[i] - embedder.mean[i];
  std::vector<double> e(embedder.dim());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = dot(embedder.components.row(k), centered);
  return e;
}

inline std::vector<double> embed(const Embedder& embedder, const Patch& patch) {
  return embed(embedder, std::span<const double>(patch.pixels));
}

/// Embeds every patch, one output row per patch, in input order.
inline Matrix embed_all(const Embedder& embedder, std::span<const Patch> patches) {
  Matrix out(patches.size(), embedder.dim());
  parallel_for(patches.size(), [&](std::size_t i) {
    const auto e = embed(embedder, patches[i]);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  });
  return out;
}

/// Squared reconstruction error of projecting onto the embedder's subspace.
inline double reconstruction_error(const Embedder& embedder, std::span<const double> pixels) {
  const auto e = embed(embedder, pixels);
  double err = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    double rec = embedder.mean[i];
    for (std::size_t k = 0; k < e.size(); ++k) rec += e[k] * embedder.components(k, i);
    err += (pixels[i] - rec) * (pixels[i] - rec);
  }
  return err;
}

// ---------------------------------------------------------------------------
// External embeddings: CSV with header image_id,patch_id,e0,...,e{d-1}

using EmbeddingKey = std::pair<std::size_t, std::size_t>;
using EmbeddingTable = std::map<EmbeddingKey, std::vector<double>>;

inline EmbeddingTable load_external_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("embeddings file '" + path + "' is empty");
  EmbeddingTable table;
  std::size_t dim = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) throw IoError("line " + std::to_string(line_no) + ": too few columns");
    const std::size_t row_dim = cells.size() - 2;
    if (table.empty()) {
      dim = row_dim;
    } else if (row_dim != dim) {
      throw IoError("line " + std::to_string(line_no) + ": ragged row (" +
                    std::to_string(row_dim) + " values, expected " + std::to_string(dim) + ")");
    }
    EmbeddingKey key;
    std::vector<double> values(row_dim);
    try {
      key = {std::stoull(cells[0]), std::stoull(cells[1])};
      for (std::size_t k = 0; k < row_dim; ++k) values[k] = parse_real(cells[k + 2]);
    } catch (const std::exception&) {
      throw IoError("line " + std::to_string(line_no) + ": non-numeric cell");
    }
    if (!table.emplace(key, std::move(values)).second) {
      throw IoError("duplicate embedding key (image " + std::to_string(key.first) + ", patch " +
                    std::to_string(key.second) + ")");
    }
  }
  return table;
}

inline void write_embeddings_csv(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const std::size_t dim = table.empty() ? 0 : table.begin()->second.size();
  out << "image_id,patch_id";
  for (std::size_t k = 0; k < dim; ++k) out << ",e" << k;
  out << '\n';
  for (const auto& [key, values] : table) {
    out << key.first << ',' << key.second;
    for (double x : values) out << ',' << format_real(x);
    out << '\n';
  }
}

}  // namespace ficbl
