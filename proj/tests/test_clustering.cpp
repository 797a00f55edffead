#include <gtest/gtest.h>

#include <set>

#include "ficbl/clustering.hpp"
#include "ficbl/random.hpp"

using namespace ficbl;

namespace {

// Gaussian-ish blobs via sums of uniforms, centers 20 apart on a diagonal.
Matrix blobs(std::size_t k, std::size_t per, std::size_t dim, double spread, std::uint64_t seed,
             std::vector<std::size_t>* truth = nullptr) {
  Rng rng(seed);
  Matrix m(0, dim);
  for (std::size_t i = 0; i < per; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> x(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        double noise = 0.0;
        for (int u = 0; u < 12; ++u) noise += rng.uniform();
        x[j] = 20.0 * static_cast<double>(c) * (j % 2 ? 1.0 : -1.0) + spread * (noise - 6.0);
      }
      m.append_row(x);
      if (truth) truth->push_back(c);
    }
  }
  return m;
}

double inertia(const ClusterModel& m, const Matrix& pts) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i) s += squared_distance(pts.row(i), m.means.row(assign(m, pts.row(i))));
  return s;
}

// Each true blob maps to exactly one cluster and vice versa.
void expect_recovers(const ClusterModel& m, const Matrix& pts, const std::vector<std::size_t>& truth, std::size_t k) {
  std::vector<std::set<std::size_t>> seen(k);
  for (std::size_t i = 0; i < pts.rows(); ++i) seen[truth[i]].insert(assign(m, pts.row(i)));
  std::set<std::size_t> used;
  for (const auto& s : seen) {
    ASSERT_EQ(s.size(), 1u);
    used.insert(*s.begin());
  }
  EXPECT_EQ(used.size(), k);
}

}  // namespace

TEST(KMeans, SeparatedBlobs) {
  std::vector<std::size_t> truth;
  const Matrix pts = blobs(4, 30, 3, 1.0, 1, &truth);
  const auto m = fit_kmeans(pts, 4, 7);
  EXPECT_EQ(m.kind, ClusterKind::KMeans);
  expect_recovers(m, pts, truth, 4);
  // objective equals the within-blob scatter
  double scatter = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> mean(3, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      if (truth[i] != c) continue;
      for (std::size_t j = 0; j < 3; ++j) mean[j] += pts(i, j);
      ++n;
    }
    for (auto& x : mean) x /= static_cast<double>(n);
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      if (truth[i] == c) scatter += squared_distance(pts.row(i), mean);
    }
  }
  EXPECT_NEAR(inertia(m, pts), scatter, 1e-8 * scatter);
}

TEST(KMeans, OnePointPerCluster) {
  const Matrix pts = blobs(1, 7, 2, 5.0, 2);
  const auto m = fit_kmeans(pts, 7, 3);
  EXPECT_NEAR(inertia(m, pts), 0.0, 1e-20);
}

TEST(KMeans, DeterministicAndMonotone) {
  const Matrix pts = blobs(5, 40, 4, 8.0, 3);
  FitTrace trace;
  const auto a = fit_kmeans(pts, 6, 11, {}, &trace);
  EXPECT_EQ(a, fit_kmeans(pts, 6, 11));
  ASSERT_GE(trace.objective.size(), 2u);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) {
    EXPECT_LE(trace.objective[i], trace.objective[i - 1] * (1 + 1e-12));
  }
}

TEST(KMeans, DuplicatePointsKeepAllClusters) {
  Matrix pts(0, 2);
  for (int i = 0; i < 10; ++i) pts.append_row(std::vector<double>{0.0, 0.0});
  pts.append_row(std::vector<double>{1.0, 1.0});
  pts.append_row(std::vector<double>{2.0, 5.0});
  const auto m = fit_kmeans(pts, 3, 1);
  EXPECT_EQ(m.clusters(), 3u);
  EXPECT_NEAR(inertia(m, pts), 0.0, 1e-20);
}

TEST(KMeans, Errors) {
  const Matrix pts = blobs(1, 3, 2, 1.0, 4);
  EXPECT_THROW(fit_kmeans(pts, 4, 1), NumericError);
  EXPECT_THROW(fit_kmeans(pts, 0, 1), DomainError);
  EXPECT_THROW(fit_em_gmm(pts, 4, 1), NumericError);
}

TEST(Em, SeparatedBlobsHaveConfidentResponsibilities) {
  std::vector<std::size_t> truth;
  const Matrix pts = blobs(2, 100, 2, 1.0, 5, &truth);
  const auto m = fit_em_gmm(pts, 2, 3);
  EXPECT_EQ(m.kind, ClusterKind::Gmm);
  expect_recovers(m, pts, truth, 2);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    const auto r = responsibilities(m, pts.row(i));
    EXPECT_GE(r[assign(m, pts.row(i))], 0.99);
  }
  double w = 0.0;
  for (double x : m.weights) w += x;
  EXPECT_NEAR(w, 1.0, 1e-9);
}

TEST(Em, SingleComponentIsClosedForm) {
  const Matrix pts = blobs(3, 20, 3, 2.0, 6);
  const auto m = fit_em_gmm(pts, 1, 1);
  const double n = static_cast<double>(pts.rows());
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < pts.rows(); ++i) mean += pts(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < pts.rows(); ++i) var += (pts(i, j) - mean) * (pts(i, j) - mean);
    var /= n;
    EXPECT_NEAR(m.means(0, j), mean, 1e-9);
    EXPECT_NEAR(m.variances(0, j), std::max(var, kVarianceFloor), 1e-9 * var);
  }
  EXPECT_DOUBLE_EQ(m.weights[0], 1.0);
}

TEST(Em, DeterministicMonotoneAndFloored) {
  Matrix pts = blobs(4, 50, 3, 6.0, 7);
  for (int i = 0; i < 20; ++i) pts.append_row(std::vector<double>{100.0, 100.0, 100.0});
  FitTrace trace;
  const auto a = fit_em_gmm(pts, 6, 2, {}, &trace);
  EXPECT_EQ(a, fit_em_gmm(pts, 6, 2));
  ASSERT_GE(trace.objective.size(), 2u);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) {
    EXPECT_GE(trace.objective[i], trace.objective[i - 1] - 1e-9 * std::abs(trace.objective[i - 1]));
  }
  for (double v : a.variances.data()) EXPECT_GE(v, kVarianceFloor);
}

TEST(Assign, CentersAndTies) {
  ClusterModel m;
  m.kind = ClusterKind::KMeans;
  m.means = Matrix(0, 2);
  m.means.append_row(std::vector<double>{0.0, 0.0});
  m.means.append_row(std::vector<double>{2.0, 0.0});
  m.means.append_row(std::vector<double>{5.0, 5.0});
  m.means.append_row(std::vector<double>{9.0, 1.0});
  EXPECT_EQ(assign(m, std::vector<double>{5.0, 5.0}), 2u);
  EXPECT_EQ(assign(m, std::vector<double>{1.0, 0.0}), 0u);
  EXPECT_THROW(assign(m, std::vector<double>{1.0}), DomainError);

  ClusterModel g = m;
  g.kind = ClusterKind::Gmm;
  g.weights.assign(4, 0.25);
  g.variances = Matrix(4, 2, 1.0);
  EXPECT_EQ(assign(g, std::vector<double>{1.0, 0.0}), 0u);
  EXPECT_EQ(assign(g, std::vector<double>{9.0, 1.0}), 3u);
}

TEST(Assign, BatchIsPointwise) {
  const Matrix pts = blobs(3, 20, 2, 3.0, 8);
  const auto m = fit_em_gmm(pts, 3, 1);
  const auto all = assign_all(m, pts);
  for (std::size_t i = 0; i < pts.rows(); ++i) EXPECT_EQ(all[i], assign(m, pts.row(i)));
  Matrix rev(0, 2);
  for (std::size_t i = pts.rows(); i-- > 0;) rev.append_row(pts.row(i));
  const auto back = assign_all(m, rev);
  for (std::size_t i = 0; i < pts.rows(); ++i) EXPECT_EQ(back[pts.rows() - 1 - i], all[i]);
}
