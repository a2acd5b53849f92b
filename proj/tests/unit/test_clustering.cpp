#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "chatdqn/clustering.hpp"
#include "oracles.hpp"

using namespace chatdqn;

namespace {

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

std::vector<Vec> random_points(std::size_t n, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(dim);
    for (Eigen::Index j = 0; j < dim; ++j) v[j] = normal(rng);
    pts.push_back(v);
  }
  return pts;
}

}  // namespace

TEST_CASE("kmeanspp_init exhausts distinct points") {
  const std::vector<Vec> pts = {v2(0, 0), v2(1, 0), v2(0, 1), v2(1, 0), v2(5, 5)};
  Rng rng(3);
  const auto c = kmeanspp_init(pts, 4, rng);
  std::set<std::pair<double, double>> got;
  for (const auto& v : c) got.insert({v[0], v[1]});
  CHECK(got.size() == 4);
  CHECK_THROWS_AS(kmeanspp_init(pts, 5, rng), std::invalid_argument);

  const auto one = kmeanspp_init(pts, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(std::any_of(pts.begin(), pts.end(), [&](const Vec& p) { return p == one[0]; }));
}

TEST_CASE("kmeanspp_init samples proportional to squared distance") {
  const std::vector<Vec> pts = {v2(0, 0), v2(1, 0), v2(0, 2), v2(3, 3)};
  // exact joint distribution of (first, second): 1/4 * d2(j | i) / sum_k d2(k | i)
  std::map<std::pair<int, int>, double> exact;
  for (int i = 0; i < 4; ++i) {
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += (pts[k] - pts[i]).squaredNorm();
    for (int j = 0; j < 4; ++j) {
      if (j != i) exact[{i, j}] = 0.25 * (pts[j] - pts[i]).squaredNorm() / total;
    }
  }
  auto index_of = [&](const Vec& v) {
    for (int i = 0; i < 4; ++i) {
      if (pts[i] == v) return i;
    }
    return -1;
  };
  const int runs = 40000;
  std::map<std::pair<int, int>, int> freq;
  for (int s = 0; s < runs; ++s) {
    Rng rng(static_cast<std::uint64_t>(s) * 7919 + 1);
    const auto c = kmeanspp_init(pts, 2, rng);
    ++freq[{index_of(c[0]), index_of(c[1])}];
  }
  for (const auto& [key, p] : exact) {
    const double sigma = std::sqrt(p * (1 - p) / runs);
    CHECK(std::abs(freq[key] / static_cast<double>(runs) - p) < 4 * sigma + 1e-12);
  }
  CHECK(freq.size() == exact.size());
}

TEST_CASE("kmeans_fit closed forms") {
  const std::vector<Vec> pts = {v2(0, 0), v2(4, 0), v2(0, 3), v2(1, 1)};
  const auto all = kmeans_fit(pts, 4, {}, 5);
  CHECK(all.inertia == 0.0);

  const auto one = kmeans_fit(pts, 1, {}, 5);
  Vec mean = Vec::Zero(2);
  for (const auto& p : pts) mean += p;
  mean /= 4.0;
  double ss = 0.0;
  for (const auto& p : pts) ss += (p - mean).squaredNorm();
  CHECK((one.centroids[0] - mean).norm() < 1e-12);
  CHECK(one.inertia == doctest::Approx(ss).epsilon(1e-12));
}

TEST_CASE("kmeans_fit finds the exhaustive optimum on two obvious groups") {
  const std::vector<Vec> pts = {v2(0, 0), v2(0.5, 0.2), v2(0.1, 0.7),
                                v2(6, 6), v2(6.4, 5.8), v2(5.7, 6.3)};
  const double best = oracle::best_two_partition_sse(pts);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = kmeans_fit(pts, 2, {}, seed);
    CHECK(m.inertia == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("kmeans_fit inertia never increases and refits are bit-identical") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto pts = random_points(60, 3, seed + 100);
    const auto m = kmeans_fit(pts, 5, {}, seed);
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
      CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] * (1 + 1e-12));
    }
    const auto again = kmeans_fit(pts, 5, {}, seed);
    REQUIRE(again.k() == m.k());
    for (std::size_t c = 0; c < m.k(); ++c) CHECK(again.centroids[c] == m.centroids[c]);
    CHECK(again.inertia == m.inertia);
  }
}

TEST_CASE("kmeans_fit rejects bad arguments") {
  const std::vector<Vec> pts = {v2(0, 0), v2(0, 0), v2(1, 1)};
  CHECK_THROWS_AS(kmeans_fit(pts, 3, {}, 1), std::invalid_argument);
  KMeansOptions zero;
  zero.max_iter = 0;
  CHECK_THROWS_AS(kmeans_fit(pts, 1, zero, 1), std::invalid_argument);
}

TEST_CASE("kmeans_fit repairs empty clusters") {
  // Many duplicates around one location force collapsing assignments.
  std::vector<Vec> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(v2(0, 0));
  pts.push_back(v2(0.01, 0));
  pts.push_back(v2(10, 10));
  pts.push_back(v2(10.02, 10));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = kmeans_fit(pts, 4, {}, seed);
    CHECK(m.k() == 4);
    CHECK(m.inertia <= m.inertia_history.front());
  }
}

TEST_CASE("assign picks the nearest centroid with lowest-index ties") {
  ClusterModel m;
  m.centroids = {v2(0, 0), v2(-1, 0), v2(5, 5), v2(2, 2), v2(1, 0)};
  CHECK(assign(m, v2(2, 2)) == 3);
  CHECK(assign(m, v2(0, 0.5)) == 0);
  CHECK(assign(m, v2(0, 5)) == 3);
  // origin is equidistant from (-1,0) and (1,0); lowest index wins
  m.centroids = {v2(9, 9), v2(-1, 0), v2(7, 7), v2(8, 8), v2(1, 0)};
  CHECK(assign(m, v2(0, 0)) == 1);
  CHECK_THROWS_AS(assign(m, Vec::Zero(3)), std::invalid_argument);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    ClusterModel r;
    r.centroids = random_points(5, 4, seed);
    const auto x = random_points(1, 4, seed + 9999)[0];
    CHECK(assign(r, x) == oracle::nearest_by_scan(r.centroids, x));
  }
}

TEST_CASE("dialogue_features is a normalized cluster histogram") {
  // words map onto unit axes; centroids sit on the axes
  WordEmbeddingTable t(10);
  ClusterModel m;
  for (int i = 0; i < 10; ++i) {
    Vec e = Vec::Zero(10);
    e[i] = 1.0;
    t.insert("w" + std::to_string(i), e);
    m.centroids.push_back(e);
  }
  Dialogue d;
  d.id = "d";
  d.turns.push_back({make_sentence("w2"), make_sentence("w2 w2")});
  d.turns.push_back({make_sentence("w5"), make_sentence("w9")});
  const Vec f = dialogue_features(d, m, t);
  CHECK(f.size() == 10);
  CHECK(f[2] == 0.5);
  CHECK(f[5] == 0.25);
  CHECK(f[9] == 0.25);
  CHECK(f.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.minCoeff() >= 0.0);

  Dialogue all7;
  all7.turns.push_back({make_sentence("w7"), make_sentence("w7")});
  const Vec g = dialogue_features(all7, m, t);
  CHECK(g[7] == 1.0);
  CHECK(g.sum() == 1.0);

  Dialogue swapped;
  swapped.turns.push_back({make_sentence("w9"), make_sentence("w2")});
  swapped.turns.push_back({make_sentence("w5"), make_sentence("w2 w2")});
  CHECK(dialogue_features(swapped, m, t) == f);
}

TEST_CASE("pca_2d preserves planar geometry") {
  Rng rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  // orthonormal basis of a random plane in R^6
  Mat basis = Mat::Zero(6, 2);
  for (Eigen::Index i = 0; i < 6; ++i) {
    basis(i, 0) = normal(rng);
    basis(i, 1) = normal(rng);
  }
  Eigen::HouseholderQR<Mat> qr(basis);
  const Mat q = qr.householderQ() * Mat::Identity(6, 2);
  Vec offset(6);
  for (Eigen::Index i = 0; i < 6; ++i) offset[i] = normal(rng);
  std::vector<Vec> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(offset + q * Vec(v2(3 * normal(rng), normal(rng))));
  const auto p = pca_2d(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d3 = (pts[i] - pts[j]).norm();
      const double d2 = (p.row(static_cast<Eigen::Index>(i)) - p.row(static_cast<Eigen::Index>(j))).norm();
      CHECK(std::abs(d3 - d2) < 1e-6);
    }
  }
}

TEST_CASE("pca_2d on 2D input is a rigid motion of the centered data") {
  const auto pts = random_points(25, 2, 77);
  const auto p = pca_2d(pts);
  Vec mean = Vec::Zero(2);
  for (const auto& x : pts) mean += x;
  mean /= 25.0;
  Mat centered(25, 2);
  for (int i = 0; i < 25; ++i) centered.row(i) = (pts[static_cast<std::size_t>(i)] - mean).transpose();
  // least-squares map from projection back to data must be orthogonal and exact
  const Mat rot = p.colPivHouseholderQr().solve(centered);
  CHECK((p * rot - centered).norm() < 1e-8);
  CHECK((rot.transpose() * rot - Mat::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("pca_2d of identical points is all zero") {
  const std::vector<Vec> pts(5, v2(3, 4));
  CHECK(pca_2d(pts).isZero(0.0));
  CHECK_THROWS_AS(pca_2d({v2(1, 1)}), std::invalid_argument);

  std::ostringstream os;
  write_pca_csv(os, pca_2d(pts), {0, 1, 2, 3, 4});
  CHECK(os.str().rfind("x,y,label\n", 0) == 0);
}
