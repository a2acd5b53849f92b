#include "chatdqn/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace chatdqn {

namespace {

bool lex_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

double nearest_sq(const std::vector<Vec>& centroids, const Vec& x, std::size_t* index) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const double d = (centroids[i] - x).squaredNorm();
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  if (index) *index = best_i;
  return best;
}

}  // namespace

std::size_t count_distinct(const std::vector<Vec>& points) {
  std::vector<const Vec*> ptrs;
  ptrs.reserve(points.size());
  for (const auto& p : points) ptrs.push_back(&p);
  std::sort(ptrs.begin(), ptrs.end(), [](const Vec* a, const Vec* b) { return lex_less(*a, *b); });
  std::size_t n = 0;
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    if (i == 0 || *ptrs[i] != *ptrs[i - 1]) ++n;
  }
  return n;
}

std::vector<Vec> kmeanspp_init(const std::vector<Vec>& points, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  const std::size_t distinct = count_distinct(points);
  if (k > distinct) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(distinct) + " distinct points");
  }
  std::vector<Vec> centroids;
  centroids.reserve(k);
  centroids.push_back(points[uniform_index(rng, points.size())]);

  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = (points[i] - centroids[0]).squaredNorm();

  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    double u = uniform01(rng) * total;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      if (u < d2[i]) break;
      u -= d2[i];
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], (points[i] - centroids.back()).squaredNorm());
    }
  }
  return centroids;
}

ClusterModel kmeans_fit(const std::vector<Vec>& points, std::size_t k, const KMeansOptions& opts,
                        std::uint64_t seed) {
  if (opts.max_iter == 0) throw std::invalid_argument("max_iter must be at least 1");
  Rng rng(seed);
  ClusterModel model;
  model.seed = seed;
  model.centroids = kmeanspp_init(points, k, rng);
  const auto dim = points.front().size();

  std::vector<std::size_t> labels(points.size());
  std::vector<double> dist(points.size());
  auto assign_all = [&] {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist[i] = nearest_sq(model.centroids, points[i], &labels[i]);
      inertia += dist[i];
    }
    return inertia;
  };

  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    model.inertia_history.push_back(assign_all());

    std::vector<Vec> sums(k, Vec::Zero(dim));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[labels[i]] += points[i];
      ++counts[labels[i]];
    }
    std::vector<bool> taken(points.size(), false);
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      Vec next;
      if (counts[c] > 0) {
        next = sums[c] / static_cast<double>(counts[c]);
      } else {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          if (!taken[i] && dist[i] > far_d) {
            far_d = dist[i];
            far = i;
          }
        }
        taken[far] = true;
        next = points[far];
      }
      shift = std::max(shift, (next - model.centroids[c]).norm());
      model.centroids[c] = std::move(next);
    }
    if (shift < opts.tol) break;
  }
  model.inertia = assign_all();
  model.inertia_history.push_back(model.inertia);
  return model;
}

std::size_t assign(const ClusterModel& model, const Vec& x) {
  if (model.centroids.empty()) throw std::invalid_argument("cluster model has no centroids");
  if (static_cast<std::size_t>(x.size()) != model.dim()) {
    throw std::invalid_argument("point dimension " + std::to_string(x.size()) +
                                " does not match centroid dimension " +
                                std::to_string(model.dim()));
  }
  std::size_t idx = 0;
  nearest_sq(model.centroids, x, &idx);
  return idx;
}

Vec dialogue_features(const Dialogue& d, const ClusterModel& sentence_model,
                      const WordEmbeddingTable& table) {
  Vec h = Vec::Zero(static_cast<Eigen::Index>(sentence_model.k()));
  const auto sentences = d.flattened();
  for (const auto* s : sentences) {
    h[static_cast<Eigen::Index>(assign(sentence_model, sentence_vector(s->tokens, table)))] += 1.0;
  }
  if (!sentences.empty()) h /= static_cast<double>(sentences.size());
  return h;
}

std::vector<Vec> unique_sentence_vectors(const Corpus& corpus, const WordEmbeddingTable& table) {
  std::map<std::string, const Sentence*> uniq;
  for (const auto& d : corpus.dialogues) {
    for (const Sentence* s : d.flattened()) uniq.emplace(s->text, s);
  }
  std::vector<Vec> out;
  out.reserve(uniq.size());
  for (const auto& [text, s] : uniq) out.push_back(sentence_vector(s->tokens, table));
  return out;
}

ClusterModel fit_sentence_clusters(const Corpus& corpus, const WordEmbeddingTable& table, std::size_t k,
                                   const KMeansOptions& opts, std::uint64_t seed) {
  return kmeans_fit(unique_sentence_vectors(corpus, table), k, opts, seed);
}

std::vector<Vec> dialogue_feature_matrix(const Corpus& corpus, const ClusterModel& sentence_model,
                                         const WordEmbeddingTable& table) {
  std::vector<Vec> out;
  out.reserve(corpus.dialogues.size());
  for (const auto& d : corpus.dialogues) out.push_back(dialogue_features(d, sentence_model, table));
  return out;
}

ClusterModel fit_dialogue_clusters(const Corpus& corpus, const ClusterModel& sentence_model,
                                   const WordEmbeddingTable& table, std::size_t k,
                                   const KMeansOptions& opts, std::uint64_t seed) {
  return kmeans_fit(dialogue_feature_matrix(corpus, sentence_model, table), k, opts, seed);
}

void save_cluster_model(BinaryWriter& w, const ClusterModel& model) {
  w.str("clusters");
  w.u64(model.seed);
  w.f64(model.inertia);
  w.u64(model.centroids.size());
  for (const auto& c : model.centroids) w.vec(c);
  w.u64(model.inertia_history.size());
  for (double v : model.inertia_history) w.f64(v);
}

ClusterModel load_cluster_model(BinaryReader& r) {
  r.expect("clusters");
  ClusterModel m;
  m.seed = r.u64();
  m.inertia = r.f64();
  const auto k = r.u64();
  if (k > (1ULL << 24)) throw std::runtime_error("corrupt cluster count in binary data");
  for (std::uint64_t i = 0; i < k; ++i) m.centroids.push_back(r.vec());
  const auto n = r.u64();
  if (n > (1ULL << 24)) throw std::runtime_error("corrupt inertia history in binary data");
  for (std::uint64_t i = 0; i < n; ++i) m.inertia_history.push_back(r.f64());
  return m;
}

namespace {

// Dominant eigenvector of a symmetric PSD matrix, kept orthogonal to `against`.
Vec power_iteration(const Mat& c, const Vec* against) {
  constexpr double kTol = 1e-10;
  constexpr int kMaxIter = 100000;
  const auto m = c.rows();
  Vec v(m);
  for (Eigen::Index i = 0; i < m; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  auto orthogonalize = [&](Vec& x) {
    if (against) x -= against->dot(x) * *against;
  };
  orthogonalize(v);
  if (v.norm() == 0.0) return Vec::Zero(m);
  v.normalize();
  for (int it = 0; it < kMaxIter; ++it) {
    Vec w = c * v;
    orthogonalize(w);
    const double n = w.norm();
    if (n <= 1e-300) return Vec::Zero(m);
    w /= n;
    const double delta = (w - v).norm();
    v = std::move(w);
    if (delta < kTol) break;
  }
  return v;
}

}  // namespace

Eigen::MatrixX2d pca_2d(const std::vector<Vec>& points) {
  if (points.size() < 2) throw std::invalid_argument("pca_2d needs at least 2 points");
  const auto m = points.front().size();
  const auto n = static_cast<Eigen::Index>(points.size());
  Mat x(n, m);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = points[static_cast<std::size_t>(i)].transpose();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Mat cov = (x.transpose() * x) / static_cast<double>(n - 1);

  const double scale = cov.trace();
  Eigen::MatrixX2d out = Eigen::MatrixX2d::Zero(n, 2);
  if (scale <= 0.0) return out;

  const double floor = 1e-12 * scale;
  Vec v1 = power_iteration(cov, nullptr);
  const double l1 = v1.dot(cov * v1);
  if (l1 <= floor) return out;
  out.col(0) = x * v1;

  Mat deflated = cov - l1 * v1 * v1.transpose();
  Vec v2 = power_iteration(deflated, &v1);
  const double l2 = v2.dot(cov * v2);
  if (l2 > floor) out.col(1) = x * v2;
  return out;
}

void write_pca_csv(std::ostream& out, const Eigen::MatrixX2d& coords,
                   const std::vector<std::size_t>& labels) {
  out << "x,y,label\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    out << coords(i, 0) << ',' << coords(i, 1) << ','
        << (static_cast<std::size_t>(i) < labels.size() ? labels[static_cast<std::size_t>(i)] : 0)
        << '\n';
  }
}

}  // namespace chatdqn
