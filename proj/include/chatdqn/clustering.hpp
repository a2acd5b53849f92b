#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "chatdqn/binary_io.hpp"
#include "chatdqn/common.hpp"
#include "chatdqn/corpus.hpp"
#include "chatdqn/embedding.hpp"

namespace chatdqn {

struct ClusterModel {
  std::vector<Vec> centroids;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  // Inertia after each assignment pass, in iteration order.
  std::vector<double> inertia_history;

  std::size_t k() const { return centroids.size(); }
  std::size_t dim() const { return centroids.empty() ? 0 : static_cast<std::size_t>(centroids[0].size()); }
};

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;
};

std::size_t count_distinct(const std::vector<Vec>& points);

// D^2 seeding. Throws std::invalid_argument if k exceeds the number of
// distinct points.
std::vector<Vec> kmeanspp_init(const std::vector<Vec>& points, std::size_t k, Rng& rng);

// Lloyd iterations from a K-Means++ start. An emptied cluster is reseeded at
// the point farthest from its assigned centroid.
ClusterModel kmeans_fit(const std::vector<Vec>& points, std::size_t k, const KMeansOptions& opts,
                        std::uint64_t seed);

// Nearest centroid by Euclidean distance; ties go to the lowest index.
std::size_t assign(const ClusterModel& model, const Vec& x);

// Normalized histogram of sentence-cluster ids over all sentences of a dialogue.
Vec dialogue_features(const Dialogue& d, const ClusterModel& sentence_model,
                      const WordEmbeddingTable& table);

// Sentence vectors of every distinct sentence text, ordered by text.
std::vector<Vec> unique_sentence_vectors(const Corpus& corpus, const WordEmbeddingTable& table);

ClusterModel fit_sentence_clusters(const Corpus& corpus, const WordEmbeddingTable& table, std::size_t k,
                                   const KMeansOptions& opts, std::uint64_t seed);

std::vector<Vec> dialogue_feature_matrix(const Corpus& corpus, const ClusterModel& sentence_model,
                                         const WordEmbeddingTable& table);

ClusterModel fit_dialogue_clusters(const Corpus& corpus, const ClusterModel& sentence_model,
                                   const WordEmbeddingTable& table, std::size_t k,
                                   const KMeansOptions& opts, std::uint64_t seed);

void save_cluster_model(BinaryWriter& w, const ClusterModel& model);
ClusterModel load_cluster_model(BinaryReader& r);

// Projection onto the top two principal components, found by power iteration
// with deflation. Returns one (x, y) row per point.
Eigen::MatrixX2d pca_2d(const std::vector<Vec>& points);

void write_pca_csv(std::ostream& out, const Eigen::MatrixX2d& coords,
                   const std::vector<std::size_t>& labels);

}  // namespace chatdqn
