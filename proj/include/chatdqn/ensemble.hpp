#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "chatdqn/agent.hpp"
#include "chatdqn/clustering.hpp"
#include "chatdqn/rewardmodel.hpp"

namespace chatdqn {

struct EnsembleMember {
  std::size_t dialogue_cluster = 0;
  ChatDQNAgent agent;
  TrainingLog log;
};

struct Ensemble {
  ClusterModel sentence_model;
  ClusterModel dialogue_model;
  std::vector<EnsembleMember> members;
  std::vector<std::size_t> empty_clusters;
  RegressorNet regressor;

  void save(BinaryWriter& w) const;
  static Ensemble load(BinaryReader& r);
};

void save_training_log(BinaryWriter& w, const TrainingLog& log);
TrainingLog load_training_log(BinaryReader& r);

struct EnsembleOptions {
  std::size_t dialogue_clusters = 100;
  KMeansOptions kmeans;
  std::uint64_t cluster_seed = 1;
  std::size_t threads = 0;  // 0: hardware concurrency
};

// Dialogue cluster of every dialogue in the bank's corpus.
std::vector<std::size_t> dialogue_partition(const Corpus& corpus, const ClusterModel& sentence_model,
                                            const ClusterModel& dialogue_model, const WordEmbeddingTable& table);

// One agent per nonempty dialogue cluster. Member seeds are cfg.seed plus the
// cluster id, so a single cluster reproduces the single agent exactly.
Ensemble train_ensemble(const Corpus& corpus, const SentenceBank& bank, const WordEmbeddingTable& table,
                        const ClusterModel& sentence_model, RegressorNet regressor, const AgentConfig& cfg,
                        const EnsembleOptions& opts);
// Same with a dialogue model fitted beforehand.
Ensemble train_ensemble(const Corpus& corpus, const SentenceBank& bank, const WordEmbeddingTable& table,
                        const ClusterModel& sentence_model, ClusterModel dialogue_model, RegressorNet regressor,
                        const AgentConfig& cfg, std::size_t threads = 0);

// Score for member i given its trajectory (history plus its proposal).
using MemberScorer = std::function<double(std::size_t member, const Mat& trajectory)>;

struct Proposal {
  std::vector<std::size_t> ranking;  // candidate indices
  Rng rng_after;                     // stream state after ranking
};

Proposal propose(const ChatDQNAgent& agent, const Mat& history, const CandidateSet& cands, const Rng& rng);

// Most recent `cap` columns of a history with `next` appended.
Mat extend_history(const Mat& history, const Vec& next, std::size_t cap);

struct Selection {
  std::size_t member = 0;
  std::vector<double> scores;
  std::vector<Proposal> proposals;
};

// Every member ranks the shared candidates from its own copy of `rng`; the
// member whose trajectory scores highest wins, ties to the lowest index.
Selection select_agent(const Ensemble& e, const SentenceBank& bank, const Mat& history, const CandidateSet& cands,
                       const Rng& rng, const MemberScorer& scorer = {});

struct Response {
  std::size_t candidate = 0;  // index into the candidate set
  SentenceId sentence = 0;
  std::size_t member = 0;
  double predicted_reward = 0.0;
  std::vector<std::size_t> ranking;
};

// Selects a member and returns its greedy pick. `rng` advances as the chosen
// member's copy did.
Response respond(const Ensemble& e, const SentenceBank& bank, const Mat& history, const CandidateSet& cands,
                 Rng& rng, const MemberScorer& scorer = {});

// Same with the member fixed in advance.
Response respond_with(const Ensemble& e, std::size_t member, const SentenceBank& bank, const Mat& history,
                      const CandidateSet& cands, Rng& rng);

}  // namespace chatdqn
