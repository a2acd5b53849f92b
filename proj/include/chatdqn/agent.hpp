#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chatdqn/clustering.hpp"
#include "chatdqn/corpus.hpp"
#include "chatdqn/embedding.hpp"
#include "chatdqn/neural.hpp"

namespace chatdqn {

using SentenceId = std::uint32_t;
using StateIds = std::vector<SentenceId>;

// Distinct sentence texts of a corpus with their vectors and cluster ids.
// Dialogue i of the corpus maps to flattened ids in speaking order.
class SentenceBank {
 public:
  SentenceBank(const Corpus& corpus, const WordEmbeddingTable& table, const ClusterModel& model);

  std::size_t size() const { return sentences_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t dialogue_count() const { return dialogues_.size(); }
  const Sentence& sentence(SentenceId id) const { return sentences_[id]; }
  const Vec& vector(SentenceId id) const { return vectors_[id]; }
  std::size_t cluster(SentenceId id) const { return clusters_[id]; }
  std::optional<SentenceId> find(const std::string& text) const;
  const std::vector<SentenceId>& dialogue(std::size_t i) const { return dialogues_[i]; }
  const std::string& dialogue_id(std::size_t i) const { return dialogue_ids_[i]; }
  // Sorted distinct ids used by dialogue i.
  const std::vector<SentenceId>& members(std::size_t i) const { return members_[i]; }

  // dim x ids.size(), one column per sentence.
  Mat sequence(const StateIds& ids) const;

 private:
  std::size_t dim_;
  std::vector<Sentence> sentences_;
  std::vector<Vec> vectors_;
  std::vector<std::size_t> clusters_;
  std::vector<std::vector<SentenceId>> dialogues_;
  std::vector<std::vector<SentenceId>> members_;
  std::vector<std::string> dialogue_ids_;
  std::unordered_map<std::string, SentenceId> index_;
};

// `count` distinct bank ids drawn uniformly without replacement from ids not
// in `excluded` (sorted). Throws std::invalid_argument if the pool is too small.
std::vector<SentenceId> sample_distractors(const SentenceBank& bank, std::size_t count,
                                           const std::vector<SentenceId>& excluded, Rng& rng);

// The true response plus n - 1 distractors from other dialogues, shuffled.
std::vector<SentenceId> generate_candidates(const SentenceBank& bank, std::size_t dialogue,
                                            SentenceId truth, std::size_t n, Rng& rng);

struct CandidateSet {
  std::vector<SentenceId> ids;
  std::vector<std::size_t> clusters;   // tag per candidate
  std::vector<std::size_t> available;  // sorted distinct tags
};

CandidateSet tag_candidates(const SentenceBank& bank, std::vector<SentenceId> ids);

// Tags arbitrary sentences with their nearest sentence cluster.
std::vector<std::size_t> action_set(const std::vector<Sentence>& candidates, const ClusterModel& model,
                                    const WordEmbeddingTable& table);
std::vector<std::size_t> distinct_actions(const std::vector<std::size_t>& tags);

// Explores uniformly over `available` when a uniform draw falls below epsilon,
// otherwise restricted argmax with ties to the lowest id.
std::size_t select_action(const Vec& q_values, const std::vector<std::size_t>& available,
                          double epsilon, Rng& rng);
std::size_t greedy_action(const Vec& q_values, const std::vector<std::size_t>& available);

int step_reward(std::size_t chosen_cluster, std::size_t truth_cluster);
int step_reward(std::size_t chosen_cluster, const Sentence& truth, const ClusterModel& model,
                const WordEmbeddingTable& table);

// Index into `tags` of a uniform pick among candidates carrying `cluster`.
std::size_t realize_action(std::size_t cluster, const std::vector<std::size_t>& tags, Rng& rng);

// Candidate indices ordered by the Q-value of their cluster (ties to the lower
// cluster id). Inside a cluster the order is a sequence of uniform draws, so
// the first entry is what realize_action would pick with the same rng.
std::vector<std::size_t> rank_candidates(const Vec& q_values, const std::vector<std::size_t>& tags,
                                         Rng& rng);

enum class Variant { kDqn, kDoubleDqn, kDueling };
std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Target from precomputed next-state values. `online_next` is needed only for
// the double variant.
double td_target(double reward, bool done, const Vec& target_next, const Vec* online_next,
                 const std::vector<std::size_t>& available_next, double gamma, Variant variant);
double td_target(double reward, const Mat& s_next, bool done, const nn::Network& q_net,
                 const nn::Network& target_net, const std::vector<std::size_t>& available_next,
                 double gamma, Variant variant);

struct Experience {
  StateIds s;
  std::size_t a = 0;
  int r = 0;
  StateIds s_next;
  bool done = false;
  std::vector<std::size_t> available_next;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Uniform with replacement.
  std::vector<const Experience*> sample(std::size_t n, Rng& rng) const;
  const Experience& at(std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Experience> items_;
};

struct AgentConfig {
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t decay_steps = 0;  // 0: half of learn_steps
  std::size_t target_sync = 10000;
  std::size_t burn_in = 3000;
  std::size_t minibatch = 128;
  std::size_t learn_steps = 500000;
  std::size_t candidates = 20;
  std::size_t replay_capacity = 10000;
  std::size_t max_history = 25;
  std::size_t hidden = 256;
  double dropout = 0.2;
  double learning_rate = 0.001;
  Variant variant = Variant::kDqn;
  std::uint64_t seed = 1;
  bool append_chosen = false;
  std::size_t checkpoint_every = 0;  // episodes; 0 disables
};

// Burn-in steps use epsilon_start; after that epsilon falls linearly to
// epsilon_end over decay steps and stays there.
double epsilon_at(const AgentConfig& cfg, std::size_t step);

class ChatDQNAgent {
 public:
  ChatDQNAgent(const AgentConfig& cfg, std::size_t input_dim, std::size_t actions);

  const AgentConfig& config() const { return cfg_; }
  std::size_t actions() const { return actions_; }
  std::size_t steps_done() const { return steps_; }
  const nn::Network& q_net() const { return q_net_; }
  const nn::Network& target_net() const { return target_net_; }
  nn::Network& q_net() { return q_net_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  Vec q_values(const Mat& sequence) const { return q_net_.infer(sequence); }

  // Stores a transition and counts one environment step.
  void remember(Experience e);
  // One gradient step on a minibatch from the buffer. Returns the mean squared TD error.
  double learn(const SentenceBank& bank, Rng& rng);
  void sync_target() { target_net_ = q_net_; }

  void save(BinaryWriter& w) const;
  static ChatDQNAgent load(BinaryReader& r);

 private:
  ChatDQNAgent() : buffer_(1) {}

  AgentConfig cfg_;
  std::size_t actions_ = 0;
  nn::Network q_net_;
  nn::Network target_net_;
  ReplayBuffer buffer_;
  nn::AdamState adam_;
  std::size_t steps_ = 0;
};

struct EpisodeLog {
  std::size_t episode = 0;
  std::size_t steps = 0;
  double epsilon = 0.0;
  int reward = 0;
  std::size_t turns = 0;
};

using TrainingLog = std::vector<EpisodeLog>;

using CheckpointHook = std::function<void(const ChatDQNAgent&, std::size_t episode)>;

// Algorithm loop over `dialogues` (indices into the bank's dialogues). Runs
// burn_in + learn_steps environment steps; a trailing partial episode is not
// logged. Deterministic for a fixed config seed.
TrainingLog train(ChatDQNAgent& agent, const SentenceBank& bank, const std::vector<std::size_t>& dialogues,
                  const CheckpointHook& hook = {});

void write_training_log(std::ostream& out, const TrainingLog& log);

}  // namespace chatdqn
