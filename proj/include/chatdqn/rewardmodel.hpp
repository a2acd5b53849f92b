#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "chatdqn/agent.hpp"
#include "chatdqn/embedding.hpp"
#include "chatdqn/neural.hpp"

namespace chatdqn {

struct NoisyDialogue {
  std::string source;
  std::vector<Sentence> sentences;  // speaking order
  int turns = 0;
  int k = 0;  // replaced agent-side responses
  int label = 0;
};

// Replaces agent-side response t when replace[t] is set, with a sentence drawn
// uniformly from sentences not used by the dialogue.
NoisyDialogue distort_dialogue_at(const SentenceBank& bank, std::size_t dialogue,
                                  const std::vector<bool>& replace, Rng& rng);

// Each agent-side response is replaced independently with probability rate.
NoisyDialogue distort_dialogue(const SentenceBank& bank, std::size_t dialogue, double rate, Rng& rng);

// per_dialogue variants for every rate and every listed dialogue, in that
// order. Each dialogue draws from its own stream derived from `seed`.
std::vector<NoisyDialogue> build_reward_dataset(const SentenceBank& bank,
                                                const std::vector<std::size_t>& dialogues,
                                                const std::vector<double>& rates, std::size_t per_dialogue,
                                                std::uint64_t seed);

void write_noisy_jsonl(std::ostream& out, const std::vector<NoisyDialogue>& data);
std::vector<NoisyDialogue> read_noisy_jsonl(std::istream& in, const std::string& source);

struct RegressorConfig {
  std::size_t hidden = 256;
  double dropout = 0.2;
  double bn_momentum = 0.99;
  std::size_t epochs = 30;
  std::size_t minibatch = 32;
  double learning_rate = 0.001;
  double holdout = 0.2;
  std::size_t max_history = 25;
  std::uint64_t seed = 1;
};

// Outputs are mapped back to label units with the training label mean and
// spread, which are fixed at training time.
struct RegressorNet {
  nn::Network net;
  double label_mean = 0.0;
  double label_scale = 1.0;
  std::size_t max_history = 25;

  double predict(const Mat& sequence) const;
  void save(BinaryWriter& w) const;
  static RegressorNet load(BinaryReader& r);
};

struct RegressorTraining {
  RegressorNet regressor;
  std::vector<double> train_loss;    // per epoch, label units
  std::vector<double> heldout_loss;  // per epoch, label units
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> heldout_index;
};

// Held-out examples are whole source dialogues so no variant of a held-out
// dialogue is seen in training.
RegressorTraining train_regressor(const std::vector<NoisyDialogue>& data, const WordEmbeddingTable& table,
                                  const RegressorConfig& cfg);

double predict_reward(const RegressorNet& net, const std::vector<Sentence>& sentences,
                      const WordEmbeddingTable& table);

// Throws std::invalid_argument on length mismatch or fewer than two values and
// std::domain_error when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace chatdqn
