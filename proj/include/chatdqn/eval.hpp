#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "chatdqn/agent.hpp"
#include "chatdqn/ensemble.hpp"

namespace chatdqn {

// Token-multiset F1 between a predicted and a reference sentence. Two empty
// token lists score 1, one empty list scores 0.
double f1_score(const std::vector<std::string>& predicted, const std::vector<std::string>& reference);

// 1 if `truth` is among the first k entries of `ranked`.
int recall_at_k(const std::vector<SentenceId>& ranked, SentenceId truth, std::size_t k);

enum class Policy { kUpperBound, kLowerBound, kSingle, kEnsemble };
std::string policy_name(Policy p);

struct TurnRecord {
  std::string dialogue;
  std::size_t turn = 0;
  std::string chosen;
  std::string truth;
  int reward = 0;
  double f1 = 0.0;
  int recall1 = 0;
  int recall5 = 0;
  long member = -1;  // ensemble member, -1 for other policies
  double predicted_reward = 0.0;
};

struct DialogueRecord {
  std::string dialogue;
  std::size_t turns = 0;
  int reward = 0;
  double f1 = 0.0;  // mean over turns
};

struct PolicySummary {
  std::string policy;
  std::size_t dialogues = 0;
  std::size_t turns = 0;
  double avg_reward = 0.0;  // mean dialogue reward
  double f1 = 0.0;          // mean over turns
  double recall1 = 0.0;
  double recall5 = 0.0;
};

struct PolicyResult {
  PolicySummary summary;
  std::vector<DialogueRecord> dialogues;
  std::vector<TurnRecord> turns;
};

struct EvalOptions {
  std::size_t candidates = 20;
  std::uint64_t seed = 1;
  bool select_once = false;  // ensemble keeps the member picked at the first turn
};

struct PolicyInputs {
  const ChatDQNAgent* single = nullptr;
  const Ensemble* ensemble = nullptr;
};

// Candidates at every turn depend only on the seed, the dialogue id and the
// turn, so all policies face identical choices.
PolicyResult evaluate_policy(Policy policy, const SentenceBank& bank, const std::vector<std::size_t>& dialogues,
                             const PolicyInputs& inputs, const EvalOptions& opts);

void write_summary_csv(std::ostream& out, const std::vector<PolicySummary>& rows);
void write_turns_jsonl(std::ostream& out, const std::string& policy, const std::vector<TurnRecord>& turns);

// Trailing moving average; n - window + 1 values, empty when n < window.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

// Mean of the last tenth minus mean of the first tenth (at least one value each).
double decile_gain(const std::vector<double>& values);

// CSV "agent,episode,smoothed_reward" with one row per smoothed value. The
// episode column is the index of the window's last episode.
void write_learning_curves(std::ostream& out, const std::map<std::string, TrainingLog>& logs, std::size_t window);

}  // namespace chatdqn
