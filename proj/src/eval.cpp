#include "chatdqn/eval.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace chatdqn {

double f1_score(const std::vector<std::string>& predicted, const std::vector<std::string>& reference) {
  if (predicted.empty() && reference.empty()) return 1.0;
  if (predicted.empty() || reference.empty()) return 0.0;
  std::unordered_map<std::string, long> counts;
  for (const auto& t : reference) ++counts[t];
  long common = 0;
  for (const auto& t : predicted) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / static_cast<double>(predicted.size());
  const double r = static_cast<double>(common) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

int recall_at_k(const std::vector<SentenceId>& ranked, SentenceId truth, std::size_t k) {
  const auto end = ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size()));
  return std::find(ranked.begin(), end, truth) != end ? 1 : 0;
}

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::kUpperBound: return "upper_bound";
    case Policy::kLowerBound: return "lower_bound";
    case Policy::kSingle: return "single";
    case Policy::kEnsemble: return "ensemble";
  }
  return "unknown";
}

PolicyResult evaluate_policy(Policy policy, const SentenceBank& bank, const std::vector<std::size_t>& dialogues,
                             const PolicyInputs& inputs, const EvalOptions& opts) {
  if (policy == Policy::kSingle && !inputs.single) throw std::invalid_argument("single policy needs an agent");
  if (policy == Policy::kEnsemble && !inputs.ensemble) throw std::invalid_argument("ensemble policy needs an ensemble");
  if (opts.candidates == 0) throw std::invalid_argument("candidate count must be positive");

  PolicyResult out;
  out.summary.policy = policy_name(policy);
  double f1_sum = 0.0, r1_sum = 0.0, r5_sum = 0.0;
  long reward_sum = 0;

  for (std::size_t d : dialogues) {
    const auto& ids = bank.dialogue(d);
    const std::string& did = bank.dialogue_id(d);
    const std::uint64_t dseed = derive_seed(opts.seed, fnv1a(did));
    DialogueRecord rec;
    rec.dialogue = did;
    rec.turns = ids.size() / 2;
    long fixed_member = -1;

    for (std::size_t t = 0; t < rec.turns; ++t) {
      const SentenceId truth = ids[2 * t + 1];
      Rng cand_rng(derive_seed(dseed, 2 * t));
      Rng policy_rng(derive_seed(dseed, 2 * t + 1));
      const CandidateSet cands =
          tag_candidates(bank, generate_candidates(bank, d, truth, opts.candidates, cand_rng));
      const StateIds past(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(2 * t + 1));

      TurnRecord tr;
      tr.dialogue = did;
      tr.turn = t;
      std::vector<std::size_t> order;
      switch (policy) {
        case Policy::kUpperBound: {
          const auto at = std::find(cands.ids.begin(), cands.ids.end(), truth) - cands.ids.begin();
          order.push_back(static_cast<std::size_t>(at));
          for (std::size_t i = 0; i < cands.ids.size(); ++i) {
            if (i != static_cast<std::size_t>(at)) order.push_back(i);
          }
          break;
        }
        case Policy::kLowerBound: {
          order.resize(cands.ids.size());
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(policy_rng, i)]);
          break;
        }
        case Policy::kSingle: {
          const auto& agent = *inputs.single;
          order = propose(agent, bank.sequence(past), cands, policy_rng).ranking;
          break;
        }
        case Policy::kEnsemble: {
          const Mat history = bank.sequence(past);
          Response resp = (opts.select_once && fixed_member >= 0)
                              ? respond_with(*inputs.ensemble, static_cast<std::size_t>(fixed_member), bank, history,
                                             cands, policy_rng)
                              : respond(*inputs.ensemble, bank, history, cands, policy_rng);
          fixed_member = static_cast<long>(resp.member);
          tr.member = fixed_member;
          tr.predicted_reward = resp.predicted_reward;
          order = std::move(resp.ranking);
          break;
        }
      }

      std::vector<SentenceId> ranked;
      ranked.reserve(order.size());
      for (auto i : order) ranked.push_back(cands.ids[i]);
      const SentenceId chosen = ranked.front();
      tr.chosen = bank.sentence(chosen).text;
      tr.truth = bank.sentence(truth).text;
      tr.reward = step_reward(bank.cluster(chosen), bank.cluster(truth));
      tr.f1 = f1_score(bank.sentence(chosen).tokens, bank.sentence(truth).tokens);
      tr.recall1 = recall_at_k(ranked, truth, 1);
      tr.recall5 = recall_at_k(ranked, truth, 5);

      rec.reward += tr.reward;
      rec.f1 += tr.f1;
      f1_sum += tr.f1;
      r1_sum += tr.recall1;
      r5_sum += tr.recall5;
      out.turns.push_back(std::move(tr));
    }
    if (rec.turns > 0) rec.f1 /= static_cast<double>(rec.turns);
    reward_sum += rec.reward;
    out.dialogues.push_back(std::move(rec));
  }

  auto& s = out.summary;
  s.dialogues = out.dialogues.size();
  s.turns = out.turns.size();
  if (s.dialogues > 0) s.avg_reward = static_cast<double>(reward_sum) / static_cast<double>(s.dialogues);
  if (s.turns > 0) {
    const double n = static_cast<double>(s.turns);
    s.f1 = f1_sum / n;
    s.recall1 = r1_sum / n;
    s.recall5 = r5_sum / n;
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<PolicySummary>& rows) {
  out << "policy,dialogues,turns,avg_reward,f1,recall_at_1,recall_at_5\n";
  for (const auto& r : rows) {
    out << r.policy << ',' << r.dialogues << ',' << r.turns << ',' << r.avg_reward << ',' << r.f1 << ','
        << r.recall1 << ',' << r.recall5 << '\n';
  }
}

void write_turns_jsonl(std::ostream& out, const std::string& policy, const std::vector<TurnRecord>& turns) {
  for (const auto& t : turns) {
    nlohmann::json j;
    j["policy"] = policy;
    j["dialogue"] = t.dialogue;
    j["turn"] = t.turn;
    j["chosen"] = t.chosen;
    j["truth"] = t.truth;
    j["reward"] = t.reward;
    j["f1"] = t.f1;
    j["recall_at_1"] = t.recall1;
    j["recall_at_5"] = t.recall5;
    if (t.member >= 0) {
      j["member"] = t.member;
      j["predicted_reward"] = t.predicted_reward;
    }
    out << j.dump() << '\n';
  }
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving average window must be positive");
  std::vector<double> out;
  if (values.size() < window) return out;
  out.reserve(values.size() - window + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < window; ++i) sum += values[i];
  out.push_back(sum / static_cast<double>(window));
  for (std::size_t i = window; i < values.size(); ++i) {
    sum += values[i] - values[i - window];
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

double decile_gain(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("decile gain of an empty series");
  const std::size_t n = std::max<std::size_t>(1, values.size() / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    first += values[i];
    last += values[values.size() - n + i];
  }
  return (last - first) / static_cast<double>(n);
}

void write_learning_curves(std::ostream& out, const std::map<std::string, TrainingLog>& logs, std::size_t window) {
  out << "agent,episode,smoothed_reward\n";
  for (const auto& [name, log] : logs) {
    std::vector<double> rewards;
    rewards.reserve(log.size());
    for (const auto& e : log) rewards.push_back(e.reward);
    const auto smooth = moving_average(rewards, window);
    for (std::size_t i = 0; i < smooth.size(); ++i) {
      out << name << ',' << log[i + window - 1].episode << ',' << smooth[i] << '\n';
    }
  }
}

}  // namespace chatdqn
