#include "chatdqn/agent.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

namespace chatdqn {

namespace {

template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

StateIds tail(const StateIds& h, std::size_t cap) {
  if (h.size() <= cap) return h;
  return StateIds(h.end() - static_cast<std::ptrdiff_t>(cap), h.end());
}

void write_config(BinaryWriter& w, const AgentConfig& c) {
  w.str("agent-config");
  w.f64(c.gamma);
  w.f64(c.epsilon_start);
  w.f64(c.epsilon_end);
  w.u64(c.decay_steps);
  w.u64(c.target_sync);
  w.u64(c.burn_in);
  w.u64(c.minibatch);
  w.u64(c.learn_steps);
  w.u64(c.candidates);
  w.u64(c.replay_capacity);
  w.u64(c.max_history);
  w.u64(c.hidden);
  w.f64(c.dropout);
  w.f64(c.learning_rate);
  w.u64(static_cast<std::uint64_t>(c.variant));
  w.u64(c.seed);
  w.u64(c.append_chosen ? 1 : 0);
  w.u64(c.checkpoint_every);
}

AgentConfig read_config(BinaryReader& r) {
  r.expect("agent-config");
  AgentConfig c;
  c.gamma = r.f64();
  c.epsilon_start = r.f64();
  c.epsilon_end = r.f64();
  c.decay_steps = r.u64();
  c.target_sync = r.u64();
  c.burn_in = r.u64();
  c.minibatch = r.u64();
  c.learn_steps = r.u64();
  c.candidates = r.u64();
  c.replay_capacity = r.u64();
  c.max_history = r.u64();
  c.hidden = r.u64();
  c.dropout = r.f64();
  c.learning_rate = r.f64();
  const auto v = r.u64();
  if (v > 2) throw std::runtime_error("unknown agent variant in model data");
  c.variant = static_cast<Variant>(v);
  c.seed = r.u64();
  c.append_chosen = r.u64() != 0;
  c.checkpoint_every = r.u64();
  return c;
}

}  // namespace

SentenceBank::SentenceBank(const Corpus& corpus, const WordEmbeddingTable& table, const ClusterModel& model)
    : dim_(table.dim()) {
  if (model.k() == 0) throw std::invalid_argument("sentence bank needs a fitted cluster model");
  if (model.dim() != table.dim()) {
    throw std::invalid_argument("cluster model dimension " + std::to_string(model.dim()) +
                                " does not match embedding dimension " + std::to_string(table.dim()));
  }
  for (const auto& d : corpus.dialogues) {
    std::vector<SentenceId> flat;
    for (const Sentence* s : d.flattened()) {
      auto it = index_.find(s->text);
      if (it == index_.end()) {
        const auto id = static_cast<SentenceId>(sentences_.size());
        sentences_.push_back(*s);
        vectors_.push_back(sentence_vector(s->tokens, table));
        clusters_.push_back(assign(model, vectors_.back()));
        it = index_.emplace(s->text, id).first;
      }
      flat.push_back(it->second);
    }
    std::vector<SentenceId> members = flat;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    dialogues_.push_back(std::move(flat));
    dialogue_ids_.push_back(d.id);
    members_.push_back(std::move(members));
  }
}

std::optional<SentenceId> SentenceBank::find(const std::string& text) const {
  auto it = index_.find(text);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Mat SentenceBank::sequence(const StateIds& ids) const {
  Mat m(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = vectors_[ids[i]];
  return m;
}

std::vector<SentenceId> sample_distractors(const SentenceBank& bank, std::size_t count,
                                           const std::vector<SentenceId>& excluded, Rng& rng) {
  const std::size_t pool = bank.size() - excluded.size();
  if (count > pool) {
    throw std::invalid_argument("distractor pool has " + std::to_string(pool) + " sentences, need " +
                                std::to_string(count));
  }
  std::vector<SentenceId> out;
  out.reserve(count);
  if (pool < 2 * count) {
    std::vector<SentenceId> all;
    for (SentenceId id = 0; id < bank.size(); ++id) {
      if (!std::binary_search(excluded.begin(), excluded.end(), id)) all.push_back(id);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + uniform_index(rng, all.size() - i);
      std::swap(all[i], all[j]);
      out.push_back(all[i]);
    }
    return out;
  }
  while (out.size() < count) {
    const auto id = static_cast<SentenceId>(uniform_index(rng, bank.size()));
    if (std::binary_search(excluded.begin(), excluded.end(), id)) continue;
    if (std::find(out.begin(), out.end(), id) != out.end()) continue;
    out.push_back(id);
  }
  return out;
}

std::vector<SentenceId> generate_candidates(const SentenceBank& bank, std::size_t dialogue,
                                            SentenceId truth, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("candidate count must be positive");
  std::vector<SentenceId> ids{truth};
  const auto distractors = sample_distractors(bank, n - 1, bank.members(dialogue), rng);
  ids.insert(ids.end(), distractors.begin(), distractors.end());
  fisher_yates(ids, rng);
  return ids;
}

CandidateSet tag_candidates(const SentenceBank& bank, std::vector<SentenceId> ids) {
  CandidateSet c;
  c.ids = std::move(ids);
  for (SentenceId id : c.ids) c.clusters.push_back(bank.cluster(id));
  c.available = distinct_actions(c.clusters);
  return c;
}

std::vector<std::size_t> action_set(const std::vector<Sentence>& candidates, const ClusterModel& model,
                                    const WordEmbeddingTable& table) {
  std::vector<std::size_t> tags;
  tags.reserve(candidates.size());
  for (const auto& s : candidates) tags.push_back(assign(model, sentence_vector(s.tokens, table)));
  return tags;
}

std::vector<std::size_t> distinct_actions(const std::vector<std::size_t>& tags) {
  std::vector<std::size_t> out = tags;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t greedy_action(const Vec& q_values, const std::vector<std::size_t>& available) {
  if (available.empty()) throw std::invalid_argument("no available actions");
  std::size_t best = available[0];
  for (std::size_t a : available) {
    if (a >= static_cast<std::size_t>(q_values.size())) throw std::out_of_range("action outside Q-value range");
    if (q_values[static_cast<Eigen::Index>(a)] > q_values[static_cast<Eigen::Index>(best)] ||
        (q_values[static_cast<Eigen::Index>(a)] == q_values[static_cast<Eigen::Index>(best)] && a < best)) {
      best = a;
    }
  }
  return best;
}

std::size_t select_action(const Vec& q_values, const std::vector<std::size_t>& available,
                          double epsilon, Rng& rng) {
  if (available.empty()) throw std::invalid_argument("no available actions");
  if (uniform01(rng) < epsilon) return available[uniform_index(rng, available.size())];
  return greedy_action(q_values, available);
}

int step_reward(std::size_t chosen_cluster, std::size_t truth_cluster) {
  return chosen_cluster == truth_cluster ? 1 : -1;
}

int step_reward(std::size_t chosen_cluster, const Sentence& truth, const ClusterModel& model,
                const WordEmbeddingTable& table) {
  return step_reward(chosen_cluster, assign(model, sentence_vector(truth.tokens, table)));
}

std::size_t realize_action(std::size_t cluster, const std::vector<std::size_t>& tags, Rng& rng) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == cluster) members.push_back(i);
  }
  if (members.empty()) throw std::invalid_argument("no candidate in cluster " + std::to_string(cluster));
  return members[uniform_index(rng, members.size())];
}

std::vector<std::size_t> rank_candidates(const Vec& q_values, const std::vector<std::size_t>& tags,
                                         Rng& rng) {
  std::vector<std::size_t> clusters = distinct_actions(tags);
  std::stable_sort(clusters.begin(), clusters.end(), [&](std::size_t a, std::size_t b) {
    return q_values[static_cast<Eigen::Index>(a)] > q_values[static_cast<Eigen::Index>(b)];
  });
  std::vector<std::size_t> order;
  order.reserve(tags.size());
  for (std::size_t c : clusters) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i] == c) members.push_back(i);
    }
    while (!members.empty()) {
      const std::size_t j = uniform_index(rng, members.size());
      order.push_back(members[j]);
      members.erase(members.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }
  return order;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kDqn: return "dqn";
    case Variant::kDoubleDqn: return "ddqn";
    case Variant::kDueling: return "dueling";
  }
  return "dqn";
}

Variant parse_variant(const std::string& name) {
  if (name == "dqn") return Variant::kDqn;
  if (name == "ddqn" || name == "double") return Variant::kDoubleDqn;
  if (name == "dueling") return Variant::kDueling;
  throw std::invalid_argument("unknown variant '" + name + "' (expected dqn, ddqn or dueling)");
}

double td_target(double reward, bool done, const Vec& target_next, const Vec* online_next,
                 const std::vector<std::size_t>& available_next, double gamma, Variant variant) {
  if (done) return reward;
  if (available_next.empty()) throw std::invalid_argument("non-terminal transition without next actions");
  std::size_t a;
  if (variant == Variant::kDoubleDqn) {
    if (online_next == nullptr) throw std::invalid_argument("double variant needs online next values");
    a = greedy_action(*online_next, available_next);
  } else {
    a = greedy_action(target_next, available_next);
  }
  return reward + gamma * target_next[static_cast<Eigen::Index>(a)];
}

double td_target(double reward, const Mat& s_next, bool done, const nn::Network& q_net,
                 const nn::Network& target_net, const std::vector<std::size_t>& available_next,
                 double gamma, Variant variant) {
  if (done) return reward;
  const Vec target_next = target_net.infer(s_next);
  if (variant == Variant::kDoubleDqn) {
    const Vec online_next = q_net.infer(s_next);
    return td_target(reward, false, target_next, &online_next, available_next, gamma, variant);
  }
  return td_target(reward, false, target_next, nullptr, available_next, gamma, variant);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[next_] = std::move(e);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::vector<const Experience*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[uniform_index(rng, items_.size())]);
  return out;
}

double epsilon_at(const AgentConfig& cfg, std::size_t step) {
  if (step < cfg.burn_in) return cfg.epsilon_start;
  const std::size_t decay = cfg.decay_steps > 0 ? cfg.decay_steps : cfg.learn_steps / 2;
  const std::size_t k = step - cfg.burn_in;
  if (decay == 0 || k >= decay) return cfg.epsilon_end;
  return cfg.epsilon_start +
         (cfg.epsilon_end - cfg.epsilon_start) * static_cast<double>(k) / static_cast<double>(decay);
}

ChatDQNAgent::ChatDQNAgent(const AgentConfig& cfg, std::size_t input_dim, std::size_t actions)
    : cfg_(cfg), actions_(actions), buffer_(cfg.replay_capacity) {
  if (cfg.gamma < 0.0 || cfg.gamma > 1.0) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (cfg.epsilon_start < 0.0 || cfg.epsilon_start > 1.0 || cfg.epsilon_end < 0.0 || cfg.epsilon_end > 1.0) {
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
  if (cfg.candidates < 2) throw std::invalid_argument("at least two candidates are required");
  if (cfg.minibatch == 0 || cfg.target_sync == 0 || cfg.max_history == 0) {
    throw std::invalid_argument("minibatch, target sync and history capacity must be positive");
  }
  Rng init(derive_seed(cfg.seed, 1));
  nn::NetworkSpec spec;
  spec.input = static_cast<Eigen::Index>(input_dim);
  spec.hidden = static_cast<Eigen::Index>(cfg.hidden);
  spec.output = static_cast<Eigen::Index>(actions);
  spec.dropout = cfg.dropout;
  spec.dueling = cfg.variant == Variant::kDueling;
  q_net_ = nn::build_network(spec, init);
  target_net_ = q_net_;
  adam_.config.lr = cfg.learning_rate;
}

void ChatDQNAgent::remember(Experience e) {
  buffer_.push(std::move(e));
  ++steps_;
}

double ChatDQNAgent::learn(const SentenceBank& bank, Rng& rng) {
  const auto batch = buffer_.sample(cfg_.minibatch, rng);
  const std::size_t n = batch.size();

  std::vector<Mat> states;
  states.reserve(n);
  for (const auto* e : batch) states.push_back(bank.sequence(e->s));
  std::vector<const Mat*> state_ptrs;
  for (const auto& m : states) state_ptrs.push_back(&m);

  std::vector<Mat> nexts;
  std::vector<std::size_t> next_of(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (batch[j]->done) continue;
    next_of[j] = nexts.size();
    nexts.push_back(bank.sequence(batch[j]->s_next));
  }
  Mat target_next, online_next;
  if (!nexts.empty()) {
    std::vector<const Mat*> next_ptrs;
    for (const auto& m : nexts) next_ptrs.push_back(&m);
    const auto next_batch = nn::make_batch(next_ptrs, static_cast<Eigen::Index>(bank.dim()));
    target_next = target_net_.infer(next_batch);
    if (cfg_.variant == Variant::kDoubleDqn) online_next = q_net_.infer(next_batch);
  }

  nn::Network::Cache cache;
  const Mat q = q_net_.forward_train(nn::make_batch(state_ptrs, static_cast<Eigen::Index>(bank.dim())), &rng,
                                     cache);
  Mat upstream = Mat::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& e = *batch[j];
    double y;
    if (e.done) {
      y = e.r;
    } else {
      const Vec tn = target_next.col(static_cast<Eigen::Index>(next_of[j]));
      Vec on;
      if (cfg_.variant == Variant::kDoubleDqn) on = online_next.col(static_cast<Eigen::Index>(next_of[j]));
      y = td_target(e.r, false, tn, cfg_.variant == Variant::kDoubleDqn ? &on : nullptr, e.available_next,
                    cfg_.gamma, cfg_.variant);
    }
    const auto a = static_cast<Eigen::Index>(e.a);
    const auto col = static_cast<Eigen::Index>(j);
    const double diff = q(a, col) - y;
    loss += diff * diff;
    upstream(a, col) = 2.0 * diff / static_cast<double>(n);
  }
  const auto grads = q_net_.backward(cache, upstream);
  nn::adam_step(q_net_, grads, adam_);
  q_net_.commit(cache);
  return loss / static_cast<double>(n);
}

void ChatDQNAgent::save(BinaryWriter& w) const {
  w.str("agent");
  write_config(w, cfg_);
  w.u64(actions_);
  w.u64(steps_);
  q_net_.save(w);
  target_net_.save(w);
}

ChatDQNAgent ChatDQNAgent::load(BinaryReader& r) {
  r.expect("agent");
  ChatDQNAgent a;
  a.cfg_ = read_config(r);
  a.actions_ = r.u64();
  a.steps_ = r.u64();
  a.q_net_ = nn::Network::load(r);
  a.target_net_ = nn::Network::load(r);
  a.buffer_ = ReplayBuffer(a.cfg_.replay_capacity);
  a.adam_.config.lr = a.cfg_.learning_rate;
  return a;
}

TrainingLog train(ChatDQNAgent& agent, const SentenceBank& bank, const std::vector<std::size_t>& dialogues,
                  const CheckpointHook& hook) {
  if (dialogues.empty()) throw std::invalid_argument("training needs at least one dialogue");
  const AgentConfig& cfg = agent.config();
  const std::size_t total = cfg.burn_in + cfg.learn_steps;
  Rng rng(derive_seed(cfg.seed, 2));
  TrainingLog log;
  std::size_t episode = 0;

  while (agent.steps_done() < total) {
    const std::size_t d = dialogues[uniform_index(rng, dialogues.size())];
    const auto& ids = bank.dialogue(d);
    const std::size_t turns = ids.size() / 2;
    StateIds history{ids[0]};
    CandidateSet cands = tag_candidates(bank, generate_candidates(bank, d, ids[1], cfg.candidates, rng));
    int reward = 0;
    double eps = 0.0;
    bool complete = true;

    for (std::size_t t = 0; t < turns; ++t) {
      if (agent.steps_done() >= total) {
        complete = false;
        break;
      }
      const SentenceId truth = ids[2 * t + 1];
      eps = epsilon_at(cfg, agent.steps_done());
      StateIds state = tail(history, cfg.max_history);

      std::size_t action;
      if (uniform01(rng) < eps) {
        action = cands.available[uniform_index(rng, cands.available.size())];
      } else {
        action = greedy_action(agent.q_values(bank.sequence(state)), cands.available);
      }
      const int r = step_reward(action, bank.cluster(truth));
      const std::size_t chosen = realize_action(action, cands.clusters, rng);
      history.push_back(cfg.append_chosen ? cands.ids[chosen] : truth);

      const bool done = t + 1 == turns;
      CandidateSet next;
      if (!done) {
        history.push_back(ids[2 * t + 2]);
        next = tag_candidates(bank, generate_candidates(bank, d, ids[2 * t + 3], cfg.candidates, rng));
      }
      Experience e;
      e.s = std::move(state);
      e.a = action;
      e.r = r;
      e.s_next = tail(history, cfg.max_history);
      e.done = done;
      e.available_next = next.available;
      agent.remember(std::move(e));

      if (agent.steps_done() > cfg.burn_in) agent.learn(bank, rng);
      if (agent.steps_done() % cfg.target_sync == 0) agent.sync_target();
      reward += r;
      cands = std::move(next);
    }
    if (!complete) break;
    log.push_back({episode, agent.steps_done(), eps, reward, turns});
    ++episode;
    if (hook && cfg.checkpoint_every > 0 && episode % cfg.checkpoint_every == 0) hook(agent, episode);
  }
  return log;
}

void write_training_log(std::ostream& out, const TrainingLog& log) {
  out << "episode,steps,epsilon,episode_reward\n";
  for (const auto& e : log) out << e.episode << ',' << e.steps << ',' << e.epsilon << ',' << e.reward << '\n';
}

}  // namespace chatdqn
