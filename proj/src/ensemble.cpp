#include "chatdqn/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

namespace chatdqn {

namespace {

Mat last_columns(const Mat& m, std::size_t cap) {
  const auto n = std::min<Eigen::Index>(m.cols(), static_cast<Eigen::Index>(cap));
  return m.rightCols(n);
}

}  // namespace

void save_training_log(BinaryWriter& w, const TrainingLog& log) {
  w.u64(log.size());
  for (const auto& e : log) {
    w.u64(e.episode);
    w.u64(e.steps);
    w.f64(e.epsilon);
    w.i64(e.reward);
    w.u64(e.turns);
  }
}

TrainingLog load_training_log(BinaryReader& r) {
  TrainingLog log;
  const auto episodes = r.u64();
  if (episodes > (1ULL << 32)) throw std::runtime_error("corrupt training log in binary data");
  for (std::uint64_t j = 0; j < episodes; ++j) {
    EpisodeLog l;
    l.episode = r.u64();
    l.steps = r.u64();
    l.epsilon = r.f64();
    l.reward = static_cast<int>(r.i64());
    l.turns = r.u64();
    log.push_back(l);
  }
  return log;
}

void Ensemble::save(BinaryWriter& w) const {
  w.str("ensemble");
  save_cluster_model(w, sentence_model);
  save_cluster_model(w, dialogue_model);
  w.u64(members.size());
  for (const auto& m : members) {
    w.u64(m.dialogue_cluster);
    m.agent.save(w);
    save_training_log(w, m.log);
  }
  w.u64(empty_clusters.size());
  for (auto c : empty_clusters) w.u64(c);
  regressor.save(w);
}

Ensemble Ensemble::load(BinaryReader& r) {
  r.expect("ensemble");
  Ensemble e;
  e.sentence_model = load_cluster_model(r);
  e.dialogue_model = load_cluster_model(r);
  const auto n = r.u64();
  if (n > (1ULL << 20)) throw std::runtime_error("corrupt member count in binary data");
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t cluster = r.u64();
    ChatDQNAgent agent = ChatDQNAgent::load(r);
    TrainingLog log = load_training_log(r);
    e.members.push_back(EnsembleMember{cluster, std::move(agent), std::move(log)});
  }
  const auto empty = r.u64();
  if (empty > (1ULL << 20)) throw std::runtime_error("corrupt cluster list in binary data");
  for (std::uint64_t i = 0; i < empty; ++i) e.empty_clusters.push_back(r.u64());
  e.regressor = RegressorNet::load(r);
  return e;
}

std::vector<std::size_t> dialogue_partition(const Corpus& corpus, const ClusterModel& sentence_model,
                                            const ClusterModel& dialogue_model, const WordEmbeddingTable& table) {
  std::vector<std::size_t> out;
  out.reserve(corpus.dialogues.size());
  for (const auto& d : corpus.dialogues) out.push_back(assign(dialogue_model, dialogue_features(d, sentence_model, table)));
  return out;
}

Ensemble train_ensemble(const Corpus& corpus, const SentenceBank& bank, const WordEmbeddingTable& table,
                        const ClusterModel& sentence_model, RegressorNet regressor, const AgentConfig& cfg,
                        const EnsembleOptions& opts) {
  if (opts.dialogue_clusters == 0) throw std::invalid_argument("ensemble needs at least one dialogue cluster");
  if (bank.dialogue_count() != corpus.dialogues.size()) {
    throw std::invalid_argument("sentence bank was built from a different corpus");
  }
  auto dialogue_model = fit_dialogue_clusters(corpus, sentence_model, table, opts.dialogue_clusters, opts.kmeans,
                                              opts.cluster_seed);
  return train_ensemble(corpus, bank, table, sentence_model, std::move(dialogue_model), std::move(regressor), cfg,
                        opts.threads);
}

Ensemble train_ensemble(const Corpus& corpus, const SentenceBank& bank, const WordEmbeddingTable& table,
                        const ClusterModel& sentence_model, ClusterModel dialogue_model, RegressorNet regressor,
                        const AgentConfig& cfg, std::size_t threads_wanted) {
  if (dialogue_model.k() == 0) throw std::invalid_argument("ensemble needs at least one dialogue cluster");
  if (bank.dialogue_count() != corpus.dialogues.size()) {
    throw std::invalid_argument("sentence bank was built from a different corpus");
  }
  Ensemble e;
  e.sentence_model = sentence_model;
  e.regressor = std::move(regressor);
  e.dialogue_model = std::move(dialogue_model);
  const auto labels = dialogue_partition(corpus, sentence_model, e.dialogue_model, table);

  std::vector<std::vector<std::size_t>> groups(e.dialogue_model.k());
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);

  std::vector<std::size_t> clusters;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    (groups[c].empty() ? e.empty_clusters : clusters).push_back(c);
  }

  std::vector<std::optional<ChatDQNAgent>> agents(clusters.size());
  std::vector<TrainingLog> logs(clusters.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < clusters.size(); i = next++) {
      try {
        AgentConfig member_cfg = cfg;
        member_cfg.seed = cfg.seed + clusters[i];
        ChatDQNAgent agent(member_cfg, table.dim(), sentence_model.k());
        logs[i] = train(agent, bank, groups[clusters[i]]);
        agents[i].emplace(std::move(agent));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::size_t threads = threads_wanted ? threads_wanted : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, clusters.size()));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < clusters.size(); ++i) {
    e.members.push_back(EnsembleMember{clusters[i], std::move(*agents[i]), std::move(logs[i])});
  }
  return e;
}

Mat extend_history(const Mat& history, const Vec& next, std::size_t cap) {
  Mat full(next.size(), history.cols() + 1);
  if (history.cols() > 0) full.leftCols(history.cols()) = history;
  full.col(history.cols()) = next;
  return last_columns(full, cap);
}

Proposal propose(const ChatDQNAgent& agent, const Mat& history, const CandidateSet& cands, const Rng& rng) {
  if (cands.ids.empty()) throw std::invalid_argument("no candidates to rank");
  Proposal p{{}, rng};
  const Vec q = agent.q_values(last_columns(history, agent.config().max_history));
  p.ranking = rank_candidates(q, cands.clusters, p.rng_after);
  return p;
}

Selection select_agent(const Ensemble& e, const SentenceBank& bank, const Mat& history, const CandidateSet& cands,
                       const Rng& rng, const MemberScorer& scorer) {
  if (e.members.empty()) throw std::logic_error("ensemble has no members");
  Selection s;
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    s.proposals.push_back(propose(e.members[i].agent, history, cands, rng));
    const Vec& pick = bank.vector(cands.ids[s.proposals.back().ranking[0]]);
    const Mat trajectory = extend_history(history, pick, e.regressor.max_history);
    s.scores.push_back(scorer ? scorer(i, trajectory) : e.regressor.predict(trajectory));
  }
  for (std::size_t i = 1; i < s.scores.size(); ++i) {
    if (s.scores[i] > s.scores[s.member]) s.member = i;
  }
  return s;
}

Response respond(const Ensemble& e, const SentenceBank& bank, const Mat& history, const CandidateSet& cands,
                 Rng& rng, const MemberScorer& scorer) {
  Selection s = select_agent(e, bank, history, cands, rng, scorer);
  Proposal& p = s.proposals[s.member];
  rng = p.rng_after;
  Response out;
  out.member = s.member;
  out.candidate = p.ranking[0];
  out.sentence = cands.ids[out.candidate];
  out.predicted_reward = s.scores[s.member];
  out.ranking = std::move(p.ranking);
  return out;
}

Response respond_with(const Ensemble& e, std::size_t member, const SentenceBank& bank, const Mat& history,
                      const CandidateSet& cands, Rng& rng) {
  if (member >= e.members.size()) throw std::out_of_range("no such ensemble member");
  Proposal p = propose(e.members[member].agent, history, cands, rng);
  rng = p.rng_after;
  Response out;
  out.member = member;
  out.candidate = p.ranking[0];
  out.sentence = cands.ids[out.candidate];
  out.predicted_reward = e.regressor.predict(extend_history(history, bank.vector(out.sentence), e.regressor.max_history));
  out.ranking = std::move(p.ranking);
  return out;
}

}  // namespace chatdqn
