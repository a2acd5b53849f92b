#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "chatdqn/ensemble.hpp"
#include "fixtures.hpp"

using namespace chatdqn;

namespace {

std::string bytes_of(const ChatDQNAgent& a) {
  std::ostringstream out;
  BinaryWriter w(out);
  a.save(w);
  return out.str();
}

AgentConfig tiny_agent() {
  AgentConfig cfg;
  cfg.hidden = 6;
  cfg.minibatch = 4;
  cfg.burn_in = 20;
  cfg.learn_steps = 30;
  cfg.target_sync = 10;
  cfg.replay_capacity = 100;
  cfg.seed = 3;
  return cfg;
}

struct World {
  Corpus corpus = load_corpus(fixture::desk_path("train.jsonl"), Split::kTrain);
  WordEmbeddingTable table = load_embeddings(fixture::desk_path("vectors.txt"));
  ClusterModel model = fit_sentence_clusters(corpus, table, 10, {}, 1);
  SentenceBank bank{corpus, table, model};
  RegressorNet regressor;

  World() {
    const auto data = build_reward_dataset(bank, fixture::all_dialogues(bank), {0.0, 0.5, 1.0}, 2, 2);
    RegressorConfig rc;
    rc.hidden = 16;
    rc.epochs = 25;
    regressor = train_regressor(data, table, rc).regressor;
  }
};

const World& world() {
  static const World w;
  return w;
}

// Makes the agent prefer `cluster` whatever the input.
void pin_preference(ChatDQNAgent& agent, std::size_t cluster) {
  auto params = agent.q_net().params();
  Mat& w = *params[params.size() - 2];
  Mat& b = *params[params.size() - 1];
  w.setZero();
  b.setZero();
  b(static_cast<Eigen::Index>(cluster), 0) = 1.0;
}

CandidateSet candidates_for(const SentenceBank& bank, std::size_t d, std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  return tag_candidates(bank, generate_candidates(bank, d, bank.dialogue(d)[2 * t + 1], 20, rng));
}

Mat history_for(const SentenceBank& bank, std::size_t d, std::size_t t) {
  const auto& ids = bank.dialogue(d);
  return bank.sequence(StateIds(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(2 * t + 1)));
}

}  // namespace

TEST_CASE("ensemble has one member per nonempty dialogue cluster") {
  const auto& w = world();
  EnsembleOptions opts;
  opts.dialogue_clusters = 5;
  opts.cluster_seed = 4;
  const auto e = train_ensemble(w.corpus, w.bank, w.table, w.model, w.regressor, tiny_agent(), opts);
  CHECK(e.members.size() + e.empty_clusters.size() == 5);
  CHECK(e.members.size() >= 1);
  const auto labels = dialogue_partition(w.corpus, w.model, e.dialogue_model, w.table);
  std::set<std::size_t> used(labels.begin(), labels.end());
  std::set<std::size_t> member_clusters;
  for (const auto& m : e.members) {
    member_clusters.insert(m.dialogue_cluster);
    CHECK(m.agent.config().seed == tiny_agent().seed + m.dialogue_cluster);
    CHECK(m.agent.actions() == w.model.k());
    CHECK_FALSE(m.log.empty());
  }
  CHECK(member_clusters == used);
  for (auto c : e.empty_clusters) CHECK(used.count(c) == 0);

  opts.threads = 3;
  const auto threaded = train_ensemble(w.corpus, w.bank, w.table, w.model, w.regressor, tiny_agent(), opts);
  REQUIRE(threaded.members.size() == e.members.size());
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    CHECK(bytes_of(threaded.members[i].agent) == bytes_of(e.members[i].agent));
  }

  opts.dialogue_clusters = 0;
  CHECK_THROWS_AS(train_ensemble(w.corpus, w.bank, w.table, w.model, w.regressor, tiny_agent(), opts),
                  std::invalid_argument);
}

TEST_CASE("a single dialogue cluster reproduces the single agent") {
  const auto& w = world();
  EnsembleOptions opts;
  opts.dialogue_clusters = 1;
  const auto e = train_ensemble(w.corpus, w.bank, w.table, w.model, w.regressor, tiny_agent(), opts);
  REQUIRE(e.members.size() == 1);
  ChatDQNAgent single(tiny_agent(), w.table.dim(), w.model.k());
  train(single, w.bank, fixture::all_dialogues(w.bank));
  CHECK(bytes_of(single) == bytes_of(e.members[0].agent));

  const auto cands = candidates_for(w.bank, 7, 2, 11);
  const Mat h = history_for(w.bank, 7, 2);
  Rng a(5), b(5);
  const auto resp = respond(e, w.bank, h, cands, a);
  const auto order = rank_candidates(single.q_values(h), cands.clusters, b);
  CHECK(resp.member == 0);
  CHECK(resp.ranking == order);
  CHECK(a == b);
}

TEST_CASE("select_agent takes the best score with ties to the lowest member") {
  const auto& w = world();
  Ensemble e;
  e.sentence_model = w.model;
  e.regressor = w.regressor;
  for (std::size_t i = 0; i < 4; ++i) {
    AgentConfig cfg = tiny_agent();
    cfg.seed = 10 + i;
    e.members.push_back(EnsembleMember{i, ChatDQNAgent(cfg, w.table.dim(), w.model.k()), {}});
  }
  const auto cands = candidates_for(w.bank, 3, 1, 2);
  const Mat h = history_for(w.bank, 3, 1);
  Rng rng(1);
  auto by_index = [](std::size_t i, const Mat&) { return static_cast<double>(i); };
  CHECK(select_agent(e, w.bank, h, cands, rng, by_index).member == 3);
  auto tied = [](std::size_t i, const Mat&) { return i == 1 || i == 2 ? 5.0 : 0.0; };
  CHECK(select_agent(e, w.bank, h, cands, rng, tied).member == 1);

  const auto plain = select_agent(e, w.bank, h, cands, rng);
  REQUIRE(plain.scores.size() == 4);
  auto exp_scores = [&](std::size_t i, const Mat&) { return std::exp(plain.scores[i]) * 3.0 - 7.0; };
  CHECK(select_agent(e, w.bank, h, cands, rng, exp_scores).member == plain.member);
  for (std::size_t i = 0; i < 4; ++i) CHECK(plain.scores[i] <= plain.scores[plain.member]);

  Ensemble one = e;
  one.members.erase(one.members.begin() + 1, one.members.end());
  auto high = [](std::size_t, const Mat&) { return -1e9; };
  CHECK(select_agent(one, w.bank, h, cands, rng, high).member == 0);

  Ensemble none;
  CHECK_THROWS_AS(select_agent(none, w.bank, h, cands, rng), std::logic_error);
}

TEST_CASE("the regressor prefers the member that answers in kind") {
  const auto& w = world();
  Ensemble e;
  e.sentence_model = w.model;
  e.regressor = w.regressor;
  for (std::size_t i = 0; i < 2; ++i) {
    AgentConfig cfg = tiny_agent();
    e.members.push_back(EnsembleMember{i, ChatDQNAgent(cfg, w.table.dim(), w.model.k()), {}});
  }
  int wins = 0, trials = 0;
  for (std::size_t d = 0; d < w.bank.dialogue_count(); ++d) {
    const auto& ids = w.bank.dialogue(d);
    for (std::size_t t = 1; t < ids.size() / 2; ++t) {
      const auto cands = candidates_for(w.bank, d, t, 100 * d + t);
      const std::size_t truth_cluster = w.bank.cluster(ids[2 * t + 1]);
      const auto other = std::find_if(cands.available.begin(), cands.available.end(),
                                      [&](std::size_t c) { return c != truth_cluster; });
      if (other == cands.available.end()) continue;
      // member 0 answers from the true response's cluster, member 1 from another
      pin_preference(e.members[0].agent, truth_cluster);
      pin_preference(e.members[1].agent, *other);
      Rng rng(d + t);
      wins += select_agent(e, w.bank, history_for(w.bank, d, t), cands, rng).member == 0;
      ++trials;
    }
  }
  REQUIRE(trials > 100);
  CHECK(static_cast<double>(wins) / trials > 0.6);
}

TEST_CASE("respond stays within the candidates and is deterministic") {
  const auto& w = world();
  EnsembleOptions opts;
  opts.dialogue_clusters = 3;
  const auto e = train_ensemble(w.corpus, w.bank, w.table, w.model, w.regressor, tiny_agent(), opts);
  for (std::size_t d = 0; d < 10; ++d) {
    const auto cands = candidates_for(w.bank, d, 1, d);
    const Mat h = history_for(w.bank, d, 1);
    Rng a(d), b(d);
    const auto r1 = respond(e, w.bank, h, cands, a);
    const auto r2 = respond(e, w.bank, h, cands, b);
    CHECK(r1.sentence == r2.sentence);
    CHECK(r1.member == r2.member);
    CHECK(r1.predicted_reward == r2.predicted_reward);
    CHECK(std::find(cands.ids.begin(), cands.ids.end(), r1.sentence) != cands.ids.end());
    CHECK(cands.ids[r1.candidate] == r1.sentence);
    CHECK(r1.ranking.size() == cands.ids.size());

    Rng c(d);
    const auto fixed = respond_with(e, r1.member, w.bank, h, cands, c);
    CHECK(fixed.sentence == r1.sentence);
    CHECK(c == a);
  }
  const auto only = tag_candidates(w.bank, {w.bank.dialogue(0)[1]});
  Rng rng(0);
  CHECK(respond(e, w.bank, history_for(w.bank, 0, 0), only, rng).sentence == w.bank.dialogue(0)[1]);
  CHECK_THROWS_AS(respond_with(e, 99, w.bank, history_for(w.bank, 0, 0), only, rng), std::out_of_range);
  CandidateSet empty;
  CHECK_THROWS_AS(respond(e, w.bank, history_for(w.bank, 0, 0), empty, rng), std::invalid_argument);
}

TEST_CASE("ensemble save and load keep responses identical") {
  const auto& w = world();
  EnsembleOptions opts;
  opts.dialogue_clusters = 3;
  const auto e = train_ensemble(w.corpus, w.bank, w.table, w.model, w.regressor, tiny_agent(), opts);
  std::stringstream buf;
  BinaryWriter wr(buf);
  e.save(wr);
  BinaryReader rd(buf);
  const auto back = Ensemble::load(rd);
  CHECK(back.members.size() == e.members.size());
  CHECK(back.empty_clusters == e.empty_clusters);
  CHECK(back.dialogue_model.centroids.size() == e.dialogue_model.centroids.size());
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    CHECK(back.members[i].log.size() == e.members[i].log.size());
    CHECK(back.members[i].dialogue_cluster == e.members[i].dialogue_cluster);
  }
  for (std::size_t d = 0; d < 20; ++d) {
    const auto cands = candidates_for(w.bank, d, 0, d);
    const Mat h = history_for(w.bank, d, 0);
    Rng a(d), b(d);
    const auto r1 = respond(e, w.bank, h, cands, a);
    const auto r2 = respond(back, w.bank, h, cands, b);
    CHECK(r1.sentence == r2.sentence);
    CHECK(r1.predicted_reward == r2.predicted_reward);
  }
}

TEST_CASE("extend_history keeps the most recent columns") {
  Mat h(2, 3);
  h << 1, 2, 3, 4, 5, 6;
  Vec n(2);
  n << 7, 8;
  const Mat all = extend_history(h, n, 10);
  CHECK(all.cols() == 4);
  CHECK(all.col(3) == n);
  const Mat two = extend_history(h, n, 2);
  CHECK(two.cols() == 2);
  CHECK(two.col(0) == h.col(2));
  CHECK(extend_history(Mat(2, 0), n, 5).cols() == 1);
}
