#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "chatdqn/eval.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace chatdqn;

namespace {

std::vector<std::string> toks(const std::string& s) { return tokenize(s); }

}  // namespace

TEST_CASE("f1 on token multisets") {
  CHECK(f1_score(toks("i like dogs"), toks("i like dogs")) == 1.0);
  CHECK(f1_score(toks("cats sleep"), toks("dogs run")) == 0.0);
  CHECK(f1_score(toks("i like dogs"), toks("i like cats")) == doctest::Approx(2.0 / 3.0));
  CHECK(f1_score({}, {}) == 1.0);
  CHECK(f1_score({}, toks("hi")) == 0.0);
  CHECK(f1_score(toks("hi"), {}) == 0.0);
  CHECK(f1_score({"a", "a"}, {"a"}) == doctest::Approx(2.0 / 3.0));

  Rng rng(4);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<std::string> p, t;
    const auto np = uniform_index(rng, 6), nt = uniform_index(rng, 6);
    for (std::size_t i = 0; i < np; ++i) p.push_back(vocab[uniform_index(rng, vocab.size())]);
    for (std::size_t i = 0; i < nt; ++i) t.push_back(vocab[uniform_index(rng, vocab.size())]);
    const double f = f1_score(p, t);
    CHECK(f == doctest::Approx(oracle::f1(p, t)));
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(f == doctest::Approx(f1_score(t, p)));
  }
}

TEST_CASE("recall at k") {
  const std::vector<SentenceId> ranked{4, 9, 2, 7};
  CHECK(recall_at_k(ranked, 4, 1) == 1);
  CHECK(recall_at_k(ranked, 9, 1) == 0);
  CHECK(recall_at_k(ranked, 2, 3) == 1);
  CHECK(recall_at_k(ranked, 7, 3) == 0);
  CHECK(recall_at_k(ranked, 7, 50) == 1);
  CHECK(recall_at_k(ranked, 5, 50) == 0);
}

TEST_CASE("upper bound is exact on the desk test split") {
  const auto corpus = load_corpus(fixture::desk_path("test.jsonl"), Split::kTest);
  const auto table = load_embeddings(fixture::desk_path("vectors.txt"));
  const auto model = fit_sentence_clusters(corpus, table, 10, {}, 1);
  SentenceBank bank(corpus, table, model);
  const auto r = evaluate_policy(Policy::kUpperBound, bank, fixture::all_dialogues(bank), {}, EvalOptions{});
  const auto stats = corpus_stats(corpus);
  CHECK(r.summary.f1 == 1.0);
  CHECK(r.summary.recall1 == 1.0);
  CHECK(r.summary.recall5 == 1.0);
  CHECK(r.summary.avg_reward == doctest::Approx(stats.avg_turns_per_dialogue).epsilon(1e-12));
  CHECK(r.summary.dialogues == corpus.dialogues.size());
  CHECK(r.summary.turns == stats.turns);
  for (const auto& t : r.turns) CHECK(t.chosen == t.truth);
}

TEST_CASE("lower bound over distinct clusters") {
  const auto w = fixture::toy_world(700, 8, 4, 31);
  SentenceBank bank(w.corpus, w.table, w.model);
  const auto r = evaluate_policy(Policy::kLowerBound, bank, fixture::all_dialogues(bank), {}, EvalOptions{});
  REQUIRE(r.summary.turns >= 5000);
  const double per_turn = r.summary.avg_reward / 8.0;
  CHECK(std::abs(per_turn + 0.9) <= 0.05);
  CHECK(std::abs(r.summary.recall1 - 0.05) <= 0.01);
  CHECK(std::abs(r.summary.recall5 - 0.25) <= 0.02);
}

TEST_CASE("evaluation is seeded per dialogue and turn") {
  const auto w = fixture::toy_world(40, 5, 4, 8);
  SentenceBank bank(w.corpus, w.table, w.model);
  const auto ids = fixture::all_dialogues(bank);
  EvalOptions opts;
  opts.seed = 12;
  const auto a = evaluate_policy(Policy::kLowerBound, bank, ids, {}, opts);
  const auto b = evaluate_policy(Policy::kLowerBound, bank, ids, {}, opts);
  REQUIRE(a.turns.size() == b.turns.size());
  for (std::size_t i = 0; i < a.turns.size(); ++i) CHECK(a.turns[i].chosen == b.turns[i].chosen);

  // dialogue order does not change what each dialogue sees
  std::vector<std::size_t> rev(ids.rbegin(), ids.rend());
  const auto c = evaluate_policy(Policy::kLowerBound, bank, rev, {}, opts);
  CHECK(c.turns.front().chosen == a.turns[a.turns.size() - 5].chosen);
  CHECK(c.summary.avg_reward == doctest::Approx(a.summary.avg_reward));

  opts.seed = 13;
  const auto d = evaluate_policy(Policy::kLowerBound, bank, ids, {}, opts);
  int same = 0;
  for (std::size_t i = 0; i < a.turns.size(); ++i) same += a.turns[i].chosen == d.turns[i].chosen;
  CHECK(same < static_cast<int>(a.turns.size()) / 2);
}

TEST_CASE("single agent and one-member ensemble report identically") {
  const auto corpus = load_corpus(fixture::desk_path("train.jsonl"), Split::kTrain);
  const auto table = load_embeddings(fixture::desk_path("vectors.txt"));
  const auto model = fit_sentence_clusters(corpus, table, 10, {}, 2);
  SentenceBank bank(corpus, table, model);
  AgentConfig cfg;
  cfg.hidden = 6;
  cfg.minibatch = 4;
  cfg.burn_in = 30;
  cfg.learn_steps = 40;
  cfg.target_sync = 20;
  ChatDQNAgent single(cfg, table.dim(), model.k());
  train(single, bank, fixture::all_dialogues(bank));
  RegressorConfig rc;
  rc.hidden = 4;
  rc.epochs = 2;
  const auto reg = train_regressor(build_reward_dataset(bank, {0, 1, 2, 3, 4}, {0.0, 1.0}, 1, 1), table, rc);
  EnsembleOptions eo;
  eo.dialogue_clusters = 1;
  const auto ens = train_ensemble(corpus, bank, table, model, reg.regressor, cfg, eo);

  const auto ids = fixture::all_dialogues(bank);
  const auto s = evaluate_policy(Policy::kSingle, bank, ids, {&single, nullptr}, EvalOptions{});
  const auto e = evaluate_policy(Policy::kEnsemble, bank, ids, {nullptr, &ens}, EvalOptions{});
  CHECK(s.summary.avg_reward == e.summary.avg_reward);
  CHECK(s.summary.f1 == e.summary.f1);
  CHECK(s.summary.recall1 == e.summary.recall1);
  CHECK(s.summary.recall5 == e.summary.recall5);
  REQUIRE(s.turns.size() == e.turns.size());
  for (std::size_t i = 0; i < s.turns.size(); ++i) {
    CHECK(s.turns[i].chosen == e.turns[i].chosen);
    CHECK(e.turns[i].member == 0);
    CHECK(s.turns[i].member == -1);
  }
  for (const auto& r : {s.summary, e.summary}) {
    CHECK(r.recall1 <= r.recall5);
    CHECK(r.f1 >= 0.0);
    CHECK(r.f1 <= 1.0);
  }
  CHECK_THROWS_AS(evaluate_policy(Policy::kSingle, bank, ids, {}, EvalOptions{}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_policy(Policy::kEnsemble, bank, ids, {}, EvalOptions{}), std::invalid_argument);

  EnsembleOptions three;
  three.dialogue_clusters = 3;
  const auto ens3 = train_ensemble(corpus, bank, table, model, reg.regressor, cfg, three);
  EvalOptions once;
  once.select_once = true;
  const auto o = evaluate_policy(Policy::kEnsemble, bank, ids, {nullptr, &ens3}, once);
  for (std::size_t i = 1; i < o.turns.size(); ++i) {
    if (o.turns[i].dialogue == o.turns[i - 1].dialogue) CHECK(o.turns[i].member == o.turns[i - 1].member);
  }
}

TEST_CASE("report writers") {
  PolicySummary a;
  a.policy = "upper_bound";
  a.dialogues = 2;
  a.turns = 9;
  a.avg_reward = 4.5;
  a.f1 = 1;
  a.recall1 = 1;
  a.recall5 = 1;
  std::ostringstream csv;
  write_summary_csv(csv, {a});
  CHECK(csv.str() == "policy,dialogues,turns,avg_reward,f1,recall_at_1,recall_at_5\nupper_bound,2,9,4.5,1,1,1\n");

  TurnRecord t;
  t.dialogue = "d1";
  t.turn = 3;
  t.chosen = "hi";
  t.truth = "hello";
  t.reward = -1;
  std::ostringstream jl;
  write_turns_jsonl(jl, "single", {t});
  const auto j = nlohmann::json::parse(jl.str());
  CHECK(j["policy"] == "single");
  CHECK(j["turn"] == 3);
  CHECK(j["reward"] == -1);
  CHECK_FALSE(j.contains("member"));
}

TEST_CASE("moving averages and learning curves") {
  CHECK(moving_average({1, 2, 3, 4, 5}, 2) == std::vector<double>{1.5, 2.5, 3.5, 4.5});
  CHECK(moving_average({1, 2, 3}, 1) == std::vector<double>{1, 2, 3});
  CHECK(moving_average({1, 2}, 3).empty());
  CHECK_THROWS_AS(moving_average({1}, 0), std::invalid_argument);
  for (std::size_t n = 1; n < 30; ++n) {
    for (std::size_t w = 1; w <= n; ++w) CHECK(moving_average(std::vector<double>(n, 1.0), w).size() == n - w + 1);
  }

  std::vector<double> ramp(20);
  for (std::size_t i = 0; i < 20; ++i) ramp[i] = static_cast<double>(i);
  CHECK(decile_gain(ramp) == doctest::Approx(18.0));
  CHECK(decile_gain({2, 5}) == doctest::Approx(3.0));
  CHECK_THROWS_AS(decile_gain({}), std::invalid_argument);

  TrainingLog log;
  for (std::size_t i = 0; i < 6; ++i) log.push_back({i, 8 * (i + 1), 0.5, static_cast<int>(i), 8});
  std::ostringstream out;
  write_learning_curves(out, {{"single", log}}, 3);
  CHECK(out.str() == "agent,episode,smoothed_reward\nsingle,2,1\nsingle,3,2\nsingle,4,3\nsingle,5,4\n");
}
