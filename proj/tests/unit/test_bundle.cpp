#include <doctest.h>

#include <cmath>
#include <sstream>

#include "chatdqn/bundle.hpp"
#include "desk_bundle.hpp"

using namespace chatdqn;

namespace {

Mat random_history(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(1 + uniform_index(rng, 12)));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

ModelBundle round_trip(const ModelBundle& b) {
  std::stringstream buf;
  save_bundle(buf, b);
  return load_bundle(buf);
}

}  // namespace

TEST_CASE("bundle round trip is bit-identical on random inputs") {
  const auto& d = fixture::desk_bundle();
  const ModelBundle& a = *d.bundle;
  const ModelBundle b = round_trip(a);
  CHECK(b.version == a.version);
  CHECK(b.config == a.config);
  CHECK(b.embedding_fingerprint == a.embedding_fingerprint);
  CHECK(b.embedding_dim == a.embedding_dim);
  REQUIRE(b.ensemble.members.size() == a.ensemble.members.size());
  REQUIRE(b.single.has_value());
  CHECK(b.single->log.size() == a.single->log.size());

  SentenceBank bank(d.corpus, d.table, a.ensemble.sentence_model);
  Rng rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const Mat h = random_history(rng, d.table.dim());
    for (std::size_t m = 0; m < a.ensemble.members.size(); ++m) {
      CHECK((a.ensemble.members[m].agent.q_values(h).array() == b.ensemble.members[m].agent.q_values(h).array()).all());
    }
    CHECK((a.single->agent.q_values(h).array() == b.single->agent.q_values(h).array()).all());
    CHECK(a.ensemble.regressor.predict(h) == b.ensemble.regressor.predict(h));
    const Vec x = h.col(0);
    CHECK(assign(a.ensemble.sentence_model, x) == assign(b.ensemble.sentence_model, x));

    Rng pick(rep);
    const auto cands = tag_candidates(bank, sample_distractors(bank, 20, {}, pick));
    Rng ra(rep), rb(rep);
    const auto r1 = respond(a.ensemble, bank, h, cands, ra);
    const auto r2 = respond(b.ensemble, bank, h, cands, rb);
    CHECK(r1.sentence == r2.sentence);
    CHECK(r1.member == r2.member);
    CHECK(r1.predicted_reward == r2.predicted_reward);
    CHECK(ra == rb);
  }

  std::stringstream once, twice;
  save_bundle(once, a);
  save_bundle(twice, b);
  CHECK(once.str() == twice.str());
}

TEST_CASE("bundle without a single agent") {
  ModelBundle b;
  b.config = "hidden = 3\n";
  const auto back = round_trip(b);
  CHECK_FALSE(back.single.has_value());
  CHECK(back.ensemble.members.empty());
  CHECK(back.config == b.config);
}

TEST_CASE("bundle refuses other versions and foreign files") {
  ModelBundle b;
  b.version = "chatdqn-bundle/0";
  std::stringstream old;
  save_bundle(old, b);
  try {
    load_bundle(old);
    FAIL("expected a version error");
  } catch (const BundleVersionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("chatdqn-bundle/0") != std::string::npos);
    CHECK(msg.find(kBundleVersion) != std::string::npos);
  }
  std::stringstream junk("this is not a bundle at all");
  CHECK_THROWS_AS(load_bundle(junk), std::runtime_error);
  std::stringstream empty;
  CHECK_THROWS_AS(load_bundle(empty), std::runtime_error);
  CHECK_THROWS_AS(load_bundle(std::string("/nonexistent/bundle.bin")), std::runtime_error);

  b.version = kBundleVersion;
  std::stringstream full;
  save_bundle(full, b);
  std::stringstream cut(full.str().substr(0, full.str().size() - 4));
  CHECK_THROWS_AS(load_bundle(cut), std::runtime_error);
}

TEST_CASE("bundle checks the word vectors") {
  const auto& d = fixture::desk_bundle();
  CHECK_NOTHROW(check_embeddings(*d.bundle, d.table));
  WordEmbeddingTable other = d.table;
  Vec v = Vec::Zero(static_cast<Eigen::Index>(d.table.dim()));
  other.insert("zzz-unseen", v);
  CHECK_THROWS_AS(check_embeddings(*d.bundle, other), std::runtime_error);
  CHECK_THROWS_AS(check_embeddings(*d.bundle, WordEmbeddingTable(3)), std::runtime_error);
}
