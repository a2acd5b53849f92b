#pragma once

#include <string>
#include <vector>

#include "chatdqn/agent.hpp"
#include "chatdqn/clustering.hpp"
#include "chatdqn/corpus.hpp"
#include "chatdqn/embedding.hpp"

namespace fixture {

using namespace chatdqn;

// Every sentence is a single distinct word with a random vector, and every
// sentence is its own cluster, so candidate clusters never collide.
struct ToyWorld {
  Corpus corpus;
  WordEmbeddingTable table;
  ClusterModel model;
};

inline ToyWorld toy_world(std::size_t dialogues, std::size_t turns, std::size_t dim, std::uint64_t seed) {
  ToyWorld w;
  w.table = WordEmbeddingTable(dim);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t d = 0; d < dialogues; ++d) {
    Dialogue dlg;
    dlg.id = "toy" + std::to_string(d);
    for (std::size_t t = 0; t < turns; ++t) {
      Turn turn;
      for (int side = 0; side < 2; ++side) {
        const std::string word = "w" + std::to_string(d) + "x" + std::to_string(2 * t + side);
        Vec v(static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
        w.table.insert(word, v);
        (side == 0 ? turn.a : turn.b) = make_sentence(word);
      }
      dlg.turns.push_back(std::move(turn));
    }
    w.corpus.dialogues.push_back(std::move(dlg));
  }
  w.corpus.index_vocabulary();
  w.model.centroids = unique_sentence_vectors(w.corpus, w.table);
  return w;
}

inline Dialogue dialogue(const std::string& id, const std::vector<std::pair<std::string, std::string>>& turns) {
  Dialogue d;
  d.id = id;
  for (const auto& [a, b] : turns) d.turns.push_back(Turn{make_sentence(a), make_sentence(b)});
  return d;
}

inline std::vector<std::size_t> all_dialogues(const SentenceBank& bank) {
  std::vector<std::size_t> out(bank.dialogue_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

inline std::string desk_path(const std::string& name) { return std::string(CHATDQN_DATA_DIR) + "/desk/" + name; }

}  // namespace fixture
