#pragma once

#include <memory>

#include "chatdqn/bundle.hpp"
#include "chatdqn/config.hpp"
#include "fixtures.hpp"

namespace fixture {

// A quickly trained bundle over the desk training split: three members plus a
// single agent.
struct DeskBundle {
  Corpus corpus = load_corpus(desk_path("train.jsonl"), Split::kTrain);
  WordEmbeddingTable table = load_embeddings(desk_path("vectors.txt"));
  std::shared_ptr<const ModelBundle> bundle;

  DeskBundle() {
    const auto model = fit_sentence_clusters(corpus, table, 10, {}, 1);
    SentenceBank bank(corpus, table, model);
    AgentConfig cfg;
    cfg.hidden = 6;
    cfg.minibatch = 4;
    cfg.burn_in = 20;
    cfg.learn_steps = 40;
    cfg.target_sync = 10;
    cfg.replay_capacity = 200;
    RegressorConfig rc;
    rc.hidden = 8;
    rc.epochs = 3;
    auto reg = train_regressor(build_reward_dataset(bank, all_dialogues(bank), {0.0, 1.0}, 1, 1), table, rc);
    EnsembleOptions eo;
    eo.dialogue_clusters = 3;
    eo.threads = 1;
    ModelBundle b;
    b.config = dump_config(PipelineConfig{});
    b.ensemble = train_ensemble(corpus, bank, table, model, reg.regressor, cfg, eo);
    ChatDQNAgent single(cfg, table.dim(), model.k());
    auto log = train(single, bank, all_dialogues(bank));
    b.single.emplace(SingleAgent{std::move(single), std::move(log)});
    b.embedding_fingerprint = table.fingerprint();
    b.embedding_dim = table.dim();
    bundle = std::make_shared<const ModelBundle>(std::move(b));
  }
};

inline const DeskBundle& desk_bundle() {
  static const DeskBundle d;
  return d;
}

}  // namespace fixture
