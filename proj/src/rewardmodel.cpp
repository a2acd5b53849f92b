#include "chatdqn/rewardmodel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace chatdqn {

namespace {

Mat to_input(const std::vector<Sentence>& sentences, const WordEmbeddingTable& table, std::size_t cap) {
  std::vector<Sentence> tail(sentences.end() - static_cast<std::ptrdiff_t>(std::min(cap, sentences.size())),
                             sentences.end());
  return to_sequence(history_state(tail, table, cap), table.dim());
}

double mean_sq_error(const RegressorNet& r, const std::vector<Mat>& inputs, const std::vector<NoisyDialogue>& data,
                     const std::vector<std::size_t>& index) {
  if (index.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i : index) {
    const double d = r.predict(inputs[i]) - data[i].label;
    s += d * d;
  }
  return s / static_cast<double>(index.size());
}

}  // namespace

NoisyDialogue distort_dialogue_at(const SentenceBank& bank, std::size_t dialogue,
                                  const std::vector<bool>& replace, Rng& rng) {
  const auto& ids = bank.dialogue(dialogue);
  const std::size_t turns = ids.size() / 2;
  if (replace.size() != turns) throw std::invalid_argument("replacement mask must have one entry per turn");
  NoisyDialogue out;
  out.source = bank.dialogue_id(dialogue);
  out.turns = static_cast<int>(turns);
  for (std::size_t t = 0; t < turns; ++t) {
    out.sentences.push_back(bank.sentence(ids[2 * t]));
    if (replace[t]) {
      out.sentences.push_back(bank.sentence(sample_distractors(bank, 1, bank.members(dialogue), rng)[0]));
      ++out.k;
    } else {
      out.sentences.push_back(bank.sentence(ids[2 * t + 1]));
    }
  }
  out.label = out.turns - 2 * out.k;
  return out;
}

NoisyDialogue distort_dialogue(const SentenceBank& bank, std::size_t dialogue, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("noise rate must lie in [0, 1]");
  const std::size_t turns = bank.dialogue(dialogue).size() / 2;
  std::vector<bool> replace(turns);
  for (std::size_t t = 0; t < turns; ++t) {
    const double u = uniform01(rng);
    replace[t] = rate >= 1.0 || u < rate;
  }
  return distort_dialogue_at(bank, dialogue, replace, rng);
}

std::vector<NoisyDialogue> build_reward_dataset(const SentenceBank& bank,
                                                const std::vector<std::size_t>& dialogues,
                                                const std::vector<double>& rates, std::size_t per_dialogue,
                                                std::uint64_t seed) {
  std::vector<NoisyDialogue> out;
  out.reserve(dialogues.size() * rates.size() * per_dialogue);
  for (std::size_t d : dialogues) {
    Rng rng(derive_seed(seed, d));
    for (double rate : rates) {
      for (std::size_t i = 0; i < per_dialogue; ++i) out.push_back(distort_dialogue(bank, d, rate, rng));
    }
  }
  return out;
}

void write_noisy_jsonl(std::ostream& out, const std::vector<NoisyDialogue>& data) {
  for (const auto& n : data) {
    nlohmann::json j;
    j["source"] = n.source;
    j["sentences"] = nlohmann::json::array();
    for (const auto& s : n.sentences) j["sentences"].push_back(s.text);
    j["turns"] = n.turns;
    j["label"] = n.label;
    j["k"] = n.k;
    out << j.dump() << '\n';
  }
}

std::vector<NoisyDialogue> read_noisy_jsonl(std::istream& in, const std::string& source) {
  std::vector<NoisyDialogue> data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NoisyDialogue n;
      n.source = j.value("source", std::string());
      for (const auto& s : j.at("sentences")) n.sentences.push_back(make_sentence(s.get<std::string>()));
      n.k = j.at("k").get<int>();
      n.label = j.at("label").get<int>();
      n.turns = j.value("turns", static_cast<int>(n.sentences.size() / 2));
      data.push_back(std::move(n));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source, lineno, e.what());
    }
  }
  return data;
}

double RegressorNet::predict(const Mat& sequence) const {
  return net.infer(sequence)[0] * label_scale + label_mean;
}

void RegressorNet::save(BinaryWriter& w) const {
  w.str("regressor");
  w.f64(label_mean);
  w.f64(label_scale);
  w.u64(max_history);
  net.save(w);
}

RegressorNet RegressorNet::load(BinaryReader& r) {
  r.expect("regressor");
  RegressorNet out;
  out.label_mean = r.f64();
  out.label_scale = r.f64();
  out.max_history = r.u64();
  out.net = nn::Network::load(r);
  return out;
}

RegressorTraining train_regressor(const std::vector<NoisyDialogue>& data, const WordEmbeddingTable& table,
                                  const RegressorConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("regressor training needs data");
  if (cfg.minibatch == 0) throw std::invalid_argument("minibatch must be positive");
  Rng rng(derive_seed(cfg.seed, 3));

  std::vector<std::string> sources;
  for (const auto& n : data) sources.push_back(n.source);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  for (std::size_t i = sources.size(); i > 1; --i) std::swap(sources[i - 1], sources[uniform_index(rng, i)]);
  const auto held = static_cast<std::size_t>(std::ceil(cfg.holdout * static_cast<double>(sources.size())));
  const std::set<std::string> held_sources(sources.begin(),
                                           sources.begin() + static_cast<std::ptrdiff_t>(std::min(held, sources.size())));

  RegressorTraining out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (held_sources.count(data[i].source) ? out.heldout_index : out.train_index).push_back(i);
  }
  if (out.train_index.empty()) throw std::invalid_argument("held-out fraction leaves no training data");

  double mean = 0.0;
  for (std::size_t i : out.train_index) mean += data[i].label;
  mean /= static_cast<double>(out.train_index.size());
  double var = 0.0;
  for (std::size_t i : out.train_index) var += (data[i].label - mean) * (data[i].label - mean);
  var /= static_cast<double>(out.train_index.size());

  RegressorNet& reg = out.regressor;
  reg.label_mean = mean;
  reg.label_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  reg.max_history = cfg.max_history;
  nn::NetworkSpec spec;
  spec.input = static_cast<Eigen::Index>(table.dim());
  spec.hidden = static_cast<Eigen::Index>(cfg.hidden);
  spec.output = 1;
  spec.dropout = cfg.dropout;
  spec.batch_norm = true;
  spec.bn_momentum = cfg.bn_momentum;
  reg.net = nn::build_network(spec, rng);

  std::vector<Mat> inputs;
  inputs.reserve(data.size());
  for (const auto& n : data) inputs.push_back(to_input(n.sentences, table, cfg.max_history));

  nn::AdamState adam;
  adam.config.lr = cfg.learning_rate;
  std::vector<std::size_t> order = out.train_index;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      std::vector<const Mat*> seqs;
      Mat target(1, static_cast<Eigen::Index>(end - start));
      for (std::size_t j = start; j < end; ++j) {
        seqs.push_back(&inputs[order[j]]);
        target(0, static_cast<Eigen::Index>(j - start)) = (data[order[j]].label - reg.label_mean) / reg.label_scale;
      }
      nn::Network::Cache cache;
      const Mat y = reg.net.forward_train(nn::make_batch(seqs, spec.input), &rng, cache);
      const Mat upstream = 2.0 * (y - target) / static_cast<double>(end - start);
      const auto grads = reg.net.backward(cache, upstream);
      nn::adam_step(reg.net, grads, adam);
      reg.net.commit(cache);
    }
    out.train_loss.push_back(mean_sq_error(reg, inputs, data, out.train_index));
    out.heldout_loss.push_back(mean_sq_error(reg, inputs, data, out.heldout_index));
  }
  return out;
}

double predict_reward(const RegressorNet& net, const std::vector<Sentence>& sentences,
                      const WordEmbeddingTable& table) {
  return net.predict(to_input(sentences, table, net.max_history));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace chatdqn
