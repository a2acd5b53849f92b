#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chatdqn/common.hpp"
#include "chatdqn/corpus.hpp"

namespace chatdqn {

// Pretrained word vectors, immutable after load.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  explicit WordEmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  // Returns false (and keeps the existing vector) if the token is present.
  bool insert(const std::string& token, Vec v);
  const Vec* find(std::string_view token) const;

  // Order-independent hash over tokens and coefficient bits.
  std::uint64_t fingerprint() const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, Vec> entries_;
};

struct EmbeddingLoadReport {
  std::size_t entries = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
};

// Standard word-vector text format: "token c1 ... c_dim" per line.
// Throws FormatError on inconsistent dimension or a non-numeric coefficient.
WordEmbeddingTable load_embeddings(const std::string& path, EmbeddingLoadReport* report = nullptr);
WordEmbeddingTable parse_embeddings(std::string_view content, const std::string& source,
                                    EmbeddingLoadReport* report = nullptr);

// Mean of in-vocabulary token vectors; zero vector if none are known.
Vec sentence_vector(const std::vector<std::string>& tokens, const WordEmbeddingTable& table);

using HistoryState = std::vector<Vec>;

// Embeds the most recent `max_history` sentences in chronological order.
HistoryState history_state(const std::vector<Sentence>& history, const WordEmbeddingTable& table,
                           std::size_t max_history);

// Stacks a history as network input: one column per time step.
Mat to_sequence(const HistoryState& state, std::size_t dim);

}  // namespace chatdqn
