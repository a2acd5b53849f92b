#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "chatdqn/embedding.hpp"
#include "chatdqn/ensemble.hpp"

namespace chatdqn {

inline constexpr const char* kBundleVersion = "chatdqn-bundle/1";

struct SingleAgent {
  ChatDQNAgent agent;
  TrainingLog log;
};

// Everything a chat or evaluation run needs besides the word vectors, which
// are checked by fingerprint instead of stored.
struct ModelBundle {
  std::string version = kBundleVersion;
  std::string config;  // key = value snapshot
  Ensemble ensemble;
  std::optional<SingleAgent> single;
  std::uint64_t embedding_fingerprint = 0;
  std::size_t embedding_dim = 0;
};

class BundleVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_bundle(std::ostream& out, const ModelBundle& b);
void save_bundle(const std::string& path, const ModelBundle& b);
// Throws BundleVersionError when the file was written by another format version.
ModelBundle load_bundle(std::istream& in);
ModelBundle load_bundle(const std::string& path);

// Throws std::runtime_error when `table` is not the table the bundle was trained with.
void check_embeddings(const ModelBundle& b, const WordEmbeddingTable& table);

}  // namespace chatdqn
