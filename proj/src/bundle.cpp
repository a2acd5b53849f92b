#include "chatdqn/bundle.hpp"

#include <fstream>
#include <sstream>

namespace chatdqn {

namespace {

constexpr const char* kMagic = "chatdqn";

}  // namespace

void save_bundle(std::ostream& out, const ModelBundle& b) {
  BinaryWriter w(out);
  w.str(kMagic);
  w.str(b.version);
  w.str(b.config);
  w.u64(b.embedding_fingerprint);
  w.u64(b.embedding_dim);
  b.ensemble.save(w);
  w.u64(b.single ? 1 : 0);
  if (b.single) {
    b.single->agent.save(w);
    save_training_log(w, b.single->log);
  }
  w.str("end");
}

void save_bundle(const std::string& path, const ModelBundle& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write bundle " + path);
  save_bundle(out, b);
  if (!out) throw std::runtime_error("failed writing bundle " + path);
}

ModelBundle load_bundle(std::istream& in) {
  BinaryReader r(in);
  std::string magic;
  try {
    magic = r.str();
  } catch (const std::runtime_error&) {
    throw std::runtime_error("not a model bundle");
  }
  if (magic != kMagic) throw std::runtime_error("not a model bundle");
  ModelBundle b;
  b.version = r.str();
  if (b.version != kBundleVersion) {
    throw BundleVersionError("bundle version '" + b.version + "' is not supported (expected '" + kBundleVersion +
                             "'); retrain with this build");
  }
  b.config = r.str();
  b.embedding_fingerprint = r.u64();
  b.embedding_dim = r.u64();
  b.ensemble = Ensemble::load(r);
  if (r.u64() != 0) {
    ChatDQNAgent agent = ChatDQNAgent::load(r);
    TrainingLog log = load_training_log(r);
    b.single.emplace(SingleAgent{std::move(agent), std::move(log)});
  }
  r.expect("end");
  return b;
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read bundle " + path);
  return load_bundle(in);
}

void check_embeddings(const ModelBundle& b, const WordEmbeddingTable& table) {
  if (table.dim() != b.embedding_dim || table.fingerprint() != b.embedding_fingerprint) {
    std::ostringstream msg;
    msg << "word vectors do not match the bundle (bundle dim " << b.embedding_dim << ", fingerprint " << std::hex
        << b.embedding_fingerprint << "; loaded dim " << std::dec << table.dim() << ", fingerprint " << std::hex
        << table.fingerprint() << ")";
    throw std::runtime_error(msg.str());
  }
}

}  // namespace chatdqn
