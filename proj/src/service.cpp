#include "chatdqn/service.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

namespace chatdqn {

namespace {

using nlohmann::json;

HttpResponse error(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }

std::string session_name(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

ChatService::ChatService(std::shared_ptr<const ModelBundle> bundle, const Corpus& pool, WordEmbeddingTable table,
                         ServiceOptions opts)
    : bundle_(std::move(bundle)),
      table_(std::move(table)),
      bank_(pool, table_, bundle_->ensemble.sentence_model),
      opts_(opts) {
  check_embeddings(*bundle_, table_);
  if (bundle_->ensemble.members.empty()) throw std::invalid_argument("bundle has no trained agents");
  if (opts_.candidates == 0) throw std::invalid_argument("need at least one candidate per reply");
  if (bank_.size() == 0) throw std::invalid_argument("candidate pool is empty");
  history_cap_ = bundle_->ensemble.regressor.max_history;
  for (const auto& m : bundle_->ensemble.members) history_cap_ = std::max(history_cap_, m.agent.config().max_history);
}

std::string ChatService::open_session(std::optional<std::uint64_t> seed) {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  auto s = std::make_shared<Session>();
  s->seed = seed ? *seed : derive_seed(opts_.seed, opened_);
  s->history = Mat(static_cast<Eigen::Index>(table_.dim()), 0);
  s->created_at = std::chrono::system_clock::now();
  std::string id;
  do {
    id = session_name(derive_seed(opts_.seed ^ 0x5e55104ULL, opened_++));
  } while (sessions_.count(id));
  sessions_.emplace(id, std::move(s));
  return id;
}

std::shared_ptr<ChatService::Session> ChatService::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw UnknownSession(id);
  return it->second;
}

std::uint64_t ChatService::session_seed(const std::string& id) const { return find(id)->seed; }

ChatReply ChatService::reply(const std::string& id, const std::string& utterance) {
  const auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  const Vec said = sentence_vector(tokenize(utterance), table_);
  const Mat history = extend_history(s->history, said, history_cap_);

  Rng cand_rng(derive_seed(s->seed, 2 * s->turn));
  Rng policy_rng(derive_seed(s->seed, 2 * s->turn + 1));
  const std::size_t n = std::min(opts_.candidates, bank_.size());
  const auto cands = tag_candidates(bank_, sample_distractors(bank_, n, {}, cand_rng));
  const auto r = respond(bundle_->ensemble, bank_, history, cands, policy_rng);

  s->history = extend_history(history, bank_.vector(r.sentence), history_cap_);
  ++s->turn;
  return {bank_.sentence(r.sentence).text, r.member, r.predicted_reward, cands.ids.size()};
}

bool ChatService::close_session(const std::string& id) {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  return sessions_.erase(id) > 0;
}

std::size_t ChatService::session_count() const {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  return sessions_.size();
}

HttpResponse ChatService::create_session(const std::string& body) {
  std::optional<std::uint64_t> seed;
  if (body.find_first_not_of(" \t\r\n") != std::string::npos) {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return error(400, "request body must be a JSON object");
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) return error(400, "seed must be a non-negative integer");
      seed = j["seed"].get<std::uint64_t>();
    }
  }
  const auto id = open_session(seed);
  return {200, json{{"session_id", id}, {"seed", session_seed(id)}}.dump()};
}

HttpResponse ChatService::chat(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return error(400, "request body must be a JSON object");
  if (!j.contains("session_id") || !j["session_id"].is_string()) return error(400, "session_id must be a string");
  if (!j.contains("utterance") || !j["utterance"].is_string()) return error(400, "utterance must be a string");
  const auto utterance = j["utterance"].get<std::string>();
  if (tokenize(utterance).empty()) return error(400, "utterance is empty");
  try {
    const auto r = reply(j["session_id"].get<std::string>(), utterance);
    return {200, json{{"response", r.response},
                      {"agent_id", r.agent_id},
                      {"predicted_reward", r.predicted_reward},
                      {"candidates_considered", r.candidates_considered}}
                     .dump()};
  } catch (const UnknownSession& e) {
    return error(404, e.what());
  }
}

HttpResponse ChatService::agents() const {
  json members = json::array();
  const auto& m = bundle_->ensemble.members;
  for (std::size_t i = 0; i < m.size(); ++i) members.push_back({{"id", i}, {"dialogue_cluster", m[i].dialogue_cluster}});
  return {200, json{{"members", members}}.dump()};
}

HttpResponse ChatService::health() const {
  return {200, json{{"status", "ok"}, {"bundle_version", bundle_->version}}.dump()};
}

HttpResponse ChatService::delete_session(const std::string& id) {
  if (!close_session(id)) return error(404, "unknown session '" + id + "'");
  return {204, ""};
}

}  // namespace chatdqn
