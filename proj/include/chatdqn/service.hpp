#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "chatdqn/bundle.hpp"

namespace chatdqn {

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON, empty for 204
};

struct ServiceOptions {
  std::size_t candidates = 20;
  std::uint64_t seed = 1;  // source of session seeds when a request gives none
};

struct ChatReply {
  std::string response;
  std::size_t agent_id = 0;
  double predicted_reward = 0.0;
  std::size_t candidates_considered = 0;
};

class UnknownSession : public std::out_of_range {
 public:
  explicit UnknownSession(const std::string& id) : std::out_of_range("unknown session '" + id + "'") {}
};

// Session state and the handlers behind the HTTP routes. Responses depend only
// on the session seed and the utterances sent so far, so replaying a session
// on a fresh service reproduces it.
class ChatService {
 public:
  // Candidates are drawn from the distinct sentences of `pool`.
  ChatService(std::shared_ptr<const ModelBundle> bundle, const Corpus& pool, WordEmbeddingTable table,
              ServiceOptions opts = {});

  std::string open_session(std::optional<std::uint64_t> seed = std::nullopt);
  std::uint64_t session_seed(const std::string& id) const;
  ChatReply reply(const std::string& id, const std::string& utterance);
  bool close_session(const std::string& id);
  std::size_t session_count() const;

  // POST /api/session, body optional: {"seed": n}
  HttpResponse create_session(const std::string& body);
  // POST /api/chat, body {"session_id": "...", "utterance": "..."}
  HttpResponse chat(const std::string& body);
  // GET /api/agents
  HttpResponse agents() const;
  // GET /api/health
  HttpResponse health() const;
  // DELETE /api/session/{id}
  HttpResponse delete_session(const std::string& id);

 private:
  struct Session {
    std::uint64_t seed = 0;
    std::chrono::system_clock::time_point created_at;
    std::size_t turn = 0;
    Mat history;
    std::mutex mutex;
  };

  std::shared_ptr<Session> find(const std::string& id) const;

  std::shared_ptr<const ModelBundle> bundle_;
  WordEmbeddingTable table_;
  SentenceBank bank_;
  ServiceOptions opts_;
  std::size_t history_cap_ = 0;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t opened_ = 0;
};

}  // namespace chatdqn
