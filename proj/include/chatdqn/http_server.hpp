#pragma once

#include <memory>
#include <string>

#include "chatdqn/service.hpp"

namespace chatdqn {

// JSON routes under /api bound to a ChatService.
class ChatServer {
 public:
  explicit ChatServer(ChatService& service);
  ~ChatServer();
  ChatServer(const ChatServer&) = delete;
  ChatServer& operator=(const ChatServer&) = delete;

  // Port 0 picks a free port. Returns the bound port, or -1 on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace chatdqn
