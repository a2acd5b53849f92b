#include "chatdqn/http_server.hpp"

#include <httplib.h>
#include <json.hpp>

namespace chatdqn {

namespace {

void send(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  if (!r.body.empty()) res.set_content(r.body, "application/json");
}

}  // namespace

struct ChatServer::Impl {
  ChatService& service;
  httplib::Server server;

  explicit Impl(ChatService& s) : service(s) {
    server.Post("/api/session",
                [this](const httplib::Request& req, httplib::Response& res) { send(res, service.create_session(req.body)); });
    server.Post("/api/chat",
                [this](const httplib::Request& req, httplib::Response& res) { send(res, service.chat(req.body)); });
    server.Get("/api/agents", [this](const httplib::Request&, httplib::Response& res) { send(res, service.agents()); });
    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
    server.Delete(R"(/api/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, service.delete_session(req.matches[1]));
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send(res, {500, nlohmann::json{{"error", what}}.dump()});
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send(res, {res.status, nlohmann::json{{"error", httplib::status_message(res.status)}}.dump()});
    });
  }
};

ChatServer::ChatServer(ChatService& service) : impl_(std::make_unique<Impl>(service)) {}
ChatServer::~ChatServer() = default;

int ChatServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool ChatServer::run() { return impl_->server.listen_after_bind(); }
void ChatServer::stop() { impl_->server.stop(); }
void ChatServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace chatdqn
