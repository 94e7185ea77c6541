#pragma once

#include <memory>
#include <optional>
#include <string>

#include "modpipe/config.hpp"
#include "modpipe/service.hpp"

namespace httplib {
class Server;
}

namespace modpipe::tools {

// The /v1 HTTP surface:
//   POST /v1/moderate    {"text"}                          -> ModerationResult
//   GET  /v1/queue/next                                    -> QueueItem | 204
//   POST /v1/labels      {"id", "labels", "annotator"}     -> 200 | 404 | 409
//   POST /v1/redteam     {"text", "expected", "note"}      -> 201 + stored case
// With an auth token every request needs "Authorization: Bearer <token>".
class HttpServer {
 public:
  HttpServer(std::shared_ptr<const ModerationService> scorer,
             std::shared_ptr<LabelingService> labeling, const ServiceConfig& cfg);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port (an ephemeral one when cfg.port is 0).
  int bind();
  // Blocks until stop().
  bool listen();
  void stop();
  bool running() const;

 private:
  void install_routes();

  std::shared_ptr<const ModerationService> scorer_;
  std::shared_ptr<LabelingService> labeling_;
  ServiceConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
};

// Builds the services from a ServiceConfig: loads the checkpoint, the
// optional queue file, and the corpus and red-team stores.
struct ServiceBundle {
  std::shared_ptr<const ModerationService> scorer;
  std::shared_ptr<LabelingService> labeling;
};

ServiceBundle make_services(const ServiceConfig& cfg);

}  // namespace modpipe::tools
