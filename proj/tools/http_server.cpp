#include "http_server.hpp"

#include <chrono>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "modpipe/model.hpp"

namespace modpipe::tools {
namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind,
                std::string_view message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

// Parses a JSON object body; on failure fills `res` and returns nullopt.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res,
                               std::size_t max_bytes) {
  if (req.body.size() > max_bytes) {
    send_error(res, 413, "too_large", "request body exceeds " + std::to_string(max_bytes) + " bytes");
    return std::nullopt;
  }
  if (req.body.empty()) {
    send_error(res, 400, "invalid_input", "empty body");
    return std::nullopt;
  }
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    send_error(res, 400, "invalid_input", "body must be a JSON object");
    return std::nullopt;
  }
  return j;
}

std::optional<std::string> string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<const ModerationService> scorer,
                       std::shared_ptr<LabelingService> labeling, const ServiceConfig& cfg)
    : scorer_(std::move(scorer)),
      labeling_(std::move(labeling)),
      cfg_(cfg),
      server_(std::make_unique<httplib::Server>()) {
  if (!scorer_) throw InputError("http server needs a scorer");
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto& s = *server_;
  // Slightly above the limit so oversized bodies reach the handler and get
  // the JSON 413, while anything far larger is cut off by httplib itself.
  s.set_payload_max_length(cfg_.max_body_bytes + 1024);

  s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!cfg_.auth_token) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + *cfg_.auth_token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, 401, "unauthorized", "missing or invalid bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const InputError& e) {
      send_error(res, 400, e.kind(), e.what());
    } catch (const Error& e) {
      send_error(res, 500, e.kind(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  s.Post("/v1/moderate", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res, cfg_.max_body_bytes);
    if (!body) return;
    auto text = string_field(*body, "text");
    if (!text || text->empty()) return send_error(res, 400, "invalid_input", "text is required");
    send_json(res, 200, to_json(scorer_->moderate(*text)));
  });

  s.Get("/v1/queue/next", [this](const httplib::Request&, httplib::Response& res) {
    if (!labeling_) return send_error(res, 503, "unavailable", "no labeling queue configured");
    auto item = labeling_->queue_next();
    if (!item) {
      res.status = 204;
      return;
    }
    send_json(res, 200, to_json(*item));
  });

  s.Post("/v1/labels", [this](const httplib::Request& req, httplib::Response& res) {
    if (!labeling_) return send_error(res, 503, "unavailable", "no labeling queue configured");
    auto body = parse_body(req, res, cfg_.max_body_bytes);
    if (!body) return;
    auto id = string_field(*body, "id");
    if (!id || id->empty()) return send_error(res, 400, "invalid_input", "id is required");
    if (!body->contains("labels") || !(*body)["labels"].is_object()) {
      return send_error(res, 400, "invalid_input", "labels must be an object");
    }
    const auto labels = label_vector_from_json((*body)["labels"]);
    const auto annotator = string_field(*body, "annotator").value_or("");
    switch (labeling_->submit_label(*id, labels, annotator)) {
      case LabelingService::SubmitStatus::ok:
        return send_json(res, 200, {{"status", "ok"}, {"id", *id}});
      case LabelingService::SubmitStatus::unknown_id:
        return send_error(res, 404, "not_found", "unknown id: " + *id);
      case LabelingService::SubmitStatus::already_completed:
        return send_error(res, 409, "conflict", "already labeled: " + *id);
    }
  });

  s.Post("/v1/redteam", [this](const httplib::Request& req, httplib::Response& res) {
    if (!labeling_) return send_error(res, 503, "unavailable", "no red-team store configured");
    auto body = parse_body(req, res, cfg_.max_body_bytes);
    if (!body) return;
    auto text = string_field(*body, "text");
    if (!text || text->empty()) return send_error(res, 400, "invalid_input", "text is required");
    LabelVector expected;
    if (body->contains("expected")) expected = label_vector_from_json((*body)["expected"]);
    const auto note = string_field(*body, "note").value_or("");
    auto rc = labeling_->submit_redteam(*text, expected, note);
    json out = {{"case", to_json(rc.sample)}};
    if (rc.warning) out["warning"] = *rc.warning;
    send_json(res, 201, out);
  });
}

int HttpServer::bind() {
  if (cfg_.port == 0) return server_->bind_to_any_port(cfg_.host);
  if (!server_->bind_to_port(cfg_.host, cfg_.port)) {
    throw StorageError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  }
  return cfg_.port;
}

bool HttpServer::listen() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

bool HttpServer::running() const { return server_->is_running(); }

ServiceBundle make_services(const ServiceConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw InputError("service.checkpoint is required");
  auto model = std::make_shared<const Model>(load_checkpoint(cfg.checkpoint));
  auto scorer = std::make_shared<const ModerationService>(model, cfg.thresholds);

  ServiceBundle b;
  b.scorer = scorer;
  if (cfg.corpus_path.empty() && cfg.redteam_path.empty() && cfg.queue_path.empty()) return b;

  std::vector<std::string> ids;
  if (!cfg.queue_path.empty()) ids = load_queue_ids(cfg.queue_path);
  auto queue = std::make_unique<LeaseQueue>(std::move(ids), std::chrono::seconds(cfg.lease_seconds));
  const std::string corpus = cfg.corpus_path.empty() ? "corpus.jsonl" : cfg.corpus_path;
  const std::string redteam = cfg.redteam_path.empty() ? "redteam.jsonl" : cfg.redteam_path;
  b.labeling = std::make_shared<LabelingService>(scorer, CorpusStore(corpus), CorpusStore(redteam),
                                                 std::move(queue));
  return b;
}

}  // namespace modpipe::tools
