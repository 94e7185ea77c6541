#include <chrono>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "doctest.h"
#include "http_server.hpp"
#include "modpipe/desk.hpp"
#include "modpipe/service.hpp"

using namespace modpipe;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A running server over a three-sample corpus, scored by the planted-keyword
// model. The lease clock is driven by the test.
struct Server {
  fs::path dir = fs::temp_directory_path() / "modpipe-http-test";
  LeaseQueue::Clock::time_point now = LeaseQueue::Clock::now();
  std::shared_ptr<const ModerationService> scorer;
  std::shared_ptr<LabelingService> labeling;
  std::unique_ptr<tools::HttpServer> server;
  std::thread thread;
  int port = 0;

  explicit Server(std::optional<std::string> token = std::nullopt, std::vector<std::string> ids = {"s1", "s2", "s3"}) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    Dataset d("corpus");
    for (const auto& id : ids) {
      Sample s;
      s.id = id;
      s.text = "sample " + id;
      d.add(s);
    }
    CorpusStore(dir / "corpus.jsonl").save(d);
    std::array<double, kNumCategories> t;
    t.fill(0.5);
    scorer = std::make_shared<ModerationService>(std::make_shared<const Model>(desk::planted_keyword_model()), t);
    labeling = std::make_shared<LabelingService>(
        scorer, CorpusStore(dir / "corpus.jsonl"), CorpusStore(dir / "redteam.jsonl"),
        std::make_unique<LeaseQueue>(ids, 10min, [this] { return now; }));
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.auth_token = std::move(token);
    server = std::make_unique<tools::HttpServer>(scorer, labeling, cfg);
    port = server->bind();
    thread = std::thread([this] { server->listen(); });
    for (int i = 0; i < 200 && !server->running(); ++i) std::this_thread::sleep_for(5ms);
  }
  ~Server() {
    server->stop();
    thread.join();
    fs::remove_all(dir);
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

std::string label_body(const std::string& id) {
  return json{{"id", id}, {"labels", {{"V", "positive"}}}, {"annotator", "ann-1"}}.dump();
}

}  // namespace

TEST_CASE("POST /v1/moderate") {
  Server s;
  auto c = s.client();
  auto hit = c.Post("/v1/moderate", R"({"text": "you badword"})", "application/json");
  REQUIRE(hit);
  CHECK(hit->status == 200);
  CHECK(body(hit)["flagged"]["H"] == true);
  auto again = c.Post("/v1/moderate", R"({"text": "you badword"})", "application/json");
  CHECK(again->body == hit->body);
  auto calm = c.Post("/v1/moderate", R"({"text": "good morning"})", "application/json");
  CHECK(body(calm)["flagged"]["H"] == false);

  CHECK(c.Post("/v1/moderate", "", "application/json")->status == 400);
  CHECK(c.Post("/v1/moderate", R"({"text": ""})", "application/json")->status == 400);
  CHECK(c.Post("/v1/moderate", "not json", "application/json")->status == 400);
  const std::string big = json{{"text", std::string(40 * 1024, 'a')}}.dump();
  CHECK(c.Post("/v1/moderate", big, "application/json")->status == 413);
  CHECK(c.Get("/v1/nothing")->status == 404);
}

TEST_CASE("queue: lease, submit, conflict, unknown, empty") {
  Server s;
  auto c = s.client();
  auto first = c.Get("/v1/queue/next");
  REQUIRE(first);
  CHECK(first->status == 200);
  const auto id = body(first)["id"].get<std::string>();
  CHECK(id == "s1");
  CHECK(body(first)["scores"].size() == 8);

  CHECK(c.Post("/v1/labels", label_body(id), "application/json")->status == 200);
  CHECK(c.Post("/v1/labels", label_body(id), "application/json")->status == 409);
  CHECK(c.Post("/v1/labels", label_body("zzz"), "application/json")->status == 404);
  CHECK(c.Post("/v1/labels", R"({"id": "s2"})", "application/json")->status == 400);

  const auto stored = CorpusStore(s.dir / "corpus.jsonl").load();
  const auto* sample = stored.find(id);
  REQUIRE(sample->labels.size() == 1);
  CHECK(sample->labels[0].role == Role::annotator);
  CHECK(sample->labels[0].annotator_id == "ann-1");
  CHECK(sample->consolidated->is_positive(Category::V));

  CHECK(c.Get("/v1/queue/next")->status == 200);
  CHECK(c.Get("/v1/queue/next")->status == 200);
  CHECK(c.Get("/v1/queue/next")->status == 204);
}

TEST_CASE("an expired lease is re-issued exactly once at a time") {
  Server s({}, {"only"});
  auto c = s.client();
  CHECK(body(c.Get("/v1/queue/next"))["id"] == "only");
  CHECK(c.Get("/v1/queue/next")->status == 204);
  s.now += 10min;
  CHECK(body(c.Get("/v1/queue/next"))["id"] == "only");
  CHECK(c.Get("/v1/queue/next")->status == 204);
  CHECK(c.Post("/v1/labels", label_body("only"), "application/json")->status == 200);
  s.now += 1h;
  CHECK(c.Get("/v1/queue/next")->status == 204);
}

TEST_CASE("concurrent queue_next calls receive different ids") {
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back("c" + std::to_string(i));
  Server s({}, ids);
  std::mutex mu;
  std::vector<std::string> got;
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&] {
      auto c = s.client();
      for (;;) {
        auto r = c.Get("/v1/queue/next");
        if (!r || r->status != 200) break;
        std::lock_guard lock(mu);
        got.push_back(body(r)["id"]);
      }
    });
  }
  for (auto& t : workers) t.join();
  CHECK(got.size() == 40);
  CHECK(std::set<std::string>(got.begin(), got.end()).size() == 40);
}

TEST_CASE("red-team submission and bearer auth") {
  Server s("sekrit");
  auto c = s.client();
  CHECK(c.Post("/v1/moderate", R"({"text": "x"})", "application/json")->status == 401);
  c.set_bearer_token_auth("wrong");
  CHECK(c.Get("/v1/queue/next")->status == 401);
  c.set_bearer_token_auth("sekrit");
  auto r = c.Post("/v1/redteam",
                  R"({"text": "I hate black people!", "expected": {"H": "positive"}, "note": "t"})",
                  "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  CHECK(body(r)["case"]["metadata"]["origin"] == "redteam");
  auto dup = c.Post("/v1/redteam", R"({"text": "I hate black people!"})", "application/json");
  CHECK(dup->status == 201);
  CHECK(body(dup).contains("warning"));
  CHECK(CorpusStore(s.dir / "redteam.jsonl").load().size() == 2);
}

TEST_CASE("labels submitted over HTTP are visible to the next CLI invocation") {
  Server s;
  auto c = s.client();
  const auto id = body(c.Get("/v1/queue/next"))["id"].get<std::string>();
  REQUIRE(c.Post("/v1/labels", label_body(id), "application/json")->status == 200);

  const auto out = s.dir / "copy.jsonl";
  const std::string in = (s.dir / "corpus.jsonl").string();
  const std::string o = out.string();
  const char* argv[] = {"modpipe", "import", "--input", in.c_str(), "--out", o.c_str()};
  std::ostringstream so, se;
  REQUIRE(tools::run_cli(6, argv, so, se) == 0);
  CHECK(json::parse(so.str())["stats"]["labeled"] == 1);
}
