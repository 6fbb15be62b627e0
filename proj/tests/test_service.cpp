#include <filesystem>
#include <mutex>
#include <thread>

#include "doctest.h"

#include "cfdir/error.hpp"
#include "cfdir/service.hpp"

// after Eigen: <resolv.h> defines _res
#include "httplib.h"

using namespace cfdir;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct Running {
  fs::path store_dir;
  std::unique_ptr<Service> service;
  std::thread thread;
  int port = 0;
  std::vector<std::string> logs;

  explicit Running(LiveSessionOptions session = {}, std::optional<fs::path> ui = {}) {
    store_dir = fs::temp_directory_path() / ("cfdir_test_service_" + std::to_string(::getpid()));
    fs::remove_all(store_dir);
    ServiceOptions opts;
    opts.store_dir = store_dir;
    opts.ui_dir = ui;
    opts.session = session;
    opts.log = [this](std::string_view m) { logs.emplace_back(m); };
    service = std::make_unique<Service>(opts);
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->listen(); });
    service->wait_until_ready();
  }
  ~Running() {
    service->stop();
    thread.join();
    service.reset();
    fs::remove_all(store_dir);
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

Json json_of(const httplib::Result& r) {
  REQUIRE(r);
  return Json::parse(r->body);
}

httplib::Result post(httplib::Client& c, const std::string& path, const Json& body = Json::object()) {
  return c.Post(path, body.dump(), "application/json");
}

const char* kConfig = R"({"dataset": {"n_train": 9, "n_test": 60, "seed": 3}, "max_epochs": 100, "snapshot_every": 10})";

std::string create(httplib::Client& c, const std::string& body = kConfig) {
  auto r = c.Post("/api/sessions", body, "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  return Json::parse(r->body)["session_id"];
}

Json wait_phase(httplib::Client& c, const std::string& id, const std::string& phase) {
  for (int i = 0; i < 3000; ++i) {
    Json s = json_of(c.Get("/api/sessions/" + id + "/state"));
    if (s["phase"] == phase) return s;
    std::this_thread::sleep_for(5ms);
  }
  FAIL("session never reached " << phase);
  return {};
}

} // namespace

TEST_CASE("subscription coalesces grids and keeps metrics") {
  Subscription sub;
  auto msg = [](EventKind k, std::size_t epoch) {
    EventMessage m;
    m.kind = k;
    m.epoch = epoch;
    return m;
  };
  sub.push(msg(EventKind::EpochMetrics, 10));
  sub.push(msg(EventKind::GridSnapshot, 10));
  sub.push(msg(EventKind::EpochMetrics, 11));
  sub.push(msg(EventKind::EpochMetrics, 20));
  sub.push(msg(EventKind::GridSnapshot, 20));
  CHECK(sub.pending() == 4);
  std::vector<std::pair<EventKind, std::size_t>> got;
  while (auto m = sub.next(0ms)) got.emplace_back(m->kind, m->epoch);
  const std::vector<std::pair<EventKind, std::size_t>> expected = {{EventKind::EpochMetrics, 10},
                                                                   {EventKind::EpochMetrics, 11},
                                                                   {EventKind::EpochMetrics, 20},
                                                                   {EventKind::GridSnapshot, 20}};
  CHECK(got == expected);
  sub.close();
  sub.push(msg(EventKind::EpochMetrics, 21));
  CHECK_FALSE(sub.next(0ms).has_value());
  CHECK(sub.closed());

  EventMessage m = msg(EventKind::PhaseChange, 3);
  m.session_id = "s1";
  m.payload = {{"from", "Idle"}, {"to", "Running"}};
  CHECK(m.sse_frame() ==
        "event: phase_change\ndata: {\"epoch\":3,\"kind\":\"phase_change\",\"payload\":{\"from\":\"Idle\",\"to\":\"Running\"},"
        "\"session_id\":\"s1\"}\n\n");
}

TEST_CASE("session creation") {
  Running srv;
  auto c = srv.client();
  const std::string a = create(c), b = create(c);
  CHECK(a != b);
  const Json state = json_of(c.Get("/api/sessions/" + a + "/state"));
  CHECK(state["phase"] == "Idle");
  CHECK(state["epoch"] == 0);
  CHECK(state["history"].empty());

  auto r = c.Post("/api/sessions", R"({"model": {"hidden_layers": [16, 0]}})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  const Json err = Json::parse(r->body)["error"];
  CHECK(err["kind"] == "config");
  CHECK(err["field"] == "model.hidden_layers[1]");

  r = c.Post("/api/sessions", "{not json", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(Json::parse(r->body)["error"]["kind"] == "parse");

  r = c.Get("/api/sessions/nope/state");
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(json_of(c.Get("/api/sessions"))["sessions"].size() == 2);

  REQUIRE(c.Delete("/api/sessions/" + b)->status == 200);
  CHECK(c.Get("/api/sessions/" + b + "/state")->status == 404);

  CHECK(c.Get("/api/no-such-route")->status == 404);
  CHECK_FALSE(srv.logs.empty()); // no UI directory
}

TEST_CASE("control endpoints") {
  LiveSessionOptions slow;
  slow.epoch_interval = 1ms;
  Running srv(slow);
  auto c = srv.client();
  const std::string id = create(c, R"({"dataset": {"n_test": 20}, "max_epochs": 100000})");
  const std::string base = "/api/sessions/" + id;

  auto r = post(c, base + "/pause");
  REQUIRE(r);
  CHECK(r->status == 409);
  CHECK(Json::parse(r->body)["error"]["phase"] == "Idle");
  CHECK(Json::parse(r->body)["error"]["kind"] == "state");

  REQUIRE(post(c, base + "/start")->status == 200);
  CHECK(json_of(c.Get(base + "/state"))["phase"] == "Running");
  CHECK(post(c, base + "/reset")->status == 409);

  const Json paused = json_of(post(c, base + "/pause"));
  CHECK(paused["phase"] == "Paused");
  REQUIRE(post(c, base + "/lambda", {{"lambda", 0.0}})->status == 200);
  CHECK(post(c, base + "/lambda", {{"lambda", -1.0}})->status == 400);
  CHECK(post(c, base + "/lambda", {{"lambda", "x"}})->status == 400);

  const std::size_t at = paused["epoch"];
  REQUIRE(post(c, base + "/resume?pause_at=" + std::to_string(at + 5))->status == 200);
  const Json state = wait_phase(c, id, "Paused");
  CHECK(state["epoch"] == at + 5);
  const Json tail = json_of(c.Get(base + "/state?from_epoch=" + std::to_string(at)))["history"];
  REQUIRE(tail.size() == 5);
  for (const auto& h : tail) CHECK(h["lambda"] == 0.0);
  CHECK(tail[0]["epoch"] == at + 1);

  CHECK(post(c, base + "/pause?pause_at=3")->status == 400);
  CHECK(c.Get(base + "/state?from_epoch=abc")->status == 400);

  REQUIRE(post(c, base + "/reset")->status == 200);
  const Json reset = json_of(c.Get(base + "/state"));
  CHECK(reset["phase"] == "Idle");
  CHECK(reset["history"].empty());
  CHECK(reset["lambda"] == 0.0);
}

TEST_CASE("annotation endpoints") {
  Running srv;
  auto c = srv.client();
  const std::string base = "/api/sessions/" + create(c);

  auto r = post(c, base + "/annotations", {{"example_index", 2}, {"direction", {0, 5}}});
  REQUIRE(r);
  REQUIRE(r->status == 201);
  const Json a = Json::parse(r->body);
  CHECK(a["direction"] == Json::array({0.0, 1.0}));
  CHECK(a["example_index"] == 2);

  r = post(c, base + "/annotations", {{"example_index", 2}, {"direction", {0, 0}}});
  CHECK(r->status == 400);
  CHECK(Json::parse(r->body)["error"]["kind"] == "validation");
  CHECK(post(c, base + "/annotations", {{"example_index", 9}, {"direction", {1, 0}}})->status == 400);
  CHECK(post(c, base + "/annotations", {{"example_index", 1}})->status == 400);

  CHECK(json_of(c.Get(base + "/annotations"))["annotations"].size() == 1);
  const std::string path = base + "/annotations/" + std::to_string(a["id"].get<int>());
  CHECK(c.Delete(path)->status == 200);
  CHECK(c.Delete(path)->status == 404);
  CHECK(json_of(c.Get(base + "/annotations"))["annotations"].empty());
}

TEST_CASE("grid and dataset endpoints") {
  Running srv;
  auto c = srv.client();
  const std::string base = "/api/sessions/" + create(c);

  Json g = json_of(c.Get(base + "/grid?resolution=1000"));
  CHECK(g["resolution"] == 400);
  CHECK(g["requested_resolution"] == 1000);
  CHECK(g["clamped"] == true);
  CHECK(g["grid"]["values"].size() == 400);
  g = json_of(c.Get(base + "/grid?resolution=3"));
  CHECK(g["resolution"] == 10);
  g = json_of(c.Get(base + "/grid"));
  CHECK(g["resolution"] == kDefaultGridResolution);
  CHECK(g["clamped"] == false);
  CHECK_NOTHROW(grid_from_document(g["grid"]));

  const Json ds = json_of(c.Get(base + "/dataset"));
  const Dataset d = dataset_from_document(ds);
  CHECK(d.train.size() == 9);
  CHECK(d.test.size() == 60);
  CHECK(dump(dataset_document(d)) == dump(ds));
}

TEST_CASE("event stream") {
  Running srv;
  auto c = srv.client();
  const std::string id = create(c);
  auto sub1 = srv.service->subscribe(id);
  auto sub2 = srv.service->subscribe(id);
  CHECK_THROWS_AS(srv.service->subscribe("missing"), Error);
  CHECK(c.Get("/api/sessions/missing/events")->status == 404);

  REQUIRE(post(c, "/api/sessions/" + id + "/start")->status == 200);
  wait_phase(c, id, "Finished");

  auto drain = [](Subscription& sub) {
    std::vector<EventMessage> out;
    while (auto m = sub.next(2000ms)) {
      out.push_back(*m);
      if (m->kind == EventKind::PhaseChange && m->payload["to"] == "Finished") break;
    }
    return out;
  };
  const auto ev1 = drain(*sub1), ev2 = drain(*sub2);
  REQUIRE_FALSE(ev1.empty());
  CHECK(ev1.front().kind == EventKind::PhaseChange);
  CHECK(ev1.front().payload == Json({{"from", "Idle"}, {"to", "Running"}}));

  std::vector<Json> m1, m2;
  std::size_t grids = 0, last = 0;
  for (const auto& e : ev1) {
    if (e.kind == EventKind::EpochMetrics) {
      m1.push_back(e.payload);
      CHECK(e.epoch == last + 1);
      last = e.epoch;
    }
    if (e.kind == EventKind::GridSnapshot) {
      ++grids;
      CHECK(e.epoch <= last);
    }
  }
  for (const auto& e : ev2)
    if (e.kind == EventKind::EpochMetrics) m2.push_back(e.payload);
  CHECK(m1.size() == 100);
  CHECK(grids <= 10);
  CHECK(m1 == m2);
}

TEST_CASE("event stream over HTTP") {
  Running srv;
  auto c = srv.client();
  const std::string id = create(c);

  std::mutex mutex;
  std::string received;
  std::thread reader([&] {
    auto client = srv.client();
    client.Get("/api/sessions/" + id + "/events", [&](const char* data, std::size_t n) {
      std::lock_guard lock(mutex);
      received.append(data, n);
      return received.find("\"to\":\"Finished\"") == std::string::npos;
    });
  });
  // The stream greets with a comment once the subscription is registered.
  for (bool greeted = false; !greeted; std::this_thread::sleep_for(5ms)) {
    std::lock_guard lock(mutex);
    greeted = !received.empty();
  }
  REQUIRE(post(c, "/api/sessions/" + id + "/start")->status == 200);
  reader.join();

  std::size_t metrics = 0, pos = 0;
  while ((pos = received.find("event: epoch_metrics\n", pos)) != std::string::npos) {
    ++metrics;
    ++pos;
  }
  CHECK(metrics == 100);
  CHECK(received.rfind(": connected\n\n", 0) == 0);
  CHECK(received.find("event: phase_change\ndata: {\"epoch\":0,\"kind\":\"phase_change\","
                      "\"payload\":{\"from\":\"Idle\",\"to\":\"Running\"}") != std::string::npos);
}

TEST_CASE("experiments endpoints") {
  Running srv;
  auto c = srv.client();
  const std::string id = create(c);
  const std::string base = "/api/sessions/" + id;

  auto r = post(c, base + "/experiments", {{"name", "early"}});
  CHECK(r->status == 400); // no history yet

  REQUIRE(post(c, base + "/start")->status == 200);
  const Json state = wait_phase(c, id, "Finished");
  r = post(c, base + "/experiments", {{"name", "control run"}});
  REQUIRE(r->status == 201);
  CHECK(post(c, base + "/experiments", {{"name", "control run"}})->status == 409);
  CHECK(post(c, base + "/experiments", {{"name", ""}})->status == 409);

  const Json list = json_of(c.Get("/api/experiments"))["experiments"];
  REQUIRE(list.size() == 1);
  CHECK(list[0]["final_accuracy"] == state["history"].back()["test_accuracy"]);

  const Json one = json_of(c.Get("/api/experiments/control%20run"));
  CHECK(one["name"] == "control run");
  CHECK(c.Delete("/api/experiments/control%20run")->status == 200);
  CHECK(c.Delete("/api/experiments/control%20run")->status == 404);
  CHECK(c.Get("/api/experiments/control%20run")->status == 404);
}

TEST_CASE("static UI files") {
  const fs::path ui = fs::temp_directory_path() / "cfdir_test_ui";
  fs::create_directories(ui);
  write_file(ui / "index.html", "<html>ok</html>");
  {
    Running srv({}, ui);
    auto c = srv.client();
    auto r = c.Get("/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>ok</html>");
    CHECK(srv.logs.empty());
  }
  fs::remove_all(ui);
}
