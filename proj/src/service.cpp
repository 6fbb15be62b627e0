#include "cfdir/service.hpp"

#include <atomic>
#include <charconv>
#include <iostream>
#include <map>

#include "httplib.h"

#include "cfdir/error.hpp"

namespace cfdir {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

// ---------------------------------------------------------------------------
// Events

Json EventMessage::to_json() const {
  return {{"kind", std::string(cfdir::to_string(kind))}, {"session_id", session_id}, {"epoch", epoch}, {"payload", payload}};
}

std::string EventMessage::sse_frame() const {
  return "event: " + std::string(cfdir::to_string(kind)) + "\ndata: " + to_json().dump() + "\n\n";
}

void Subscription::push(EventMessage message) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    if (message.kind == EventKind::GridSnapshot) {
      for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if (it->kind == EventKind::GridSnapshot) {
          queue_.erase(it);
          break; // at most one pending grid by construction
        }
      }
    }
    queue_.push_back(std::move(message));
  }
  cv_.notify_all();
}

std::optional<EventMessage> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  EventMessage m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

void Subscription::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t Subscription::pending() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::NumericInput:
    case ErrorKind::Index:
    case ErrorKind::Input:
    case ErrorKind::Validation:
    case ErrorKind::Parse: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::State:
    case ErrorKind::Naming: return 409;
    case ErrorKind::TrainingFault: return 500;
  }
  return 500;
}

// ---------------------------------------------------------------------------
// Registry

namespace {

class Hub {
 public:
  void add(std::shared_ptr<Subscription> sub) {
    std::lock_guard lock(mutex_);
    std::erase_if(subs_, [](const auto& w) { return w.expired(); });
    subs_.push_back(std::move(sub));
  }

  void publish(const EventMessage& message) {
    std::lock_guard lock(mutex_);
    for (auto it = subs_.begin(); it != subs_.end();) {
      if (auto sub = it->lock()) {
        sub->push(message);
        ++it;
      } else {
        it = subs_.erase(it);
      }
    }
  }

  void close_all() {
    std::lock_guard lock(mutex_);
    for (auto& w : subs_)
      if (auto sub = w.lock()) sub->close();
    subs_.clear();
  }

 private:
  std::mutex mutex_;
  std::vector<std::weak_ptr<Subscription>> subs_;
};

EventMessage to_message(const std::string& id, const SessionEvent& event) {
  EventMessage m;
  m.kind = event.kind;
  m.session_id = id;
  m.epoch = event.epoch;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, HistoryEntry>) m.payload = to_json(p);
        else if constexpr (std::is_same_v<T, std::shared_ptr<const ProbabilityGrid>>) m.payload = grid_document(*p);
        else if constexpr (std::is_same_v<T, PhaseChange>)
          m.payload = {{"from", std::string(to_string(p.from))}, {"to", std::string(to_string(p.to))}};
        else m.payload = {{"diagnostic", p}};
      },
      event.payload);
  return m;
}

struct SessionEntry {
  std::string id;
  std::shared_ptr<Hub> hub = std::make_shared<Hub>();
  std::unique_ptr<LiveSession> live;
};

Json error_body(const Error& e, std::optional<Phase> phase = {}) {
  Json err = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}, {"field", e.field()}};
  if (phase) err["phase"] = std::string(to_string(*phase));
  return {{"error", err}};
}

void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::optional<std::size_t> query_count(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  const std::string v = req.get_param_value(key);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw Error(ErrorKind::Input, std::string(key) + " must be a nonnegative integer", key);
  return out;
}

Json body_json(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = parse_json(req.body);
  if (!j.is_object()) throw Error(ErrorKind::Input, "request body must be a JSON object");
  return j;
}

} // namespace

struct Service::Impl {
  ServiceOptions options;
  ExperimentStore store;
  httplib::Server server;
  std::mutex registry_mutex;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
  std::uint64_t next_id = 1;
  std::atomic<bool> bound{false}, stopping{false};

  explicit Impl(ServiceOptions opts) : options(std::move(opts)), store(options.store_dir) { routes(); }

  void log(std::string_view msg) const {
    if (options.log) options.log(msg);
    else std::cerr << msg << std::endl;
  }

  std::shared_ptr<SessionEntry> find(const std::string& id) {
    std::lock_guard lock(registry_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorKind::NotFound, "no session '" + id + "'", "session_id");
    return it->second;
  }

  std::string create(const SessionConfig& config) {
    auto entry = std::make_shared<SessionEntry>();
    {
      std::lock_guard lock(registry_mutex);
      entry->id = "s" + std::to_string(next_id++);
    }
    std::weak_ptr<Hub> hub = entry->hub;
    const std::string id = entry->id;
    entry->live = std::make_unique<LiveSession>(config, options.session, [hub, id](const SessionEvent& e) {
      if (auto h = hub.lock()) h->publish(to_message(id, e));
    });
    std::lock_guard lock(registry_mutex);
    sessions.emplace(id, entry);
    return id;
  }

  Json state_json(const SessionEntry& entry, std::size_t from) const {
    const auto snap = entry.live->snapshot();
    auto history = entry.live->history(from);
    // History may run ahead of the snapshot by an epoch; keep them consistent.
    const std::size_t visible = snap->epoch > from ? snap->epoch - from : 0;
    if (history.size() > visible) history.resize(visible);

    SessionConfig config = entry.live->initial_config();
    config.loss.lambda = snap->lambda;
    Json annotations = Json::array(), hist = Json::array();
    for (const auto& a : snap->annotations) annotations.push_back(to_json(a));
    for (const auto& h : history) hist.push_back(to_json(h));
    return {{"session_id", entry.id},
            {"phase", std::string(to_string(snap->phase))},
            {"epoch", snap->epoch},
            {"lambda", snap->lambda},
            {"config", to_json(config)},
            {"annotations", annotations},
            {"from_epoch", from},
            {"history", hist},
            {"fault", snap->fault ? Json(*snap->fault) : Json(nullptr)},
            {"pause_at", snap->pause_at ? Json(*snap->pause_at) : Json(nullptr)}};
  }

  // Runs `fn`, mapping errors to JSON responses. `entry` (when known) gives
  // the current phase for conflict errors.
  template <typename F>
  void guarded(httplib::Response& res, F&& fn, const SessionEntry* entry = nullptr) {
    try {
      fn();
    } catch (const Error& e) {
      std::optional<Phase> phase;
      if (e.kind() == ErrorKind::State && entry) phase = entry->live->snapshot()->phase;
      send(res, http_status(e.kind()), error_body(e, phase));
    } catch (const std::exception& e) {
      send(res, 500, error_body(Error(ErrorKind::TrainingFault, e.what())));
    }
  }

  template <typename F>
  void with_session(const httplib::Request& req, httplib::Response& res, F&& fn) {
    std::shared_ptr<SessionEntry> entry;
    guarded(res, [&] { entry = find(req.matches[1]); });
    if (!entry) return;
    guarded(res, [&] { fn(*entry); }, entry.get());
  }

  void routes() {
    using httplib::Request;
    using httplib::Response;

    server.Get("/api/sessions", [this](const Request&, Response& res) {
      Json ids = Json::array();
      {
        std::lock_guard lock(registry_mutex);
        for (const auto& [id, _] : sessions) ids.push_back(id);
      }
      send(res, 200, {{"sessions", ids}});
    });

    server.Post("/api/sessions", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        const std::string id = create(session_config_from_json(body_json(req)));
        send(res, 201, state_json(*find(id), 0));
      });
    });

    server.Delete(R"(/api/sessions/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        std::shared_ptr<SessionEntry> entry = find(req.matches[1]);
        {
          std::lock_guard lock(registry_mutex);
          sessions.erase(entry->id);
        }
        entry->hub->close_all();
        send(res, 200, {{"deleted", entry->id}});
      });
    });

    server.Get(R"(/api/sessions/([^/]+)/state)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) { send(res, 200, state_json(s, query_count(req, "from_epoch").value_or(0))); });
    });

    server.Post(R"(/api/sessions/([^/]+)/(start|pause|resume|reset))", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        const std::string verb = req.matches[2];
        Command command = cmd::Start{};
        if (verb == "pause") command = cmd::Pause{};
        else if (verb == "resume") command = cmd::Resume{};
        else if (verb == "reset") command = cmd::Reset{};
        std::optional<std::size_t> pause_at = query_count(req, "pause_at");
        if (pause_at && verb != "start" && verb != "resume")
          throw Error(ErrorKind::Input, "pause_at applies to start and resume only", "pause_at");
        const CommandOutcome out = s.live->submit(command, pause_at).get();
        send(res, 200, {{"phase", std::string(to_string(out.phase))}, {"epoch", out.epoch}});
      });
    });

    server.Post(R"(/api/sessions/([^/]+)/lambda)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        const Json body = body_json(req);
        const auto it = body.find("lambda");
        if (it == body.end() || !it->is_number())
          throw Error(ErrorKind::Input, "lambda must be a number", "lambda");
        const CommandOutcome out = s.live->submit(cmd::SetLambda{it->get<double>()}).get();
        send(res, 200, {{"phase", std::string(to_string(out.phase))}, {"epoch", out.epoch}, {"lambda", it->get<double>()}});
      });
    });

    server.Get(R"(/api/sessions/([^/]+)/annotations)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        Json list = Json::array();
        for (const auto& a : s.live->snapshot()->annotations) list.push_back(to_json(a));
        send(res, 200, {{"annotations", list}});
      });
    });

    server.Post(R"(/api/sessions/([^/]+)/annotations)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        const Json body = body_json(req);
        const auto idx = body.find("example_index");
        if (idx == body.end() || !idx->is_number_integer() || idx->get<std::int64_t>() < 0)
          throw Error(ErrorKind::Input, "example_index must be a nonnegative integer", "example_index");
        const auto dir = body.find("direction");
        if (dir == body.end() || !dir->is_array() || dir->size() != 2 || !(*dir)[0].is_number() ||
            !(*dir)[1].is_number())
          throw Error(ErrorKind::Input, "direction must be an array of two numbers", "direction");
        const cmd::AddAnnotation add{idx->get<std::size_t>(), Vec2((*dir)[0].get<double>(), (*dir)[1].get<double>())};
        const CommandOutcome out = s.live->submit(add).get();
        send(res, 201, to_json(*out.annotation));
      });
    });

    server.Delete(R"(/api/sessions/([^/]+)/annotations/(\d+))", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        const std::uint64_t id = std::stoull(req.matches[2]);
        s.live->submit(cmd::RemoveAnnotation{id}).get();
        send(res, 200, {{"deleted", id}});
      });
    });

    server.Get(R"(/api/sessions/([^/]+)/grid)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        const std::size_t requested = query_count(req, "resolution").value_or(options.default_grid_resolution);
        const std::size_t resolution = std::clamp<std::size_t>(requested, 10, 400);
        const auto snap = s.live->snapshot();
        const ProbabilityGrid grid = evaluate_grid(*snap->params, *s.live->dataset(), resolution);
        send(res, 200,
             {{"epoch", snap->epoch},
              {"requested_resolution", requested},
              {"resolution", resolution},
              {"clamped", requested != resolution},
              {"grid", grid_document(grid)}});
      });
    });

    server.Get(R"(/api/sessions/([^/]+)/dataset)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) { send(res, 200, dataset_document(*s.live->dataset())); });
    });

    server.Get(R"(/api/sessions/([^/]+)/events)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        auto sub = std::make_shared<Subscription>();
        s.hub->add(sub);
        if (stopping) sub->close();
        res.set_header("Cache-Control", "no-cache");
        auto greeted = std::make_shared<bool>(false);
        auto idle = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
        res.set_chunked_content_provider(
            "text/event-stream",
            [sub, greeted, idle](std::size_t, httplib::DataSink& sink) {
              if (!*greeted) {
                *greeted = true;
                static constexpr std::string_view hello = ": connected\n\n";
                return sink.write(hello.data(), hello.size());
              }
              if (auto msg = sub->next(200ms)) {
                *idle = std::chrono::steady_clock::now();
                const std::string frame = msg->sse_frame();
                return sink.write(frame.data(), frame.size());
              }
              if (sub->closed()) {
                sink.done();
                return true;
              }
              if (!sink.is_writable()) return false;
              if (std::chrono::steady_clock::now() - *idle > 15s) {
                *idle = std::chrono::steady_clock::now();
                static constexpr std::string_view ping = ": ping\n\n";
                return sink.write(ping.data(), ping.size());
              }
              return true;
            },
            [sub](bool) { sub->close(); });
      });
    });

    server.Post(R"(/api/sessions/([^/]+)/experiments)", [this](const Request& req, Response& res) {
      with_session(req, res, [&](SessionEntry& s) {
        const Json body = body_json(req);
        const auto it = body.find("name");
        if (it == body.end() || !it->is_string()) throw Error(ErrorKind::Naming, "name must be a string", "name");
        const std::string name = *it;
        const ExperimentRecord rec =
            s.live->inspect([name](const SessionState& st) { return make_record(st, name, utc_timestamp()); }).get();
        send(res, 201, experiment_document(store.save(rec)));
      });
    });

    server.Get("/api/experiments", [this](const Request&, Response& res) {
      guarded(res, [&] {
        Json list = Json::array();
        for (const auto& rec : store.list()) list.push_back(experiment_document(rec));
        send(res, 200, {{"experiments", list}});
      });
    });

    server.Get(R"(/api/experiments/(.+))", [this](const Request& req, Response& res) {
      guarded(res, [&] { send(res, 200, experiment_document(store.get(req.matches[1]))); });
    });

    server.Delete(R"(/api/experiments/(.+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        store.remove(req.matches[1]);
        send(res, 200, {{"deleted", std::string(req.matches[1])}});
      });
    });

    server.set_error_handler([](const Request& req, Response& res) {
      if (!res.body.empty()) return;
      const Error e(res.status == 404 ? ErrorKind::NotFound : ErrorKind::Input,
                    "no route for " + req.method + " " + req.path);
      res.set_content(error_body(e).dump(), "application/json");
    });

    if (options.ui_dir && fs::is_directory(*options.ui_dir)) {
      server.set_mount_point("/", options.ui_dir->string());
    } else {
      log("warning: UI directory " + (options.ui_dir ? "'" + options.ui_dir->string() + "' not found" : std::string("not set")) +
          "; serving the API only");
    }
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() {
  stop();
  std::lock_guard lock(impl_->registry_mutex);
  for (auto& [_, entry] : impl_->sessions) entry->hub->close_all();
  impl_->sessions.clear();
}

std::string Service::create_session(const SessionConfig& config) { return impl_->create(config); }

std::shared_ptr<Subscription> Service::subscribe(const std::string& session_id) {
  auto entry = impl_->find(session_id);
  auto sub = std::make_shared<Subscription>();
  entry->hub->add(sub);
  return sub;
}

ExperimentStore& Service::store() { return impl_->store; }

int Service::bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) bound = impl_->server.bind_to_any_port(host);
  else if (impl_->server.bind_to_port(host, port)) bound = port;
  if (bound < 0)
    throw Error(ErrorKind::Input, "cannot bind " + host + ":" + std::to_string(port), "port");
  impl_->bound = true;
  return bound;
}

void Service::listen() {
  if (!impl_->bound) throw Error(ErrorKind::State, "listen() before bind()");
  if (impl_->stopping) return;
  impl_->server.listen_after_bind();
}

void Service::stop() {
  impl_->stopping = true;
  {
    std::lock_guard lock(impl_->registry_mutex);
    for (auto& [_, entry] : impl_->sessions) entry->hub->close_all();
  }
  impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

} // namespace cfdir
