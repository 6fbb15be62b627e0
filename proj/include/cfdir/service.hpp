#pragma once

// HTTP/JSON front end over live sessions. All endpoints live under /api;
// the event stream is text/event-stream. See README for the endpoint list.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfdir/error.hpp"
#include "cfdir/experiment_store.hpp"
#include "cfdir/io.hpp"
#include "cfdir/live_session.hpp"

namespace cfdir {

struct EventMessage {
  EventKind kind = EventKind::EpochMetrics;
  std::string session_id;
  std::size_t epoch = 0;
  Json payload;

  Json to_json() const;
  /// One server-sent-event frame: "event: <kind>\ndata: <json>\n\n".
  std::string sse_frame() const;
};

/// Per-subscriber queue. Metric, phase and fault messages are kept in
/// order and never dropped; a new grid_snapshot replaces an undelivered
/// older one and takes its place at the back, so a slow reader sees the
/// latest grid and still sees it after the metrics for its epoch.
class Subscription {
 public:
  void push(EventMessage message);
  /// Next message, or nullopt on timeout or once closed and drained.
  std::optional<EventMessage> next(std::chrono::milliseconds timeout);
  void close();
  bool closed() const;
  std::size_t pending() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<EventMessage> queue_;
  bool closed_ = false;
};

struct ServiceOptions {
  std::filesystem::path store_dir = "experiments";
  /// Directory of the built UI bundle, served at /. Missing: API only.
  std::optional<std::filesystem::path> ui_dir;
  LiveSessionOptions session;
  /// Grid resolution used when a request gives none.
  std::size_t default_grid_resolution = kDefaultGridResolution;
  /// Receives warnings and notices; stderr when empty.
  std::function<void(std::string_view)> log;
};

class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Same as POST /api/sessions; throws Error{Config}.
  std::string create_session(const SessionConfig& config);
  /// Throws Error{NotFound} for an unknown id.
  std::shared_ptr<Subscription> subscribe(const std::string& session_id);
  ExperimentStore& store();

  /// Binds without serving; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  /// Ends open event streams and stops the listener; safe from any thread.
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error kind.
int http_status(ErrorKind kind);

} // namespace cfdir
