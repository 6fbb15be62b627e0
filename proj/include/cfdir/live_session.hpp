#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cfdir/session.hpp"

namespace cfdir {

enum class EventKind { EpochMetrics, GridSnapshot, PhaseChange, Fault };

std::string_view to_string(EventKind kind);

struct PhaseChange {
  Phase from = Phase::Idle;
  Phase to = Phase::Idle;
};

struct SessionEvent {
  EventKind kind = EventKind::EpochMetrics;
  std::size_t epoch = 0;
  std::variant<HistoryEntry, std::shared_ptr<const ProbabilityGrid>, PhaseChange, std::string> payload;
};

/// Called on the training thread; must not block.
using EventSink = std::function<void(const SessionEvent&)>;

struct LiveSessionOptions {
  /// Minimum wall time between epochs while Running (0: as fast as possible).
  std::chrono::microseconds epoch_interval{0};
  /// Resolution of the grids attached to grid_snapshot events.
  std::size_t grid_resolution = 50;
};

/// Read-only view published after every epoch and every command.
struct SessionSnapshot {
  Phase phase = Phase::Idle;
  std::size_t epoch = 0;
  double lambda = 0.0;
  std::shared_ptr<const ModelParams> params;
  std::vector<DirectionAnnotation> annotations;
  std::optional<std::string> fault;
  std::optional<std::size_t> pause_at;
};

struct CommandOutcome {
  Phase phase = Phase::Idle;
  std::size_t epoch = 0;
  std::optional<DirectionAnnotation> annotation; // set by AddAnnotation
};

/// A session owned by one training thread. Commands from any thread go
/// through an ordered queue that the thread drains at each epoch boundary,
/// so a run is a pure function of the config and the boundary at which each
/// command lands. Readers see published snapshots and never block training
/// beyond a short copy.
class LiveSession {
 public:
  /// Creates the session synchronously; throws Error{Config} on an invalid
  /// config.
  explicit LiveSession(const SessionConfig& config, LiveSessionOptions options = {}, EventSink sink = {});
  ~LiveSession();

  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  /// Queues `command`. A Start or Resume with `pause_at` pauses the run
  /// once `pause_at` epochs have completed. Errors from apply_command are
  /// delivered through the future.
  std::future<CommandOutcome> submit(Command command, std::optional<std::size_t> pause_at = {});

  /// Runs `read` against the live state on the training thread at the next
  /// epoch boundary.
  template <typename F>
  auto inspect(F read) -> std::future<std::invoke_result_t<F, const SessionState&>> {
    using R = std::invoke_result_t<F, const SessionState&>;
    auto promise = std::make_shared<std::promise<R>>();
    auto future = promise->get_future();
    post([promise, read = std::move(read)](SessionState& state) mutable {
      try {
        if constexpr (std::is_void_v<R>) {
          read(std::as_const(state));
          promise->set_value();
        } else {
          promise->set_value(read(std::as_const(state)));
        }
      } catch (...) {
        promise->set_exception(std::current_exception());
      }
    });
    return future;
  }

  std::shared_ptr<const SessionSnapshot> snapshot() const;
  /// history[from..] as of the latest completed epoch.
  std::vector<HistoryEntry> history(std::size_t from = 0) const;
  std::size_t history_size() const;
  std::shared_ptr<const Dataset> dataset() const { return dataset_; }
  const SessionConfig& initial_config() const noexcept { return initial_config_; }

  /// Waits until `ready(snapshot)` holds; false on timeout.
  bool wait_for(const std::function<bool(const SessionSnapshot&)>& ready, std::chrono::milliseconds timeout) const;

 private:
  using Task = std::function<void(SessionState&)>;

  void post(Task task);
  void run(std::stop_token stop);
  void train_one();
  void publish();
  void emit(SessionEvent event);

  const SessionConfig initial_config_;
  const LiveSessionOptions options_;
  const EventSink sink_;
  std::shared_ptr<const Dataset> dataset_;

  // Owned by the training thread.
  SessionState state_;
  std::optional<std::size_t> pause_at_;

  mutable std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::deque<Task> tasks_;

  mutable std::mutex snapshot_mutex_;
  mutable std::condition_variable snapshot_cv_;
  std::shared_ptr<const SessionSnapshot> snapshot_;
  std::vector<HistoryEntry> published_history_;

  std::jthread worker_; // last: joins before the members above are destroyed
};

} // namespace cfdir
