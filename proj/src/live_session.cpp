#include "cfdir/live_session.hpp"

#include "cfdir/error.hpp"

namespace cfdir {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::EpochMetrics: return "epoch_metrics";
    case EventKind::GridSnapshot: return "grid_snapshot";
    case EventKind::PhaseChange: return "phase_change";
    case EventKind::Fault: return "fault";
  }
  return "unknown";
}

LiveSession::LiveSession(const SessionConfig& config, LiveSessionOptions options, EventSink sink)
    : initial_config_(config), options_(options), sink_(std::move(sink)), state_(create_session(config)) {
  dataset_ = state_.dataset;
  publish();
  worker_ = std::jthread([this](std::stop_token stop) { run(stop); });
}

LiveSession::~LiveSession() {
  worker_.request_stop();
  queue_cv_.notify_all();
}

void LiveSession::post(Task task) {
  {
    std::lock_guard lock(queue_mutex_);
    tasks_.push_back(std::move(task));
  }
  queue_cv_.notify_all();
}

std::future<CommandOutcome> LiveSession::submit(Command command, std::optional<std::size_t> pause_at) {
  auto promise = std::make_shared<std::promise<CommandOutcome>>();
  auto future = promise->get_future();
  post([this, promise, command = std::move(command), pause_at](SessionState& state) {
    try {
      const Phase before = state.phase;
      SessionState next = apply_command(state, command);
      state = std::move(next);

      if (std::holds_alternative<cmd::Start>(command) || std::holds_alternative<cmd::Resume>(command))
        pause_at_ = pause_at;
      else if (std::holds_alternative<cmd::Pause>(command) || std::holds_alternative<cmd::Reset>(command))
        pause_at_.reset();
      if (std::holds_alternative<cmd::Reset>(command)) {
        std::lock_guard lock(snapshot_mutex_);
        published_history_.clear();
      }

      CommandOutcome outcome{state.phase, state.epoch, std::nullopt};
      if (std::holds_alternative<cmd::AddAnnotation>(command)) outcome.annotation = state.annotations.back();
      publish();
      if (state.phase != before) emit({EventKind::PhaseChange, state.epoch, PhaseChange{before, state.phase}});
      promise->set_value(std::move(outcome));
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  });
  return future;
}

void LiveSession::run(std::stop_token stop) {
  std::unique_lock lock(queue_mutex_);
  while (!stop.stop_requested()) {
    if (!tasks_.empty()) {
      std::deque<Task> batch;
      batch.swap(tasks_);
      lock.unlock();
      for (auto& task : batch) task(state_);
      lock.lock();
      continue;
    }
    if (state_.phase == Phase::Running) {
      lock.unlock();
      train_one();
      lock.lock();
      if (options_.epoch_interval.count() > 0)
        queue_cv_.wait_for(lock, stop, options_.epoch_interval, [&] { return !tasks_.empty(); });
      continue;
    }
    queue_cv_.wait(lock, stop, [&] { return !tasks_.empty(); });
  }
}

void LiveSession::train_one() {
  const Phase before = state_.phase;
  if (pause_at_ && state_.epoch >= *pause_at_) {
    pause_at_.reset();
    state_ = apply_command(state_, cmd::Pause{});
    publish();
    emit({EventKind::PhaseChange, state_.epoch, PhaseChange{before, state_.phase}});
    return;
  }

  const std::size_t history_before = state_.history.size();
  try {
    state_ = train_epoch(std::move(state_));
  } catch (const std::exception& e) {
    // train_epoch converts numeric faults itself; anything else is a defect,
    // surfaced the same way rather than killing the thread.
    state_.phase = Phase::Faulted;
    state_.fault = e.what();
  }

  if (state_.history.size() > history_before) {
    const HistoryEntry& entry = state_.history.back();
    {
      std::lock_guard lock(snapshot_mutex_);
      published_history_.push_back(entry);
    }
    publish();
    emit({EventKind::EpochMetrics, entry.epoch, entry});
    if (sink_ && entry.epoch % state_.config.snapshot_every == 0) {
      auto grid = std::make_shared<const ProbabilityGrid>(
          evaluate_grid(state_.params, *state_.dataset, options_.grid_resolution));
      emit({EventKind::GridSnapshot, entry.epoch, std::move(grid)});
    }
  } else {
    publish();
  }

  if (state_.phase != before) {
    if (state_.phase == Phase::Faulted)
      emit({EventKind::Fault, state_.epoch, state_.fault.value_or("training fault")});
    emit({EventKind::PhaseChange, state_.epoch, PhaseChange{before, state_.phase}});
  }
}

void LiveSession::publish() {
  auto snap = std::make_shared<SessionSnapshot>();
  snap->phase = state_.phase;
  snap->epoch = state_.epoch;
  snap->lambda = state_.config.loss.lambda;
  snap->params = std::make_shared<const ModelParams>(state_.params);
  snap->annotations = state_.annotations;
  snap->fault = state_.fault;
  snap->pause_at = pause_at_;
  {
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
  }
  snapshot_cv_.notify_all();
}

void LiveSession::emit(SessionEvent event) {
  if (sink_) sink_(event);
}

std::shared_ptr<const SessionSnapshot> LiveSession::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

std::vector<HistoryEntry> LiveSession::history(std::size_t from) const {
  std::lock_guard lock(snapshot_mutex_);
  if (from >= published_history_.size()) return {};
  return {published_history_.begin() + static_cast<std::ptrdiff_t>(from), published_history_.end()};
}

std::size_t LiveSession::history_size() const {
  std::lock_guard lock(snapshot_mutex_);
  return published_history_.size();
}

bool LiveSession::wait_for(const std::function<bool(const SessionSnapshot&)>& ready,
                           std::chrono::milliseconds timeout) const {
  std::unique_lock lock(snapshot_mutex_);
  return snapshot_cv_.wait_for(lock, timeout, [&] { return snapshot_ && ready(*snapshot_); });
}

} // namespace cfdir
