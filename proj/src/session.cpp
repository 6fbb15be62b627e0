#include "cfdir/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include "cfdir/error.hpp"
#include "cfdir/rng.hpp"

namespace cfdir {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Idle: return "Idle";
    case Phase::Running: return "Running";
    case Phase::Paused: return "Paused";
    case Phase::Finished: return "Finished";
    case Phase::Faulted: return "Faulted";
  }
  return "unknown";
}

Phase phase_from_string(std::string_view name) {
  for (Phase p : {Phase::Idle, Phase::Running, Phase::Paused, Phase::Finished, Phase::Faulted})
    if (to_string(p) == name) return p;
  throw Error(ErrorKind::Parse, "unknown phase '" + std::string(name) + "'", "phase");
}

void SessionConfig::validate() const {
  dataset.validate();
  model.validate();
  loss.validate();
  if (max_epochs < 1) throw Error(ErrorKind::Config, "max_epochs must be at least 1", "max_epochs");
  if (snapshot_every < 1)
    throw Error(ErrorKind::Config, "snapshot_every must be at least 1", "snapshot_every");
}

std::string_view command_name(const Command& command) {
  return std::visit(
      [](const auto& c) -> std::string_view {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, cmd::Start>) return "start";
        else if constexpr (std::is_same_v<T, cmd::Pause>) return "pause";
        else if constexpr (std::is_same_v<T, cmd::Resume>) return "resume";
        else if constexpr (std::is_same_v<T, cmd::Reset>) return "reset";
        else if constexpr (std::is_same_v<T, cmd::SetLambda>) return "set_lambda";
        else if constexpr (std::is_same_v<T, cmd::AddAnnotation>) return "add_annotation";
        else return "remove_annotation";
      },
      command);
}

SessionState create_session(const SessionConfig& config) {
  config.validate();
  SessionState state;
  state.config = config;
  state.dataset = std::make_shared<const Dataset>(generate(config.dataset));
  state.params = init_params(config.model);
  return state;
}

namespace {

[[noreturn]] void illegal(const SessionState& state, std::string_view what) {
  throw Error(ErrorKind::State,
              "cannot " + std::string(what) + " while " + std::string(to_string(state.phase)), "phase");
}

void require_editable(const SessionState& state, std::string_view what) {
  if (state.phase != Phase::Idle && state.phase != Phase::Paused) illegal(state, what);
}

} // namespace

SessionState apply_command(const SessionState& state, const Command& command) {
  SessionState next = state;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, cmd::Start>) {
          if (state.phase != Phase::Idle) illegal(state, "start");
          next.phase = Phase::Running;
        } else if constexpr (std::is_same_v<T, cmd::Pause>) {
          if (state.phase != Phase::Running) illegal(state, "pause");
          next.phase = Phase::Paused;
        } else if constexpr (std::is_same_v<T, cmd::Resume>) {
          if (state.phase != Phase::Paused) illegal(state, "resume");
          next.phase = Phase::Running;
        } else if constexpr (std::is_same_v<T, cmd::Reset>) {
          if (state.phase == Phase::Idle || state.phase == Phase::Running) illegal(state, "reset");
          next.phase = Phase::Idle;
          next.epoch = 0;
          next.params = init_params(state.config.model);
          next.optimizer = AdamState{};
          next.history.clear();
          next.fault.reset();
        } else if constexpr (std::is_same_v<T, cmd::SetLambda>) {
          LossConfig loss = state.config.loss;
          loss.lambda = c.value;
          loss.validate();
          next.config.loss = loss;
        } else if constexpr (std::is_same_v<T, cmd::AddAnnotation>) {
          require_editable(state, "edit annotations");
          if (c.example_index >= state.dataset->train.size())
            throw Error(ErrorKind::Validation,
                        "example_index " + std::to_string(c.example_index) +
                            " is not a training example (training set has " +
                            std::to_string(state.dataset->train.size()) + ")",
                        "example_index");
          const Direction d = Direction::from_vector(c.direction);
          const std::uint64_t seq = next.next_annotation_seq++;
          next.annotations.push_back({c.example_index, d, seq, seq});
        } else if constexpr (std::is_same_v<T, cmd::RemoveAnnotation>) {
          require_editable(state, "edit annotations");
          auto it = std::find_if(next.annotations.begin(), next.annotations.end(),
                                 [&](const DirectionAnnotation& a) { return a.id == c.id; });
          if (it == next.annotations.end())
            throw Error(ErrorKind::NotFound, "no annotation with id " + std::to_string(c.id), "id");
          next.annotations.erase(it);
        }
      },
      command);
  return next;
}

SessionState train_epoch(SessionState state) {
  if (state.phase != Phase::Running) illegal(state, "train");
  const Dataset& data = *state.dataset;
  try {
    const Objective obj = total_objective(state.params, data.train, state.annotations, state.config.loss);
    if (!std::isfinite(obj.breakdown.total))
      throw Error(ErrorKind::TrainingFault, "non-finite loss at epoch " + std::to_string(state.epoch + 1));
    auto [params, optimizer] = optimizer_step(state.params, obj.gradient, state.optimizer);

    HistoryEntry entry;
    entry.epoch = state.epoch + 1;
    entry.loss = obj.breakdown;
    entry.lambda = state.config.loss.lambda;
    entry.train_accuracy = accuracy(params, data.train);
    if (!data.test.empty()) entry.test_accuracy = accuracy(params, data.test);

    state.params = std::move(params);
    state.optimizer = std::move(optimizer);
    state.epoch = entry.epoch;
    state.history.push_back(entry);
    if (state.epoch >= state.config.max_epochs) state.phase = Phase::Finished;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::TrainingFault && e.kind() != ErrorKind::NumericInput) throw;
    state.phase = Phase::Faulted;
    state.fault = e.what();
  }
  return state;
}

SessionState run_script(const SessionConfig& config, std::span<const ScriptedCommand> script) {
  if (!std::is_sorted(script.begin(), script.end(),
                      [](const auto& a, const auto& b) { return a.at_epoch < b.at_epoch; }))
    throw Error(ErrorKind::Input, "scripted commands must be ordered by epoch");

  SessionState state = create_session(config);
  std::size_t next = 0;
  for (;;) {
    while (next < script.size() && script[next].at_epoch <= state.epoch)
      state = apply_command(state, script[next++].command);
    if (state.phase != Phase::Running) break;
    state = train_epoch(std::move(state));
  }
  return state;
}

ExperimentRecord make_record(const SessionState& state, std::string name, std::string created) {
  if (state.history.empty())
    throw Error(ErrorKind::Input, "cannot save an experiment before any epoch has completed", "history");
  ExperimentRecord rec;
  rec.name = std::move(name);
  rec.config = state.config;
  rec.annotations = state.annotations;
  rec.test_accuracy.reserve(state.history.size());
  for (const auto& h : state.history) rec.test_accuracy.push_back(h.test_accuracy);
  rec.final_accuracy = state.history.back().test_accuracy;
  rec.rng_algorithm = std::string(kRngAlgorithm);
  rec.optimizer_algorithm = std::string(kOptimizerAlgorithm);
  rec.created = std::move(created);
  return rec;
}

std::string utc_timestamp() {
  return utc_timestamp(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()));
}

std::string utc_timestamp(std::int64_t unix_seconds) {
  const std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace cfdir
