#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cfdir/data.hpp"
#include "cfdir/losses.hpp"
#include "cfdir/model.hpp"
#include "cfdir/optimizer.hpp"

namespace cfdir {

enum class Phase { Idle, Running, Paused, Finished, Faulted };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view name);

struct SessionConfig {
  DatasetSpec dataset;
  ModelConfig model;
  LossConfig loss;
  std::size_t max_epochs = 2000;
  std::size_t snapshot_every = 10;

  void validate() const;
  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

/// Metrics for one completed epoch. `loss` is evaluated at the parameters
/// the epoch started from; the accuracies at the parameters it produced.
struct HistoryEntry {
  std::size_t epoch = 0;
  LossBreakdown loss;
  double lambda = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy; // empty when the test split is empty

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct SessionState {
  SessionConfig config; // config.loss.lambda follows SetLambda
  std::shared_ptr<const Dataset> dataset;
  Phase phase = Phase::Idle;
  std::size_t epoch = 0;
  ModelParams params;
  AdamState optimizer;
  std::vector<DirectionAnnotation> annotations;
  std::vector<HistoryEntry> history;
  std::uint64_t next_annotation_seq = 1;
  std::optional<std::string> fault;
};

namespace cmd {
struct Start {};
struct Pause {};
struct Resume {};
struct Reset {};
struct SetLambda {
  double value = 0.0;
};
struct AddAnnotation {
  std::size_t example_index = 0;
  Vec2 direction = Vec2::Zero(); // raw; normalised on admission
};
struct RemoveAnnotation {
  std::uint64_t id = 0;
};
} // namespace cmd

using Command = std::variant<cmd::Start, cmd::Pause, cmd::Resume, cmd::Reset, cmd::SetLambda,
                             cmd::AddAnnotation, cmd::RemoveAnnotation>;

std::string_view command_name(const Command& command);

SessionState create_session(const SessionConfig& config);

/// Applies one control or annotation command at an epoch boundary.
///
/// Phase machine: Idle -Start-> Running; Running -Pause-> Paused;
/// Paused -Resume-> Running; Paused/Finished/Faulted -Reset-> Idle.
/// Annotation edits are accepted in Idle and Paused; SetLambda in any phase.
/// Reset keeps annotations and lambda but discards parameters, optimizer
/// state and history. Throws Error{State} for an illegal transition and
/// Error{Validation}/Error{NotFound} for rejected edits; `state` is never
/// modified.
SessionState apply_command(const SessionState& state, const Command& command);

/// One full-batch objective evaluation and optimizer step. Requires phase
/// Running. Moves to Finished at max_epochs, or to Faulted (with a
/// diagnostic, no history entry) when the loss or gradient is non-finite.
SessionState train_epoch(SessionState state);

/// Command applied once `at_epoch` epochs have completed.
struct ScriptedCommand {
  std::size_t at_epoch = 0;
  Command command;
};

/// Drives a session from creation through `script` (sorted by at_epoch,
/// ties in order) and keeps training while Running. Stops when the session
/// finishes or faults, or when it is not Running and no command can apply.
SessionState run_script(const SessionConfig& config, std::span<const ScriptedCommand> script);

/// Immutable named snapshot of a run for comparison and persistence.
struct ExperimentRecord {
  std::string name;
  SessionConfig config;
  std::vector<DirectionAnnotation> annotations;
  std::vector<std::optional<double>> test_accuracy; // one per epoch
  std::optional<double> final_accuracy;
  std::string rng_algorithm;
  std::string optimizer_algorithm;
  std::string created; // ISO 8601 UTC

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

/// Throws Error{Input} when the session has no history yet.
ExperimentRecord make_record(const SessionState& state, std::string name, std::string created);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();
/// `unix_seconds` in the same form.
std::string utc_timestamp(std::int64_t unix_seconds);

} // namespace cfdir
