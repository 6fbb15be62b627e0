#pragma once

// Headless runs: scripted annotation files, the train pipeline and the
// control-vs-annotated comparison.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfdir/session.hpp"

namespace cfdir {

/// One scripted annotation, added once `apply_at_epoch` epochs have
/// completed. `line` is where the entry starts in the source file.
struct ScriptEntry {
  std::size_t apply_at_epoch = 0;
  std::size_t example_index = 0;
  Vec2 direction = Vec2::Zero();
  std::size_t line = 0;
};

struct AnnotationScript {
  std::vector<ScriptEntry> entries;
};

/// Parses a cfdir.annotations document:
///
///   {"format": "cfdir.annotations", "version": 1,
///    "annotations": [{"epoch": 0, "example_index": 3, "direction": [1, 0]}, ...]}
///
/// "epoch" defaults to 0. Throws Error{Parse} whose message starts with
/// "line N" for syntax errors and for entries that are malformed, out of
/// order or carry a zero or non-finite direction.
AnnotationScript parse_annotation_script(std::string_view text);
AnnotationScript load_annotation_script(const std::filesystem::path& path);

/// Checks indices against the training split and epochs against
/// max_epochs; throws Error{Validation} with the entry's line.
void validate_script(const AnnotationScript& script, const SessionConfig& config);

/// Epoch-0 entries become adds before Start; later epochs become
/// Pause, adds, Resume at that boundary.
std::vector<ScriptedCommand> script_commands(const AnnotationScript& script);

struct TrainingRun {
  SessionState state;
  ExperimentRecord record;
};

/// Runs `config` to completion under `script`. Throws Error{TrainingFault}
/// if the session faults.
TrainingRun run_training(const SessionConfig& config, const AnnotationScript& script, std::string name,
                         std::string created);

inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kParamsFile = "params.txt";
inline constexpr const char* kGridFile = "grid.json";
inline constexpr const char* kRecordFile = "record.json";

/// Writes metrics.json, params.txt, grid.json and record.json under `out`.
void write_training_outputs(const TrainingRun& run, const std::filesystem::path& out,
                            std::size_t grid_resolution = kDefaultGridResolution);

struct ComparisonRow {
  std::size_t index = 0;
  std::uint64_t dataset_seed = 0;
  std::uint64_t model_seed = 0;
  std::optional<double> control;
  std::optional<double> annotated;
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
  double control_mean = 0.0;
  double annotated_mean = 0.0;
  double margin = 0.0; // annotated_mean - control_mean
  double lambda = 0.0;
  std::size_t n_annotations = 0;
};

/// For i in [0, n_seeds): dataset and model seeds offset by i, one control
/// run at lambda 0 and one annotated run at config.loss.lambda, identical
/// otherwise. Seeds run on up to `threads` workers (0: hardware
/// concurrency); results do not depend on the thread count.
ComparisonResult run_comparison(const SessionConfig& config, const AnnotationScript& script, std::size_t n_seeds,
                                std::size_t threads = 0);

/// Header, one row per seed, a mean row, then the margin line.
std::string format_comparison_table(const ComparisonResult& result);

/// cfdir.comparison document.
std::string comparison_document(const ComparisonResult& result, const SessionConfig& config);

} // namespace cfdir
