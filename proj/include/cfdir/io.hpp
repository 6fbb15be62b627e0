#pragma once

// Versioned structured-text documents. Every top-level document carries
// "format": "cfdir.<kind>" and "version": 1; nested values are plain
// objects. Points and directions are [x, y] arrays, grids nested row lists.
// Readers fill unset fields with defaults and report errors with the
// dotted path of the offending field.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cfdir/data.hpp"
#include "cfdir/session.hpp"

namespace cfdir {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Canonical text: two-space indent, sorted keys, trailing newline.
std::string dump(const Json& doc);
/// Throws Error{Parse} with line and column on malformed text.
Json parse_json(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Wraps `body` (an object) with format/version keys.
Json make_document(std::string_view kind, Json body);
/// Checks format/version; throws Error{Parse}.
void check_document(const Json& doc, std::string_view kind);

Json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const Json& j, const std::string& path = "dataset");
Json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");
Json to_json(const LossConfig& config);
LossConfig loss_config_from_json(const Json& j, const std::string& path = "loss");
/// Plain object (no envelope); missing fields take their defaults, and the
/// result is validated.
Json to_json(const SessionConfig& config);
SessionConfig session_config_from_json(const Json& j);

Json to_json(const LabeledExample& example);
Json to_json(const DirectionAnnotation& annotation);
DirectionAnnotation annotation_from_json(const Json& j, const std::string& path = "annotation");
Json to_json(const LossBreakdown& loss);
LossBreakdown loss_breakdown_from_json(const Json& j, const std::string& path = "loss");
Json to_json(const HistoryEntry& entry);
HistoryEntry history_entry_from_json(const Json& j, const std::string& path = "history");

Json dataset_document(const Dataset& dataset);
Dataset dataset_from_document(const Json& doc);

Json grid_document(const ProbabilityGrid& grid);
ProbabilityGrid grid_from_document(const Json& doc);

Json metrics_document(std::span<const HistoryEntry> history);
std::vector<HistoryEntry> metrics_from_document(const Json& doc);

Json experiment_document(const ExperimentRecord& record);
ExperimentRecord experiment_from_document(const Json& doc);

} // namespace cfdir
