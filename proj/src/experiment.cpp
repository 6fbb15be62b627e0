#include "cfdir/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

#include "cfdir/error.hpp"
#include "cfdir/io.hpp"

namespace cfdir {

namespace fs = std::filesystem;

namespace {

// Line on which each element of the top-level "annotations" array starts.
// nlohmann keeps no source positions, so this is a small structural scan
// over text that has already parsed successfully.
std::vector<std::size_t> entry_lines(std::string_view text) {
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  int depth = 0;
  bool in_string = false, escaped = false;
  std::string token, last_string, last_key;
  bool in_target = false, at_element_start = false;

  for (char ch : text) {
    if (in_string) {
      if (escaped) escaped = false;
      else if (ch == '\\') escaped = true;
      else if (ch == '"') {
        in_string = false;
        if (depth == 1) last_string = token;
      } else token += ch;
      if (ch == '\n') ++line;
      continue;
    }
    if (in_target && depth == 2 && at_element_start && ch != ' ' && ch != '\t' && ch != '\r' && ch != '\n' &&
        ch != ']') {
      lines.push_back(line);
      at_element_start = false;
    }
    switch (ch) {
      case '\n': ++line; break;
      case '"':
        in_string = true;
        token.clear();
        break;
      case ':':
        if (depth == 1) last_key = last_string;
        break;
      case ',':
        if (in_target && depth == 2) at_element_start = true;
        break;
      case '[':
        if (depth == 1 && last_key == "annotations") {
          in_target = true;
          at_element_start = true;
        }
        ++depth;
        break;
      case '{': ++depth; break;
      case ']':
      case '}':
        --depth;
        if (depth == 1) in_target = false;
        break;
      default: break;
    }
  }
  return lines;
}

[[noreturn]] void script_error(ErrorKind kind, std::size_t line, const std::string& field, const std::string& what) {
  throw Error(kind, "line " + std::to_string(line) + ": " + field + " " + what, field);
}

std::size_t entry_count(const Json& v, std::size_t line, const std::string& field) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::size_t>();
  script_error(ErrorKind::Parse, line, field, "must be a nonnegative integer");
}

} // namespace

AnnotationScript parse_annotation_script(std::string_view text) {
  const Json doc = parse_json(text);
  try {
    check_document(doc, "annotations");
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, "line 1: " + std::string(e.what()), e.field());
  }
  const auto it = doc.find("annotations");
  if (it == doc.end() || !it->is_array())
    throw Error(ErrorKind::Parse, "line 1: annotations must be an array", "annotations");

  const std::vector<std::size_t> lines = entry_lines(text);
  AnnotationScript script;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const Json& e = (*it)[i];
    const std::size_t line = i < lines.size() ? lines[i] : 1;
    const std::string path = "annotations[" + std::to_string(i) + "]";
    if (!e.is_object()) script_error(ErrorKind::Parse, line, path, "must be an object");
    for (const auto& [key, _] : e.items())
      if (key != "epoch" && key != "example_index" && key != "direction")
        script_error(ErrorKind::Parse, line, path + "." + key, "is not a known field");

    ScriptEntry entry;
    entry.line = line;
    if (auto ep = e.find("epoch"); ep != e.end()) entry.apply_at_epoch = entry_count(*ep, line, path + ".epoch");
    auto idx = e.find("example_index");
    if (idx == e.end()) script_error(ErrorKind::Parse, line, path + ".example_index", "is required");
    entry.example_index = entry_count(*idx, line, path + ".example_index");

    auto dir = e.find("direction");
    if (dir == e.end()) script_error(ErrorKind::Parse, line, path + ".direction", "is required");
    if (!dir->is_array() || dir->size() != 2 || !(*dir)[0].is_number() || !(*dir)[1].is_number())
      script_error(ErrorKind::Parse, line, path + ".direction", "must be an array of two numbers");
    entry.direction = Vec2((*dir)[0].get<double>(), (*dir)[1].get<double>());
    if (!entry.direction.allFinite() || entry.direction.norm() == 0.0)
      script_error(ErrorKind::Parse, line, path + ".direction", "must be a finite nonzero vector");

    if (!script.entries.empty() && entry.apply_at_epoch < script.entries.back().apply_at_epoch)
      script_error(ErrorKind::Parse, line, path + ".epoch", "must not decrease");
    script.entries.push_back(entry);
  }
  return script;
}

AnnotationScript load_annotation_script(const fs::path& path) {
  try {
    return parse_annotation_script(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what(), e.field());
  }
}

void validate_script(const AnnotationScript& script, const SessionConfig& config) {
  for (std::size_t i = 0; i < script.entries.size(); ++i) {
    const auto& e = script.entries[i];
    const std::string path = "annotations[" + std::to_string(i) + "]";
    if (e.example_index >= config.dataset.n_train)
      script_error(ErrorKind::Validation, e.line, path + ".example_index",
                   "must index the training split (n_train = " + std::to_string(config.dataset.n_train) + ")");
    if (e.apply_at_epoch >= config.max_epochs)
      script_error(ErrorKind::Validation, e.line, path + ".epoch",
                   "must be below max_epochs (" + std::to_string(config.max_epochs) + ")");
  }
}

std::vector<ScriptedCommand> script_commands(const AnnotationScript& script) {
  std::map<std::size_t, std::vector<const ScriptEntry*>> by_epoch;
  for (const auto& e : script.entries) by_epoch[e.apply_at_epoch].push_back(&e);

  std::vector<ScriptedCommand> out;
  if (auto it = by_epoch.find(0); it != by_epoch.end())
    for (const auto* e : it->second) out.push_back({0, cmd::AddAnnotation{e->example_index, e->direction}});
  out.push_back({0, cmd::Start{}});
  for (const auto& [epoch, entries] : by_epoch) {
    if (epoch == 0) continue;
    out.push_back({epoch, cmd::Pause{}});
    for (const auto* e : entries) out.push_back({epoch, cmd::AddAnnotation{e->example_index, e->direction}});
    out.push_back({epoch, cmd::Resume{}});
  }
  return out;
}

TrainingRun run_training(const SessionConfig& config, const AnnotationScript& script, std::string name,
                         std::string created) {
  config.validate();
  validate_script(script, config);
  const auto commands = script_commands(script);
  SessionState state = run_script(config, commands);
  if (state.phase == Phase::Faulted)
    throw Error(ErrorKind::TrainingFault, "training faulted: " + state.fault.value_or("unknown"));
  ExperimentRecord record = make_record(state, std::move(name), std::move(created));
  return {std::move(state), std::move(record)};
}

void write_training_outputs(const TrainingRun& run, const fs::path& out, std::size_t grid_resolution) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::Input, "cannot create " + out.string() + ": " + ec.message(), "out");
  write_file(out / kMetricsFile, dump(metrics_document(run.state.history)));
  write_file(out / kParamsFile, serialize_params(run.state.params));
  write_file(out / kGridFile, dump(grid_document(evaluate_grid(run.state.params, *run.state.dataset, grid_resolution))));
  write_file(out / kRecordFile, dump(experiment_document(run.record)));
}

ComparisonResult run_comparison(const SessionConfig& config, const AnnotationScript& script, std::size_t n_seeds,
                                std::size_t threads) {
  config.validate();
  if (n_seeds < 1) throw Error(ErrorKind::Config, "n_seeds must be at least 1", "n_seeds");
  if (config.dataset.n_test < 1)
    throw Error(ErrorKind::Config, "compare needs a test split (n_test >= 1)", "dataset.n_test");
  validate_script(script, config);
  const auto commands = script_commands(script);

  ComparisonResult result;
  result.lambda = config.loss.lambda;
  result.n_annotations = script.entries.size();
  result.rows.resize(n_seeds);
  std::vector<std::exception_ptr> errors(n_seeds);

  auto run_one = [&](std::size_t i) {
    try {
      SessionConfig annotated = config;
      annotated.dataset.seed += i;
      annotated.model.seed += i;
      SessionConfig control = annotated;
      control.loss.lambda = 0.0;

      ComparisonRow& row = result.rows[i];
      row.index = i;
      row.dataset_seed = annotated.dataset.seed;
      row.model_seed = annotated.model.seed;
      for (auto [cfg, slot] : {std::pair{&control, &row.control}, std::pair{&annotated, &row.annotated}}) {
        const SessionState s = run_script(*cfg, commands);
        if (s.phase == Phase::Faulted)
          throw Error(ErrorKind::TrainingFault,
                      "seed " + std::to_string(i) + " faulted: " + s.fault.value_or("unknown"));
        *slot = s.history.back().test_accuracy;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  std::size_t workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n_seeds);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_seeds; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n_seeds;) run_one(i);
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  double control_sum = 0, annotated_sum = 0;
  for (const auto& row : result.rows) {
    control_sum += row.control.value_or(0.0);
    annotated_sum += row.annotated.value_or(0.0);
  }
  result.control_mean = control_sum / static_cast<double>(n_seeds);
  result.annotated_mean = annotated_sum / static_cast<double>(n_seeds);
  result.margin = result.annotated_mean - result.control_mean;
  return result;
}

std::string format_comparison_table(const ComparisonResult& result) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %-12s %-12s %10s %10s\n", "seed", "data_seed", "model_seed", "control",
                "annotated");
  out += buf;
  auto acc = [](const std::optional<double>& v) { return v ? *v : std::nan(""); };
  for (const auto& row : result.rows) {
    std::snprintf(buf, sizeof buf, "%-6zu %-12llu %-12llu %10.4f %10.4f\n", row.index,
                  static_cast<unsigned long long>(row.dataset_seed), static_cast<unsigned long long>(row.model_seed),
                  acc(row.control), acc(row.annotated));
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-6s %-12s %-12s %10.4f %10.4f\n", "mean", "", "", result.control_mean,
                result.annotated_mean);
  out += buf;
  std::snprintf(buf, sizeof buf, "margin (annotated - control): %+.4f  [lambda %g, %zu annotations, %zu seeds]\n",
                result.margin, result.lambda, result.n_annotations, result.rows.size());
  out += buf;
  return out;
}

std::string comparison_document(const ComparisonResult& result, const SessionConfig& config) {
  Json rows = Json::array();
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  for (const auto& row : result.rows)
    rows.push_back({{"index", row.index},
                    {"dataset_seed", row.dataset_seed},
                    {"model_seed", row.model_seed},
                    {"control", opt(row.control)},
                    {"annotated", opt(row.annotated)}});
  return dump(make_document("comparison", {{"config", to_json(config)},
                                           {"lambda", result.lambda},
                                           {"n_annotations", result.n_annotations},
                                           {"rows", rows},
                                           {"control_mean", result.control_mean},
                                           {"annotated_mean", result.annotated_mean},
                                           {"margin", result.margin}}));
}

} // namespace cfdir
