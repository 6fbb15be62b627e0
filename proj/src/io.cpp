#include "cfdir/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "cfdir/error.hpp"

namespace cfdir {

namespace fs = std::filesystem;

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t offset = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    if (auto pos = what.find("parse error"); pos != std::string::npos) what = what.substr(pos);
    throw Error(ErrorKind::Parse,
                "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what);
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Input, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Input, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Input, "cannot rename " + tmp.string() + ": " + ec.message());
}

Json make_document(std::string_view kind, Json body) {
  body["format"] = "cfdir." + std::string(kind);
  body["version"] = kFormatVersion;
  return body;
}

void check_document(const Json& doc, std::string_view kind) {
  const std::string expected = "cfdir." + std::string(kind);
  if (!doc.is_object()) throw Error(ErrorKind::Parse, "expected a " + expected + " document object");
  const auto fmt = doc.find("format");
  if (fmt == doc.end() || !fmt->is_string() || fmt->get<std::string>() != expected)
    throw Error(ErrorKind::Parse, "expected format '" + expected + "'", "format");
  const auto ver = doc.find("version");
  if (ver == doc.end() || !ver->is_number_integer() || ver->get<int>() != kFormatVersion)
    throw Error(ErrorKind::Parse, "unsupported " + expected + " version", "version");
}

// ---------------------------------------------------------------------------
// Field readers

namespace {

struct Reader {
  const Json& j;
  std::string path;
  ErrorKind kind;

  Reader(const Json& j_, std::string path_, ErrorKind kind_) : j(j_), path(std::move(path_)), kind(kind_) {
    if (!j.is_object()) fail(path, "must be an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw Error(kind, field + " " + what, field);
  }

  std::string sub(std::string_view key) const { return path.empty() ? std::string(key) : path + "." + std::string(key); }

  const Json* find(std::string_view key) const {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }

  const Json& require(std::string_view key) const {
    const Json* v = find(key);
    if (!v) fail(sub(key), "is required");
    return *v;
  }

  double number(std::string_view key, std::optional<double> def = {}) const {
    const Json* v = find(key);
    if (!v) {
      if (def) return *def;
      fail(sub(key), "is required");
    }
    if (!v->is_number()) fail(sub(key), "must be a number");
    return v->get<double>();
  }

  std::optional<double> optional_number(std::string_view key) const {
    const Json* v = find(key);
    if (!v || v->is_null()) return std::nullopt;
    if (!v->is_number()) fail(sub(key), "must be a number or null");
    return v->get<double>();
  }

  std::uint64_t count(std::string_view key, std::optional<std::uint64_t> def = {}) const {
    const Json* v = find(key);
    if (!v) {
      if (def) return *def;
      fail(sub(key), "is required");
    }
    return as_count(*v, sub(key));
  }

  std::uint64_t as_count(const Json& v, const std::string& field) const {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    fail(field, "must be a nonnegative integer");
  }

  std::string string(std::string_view key, std::optional<std::string> def = {}) const {
    const Json* v = find(key);
    if (!v) {
      if (def) return *def;
      fail(sub(key), "is required");
    }
    if (!v->is_string()) fail(sub(key), "must be a string");
    return v->get<std::string>();
  }

  Vec2 vec2(std::string_view key) const { return as_vec2(require(key), sub(key)); }

  Vec2 as_vec2(const Json& v, const std::string& field) const {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      fail(field, "must be an array of two numbers");
    return {v[0].get<double>(), v[1].get<double>()};
  }

  const Json& array(std::string_view key) const {
    const Json& v = require(key);
    if (!v.is_array()) fail(sub(key), "must be an array");
    return v;
  }
};

Json vec2_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

std::vector<LabeledExample> examples_from_json(const Reader& r, std::string_view key) {
  std::vector<LabeledExample> out;
  const Json& arr = r.array(key);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Reader e(arr[i], r.sub(key) + "[" + std::to_string(i) + "]", r.kind);
    const auto label = e.count("label");
    if (label > 1) e.fail(e.sub("label"), "must be 0 or 1");
    out.push_back({e.vec2("x"), static_cast<int>(label)});
  }
  return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Configs

Json to_json(const DatasetSpec& spec) {
  return {{"shape", std::string(to_string(spec.shape))},
          {"n_train", spec.n_train},
          {"n_test", spec.n_test},
          {"noise", spec.noise ? Json(*spec.noise) : Json(nullptr)},
          {"seed", spec.seed}};
}

DatasetSpec dataset_spec_from_json(const Json& j, const std::string& path) {
  Reader r(j, path, ErrorKind::Config);
  DatasetSpec spec;
  spec.shape = shape_from_string(r.string("shape", std::string(to_string(spec.shape))));
  spec.n_train = r.count("n_train", spec.n_train);
  spec.n_test = r.count("n_test", spec.n_test);
  spec.noise = r.optional_number("noise");
  spec.seed = r.count("seed", spec.seed);
  return spec;
}

Json to_json(const ModelConfig& config) {
  return {{"hidden_layers", config.hidden_layers},
          {"activation", std::string(to_string(config.activation))},
          {"seed", config.seed}};
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  Reader r(j, path, ErrorKind::Config);
  ModelConfig cfg;
  if (const Json* layers = r.find("hidden_layers")) {
    if (!layers->is_array()) r.fail(r.sub("hidden_layers"), "must be an array");
    cfg.hidden_layers.clear();
    for (std::size_t i = 0; i < layers->size(); ++i)
      cfg.hidden_layers.push_back(r.as_count((*layers)[i], r.sub("hidden_layers") + "[" + std::to_string(i) + "]"));
  }
  cfg.activation = activation_from_string(r.string("activation", std::string(to_string(cfg.activation))));
  cfg.seed = r.count("seed", cfg.seed);
  return cfg;
}

Json to_json(const LossConfig& config) { return {{"c", config.c}, {"lambda", config.lambda}}; }

LossConfig loss_config_from_json(const Json& j, const std::string& path) {
  Reader r(j, path, ErrorKind::Config);
  LossConfig cfg;
  cfg.c = r.number("c", cfg.c);
  cfg.lambda = r.number("lambda", cfg.lambda);
  return cfg;
}

Json to_json(const SessionConfig& config) {
  return {{"dataset", to_json(config.dataset)},
          {"model", to_json(config.model)},
          {"loss", to_json(config.loss)},
          {"max_epochs", config.max_epochs},
          {"snapshot_every", config.snapshot_every}};
}

SessionConfig session_config_from_json(const Json& j) {
  Reader r(j, "", ErrorKind::Config);
  SessionConfig cfg;
  if (const Json* v = r.find("dataset")) cfg.dataset = dataset_spec_from_json(*v, "dataset");
  if (const Json* v = r.find("model")) cfg.model = model_config_from_json(*v, "model");
  if (const Json* v = r.find("loss")) cfg.loss = loss_config_from_json(*v, "loss");
  cfg.max_epochs = r.count("max_epochs", cfg.max_epochs);
  cfg.snapshot_every = r.count("snapshot_every", cfg.snapshot_every);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Values

Json to_json(const LabeledExample& example) { return {{"x", vec2_json(example.x)}, {"label", example.label}}; }

Json to_json(const DirectionAnnotation& a) {
  return {{"id", a.id},
          {"example_index", a.example_index},
          {"direction", vec2_json(a.d.vec())},
          {"created_at", a.created_at}};
}

DirectionAnnotation annotation_from_json(const Json& j, const std::string& path) {
  Reader r(j, path, ErrorKind::Parse);
  DirectionAnnotation a;
  a.id = r.count("id");
  a.example_index = r.count("example_index");
  a.d = Direction::from_stored(r.vec2("direction"));
  a.created_at = r.count("created_at", a.id);
  return a;
}

Json to_json(const LossBreakdown& loss) {
  return {{"bce", loss.bce},
          {"direction", loss.direction},
          {"total", loss.total},
          {"n_examples", loss.n_examples},
          {"n_annotations", loss.n_annotations}};
}

LossBreakdown loss_breakdown_from_json(const Json& j, const std::string& path) {
  Reader r(j, path, ErrorKind::Parse);
  LossBreakdown b;
  b.bce = r.number("bce");
  b.direction = r.number("direction");
  b.total = r.number("total");
  b.n_examples = r.count("n_examples");
  b.n_annotations = r.count("n_annotations");
  return b;
}

Json to_json(const HistoryEntry& e) {
  return {{"epoch", e.epoch},
          {"loss", to_json(e.loss)},
          {"lambda", e.lambda},
          {"train_accuracy", e.train_accuracy},
          {"test_accuracy", e.test_accuracy ? Json(*e.test_accuracy) : Json(nullptr)}};
}

HistoryEntry history_entry_from_json(const Json& j, const std::string& path) {
  Reader r(j, path, ErrorKind::Parse);
  HistoryEntry e;
  e.epoch = r.count("epoch");
  e.loss = loss_breakdown_from_json(r.require("loss"), r.sub("loss"));
  e.lambda = r.number("lambda");
  e.train_accuracy = r.number("train_accuracy");
  e.test_accuracy = r.optional_number("test_accuracy");
  return e;
}

// ---------------------------------------------------------------------------
// Documents

Json dataset_document(const Dataset& dataset) {
  Json train = Json::array(), test = Json::array();
  for (const auto& e : dataset.train) train.push_back(to_json(e));
  for (const auto& e : dataset.test) test.push_back(to_json(e));
  return make_document("dataset", {{"spec", to_json(dataset.spec)}, {"train", train}, {"test", test}});
}

Dataset dataset_from_document(const Json& doc) {
  check_document(doc, "dataset");
  Reader r(doc, "", ErrorKind::Parse);
  Dataset ds;
  ds.spec = dataset_spec_from_json(r.require("spec"), "spec");
  ds.train = examples_from_json(r, "train");
  ds.test = examples_from_json(r, "test");
  return ds;
}

Json grid_document(const ProbabilityGrid& grid) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < grid.resolution; ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < grid.resolution; ++c) row.push_back(grid.at(r, c));
    rows.push_back(std::move(row));
  }
  return make_document("grid", {{"x_min", grid.x_min},
                                {"x_max", grid.x_max},
                                {"y_min", grid.y_min},
                                {"y_max", grid.y_max},
                                {"resolution", grid.resolution},
                                {"values", rows}});
}

ProbabilityGrid grid_from_document(const Json& doc) {
  check_document(doc, "grid");
  Reader r(doc, "", ErrorKind::Parse);
  ProbabilityGrid g;
  g.x_min = r.number("x_min");
  g.x_max = r.number("x_max");
  g.y_min = r.number("y_min");
  g.y_max = r.number("y_max");
  g.resolution = r.count("resolution");
  const Json& rows = r.array("values");
  if (rows.size() != g.resolution) r.fail("values", "must have `resolution` rows");
  g.values.reserve(g.resolution * g.resolution);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Json& row = rows[i];
    if (!row.is_array() || row.size() != g.resolution)
      r.fail("values[" + std::to_string(i) + "]", "must have `resolution` entries");
    for (const auto& v : row) {
      if (!v.is_number()) r.fail("values[" + std::to_string(i) + "]", "must contain numbers");
      g.values.push_back(v.get<double>());
    }
  }
  return g;
}

Json metrics_document(std::span<const HistoryEntry> history) {
  Json arr = Json::array();
  for (const auto& e : history) arr.push_back(to_json(e));
  return make_document("metrics", {{"history", arr}});
}

std::vector<HistoryEntry> metrics_from_document(const Json& doc) {
  check_document(doc, "metrics");
  Reader r(doc, "", ErrorKind::Parse);
  const Json& arr = r.array("history");
  std::vector<HistoryEntry> out;
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(history_entry_from_json(arr[i], "history[" + std::to_string(i) + "]"));
  return out;
}

Json experiment_document(const ExperimentRecord& rec) {
  Json annotations = Json::array();
  for (const auto& a : rec.annotations) annotations.push_back(to_json(a));
  Json series = Json::array();
  for (const auto& v : rec.test_accuracy) series.push_back(v ? Json(*v) : Json(nullptr));
  return make_document("experiment",
                       {{"name", rec.name},
                        {"config", to_json(rec.config)},
                        {"annotations", annotations},
                        {"test_accuracy", series},
                        {"final_accuracy", rec.final_accuracy ? Json(*rec.final_accuracy) : Json(nullptr)},
                        {"rng_algorithm", rec.rng_algorithm},
                        {"optimizer_algorithm", rec.optimizer_algorithm},
                        {"created", rec.created}});
}

ExperimentRecord experiment_from_document(const Json& doc) {
  check_document(doc, "experiment");
  Reader r(doc, "", ErrorKind::Parse);
  ExperimentRecord rec;
  rec.name = r.string("name");
  rec.config = session_config_from_json(r.require("config"));
  const Json& annotations = r.array("annotations");
  for (std::size_t i = 0; i < annotations.size(); ++i)
    rec.annotations.push_back(annotation_from_json(annotations[i], "annotations[" + std::to_string(i) + "]"));
  for (const auto& v : r.array("test_accuracy")) {
    if (v.is_null()) rec.test_accuracy.emplace_back();
    else if (v.is_number()) rec.test_accuracy.emplace_back(v.get<double>());
    else r.fail("test_accuracy", "must contain numbers or null");
  }
  rec.final_accuracy = r.optional_number("final_accuracy");
  rec.rng_algorithm = r.string("rng_algorithm");
  rec.optimizer_algorithm = r.string("optimizer_algorithm");
  rec.created = r.string("created", std::string{});
  return rec;
}

} // namespace cfdir
