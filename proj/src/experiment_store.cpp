#include "cfdir/experiment_store.hpp"

#include <cctype>
#include <set>

#include "cfdir/error.hpp"
#include "cfdir/io.hpp"

namespace cfdir {

namespace fs = std::filesystem;

namespace {
constexpr const char* kIndexFile = "index.json";
}

ExperimentStore::ExperimentStore(fs::path directory) : directory_(std::move(directory)) {
  fs::create_directories(directory_);
  const fs::path index = directory_ / kIndexFile;
  if (!fs::exists(index)) return;
  const Json doc = parse_json(read_file(index));
  check_document(doc, "experiment_index");
  for (const auto& entry : doc.at("records")) {
    files_.emplace(entry.at("name").get<std::string>(), entry.at("file").get<std::string>());
  }
}

std::string ExperimentStore::sanitize(const std::string& name) {
  std::string out;
  for (unsigned char c : name) out += (std::isalnum(c) || c == '-' || c == '_') ? static_cast<char>(c) : '_';
  if (out.empty()) out = "_";
  return out;
}

void ExperimentStore::write_index() const {
  Json records = Json::array();
  for (const auto& [name, file] : files_) records.push_back({{"name", name}, {"file", file}});
  write_file(directory_ / kIndexFile, dump(make_document("experiment_index", {{"records", records}})));
}

ExperimentRecord ExperimentStore::save(const ExperimentRecord& record) {
  if (record.name.empty()) throw Error(ErrorKind::Naming, "experiment name must not be empty", "name");
  std::lock_guard lock(mutex_);
  if (files_.count(record.name))
    throw Error(ErrorKind::Naming, "an experiment named '" + record.name + "' already exists", "name");

  std::set<std::string> used;
  for (const auto& [_, file] : files_) used.insert(file);
  const std::string stem = sanitize(record.name);
  std::string file = stem + ".json";
  for (int k = 2; used.count(file) || file == kIndexFile; ++k) file = stem + "-" + std::to_string(k) + ".json";

  write_file(directory_ / file, dump(experiment_document(record)));
  files_.emplace(record.name, file);
  try {
    write_index();
  } catch (...) {
    files_.erase(record.name);
    fs::remove(directory_ / file);
    throw;
  }
  return record;
}

std::vector<ExperimentRecord> ExperimentStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<ExperimentRecord> out;
  for (const auto& [_, file] : files_) out.push_back(experiment_from_document(parse_json(read_file(directory_ / file))));
  return out;
}

ExperimentRecord ExperimentStore::get(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = files_.find(name);
  if (it == files_.end()) throw Error(ErrorKind::NotFound, "no experiment named '" + name + "'", "name");
  return experiment_from_document(parse_json(read_file(directory_ / it->second)));
}

void ExperimentStore::remove(const std::string& name) {
  std::lock_guard lock(mutex_);
  auto it = files_.find(name);
  if (it == files_.end()) throw Error(ErrorKind::NotFound, "no experiment named '" + name + "'", "name");
  const std::string file = it->second;
  files_.erase(it);
  write_index();
  fs::remove(directory_ / file);
}

ExperimentRecord save_experiment(ExperimentStore& store, const SessionState& state, const std::string& name) {
  return store.save(make_record(state, name, utc_timestamp()));
}

} // namespace cfdir
