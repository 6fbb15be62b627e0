#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "cfdir/session.hpp"

namespace cfdir {

/// Named experiment records on disk: one document per record plus an
/// index.json mapping names to file names. Thread-safe. Every mutation
/// rewrites the index before returning, so there is nothing to flush on
/// shutdown.
class ExperimentStore {
 public:
  /// Creates `directory` if needed and loads an existing index.
  explicit ExperimentStore(std::filesystem::path directory);

  /// Throws Error{Naming} for an empty or already-used name.
  ExperimentRecord save(const ExperimentRecord& record);
  /// Records in name order.
  std::vector<ExperimentRecord> list() const;
  /// Throws Error{NotFound}.
  ExperimentRecord get(const std::string& name) const;
  /// Throws Error{NotFound}.
  void remove(const std::string& name);

  const std::filesystem::path& directory() const noexcept { return directory_; }

  /// File-system-safe stem: [A-Za-z0-9_-] kept, everything else '_'.
  static std::string sanitize(const std::string& name);

 private:
  void write_index() const;

  std::filesystem::path directory_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> files_; // name -> file name
};

/// make_record + store.save, stamped with the current UTC time.
ExperimentRecord save_experiment(ExperimentStore& store, const SessionState& state, const std::string& name);

} // namespace cfdir
