#include <filesystem>

#include "doctest.h"

#include "cfdir/error.hpp"
#include "cfdir/experiment_store.hpp"
#include "cfdir/io.hpp"

using namespace cfdir;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

SessionState short_run(std::uint64_t seed) {
  SessionConfig cfg;
  cfg.dataset.n_test = 40;
  cfg.dataset.seed = seed;
  cfg.max_epochs = 8;
  SessionState s = apply_command(create_session(cfg), cmd::Start{});
  while (s.phase == Phase::Running) s = train_epoch(std::move(s));
  return s;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Input;
}

} // namespace

TEST_CASE("save, list, get, delete") {
  TempDir tmp("cfdir_test_store");
  ExperimentStore store(tmp.path);
  CHECK(store.list().empty());

  const auto s1 = short_run(1), s2 = short_run(2);
  const auto r1 = save_experiment(store, s1, "control run");
  CHECK(r1.final_accuracy == s1.history.back().test_accuracy);

  auto listed = store.list();
  REQUIRE(listed.size() == 1);
  CHECK(listed[0] == r1);

  SUBCASE("duplicate name leaves the store unchanged") {
    CHECK(kind_of([&] { save_experiment(store, s2, "control run"); }) == ErrorKind::Naming);
    CHECK(store.list() == listed);
    CHECK(kind_of([&] { save_experiment(store, s2, ""); }) == ErrorKind::Naming);
  }

  SUBCASE("delete removes exactly one") {
    const auto r2 = save_experiment(store, s2, "annotated run");
    CHECK(store.list().size() == 2);
    store.remove("control run");
    listed = store.list();
    REQUIRE(listed.size() == 1);
    CHECK(listed[0] == r2);
    CHECK(kind_of([&] { store.remove("control run"); }) == ErrorKind::NotFound);
    CHECK(kind_of([&] { store.get("control run"); }) == ErrorKind::NotFound);
    CHECK_FALSE(fs::exists(tmp.path / "control_run.json"));
  }

  SUBCASE("records persist across instances") {
    save_experiment(store, s2, "annotated run");
    ExperimentStore reopened(tmp.path);
    CHECK(reopened.list() == store.list());
    CHECK(reopened.get("control run") == r1);
  }

  SUBCASE("names that sanitize alike get distinct files") {
    save_experiment(store, s2, "control/run");
    save_experiment(store, s2, "control?run");
    save_experiment(store, s2, "index");
    CHECK(store.list().size() == 4);
    CHECK(fs::exists(tmp.path / "control_run.json"));
    CHECK(fs::exists(tmp.path / "control_run-2.json"));
    CHECK(fs::exists(tmp.path / "control_run-3.json"));
    CHECK(store.get("control?run").name == "control?run");
    CHECK(store.get("index").name == "index");
    check_document(parse_json(read_file(tmp.path / "index.json")), "experiment_index");
  }
}

TEST_CASE("sanitize") {
  CHECK(ExperimentStore::sanitize("Run_1-a") == "Run_1-a");
  CHECK(ExperimentStore::sanitize("../etc/passwd") == "___etc_passwd");
  CHECK(ExperimentStore::sanitize("") == "_");
}
