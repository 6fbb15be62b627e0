#include <atomic>
#include <mutex>

#include "doctest.h"

#include "cfdir/error.hpp"
#include "cfdir/live_session.hpp"

using namespace cfdir;
using namespace std::chrono_literals;

namespace {

SessionConfig config(std::size_t epochs) {
  SessionConfig cfg;
  cfg.dataset.n_test = 30;
  cfg.dataset.seed = 5;
  cfg.max_epochs = epochs;
  cfg.snapshot_every = 10;
  return cfg;
}

struct Recorder {
  std::mutex mutex;
  std::vector<SessionEvent> events;
  EventSink sink() {
    return [this](const SessionEvent& e) {
      std::lock_guard lock(mutex);
      events.push_back(e);
    };
  }
  std::vector<SessionEvent> copy() {
    std::lock_guard lock(mutex);
    return events;
  }
};

bool phase_is(const LiveSession& s, Phase p) {
  return s.wait_for([p](const SessionSnapshot& snap) { return snap.phase == p; }, 20s);
}

} // namespace

TEST_CASE("live session matches the scripted run") {
  Recorder rec;
  LiveSession live(config(100), {}, rec.sink());
  CHECK(live.snapshot()->phase == Phase::Idle);

  live.submit(cmd::Start{}, 50).get();
  REQUIRE(phase_is(live, Phase::Paused));
  CHECK(live.snapshot()->epoch == 50);
  const auto added = live.submit(cmd::AddAnnotation{2, Vec2(3, 0)}).get();
  REQUIRE(added.annotation.has_value());
  CHECK(added.annotation->d.vec() == Vec2(1, 0));
  live.submit(cmd::Resume{}).get();
  REQUIRE(phase_is(live, Phase::Finished));

  const std::vector<ScriptedCommand> script = {
      {0, cmd::Start{}}, {50, cmd::Pause{}}, {50, cmd::AddAnnotation{2, Vec2(3, 0)}}, {50, cmd::Resume{}}};
  const SessionState expected = run_script(config(100), script);
  const auto history = live.history();
  CHECK(history == expected.history);
  CHECK(*live.snapshot()->params == expected.params);
  CHECK(live.history(95).size() == 5);
  CHECK(live.history(95).front() == expected.history[95]);
  CHECK(live.history(200).empty());

  const auto events = rec.copy();
  std::size_t metrics = 0, grids = 0, last_metric_epoch = 0;
  std::vector<std::pair<Phase, Phase>> phases;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::EpochMetrics:
        ++metrics;
        CHECK(e.epoch == last_metric_epoch + 1);
        last_metric_epoch = e.epoch;
        break;
      case EventKind::GridSnapshot:
        ++grids;
        CHECK(e.epoch == last_metric_epoch);
        CHECK(e.epoch % 10 == 0);
        break;
      case EventKind::PhaseChange: {
        const auto& pc = std::get<PhaseChange>(e.payload);
        phases.emplace_back(pc.from, pc.to);
        break;
      }
      case EventKind::Fault: FAIL("unexpected fault"); break;
    }
  }
  CHECK(metrics == 100);
  CHECK(grids == 10);
  const std::vector<std::pair<Phase, Phase>> expected_phases = {{Phase::Idle, Phase::Running},
                                                                {Phase::Running, Phase::Paused},
                                                                {Phase::Paused, Phase::Running},
                                                                {Phase::Running, Phase::Finished}};
  CHECK(phases == expected_phases);
}

TEST_CASE("command errors surface through the future") {
  LiveSession live(config(10));
  auto f = live.submit(cmd::Pause{});
  CHECK_THROWS_AS(f.get(), Error);
  try {
    live.submit(cmd::Resume{}).get();
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::State);
  }
  CHECK(live.snapshot()->phase == Phase::Idle);
  CHECK_THROWS_AS(live.submit(cmd::AddAnnotation{0, Vec2(0, 0)}).get(), Error);
  CHECK(live.snapshot()->annotations.empty());
}

TEST_CASE("invalid config throws synchronously") {
  SessionConfig bad = config(10);
  bad.model.hidden_layers = {0};
  CHECK_THROWS_AS(LiveSession{bad}, Error);
}

TEST_CASE("reset clears published history and restarts cleanly") {
  LiveSession live(config(20));
  live.submit(cmd::Start{}).get();
  REQUIRE(phase_is(live, Phase::Finished));
  CHECK(live.history_size() == 20);
  live.submit(cmd::Reset{}).get();
  CHECK(live.history_size() == 0);
  CHECK(live.snapshot()->epoch == 0);
  live.submit(cmd::Start{}).get();
  REQUIRE(phase_is(live, Phase::Finished));
  CHECK(live.history() == run_script(config(20), std::vector<ScriptedCommand>{{0, cmd::Start{}}}).history);
}

TEST_CASE("pause mid-run via inspect and destroy while running") {
  LiveSessionOptions opts;
  opts.epoch_interval = 2ms;
  auto live = std::make_unique<LiveSession>(config(100000), opts);
  live->submit(cmd::Start{}).get();
  REQUIRE(live->wait_for([](const SessionSnapshot& s) { return s.epoch >= 3; }, 20s));
  const auto epoch = live->inspect([](const SessionState& s) { return s.epoch; }).get();
  CHECK(epoch >= 3);
  const auto paused = live->submit(cmd::Pause{}).get();
  CHECK(paused.phase == Phase::Paused);
  CHECK(live->history_size() == paused.epoch);
  live->submit(cmd::Resume{}).get();
  live.reset(); // joins without hanging
}
