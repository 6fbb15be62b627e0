// cfdir: headless training, seed comparisons and the interactive server.

#include <charconv>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"

#include "cfdir/error.hpp"
#include "cfdir/experiment.hpp"
#include "cfdir/io.hpp"
#include "cfdir/service.hpp"

using namespace cfdir;
namespace fs = std::filesystem;

namespace {

struct RunFlags {
  std::string shape = "blobs";
  std::size_t n_train = 9;
  std::size_t n_test = 200;
  std::optional<double> noise;
  std::uint64_t data_seed = 0;
  std::string hidden = "16,16";
  std::uint64_t model_seed = 0;
  std::size_t epochs = 2000;
  double lambda = 1.0;
  double c = 20.0;
  std::size_t snapshot_every = 10;
  std::string annotations;
  std::string out;
};

void add_run_flags(CLI::App& app, RunFlags& f) {
  app.add_option("--shape", f.shape, "Dataset shape: blobs, moons or circles")->capture_default_str();
  app.add_option("--n-train", f.n_train, "Training points")->capture_default_str();
  app.add_option("--n-test", f.n_test, "Test points")->capture_default_str();
  app.add_option("--noise", f.noise, "Noise level (default: 0.6 blobs, 0.15 moons, 0.1 circles)");
  app.add_option("--data-seed", f.data_seed, "Dataset seed")->capture_default_str();
  app.add_option("--hidden", f.hidden, "Hidden layer widths, comma separated (empty: linear model)")
      ->capture_default_str();
  app.add_option("--model-seed", f.model_seed, "Initialisation seed")->capture_default_str();
  app.add_option("--epochs", f.epochs, "Training epochs (full-batch steps)")->capture_default_str();
  app.add_option("--lambda", f.lambda, "Weight of the direction loss")->capture_default_str();
  app.add_option("--c", f.c, "Soft-sign steepness")->capture_default_str();
  app.add_option("--snapshot-every", f.snapshot_every, "Epochs between grid snapshots")->capture_default_str();
  app.add_option("--annotations", f.annotations, "Annotation script (cfdir.annotations document)");
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  if (text.empty()) return out;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, comma - start);
    std::size_t width = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), width);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
      throw Error(ErrorKind::Config, "--hidden must be comma-separated positive integers, got '" + text + "'",
                  "model.hidden_layers");
    out.push_back(width);
    start = comma + 1;
  }
  return out;
}

SessionConfig to_config(const RunFlags& f) {
  SessionConfig cfg;
  cfg.dataset.shape = shape_from_string(f.shape);
  cfg.dataset.n_train = f.n_train;
  cfg.dataset.n_test = f.n_test;
  cfg.dataset.noise = f.noise;
  cfg.dataset.seed = f.data_seed;
  cfg.model.hidden_layers = parse_widths(f.hidden);
  cfg.model.seed = f.model_seed;
  cfg.loss.c = f.c;
  cfg.loss.lambda = f.lambda;
  cfg.max_epochs = f.epochs;
  cfg.snapshot_every = f.snapshot_every;
  cfg.validate();
  return cfg;
}

AnnotationScript script_of(const RunFlags& f) {
  return f.annotations.empty() ? AnnotationScript{} : load_annotation_script(f.annotations);
}

// Records made from the command line are stamped deterministically so that
// reruns are byte-identical; SOURCE_DATE_EPOCH overrides the default.
std::string default_created() {
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    std::int64_t t = 0;
    const std::string_view v(env);
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), t);
    if (ec == std::errc{} && ptr == v.data() + v.size()) return utc_timestamp(t);
  }
  return utc_timestamp(0);
}

int cmd_train(const RunFlags& f, const std::string& name, std::size_t grid_resolution) {
  const SessionConfig cfg = to_config(f);
  const TrainingRun run = run_training(cfg, script_of(f), name, default_created());
  write_training_outputs(run, f.out, grid_resolution);
  const auto& last = run.state.history.back();
  std::cout << "epochs " << run.state.epoch << "  loss " << last.loss.total << "  train_accuracy "
            << last.train_accuracy;
  if (last.test_accuracy) std::cout << "  test_accuracy " << *last.test_accuracy;
  std::cout << "\nwrote " << (fs::path(f.out) / kMetricsFile).string() << ", " << kParamsFile << ", " << kGridFile
            << ", " << kRecordFile << "\n";
  return 0;
}

int cmd_compare(const RunFlags& f, std::size_t n_seeds, std::size_t threads) {
  const SessionConfig cfg = to_config(f);
  const ComparisonResult result = run_comparison(cfg, script_of(f), n_seeds, threads);
  std::cout << format_comparison_table(result);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_file(fs::path(f.out) / "comparison.json", comparison_document(result, cfg));
  }
  return 0;
}

struct ServeFlags {
  std::string address = "127.0.0.1";
  int port = 8000;
  std::string ui_dir = "web-ui/dist";
  std::string store = "experiments";
  std::size_t epoch_interval_ms = 10;
  std::size_t grid_resolution = 50;
};

int cmd_serve(const ServeFlags& f) {
  // Route SIGINT/SIGTERM to a waiting thread instead of async handlers.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServiceOptions opts;
  opts.store_dir = f.store;
  if (!f.ui_dir.empty()) opts.ui_dir = fs::path(f.ui_dir);
  opts.session.epoch_interval = std::chrono::milliseconds(f.epoch_interval_ms);
  opts.session.grid_resolution = f.grid_resolution;
  Service service(opts);
  const int port = service.bind(f.address, f.port);
  std::cout << "listening on http://" << f.address << ":" << port << "\n"
            << "experiment store " << fs::absolute(f.store).string() << std::endl;

  std::jthread waiter([&service, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  std::thread server([&service] { service.listen(); });
  service.wait_until_ready();
  server.join();
  // Listener ended on its own: release the waiter.
  if (waiter.joinable()) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << "stopped" << std::endl;
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual-direction training: headless runs, comparisons and the interactive server"};
  app.require_subcommand(1);

  RunFlags train_flags;
  std::string name = "train";
  std::size_t grid_resolution = kDefaultGridResolution;
  CLI::App* train = app.add_subcommand("train", "Train one model and write metrics, params, grid and record");
  add_run_flags(*train, train_flags);
  train->add_option("--out", train_flags.out, "Output directory")->required();
  train->add_option("--name", name, "Experiment name stored in the record")->capture_default_str();
  train->add_option("--grid-resolution", grid_resolution, "Resolution of grid.json")->capture_default_str();

  RunFlags compare_flags;
  std::size_t n_seeds = 20, threads = 0;
  CLI::App* compare = app.add_subcommand("compare", "Control (lambda 0) vs annotated runs over several seeds");
  add_run_flags(*compare, compare_flags);
  compare->add_option("--n-seeds", n_seeds, "Seeds; seed i offsets both data and model seeds by i")
      ->capture_default_str();
  compare->add_option("--threads", threads, "Worker threads (0: one per core)")->capture_default_str();
  compare->add_option("--out", compare_flags.out, "Directory for comparison.json (optional)");

  ServeFlags serve_flags;
  CLI::App* serve = app.add_subcommand("serve", "Serve the HTTP API and the UI bundle");
  serve->add_option("--address", serve_flags.address, "Bind address")->envname("CFDIR_ADDRESS")->capture_default_str();
  serve->add_option("--port", serve_flags.port, "Port (0: any free port)")->envname("CFDIR_PORT")->capture_default_str();
  serve->add_option("--ui-dir", serve_flags.ui_dir, "Built UI bundle directory")
      ->envname("CFDIR_UI_DIR")
      ->capture_default_str();
  serve->add_option("--store", serve_flags.store, "Experiment store directory")
      ->envname("CFDIR_STORE")
      ->capture_default_str();
  serve->add_option("--epoch-interval-ms", serve_flags.epoch_interval_ms, "Minimum time between epochs")
      ->envname("CFDIR_EPOCH_INTERVAL_MS")
      ->capture_default_str();
  serve->add_option("--grid-resolution", serve_flags.grid_resolution, "Resolution of streamed grid snapshots")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_flags, name, grid_resolution);
    if (*compare) return cmd_compare(compare_flags, n_seeds, threads);
    if (*serve) return cmd_serve(serve_flags);
  } catch (const Error& e) {
    std::cerr << "cfdir: " << to_string(e.kind()) << " error";
    if (!e.field().empty()) std::cerr << " (" << e.field() << ")";
    std::cerr << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cfdir: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
