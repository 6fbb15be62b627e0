#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

#include "cfdir/data.hpp"
#include "cfdir/error.hpp"
#include "cfdir/rng.hpp"

using namespace cfdir;
using namespace cfdir::testing;

namespace {

// Plain logistic regression by batch gradient descent on standardised
// features; independent of the model module.
struct LinearProbe {
  double w0 = 0, w1 = 0, b = 0;
  double mx = 0, my = 0, sx = 1, sy = 1;

  explicit LinearProbe(const std::vector<LabeledExample>& train) {
    for (const auto& e : train) { mx += e.x.x(); my += e.x.y(); }
    mx /= train.size(); my /= train.size();
    double vx = 0, vy = 0;
    for (const auto& e : train) { vx += std::pow(e.x.x() - mx, 2); vy += std::pow(e.x.y() - my, 2); }
    sx = std::sqrt(vx / train.size()) + 1e-9;
    sy = std::sqrt(vy / train.size()) + 1e-9;
    for (int it = 0; it < 5000; ++it) {
      double g0 = 0, g1 = 0, gb = 0;
      for (const auto& e : train) {
        const double u = (e.x.x() - mx) / sx, v = (e.x.y() - my) / sy;
        const double r = logistic(w0 * u + w1 * v + b) - e.label;
        g0 += r * u; g1 += r * v; gb += r;
      }
      // small ridge keeps separable data from diverging
      w0 -= 0.5 * (g0 / train.size() + 1e-3 * w0);
      w1 -= 0.5 * (g1 / train.size() + 1e-3 * w1);
      b -= 0.5 * gb / train.size();
    }
  }
  int predict(const Vec2& x) const {
    return w0 * (x.x() - mx) / sx + w1 * (x.y() - my) / sy + b >= 0 ? 1 : 0;
  }
};

} // namespace

TEST_CASE("rng streams are reproducible and tag-separated") {
  RandomStream a(42, "dataset/train"), b(42, "dataset/train"), c(42, "dataset/test");
  for (int i = 0; i < 10; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  // SplitMix64 reference sequence for seed 0 (state starts at 0):
  // first output 0xe220a8397b1dcdaf.
  CHECK(mix64(0x9e3779b97f4a7c15ULL) == 0xe220a8397b1dcdafULL);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

  RandomStream n(1, "normals");
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) { const double z = n.normal(); sum += z; sq += z * z; }
  CHECK(std::abs(sum / 20000) < 0.05);
  CHECK(sq / 20000 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("zero-noise blobs sit on the centroids") {
  DatasetSpec spec;
  spec.shape = Shape::Blobs;
  spec.n_train = 2;
  spec.n_test = 0;
  spec.noise = 0.0;
  const auto ds = generate(spec);
  REQUIRE(ds.train.size() == 2);
  CHECK(ds.train[0].x == Vec2(-2.0, 0.0));
  CHECK(ds.train[0].label == 0);
  CHECK(ds.train[1].x == Vec2(2.0, 0.0));
  CHECK(ds.train[1].label == 1);
  CHECK(ds.test.empty());
}

TEST_CASE("generate is deterministic with independent splits") {
  for (Shape shape : {Shape::Blobs, Shape::Moons, Shape::Circles}) {
    DatasetSpec spec;
    spec.shape = shape;
    spec.n_train = 30;
    spec.n_test = 30;
    spec.seed = 7;
    const auto a = generate(spec);
    const auto b = generate(spec);
    CHECK(a == b);
    // Train and test come from distinct substreams.
    CHECK(a.train != a.test);
    std::set<std::pair<double, double>> seen;
    for (const auto& e : a.train) seen.insert({e.x.x(), e.x.y()});
    for (const auto& e : a.test) CHECK(seen.count({e.x.x(), e.x.y()}) == 0);

    spec.seed = 8;
    CHECK(generate(spec).train != a.train);
  }
}

TEST_CASE("class balance within one example per split") {
  for (std::size_t n : {2u, 3u, 9u, 10u, 101u}) {
    DatasetSpec spec;
    spec.n_train = n;
    spec.n_test = n + 1;
    const auto ds = generate(spec);
    for (const auto* split : {&ds.train, &ds.test}) {
      long ones = 0;
      for (const auto& e : *split) ones += e.label;
      const long zeros = static_cast<long>(split->size()) - ones;
      CHECK(std::abs(ones - zeros) <= 1);
    }
  }
}

TEST_CASE("shape geometry") {
  DatasetSpec spec;
  spec.n_train = 200;
  spec.n_test = 0;
  spec.noise = 0.0;

  spec.shape = Shape::Circles;
  for (const auto& e : generate(spec).train)
    CHECK(e.x.norm() == doctest::Approx(e.label == 0 ? 1.0 : 2.0).epsilon(1e-12));

  spec.shape = Shape::Moons;
  for (const auto& e : generate(spec).train) {
    const Vec2 centre = e.label == 0 ? Vec2(0.0, 0.0) : Vec2(1.0, 0.5);
    CHECK((e.x - centre).norm() == doctest::Approx(1.0).epsilon(1e-12));
    if (e.label == 0) CHECK(e.x.y() >= 0.0);
    else CHECK(e.x.y() <= 0.5);
  }

  CHECK(default_noise(Shape::Blobs) == 0.6);
  CHECK(default_noise(Shape::Moons) == 0.15);
  CHECK(default_noise(Shape::Circles) == 0.1);
}

TEST_CASE("spec validation") {
  DatasetSpec spec;
  spec.n_train = 1;
  CHECK_THROWS_AS(generate(spec), Error);
  spec.n_train = 4;
  spec.noise = -0.1;
  CHECK_THROWS_AS(generate(spec), Error);
  CHECK_THROWS_AS(shape_from_string("spirals"), Error);
  CHECK(shape_from_string("moons") == Shape::Moons);
}

TEST_CASE("nine-point blobs are linearly separable on the test set") {
  DatasetSpec spec;
  spec.shape = Shape::Blobs;
  spec.n_train = 9;
  spec.n_test = 200;
  spec.seed = 3;
  const auto ds = generate(spec);
  const LinearProbe probe(ds.train);
  std::size_t correct = 0;
  for (const auto& e : ds.test) correct += probe.predict(e.x) == e.label;
  CHECK(static_cast<double>(correct) / ds.test.size() >= 0.95);
}

TEST_CASE("evaluate_grid") {
  DatasetSpec spec;
  spec.n_train = 20;
  spec.n_test = 20;
  spec.seed = 2;
  const auto ds = generate(spec);

  SUBCASE("zero-weight model is 0.5 everywhere") {
    const auto grid = evaluate_grid(zero_model(), ds, 12);
    CHECK(grid.values.size() == 144);
    for (double v : grid.values) CHECK(v == 0.5);
  }
  SUBCASE("bounds are the data box widened 15% per side") {
    double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
    for (const auto* split : {&ds.train, &ds.test})
      for (const auto& e : *split) {
        lo_x = std::min(lo_x, e.x.x()); hi_x = std::max(hi_x, e.x.x());
        lo_y = std::min(lo_y, e.x.y()); hi_y = std::max(hi_y, e.x.y());
      }
    const auto grid = evaluate_grid(zero_model(), ds);
    CHECK(grid.resolution == 100);
    CHECK(grid.x_min == doctest::Approx(lo_x - 0.15 * (hi_x - lo_x)));
    CHECK(grid.x_max == doctest::Approx(hi_x + 0.15 * (hi_x - lo_x)));
    CHECK(grid.y_min == doctest::Approx(lo_y - 0.15 * (hi_y - lo_y)));
    CHECK(grid.y_max == doctest::Approx(hi_y + 0.15 * (hi_y - lo_y)));
  }
  SUBCASE("linear model w = (1, 0): constant in y, increasing in x") {
    const auto grid = evaluate_grid(linear_model(1.0, 0.0, 0.0), ds, 25);
    for (std::size_t r = 0; r < 25; ++r)
      for (std::size_t c = 0; c < 25; ++c) {
        CHECK(grid.at(r, c) == grid.at(0, c));
        if (c > 0) CHECK(grid.at(r, c) > grid.at(r, c - 1));
      }
  }
  SUBCASE("grid values equal forward at the lattice points") {
    std::mt19937_64 rng(6);
    const auto p = random_params(rng, {5, 5});
    const auto grid = evaluate_grid(p, ds, 17);
    CHECK(grid.lattice_point(0, 0) == Vec2(grid.x_min, grid.y_min));
    CHECK(grid.lattice_point(16, 16) == Vec2(grid.x_max, grid.y_max));
    for (std::size_t r = 0; r < 17; ++r)
      for (std::size_t c = 0; c < 17; ++c) {
        CHECK(grid.at(r, c) == forward(p, grid.lattice_point(r, c)));
        CHECK(grid.at(r, c) > 0.0);
        CHECK(grid.at(r, c) < 1.0);
      }
  }
  SUBCASE("zero extent axis is widened") {
    DatasetSpec flat;
    flat.noise = 0.0;
    flat.n_test = 0;
    const auto g = evaluate_grid(zero_model(), generate(flat), 4);
    CHECK(g.y_min == -1.0);
    CHECK(g.y_max == 1.0);
    CHECK(g.x_min == doctest::Approx(-2.6));
  }
  CHECK_THROWS_AS(evaluate_grid(zero_model(), ds, 1), Error);
}

TEST_CASE("accuracy") {
  DatasetSpec spec;
  spec.n_train = 9;
  spec.n_test = 0;
  spec.noise = 0.0;
  const auto ds = generate(spec);

  // f = 0.5 ties predict class 1.
  CHECK(accuracy(zero_model(), ds.train) == doctest::Approx(4.0 / 9.0));
  CHECK(accuracy(linear_model(1.0, 0.0, 0.0), ds.train) == 1.0);
  CHECK(accuracy(linear_model(-1.0, 0.0, 0.0), ds.train) == 0.0);
  CHECK_THROWS_AS(accuracy(zero_model(), {}), Error);

  // Random labels: an untrained model scores 0.5 +/- 3 / sqrt(n).
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<LabeledExample> noise;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) noise.push_back({Vec2(u(rng), u(rng)), static_cast<int>(rng() % 2)});
  ModelConfig cfg;
  cfg.seed = 5;
  CHECK(std::abs(accuracy(init_params(cfg), noise) - 0.5) <= 3.0 / std::sqrt(static_cast<double>(n)));
}
