#include "cfdir/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "cfdir/error.hpp"
#include "cfdir/rng.hpp"

namespace cfdir {

std::string_view to_string(Shape shape) {
  switch (shape) {
    case Shape::Blobs: return "blobs";
    case Shape::Moons: return "moons";
    case Shape::Circles: return "circles";
  }
  return "unknown";
}

Shape shape_from_string(std::string_view name) {
  if (name == "blobs") return Shape::Blobs;
  if (name == "moons") return Shape::Moons;
  if (name == "circles") return Shape::Circles;
  throw Error(ErrorKind::Config, "unknown dataset shape '" + std::string(name) + "'", "dataset.shape");
}

double default_noise(Shape shape) {
  switch (shape) {
    case Shape::Blobs: return 0.6;
    case Shape::Moons: return 0.15;
    case Shape::Circles: return 0.1;
  }
  return 0.0;
}

void DatasetSpec::validate() const {
  if (n_train < 2)
    throw Error(ErrorKind::Config, "dataset.n_train must be at least 2", "dataset.n_train");
  if (noise && !(*noise >= 0.0 && std::isfinite(*noise)))
    throw Error(ErrorKind::Config, "dataset.noise must be nonnegative and finite", "dataset.noise");
}

namespace {

LabeledExample draw(Shape shape, int label, double noise, RandomStream& rng) {
  Vec2 p;
  switch (shape) {
    case Shape::Blobs:
      p = Vec2(label == 0 ? -2.0 : 2.0, 0.0);
      break;
    case Shape::Moons: {
      const double t = std::numbers::pi * rng.uniform();
      p = label == 0 ? Vec2(std::cos(t), std::sin(t)) : Vec2(1.0 - std::cos(t), 0.5 - std::sin(t));
      break;
    }
    case Shape::Circles: {
      const double angle = 2.0 * std::numbers::pi * rng.uniform();
      const double radius = label == 0 ? 1.0 : 2.0;
      p = Vec2(radius * std::cos(angle), radius * std::sin(angle));
      break;
    }
  }
  const double jx = rng.normal();
  const double jy = rng.normal();
  p.x() += noise * jx;
  p.y() += noise * jy;
  return {p, label};
}

std::vector<LabeledExample> draw_split(const DatasetSpec& spec, std::size_t n, std::string_view tag) {
  RandomStream rng(spec.seed, tag);
  const double noise = spec.effective_noise();
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw(spec.shape, static_cast<int>(i % 2), noise, rng));
  return out;
}

} // namespace

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  return {draw_split(spec, spec.n_train, "dataset/train"), draw_split(spec, spec.n_test, "dataset/test"),
          spec};
}

Vec2 ProbabilityGrid::lattice_point(std::size_t row, std::size_t col) const {
  const double denom = static_cast<double>(resolution - 1);
  const double tx = static_cast<double>(col) / denom;
  const double ty = static_cast<double>(row) / denom;
  return {x_min * (1.0 - tx) + x_max * tx, y_min * (1.0 - ty) + y_max * ty};
}

ProbabilityGrid grid_bounds(const Dataset& dataset, std::size_t resolution) {
  if (resolution < 2) throw Error(ErrorKind::Input, "grid resolution must be at least 2", "resolution");
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  auto extend = [&](const std::vector<LabeledExample>& split) {
    for (const auto& ex : split) {
      lo = lo.cwiseMin(ex.x);
      hi = hi.cwiseMax(ex.x);
    }
  };
  extend(dataset.train);
  extend(dataset.test);
  if (dataset.train.empty() && dataset.test.empty()) {
    lo = Vec2::Constant(-1.0);
    hi = Vec2::Constant(1.0);
  }

  ProbabilityGrid grid;
  grid.resolution = resolution;
  auto axis = [](double a, double b, double& out_lo, double& out_hi) {
    const double extent = b - a;
    if (extent > 0.0) {
      out_lo = a - kGridMargin * extent;
      out_hi = b + kGridMargin * extent;
    } else {
      out_lo = a - 1.0;
      out_hi = b + 1.0;
    }
  };
  axis(lo.x(), hi.x(), grid.x_min, grid.x_max);
  axis(lo.y(), hi.y(), grid.y_min, grid.y_max);
  return grid;
}

ProbabilityGrid evaluate_grid(const ModelParams& params, const Dataset& dataset, std::size_t resolution) {
  ProbabilityGrid grid = grid_bounds(dataset, resolution);
  grid.values.resize(resolution * resolution);
  for (std::size_t r = 0; r < resolution; ++r)
    for (std::size_t c = 0; c < resolution; ++c)
      grid.values[r * resolution + c] = forward(params, grid.lattice_point(r, c));
  return grid;
}

double accuracy(const ModelParams& params, std::span<const LabeledExample> examples) {
  if (examples.empty()) throw Error(ErrorKind::Input, "accuracy needs at least one example");
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const int predicted = forward(params, ex.x) >= 0.5 ? 1 : 0;
    if (predicted == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

} // namespace cfdir
