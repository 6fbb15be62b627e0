#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cfdir/losses.hpp"
#include "cfdir/model.hpp"

namespace cfdir {

enum class Shape { Blobs, Moons, Circles };

std::string_view to_string(Shape shape);
Shape shape_from_string(std::string_view name);

/// Shape-specific jitter used when DatasetSpec::noise is unset.
double default_noise(Shape shape);

struct DatasetSpec {
  Shape shape = Shape::Blobs;
  std::size_t n_train = 9;
  std::size_t n_test = 200;
  std::optional<double> noise; // unset: default_noise(shape)
  std::uint64_t seed = 0;

  double effective_noise() const { return noise.value_or(default_noise(shape)); }
  void validate() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct Dataset {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  DatasetSpec spec;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Labels alternate 0, 1, 0, ... by index within each split, so both
/// classes are present whenever a split has two or more points. Train and
/// test are drawn from the "dataset/train" and "dataset/test" substreams.
///
///   blobs:   N((-2, 0), noise^2 I) for class 0, N((+2, 0), noise^2 I) for class 1
///   moons:   t ~ U[0, pi); class 0 on (cos t, sin t), class 1 on
///            (1 - cos t, 0.5 - sin t); isotropic N(0, noise^2) jitter
///   circles: angle ~ U[0, 2 pi); radius 1 (class 0) or 2 (class 1);
///            isotropic N(0, noise^2) jitter
Dataset generate(const DatasetSpec& spec);

/// Lattice over the data extent (train and test) widened by 15% per side.
/// Row r sits at y_min (1 - t) + y_max t with t = r / (resolution - 1),
/// column c likewise in x. values is row-major with row 0 at y_min.
struct ProbabilityGrid {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  std::size_t resolution = 0;
  std::vector<double> values;

  Vec2 lattice_point(std::size_t row, std::size_t col) const;
  double at(std::size_t row, std::size_t col) const { return values[row * resolution + col]; }

  friend bool operator==(const ProbabilityGrid&, const ProbabilityGrid&) = default;
};

inline constexpr std::size_t kDefaultGridResolution = 100;
inline constexpr double kGridMargin = 0.15;

/// Bounds only (values empty). An axis with zero extent is widened to
/// +/- 1 around its centre.
ProbabilityGrid grid_bounds(const Dataset& dataset, std::size_t resolution);

ProbabilityGrid evaluate_grid(const ModelParams& params, const Dataset& dataset,
                              std::size_t resolution = kDefaultGridResolution);

/// Fraction classified correctly with the rule f >= 0.5 -> class 1.
double accuracy(const ModelParams& params, std::span<const LabeledExample> examples);

} // namespace cfdir
