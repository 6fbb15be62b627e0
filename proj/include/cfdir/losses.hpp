#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cfdir/model.hpp"

namespace cfdir {

struct LabeledExample {
  Vec2 x;
  int label = 0; // 0 or 1

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// One counterfactual direction attached to one training example. An
/// example may carry any number of these.
struct DirectionAnnotation {
  std::size_t example_index = 0;
  Direction d = Direction::from_vector(Vec2(1.0, 0.0));
  std::uint64_t id = 0;
  std::uint64_t created_at = 0;

  friend bool operator==(const DirectionAnnotation&, const DirectionAnnotation&) = default;
};

struct LossConfig {
  double c = 20.0;     // steepness of the tanh sign surrogate
  double lambda = 1.0; // weight of the direction term

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossBreakdown {
  double bce = 0.0;
  double direction = 0.0;
  double total = 0.0;
  std::size_t n_examples = 0;
  std::size_t n_annotations = 0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

struct LossValue {
  double value = 0.0;
  ParamGradient gradient;
};

struct Objective {
  LossBreakdown breakdown;
  ParamGradient gradient;
};

/// tanh(c z).
double soft_sign(double z, double c);

/// |(2y - 1) soft_sign(directional, c) + 1|: near 0 when the probability of
/// the example's own class falls along the direction, near 2 when it rises.
double direction_term(int label, double directional, double c);

/// Mean direction_term over all (example, direction) pairs. Zero value and
/// zero gradient when there are no annotations.
LossValue direction_loss(const ModelParams& params, std::span<const LabeledExample> train,
                         std::span<const DirectionAnnotation> annotations, const LossConfig& cfg);

/// Mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12].
LossValue bce_loss(const ModelParams& params, std::span<const LabeledExample> batch);

/// bce + lambda * direction, with the matching gradient. When lambda is zero
/// or there are no annotations the gradient is the BCE gradient bit for bit.
Objective total_objective(const ModelParams& params, std::span<const LabeledExample> train,
                          std::span<const DirectionAnnotation> annotations, const LossConfig& cfg);

} // namespace cfdir
