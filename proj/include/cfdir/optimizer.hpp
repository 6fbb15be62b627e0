#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "cfdir/model.hpp"

namespace cfdir {

inline constexpr std::string_view kOptimizerAlgorithm = "adam-v1";

struct AdamConfig {
  double step_size = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Moment accumulators over the flattened parameter vector. Empty until the
/// first step.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected adaptive-moment update. Throws Error{TrainingFault}
/// on a non-finite gradient and Error{Input} on a shape mismatch.
std::pair<ModelParams, AdamState> optimizer_step(const ModelParams& params,
                                                 const ParamGradient& gradient,
                                                 const AdamState& state,
                                                 const AdamConfig& config = {});

} // namespace cfdir
