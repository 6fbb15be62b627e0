#include "cfdir/optimizer.hpp"

#include <cmath>

#include "cfdir/error.hpp"

namespace cfdir {

std::pair<ModelParams, AdamState> optimizer_step(const ModelParams& params,
                                                 const ParamGradient& gradient,
                                                 const AdamState& state,
                                                 const AdamConfig& config) {
  const std::vector<double> g = gradient.flatten();
  std::vector<double> theta = params.flatten();
  if (g.size() != theta.size())
    throw Error(ErrorKind::Input, "gradient shape does not match parameters");
  for (double v : g)
    if (!std::isfinite(v)) throw Error(ErrorKind::TrainingFault, "non-finite gradient");

  AdamState next = state;
  if (next.first_moment.empty()) {
    next.first_moment.assign(theta.size(), 0.0);
    next.second_moment.assign(theta.size(), 0.0);
  } else if (next.first_moment.size() != theta.size() || next.second_moment.size() != theta.size()) {
    throw Error(ErrorKind::Input, "optimizer state shape does not match parameters");
  }
  ++next.step;

  const double t = static_cast<double>(next.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double& m = next.first_moment[i];
    double& v = next.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g[i];
    v = config.beta2 * v + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    theta[i] -= config.step_size * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }

  ModelParams updated = params;
  updated.assign_flat(theta);
  if (!updated.all_finite()) throw Error(ErrorKind::TrainingFault, "optimizer produced non-finite parameters");
  return {std::move(updated), std::move(next)};
}

} // namespace cfdir
