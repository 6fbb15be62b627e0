#include "cfdir/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfdir/error.hpp"

namespace cfdir {

namespace {
constexpr double kProbabilityClamp = 1e-12;

double label_sign(int label) { return 2.0 * label - 1.0; }

void check_label(int label) {
  if (label != 0 && label != 1)
    throw Error(ErrorKind::Input, "label must be 0 or 1, got " + std::to_string(label));
}
} // namespace

void LossConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c))
    throw Error(ErrorKind::Config, "loss.c must be positive and finite", "loss.c");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw Error(ErrorKind::Config, "loss.lambda must be nonnegative and finite", "loss.lambda");
}

double soft_sign(double z, double c) { return std::tanh(c * z); }

double direction_term(int label, double directional, double c) {
  return std::abs(label_sign(label) * soft_sign(directional, c) + 1.0);
}

LossValue direction_loss(const ModelParams& params, std::span<const LabeledExample> train,
                         std::span<const DirectionAnnotation> annotations, const LossConfig& cfg) {
  LossValue out{0.0, ModelParams::zeros_like(params)};
  if (annotations.empty()) return out;

  const double inv_n = 1.0 / static_cast<double>(annotations.size());
  for (const auto& a : annotations) {
    if (a.example_index >= train.size())
      throw Error(ErrorKind::Index, "annotation " + std::to_string(a.id) + " refers to example " +
                                        std::to_string(a.example_index) + " outside the training set",
                  "example_index");
    const auto& ex = train[a.example_index];
    check_label(ex.label);
    const TangentTape tape(params, ex.x, a.d);
    const double s = soft_sign(tape.value(), cfg.c);
    const double inner = label_sign(ex.label) * s + 1.0;
    out.value += std::abs(inner) * inv_n;
    // inner >= 0 whenever |s| <= 1, so |.| contributes a factor of one.
    const double weight = inv_n * label_sign(ex.label) * cfg.c * (1.0 - s * s);
    if (weight != 0.0) tape.backprop(weight, out.gradient);
  }
  return out;
}

LossValue bce_loss(const ModelParams& params, std::span<const LabeledExample> batch) {
  if (batch.empty()) throw Error(ErrorKind::Input, "binary cross-entropy needs a nonempty batch");
  LossValue out{0.0, ModelParams::zeros_like(params)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    check_label(ex.label);
    const ForwardTape tape(params, ex.x);
    const double p = tape.probability();
    const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    out.value -= inv_n * (ex.label == 1 ? std::log(pc) : std::log(1.0 - pc));
    if (pc == p) {
      // d/dz of -[y ln p + (1-y) ln(1-p)] with p = sigmoid(z).
      tape.backprop_logit(inv_n * (p - ex.label), &out.gradient);
    }
  }
  return out;
}

Objective total_objective(const ModelParams& params, std::span<const LabeledExample> train,
                          std::span<const DirectionAnnotation> annotations, const LossConfig& cfg) {
  cfg.validate();
  LossValue bce = bce_loss(params, train);
  LossValue dir = direction_loss(params, train, annotations, cfg);

  Objective out;
  out.breakdown.bce = bce.value;
  out.breakdown.direction = dir.value;
  out.breakdown.total = bce.value + cfg.lambda * dir.value;
  out.breakdown.n_examples = train.size();
  out.breakdown.n_annotations = annotations.size();
  out.gradient = std::move(bce.gradient);
  if (cfg.lambda != 0.0 && !annotations.empty()) {
    dir.gradient *= cfg.lambda;
    out.gradient += dir.gradient;
  }
  return out;
}

} // namespace cfdir
