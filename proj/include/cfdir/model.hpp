#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace cfdir {

using Vec2 = Eigen::Vector2d;

enum class Activation { Tanh };

std::string_view to_string(Activation activation);
Activation activation_from_string(std::string_view name);

/// Dense network 2 -> hidden... -> 1 with a logistic output.
struct ModelConfig {
  static constexpr std::size_t kInputDim = 2;

  std::vector<std::size_t> hidden_layers{16, 16};
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;

  /// Throws Error{Config} naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weights; // out x in
  Eigen::VectorXd bias;    // out
};

/// Weights and biases, input layer first. Parameter gradients use the same
/// type so they can be added, scaled and flattened alongside the values.
struct ModelParams {
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Layer-major; within a layer the weights row-major, then the bias.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  static ModelParams zeros_like(const ModelParams& shape);

  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(double scale);

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

using ParamGradient = ModelParams;

/// Nonzero, finite, stored with unit Euclidean norm.
class Direction {
 public:
  /// Normalises `raw`; throws Error{Validation} for zero or non-finite input.
  static Direction from_vector(const Vec2& raw);
  /// Accepts an already-normalised vector as stored (norm within 1e-12 of
  /// one) without renormalising, so stored directions reload bit for bit.
  static Direction from_stored(const Vec2& unit);

  const Vec2& vec() const noexcept { return unit_; }
  double x() const noexcept { return unit_.x(); }
  double y() const noexcept { return unit_.y(); }

  Direction operator-() const { return Direction(-unit_); }
  friend bool operator==(const Direction& a, const Direction& b) { return a.unit_ == b.unit_; }

 private:
  explicit Direction(const Vec2& unit) : unit_(unit) {}
  Vec2 unit_;
};

ModelParams init_params(const ModelConfig& config);

/// Probability of class 1, in (0, 1).
double forward(const ModelParams& params, const Vec2& x);

/// Exact gradient of forward() with respect to the input.
Vec2 input_gradient(const ModelParams& params, const Vec2& x);

/// d . grad_x f(x), from a tangent pass seeded with d.
double directional_derivative(const ModelParams& params, const Vec2& x, const Direction& d);

struct ForwardAt {
  Vec2 x;
};
struct DirectionalAt {
  Vec2 x;
  Direction d;
};
using ScalarEvaluation = std::variant<ForwardAt, DirectionalAt>;

/// Exact gradient of the chosen scalar with respect to every parameter.
ParamGradient param_gradient_of(const ModelParams& params, const ScalarEvaluation& eval);

/// Primal pass for one input, kept for the reverse sweep. Holds a reference
/// to `params`, which must outlive the tape.
class ForwardTape {
 public:
  ForwardTape(const ModelParams& params, const Vec2& x);

  double logit() const noexcept { return logit_; }
  double probability() const noexcept { return probability_; }

  /// Adds weight * d(logit)/d(theta) into *grad (skipped when null) and
  /// returns weight * d(logit)/dx.
  Vec2 backprop_logit(double weight, ParamGradient* grad) const;
  /// Same for the probability.
  Vec2 backprop_probability(double weight, ParamGradient* grad) const;

 private:
  const ModelParams& params_;
  std::vector<Eigen::VectorXd> activations_; // a_0 = x, then hidden outputs
  double logit_ = 0.0;
  double probability_ = 0.0;
};

/// Primal + tangent pass for d . grad_x f at one input. The reverse sweep
/// over this computation yields d(d . grad_x f)/d(theta) exactly.
class TangentTape {
 public:
  TangentTape(const ModelParams& params, const Vec2& x, const Direction& d);

  double probability() const noexcept { return probability_; }
  double value() const noexcept { return value_; }

  /// Adds weight * d(value)/d(theta) into grad.
  void backprop(double weight, ParamGradient& grad) const;

 private:
  const ModelParams& params_;
  std::vector<Eigen::VectorXd> activations_;       // a_l
  std::vector<Eigen::VectorXd> tangents_;          // da_l
  std::vector<Eigen::VectorXd> tangent_preacts_;   // dz_l for hidden layers
  double logit_tangent_ = 0.0;
  double probability_ = 0.0;
  double value_ = 0.0;
};

/// Versioned plain-text form: header line, layer count, then per layer the
/// shape, the weight rows and the bias, each number in shortest round-trip
/// decimal.
std::string serialize_params(const ModelParams& params);
ModelParams parse_params(std::string_view text);

} // namespace cfdir
