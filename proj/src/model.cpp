#include "cfdir/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "cfdir/error.hpp"
#include "cfdir/rng.hpp"

namespace cfdir {

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::Tanh:
      return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  throw Error(ErrorKind::Config, "unknown activation '" + std::string(name) + "'",
              "model.activation");
}

void ModelConfig::validate() const {
  for (std::size_t i = 0; i < hidden_layers.size(); ++i) {
    if (hidden_layers[i] == 0) {
      const std::string field = "model.hidden_layers[" + std::to_string(i) + "]";
      throw Error(ErrorKind::Config, field + " must be at least 1", field);
    }
  }
}

// ---------------------------------------------------------------------------
// ModelParams

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

bool ModelParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) out.push_back(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
  return out;
}

void ModelParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count())
    throw Error(ErrorKind::Input, "flat parameter vector has " + std::to_string(values.size()) +
                                      " entries, expected " + std::to_string(parameter_count()));
  std::size_t k = 0;
  for (auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = values[k++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = values[k++];
  }
}

ModelParams ModelParams::zeros_like(const ModelParams& shape) {
  ModelParams out;
  out.layers.reserve(shape.layers.size());
  for (const auto& layer : shape.layers) {
    out.layers.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                          Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return out;
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights += other.layers[i].weights;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

ModelParams& ModelParams::operator*=(double scale) {
  for (auto& layer : layers) {
    layer.weights *= scale;
    layer.bias *= scale;
  }
  return *this;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.weights.rows() != lb.weights.rows() || la.weights.cols() != lb.weights.cols() ||
        la.bias.size() != lb.bias.size())
      return false;
    if (la.weights != lb.weights || la.bias != lb.bias) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Direction

Direction Direction::from_vector(const Vec2& raw) {
  if (!raw.allFinite()) throw Error(ErrorKind::Validation, "direction must be finite", "direction");
  const double norm = raw.norm();
  if (norm == 0.0) throw Error(ErrorKind::Validation, "direction must be nonzero", "direction");
  return Direction(raw / norm);
}

Direction Direction::from_stored(const Vec2& unit) {
  if (!unit.allFinite() || std::abs(unit.norm() - 1.0) > 1e-12)
    throw Error(ErrorKind::Validation, "stored direction must have unit norm", "direction");
  return Direction(unit);
}

// ---------------------------------------------------------------------------
// Initialisation

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  RandomStream rng(config.seed, "model/init");

  std::vector<std::size_t> widths{ModelConfig::kInputDim};
  widths.insert(widths.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  widths.push_back(1);

  ModelParams params;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(widths[l - 1]);
    const auto fan_out = static_cast<Eigen::Index>(widths[l]);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.normal(0.0, stddev);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Passes

namespace {

// Keeps the output strictly inside (0, 1) even where the logistic rounds to
// an endpoint.
double logistic(double z) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, lo, hi);
}

void require_finite(const Vec2& x) {
  if (!x.allFinite()) throw Error(ErrorKind::NumericInput, "input point must be finite", "x");
}

void require_shape(const ModelParams& params) {
  if (params.layers.empty() || params.layers.front().weights.cols() != 2 ||
      params.layers.back().weights.rows() != 1)
    throw Error(ErrorKind::Input, "parameters do not describe a 2 -> ... -> 1 network");
}

} // namespace

ForwardTape::ForwardTape(const ModelParams& params, const Vec2& x) : params_(params) {
  require_finite(x);
  require_shape(params);
  const std::size_t n_layers = params.layers.size();
  activations_.reserve(n_layers);
  activations_.emplace_back(x);
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    const auto& layer = params.layers[l];
    Eigen::VectorXd z = layer.weights * activations_.back() + layer.bias;
    activations_.emplace_back(z.array().tanh().matrix());
  }
  const auto& out = params.layers.back();
  logit_ = (out.weights * activations_.back())(0) + out.bias(0);
  probability_ = logistic(logit_);
}

Vec2 ForwardTape::backprop_logit(double weight, ParamGradient* grad) const {
  const std::size_t n_layers = params_.layers.size();
  Eigen::VectorXd dz = Eigen::VectorXd::Constant(1, weight);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = params_.layers[l];
    const Eigen::VectorXd& a_in = activations_[l];
    if (grad) {
      grad->layers[l].weights.noalias() += dz * a_in.transpose();
      grad->layers[l].bias += dz;
    }
    Eigen::VectorXd da = layer.weights.transpose() * dz;
    if (l == 0) return Vec2(da(0), da(1));
    dz = (da.array() * (1.0 - a_in.array().square())).matrix();
  }
  return Vec2::Zero();
}

Vec2 ForwardTape::backprop_probability(double weight, ParamGradient* grad) const {
  return backprop_logit(weight * probability_ * (1.0 - probability_), grad);
}

TangentTape::TangentTape(const ModelParams& params, const Vec2& x, const Direction& d)
    : params_(params) {
  require_finite(x);
  require_shape(params);
  const std::size_t n_layers = params.layers.size();
  activations_.reserve(n_layers);
  tangents_.reserve(n_layers);
  tangent_preacts_.reserve(n_layers);
  activations_.emplace_back(x);
  tangents_.emplace_back(d.vec());
  tangent_preacts_.emplace_back(); // unused slot for the input
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    const auto& layer = params.layers[l];
    Eigen::VectorXd z = layer.weights * activations_.back() + layer.bias;
    Eigen::VectorXd dz = layer.weights * tangents_.back();
    Eigen::VectorXd a = z.array().tanh().matrix();
    Eigen::VectorXd da = ((1.0 - a.array().square()) * dz.array()).matrix();
    activations_.push_back(std::move(a));
    tangents_.push_back(std::move(da));
    tangent_preacts_.push_back(std::move(dz));
  }
  const auto& out = params.layers.back();
  const double logit = (out.weights * activations_.back())(0) + out.bias(0);
  logit_tangent_ = (out.weights * tangents_.back())(0);
  probability_ = logistic(logit);
  value_ = probability_ * (1.0 - probability_) * logit_tangent_;
}

void TangentTape::backprop(double weight, ParamGradient& grad) const {
  // value = s(z) dz with s = p(1-p), s' = s(1-2p).
  const double s = probability_ * (1.0 - probability_);
  const double ds = s * (1.0 - 2.0 * probability_);
  Eigen::VectorXd bar_z = Eigen::VectorXd::Constant(1, weight * ds * logit_tangent_);
  Eigen::VectorXd bar_dz = Eigen::VectorXd::Constant(1, weight * s);

  for (std::size_t l = params_.layers.size(); l-- > 0;) {
    const auto& layer = params_.layers[l];
    const Eigen::VectorXd& a_in = activations_[l];
    const Eigen::VectorXd& da_in = tangents_[l];
    grad.layers[l].weights.noalias() += bar_z * a_in.transpose();
    grad.layers[l].weights.noalias() += bar_dz * da_in.transpose();
    grad.layers[l].bias += bar_z;
    if (l == 0) break;

    const Eigen::VectorXd bar_a = layer.weights.transpose() * bar_z;
    const Eigen::VectorXd bar_da = layer.weights.transpose() * bar_dz;
    // a = tanh(z), da = t'(z) dz with t' = 1 - a^2, t'' = -2 a t'.
    const Eigen::ArrayXd t1 = 1.0 - a_in.array().square();
    const Eigen::ArrayXd t2 = -2.0 * a_in.array() * t1;
    bar_z = (bar_a.array() * t1 + bar_da.array() * tangent_preacts_[l].array() * t2).matrix();
    bar_dz = (bar_da.array() * t1).matrix();
  }
}

double forward(const ModelParams& params, const Vec2& x) {
  return ForwardTape(params, x).probability();
}

Vec2 input_gradient(const ModelParams& params, const Vec2& x) {
  return ForwardTape(params, x).backprop_probability(1.0, nullptr);
}

double directional_derivative(const ModelParams& params, const Vec2& x, const Direction& d) {
  return TangentTape(params, x, d).value();
}

ParamGradient param_gradient_of(const ModelParams& params, const ScalarEvaluation& eval) {
  ParamGradient grad = ModelParams::zeros_like(params);
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ForwardAt>) {
          ForwardTape(params, e.x).backprop_probability(1.0, &grad);
        } else {
          TangentTape(params, e.x, e.d).backprop(1.0, grad);
        }
      },
      eval);
  return grad;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

constexpr std::string_view kParamsHeader = "cfdir-params";
constexpr int kParamsVersion = 1;

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  std::string_view next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view literal) {
    const auto tok = next();
    if (tok != literal) fail("expected '" + std::string(literal) + "', got '" + std::string(tok) + "'");
  }

  template <typename T>
  T number() {
    const auto tok = next();
    T value{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
      fail("malformed number '" + std::string(tok) + "'");
    return value;
  }

  bool at_end() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return pos_ >= text_.size();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::Parse, "params line " + std::to_string(line_) + ": " + what);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

} // namespace

std::string serialize_params(const ModelParams& params) {
  std::string out;
  out += kParamsHeader;
  out += " v" + std::to_string(kParamsVersion) + "\n";
  out += "layers " + std::to_string(params.layers.size()) + "\n";
  for (const auto& layer : params.layers) {
    out += "dense " + std::to_string(layer.weights.rows()) + " " +
           std::to_string(layer.weights.cols()) + "\n";
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        if (c) out += ' ';
        append_number(out, layer.weights(r, c));
      }
      out += '\n';
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      if (r) out += ' ';
      append_number(out, layer.bias(r));
    }
    out += '\n';
  }
  return out;
}

ModelParams parse_params(std::string_view text) {
  TokenReader in(text);
  in.expect(kParamsHeader);
  in.expect("v" + std::to_string(kParamsVersion));
  in.expect("layers");
  const auto n_layers = in.number<std::size_t>();
  if (n_layers == 0) in.fail("at least one layer required");

  ModelParams params;
  Eigen::Index prev_out = 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    in.expect("dense");
    const auto rows = in.number<Eigen::Index>();
    const auto cols = in.number<Eigen::Index>();
    if (rows < 1 || cols != prev_out) in.fail("layer shape inconsistent with previous layer");
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = in.number<double>();
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = in.number<double>();
    prev_out = rows;
    params.layers.push_back(std::move(layer));
  }
  if (prev_out != 1) in.fail("output layer must have width 1");
  if (!in.at_end()) in.fail("trailing content");
  if (!params.all_finite()) in.fail("non-finite parameter");
  return params;
}

} // namespace cfdir
