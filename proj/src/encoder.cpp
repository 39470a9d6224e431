#include "deputy/encoder.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "deputy/errors.hpp"

namespace deputy {

namespace {

void apply_activation(Activation act, Matrix& z) {
  if (act == Activation::kTanh) z = z.array().tanh().matrix();
}

// Multiplies `grad` in place by the activation derivative at `pre`.
void apply_activation_grad(Activation act, const Matrix& pre, Matrix& grad) {
  if (act == Activation::kTanh) {
    grad = (grad.array() * (1.0 - pre.array().tanh().square())).matrix();
  }
}

void require_same_shape(const EncoderParams& a, const EncoderParams& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": parameter shapes differ");
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw Error(ErrorCode::kInvalidConfig, "unknown activation '" + std::string(name) + "'");
}

void EncoderParams::validate() const {
  if (layers.empty()) {
    throw Error(ErrorCode::kDimensionMismatch, "encoder has no layers");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.weight.rows() < 1 || layer.weight.cols() < 1 ||
        layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "layer " + std::to_string(l) + " is malformed");
    }
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "layer " + std::to_string(l) + " does not chain with its predecessor");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw Error(ErrorCode::kNonFiniteValue, "layer " + std::to_string(l) + " has non-finite values");
    }
  }
}

bool EncoderParams::same_shape(const EncoderParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.rows() != other.layers[l].weight.rows() ||
        layers[l].weight.cols() != other.layers[l].weight.cols() ||
        layers[l].bias.size() != other.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

EncoderParams init_encoder(int input_dim, const std::vector<int>& hidden, int output_dim,
                           Activation activation, std::uint64_t seed) {
  std::vector<int> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output_dim);
  for (int w : widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidConfig, "layer widths must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  EncoderParams params;
  params.activation = activation;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.weight = Matrix(widths[l + 1], widths[l]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        layer.weight(i, j) = scale * normal(rng);
      }
    }
    layer.bias = Vector::Zero(widths[l + 1]);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

EncoderParams zeros_like(const EncoderParams& params) {
  EncoderParams z;
  z.activation = params.activation;
  for (const Layer& layer : params.layers) {
    z.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                        Vector::Zero(layer.bias.size())});
  }
  return z;
}

ForwardResult forward(const EncoderParams& params, const Matrix& inputs) {
  if (params.layers.empty() || inputs.cols() != params.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input width " + std::to_string(inputs.cols()) + " does not match the encoder");
  }
  ForwardResult out;
  Matrix h = inputs;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    Matrix z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    out.cache.layer_inputs.push_back(std::move(h));
    out.cache.pre_activations.push_back(z);
    if (l != last) apply_activation(params.activation, z);
    h = std::move(z);
  }
  out.embeddings = std::move(h);
  return out;
}

Matrix embed(const EncoderParams& params, const Matrix& inputs) {
  return forward(params, inputs).embeddings;
}

EncoderParams backward(const EncoderParams& params, const ActivationCache& cache,
                       const Matrix& grad_embeddings) {
  const std::size_t n_layers = params.layers.size();
  if (cache.layer_inputs.size() != n_layers || cache.pre_activations.size() != n_layers) {
    throw Error(ErrorCode::kStaleCache, "cache layer count does not match the encoder");
  }
  const Eigen::Index n = grad_embeddings.rows();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = params.layers[l];
    if (cache.layer_inputs[l].rows() != n || cache.layer_inputs[l].cols() != layer.weight.cols() ||
        cache.pre_activations[l].rows() != n ||
        cache.pre_activations[l].cols() != layer.weight.rows()) {
      throw Error(ErrorCode::kStaleCache, "cache shapes disagree at layer " + std::to_string(l));
    }
  }
  if (grad_embeddings.cols() != params.output_dim()) {
    throw Error(ErrorCode::kStaleCache, "embedding gradient width does not match the encoder");
  }

  EncoderParams grads = zeros_like(params);
  Matrix delta = grad_embeddings;  // d loss / d pre-activation of the current layer
  for (std::size_t l = n_layers; l-- > 0;) {
    const Layer& layer = params.layers[l];
    if (l != n_layers - 1) {
      apply_activation_grad(params.activation, cache.pre_activations[l], delta);
    }
    grads.layers[l].weight = delta.transpose() * cache.layer_inputs[l];
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * layer.weight;
  }
  return grads;
}

TargetNetwork ema_update(const TargetNetwork& target, const EncoderParams& online) {
  require_same_shape(target.params, online, "ema_update");
  TargetNetwork out = target;
  const double mu = target.momentum;
  // Entries that already agree are kept as is, so online == target is an
  // exact fixed point regardless of rounding in the blend.
  auto blend = [mu](const auto& t, const auto& o) {
    return (t.array() == o.array()).select(t.array(), mu * t.array() + (1.0 - mu) * o.array());
  };
  for (std::size_t l = 0; l < online.layers.size(); ++l) {
    out.params.layers[l].weight = blend(target.params.layers[l].weight, online.layers[l].weight);
    out.params.layers[l].bias = blend(target.params.layers[l].bias, online.layers[l].bias);
  }
  return out;
}

double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps < 1 || step < 0 || step > total_steps) {
    throw Error(ErrorCode::kOutOfRange,
                "step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return 0.0;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(phase));
}

OptimizerState make_optimizer(const EncoderParams& params, double base_lr, double momentum_coeff,
                              double weight_decay, long total_steps) {
  if (!(base_lr >= 0.0) || !(momentum_coeff >= 0.0 && momentum_coeff < 1.0) || !(weight_decay >= 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "optimizer hyperparameters out of range");
  }
  OptimizerState state;
  state.velocity = zeros_like(params);
  state.base_lr = base_lr;
  state.momentum_coeff = momentum_coeff;
  state.weight_decay = weight_decay;
  state.total_steps = std::max(1L, total_steps);
  return state;
}

void sgd_momentum_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state) {
  require_same_shape(params, grads, "sgd_momentum_step");
  require_same_shape(params, state.velocity, "sgd_momentum_step velocity");
  const double lr = cosine_lr(std::min(state.step, state.total_steps), state.total_steps, state.base_lr);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& p = params.layers[l];
    Layer& v = state.velocity.layers[l];
    const Layer& g = grads.layers[l];
    v.weight = state.momentum_coeff * v.weight + g.weight + state.weight_decay * p.weight;
    v.bias = state.momentum_coeff * v.bias + g.bias + state.weight_decay * p.bias;
    p.weight -= lr * v.weight;
    p.bias -= lr * v.bias;
  }
  ++state.step;
}

}  // namespace deputy
