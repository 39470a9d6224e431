#ifndef DEPUTY_ENCODER_HPP_
#define DEPUTY_ENCODER_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deputy/geometry.hpp"

namespace deputy {

enum class Activation { kTanh = 0, kIdentity = 1 };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Multilayer perceptron; `activation` is applied between layers, never after
// the last one.
struct EncoderParams {
  std::vector<Layer> layers;
  Activation activation = Activation::kTanh;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.back().weight.rows(); }
  // Throws DimensionMismatch if layers do not chain, NonFiniteValue on NaN/Inf.
  void validate() const;
  bool same_shape(const EncoderParams& other) const;
};

// Gaussian weights with variance 1/fan_in, zero biases.
EncoderParams init_encoder(int input_dim, const std::vector<int>& hidden, int output_dim,
                           Activation activation, std::uint64_t seed);

EncoderParams zeros_like(const EncoderParams& params);

struct ActivationCache {
  std::vector<Matrix> layer_inputs;  // input fed to layer l
  std::vector<Matrix> pre_activations;  // X W^T + b of layer l
};

struct ForwardResult {
  Matrix embeddings;
  ActivationCache cache;
};

ForwardResult forward(const EncoderParams& params, const Matrix& inputs);
// Forward pass without keeping the cache.
Matrix embed(const EncoderParams& params, const Matrix& inputs);

// Gradients of a scalar loss with respect to every weight and bias, given
// d loss / d embeddings. Result has the same shape as `params`.
EncoderParams backward(const EncoderParams& params, const ActivationCache& cache,
                       const Matrix& grad_embeddings);

struct TargetNetwork {
  EncoderParams params;
  double momentum = 0.99;
};

// target <- momentum * target + (1 - momentum) * online
TargetNetwork ema_update(const TargetNetwork& target, const EncoderParams& online);

double cosine_lr(long step, long total_steps, double base_lr);

struct OptimizerState {
  EncoderParams velocity;
  double base_lr = 0.05;
  double momentum_coeff = 0.9;
  double weight_decay = 1e-6;
  long step = 0;
  long total_steps = 1;
};

OptimizerState make_optimizer(const EncoderParams& params, double base_lr, double momentum_coeff,
                              double weight_decay, long total_steps);

// v <- mu v + g + wd * theta ; theta <- theta - lr(step) v ; step += 1
void sgd_momentum_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state);

// Versioned little-endian binary checkpoint.
std::string serialize_checkpoint(const EncoderParams& params);
EncoderParams deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace deputy

#endif  // DEPUTY_ENCODER_HPP_
