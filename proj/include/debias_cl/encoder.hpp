#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "debias_cl/autodiff.hpp"
#include "debias_cl/random.hpp"

namespace debias_cl {

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1 };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

// Architecture: input_dim -> [hidden_dim] x tap_count -> output_dim. Every
// hidden block's post-activation output is a distillation tap.
struct EncoderConfig {
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t tap_count = 3;
  std::size_t output_dim = 16;
  Activation activation = Activation::Tanh;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (input_dim == 0 || hidden_dim == 0 || tap_count == 0 || output_dim == 0) {
      throw ConfigError("encoder: all dimensions must be positive");
    }
  }

  std::size_t parameter_count() const {
    const std::size_t n = input_dim, h = hidden_dim, d = output_dim;
    return n * h + h + (tap_count - 1) * (h * h + h) + h * d + d;
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct DenseLayer {
  Tensor weight;  // [fan_in x fan_out]
  Tensor bias;    // [1 x fan_out]

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Learnable weights, hidden blocks first, then the output projection.
class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(EncoderConfig config, std::vector<DenseLayer> layers) : config_(config), layers_(std::move(layers)) {
    if (layers_.size() != config_.tap_count + 1) throw DimensionError("encoder: layer count does not match tap_count");
  }

  const EncoderConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Tensors in optimizer order: W0, b0, W1, b1, ...
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (DenseLayer& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const DenseLayer& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : parameters()) n += t->numel();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Tensor* t : parameters()) flat.insert(flat.end(), t->data().begin(), t->data().end());
    return flat;
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

 private:
  EncoderConfig config_;
  std::vector<DenseLayer> layers_;
};

// Glorot-uniform weights and zero biases. Each weight entry is a pure function
// of (init_seed, global entry index), so initialization is reproducible
// independent of traversal order.
inline EncoderParams init_encoder(const EncoderConfig& config) {
  config.validate();
  std::vector<DenseLayer> layers;
  std::uint64_t counter = 0;
  auto make_layer = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Tensor::matrix(fan_in, fan_out), Tensor::matrix(1, fan_out)};
    for (double& w : layer.weight.data()) w = -limit + 2.0 * limit * counter_uniform(config.init_seed, counter++);
    layers.push_back(std::move(layer));
  };
  make_layer(config.input_dim, config.hidden_dim);
  for (std::size_t i = 1; i < config.tap_count; ++i) make_layer(config.hidden_dim, config.hidden_dim);
  make_layer(config.hidden_dim, config.output_dim);
  return EncoderParams(config, std::move(layers));
}

template <class T>
struct ForwardTrace {
  T output;                    // [batch x output_dim], not normalized
  std::vector<T> intermediates;  // tap_count entries, [batch x hidden_dim]
};

// Parameters registered as leaves on a tape for one training step.
struct BoundEncoder {
  EncoderConfig config;
  std::vector<Var> weights;
  std::vector<Var> biases;

  std::vector<Var> parameters() const {
    std::vector<Var> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.push_back(weights[i]);
      out.push_back(biases[i]);
    }
    return out;
  }
};

inline BoundEncoder bind(Tape& tape, const EncoderParams& params) {
  BoundEncoder bound{params.config(), {}, {}};
  for (const DenseLayer& l : params.layers()) {
    bound.weights.push_back(tape.leaf(l.weight));
    bound.biases.push_back(tape.leaf(l.bias));
  }
  return bound;
}

namespace detail {

template <class T, class Weights>
ForwardTrace<T> encoder_forward(const EncoderConfig& config, const Weights& weights, const Weights& biases,
                                const T& x) {
  const Tensor& xv = value_of(x);
  if (xv.rank() != 2 || xv.cols() != config.input_dim) {
    throw DimensionError("encoder forward: expected input width " + std::to_string(config.input_dim) + ", got shape " +
                         shape_string(xv.shape()));
  }
  ForwardTrace<T> trace;
  T h = x;
  for (std::size_t i = 0; i < config.tap_count; ++i) {
    T pre = add_row_vector(matmul(h, weights[i]), biases[i]);
    h = config.activation == Activation::Tanh ? tanh(pre) : relu(pre);
    trace.intermediates.push_back(h);
  }
  trace.output = add_row_vector(matmul(h, weights.back()), biases.back());
  return trace;
}

}  // namespace detail

// Value-only forward; records nothing.
inline ForwardTrace<Tensor> forward(const EncoderParams& params, const Tensor& x) {
  std::vector<Tensor> w, b;
  for (const DenseLayer& l : params.layers()) {
    w.push_back(l.weight);
    b.push_back(l.bias);
  }
  return detail::encoder_forward<Tensor>(params.config(), w, b, x);
}

// Taped forward; gradients reach the bound parameters.
inline ForwardTrace<Var> forward(const BoundEncoder& bound, const Var& x) {
  return detail::encoder_forward<Var>(bound.config, bound.weights, bound.biases, x);
}

// Frozen copy of the parameters exiting a training step. Immutable once taken.
class Snapshot {
 public:
  Snapshot() = default;

  static Snapshot take(const EncoderParams& params, std::size_t step) {
    Snapshot s;
    s.params_ = std::make_shared<const EncoderParams>(params);
    s.step_ = step;
    return s;
  }

  bool empty() const { return !params_; }
  const EncoderParams& params() const { return *params_; }
  std::size_t step() const { return step_; }

  ForwardTrace<Tensor> forward(const Tensor& x) const { return debias_cl::forward(*params_, x); }

 private:
  std::shared_ptr<const EncoderParams> params_;
  std::size_t step_ = 0;
};

// Stand-in for a frozen visual encoder: i.i.d. standard-normal rows, unit
// normalized.
inline Tensor embedding_provider(std::uint64_t seed, std::size_t count, std::size_t dim) {
  if (count == 0 || dim == 0) throw ConfigError("embedding_provider: count and dim must be positive");
  Rng rng(seed);
  Tensor out = Tensor::matrix(count, dim);
  for (double& v : out.data()) v = rng.normal();
  return rowwise_l2_normalize(out);
}

}  // namespace debias_cl
