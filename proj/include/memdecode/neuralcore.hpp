// SPDX-License-Identifier: Apache-2.0
//
// Minimal sequential network: 1D convolution, pooling, dense layers,
// activations and L2 normalization with hand-written backward passes over a
// flat parameter store. Instantiated for float (training) and double
// (finite-difference checking).
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memdecode/common.hpp"

namespace memdecode::nn {

enum class LayerKind { conv1d, maxpool, global_maxpool, flatten, dense, relu, l2norm };

std::string_view kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;      // conv1d input channels / dense input width
  std::size_t out = 0;     // conv1d filters / dense units
  std::size_t kernel = 0;  // conv1d kernel size, maxpool size (= stride)

  static LayerSpec conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel) {
    return {LayerKind::conv1d, in_channels, filters, kernel};
  }
  static LayerSpec dense(std::size_t in, std::size_t units) { return {LayerKind::dense, in, units, 0}; }
  static LayerSpec maxpool(std::size_t size = 2) { return {LayerKind::maxpool, 0, 0, size}; }
  static LayerSpec global_maxpool() { return {LayerKind::global_maxpool, 0, 0, 0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0}; }
  static LayerSpec l2norm() { return {LayerKind::l2norm, 0, 0, 0}; }

  /// conv1d: in * kernel * out + out; dense: in * out + out; others 0.
  std::size_t param_count() const;
  std::size_t weight_count() const;

  /// "conv1d 14 256 3", "dense 256 128", "maxpool 2", "relu", ...
  std::string describe() const;
  static LayerSpec parse(std::string_view text);

  bool operator==(const LayerSpec&) const = default;
};

/// Per-sample tensor shape: time steps x channels (vectors are 1 x n).
struct Shape {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t size() const { return length * channels; }
  bool operator==(const Shape&) const = default;
};

Shape output_shape(const LayerSpec& spec, Shape in);

/// Batch of equally shaped samples, [batch x length x channels] row-major.
template <typename T>
struct Batch {
  std::size_t batch = 0;
  Shape shape;
  std::vector<T> data;

  Batch() = default;
  Batch(std::size_t n, Shape s) : batch(n), shape(s), data(n * s.size(), T(0)) {}

  void resize(std::size_t n, Shape s) {
    batch = n;
    shape = s;
    data.assign(n * s.size(), T(0));
  }
  std::size_t sample_size() const { return shape.size(); }
  T* sample(std::size_t b) { return data.data() + b * sample_size(); }
  const T* sample(std::size_t b) const { return data.data() + b * sample_size(); }
};

// Layer kernels. Weight layouts: conv1d [kernel][in][out] followed by
// bias[out]; dense [in][out] followed by bias[out].

template <typename T>
void conv1d_forward(const Batch<T>& in, std::span<const T> weights, std::span<const T> bias,
                    std::size_t kernel, Batch<T>& out);
/// Accumulates into dweights/dbias; din may be null.
template <typename T>
void conv1d_backward(const Batch<T>& in, const Batch<T>& dout, std::span<const T> weights,
                     std::size_t kernel, std::span<T> dweights, std::span<T> dbias, Batch<T>* din);

template <typename T>
void maxpool_forward(const Batch<T>& in, std::size_t size, Batch<T>& out);
template <typename T>
void maxpool_backward(const Batch<T>& in, const Batch<T>& dout, std::size_t size, Batch<T>& din);

template <typename T>
void global_maxpool_forward(const Batch<T>& in, Batch<T>& out);
template <typename T>
void global_maxpool_backward(const Batch<T>& in, const Batch<T>& dout, Batch<T>& din);

template <typename T>
void dense_forward(const Batch<T>& in, std::span<const T> weights, std::span<const T> bias,
                   Batch<T>& out);
template <typename T>
void dense_backward(const Batch<T>& in, const Batch<T>& dout, std::span<const T> weights,
                    std::span<T> dweights, std::span<T> dbias, Batch<T>* din);

template <typename T>
void relu_forward(const Batch<T>& in, Batch<T>& out);
template <typename T>
void relu_backward(const Batch<T>& in, const Batch<T>& dout, Batch<T>& din);

inline constexpr double kL2Epsilon = 1e-12;

/// v / (||v|| + 1e-12) per sample.
template <typename T>
void l2norm_forward(const Batch<T>& in, Batch<T>& out);
template <typename T>
void l2norm_backward(const Batch<T>& in, const Batch<T>& dout, Batch<T>& din);

/// Sequential stack of layers over one flat parameter vector laid out in
/// declaration order.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> specs, Shape input);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  Shape input_shape() const { return input_; }
  Shape output_shape() const { return shapes_.back(); }
  /// Output shape of layer i.
  Shape shape_after(std::size_t i) const { return shapes_[i + 1]; }

  std::size_t param_count() const { return params_.size(); }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  std::size_t param_offset(std::size_t layer) const { return offsets_[layer]; }
  /// Layer owning flat parameter index i.
  std::size_t layer_of_param(std::size_t i) const;

  /// Glorot-uniform weights, zero biases.
  void init(std::uint64_t seed);

  /// Runs the stack, keeping activations for a following backward().
  const Batch<T>& forward(const Batch<T>& input);
  /// Forward pass without keeping activations; safe to call concurrently.
  Batch<T> infer(const Batch<T>& input) const;
  /// Overwrites grads (size param_count()) with d loss / d params summed
  /// over the batch. dinput receives d loss / d input when non-null.
  void backward(const Batch<T>& dout, std::span<T> grads, Batch<T>* dinput = nullptr);
  /// Sign of every ReLU input and index of every max-pool winner in the last
  /// forward(); equal signatures mean the same linear piece.
  std::vector<std::uint32_t> branch_signature() const;

  template <typename U>
  Network<U> cast() const {
    Network<U> other(specs_, input_);
    auto dst = other.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return other;
  }

 private:
  void run_layer(std::size_t l, const Batch<T>& x, Batch<T>& y) const;

  std::vector<LayerSpec> specs_;
  Shape input_;
  std::vector<Shape> shapes_;  // shapes_[0] = input, shapes_[i+1] = after layer i
  std::vector<std::size_t> offsets_;
  std::vector<T> params_;
  Batch<T> input_copy_;
  std::vector<Batch<T>> acts_;
  std::vector<Batch<T>> grad_buf_;
};

extern template class Network<float>;
extern template class Network<double>;

/// rmsprop state: per-parameter moving average of squared gradients.
template <typename T>
struct OptState {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-7;
  std::vector<T> mean_square;
};

/// v <- decay v + (1 - decay) g^2; p <- p - lr g / (sqrt(v) + eps).
/// Throws before touching anything when a gradient is non-finite.
template <typename T>
void rmsprop_step(std::span<T> params, std::span<const T> grads, OptState<T>& state);
/// Same, naming the offending layer in the error.
template <typename T>
void rmsprop_step(Network<T>& net, std::span<const T> grads, OptState<T>& state);

/// A parameter whose +-step evaluations cross a ReLU or max-pool switch is
/// retried with the step divided by 10, down to min_step; if it still
/// crosses it is counted in `skipped` and not compared.
struct GradCheckOptions {
  double step = 1e-3;
  std::size_t min_params = 200;
  std::uint64_t seed = 0;
  double min_step = 1e-8;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_layer = 0;
  std::size_t checked = 0;
  std::size_t retried = 0;
  std::size_t skipped = 0;
};

/// |a - b| / max(|a|, |b|, 1e-8); 0 when both are 0.
double relative_error(double a, double b);

/// Loss over a network output; writes d loss / d output into dout.
using LossFn = std::function<double(const Batch<double>& out, Batch<double>& dout)>;

/// Central-difference check over a random subset of at least
/// options.min_params parameters (all of them when fewer), spread over every
/// parameterized layer.
GradCheckResult grad_check(Network<double>& net, const Batch<double>& input, const LossFn& loss,
                           const GradCheckOptions& options = {});

/// Model file: text header ("memdecode-model 1", layer lines, key=value
/// metadata, "end_header") followed by little-endian float32 parameters.
struct ModelFile {
  std::vector<LayerSpec> specs;
  Shape input;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<float> params;
};

void write_f32_le(std::ostream& out, std::span<const float> values);
std::vector<float> read_f32_le(std::istream& in, std::size_t count);

void save_model_file(const std::string& path, const ModelFile& model);
ModelFile load_model_file(const std::string& path);

}  // namespace memdecode::nn
