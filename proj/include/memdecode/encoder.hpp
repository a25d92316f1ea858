// SPDX-License-Identifier: Apache-2.0
//
// Segment encoder, projection head, supervised contrastive loss and the
// training loop.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "memdecode/neuralcore.hpp"
#include "memdecode/rng.hpp"
#include "memdecode/segmentation.hpp"

namespace memdecode {

inline constexpr std::size_t kEncoderParams = 655136;
inline constexpr std::size_t kEmbeddingDim = 32;
inline constexpr std::size_t kProjectionDim = 64;

/// Four conv1d(256, k3) blocks with max pooling (global after the last),
/// then dense 128, 128 and a linear 32-unit output.
std::vector<nn::LayerSpec> encoder_layers(std::size_t channels = 14);
/// dense 32->64 + relu, dense 64->64, l2norm.
std::vector<nn::LayerSpec> projection_layers();

struct EncoderModel {
  nn::Network<float> net;
  std::uint64_t seed = 0;

  std::size_t channels() const { return net.input_shape().channels; }
  std::size_t window() const { return net.input_shape().length; }
  std::size_t param_count() const { return net.param_count(); }
};

/// Glorot-initialized encoder for [window x channels] segments. With the
/// default 14 channels the parameter count is checked against kEncoderParams.
EncoderModel build_encoder(std::uint64_t seed, std::size_t channels = 14, std::size_t window = 100);

/// Raw (unnormalized) 32-dim embedding of one segment.
std::vector<float> encode(const EncoderModel& model, const Matrix<float>& segment);
/// Embeddings of many segments, one row each, computed in chunks of `chunk`.
Matrix<float> encode_batch(const EncoderModel& model, std::span<const Segment> segments,
                           std::size_t chunk = 256);
Matrix<float> encode_batch(const EncoderModel& model, std::span<const Matrix<float>* const> segments,
                           std::size_t chunk = 256);

void save_encoder(const std::string& path, const EncoderModel& model,
                  const std::vector<std::pair<std::string, std::string>>& metadata = {});
EncoderModel load_encoder(const std::string& path);

enum class SupConMode {
  variant,   // A(i) = I, P(i) = same label including i
  standard,  // i excluded from both sets
};

struct SupConResult {
  double loss = 0.0;
  Matrix<double> grad;  // d loss / d z, same shape as z
};

/// Sum over anchors of -1/|P(i)| sum_p log softmax_A(i)(z_i . z_p / tau).
/// Rows of z must have unit norm within norm_tolerance.
SupConResult supcon_loss(const Matrix<double>& z, std::span<const int> labels, double temperature = 0.1,
                         SupConMode mode = SupConMode::variant, double norm_tolerance = 1e-6);

struct TrainConfig {
  std::size_t per_concept = 8;
  std::size_t epochs = 8;
  std::size_t steps_per_epoch = 500;
  double noise_variance = 0.1;
  double temperature = 0.1;
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-7;
  SupConMode mode = SupConMode::variant;
  std::uint64_t seed = 0;
};

/// Training segments grouped by concept. Holds pointers into caller-owned
/// segment storage, which must outlive the pool.
struct TrainingPool {
  std::vector<std::string> concepts;                  // label = index
  std::vector<std::vector<const Matrix<float>*>> items;  // per concept

  void add(const Segment& segment);
  std::size_t size() const;
};

TrainingPool make_pool(std::span<const Segment> segments);

struct TrainingBatch {
  nn::Batch<float> inputs;
  std::vector<int> labels;
};

/// per_concept segments from every concept (without replacement while the
/// concept has enough), plus N(0, noise_variance) noise on every value.
TrainingBatch make_batch(const TrainingPool& pool, const TrainConfig& config, Rng& rng);

struct TrainResult {
  EncoderModel model;
  std::vector<double> loss_curve;  // one value per step
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Trains encoder + projection head; returns the encoder alone.
TrainResult train(const TrainingPool& pool, const TrainConfig& config, const StepCallback& on_step = {});

/// Double-precision encoder + head network sharing the encoder's layout,
/// used for gradient checks.
nn::Network<double> encoder_with_head(std::size_t channels, std::size_t window, std::uint64_t seed);

}  // namespace memdecode
