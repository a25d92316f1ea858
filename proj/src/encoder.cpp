// SPDX-License-Identifier: Apache-2.0

#include "memdecode/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace memdecode {

using nn::LayerSpec;

std::vector<LayerSpec> encoder_layers(std::size_t channels) {
  return {
      LayerSpec::conv1d(channels, 256, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::conv1d(256, 256, 3),      LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::conv1d(256, 256, 3),      LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::conv1d(256, 256, 3),      LayerSpec::relu(), LayerSpec::global_maxpool(),
      LayerSpec::flatten(),
      LayerSpec::dense(256, 128),          LayerSpec::relu(),
      LayerSpec::dense(128, 128),          LayerSpec::relu(),
      LayerSpec::dense(128, kEmbeddingDim),
  };
}

std::vector<LayerSpec> projection_layers() {
  return {LayerSpec::dense(kEmbeddingDim, kProjectionDim), LayerSpec::relu(),
          LayerSpec::dense(kProjectionDim, kProjectionDim), LayerSpec::l2norm()};
}

EncoderModel build_encoder(std::uint64_t seed, std::size_t channels, std::size_t window) {
  EncoderModel m;
  m.seed = seed;
  m.net = nn::Network<float>(encoder_layers(channels), {window, channels});
  if (channels == 14 && m.net.param_count() != kEncoderParams) {
    throw Error("encoder parameter count " + std::to_string(m.net.param_count()) + " != " +
                std::to_string(kEncoderParams));
  }
  m.net.init(seed);
  return m;
}

namespace {

void check_segment(const EncoderModel& model, const Matrix<float>& s) {
  if (s.rows() != model.window() || s.cols() != model.channels()) {
    throw Error("segment of shape " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                " does not match encoder input " + std::to_string(model.window()) + "x" +
                std::to_string(model.channels()));
  }
}

}  // namespace

std::vector<float> encode(const EncoderModel& model, const Matrix<float>& segment) {
  const Matrix<float>* one = &segment;
  const Matrix<float> e = encode_batch(model, std::span<const Matrix<float>* const>(&one, 1));
  return e.values();
}

Matrix<float> encode_batch(const EncoderModel& model, std::span<const Matrix<float>* const> segments,
                           std::size_t chunk) {
  const std::size_t dim = model.net.output_shape().size();
  Matrix<float> out(segments.size(), dim);
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t begin = 0; begin < segments.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, segments.size() - begin);
    nn::Batch<float> x(n, model.net.input_shape());
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix<float>& s = *segments[begin + i];
      check_segment(model, s);
      std::copy(s.values().begin(), s.values().end(), x.sample(i));
    }
    const auto y = model.net.infer(x);
    std::copy(y.data.begin(), y.data.end(), out.data() + begin * dim);
  }
  return out;
}

Matrix<float> encode_batch(const EncoderModel& model, std::span<const Segment> segments,
                           std::size_t chunk) {
  std::vector<const Matrix<float>*> ptrs;
  ptrs.reserve(segments.size());
  for (const auto& s : segments) ptrs.push_back(&s.data);
  return encode_batch(model, std::span<const Matrix<float>* const>(ptrs), chunk);
}

void save_encoder(const std::string& path, const EncoderModel& model,
                  const std::vector<std::pair<std::string, std::string>>& metadata) {
  nn::ModelFile f;
  f.specs = model.net.specs();
  f.input = model.net.input_shape();
  f.metadata.emplace_back("seed", std::to_string(model.seed));
  f.metadata.insert(f.metadata.end(), metadata.begin(), metadata.end());
  f.params.assign(model.net.params().begin(), model.net.params().end());
  nn::save_model_file(path, f);
}

EncoderModel load_encoder(const std::string& path) {
  const nn::ModelFile f = nn::load_model_file(path);
  EncoderModel m;
  m.net = nn::Network<float>(f.specs, f.input);
  std::copy(f.params.begin(), f.params.end(), m.net.params().begin());
  for (const auto& [k, v] : f.metadata) {
    if (k == "seed") m.seed = std::stoull(v);
  }
  return m;
}

SupConResult supcon_loss(const Matrix<double>& z, std::span<const int> labels, double temperature,
                         SupConMode mode, double norm_tolerance) {
  const std::size_t n = z.rows(), d = z.cols();
  if (n < 2) throw Error("contrastive loss needs at least 2 embeddings");
  if (labels.size() != n) throw Error("contrastive loss: label count does not match embeddings");
  if (!(temperature > 0.0)) throw Error("contrastive loss temperature must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (double v : z.row(i)) ss += v * v;
    if (!(std::abs(std::sqrt(ss) - 1.0) <= norm_tolerance)) {
      throw Error("contrastive loss: embedding " + std::to_string(i) + " has norm " +
                  std::to_string(std::sqrt(ss)) + ", expected unit norm");
    }
  }

  Matrix<double> s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += z(i, k) * z(j, k);
      s(i, j) = s(j, i) = dot / temperature;
    }
  }

  const bool include_self = mode == SupConMode::variant;
  Matrix<double> g(n, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t positives = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i && !include_self) continue;
      m = std::max(m, s(i, j));
      if (labels[j] == labels[i]) ++positives;
    }
    if (positives == 0) {
      throw Error("contrastive loss: anchor " + std::to_string(i) + " has no positive in the batch");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i && !include_self) continue;
      sum += std::exp(s(i, j) - m);
    }
    const double lse = m + std::log(sum);
    const double inv_p = 1.0 / static_cast<double>(positives);
    double pos_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i && !include_self) continue;
      g(i, j) = std::exp(s(i, j) - lse);
      if (labels[j] == labels[i]) {
        pos_sum += s(i, j);
        g(i, j) -= inv_p;
      }
    }
    loss += lse - pos_sum * inv_p;
  }

  // d loss / d z = (G + G^T) Z / tau
  SupConResult r;
  r.loss = loss;
  r.grad = Matrix<double>(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = (g(i, j) + g(j, i)) / temperature;
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) r.grad(i, k) += w * z(j, k);
    }
  }
  return r;
}

void TrainingPool::add(const Segment& segment) {
  auto it = std::find(concepts.begin(), concepts.end(), segment.concept_id);
  std::size_t label;
  if (it == concepts.end()) {
    label = concepts.size();
    concepts.push_back(segment.concept_id);
    items.emplace_back();
  } else {
    label = static_cast<std::size_t>(it - concepts.begin());
  }
  items[label].push_back(&segment.data);
}

std::size_t TrainingPool::size() const {
  std::size_t n = 0;
  for (const auto& v : items) n += v.size();
  return n;
}

TrainingPool make_pool(std::span<const Segment> segments) {
  std::map<std::string, std::vector<const Matrix<float>*>> grouped;
  for (const auto& s : segments) grouped[s.concept_id].push_back(&s.data);
  TrainingPool pool;
  for (auto& [concept_id, items] : grouped) {
    pool.concepts.push_back(concept_id);
    pool.items.push_back(std::move(items));
  }
  return pool;
}

TrainingBatch make_batch(const TrainingPool& pool, const TrainConfig& config, Rng& rng) {
  if (pool.concepts.empty()) throw Error("training pool is empty");
  if (config.per_concept == 0) throw Error("per_concept must be positive");
  if (config.noise_variance < 0.0) throw Error("noise variance must be nonnegative");
  for (std::size_t c = 0; c < pool.concepts.size(); ++c) {
    if (pool.items[c].empty()) throw Error("no training segments for concept " + pool.concepts[c]);
  }
  const Matrix<float>& first = *pool.items[0][0];
  const nn::Shape shape{first.rows(), first.cols()};
  TrainingBatch b;
  b.inputs.resize(config.per_concept * pool.concepts.size(), shape);
  b.labels.reserve(b.inputs.batch);

  const double sd = std::sqrt(config.noise_variance);
  std::vector<std::size_t> idx;
  std::size_t slot = 0;
  for (std::size_t c = 0; c < pool.concepts.size(); ++c) {
    const auto& items = pool.items[c];
    const std::size_t m = items.size();
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < config.per_concept; ++k) {
      std::size_t pick;
      if (m >= config.per_concept) {
        const std::size_t j = k + rng.below(m - k);  // partial Fisher-Yates
        std::swap(idx[k], idx[j]);
        pick = idx[k];
      } else {
        pick = rng.below(m);
      }
      const Matrix<float>& seg = *items[pick];
      if (seg.rows() != shape.length || seg.cols() != shape.channels) {
        throw Error("training segments differ in shape");
      }
      float* dst = b.inputs.sample(slot++);
      std::copy(seg.values().begin(), seg.values().end(), dst);
      if (sd > 0.0) {
        for (std::size_t i = 0; i < shape.size(); ++i) dst[i] += static_cast<float>(rng.normal() * sd);
      }
      b.labels.push_back(static_cast<int>(c));
    }
  }
  return b;
}

nn::Network<double> encoder_with_head(std::size_t channels, std::size_t window, std::uint64_t seed) {
  auto layers = encoder_layers(channels);
  const auto head = projection_layers();
  layers.insert(layers.end(), head.begin(), head.end());
  nn::Network<double> net(layers, {window, channels});
  net.init(seed);
  return net;
}

TrainResult train(const TrainingPool& pool, const TrainConfig& config, const StepCallback& on_step) {
  if (config.epochs == 0 || config.steps_per_epoch == 0) throw Error("training needs at least one step");
  if (!(config.temperature > 0.0)) throw Error("temperature must be positive");
  if (config.mode == SupConMode::standard && config.per_concept < 2) {
    throw Error("standard contrastive mode needs two segments per concept");
  }
  if (pool.concepts.empty() || pool.items[0].empty()) throw Error("training pool is empty");
  const Matrix<float>& first = *pool.items[0][0];
  const std::size_t window = first.rows(), channels = first.cols();

  auto layers = encoder_layers(channels);
  const std::size_t encoder_layer_count = layers.size();
  const auto head = projection_layers();
  layers.insert(layers.end(), head.begin(), head.end());
  nn::Network<float> net(layers, {window, channels});
  net.init(derive_seed(config.seed, 1));

  nn::OptState<float> opt;
  opt.learning_rate = config.learning_rate;
  opt.decay = config.decay;
  opt.epsilon = config.epsilon;

  Rng rng(derive_seed(config.seed, 2));
  std::vector<float> grads(net.param_count());
  const std::size_t total = config.epochs * config.steps_per_epoch;
  TrainResult result;
  result.loss_curve.reserve(total);
  Matrix<double> z;
  nn::Batch<float> dz;
  for (std::size_t step = 0; step < total; ++step) {
    const TrainingBatch batch = make_batch(pool, config, rng);
    const auto& out = net.forward(batch.inputs);
    z = Matrix<double>(out.batch, out.sample_size());
    std::copy(out.data.begin(), out.data.end(), z.data());
    const SupConResult loss = supcon_loss(z, batch.labels, config.temperature, config.mode, 1e-4);
    if (!std::isfinite(loss.loss)) {
      throw Error("non-finite training loss at step " + std::to_string(step));
    }
    dz.resize(out.batch, out.shape);
    std::copy(loss.grad.values().begin(), loss.grad.values().end(), dz.data.begin());
    net.backward(dz, grads);
    nn::rmsprop_step(net, std::span<const float>(grads), opt);
    result.loss_curve.push_back(loss.loss);
    if (on_step) on_step(step, loss.loss);
  }

  result.model.seed = config.seed;
  result.model.net = nn::Network<float>(
      std::vector<LayerSpec>(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(encoder_layer_count)),
      {window, channels});
  const auto src = net.params();
  std::copy_n(src.begin(), result.model.net.param_count(), result.model.net.params().begin());
  return result;
}

}  // namespace memdecode
