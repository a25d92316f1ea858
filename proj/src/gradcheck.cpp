// SPDX-License-Identifier: Apache-2.0

#include "memdecode/gradcheck.hpp"

#include <memory>

#include "memdecode/encoder.hpp"
#include "memdecode/rng.hpp"

namespace memdecode {

using nn::Batch;
using nn::LayerSpec;

namespace {

// sum_i c_i y_i + y_i^2 / 2 with fixed random c.
nn::LossFn mixed_loss(std::size_t size, std::uint64_t seed) {
  auto c = std::make_shared<std::vector<double>>(size);
  Rng rng(seed);
  for (auto& v : *c) v = rng.normal();
  return [c](const Batch<double>& y, Batch<double>& dy) {
    dy.resize(y.batch, y.shape);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const double ci = (*c)[i % c->size()];
      loss += ci * y.data[i] + 0.5 * y.data[i] * y.data[i];
      dy.data[i] = ci + y.data[i];
    }
    return loss;
  };
}

Batch<double> random_batch(std::size_t n, nn::Shape shape, Rng& rng) {
  Batch<double> b(n, shape);
  for (auto& v : b.data) v = rng.normal();
  return b;
}

}  // namespace

std::vector<NamedGradCheck> layer_grad_checks(std::uint64_t seed) {
  struct Case {
    std::string name;
    std::vector<LayerSpec> layers;
    nn::Shape input;
  };
  const std::vector<Case> cases = {
      {"conv1d", {LayerSpec::conv1d(3, 4, 3)}, {9, 3}},
      {"maxpool", {LayerSpec::conv1d(2, 3, 3), LayerSpec::maxpool(2)}, {8, 2}},
      {"global_maxpool", {LayerSpec::conv1d(2, 3, 3), LayerSpec::global_maxpool()}, {7, 2}},
      {"flatten", {LayerSpec::conv1d(2, 3, 3), LayerSpec::flatten(), LayerSpec::dense(15, 2)}, {5, 2}},
      {"dense", {LayerSpec::dense(6, 4)}, {1, 6}},
      {"relu", {LayerSpec::dense(6, 5), LayerSpec::relu()}, {1, 6}},
      {"l2norm", {LayerSpec::dense(6, 5), LayerSpec::l2norm()}, {1, 6}},
  };
  std::vector<NamedGradCheck> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    nn::Network<double> net(c.layers, c.input);
    net.init(derive_seed(seed, i, 1));
    Rng rng(derive_seed(seed, i, 2));
    const Batch<double> x = random_batch(3, c.input, rng);
    const auto loss = mixed_loss(net.output_shape().size() * 3, derive_seed(seed, i, 3));
    nn::GradCheckOptions opt;
    opt.step = 1e-5;
    opt.min_params = net.param_count();
    opt.seed = seed;
    out.push_back({c.name, nn::grad_check(net, x, loss, opt), 1e-4});
  }
  return out;
}

NamedGradCheck composite_grad_check(std::uint64_t seed, std::size_t batch, std::size_t min_params,
                                    std::size_t channels, std::size_t window) {
  if (batch < 2) throw Error("composite gradient check needs at least 2 segments");
  nn::Network<double> net = encoder_with_head(channels, window, derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  const Batch<double> x = random_batch(batch, {window, channels}, rng);
  auto labels = std::make_shared<std::vector<int>>();
  for (std::size_t i = 0; i < batch; ++i) labels->push_back(static_cast<int>(i / 2));
  const nn::LossFn loss = [labels](const Batch<double>& y, Batch<double>& dy) {
    Matrix<double> z(y.batch, y.sample_size());
    std::copy(y.data.begin(), y.data.end(), z.data());
    const SupConResult r = supcon_loss(z, *labels, 0.1, SupConMode::variant, 1e-6);
    dy.resize(y.batch, y.shape);
    std::copy(r.grad.values().begin(), r.grad.values().end(), dy.data.begin());
    return r.loss;
  };
  nn::GradCheckOptions opt;
  opt.step = 1e-5;
  opt.min_params = min_params;
  opt.seed = seed;
  return {"encoder+head+supcon", nn::grad_check(net, x, loss, opt), 1e-3};
}

}  // namespace memdecode
