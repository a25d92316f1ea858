// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "memdecode/kernels/kernels.hpp"
#include "memdecode/neuralcore.hpp"
#include "memdecode/rng.hpp"

using namespace memdecode;
using namespace memdecode::nn;

namespace {

Batch<double> random_batch(std::size_t n, Shape s, std::uint64_t seed) {
  Batch<double> b(n, s);
  Rng rng(seed);
  for (auto& v : b.data) v = rng.normal();
  return b;
}

// L = sum_i c_i y_i + 0.5 y_i^2, with fixed random c.
LossFn mixed_loss(std::size_t size, std::uint64_t seed) {
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

double input_grad_error(Network<double>& net, const Batch<double>& x, const LossFn& loss,
                        double step = 1e-5) {
  Batch<double> dy, dx, scratch;
  loss(net.forward(x), dy);
  std::vector<double> grads(net.param_count());
  net.backward(dy, grads, &dx);
  double worst = 0.0;
  Batch<double> xp = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double saved = xp.data[i];
    xp.data[i] = saved + step;
    const double up = loss(net.forward(xp), scratch);
    xp.data[i] = saved - step;
    const double down = loss(net.forward(xp), scratch);
    xp.data[i] = saved;
    worst = std::max(worst, relative_error(dx.data[i], (up - down) / (2 * step)));
  }
  return worst;
}

Network<double> single(LayerSpec spec, Shape in, std::uint64_t seed = 1) {
  Network<double> net({spec}, in);
  net.init(seed);
  Rng rng(seed + 100);
  for (auto& p : net.params()) p += 0.1 * rng.normal();  // non-zero biases too
  return net;
}

}  // namespace

TEST_CASE("parameter count formulas") {
  CHECK(LayerSpec::conv1d(14, 256, 3).param_count() == 11008);
  CHECK(LayerSpec::conv1d(256, 256, 3).param_count() == 196864);
  CHECK(LayerSpec::dense(256, 128).param_count() == 32896);
  CHECK(LayerSpec::dense(128, 32).param_count() == 4128);
  CHECK(LayerSpec::relu().param_count() == 0);
  CHECK(LayerSpec::maxpool(2).param_count() == 0);
}

TEST_CASE("layer spec text round trip") {
  for (const auto& s : {LayerSpec::conv1d(14, 256, 3), LayerSpec::dense(3, 4), LayerSpec::maxpool(2),
                        LayerSpec::global_maxpool(), LayerSpec::flatten(), LayerSpec::relu(),
                        LayerSpec::l2norm()}) {
    CHECK(LayerSpec::parse(s.describe()) == s);
  }
  CHECK_THROWS_AS(LayerSpec::parse("softmax"), Error);
  CHECK_THROWS_AS(LayerSpec::parse("dense 3"), Error);
}

TEST_CASE("conv1d with identity kernel copies the input") {
  Batch<double> x(1, {7, 1});
  for (std::size_t i = 0; i < 7; ++i) x.data[i] = double(i) * 1.5 - 2.0;
  const std::vector<double> w = {0.0, 1.0, 0.0}, b = {0.0};
  Batch<double> y;
  conv1d_forward<double>(x, w, b, 3, y);
  CHECK(y.shape == Shape{7, 1});
  CHECK(y.data == x.data);
}

TEST_CASE("conv1d output shape and explicit formula") {
  const Shape in{100, 14};
  Network<double> net({LayerSpec::conv1d(14, 256, 3)}, in);
  CHECK(net.output_shape() == Shape{100, 256});

  // Small instance against the zero-padded sum written out directly.
  const std::size_t L = 9, cin = 3, cout = 4, k = 5;
  auto x = random_batch(2, {L, cin}, 3);
  std::vector<double> w(k * cin * cout), b(cout);
  Rng rng(4);
  for (auto& v : w) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  Batch<double> y;
  conv1d_forward<double>(x, w, b, k, y);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        double ref = b[o];
        for (std::size_t j = 0; j < k; ++j) {
          const long src = long(t) + long(j) - long(k / 2);
          if (src < 0 || src >= long(L)) continue;
          for (std::size_t c = 0; c < cin; ++c) {
            ref += x.sample(n)[std::size_t(src) * cin + c] * w[(j * cin + c) * cout + o];
          }
        }
        CHECK(y.sample(n)[t * cout + o] == doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv1d preserves length for every L") {
  for (std::size_t L : {1u, 2u, 3u, 17u}) {
    Network<double> net({LayerSpec::conv1d(2, 3, 3)}, {L, 2});
    CHECK(net.output_shape().length == L);
  }
  CHECK_THROWS_AS(Network<double>({LayerSpec::conv1d(3, 3, 3)}, {5, 2}), Error);
  Batch<double> x(1, {4, 1}), y;
  const std::vector<double> w(2, 1.0), b(1, 0.0);
  CHECK_THROWS_AS(conv1d_forward<double>(x, w, b, 2, y), Error);
}

TEST_CASE("conv1d gradients match finite differences") {
  auto net = single(LayerSpec::conv1d(3, 4, 3), {8, 3});
  const auto x = random_batch(2, {8, 3}, 5);
  const auto loss = mixed_loss(2 * 8 * 4, 6);
  const auto r = grad_check(net, x, loss, {1e-5, 200, 7});
  CHECK(r.checked == net.param_count());
  CHECK(r.max_rel_error < 1e-4);
  CHECK(input_grad_error(net, x, loss) < 1e-4);
}

TEST_CASE("maxpool") {
  Batch<double> x(1, {4, 1});
  x.data = {1, 3, 2, 8};
  Batch<double> y;
  maxpool_forward(x, 2, y);
  CHECK(y.data == std::vector<double>{3, 8});

  Network<double> odd({LayerSpec::maxpool(2)}, {25, 3});
  CHECK(odd.output_shape() == Shape{12, 3});
  CHECK_THROWS_AS(Network<double>({LayerSpec::maxpool(2)}, {1, 3}), Error);

  SUBCASE("ties route to the first index") {
    Batch<double> t(1, {2, 1}), u, dy(1, {1, 1}), dx;
    t.data = {5, 5};
    maxpool_forward(t, 2, u);
    dy.data = {1.0};
    maxpool_backward(t, dy, 2, dx);
    CHECK(dx.data == std::vector<double>{1.0, 0.0});
  }

  SUBCASE("gradient") {
    Network<double> net({LayerSpec::maxpool(2)}, {9, 3});
    const auto xi = random_batch(2, {9, 3}, 8);
    CHECK(input_grad_error(net, xi, mixed_loss(2 * 4 * 3, 9)) < 1e-4);
  }
}

TEST_CASE("global maxpool") {
  auto x = random_batch(1, {10, 4}, 10);
  Batch<double> y;
  global_maxpool_forward(x, y);
  CHECK(y.shape == Shape{1, 4});

  // Reverse the time axis: per-channel maximum is unchanged.
  Batch<double> rev = x, y2;
  for (std::size_t t = 0; t < 10; ++t) {
    std::copy_n(x.data.data() + t * 4, 4, rev.data.data() + (9 - t) * 4);
  }
  global_maxpool_forward(rev, y2);
  CHECK(y.data == y2.data);

  Network<double> wide({LayerSpec::global_maxpool(), LayerSpec::flatten()}, {12, 256});
  CHECK(wide.output_shape() == Shape{1, 256});

  Network<double> net({LayerSpec::global_maxpool(), LayerSpec::flatten()}, {10, 4});
  CHECK(input_grad_error(net, random_batch(3, {10, 4}, 11), mixed_loss(12, 12)) < 1e-4);
}

TEST_CASE("dense, relu and l2norm") {
  SUBCASE("identity dense") {
    Batch<double> x(1, {1, 3}), y;
    x.data = {1.0, -2.0, 0.5};
    const std::vector<double> w = {1, 0, 0, 0, 1, 0, 0, 0, 1}, b = {0, 0, 0};
    dense_forward<double>(x, w, b, y);
    CHECK(y.data == x.data);
  }
  SUBCASE("l2norm 3-4-5") {
    Batch<double> x(1, {1, 2}), y;
    x.data = {3.0, 4.0};
    l2norm_forward(x, y);
    CHECK(y.data[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y.data[1] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("zero vector stays zero") {
    Batch<double> x(1, {1, 3}), y;
    l2norm_forward(x, y);
    CHECK(y.data == std::vector<double>(3, 0.0));
  }
  SUBCASE("gradients") {
    auto dense = single(LayerSpec::dense(6, 5), {1, 6});
    const auto x = random_batch(4, {1, 6}, 13);
    CHECK(grad_check(dense, x, mixed_loss(20, 14), {1e-5, 200, 1}).max_rel_error < 1e-4);
    CHECK(input_grad_error(dense, x, mixed_loss(20, 14)) < 1e-4);

    Network<double> relu({LayerSpec::relu()}, {1, 6});
    CHECK(input_grad_error(relu, x, mixed_loss(24, 15)) < 1e-4);

    Network<double> norm({LayerSpec::l2norm()}, {1, 6});
    CHECK(input_grad_error(norm, x, mixed_loss(24, 16)) < 1e-4);
  }
  CHECK_THROWS_AS(Network<double>({LayerSpec::dense(5, 2)}, {1, 6}), Error);
}

TEST_CASE("grad_check on composite stacks") {
  SUBCASE("single dense layer with squared loss") {
    auto net = single(LayerSpec::dense(10, 3), {1, 10});
    const LossFn sq = [](const Batch<double>& y, Batch<double>& dy) {
      dy = y;
      double l = 0.0;
      for (double v : y.data) l += 0.5 * v * v;
      return l;
    };
    const auto r = grad_check(net, random_batch(5, {1, 10}, 17), sq);
    CHECK(r.checked == 33);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("zero input, zero weight") {
    Network<double> net({LayerSpec::dense(4, 3), LayerSpec::relu(), LayerSpec::dense(3, 2)}, {1, 4});
    const auto r = grad_check(net, Batch<double>(2, {1, 4}), mixed_loss(4, 18));
    CHECK(r.max_rel_error < 1e-9);
  }
  SUBCASE("conv stack down to a normalized vector") {
    Network<double> net({LayerSpec::conv1d(3, 5, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                         LayerSpec::conv1d(5, 4, 3), LayerSpec::relu(), LayerSpec::global_maxpool(),
                         LayerSpec::flatten(), LayerSpec::dense(4, 6), LayerSpec::relu(),
                         LayerSpec::dense(6, 3), LayerSpec::l2norm()},
                        {12, 3});
    net.init(19);
    const auto x = random_batch(3, {12, 3}, 20);
    const auto r = grad_check(net, x, mixed_loss(9, 21), {1e-5, 200, 2});
    CHECK(r.checked == net.param_count());
    CHECK(r.max_rel_error < 1e-4);
    CHECK(input_grad_error(net, x, mixed_loss(9, 21)) < 1e-4);
  }
  SUBCASE("a relu kink inside the step is stepped around") {
    // One unit, pre-activation w*x + b with b = 0.4 * step below zero.
    Network<double> net({LayerSpec::dense(1, 1), LayerSpec::relu()}, {1, 1});
    auto p = net.params();
    p[0] = 1.0;
    p[1] = -4e-4;
    Batch<double> x(1, {1, 1});
    x.data[0] = 0.0;
    const LossFn id = [](const Batch<double>& y, Batch<double>& dy) {
      dy = y;
      dy.data[0] = 1.0;
      return y.data[0];
    };
    net.forward(x);
    const auto before = net.branch_signature();
    REQUIRE(before == std::vector<std::uint32_t>{0});
    const auto r = grad_check(net, x, id, {1e-3, 2, 0});
    CHECK(r.retried >= 1);
    CHECK(r.skipped == 0);
    CHECK(r.max_rel_error < 1e-9);
    const auto fixed = grad_check(net, x, id, {1e-3, 2, 0, 1e-3});
    CHECK(fixed.skipped == 1);

    p[1] = 0.5;
    net.forward(x);
    CHECK(net.branch_signature() == std::vector<std::uint32_t>{1});
  }
}

TEST_CASE("branch signature tracks max-pool winners") {
  Network<double> net({LayerSpec::maxpool(2), LayerSpec::global_maxpool()}, {4, 1});
  Batch<double> x(1, {4, 1});
  x.data = {1.0, 3.0, 2.0, 0.0};
  net.forward(x);
  // Pool windows pick index 1 and 0; the global pool then picks the first window.
  CHECK(net.branch_signature() == std::vector<std::uint32_t>{1, 0, 0});
  x.data = {1.0, 0.0, 2.0, 5.0};
  net.forward(x);
  CHECK(net.branch_signature() == std::vector<std::uint32_t>{0, 1, 1});
}

TEST_CASE("rmsprop") {
  SUBCASE("zero gradient leaves parameters") {
    std::vector<float> p = {1.0f, -2.0f}, g = {0.0f, 0.0f};
    OptState<float> st;
    rmsprop_step<float>(p, g, st);
    CHECK(p == std::vector<float>{1.0f, -2.0f});
  }
  SUBCASE("hand evaluation") {
    std::vector<double> p = {0.5}, g = {1.0};
    OptState<double> st;
    rmsprop_step<double>(p, g, st);
    CHECK(st.mean_square[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(p[0] - 0.5 == doctest::Approx(-0.001 / (std::sqrt(0.1) + 1e-7)).epsilon(1e-12));
  }
  SUBCASE("constant gradient step approaches lr") {
    std::vector<double> p = {0.0}, g = {3.0};
    OptState<double> st;
    double prev = 0.0, last_step = 0.0;
    for (int i = 0; i < 300; ++i) {
      rmsprop_step<double>(p, g, st);
      last_step = prev - p[0];
      prev = p[0];
    }
    CHECK(last_step == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(st.mean_square[0] >= 0.0);
  }
  SUBCASE("non-finite gradient aborts and names the layer") {
    Network<float> net({LayerSpec::dense(2, 2), LayerSpec::relu(), LayerSpec::dense(2, 1)}, {1, 2});
    net.init(1);
    const std::vector<float> before(net.params().begin(), net.params().end());
    std::vector<float> g(net.param_count(), 0.1f);
    g[7] = std::numeric_limits<float>::quiet_NaN();
    OptState<float> st;
    try {
      rmsprop_step(net, std::span<const float>(g), st);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
    CHECK(std::equal(before.begin(), before.end(), net.params().begin()));
  }
}

TEST_CASE("network determinism and precision agreement") {
  Network<float> net({LayerSpec::conv1d(4, 16, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::conv1d(16, 16, 3), LayerSpec::relu(), LayerSpec::global_maxpool(),
                      LayerSpec::flatten(), LayerSpec::dense(16, 8)},
                     {20, 4});
  net.init(42);
  Network<float> again = net.cast<float>();
  const auto xd = random_batch(5, {20, 4}, 43);
  Batch<float> xf(5, {20, 4});
  std::transform(xd.data.begin(), xd.data.end(), xf.data.begin(), [](double v) { return float(v); });
  const auto ya = net.forward(xf).data;
  CHECK(again.forward(xf).data == ya);

  auto nd = net.cast<double>();
  const auto yd = nd.forward(xd).data;
  for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i] == doctest::Approx(yd[i]).epsilon(1e-4));

  Network<float> init_again(net.specs(), net.input_shape());
  init_again.init(42);
  CHECK(std::equal(init_again.params().begin(), init_again.params().end(), net.params().begin()));
}

TEST_CASE("scalar and vector kernels give matching networks") {
  if (!kernels::supported(kernels::Isa::avx2)) return;
  Network<float> net({LayerSpec::conv1d(14, 32, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::conv1d(32, 32, 3), LayerSpec::relu(), LayerSpec::global_maxpool(),
                      LayerSpec::flatten(), LayerSpec::dense(32, 8)},
                     {100, 14});
  net.init(3);
  Batch<float> x(7, {100, 14});
  Rng rng(4);
  for (auto& v : x.data) v = float(rng.normal());
  Batch<float> dy(7, {1, 8});
  for (auto& v : dy.data) v = float(rng.normal());

  auto run = [&](kernels::Isa isa) {
    kernels::IsaScope scope(isa);
    Network<float> n = net.cast<float>();
    auto y = n.forward(x).data;
    std::vector<float> g(n.param_count());
    n.backward(dy, g);
    y.insert(y.end(), g.begin(), g.end());
    return y;
  };
  const auto a = run(kernels::Isa::scalar), b = run(kernels::Isa::avx2);
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(double(a[i]) - b[i]) / (1.0 + std::abs(double(a[i]))));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("model file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "memdecode_model_test.bin";
  ModelFile m;
  m.specs = {LayerSpec::dense(3, 2), LayerSpec::relu()};
  m.input = {1, 3};
  m.metadata = {{"seed", "7"}, {"note", "a b=c"}};
  m.params = {1.0f, -0.0f, 3.5f, 1e-30f, -7.25f, 2.0f, 0.1f, 0.2f};
  save_model_file(path.string(), m);
  const ModelFile back = load_model_file(path.string());
  CHECK(back.specs == m.specs);
  CHECK(back.input == m.input);
  CHECK(back.metadata == m.metadata);
  CHECK(std::memcmp(back.params.data(), m.params.data(), m.params.size() * 4) == 0);

  // Little-endian byte order on disk.
  std::ostringstream os;
  const float one = 1.0f;
  write_f32_le(os, std::span<const float>(&one, 1));
  CHECK(os.str() == std::string("\x00\x00\x80\x3f", 4));

  // Truncation is reported.
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
  CHECK_THROWS_AS(load_model_file(path.string()), Error);
  std::filesystem::remove(path);
}
