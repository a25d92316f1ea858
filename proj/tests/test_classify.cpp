// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>
#include <numeric>

#include "doctest.h"
#include "memdecode/classify.hpp"
#include "memdecode/kernels/kernels.hpp"
#include "memdecode/rng.hpp"

using namespace memdecode;

namespace {

ConceptDistribution dist(std::vector<std::string> c, std::vector<double> p) { return {std::move(c), std::move(p)}; }

Matrix<float> random_points(std::size_t n, std::size_t d, Rng& rng) {
  Matrix<float> m(n, d);
  for (auto& v : m.values()) v = static_cast<float>(rng.normal());
  return m;
}

// Sort every reference by (distance, index) and vote.
std::vector<double> brute_force(const Matrix<float>& refs, const std::vector<std::size_t>& label_of,
                                std::size_t n_classes, std::span<const float> q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t r = 0; r < refs.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < refs.cols(); ++c) {
      const double diff = static_cast<double>(q[c]) - refs(r, c);
      s += diff * diff;
    }
    d.emplace_back(s, r);
  }
  std::sort(d.begin(), d.end());
  std::vector<double> p(n_classes, 0.0);
  for (std::size_t i = 0; i < k; ++i) p[label_of[d[i].second]] += 1.0 / static_cast<double>(k);
  return p;
}

}  // namespace

TEST_CASE("knn fit validation") {
  Matrix<float> x(25, 2, 0.0f);
  std::vector<std::string> labels(25, "a");
  labels[3] = "b";
  const auto m = knn_fit(x, labels);
  CHECK(m.size() == 25);
  CHECK(m.k() == 25);
  CHECK(m.classes() == std::vector<std::string>{"a", "b"});

  Matrix<float> small(24, 2);
  std::vector<std::string> small_labels(24, "a");
  small_labels[0] = "b";
  try {
    knn_fit(small, small_labels);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("insufficient reference points") != std::string::npos);
  }
  CHECK_THROWS_AS(knn_fit(x, std::vector<std::string>(25, "a")), Error);
  CHECK_NOTHROW(knn_fit(x, std::vector<std::string>(25, "a"), 25, false, true));
  CHECK_THROWS_AS(knn_fit(x, std::vector<std::string>(3, "a")), Error);
  CHECK_THROWS_AS(knn_fit(x, labels, 0), Error);
}

TEST_CASE("knn votes") {
  Matrix<float> refs(3, 1);
  refs.values() = {0.0f, 1.0f, 2.0f};
  const std::vector<std::string> labels = {"a", "a", "b"};
  const auto m1 = knn_fit(refs, labels, 1);
  const std::vector<float> q = {2.0f};
  const auto p = knn_predict_proba(m1, q);
  CHECK(p["b"] == 1.0);
  CHECK(p["a"] == 0.0);

  const auto m3 = knn_fit(refs, labels, 3);
  const auto p3 = knn_predict_proba(m3, q);
  CHECK(p3["a"] == doctest::Approx(2.0 / 3.0));
  CHECK(p3["b"] == doctest::Approx(1.0 / 3.0));
  CHECK(p3["zzz"] == 0.0);

  // Equidistant neighbours: the earlier reference wins.
  Matrix<float> tie(2, 1);
  tie.values() = {-1.0f, 1.0f};
  const std::vector<float> zero = {0.0f};
  CHECK(knn_predict_proba(knn_fit(tie, std::vector<std::string>{"x", "y"}, 1), zero)["x"] == 1.0);
  CHECK(knn_predict_proba(knn_fit(tie, std::vector<std::string>{"y", "x"}, 1), zero)["y"] == 1.0);
  CHECK_THROWS_AS(knn_predict_proba(m1, std::vector<float>{1.0f, 2.0f}), Error);
}

TEST_CASE("knn against brute force") {
  Rng rng(4);
  const auto refs = random_points(400, 32, rng);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < 400; ++i) labels.push_back("c" + std::to_string(rng.below(7)));
  const auto model = knn_fit(refs, labels, 25);
  const auto queries = random_points(1000, 32, rng);
  std::size_t mismatches = 0;
  for (std::size_t r = 0; r < 1000; ++r) {
    const auto got = knn_predict_proba(model, queries.row(r));
    const auto want = brute_force(refs, model.label_index(), model.classes().size(), queries.row(r), 25);
    for (std::size_t c = 0; c < want.size(); ++c) mismatches += std::abs(got.probs[c] - want[c]) > 1e-12;
    CHECK(std::accumulate(got.probs.begin(), got.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(mismatches == 0);

  // The reference distance kernel agrees too.
  kernels::IsaScope scalar(kernels::Isa::scalar);
  for (std::size_t r = 0; r < 50; ++r) {
    const auto got = knn_predict_proba(model, queries.row(r));
    const auto want = brute_force(refs, model.label_index(), model.classes().size(), queries.row(r), 25);
    for (std::size_t c = 0; c < want.size(); ++c) CHECK(got.probs[c] == doctest::Approx(want[c]).epsilon(1e-12));
  }
}

TEST_CASE("knn properties") {
  Rng rng(5);
  const auto refs = random_points(60, 8, rng);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < 60; ++i) labels.push_back(i % 3 == 0 ? "a" : i % 3 == 1 ? "b" : "c");
  const auto model = knn_fit(refs, labels, 5);
  auto scaled_refs = refs;
  for (auto& v : scaled_refs.values()) v *= 4.0f;
  const auto scaled = knn_fit(scaled_refs, labels, 5);
  for (int t = 0; t < 50; ++t) {
    auto q = random_points(1, 8, rng);
    const auto p = knn_predict_proba(model, q.row(0));
    std::size_t support = 0;
    for (double v : p.probs) support += v > 0.0;
    CHECK(support <= 3);
    CHECK(std::accumulate(p.probs.begin(), p.probs.end(), 0.0) == doctest::Approx(1.0));
    for (auto& v : q.values()) v *= 4.0f;
    CHECK(knn_predict_proba(scaled, q.row(0)).probs == p.probs);
  }

  const auto normalized = knn_fit(refs, labels, 5, true);
  CHECK(normalized.normalized());
  const auto q = random_points(1, 8, rng);
  auto big = q;
  for (auto& v : big.values()) v *= 100.0f;
  CHECK(knn_predict_proba(normalized, q.row(0)).probs == knn_predict_proba(normalized, big.row(0)).probs);
}

TEST_CASE("trace soft voting") {
  const std::vector<std::string> ab = {"a", "b"};
  const std::vector<ConceptDistribution> two = {dist(ab, {0.8, 0.2}), dist(ab, {0.4, 0.6})};
  const auto t = classify_trace(two);
  CHECK(t.probs[0] == doctest::Approx(0.6));
  CHECK(t.probs[1] == doctest::Approx(0.4));

  const std::vector<ConceptDistribution> one = {dist(ab, {0.3, 0.7})};
  CHECK(classify_trace(one).probs[1] == doctest::Approx(0.7));

  const std::vector<ConceptDistribution> uniform(5, dist({"a", "b", "c"}, {1.0 / 3, 1.0 / 3, 1.0 / 3}));
  for (double p : classify_trace(uniform).probs) CHECK(p == doctest::Approx(1.0 / 3));

  CHECK_THROWS_AS(classify_trace(std::vector<ConceptDistribution>{}), Error);
  const std::vector<ConceptDistribution> mixed = {dist(ab, {1, 0}), dist({"a", "c"}, {1, 0})};
  CHECK_THROWS_AS(classify_trace(mixed), Error);

  // Order invariance and argmax preservation.
  Rng rng(6);
  std::vector<ConceptDistribution> segs;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> p(4);
    for (auto& v : p) v = rng.uniform() * 0.5;
    p[2] = 0.6;
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    segs.push_back(dist({"a", "b", "c", "d"}, p));
  }
  const auto forward = classify_trace(segs);
  std::reverse(segs.begin(), segs.end());
  const auto backward = classify_trace(segs);
  for (std::size_t i = 0; i < 4; ++i) CHECK(forward.probs[i] == doctest::Approx(backward.probs[i]).epsilon(1e-12));
  CHECK(forward.argmax() == 2);
}

TEST_CASE("top k") {
  const auto d = dist({"a", "b", "c"}, {0.5, 0.3, 0.2});
  CHECK(top_k(d, 2) == std::vector<std::string>{"a", "b"});
  CHECK(top_k(dist({"a", "b"}, {0.5, 0.5}), 1) == std::vector<std::string>{"a"});
  CHECK(top_k(dist({"a", "b", "c"}, {0.2, 0.4, 0.4}), 5) == std::vector<std::string>{"b", "c", "a"});
  CHECK(in_top_k(d, "b", 2));
  CHECK_FALSE(in_top_k(d, "c", 2));
  CHECK(top_k(d, 0).empty());
}
