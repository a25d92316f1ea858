// SPDX-License-Identifier: Apache-2.0

#include "memdecode/iforest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "memdecode/rng.hpp"

namespace memdecode {

double iforest_path_norm(std::size_t n) {
  if (n <= 1) return 0.0;
  double harmonic = 0.0;
  for (std::size_t i = 1; i <= n - 1; ++i) harmonic += 1.0 / static_cast<double>(i);
  const double nd = static_cast<double>(n);
  return 2.0 * harmonic - 2.0 * (nd - 1.0) / nd;
}

namespace {

std::uint64_t hash_row(std::span<const double> row) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (double v : row) {
    if (v == 0.0) v = 0.0;  // fold -0.0
    h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

struct Builder {
  const Matrix<double>& pts;
  Rng& rng;
  std::size_t height_limit;

  template <typename Tree>
  std::uint32_t build(Tree& tree, std::vector<std::size_t>& idx, std::size_t begin,
                      std::size_t end, std::size_t depth) {
    const auto node_id = static_cast<std::uint32_t>(tree.size());
    tree.emplace_back();
    tree[node_id].size = static_cast<std::uint32_t>(end - begin);
    if (end - begin <= 1 || depth >= height_limit) return node_id;

    std::vector<int> candidates;
    std::vector<std::pair<double, double>> range(pts.cols());
    for (std::size_t f = 0; f < pts.cols(); ++f) {
      double lo = pts(idx[begin], f), hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        lo = std::min(lo, pts(idx[i], f));
        hi = std::max(hi, pts(idx[i], f));
      }
      range[f] = {lo, hi};
      if (hi > lo) candidates.push_back(static_cast<int>(f));
    }
    if (candidates.empty()) return node_id;

    const int f = candidates[rng.below(candidates.size())];
    const auto [lo, hi] = range[static_cast<std::size_t>(f)];
    double split = rng.uniform(lo, hi);
    if (split <= lo) split = std::nextafter(lo, hi);

    const auto mid_it = std::partition(
        idx.begin() + static_cast<std::ptrdiff_t>(begin), idx.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::size_t i) { return pts(i, static_cast<std::size_t>(f)) < split; });
    const auto mid = static_cast<std::size_t>(mid_it - idx.begin());

    const std::uint32_t left = build(tree, idx, begin, mid, depth + 1);
    const std::uint32_t right = build(tree, idx, mid, end, depth + 1);
    tree[node_id].feature = f;
    tree[node_id].split = split;
    tree[node_id].left = left;
    tree[node_id].right = right;
    return node_id;
  }
};

}  // namespace

IsolationForest::IsolationForest(const Matrix<double>& points, const Options& options) {
  const std::size_t n = points.rows();
  if (n == 0) throw Error("isolation forest needs at least one point");
  if (options.n_trees == 0 || options.subsample == 0) {
    throw Error("isolation forest needs positive tree count and subsample size");
  }
  dim_ = points.cols();
  psi_ = std::min(options.subsample, n);
  const auto height_limit =
      static_cast<std::size_t>(std::ceil(std::log2(std::max<double>(2.0, static_cast<double>(psi_)))));

  std::vector<std::uint64_t> content(n);
  for (std::size_t i = 0; i < n; ++i) content[i] = hash_row(points.row(i));

  trees_.reserve(options.n_trees);
  std::vector<std::size_t> order(n);
  std::vector<std::uint64_t> key(n);
  for (std::size_t t = 0; t < options.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(options.seed, t);
    for (std::size_t i = 0; i < n; ++i) key[i] = mix64(content[i] ^ tree_seed);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (key[a] != key[b]) return key[a] < key[b];
      const auto ra = points.row(a), rb = points.row(b);
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    std::vector<std::size_t> sample(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(psi_));

    Rng rng(derive_seed(tree_seed, 0x5eed));
    Builder builder{points, rng, height_limit};
    Tree tree;
    builder.build(tree, sample, 0, sample.size(), 0);
    trees_.push_back(std::move(tree));
  }
}

double IsolationForest::path_length(const Tree& tree, std::span<const double> x) const {
  std::size_t node = 0;
  double depth = 0.0;
  while (tree[node].feature >= 0) {
    node = x[static_cast<std::size_t>(tree[node].feature)] < tree[node].split ? tree[node].left
                                                                                : tree[node].right;
    depth += 1.0;
  }
  return depth + iforest_path_norm(tree[node].size);
}

double IsolationForest::score(std::span<const double> x) const {
  if (x.size() != dim_) throw Error("isolation forest: feature dimension mismatch");
  double total = 0.0;
  for (const auto& tree : trees_) total += path_length(tree, x);
  const double mean = total / static_cast<double>(trees_.size());
  const double norm = iforest_path_norm(psi_);
  if (norm <= 0.0) return 0.5;
  return std::exp2(-mean / norm);
}

std::vector<double> IsolationForest::score_all(const Matrix<double>& points) const {
  std::vector<double> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) out[i] = score(points.row(i));
  return out;
}

std::vector<double> iforest_fit_score(const Matrix<double>& features, std::size_t n_trees,
                                      std::size_t subsample, std::uint64_t seed) {
  if (features.rows() < 2) throw Error("isolation forest scoring needs at least 2 vectors");
  IsolationForest forest(features, {n_trees, subsample, seed});
  return forest.score_all(features);
}

}  // namespace memdecode
