// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "memdecode/common.hpp"

namespace memdecode {

/// Average path length of an unsuccessful BST search over n points,
/// c(n) = 2 H(n-1) - 2 (n-1) / n with H the harmonic number.
double iforest_path_norm(std::size_t n);

/// Isolation forest anomaly scorer.
///
/// Each tree's subsample is chosen by per-point keys hashed from the point's
/// coordinates, and split draws depend only on the set of points reaching a
/// node. Scores are therefore equivariant under permutation of the input rows.
class IsolationForest {
 public:
  struct Options {
    std::size_t n_trees = 100;
    std::size_t subsample = 256;
    std::uint64_t seed = 0;
  };

  IsolationForest() = default;
  IsolationForest(const Matrix<double>& points, const Options& options);

  /// s(x) = 2^(-E[h(x)] / c(psi)), in (0, 1); higher is more anomalous.
  double score(std::span<const double> x) const;
  std::vector<double> score_all(const Matrix<double>& points) const;

  std::size_t subsample_size() const { return psi_; }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
    std::uint32_t size = 0;
  };
  using Tree = std::vector<Node>;

  double path_length(const Tree& tree, std::span<const double> x) const;

  std::vector<Tree> trees_;
  std::size_t psi_ = 0;
  std::size_t dim_ = 0;
};

/// Scores every row of `features` with a forest fitted on them.
std::vector<double> iforest_fit_score(const Matrix<double>& features, std::size_t n_trees = 100,
                                      std::size_t subsample = 256, std::uint64_t seed = 0);

}  // namespace memdecode
