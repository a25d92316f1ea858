// SPDX-License-Identifier: Apache-2.0
//
// k-nearest-neighbour segment classifier and the soft-voting trace classifier.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "memdecode/common.hpp"

namespace memdecode {

/// Probabilities over an ordered (sorted) list of concept ids.
struct ConceptDistribution {
  std::vector<std::string> concepts;
  std::vector<double> probs;

  double operator[](const std::string& concept_id) const;
  std::size_t argmax() const;  // lowest index on ties
};

class KnnModel {
 public:
  std::size_t k() const { return k_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return refs_.cols(); }
  bool normalized() const { return normalize_; }
  /// Sorted distinct labels; distributions use this order.
  const std::vector<std::string>& classes() const { return classes_; }
  const Matrix<float>& references() const { return refs_; }
  /// Class index of each reference.
  const std::vector<std::size_t>& label_index() const { return labels_; }

 private:
  friend KnnModel knn_fit(const Matrix<float>&, std::span<const std::string>, std::size_t, bool,
                          bool);
  std::size_t k_ = 25;
  bool normalize_ = false;
  Matrix<float> refs_;
  std::vector<std::size_t> labels_;
  std::vector<std::string> classes_;
};

/// Stores the references. With normalize, rows (and later queries) are scaled
/// to unit norm. Throws on n < k ("insufficient reference points") and, unless
/// allow_single_class, when fewer than two labels are present.
KnnModel knn_fit(const Matrix<float>& embeddings, std::span<const std::string> labels,
                 std::size_t k = 25, bool normalize = false, bool allow_single_class = false);

/// Vote fractions of the k nearest references (Euclidean; ties by insertion order).
ConceptDistribution knn_predict_proba(const KnnModel& model, std::span<const float> embedding);
/// One distribution per row.
std::vector<ConceptDistribution> knn_predict_proba(const KnnModel& model, const Matrix<float>& queries);

/// Sum of the segment distributions, renormalized. All inputs must share one
/// concept list. Throws on an empty list.
ConceptDistribution classify_trace(std::span<const ConceptDistribution> segments);

/// The k most probable concepts, ties broken by concept id.
std::vector<std::string> top_k(const ConceptDistribution& dist, std::size_t k);

/// True when `concept_id` is among the first k of top_k().
bool in_top_k(const ConceptDistribution& dist, const std::string& concept_id, std::size_t k);

}  // namespace memdecode
