// SPDX-License-Identifier: Apache-2.0

#include "memdecode/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memdecode/kernels/kernels.hpp"

namespace memdecode {

namespace {

void normalize_row(std::span<float> v) {
  double ss = 0.0;
  for (float x : v) ss += static_cast<double>(x) * x;
  if (ss <= 0.0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (float& x : v) x = static_cast<float>(x * inv);
}

}  // namespace

double ConceptDistribution::operator[](const std::string& concept_id) const {
  const auto it = std::lower_bound(concepts.begin(), concepts.end(), concept_id);
  if (it == concepts.end() || *it != concept_id) return 0.0;
  return probs[static_cast<std::size_t>(it - concepts.begin())];
}

std::size_t ConceptDistribution::argmax() const {
  if (probs.empty()) throw Error("argmax of an empty distribution");
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

KnnModel knn_fit(const Matrix<float>& embeddings, std::span<const std::string> labels, std::size_t k,
                 bool normalize, bool allow_single_class) {
  if (k == 0) throw Error("knn: k must be positive");
  if (labels.size() != embeddings.rows()) throw Error("knn: one label per embedding required");
  if (embeddings.rows() < k) {
    throw Error("insufficient reference points: " + std::to_string(embeddings.rows()) + " < k = " +
                std::to_string(k));
  }
  KnnModel m;
  m.k_ = k;
  m.normalize_ = normalize;
  m.refs_ = embeddings;
  if (normalize) {
    for (std::size_t r = 0; r < m.refs_.rows(); ++r) normalize_row(m.refs_.row(r));
  }
  m.classes_.assign(labels.begin(), labels.end());
  std::sort(m.classes_.begin(), m.classes_.end());
  m.classes_.erase(std::unique(m.classes_.begin(), m.classes_.end()), m.classes_.end());
  if (m.classes_.size() < 2 && !allow_single_class) {
    throw Error("knn: need at least two distinct labels");
  }
  m.labels_.reserve(labels.size());
  for (const auto& l : labels) {
    m.labels_.push_back(static_cast<std::size_t>(
        std::lower_bound(m.classes_.begin(), m.classes_.end(), l) - m.classes_.begin()));
  }
  return m;
}

ConceptDistribution knn_predict_proba(const KnnModel& model, std::span<const float> embedding) {
  if (embedding.size() != model.dim()) {
    throw Error("knn: query has " + std::to_string(embedding.size()) + " dims, model has " +
                std::to_string(model.dim()));
  }
  std::vector<float> q(embedding.begin(), embedding.end());
  if (model.normalized()) normalize_row(q);
  const std::size_t n = model.size();
  std::vector<double> dist(n);
  kernels::sq_dist(q.data(), model.references().data(), n, model.dim(), dist.data());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto closer = [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  };
  const std::size_t k = model.k();
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), closer);

  ConceptDistribution out;
  out.concepts = model.classes();
  out.probs.assign(out.concepts.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) out.probs[model.label_index()[order[i]]] += 1.0;
  for (double& p : out.probs) p /= static_cast<double>(k);
  return out;
}

std::vector<ConceptDistribution> knn_predict_proba(const KnnModel& model, const Matrix<float>& queries) {
  std::vector<ConceptDistribution> out;
  out.reserve(queries.rows());
  for (std::size_t r = 0; r < queries.rows(); ++r) out.push_back(knn_predict_proba(model, queries.row(r)));
  return out;
}

ConceptDistribution classify_trace(std::span<const ConceptDistribution> segments) {
  if (segments.empty()) throw Error("classify_trace: no segments");
  ConceptDistribution out;
  out.concepts = segments.front().concepts;
  out.probs.assign(out.concepts.size(), 0.0);
  for (const auto& s : segments) {
    if (s.concepts != out.concepts) throw Error("classify_trace: segment distributions disagree on concepts");
    for (std::size_t i = 0; i < s.probs.size(); ++i) out.probs[i] += s.probs[i];
  }
  const double total = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  if (total > 0.0) {
    for (double& p : out.probs) p /= total;
  }
  return out;
}

std::vector<std::string> top_k(const ConceptDistribution& dist, std::size_t k) {
  std::vector<std::size_t> order(dist.concepts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist.probs[a] != dist.probs[b]) return dist.probs[a] > dist.probs[b];
    return dist.concepts[a] < dist.concepts[b];
  });
  order.resize(std::min(k, order.size()));
  std::vector<std::string> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(dist.concepts[i]);
  return out;
}

bool in_top_k(const ConceptDistribution& dist, const std::string& concept_id, std::size_t k) {
  const auto top = top_k(dist, k);
  return std::find(top.begin(), top.end(), concept_id) != top.end();
}

}  // namespace memdecode
