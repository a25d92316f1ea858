// SPDX-License-Identifier: Apache-2.0
//
// Document index keyed by recollection traces, ranked queries and budget sweeps.
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "memdecode/classify.hpp"
#include "memdecode/encoder.hpp"
#include "memdecode/eval.hpp"

namespace memdecode {

struct RankedDocument {
  std::string doc_id;
  std::string uri;
  double score = 0.0;
};

/// Stores segment embeddings only, never raw recordings.
class DocumentIndex {
 public:
  struct Entry {
    std::string doc_id;
    std::string uri;
    Matrix<float> embeddings;  // [n x 32]
  };

  DocumentIndex(std::shared_ptr<const EncoderModel> encoder, std::size_t knn_k = 25);

  /// Encodes the first `budget` segments. Throws on a duplicate id, an empty
  /// segment list or a zero budget.
  void index_document(const std::string& doc_id, const std::string& uri,
                      std::span<const Segment> segments, std::size_t budget);
  /// Adds precomputed embeddings.
  void add_embeddings(const std::string& doc_id, const std::string& uri, Matrix<float> embeddings);

  /// Documents by descending soft-vote probability (ties by id), at most
  /// k_results. k is clamped to the number of stored embeddings.
  std::vector<RankedDocument> query(std::span<const Segment> segments, std::size_t budget,
                                    std::size_t k_results) const;
  std::vector<RankedDocument> query_embeddings(const Matrix<float>& embeddings, std::size_t k_results) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t embedding_count() const;
  std::size_t knn_k() const { return knn_k_; }
  const EncoderModel& encoder() const { return *encoder_; }

  /// `<dir>/index.tsv` (doc_id, uri, count) plus `<dir>/embeddings.f32`.
  void save(const std::filesystem::path& dir, const std::string& encoder_path = "") const;
  static DocumentIndex load(const std::filesystem::path& dir, std::shared_ptr<const EncoderModel> encoder);
  /// Encoder path recorded by save(), empty when none was given.
  static std::string saved_encoder_path(const std::filesystem::path& dir);

 private:
  void rebuild();

  std::shared_ptr<const EncoderModel> encoder_;
  std::size_t knn_k_;
  std::vector<Entry> entries_;
  std::shared_ptr<const KnnModel> knn_;
};

enum class SweepAxis { train_concepts, train_segments, index_query_segments };

std::string axis_name(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);

struct SweepPoint {
  std::size_t value = 0;
  TrialsReport report;
};

/// Reruns trials with one budget changed; index_query_segments sets the
/// reference and query budgets to the same value.
std::vector<SweepPoint> budget_sweep(const PreparedDataset& data, const EvalConfig& config, SweepAxis axis,
                                     const std::vector<std::size_t>& values);

std::string ranking_json(const std::vector<RankedDocument>& ranking, int indent = 2);

}  // namespace memdecode
