// SPDX-License-Identifier: Apache-2.0

#include "memdecode/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace memdecode {

namespace fs = std::filesystem;

namespace {

constexpr const char* kIndexHeader = "memdecode-index 1";

std::vector<const Matrix<float>*> earliest(std::span<const Segment> segments, std::size_t budget) {
  std::vector<const Segment*> sorted;
  sorted.reserve(segments.size());
  for (const auto& s : segments) sorted.push_back(&s);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Segment* a, const Segment* b) { return a->offset < b->offset; });
  sorted.resize(std::min(budget, sorted.size()));
  std::vector<const Matrix<float>*> out;
  for (const Segment* s : sorted) out.push_back(&s->data);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  return out;
}

}  // namespace

DocumentIndex::DocumentIndex(std::shared_ptr<const EncoderModel> encoder, std::size_t knn_k)
    : encoder_(std::move(encoder)), knn_k_(knn_k) {
  if (!encoder_) throw Error("document index needs an encoder");
  if (knn_k_ == 0) throw Error("document index: k must be positive");
}

void DocumentIndex::index_document(const std::string& doc_id, const std::string& uri,
                                   std::span<const Segment> segments, std::size_t budget) {
  if (budget == 0) throw Error("index budget must be at least 1");
  if (segments.empty()) throw Error("document " + doc_id + " has no segments to index");
  add_embeddings(doc_id, uri, encode_batch(*encoder_, earliest(segments, budget)));
}

void DocumentIndex::add_embeddings(const std::string& doc_id, const std::string& uri, Matrix<float> embeddings) {
  if (doc_id.empty()) throw Error("empty document id");
  if (doc_id.find_first_of("\t\n") != std::string::npos || uri.find_first_of("\t\n") != std::string::npos) {
    throw Error("document id and uri may not contain tabs or newlines");
  }
  for (const auto& e : entries_) {
    if (e.doc_id == doc_id) throw Error("document already indexed: " + doc_id);
  }
  if (embeddings.rows() == 0) throw Error("document " + doc_id + " has no embeddings");
  if (embeddings.cols() != kEmbeddingDim) throw Error("document embeddings must have 32 columns");
  const auto pos = std::lower_bound(entries_.begin(), entries_.end(), doc_id,
                                    [](const Entry& e, const std::string& id) { return e.doc_id < id; });
  entries_.insert(pos, Entry{doc_id, uri, std::move(embeddings)});
  rebuild();
}

void DocumentIndex::rebuild() {
  Matrix<float> all(embedding_count(), kEmbeddingDim);
  std::vector<std::string> labels;
  labels.reserve(all.rows());
  std::size_t row = 0;
  for (const auto& e : entries_) {
    std::copy(e.embeddings.values().begin(), e.embeddings.values().end(), all.data() + row * kEmbeddingDim);
    row += e.embeddings.rows();
    labels.insert(labels.end(), e.embeddings.rows(), e.doc_id);
  }
  knn_ = std::make_shared<const KnnModel>(knn_fit(all, labels, std::min(knn_k_, all.rows()), false, true));
}

std::size_t DocumentIndex::embedding_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.embeddings.rows();
  return n;
}

std::vector<RankedDocument> DocumentIndex::query(std::span<const Segment> segments, std::size_t budget,
                                                 std::size_t k_results) const {
  if (budget == 0) throw Error("query budget must be at least 1");
  if (segments.empty()) throw Error("query has no segments");
  return query_embeddings(encode_batch(*encoder_, earliest(segments, budget)), k_results);
}

std::vector<RankedDocument> DocumentIndex::query_embeddings(const Matrix<float>& embeddings,
                                                            std::size_t k_results) const {
  if (entries_.empty()) throw Error("query against an empty index");
  const ConceptDistribution dist = classify_trace(knn_predict_proba(*knn_, embeddings));
  std::vector<RankedDocument> out;
  for (const auto& id : top_k(dist, k_results)) {
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                     [](const Entry& e, const std::string& x) { return e.doc_id < x; });
    out.push_back({id, it->uri, dist[id]});
  }
  return out;
}

void DocumentIndex::save(const fs::path& dir, const std::string& encoder_path) const {
  fs::create_directories(dir);
  std::ofstream meta(dir / "index.tsv");
  if (!meta) throw Error("cannot write " + (dir / "index.tsv").string());
  meta << kIndexHeader << "\tk=" << knn_k_ << "\tencoder=" << encoder_path << '\n';
  for (const auto& e : entries_) meta << e.doc_id << '\t' << e.uri << '\t' << e.embeddings.rows() << '\n';
  std::ofstream bin(dir / "embeddings.f32", std::ios::binary);
  if (!bin) throw Error("cannot write " + (dir / "embeddings.f32").string());
  for (const auto& e : entries_) nn::write_f32_le(bin, e.embeddings.values());
}

std::string DocumentIndex::saved_encoder_path(const fs::path& dir) {
  std::ifstream meta(dir / "index.tsv");
  std::string line;
  if (!meta || !std::getline(meta, line)) throw Error("cannot read " + (dir / "index.tsv").string());
  for (const auto& cell : split_tabs(line)) {
    if (cell.rfind("encoder=", 0) == 0) return cell.substr(8);
  }
  return "";
}

DocumentIndex DocumentIndex::load(const fs::path& dir, std::shared_ptr<const EncoderModel> encoder) {
  const fs::path meta_path = dir / "index.tsv";
  std::ifstream meta(meta_path);
  if (!meta) throw Error("cannot read " + meta_path.string());
  std::string line;
  if (!std::getline(meta, line)) throw Error(meta_path.string() + ": empty index file");
  const auto header = split_tabs(line);
  if (header.empty() || header[0] != kIndexHeader) throw Error(meta_path.string() + ": not an index file");
  std::size_t k = 25;
  for (const auto& cell : header) {
    if (cell.rfind("k=", 0) == 0) k = std::stoul(cell.substr(2));
  }
  DocumentIndex index(std::move(encoder), k);
  std::ifstream bin(dir / "embeddings.f32", std::ios::binary);
  if (!bin) throw Error("cannot read " + (dir / "embeddings.f32").string());
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 3) throw Error(meta_path.string() + ": malformed entry '" + line + "'");
    const std::size_t count = std::stoul(cells[2]);
    Matrix<float> e(count, kEmbeddingDim);
    e.values() = nn::read_f32_le(bin, count * kEmbeddingDim);
    index.add_embeddings(cells[0], cells[1], std::move(e));
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw Error("embedding file longer than the index lists");
  return index;
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::train_concepts: return "train_concepts";
    case SweepAxis::train_segments: return "train_segments";
    case SweepAxis::index_query_segments: return "index_query_segments";
  }
  return "unknown";
}

SweepAxis parse_axis(const std::string& name) {
  for (SweepAxis a : {SweepAxis::train_concepts, SweepAxis::train_segments, SweepAxis::index_query_segments}) {
    if (axis_name(a) == name) return a;
  }
  throw Error("unknown sweep axis '" + name + "'");
}

std::vector<SweepPoint> budget_sweep(const PreparedDataset& data, const EvalConfig& config, SweepAxis axis,
                                     const std::vector<std::size_t>& values) {
  if (values.empty()) throw Error("sweep needs at least one value");
  std::vector<SweepPoint> out;
  for (std::size_t v : values) {
    if (v == 0) throw Error("sweep values must be positive");
    EvalConfig cfg = config;
    switch (axis) {
      case SweepAxis::train_concepts:
        if (v > data.concepts().size() - config.test_size) {
          throw Error("sweep: only " + std::to_string(data.concepts().size() - config.test_size) +
                      " training concepts available");
        }
        cfg.train_concepts = v;
        break;
      case SweepAxis::train_segments: cfg.train_segments = v; break;
      case SweepAxis::index_query_segments:
        cfg.reference_budget = v;
        cfg.query_budget = v;
        cfg.knn_k = std::min(cfg.knn_k, v * config.test_size);
        break;
    }
    out.push_back({v, run_trials(data, cfg)});
  }
  return out;
}

std::string ranking_json(const std::vector<RankedDocument>& ranking, int indent) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : ranking) j.push_back({{"doc_id", r.doc_id}, {"uri", r.uri}, {"score", r.score}});
  return j.dump(indent);
}

}  // namespace memdecode
