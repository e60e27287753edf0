#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "skillmatch/providers.hpp"

namespace skillmatch {

enum class IndexKind { kLabels, kSentences };

std::string_view to_string(IndexKind kind);

// Cosine similarity; throws std::invalid_argument on a dimension mismatch.
double cosine(std::span<const double> u, std::span<const double> v);
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

struct IndexItem {
  std::string key;
  std::string text;
  std::string skill_id;
};

struct ScoredEntry {
  std::string key;
  std::string skill_id;
  double score = 0.0;

  bool operator==(const ScoredEntry&) const = default;
};

// Flat, exact cosine index. Vectors are stored as contiguous float32 rows.
class VectorIndex {
 public:
  VectorIndex(IndexKind kind, std::size_t dimension);

  IndexKind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }

  void add(std::string key, std::string skill_id, const EmbeddingVector& vector);

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dimension_, dimension_}; }
  const std::string& key(std::size_t i) const { return keys_[i]; }
  const std::string& skill_id(std::size_t i) const { return skill_ids_[i]; }
  std::optional<std::size_t> find(std::string_view key) const;

  // Exact top-k by cosine descending, ties broken by ascending key.
  std::vector<ScoredEntry> top_k(std::span<const double> query, std::size_t k) const;

  // Scores of every entry against `query`, in entry order.
  std::vector<double> scores(std::span<const double> query) const;

  // Free-form JSON run metadata persisted with the index.
  const std::string& metadata() const noexcept { return metadata_; }
  void set_metadata(std::string metadata) { metadata_ = std::move(metadata); }

  void save(const std::string& path) const;
  static VectorIndex load(const std::string& path);

 private:
  IndexKind kind_;
  std::size_t dimension_;
  std::vector<float> data_;
  std::vector<std::string> keys_;
  std::vector<std::string> skill_ids_;
  std::unordered_map<std::string, std::size_t> by_key_;
  std::string metadata_;
};

std::vector<ScoredEntry> top_k(const VectorIndex& index, const EmbeddingVector& query, std::size_t k);

VectorIndex build_index(std::span<const IndexItem> items, EmbeddingProvider& provider, IndexKind kind,
                        EmbedKind embed_kind = EmbedKind::kPassage, std::size_t jobs = 1);

double dot(std::span<const float> row, std::span<const double> query);

}  // namespace skillmatch
