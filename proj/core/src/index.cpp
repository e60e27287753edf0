#include "skillmatch/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"

namespace skillmatch {

namespace {

constexpr std::string_view kIndexMagic = "SKMIDX01";
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

std::string_view to_string(IndexKind kind) { return kind == IndexKind::kLabels ? "labels" : "sentences"; }

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument(fmt::format("cosine: dimension mismatch ({} vs {})", u.size(), v.size()));
  }
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(uv / std::sqrt(uu * vv), -1.0, 1.0);
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) { return cosine(u.values(), v.values()); }

double dot(std::span<const float> row, std::span<const double> query) {
  double sum = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) sum += static_cast<double>(row[i]) * query[i];
  return sum;
}

VectorIndex::VectorIndex(IndexKind kind, std::size_t dimension) : kind_(kind), dimension_(dimension) {
  if (dimension_ == 0) throw std::invalid_argument("index dimension must be positive");
}

void VectorIndex::add(std::string key, std::string skill_id, const EmbeddingVector& vector) {
  if (vector.dimension() != dimension_) {
    throw FormatError(fmt::format("vector for '{}' has dimension {}, index expects {}", key, vector.dimension(),
                                  dimension_));
  }
  if (!by_key_.emplace(key, keys_.size()).second) throw FormatError(fmt::format("duplicate index key '{}'", key));
  for (double v : vector.values()) data_.push_back(static_cast<float>(v));
  keys_.push_back(std::move(key));
  skill_ids_.push_back(std::move(skill_id));
}

std::optional<std::size_t> VectorIndex::find(std::string_view key) const {
  const auto it = by_key_.find(std::string(key));
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> VectorIndex::scores(std::span<const double> query) const {
  if (query.size() != dimension_) {
    throw std::invalid_argument(fmt::format("query dimension {} != index dimension {}", query.size(), dimension_));
  }
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(row(i), query);
  return out;
}

std::vector<ScoredEntry> VectorIndex::top_k(std::span<const double> query, std::size_t k) const {
  const std::vector<double> all = scores(query);
  k = std::min(k, all.size());
  if (k == 0) return {};
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  const auto better = [&](std::size_t a, std::size_t b) {
    if (all[a] != all[b]) return all[a] > all[b];
    return keys_[a] < keys_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<ScoredEntry> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) out.push_back({keys_[order[r]], skill_ids_[order[r]], all[order[r]]});
  return out;
}

void VectorIndex::save(const std::string& path) const {
  detail::ByteWriter payload;
  payload.str(metadata_);
  for (float v : data_) payload.f32(v);
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    payload.str(keys_[i]);
    payload.str(skill_ids_[i]);
  }
  detail::ByteWriter file;
  file.raw(kIndexMagic);
  file.u32(kIndexVersion);
  file.u32(static_cast<std::uint32_t>(dimension_));
  file.u8(kind_ == IndexKind::kLabels ? 0 : 1);
  file.u64(keys_.size());
  file.u64(util::fnv1a64(payload.bytes()));
  file.raw(payload.bytes());
  util::write_file_atomic(path, file.bytes());
}

VectorIndex VectorIndex::load(const std::string& path) {
  const std::string bytes = util::read_file(path);
  detail::ByteReader in(bytes, path);
  if (in.raw(kIndexMagic.size()) != kIndexMagic) throw FormatError(path + ": not a skillmatch index file");
  if (const auto version = in.u32(); version != kIndexVersion) {
    throw FormatError(fmt::format("{}: unsupported index version {}", path, version));
  }
  const std::uint32_t dimension = in.u32();
  const std::uint8_t kind = in.u8();
  const std::uint64_t count = in.u64();
  const std::uint64_t checksum = in.u64();
  if (kind > 1) throw FormatError(path + ": bad index kind");
  if (util::fnv1a64(std::string_view(bytes).substr(in.position())) != checksum) {
    throw FormatError(path + ": checksum mismatch");
  }
  VectorIndex index(kind == 0 ? IndexKind::kLabels : IndexKind::kSentences, dimension);
  index.metadata_ = in.str();
  if (in.remaining() / 4 < count * dimension) throw FormatError(path + ": truncated vectors");
  index.data_.resize(count * dimension);
  for (float& v : index.data_) v = in.f32();
  index.keys_.reserve(count);
  index.skill_ids_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string key = in.str();
    if (!index.by_key_.emplace(key, i).second) throw FormatError(path + ": duplicate key " + key);
    index.keys_.push_back(std::move(key));
    index.skill_ids_.push_back(in.str());
  }
  if (in.remaining() != 0) throw FormatError(path + ": trailing bytes");
  return index;
}

std::vector<ScoredEntry> top_k(const VectorIndex& index, const EmbeddingVector& query, std::size_t k) {
  return index.top_k(query.values(), k);
}

VectorIndex build_index(std::span<const IndexItem> items, EmbeddingProvider& provider, IndexKind kind,
                        EmbedKind embed_kind, std::size_t jobs) {
  if (items.empty()) throw FormatError("empty index");
  {
    std::unordered_map<std::string_view, std::size_t> seen;
    for (const auto& item : items) {
      if (!seen.emplace(item.key, 0).second) throw FormatError(fmt::format("duplicate index key '{}'", item.key));
    }
  }
  const std::size_t dimension = provider.dimension();
  std::vector<EmbeddingVector> vectors(items.size());
  util::parallel_for(items.size(), jobs, [&](std::size_t i) {
    vectors[i] = provider.embed_text(items[i].text, embed_kind);
    if (vectors[i].dimension() != dimension) {
      throw ProviderError(fmt::format("embedding for '{}' has dimension {}, expected {}", items[i].key,
                                      vectors[i].dimension(), dimension));
    }
  });
  VectorIndex index(kind, dimension);
  for (std::size_t i = 0; i < items.size(); ++i) index.add(items[i].key, items[i].skill_id, vectors[i]);
  spdlog::info("built {} index with {} entries (d={})", to_string(kind), index.size(), dimension);
  return index;
}

}  // namespace skillmatch
