#pragma once

// Immutable embedding storage and exact inner-product retrieval.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corocchio/errors.hpp"
#include "corocchio/io.hpp"

namespace corocchio {

/// Embedding of a query or passage. Non-empty, every coordinate finite.
class DenseVector {
 public:
  DenseVector() = default;

  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw DomainError("vector dimension must be >= 1");
    for (double v : values_) {
      if (!std::isfinite(v)) throw DomainError("vector coordinate is not finite");
    }
  }

  DenseVector(std::initializer_list<double> values) : DenseVector(std::vector<double>(values)) {}

  static DenseVector from_span(std::span<const double> values) {
    return DenseVector(std::vector<double>(values.begin(), values.end()));
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> values_;
};

inline double inner_product(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError(a.size(), b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double inner_product(const DenseVector& a, const DenseVector& b) {
  return inner_product(a.values(), b.values());
}

enum class StoreKind { passage, query };

enum class EmbeddingFormat { jsonl, binary };

/// Ordered id -> vector map with a shared dimension. Entries keep their
/// insertion order; nothing can be added or removed after construction.
class EmbeddingStore {
 public:
  using Entry = std::pair<std::string, DenseVector>;

  EmbeddingStore() = default;

  EmbeddingStore(StoreKind kind, std::vector<Entry> entries) : kind_(kind) {
    ids_.reserve(entries.size());
    for (auto& [id, vec] : entries) {
      if (id.empty()) throw ConfigError("embedding id must be non-empty");
      if (ids_.empty()) {
        dim_ = vec.dim();
        data_.reserve(entries.size() * dim_);
      } else if (vec.dim() != dim_) {
        throw DimensionError(dim_, vec.dim());
      }
      if (!index_.emplace(id, ids_.size()).second) {
        throw ConfigError("duplicate embedding id '" + id + "'");
      }
      ids_.push_back(std::move(id));
      data_.insert(data_.end(), vec.values().begin(), vec.values().end());
    }
  }

  StoreKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dim_, dim_);
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& id) const { return index_.contains(id); }

  /// Throws MissingEmbeddingError for unknown ids.
  std::span<const double> at(const std::string& id) const {
    auto idx = find(id);
    if (!idx) throw MissingEmbeddingError(id);
    return row(*idx);
  }

  DenseVector vector(const std::string& id) const { return DenseVector::from_span(at(id)); }

  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.emplace_back(ids_[i], DenseVector::from_span(row(i)));
    return out;
  }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.kind_ == b.kind_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
  }

 private:
  StoreKind kind_ = StoreKind::passage;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ScoredId {
  std::string id;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Result list for one query: score descending, ties by ascending id.
struct Ranking {
  std::string query_id;
  std::vector<ScoredId> items;
  std::size_t depth = 0;

  friend bool operator==(const Ranking&, const Ranking&) = default;
};

/// Total order used by every ranking in the library.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

/// Exact top-k by inner product over the whole store.
inline Ranking top_k(const EmbeddingStore& store, std::span<const double> query, std::size_t k,
                     const std::unordered_set<std::string>& exclude = {},
                     std::string query_id = {}) {
  if (k == 0) throw DomainError("top_k requires k >= 1");
  if (!store.empty() && query.size() != store.dim()) throw DimensionError(store.dim(), query.size());

  std::vector<std::size_t> candidates;
  std::vector<double> scores(store.size());
  candidates.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!exclude.empty() && exclude.contains(store.id(i))) continue;
    scores[i] = inner_product(store.row(i), query);
    candidates.push_back(i);
  }
  auto before = [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], store.id(a), scores[b], store.id(b));
  };
  std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), before);

  Ranking out;
  out.query_id = std::move(query_id);
  out.depth = k;
  out.items.reserve(take);
  for (std::size_t r = 0; r < take; ++r) {
    out.items.push_back({store.id(candidates[r]), scores[candidates[r]]});
  }
  return out;
}

inline Ranking top_k(const EmbeddingStore& store, const DenseVector& query, std::size_t k,
                     const std::unordered_set<std::string>& exclude = {},
                     std::string query_id = {}) {
  return top_k(store, query.values(), k, exclude, std::move(query_id));
}

/// Ids of the k logged queries closest to `query` by inner product. k is
/// truncated to the store size.
inline std::vector<std::string> knn_queries(const EmbeddingStore& query_store,
                                            std::span<const double> query, std::size_t k) {
  if (query_store.kind() != StoreKind::query) throw ConfigError("knn_queries needs a query store");
  if (query_store.empty()) throw EmptyStoreError("query store is empty");
  Ranking r = top_k(query_store, query, k);
  std::vector<std::string> ids;
  ids.reserve(r.items.size());
  for (auto& item : r.items) ids.push_back(std::move(item.id));
  return ids;
}

inline std::vector<std::string> knn_queries(const EmbeddingStore& query_store,
                                            const DenseVector& query, std::size_t k) {
  return knn_queries(query_store, query.values(), k);
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

inline EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? EmbeddingFormat::binary : EmbeddingFormat::jsonl;
}

namespace detail {

inline EmbeddingStore finish_ingest(StoreKind kind, std::vector<EmbeddingStore::Entry> entries,
                                    std::size_t dim) {
  if (entries.empty()) throw IngestError(0, "no records; dimension cannot be derived");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].second.dim() != dim) {
      throw IngestError(i + 1, "dimension " + std::to_string(entries[i].second.dim()) +
                                   " differs from " + std::to_string(dim));
    }
    if (!seen.insert(entries[i].first).second) {
      throw IngestError(i + 1, "duplicate id '" + entries[i].first + "'");
    }
  }
  return EmbeddingStore(kind, std::move(entries));
}

template <class T>
T read_le(std::istream& in, std::size_t record) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) {
    throw IngestError(record, "unexpected end of file");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return static_cast<T>(v);
}

template <class T>
void write_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  auto v = static_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

}  // namespace detail

inline EmbeddingStore read_embeddings_jsonl(std::istream& in, StoreKind kind) {
  std::vector<EmbeddingStore::Entry> entries;
  std::size_t dim = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t record = entries.size() + 1;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(record, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vec") ||
        !j["vec"].is_array()) {
      throw IngestError(record, "expected {\"id\": string, \"vec\": [numbers]}");
    }
    std::vector<double> values;
    values.reserve(j["vec"].size());
    for (const auto& v : j["vec"]) {
      if (!v.is_number()) throw IngestError(record, "non-numeric coordinate");
      values.push_back(v.get<double>());
    }
    if (entries.empty()) dim = values.size();
    if (values.size() != dim) {
      throw IngestError(record, "dimension " + std::to_string(values.size()) + " differs from " +
                                    std::to_string(dim));
    }
    try {
      entries.emplace_back(j["id"].get<std::string>(), DenseVector(std::move(values)));
    } catch (const DomainError& e) {
      throw IngestError(record, e.what());
    }
  }
  return detail::finish_ingest(kind, std::move(entries), dim);
}

inline EmbeddingStore read_embeddings_binary(std::istream& in, StoreKind kind) {
  char magic[4];
  if (!in.read(magic, 4)) throw IngestError(0, "no records; dimension cannot be derived");
  if (std::memcmp(magic, "DVEC", 4) != 0) throw IngestError(0, "bad magic, expected DVEC");
  auto dim = detail::read_le<std::uint32_t>(in, 0);
  auto count = detail::read_le<std::uint64_t>(in, 0);
  if (dim == 0) throw IngestError(0, "header declares dimension 0");
  std::vector<EmbeddingStore::Entry> entries;
  entries.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t r = 0; r < count; ++r) {
    std::size_t record = static_cast<std::size_t>(r) + 1;
    auto len = detail::read_le<std::uint16_t>(in, record);
    std::string id(len, '\0');
    if (len > 0 && !in.read(id.data(), len)) throw IngestError(record, "truncated id");
    std::vector<double> values(dim);
    for (auto& v : values) {
      auto bits = detail::read_le<std::uint32_t>(in, record);
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (id.empty()) throw IngestError(record, "empty id");
    try {
      entries.emplace_back(std::move(id), DenseVector(std::move(values)));
    } catch (const DomainError& e) {
      throw IngestError(record, e.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IngestError(0, "trailing bytes after declared record count");
  }
  return detail::finish_ingest(kind, std::move(entries), dim);
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path, EmbeddingFormat format,
                                      StoreKind kind = StoreKind::passage) {
  auto in = open_input(path, format == EmbeddingFormat::binary);
  return format == EmbeddingFormat::binary ? read_embeddings_binary(in, kind)
                                           : read_embeddings_jsonl(in, kind);
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path,
                                      StoreKind kind = StoreKind::passage) {
  return load_embeddings(path, format_from_path(path), kind);
}

inline void write_embeddings_jsonl(std::ostream& out, const EmbeddingStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    nlohmann::ordered_json j;
    j["id"] = store.id(i);
    j["vec"] = std::vector<double>(store.row(i).begin(), store.row(i).end());
    out << j.dump() << '\n';
  }
}

/// Coordinates are narrowed to f32 on disk.
inline void write_embeddings_binary(std::ostream& out, const EmbeddingStore& store) {
  out.write("DVEC", 4);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  detail::write_le<std::uint64_t>(out, store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& id = store.id(i);
    if (id.size() > 0xffff) throw ConfigError("id longer than 65535 bytes: " + id.substr(0, 32));
    detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double v : store.row(i)) {
      detail::write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store,
                            EmbeddingFormat format) {
  bool binary = format == EmbeddingFormat::binary;
  write_file_atomic(
      path,
      [&](std::ofstream& out) {
        binary ? write_embeddings_binary(out, store) : write_embeddings_jsonl(out, store);
      },
      binary);
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
  save_embeddings(path, store, format_from_path(path));
}

}  // namespace corocchio
