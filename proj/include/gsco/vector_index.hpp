#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gsco/error.hpp"

namespace gsco {

// Stored as 32-bit floats; all similarity arithmetic accumulates in 64-bit,
// in index order, so rankings are reproducible bit for bit.
using EmbeddingVector = std::vector<float>;

struct IndexEntry {
  std::string entry_id;
  EmbeddingVector vector;
  std::vector<std::string> meta_labels;
  std::optional<std::string> meta_text;
  std::string modality;
};

struct RetrievedCase {
  std::string entry_id;
  double similarity = 0.0;
  std::vector<std::string> meta_labels;
  std::optional<std::string> meta_text;
  std::string modality;
};

struct RetrievalConfig {
  std::size_t k = 5;
  std::optional<std::string> exclude_id;
};

namespace detail {

// Sum of squares in index order; doubles throughout.
inline double norm_squared(const EmbeddingVector& v) {
  double acc = 0.0;
  for (float x : v) {
    double d = x;
    acc += d * d;
  }
  return acc;
}

inline void check_finite(const EmbeddingVector& v, const std::string& what) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw DegenerateVectorError(what + " contains a non-finite value");
    }
  }
}

inline void check_usable(const EmbeddingVector& v, std::size_t dimension, const std::string& what) {
  if (v.size() != dimension) {
    throw DimensionError(what + " has dimension " + std::to_string(v.size()) + ", expected " +
                         std::to_string(dimension));
  }
  check_finite(v, what);
  if (!(norm_squared(v) > 0.0)) {
    throw DegenerateVectorError(what + " has zero norm");
  }
}

}  // namespace detail

// A.B / (|A||B|). Dot and both norms accumulate in index order, so the
// result is exactly symmetric and exactly reproducible for given inputs.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: dimensions " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double ai = a[i];
    double bi = b[i];
    dot += ai * bi;
    na += ai * ai;
    nb += bi * bi;
  }
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw DegenerateVectorError("cosine_similarity: zero-norm input");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Immutable embedding database. Entries keep their insertion order; per-entry
// squared norms are cached at build time.
class Index {
 public:
  Index(std::vector<IndexEntry> entries, std::size_t dimension)
      : entries_(std::move(entries)), dimension_(dimension) {
    std::unordered_set<std::string> seen;
    seen.reserve(entries_.size());
    norms_sq_.reserve(entries_.size());
    for (const auto& entry : entries_) {
      if (!seen.insert(entry.entry_id).second) {
        throw DuplicateIdError("duplicate entry_id \"" + entry.entry_id + "\"");
      }
      detail::check_usable(entry.vector, dimension_, "entry \"" + entry.entry_id + "\"");
      norms_sq_.push_back(detail::norm_squared(entry.vector));
    }
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t count() const { return entries_.size(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }
  double cached_norm(std::size_t i) const { return std::sqrt(norms_sq_.at(i)); }
  double cached_norm_squared(std::size_t i) const { return norms_sq_.at(i); }

 private:
  std::vector<IndexEntry> entries_;
  std::vector<double> norms_sq_;
  std::size_t dimension_;
};

inline Index build_index(std::vector<IndexEntry> entries, std::size_t dimension) {
  return Index(std::move(entries), dimension);
}

// Exact linear scan. Eligible entries are ranked by (similarity descending,
// entry_id ascending) and the first min(k, eligible) are returned. Similarity
// values equal cosine_similarity(query, entry.vector) exactly.
inline std::vector<RetrievedCase> query_topk(const Index& index, const EmbeddingVector& query,
                                             const RetrievalConfig& cfg = {}) {
  if (cfg.k < 1) {
    throw ValidationError("retrieval k must be >= 1");
  }
  detail::check_usable(query, index.dimension(), "query");
  const double query_norm = std::sqrt(detail::norm_squared(query));

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(index.count());
  for (std::size_t i = 0; i < index.count(); ++i) {
    const IndexEntry& entry = index.entry(i);
    if (cfg.exclude_id && entry.entry_id == *cfg.exclude_id) continue;
    double dot = 0.0;
    const EmbeddingVector& v = entry.vector;
    for (std::size_t j = 0; j < v.size(); ++j) {
      dot += static_cast<double>(query[j]) * static_cast<double>(v[j]);
    }
    double sim = dot / (query_norm * std::sqrt(index.cached_norm_squared(i)));
    scored.emplace_back(sim, i);
  }
  std::sort(scored.begin(), scored.end(), [&index](const auto& lhs, const auto& rhs) {
    if (lhs.first != rhs.first) return lhs.first > rhs.first;
    return index.entry(lhs.second).entry_id < index.entry(rhs.second).entry_id;
  });

  std::size_t take = std::min(cfg.k, scored.size());
  std::vector<RetrievedCase> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const IndexEntry& entry = index.entry(scored[i].second);
    out.push_back({entry.entry_id, scored[i].first, entry.meta_labels, entry.meta_text,
                   entry.modality});
  }
  return out;
}

// On-disk layout: 8-byte magic "GSCOIDX1", one UTF-8 JSON header line ended
// by '\n', then count*dimension little-endian IEEE-754 floats in entry order.
// The payload carries no timestamps, so identical indexes save identically.
inline constexpr char kIndexMagic[8] = {'G', 'S', 'C', 'O', 'I', 'D', 'X', '1'};

inline void save_index(const Index& index, const std::string& path) {
  nlohmann::json header;
  header["count"] = index.count();
  header["dimension"] = index.dimension();
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& entry : index.entries()) {
    nlohmann::json meta;
    meta["id"] = entry.entry_id;
    meta["labels"] = entry.meta_labels;
    if (entry.meta_text) {
      meta["text"] = *entry.meta_text;
    }
    meta["modality"] = entry.modality;
    entries.push_back(std::move(meta));
  }
  header["entries"] = std::move(entries);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw StorageError("cannot open \"" + path + "\" for writing");
  }
  out.write(kIndexMagic, sizeof(kIndexMagic));
  std::string header_line = header.dump();
  header_line.push_back('\n');
  out.write(header_line.data(), static_cast<std::streamsize>(header_line.size()));
  for (const auto& entry : index.entries()) {
    for (float value : entry.vector) {
      std::uint32_t bits;
      std::memcpy(&bits, &value, sizeof(bits));
      char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                       static_cast<char>((bits >> 16) & 0xFF),
                       static_cast<char>((bits >> 24) & 0xFF)};
      out.write(bytes, 4);
    }
  }
  out.flush();
  if (!out) {
    throw StorageError("write to \"" + path + "\" failed");
  }
}

inline Index load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StorageError("cannot open \"" + path + "\" for reading");
  }
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < sizeof(kIndexMagic) ||
      std::memcmp(blob.data(), kIndexMagic, sizeof(kIndexMagic)) != 0) {
    throw FormatError("bad magic in \"" + path + "\"");
  }
  std::size_t header_end = blob.find('\n', sizeof(kIndexMagic));
  if (header_end == std::string::npos) {
    throw FormatError("missing header line in \"" + path + "\"");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(sizeof(kIndexMagic), header_end - sizeof(kIndexMagic)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("unreadable header in \"" + path + "\": " + e.what());
  }
  if (!header.is_object() || !header.contains("count") || !header.contains("dimension") ||
      !header.contains("entries") || !header["entries"].is_array() ||
      !header["count"].is_number_unsigned() || !header["dimension"].is_number_unsigned()) {
    throw FormatError("incomplete header in \"" + path + "\"");
  }

  std::vector<IndexEntry> entries;
  std::size_t count = 0, dimension = 0;
  try {
    count = header["count"].get<std::size_t>();
    dimension = header["dimension"].get<std::size_t>();
    if (header["entries"].size() != count) {
      throw FormatError("header lists " + std::to_string(header["entries"].size()) +
                        " entries, declared count is " + std::to_string(count));
    }
    const std::size_t payload_offset = header_end + 1;
    // reject impossible sizes before multiplying them
    if (count != 0 && dimension != 0 &&
        (dimension > blob.size() || count > blob.size() / dimension)) {
      throw FormatError("declared size of \"" + path + "\" exceeds the file");
    }
    const std::size_t expected_payload = count * dimension * 4;
    if (blob.size() - payload_offset != expected_payload) {
      throw FormatError("payload of \"" + path + "\" is " +
                        std::to_string(blob.size() - payload_offset) + " bytes, expected " +
                        std::to_string(expected_payload));
    }

    entries.reserve(count);
    const char* payload = blob.data() + payload_offset;
    for (std::size_t i = 0; i < count; ++i) {
      const nlohmann::json& meta = header["entries"][i];
      if (!meta.is_object() || !meta.contains("id")) {
        throw FormatError("entry " + std::to_string(i) + " metadata is malformed");
      }
      IndexEntry entry;
      entry.entry_id = meta["id"].get<std::string>();
      if (meta.contains("labels")) {
        entry.meta_labels = meta["labels"].get<std::vector<std::string>>();
      }
      if (meta.contains("text")) {
        entry.meta_text = meta["text"].get<std::string>();
      }
      if (meta.contains("modality")) {
        entry.modality = meta["modality"].get<std::string>();
      }
      entry.vector.resize(dimension);
      for (std::size_t j = 0; j < dimension; ++j) {
        const unsigned char* b =
            reinterpret_cast<const unsigned char*>(payload + (i * dimension + j) * 4);
        std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                             static_cast<std::uint32_t>(b[1]) << 8 |
                             static_cast<std::uint32_t>(b[2]) << 16 |
                             static_cast<std::uint32_t>(b[3]) << 24;
        float value;
        std::memcpy(&value, &bits, sizeof(value));
        entry.vector[j] = value;
      }
      entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("header of \"" + path + "\" is malformed: " + e.what());
  }

  try {
    return Index(std::move(entries), dimension);
  } catch (const Error& e) {
    throw FormatError("index \"" + path + "\" fails validation: " + std::string(e.what()));
  }
}

}  // namespace gsco
