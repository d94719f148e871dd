#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "treesql/catalog.hpp"
#include "treesql/core.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/sql_exec.hpp"

namespace treesql {

using MinHashSignature = std::vector<std::uint64_t>;

struct MinHashParams {
  std::size_t num_permutations = 128;
  std::size_t bands = 16;
  std::size_t rows_per_band = 8;
  std::size_t shingle_size = 3;
  std::uint64_t seed = 1;
  /// Distinct values kept per column; larger columns are sampled.
  std::size_t max_values_per_column = 10000;
  /// Longer values (free text, blobs) are not indexed.
  std::size_t max_value_length = 256;

  void validate() const;
};

/// Lower-cased character n-grams as a sorted set. A non-empty string shorter
/// than n is its own single shingle; the empty string has none.
std::vector<std::string> shingles(std::string_view value, std::size_t n);

/// Exact Jaccard similarity of the two shingle sets (1.0 when both are empty).
double exact_jaccard(std::string_view a, std::string_view b, std::size_t n);

/// Family of `num_permutations` universal hashes (a*x + b) mod (2^61 - 1).
class MinHasher {
 public:
  explicit MinHasher(const MinHashParams& params);
  MinHashSignature sign(std::string_view value) const;
  std::size_t size() const { return a_.size(); }

 private:
  std::size_t shingle_size_;
  std::vector<std::uint64_t> a_, b_;
};

/// Fraction of positions with equal minima. Throws ContractViolation when the
/// lengths differ.
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

/// MinHash signatures of TEXT-column values with LSH band buckets.
class ValueIndex {
 public:
  explicit ValueIndex(MinHashParams params = {}, std::string db_id = {});

  void add(ValueRecord record);

  const MinHashParams& params() const { return params_; }
  const std::string& db_id() const { return db_id_; }
  const std::vector<ValueRecord>& records() const { return records_; }
  const std::vector<MinHashSignature>& signatures() const { return signatures_; }
  std::size_t size() const { return records_.size(); }

  /// Number of buckets holding record `id` (always `bands`).
  std::size_t buckets_containing(std::size_t id) const;
  std::size_t bucket_count() const { return buckets_.size(); }

  /// Records sharing at least one band with `query`, ascending ids.
  std::vector<std::size_t> candidates(std::string_view query) const;

  const MinHasher& hasher() const { return hasher_; }

  /// Line-delimited JSON: one header line, then one line per record.
  void save(const std::filesystem::path& path) const;
  static ValueIndex load(const std::filesystem::path& path);

 private:
  void insert_buckets(std::size_t id);
  std::uint64_t band_key(const MinHashSignature& sig, std::size_t band) const;

  MinHashParams params_;
  std::string db_id_;
  MinHasher hasher_;
  std::vector<ValueRecord> records_;
  std::vector<MinHashSignature> signatures_;
  std::map<std::pair<std::size_t, std::uint64_t>, std::vector<std::size_t>> buckets_;
};

/// Scans distinct values of every TEXT column. Throws IoError when the
/// database cannot be read.
ValueIndex build_value_index(const DatabaseCatalog& catalog, const Database& db, const MinHashParams& params = {});

struct RetrievalOptions {
  double eps_edit = 0.3;
  double eps_semantic = 0.6;
  RetrievalMode mode = RetrievalMode::And;
  std::size_t per_column = 3;

  static RetrievalOptions from(const SearchConfig& cfg);
};

struct RetrievedValue {
  ValueRecord record;
  double edit_sim = 0.0;
  /// Absent when no embedder was available.
  std::optional<double> semantic_sim;
};

/// 1 - levenshtein(lower(a), lower(b)) / max(len).
double edit_similarity(std::string_view a, std::string_view b);

/// LSH candidates per keyword, filtered by edit and semantic similarity,
/// de-duplicated, sorted by semantic then edit similarity and capped per
/// column. A null or failing embedder degrades to edit-only filtering.
std::vector<RetrievedValue> retrieve_values(const ValueIndex& index, const std::vector<std::string>& keywords,
                                            Embedder* embedder, const RetrievalOptions& opts = {});

}  // namespace treesql
