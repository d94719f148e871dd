#include "treesql/value_index.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

namespace {

constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;
constexpr int kFormatVersion = 1;
constexpr std::string_view kFormatName = "treesql-value-index";

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mod61(unsigned __int128 x) {
  std::uint64_t lo = static_cast<std::uint64_t>(x & kMersenne61);
  std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
  std::uint64_t r = lo + hi;
  while (r >= kMersenne61) r -= kMersenne61;
  return r;
}

std::string to_hex(const MinHashSignature& sig) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(sig.size() * 16);
  for (std::uint64_t v : sig)
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(kDigits[(v >> shift) & 0xf]);
  return out;
}

MinHashSignature from_hex(std::string_view hex, std::size_t k) {
  if (hex.size() != k * 16) throw IoError("value index: signature has wrong length");
  MinHashSignature sig(k, 0);
  for (std::size_t i = 0; i < hex.size(); ++i) {
    char c = hex[i];
    std::uint64_t d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else throw IoError("value index: bad hex digit in signature");
    sig[i / 16] = (sig[i / 16] << 4) | d;
  }
  return sig;
}

std::string quote_identifier(std::string_view name) {
  return "\"" + text::replace_all(std::string(name), "\"", "\"\"") + "\"";
}

}  // namespace

void MinHashParams::validate() const {
  if (num_permutations == 0 || bands == 0 || rows_per_band == 0 || shingle_size == 0)
    throw ContractViolation("minhash parameters must be positive");
  if (bands * rows_per_band != num_permutations)
    throw ContractViolation("bands x rows_per_band must equal num_permutations");
}

std::vector<std::string> shingles(std::string_view value, std::size_t n) {
  std::string lower = text::to_lower(value);
  std::set<std::string> out;
  if (lower.empty()) return {};
  if (lower.size() < n) {
    out.insert(lower);
  } else {
    for (std::size_t i = 0; i + n <= lower.size(); ++i) out.insert(lower.substr(i, n));
  }
  return {out.begin(), out.end()};
}

double exact_jaccard(std::string_view a, std::string_view b, std::size_t n) {
  auto sa = shingles(a, n), sb = shingles(b, n);
  if (sa.empty() && sb.empty()) return 1.0;
  std::vector<std::string> inter;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  double uni = static_cast<double>(sa.size() + sb.size() - inter.size());
  return static_cast<double>(inter.size()) / uni;
}

MinHasher::MinHasher(const MinHashParams& params) : shingle_size_(params.shingle_size) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  a_.resize(params.num_permutations);
  b_.resize(params.num_permutations);
  for (std::size_t i = 0; i < params.num_permutations; ++i) {
    a_[i] = 1 + rng() % (kMersenne61 - 1);
    b_[i] = rng() % kMersenne61;
  }
}

MinHashSignature MinHasher::sign(std::string_view value) const {
  MinHashSignature sig(a_.size(), std::numeric_limits<std::uint64_t>::max());
  for (const auto& sh : shingles(value, shingle_size_)) {
    std::uint64_t x = splitmix(fnv1a(sh)) % kMersenne61;
    for (std::size_t i = 0; i < a_.size(); ++i) {
      std::uint64_t h = mod61(static_cast<unsigned __int128>(a_[i]) * x + b_[i]);
      sig[i] = std::min(sig[i], h);
    }
  }
  return sig;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.size() != b.size()) throw ContractViolation("signatures differ in length");
  if (a.empty()) throw ContractViolation("empty signatures");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

ValueIndex::ValueIndex(MinHashParams params, std::string db_id)
    : params_(params), db_id_(std::move(db_id)), hasher_(params_) {}

std::uint64_t ValueIndex::band_key(const MinHashSignature& sig, std::size_t band) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t r = 0; r < params_.rows_per_band; ++r) h = splitmix(h ^ sig[band * params_.rows_per_band + r]);
  return h;
}

void ValueIndex::insert_buckets(std::size_t id) {
  for (std::size_t band = 0; band < params_.bands; ++band)
    buckets_[{band, band_key(signatures_[id], band)}].push_back(id);
}

void ValueIndex::add(ValueRecord record) {
  if (record.value.empty()) throw ContractViolation("value records must be non-empty");
  signatures_.push_back(hasher_.sign(record.value));
  records_.push_back(std::move(record));
  insert_buckets(records_.size() - 1);
}

std::size_t ValueIndex::buckets_containing(std::size_t id) const {
  std::size_t n = 0;
  for (const auto& [_, ids] : buckets_) n += std::count(ids.begin(), ids.end(), id);
  return n;
}

std::vector<std::size_t> ValueIndex::candidates(std::string_view query) const {
  std::set<std::size_t> out;
  if (text::trim(query).empty()) return {};
  auto sig = hasher_.sign(query);
  for (std::size_t band = 0; band < params_.bands; ++band) {
    auto it = buckets_.find({band, band_key(sig, band)});
    if (it != buckets_.end()) out.insert(it->second.begin(), it->second.end());
  }
  return {out.begin(), out.end()};
}

void ValueIndex::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write value index: " + path.string());
    nlohmann::json header = {{"format", kFormatName},
                             {"version", kFormatVersion},
                             {"db_id", db_id_},
                             {"num_permutations", params_.num_permutations},
                             {"bands", params_.bands},
                             {"rows_per_band", params_.rows_per_band},
                             {"shingle_size", params_.shingle_size},
                             {"seed", params_.seed},
                             {"max_values_per_column", params_.max_values_per_column},
                             {"max_value_length", params_.max_value_length},
                             {"records", records_.size()}};
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < records_.size(); ++i) {
      nlohmann::json line = {{"table", records_[i].table},
                             {"column", records_[i].column},
                             {"value", records_[i].value},
                             {"sig", to_hex(signatures_[i])}};
      out << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
    if (!out) throw IoError("failed writing value index: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ValueIndex ValueIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open value index: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty value index: " + path.string());
  try {
    auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kFormatName || header.value("version", 0) != kFormatVersion)
      throw IoError("unsupported value index format: " + path.string());
    MinHashParams p;
    p.num_permutations = header.at("num_permutations").get<std::size_t>();
    p.bands = header.at("bands").get<std::size_t>();
    p.rows_per_band = header.at("rows_per_band").get<std::size_t>();
    p.shingle_size = header.at("shingle_size").get<std::size_t>();
    p.seed = header.at("seed").get<std::uint64_t>();
    p.max_values_per_column = header.value("max_values_per_column", p.max_values_per_column);
    p.max_value_length = header.value("max_value_length", p.max_value_length);
    ValueIndex index(p, header.value("db_id", ""));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      index.records_.push_back(
          ValueRecord{j.at("table").get<std::string>(), j.at("column").get<std::string>(), j.at("value").get<std::string>()});
      index.signatures_.push_back(from_hex(j.at("sig").get<std::string>(), p.num_permutations));
      index.insert_buckets(index.records_.size() - 1);
    }
    std::size_t expected = header.value("records", index.records_.size());
    if (expected != index.records_.size()) throw IoError("value index is truncated: " + path.string());
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed value index " + path.string() + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw IoError("invalid value index parameters in " + path.string() + ": " + e.what());
  }
}

ValueIndex build_value_index(const DatabaseCatalog& catalog, const Database& db, const MinHashParams& params) {
  params.validate();
  ValueIndex index(params, catalog.db_id());
  for (const auto& table : catalog.tables()) {
    for (const auto& column : table.columns) {
      if (!column.is_text()) continue;
      std::vector<std::string> values;
      std::string sql = "SELECT DISTINCT " + quote_identifier(column.name) + " FROM " + quote_identifier(table.name) +
                        " WHERE " + quote_identifier(column.name) + " IS NOT NULL ORDER BY 1";
      db.for_each_row(sql, [&](const std::vector<std::optional<std::string>>& row) {
        if (row.empty() || !row[0]) return;
        const std::string& v = *row[0];
        if (text::trim(v).empty() || v.size() > params.max_value_length) return;
        values.push_back(v);
      });
      if (values.size() > params.max_values_per_column) {
        std::mt19937_64 rng(params.seed ^ fnv1a(table.name + "." + column.name));
        std::vector<std::string> sampled;
        std::sample(values.begin(), values.end(), std::back_inserter(sampled), params.max_values_per_column, rng);
        values = std::move(sampled);
      }
      for (auto& v : values) index.add(ValueRecord{table.name, column.name, std::move(v)});
    }
  }
  return index;
}

RetrievalOptions RetrievalOptions::from(const SearchConfig& cfg) {
  return RetrievalOptions{cfg.eps_edit, cfg.eps_semantic, cfg.retrieval_mode, cfg.values_per_column};
}

double edit_similarity(std::string_view a, std::string_view b) {
  std::string la = text::to_lower(a), lb = text::to_lower(b);
  std::size_t longest = std::max(la.size(), lb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(text::levenshtein(la, lb)) / static_cast<double>(longest);
}

std::vector<RetrievedValue> retrieve_values(const ValueIndex& index, const std::vector<std::string>& keywords,
                                            Embedder* embedder, const RetrievalOptions& opts) {
  std::map<std::size_t, RetrievedValue> best;
  auto better = [](const RetrievedValue& a, const RetrievedValue& b) {
    double sa = a.semantic_sim.value_or(-2.0), sb = b.semantic_sim.value_or(-2.0);
    if (sa != sb) return sa > sb;
    return a.edit_sim > b.edit_sim;
  };
  bool embedder_ok = embedder != nullptr;

  for (const auto& raw_keyword : keywords) {
    std::string keyword = text::trim(raw_keyword);
    if (keyword.empty()) continue;
    std::vector<std::size_t> ids;
    std::vector<RetrievedValue> found;
    for (std::size_t id : index.candidates(keyword)) {
      RetrievedValue rv{index.records()[id], edit_similarity(keyword, index.records()[id].value), std::nullopt};
      // Under AND the edit gate runs first, so only its survivors are embedded.
      if (opts.mode == RetrievalMode::And && rv.edit_sim < opts.eps_edit) continue;
      ids.push_back(id);
      found.push_back(std::move(rv));
    }
    if (found.empty()) continue;

    if (embedder_ok) {
      std::vector<std::string> texts{keyword};
      for (const auto& rv : found) texts.push_back(rv.record.value);
      try {
        auto vecs = embedder->embed(texts);
        if (vecs.size() != texts.size()) throw ProtocolError("embedder returned the wrong number of vectors");
        for (std::size_t i = 0; i < found.size(); ++i) found[i].semantic_sim = cosine_unit(vecs[0], vecs[i + 1]);
      } catch (const std::exception& e) {
        spdlog::warn("value retrieval: embedder failed ({}); using edit similarity only", e.what());
        embedder_ok = false;
        for (auto& rv : found) rv.semantic_sim.reset();
        for (auto& [_, rv] : best) rv.semantic_sim.reset();
      }
    }

    for (std::size_t i = 0; i < found.size(); ++i) {
      const auto& rv = found[i];
      bool keep;
      bool edit_pass = rv.edit_sim >= opts.eps_edit;
      if (!rv.semantic_sim) {
        keep = edit_pass;
      } else if (opts.mode == RetrievalMode::And) {
        keep = edit_pass && *rv.semantic_sim >= opts.eps_semantic;
      } else {
        keep = edit_pass || *rv.semantic_sim >= opts.eps_semantic;
      }
      if (!keep) continue;
      auto it = best.find(ids[i]);
      if (it == best.end() || better(rv, it->second)) best[ids[i]] = rv;
    }
  }

  std::vector<RetrievedValue> sorted;
  for (auto& [_, rv] : best) sorted.push_back(std::move(rv));
  std::stable_sort(sorted.begin(), sorted.end(), [&](const RetrievedValue& a, const RetrievedValue& b) {
    if (better(a, b)) return true;
    if (better(b, a)) return false;
    return a.record < b.record;
  });

  std::map<std::pair<std::string, std::string>, std::size_t> per_column;
  std::vector<RetrievedValue> out;
  for (auto& rv : sorted) {
    auto& n = per_column[{rv.record.table, rv.record.column}];
    if (n >= opts.per_column) continue;
    ++n;
    out.push_back(std::move(rv));
  }
  return out;
}

}  // namespace treesql
