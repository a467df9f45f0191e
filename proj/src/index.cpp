#include "lee/index.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "lee/error.hpp"

namespace lee {

std::string_view to_string(VocabKind kind) { return kind == VocabKind::Word ? "word" : "entity"; }

VocabKind parse_vocab_kind(std::string_view s) {
  if (s == "word") return VocabKind::Word;
  if (s == "entity") return VocabKind::Entity;
  fail(ErrorKind::Config, "unknown vocabulary kind: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Construction

void IndexBuilder::add(std::string unit_id, std::span<const std::string> tokens) {
  auto ordinal = static_cast<std::uint32_t>(unit_ids_.size());
  if (!unit_lookup_.emplace(unit_id, ordinal).second)
    fail(ErrorKind::Validation, "duplicate unit_id: " + unit_id);
  unit_ids_.push_back(std::move(unit_id));
  unit_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
  for (const auto& tok : tokens) {
    auto& list = postings_[tok];
    if (!list.empty() && list.back().unit == ordinal) ++list.back().tf;
    else list.push_back({ordinal, 1});
  }
}

InvertedIndex IndexBuilder::finish() && {
  InvertedIndex idx;
  idx.kind_ = kind_;
  idx.unit_ids_ = std::move(unit_ids_);
  idx.unit_lengths_ = std::move(unit_lengths_);
  idx.unit_lookup_ = std::move(unit_lookup_);
  idx.terms_.reserve(postings_.size());
  for (auto& [term, _] : postings_) idx.terms_.push_back(term);
  std::sort(idx.terms_.begin(), idx.terms_.end());
  idx.postings_.reserve(idx.terms_.size());
  for (const auto& term : idx.terms_) idx.postings_.push_back(std::move(postings_.at(term)));
  idx.finalize();
  return idx;
}

void InvertedIndex::finalize() {
  term_lookup_.clear();
  for (std::uint32_t t = 0; t < terms_.size(); ++t) term_lookup_.emplace(terms_[t], t);
  if (unit_lookup_.size() != unit_ids_.size()) {
    unit_lookup_.clear();
    for (std::uint32_t u = 0; u < unit_ids_.size(); ++u) unit_lookup_.emplace(unit_ids_[u], u);
  }
  forward_.assign(unit_ids_.size(), {});
  for (std::uint32_t t = 0; t < postings_.size(); ++t)
    for (const auto& p : postings_[t]) forward_[p.unit].push_back({t, p.tf});
  total_tokens_ = std::accumulate(unit_lengths_.begin(), unit_lengths_.end(), std::uint64_t{0});
  avg_length_ = unit_ids_.empty() ? 0.0
                                  : static_cast<double>(total_tokens_) / static_cast<double>(unit_ids_.size());
}

InvertedIndex build_index(std::span<const IndexUnit> units, VocabKind kind) {
  IndexBuilder builder(kind);
  for (const auto& u : units) builder.add(u.unit_id, u.tokens);
  return std::move(builder).finish();
}

// ---------------------------------------------------------------------------
// Lookup

std::optional<std::uint32_t> InvertedIndex::unit_ordinal(std::string_view unit_id) const {
  auto it = unit_lookup_.find(std::string(unit_id));
  if (it == unit_lookup_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t InvertedIndex::unit_length(std::string_view unit_id) const {
  auto ord = unit_ordinal(unit_id);
  if (!ord) fail(ErrorKind::Validation, "unit not in index: " + std::string(unit_id));
  return unit_lengths_[*ord];
}

std::optional<std::uint32_t> InvertedIndex::term_ordinal(std::string_view term) const {
  auto it = term_lookup_.find(std::string(term));
  if (it == term_lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const {
  auto ord = term_ordinal(term);
  if (!ord) return {};
  return postings_[*ord];
}

std::uint32_t InvertedIndex::doc_frequency(std::string_view term) const {
  return static_cast<std::uint32_t>(postings(term).size());
}

std::uint32_t InvertedIndex::term_frequency(std::string_view term, std::string_view unit_id) const {
  auto unit = unit_ordinal(unit_id);
  if (!unit) return 0;
  auto list = postings(term);
  auto it = std::lower_bound(list.begin(), list.end(), *unit,
                             [](const Posting& p, std::uint32_t u) { return p.unit < u; });
  return (it != list.end() && it->unit == *unit) ? it->tf : 0;
}

double InvertedIndex::idf_for_df(std::uint32_t df) const {
  const double n = static_cast<double>(unit_ids_.size());
  const double d = static_cast<double>(df);
  return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double InvertedIndex::idf(std::string_view term) const { return idf_for_df(doc_frequency(term)); }

bool InvertedIndex::operator==(const InvertedIndex& other) const {
  return kind_ == other.kind_ && unit_ids_ == other.unit_ids_ && unit_lengths_ == other.unit_lengths_ &&
         terms_ == other.terms_ && postings_ == other.postings_;
}

// ---------------------------------------------------------------------------
// Persistence: stats.bin, terms.dict, postings.bin. Little-endian host layout.

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'E', 'E', 'I', 'D', 'X', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& p) : out_(p, std::ios::binary | std::ios::trunc), path_(p) {
    if (!out_) fail(ErrorKind::Io, "cannot write " + p.string());
    out_.write(kMagic.data(), kMagic.size());
    put(kFormatVersion);
  }
  template <typename T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void close() {
    out_.close();
    if (!out_) fail(ErrorKind::Io, "write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& p) : in_(p, std::ios::binary), path_(p) {
    if (!in_) fail(ErrorKind::Io, "cannot read " + p.string());
    std::array<char, 8> magic{};
    in_.read(magic.data(), magic.size());
    if (!in_ || magic != kMagic) fail(ErrorKind::Validation, "bad index magic in " + p.string());
    if (get<std::uint32_t>() != kFormatVersion)
      fail(ErrorKind::Validation, "unsupported index format version in " + p.string());
  }
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail(ErrorKind::Validation, "truncated index file " + path_.string());
    return v;
  }
  std::string get_string() {
    auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail(ErrorKind::Validation, "truncated index file " + path_.string());
    return s;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

} // namespace

void InvertedIndex::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  BinWriter stats(dir / "stats.bin");
  stats.put(static_cast<std::uint8_t>(kind_));
  stats.put(static_cast<std::uint64_t>(unit_ids_.size()));
  for (std::size_t u = 0; u < unit_ids_.size(); ++u) {
    stats.put_string(unit_ids_[u]);
    stats.put(unit_lengths_[u]);
  }
  stats.put(avg_length_);
  stats.put(total_tokens_);
  stats.close();

  BinWriter dict(dir / "terms.dict");
  BinWriter post(dir / "postings.bin");
  dict.put(static_cast<std::uint64_t>(terms_.size()));
  std::uint64_t total = 0;
  for (const auto& list : postings_) total += list.size();
  post.put(total);
  std::uint64_t offset = 0;
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    dict.put_string(terms_[t]);
    dict.put(static_cast<std::uint32_t>(postings_[t].size()));
    dict.put(offset);
    for (const auto& p : postings_[t]) {
      post.put(p.unit);
      post.put(p.tf);
    }
    offset += postings_[t].size();
  }
  dict.close();
  post.close();
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& dir) {
  InvertedIndex idx;
  BinReader stats(dir / "stats.bin");
  auto kind = stats.get<std::uint8_t>();
  if (kind > 1) fail(ErrorKind::Validation, "bad vocabulary kind in " + dir.string());
  idx.kind_ = static_cast<VocabKind>(kind);
  auto n_units = stats.get<std::uint64_t>();
  idx.unit_ids_.reserve(n_units);
  for (std::uint64_t u = 0; u < n_units; ++u) {
    idx.unit_ids_.push_back(stats.get_string());
    idx.unit_lengths_.push_back(stats.get<std::uint32_t>());
  }
  const auto stored_avg = stats.get<double>();
  const auto stored_total = stats.get<std::uint64_t>();

  BinReader dict(dir / "terms.dict");
  BinReader post(dir / "postings.bin");
  auto n_terms = dict.get<std::uint64_t>();
  auto n_records = post.get<std::uint64_t>();
  std::uint64_t consumed = 0;
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    idx.terms_.push_back(dict.get_string());
    auto df = dict.get<std::uint32_t>();
    auto offset = dict.get<std::uint64_t>();
    if (offset != consumed) fail(ErrorKind::Validation, "postings offset mismatch in " + dir.string());
    std::vector<Posting> list(df);
    for (auto& p : list) {
      p.unit = post.get<std::uint32_t>();
      p.tf = post.get<std::uint32_t>();
      if (p.unit >= n_units) fail(ErrorKind::Validation, "posting references unknown unit");
    }
    consumed += df;
    idx.postings_.push_back(std::move(list));
  }
  if (consumed != n_records) fail(ErrorKind::Validation, "postings count mismatch in " + dir.string());
  idx.finalize();
  if (idx.total_tokens_ != stored_total || idx.avg_length_ != stored_avg)
    fail(ErrorKind::Validation, "index statistics do not match postings in " + dir.string());
  return idx;
}

// ---------------------------------------------------------------------------
// Retrieval

bool WeightedQuery::usable() const {
  return std::any_of(terms.begin(), terms.end(), [](const WeightedTerm& t) { return t.weight > 0.0; });
}

void validate(const WeightedQuery& query) {
  std::unordered_set<std::string_view> seen;
  for (const auto& t : query.terms) {
    if (!seen.insert(t.term).second) fail(ErrorKind::Validation, "duplicate query term: " + t.term);
    if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
      fail(ErrorKind::Validation, "query weight must be finite and >= 0: " + t.term);
  }
  if (!query.usable()) fail(ErrorKind::Validation, "query has no term with positive weight");
}

ScoredRun bm25_search(const InvertedIndex& index, const WeightedQuery& query, Bm25Params params,
                      std::size_t k) {
  if (k < 1) fail(ErrorKind::Validation, "bm25_search depth must be >= 1");
  if (!(params.k1 > 0.0) || params.b < 0.0 || params.b > 1.0)
    fail(ErrorKind::Validation, "bm25 requires k1 > 0 and 0 <= b <= 1");
  if (query.vocab_kind != index.vocab_kind())
    fail(ErrorKind::Validation, "query vocabulary does not match index vocabulary");
  validate(query);

  ScoredRun run;
  if (index.n_units() == 0) return run;

  std::vector<double> acc(index.n_units(), 0.0);
  std::vector<std::uint32_t> touched;
  const double k1 = params.k1;
  const double b = params.b;
  const double avg = index.avg_length();
  for (const auto& qt : query.terms) {
    if (qt.weight <= 0.0) continue;
    auto list = index.postings(qt.term);
    if (list.empty()) continue;
    const double idf = index.idf_for_df(static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
      const double tf = p.tf;
      const double len = index.unit_length(p.unit);
      if (acc[p.unit] == 0.0) touched.push_back(p.unit);
      acc[p.unit] += qt.weight * idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avg));
    }
  }

  auto before = [&](std::uint32_t a, std::uint32_t c) {
    return ranks_before(acc[a], index.unit_id(a), acc[c], index.unit_id(c));
  };
  auto keep = std::min(k, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(keep), touched.end(), before);
  run.entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i)
    run.entries.push_back({index.unit_id(touched[i]), acc[touched[i]], "bm25"});
  return run;
}

} // namespace lee
