#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lee/run.hpp"

namespace lee {

enum class VocabKind : std::uint8_t { Word = 0, Entity = 1 };

std::string_view to_string(VocabKind kind);
VocabKind parse_vocab_kind(std::string_view s);

struct Posting {
  std::uint32_t unit = 0;  // unit ordinal
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Input to index construction: a unit id and its already-analyzed tokens
/// (stemmed words, or one entity id per mention).
struct IndexUnit {
  std::string unit_id;
  std::vector<std::string> tokens;
};

/// Immutable inverted index over one vocabulary. Terms are stored in
/// lexicographic order; units in insertion order.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  VocabKind vocab_kind() const { return kind_; }
  std::size_t n_units() const { return unit_ids_.size(); }
  std::size_t n_terms() const { return terms_.size(); }
  double avg_length() const { return avg_length_; }
  std::uint64_t total_tokens() const { return total_tokens_; }

  std::optional<std::uint32_t> unit_ordinal(std::string_view unit_id) const;
  const std::string& unit_id(std::uint32_t ordinal) const { return unit_ids_[ordinal]; }
  std::uint32_t unit_length(std::uint32_t ordinal) const { return unit_lengths_[ordinal]; }
  std::uint32_t unit_length(std::string_view unit_id) const;

  std::optional<std::uint32_t> term_ordinal(std::string_view term) const;
  const std::string& term(std::uint32_t ordinal) const { return terms_[ordinal]; }
  std::span<const Posting> postings(std::string_view term) const;
  std::span<const Posting> postings(std::uint32_t term_ordinal) const { return postings_[term_ordinal]; }
  std::uint32_t doc_frequency(std::string_view term) const;
  std::uint32_t term_frequency(std::string_view term, std::string_view unit_id) const;

  /// (term ordinal, tf) pairs of one unit, ascending by term ordinal.
  std::span<const Posting> unit_terms(std::uint32_t ordinal) const { return forward_[ordinal]; }

  /// ln(1 + (N - df + 0.5) / (df + 0.5)); df = 0 for unseen terms.
  double idf(std::string_view term) const;
  double idf_for_df(std::uint32_t df) const;

  void save(const std::filesystem::path& dir) const;
  static InvertedIndex load(const std::filesystem::path& dir);

  bool operator==(const InvertedIndex& other) const;

 private:
  friend class IndexBuilder;
  void finalize();

  VocabKind kind_ = VocabKind::Word;
  std::vector<std::string> unit_ids_;
  std::vector<std::uint32_t> unit_lengths_;
  std::unordered_map<std::string, std::uint32_t> unit_lookup_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> term_lookup_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::vector<Posting>> forward_;  // Posting::unit holds the term ordinal here
  double avg_length_ = 0.0;
  std::uint64_t total_tokens_ = 0;
};

/// Single-writer accumulator; `finish` produces the immutable index.
class IndexBuilder {
 public:
  explicit IndexBuilder(VocabKind kind) : kind_(kind) {}

  /// Throws lee::Error (Validation) on a duplicate unit id.
  void add(std::string unit_id, std::span<const std::string> tokens);
  InvertedIndex finish() &&;

 private:
  VocabKind kind_;
  std::vector<std::string> unit_ids_;
  std::unordered_map<std::string, std::uint32_t> unit_lookup_;
  std::vector<std::uint32_t> unit_lengths_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

InvertedIndex build_index(std::span<const IndexUnit> units, VocabKind kind);

struct WeightedTerm {
  std::string term;
  double weight = 0.0;

  bool operator==(const WeightedTerm&) const = default;
};

struct WeightedQuery {
  VocabKind vocab_kind = VocabKind::Word;
  std::vector<WeightedTerm> terms;

  /// True when there is at least one positive weight.
  bool usable() const;
  bool operator==(const WeightedQuery&) const = default;
};

/// Throws lee::Error (Validation) on duplicate terms, negative weights or no positive weight.
void validate(const WeightedQuery& query);

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

/// Exhaustive BM25 over the posting lists of the query terms; returns the
/// top-k units with a positive score, tie-broken by ascending unit id.
ScoredRun bm25_search(const InvertedIndex& index, const WeightedQuery& query, Bm25Params params,
                      std::size_t k);

} // namespace lee
