#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lee/corpus.hpp"
#include "lee/expansion.hpp"
#include "lee/index.hpp"
#include "lee/reranker.hpp"
#include "lee/run.hpp"

namespace lee {

/// How the adaptive loop refreshes its frontier after each initial-pool batch.
enum class FrontierMode {
  Lee,        // expansion retrieval from all scored documents
  GarBm25,    // terms of the best newly scored document as a BM25 query
  GarEntity,  // entities of the best newly scored document as a BM25 query
};
std::string_view to_string(FrontierMode mode);
FrontierMode parse_frontier_mode(std::string_view s);

struct AdaptiveOptions {
  std::size_t budget = 1000;
  std::size_t batch = 16;
  FrontierMode frontier = FrontierMode::Lee;
  std::size_t gar_terms = 10;
  std::size_t scorer_batch = 64;
};

struct AdaptiveStats {
  std::string qid;
  std::size_t unique_scored = 0;
  std::size_t batches = 0;
  std::size_t frontier_refreshes = 0;
  std::size_t fallbacks = 0;
  std::size_t retrieved_unscored = 0;  // frontier documents never scored
};

/// {"qid","unique_scored","batches","frontier_refreshes","fallbacks","retrieved_unscored"}
std::string stats_json(const AdaptiveStats& stats);

struct AdaptiveResult {
  ScoredRun run;
  AdaptiveStats stats;
  ScoringTrace trace;
  PassageScores passage_scores;
};

/// Alternates scorer batches between the unscored remainder of `r0` and a
/// frontier re-derived from everything scored so far, until the budget is
/// spent or both pools are empty. The result holds only scored documents.
AdaptiveResult adaptive_expand(const Query& query, const ScoredRun& r0, const Corpus& corpus, Scorer& scorer,
                               const IndexSet& indexes, const ExpansionConfig& cfg, Bm25Params bm25,
                               const AdaptiveOptions& opts);

enum class GarQueryMode { Bm25Terms, EntityTerms };

/// Neighbour query for a document: its top `n_terms` terms by tf·idf
/// (word index) or its most frequent entities (entity index), uniformly
/// weighted. Empty when the document has no terms in that index.
WeightedQuery gar_frontier_query(std::string_view doc_id, const InvertedIndex& index, GarQueryMode mode,
                                 std::size_t n_terms);

/// Distinct documents sent to the scorer across all recorded stages.
std::size_t unique_scored_count(const ScoringTrace& trace);

} // namespace lee
