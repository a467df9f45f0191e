#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lee/corpus.hpp"
#include "lee/error.hpp"
#include "lee/index.hpp"
#include "lee/reranker.hpp"
#include "lee/run.hpp"

namespace lee {

enum class UnitKind { Document, Passage };
std::string_view to_string(UnitKind kind);
UnitKind parse_unit_kind(std::string_view s);

/// Which relevance model drives expansion: word-only RM3 (no idf factor),
/// word-only LCE (idf factor), or the word+entity LEE duet.
enum class ExpansionModel { Rm3, Lce, Lee };
std::string_view to_string(ExpansionModel model);
ExpansionModel parse_expansion_model(std::string_view s);

struct ExpansionConfig {
  ExpansionModel model = ExpansionModel::Lee;
  std::size_t fb_docs = 10;
  std::size_t fb_terms = 10;
  double original_query_weight = 0.5;
  double beta = 0.5;
  double lambda = 0.5;
  std::size_t k_lee = 1000;
  std::size_t run_depth = 1000;
  UnitKind unit_kind = UnitKind::Passage;
  bool use_idf_factor = true;
  bool use_entity_pairs = true;
};

/// Throws lee::Error (Config) when a field is out of range.
void validate(const ExpansionConfig& cfg);

/// Raised when a relevance model ends up with no terms.
class DegenerateModel : public Error {
 public:
  explicit DegenerateModel(const std::string& what) : Error(ErrorKind::Runtime, what) {}
};

// ---------------------------------------------------------------------------
// Feedback

struct FeedbackCandidate {
  std::string unit_id;
  double score = 0.0;
};

struct FeedbackEntry {
  std::string unit_id;
  double p = 0.0;  // normalized P(Q|D)
};

struct FeedbackSet {
  UnitKind unit_kind = UnitKind::Document;
  std::vector<FeedbackEntry> entries;  // descending p
  std::string source_stage;
  bool degenerate = false;  // all top scores were zero; p is uniform
};

/// Top `fb_docs` candidates by score (ties: ascending id) with p = score / Σ score.
FeedbackSet build_feedback(std::span<const FeedbackCandidate> candidates, std::size_t fb_docs, UnitKind unit_kind,
                           std::string source_stage = {});

/// Candidates from a passage score table: one per passage ("doc#idx"), or
/// one per document carrying its max passage score.
std::vector<FeedbackCandidate> feedback_candidates(const PassageScores& table, UnitKind unit_kind);
std::vector<FeedbackCandidate> feedback_candidates(const ScoredRun& run);

// ---------------------------------------------------------------------------
// Relevance models

enum class ModelMode { Rm3, Lce, LeeWord, LeeEntity };
std::string_view to_string(ModelMode mode);

struct RelevanceModel {
  VocabKind vocab_kind = VocabKind::Word;
  ModelMode mode = ModelMode::Rm3;
  std::vector<WeightedTerm> weights;  // descending weight, ties ascending term; sums to 1

  double weight(std::string_view term) const;
};

using TermWeights = std::map<std::string, double, std::less<>>;
using EntityPair = std::pair<std::string, std::string>;  // first < second
using PairWeights = std::map<EntityPair, double>;

/// Untruncated Σ_D p(D) · tf(w,D)/len(D) · [idf(w)] over the feedback units.
TermWeights unigram_weights(const FeedbackSet& feedback, const InvertedIndex& index, bool use_idf_factor);

/// Co-occurrence weights: Σ_D p(D) · (f(e1,D) + f(e2,D))/len(D) · idf(e1) · idf(e2),
/// over unordered pairs of distinct entities sharing a feedback unit.
PairWeights entity_pair_model(const FeedbackSet& feedback, const InvertedIndex& entity_index);

/// Untruncated β · Σ_{e'} pair(e, e') + (1 - β) · unigram(e).
TermWeights entity_weights(const FeedbackSet& feedback, const InvertedIndex& entity_index, double beta,
                           bool use_idf_factor, bool use_entity_pairs);

/// Keeps the top `fb_terms` positive weights and renormalizes to 1.
/// Throws DegenerateModel when nothing positive remains.
RelevanceModel finalize_model(const TermWeights& weights, std::size_t fb_terms, VocabKind kind, ModelMode mode);

RelevanceModel word_relevance_model(const FeedbackSet& feedback, const InvertedIndex& word_index,
                                    const ExpansionConfig& cfg);
RelevanceModel entity_relevance_model(const FeedbackSet& feedback, const InvertedIndex& entity_index,
                                      const ExpansionConfig& cfg);

// ---------------------------------------------------------------------------
// Expanded queries and retrieval

/// Uniform distribution over the query's unique analyzed terms (word) or
/// unique linked entity ids (entity).
WeightedQuery original_query(const Query& query, VocabKind kind);

/// w0 · original + (1 - w0) · model. An empty original with w0 > 0 is
/// treated as w0 = 0 and reported through `original_dropped`. `model` may
/// be null when the relevance model is degenerate.
WeightedQuery make_expanded_query(const Query& query, const RelevanceModel* model, double original_query_weight,
                                  VocabKind kind, bool* original_dropped = nullptr);

/// "# vocab=<kind> config=<hash>" then "term<TAB>weight" lines.
std::string format_expanded_query(const WeightedQuery& query, std::string_view config_hash);
WeightedQuery parse_expanded_query(std::string_view text);

struct DuetParams {
  double lambda = 0.5;
  std::size_t k_lee = 1000;
  std::size_t run_depth = 1000;
  Bm25Params bm25;
};

struct DuetResult {
  ScoredRun run;
  bool entity_fallback = false;  // entity side degenerate, lambda forced to 1
  bool word_fallback = false;    // word side degenerate, lambda forced to 0
};

/// BM25 on both indexes to k_lee, min-max normalize each list, fuse with
/// λ·word + (1-λ)·entity (absent = 0), keep the top run_depth.
DuetResult duet_retrieve(const WeightedQuery& word_query, const WeightedQuery& entity_query,
                         const InvertedIndex& word_index, const InvertedIndex& entity_index, const DuetParams& params);

/// Document-level indexes for retrieval plus the feedback-unit indexes.
struct IndexSet {
  const InvertedIndex* doc_words = nullptr;
  const InvertedIndex* doc_entities = nullptr;
  const InvertedIndex* passage_words = nullptr;
  const InvertedIndex* passage_entities = nullptr;

  const InvertedIndex& feedback_words(UnitKind kind) const;
  const InvertedIndex& feedback_entities(UnitKind kind) const;
};

struct ExpansionOutcome {
  ScoredRun run;
  WeightedQuery word_query;
  WeightedQuery entity_query;
  bool fallback = false;  // some side degenerate or original dropped
};

/// Builds the configured relevance model(s) from `feedback` and runs the
/// expanded retrieval (BM25 for RM3/LCE, duet for LEE).
ExpansionOutcome expand_and_retrieve(const Query& query, const FeedbackSet& feedback, const IndexSet& indexes,
                                     const ExpansionConfig& cfg, Bm25Params bm25);

} // namespace lee
