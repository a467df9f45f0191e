#include "lee/adaptive.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lee/error.hpp"

namespace lee {

std::string_view to_string(FrontierMode mode) {
  switch (mode) {
    case FrontierMode::Lee: return "lee";
    case FrontierMode::GarBm25: return "gar-bm25";
    case FrontierMode::GarEntity: return "gar-entity";
  }
  return "lee";
}

FrontierMode parse_frontier_mode(std::string_view s) {
  if (s == "lee") return FrontierMode::Lee;
  if (s == "gar-bm25") return FrontierMode::GarBm25;
  if (s == "gar-entity") return FrontierMode::GarEntity;
  fail(ErrorKind::Config, "unknown frontier mode: " + std::string(s));
}

std::string stats_json(const AdaptiveStats& stats) {
  nlohmann::ordered_json j;
  j["qid"] = stats.qid;
  j["unique_scored"] = stats.unique_scored;
  j["batches"] = stats.batches;
  j["frontier_refreshes"] = stats.frontier_refreshes;
  j["fallbacks"] = stats.fallbacks;
  j["retrieved_unscored"] = stats.retrieved_unscored;
  return j.dump();
}

std::size_t unique_scored_count(const ScoringTrace& trace) {
  std::unordered_set<std::string> seen;
  for (const auto& ev : trace.events) seen.insert(ev.doc_ids.begin(), ev.doc_ids.end());
  return seen.size();
}

WeightedQuery gar_frontier_query(std::string_view doc_id, const InvertedIndex& index, GarQueryMode mode,
                                 std::size_t n_terms) {
  WeightedQuery q{index.vocab_kind(), {}};
  auto unit = index.unit_ordinal(doc_id);
  if (!unit) fail(ErrorKind::Validation, "document not in index: " + std::string(doc_id));
  if (n_terms == 0) return q;

  struct Candidate {
    std::string term;
    double key;
  };
  std::vector<Candidate> cands;
  for (const auto& [term, tf] : index.unit_terms(*unit)) {
    double key = tf;
    if (mode == GarQueryMode::Bm25Terms)
      key *= index.idf_for_df(static_cast<std::uint32_t>(index.postings(term).size()));
    cands.push_back({index.term(term), key});
  }
  auto keep = std::min(n_terms, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                    [](const Candidate& a, const Candidate& b) { return ranks_before(a.key, a.term, b.key, b.term); });
  for (std::size_t i = 0; i < keep; ++i) q.terms.push_back({cands[i].term, 1.0 / static_cast<double>(keep)});
  return q;
}

AdaptiveResult adaptive_expand(const Query& query, const ScoredRun& r0, const Corpus& corpus, Scorer& scorer,
                               const IndexSet& indexes, const ExpansionConfig& cfg, Bm25Params bm25,
                               const AdaptiveOptions& opts) {
  if (r0.entries.empty()) fail(ErrorKind::Validation, "adaptive_expand needs a non-empty initial run");
  if (opts.batch < 1) fail(ErrorKind::Config, "adaptive batch must be >= 1");
  if (opts.budget < opts.batch) fail(ErrorKind::Config, "adaptive budget must be >= batch");

  AdaptiveResult result;
  result.stats.qid = query.query_id;
  std::unordered_map<std::string, double> scored;
  std::deque<std::string> initial_pool;
  for (const auto& e : r0.entries) initial_pool.push_back(e.unit_id);
  std::deque<std::string> frontier;
  std::set<std::string> ever_retrieved;
  std::size_t budget_remaining = opts.budget;
  std::string last_best;

  RerankOptions ropts{opts.scorer_batch, "adaptive"};

  auto take = [&](std::deque<std::string>& pool) {
    std::vector<std::string> ids;
    const auto want = std::min(opts.batch, budget_remaining);
    while (ids.size() < want && !pool.empty()) {
      auto id = std::move(pool.front());
      pool.pop_front();
      if (!scored.contains(id) && std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(std::move(id));
    }
    return ids;
  };

  auto score = [&](const std::vector<std::string>& ids, const char* stage) {
    ropts.stage_tag = stage;
    auto got = score_documents(query, ids, corpus, scorer, ropts, &result.passage_scores, &result.trace);
    const DocScore* best = nullptr;
    for (const auto& ds : got) {
      scored.emplace(ds.doc_id, ds.score);
      if (!best || ranks_before(ds.score, ds.doc_id, best->score, best->doc_id)) best = &ds;
    }
    if (best) last_best = best->doc_id;
    budget_remaining -= ids.size();
    ++result.stats.batches;
  };

  auto refresh = [&] {
    ++result.stats.frontier_refreshes;
    ScoredRun retrieved;
    if (opts.frontier == FrontierMode::Lee) {
      auto fb = build_feedback(feedback_candidates(result.passage_scores, cfg.unit_kind), cfg.fb_docs, cfg.unit_kind,
                               "adaptive");
      auto outcome = expand_and_retrieve(query, fb, indexes, cfg, bm25);
      if (outcome.fallback) ++result.stats.fallbacks;
      retrieved = std::move(outcome.run);
    } else {
      const bool entity = opts.frontier == FrontierMode::GarEntity;
      const auto* index = entity ? indexes.doc_entities : indexes.doc_words;
      if (!index) fail(ErrorKind::Config, "missing document index for GAR frontier");
      auto q = gar_frontier_query(last_best, *index, entity ? GarQueryMode::EntityTerms : GarQueryMode::Bm25Terms,
                                  opts.gar_terms);
      if (q.usable()) retrieved = bm25_search(*index, q, bm25, cfg.run_depth);
      else ++result.stats.fallbacks;
    }
    frontier.clear();
    for (const auto& e : retrieved.entries) {
      if (scored.contains(e.unit_id)) continue;
      frontier.push_back(e.unit_id);
      ever_retrieved.insert(e.unit_id);
    }
  };

  while (budget_remaining > 0) {
    bool progressed = false;
    if (auto ids = take(initial_pool); !ids.empty()) {
      score(ids, "adaptive-initial");
      progressed = true;
    }
    if (budget_remaining == 0) break;
    if (!scored.empty()) refresh();
    if (auto ids = take(frontier); !ids.empty()) {
      score(ids, "adaptive-frontier");
      progressed = true;
    }
    if (!progressed) break;
  }

  result.run.query_id = query.query_id;
  for (const auto& [id, s] : scored) result.run.entries.push_back({id, s, "adaptive"});
  sort_run(result.run);
  truncate(result.run, opts.budget);
  result.stats.unique_scored = unique_scored_count(result.trace);
  for (const auto& id : ever_retrieved) result.stats.retrieved_unscored += !scored.contains(id);
  return result;
}

} // namespace lee
