#include "lee/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lee/text.hpp"

namespace lee {

std::string_view to_string(UnitKind kind) { return kind == UnitKind::Document ? "document" : "passage"; }

UnitKind parse_unit_kind(std::string_view s) {
  if (s == "document" || s == "doc") return UnitKind::Document;
  if (s == "passage") return UnitKind::Passage;
  fail(ErrorKind::Config, "unknown feedback unit kind: " + std::string(s));
}

std::string_view to_string(ExpansionModel model) {
  switch (model) {
    case ExpansionModel::Rm3: return "rm3";
    case ExpansionModel::Lce: return "lce";
    case ExpansionModel::Lee: return "lee";
  }
  return "lee";
}

ExpansionModel parse_expansion_model(std::string_view s) {
  if (s == "rm3") return ExpansionModel::Rm3;
  if (s == "lce") return ExpansionModel::Lce;
  if (s == "lee") return ExpansionModel::Lee;
  fail(ErrorKind::Config, "unknown expansion model: " + std::string(s));
}

std::string_view to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::Rm3: return "rm3";
    case ModelMode::Lce: return "lce";
    case ModelMode::LeeWord: return "lee-word";
    case ModelMode::LeeEntity: return "lee-entity";
  }
  return "rm3";
}

void validate(const ExpansionConfig& cfg) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (cfg.fb_docs < 1) fail(ErrorKind::Config, "fb_docs must be >= 1");
  if (cfg.fb_terms < 1) fail(ErrorKind::Config, "fb_terms must be >= 1");
  if (!unit(cfg.original_query_weight)) fail(ErrorKind::Config, "original_query_weight must be in [0,1]");
  if (!unit(cfg.beta)) fail(ErrorKind::Config, "beta must be in [0,1]");
  if (!unit(cfg.lambda)) fail(ErrorKind::Config, "lambda must be in [0,1]");
  if (cfg.run_depth < 1) fail(ErrorKind::Config, "run_depth must be >= 1");
  if (cfg.k_lee < cfg.run_depth) fail(ErrorKind::Config, "k_lee must be >= run_depth");
}

// ---------------------------------------------------------------------------
// Feedback

FeedbackSet build_feedback(std::span<const FeedbackCandidate> candidates, std::size_t fb_docs, UnitKind unit_kind,
                           std::string source_stage) {
  if (fb_docs < 1) fail(ErrorKind::Config, "fb_docs must be >= 1");
  for (const auto& c : candidates)
    if (!std::isfinite(c.score) || c.score < 0.0 || c.score > 1.0)
      fail(ErrorKind::Validation, "feedback score outside [0,1] for " + c.unit_id);

  std::vector<const FeedbackCandidate*> order;
  order.reserve(candidates.size());
  for (const auto& c : candidates) order.push_back(&c);
  auto keep = std::min(fb_docs, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [](const FeedbackCandidate* a, const FeedbackCandidate* b) {
                      return ranks_before(a->score, a->unit_id, b->score, b->unit_id);
                    });

  FeedbackSet fb;
  fb.unit_kind = unit_kind;
  fb.source_stage = std::move(source_stage);
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) total += order[i]->score;
  if (keep == 0) {
    fb.degenerate = true;
    return fb;
  }
  if (total <= 0.0) fb.degenerate = true;
  for (std::size_t i = 0; i < keep; ++i) {
    double p = fb.degenerate ? 1.0 / static_cast<double>(keep) : order[i]->score / total;
    fb.entries.push_back({order[i]->unit_id, p});
  }
  return fb;
}

std::vector<FeedbackCandidate> feedback_candidates(const PassageScores& table, UnitKind unit_kind) {
  std::vector<FeedbackCandidate> out;
  for (const auto& [doc_id, scores] : table) {
    if (scores.empty()) continue;
    if (unit_kind == UnitKind::Document) {
      out.push_back({doc_id, *std::max_element(scores.begin(), scores.end())});
      continue;
    }
    for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({doc_id + "#" + std::to_string(i), scores[i]});
  }
  return out;
}

std::vector<FeedbackCandidate> feedback_candidates(const ScoredRun& run) {
  std::vector<FeedbackCandidate> out;
  for (const auto& [id, v] : normalized_scores(run)) out.push_back({id, v});
  return out;
}

// ---------------------------------------------------------------------------
// Relevance models

double RelevanceModel::weight(std::string_view term) const {
  for (const auto& w : weights)
    if (w.term == term) return w.weight;
  return 0.0;
}

namespace {

std::uint32_t feedback_unit(const InvertedIndex& index, const std::string& unit_id) {
  auto ord = index.unit_ordinal(unit_id);
  if (!ord) fail(ErrorKind::Validation, "feedback unit not in " + std::string(to_string(index.vocab_kind())) +
                                            " index: " + unit_id);
  return *ord;
}

} // namespace

TermWeights unigram_weights(const FeedbackSet& feedback, const InvertedIndex& index, bool use_idf_factor) {
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& fb : feedback.entries) {
    auto unit = feedback_unit(index, fb.unit_id);
    const double len = index.unit_length(unit);
    if (len == 0.0) continue;
    for (const auto& [term, tf] : index.unit_terms(unit)) {
      double w = fb.p * (static_cast<double>(tf) / len);
      if (use_idf_factor) w *= index.idf_for_df(static_cast<std::uint32_t>(index.postings(term).size()));
      acc[term] += w;
    }
  }
  TermWeights out;
  for (const auto& [term, w] : acc) out.emplace(index.term(term), w);
  return out;
}

PairWeights entity_pair_model(const FeedbackSet& feedback, const InvertedIndex& entity_index) {
  if (entity_index.vocab_kind() != VocabKind::Entity)
    fail(ErrorKind::Validation, "entity_pair_model needs an entity index");
  PairWeights out;
  for (const auto& fb : feedback.entries) {
    auto unit = feedback_unit(entity_index, fb.unit_id);
    const double len = entity_index.unit_length(unit);
    auto terms = entity_index.unit_terms(unit);
    if (len == 0.0 || terms.size() < 2) continue;
    std::vector<double> idfs;
    idfs.reserve(terms.size());
    for (const auto& t : terms)
      idfs.push_back(entity_index.idf_for_df(static_cast<std::uint32_t>(entity_index.postings(t.unit).size())));
    // term ordinals ascend with lexicographic term order, so (i, j) is already ordered
    for (std::size_t i = 0; i < terms.size(); ++i) {
      for (std::size_t j = i + 1; j < terms.size(); ++j) {
        const double freq = static_cast<double>(terms[i].tf + terms[j].tf) / len;
        out[{entity_index.term(terms[i].unit), entity_index.term(terms[j].unit)}] +=
            fb.p * freq * (idfs[i] * idfs[j]);
      }
    }
  }
  return out;
}

TermWeights entity_weights(const FeedbackSet& feedback, const InvertedIndex& entity_index, double beta,
                           bool use_idf_factor, bool use_entity_pairs) {
  if (!use_entity_pairs) beta = 0.0;
  auto unigram = unigram_weights(feedback, entity_index, use_idf_factor);
  TermWeights pair_sums;
  if (beta > 0.0) {
    for (const auto& [pair, w] : entity_pair_model(feedback, entity_index)) {
      pair_sums[pair.first] += w;
      pair_sums[pair.second] += w;
    }
  }
  TermWeights out;
  for (const auto& [e, u] : unigram) {
    auto it = pair_sums.find(e);
    double pair = it == pair_sums.end() ? 0.0 : it->second;
    out[e] = beta * pair + (1.0 - beta) * u;
  }
  // every paired entity also has a unigram weight, since both come from the same units
  return out;
}

RelevanceModel finalize_model(const TermWeights& weights, std::size_t fb_terms, VocabKind kind, ModelMode mode) {
  if (fb_terms < 1) fail(ErrorKind::Config, "fb_terms must be >= 1");
  std::vector<WeightedTerm> terms;
  for (const auto& [t, w] : weights)
    if (w > 0.0) terms.push_back({t, w});
  if (terms.empty())
    throw DegenerateModel(std::string("empty ") + std::string(to_string(mode)) + " relevance model");
  auto keep = std::min(fb_terms, terms.size());
  std::partial_sort(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(keep), terms.end(),
                    [](const WeightedTerm& a, const WeightedTerm& b) {
                      return ranks_before(a.weight, a.term, b.weight, b.term);
                    });
  terms.resize(keep);
  double total = 0.0;
  for (const auto& t : terms) total += t.weight;
  for (auto& t : terms) t.weight /= total;
  return RelevanceModel{kind, mode, std::move(terms)};
}

RelevanceModel word_relevance_model(const FeedbackSet& feedback, const InvertedIndex& word_index,
                                    const ExpansionConfig& cfg) {
  auto mode = cfg.use_idf_factor ? (cfg.model == ExpansionModel::Lee ? ModelMode::LeeWord : ModelMode::Lce)
                                 : ModelMode::Rm3;
  return finalize_model(unigram_weights(feedback, word_index, cfg.use_idf_factor), cfg.fb_terms, VocabKind::Word,
                        mode);
}

RelevanceModel entity_relevance_model(const FeedbackSet& feedback, const InvertedIndex& entity_index,
                                      const ExpansionConfig& cfg) {
  return finalize_model(
      entity_weights(feedback, entity_index, cfg.beta, cfg.use_idf_factor, cfg.use_entity_pairs), cfg.fb_terms,
      VocabKind::Entity, ModelMode::LeeEntity);
}

// ---------------------------------------------------------------------------
// Expanded queries

WeightedQuery original_query(const Query& query, VocabKind kind) {
  std::set<std::string> unique;
  if (kind == VocabKind::Word) {
    for (auto& t : analyze_text(query.text)) unique.insert(std::move(t));
  } else {
    unique.insert(query.entity_ids.begin(), query.entity_ids.end());
  }
  WeightedQuery q{kind, {}};
  for (const auto& t : unique) q.terms.push_back({t, 1.0 / static_cast<double>(unique.size())});
  return q;
}

WeightedQuery make_expanded_query(const Query& query, const RelevanceModel* model, double original_query_weight,
                                  VocabKind kind, bool* original_dropped) {
  if (original_dropped) *original_dropped = false;
  auto orig = original_query(query, kind);
  double w0 = original_query_weight;
  if (orig.terms.empty() && w0 > 0.0) {
    w0 = 0.0;
    if (original_dropped) *original_dropped = true;
  }
  if (model == nullptr || model->weights.empty()) w0 = 1.0;

  std::map<std::string, double, std::less<>> p_orig;
  std::map<std::string, double, std::less<>> p_model;
  std::set<std::string> terms;
  for (const auto& t : orig.terms) {
    p_orig[t.term] = t.weight;
    terms.insert(t.term);
  }
  if (model) {
    for (const auto& t : model->weights) {
      p_model[t.term] = t.weight;
      terms.insert(t.term);
    }
  }
  WeightedQuery out{kind, {}};
  for (const auto& t : terms) {
    auto o = p_orig.find(t);
    auto m = p_model.find(t);
    double w = w0 * (o == p_orig.end() ? 0.0 : o->second) + (1.0 - w0) * (m == p_model.end() ? 0.0 : m->second);
    if (w > 0.0) out.terms.push_back({t, w});
  }
  std::sort(out.terms.begin(), out.terms.end(), [](const WeightedTerm& a, const WeightedTerm& b) {
    return ranks_before(a.weight, a.term, b.weight, b.term);
  });
  return out;
}

std::string format_expanded_query(const WeightedQuery& query, std::string_view config_hash) {
  std::string out = "# vocab=" + std::string(to_string(query.vocab_kind)) + " config=" + std::string(config_hash) + "\n";
  char buf[64];
  for (const auto& t : query.terms) {
    std::snprintf(buf, sizeof buf, "%.17g", t.weight);
    out += t.term + "\t" + buf + "\n";
  }
  return out;
}

WeightedQuery parse_expanded_query(std::string_view text) {
  WeightedQuery q;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("vocab=");
      if (pos == std::string::npos) fail(ErrorKind::Validation, "expanded query header lacks vocab=");
      auto end = line.find(' ', pos);
      q.vocab_kind = parse_vocab_kind(line.substr(pos + 6, end == std::string::npos ? end : end - pos - 6));
      header = true;
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorKind::Validation, "expanded query line needs term<TAB>weight");
    try {
      q.terms.push_back({line.substr(0, tab), std::stod(line.substr(tab + 1))});
    } catch (const std::exception&) {
      fail(ErrorKind::Validation, "bad weight in expanded query line: " + line);
    }
  }
  if (!header) fail(ErrorKind::Validation, "expanded query missing header");
  return q;
}

// ---------------------------------------------------------------------------
// Duet retrieval

namespace {

std::unordered_map<std::string, double> min_max(const ScoredRun& run) {
  std::unordered_map<std::string, double> out;
  if (run.entries.empty()) return out;
  double lo = run.entries.front().score;
  double hi = lo;
  for (const auto& e : run.entries) {
    lo = std::min(lo, e.score);
    hi = std::max(hi, e.score);
  }
  for (const auto& e : run.entries) out[e.unit_id] = hi > lo ? (e.score - lo) / (hi - lo) : 1.0;
  return out;
}

} // namespace

DuetResult duet_retrieve(const WeightedQuery& word_query, const WeightedQuery& entity_query,
                         const InvertedIndex& word_index, const InvertedIndex& entity_index, const DuetParams& params) {
  if (params.k_lee < params.run_depth) fail(ErrorKind::Validation, "k_lee must be >= run depth");
  if (params.lambda < 0.0 || params.lambda > 1.0) fail(ErrorKind::Validation, "lambda must be in [0,1]");
  DuetResult result;
  double lambda = params.lambda;
  const bool word_ok = word_query.usable();
  const bool entity_ok = entity_query.usable();
  if (!word_ok && !entity_ok) throw DegenerateModel("both duet queries are empty");
  if (!entity_ok) {
    lambda = 1.0;
    result.entity_fallback = true;
  } else if (!word_ok) {
    lambda = 0.0;
    result.word_fallback = true;
  }

  std::unordered_map<std::string, double> word_scores;
  std::unordered_map<std::string, double> entity_scores;
  if (lambda > 0.0) word_scores = min_max(bm25_search(word_index, word_query, params.bm25, params.k_lee));
  if (lambda < 1.0) entity_scores = min_max(bm25_search(entity_index, entity_query, params.bm25, params.k_lee));

  std::set<std::string> docs;
  for (const auto& [d, _] : word_scores) docs.insert(d);
  for (const auto& [d, _] : entity_scores) docs.insert(d);
  for (const auto& d : docs) {
    auto w = word_scores.find(d);
    auto e = entity_scores.find(d);
    double fused = lambda * (w == word_scores.end() ? 0.0 : w->second) +
                   (1.0 - lambda) * (e == entity_scores.end() ? 0.0 : e->second);
    result.run.entries.push_back({d, fused, "duet"});
  }
  sort_run(result.run);
  truncate(result.run, params.run_depth);
  return result;
}

const InvertedIndex& IndexSet::feedback_words(UnitKind kind) const {
  auto* idx = kind == UnitKind::Passage ? passage_words : doc_words;
  if (!idx) fail(ErrorKind::Config, "missing word index for feedback units");
  return *idx;
}

const InvertedIndex& IndexSet::feedback_entities(UnitKind kind) const {
  auto* idx = kind == UnitKind::Passage ? passage_entities : doc_entities;
  if (!idx) fail(ErrorKind::Config, "missing entity index for feedback units");
  return *idx;
}

ExpansionOutcome expand_and_retrieve(const Query& query, const FeedbackSet& feedback, const IndexSet& indexes,
                                     const ExpansionConfig& cfg, Bm25Params bm25) {
  validate(cfg);
  if (!indexes.doc_words) fail(ErrorKind::Config, "missing document word index");
  ExpansionOutcome out;
  out.fallback = feedback.degenerate;

  ExpansionConfig word_cfg = cfg;
  if (cfg.model == ExpansionModel::Rm3) word_cfg.use_idf_factor = false;
  if (cfg.model == ExpansionModel::Lce) word_cfg.use_idf_factor = true;

  std::optional<RelevanceModel> word_model;
  try {
    word_model = word_relevance_model(feedback, indexes.feedback_words(cfg.unit_kind), word_cfg);
  } catch (const DegenerateModel&) {
    out.fallback = true;
  }
  bool dropped = false;
  out.word_query = make_expanded_query(query, word_model ? &*word_model : nullptr, cfg.original_query_weight,
                                       VocabKind::Word, &dropped);
  out.fallback = out.fallback || dropped;

  if (cfg.model != ExpansionModel::Lee) {
    out.entity_query.vocab_kind = VocabKind::Entity;
    if (!out.word_query.usable()) {
      out.fallback = true;
      return out;
    }
    out.run = bm25_search(*indexes.doc_words, out.word_query, bm25, cfg.run_depth);
    for (auto& e : out.run.entries) e.stage_tag = std::string(to_string(cfg.model));
    out.run.query_id = query.query_id;
    return out;
  }

  if (!indexes.doc_entities) fail(ErrorKind::Config, "missing document entity index");
  std::optional<RelevanceModel> entity_model;
  try {
    entity_model = entity_relevance_model(feedback, indexes.feedback_entities(cfg.unit_kind), cfg);
  } catch (const DegenerateModel&) {
    out.fallback = true;
  }
  out.entity_query = make_expanded_query(query, entity_model ? &*entity_model : nullptr, cfg.original_query_weight,
                                         VocabKind::Entity, &dropped);
  out.fallback = out.fallback || dropped;
  if (!out.word_query.usable() && !out.entity_query.usable()) {
    out.fallback = true;
    return out;
  }
  auto duet = duet_retrieve(out.word_query, out.entity_query, *indexes.doc_words, *indexes.doc_entities,
                            {cfg.lambda, cfg.k_lee, cfg.run_depth, bm25});
  out.fallback = out.fallback || duet.entity_fallback || duet.word_fallback;
  out.run = std::move(duet.run);
  out.run.query_id = query.query_id;
  for (auto& e : out.run.entries) e.stage_tag = "lee";
  return out;
}

} // namespace lee
