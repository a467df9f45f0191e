#include "lee/pipeline.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "lee/error.hpp"
#include "lee/text.hpp"

namespace lee {

std::string_view to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::Traditional: return "traditional";
    case PipelineKind::NlmFeedback: return "nlm-feedback";
    case PipelineKind::NlmFeedbackRerank: return "nlm-feedback-rerank";
    case PipelineKind::Adaptive: return "adaptive";
  }
  return "nlm-feedback";
}

PipelineKind parse_pipeline_kind(std::string_view s) {
  if (s == "traditional") return PipelineKind::Traditional;
  if (s == "nlm-feedback") return PipelineKind::NlmFeedback;
  if (s == "nlm-feedback-rerank") return PipelineKind::NlmFeedbackRerank;
  if (s == "adaptive") return PipelineKind::Adaptive;
  fail(ErrorKind::Config, "unknown pipeline: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Config file

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorKind::Config, key + ": expected a count, got " + v);
  return out;
}

long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorKind::Config, key + ": expected an integer, got " + v);
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorKind::Config, key + ": expected a number, got " + v);
  return out;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::Config, key + ": expected true/false, got " + v);
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    auto path_field = [](std::filesystem::path PipelineConfig::*m) {
      return Field{[m](PipelineConfig& c, const std::string& v) { c.*m = v; },
                   [m](const PipelineConfig& c) { return (c.*m).string(); }};
    };
    t["pipeline"] = {[](auto& c, const auto& v) { c.pipeline = parse_pipeline_kind(v); },
                     [](const auto& c) { return std::string(to_string(c.pipeline)); }};
    t["corpus"] = path_field(&PipelineConfig::corpus);
    t["index_dir"] = path_field(&PipelineConfig::index_dir);
    t["topics"] = path_field(&PipelineConfig::topics);
    t["qrels"] = path_field(&PipelineConfig::qrels);
    t["folds"] = path_field(&PipelineConfig::folds);
    t["output_dir"] = path_field(&PipelineConfig::output_dir);
    t["scorer"] = {[](auto& c, const auto& v) { c.scorer = v; }, [](const auto& c) { return c.scorer; }};
    t["expansion_model"] = {[](auto& c, const auto& v) { c.expansion.model = parse_expansion_model(v); },
                            [](const auto& c) { return std::string(to_string(c.expansion.model)); }};
    t["fb_docs"] = {[](auto& c, const auto& v) { c.expansion.fb_docs = parse_count("fb_docs", v); },
                    [](const auto& c) { return std::to_string(c.expansion.fb_docs); }};
    t["fb_terms"] = {[](auto& c, const auto& v) { c.expansion.fb_terms = parse_count("fb_terms", v); },
                     [](const auto& c) { return std::to_string(c.expansion.fb_terms); }};
    t["original_query_weight"] = {
        [](auto& c, const auto& v) { c.expansion.original_query_weight = parse_real("original_query_weight", v); },
        [](const auto& c) { return fmt(c.expansion.original_query_weight); }};
    t["beta"] = {[](auto& c, const auto& v) { c.expansion.beta = parse_real("beta", v); },
                 [](const auto& c) { return fmt(c.expansion.beta); }};
    t["lambda"] = {[](auto& c, const auto& v) { c.expansion.lambda = parse_real("lambda", v); },
                   [](const auto& c) { return fmt(c.expansion.lambda); }};
    t["k_lee"] = {[](auto& c, const auto& v) { c.expansion.k_lee = parse_count("k_lee", v); },
                  [](const auto& c) { return std::to_string(c.expansion.k_lee); }};
    t["run_depth"] = {[](auto& c, const auto& v) { c.expansion.run_depth = parse_count("run_depth", v); },
                      [](const auto& c) { return std::to_string(c.expansion.run_depth); }};
    t["unit_kind"] = {[](auto& c, const auto& v) { c.expansion.unit_kind = parse_unit_kind(v); },
                      [](const auto& c) { return std::string(to_string(c.expansion.unit_kind)); }};
    t["use_idf_factor"] = {[](auto& c, const auto& v) { c.expansion.use_idf_factor = parse_flag("use_idf_factor", v); },
                           [](const auto& c) { return std::string(c.expansion.use_idf_factor ? "true" : "false"); }};
    t["use_entity_pairs"] = {
        [](auto& c, const auto& v) { c.expansion.use_entity_pairs = parse_flag("use_entity_pairs", v); },
        [](const auto& c) { return std::string(c.expansion.use_entity_pairs ? "true" : "false"); }};
    t["k1"] = {[](auto& c, const auto& v) { c.bm25.k1 = parse_real("k1", v); },
               [](const auto& c) { return fmt(c.bm25.k1); }};
    t["b"] = {[](auto& c, const auto& v) { c.bm25.b = parse_real("b", v); }, [](const auto& c) { return fmt(c.bm25.b); }};
    t["depth"] = {[](auto& c, const auto& v) { c.depth = parse_count("depth", v); },
                  [](const auto& c) { return std::to_string(c.depth); }};
    t["budget"] = {[](auto& c, const auto& v) { c.budget = parse_count("budget", v); },
                   [](const auto& c) { return std::to_string(c.budget); }};
    t["batch"] = {[](auto& c, const auto& v) { c.batch = parse_count("batch", v); },
                  [](const auto& c) { return std::to_string(c.batch); }};
    t["frontier"] = {[](auto& c, const auto& v) { c.frontier = parse_frontier_mode(v); },
                     [](const auto& c) { return std::string(to_string(c.frontier)); }};
    t["gar_terms"] = {[](auto& c, const auto& v) { c.gar_terms = parse_count("gar_terms", v); },
                      [](const auto& c) { return std::to_string(c.gar_terms); }};
    t["scorer_batch"] = {[](auto& c, const auto& v) { c.scorer_batch = parse_count("scorer_batch", v); },
                         [](const auto& c) { return std::to_string(c.scorer_batch); }};
    t["scorer_timeout_ms"] = {[](auto& c, const auto& v) { c.scorer_timeout_ms = parse_long("scorer_timeout_ms", v); },
                              [](const auto& c) { return std::to_string(c.scorer_timeout_ms); }};
    t["scorer_retries"] = {
        [](auto& c, const auto& v) { c.scorer_retries = static_cast<int>(parse_long("scorer_retries", v)); },
        [](const auto& c) { return std::to_string(c.scorer_retries); }};
    t["window"] = {[](auto& c, const auto& v) { c.shard.window = parse_count("window", v); },
                   [](const auto& c) { return std::to_string(c.shard.window); }};
    t["stride"] = {[](auto& c, const auto& v) { c.shard.stride = parse_count("stride", v); },
                   [](const auto& c) { return std::to_string(c.shard.stride); }};
    return t;
  }();
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected key = value");
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    set_config_value(cfg, key, value);
  }
  return cfg;
}

void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  auto it = fields().find(std::string(key));
  if (it == fields().end()) fail(ErrorKind::Config, "unknown config key: " + std::string(key));
  it->second.set(cfg, trim(value));
}

std::string get_config_value(const PipelineConfig& cfg, std::string_view key) {
  auto it = fields().find(std::string(key));
  if (it == fields().end()) fail(ErrorKind::Config, "unknown config key: " + std::string(key));
  return it->second.get(cfg);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, _] : fields()) out.push_back(key);
  return out;
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string serialize_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

std::string config_hash(const PipelineConfig& cfg) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& [key, field] : fields()) {
    if (key == "output_dir") continue;
    for (char c : key + "=" + field.get(cfg) + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate(const PipelineConfig& cfg, bool check_paths) {
  validate(cfg.expansion);
  if (!(cfg.bm25.k1 > 0.0) || cfg.bm25.b < 0.0 || cfg.bm25.b > 1.0)
    fail(ErrorKind::Config, "bm25 requires k1 > 0 and 0 <= b <= 1");
  if (cfg.depth < 1) fail(ErrorKind::Config, "depth must be >= 1");
  if (cfg.scorer_batch < 1) fail(ErrorKind::Config, "scorer_batch must be >= 1");
  if (cfg.shard.window < 1 || cfg.shard.stride < 1 || cfg.shard.stride > cfg.shard.window)
    fail(ErrorKind::Config, "shard requires window >= 1 and 1 <= stride <= window");
  if (cfg.pipeline == PipelineKind::Adaptive) {
    if (cfg.batch < 1) fail(ErrorKind::Config, "adaptive pipeline requires batch >= 1");
    if (cfg.budget < cfg.batch) fail(ErrorKind::Config, "adaptive pipeline requires budget >= batch");
  }
  if (cfg.scorer == "oracle" && cfg.qrels.empty()) fail(ErrorKind::Config, "oracle scorer requires qrels");
  if (!check_paths) return;
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) fail(ErrorKind::Config, std::string(what) + " is not set");
    if (!std::filesystem::exists(p)) fail(ErrorKind::Config, std::string(what) + " does not exist: " + p.string());
  };
  need(cfg.corpus, "corpus");
  need(cfg.index_dir, "index_dir");
  for (const char* sub : {"doc-word", "doc-entity", "passage-word", "passage-entity"})
    need(cfg.index_dir / sub, "index");
  if (!cfg.topics.empty()) need(cfg.topics, "topics");
  if (!cfg.qrels.empty()) need(cfg.qrels, "qrels");
}

// ---------------------------------------------------------------------------
// Resources

Resources build_resources(std::vector<Document> docs, ShardOptions shard) {
  Resources res;
  res.corpus = Corpus(std::move(docs), shard);
  IndexBuilder dw(VocabKind::Word), de(VocabKind::Entity), pw(VocabKind::Word), pe(VocabKind::Entity);
  for (const auto& doc : res.corpus.documents()) {
    dw.add(doc.doc_id, analyze_text(doc.title + " " + doc.body));
    std::vector<std::string> ents;
    for (const auto& m : doc.entity_mentions) ents.push_back(m.entity_id);
    de.add(doc.doc_id, ents);
    for (const auto& p : res.corpus.passages_of(doc.doc_id)) {
      pw.add(p.unit_id(), analyze_text(p.text));
      std::vector<std::string> pents;
      for (const auto& m : p.entity_mentions) pents.push_back(m.entity_id);
      pe.add(p.unit_id(), pents);
    }
  }
  res.doc_words = std::move(dw).finish();
  res.doc_entities = std::move(de).finish();
  res.passage_words = std::move(pw).finish();
  res.passage_entities = std::move(pe).finish();
  return res;
}

void save_indexes(const Resources& res, const std::filesystem::path& dir) {
  res.doc_words.save(dir / "doc-word");
  res.doc_entities.save(dir / "doc-entity");
  res.passage_words.save(dir / "passage-word");
  res.passage_entities.save(dir / "passage-entity");
  std::ofstream meta(dir / "meta.txt", std::ios::binary | std::ios::trunc);
  if (!meta) fail(ErrorKind::Io, "cannot write " + (dir / "meta.txt").string());
  meta << "documents = " << res.corpus.size() << "\npassages = " << res.passage_words.n_units()
       << "\ndocument_fields = title+body\n";
}

Resources load_resources(const PipelineConfig& cfg) {
  Resources res;
  auto loaded = load_corpus(cfg.corpus);
  res.corpus = Corpus(std::move(loaded.documents), cfg.shard);
  res.doc_words = InvertedIndex::load(cfg.index_dir / "doc-word");
  res.doc_entities = InvertedIndex::load(cfg.index_dir / "doc-entity");
  res.passage_words = InvertedIndex::load(cfg.index_dir / "passage-word");
  res.passage_entities = InvertedIndex::load(cfg.index_dir / "passage-entity");
  if (res.doc_words.n_units() != res.corpus.size())
    fail(ErrorKind::Config, "index was built from a different corpus");
  std::size_t n_passages = 0;
  for (const auto& d : res.corpus.documents()) n_passages += res.corpus.passages_of(d.doc_id).size();
  if (res.passage_words.n_units() != n_passages)
    fail(ErrorKind::Config, "passage index does not match window/stride of this config");
  if (!cfg.qrels.empty()) res.qrels = load_qrels(cfg.qrels);
  return res;
}

std::unique_ptr<Scorer> make_scorer(const PipelineConfig& cfg, const Resources& res, const ScoredRun* context) {
  ExternalScorerOptions ext{std::chrono::milliseconds(cfg.scorer_timeout_ms), cfg.scorer_retries};
  std::string spec = cfg.scorer;
  if (spec == "external") {
    const char* env = std::getenv(kScorerEndpointEnv);
    if (!env || !*env) fail(ErrorKind::Config, std::string("scorer = external but ") + kScorerEndpointEnv + " is unset");
    spec = env;
  }
  if (spec == "lexical") return std::make_unique<LexicalScorer>();
  if (spec == "oracle") {
    if (!res.qrels) fail(ErrorKind::Config, "oracle scorer requires qrels");
    return std::make_unique<QrelsOracleScorer>(*res.qrels);
  }
  if (spec == "identity") {
    if (!context) fail(ErrorKind::Config, "identity scorer needs the run being re-ranked");
    return std::make_unique<IdentityScorer>(*context);
  }
  if (spec.starts_with("process:")) return std::make_unique<ProcessScorer>(spec.substr(8), ext);
  if (spec.starts_with("http://") || spec.starts_with("https://")) return std::make_unique<HttpScorer>(spec, ext);
  fail(ErrorKind::Config, "unknown scorer: " + spec);
}

// ---------------------------------------------------------------------------
// Pipelines

std::vector<std::string> stage_names(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::Traditional: return {"bm25", "expand", "rerank"};
    case PipelineKind::NlmFeedback: return {"bm25", "rerank", "expand"};
    case PipelineKind::NlmFeedbackRerank: return {"bm25", "rerank", "expand", "rerank2"};
    case PipelineKind::Adaptive: return {"bm25", "adaptive"};
  }
  return {};
}

PipelineRunner::PipelineRunner(const Resources& res, PipelineConfig base) : res_(res), base_(std::move(base)) {}

bool PipelineRunner::cache_applies(const PipelineConfig& cfg) const {
  return cfg.bm25.k1 == base_.bm25.k1 && cfg.bm25.b == base_.bm25.b && cfg.depth == base_.depth &&
         cfg.scorer == base_.scorer && cfg.qrels == base_.qrels;
}

void PipelineRunner::prepare(const std::vector<Query>& queries) {
  const bool needs_rerank =
      base_.pipeline == PipelineKind::NlmFeedback || base_.pipeline == PipelineKind::NlmFeedbackRerank;
  for (const auto& q : queries) {
    Cached c;
    auto orig = original_query(q, VocabKind::Word);
    if (orig.usable()) c.first_stage = bm25_search(res_.doc_words, orig, base_.bm25, base_.depth);
    c.first_stage.query_id = q.query_id;
    if (needs_rerank && !c.first_stage.entries.empty()) {
      auto scorer = make_scorer(base_, res_, &c.first_stage);
      c.first_rerank = rerank_run(q, c.first_stage, res_.corpus, *scorer, base_.depth,
                                  {base_.scorer_batch, "rerank"}, &c.trace);
    }
    cache_[q.query_id] = std::move(c);
  }
}

QueryOutput PipelineRunner::run_query(const Query& query, const PipelineConfig& cfg) const {
  QueryOutput out;
  out.stats.qid = query.query_id;
  const auto indexes = res_.index_set();
  const Cached* cached = nullptr;
  if (cache_applies(cfg))
    if (auto it = cache_.find(query.query_id); it != cache_.end()) cached = &it->second;

  ScoredRun first;
  if (cached) {
    first = cached->first_stage;
  } else {
    auto orig = original_query(query, VocabKind::Word);
    if (orig.usable()) first = bm25_search(res_.doc_words, orig, cfg.bm25, cfg.depth);
    first.query_id = query.query_id;
  }
  out.stages["bm25"] = first;
  auto finish = [&] {
    for (const auto& name : stage_names(cfg.pipeline)) {
      auto& r = out.stages[name];
      r.query_id = query.query_id;
    }
    out.stats.unique_scored = unique_scored_count(out.trace);
    if (cfg.pipeline != PipelineKind::Adaptive) out.stats.batches = out.trace.events.size();
    return out;
  };
  if (first.entries.empty()) return finish();

  const RerankOptions ropts{cfg.scorer_batch, "rerank"};
  auto expand_from = [&](const PassageScores& table, const char* source) {
    auto fb = build_feedback(feedback_candidates(table, cfg.expansion.unit_kind), cfg.expansion.fb_docs,
                             cfg.expansion.unit_kind, source);
    auto exp = expand_and_retrieve(query, fb, indexes, cfg.expansion, cfg.bm25);
    if (exp.fallback) ++out.stats.fallbacks;
    exp.run.query_id = query.query_id;
    return std::move(exp.run);
  };

  switch (cfg.pipeline) {
    case PipelineKind::Traditional: {
      IdentityScorer identity(first);
      auto prf = rerank_run(query, first, res_.corpus, identity, cfg.depth, ropts);
      out.stages["expand"] = expand_from(prf.passage_scores, "bm25");
      auto scorer = make_scorer(cfg, res_, &out.stages["expand"]);
      out.stages["rerank"] =
          rerank_run(query, out.stages["expand"], res_.corpus, *scorer, cfg.depth, ropts, &out.trace).run;
      break;
    }
    case PipelineKind::NlmFeedback:
    case PipelineKind::NlmFeedbackRerank: {
      RerankResult rr;
      if (cached && cached->first_rerank) {
        rr = *cached->first_rerank;
        out.trace = cached->trace;
      } else {
        auto scorer = make_scorer(cfg, res_, &first);
        rr = rerank_run(query, first, res_.corpus, *scorer, cfg.depth, ropts, &out.trace);
      }
      out.stages["rerank"] = rr.run;
      out.stages["expand"] = expand_from(rr.passage_scores, "rerank");
      if (cfg.pipeline == PipelineKind::NlmFeedbackRerank) {
        auto scorer = make_scorer(cfg, res_, &out.stages["expand"]);
        out.stages["rerank2"] = rerank_run(query, out.stages["expand"], res_.corpus, *scorer, cfg.depth,
                                           {cfg.scorer_batch, "rerank2"}, &out.trace)
                                    .run;
      }
      break;
    }
    case PipelineKind::Adaptive: {
      auto scorer = make_scorer(cfg, res_, &first);
      AdaptiveOptions aopts{cfg.budget, cfg.batch, cfg.frontier, cfg.gar_terms, cfg.scorer_batch};
      auto ar = adaptive_expand(query, first, res_.corpus, *scorer, indexes, cfg.expansion, cfg.bm25, aopts);
      out.stages["adaptive"] = std::move(ar.run);
      out.trace = std::move(ar.trace);
      out.stats = ar.stats;
      break;
    }
  }
  return finish();
}

PipelineOutput PipelineRunner::run(const std::vector<Query>& queries, const PipelineConfig& cfg) const {
  PipelineOutput out;
  out.stage_order = stage_names(cfg.pipeline);
  out.final_stage = out.stage_order.back();
  for (const auto& name : out.stage_order) out.stage_runs[name];
  for (const auto& q : queries) {
    auto qo = run_query(q, cfg);
    for (const auto& name : out.stage_order) out.stage_runs[name][q.query_id] = std::move(qo.stages[name]);
    out.stats.push_back(qo.stats);
  }
  return out;
}

void write_pipeline_output(const PipelineOutput& out, const PipelineConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto hash = config_hash(cfg);
  for (const auto& stage : out.stage_order) {
    auto tag = "lee-" + std::string(to_string(cfg.pipeline)) + "-" + stage;
    auto header = "config_hash=" + hash + " pipeline=" + std::string(to_string(cfg.pipeline)) + " stage=" + stage;
    write_trec_run(dir / (stage + ".run"), out.stage_runs.at(stage), tag, header);
  }
  std::ofstream stats(dir / "stats.jsonl", std::ios::binary | std::ios::trunc);
  if (!stats) fail(ErrorKind::Io, "cannot write " + (dir / "stats.jsonl").string());
  for (const auto& s : out.stats) stats << stats_json(s) << "\n";
  std::ofstream cfg_out(dir / "config.txt", std::ios::binary | std::ios::trunc);
  cfg_out << "# config_hash=" << hash << "\n" << serialize_config(cfg);
}

} // namespace lee
