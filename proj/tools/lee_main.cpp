// Command-line front end: indexing, retrieval stages, pipelines, sweeps and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lee/adaptive.hpp"
#include "lee/corpus.hpp"
#include "lee/error.hpp"
#include "lee/eval.hpp"
#include "lee/expansion.hpp"
#include "lee/index.hpp"
#include "lee/pipeline.hpp"
#include "lee/reranker.hpp"
#include "lee/sweep.hpp"

namespace fs = std::filesystem;
using namespace lee;

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kValidation = 3 };

struct ConfigFlags {
  std::string file;
  std::vector<std::pair<std::string, std::string>> values;

  PipelineConfig resolve() const {
    PipelineConfig cfg = file.empty() ? PipelineConfig{} : load_config(file);
    for (const auto& [k, v] : values) set_config_value(cfg, k, v);
    return cfg;
  }
};

void add_config_flags(CLI::App* app, ConfigFlags& flags) {
  app->add_option("--config", flags.file, "key = value config file");
  for (const auto& key : config_keys()) {
    std::string names = "--" + key;
    std::string dashed = key;
    for (auto& c : dashed)
      if (c == '_') c = '-';
    if (dashed != key) names += ",--" + dashed;
    app->add_option_function<std::string>(
        names, [&flags, key](const std::string& v) { flags.values.emplace_back(key, v); },
        "config field " + key);
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") std::cout << text;
  else write_file(out_path, text);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void require(const fs::path& p, const char* what) {
  if (p.empty()) fail(ErrorKind::Config, std::string(what) + " is required");
}

// Corpus and optional qrels only; enough for scoring stages.
Resources corpus_resources(const PipelineConfig& cfg) {
  require(cfg.corpus, "corpus");
  Resources res;
  res.corpus = Corpus(load_corpus(cfg.corpus).documents, cfg.shard);
  if (!cfg.qrels.empty()) res.qrels = load_qrels(cfg.qrels);
  return res;
}

std::vector<Query> load_queries(const PipelineConfig& cfg) {
  require(cfg.topics, "topics");
  return load_topics(cfg.topics);
}

using PassageTables = std::map<std::string, PassageScores>;

std::string passage_tables_json(const PassageTables& tables) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [qid, table] : tables) {
    auto& q = j[qid];
    q = nlohmann::ordered_json::object();
    for (const auto& [doc, scores] : table) q[doc] = scores;
  }
  return j.dump() + "\n";
}

PassageTables parse_passage_tables(const std::string& text) {
  PassageTables out;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& [qid, docs] : j.items())
      for (const auto& [doc, scores] : docs.items()) out[qid][doc] = scores.get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Validation, std::string("bad passage score file: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_index(const ConfigFlags& flags) {
  auto cfg = flags.resolve();
  require(cfg.corpus, "corpus");
  require(cfg.index_dir, "index_dir");
  auto loaded = load_corpus(cfg.corpus);
  if (loaded.clamped_mentions)
    std::cerr << "warning: " << loaded.clamped_mentions << " entity mention(s) clamped to body length\n";
  auto res = build_resources(std::move(loaded.documents), cfg.shard);
  save_indexes(res, cfg.index_dir);
  std::cerr << "indexed " << res.corpus.size() << " documents, " << res.passage_words.n_units() << " passages, "
            << res.doc_words.n_terms() << " word terms, " << res.doc_entities.n_terms() << " entities\n";
  return kOk;
}

int cmd_shard(const ConfigFlags& flags, const std::string& out) {
  auto cfg = flags.resolve();
  require(cfg.corpus, "corpus");
  Corpus corpus(load_corpus(cfg.corpus).documents, cfg.shard);
  std::string text;
  for (const auto& doc : corpus.documents()) {
    for (const auto& p : corpus.passages_of(doc.doc_id)) {
      nlohmann::ordered_json j;
      j["pid"] = p.unit_id();
      j["doc_id"] = p.doc_id;
      j["passage_idx"] = p.passage_idx;
      j["first_sentence"] = p.first_sentence;
      j["last_sentence"] = p.last_sentence;
      j["text"] = p.text;
      auto ents = nlohmann::ordered_json::array();
      for (const auto& m : p.entity_mentions) ents.push_back(m.entity_id);
      j["entities"] = std::move(ents);
      text += j.dump() + "\n";
    }
  }
  emit(out, text);
  return kOk;
}

int cmd_search(const ConfigFlags& flags, const std::string& vocab, const std::string& unit, const std::string& out,
               const std::string& tag) {
  auto cfg = flags.resolve();
  require(cfg.index_dir, "index_dir");
  const auto kind = parse_vocab_kind(vocab);
  const auto unit_kind = parse_unit_kind(unit);
  const auto sub = std::string(unit_kind == UnitKind::Document ? "doc-" : "passage-") +
                   (kind == VocabKind::Word ? "word" : "entity");
  auto index = InvertedIndex::load(cfg.index_dir / sub);
  RunSet runs;
  for (const auto& q : load_queries(cfg)) {
    auto wq = original_query(q, kind);
    ScoredRun run;
    if (wq.usable()) run = bm25_search(index, wq, cfg.bm25, cfg.depth);
    run.query_id = q.query_id;
    runs[q.query_id] = std::move(run);
  }
  emit(out, format_trec_run(runs, tag, "config_hash=" + config_hash(cfg) + " stage=bm25"));
  return kOk;
}

int cmd_rerank(const ConfigFlags& flags, const std::string& run_path, const std::string& out,
               const std::string& table_out, const std::string& tag) {
  auto cfg = flags.resolve();
  auto res = corpus_resources(cfg);
  auto input = load_trec_run(run_path);
  RunSet runs;
  PassageTables tables;
  for (const auto& q : load_queries(cfg)) {
    auto it = input.find(q.query_id);
    if (it == input.end()) continue;
    auto scorer = make_scorer(cfg, res, &it->second);
    auto rr = rerank_run(q, it->second, res.corpus, *scorer, cfg.depth, {cfg.scorer_batch, "rerank"});
    rr.run.query_id = q.query_id;
    runs[q.query_id] = std::move(rr.run);
    tables[q.query_id] = std::move(rr.passage_scores);
  }
  emit(out, format_trec_run(runs, tag, "config_hash=" + config_hash(cfg) + " stage=rerank"));
  if (!table_out.empty()) write_file(table_out, passage_tables_json(tables));
  return kOk;
}

int cmd_expand(const ConfigFlags& flags, const std::string& run_path, const std::string& table_path,
               const std::string& out_dir) {
  auto cfg = flags.resolve();
  require(cfg.index_dir, "index_dir");
  require(out_dir, "--out-dir");
  validate(cfg.expansion);
  cfg.pipeline = PipelineKind::Traditional;
  auto res = load_resources(cfg);
  auto input = load_trec_run(run_path);
  PassageTables tables;
  if (!table_path.empty()) tables = parse_passage_tables(read_file(table_path));
  const auto hash = config_hash(cfg);
  RunSet runs;
  std::size_t fallbacks = 0;
  for (const auto& q : load_queries(cfg)) {
    auto it = input.find(q.query_id);
    if (it == input.end()) continue;
    PassageScores table;
    if (auto t = tables.find(q.query_id); t != tables.end()) {
      table = t->second;
    } else {
      IdentityScorer identity(it->second);
      table = rerank_run(q, it->second, res.corpus, identity, cfg.depth).passage_scores;
    }
    auto fb = build_feedback(feedback_candidates(table, cfg.expansion.unit_kind), cfg.expansion.fb_docs,
                             cfg.expansion.unit_kind, "input");
    auto outcome = expand_and_retrieve(q, fb, res.index_set(), cfg.expansion, cfg.bm25);
    fallbacks += outcome.fallback;
    write_file(fs::path(out_dir) / (q.query_id + ".word.q"), format_expanded_query(outcome.word_query, hash));
    write_file(fs::path(out_dir) / (q.query_id + ".entity.q"), format_expanded_query(outcome.entity_query, hash));
    outcome.run.query_id = q.query_id;
    runs[q.query_id] = std::move(outcome.run);
  }
  write_trec_run(fs::path(out_dir) / "expand.run", runs, "lee-expand", "config_hash=" + hash + " stage=expand");
  if (fallbacks) std::cerr << "note: " << fallbacks << " query(ies) fell back to a reduced expansion\n";
  return kOk;
}

int cmd_duet(const ConfigFlags& flags, const std::string& query_dir, const std::string& out) {
  auto cfg = flags.resolve();
  require(cfg.index_dir, "index_dir");
  auto words = InvertedIndex::load(cfg.index_dir / "doc-word");
  auto entities = InvertedIndex::load(cfg.index_dir / "doc-entity");
  RunSet runs;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(query_dir)) {
    auto name = e.path().filename().string();
    if (name.ends_with(".word.q")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& wpath : files) {
    auto name = wpath.filename().string();
    auto qid = name.substr(0, name.size() - std::string(".word.q").size());
    auto wq = parse_expanded_query(read_file(wpath));
    WeightedQuery eq{VocabKind::Entity, {}};
    if (auto epath = wpath.parent_path() / (qid + ".entity.q"); fs::exists(epath))
      eq = parse_expanded_query(read_file(epath));
    ScoredRun run;
    if (wq.usable() || eq.usable())
      run = duet_retrieve(wq, eq, words, entities,
                          {cfg.expansion.lambda, cfg.expansion.k_lee, cfg.expansion.run_depth, cfg.bm25})
                .run;
    run.query_id = qid;
    runs[qid] = std::move(run);
  }
  emit(out, format_trec_run(runs, "lee-duet", "config_hash=" + config_hash(cfg) + " stage=duet"));
  return kOk;
}

int cmd_run(const ConfigFlags& flags, std::optional<PipelineKind> force) {
  auto cfg = flags.resolve();
  if (force) cfg.pipeline = *force;
  validate(cfg, true);
  require(cfg.output_dir, "output_dir");
  auto queries = load_queries(cfg);
  auto res = load_resources(cfg);
  PipelineRunner runner(res, cfg);
  auto out = runner.run(queries, cfg);
  write_pipeline_output(out, cfg, cfg.output_dir);
  std::size_t scored = 0;
  for (const auto& s : out.stats) scored += s.unique_scored;
  std::cerr << "wrote " << out.stage_order.size() << " stage run(s) for " << queries.size() << " queries to "
            << cfg.output_dir.string() << "; " << scored << " documents scored in total\n";
  return kOk;
}

int cmd_evaluate(const std::string& run_path, const std::string& qrels_path, const std::string& measures,
                 std::size_t depth, const std::string& compare) {
  auto qrels = load_qrels(qrels_path);
  auto ms = split_list(measures);
  auto report = evaluate_run(load_trec_run(run_path), qrels, ms, depth);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << format_report(report);
  if (compare.empty()) return kOk;
  auto other = evaluate_run(load_trec_run(compare), qrels, ms, depth);
  for (const auto& m : ms) {
    std::vector<double> a, b;
    for (const auto& [qid, row] : report.per_query) {
      a.push_back(row.at(m));
      b.push_back(other.per_query.at(qid).at(m));
    }
    auto t = paired_t_test(a, b);
    char line[256];
    std::snprintf(line, sizeof line, "ttest\t%s\tt=%.6f\tp=%.6f\tsignificant=%s\n", m.c_str(), t.t, t.p,
                  t.significant ? "yes" : "no");
    std::cout << line;
  }
  return kOk;
}

int cmd_sweep(const ConfigFlags& flags, const std::string& grid_path, bool full_grid, bool plan_only,
              std::size_t rounds, std::size_t workers, const std::string& target) {
  auto cfg = flags.resolve();
  auto grid = grid_path.empty() ? default_grid() : load_grid(grid_path);
  if (plan_only) {
    std::cout << "axes\t" << grid.size() << "\npoints\t" << grid_size(grid) << "\n";
    return kOk;
  }
  validate(cfg, true);
  require(cfg.folds, "folds");
  require(cfg.qrels, "qrels");
  require(cfg.output_dir, "output_dir");
  auto queries = load_queries(cfg);
  auto folds = load_folds(cfg.folds);
  auto res = load_resources(cfg);
  PipelineRunner runner(res, cfg);
  runner.prepare(queries);
  SweepOptions opts;
  opts.mode = full_grid ? SweepMode::FullGrid : SweepMode::CoordinateDescent;
  opts.rounds = rounds;
  opts.workers = workers;
  opts.target = target;
  auto report = sweep(runner, queries, *res.qrels, cfg, grid, folds, opts);
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir / "sweep.json", sweep_report_json(report) + "\n");
  write_trec_run(cfg.output_dir / "test.run", report.test_runs, "lee-sweep",
                 "config_hash=" + config_hash(cfg) + " stage=sweep-test");
  write_file(cfg.output_dir / "test.eval", format_report(report.test_eval));
  for (const auto& f : report.folds) {
    std::cerr << "fold " << f.fold << ": " << f.evaluated.size() << " point(s), chosen "
              << (f.chosen ? f.chosen->label : std::string("none")) << "\n";
  }
  return kOk;
}

int cmd_validate_run(const std::string& run_path, const std::string& tag) {
  auto v = validate_trec_run(read_file(run_path), tag);
  for (const auto& p : v.problems) std::cout << p << "\n";
  std::cout << (v.ok ? "ok" : "invalid") << "\n";
  return v.ok ? kOk : kValidation;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kConfig;
    case ErrorKind::Validation: return kValidation;
    default: return kRuntime;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent entity expansion retrieval toolkit"};
  app.require_subcommand(1);

  ConfigFlags index_flags, shard_flags, search_flags, rerank_flags, expand_flags, duet_flags, adaptive_flags,
      run_flags, sweep_flags;
  std::string out, run_path, table_path, out_dir, query_dir, tag = "lee", expected_tag;
  std::string vocab = "word", unit = "document";
  std::string qrels_path, measures = "map,ndcg,recall@1000", compare, grid_path, target = "recall@1000";
  std::size_t depth = 1000, rounds = 2, workers = 1;
  bool full_grid = false, plan_only = false;

  auto* index = app.add_subcommand("index", "build and persist the four indexes");
  add_config_flags(index, index_flags);

  auto* shard = app.add_subcommand("shard", "write passages as JSON lines");
  add_config_flags(shard, shard_flags);
  shard->add_option("--out", out, "output file (default stdout)");

  auto* search = app.add_subcommand("search", "BM25 over one index with the original queries");
  add_config_flags(search, search_flags);
  search->add_option("--vocab", vocab, "word | entity");
  search->add_option("--unit", unit, "document | passage");
  search->add_option("--out", out, "run file (default stdout)");
  search->add_option("--tag", tag, "run tag");

  auto* rerank = app.add_subcommand("rerank", "max-passage re-ranking of a run");
  add_config_flags(rerank, rerank_flags);
  rerank->add_option("--run", run_path, "input run")->required();
  rerank->add_option("--out", out, "run file (default stdout)");
  rerank->add_option("--passage-scores", table_path, "write the passage score table as JSON");
  rerank->add_option("--tag", tag, "run tag");

  auto* expand = app.add_subcommand("expand", "build expanded queries from a feedback run and retrieve");
  add_config_flags(expand, expand_flags);
  expand->add_option("--run", run_path, "feedback run")->required();
  expand->add_option("--passage-scores", table_path, "passage score table from rerank");
  expand->add_option("--out-dir", out_dir, "query files and expand.run")->required();

  auto* duet = app.add_subcommand("duet", "fuse word and entity retrieval for saved expanded queries");
  add_config_flags(duet, duet_flags);
  duet->add_option("--query-dir", query_dir, "directory of <qid>.word.q / <qid>.entity.q")->required();
  duet->add_option("--out", out, "run file (default stdout)");

  auto* adaptive = app.add_subcommand("adaptive", "run the adaptive expansion pipeline");
  add_config_flags(adaptive, adaptive_flags);

  auto* run = app.add_subcommand("run", "run the configured pipeline");
  add_config_flags(run, run_flags);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a run against qrels");
  evaluate->add_option("--run", run_path, "run file")->required();
  evaluate->add_option("--qrels", qrels_path, "qrels file")->required();
  evaluate->add_option("--measures", measures, "comma-separated: map, ndcg, ndcg@k, recall@k");
  evaluate->add_option("--depth", depth, "evaluation depth");
  evaluate->add_option("--compare", compare, "second run for a paired t-test per measure");

  auto* sweep_cmd = app.add_subcommand("sweep", "grid search with cross-validation folds");
  add_config_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--grid", grid_path, "grid file (default: the standard six-axis grid)");
  sweep_cmd->add_flag("--full-grid", full_grid, "evaluate every grid point instead of coordinate descent");
  sweep_cmd->add_flag("--plan-only", plan_only, "print the number of grid points and exit");
  sweep_cmd->add_option("--rounds", rounds, "coordinate descent rounds");
  sweep_cmd->add_option("--workers", workers, "parallel grid-point evaluations");
  sweep_cmd->add_option("--target", target, "selection measure");

  auto* validate_run = app.add_subcommand("validate-run", "check a TREC run file");
  validate_run->add_option("--run", run_path, "run file")->required();
  validate_run->add_option("--tag", expected_tag, "expected tag (empty: any)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (index->parsed()) return cmd_index(index_flags);
    if (shard->parsed()) return cmd_shard(shard_flags, out);
    if (search->parsed()) return cmd_search(search_flags, vocab, unit, out, tag);
    if (rerank->parsed()) return cmd_rerank(rerank_flags, run_path, out, table_path, tag);
    if (expand->parsed()) return cmd_expand(expand_flags, run_path, table_path, out_dir);
    if (duet->parsed()) return cmd_duet(duet_flags, query_dir, out);
    if (adaptive->parsed()) return cmd_run(adaptive_flags, PipelineKind::Adaptive);
    if (run->parsed()) return cmd_run(run_flags, std::nullopt);
    if (evaluate->parsed()) return cmd_evaluate(run_path, qrels_path, measures, depth, compare);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, grid_path, full_grid, plan_only, rounds, workers, target);
    if (validate_run->parsed()) return cmd_validate_run(run_path, expected_tag);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kConfig;
}
