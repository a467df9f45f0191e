// One PASS/FAIL line per acceptance criterion; exit status is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "lee/adaptive.hpp"
#include "lee/eval.hpp"
#include "lee/expansion.hpp"
#include "lee/pipeline.hpp"
#include "lee/sweep.hpp"
#include "oracles.hpp"
#include "random_fixtures.hpp"
#include "support.hpp"

using namespace lee;

namespace {

constexpr std::uint32_t kSeed = 20240611;

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream ss;
    ss.precision(17);
    ss << what << ": got " << got << " want " << want;
    expect(std::fabs(got - want) <= tol, ss.str());
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void compare_ranking(Check& c, const oracle::Ranking& want, const std::vector<WeightedTerm>& got, double tol,
                     const std::string& what) {
  c.expect(want.size() == got.size(), what + ": size");
  for (std::size_t i = 0; i < std::min(want.size(), got.size()); ++i) {
    c.expect(want[i].first == got[i].term, what + ": term order");
    c.near(got[i].weight, want[i].second, tol, what);
  }
}

void compare_run(Check& c, const oracle::Ranking& want, const ScoredRun& got, double tol, const std::string& what) {
  c.expect(want.size() == got.entries.size(), what + ": size");
  for (std::size_t i = 0; i < std::min(want.size(), got.entries.size()); ++i) {
    c.expect(want[i].first == got.entries[i].unit_id, what + ": ranking");
    c.near(got.entries[i].score, want[i].second, tol, what);
  }
}

Check criterion1(std::string& summary) {
  Check c;
  const auto t0 = Clock::now();
  std::mt19937 rng(kSeed);
  const int n = 200;
  for (int trial = 0; trial < n; ++trial) {
    const bool idf = trial % 2 == 0;
    auto wf = testkit::model_fixture(rng, VocabKind::Word);
    auto w_got = unigram_weights(wf.feedback, wf.index, idf);
    auto w_want = oracle::word_model(wf.units, wf.feedback_pairs, idf);
    c.expect(w_got.size() == w_want.size(), "word_model support");
    for (const auto& [t, v] : w_want) c.near(w_got.count(t) ? w_got.at(t) : -1.0, v, 1e-9, "word_model " + t);
    const std::size_t fb_terms = 1 + rng() % 12;
    auto want_model = oracle::truncate_normalize(w_want, fb_terms);
    try {
      ExpansionConfig cfg;
      cfg.fb_terms = fb_terms;
      cfg.use_idf_factor = idf;
      compare_ranking(c, want_model, word_relevance_model(wf.feedback, wf.index, cfg).weights, 1e-9, "word_model model");
    } catch (const DegenerateModel&) {
      c.expect(want_model.empty(), "word_model model unexpectedly degenerate");
    }

    auto ef = testkit::model_fixture(rng, VocabKind::Entity);
    auto p_got = entity_pair_model(ef.feedback, ef.index);
    auto p_want = oracle::entity_pairs(ef.units, ef.feedback_pairs);
    c.expect(p_got.size() == p_want.size(), "entity_pairs support");
    for (const auto& [k, v] : p_want) c.near(p_got.count(k) ? p_got.at(k) : -1.0, v, 1e-9, "entity_pairs");
    const double beta = (rng() % 11) / 10.0;
    auto e_got = entity_weights(ef.feedback, ef.index, beta, true, true);
    auto e_want = oracle::entity_mixture(ef.units, ef.feedback_pairs, beta, true);
    c.expect(e_got.size() == e_want.size(), "entity_mixture support");
    for (const auto& [t, v] : e_want) c.near(e_got.count(t) ? e_got.at(t) : -1.0, v, 1e-9, "entity_mixture " + t);

    auto df = testkit::duet_fixture(rng);
    const double lambda = (rng() % 11) / 10.0;
    const std::size_t depth = 1 + rng() % 10;
    auto duet = duet_retrieve(df.word_query, df.entity_query, df.word_index, df.entity_index, {lambda, 100, depth, {}});
    auto d_want = oracle::duet_fusion(oracle::bm25(df.words, testkit::as_pairs(df.word_query), 0.9, 0.4, 100),
                              oracle::bm25(df.entities, testkit::as_pairs(df.entity_query), 0.9, 0.4, 100), lambda,
                              depth);
    const double lam = df.entity_query.usable() ? lambda : 1.0;
    if (lam == lambda) compare_run(c, d_want, duet.run, 1e-9, "duet_fusion");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime over 10 s");
  summary = std::to_string(n) + " fixtures per model, tol 1e-9, " + std::to_string(secs).substr(0, 5) + " s";
  return c;
}

Check criterion2(std::string& summary) {
  Check c;
  std::mt19937 rng(kSeed + 1);
  const int n = 200;
  for (int trial = 0; trial < n; ++trial) {
    auto df = testkit::duet_fixture(rng);
    auto word = bm25_search(df.word_index, df.word_query, {}, 100);
    auto ent = bm25_search(df.entity_index, df.entity_query, {}, 100);
    auto one = duet_retrieve(df.word_query, df.entity_query, df.word_index, df.entity_index, {1.0, 100, 100, {}});
    c.expect(unit_ids(one.run) == unit_ids(word), "lambda=1 differs from word-only");
    if (df.entity_query.usable()) {
      auto zero = duet_retrieve(df.word_query, df.entity_query, df.word_index, df.entity_index, {0.0, 100, 100, {}});
      c.expect(unit_ids(zero.run) == unit_ids(ent), "lambda=0 differs from entity-only");
    }

    auto ef = testkit::model_fixture(rng, VocabKind::Entity);
    c.expect(entity_weights(ef.feedback, ef.index, 0.0, true, true) == unigram_weights(ef.feedback, ef.index, true),
             "beta=0 differs from unigram");

    Query q{"q", "", {}};
    for (int k = 0, len = 1 + static_cast<int>(rng() % 4); k < len; ++k)
      q.entity_ids.push_back("E" + std::to_string(rng() % 8));
    auto wf = testkit::model_fixture(rng, VocabKind::Entity);
    try {
      auto model = entity_relevance_model(wf.feedback, wf.index, ExpansionConfig{});
      c.expect(make_expanded_query(q, &model, 1.0, VocabKind::Entity) == original_query(q, VocabKind::Entity),
               "w0=1 differs from original");
    } catch (const DegenerateModel&) {
    }
  }
  summary = std::to_string(n) + " fixtures, exact equality";
  return c;
}

Check criterion3(std::string& summary) {
  Check c;
  std::mt19937 rng(kSeed + 2);
  const int n = 200;
  for (int trial = 0; trial < n; ++trial) {
    const std::size_t n_docs = 1 + rng() % 50;
    const std::size_t n_terms = 2 + rng() % 40;
    std::vector<oracle::Unit> units;
    for (std::size_t i = 0; i < n_docs; ++i) {
      oracle::Unit u{"d" + std::to_string(i), {}};
      for (std::size_t k = 0, len = rng() % 25; k < len; ++k) u.tokens.push_back("t" + std::to_string(rng() % n_terms));
      units.push_back(std::move(u));
    }
    auto idx = testkit::index_of(units, VocabKind::Word);
    auto q = testkit::random_query(rng, VocabKind::Word, "t", n_terms + 3);
    const Bm25Params p{0.5 + (rng() % 10) / 10.0, (rng() % 11) / 10.0};
    const std::size_t k = 1 + rng() % 60;
    auto got = bm25_search(idx, q, p, k);
    auto want = oracle::bm25(units, testkit::as_pairs(q), p.k1, p.b, k);
    c.expect(want.size() == got.entries.size(), "result size");
    for (std::size_t i = 0; i < std::min(want.size(), got.entries.size()); ++i) {
      c.expect(want[i].first == got.entries[i].unit_id, "ranking differs at trial " + std::to_string(trial));
      c.near(got.entries[i].score, want[i].second, 1e-12, "score");
    }
  }
  summary = std::to_string(n) + " queries on <= 50 docs";
  return c;
}

Check criterion4(std::string& summary) {
  Check c;
  const auto t0 = Clock::now();
  auto pc = testkit::planted_corpus(20, kSeed);
  auto res = build_resources(pc.docs);
  res.qrels = pc.qrels;
  c.expect(pc.docs.size() == 500 && pc.queries.size() == 20, "fixture shape");

  PipelineConfig cfg;
  cfg.scorer = "oracle";
  cfg.qrels = "planted.qrels";
  auto recall = [&](const RunSet& runs, std::size_t k) {
    auto m = "recall@" + std::to_string(k);
    return evaluate_run(runs, pc.qrels, {m}).aggregate.at(m);
  };
  PipelineRunner runner(res, cfg);
  cfg.pipeline = PipelineKind::Traditional;
  const double trad = recall(runner.run(pc.queries, cfg).stage_runs.at("expand"), 100);
  cfg.pipeline = PipelineKind::NlmFeedback;
  const double nlm = recall(runner.run(pc.queries, cfg).final_runs(), 100);
  c.expect(nlm > trad, "nlm-feedback R@100 not above traditional");

  cfg.pipeline = PipelineKind::Adaptive;
  cfg.budget = 100;
  cfg.batch = 16;
  auto adaptive = runner.run(pc.queries, cfg);
  RunSet plain;
  for (const auto& q : pc.queries) {
    const auto& first = adaptive.stage_runs.at("bm25").at(q.query_id);
    QrelsOracleScorer scorer(pc.qrels);
    auto rr = rerank_run(q, first, res.corpus, scorer, cfg.budget);
    truncate(rr.run, cfg.budget);
    plain[q.query_id] = rr.run;
  }
  const double ad = recall(adaptive.final_runs(), cfg.budget);
  const double pl = recall(plain, cfg.budget);
  c.expect(ad >= pl, "adaptive R@budget below plain re-ranking");
  const double secs = seconds_since(t0);
  c.expect(secs < 120.0, "runtime over 2 min");
  char buf[256];
  std::snprintf(buf, sizeof buf, "R@100 nlm-feedback %.4f > traditional %.4f; R@100 adaptive %.4f >= rerank %.4f; %.1f s",
                nlm, trad, ad, pl, secs);
  summary = buf;
  return c;
}

Check criterion5(std::string& summary) {
  Check c;
  std::vector<Document> docs;
  auto words = testkit::stable_words(60, kSeed);
  std::mt19937 rng(kSeed + 5);
  for (int i = 0; i < 1503; ++i) {
    testkit::DocBuilder b("d" + std::to_string(10000 + i));
    for (int k = 0; k < 6; ++k) b.word(words[rng() % words.size()]);
    b.entity("E" + std::to_string(rng() % 40), words[rng() % words.size()]);
    docs.push_back(b.end_sentence().build());
  }
  auto res = build_resources(docs);
  Query q{"q", words[0] + " " + words[1], {}};
  ScoredRun first{"q", {}}, second{"q", {}};
  for (int i = 0; i < 1000; ++i) first.entries.push_back({docs[i].doc_id, 1000.0 - i, "bm25"});
  for (int i = 503; i < 1503; ++i) second.entries.push_back({docs[i].doc_id, 2000.0 - i, "lee"});
  std::set<std::string> a, b;
  for (const auto& e : first.entries) a.insert(e.unit_id);
  std::size_t overlap = 0;
  for (const auto& e : second.entries) overlap += a.count(e.unit_id);
  c.expect(overlap == 497, "overlap is not 497");

  LexicalScorer scorer;
  ScoringTrace trace;
  rerank_run(q, first, res.corpus, scorer, 1000, {64, "rerank"}, &trace);
  rerank_run(q, second, res.corpus, scorer, 1000, {64, "rerank2"}, &trace);
  const auto two_pass = unique_scored_count(trace);
  c.expect(two_pass == 1503, "two-pass count " + std::to_string(two_pass));

  ScoredRun r0{"q", {}};
  for (int i = 0; i < 1503; ++i) r0.entries.push_back({docs[i].doc_id, 1503.0 - i, "bm25"});
  auto ad = adaptive_expand(q, r0, res.corpus, scorer, res.index_set(), ExpansionConfig{}, {}, {1000, 16});
  c.expect(ad.stats.unique_scored == 1000, "adaptive count " + std::to_string(ad.stats.unique_scored));
  c.expect(unique_scored_count(ad.trace) == 1000, "adaptive trace count");
  summary = "two-pass " + std::to_string(two_pass) + ", adaptive " + std::to_string(ad.stats.unique_scored);
  return c;
}

Check criterion6(std::string& summary) {
  Check c;
  std::vector<std::string> run = {"d1", "d2", "d3"};
  std::map<std::string, int, std::less<>> j{{"d1", 1}, {"d3", 1}};
  c.near(average_precision(run, j, 1000), 0.8333, 1e-4, "AP");
  c.near(ndcg(run, j, 1000), 0.9197, 1e-4, "NDCG");
  c.near(recall_at(run, j, 2), 0.5, 1e-4, "R@2");

  auto qrels = load_qrels(testkit::data_dir() / "eval_ref.qrels");
  auto runs = load_trec_run(testkit::data_dir() / "eval_ref.run");
  auto report = evaluate_run(runs, qrels, {"map", "ndcg", "recall@10", "recall@100", "recall@1000"});
  std::ifstream in(testkit::data_dir() / "eval_ref.tsv");
  std::string m, qid;
  double v;
  std::size_t n = 0;
  double worst = 0;
  while (in >> m >> qid >> v) {
    const double got = report.per_query.count(qid) ? report.per_query.at(qid).at(m) : -1.0;
    worst = std::max(worst, std::fabs(got - v));
    c.near(got, v, 1e-4, m + " " + qid);
    ++n;
  }
  c.expect(n == 250, "reference rows");
  char buf[128];
  std::snprintf(buf, sizeof buf, "toy values + %zu reference rows over 50 queries, max abs diff %.1e", n, worst);
  summary = buf;
  return c;
}

Check criterion7(std::string& summary) {
  Check c;
  auto pc = testkit::planted_corpus(5, kSeed + 7);
  auto res = build_resources(pc.docs);
  testkit::TempDir dir("acceptance");
  testkit::spit(dir / "corpus.jsonl", testkit::corpus_jsonl(pc.docs));
  testkit::spit(dir / "qrels.txt", testkit::qrels_text(pc.qrels));
  save_indexes(res, dir / "index");

  PipelineConfig cfg;
  cfg.pipeline = PipelineKind::NlmFeedbackRerank;
  cfg.scorer = "lexical";
  cfg.corpus = dir / "corpus.jsonl";
  cfg.index_dir = dir / "index";
  cfg.qrels = dir / "qrels.txt";
  auto loaded = load_resources(cfg);
  for (const auto& q : pc.queries) {
    auto wq = original_query(q, VocabKind::Word);
    c.expect(bm25_search(res.doc_words, wq, {}, 1000) == bm25_search(loaded.doc_words, wq, {}, 1000),
             "search differs after reload");
  }
  c.expect(loaded.doc_entities == res.doc_entities && loaded.passage_words == res.passage_words &&
               loaded.passage_entities == res.passage_entities,
           "index differs after reload");

  std::size_t files = 0;
  for (auto kind : {PipelineKind::Traditional, PipelineKind::NlmFeedbackRerank, PipelineKind::Adaptive}) {
    cfg.pipeline = kind;
    cfg.budget = 40;
    for (int rep = 0; rep < 2; ++rep) {
      PipelineRunner runner(loaded, cfg);
      write_pipeline_output(runner.run(pc.queries, cfg), cfg, dir / ("out" + std::to_string(rep)));
    }
    for (const auto& stage : stage_names(kind)) {
      auto a = testkit::slurp(dir / "out0" / (stage + ".run"));
      c.expect(!a.empty() && a == testkit::slurp(dir / "out1" / (stage + ".run")), "run file differs: " + stage);
      c.expect(validate_trec_run(a).ok, "invalid run file: " + stage);
      ++files;
    }
  }
  summary = "index reload equal; " + std::to_string(files) + " run files byte-identical across two executions";
  return c;
}

Check criterion8(std::string& summary) {
  Check c;
  auto grid = default_grid();
  const auto size = grid_size(grid);
  const auto planned = plan_full_grid(grid).size();
  c.expect(size == 291600 && planned == 291600, "grid size");
  summary = "planned " + std::to_string(planned) + " points";
  return c;
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check(std::string&)>>> criteria = {
      {"model oracles", criterion1},   {"endpoint identities", criterion2}, {"bm25 brute force", criterion3},
      {"feedback precision", criterion4}, {"scoring cost", criterion5},        {"evaluation", criterion6},
      {"determinism", criterion7},        {"grid arithmetic", criterion8},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string summary;
    Check c;
    try {
      c = criteria[i].second(summary);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %zu (%s): %s%s%s\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, summary.c_str(),
                c.ok ? "" : " | ", c.ok ? "" : c.detail.c_str());
    failures += c.ok ? 0 : 1;
  }
  return failures;
}
