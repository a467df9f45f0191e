#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "lee/error.hpp"
#include "lee/eval.hpp"
#include "support.hpp"

using namespace lee;

namespace {

std::map<std::string, int, std::less<>> judged(std::initializer_list<std::pair<const std::string, int>> l) {
  return {l.begin(), l.end()};
}

RunSet single(const std::string& qid, const std::vector<std::string>& ids) {
  ScoredRun r{qid, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) r.entries.push_back({ids[i], 10.0 - static_cast<double>(i), "t"});
  return {{qid, r}};
}

} // namespace

TEST(Measures, ThreeDocExample) {
  std::vector<std::string> run = {"d1", "d2", "d3"};
  auto j = judged({{"d1", 1}, {"d3", 1}});
  EXPECT_NEAR(average_precision(run, j, 1000), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(recall_at(run, j, 2), 0.5);
  const double dcg = 1.0 + 1.0 / std::log2(4.0);
  const double idcg = 1.0 + 1.0 / std::log2(3.0);
  EXPECT_NEAR(ndcg(run, j, 1000), dcg / idcg, 1e-15);
  EXPECT_NEAR(ndcg(run, j, 1000), 0.9197, 1e-4);
}

TEST(Measures, PerfectRun) {
  auto j = judged({{"a", 2}, {"b", 1}, {"c", 1}, {"x", 0}});
  std::vector<std::string> run = {"a", "c", "b", "z"};
  EXPECT_DOUBLE_EQ(ndcg(run, j, 1000), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(run, j, 1000), 1.0);
  EXPECT_DOUBLE_EQ(recall_at(run, j, 1000), 1.0);
  std::vector<std::string> swapped = {"b", "a", "c"};
  EXPECT_LT(ndcg(swapped, j, 1000), 1.0);
}

TEST(Measures, DepthCutsRun) {
  auto j = judged({{"a", 1}, {"b", 1}});
  std::vector<std::string> run = {"x", "a", "b"};
  EXPECT_DOUBLE_EQ(recall_at(run, j, 2), 0.5);
  EXPECT_DOUBLE_EQ(average_precision(run, j, 2), 0.25);
}

TEST(Measures, MatchTrecEvalReference) {
  auto qrels = load_qrels(testkit::data_dir() / "eval_ref.qrels");
  auto runs = load_trec_run(testkit::data_dir() / "eval_ref.run");
  std::vector<std::string> measures = {"map", "ndcg", "recall@10", "recall@100", "recall@1000"};
  auto report = evaluate_run(runs, qrels, measures, 1000);
  std::ifstream in(testkit::data_dir() / "eval_ref.tsv");
  std::string m, qid;
  double v;
  std::size_t checked = 0;
  while (in >> m >> qid >> v) {
    ASSERT_TRUE(report.per_query.count(qid)) << qid;
    EXPECT_NEAR(report.per_query.at(qid).at(m), v, 1e-9) << m << " " << qid;
    ++checked;
  }
  EXPECT_EQ(checked, 250u);
}

TEST(Evaluate, AggregationAndWarnings) {
  Qrels q;
  q.set("q1", "a", 1);
  q.set("q2", "b", 1);
  q.set("q3", "c", 0);  // no relevant docs: excluded
  auto runs = single("q1", {"a"});
  runs.merge(single("q9", {"a"}));
  auto report = evaluate_run(runs, q, {"map", "recall@10"});
  EXPECT_EQ(report.per_query.size(), 2u);
  EXPECT_DOUBLE_EQ(report.per_query.at("q2").at("map"), 0.0);  // missing run
  EXPECT_DOUBLE_EQ(report.aggregate.at("map"), 0.5);
  EXPECT_EQ(report.warnings.size(), 1u);
  EXPECT_THROW(evaluate_run(single("zz", {"a"}), q, {"map"}), Error);
  EXPECT_THROW(evaluate_run(runs, q, {"bogus"}), Error);
}

TEST(Evaluate, RankBasedAndStableUnderTailPermutation) {
  std::mt19937 rng(5);
  Qrels q;
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) {
    ids.push_back("d" + std::to_string(i));
    if (i % 7 == 0) q.set("q", ids.back(), 1 + i % 2);
  }
  std::shuffle(ids.begin(), ids.end(), rng);
  auto runs = single("q", ids);
  std::vector<std::string> ms = {"map", "ndcg", "recall@1000"};
  auto base = evaluate_run(runs, q, ms);
  auto scaled = runs;
  for (auto& e : scaled["q"].entries) e.score = 3.0 * e.score + 7.0;
  EXPECT_EQ(evaluate_run(scaled, q, ms).per_query, base.per_query);
  std::size_t last_rel = 0;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (q.grade("q", ids[i]) > 0) last_rel = i;
  auto permuted = ids;
  std::reverse(permuted.begin() + static_cast<std::ptrdiff_t>(last_rel) + 1, permuted.end());
  auto p = evaluate_run(single("q", permuted), q, ms);
  EXPECT_DOUBLE_EQ(p.per_query["q"]["map"], base.per_query["q"]["map"]);
  EXPECT_DOUBLE_EQ(p.per_query["q"]["recall@1000"], base.per_query["q"]["recall@1000"]);
  for (const auto& [_, v] : base.per_query["q"]) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(format_report(base), format_report(evaluate_run(runs, q, ms)));
}

TEST(TTest, Examples) {
  std::vector<double> a = {0.3, 0.5, 0.7};
  auto same = paired_t_test(a, a);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  EXPECT_FALSE(same.significant);

  std::vector<double> c = {0.1, 0.1, 0.1, 0.1}, z = {0, 0, 0, 0};
  auto certain = paired_t_test(c, z);
  EXPECT_TRUE(certain.significant);
  EXPECT_EQ(certain.p, 0.0);

  std::vector<double> d = {0.2, -0.1, 0.3, 0.1, 0.0}, zero5(5, 0.0);
  auto r = paired_t_test(d, zero5);
  EXPECT_NEAR(r.t, 1.4142135623730951, 1e-12);
  EXPECT_NEAR(r.p, 0.23019964108049873, 1e-12);
  EXPECT_FALSE(r.significant);
  auto back = paired_t_test(zero5, d);
  EXPECT_NEAR(back.t, -r.t, 1e-15);
  EXPECT_NEAR(back.p, r.p, 1e-15);

  EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{0.0}), Error);
  EXPECT_THROW(paired_t_test(a, zero5), Error);
}

TEST(RunFiles, FormatParseRoundTrip) {
  RunSet runs;
  runs["q1"] = {"q1", {{"a", 0.1 + 0.2, ""}, {"b", 1e-300, ""}, {"c", -2.5, ""}}};
  runs["q2"] = {"q2", {{"x", 1.0 / 3.0, ""}}};
  auto text = format_trec_run(runs, "tag", "config_hash=abc");
  EXPECT_EQ(text.rfind("# config_hash=abc\n", 0), 0u);
  EXPECT_TRUE(validate_trec_run(text, "tag").ok);
  auto back = parse_trec_run(text);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [qid, run] : runs) {
    ASSERT_EQ(back.at(qid).entries.size(), run.entries.size());
    for (std::size_t i = 0; i < run.entries.size(); ++i) {
      EXPECT_EQ(back.at(qid).entries[i].unit_id, run.entries[i].unit_id);
      EXPECT_EQ(back.at(qid).entries[i].score, run.entries[i].score);
    }
  }
}

TEST(RunFiles, Validation) {
  EXPECT_TRUE(validate_trec_run("q1 Q0 a 1 2.0 t\nq1 Q0 b 2 1.0 t\n", "t").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q0 a 1 2.0\n").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q1 a 1 2.0 t\n").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q0 a 2 2.0 t\n").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q0 a 1 1.0 t\nq1 Q0 b 2 2.0 t\n").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q0 a 1 2.0 t\nq1 Q0 a 2 1.0 t\n").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q0 a 1 2.0 t\n", "other").ok);
  EXPECT_FALSE(validate_trec_run("q1 Q0 a 1 abc t\n").ok);
}

TEST(Qrels, ParseRules) {
  auto q = parse_qrels("q1 0 a 2\nq1 0 b 0\nq2 0 c 1\n");
  EXPECT_EQ(q.grade("q1", "a"), 2);
  EXPECT_EQ(q.grade("q1", "zz"), 0);
  EXPECT_EQ(q.relevant_count("q1"), 1u);
  EXPECT_EQ(q.max_grade(), 2);
  EXPECT_THROW(parse_qrels("q1 0 a 1\nq1 0 a 2\n"), Error);
  EXPECT_THROW(parse_qrels("q1 0 a -1\n"), Error);
  EXPECT_THROW(load_qrels("/nonexistent/qrels"), Error);
}
