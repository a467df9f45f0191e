#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <map>
#include <thread>

#include "lee/error.hpp"
#include "lee/reranker.hpp"
#include "lee/text.hpp"
#include "support.hpp"

using namespace lee;

namespace {

// Returns a fixed score per passage id; 0 for unknown ids.
class TableScorer final : public Scorer {
 public:
  explicit TableScorer(std::map<std::string, double> by_pid) : by_pid_(std::move(by_pid)) {}
  std::string name() const override { return "table"; }
  std::vector<double> score_batch(const ScoreRequest& r) override {
    ++calls;
    std::vector<double> out;
    for (const auto& p : r.passages) out.push_back(by_pid_.contains(p.pid) ? by_pid_.at(p.pid) : 0.0);
    return out;
  }
  int calls = 0;

 private:
  std::map<std::string, double> by_pid_;
};

Document doc_with(const std::string& id, const std::vector<std::string>& sentences) {
  Document d{id, "", "", {}};
  for (const auto& s : sentences) d.body += (d.body.empty() ? "" : " ") + s + ".";
  return d;
}

ScoredRun run_of(const std::vector<std::string>& ids) {
  ScoredRun r{"q", {}};
  double s = 10.0;
  for (const auto& id : ids) r.entries.push_back({id, s--, "bm25"});
  return r;
}

std::string toy_scorer(const std::string& mode) {
  return "python3 " + (testkit::tools_dir() / "toy_scorer.py").string() + " " + mode;
}

} // namespace

TEST(Lexical, Examples) {
  EXPECT_DOUBLE_EQ(lexical_overlap("alpha beta", "alpha beta gamma"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_overlap("alpha beta", "gamma delta"), 0.0);
  EXPECT_DOUBLE_EQ(lexical_overlap("alpha beta gamma delta", "alpha gamma"), 0.5);
  EXPECT_DOUBLE_EQ(lexical_overlap("", "anything"), 0.0);
  EXPECT_DOUBLE_EQ(lexical_overlap("killing rats", "the rat was killed"), 1.0);
}

TEST(OracleScorer, GradesScaled) {
  Qrels q;
  q.set("q", "d2", 2);
  q.set("q", "d1", 1);
  q.set("q", "d0", 0);
  QrelsOracleScorer s(q);
  auto out = s.score_batch({"q", "x", {{"p", "d2", ""}, {"p", "d1", ""}, {"p", "d0", ""}, {"p", "dx", ""}}});
  EXPECT_EQ(out, (std::vector<double>{1.0, 0.5, 0.0, 0.0}));
}

TEST(OracleScorer, GradeOrderAfterRerank) {
  Qrels q;
  std::vector<Document> docs;
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) {
    auto id = "d" + std::to_string(i);
    docs.push_back(doc_with(id, {"text " + id}));
    ids.push_back(id);
    q.set("q", id, (i * 7) % 3);
  }
  Corpus corpus(docs);
  QrelsOracleScorer s(q);
  auto rr = rerank_run({"q", "x", {}}, run_of(ids), corpus, s, 30);
  int last = 2;
  for (const auto& e : rr.run.entries) {
    int g = q.grade("q", e.unit_id);
    EXPECT_LE(g, last);
    last = g;
  }
}

TEST(Rerank, MaxPassage) {
  std::vector<std::string> s;
  for (int i = 0; i < 12; ++i) s.push_back("s" + std::to_string(i));
  Corpus corpus({doc_with("a", s), doc_with("b", {"only"})});
  TableScorer scorer({{"a#0", 0.2}, {"a#1", 0.9}, {"b#0", 0.5}});
  auto rr = rerank_run({"q", "x", {}}, run_of({"b", "a"}), corpus, scorer, 2);
  ASSERT_EQ(rr.run.entries.size(), 2u);
  EXPECT_EQ(rr.run.entries[0].unit_id, "a");
  EXPECT_DOUBLE_EQ(rr.run.entries[0].score, 0.9);
  EXPECT_EQ(rr.passage_scores.at("a"), (std::vector<double>{0.2, 0.9}));
  EXPECT_EQ(rr.run.entries[0].stage_tag, "rerank");
}

TEST(Rerank, DepthZeroIsIdentity) {
  Corpus corpus({doc_with("a", {"x"})});
  TableScorer scorer({});
  auto in = run_of({"a"});
  auto rr = rerank_run({"q", "x", {}}, in, corpus, scorer, 0);
  EXPECT_EQ(rr.run, in);
  EXPECT_EQ(scorer.calls, 0);
}

TEST(Rerank, LexicalMatchesBruteForce) {
  Corpus corpus({Document{"d1", "Plague", "Rats carried fleas. Ships sailed to port. The plague spread.", {}},
                 Document{"d2", "Trade", "Grain moved by ship. Merchants traded.", {}},
                 Document{"d3", "Fleas", "Fleas bite rats. Plague followed fleas.", {}}});
  const Query q{"q", "plague fleas ships", {}};
  LexicalScorer scorer;
  auto rr = rerank_run(q, run_of({"d1", "d2", "d3"}), corpus, scorer, 3, {1, "rerank"});
  std::vector<std::pair<std::string, double>> want;
  for (const auto& d : corpus.documents()) {
    double best = -1;
    for (const auto& p : corpus.passages_of(d.doc_id)) best = std::max(best, lexical_overlap(q.text, d.title + " " + p.text));
    want.push_back({d.doc_id, best});
  }
  std::sort(want.begin(), want.end(), [](auto& a, auto& b) { return ranks_before(a.second, a.first, b.second, b.first); });
  ASSERT_EQ(rr.run.entries.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rr.run.entries[i].unit_id, want[i].first);
    EXPECT_DOUBLE_EQ(rr.run.entries[i].score, want[i].second);
  }
}

TEST(Rerank, TailSquashedAndSetPreserved) {
  std::vector<Document> docs;
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) {
    ids.push_back("d" + std::to_string(i));
    docs.push_back(doc_with(ids.back(), {"body"}));
  }
  Corpus corpus(docs);
  TableScorer scorer({{"d3#0", 0.7}});
  auto rr = rerank_run({"q", "x", {}}, run_of(ids), corpus, scorer, 4);
  ASSERT_EQ(rr.run.entries.size(), 10u);
  EXPECT_EQ(rr.run.entries[0].unit_id, "d3");
  for (std::size_t j = 0; j < 6; ++j) {
    const auto& e = rr.run.entries[4 + j];
    EXPECT_EQ(e.unit_id, ids[4 + j]);
    EXPECT_EQ(e.stage_tag, "bm25");
    EXPECT_DOUBLE_EQ(e.score, -1.0 - j / 5.0);
  }
  EXPECT_TRUE(is_sorted_run(rr.run));
  auto a = unit_ids(rr.run), b = ids;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(Rerank, IdentityScorerKeepsOrder) {
  std::vector<Document> docs;
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) {
    ids.push_back("d" + std::to_string(100 - i));
    docs.push_back(doc_with(ids.back(), {"a", "b", "c"}));
  }
  Corpus corpus(docs);
  auto in = run_of(ids);
  IdentityScorer scorer(in);
  auto rr = rerank_run({"q", "x", {}}, in, corpus, scorer, 20);
  EXPECT_EQ(unit_ids(rr.run), ids);
}

TEST(Rerank, EmptyBodyScoredByTitle) {
  Corpus corpus({Document{"t", "plague", "", {}}});
  LexicalScorer scorer;
  ScoringTrace trace;
  auto rr = rerank_run({"q", "plague", {}}, run_of({"t"}), corpus, scorer, 1, {}, &trace);
  EXPECT_DOUBLE_EQ(rr.run.entries[0].score, 1.0);
  EXPECT_TRUE(rr.passage_scores.empty());
  ASSERT_EQ(trace.events.size(), 1u);
}

TEST(Rerank, BatchesAndScorerErrors) {
  std::vector<Document> docs;
  std::vector<std::string> ids;
  for (int i = 0; i < 9; ++i) {
    ids.push_back("d" + std::to_string(i));
    docs.push_back(doc_with(ids.back(), {"x"}));
  }
  Corpus corpus(docs);
  TableScorer scorer({});
  rerank_run({"q", "x", {}}, run_of(ids), corpus, scorer, 9, {4, "rerank"});
  EXPECT_EQ(scorer.calls, 3);

  class Bad final : public Scorer {
   public:
    std::string name() const override { return "bad"; }
    std::vector<double> score_batch(const ScoreRequest& r) override { return std::vector<double>(r.passages.size(), 1.5); }
  } bad;
  try {
    rerank_run({"q", "x", {}}, run_of(ids), corpus, bad, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Scorer);
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
  }
}

TEST(Normalize, Rules) {
  auto pos = normalized_scores(run_of({"a", "b"}));
  EXPECT_DOUBLE_EQ(pos.at("a"), 1.0);
  EXPECT_DOUBLE_EQ(pos.at("b"), 0.9);
  ScoredRun neg{"q", {{"a", 1.0, ""}, {"b", -1.0, ""}, {"c", -3.0, ""}}};
  auto n = normalized_scores(neg);
  EXPECT_DOUBLE_EQ(n.at("a"), 1.0);
  EXPECT_DOUBLE_EQ(n.at("b"), 0.5);
  EXPECT_DOUBLE_EQ(n.at("c"), 0.0);
  ScoredRun zero{"q", {{"a", 0.0, ""}, {"b", 0.0, ""}}};
  EXPECT_DOUBLE_EQ(normalized_scores(zero).at("b"), 1.0);
}

TEST(Wire, EncodeDecode) {
  auto line = encode_score_request({"q1", "black death", {{"d#0", "d", "text \"quoted\""}}});
  auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["qid"], "q1");
  EXPECT_EQ(j["passages"][0]["pid"], "d#0");
  EXPECT_EQ(j["passages"][0]["text"], "text \"quoted\"");
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(decode_score_response(R"({"qid":"q1","scores":[0.5,1]})", "q1", 2), (std::vector<double>{0.5, 1.0}));
  EXPECT_THROW(decode_score_response(R"({"qid":"q2","scores":[0.5]})", "q1", 1), Error);
  EXPECT_THROW(decode_score_response(R"({"qid":"q1","scores":[0.5]})", "q1", 2), Error);
  EXPECT_THROW(decode_score_response(R"({"qid":"q1","scores":[1.5]})", "q1", 1), Error);
  EXPECT_THROW(decode_score_response(R"({"qid":"q1","scores":["x"]})", "q1", 1), Error);
  EXPECT_THROW(decode_score_response("nope", "q1", 1), Error);
}

TEST(ProcessScorer, ScoresOverStdio) {
  ProcessScorer s(toy_scorer("ok"));
  auto out = s.score_batch({"q", "alpha beta", {{"1", "d", "alpha"}, {"2", "d", "alpha beta"}, {"3", "d", "zeta"}}});
  EXPECT_EQ(out, (std::vector<double>{0.5, 1.0, 0.0}));
  auto again = s.score_batch({"q2", "zeta", {{"1", "d", "zeta"}}});
  EXPECT_EQ(again, (std::vector<double>{1.0}));
}

TEST(ProcessScorer, MalformedResponsesFail) {
  for (const char* mode : {"short", "range", "garbage"}) {
    ProcessScorer s(toy_scorer(mode), {std::chrono::milliseconds(5000), 0});
    try {
      s.score_batch({"q", "a", {{"1", "d", "a"}, {"2", "d", "b"}}});
      ADD_FAILURE() << mode;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Scorer) << mode;
    }
  }
}

TEST(ProcessScorer, TimeoutAndRetry) {
  ProcessScorer hang(toy_scorer("hang"), {std::chrono::milliseconds(300), 1});
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(hang.score_batch({"q", "a", {{"1", "d", "a"}}}), Error);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(10));

  testkit::TempDir dir("scorer");
  ProcessScorer flaky(toy_scorer("die-once " + (dir / "marker").string()), {std::chrono::milliseconds(5000), 2});
  EXPECT_EQ(flaky.score_batch({"q", "a", {{"1", "d", "a"}}}), (std::vector<double>{1.0}));
}

TEST(HttpScorer, PostsToEndpoint) {
  httplib::Server server;
  server.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
    auto j = nlohmann::json::parse(req.body);
    nlohmann::json out{{"qid", j["qid"]}, {"scores", nlohmann::json::array()}};
    for (const auto& p : j["passages"]) out["scores"].push_back(lexical_overlap(j["query"].get<std::string>(), p["text"].get<std::string>()));
    res.set_content(out.dump(), "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpScorer s("http://127.0.0.1:" + std::to_string(port) + "/score");
  EXPECT_EQ(s.score_batch({"q", "plague rats", {{"1", "d", "rats"}, {"2", "d", "plague rats"}}}),
            (std::vector<double>{0.5, 1.0}));
  HttpScorer broken("http://127.0.0.1:" + std::to_string(port) + "/broken", {std::chrono::milliseconds(2000), 1});
  EXPECT_THROW(broken.score_batch({"q", "x", {{"1", "d", "x"}}}), Error);

  server.stop();
  t.join();
}

TEST(HttpScorer, HttpsTransportFailureIsScorerError) {
  // plain HTTP server: the TLS handshake fails
  httplib::Server server;
  server.Post("/score", [](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpScorer s("https://127.0.0.1:" + std::to_string(port) + "/score", {std::chrono::milliseconds(2000), 0});
  try {
    s.score_batch({"q", "x", {{"1", "d", "x"}}});
    ADD_FAILURE() << "expected a scorer error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Scorer);
  }
  server.stop();
  t.join();
}
