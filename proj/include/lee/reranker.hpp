#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lee/corpus.hpp"
#include "lee/eval.hpp"
#include "lee/run.hpp"

namespace lee {

struct ScoreItem {
  std::string pid;
  std::string doc_id;
  std::string text;
};

struct ScoreRequest {
  std::string qid;
  std::string query;
  std::vector<ScoreItem> passages;
};

/// Relevance scorer for (query, passage) pairs. Implementations must be
/// deterministic and return one value in [0, 1] per passage, in order.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> score_batch(const ScoreRequest& request) = 0;
};

/// |q ∩ p| / max(1, |q|) over unique analyzed terms.
double lexical_overlap(std::string_view query, std::string_view passage);

class LexicalScorer final : public Scorer {
 public:
  std::string name() const override { return "lexical"; }
  std::vector<double> score_batch(const ScoreRequest& request) override;
};

/// Parent-document grade / max grade; unjudged -> 0.
class QrelsOracleScorer final : public Scorer {
 public:
  explicit QrelsOracleScorer(const Qrels& qrels) : qrels_(qrels) {}
  std::string name() const override { return "oracle"; }
  std::vector<double> score_batch(const ScoreRequest& request) override;

 private:
  const Qrels& qrels_;
};

/// Scores every passage with its parent document's normalized score in an
/// existing run, so re-ranking with it keeps the run order.
class IdentityScorer final : public Scorer {
 public:
  explicit IdentityScorer(const ScoredRun& run);
  std::string name() const override { return "identity"; }
  std::vector<double> score_batch(const ScoreRequest& request) override;

 private:
  std::map<std::string, double, std::less<>> normalized_;
};

/// Maps run scores into [0, 1]: s / max for non-negative runs, min-max otherwise.
std::map<std::string, double, std::less<>> normalized_scores(const ScoredRun& run);

// ---------------------------------------------------------------------------
// External scoring protocol: one JSON object per line.
//   request  {"qid": str, "query": str, "passages": [{"pid": str, "text": str}]}
//   response {"qid": str, "scores": [float]}

std::string encode_score_request(const ScoreRequest& request);
/// Throws lee::Error (Scorer) unless the response echoes qid and carries
/// exactly `expected` finite scores in [0, 1].
std::vector<double> decode_score_response(std::string_view line, std::string_view qid, std::size_t expected);

struct ExternalScorerOptions {
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
};

/// Talks to a child process (`sh -c command`) over its standard streams.
class ProcessScorer final : public Scorer {
 public:
  ProcessScorer(std::string command, ExternalScorerOptions opts = {});
  ~ProcessScorer() override;
  ProcessScorer(const ProcessScorer&) = delete;
  ProcessScorer& operator=(const ProcessScorer&) = delete;

  std::string name() const override { return "process"; }
  std::vector<double> score_batch(const ScoreRequest& request) override;

 private:
  void start();
  void stop();
  std::string exchange(const std::string& line);

  std::string command_;
  ExternalScorerOptions opts_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
};

/// POSTs the request JSON to an HTTP endpoint; the body of the reply is the response line.
class HttpScorer final : public Scorer {
 public:
  HttpScorer(std::string url, ExternalScorerOptions opts = {});
  std::string name() const override { return "http"; }
  std::vector<double> score_batch(const ScoreRequest& request) override;

 private:
  std::string base_;
  std::string path_;
  ExternalScorerOptions opts_;
};

// ---------------------------------------------------------------------------
// Re-ranking

/// Every scorer invocation of one query's pipeline, by stage.
struct ScoringTrace {
  struct Event {
    std::string stage;
    std::vector<std::string> doc_ids;
  };
  std::vector<Event> events;

  void record(std::string stage, std::vector<std::string> doc_ids);
};

/// doc_id -> score of each passage, indexed by passage_idx.
using PassageScores = std::map<std::string, std::vector<double>, std::less<>>;

struct RerankOptions {
  std::size_t batch_size = 64;
  std::string stage_tag = "rerank";
};

struct DocScore {
  std::string doc_id;
  double score = 0.0;
};

/// Max-passage scores for `doc_ids`, in input order. Adds passage scores to
/// `table` and one event to `trace` when given.
std::vector<DocScore> score_documents(const Query& query, std::span<const std::string> doc_ids, const Corpus& corpus,
                                      Scorer& scorer, const RerankOptions& opts, PassageScores* table = nullptr,
                                      ScoringTrace* trace = nullptr);

struct RerankResult {
  ScoredRun run;
  PassageScores passage_scores;
};

/// Re-scores the top `depth` documents by max-passage; the remainder keeps
/// its order and stage tag, with scores mapped by rank into [-2, -1].
RerankResult rerank_run(const Query& query, const ScoredRun& run, const Corpus& corpus, Scorer& scorer,
                        std::size_t depth, const RerankOptions& opts = {}, ScoringTrace* trace = nullptr);

} // namespace lee
