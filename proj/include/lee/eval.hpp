#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lee/run.hpp"

namespace lee {

/// Graded judgments: query_id -> doc_id -> grade (>= 0).
class Qrels {
 public:
  void set(const std::string& query_id, const std::string& doc_id, int grade);
  /// 0 for unjudged documents.
  int grade(std::string_view query_id, std::string_view doc_id) const;
  bool has_query(std::string_view query_id) const;
  int max_grade() const { return max_grade_; }
  std::size_t relevant_count(std::string_view query_id) const;
  const std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>>& judgments() const {
    return judgments_;
  }

 private:
  std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> judgments_;
  int max_grade_ = 0;
};

/// "qid 0 docid grade" per line. Duplicate (qid, doc) pairs are a validation error.
Qrels parse_qrels(std::string_view text);
Qrels load_qrels(const std::filesystem::path& path);

using RunSet = std::map<std::string, ScoredRun, std::less<>>;

/// TREC 6-column run: "qid Q0 docid rank score tag". Lines starting with '#' are comments.
RunSet parse_trec_run(std::string_view text);
RunSet load_trec_run(const std::filesystem::path& path);
std::string format_trec_run(const RunSet& runs, std::string_view tag, std::string_view header_comment = {});
void write_trec_run(const std::filesystem::path& path, const RunSet& runs, std::string_view tag,
                    std::string_view header_comment = {});

struct RunValidation {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Checks column count, Q0, rank contiguity from 1, non-increasing scores,
/// unique docids per query and (when given) the declared tag.
RunValidation validate_trec_run(std::string_view text, std::string_view expected_tag = {});

/// Per-query measures in run order. Measure names: "ndcg", "ndcg@k", "map", "recall@k".
struct EvalReport {
  std::map<std::string, std::map<std::string, double>> per_query;
  std::map<std::string, double> aggregate;
  std::vector<std::string> warnings;
};

double average_precision(std::span<const std::string> ranked, const std::map<std::string, int, std::less<>>& judged,
                         std::size_t depth);
double ndcg(std::span<const std::string> ranked, const std::map<std::string, int, std::less<>>& judged,
            std::size_t depth);
double recall_at(std::span<const std::string> ranked, const std::map<std::string, int, std::less<>>& judged,
                 std::size_t k);

/// Evaluates every qrels query with >= 1 relevant document; missing runs
/// score 0, runs for unjudged queries are skipped with a warning.
EvalReport evaluate_run(const RunSet& runs, const Qrels& qrels, const std::vector<std::string>& measures,
                        std::size_t depth = 1000);

std::string format_report(const EvalReport& report);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool significant = false;
};

/// Two-sided paired t-test on a - b, n - 1 degrees of freedom, alpha 0.05.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

} // namespace lee
