#include "lee/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <boost/math/distributions/students_t.hpp>

#include "lee/error.hpp"

namespace lee {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> cols;
  std::istringstream ls(line);
  std::string c;
  while (ls >> c) cols.push_back(c);
  return cols;
}

std::string fmt_double(double v, const char* f) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Qrels

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < 0) fail(ErrorKind::Validation, "negative grade for " + query_id + "/" + doc_id);
  if (!judgments_[query_id].emplace(doc_id, grade).second)
    fail(ErrorKind::Validation, "duplicate judgment for " + query_id + "/" + doc_id);
  max_grade_ = std::max(max_grade_, grade);
}

int Qrels::grade(std::string_view query_id, std::string_view doc_id) const {
  auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return 0;
  auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

bool Qrels::has_query(std::string_view query_id) const { return judgments_.contains(query_id); }

std::size_t Qrels::relevant_count(std::string_view query_id) const {
  auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return 0;
  return static_cast<std::size_t>(
      std::count_if(q->second.begin(), q->second.end(), [](const auto& kv) { return kv.second >= 1; }));
}

Qrels parse_qrels(std::string_view text) {
  Qrels qrels;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto cols = split_ws(line);
    if (cols.empty() || cols[0][0] == '#') continue;
    if (cols.size() != 4) fail(ErrorKind::Validation, "qrels line " + std::to_string(line_no) + ": expected 4 columns");
    int grade = 0;
    try {
      grade = std::stoi(cols[3]);
    } catch (const std::exception&) {
      fail(ErrorKind::Validation, "qrels line " + std::to_string(line_no) + ": bad grade");
    }
    qrels.set(cols[0], cols[2], grade);
  }
  return qrels;
}

Qrels load_qrels(const std::filesystem::path& path) { return parse_qrels(read_file(path)); }

// ---------------------------------------------------------------------------
// Run files

RunSet parse_trec_run(std::string_view text) {
  RunSet runs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto cols = split_ws(line);
    if (cols.empty() || cols[0][0] == '#') continue;
    if (cols.size() != 6) fail(ErrorKind::Validation, "run line " + std::to_string(line_no) + ": expected 6 columns");
    double score = 0.0;
    try {
      score = std::stod(cols[4]);
    } catch (const std::exception&) {
      fail(ErrorKind::Validation, "run line " + std::to_string(line_no) + ": bad score");
    }
    auto& run = runs[cols[0]];
    run.query_id = cols[0];
    run.entries.push_back({cols[2], score, cols[5]});
  }
  for (auto& [_, run] : runs) sort_run(run);
  return runs;
}

RunSet load_trec_run(const std::filesystem::path& path) { return parse_trec_run(read_file(path)); }

std::string format_trec_run(const RunSet& runs, std::string_view tag, std::string_view header_comment) {
  std::string out;
  if (!header_comment.empty()) {
    out += "# ";
    out += header_comment;
    out += '\n';
  }
  for (const auto& [qid, run] : runs) {
    std::size_t rank = 1;
    for (const auto& e : run.entries) {
      out += qid;
      out += " Q0 ";
      out += e.unit_id;
      out += ' ';
      out += std::to_string(rank++);
      out += ' ';
      out += fmt_double(e.score, "%.17g");
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

void write_trec_run(const std::filesystem::path& path, const RunSet& runs, std::string_view tag,
                    std::string_view header_comment) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << format_trec_run(runs, tag, header_comment);
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

RunValidation validate_trec_run(std::string_view text, std::string_view expected_tag) {
  RunValidation v;
  auto problem = [&](std::size_t line_no, const std::string& what) {
    v.ok = false;
    v.problems.push_back("line " + std::to_string(line_no) + ": " + what);
  };
  struct QueryState {
    std::size_t next_rank = 1;
    double last_score = 0.0;
    std::unordered_set<std::string> docs;
  };
  std::map<std::string, QueryState> state;
  std::string declared;
  std::string current_qid;
  std::set<std::string> finished;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto cols = split_ws(line);
    if (cols.empty() || cols[0][0] == '#') continue;
    if (cols.size() != 6) {
      problem(line_no, "expected 6 columns");
      continue;
    }
    if (cols[1] != "Q0") problem(line_no, "second column must be Q0");
    const auto& qid = cols[0];
    if (qid != current_qid) {
      if (finished.contains(qid)) problem(line_no, "query " + qid + " is not contiguous");
      if (!current_qid.empty()) finished.insert(current_qid);
      current_qid = qid;
    }
    auto& st = state[qid];
    std::size_t rank = 0;
    double score = 0.0;
    try {
      rank = std::stoul(cols[3]);
      score = std::stod(cols[4]);
    } catch (const std::exception&) {
      problem(line_no, "rank or score not numeric");
      continue;
    }
    if (!std::isfinite(score)) problem(line_no, "score not finite");
    if (rank != st.next_rank) problem(line_no, "rank " + cols[3] + " expected " + std::to_string(st.next_rank));
    if (st.next_rank > 1 && score > st.last_score) problem(line_no, "score increases within query " + qid);
    if (!st.docs.insert(cols[2]).second) problem(line_no, "duplicate docid " + cols[2]);
    st.next_rank = rank + 1;
    st.last_score = score;
    if (declared.empty()) declared = cols[5];
    if (cols[5] != declared) problem(line_no, "tag changes from " + declared + " to " + cols[5]);
    if (!expected_tag.empty() && cols[5] != expected_tag)
      problem(line_no, "tag " + cols[5] + " does not match declared " + std::string(expected_tag));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Measures

double average_precision(std::span<const std::string> ranked, const std::map<std::string, int, std::less<>>& judged,
                         std::size_t depth) {
  std::size_t relevant = 0;
  for (const auto& [_, g] : judged) relevant += g >= 1;
  if (relevant == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  auto n = std::min(depth, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto it = judged.find(ranked[i]);
    if (it != judged.end() && it->second >= 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant);
}

double ndcg(std::span<const std::string> ranked, const std::map<std::string, int, std::less<>>& judged,
            std::size_t depth) {
  std::vector<int> gains;
  for (const auto& [_, g] : judged)
    if (g > 0) gains.push_back(g);
  std::sort(gains.begin(), gains.end(), std::greater<>());
  double ideal = 0.0;
  for (std::size_t i = 0; i < gains.size() && i < depth; ++i) ideal += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  if (ideal == 0.0) return 0.0;
  double dcg = 0.0;
  auto n = std::min(depth, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto it = judged.find(ranked[i]);
    if (it != judged.end() && it->second > 0) dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / ideal;
}

double recall_at(std::span<const std::string> ranked, const std::map<std::string, int, std::less<>>& judged,
                 std::size_t k) {
  std::size_t relevant = 0;
  for (const auto& [_, g] : judged) relevant += g >= 1;
  if (relevant == 0) return 0.0;
  std::size_t hits = 0;
  auto n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto it = judged.find(ranked[i]);
    hits += it != judged.end() && it->second >= 1;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

EvalReport evaluate_run(const RunSet& runs, const Qrels& qrels, const std::vector<std::string>& measures,
                        std::size_t depth) {
  EvalReport report;
  bool overlap = false;
  for (const auto& [qid, _] : runs) {
    if (qrels.has_query(qid)) overlap = true;
    else report.warnings.push_back("run for unjudged query " + qid + " skipped");
  }
  if (!overlap) fail(ErrorKind::Validation, "run and qrels share no queries");

  auto cutoff_of = [](const std::string& m, std::string_view prefix) -> std::size_t {
    return static_cast<std::size_t>(std::stoul(m.substr(prefix.size())));
  };

  for (const auto& [qid, judged] : qrels.judgments()) {
    if (qrels.relevant_count(qid) == 0) continue;
    std::vector<std::string> ranked;
    if (auto it = runs.find(qid); it != runs.end()) ranked = unit_ids(it->second);
    if (ranked.size() > depth) ranked.resize(depth);
    auto& row = report.per_query[qid];
    for (const auto& m : measures) {
      if (m == "map") row[m] = average_precision(ranked, judged, depth);
      else if (m == "ndcg") row[m] = ndcg(ranked, judged, depth);
      else if (m.starts_with("ndcg@")) row[m] = ndcg(ranked, judged, std::min(depth, cutoff_of(m, "ndcg@")));
      else if (m.starts_with("recall@")) row[m] = recall_at(ranked, judged, std::min(depth, cutoff_of(m, "recall@")));
      else fail(ErrorKind::Config, "unknown measure: " + m);
    }
  }
  for (const auto& m : measures) {
    double sum = 0.0;
    for (const auto& [_, row] : report.per_query) sum += row.at(m);
    report.aggregate[m] = report.per_query.empty() ? 0.0 : sum / static_cast<double>(report.per_query.size());
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  for (const auto& [qid, row] : report.per_query)
    for (const auto& [m, v] : row) out += m + "\t" + qid + "\t" + fmt_double(v, "%.6f") + "\n";
  for (const auto& [m, v] : report.aggregate) out += m + "\tall\t" + fmt_double(v, "%.6f") + "\n";
  return out;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::Validation, "paired t-test needs aligned samples");
  const std::size_t n = a.size();
  if (n < 2) fail(ErrorKind::Validation, "paired t-test needs at least 2 queries");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.t = mean > 0 ? INFINITY : -INFINITY;
    r.p = 0.0;
    r.significant = true;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  r.significant = r.p < 0.05;
  return r;
}

} // namespace lee
