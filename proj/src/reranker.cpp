#include "lee/reranker.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <set>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lee/error.hpp"
#include "lee/text.hpp"

namespace lee {

// ---------------------------------------------------------------------------
// Builtin scorers

double lexical_overlap(std::string_view query, std::string_view passage) {
  auto q_tokens = analyze_text(query);
  auto p_tokens = analyze_text(passage);
  std::set<std::string> q(q_tokens.begin(), q_tokens.end());
  std::set<std::string> p(p_tokens.begin(), p_tokens.end());
  std::size_t common = 0;
  for (const auto& t : q) common += p.contains(t);
  return static_cast<double>(common) / static_cast<double>(std::max<std::size_t>(1, q.size()));
}

std::vector<double> LexicalScorer::score_batch(const ScoreRequest& request) {
  auto q_tokens = analyze_text(request.query);
  std::set<std::string> q(q_tokens.begin(), q_tokens.end());
  const double denom = static_cast<double>(std::max<std::size_t>(1, q.size()));
  std::vector<double> out;
  out.reserve(request.passages.size());
  for (const auto& item : request.passages) {
    auto p_tokens = analyze_text(item.text);
    std::set<std::string> p(p_tokens.begin(), p_tokens.end());
    std::size_t common = 0;
    for (const auto& t : q) common += p.contains(t);
    out.push_back(static_cast<double>(common) / denom);
  }
  return out;
}

std::vector<double> QrelsOracleScorer::score_batch(const ScoreRequest& request) {
  const int max_grade = qrels_.max_grade();
  std::vector<double> out;
  out.reserve(request.passages.size());
  for (const auto& item : request.passages) {
    int g = qrels_.grade(request.qid, item.doc_id);
    out.push_back(max_grade > 0 ? static_cast<double>(g) / max_grade : 0.0);
  }
  return out;
}

std::map<std::string, double, std::less<>> normalized_scores(const ScoredRun& run) {
  std::map<std::string, double, std::less<>> out;
  if (run.entries.empty()) return out;
  double lo = run.entries.front().score;
  double hi = lo;
  for (const auto& e : run.entries) {
    lo = std::min(lo, e.score);
    hi = std::max(hi, e.score);
  }
  for (const auto& e : run.entries) {
    double v = 1.0;
    if (lo >= 0.0 && hi > 0.0) v = e.score / hi;
    else if (hi > lo) v = (e.score - lo) / (hi - lo);
    out[e.unit_id] = v;
  }
  return out;
}

IdentityScorer::IdentityScorer(const ScoredRun& run) : normalized_(normalized_scores(run)) {}

std::vector<double> IdentityScorer::score_batch(const ScoreRequest& request) {
  std::vector<double> out;
  out.reserve(request.passages.size());
  for (const auto& item : request.passages) {
    auto it = normalized_.find(item.doc_id);
    out.push_back(it == normalized_.end() ? 0.0 : it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wire protocol

std::string encode_score_request(const ScoreRequest& request) {
  nlohmann::json j;
  j["qid"] = request.qid;
  j["query"] = request.query;
  auto& passages = j["passages"] = nlohmann::json::array();
  for (const auto& p : request.passages) passages.push_back({{"pid", p.pid}, {"text", p.text}});
  return j.dump();
}

std::vector<double> decode_score_response(std::string_view line, std::string_view qid, std::size_t expected) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Scorer, std::string("malformed scorer response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("qid") || !j["qid"].is_string() || !j.contains("scores") ||
      !j["scores"].is_array())
    fail(ErrorKind::Scorer, "scorer response needs string qid and array scores");
  if (j["qid"].get<std::string>() != qid)
    fail(ErrorKind::Scorer, "scorer response qid " + j["qid"].get<std::string>() + " != " + std::string(qid));
  const auto& scores = j["scores"];
  if (scores.size() != expected)
    fail(ErrorKind::Scorer, "scorer returned " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(expected) + " passages");
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& s : scores) {
    if (!s.is_number()) fail(ErrorKind::Scorer, "non-numeric score in scorer response");
    double v = s.get<double>();
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) fail(ErrorKind::Scorer, "scorer score outside [0,1]");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Child-process scorer

ProcessScorer::ProcessScorer(std::string command, ExternalScorerOptions opts)
    : command_(std::move(command)), opts_(opts) {}

ProcessScorer::~ProcessScorer() { stop(); }

void ProcessScorer::start() {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
    fail(ErrorKind::Scorer, std::string("socketpair: ") + std::strerror(errno));
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    fail(ErrorKind::Scorer, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  ::setpgid(pid, pid);
  pid_ = pid;
  to_child_ = from_child_ = sv[0];
  pending_.clear();
}

void ProcessScorer::stop() {
  if (to_child_ >= 0) ::close(to_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // the whole group: sh -c may have forked the real scorer
    ::kill(-pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
  pending_.clear();
}

std::string ProcessScorer::exchange(const std::string& line) {
  if (pid_ < 0) start();
  std::string msg = line + "\n";
  std::size_t sent = 0;
  while (sent < msg.size()) {
    auto n = ::send(to_child_, msg.data() + sent, msg.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::Scorer, std::string("write to scorer: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
  for (;;) {
    if (auto nl = pending_.find('\n'); nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return reply;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) fail(ErrorKind::Scorer, "scorer timed out");
    pollfd pfd{from_child_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) fail(ErrorKind::Scorer, "scorer timed out");
    char buf[65536];
    auto n = ::read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorKind::Scorer, "scorer process closed its output");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

std::vector<double> ProcessScorer::score_batch(const ScoreRequest& request) {
  const auto line = encode_score_request(request);
  for (int attempt = 0;; ++attempt) {
    std::string reply;
    try {
      reply = exchange(line);
    } catch (const Error&) {
      // transport failure: restart the child and retry
      stop();
      if (attempt >= opts_.retries) throw;
      continue;
    }
    return decode_score_response(reply, request.qid, request.passages.size());
  }
}

// ---------------------------------------------------------------------------
// HTTP scorer

HttpScorer::HttpScorer(std::string url, ExternalScorerOptions opts) : opts_(opts) {
  auto scheme = url.find("://");
  auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) {
    base_ = url;
    path_ = "/score";
  } else {
    base_ = url.substr(0, path_start);
    path_ = url.substr(path_start);
  }
}

std::vector<double> HttpScorer::score_batch(const ScoreRequest& request) {
  httplib::Client client(base_);
  client.set_connection_timeout(opts_.timeout);
  client.set_read_timeout(opts_.timeout);
  client.set_write_timeout(opts_.timeout);
  const auto body = encode_score_request(request);
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path_, body, "application/json");
    if (!res || res->status != 200) {
      if (attempt >= opts_.retries) {
        std::string why = res ? "HTTP status " + std::to_string(res->status) : httplib::to_string(res.error());
        fail(ErrorKind::Scorer, "scorer endpoint " + base_ + path_ + ": " + why);
      }
      continue;
    }
    return decode_score_response(res->body, request.qid, request.passages.size());
  }
}

// ---------------------------------------------------------------------------
// Re-ranking

void ScoringTrace::record(std::string stage, std::vector<std::string> doc_ids) {
  events.push_back({std::move(stage), std::move(doc_ids)});
}

std::vector<DocScore> score_documents(const Query& query, std::span<const std::string> doc_ids, const Corpus& corpus,
                                      Scorer& scorer, const RerankOptions& opts, PassageScores* table,
                                      ScoringTrace* trace) {
  if (opts.batch_size < 1) fail(ErrorKind::Config, "scorer batch size must be >= 1");
  struct Slot {
    std::size_t doc;
    std::size_t passage;
    bool real;
  };
  std::vector<ScoreItem> items;
  std::vector<Slot> slots;
  for (std::size_t d = 0; d < doc_ids.size(); ++d) {
    const auto& doc = corpus.at(doc_ids[d]);
    const auto& passages = corpus.passages_of(doc.doc_id);
    if (passages.empty()) {
      // no body text: score the title alone
      items.push_back({doc.doc_id + "#0", doc.doc_id, doc.title});
      slots.push_back({d, 0, false});
      continue;
    }
    for (const auto& p : passages) {
      items.push_back({p.unit_id(), doc.doc_id, scoring_text(doc, p)});
      slots.push_back({d, p.passage_idx, true});
    }
  }

  std::vector<double> scores;
  scores.reserve(items.size());
  for (std::size_t start = 0, batch = 0; start < items.size(); start += opts.batch_size, ++batch) {
    auto end = std::min(items.size(), start + opts.batch_size);
    ScoreRequest req{query.query_id, query.text,
                     std::vector<ScoreItem>(items.begin() + static_cast<std::ptrdiff_t>(start),
                                            items.begin() + static_cast<std::ptrdiff_t>(end))};
    std::vector<double> got;
    try {
      got = scorer.score_batch(req);
    } catch (const Error& e) {
      fail(ErrorKind::Scorer, "query " + query.query_id + " batch " + std::to_string(batch) + ": " + e.what());
    }
    if (got.size() != req.passages.size())
      fail(ErrorKind::Scorer, "query " + query.query_id + " batch " + std::to_string(batch) + ": scorer returned " +
                                  std::to_string(got.size()) + " scores for " + std::to_string(req.passages.size()));
    for (double v : got)
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        fail(ErrorKind::Scorer, "query " + query.query_id + " batch " + std::to_string(batch) +
                                    ": score outside [0,1] from " + scorer.name());
    scores.insert(scores.end(), got.begin(), got.end());
  }

  std::vector<DocScore> out(doc_ids.size());
  std::vector<bool> seen(doc_ids.size(), false);
  for (std::size_t d = 0; d < doc_ids.size(); ++d) out[d].doc_id = doc_ids[d];
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    auto& ds = out[s.doc];
    ds.score = seen[s.doc] ? std::max(ds.score, scores[i]) : scores[i];
    seen[s.doc] = true;
    if (table && s.real) {
      auto& row = (*table)[ds.doc_id];
      if (row.size() <= s.passage) row.resize(s.passage + 1, 0.0);
      row[s.passage] = scores[i];
    }
  }
  if (trace) trace->record(opts.stage_tag, std::vector<std::string>(doc_ids.begin(), doc_ids.end()));
  return out;
}

RerankResult rerank_run(const Query& query, const ScoredRun& run, const Corpus& corpus, Scorer& scorer,
                        std::size_t depth, const RerankOptions& opts, ScoringTrace* trace) {
  RerankResult result;
  if (depth == 0) {
    result.run = run;
    return result;
  }
  const auto n = std::min(depth, run.entries.size());
  std::vector<std::string> top;
  top.reserve(n);
  for (std::size_t i = 0; i < n; ++i) top.push_back(run.entries[i].unit_id);

  auto scored = score_documents(query, top, corpus, scorer, opts, &result.passage_scores, trace);
  result.run.query_id = run.query_id;
  for (const auto& ds : scored) result.run.entries.push_back({ds.doc_id, ds.score, opts.stage_tag});
  sort_run(result.run);

  const auto rest = run.entries.size() - n;
  for (std::size_t j = 0; j < rest; ++j) {
    auto entry = run.entries[n + j];
    entry.score = rest == 1 ? -1.0 : -1.0 - static_cast<double>(j) / static_cast<double>(rest - 1);
    result.run.entries.push_back(std::move(entry));
  }
  return result;
}

} // namespace lee
