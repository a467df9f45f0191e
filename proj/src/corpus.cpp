#include "lee/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

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

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Clamps a mention into [0, body_len]; returns false if nothing remains.
bool clamp_mention(EntityMention& m, long long start, long long end, std::size_t body_len,
                   bool& clamped) {
  long long len = static_cast<long long>(body_len);
  long long s = std::clamp(start, 0LL, len);
  long long e = std::clamp(end, 0LL, len);
  if (e <= s) {
    if (len == 0) {
      clamped = true;
      return false;
    }
    if (e == 0) e = 1;
    s = e - 1;
  }
  clamped = (s != start || e != end);
  m.char_start = static_cast<std::size_t>(s);
  m.char_end = static_cast<std::size_t>(e);
  return true;
}

} // namespace

std::string Passage::unit_id() const { return doc_id + "#" + std::to_string(passage_idx); }

CorpusLoadResult parse_corpus(std::string_view jsonl) {
  CorpusLoadResult out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++line_no;
    if (std::all_of(line.begin(), line.end(), is_space)) continue;

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Validation, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    Document doc;
    try {
      doc.doc_id = rec.at("id").get<std::string>();
      doc.title = rec.value("title", "");
      doc.body = rec.value("contents", "");
      if (rec.contains("entities")) {
        for (const auto& e : rec.at("entities")) {
          EntityMention m;
          m.entity_id = e.at("entity_id").get<std::string>();
          m.surface = e.value("surface", "");
          if (m.entity_id.empty())
            fail(ErrorKind::Validation, "empty entity_id in document " + doc.doc_id);
          bool clamped = false;
          bool keep = clamp_mention(m, e.at("start").get<long long>(), e.at("end").get<long long>(),
                                    doc.body.size(), clamped);
          if (clamped) ++out.clamped_mentions;
          if (keep) doc.entity_mentions.push_back(std::move(m));
        }
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Validation, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(doc.doc_id).second)
      fail(ErrorKind::Validation, "duplicate doc_id: " + doc.doc_id);
    out.documents.push_back(std::move(doc));
  }
  return out;
}

CorpusLoadResult load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path));
}

std::vector<Query> parse_topics(std::string_view tsv) {
  std::vector<Query> out;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(tsv)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    if (cols.size() < 2) fail(ErrorKind::Validation, "topic line needs qid and text: " + line);
    Query q{cols[0], cols[1], {}};
    if (cols.size() >= 3) {
      std::stringstream es(cols[2]);
      std::string id;
      while (std::getline(es, id, ';'))
        if (!id.empty()) q.entity_ids.push_back(id);
    }
    if (!seen.insert(q.query_id).second)
      fail(ErrorKind::Validation, "duplicate query_id: " + q.query_id);
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Query> load_topics(const std::filesystem::path& path) {
  return parse_topics(read_file(path));
}

std::vector<SentenceSpan> split_sentences(std::string_view body) {
  std::vector<SentenceSpan> out;
  std::size_t i = 0;
  const std::size_t n = body.size();
  while (i < n) {
    while (i < n && is_space(body[i])) ++i;
    if (i >= n) break;
    std::size_t begin = i;
    std::size_t end = n;
    for (; i < n; ++i) {
      char c = body[i];
      if ((c == '.' || c == '!' || c == '?') && (i + 1 == n || is_space(body[i + 1]))) {
        end = i + 1;
        ++i;
        break;
      }
    }
    if (i >= n && end == n) {
      // trailing sentence without terminator: trim right whitespace
      while (end > begin && is_space(body[end - 1])) --end;
    }
    out.push_back({begin, end});
  }
  return out;
}

std::vector<Passage> shard_passages(const Document& doc, ShardOptions opts) {
  if (opts.window < 1 || opts.stride < 1 || opts.stride > opts.window)
    fail(ErrorKind::Validation, "shard_passages requires window >= 1 and 1 <= stride <= window");
  auto sentences = split_sentences(doc.body);
  std::vector<Passage> out;
  if (sentences.empty()) return out;
  const std::size_t n = sentences.size();

  // sentence index of each mention, by the sentence containing char_start
  std::vector<std::size_t> mention_sentence;
  mention_sentence.reserve(doc.entity_mentions.size());
  for (const auto& m : doc.entity_mentions) {
    auto it = std::upper_bound(sentences.begin(), sentences.end(), m.char_start,
                               [](std::size_t pos, const SentenceSpan& s) { return pos < s.begin; });
    mention_sentence.push_back(it == sentences.begin() ? 0 : static_cast<std::size_t>(it - sentences.begin()) - 1);
  }

  for (std::size_t idx = 0;; ++idx) {
    std::size_t first = idx * opts.stride;
    std::size_t last = std::min(first + opts.window - 1, n - 1);
    Passage p;
    p.doc_id = doc.doc_id;
    p.passage_idx = idx;
    p.first_sentence = first;
    p.last_sentence = last;
    p.text = doc.body.substr(sentences[first].begin, sentences[last].end - sentences[first].begin);
    for (std::size_t k = 0; k < doc.entity_mentions.size(); ++k)
      if (mention_sentence[k] >= first && mention_sentence[k] <= last)
        p.entity_mentions.push_back(doc.entity_mentions[k]);
    out.push_back(std::move(p));
    if (last == n - 1) break;
  }
  return out;
}

std::string scoring_text(const Document& doc, const Passage& passage) {
  if (doc.title.empty()) return passage.text;
  return doc.title + " " + passage.text;
}

Corpus::Corpus(std::vector<Document> docs, ShardOptions opts) : docs_(std::move(docs)) {
  passages_.reserve(docs_.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (!by_id_.emplace(docs_[i].doc_id, i).second)
      fail(ErrorKind::Validation, "duplicate doc_id: " + docs_[i].doc_id);
    passages_.push_back(shard_passages(docs_[i], opts));
  }
}

const Document* Corpus::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document& Corpus::at(std::string_view doc_id) const {
  auto* d = find(doc_id);
  if (!d) fail(ErrorKind::Validation, "unknown document: " + std::string(doc_id));
  return *d;
}

const std::vector<Passage>& Corpus::passages_of(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  if (it == by_id_.end()) fail(ErrorKind::Validation, "unknown document: " + std::string(doc_id));
  return passages_[it->second];
}

} // namespace lee
