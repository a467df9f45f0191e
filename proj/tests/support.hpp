#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lee/corpus.hpp"
#include "lee/eval.hpp"
#include "lee/text.hpp"

namespace lee::testkit {

inline std::filesystem::path data_dir() { return LEE_TEST_DATA_DIR; }
inline std::filesystem::path tools_dir() { return LEE_TEST_TOOLS_DIR; }

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lee-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Pronounceable tokens that survive analysis unchanged: not stopwords, Porter-stable.
inline std::vector<std::string> stable_words(std::size_t n, std::uint32_t seed) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z"};
  static const char* vowels[] = {"a", "o", "u"};
  std::mt19937 rng(seed);
  std::vector<std::string> out;
  std::vector<std::string> seen;
  while (out.size() < n) {
    std::string w;
    for (int s = 0; s < 3; ++s) {
      w += onsets[rng() % 13];
      w += vowels[rng() % 3];
    }
    w += onsets[rng() % 13];
    if (porter_stem(w) != w || is_stopword(w)) continue;
    if (std::find(seen.begin(), seen.end(), w) != seen.end()) continue;
    seen.push_back(w);
    out.push_back(w);
  }
  return out;
}

/// Appends sentences to a document body and records entity mentions.
class DocBuilder {
 public:
  explicit DocBuilder(std::string id, std::string title = {}) {
    doc_.doc_id = std::move(id);
    doc_.title = std::move(title);
  }

  DocBuilder& word(const std::string& w) {
    sep();
    doc_.body += w;
    return *this;
  }
  DocBuilder& entity(const std::string& entity_id, const std::string& surface) {
    sep();
    EntityMention m{entity_id, surface, doc_.body.size(), doc_.body.size() + surface.size()};
    doc_.body += surface;
    doc_.entity_mentions.push_back(std::move(m));
    return *this;
  }
  DocBuilder& end_sentence() {
    doc_.body += ".";
    return *this;
  }
  Document build() const { return doc_; }

 private:
  void sep() {
    if (!doc_.body.empty()) doc_.body += ' ';
  }
  Document doc_;
};

/// Topic clusters for directional experiments. Each topic has 15 relevant
/// documents (3 contain the query words, 12 share only the topic's cluster
/// words and entities) and 10 distractors stuffed with the query words and a
/// separate distractor cluster.
struct PlantedCorpus {
  std::vector<Document> docs;
  std::vector<Query> queries;
  Qrels qrels;
};

inline PlantedCorpus planted_corpus(std::size_t n_topics, std::uint32_t seed) {
  PlantedCorpus pc;
  std::mt19937 rng(seed);
  const std::size_t per_topic_words = 2 + 12 + 12;
  auto words = stable_words(n_topics * per_topic_words + 300, seed);
  std::vector<std::string> background(words.end() - 300, words.end());
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng() % v.size()]; };

  for (std::size_t t = 0; t < n_topics; ++t) {
    auto base = words.begin() + static_cast<std::ptrdiff_t>(t * per_topic_words);
    std::vector<std::string> qwords(base, base + 2);
    std::vector<std::string> cluster(base + 2, base + 14);
    std::vector<std::string> distract(base + 14, base + 26);
    const auto tid = "t" + std::to_string(t);
    std::vector<std::pair<std::string, std::string>> ents, dents;
    for (int e = 0; e < 6; ++e) ents.push_back({"E:" + tid + "r" + std::to_string(e), cluster[e]});
    for (int e = 0; e < 6; ++e) dents.push_back({"E:" + tid + "d" + std::to_string(e), distract[e]});

    const auto qid = "q" + std::to_string(t);
    pc.queries.push_back({qid, qwords[0] + " " + qwords[1], {}});

    for (int d = 0; d < 25; ++d) {
      const bool relevant = d < 15;
      const bool seed_doc = d < 3;
      const auto doc_id = tid + (relevant ? "-rel" : "-dis") + std::to_string(d);
      DocBuilder b(doc_id);
      for (int s = 0; s < 4; ++s) {
        for (int k = 0; k < 3; ++k) b.word(pick(background));
        if (relevant) {
          b.word(pick(cluster)).word(pick(cluster));
          const auto& e = ents[rng() % ents.size()];
          b.entity(e.first, e.second);
          if (seed_doc && s == 0) b.word(qwords[0]).word(qwords[1]);
        } else {
          b.word(pick(distract)).word(pick(distract));
          const auto& e = dents[rng() % dents.size()];
          b.entity(e.first, e.second);
          if (s < 3) b.word(qwords[0]).word(qwords[1]);
        }
        b.end_sentence();
      }
      pc.docs.push_back(b.build());
      if (relevant) pc.qrels.set(qid, doc_id, seed_doc ? 2 : 1);
    }
  }
  return pc;
}

inline std::string corpus_jsonl(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    nlohmann::ordered_json j{{"id", d.doc_id}, {"title", d.title}, {"contents", d.body}};
    j["entities"] = nlohmann::json::array();
    for (const auto& m : d.entity_mentions)
      j["entities"].push_back({{"entity_id", m.entity_id}, {"surface", m.surface}, {"start", m.char_start}, {"end", m.char_end}});
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string topics_tsv(const std::vector<Query>& queries) {
  std::string out;
  for (const auto& q : queries) {
    out += q.query_id + "\t" + q.text;
    for (std::size_t i = 0; i < q.entity_ids.size(); ++i) out += (i ? ";" : "\t") + q.entity_ids[i];
    out += "\n";
  }
  return out;
}

inline std::string qrels_text(const Qrels& qrels) {
  std::string out;
  for (const auto& [qid, docs] : qrels.judgments())
    for (const auto& [doc, grade] : docs) out += qid + " 0 " + doc + " " + std::to_string(grade) + "\n";
  return out;
}

} // namespace lee::testkit
