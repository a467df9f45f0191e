#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lee {

struct EntityMention {
  std::string entity_id;
  std::string surface;
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  bool operator==(const EntityMention&) const = default;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
  std::vector<EntityMention> entity_mentions;
};

/// A window of consecutive sentences of one document. Mention offsets stay
/// relative to the parent body.
struct Passage {
  std::string doc_id;
  std::size_t passage_idx = 0;
  std::size_t first_sentence = 0;
  std::size_t last_sentence = 0;  // inclusive
  std::string text;
  std::vector<EntityMention> entity_mentions;

  std::string unit_id() const;
  bool operator==(const Passage&) const = default;
};

struct Query {
  std::string query_id;
  std::string text;
  std::vector<std::string> entity_ids;
};

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

struct ShardOptions {
  std::size_t window = 10;
  std::size_t stride = 5;
};

struct CorpusLoadResult {
  std::vector<Document> documents;
  std::size_t clamped_mentions = 0;
};

/// Reads one JSON record per line: {"id","title","contents","entities":[...]}.
/// Throws lee::Error (Io) for unreadable files, (Validation) for duplicate ids.
CorpusLoadResult load_corpus(const std::filesystem::path& path);
CorpusLoadResult parse_corpus(std::string_view jsonl);

/// query_id <TAB> text [<TAB> entity;ids]
std::vector<Query> load_topics(const std::filesystem::path& path);
std::vector<Query> parse_topics(std::string_view tsv);

/// Splits on '.', '!' or '?' followed by whitespace or end of text.
std::vector<SentenceSpan> split_sentences(std::string_view body);

std::vector<Passage> shard_passages(const Document& doc, ShardOptions opts = {});

/// Text handed to a scorer for a passage: title, then the passage body.
std::string scoring_text(const Document& doc, const Passage& passage);

/// Owns the documents and their passages, with id lookup.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> docs, ShardOptions opts = {});

  const std::vector<Document>& documents() const { return docs_; }
  const Document* find(std::string_view doc_id) const;
  const Document& at(std::string_view doc_id) const;
  const std::vector<Passage>& passages_of(std::string_view doc_id) const;
  std::size_t size() const { return docs_.size(); }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<std::vector<Passage>> passages_;
};

} // namespace lee
