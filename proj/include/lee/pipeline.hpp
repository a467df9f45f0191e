#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lee/adaptive.hpp"
#include "lee/corpus.hpp"
#include "lee/eval.hpp"
#include "lee/expansion.hpp"
#include "lee/index.hpp"
#include "lee/reranker.hpp"

namespace lee {

enum class PipelineKind { Traditional, NlmFeedback, NlmFeedbackRerank, Adaptive };
std::string_view to_string(PipelineKind kind);
PipelineKind parse_pipeline_kind(std::string_view s);

/// Everything needed to reproduce a run. Serialized as "key = value" lines.
struct PipelineConfig {
  PipelineKind pipeline = PipelineKind::NlmFeedback;
  std::filesystem::path corpus;
  std::filesystem::path index_dir;
  std::filesystem::path topics;
  std::filesystem::path qrels;
  std::filesystem::path folds;
  std::filesystem::path output_dir;
  /// lexical | oracle | identity | process:<command> | http[s]://host[:port]/path | external
  std::string scorer = "lexical";
  ExpansionConfig expansion;
  Bm25Params bm25;
  std::size_t depth = 1000;  // first-stage and re-rank depth
  std::size_t budget = 1000;
  std::size_t batch = 16;
  FrontierMode frontier = FrontierMode::Lee;
  std::size_t gar_terms = 10;
  std::size_t scorer_batch = 64;
  long scorer_timeout_ms = 30000;
  int scorer_retries = 2;
  ShardOptions shard;
};

/// Environment variable consulted when scorer = external.
inline constexpr const char* kScorerEndpointEnv = "LEE_SCORER_ENDPOINT";

/// Throws lee::Error (Config) on unknown keys or unparsable values.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Sets one field by its config key; same parsing rules as parse_config.
void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const PipelineConfig& cfg, std::string_view key);
std::vector<std::string> config_keys();
/// Canonical form: every key, sorted, one per line.
std::string serialize_config(const PipelineConfig& cfg);
/// FNV-1a 64 of the canonical form without output_dir, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);
/// Range checks, pipeline-specific requirements, and (optionally) path existence.
void validate(const PipelineConfig& cfg, bool check_paths);

/// Corpus plus the four indexes: document and passage, word and entity.
struct Resources {
  Corpus corpus;
  InvertedIndex doc_words;
  InvertedIndex doc_entities;
  InvertedIndex passage_words;
  InvertedIndex passage_entities;
  std::optional<Qrels> qrels;

  IndexSet index_set() const { return {&doc_words, &doc_entities, &passage_words, &passage_entities}; }
};

/// Builds all indexes in memory. Document word units index title + body.
Resources build_resources(std::vector<Document> docs, ShardOptions shard = {});
/// Writes doc-word/, doc-entity/, passage-word/, passage-entity/ and meta.txt.
void save_indexes(const Resources& res, const std::filesystem::path& dir);
/// Loads the corpus, the four persisted indexes and (if configured) qrels.
Resources load_resources(const PipelineConfig& cfg);

/// `context` is the run being re-ranked; only the identity scorer uses it.
std::unique_ptr<Scorer> make_scorer(const PipelineConfig& cfg, const Resources& res, const ScoredRun* context);

struct QueryOutput {
  std::map<std::string, ScoredRun> stages;
  AdaptiveStats stats;
  ScoringTrace trace;
};

struct PipelineOutput {
  std::vector<std::string> stage_order;
  std::map<std::string, RunSet> stage_runs;
  std::string final_stage;
  std::vector<AdaptiveStats> stats;

  const RunSet& final_runs() const { return stage_runs.at(final_stage); }
};

std::vector<std::string> stage_names(PipelineKind kind);

/// Executes the configured pipeline per query. First-stage retrieval and
/// the first re-ranking pass can be cached with `prepare`, so configs that
/// differ only in expansion parameters reuse them.
class PipelineRunner {
 public:
  PipelineRunner(const Resources& res, PipelineConfig base);

  void prepare(const std::vector<Query>& queries);
  QueryOutput run_query(const Query& query, const PipelineConfig& cfg) const;
  PipelineOutput run(const std::vector<Query>& queries, const PipelineConfig& cfg) const;

  const PipelineConfig& base() const { return base_; }
  const Resources& resources() const { return res_; }

 private:
  struct Cached {
    ScoredRun first_stage;
    std::optional<RerankResult> first_rerank;
    ScoringTrace trace;
  };
  bool cache_applies(const PipelineConfig& cfg) const;

  const Resources& res_;
  PipelineConfig base_;
  std::map<std::string, Cached, std::less<>> cache_;
};

/// Writes <stage>.run files (header comment carries the config hash) and stats.jsonl.
void write_pipeline_output(const PipelineOutput& out, const PipelineConfig& cfg, const std::filesystem::path& dir);

} // namespace lee
