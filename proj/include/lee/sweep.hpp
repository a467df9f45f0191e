#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lee/eval.hpp"
#include "lee/pipeline.hpp"

namespace lee {

/// One swept parameter: a config key and its candidate values, in order.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};
using GridSpec = std::vector<GridAxis>;

/// fb_docs, fb_terms 10..100 step 10; w0, beta, lambda 0.1..0.9 step 0.1; k_lee 1000..4000 step 1000.
GridSpec default_grid();
/// "key = v1,v2,..." or "key = start:stop:step" per line; '#' comments.
GridSpec parse_grid(std::string_view text);
GridSpec load_grid(const std::filesystem::path& path);

/// Value index per axis.
using GridPoint = std::vector<std::size_t>;

std::uint64_t grid_size(const GridSpec& grid);
/// Every combination, last axis varying fastest.
std::vector<GridPoint> plan_full_grid(const GridSpec& grid);
PipelineConfig apply_point(PipelineConfig cfg, const GridSpec& grid, const GridPoint& point);
/// "key=value,key=value" in axis order.
std::string point_label(const GridSpec& grid, const GridPoint& point);

/// query_id -> fold id. File lines are "qid<TAB>fold".
struct FoldSpec {
  std::map<std::string, std::string, std::less<>> fold_of;

  std::vector<std::string> folds() const;
  std::set<std::string> test_queries(std::string_view fold) const;
  std::set<std::string> train_queries(std::string_view fold) const;
};
FoldSpec parse_folds(std::string_view text);
FoldSpec load_folds(const std::filesystem::path& path);
/// Every query has exactly one fold, no fold references an unknown query, >= 2 folds.
void validate(const FoldSpec& folds, const std::vector<Query>& queries);

Qrels restrict_qrels(const Qrels& qrels, const std::set<std::string>& query_ids);

enum class SweepMode { CoordinateDescent, FullGrid };

struct SweepOptions {
  SweepMode mode = SweepMode::CoordinateDescent;
  std::size_t rounds = 2;
  std::size_t workers = 1;
  std::string target = "recall@1000";
  std::vector<std::string> report_measures = {"map", "ndcg", "recall@1000"};
  std::size_t depth = 1000;
};

struct PointResult {
  GridPoint point;
  std::string label;
  bool ok = false;
  double value = 0.0;
  std::string error;
};

struct FoldResult {
  std::string fold;
  std::vector<std::string> train_queries;
  std::vector<std::string> test_queries;
  std::vector<PointResult> evaluated;  // in evaluation order
  std::optional<PointResult> chosen;
};

struct SweepReport {
  std::string target;
  std::vector<FoldResult> folds;
  RunSet test_runs;  // each fold's test queries, run with that fold's winner
  EvalReport test_eval;
};

/// Higher value wins; ties go to smaller fb_docs, then smaller fb_terms, then the smaller label.
bool point_better(const PointResult& a, const PointResult& b, const GridSpec& grid);

/// Selects a grid point per fold on its training queries and runs it on the
/// fold's test queries. The runner should be prepared for all queries.
SweepReport sweep(const PipelineRunner& runner, const std::vector<Query>& queries, const Qrels& qrels,
                  const PipelineConfig& base, const GridSpec& grid, const FoldSpec& folds, const SweepOptions& opts);

std::string sweep_report_json(const SweepReport& report);

} // namespace lee
