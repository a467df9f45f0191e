#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lee {

struct RunEntry {
  std::string unit_id;
  double score = 0.0;
  std::string stage_tag;

  bool operator==(const RunEntry&) const = default;
};

/// Ranked list for one query: descending score, ties by ascending unit_id.
struct ScoredRun {
  std::string query_id;
  std::vector<RunEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool operator==(const ScoredRun&) const = default;
};

/// Ranking order used everywhere: higher score first, then smaller id.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

void sort_run(ScoredRun& run);
bool is_sorted_run(const ScoredRun& run);
std::vector<std::string> unit_ids(const ScoredRun& run);
void truncate(ScoredRun& run, std::size_t depth);

} // namespace lee
