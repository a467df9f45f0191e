#include "lee/run.hpp"

#include <algorithm>

namespace lee {

namespace {
bool entry_before(const RunEntry& a, const RunEntry& b) {
  return ranks_before(a.score, a.unit_id, b.score, b.unit_id);
}
} // namespace

void sort_run(ScoredRun& run) { std::sort(run.entries.begin(), run.entries.end(), entry_before); }

bool is_sorted_run(const ScoredRun& run) {
  return std::is_sorted(run.entries.begin(), run.entries.end(), entry_before);
}

std::vector<std::string> unit_ids(const ScoredRun& run) {
  std::vector<std::string> ids;
  ids.reserve(run.entries.size());
  for (const auto& e : run.entries) ids.push_back(e.unit_id);
  return ids;
}

void truncate(ScoredRun& run, std::size_t depth) {
  if (run.entries.size() > depth) run.entries.resize(depth);
}

} // namespace lee
