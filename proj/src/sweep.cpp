#include "lee/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "lee/error.hpp"

namespace lee {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double to_number(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::Config, "grid value is not a number: " + s);
  return v;
}

// start:stop:step, inclusive of stop up to rounding
std::vector<std::string> expand_range(const std::string& spec) {
  auto c1 = spec.find(':');
  auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos) fail(ErrorKind::Config, "grid range must be start:stop:step: " + spec);
  const double start = to_number(trim(spec.substr(0, c1)));
  const double stop = to_number(trim(spec.substr(c1 + 1, c2 - c1 - 1)));
  const double step = to_number(trim(spec.substr(c2 + 1)));
  if (!(step > 0.0) || stop < start) fail(ErrorKind::Config, "grid range needs step > 0 and stop >= start: " + spec);
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    // round to 12 significant decimals so 0.1*3 prints as 0.3
    double v = start + step * static_cast<double>(i);
    v = std::round(v * 1e12) / 1e12;
    out.push_back(fmt(v));
  }
  return out;
}

GridAxis range_axis(std::string key, const std::string& spec) { return {std::move(key), expand_range(spec)}; }

std::optional<double> axis_value(const GridSpec& grid, const GridPoint& p, std::string_view key) {
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i].key == key) return to_number(grid[i].values[p[i]]);
  return std::nullopt;
}

} // namespace

GridSpec default_grid() {
  return {range_axis("fb_docs", "10:100:10"),
          range_axis("fb_terms", "10:100:10"),
          range_axis("original_query_weight", "0.1:0.9:0.1"),
          range_axis("beta", "0.1:0.9:0.1"),
          range_axis("lambda", "0.1:0.9:0.1"),
          range_axis("k_lee", "1000:4000:1000")};
}

GridSpec parse_grid(std::string_view text) {
  GridSpec grid;
  const auto keys = config_keys();
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "grid line needs key = values: " + t);
    GridAxis axis{trim(t.substr(0, eq)), {}};
    if (std::find(keys.begin(), keys.end(), axis.key) == keys.end())
      fail(ErrorKind::Config, "grid axis is not a config key: " + axis.key);
    for (const auto& a : grid)
      if (a.key == axis.key) fail(ErrorKind::Config, "grid axis repeated: " + axis.key);
    auto rhs = trim(t.substr(eq + 1));
    if (rhs.find(':') != std::string::npos) {
      axis.values = expand_range(rhs);
    } else {
      std::istringstream vs(rhs);
      std::string v;
      while (std::getline(vs, v, ','))
        if (auto tv = trim(v); !tv.empty()) axis.values.push_back(tv);
    }
    if (axis.values.empty()) fail(ErrorKind::Config, "grid axis has no values: " + axis.key);
    grid.push_back(std::move(axis));
  }
  if (grid.empty()) fail(ErrorKind::Config, "grid is empty");
  return grid;
}

GridSpec load_grid(const std::filesystem::path& path) { return parse_grid(read_file(path)); }

std::uint64_t grid_size(const GridSpec& grid) {
  if (grid.empty()) return 0;
  std::uint64_t n = 1;
  for (const auto& a : grid) n *= a.values.size();
  return n;
}

std::vector<GridPoint> plan_full_grid(const GridSpec& grid) {
  std::vector<GridPoint> out;
  const auto n = grid_size(grid);
  if (n == 0) return out;
  out.reserve(n);
  GridPoint p(grid.size(), 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    out.push_back(p);
    for (std::size_t a = grid.size(); a-- > 0;) {
      if (++p[a] < grid[a].values.size()) break;
      p[a] = 0;
    }
  }
  return out;
}

PipelineConfig apply_point(PipelineConfig cfg, const GridSpec& grid, const GridPoint& point) {
  for (std::size_t i = 0; i < grid.size(); ++i) set_config_value(cfg, grid[i].key, grid[i].values.at(point.at(i)));
  return cfg;
}

std::string point_label(const GridSpec& grid, const GridPoint& point) {
  std::string out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) out += ',';
    out += grid[i].key + "=" + grid[i].values.at(point.at(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::string> FoldSpec::folds() const {
  std::set<std::string> s;
  for (const auto& [_, f] : fold_of) s.insert(f);
  return {s.begin(), s.end()};
}

std::set<std::string> FoldSpec::test_queries(std::string_view fold) const {
  std::set<std::string> out;
  for (const auto& [q, f] : fold_of)
    if (f == fold) out.insert(q);
  return out;
}

std::set<std::string> FoldSpec::train_queries(std::string_view fold) const {
  std::set<std::string> out;
  for (const auto& [q, f] : fold_of)
    if (f != fold) out.insert(q);
  return out;
}

FoldSpec parse_folds(std::string_view text) {
  FoldSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto tab = t.find('\t');
    if (tab == std::string::npos) fail(ErrorKind::Validation, "fold line needs qid<TAB>fold: " + t);
    auto qid = trim(t.substr(0, tab));
    auto fold = trim(t.substr(tab + 1));
    if (qid.empty() || fold.empty()) fail(ErrorKind::Validation, "fold line needs qid<TAB>fold: " + t);
    if (!spec.fold_of.emplace(qid, fold).second) fail(ErrorKind::Validation, "query in more than one fold: " + qid);
  }
  return spec;
}

FoldSpec load_folds(const std::filesystem::path& path) { return parse_folds(read_file(path)); }

void validate(const FoldSpec& folds, const std::vector<Query>& queries) {
  std::set<std::string> ids;
  for (const auto& q : queries) {
    ids.insert(q.query_id);
    if (!folds.fold_of.contains(q.query_id)) fail(ErrorKind::Validation, "query has no fold: " + q.query_id);
  }
  for (const auto& [q, _] : folds.fold_of)
    if (!ids.contains(q)) fail(ErrorKind::Validation, "fold file names an unknown query: " + q);
  if (folds.folds().size() < 2) fail(ErrorKind::Validation, "cross-validation needs at least 2 folds");
}

Qrels restrict_qrels(const Qrels& qrels, const std::set<std::string>& query_ids) {
  Qrels out;
  for (const auto& [q, docs] : qrels.judgments()) {
    if (!query_ids.contains(q)) continue;
    for (const auto& [d, g] : docs) out.set(q, d, g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

bool point_better(const PointResult& a, const PointResult& b, const GridSpec& grid) {
  if (a.ok != b.ok) return a.ok;
  if (a.value != b.value) return a.value > b.value;
  for (const char* key : {"fb_docs", "fb_terms"}) {
    auto va = axis_value(grid, a.point, key);
    auto vb = axis_value(grid, b.point, key);
    if (va && vb && *va != *vb) return *va < *vb;
  }
  return a.label < b.label;
}

namespace {

class FoldEvaluator {
 public:
  FoldEvaluator(const PipelineRunner& runner, const PipelineConfig& base, const GridSpec& grid,
                std::vector<Query> train, Qrels train_qrels, const SweepOptions& opts)
      : runner_(runner), base_(base), grid_(grid), train_(std::move(train)), qrels_(std::move(train_qrels)),
        opts_(opts) {}

  // Evaluates the points not seen before, in parallel; results keep input order.
  void evaluate(const std::vector<GridPoint>& points) {
    std::vector<GridPoint> todo;
    for (const auto& p : points) {
      auto label = point_label(grid_, p);
      if (seen_.insert(label).second) todo.push_back(p);
    }
    std::vector<PointResult> results(todo.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < todo.size(); i = next++) results[i] = evaluate_one(todo[i]);
    };
    const auto n_threads = std::max<std::size_t>(1, std::min(opts_.workers, todo.size()));
    if (n_threads == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }
    for (auto& r : results) evaluated_.push_back(std::move(r));
  }

  const PointResult* best() const {
    const PointResult* b = nullptr;
    for (const auto& r : evaluated_)
      if (r.ok && (!b || point_better(r, *b, grid_))) b = &r;
    return b;
  }

  std::vector<PointResult> take() { return std::move(evaluated_); }

 private:
  PointResult evaluate_one(const GridPoint& p) const {
    PointResult r{p, point_label(grid_, p), false, 0.0, {}};
    try {
      auto cfg = apply_point(base_, grid_, p);
      validate(cfg, false);
      auto out = runner_.run(train_, cfg);
      auto report = evaluate_run(out.final_runs(), qrels_, {opts_.target}, opts_.depth);
      r.value = report.aggregate.at(opts_.target);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  }

  const PipelineRunner& runner_;
  const PipelineConfig& base_;
  const GridSpec& grid_;
  std::vector<Query> train_;
  Qrels qrels_;
  const SweepOptions& opts_;
  std::set<std::string> seen_;
  std::vector<PointResult> evaluated_;
};

// Index of the base config's value on each axis; first value when absent.
GridPoint starting_point(const PipelineConfig& base, const GridSpec& grid) {
  GridPoint p(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto current = get_config_value(base, grid[i].key);
    for (std::size_t v = 0; v < grid[i].values.size(); ++v) {
      auto probe = base;
      set_config_value(probe, grid[i].key, grid[i].values[v]);
      if (get_config_value(probe, grid[i].key) == current) {
        p[i] = v;
        break;
      }
    }
  }
  return p;
}

} // namespace

SweepReport sweep(const PipelineRunner& runner, const std::vector<Query>& queries, const Qrels& qrels,
                  const PipelineConfig& base, const GridSpec& grid, const FoldSpec& folds, const SweepOptions& opts) {
  if (grid.empty() || grid_size(grid) == 0) fail(ErrorKind::Config, "grid is empty");
  validate(folds, queries);
  SweepReport report;
  report.target = opts.target;

  for (const auto& fold : folds.folds()) {
    FoldResult fr;
    fr.fold = fold;
    const auto train_ids = folds.train_queries(fold);
    const auto test_ids = folds.test_queries(fold);
    std::vector<Query> train, test;
    for (const auto& q : queries) {
      if (train_ids.contains(q.query_id)) train.push_back(q);
      else test.push_back(q);
    }
    fr.train_queries.assign(train_ids.begin(), train_ids.end());
    fr.test_queries.assign(test_ids.begin(), test_ids.end());

    FoldEvaluator ev(runner, base, grid, train, restrict_qrels(qrels, train_ids), opts);
    if (opts.mode == SweepMode::FullGrid) {
      ev.evaluate(plan_full_grid(grid));
    } else {
      auto current = starting_point(base, grid);
      ev.evaluate({current});
      for (std::size_t round = 0; round < opts.rounds; ++round) {
        for (std::size_t axis = 0; axis < grid.size(); ++axis) {
          std::vector<GridPoint> line;
          for (std::size_t v = 0; v < grid[axis].values.size(); ++v) {
            auto p = current;
            p[axis] = v;
            line.push_back(std::move(p));
          }
          ev.evaluate(line);
          if (const auto* b = ev.best()) current = b->point;
        }
      }
    }
    if (const auto* b = ev.best()) fr.chosen = *b;
    fr.evaluated = ev.take();

    if (fr.chosen) {
      auto cfg = apply_point(base, grid, fr.chosen->point);
      auto out = runner.run(test, cfg);
      for (const auto& [qid, run] : out.final_runs()) report.test_runs[qid] = run;
    }
    report.folds.push_back(std::move(fr));
  }
  if (!report.test_runs.empty()) {
    auto measures = opts.report_measures;
    if (std::find(measures.begin(), measures.end(), opts.target) == measures.end()) measures.push_back(opts.target);
    report.test_eval = evaluate_run(report.test_runs, qrels, measures, opts.depth);
  }
  return report;
}

std::string sweep_report_json(const SweepReport& report) {
  nlohmann::ordered_json j;
  j["target"] = report.target;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold;
    fj["train_queries"] = f.train_queries;
    fj["test_queries"] = f.test_queries;
    if (f.chosen) {
      fj["chosen"] = f.chosen->label;
      fj["train_value"] = f.chosen->value;
    } else {
      fj["chosen"] = nullptr;
    }
    fj["evaluated"] = f.evaluated.size();
    auto failed = nlohmann::ordered_json::array();
    for (const auto& r : f.evaluated)
      if (!r.ok) failed.push_back({{"point", r.label}, {"error", r.error}});
    fj["failed"] = std::move(failed);
    j["folds"].push_back(std::move(fj));
  }
  j["test_aggregate"] = report.test_eval.aggregate;
  return j.dump(2);
}

} // namespace lee
