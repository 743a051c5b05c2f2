#include "cmcforge/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "cmcforge/error.hpp"
#include "cmcforge/io.hpp"
#include "cmcforge/parallel.hpp"

namespace cmcforge {

using nlohmann::json;

double sign_test_p(int positives, int n) {
  if (n <= 0) return 1.0;
  // log-space binomial tail
  double p = 0.0;
  for (int k = positives; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("spearman: size mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), Eigen::Index(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), Eigen::Index(ry.size()));
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double denom = da.norm() * db.norm();
  if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
  return da.dot(db) / denom;
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kMiou2d:
      return "miou_2d";
    case Metric::kMiou3dTrue:
      return "miou_3d_true";
    case Metric::kMiou3dUnprojected:
      return "miou_3d_unprojected";
  }
  return "miou_2d";
}

double metric_value(const EvalMetrics& m, Metric metric) {
  switch (metric) {
    case Metric::kMiou2d:
      return m.miou_2d;
    case Metric::kMiou3dTrue:
      return m.miou_3d_true;
    case Metric::kMiou3dUnprojected:
      return m.miou_3d_unprojected;
  }
  return m.miou_2d;
}

bool TrendResult::holds(double tolerance, double alpha) const {
  if (mean_improvement > 0 && significant(alpha)) return true;
  return mean_improvement >= 0 && worst_improvement >= -tolerance;
}

TrendResult paired_trend(std::string variant, std::span<const double> values, std::string baseline,
                         std::span<const double> baseline_values, std::span<const std::uint64_t> seeds,
                         Metric metric) {
  if (values.size() != baseline_values.size() || values.size() != seeds.size())
    throw ContractError("paired_trend: per-seed lists must align");
  if (values.empty()) throw ContractError("paired_trend: no seeds");
  TrendResult t;
  t.variant = std::move(variant);
  t.baseline = std::move(baseline);
  t.metric = metric;
  t.seeds.assign(seeds.begin(), seeds.end());
  t.values.assign(values.begin(), values.end());
  t.baseline_values.assign(baseline_values.begin(), baseline_values.end());
  const auto n = double(values.size());
  t.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  t.baseline_mean = std::accumulate(baseline_values.begin(), baseline_values.end(), 0.0) / n;
  t.worst_improvement = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  int nonzero = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - baseline_values[i];
    sum += d;
    t.worst_improvement = std::min(t.worst_improvement, d);
    if (d > 0) ++t.positives;
    if (d == 0)
      ++t.ties;
    else
      ++nonzero;
  }
  t.mean_improvement = sum / n;
  t.sign_p = sign_test_p(t.positives, nonzero);
  return t;
}

ExperimentConfig benchmark_config() {
  ExperimentConfig c;
  c.name = "benchmark";
  c.dataset.appearance.confusable_pairs = {{0, 2}, {1, 4}, {3, 1}};
  c.dataset.appearance.confusion = 0.6;
  return c;
}

json ema_baseline_patch() { return {{"training", {{"enable_3d", false}, {"enable_cmc", false}}}}; }
json only_3d_patch() { return {{"training", {{"enable_2d", false}, {"enable_cmc", false}}}}; }

std::vector<std::string> suite_names() {
  return {"main", "confidence", "sampling", "recon_quality", "scribble_length", "simulated_lidar"};
}

Suite suite_definition(std::string_view name) {
  Suite s;
  s.name = std::string(name);
  auto training = [](json t) { return json{{"training", std::move(t)}}; };
  if (name == "main") {
    s.variants = {{"ema", ema_baseline_patch()}, {"only_3d", only_3d_patch()}, {"ours", json::object()}};
    s.comparisons = {{"ours", "ema", Metric::kMiou2d}, {"ours", "only_3d", Metric::kMiou3dTrue}};
  } else if (name == "confidence") {
    for (const char* mode : {"none", "prediction", "reconstruction", "dual"})
      s.variants.push_back({mode, training({{"confidence", mode}})});
    for (const char* mode : {"prediction", "reconstruction", "dual"})
      s.comparisons.push_back({mode, "none", Metric::kMiou2d});
  } else if (name == "sampling") {
    for (const char* strat : {"random", "correspondences_only", "view_aware"})
      s.variants.push_back({strat, training({{"sampling", {{"strategy", strat}}}})});
    s.comparisons = {{"view_aware", "random", Metric::kMiou2d},
                     {"view_aware", "random", Metric::kMiou3dTrue},
                     {"view_aware", "correspondences_only", Metric::kMiou3dTrue}};
  } else if (name == "recon_quality") {
    for (const char* src : {"single_frame", "multi_view"})
      s.variants.push_back({src, {{"dataset", {{"reconstruction", {{"source", src}}}}}}});
    s.comparisons = {{"multi_view", "single_frame", Metric::kMiou2d}};
  } else if (name == "scribble_length") {
    for (double len : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      char tag[16];
      std::snprintf(tag, sizeof tag, "%.2f", len);
      const json labels{{"dataset", {{"labels", {{"length_scale", len}}}}}};
      json ema = ema_baseline_patch();
      ema.merge_patch(labels);
      s.variants.push_back({std::string("ema@") + tag, ema});
      s.variants.push_back({std::string("ours@") + tag, labels});
      s.comparisons.push_back({std::string("ours@") + tag, std::string("ema@") + tag, Metric::kMiou2d});
    }
  } else if (name == "simulated_lidar") {
    s.variants = {{"sparse_prediction",
                   {{"dataset", {{"reconstruction", {{"density", "single_scan"}}}}},
                    {"training", {{"confidence", "prediction"}}}}},
                  {"dense_dual", json::object()}};
    s.comparisons = {{"dense_dual", "sparse_prediction", Metric::kMiou2d}};
  } else {
    throw ConfigError("unknown suite: " + std::string(name));
  }
  return s;
}

std::string init_hash(const Branches& b) {
  std::string bytes;
  auto add = [&bytes](const std::optional<BranchState>& s) {
    if (!s) return;
    const auto& p = s->student.params();
    bytes.append(reinterpret_cast<const char*>(p.data()), std::size_t(p.size()) * sizeof(double));
  };
  add(b.two_d);
  add(b.three_d);
  return sha256_hex(bytes);
}

std::shared_ptr<const Dataset> ExperimentCache::dataset(const ExperimentConfig& config) {
  const std::string key = dataset_hash(config);
  {
    std::lock_guard lock(mutex_);
    auto it = datasets_.find(key);
    if (it != datasets_.end()) return it->second;
  }
  auto built = std::make_shared<const Dataset>(build_dataset(config));
  std::lock_guard lock(mutex_);
  return datasets_.emplace(key, std::move(built)).first->second;
}

RunRecord ExperimentCache::run(const ExperimentConfig& config, const std::string& variant) {
  // The name is a label only; runs that differ by name alone are shared.
  ExperimentConfig unnamed = config;
  unnamed.name.clear();
  const std::string key = config_hash(unnamed);
  {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(key);
    if (it != runs_.end()) {
      RunRecord r = it->second;
      r.variant = variant;
      return r;
    }
  }
  const auto data = dataset(config);
  RunRecord rec;
  rec.variant = variant;
  rec.seed = config.seed;
  rec.config_hash = config_hash(config);
  rec.dataset_hash = data->hash;
  rec.init_hash = init_hash(init_branches(config));
  rec.metrics = run_experiment(config, *data).final_metrics();
  std::lock_guard lock(mutex_);
  ++executed_;
  runs_.emplace(key, rec);
  return rec;
}

SuiteResult run_ablation_suite(const ExperimentConfig& base, const Suite& suite, std::span<const std::uint64_t> seeds,
                               ExperimentCache& cache, int threads) {
  if (suite.variants.size() < 2) throw ConfigError("ablation suite needs at least 2 variants");
  if (seeds.size() < 5) throw ConfigError("ablation suite needs at least 5 seeds");
  struct Job {
    std::size_t variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < suite.variants.size(); ++v)
    for (std::uint64_t s : seeds) jobs.push_back({v, s});

  std::vector<ExperimentConfig> configs;
  for (const Job& j : jobs) {
    ExperimentConfig c = patched(base, suite.variants[j.variant].patch);
    c.seed = j.seed;
    c.name = suite.name + "/" + suite.variants[j.variant].name;
    c.validate();
    configs.push_back(std::move(c));
  }

  SuiteResult out;
  out.suite = suite.name;
  out.records.resize(jobs.size());
  parallel_for(jobs.size(), effective_threads(threads), [&](std::size_t i) {
    out.records[i] = cache.run(configs[i], suite.variants[jobs[i].variant].name);
  });

  auto values_of = [&](const std::string& variant, Metric metric) {
    std::vector<double> v;
    for (const RunRecord& r : out.records)
      if (r.variant == variant) v.push_back(metric_value(r.metrics, metric));
    if (v.size() != seeds.size()) throw ConfigError("suite " + suite.name + ": unknown variant " + variant);
    return v;
  };
  for (const Comparison& c : suite.comparisons) {
    const auto a = values_of(c.variant, c.metric);
    const auto b = values_of(c.baseline, c.metric);
    out.trends.push_back(paired_trend(c.variant, a, c.baseline, b, seeds, c.metric));
  }
  return out;
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

std::string records_csv(const SuiteResult& r) {
  std::string out = "suite,variant,seed,miou_2d,miou_3d_true,miou_3d_unprojected,config_hash,dataset_hash,init_hash\n";
  for (const RunRecord& rec : r.records)
    out += r.suite + "," + rec.variant + "," + std::to_string(rec.seed) + "," + num(rec.metrics.miou_2d) + "," +
           num(rec.metrics.miou_3d_true) + "," + num(rec.metrics.miou_3d_unprojected) + "," + rec.config_hash + "," +
           rec.dataset_hash + "," + rec.init_hash + "\n";
  return out;
}

std::string trends_csv(const SuiteResult& r) {
  std::string out =
      "suite,variant,baseline,metric,seeds,mean,baseline_mean,mean_improvement,worst_improvement,positives,ties,"
      "sign_p\n";
  for (const TrendResult& t : r.trends)
    out += r.suite + "," + t.variant + "," + t.baseline + "," + std::string(to_string(t.metric)) + "," +
           std::to_string(t.seeds.size()) + "," + num(t.mean) + "," + num(t.baseline_mean) + "," +
           num(t.mean_improvement) + "," + num(t.worst_improvement) + "," + std::to_string(t.positives) + "," +
           std::to_string(t.ties) + "," + num(t.sign_p) + "\n";
  return out;
}

SweepResult scribble_sweep(const SuiteResult& r) {
  SweepResult s;
  for (const TrendResult& t : r.trends) {
    const auto at = t.variant.find('@');
    if (at == std::string::npos) continue;
    s.lengths.push_back(std::stod(t.variant.substr(at + 1)));
    s.mean_gains.push_back(t.mean_improvement);
  }
  s.rho = spearman(s.lengths, s.mean_gains);
  return s;
}

std::string render_table(std::string_view csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      std::string cell = rows[i][c];
      cell.resize(width[c], ' ');
      out += (c ? "  " : "") + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_range(std::string_view text) {
  auto parse = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("bad seed range: " + std::string(text));
    return v;
  };
  const auto dots = text.find("..");
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
  if (dots == std::string_view::npos) {
    lo = hi = parse(text);
  } else {
    lo = parse(text.substr(0, dots));
    hi = parse(text.substr(dots + 2));
  }
  if (hi < lo) throw ConfigError("bad seed range: " + std::string(text));
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  return out;
}

}  // namespace cmcforge
