#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmcforge/config.hpp"
#include "cmcforge/dataset.hpp"
#include "cmcforge/trainer.hpp"

namespace cmcforge {

// One-sided sign test: P(X >= positives) for X ~ Binomial(n, 1/2), where n
// counts the non-tied pairs. Returns 1 when n = 0.
double sign_test_p(int positives, int n);

// Spearman rank correlation with average ranks for ties. NaN when either
// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

enum class Metric { kMiou2d, kMiou3dTrue, kMiou3dUnprojected };
std::string_view to_string(Metric m);
double metric_value(const EvalMetrics& m, Metric metric);

struct TrendResult {
  std::string variant;
  std::string baseline;
  Metric metric{Metric::kMiou2d};
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  std::vector<double> baseline_values;
  double mean{0};
  double baseline_mean{0};
  double mean_improvement{0};
  double worst_improvement{0};  // most negative paired difference
  int positives{0};
  int ties{0};
  double sign_p{1};

  // p <= 0.05 on the sign test.
  bool significant(double alpha = 0.05) const { return sign_p <= alpha; }
  // Significant, or mean >= 0 with no seed losing more than `tolerance` points.
  bool holds(double tolerance = 1.0, double alpha = 0.05) const;
};

TrendResult paired_trend(std::string variant, std::span<const double> values, std::string baseline,
                         std::span<const double> baseline_values, std::span<const std::uint64_t> seeds,
                         Metric metric);

struct Variant {
  std::string name;
  nlohmann::json patch;  // merge patch applied to the base config
};

struct Comparison {
  std::string variant;
  std::string baseline;
  Metric metric{Metric::kMiou2d};
};

struct Suite {
  std::string name;
  std::vector<Variant> variants;
  std::vector<Comparison> comparisons;
};

std::vector<std::string> suite_names();
Suite suite_definition(std::string_view name);

// Variant configs used as paired baselines across suites.
nlohmann::json ema_baseline_patch();
nlohmann::json only_3d_patch();

struct RunRecord {
  std::string variant;
  std::uint64_t seed{0};
  std::string config_hash;
  std::string dataset_hash;
  std::string init_hash;
  EvalMetrics metrics;
};

// Runs experiments at most once per config hash; datasets are shared per
// dataset hash. Safe for concurrent use.
class ExperimentCache {
 public:
  RunRecord run(const ExperimentConfig& config, const std::string& variant);
  std::shared_ptr<const Dataset> dataset(const ExperimentConfig& config);
  std::size_t runs_executed() const { return executed_; }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  std::map<std::string, RunRecord> runs_;
  std::size_t executed_{0};
};

std::string init_hash(const Branches& branches);

struct SuiteResult {
  std::string suite;
  std::vector<RunRecord> records;
  std::vector<TrendResult> trends;
};

// Runs every variant for every seed (jobs fan out over `threads` workers) and
// computes the suite's paired comparisons. Requires at least 5 seeds.
SuiteResult run_ablation_suite(const ExperimentConfig& base, const Suite& suite, std::span<const std::uint64_t> seeds,
                               ExperimentCache& cache, int threads = 1);

std::string records_csv(const SuiteResult& r);
std::string trends_csv(const SuiteResult& r);

// For the scribble-length sweep: per length, the mean CMC-over-EMA gain
// and the Spearman correlation between length and gain.
struct SweepResult {
  std::vector<double> lengths;
  std::vector<double> mean_gains;
  double rho{0};
};
SweepResult scribble_sweep(const SuiteResult& r);

// Parses comma-separated text (lines starting with '#' skipped) and renders
// an aligned text table.
std::string render_table(std::string_view csv);

// Parses "N..M" or "N" into an inclusive seed list.
std::vector<std::uint64_t> parse_seed_range(std::string_view text);

// The desk-scale benchmark configuration used by the suites.
ExperimentConfig benchmark_config();

}  // namespace cmcforge
