#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmcforge/config.hpp"
#include "cmcforge/dataset.hpp"
#include "cmcforge/error.hpp"
#include "cmcforge/harness.hpp"
#include "cmcforge/io.hpp"
#include "cmcforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace cmcforge;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads{1};
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_out) {
  cmd->add_option("--config", a.config, "Experiment config (JSON); defaults to the benchmark config");
  cmd->add_option("--seed", a.seed, "Experiment seed");
  auto* out = cmd->add_option("--out", a.out, "Output directory");
  if (needs_out) out->required();
  cmd->add_option("--threads", a.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

ExperimentConfig resolve_config(const CommonArgs& a) {
  ExperimentConfig c = a.config.empty() ? benchmark_config() : load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  c.validate();
  return c;
}

void print_metrics(const EvalMetrics& m) {
  std::printf("epoch %d  miou_2d %.3f  miou_3d_true %.3f  miou_3d_unprojected %.3f\n", m.epoch, m.miou_2d,
              m.miou_3d_true, m.miou_3d_unprojected);
}

int cmd_gen(const CommonArgs& a, bool dump_samples) {
  const ExperimentConfig c = resolve_config(a);
  const Dataset d = build_dataset(c);
  const fs::path out(a.out);
  save_dataset(out, d, c);
  if (dump_samples) {
    for (std::size_t s = 0; s < d.train.size(); ++s) {
      const SceneData& sd = d.train[s];
      for (const CameraView& v : sd.views) {
        const ViewSample vs = sample_for_view(sd, v.view_id, c.training.sampling, c.seed);
        std::ostringstream text;
        text << "# index correspondence\n";
        for (std::size_t k = 0; k < vs.size(); ++k)
          text << vs.point_indices[k] << ' ' << (vs.correspondence_mask[k] ? 1 : 0) << '\n';
        char name[64];
        std::snprintf(name, sizeof name, "samples/train_%03zu_view_%03d.txt", s, v.view_id);
        atomic_write(out / name, text.str());
      }
    }
  }
  std::printf("dataset %s: %zu train scenes, %zu eval scenes -> %s\n", d.hash.substr(0, 12).c_str(), d.train.size(),
              d.eval.size(), out.string().c_str());
  return 0;
}

int cmd_train(const CommonArgs& a, bool resume) {
  const ExperimentConfig c = resolve_config(a);
  const Dataset d = build_dataset(c);
  RunOptions opts;
  opts.out_dir = fs::path(a.out);
  opts.threads = a.threads;
  opts.resume = resume;
  const RunResult r = run_experiment(c, d, opts);
  std::printf("config %s\n", r.config_hash.substr(0, 12).c_str());
  for (const EvalMetrics& m : r.metrics) print_metrics(m);
  return 0;
}

int cmd_ablate(const CommonArgs& a, const std::string& suite_name, const std::string& seeds_text) {
  const ExperimentConfig base = resolve_config(a);
  const Suite suite = suite_definition(suite_name);
  const auto seeds = parse_seed_range(seeds_text);
  ExperimentCache cache;
  const SuiteResult r = run_ablation_suite(base, suite, seeds, cache, a.threads);
  const fs::path out(a.out);
  const std::string records = records_csv(r);
  const std::string trends = trends_csv(r);
  atomic_write(out / (suite_name + "_runs.csv"), records);
  atomic_write(out / (suite_name + "_trends.csv"), trends);
  std::cout << render_table(trends);
  if (suite_name == "scribble_length") {
    const SweepResult s = scribble_sweep(r);
    std::string csv = "length_scale,mean_gain\n";
    for (std::size_t i = 0; i < s.lengths.size(); ++i) {
      char row[64];
      std::snprintf(row, sizeof row, "%.6g,%.6g\n", s.lengths[i], s.mean_gains[i]);
      csv += row;
    }
    atomic_write(out / "scribble_length_sweep.csv", csv);
    std::printf("spearman(length, gain) = %.4f\n", s.rho);
  }
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint) {
  const ExperimentConfig c = resolve_config(a);
  fs::path ckpt_path = checkpoint;
  if (ckpt_path.empty()) {
    if (a.out.empty()) throw ConfigError("eval: give --checkpoint or a run directory via --out");
    const fs::path dir = fs::path(a.out) / "checkpoints";
    if (!fs::exists(dir)) throw IoError("eval: no checkpoints in " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".bin" && (ckpt_path.empty() || e.path() > ckpt_path)) ckpt_path = e.path();
    if (ckpt_path.empty()) throw IoError("eval: no checkpoints in " + dir.string());
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  Branches b;
  for (const BranchState& s : ckpt.branches) (s.modality == Modality::k2d ? b.two_d : b.three_d) = s;
  const Dataset d = build_dataset(c);
  EvalMetrics m = evaluate(b, d.eval, a.threads);
  m.epoch = ckpt.epoch;
  print_metrics(m);
  if (!a.out.empty()) {
    nlohmann::json j{{"checkpoint", ckpt_path.string()},
                     {"epoch", m.epoch},
                     {"miou_2d", std::isnan(m.miou_2d) ? nlohmann::json() : nlohmann::json(m.miou_2d)},
                     {"miou_3d_true", std::isnan(m.miou_3d_true) ? nlohmann::json() : nlohmann::json(m.miou_3d_true)},
                     {"miou_3d_unprojected", std::isnan(m.miou_3d_unprojected)
                                                 ? nlohmann::json()
                                                 : nlohmann::json(m.miou_3d_unprojected)}};
    atomic_write(fs::path(a.out) / "eval.json", j.dump(2) + "\n");
  }
  return 0;
}

// Aggregates *_runs.csv files into per-variant mean/std rows for plotting.
std::string plot_csv(const std::vector<fs::path>& run_files) {
  struct Acc {
    std::vector<double> v2, v3;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const fs::path& p : run_files) {
    std::istringstream in(read_file(p));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (cells.size() < 6) continue;
      auto& a = acc[{cells[0], cells[1]}];
      a.v2.push_back(std::stod(cells[3]));
      a.v3.push_back(std::stod(cells[4]));
    }
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    for (double x : v) s += (x - m) * (x - m);
    s = v.size() > 1 ? std::sqrt(s / double(v.size() - 1)) : 0.0;
    return std::pair{m, s};
  };
  std::string out = "suite,variant,seeds,miou_2d_mean,miou_2d_std,miou_3d_true_mean,miou_3d_true_std\n";
  for (const auto& [key, a] : acc) {
    const auto [m2, s2] = stats(a.v2);
    const auto [m3, s3] = stats(a.v3);
    char row[256];
    std::snprintf(row, sizeof row, "%s,%s,%zu,%.4f,%.4f,%.4f,%.4f\n", key.first.c_str(), key.second.c_str(),
                  a.v2.size(), m2, s2, m3, s3);
    out += row;
  }
  return out;
}

int cmd_report(const std::string& dir_text, const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& i : inputs) files.emplace_back(i);
  if (files.empty()) {
    if (!fs::is_directory(dir_text)) throw IoError("report: not a directory: " + dir_text);
    for (const auto& e : fs::directory_iterator(dir_text))
      if (e.path().extension() == ".csv" && e.path().filename() != "plot.csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw IoError("report: no CSV files found");
  std::string text;
  std::vector<fs::path> run_files;
  for (const fs::path& f : files) {
    text += "== " + f.filename().string() + "\n" + render_table(read_file(f)) + "\n";
    if (f.filename().string().ends_with("_runs.csv")) run_files.push_back(f);
  }
  std::cout << text;
  if (!dir_text.empty()) {
    atomic_write(fs::path(dir_text) / "report.txt", text);
    if (!run_files.empty()) atomic_write(fs::path(dir_text) / "plot.csv", plot_csv(run_files));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmcforge: cross-modal weakly-supervised segmentation laboratory"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, ablate_args, eval_args;
  bool dump_samples = false;
  bool resume = false;
  std::string suite, seeds = "1..5", checkpoint, report_dir;
  std::vector<std::string> report_inputs;

  auto* gen = app.add_subcommand("gen", "Build the benchmark dataset");
  add_common(gen, gen_args, true);
  gen->add_flag("--dump-samples", dump_samples, "Also write each training view's point sample as an index list");

  auto* train = app.add_subcommand("train", "Train one config");
  add_common(train, train_args, true);
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation suite over paired seeds");
  add_common(ablate, ablate_args, true);
  ablate->add_option("--suite", suite, "Suite name")->required()->check(CLI::IsMember(suite_names()));
  ablate->add_option("--seeds", seeds, "Seed range N..M (inclusive)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation scenes");
  add_common(eval, eval_args, false);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file; defaults to the latest in --out/checkpoints");

  auto* report = app.add_subcommand("report", "Render CSV results as aligned tables plus plot-ready CSV");
  report->add_option("--out", report_dir, "Directory holding result CSVs");
  report->add_option("inputs", report_inputs, "Explicit CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*gen) return cmd_gen(gen_args, dump_samples);
    if (*train) return cmd_train(train_args, resume);
    if (*ablate) return cmd_ablate(ablate_args, suite, seeds);
    if (*eval) return cmd_eval(eval_args, checkpoint);
    if (*report) return cmd_report(report_dir, report_inputs);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return static_cast<int>(ExitCode::kConfig);
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return static_cast<int>(ExitCode::kIo);
  }
  return 0;
}
