#include "cmcforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "cmcforge/augment.hpp"
#include "cmcforge/error.hpp"
#include "cmcforge/io.hpp"
#include "cmcforge/metrics.hpp"
#include "cmcforge/parallel.hpp"
#include "cmcforge/rng.hpp"
#include "cmcforge/sampling.hpp"

namespace cmcforge {

namespace fs = std::filesystem;

std::pair<double, double> lambda_at(int epoch, const Schedule& s) {
  if (epoch < s.base_epochs) return {0.0, 0.0};
  const double ramp = s.ramp_epochs > 0 ? std::min(1.0, double(epoch - s.base_epochs) / double(s.ramp_epochs)) : 1.0;
  return {ramp * s.lambda_max_2d, ramp * s.lambda_max_3d};
}

Branches init_branches(const ExperimentConfig& config) {
  const int f = config.dataset.appearance.feature_dim;
  const int c = config.dataset.scene.class_count;
  const int h = config.training.hidden;
  Branches b;
  if (config.training.enable_2d) {
    MicroNet net(f, h, c);
    net.initialize(derive_seed(config.seed, {tag::kInit, 2}));
    b.two_d = BranchState::create(Modality::k2d, std::move(net));
  }
  if (config.training.enable_3d) {
    MicroNet net(3 + f, h, c);
    net.initialize(derive_seed(config.seed, {tag::kInit, 3}));
    b.three_d = BranchState::create(Modality::k3d, std::move(net));
  }
  return b;
}

ViewSample sample_for_view(const SceneData& scene, int view_id, const SamplingConfig& sampling, std::uint64_t seed) {
  const ScenePointCloud& cloud = scene.cloud;
  const CameraView& view = scene.views[static_cast<std::size_t>(view_id)];
  switch (sampling.strategy) {
    case SamplingStrategy::kRandom:
      return random_sample(cloud, view_id, sampling.budget, seed);
    case SamplingStrategy::kCorrespondencesOnly:
      return correspondences_only_sample(cloud, view_id, sampling.budget, seed);
    case SamplingStrategy::kViewAware:
      break;
  }
  const double radius = scene.single_frame ? 0.0 : sampling.context_radius * cloud.scene_scale;
  return view_aware_sample(cloud, view_id, view.pose.center(), sampling.budget, sampling.view_fraction, radius, seed);
}

namespace {

// Student-side targets for one modality, in student-row order.
struct BranchTargets {
  Eigen::VectorXi labels;     // ignore id where unlabeled or excluded
  Mask unlabeled;             // rows entering the consistency term
  Eigen::MatrixXd teacher_aligned;
};

struct BranchPass {
  AugmentedBatch student_in;
  AugmentedBatch teacher_in;
  Eigen::MatrixXd student_logits;
  Eigen::MatrixXd teacher_logits;
  ForwardCache cache;
};

struct ItemResult {
  LossComponents parts;
  Eigen::VectorXd grad_2d;
  Eigen::VectorXd grad_3d;
  Eigen::Index labeled_2d{0}, unlabeled_2d{0}, labeled_3d{0}, unlabeled_3d{0}, correspondences{0};
};

// A student row is usable when it was neither cut out nor cropped.
bool kept(const AugmentedBatch& b, std::size_t row) {
  const int original = b.source[row];
  return b.inverse[static_cast<std::size_t>(original)] == static_cast<int>(row);
}

// `label_of(original)` yields the sparse label, or -1 for elements excluded
// from every loss (void pixels).
template <typename LabelOf>
BranchTargets align(const BranchPass& pass, int classes, LabelOf label_of) {
  const auto n = static_cast<Eigen::Index>(pass.student_in.source.size());
  BranchTargets t;
  t.labels = Eigen::VectorXi::Constant(n, classes);
  t.unlabeled = Mask::Constant(n, false);
  t.teacher_aligned = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto ru = static_cast<std::size_t>(r);
    if (!kept(pass.student_in, ru)) continue;
    const int original = pass.student_in.source[ru];
    const int y = label_of(original);
    if (y < 0) continue;
    if (y < classes) {
      t.labels[r] = y;
      continue;
    }
    const int tr = pass.teacher_in.inverse[static_cast<std::size_t>(original)];
    if (tr == kExcluded) continue;
    t.unlabeled[r] = true;
    t.teacher_aligned.row(r) = pass.teacher_logits.row(tr);
  }
  return t;
}

struct BranchLoss {
  LossGrad ce;
  LossGrad kl;
  double w_t{0};
};

BranchLoss branch_losses(const BranchPass& pass, const BranchTargets& t, double tau) {
  BranchLoss out;
  out.ce = supervised_ce(pass.student_logits, t.labels);
  out.kl = consistency_kl(pass.student_logits, t.teacher_aligned, t.unlabeled);
  out.w_t = confidence_weight(t.teacher_aligned, t.unlabeled, tau);
  return out;
}

ItemResult process_item(const Branches& branches, const BatchItem& item, const TrainingConfig& config,
                        double lambda_2d, double lambda_3d, std::uint64_t item_seed) {
  const SceneData& scene = *item.scene;
  const CameraView& view = scene.views[static_cast<std::size_t>(item.view_id)];
  const ScenePointCloud& cloud = scene.cloud;
  const int classes = view.class_count;
  const int signal_dim = view.feature_dim() - 2;
  const AugmentationSpec student_spec = AugmentationSpec::for_tier(config.student_augment);
  const AugmentationSpec teacher_spec = AugmentationSpec::for_tier(config.teacher_augment);
  const bool branch_weighted = config.total_mode == TotalMode::kBranchObjective;
  const double sup_coef = branch_weighted ? 1.0 - config.beta : 1.0;

  ItemResult res;
  std::optional<BranchPass> p2;
  std::optional<BranchPass> p3;
  std::optional<BranchTargets> t2;
  std::optional<BranchTargets> t3;
  BranchLoss l2;
  BranchLoss l3;
  ViewSample sample;

  if (branches.two_d) {
    const BranchState& b = *branches.two_d;
    p2.emplace();
    p2->student_in = augment_image(view, signal_dim, student_spec.image, derive_seed(item_seed, {tag::kAugment2d, 0}));
    p2->teacher_in = augment_image(view, signal_dim, teacher_spec.image, derive_seed(item_seed, {tag::kAugment2d, 1}));
    p2->student_logits = forward(b.student, p2->student_in.rows, &p2->cache);
    p2->teacher_logits = forward(b.teacher, p2->teacher_in.rows);
    const SparseLabelMap& map = scene.label_maps[static_cast<std::size_t>(item.view_id)];
    t2 = align(*p2, classes, [&](int pixel) { return view.is_void(pixel) ? -1 : map.labels[pixel]; });
    l2 = branch_losses(*p2, *t2, config.tau);
    res.parts.supervised_2d = l2.ce.loss;
    res.parts.consistency_2d = l2.kl.loss;
    res.parts.w_t_2d = l2.w_t;
    res.labeled_2d = l2.ce.count;
    res.unlabeled_2d = l2.kl.count;
  }

  if (branches.three_d) {
    const BranchState& b = *branches.three_d;
    sample = sample_for_view(scene, item.view_id, config.sampling, derive_seed(item_seed, {tag::kSampling}));
    p3.emplace();
    p3->student_in = augment_points(cloud, sample, student_spec.points, derive_seed(item_seed, {tag::kAugment3d, 0}));
    p3->teacher_in = augment_points(cloud, sample, teacher_spec.points, derive_seed(item_seed, {tag::kAugment3d, 1}));
    p3->student_logits = forward(b.student, p3->student_in.rows, &p3->cache);
    p3->teacher_logits = forward(b.teacher, p3->teacher_in.rows);
    t3 = align(*p3, classes, [&](int row) {
      return cloud.sparse_labels[sample.point_indices[static_cast<std::size_t>(row)]];
    });
    l3 = branch_losses(*p3, *t3, config.tau);
    res.parts.supervised_3d = l3.ce.loss;
    res.parts.consistency_3d = l3.kl.loss;
    res.parts.w_t_3d = l3.w_t;
    res.labeled_3d = l3.ce.count;
    res.unlabeled_3d = l3.kl.count;
  }

  LossGrad c2;
  LossGrad c3;
  const bool cross = p2 && p3 && config.enable_cmc && (lambda_2d > 0 || lambda_3d > 0);
  if (cross) {
    std::vector<CmcPair> to_2d;
    std::vector<CmcPair> to_3d;
    std::vector<double> conf;
    for (std::size_t k = 0; k < sample.size(); ++k) {
      if (!sample.correspondence_mask[k]) continue;
      const Eigen::Index point = sample.point_indices[k];
      const int pixel = cloud.source_pixel_index(point, view.width());
      const int s2 = p2->student_in.inverse[static_cast<std::size_t>(pixel)];
      const int t2row = p2->teacher_in.inverse[static_cast<std::size_t>(pixel)];
      const int s3 = p3->student_in.inverse[k];
      const int t3row = p3->teacher_in.inverse[k];
      if (s2 == kExcluded || t2row == kExcluded || s3 == kExcluded || t3row == kExcluded) continue;
      to_2d.push_back({s2, t3row});
      to_3d.push_back({s3, t2row});
      conf.push_back(cloud.rec_confidence[point]);
    }
    const Eigen::Map<const Eigen::VectorXd> rec(conf.data(), static_cast<Eigen::Index>(conf.size()));
    const CmcOptions opts{config.confidence, config.cmc_normalize};
    c2 = cmc_loss(p2->student_logits, p3->teacher_logits, to_2d, rec, opts);
    c3 = cmc_loss(p3->student_logits, p2->teacher_logits, to_3d, rec, opts);
    res.parts.cmc_2d = c2.loss;
    res.parts.cmc_3d = c3.loss;
    res.correspondences = static_cast<Eigen::Index>(to_2d.size());
  }

  if (p2) {
    const double cons_coef = branch_weighted ? config.beta * l2.w_t : 1.0;
    Eigen::MatrixXd g = sup_coef * l2.ce.grad + cons_coef * l2.kl.grad;
    if (cross) g += lambda_2d * c2.grad;
    res.grad_2d = backward(branches.two_d->student, p2->cache, g);
  }
  if (p3) {
    const double cons_coef = branch_weighted ? config.beta * l3.w_t : 1.0;
    Eigen::MatrixXd g = sup_coef * l3.ce.grad + cons_coef * l3.kl.grad;
    if (cross) g += lambda_3d * c3.grad;
    res.grad_3d = backward(branches.three_d->student, p3->cache, g);
  }
  return res;
}

AdamWParams adamw(const TrainingConfig& c, Modality m) {
  AdamWParams p;
  p.lr = m == Modality::k2d ? c.schedule.lr_2d : c.schedule.lr_3d;
  p.weight_decay = m == Modality::k2d ? c.weight_decay_2d : c.weight_decay_3d;
  p.beta1 = c.beta1;
  p.beta2 = c.beta2;
  p.eps = c.adam_eps;
  return p;
}

}  // namespace

LossReport train_step(Branches& branches, std::span<const BatchItem> batch, const TrainingConfig& config,
                      double lambda_2d, double lambda_3d, std::uint64_t step_seed, int threads) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  if (!branches.two_d && !branches.three_d) throw ConfigError("train_step: no branch enabled");
  if (!branches.two_d || !branches.three_d || !config.enable_cmc) lambda_2d = lambda_3d = 0.0;

  std::vector<ItemResult> results(batch.size());
  parallel_for(batch.size(), effective_threads(threads), [&](std::size_t i) {
    results[i] = process_item(branches, batch[i], config, lambda_2d, lambda_3d, derive_seed(step_seed, {i}));
  });

  const double inv = 1.0 / double(batch.size());
  LossComponents mean;
  Eigen::VectorXd g2;
  Eigen::VectorXd g3;
  if (branches.two_d) g2 = Eigen::VectorXd::Zero(branches.two_d->student.parameter_count());
  if (branches.three_d) g3 = Eigen::VectorXd::Zero(branches.three_d->student.parameter_count());
  LossReport counts;
  for (const ItemResult& r : results) {
    mean.supervised_2d += inv * r.parts.supervised_2d;
    mean.consistency_2d += inv * r.parts.consistency_2d;
    mean.supervised_3d += inv * r.parts.supervised_3d;
    mean.consistency_3d += inv * r.parts.consistency_3d;
    mean.cmc_2d += inv * r.parts.cmc_2d;
    mean.cmc_3d += inv * r.parts.cmc_3d;
    mean.w_t_2d += inv * r.parts.w_t_2d;
    mean.w_t_3d += inv * r.parts.w_t_3d;
    if (branches.two_d) g2 += inv * r.grad_2d;
    if (branches.three_d) g3 += inv * r.grad_3d;
    counts.labeled_2d += r.labeled_2d;
    counts.unlabeled_2d += r.unlabeled_2d;
    counts.labeled_3d += r.labeled_3d;
    counts.unlabeled_3d += r.unlabeled_3d;
    counts.correspondences += r.correspondences;
  }

  LossReport report = total_objective(mean, lambda_2d, lambda_3d, config.beta, config.total_mode);
  report.labeled_2d = counts.labeled_2d;
  report.unlabeled_2d = counts.unlabeled_2d;
  report.labeled_3d = counts.labeled_3d;
  report.unlabeled_3d = counts.unlabeled_3d;
  report.correspondences = counts.correspondences;
  if (!std::isfinite(report.total)) throw NumericError("train_step: non-finite loss");

  if (branches.two_d) {
    optimizer_step(*branches.two_d, g2, adamw(config, Modality::k2d));
    ema_update(*branches.two_d, config.ema_alpha);
  }
  if (branches.three_d) {
    optimizer_step(*branches.three_d, g3, adamw(config, Modality::k3d));
    ema_update(*branches.three_d, config.ema_alpha);
  }
  return report;
}

EvalMetrics evaluate(const Branches& branches, std::span<const SceneData> scenes, int threads) {
  if (scenes.empty()) throw DomainError("evaluate: no evaluation scenes");
  const int classes = scenes.front().cloud.class_count;
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  EvalMetrics m;
  m.miou_2d = m.miou_3d_true = m.miou_3d_unprojected = kNaN;
  struct Partial {
    ConfusionMatrix c2, c3_true, c3_unproj;
  };
  std::vector<Partial> parts(scenes.size(), Partial{ConfusionMatrix(classes), ConfusionMatrix(classes),
                                                    ConfusionMatrix(classes)});
  parallel_for(scenes.size(), effective_threads(threads), [&](std::size_t s) {
    const SceneData& sd = scenes[s];
    if (branches.two_d)
      for (const CameraView& v : sd.views)
        parts[s].c2.add(v.gt_labels, argmax_rows(forward_2d(branches.two_d->teacher, v.features)));
    if (branches.three_d) {
      parts[s].c3_true = confusion_3d(branches.three_d->teacher, sd.cloud, sd.true_3d);
      parts[s].c3_unproj = confusion_3d(branches.three_d->teacher, sd.cloud, sd.unprojected_2d);
    }
  });
  ConfusionMatrix c2(classes), c3t(classes), c3u(classes);
  for (const Partial& p : parts) {
    c2 += p.c2;
    c3t += p.c3_true;
    c3u += p.c3_unproj;
  }
  if (branches.two_d) {
    const MiouResult r = miou(c2);
    m.miou_2d = r.mean_percent;
    m.iou_2d = r.iou;
  }
  if (branches.three_d) {
    const MiouResult r = miou(c3t);
    m.miou_3d_true = r.mean_percent;
    m.iou_3d_true = r.iou;
    m.miou_3d_unprojected = miou(c3u).mean_percent;
  }
  return m;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.bin", epoch);
  return buf;
}

Checkpoint make_checkpoint(const Branches& b, int epoch, const std::string& hash) {
  Checkpoint c;
  c.epoch = epoch;
  c.config_hash = hash;
  if (b.two_d) c.branches.push_back(*b.two_d);
  if (b.three_d) c.branches.push_back(*b.three_d);
  return c;
}

Branches from_checkpoint(const Checkpoint& c) {
  Branches b;
  for (const BranchState& s : c.branches) (s.modality == Modality::k2d ? b.two_d : b.three_d) = s;
  return b;
}

// Parses rows written by losses_csv / metrics_csv back into a run result.
void reload_logs(const fs::path& dir, int upto_epoch, RunResult& r) {
  auto rows = [](const fs::path& p) {
    std::vector<std::vector<double>> out;
    std::istringstream in(read_file(p));
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header) {
        header = false;
        continue;
      }
      std::vector<double> v;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
      out.push_back(std::move(v));
    }
    return out;
  };
  for (const auto& v : rows(dir / "losses.csv")) {
    if (int(v[0]) >= upto_epoch) continue;
    StepLog log;
    log.epoch = int(v[0]);
    log.step = int(v[1]);
    LossReport& rep = log.report;
    rep.parts = {v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
    rep.lambda_2d = v[10];
    rep.lambda_3d = v[11];
    rep.total = v[12];
    rep.labeled_2d = Eigen::Index(v[13]);
    rep.unlabeled_2d = Eigen::Index(v[14]);
    rep.labeled_3d = Eigen::Index(v[15]);
    rep.unlabeled_3d = Eigen::Index(v[16]);
    rep.correspondences = Eigen::Index(v[17]);
    r.losses.push_back(log);
  }
  for (const auto& v : rows(dir / "metrics.csv")) {
    if (int(v[0]) > upto_epoch) continue;
    EvalMetrics m;
    m.epoch = int(v[0]);
    m.miou_2d = v[1];
    m.miou_3d_true = v[2];
    m.miou_3d_unprojected = v[3];
    r.metrics.push_back(m);
  }
}

void write_artifacts(const fs::path& dir, const ExperimentConfig& config, const RunResult& r,
                     const std::vector<std::string>& checkpoints) {
  atomic_write(dir / "config.json", canonical_json(config) + "\n");
  atomic_write(dir / "losses.csv", losses_csv(r));
  atomic_write(dir / "metrics.csv", metrics_csv(r));
  std::string manifest = "# config_hash " + r.config_hash + "\n";
  std::vector<std::string> files{"config.json", "losses.csv", "metrics.csv"};
  for (const std::string& c : checkpoints) {
    files.push_back("checkpoints/" + c);
    files.push_back("checkpoints/" + c + ".json");
  }
  for (const std::string& f : files) manifest += sha256_file(dir / f) + "  " + f + "\n";
  atomic_write(dir / "MANIFEST", manifest);
}

std::vector<std::string> existing_checkpoints(const fs::path& dir, int upto) {
  std::vector<std::string> out;
  for (int e = 0; e <= upto; ++e)
    if (fs::exists(dir / "checkpoints" / checkpoint_name(e))) out.push_back(checkpoint_name(e));
  return out;
}

}  // namespace

std::string losses_csv(const RunResult& r) {
  std::string out = "# config_hash " + r.config_hash + "\nepoch,step";
  for (const std::string& h : LossReport::csv_header()) out += "," + h;
  out += "\n";
  for (const StepLog& s : r.losses) {
    out += std::to_string(s.epoch) + "," + std::to_string(s.step);
    for (double v : s.report.csv_values()) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

std::string metrics_csv(const RunResult& r) {
  std::string out = "# config_hash " + r.config_hash + "\nepoch,miou_2d,miou_3d_true,miou_3d_unprojected\n";
  for (const EvalMetrics& m : r.metrics)
    out += std::to_string(m.epoch) + "," + fmt(m.miou_2d) + "," + fmt(m.miou_3d_true) + "," +
           fmt(m.miou_3d_unprojected) + "\n";
  return out;
}

RunResult run_experiment(const ExperimentConfig& config, const Dataset& dataset, const RunOptions& options) {
  config.validate();
  if (dataset.train.empty() || dataset.eval.empty()) throw ConfigError("run_experiment: dataset has no scenes");
  const TrainingConfig& tc = config.training;
  const Schedule& sched = tc.schedule;

  RunResult result;
  result.config_hash = config_hash(config);
  Branches branches = init_branches(config);
  int start_epoch = 0;
  std::vector<std::string> checkpoints;
  const std::optional<fs::path>& dir = options.out_dir;

  if (dir && options.resume) {
    int latest = -1;
    for (int e = sched.total_epochs; e >= 0; --e)
      if (fs::exists(*dir / "checkpoints" / checkpoint_name(e))) {
        latest = e;
        break;
      }
    if (latest >= 0) {
      const Checkpoint ckpt = load_checkpoint(*dir / "checkpoints" / checkpoint_name(latest));
      if (ckpt.config_hash != result.config_hash)
        throw ConfigError("resume: checkpoint was written by a different config");
      branches = from_checkpoint(ckpt);
      start_epoch = latest;
      reload_logs(*dir, latest, result);
      checkpoints = existing_checkpoints(*dir, latest);
    }
  }

  auto save_epoch = [&](int epoch) {
    if (!dir) return;
    save_checkpoint(*dir / "checkpoints" / checkpoint_name(epoch), make_checkpoint(branches, epoch, result.config_hash));
    checkpoints.push_back(checkpoint_name(epoch));
    write_artifacts(*dir, config, result, checkpoints);
  };

  if (start_epoch == 0) {
    EvalMetrics m = evaluate(branches, dataset.eval, options.threads);
    m.epoch = 0;
    result.metrics.push_back(m);
    save_epoch(0);
  }

  std::vector<BatchItem> items;
  for (const SceneData& sd : dataset.train)
    for (const CameraView& v : sd.views) items.push_back({&sd, v.view_id});

  int ran = 0;
  for (int epoch = start_epoch; epoch < sched.total_epochs; ++epoch) {
    if (options.stop_after >= 0 && ran >= options.stop_after) break;
    const auto [l2, l3] = lambda_at(epoch, sched);
    std::vector<BatchItem> order = items;
    Rng shuffle = make_rng(config.seed, {tag::kShuffle, std::uint64_t(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle);
    int step = 0;
    for (std::size_t first = 0; first < order.size(); first += std::size_t(sched.batch_size), ++step) {
      const std::size_t last = std::min(order.size(), first + std::size_t(sched.batch_size));
      const std::uint64_t seed = derive_seed(config.seed, {std::uint64_t(epoch), std::uint64_t(step)});
      LossReport rep;
      try {
        rep = train_step(branches, std::span(order).subspan(first, last - first), tc, l2, l3, seed, options.threads);
      } catch (const NumericError& e) {
        const std::string last_good = checkpoints.empty() ? "none" : checkpoints.back();
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + "; last good checkpoint: " + last_good);
      }
      result.losses.push_back({epoch, step, rep});
    }
    ++ran;
    const int done = epoch + 1;
    const bool eval_now = done == sched.total_epochs || (tc.eval_every > 0 && done % tc.eval_every == 0);
    if (eval_now) {
      EvalMetrics m = evaluate(branches, dataset.eval, options.threads);
      m.epoch = done;
      result.metrics.push_back(m);
    }
    save_epoch(done);
  }
  result.final_state = std::move(branches);
  return result;
}

}  // namespace cmcforge
