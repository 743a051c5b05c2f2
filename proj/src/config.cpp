#include "cmcforge/config.hpp"

#include <fstream>
#include <sstream>

#include "cmcforge/error.hpp"
#include "cmcforge/io.hpp"

namespace cmcforge {

using nlohmann::json;

std::string_view to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kViewAware:
      return "view_aware";
    case SamplingStrategy::kRandom:
      return "random";
    case SamplingStrategy::kCorrespondencesOnly:
      return "correspondences_only";
  }
  return "view_aware";
}

SamplingStrategy sampling_strategy_from_string(std::string_view name) {
  if (name == "view_aware") return SamplingStrategy::kViewAware;
  if (name == "random") return SamplingStrategy::kRandom;
  if (name == "correspondences_only") return SamplingStrategy::kCorrespondencesOnly;
  throw ConfigError("unknown sampling strategy: " + std::string(name));
}

std::string_view to_string(ReconSource s) { return s == ReconSource::kMultiView ? "multi_view" : "single_frame"; }

ReconSource recon_source_from_string(std::string_view name) {
  if (name == "multi_view") return ReconSource::kMultiView;
  if (name == "single_frame") return ReconSource::kSingleFrame;
  throw ConfigError("unknown reconstruction source: " + std::string(name));
}

void Schedule::validate() const {
  if (total_epochs < 0 || base_epochs < 0 || ramp_epochs < 0) throw ConfigError("schedule: epochs must be >= 0");
  if (base_epochs + ramp_epochs > total_epochs && total_epochs > 0)
    throw ConfigError("schedule: base_epochs + ramp_epochs exceeds total_epochs");
  if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
  if (!(lr_2d >= 0 && lr_3d >= 0)) throw ConfigError("schedule: learning rates must be >= 0");
}

void ExperimentConfig::validate() const {
  const DatasetConfig& d = dataset;
  if (d.train_scenes < 1) throw ConfigError("dataset: train_scenes must be >= 1");
  if (d.eval_scenes < 1) throw ConfigError("dataset: eval_scenes must be >= 1");
  if (d.views_per_scene < 1) throw ConfigError("dataset: views_per_scene must be >= 1");
  if (d.width < 2 || d.height < 2) throw ConfigError("dataset: image too small");
  if (!(d.hfov_degrees > 1 && d.hfov_degrees < 170)) throw ConfigError("dataset: hfov_degrees out of range");
  d.scene.validate();
  d.appearance.validate();
  if (!(d.reconstruction.params.noise_sigma >= 0)) throw ConfigError("reconstruction: noise_sigma must be >= 0");
  if (d.reconstruction.params.scan_stride < 1) throw ConfigError("reconstruction: scan_stride must be >= 1");
  const auto& sc = d.labels.scribble;
  if (!(sc.length_scale > 0 && sc.length_scale <= 1)) throw ConfigError("labels: length_scale must lie in (0, 1]");
  if (sc.thickness < 1) throw ConfigError("labels: thickness must be >= 1");
  if (d.labels.erosion_radius < 1) throw ConfigError("labels: erosion_radius must be >= 1");

  const TrainingConfig& t = training;
  t.schedule.validate();
  if (t.hidden < 1) throw ConfigError("training: hidden must be >= 1");
  if (!(t.ema_alpha >= 0 && t.ema_alpha <= 1)) throw ConfigError("training: ema_alpha must lie in [0, 1]");
  if (!(t.tau > 0 && t.tau < 1)) throw ConfigError("training: tau must lie in (0, 1)");
  if (!(t.beta >= 0 && t.beta <= 1)) throw ConfigError("training: beta must lie in [0, 1]");
  if (!t.enable_2d && !t.enable_3d) throw ConfigError("training: at least one branch must be enabled");
  if (t.sampling.budget < 1) throw ConfigError("sampling: budget must be >= 1");
  if (!(t.sampling.view_fraction >= 0 && t.sampling.view_fraction <= 1))
    throw ConfigError("sampling: view_fraction must lie in [0, 1]");
  if (!(t.sampling.context_radius >= 0)) throw ConfigError("sampling: context_radius must be >= 0");
  if (t.eval_every < 0) throw ConfigError("training: eval_every must be >= 0");
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& value) {
  if (j.contains(key)) j.at(key).get_to(value);
}

template <typename Enum, typename Parse>
void read_enum(const json& j, const char* key, Enum& value, Parse parse) {
  if (j.contains(key)) value = parse(j.at(key).get<std::string>());
}

json to_json_dataset(const DatasetConfig& d) {
  json pairs = json::array();
  for (const auto& [a, b] : d.appearance.confusable_pairs) pairs.push_back({a, b});
  return {
      {"train_scenes", d.train_scenes},
      {"eval_scenes", d.eval_scenes},
      {"views_per_scene", d.views_per_scene},
      {"width", d.width},
      {"height", d.height},
      {"hfov_degrees", d.hfov_degrees},
      {"scene",
       {{"class_count", d.scene.class_count},
        {"extra_boxes", d.scene.extra_boxes},
        {"scene_scale", d.scene.scene_scale},
        {"ground_plane", d.scene.ground_plane},
        {"one_box_per_class", d.scene.one_box_per_class},
        {"placement_radius", d.scene.placement_radius}}},
      {"appearance",
       {{"feature_dim", d.appearance.feature_dim},
        {"separation", d.appearance.separation},
        {"noise_sigma", d.appearance.noise_sigma},
        {"noise_correlation", d.appearance.noise_correlation},
        {"noise_length", d.appearance.noise_length},
        {"signal_blur", d.appearance.signal_blur},
        {"instance_sigma", d.appearance.instance_sigma},
        {"fog_distance", d.appearance.fog_distance},
        {"cue_scale", d.appearance.cue_scale},
        {"palette_seed", d.appearance.palette_seed},
        {"confusable_pairs", pairs},
        {"confusion", d.appearance.confusion}}},
      {"reconstruction",
       {{"noise_sigma", d.reconstruction.params.noise_sigma},
        {"density", d.reconstruction.params.density == Density::kFull ? "full" : "single_scan"},
        {"scan_stride", d.reconstruction.params.scan_stride},
        {"source", to_string(d.reconstruction.source)},
        {"single_frame_noise_factor", d.reconstruction.single_frame_noise_factor}}},
      {"labels",
       {{"kind", to_string(d.labels.kind)},
        {"length_scale", d.labels.scribble.length_scale},
        {"thickness", d.labels.scribble.thickness},
        {"min_region_area", d.labels.scribble.min_region_area},
        {"erosion_radius", d.labels.erosion_radius}}},
  };
}

void from_json_dataset(const json& j, DatasetConfig& d) {
  read(j, "train_scenes", d.train_scenes);
  read(j, "eval_scenes", d.eval_scenes);
  read(j, "views_per_scene", d.views_per_scene);
  read(j, "width", d.width);
  read(j, "height", d.height);
  read(j, "hfov_degrees", d.hfov_degrees);
  if (j.contains("scene")) {
    const json& s = j.at("scene");
    read(s, "class_count", d.scene.class_count);
    read(s, "extra_boxes", d.scene.extra_boxes);
    read(s, "scene_scale", d.scene.scene_scale);
    read(s, "ground_plane", d.scene.ground_plane);
    read(s, "one_box_per_class", d.scene.one_box_per_class);
    read(s, "placement_radius", d.scene.placement_radius);
  }
  if (j.contains("appearance")) {
    const json& a = j.at("appearance");
    read(a, "feature_dim", d.appearance.feature_dim);
    read(a, "separation", d.appearance.separation);
    read(a, "noise_sigma", d.appearance.noise_sigma);
    read(a, "noise_correlation", d.appearance.noise_correlation);
    read(a, "noise_length", d.appearance.noise_length);
    read(a, "signal_blur", d.appearance.signal_blur);
    read(a, "instance_sigma", d.appearance.instance_sigma);
    read(a, "fog_distance", d.appearance.fog_distance);
    read(a, "cue_scale", d.appearance.cue_scale);
    read(a, "palette_seed", d.appearance.palette_seed);
    read(a, "confusion", d.appearance.confusion);
    if (a.contains("confusable_pairs")) {
      d.appearance.confusable_pairs.clear();
      for (const json& p : a.at("confusable_pairs"))
        d.appearance.confusable_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
  }
  if (j.contains("reconstruction")) {
    const json& r = j.at("reconstruction");
    read(r, "noise_sigma", d.reconstruction.params.noise_sigma);
    read_enum(r, "density", d.reconstruction.params.density, [](const std::string& s) {
      if (s == "full") return Density::kFull;
      if (s == "single_scan") return Density::kSingleScan;
      throw ConfigError("unknown density: " + s);
    });
    read(r, "scan_stride", d.reconstruction.params.scan_stride);
    read_enum(r, "source", d.reconstruction.source, recon_source_from_string);
    read(r, "single_frame_noise_factor", d.reconstruction.single_frame_noise_factor);
  }
  if (j.contains("labels")) {
    const json& l = j.at("labels");
    read_enum(l, "kind", d.labels.kind, label_kind_from_string);
    read(l, "length_scale", d.labels.scribble.length_scale);
    read(l, "thickness", d.labels.scribble.thickness);
    read(l, "min_region_area", d.labels.scribble.min_region_area);
    read(l, "erosion_radius", d.labels.erosion_radius);
  }
}

json to_json_training(const TrainingConfig& t) {
  const Schedule& s = t.schedule;
  return {
      {"schedule",
       {{"total_epochs", s.total_epochs},
        {"base_epochs", s.base_epochs},
        {"ramp_epochs", s.ramp_epochs},
        {"batch_size", s.batch_size},
        {"lambda_max_2d", s.lambda_max_2d},
        {"lambda_max_3d", s.lambda_max_3d},
        {"lr_2d", s.lr_2d},
        {"lr_3d", s.lr_3d}}},
      {"hidden", t.hidden},
      {"weight_decay_2d", t.weight_decay_2d},
      {"weight_decay_3d", t.weight_decay_3d},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"adam_eps", t.adam_eps},
      {"ema_alpha", t.ema_alpha},
      {"tau", t.tau},
      {"beta", t.beta},
      {"confidence", to_string(t.confidence)},
      {"cmc_normalize", t.cmc_normalize},
      {"total_mode", t.total_mode == TotalMode::kBranchObjective ? "branch_objective" : "unweighted"},
      {"enable_2d", t.enable_2d},
      {"enable_3d", t.enable_3d},
      {"enable_cmc", t.enable_cmc},
      {"sampling",
       {{"strategy", to_string(t.sampling.strategy)},
        {"budget", t.sampling.budget},
        {"view_fraction", t.sampling.view_fraction},
        {"context_radius", t.sampling.context_radius}}},
      {"student_augment", to_string(t.student_augment)},
      {"teacher_augment", to_string(t.teacher_augment)},
      {"eval_every", t.eval_every},
  };
}

void from_json_training(const json& j, TrainingConfig& t) {
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    read(s, "total_epochs", t.schedule.total_epochs);
    read(s, "base_epochs", t.schedule.base_epochs);
    read(s, "ramp_epochs", t.schedule.ramp_epochs);
    read(s, "batch_size", t.schedule.batch_size);
    read(s, "lambda_max_2d", t.schedule.lambda_max_2d);
    read(s, "lambda_max_3d", t.schedule.lambda_max_3d);
    read(s, "lr_2d", t.schedule.lr_2d);
    read(s, "lr_3d", t.schedule.lr_3d);
  }
  read(j, "hidden", t.hidden);
  read(j, "weight_decay_2d", t.weight_decay_2d);
  read(j, "weight_decay_3d", t.weight_decay_3d);
  read(j, "beta1", t.beta1);
  read(j, "beta2", t.beta2);
  read(j, "adam_eps", t.adam_eps);
  read(j, "ema_alpha", t.ema_alpha);
  read(j, "tau", t.tau);
  read(j, "beta", t.beta);
  read_enum(j, "confidence", t.confidence, confidence_mode_from_string);
  read(j, "cmc_normalize", t.cmc_normalize);
  read_enum(j, "total_mode", t.total_mode, [](const std::string& s) {
    if (s == "branch_objective") return TotalMode::kBranchObjective;
    if (s == "unweighted") return TotalMode::kUnweighted;
    throw ConfigError("unknown total_mode: " + s);
  });
  read(j, "enable_2d", t.enable_2d);
  read(j, "enable_3d", t.enable_3d);
  read(j, "enable_cmc", t.enable_cmc);
  if (j.contains("sampling")) {
    const json& s = j.at("sampling");
    read_enum(s, "strategy", t.sampling.strategy, sampling_strategy_from_string);
    read(s, "budget", t.sampling.budget);
    read(s, "view_fraction", t.sampling.view_fraction);
    read(s, "context_radius", t.sampling.context_radius);
  }
  read_enum(j, "student_augment", t.student_augment, augment_tier_from_string);
  read_enum(j, "teacher_augment", t.teacher_augment, augment_tier_from_string);
  read(j, "eval_every", t.eval_every);
}

}  // namespace

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"name", c.name},
           {"seed", c.seed},
           {"dataset", to_json_dataset(c.dataset)},
           {"training", to_json_training(c.training)}};
}

void from_json(const json& j, ExperimentConfig& c) {
  try {
    read(j, "name", c.name);
    read(j, "seed", c.seed);
    if (j.contains("dataset")) from_json_dataset(j.at("dataset"), c.dataset);
    if (j.contains("training")) from_json_training(j.at("training"), c.training);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string canonical_json(const ExperimentConfig& c) { return json(c).dump(2); }

std::string config_hash(const ExperimentConfig& c) { return sha256_hex(canonical_json(c)); }

std::string dataset_hash(const ExperimentConfig& c) {
  const json j{{"seed", c.seed}, {"dataset", to_json_dataset(c.dataset)}};
  return sha256_hex(j.dump());
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

ExperimentConfig patched(const ExperimentConfig& base, const json& patch) {
  json j = base;
  j.merge_patch(patch);
  return j.get<ExperimentConfig>();
}

}  // namespace cmcforge
