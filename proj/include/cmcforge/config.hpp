#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cmcforge/annotate.hpp"
#include "cmcforge/augment.hpp"
#include "cmcforge/losses.hpp"
#include "cmcforge/worldgen.hpp"

namespace cmcforge {

enum class SamplingStrategy { kViewAware, kRandom, kCorrespondencesOnly };
enum class ReconSource { kMultiView, kSingleFrame };

std::string_view to_string(SamplingStrategy s);
SamplingStrategy sampling_strategy_from_string(std::string_view name);
std::string_view to_string(ReconSource s);
ReconSource recon_source_from_string(std::string_view name);

struct LabelConfig {
  LabelKind kind{LabelKind::kScribbles};
  ScribbleParams scribble;
  int erosion_radius{3};
};

struct ReconConfig {
  ReconstructionParams params;
  ReconSource source{ReconSource::kMultiView};
  // Depth-noise multiplier for single-frame reconstruction.
  double single_frame_noise_factor{2.0};
};

struct DatasetConfig {
  int train_scenes{8};
  int eval_scenes{4};
  int views_per_scene{12};
  int width{48};
  int height{48};
  double hfov_degrees{70.0};
  SceneParams scene;
  Appearance appearance;
  ReconConfig reconstruction;
  LabelConfig labels;
};

struct Schedule {
  int total_epochs{40};
  int base_epochs{12};
  int ramp_epochs{5};
  int batch_size{4};
  double lambda_max_2d{0.1};
  double lambda_max_3d{0.1};
  double lr_2d{5e-4};
  double lr_3d{1e-2};

  void validate() const;
};

struct SamplingConfig {
  SamplingStrategy strategy{SamplingStrategy::kViewAware};
  int budget{960};
  double view_fraction{0.6};
  // Context radius in units of scene_scale.
  double context_radius{0.5};
};

struct TrainingConfig {
  Schedule schedule;
  int hidden{16};
  double weight_decay_2d{1e-8};
  double weight_decay_3d{0.005};
  double beta1{0.9};
  double beta2{0.999};
  double adam_eps{1e-8};
  double ema_alpha{0.99};
  double tau{0.8};
  double beta{0.5};
  ConfidenceMode confidence{ConfidenceMode::kDual};
  bool cmc_normalize{true};
  TotalMode total_mode{TotalMode::kBranchObjective};
  bool enable_2d{true};
  bool enable_3d{true};
  bool enable_cmc{true};
  SamplingConfig sampling;
  AugmentTier student_augment{AugmentTier::kStrong};
  AugmentTier teacher_augment{AugmentTier::kWeak};
  int eval_every{0};  // epochs between evaluations; 0 evaluates only at the end
};

struct ExperimentConfig {
  std::string name{"default"};
  std::uint64_t seed{1};
  DatasetConfig dataset;
  TrainingConfig training;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Canonical JSON text: sorted keys, fixed formatting.
std::string canonical_json(const ExperimentConfig& c);
// SHA-256 (hex) of the canonical JSON.
std::string config_hash(const ExperimentConfig& c);
// Hash of the dataset section plus seed; equal hashes mean identical datasets.
std::string dataset_hash(const ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);

// Applies a JSON merge patch (RFC 7386) to a config.
ExperimentConfig patched(const ExperimentConfig& base, const nlohmann::json& patch);

}  // namespace cmcforge
