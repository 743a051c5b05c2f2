#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "cmcforge/annotate.hpp"
#include "cmcforge/config.hpp"
#include "cmcforge/scene.hpp"
#include "cmcforge/worldgen.hpp"

namespace cmcforge {

// Everything derived from one synthetic scene. Views are indexed by view id.
struct SceneData {
  SyntheticScene scene;
  std::vector<CameraView> views;
  std::vector<SparseLabelMap> label_maps;
  ScenePointCloud cloud;         // sparse labels already transferred
  Eigen::VectorXi true_3d;       // class of the nearest primitive surface
  Eigen::VectorXi unprojected_2d;  // dense ground truth at the source pixel
  // When true, the scene was reconstructed frame by frame, so a view's
  // points carry no context from other views.
  bool single_frame{false};
};

struct Dataset {
  std::vector<SceneData> train;
  std::vector<SceneData> eval;
  std::string hash;
};

// Scenes are seeded from (config.seed, split, index); training scenes get
// sparse labels, evaluation scenes keep dense ground truth only.
SceneData build_scene(const DatasetConfig& config, std::uint64_t seed, bool annotate);
Dataset build_dataset(const ExperimentConfig& config);

SparseLabelMap make_labels(const CameraView& view, const LabelConfig& labels, std::uint64_t seed);

// Writes every scene as view / label / cloud containers under `dir`.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset, const ExperimentConfig& config);

}  // namespace cmcforge
