#include "cmcforge/dataset.hpp"

#include <cstdio>
#include <numbers>
#include <string>

#include "cmcforge/error.hpp"
#include "cmcforge/io.hpp"
#include "cmcforge/metrics.hpp"
#include "cmcforge/rng.hpp"

namespace cmcforge {

namespace {

constexpr std::uint64_t kTrainSplit = 0;
constexpr std::uint64_t kEvalSplit = 1;

}  // namespace

SparseLabelMap make_labels(const CameraView& view, const LabelConfig& labels, std::uint64_t seed) {
  switch (labels.kind) {
    case LabelKind::kPoints:
      return gen_point_labels(view, seed);
    case LabelKind::kScribbles:
      return gen_scribble_labels(view, labels.scribble, seed);
    case LabelKind::kCoarse:
      return gen_coarse_labels(view, labels.erosion_radius);
  }
  throw ConfigError("unknown label kind");
}

SceneData build_scene(const DatasetConfig& config, std::uint64_t seed, bool annotate) {
  SceneData data;
  data.scene = generate_scene(config.scene, seed);
  const auto k = Intrinsics::from_fov(config.width, config.height, config.hfov_degrees * std::numbers::pi / 180.0);
  const auto poses = orbit_poses(data.scene, config.views_per_scene, seed);
  data.views.reserve(poses.size());
  for (std::size_t v = 0; v < poses.size(); ++v)
    data.views.push_back(render_view(data.scene, k, poses[v], config.appearance, static_cast<int>(v), seed));

  ReconstructionParams recon = config.reconstruction.params;
  data.single_frame = config.reconstruction.source == ReconSource::kSingleFrame;
  if (data.single_frame) recon.noise_sigma *= config.reconstruction.single_frame_noise_factor;
  data.cloud = simulate_reconstruction(data.views, recon, config.scene.scene_scale, seed);

  data.label_maps.reserve(data.views.size());
  for (const CameraView& view : data.views)
    data.label_maps.push_back(annotate ? make_labels(view, config.labels, seed) : unlabeled_map(view, config.labels.kind));
  data.cloud = transfer_labels_to_3d(data.cloud, data.label_maps);
  data.true_3d = nearest_surface_labels(data.cloud, data.scene);
  data.unprojected_2d = unprojected_reference(data.cloud, data.views);
  return data;
}

Dataset build_dataset(const ExperimentConfig& config) {
  Dataset d;
  d.hash = dataset_hash(config);
  for (int i = 0; i < config.dataset.train_scenes; ++i)
    d.train.push_back(build_scene(config.dataset, derive_seed(config.seed, {tag::kScene, kTrainSplit, std::uint64_t(i)}),
                                  true));
  for (int i = 0; i < config.dataset.eval_scenes; ++i)
    d.eval.push_back(build_scene(config.dataset, derive_seed(config.seed, {tag::kScene, kEvalSplit, std::uint64_t(i)}),
                                 false));
  return d;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset, const ExperimentConfig& config) {
  nlohmann::json index{{"dataset_hash", dataset.hash}, {"config", config}};
  auto write_split = [&](const std::vector<SceneData>& scenes, const std::string& split) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      char name[32];
      std::snprintf(name, sizeof name, "%s_%03zu", split.c_str(), s);
      const auto scene_dir = dir / name;
      const SceneData& sd = scenes[s];
      for (std::size_t v = 0; v < sd.views.size(); ++v) {
        char file[32];
        std::snprintf(file, sizeof file, "view_%03zu.bin", v);
        save_view(scene_dir / file, sd.views[v]);
        std::snprintf(file, sizeof file, "labels_%03zu.bin", v);
        save_label_map(scene_dir / file, sd.label_maps[v],
                       {{"length_scale", config.dataset.labels.scribble.length_scale},
                        {"thickness", config.dataset.labels.scribble.thickness},
                        {"min_region_area", config.dataset.labels.scribble.min_region_area},
                        {"erosion_radius", config.dataset.labels.erosion_radius}});
      }
      save_cloud(scene_dir / "cloud.bin", sd.cloud);
      entries.push_back({{"dir", name}, {"views", sd.views.size()}, {"points", sd.cloud.size()}});
    }
    index[split] = entries;
  };
  write_split(dataset.train, "train");
  write_split(dataset.eval, "eval");
  atomic_write(dir / "dataset.json", index.dump(2) + "\n");
}

}  // namespace cmcforge
