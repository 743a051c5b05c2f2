#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "cmcforge/config.hpp"
#include "cmcforge/dataset.hpp"
#include "cmcforge/error.hpp"
#include "cmcforge/io.hpp"

using namespace cmcforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cmcforge_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Container, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1e3);
  Container c;
  Eigen::MatrixXd m(7, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  m(0, 0) = -0.0;
  m(1, 1) = 1e-310;
  Eigen::VectorXi iv(4);
  iv << -5, 0, 7, 2147483647;
  c.put_matrix("m", m);
  c.put_vector("v", m.col(1));
  c.put_ivector("i", iv);
  const Container back = Container::parse(c.serialize());
  EXPECT_EQ(back.matrix("m"), m);
  EXPECT_EQ(back.vector("v"), Eigen::VectorXd(m.col(1)));
  EXPECT_EQ(back.ivector("i"), iv);
  EXPECT_TRUE(std::signbit(back.matrix("m")(0, 0)));
  EXPECT_EQ(back.serialize(), c.serialize());
}

TEST(Container, RejectsCorruptInput) {
  Container c;
  c.put_ivector("x", Eigen::VectorXi::Ones(3));
  std::string bytes = c.serialize();
  EXPECT_THROW(Container::parse(bytes.substr(0, bytes.size() - 2)), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(Container::parse(bytes), IoError);
  EXPECT_THROW(Container{}.at("missing"), IoError);
}

TEST(Container, SidecarAndMissingFile) {
  const fs::path dir = scratch("sidecar");
  Container c;
  c.put_vector("v", Eigen::VectorXd::LinSpaced(5, 0, 1));
  save_container(dir / "a.bin", c, {{"kind", "test"}});
  ASSERT_TRUE(fs::exists(dir / "a.bin.json"));
  nlohmann::json meta;
  const Container back = load_container(dir / "a.bin", &meta);
  EXPECT_EQ(meta.at("kind"), "test");
  EXPECT_EQ(back.vector("v"), c.vector("v"));
  EXPECT_THROW(load_container(dir / "nope.bin"), IoError);
  fs::remove_all(dir);
}

TEST(SceneIo, ViewCloudAndLabelsRoundTrip) {
  DatasetConfig cfg;
  cfg.views_per_scene = 2;
  cfg.width = cfg.height = 16;
  const SceneData d = build_scene(cfg, 4, true);
  const fs::path dir = scratch("scene");
  save_view(dir / "v.bin", d.views[1]);
  save_cloud(dir / "c.bin", d.cloud);
  save_label_map(dir / "l.bin", d.label_maps[1]);
  const CameraView v = load_view(dir / "v.bin");
  EXPECT_EQ(v.features, d.views[1].features);
  EXPECT_EQ(v.gt_labels, d.views[1].gt_labels);
  EXPECT_EQ(v.gt_depth, d.views[1].gt_depth);
  EXPECT_EQ(v.pose.rotation, d.views[1].pose.rotation);
  EXPECT_EQ(v.view_id, 1);
  const ScenePointCloud c = load_cloud(dir / "c.bin");
  EXPECT_EQ(c.positions, d.cloud.positions);
  EXPECT_EQ(c.rec_confidence, d.cloud.rec_confidence);
  EXPECT_EQ(c.sparse_labels, d.cloud.sparse_labels);
  EXPECT_EQ(c.source.back().u, d.cloud.source.back().u);
  const SparseLabelMap l = load_label_map(dir / "l.bin");
  EXPECT_EQ(l.labels, d.label_maps[1].labels);
  EXPECT_EQ(l.kind, d.label_maps[1].kind);
  fs::remove_all(dir);
}

TEST(CheckpointIo, RoundTrip) {
  MicroNet net(3, 4, 2);
  net.initialize(5);
  BranchState s = BranchState::create(Modality::k3d, net);
  optimizer_step(s, Eigen::VectorXd::Ones(net.parameter_count()), AdamWParams{});
  ema_update(s, 0.5);
  const Checkpoint ck{7, "abc123", {s}};
  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "epoch_007.bin", ck);
  const Checkpoint back = load_checkpoint(dir / "epoch_007.bin");
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(back.config_hash, "abc123");
  ASSERT_EQ(back.branches.size(), 1u);
  EXPECT_EQ(back.branches[0].modality, Modality::k3d);
  EXPECT_EQ(back.branches[0].student.params(), s.student.params());
  EXPECT_EQ(back.branches[0].teacher.params(), s.teacher.params());
  EXPECT_EQ(back.branches[0].second_moment, s.second_moment);
  EXPECT_EQ(back.branches[0].step_count, 1);
  fs::remove_all(dir);
}

TEST(Config, JsonRoundTripAndValidation) {
  ExperimentConfig c;
  c.seed = 42;
  c.training.confidence = ConfidenceMode::kPrediction;
  c.dataset.labels.scribble.length_scale = 0.25;
  const nlohmann::json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(canonical_json(back), canonical_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  ExperimentConfig bad = c;
  bad.training.tau = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  const ExperimentConfig p = patched(c, {{"training", {{"tau", 0.7}}}});
  EXPECT_EQ(p.training.tau, 0.7);
  EXPECT_EQ(p.seed, 42u);
}
