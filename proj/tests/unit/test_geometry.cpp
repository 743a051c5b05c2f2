#include <random>

#include <gtest/gtest.h>

#include "cmcforge/geometry.hpp"
#include "cmcforge/scene.hpp"
#include "cmcforge/worldgen.hpp"

using namespace cmcforge;

namespace {

Intrinsics k32() { return Intrinsics{1.0, 1.0, 16.0, 16.0, 32, 32}; }

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5, 5);
  const Eigen::Vector3d eye(u(rng), u(rng), u(rng));
  Eigen::Vector3d target(u(rng), u(rng), u(rng));
  if ((target - eye).norm() < 1e-3) target.x() += 1;
  return Pose::look_at(eye, target, Eigen::Vector3d(0.1, 0.2, 1.0).normalized());
}

}  // namespace

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const auto p = project<double>(Eigen::Vector3d(0, 0, 2), Pose{}, k32());
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 16.0);
  EXPECT_DOUBLE_EQ(p->v, 16.0);
  EXPECT_DOUBLE_EQ(p->depth, 2.0);
}

TEST(Project, BehindCameraIsEmpty) {
  EXPECT_FALSE(project<double>(Eigen::Vector3d(0, 0, -1), Pose{}, k32()));
  EXPECT_FALSE(project<double>(Eigen::Vector3d(0, 0, 0), Pose{}, k32()));
}

TEST(Project, OutsideImageIsEmpty) {
  EXPECT_FALSE(project<double>(Eigen::Vector3d(100, 0, 1), Pose{}, k32()));
}

TEST(Unproject, PrincipalPointIdentityPose) {
  const Eigen::Vector3d x = unproject<double>(16.0, 16.0, 3.5, Pose{}, k32());
  EXPECT_NEAR(x.x(), 0.0, 1e-15);
  EXPECT_NEAR(x.y(), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(x.z(), 3.5);
}

TEST(Unproject, NonPositiveDepthIsDomainError) {
  EXPECT_THROW(unproject<double>(1.0, 1.0, 0.0, Pose{}, k32()), DomainError);
  EXPECT_THROW(unproject<double>(1.0, 1.0, -2.0, Pose{}, k32()), DomainError);
}

TEST(Geometry, RoundTripRandomPosesAndPixels) {
  std::mt19937_64 rng(11);
  const Intrinsics k = Intrinsics::from_fov(48, 40, 1.2);
  std::uniform_real_distribution<double> uu(0, 48), vv(0, 40), dd(0.1, 50);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Pose pose = random_pose(rng);
    const double u = uu(rng), v = vv(rng), d = dd(rng);
    const auto p = project<double>(unproject(u, v, d, pose, k), pose, k);
    ASSERT_TRUE(p);
    worst = std::max({worst, std::abs(p->u - u) / 48, std::abs(p->v - v) / 40, std::abs(p->depth - d) / d});
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Geometry, PoseCompositionMatchesCameraFrameProjection) {
  std::mt19937_64 rng(3);
  const Intrinsics k = Intrinsics::from_fov(64, 64, 1.0);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    const Pose pose = random_pose(rng);
    const Eigen::Vector3d x(u(rng), u(rng), u(rng));
    const auto a = project<double>(x, pose, k);
    const auto b = project<double>(pose.to_camera(x), Pose{}, k);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_NEAR(a->u, b->u, 1e-9);
      EXPECT_NEAR(a->v, b->v, 1e-9);
      EXPECT_NEAR(a->depth, b->depth, 1e-9);
    }
  }
}

TEST(Geometry, LookAtIsOrthonormalAndLooksForward) {
  const Pose p = Pose::look_at(Eigen::Vector3d(5, 0, 2), Eigen::Vector3d(0, 0, 0));
  EXPECT_TRUE(p.orthonormal());
  EXPECT_NEAR((p.center() - Eigen::Vector3d(5, 0, 2)).norm(), 0.0, 1e-12);
  const Eigen::Vector3d target_cam = p.to_camera(Eigen::Vector3d::Zero());
  EXPECT_NEAR(target_cam.x(), 0.0, 1e-12);
  EXPECT_NEAR(target_cam.y(), 0.0, 1e-12);
  EXPECT_GT(target_cam.z(), 0.0);
  // World up maps to image-up (negative camera y).
  EXPECT_LT((p.rotation * Eigen::Vector3d::UnitZ()).y(), 0.0);
}

TEST(Geometry, IntrinsicsValidation) {
  EXPECT_TRUE(k32().valid());
  Intrinsics bad = k32();
  bad.fx = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = k32();
  bad.cx = 32;
  EXPECT_FALSE(bad.valid());
}

TEST(Geometry, PixelIndexUsesContainingPixel) {
  const Intrinsics k = k32();
  EXPECT_EQ(pixel_index(0.0, 0.0, k), 0);
  EXPECT_EQ(pixel_index(0.99, 0.99, k), 0);
  EXPECT_EQ(pixel_index(1.0, 0.5, k), 1);
  EXPECT_EQ(pixel_index(3.5, 2.5, k), 2 * 32 + 3);
  const PixelCoord c = pixel_center(2 * 32 + 3, 32, 4);
  EXPECT_DOUBLE_EQ(c.u, 3.5);
  EXPECT_DOUBLE_EQ(c.v, 2.5);
  EXPECT_EQ(c.view_id, 4);
}

namespace {

// Two fronto-parallel walls in front of a camera at the origin looking along +x.
struct TwoPlanes {
  SyntheticScene scene;
  CameraView view;
  Intrinsics k = Intrinsics::from_fov(32, 32, 1.0);
  Pose pose = Pose::look_at(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0));

  TwoPlanes() {
    scene.class_count = 2;
    scene.scene_scale = 10;
    scene.primitives.push_back(Primitive::box(0, Eigen::Vector3d(3, -0.5, -0.5), Eigen::Vector3d(3.2, 0.5, 0.5)));
    scene.primitives.push_back(Primitive::plane(1, Eigen::Vector3d(-1, 0, 0), -8.0));
    view = render_view(scene, k, pose, Appearance{}, 0, 1);
  }
};

ScenePointCloud cloud_of(const std::vector<Eigen::Vector3d>& pts, int view_id = 0) {
  ScenePointCloud c;
  c.class_count = 2;
  c.positions.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) c.positions.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  c.rec_confidence = Eigen::VectorXd::Ones(c.positions.rows());
  c.source.assign(pts.size(), PixelCoord{0.5, 0.5, view_id});
  c.features = Eigen::MatrixXd::Zero(c.positions.rows(), 1);
  c.sparse_labels = Eigen::VectorXi::Constant(c.positions.rows(), 2);
  return c;
}

}  // namespace

TEST(VisibleInView, PointFromOwnPixelIsVisible) {
  TwoPlanes t;
  ReconstructionParams rp;
  rp.noise_sigma = 0;
  const CameraView views[] = {t.view};
  const ScenePointCloud cloud = simulate_reconstruction(views, rp, 10, 1);
  ASSERT_GT(cloud.size(), 0);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) EXPECT_TRUE(visible_in_view(i, cloud, t.view, 1e-2));
}

TEST(VisibleInView, BehindCameraIsInvisible) {
  TwoPlanes t;
  const auto cloud = cloud_of({Eigen::Vector3d(-2, 0, 0)});
  EXPECT_FALSE(visible_in_view(0, cloud, t.view, 1e-2));
}

TEST(VisibleInView, FarPlaneBehindNearPlaneIsOccluded) {
  TwoPlanes t;
  // Ray-cast oracle: the optical-axis ray first hits the near box at x = 3.
  const auto hit = cast_ray(t.scene, t.k, t.pose, 16.0, 16.0);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->depth, 3.0, 1e-9);
  EXPECT_EQ(hit->class_id, 0);
  const auto cloud = cloud_of({Eigen::Vector3d(8, 0, 0), Eigen::Vector3d(3, 0, 0), Eigen::Vector3d(8, 2.5, 0)});
  EXPECT_FALSE(visible_in_view(0, cloud, t.view, 1e-2));
  EXPECT_TRUE(visible_in_view(1, cloud, t.view, 1e-2));
  // Far plane point outside the near box's silhouette stays visible.
  EXPECT_TRUE(visible_in_view(2, cloud, t.view, 1e-2));
}

TEST(VisibleInView, MonotoneInTolerance) {
  TwoPlanes t;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(1, 10), uy(-3, 3);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 300; ++i) pts.emplace_back(ux(rng), uy(rng), uy(rng));
  const auto cloud = cloud_of(pts);
  const double tols[] = {0.0, 1e-3, 0.1, 1.0, 10.0};
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    bool prev = false;
    for (double tol : tols) {
      const bool now = visible_in_view(i, cloud, t.view, tol);
      EXPECT_TRUE(!prev || now);
      prev = now;
    }
  }
}
