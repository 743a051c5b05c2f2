#pragma once

// Pinhole camera math.
//
// Conventions (fixed throughout the library):
//   * extrinsics map world -> camera:  X_cam = R * X_world + t
//   * camera frame: +x right, +y down, +z forward (optical axis)
//   * image origin is the top-left corner; pixel (col, row) covers
//     [col, col+1) x [row, row+1) and its center is (col + 0.5, row + 0.5)
//   * sub-pixel coordinates snap to the pixel that contains them

#include <cmath>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "cmcforge/error.hpp"

namespace cmcforge {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
struct CameraIntrinsics {
  Scalar fx{1};
  Scalar fy{1};
  Scalar cx{0};
  Scalar cy{0};
  int width{1};
  int height{1};

  bool valid() const {
    return fx > Scalar(0) && fy > Scalar(0) && width > 0 && height > 0 && cx >= Scalar(0) &&
           cx < Scalar(width) && cy >= Scalar(0) && cy < Scalar(height);
  }

  void validate() const {
    if (!valid()) throw ConfigError("invalid camera intrinsics");
  }

  // Intrinsics for a symmetric frustum with the given horizontal field of view.
  static CameraIntrinsics from_fov(int width, int height, Scalar hfov_radians) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = Scalar(0.5) * Scalar(width) / std::tan(Scalar(0.5) * hfov_radians);
    k.fy = k.fx;
    k.cx = Scalar(0.5) * Scalar(width);
    k.cy = Scalar(0.5) * Scalar(height);
    return k;
  }

  bool contains(Scalar u, Scalar v) const {
    return u >= Scalar(0) && v >= Scalar(0) && u < Scalar(width) && v < Scalar(height);
  }
};

template <typename Scalar>
struct CameraPose {
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();

  Vec3<Scalar> to_camera(const Vec3<Scalar>& world) const { return rotation * world + translation; }
  Vec3<Scalar> to_world(const Vec3<Scalar>& cam) const { return rotation.transpose() * (cam - translation); }
  Vec3<Scalar> center() const { return -(rotation.transpose() * translation); }

  bool orthonormal(Scalar tol = Scalar(1e-9)) const {
    const Scalar dev = (rotation.transpose() * rotation - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
    return dev < tol && rotation.determinant() > Scalar(0);
  }

  // Camera at `eye` looking at `target`; `up` is the world up direction.
  static CameraPose look_at(const Vec3<Scalar>& eye, const Vec3<Scalar>& target,
                            const Vec3<Scalar>& up = Vec3<Scalar>::UnitZ()) {
    const Vec3<Scalar> forward = (target - eye).normalized();
    const Vec3<Scalar> right = forward.cross(up).normalized();
    const Vec3<Scalar> down = forward.cross(right);
    CameraPose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -(pose.rotation * eye);
    return pose;
  }
};

using Intrinsics = CameraIntrinsics<double>;
using Pose = CameraPose<double>;

struct PixelCoord {
  double u{0};
  double v{0};
  int view_id{0};
};

template <typename Scalar>
struct Projection {
  Scalar u;
  Scalar v;
  Scalar depth;
};

// Projects a world point. Empty when the point is behind the camera or
// lands outside the image.
template <typename Scalar>
std::optional<Projection<Scalar>> project(const Vec3<Scalar>& world, const CameraPose<Scalar>& pose,
                                          const CameraIntrinsics<Scalar>& k) {
  const Vec3<Scalar> cam = pose.to_camera(world);
  if (!(cam.z() > Scalar(0))) return std::nullopt;
  const Scalar u = k.fx * cam.x() / cam.z() + k.cx;
  const Scalar v = k.fy * cam.y() / cam.z() + k.cy;
  if (!k.contains(u, v)) return std::nullopt;
  return Projection<Scalar>{u, v, cam.z()};
}

// Camera-frame ray through (u, v) scaled to unit depth (z = 1).
template <typename Scalar>
Vec3<Scalar> pixel_ray(Scalar u, Scalar v, const CameraIntrinsics<Scalar>& k) {
  return Vec3<Scalar>((u - k.cx) / k.fx, (v - k.cy) / k.fy, Scalar(1));
}

// Lifts a pixel with camera-space depth (z, not ray length) to world space.
template <typename Scalar>
Vec3<Scalar> unproject(Scalar u, Scalar v, Scalar depth, const CameraPose<Scalar>& pose,
                       const CameraIntrinsics<Scalar>& k) {
  if (!(depth > Scalar(0))) throw DomainError("unproject: depth must be positive");
  return pose.to_world(pixel_ray(u, v, k) * depth);
}

inline Eigen::Vector3d unproject(const PixelCoord& pixel, double depth, const Pose& pose, const Intrinsics& k) {
  return unproject<double>(pixel.u, pixel.v, depth, pose, k);
}

// Raster index of the pixel containing (u, v). Caller guarantees containment.
template <typename Scalar>
int pixel_index(Scalar u, Scalar v, const CameraIntrinsics<Scalar>& k) {
  const int col = static_cast<int>(std::floor(u));
  const int row = static_cast<int>(std::floor(v));
  return row * k.width + col;
}

inline PixelCoord pixel_center(int index, int width, int view_id) {
  return PixelCoord{double(index % width) + 0.5, double(index / width) + 0.5, view_id};
}

}  // namespace cmcforge
