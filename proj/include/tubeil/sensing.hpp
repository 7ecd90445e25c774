#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tubeil/common.hpp"
#include "tubeil/model.hpp"

namespace tubeil {

struct CameraIntrinsics {
  double fx = 30.0;
  double fy = 30.0;
  double cx = 32.0;
  double cy = 24.0;
  int width = 64;
  int height = 48;

  /// Throws ConfigError on non-positive focal length or principal point
  /// outside the image.
  void validate() const;
  static CameraIntrinsics desk() { return CameraIntrinsics{}; }
  /// 640x480, same field of view as desk().
  static CameraIntrinsics full_scale() { return CameraIntrinsics{300.0, 300.0, 320.0, 240.0, 640, 480}; }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  RigidTransform() = default;
  RigidTransform(const Eigen::Matrix3d& r, const Eigen::Vector3d& t);

  RigidTransform operator*(const RigidTransform& other) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
};

/// Camera looking along body -z, optical x along body x.
RigidTransform default_camera_mount();

/// R_y(pitch) * R_x(roll), the order the simulator uses for the thrust axis.
Eigen::Matrix3d tilt_rotation(double roll, double pitch);
/// Inverse of tilt_rotation for |roll|, |pitch| < pi/2.
Eigen::Vector2d tilt_from_rotation(const Eigen::Matrix3d& r);

/// Ground-plane texture. Three octaves of hashed value noise on square cells
/// of base_cell, base_cell/2, ... metres, looked up nearest-cell. Outside
/// |x|, |y| <= extent the plane is featureless (white).
struct SceneModel {
  std::uint64_t seed = 7;
  int octaves = 3;
  double base_cell = 2.0;
  double extent = 20.0;
  /// Height of the hover point above the ground plane (m). State position is
  /// relative to the hover point, so the camera is at z = altitude + p_z.
  double flight_altitude = 3.0;

  double texture(double x, double y) const;
  /// Index of the finest texture cell containing (x, y); equal cells give
  /// equal texture values.
  Eigen::Vector2i finest_cell(double x, double y) const;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// Binary PGM (P5, maxval 255).
/// `comment` (single line, optional) is written as a "# " header line.
void write_pgm(const std::string& path, const Image& img, const std::string& comment = {});
Image read_pgm(const std::string& path);

/// Pose of the body in the inertial frame (origin on the ground plane).
RigidTransform body_pose_from_state(const Vec& x, double flight_altitude);

/// Ray casts every pixel onto the ground plane z = 0. Rays that miss the
/// plane, or hit it outside the textured extent, are white.
Image render(const RigidTransform& t_ic, const CameraIntrinsics& intr, const SceneModel& scene);
void render_into(const RigidTransform& t_ic, const CameraIntrinsics& intr, const SceneModel& scene,
                 float* out);

/// Pixel (u = column, v = row) at which a world point projects, or false if
/// it is behind the camera.
bool project(const RigidTransform& t_ic, const CameraIntrinsics& intr, const Eigen::Vector3d& p,
             Eigen::Vector2d& uv);

inline constexpr int kNOther = 5;

struct Observation {
  Image image;
  Vec other;  // [v (3), roll, pitch]
};

/// Velocity and tilt rows of a full measurement or state.
Vec select_other(const Vec& x);

struct CameraRig {
  CameraIntrinsics intr;
  RigidTransform t_bc = default_camera_mount();
  SceneModel scene;

  RigidTransform camera_pose(const Vec& x) const {
    return body_pose_from_state(x, scene.flight_altitude) * t_bc;
  }
};

/// Noise-free observation of a (possibly sampled) state.
Observation synth_observation(const Vec& x_plus, const CameraRig& rig);
/// Observation in the environment: image of the true pose, other taken from
/// the noisy measurement o_bar.
Observation observe(const Vec& x_true, const Vec& o_bar, const CameraRig& rig);

}  // namespace tubeil
