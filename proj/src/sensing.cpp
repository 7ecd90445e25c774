#include "tubeil/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tubeil {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ConfigError("camera: principal point outside the image");
  }
}

RigidTransform::RigidTransform(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {
  const double orth = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-9 || r.determinant() < 0.0) throw Error("RigidTransform: rotation is not proper orthonormal");
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

RigidTransform default_camera_mount() {
  Eigen::Matrix3d r = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
  return RigidTransform(r, Eigen::Vector3d::Zero());
}

Eigen::Matrix3d tilt_rotation(double roll, double pitch) {
  return (Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) * Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector2d tilt_from_rotation(const Eigen::Matrix3d& r) {
  // last row of R_y(th) R_x(ph) is [-sin th, cos th sin ph, cos th cos ph]
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  return {roll, pitch};
}

namespace {

double hash_unit(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(octave));
  h = derive_seed(h, static_cast<std::uint64_t>(ix));
  h = derive_seed(h, static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

double SceneModel::texture(double x, double y) const {
  if (!(std::abs(x) <= extent && std::abs(y) <= extent)) return 1.0;
  double value = 0.0;
  double total = 0.0;
  double cell = base_cell;
  double amp = 1.0;
  for (int k = 0; k < octaves; ++k) {
    const auto ix = static_cast<std::int64_t>(std::floor(x / cell));
    const auto iy = static_cast<std::int64_t>(std::floor(y / cell));
    value += amp * hash_unit(seed, k, ix, iy);
    total += amp;
    cell *= 0.5;
    amp *= 0.5;
  }
  return total > 0.0 ? value / total : 1.0;
}

Eigen::Vector2i SceneModel::finest_cell(double x, double y) const {
  const double cell = base_cell * std::pow(0.5, octaves - 1);
  return {static_cast<int>(std::floor(x / cell)), static_cast<int>(std::floor(y / cell))};
}

void write_pgm(const std::string& path, const Image& img, const std::string& comment) {
  if (comment.find('\n') != std::string::npos) throw Error("write_pgm: comment must be a single line");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_pgm: cannot open " + path);
  out << "P5\n";
  if (!comment.empty()) out << "# " << comment << "\n";
  out << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write_pgm: write failed for " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_pgm: cannot open " + path);
  // header tokens may be separated by comment lines
  auto token = [&in]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(in, rest);
    }
    return std::string();
  };
  const std::string magic = token();
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error("read_pgm: malformed header in " + path);
  }
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw Error("read_pgm: unsupported header in " + path);
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error("read_pgm: truncated " + path);
  Image img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

RigidTransform body_pose_from_state(const Vec& x, double flight_altitude) {
  if (x.size() != kNx) throw DimensionMismatch("body_pose_from_state: state must have 8 entries");
  RigidTransform t;
  t.rotation = tilt_rotation(x[idx::roll], x[idx::pitch]);
  t.translation = Eigen::Vector3d(x[idx::px], x[idx::py], x[idx::pz] + flight_altitude);
  return t;
}

void render_into(const RigidTransform& t_ic, const CameraIntrinsics& intr, const SceneModel& scene,
                 float* out) {
  const Eigen::Vector3d& c = t_ic.translation;
  if (!(c.z() > 0.05)) {
    std::ostringstream os;
    os << "render: camera at height " << c.z() << " m is not above the ground plane";
    throw CameraBelowPlane(os.str());
  }
  const Eigen::Matrix3d& r = t_ic.rotation;
  const double ifx = 1.0 / intr.fx;
  const double ify = 1.0 / intr.fy;
  for (int v = 0; v < intr.height; ++v) {
    const double yn = (v - intr.cy) * ify;
    for (int u = 0; u < intr.width; ++u) {
      const double xn = (u - intr.cx) * ifx;
      const Eigen::Vector3d d = r.col(0) * xn + r.col(1) * yn + r.col(2);
      float px = 1.0f;
      if (d.z() < 0.0) {
        const double s = -c.z() / d.z();
        px = static_cast<float>(scene.texture(c.x() + s * d.x(), c.y() + s * d.y()));
      }
      out[static_cast<std::size_t>(v) * intr.width + u] = px;
    }
  }
}

Image render(const RigidTransform& t_ic, const CameraIntrinsics& intr, const SceneModel& scene) {
  Image img(intr.width, intr.height);
  render_into(t_ic, intr, scene, img.pixels.data());
  return img;
}

bool project(const RigidTransform& t_ic, const CameraIntrinsics& intr, const Eigen::Vector3d& p,
             Eigen::Vector2d& uv) {
  const Eigen::Vector3d pc = t_ic.rotation.transpose() * (p - t_ic.translation);
  if (pc.z() <= 0.0) return false;
  uv = Eigen::Vector2d(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
  return true;
}

Vec select_other(const Vec& x) {
  if (x.size() != kNx) throw DimensionMismatch("select_other: expected an 8-vector");
  return x.tail(kNOther);
}

Observation synth_observation(const Vec& x_plus, const CameraRig& rig) {
  if (!x_plus.allFinite()) throw Error("synth_observation: non-finite state");
  return Observation{render(rig.camera_pose(x_plus), rig.intr, rig.scene), select_other(x_plus)};
}

Observation observe(const Vec& x_true, const Vec& o_bar, const CameraRig& rig) {
  return Observation{render(rig.camera_pose(x_true), rig.intr, rig.scene), select_other(o_bar)};
}

}  // namespace tubeil
