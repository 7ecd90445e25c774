#include "tubeil/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>

namespace tubeil {

IntervalBox MultirotorParams::default_state_box() {
  Vec hi(kNx);
  hi << 6.0, 6.0, 2.5, 5.0, 5.0, 5.0, 0.6, 0.6;
  return IntervalBox::symmetric(hi);
}

IntervalBox MultirotorParams::default_input_box(double weight) {
  Vec hi(kNu);
  hi << 0.7, 0.7, 0.7 * weight;
  return IntervalBox::symmetric(hi);
}

namespace {

// Continuous-time linearization about hover, with inputs [u; f_ext].
void continuous_linearization(const MultirotorParams& p, Mat& ac, Mat& bc) {
  ac = Mat::Zero(kNx, kNx);
  bc = Mat::Zero(kNx, kNu + 3);
  const double g = p.weight() / p.mass;
  const double tau = p.attitude_time_constant;
  ac(idx::px, idx::vx) = 1.0;
  ac(idx::py, idx::vy) = 1.0;
  ac(idx::pz, idx::vz) = 1.0;
  ac(idx::vx, idx::pitch) = g;
  ac(idx::vy, idx::roll) = -g;
  ac(idx::roll, idx::roll) = -1.0 / tau;
  ac(idx::pitch, idx::pitch) = -1.0 / tau;
  bc(idx::roll, 0) = 1.0 / tau;
  bc(idx::pitch, 1) = 1.0 / tau;
  bc(idx::vz, 2) = 1.0 / p.mass;
  bc(idx::vx, kNu + 0) = 1.0 / p.mass;
  bc(idx::vy, kNu + 1) = 1.0 / p.mass;
  bc(idx::vz, kNu + 2) = 1.0 / p.mass;
}

// Exact ZOH: expm([[Ac, Bc], [0, 0]] ts) = [[A, B], [0, I]].
void discretize(const MultirotorParams& p, double ts, Mat& a, Mat& b_all) {
  Mat ac, bc;
  continuous_linearization(p, ac, bc);
  const int m = static_cast<int>(bc.cols());
  Mat aug = Mat::Zero(kNx + m, kNx + m);
  aug.topLeftCorner(kNx, kNx) = ac;
  aug.topRightCorner(kNx, m) = bc;
  const Mat e = (aug * ts).exp();
  a = e.topLeftCorner(kNx, kNx);
  b_all = e.topRightCorner(kNx, m);
}

}  // namespace

LinearModel hover_linearized_model(const MultirotorParams& params, double ts) {
  if (!(ts > 0.0)) throw Error("hover_linearized_model: ts must be positive");
  Mat a, b_all;
  discretize(params, ts, a, b_all);
  return LinearModel{a, b_all.leftCols(kNu), Mat::Identity(kNo, kNx), ts};
}

Mat force_input_matrix(const MultirotorParams& params, double ts) {
  Mat a, b_all;
  discretize(params, ts, a, b_all);
  return b_all.rightCols(3);
}

Vec nonlinear_dynamics(const Vec& x, const Vec& u, const Eigen::Vector3d& f_wind,
                       const MultirotorParams& p) {
  const double roll = x[idx::roll];
  const double pitch = x[idx::pitch];
  // Thrust axis R e_z with R = R_y(pitch) R_x(roll).
  const Eigen::Vector3d axis(std::sin(pitch) * std::cos(roll), -std::sin(roll),
                             std::cos(pitch) * std::cos(roll));
  const Eigen::Vector3d v = x.segment<3>(idx::vx);
  const Eigen::Vector3d drag = -(p.drag_coeff.array() * v.array() * v.array().abs()).matrix();
  const double thrust = p.weight() + u[2];

  Vec dx(kNx);
  dx.segment<3>(idx::px) = v;
  dx.segment<3>(idx::vx) = (thrust * axis + f_wind + drag) / p.mass;
  dx[idx::vz] -= p.gravity;
  dx[idx::roll] = (u[0] - roll) / p.attitude_time_constant;
  dx[idx::pitch] = (u[1] - pitch) / p.attitude_time_constant;
  return dx;
}

Vec step_nonlinear(const Vec& x, const Vec& u, const Eigen::Vector3d& f_wind,
                   const MultirotorParams& params, double ts, double substep) {
  const int n = std::max(1, static_cast<int>(std::lround(ts / substep)));
  const double h = ts / n;
  Vec s = x;
  for (int i = 0; i < n; ++i) {
    const Vec k1 = nonlinear_dynamics(s, u, f_wind, params);
    const Vec k2 = nonlinear_dynamics(s + 0.5 * h * k1, u, f_wind, params);
    const Vec k3 = nonlinear_dynamics(s + 0.5 * h * k2, u, f_wind, params);
    const Vec k4 = nonlinear_dynamics(s + h * k3, u, f_wind, params);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

WindSchedule::WindSchedule(double segment_duration, double magnitude_min, double magnitude_max,
                           std::uint64_t seed)
    : enabled_(true),
      segment_duration_(segment_duration),
      magnitude_min_(magnitude_min),
      magnitude_max_(magnitude_max),
      seed_(seed) {
  if (!(segment_duration > 0.0) || magnitude_min < 0.0 || magnitude_max < magnitude_min) {
    throw Error("WindSchedule: invalid parameters");
  }
}

Eigen::Vector3d WindSchedule::segment_force(int segment) const {
  if (!enabled_) return Eigen::Vector3d::Zero();
  Rng rng = make_rng(seed_, static_cast<std::uint64_t>(segment));
  const double magnitude = uniform(rng, magnitude_min_, magnitude_max_);
  const double heading = uniform(rng, 0.0, 2.0 * M_PI);
  return magnitude * Eigen::Vector3d(std::cos(heading), std::sin(heading), 0.0);
}

Eigen::Vector3d WindSchedule::force_at(double t) const {
  if (!enabled_) return Eigen::Vector3d::Zero();
  return segment_force(static_cast<int>(std::floor(t / segment_duration_ + 1e-9)));
}

NoiseModel NoiseModel::zero() {
  NoiseModel n;
  n.sigma_cam.setZero();
  n.sigma_other.setZero();
  return n;
}

Vec NoiseModel::sigma() const {
  Vec s(kNo);
  s << sigma_cam, sigma_other;
  return s;
}

IntervalBox NoiseModel::three_sigma_box() const { return IntervalBox::symmetric(3.0 * sigma()); }

Vec measure(const Vec& x_true, const NoiseModel& noise, Rng& rng) {
  if (x_true.size() != kNo) throw DimensionMismatch("measure: state must have 8 entries");
  const Vec s = noise.sigma();
  Vec o = x_true;
  for (int i = 0; i < kNo; ++i) o[i] += s[i] * standard_normal(rng);
  return o;
}

double lemniscate_scale_for_period(double period, double peak_speed) {
  const double omega = 2.0 * M_PI / period;
  return peak_speed / (omega * std::sqrt(2.0));
}

ReferenceTrajectory lemniscate_reference(double duration, double ts, double scale, double peak_speed,
                                         const IntervalBox& state_box) {
  if (!(ts > 0.0) || !(duration >= 0.0) || !(scale > 0.0) || !(peak_speed > 0.0)) {
    throw Error("lemniscate_reference: invalid arguments");
  }
  // |v|^2 = A^2 w^2 (cos^2 wt + cos^2 2wt), maximal (2 A^2 w^2) at t = 0.
  const double omega = peak_speed / (scale * std::sqrt(2.0));
  const int steps = static_cast<int>(std::lround(duration / ts));

  ReferenceTrajectory traj;
  traj.ts = ts;
  traj.duration = duration;
  traj.peak_speed = peak_speed;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * ts;
    const double s = std::sin(omega * t);
    const double c = std::cos(omega * t);
    Vec x = Vec::Zero(kNx);
    x[idx::px] = scale * s;
    x[idx::py] = scale * s * c;
    x[idx::vx] = scale * omega * c;
    x[idx::vy] = scale * omega * std::cos(2.0 * omega * t);
    if (!contains(state_box, x)) {
      std::ostringstream os;
      os << "lemniscate_reference: sample " << k << " leaves the state constraints";
      throw ReferenceViolatesConstraints(os.str());
    }
    traj.states.push_back(std::move(x));
  }
  return traj;
}

Mat reference_window(const ReferenceTrajectory& traj, int t, int n) {
  if (traj.states.empty()) throw Error("reference_window: empty trajectory");
  const int nx = static_cast<int>(traj.states.front().size());
  Mat w(nx, n + 1);
  const int last = traj.size() - 1;
  for (int i = 0; i <= n; ++i) w.col(i) = traj.at(std::clamp(t + i, 0, last));
  return w;
}

}  // namespace tubeil
