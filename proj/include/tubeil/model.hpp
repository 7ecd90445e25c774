#pragma once

#include <vector>

#include "tubeil/common.hpp"
#include "tubeil/geometry.hpp"

namespace tubeil {

// State layout: x = [p (3, m), v (3, m/s), roll (rad), pitch (rad)], expressed
// relative to the hover point at flight altitude. Input layout:
// u = [roll command (rad), pitch command (rad), thrust offset from weight (N)].
inline constexpr int kNx = 8;
inline constexpr int kNu = 3;
inline constexpr int kNo = 8;

namespace idx {
inline constexpr int px = 0, py = 1, pz = 2;
inline constexpr int vx = 3, vy = 4, vz = 5;
inline constexpr int roll = 6, pitch = 7;
}  // namespace idx

struct LinearModel {
  Mat a;
  Mat b;
  Mat c;
  double ts = 0.1;

  int nx() const { return static_cast<int>(a.rows()); }
  int nu() const { return static_cast<int>(b.cols()); }
  int no() const { return static_cast<int>(c.rows()); }
  Vec step(const Vec& x, const Vec& u) const { return a * x + b * u; }
};

struct MultirotorParams {
  double mass = 12.75 / 9.81;
  double gravity = 9.81;
  double attitude_time_constant = 0.15;
  /// Quadratic drag, force_i = -drag_coeff_i * v_i * |v_i| (N s^2 / m^2).
  Eigen::Vector3d drag_coeff = Eigen::Vector3d::Constant(0.104);
  IntervalBox state_box = default_state_box();
  IntervalBox input_box = default_input_box(12.75);

  double weight() const { return mass * gravity; }

  static IntervalBox default_state_box();
  static IntervalBox default_input_box(double weight);
};

/// Exact zero-order-hold discretization of the hover-linearized dynamics.
LinearModel hover_linearized_model(const MultirotorParams& params, double ts);

/// Discrete map from a constant external force (N, 3-vector) held over one
/// step to the state increment, consistent with hover_linearized_model.
Mat force_input_matrix(const MultirotorParams& params, double ts);

/// Nonlinear simulator step over `ts` with fixed-step RK4 (substep 0.005 s).
Vec step_nonlinear(const Vec& x, const Vec& u, const Eigen::Vector3d& f_wind,
                   const MultirotorParams& params, double ts, double substep = 0.005);

/// Continuous-time right-hand side of the nonlinear simulator.
Vec nonlinear_dynamics(const Vec& x, const Vec& u, const Eigen::Vector3d& f_wind,
                       const MultirotorParams& params);

/// Piecewise-constant wind: every `segment_duration` seconds a new horizontal
/// force is drawn with magnitude uniform in [magnitude_min, magnitude_max] (N)
/// and uniform heading. Segment k depends only on (seed, k).
class WindSchedule {
 public:
  WindSchedule() = default;
  WindSchedule(double segment_duration, double magnitude_min, double magnitude_max,
               std::uint64_t seed);

  static WindSchedule none() { return WindSchedule{}; }

  bool enabled() const { return enabled_; }
  double segment_duration() const { return segment_duration_; }
  Eigen::Vector3d segment_force(int segment) const;
  Eigen::Vector3d force_at(double t) const;

 private:
  bool enabled_ = false;
  double segment_duration_ = 4.0;
  double magnitude_min_ = 0.0;
  double magnitude_max_ = 0.0;
  std::uint64_t seed_ = 0;
};

struct NoiseModel {
  /// Position channels (m), one standard deviation.
  Eigen::Vector3d sigma_cam = Eigen::Vector3d(0.2, 0.2, 0.4) / 3.0;
  /// Velocity (m/s) and tilt (rad) channels, one standard deviation.
  Eigen::Matrix<double, 5, 1> sigma_other =
      (Eigen::Matrix<double, 5, 1>() << 0.2, 0.2, 0.2, 0.05, 0.05).finished() / 3.0;

  static NoiseModel zero();
  Vec sigma() const;
  /// Box of +/- 3 sigma per channel, the bounded sensing-uncertainty set.
  IntervalBox three_sigma_box() const;
};

/// Full measurement x + v. Always consumes exactly 8 normal draws.
Vec measure(const Vec& x_true, const NoiseModel& noise, Rng& rng);

struct ReferenceTrajectory {
  double ts = 0.1;
  double duration = 0.0;
  double peak_speed = 0.0;
  std::vector<Vec> states;

  int size() const { return static_cast<int>(states.size()); }
  const Vec& at(int t) const { return states.at(static_cast<std::size_t>(t)); }
};

/// Gerono lemniscate x = A sin(wt), y = A sin(wt) cos(wt) at the hover
/// altitude, with w set so that the maximum speed equals peak_speed.
ReferenceTrajectory lemniscate_reference(double duration, double ts, double scale, double peak_speed,
                                         const IntervalBox& state_box);

/// Scale for which one full figure-eight takes exactly `period` seconds at
/// the given peak speed.
double lemniscate_scale_for_period(double period, double peak_speed);

/// Desired states t..t+n as columns of an n_x x (n+1) matrix; indices past
/// the end repeat the final state.
Mat reference_window(const ReferenceTrajectory& traj, int t, int n);

}  // namespace tubeil
