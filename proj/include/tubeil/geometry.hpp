#pragma once

#include <cstdint>
#include <optional>

#include "tubeil/common.hpp"

namespace tubeil {

/// Axis-aligned box {x : lower <= x <= upper}. Every constraint and
/// uncertainty set in the toolkit is one of these. Construction validates
/// lower <= upper, so an empty box cannot exist as a value.
class IntervalBox {
 public:
  IntervalBox(Vec lower, Vec upper);

  static IntervalBox point(const Vec& c);
  static IntervalBox symmetric(const Vec& halfwidth);
  static IntervalBox zeros(int dim) { return point(Vec::Zero(dim)); }
  /// Cartesian product a x b (dimension dim(a) + dim(b)).
  static IntervalBox product(const IntervalBox& a, const IntervalBox& b);

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }
  Vec halfwidth() const { return 0.5 * (upper_ - lower_); }

  /// Sub-box over coordinates [start, start + count).
  IntervalBox segment(int start, int count) const;
  /// Box scaled about its center by `factor` (factor >= 0).
  IntervalBox inflated(double factor) const;
  /// Elementwise a subset-of b, with tolerance.
  bool subset_of(const IntervalBox& other, double tol = 0.0) const;
  Vec clamp(const Vec& x) const;

  bool operator==(const IntervalBox&) const = default;

 private:
  Vec lower_;
  Vec upper_;
};

IntervalBox minkowski_sum(const IntervalBox& a, const IntervalBox& b);

/// a (-) b = {x : x + b subset a}. Throws EmptyResult when b is wider than a
/// on some axis.
IntervalBox pontryagin_diff(const IntervalBox& a, const IntervalBox& b);

/// Tight bounding box of {m x : x in b}.
IntervalBox linear_map_box(const Mat& m, const IntervalBox& b);

bool contains(const IntervalBox& b, const Vec& x, double tol = 0.0);

Vec sample_uniform(const IntervalBox& b, Rng& rng);

/// Process uncertainty given as a force of bounded magnitude: w = map f with
/// |f| <= radius. Instances are drawn uniformly in the ball.
struct ForceBall {
  Mat map;
  double radius = 0.0;

  Vec sample(Rng& rng) const;
  /// Bounding box of map * ball.
  IntervalBox bounding_box() const;
};

/// Joint estimation/control error dynamics xi' = a_xi xi + delta with
/// delta = d_map [w; v], (w, v) in `uncertainty` = W x V, and xi = [e_est; e_ctrl].
/// d_box is the bounding box of the disturbance set D = d_map (W x V).
struct ErrorSystem {
  Mat a_xi;
  Mat d_map;
  IntervalBox d_box;
  IntervalBox uncertainty;
  /// When set, the w part of each instance comes from the ball instead of
  /// the W box (which is then its bounding box).
  std::optional<ForceBall> force_ball;

  /// System xi' = a_xi xi + d with d uniform in `d` (identity disturbance map).
  static ErrorSystem with_box_disturbance(Mat a_xi, const IntervalBox& d);
};

ErrorSystem build_error_system(const Mat& a, const Mat& b, const Mat& c, const Mat& k,
                               const Mat& l, const IntervalBox& w, const IntervalBox& v);
ErrorSystem build_error_system(const Mat& a, const Mat& b, const Mat& c, const Mat& k,
                               const Mat& l, const ForceBall& w, const IntervalBox& v);

struct RpiOptions {
  int n_traj = 2000;
  int horizon = 300;
  int jobs = 1;
};

/// Monte-Carlo estimate of the RPI set: bounding box of all visited states
/// over n_traj trajectories from xi_0 = 0, with (w, v) drawn uniformly from
/// the uncertainty box (or w from the force ball) at every step. Trajectory i draws from the
/// sub-stream derive_seed(s, i), where s is the first draw from `rng`; hence
/// a larger n_traj or horizon always yields a superset for the same stream.
IntervalBox estimate_rpi(const ErrorSystem& sys, const RpiOptions& opts, Rng& rng);

inline IntervalBox estimate_rpi(const ErrorSystem& sys, int n_traj, int horizon, Rng& rng) {
  return estimate_rpi(sys, RpiOptions{n_traj, horizon, 1}, rng);
}

}  // namespace tubeil
