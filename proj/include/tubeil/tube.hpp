#pragma once

#include <cstdint>

#include "tubeil/geometry.hpp"
#include "tubeil/model.hpp"

namespace tubeil {

struct TubeOptions {
  RpiOptions mc;
  /// Scale applied to the Monte-Carlo RPI box about its center.
  double inflation = 1.0;
  std::uint64_t seed = 1;
};

struct TubeDesign {
  IntervalBox s_rpi;       ///< joint error set S (2 n_x)
  IntervalBox z;           ///< tube cross-section Z = [I I] S
  IntervalBox z_ctrl;      ///< control-error part of S, bounds x_hat - x_bar
  IntervalBox u_margin;    ///< [0 K] S
  IntervalBox x_tight;     ///< X (-) Z
  IntervalBox u_tight;     ///< U (-) [0 K] S
  IntervalBox x_terminal;  ///< terminal set, equal to x_tight
};

/// Process-uncertainty box for a bounded external force of `fraction` times
/// the weight on every axis, mapped through one discretization step.
IntervalBox force_disturbance_box(const MultirotorParams& params, double ts, double fraction);

/// Same force bound read as a magnitude: |f| <= fraction * weight.
ForceBall force_disturbance_ball(const MultirotorParams& params, double ts, double fraction);

/// Builds the error system, estimates S by Monte Carlo and tightens the state
/// and input constraints. EmptyResult names the emptied constraint.
TubeDesign compute_tube(const LinearModel& model, const Mat& k, const Mat& l, const IntervalBox& w,
                        const IntervalBox& v, const IntervalBox& x_box, const IntervalBox& u_box,
                        const TubeOptions& opts);
TubeDesign compute_tube(const LinearModel& model, const Mat& k, const Mat& l, const ForceBall& w,
                        const IntervalBox& v, const IntervalBox& x_box, const IntervalBox& u_box,
                        const TubeOptions& opts);

/// Tightening from a given RPI estimate (the deterministic half of
/// compute_tube).
TubeDesign tighten(const IntervalBox& s_rpi, const Mat& k, const IntervalBox& x_box,
                   const IntervalBox& u_box);

}  // namespace tubeil
