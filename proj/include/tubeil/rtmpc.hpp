#pragma once

#include <vector>

#include "tubeil/lqr.hpp"
#include "tubeil/model.hpp"
#include "tubeil/qp.hpp"
#include "tubeil/tube.hpp"

namespace tubeil {

struct RtmpcSettings {
  Mat q;
  Mat r;
  int horizon = 30;
  QpOptions qp;
  /// Quadratic penalty on the slack of the initial-state tube constraint used
  /// when the hard problem is infeasible.
  double soft_penalty = 1e6;
};

/// Default tracking weights Q = diag(10,10,3,1,1,1,0.5,0.5), R = diag(100,100,1).
RtmpcSettings default_rtmpc_settings();

/// Nominal ("safe") plan over the horizon.
struct SafePlan {
  Mat x_bar;  ///< n_x x (N+1)
  Mat u_bar;  ///< n_u x N
  double qp_cost = 0.0;
};

struct SolveStats {
  int iterations = 0;
  double kkt = 0.0;
  double seconds = 0.0;
  bool softened = false;
  bool converged = true;
};

struct RtmpcOutput {
  Vec u;
  SafePlan plan;
  SolveStats stats;
};

/// Condensed QP over z = [x_bar_0; u_bar_0 .. u_bar_{N-1}]. Predicted states
/// are x_bar_i = S_i z. Only g and the bounds depend on the estimate and the
/// reference window, so the matrices are built once.
class CondensedQp {
 public:
  CondensedQp(const LinearModel& model, const LqrSolution& lqr, const TubeDesign& tube, const Mat& q,
              const Mat& r, int horizon);

  int horizon() const { return horizon_; }
  int num_vars() const { return nx_ + horizon_ * nu_; }
  /// Row selector S_i (n_x x num_vars) mapping z to x_bar_i.
  const Mat& state_map(int i) const { return state_maps_[static_cast<std::size_t>(i)]; }

  QpProblem build(const Vec& x_hat, const Mat& x_des) const;
  /// Same problem with the initial-state tube constraint replaced by a
  /// penalized slack (n_x extra variables appended to z).
  QpProblem build_softened(const Vec& x_hat, const Mat& x_des, double penalty) const;
  /// Constant term of the tracking cost for the given reference window.
  double cost_offset(const Mat& x_des) const;
  SafePlan unpack(const Vec& z, const Mat& x_des, double objective) const;

 private:
  Vec gradient(const Mat& x_des) const;

  int nx_, nu_, horizon_;
  Mat q_, r_, p_;
  IntervalBox z_, x_tight_, u_tight_, x_terminal_;
  std::vector<Mat> state_maps_;
  Mat hessian_;
  Mat state_rows_;  ///< stacked S_1..S_N
};

/// Builds the condensed RTMPC QP for one step.
QpProblem build_qp(const LinearModel& model, const LqrSolution& lqr, const TubeDesign& tube,
                   const Vec& x_hat, const Mat& x_des, const Mat& q, const Mat& r, int horizon);

/// Output-feedback robust tube MPC: plans a safe trajectory from the state
/// estimate and applies the ancillary law u = u_bar_0 + K (x_hat - x_bar_0),
/// clipped to the input box.
class RtmpcController {
 public:
  RtmpcController(LinearModel model, LqrSolution lqr, TubeDesign tube, IntervalBox input_box,
                  RtmpcSettings settings);

  /// Throws QpInfeasible (with the distance of x_hat from the admissible
  /// initial region) only if the softened problem fails as well.
  RtmpcOutput step(const Vec& x_hat, const Mat& x_des);
  /// Solves without the warm-start hint (used to check warm-start neutrality).
  RtmpcOutput step_cold(const Vec& x_hat, const Mat& x_des) const;

  void reset_warm_start() { hint_.clear(); }

  Vec ancillary(const Vec& x_hat, const SafePlan& plan) const;

  const LinearModel& model() const { return model_; }
  const LqrSolution& lqr() const { return lqr_; }
  const TubeDesign& tube() const { return tube_; }
  const IntervalBox& input_box() const { return input_box_; }
  const RtmpcSettings& settings() const { return settings_; }
  int horizon() const { return settings_.horizon; }

 private:
  RtmpcOutput solve(const Vec& x_hat, const Mat& x_des, const std::vector<int>& hint,
                    std::vector<int>* active_out) const;
  std::vector<int> shifted_hint(const std::vector<int>& active) const;

  LinearModel model_;
  LqrSolution lqr_;
  TubeDesign tube_;
  IntervalBox input_box_;
  RtmpcSettings settings_;
  CondensedQp qp_;
  std::vector<int> hint_;
};

}  // namespace tubeil
