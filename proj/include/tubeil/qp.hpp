#pragma once

#include <vector>

#include "tubeil/common.hpp"

namespace tubeil {

/// Strictly convex QP
///
///   minimize    1/2 z'Hz + g'z
///   subject to  lb <= z <= ub        (entries may be +/-infinity)
///               G z <= h_ineq
struct QpProblem {
  Mat h;
  Vec g;
  Vec lb;
  Vec ub;
  Mat g_ineq;
  Vec h_ineq;

  int num_vars() const { return static_cast<int>(g.size()); }
  int num_ineq() const { return static_cast<int>(h_ineq.size()); }
  /// Number of finite bound entries plus inequality rows.
  int num_constraints() const;
  /// Unconstrained problem of the given size with empty G and infinite bounds.
  static QpProblem unconstrained(Mat h, Vec g);
};

struct QpOptions {
  /// Constraint violation accepted as satisfied.
  double feasibility_tol = 1e-10;
  int max_iter = 20000;
};

enum class QpStatus { Solved, MaxIterations, Infeasible };

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double dual = 0.0;  ///< most negative multiplier, as a positive number

  double max() const { return std::max({stationarity, primal, complementarity, dual}); }
};

struct QpSolution {
  QpStatus status = QpStatus::Solved;
  Vec z;
  /// Multipliers (all >= 0): stationarity reads
  /// H z + g - y_lower + y_upper + G' y_ineq = 0.
  Vec y_lower;
  Vec y_upper;
  Vec y_ineq;
  double objective = 0.0;
  int iterations = 0;
  KktResiduals kkt;
  /// Active constraints in the combined index space used by `active_hint`.
  std::vector<int> active;

  bool converged() const { return status == QpStatus::Solved; }
};

/// Combined constraint index space: [0, n) lower bounds, [n, 2n) upper
/// bounds, [2n, 2n + m) rows of G.
inline int lower_bound_index(int var) { return var; }
inline int upper_bound_index(int n, int var) { return n + var; }
inline int ineq_index(int n, int row) { return 2 * n + row; }

/// Dual active-set method of Goldfarb and Idnani. The unconstrained minimizer
/// is moved toward feasibility by adding violated constraints one at a time
/// while dual feasibility is maintained, so every iterate is a minimizer over
/// its working set and the final point is the exact KKT point up to rounding.
///
/// `active_hint` (combined index space) biases which violated constraint
/// enters next. The converged solution does not depend on it; only the
/// number of iterations does.
QpSolution solve_qp(const QpProblem& qp, const QpOptions& opts = {},
                    const std::vector<int>& active_hint = {});

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& z, const Vec& y_lower, const Vec& y_upper,
                           const Vec& y_ineq);

}  // namespace tubeil
