#include "tubeil/rtmpc.hpp"

#include <chrono>
#include <limits>
#include <sstream>

namespace tubeil {

RtmpcSettings default_rtmpc_settings() {
  RtmpcSettings s;
  s.q = Vec((Vec(kNx) << 10, 10, 3, 1, 1, 1, 0.5, 0.5).finished()).asDiagonal();
  s.r = Vec((Vec(kNu) << 100, 100, 1).finished()).asDiagonal();
  s.horizon = 30;
  return s;
}

CondensedQp::CondensedQp(const LinearModel& model, const LqrSolution& lqr, const TubeDesign& tube,
                         const Mat& q, const Mat& r, int horizon)
    : nx_(model.nx()),
      nu_(model.nu()),
      horizon_(horizon),
      q_(q),
      r_(r),
      p_(lqr.p),
      z_(tube.z_ctrl),
      x_tight_(tube.x_tight),
      u_tight_(tube.u_tight),
      x_terminal_(tube.x_terminal) {
  if (horizon < 1) throw Error("CondensedQp: horizon must be >= 1");
  if (q.rows() != nx_ || q.cols() != nx_ || r.rows() != nu_ || r.cols() != nu_) {
    throw DimensionMismatch("CondensedQp: weight dimensions");
  }
  const int nz = num_vars();
  state_maps_.reserve(static_cast<std::size_t>(horizon) + 1);
  Mat s = Mat::Zero(nx_, nz);
  s.leftCols(nx_).setIdentity();
  state_maps_.push_back(s);
  for (int i = 0; i < horizon; ++i) {
    Mat next = model.a * state_maps_.back();
    next.middleCols(nx_ + i * nu_, nu_) += model.b;
    state_maps_.push_back(std::move(next));
  }

  hessian_ = Mat::Zero(nz, nz);
  for (int i = 0; i < horizon; ++i) {
    const Mat& si = state_maps_[static_cast<std::size_t>(i)];
    hessian_.noalias() += si.transpose() * q_ * si;
    hessian_.block(nx_ + i * nu_, nx_ + i * nu_, nu_, nu_) += r_;
  }
  const Mat& sn = state_maps_.back();
  hessian_.noalias() += sn.transpose() * p_ * sn;
  hessian_ = (hessian_ + hessian_.transpose()).eval();  // 2 * symmetric part

  state_rows_.resize(2 * nx_ * horizon, nz);
  for (int i = 1; i <= horizon; ++i) {
    const Mat& si = state_maps_[static_cast<std::size_t>(i)];
    state_rows_.middleRows(2 * nx_ * (i - 1), nx_) = si;
    state_rows_.middleRows(2 * nx_ * (i - 1) + nx_, nx_) = -si;
  }
}

Vec CondensedQp::gradient(const Mat& x_des) const {
  if (x_des.rows() != nx_ || x_des.cols() != horizon_ + 1) {
    throw DimensionMismatch("CondensedQp: reference window must be n_x x (N+1)");
  }
  Vec g = Vec::Zero(num_vars());
  for (int i = 0; i < horizon_; ++i) {
    g.noalias() -= 2.0 * state_maps_[static_cast<std::size_t>(i)].transpose() * (q_ * x_des.col(i));
  }
  g.noalias() -= 2.0 * state_maps_.back().transpose() * (p_ * x_des.col(horizon_));
  return g;
}

double CondensedQp::cost_offset(const Mat& x_des) const {
  double c = 0.0;
  for (int i = 0; i < horizon_; ++i) c += x_des.col(i).dot(q_ * x_des.col(i));
  c += x_des.col(horizon_).dot(p_ * x_des.col(horizon_));
  return c;
}

QpProblem CondensedQp::build(const Vec& x_hat, const Mat& x_des) const {
  const int nz = num_vars();
  QpProblem qp;
  qp.h = hessian_;
  qp.g = gradient(x_des);
  qp.lb.resize(nz);
  qp.ub.resize(nz);
  // x_hat - x_bar_0 is the control error, so it is bounded by the control
  // part of S. With x - x_hat in the estimation part this keeps x in Z (+) x_bar_0.
  qp.lb.head(nx_) = (x_hat - z_.upper()).cwiseMax(x_tight_.lower());
  qp.ub.head(nx_) = (x_hat - z_.lower()).cwiseMin(x_tight_.upper());
  for (int i = 0; i < horizon_; ++i) {
    qp.lb.segment(nx_ + i * nu_, nu_) = u_tight_.lower();
    qp.ub.segment(nx_ + i * nu_, nu_) = u_tight_.upper();
  }
  qp.g_ineq = state_rows_;
  qp.h_ineq.resize(state_rows_.rows());
  for (int i = 1; i <= horizon_; ++i) {
    const IntervalBox& set = (i == horizon_) ? x_terminal_ : x_tight_;
    qp.h_ineq.segment(2 * nx_ * (i - 1), nx_) = set.upper();
    qp.h_ineq.segment(2 * nx_ * (i - 1) + nx_, nx_) = -set.lower();
  }
  return qp;
}

QpProblem CondensedQp::build_softened(const Vec& x_hat, const Mat& x_des, double penalty) const {
  const QpProblem hard = build(x_hat, x_des);
  const int nz = num_vars();
  const int n = nz + nx_;
  constexpr double inf = std::numeric_limits<double>::infinity();

  QpProblem qp;
  qp.h = Mat::Zero(n, n);
  qp.h.topLeftCorner(nz, nz) = hard.h;
  qp.h.bottomRightCorner(nx_, nx_) = 2.0 * penalty * Mat::Identity(nx_, nx_);
  qp.g = Vec::Zero(n);
  qp.g.head(nz) = hard.g;
  qp.lb = Vec::Constant(n, -inf);
  qp.ub = Vec::Constant(n, inf);
  qp.lb.head(nz) = hard.lb;
  qp.ub.head(nz) = hard.ub;
  qp.lb.head(nx_) = x_tight_.lower();
  qp.ub.head(nx_) = x_tight_.upper();

  const int m = hard.num_ineq();
  qp.g_ineq = Mat::Zero(m + 2 * nx_, n);
  qp.g_ineq.topLeftCorner(m, nz) = hard.g_ineq;
  qp.h_ineq.resize(m + 2 * nx_);
  qp.h_ineq.head(m) = hard.h_ineq;
  // x_hat - z_upper <= x_bar_0 - s <= x_hat - z_lower (z is the control part of S)
  qp.g_ineq.block(m, 0, nx_, nx_).setIdentity();
  qp.g_ineq.block(m, nz, nx_, nx_) = -Mat::Identity(nx_, nx_);
  qp.h_ineq.segment(m, nx_) = x_hat - z_.lower();
  qp.g_ineq.block(m + nx_, 0, nx_, nx_) = -Mat::Identity(nx_, nx_);
  qp.g_ineq.block(m + nx_, nz, nx_, nx_).setIdentity();
  qp.h_ineq.segment(m + nx_, nx_) = -(x_hat - z_.upper());
  return qp;
}

SafePlan CondensedQp::unpack(const Vec& z, const Mat& x_des, double objective) const {
  SafePlan plan;
  const Vec zz = z.head(num_vars());
  plan.x_bar.resize(nx_, horizon_ + 1);
  for (int i = 0; i <= horizon_; ++i) plan.x_bar.col(i) = state_maps_[static_cast<std::size_t>(i)] * zz;
  plan.u_bar.resize(nu_, horizon_);
  for (int i = 0; i < horizon_; ++i) plan.u_bar.col(i) = zz.segment(nx_ + i * nu_, nu_);
  plan.qp_cost = objective + cost_offset(x_des);
  return plan;
}

QpProblem build_qp(const LinearModel& model, const LqrSolution& lqr, const TubeDesign& tube,
                   const Vec& x_hat, const Mat& x_des, const Mat& q, const Mat& r, int horizon) {
  return CondensedQp(model, lqr, tube, q, r, horizon).build(x_hat, x_des);
}

RtmpcController::RtmpcController(LinearModel model, LqrSolution lqr, TubeDesign tube, IntervalBox input_box,
                                 RtmpcSettings settings)
    : model_(std::move(model)),
      lqr_(std::move(lqr)),
      tube_(std::move(tube)),
      input_box_(std::move(input_box)),
      settings_(std::move(settings)),
      qp_(model_, lqr_, tube_, settings_.q, settings_.r, settings_.horizon) {}

Vec RtmpcController::ancillary(const Vec& x_hat, const SafePlan& plan) const {
  const Vec u = plan.u_bar.col(0) + lqr_.k * (x_hat - plan.x_bar.col(0));
  return input_box_.clamp(u);
}

RtmpcOutput RtmpcController::solve(const Vec& x_hat, const Mat& x_des, const std::vector<int>& hint,
                                   std::vector<int>* active_out) const {
  const auto start = std::chrono::steady_clock::now();
  RtmpcOutput out;
  QpSolution sol = solve_qp(qp_.build(x_hat, x_des), settings_.qp, hint);
  if (sol.status == QpStatus::Infeasible) {
    out.stats.softened = true;
    sol = solve_qp(qp_.build_softened(x_hat, x_des, settings_.soft_penalty), settings_.qp);
    if (sol.status == QpStatus::Infeasible) {
      const Vec gap = x_hat - tube_.x_tight.clamp(x_hat);
      std::ostringstream os;
      os << "RTMPC infeasible: estimate is " << gap.norm() << " from the tightened state set";
      throw QpInfeasible(os.str());
    }
  }
  out.plan = qp_.unpack(sol.z, x_des, sol.objective);
  out.u = ancillary(x_hat, out.plan);
  out.stats.iterations = sol.iterations;
  out.stats.kkt = sol.kkt.max();
  out.stats.converged = sol.converged();
  out.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (active_out) *active_out = out.stats.softened ? std::vector<int>{} : sol.active;
  return out;
}

std::vector<int> RtmpcController::shifted_hint(const std::vector<int>& active) const {
  const int nx = model_.nx();
  const int nu = model_.nu();
  const int n = qp_.num_vars();
  std::vector<int> hint;
  hint.reserve(active.size());
  for (int id : active) {
    if (id < 2 * n) {
      const bool upper = id >= n;
      const int var = upper ? id - n : id;
      int next = -1;
      if (var < nx) {
        next = var;
      } else if (var >= nx + nu) {
        next = var - nu;
      }
      if (next >= 0) hint.push_back(upper ? upper_bound_index(n, next) : lower_bound_index(next));
    } else {
      const int row = id - 2 * n;
      if (row >= 2 * nx) hint.push_back(ineq_index(n, row - 2 * nx));
    }
  }
  return hint;
}

RtmpcOutput RtmpcController::step(const Vec& x_hat, const Mat& x_des) {
  std::vector<int> active;
  RtmpcOutput out = solve(x_hat, x_des, hint_, &active);
  hint_ = shifted_hint(active);
  return out;
}

RtmpcOutput RtmpcController::step_cold(const Vec& x_hat, const Mat& x_des) const {
  return solve(x_hat, x_des, {}, nullptr);
}

}  // namespace tubeil
