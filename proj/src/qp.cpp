#include "tubeil/qp.hpp"

#include <cmath>
#include <limits>

namespace tubeil {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Working-set factorization: with H = L L', J starts as L^-T and is rotated so
// that its first iq columns span the active normals, N_active = L J_1 R.
struct Factorization {
  Mat j;
  Mat r;
  double r_norm = 1.0;
};

// Appends the normal whose rotated image is d = J' n_p. Returns false when the
// normal is linearly dependent on the active ones.
bool add_constraint(Factorization& f, Vec& d, int& iq) {
  const int n = static_cast<int>(d.size());
  for (int j = n - 1; j >= iq + 1; --j) {
    double cc = d[j - 1];
    double ss = d[j];
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    d[j] = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d[j - 1] = -h;
    } else {
      d[j - 1] = h;
    }
    const double xny = ss / (1.0 + cc);
    auto c0 = f.j.col(j - 1);
    auto c1 = f.j.col(j);
    for (int k = 0; k < n; ++k) {
      const double t1 = c0[k];
      const double t2 = c1[k];
      c0[k] = t1 * cc + t2 * ss;
      c1[k] = xny * (t1 + c0[k]) - t2;
    }
  }
  ++iq;
  f.r.col(iq - 1).head(iq) = d.head(iq);
  if (std::abs(d[iq - 1]) <= kEps * f.r_norm) return false;
  f.r_norm = std::max(f.r_norm, std::abs(d[iq - 1]));
  return true;
}

// Removes the active constraint at working-set position qq. The pending
// (not yet added) entry at position iq shifts down with the others.
void delete_constraint(Factorization& f, std::vector<int>& active, Vec& u, int& iq, int qq) {
  const int n = static_cast<int>(f.j.rows());
  for (int i = qq; i < iq - 1; ++i) {
    active[i] = active[i + 1];
    u[i] = u[i + 1];
    f.r.col(i) = f.r.col(i + 1);
  }
  active[iq - 1] = active[iq];
  u[iq - 1] = u[iq];
  active[iq] = -1;
  u[iq] = 0.0;
  f.r.col(iq - 1).head(iq).setZero();
  --iq;
  if (iq == 0) return;

  for (int j = qq; j < iq; ++j) {
    double cc = f.r(j, j);
    double ss = f.r(j + 1, j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    cc /= h;
    ss /= h;
    f.r(j + 1, j) = 0.0;
    if (cc < 0.0) {
      f.r(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      f.r(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq; ++k) {
      const double t1 = f.r(j, k);
      const double t2 = f.r(j + 1, k);
      f.r(j, k) = t1 * cc + t2 * ss;
      f.r(j + 1, k) = xny * (t1 + f.r(j, k)) - t2;
    }
    auto c0 = f.j.col(j);
    auto c1 = f.j.col(j + 1);
    for (int k = 0; k < n; ++k) {
      const double t1 = c0[k];
      const double t2 = c1[k];
      c0[k] = t1 * cc + t2 * ss;
      c1[k] = xny * (c0[k] + t1) - t2;
    }
  }
}

}  // namespace

int QpProblem::num_constraints() const {
  int count = num_ineq();
  for (int i = 0; i < lb.size(); ++i) count += std::isfinite(lb[i]) ? 1 : 0;
  for (int i = 0; i < ub.size(); ++i) count += std::isfinite(ub[i]) ? 1 : 0;
  return count;
}

QpProblem QpProblem::unconstrained(Mat h, Vec g) {
  const auto n = g.size();
  QpProblem qp;
  qp.h = std::move(h);
  qp.g = std::move(g);
  qp.lb = Vec::Constant(n, -kInf);
  qp.ub = Vec::Constant(n, kInf);
  qp.g_ineq = Mat::Zero(0, n);
  qp.h_ineq = Vec::Zero(0);
  return qp;
}

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& z, const Vec& y_lower, const Vec& y_upper,
                           const Vec& y_ineq) {
  KktResiduals res;
  Vec grad = qp.h * z + qp.g - y_lower + y_upper;
  if (qp.num_ineq() > 0) grad += qp.g_ineq.transpose() * y_ineq;
  res.stationarity = grad.cwiseAbs().maxCoeff();

  const int n = qp.num_vars();
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(qp.lb[i])) {
      const double slack = z[i] - qp.lb[i];
      res.primal = std::max(res.primal, -slack);
      res.complementarity = std::max(res.complementarity, std::abs(y_lower[i] * slack));
    }
    if (std::isfinite(qp.ub[i])) {
      const double slack = qp.ub[i] - z[i];
      res.primal = std::max(res.primal, -slack);
      res.complementarity = std::max(res.complementarity, std::abs(y_upper[i] * slack));
    }
  }
  if (qp.num_ineq() > 0) {
    const Vec slack = qp.h_ineq - qp.g_ineq * z;
    for (int r = 0; r < slack.size(); ++r) {
      res.primal = std::max(res.primal, -slack[r]);
      res.complementarity = std::max(res.complementarity, std::abs(y_ineq[r] * slack[r]));
    }
  }
  double min_y = 0.0;
  if (y_lower.size()) min_y = std::min(min_y, y_lower.minCoeff());
  if (y_upper.size()) min_y = std::min(min_y, y_upper.minCoeff());
  if (y_ineq.size()) min_y = std::min(min_y, y_ineq.minCoeff());
  res.dual = -min_y;
  return res;
}

QpSolution solve_qp(const QpProblem& qp, const QpOptions& opts, const std::vector<int>& active_hint) {
  const int n = qp.num_vars();
  const int m_ineq = qp.num_ineq();
  if (qp.h.rows() != n || qp.h.cols() != n || qp.lb.size() != n || qp.ub.size() != n ||
      qp.g_ineq.rows() != m_ineq || (m_ineq > 0 && qp.g_ineq.cols() != n)) {
    throw DimensionMismatch("solve_qp: inconsistent problem dimensions");
  }

  QpSolution sol;
  sol.y_lower = Vec::Zero(n);
  sol.y_upper = Vec::Zero(n);
  sol.y_ineq = Vec::Zero(m_ineq);

  // Internal form: s_i = ci_i' z + ci0_i >= 0.
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(2 * n + m_ineq));
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(qp.lb[i])) ids.push_back(lower_bound_index(i));
  }
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(qp.ub[i])) ids.push_back(upper_bound_index(n, i));
  }
  for (int r = 0; r < m_ineq; ++r) ids.push_back(ineq_index(n, r));
  const int m = static_cast<int>(ids.size());

  Mat ci = Mat::Zero(n, m);
  Vec ci0(m);
  Vec tol(m);
  for (int k = 0; k < m; ++k) {
    const int id = ids[static_cast<std::size_t>(k)];
    if (id < n) {
      ci(id, k) = 1.0;
      ci0[k] = -qp.lb[id];
    } else if (id < 2 * n) {
      ci(id - n, k) = -1.0;
      ci0[k] = qp.ub[id - n];
    } else {
      ci.col(k) = -qp.g_ineq.row(id - 2 * n).transpose();
      ci0[k] = qp.h_ineq[id - 2 * n];
    }
    tol[k] = opts.feasibility_tol * std::max(1.0, std::abs(ci0[k]));
  }

  for (int i = 0; i < n; ++i) {
    if (qp.lb[i] > qp.ub[i]) {
      sol.status = QpStatus::Infeasible;
      sol.z = qp.lb.cwiseMax(-1e300).cwiseMin(1e300);
      return sol;
    }
  }

  std::vector<char> hinted(static_cast<std::size_t>(m), 0);
  if (!active_hint.empty()) {
    std::vector<int> combined_to_internal(static_cast<std::size_t>(2 * n + m_ineq), -1);
    for (int k = 0; k < m; ++k) combined_to_internal[static_cast<std::size_t>(ids[k])] = k;
    for (int id : active_hint) {
      if (id >= 0 && id < 2 * n + m_ineq) {
        const int k = combined_to_internal[static_cast<std::size_t>(id)];
        if (k >= 0) hinted[static_cast<std::size_t>(k)] = 1;
      }
    }
  }

  Eigen::LLT<Mat> llt(qp.h);
  if (llt.info() != Eigen::Success) throw Error("solve_qp: Hessian is not positive definite");

  Factorization f;
  f.j = llt.matrixU().solve(Mat::Identity(n, n));
  f.r = Mat::Zero(n, n);

  Vec x = -llt.solve(qp.g);
  std::vector<int> active(static_cast<std::size_t>(n + 1), -1);
  Vec u = Vec::Zero(n + 1);
  int iq = 0;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);
  std::vector<char> excluded(static_cast<std::size_t>(m), 0);

  Vec s(m), d(n), zdir(n), r(n);
  Factorization f_old;
  std::vector<int> active_old;
  Vec u_old, x_old;
  int iq_old = 0;
  int iter = 0;

  auto finish = [&](QpStatus status) {
    sol.status = status;
    sol.z = x;
    sol.iterations = iter;
    for (int k = 0; k < iq; ++k) {
      const int id = ids[static_cast<std::size_t>(active[static_cast<std::size_t>(k)])];
      sol.active.push_back(id);
      if (id < n) {
        sol.y_lower[id] = u[k];
      } else if (id < 2 * n) {
        sol.y_upper[id - n] = u[k];
      } else {
        sol.y_ineq[id - 2 * n] = u[k];
      }
    }
    sol.objective = 0.5 * x.dot(qp.h * x) + qp.g.dot(x);
    sol.kkt = kkt_residuals(qp, x, sol.y_lower, sol.y_upper, sol.y_ineq);
    return sol;
  };

  while (true) {
    if (++iter > opts.max_iter) return finish(QpStatus::MaxIterations);

    if (m > 0) s.noalias() = ci.transpose() * x + ci0;
    int p = -1;
    double worst = 0.0;
    bool worst_hinted = false;
    for (int k = 0; k < m; ++k) {
      if (is_active[k] || excluded[k] || s[k] >= -tol[k]) continue;
      const bool h = hinted[k] != 0;
      if ((h && !worst_hinted) || (h == worst_hinted && s[k] < worst)) {
        worst = s[k];
        worst_hinted = h;
        p = k;
      }
    }
    if (p < 0) return finish(QpStatus::Solved);

    f_old = f;
    active_old = active;
    u_old = u;
    x_old = x;
    iq_old = iq;

    const auto np = ci.col(p);
    double s_p = s[p];
    u[iq] = 0.0;
    active[static_cast<std::size_t>(iq)] = p;

    while (true) {
      if (++iter > opts.max_iter) return finish(QpStatus::MaxIterations);

      d.noalias() = f.j.transpose() * np;
      zdir.noalias() = f.j.rightCols(n - iq) * d.tail(n - iq);
      if (iq > 0) {
        r.head(iq) = f.r.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
      }

      // Largest dual step keeping active multipliers non-negative.
      double t1 = kInf;
      int l = -1;
      for (int k = 0; k < iq; ++k) {
        if (r[k] > 0.0 && u[k] / r[k] < t1) {
          t1 = u[k] / r[k];
          l = k;
        }
      }
      // Primal step making constraint p active.
      double t2 = kInf;
      if (zdir.squaredNorm() > kEps) {
        t2 = -s_p / zdir.dot(np);
        if (t2 < 0.0) t2 = kInf;
      }
      const double t = std::min(t1, t2);

      if (t >= kInf) return finish(QpStatus::Infeasible);

      if (t2 >= kInf) {
        u.head(iq) -= t * r.head(iq);
        u[iq] += t;
        is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(l)])] = 0;
        delete_constraint(f, active, u, iq, l);
        continue;
      }

      x += t * zdir;
      u.head(iq) -= t * r.head(iq);
      u[iq] += t;

      if (std::abs(t - t2) < kEps * std::max(1.0, std::abs(t2))) {
        if (!add_constraint(f, d, iq)) {
          // Degenerate: roll back and never pick this constraint again.
          excluded[static_cast<std::size_t>(p)] = 1;
          f = f_old;
          active = active_old;
          u = u_old;
          x = x_old;
          iq = iq_old;
        } else {
          is_active[static_cast<std::size_t>(p)] = 1;
        }
        break;
      }

      is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(l)])] = 0;
      delete_constraint(f, active, u, iq, l);
      s_p = np.dot(x) + ci0[p];
    }
  }
}

}  // namespace tubeil
