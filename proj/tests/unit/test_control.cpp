#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "tubeil/estimation.hpp"
#include "tubeil/lqr.hpp"
#include "tubeil/qp.hpp"
#include "tubeil/rtmpc.hpp"

using namespace tubeil;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Enumerated {
  bool found = false;
  Vec z;
  double objective = 0.0;
};

// Independent oracle: enumerate active sets of the combined constraint list.
Enumerated enumerate_active_sets(const QpProblem& qp) {
  const int n = qp.num_vars();
  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(qp.lb[i])) {
      rows.push_back(-Vec::Unit(n, i));
      rhs.push_back(-qp.lb[i]);
    }
    if (std::isfinite(qp.ub[i])) {
      rows.push_back(Vec::Unit(n, i));
      rhs.push_back(qp.ub[i]);
    }
  }
  for (int j = 0; j < qp.num_ineq(); ++j) {
    rows.push_back(qp.g_ineq.row(j).transpose());
    rhs.push_back(qp.h_ineq[j]);
  }
  const int m = static_cast<int>(rows.size());
  Enumerated best;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) act.push_back(i);
    }
    const int k = static_cast<int>(act.size());
    if (k > n) continue;
    Mat kkt = Mat::Zero(n + k, n + k);
    Vec b = Vec::Zero(n + k);
    kkt.topLeftCorner(n, n) = qp.h;
    b.head(n) = -qp.g;
    for (int a = 0; a < k; ++a) {
      kkt.block(0, n + a, n, 1) = rows[act[a]];
      kkt.block(n + a, 0, 1, n) = rows[act[a]].transpose();
      b[n + a] = rhs[act[a]];
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (lu.rank() < n + k) continue;
    const Vec sol = lu.solve(b);
    const Vec z = sol.head(n);
    bool ok = true;
    for (int a = 0; a < k && ok; ++a) ok = sol[n + a] >= -1e-9;
    for (int i = 0; i < m && ok; ++i) ok = rows[i].dot(z) <= rhs[i] + 1e-9;
    if (!ok) continue;
    const double obj = 0.5 * z.dot(qp.h * z) + qp.g.dot(z);
    if (!best.found || obj < best.objective) best = {true, z, obj};
  }
  return best;
}

QpProblem random_qp(Rng& rng, int n, int max_constraints) {
  const Mat a = testutil::randn(n, n, rng);
  QpProblem qp;
  qp.h = a * a.transpose() + 0.1 * Mat::Identity(n, n);
  qp.g = testutil::randn(n, 1, rng, 3.0);
  qp.lb = Vec::Constant(n, -kInf);
  qp.ub = Vec::Constant(n, kInf);
  const Vec z0 = testutil::randu(n, rng, -0.5, 0.5);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (uniform(rng, 0.0, 1.0) < 0.5) {
      qp.lb[i] = z0[i] - uniform(rng, 0.0, 1.0);
      ++count;
    }
    if (uniform(rng, 0.0, 1.0) < 0.5) {
      qp.ub[i] = z0[i] + uniform(rng, 0.0, 1.0);
      ++count;
    }
  }
  const int m = std::max(0, std::min(max_constraints - count, static_cast<int>(uniform(rng, 0.0, 6.0))));
  qp.g_ineq = testutil::randn(m, n, rng);
  qp.h_ineq = qp.g_ineq * z0 + testutil::randu(m, rng, 0.0, 0.5);
  return qp;
}

}  // namespace

TEST_CASE("scalar DARE has the golden-ratio solution") {
  const Mat one = Mat::Ones(1, 1);
  const LqrSolution sol = solve_lqr(one, one, one, one);
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  CHECK(sol.p(0, 0) == doctest::Approx(phi).epsilon(1e-12));
  CHECK(std::abs(sol.k(0, 0) - (-phi / (1.0 + phi))) < 1e-12);
  CHECK(std::abs(sol.k(0, 0) + 0.618034) < 1e-6);
}

TEST_CASE("DARE residual vanishes on the hover model") {
  const MultirotorParams p;
  const LinearModel m = hover_linearized_model(p, 0.1);
  const RtmpcSettings s = default_rtmpc_settings();
  const LqrSolution sol = solve_lqr(m.a, m.b, s.q, s.r);
  CHECK(dare_residual(m.a, m.b, s.q, s.r, sol.p) < 1e-8 * sol.p.cwiseAbs().maxCoeff());
  CHECK(spectral_radius(m.a + m.b * sol.k) < 1.0);
  CHECK((sol.p - sol.p.transpose()).cwiseAbs().maxCoeff() < 1e-8 * sol.p.cwiseAbs().maxCoeff());
}

TEST_CASE("LQR on an uncontrollable unstable mode is rejected") {
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 1.5;
  a(1, 1) = 0.5;
  Mat b = Mat::Zero(2, 1);
  b(1, 0) = 1.0;
  CHECK_THROWS(solve_lqr(a, b, Mat::Identity(2, 2), Mat::Identity(1, 1)));
}

TEST_CASE("scalar observer gain places the pole at exp(-rate ts)") {
  LinearModel m{Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1), 0.1};
  const Mat l = design_observer_gain(m, 30.0);
  CHECK(l(0, 0) == doctest::Approx(1.0 - std::exp(-3.0)).epsilon(1e-12));
  CHECK(l(0, 0) == doctest::Approx(0.950213).epsilon(1e-6));
}

TEST_CASE("observer poles on the hover model") {
  const LinearModel m = hover_linearized_model(MultirotorParams{}, 0.1);
  const Mat l = design_observer_gain(m, 30.0);
  const Eigen::VectorXcd eig = (m.a - l * m.c).eigenvalues();
  for (int i = 0; i < eig.size(); ++i) CHECK(std::abs(std::abs(eig[i]) - std::exp(-3.0)) < 1e-8);
}

TEST_CASE("observer rejects a singular or non-square output matrix") {
  LinearModel m = hover_linearized_model(MultirotorParams{}, 0.1);
  m.c = Mat::Identity(3, 8);
  CHECK_THROWS_AS(design_observer_gain(m, 30.0), SingularC);
  m.c = Mat::Zero(8, 8);
  CHECK_THROWS_AS(design_observer_gain(m, 30.0), SingularC);
}

TEST_CASE("noise-free observer converges to the true state") {
  const LinearModel m = hover_linearized_model(MultirotorParams{}, 0.1);
  Observer obs(m, design_observer_gain(m, 30.0), Vec::Zero(8));
  Vec x = Vec::LinSpaced(8, -1.0, 1.0);
  const Vec u = Vec::Constant(3, 0.05);
  for (int t = 0; t < 30; ++t) {
    obs.step(u, m.c * x);
    x = m.step(x, u);
  }
  CHECK((obs.estimate() - x).norm() < 1e-12);
}

TEST_CASE("QP matches active-set enumeration on random instances") {
  Rng rng = make_rng(11, 0);
  for (int it = 0; it < 100; ++it) {
    const QpProblem qp = random_qp(rng, 2 + it % 4, 12);
    const QpSolution sol = solve_qp(qp);
    const Enumerated ref = enumerate_active_sets(qp);
    REQUIRE(sol.converged());
    REQUIRE(ref.found);
    CHECK((sol.z - ref.z).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(sol.kkt.max() < 1e-6);
    CHECK(sol.objective == doctest::Approx(ref.objective).epsilon(1e-8));
  }
}

TEST_CASE("unconstrained QP returns the Newton step") {
  Rng rng = make_rng(12, 0);
  const Mat a = testutil::randn(4, 4, rng);
  const Mat h = a * a.transpose() + Mat::Identity(4, 4);
  const Vec g = testutil::randn(4, 1, rng);
  const QpSolution sol = solve_qp(QpProblem::unconstrained(h, g));
  CHECK((sol.z + h.ldlt().solve(g)).norm() < 1e-10);
  CHECK(sol.active.empty());
}

TEST_CASE("QP reports infeasibility") {
  QpProblem qp = QpProblem::unconstrained(Mat::Identity(2, 2), Vec::Zero(2));
  qp.g_ineq = Mat(2, 2);
  qp.g_ineq << 1.0, 0.0, -1.0, 0.0;
  qp.h_ineq = Vec(2);
  qp.h_ineq << -1.0, -1.0;  // x <= -1 and x >= 1
  CHECK(solve_qp(qp).status == QpStatus::Infeasible);
}

TEST_CASE("QP solution does not depend on the active-set hint") {
  Rng rng = make_rng(13, 0);
  for (int it = 0; it < 30; ++it) {
    const QpProblem qp = random_qp(rng, 4, 12);
    const QpSolution cold = solve_qp(qp);
    const QpSolution warm = solve_qp(qp, {}, cold.active);
    CHECK((cold.z - warm.z).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("attitude lag after one step") {
  const MultirotorParams p;
  const LinearModel m = hover_linearized_model(p, 0.1);
  Vec u = Vec::Zero(3);
  u[0] = 1.0;
  const Vec x1 = m.step(Vec::Zero(8), u);
  CHECK(x1[idx::roll] == doctest::Approx(1.0 - std::exp(-0.1 / 0.15)).epsilon(1e-12));
  CHECK(x1[idx::roll] == doctest::Approx(0.4866).epsilon(1e-4));
  const Vec xn = step_nonlinear(Vec::Zero(8), u, Eigen::Vector3d::Zero(), p, 0.1);
  CHECK(xn[idx::roll] == doctest::Approx(x1[idx::roll]).epsilon(1e-6));
}

TEST_CASE("hover is an equilibrium of both models") {
  const MultirotorParams p;
  const Vec x = step_nonlinear(Vec::Zero(8), Vec::Zero(3), Eigen::Vector3d::Zero(), p, 0.1);
  CHECK(x.norm() < 1e-12);
  CHECK(hover_linearized_model(p, 0.1).step(Vec::Zero(8), Vec::Zero(3)).norm() == 0.0);
}

TEST_CASE("linear model agrees with the simulator for small deviations") {
  MultirotorParams p;
  p.drag_coeff.setZero();
  const LinearModel m = hover_linearized_model(p, 0.1);
  Vec x = Vec::Zero(8);
  x[idx::vx] = 0.01;
  x[idx::roll] = 0.002;
  Vec u(3);
  u << 0.003, -0.002, 0.05;
  const Vec lin = m.step(x, u);
  const Vec nl = step_nonlinear(x, u, Eigen::Vector3d::Zero(), p, 0.1);
  CHECK((lin - nl).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("constant force enters through the force input matrix") {
  MultirotorParams p;
  p.drag_coeff.setZero();
  const Mat gf = force_input_matrix(p, 0.1);
  const Eigen::Vector3d f(0.3, -0.2, 0.1);
  const Vec nl = step_nonlinear(Vec::Zero(8), Vec::Zero(3), f, p, 0.1);
  CHECK((nl - gf * f).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("wind schedule is deterministic, horizontal and bounded") {
  const WindSchedule w(4.0, 1.9, 2.55, 42);
  const WindSchedule same(4.0, 1.9, 2.55, 42);
  for (int k = 0; k < 50; ++k) {
    const Eigen::Vector3d f = w.segment_force(k);
    CHECK(f.z() == 0.0);
    CHECK(f.norm() >= 1.9 - 1e-12);
    CHECK(f.norm() <= 2.55 + 1e-12);
    CHECK(f == same.segment_force(k));
  }
  CHECK(w.force_at(1.0) == w.segment_force(0));
  CHECK(w.force_at(4.5) == w.segment_force(1));
  CHECK(WindSchedule::none().force_at(3.0).norm() == 0.0);
}

TEST_CASE("lemniscate reference peak speed, period and window padding") {
  const MultirotorParams p;
  const double scale = lemniscate_scale_for_period(10.0, 3.5);
  const ReferenceTrajectory ref = lemniscate_reference(10.0, 0.1, scale, 3.5, p.state_box);
  CHECK(ref.size() == 101);
  double vmax = 0.0;
  for (const Vec& x : ref.states) vmax = std::max(vmax, x.segment(3, 2).norm());
  CHECK(vmax == doctest::Approx(3.5).epsilon(1e-3));
  CHECK((ref.at(100).head(2) - ref.at(0).head(2)).norm() < 1e-9);
  const Mat w = reference_window(ref, 95, 30);
  CHECK(w.cols() == 31);
  CHECK(w.col(30) == ref.at(100));
  CHECK(w.col(0) == ref.at(95));
}

TEST_CASE("RTMPC plan respects the tightened constraints and the ancillary law") {
  const MultirotorParams p;
  const LinearModel m = hover_linearized_model(p, 0.1);
  const RtmpcSettings s = default_rtmpc_settings();
  const LqrSolution lqr = solve_lqr(m.a, m.b, s.q, s.r);
  const Mat l = design_observer_gain(m, 30.0);
  TubeOptions to;
  to.mc = RpiOptions{400, 150, 1};
  const TubeDesign tube = compute_tube(m, lqr.k, l, force_disturbance_ball(p, 0.1, 0.25),
                                       NoiseModel{}.three_sigma_box(), p.state_box, p.input_box, to);
  RtmpcController ctrl(m, lqr, tube, p.input_box, s);
  const ReferenceTrajectory ref =
      lemniscate_reference(10.0, 0.1, lemniscate_scale_for_period(10.0, 3.5), 3.5, p.state_box);
  Vec x_hat = ref.at(0);
  x_hat[0] += 0.15;
  const RtmpcOutput out = ctrl.step(x_hat, reference_window(ref, 0, 30));
  CHECK_FALSE(out.stats.softened);
  for (int i = 0; i <= 30; ++i) CHECK(contains(tube.x_tight, out.plan.x_bar.col(i), 1e-7));
  for (int i = 0; i < 30; ++i) {
    CHECK(contains(tube.u_tight, out.plan.u_bar.col(i), 1e-7));
    CHECK((out.plan.x_bar.col(i + 1) - m.step(out.plan.x_bar.col(i), out.plan.u_bar.col(i))).norm() < 1e-8);
  }
  CHECK(contains(tube.z_ctrl, x_hat - out.plan.x_bar.col(0), 1e-7));
  const Vec u_law = p.input_box.clamp(out.plan.u_bar.col(0) + lqr.k * (x_hat - out.plan.x_bar.col(0)));
  CHECK((out.u - u_law).norm() < 1e-12);
  const RtmpcOutput cold = ctrl.step_cold(x_hat, reference_window(ref, 0, 30));
  CHECK((cold.u - out.u).norm() < 1e-8);
}

TEST_CASE("zero uncertainty gives a zero tube and untightened constraints") {
  const MultirotorParams p;
  const LinearModel m = hover_linearized_model(p, 0.1);
  const RtmpcSettings s = default_rtmpc_settings();
  const LqrSolution lqr = solve_lqr(m.a, m.b, s.q, s.r);
  TubeOptions to;
  to.mc = RpiOptions{20, 20, 1};
  const TubeDesign t = compute_tube(m, lqr.k, design_observer_gain(m, 30.0), force_disturbance_box(p, 0.1, 0.0),
                                    NoiseModel::zero().three_sigma_box(), p.state_box, p.input_box, to);
  CHECK(t.z.halfwidth().norm() == 0.0);
  CHECK(t.x_tight == p.state_box);
  CHECK(t.u_tight == p.input_box);
}

TEST_CASE("doubling the sensing noise never shrinks the tube") {
  const MultirotorParams p;
  const LinearModel m = hover_linearized_model(p, 0.1);
  const RtmpcSettings s = default_rtmpc_settings();
  const LqrSolution lqr = solve_lqr(m.a, m.b, s.q, s.r);
  const Mat l = design_observer_gain(m, 30.0);
  TubeOptions to;
  to.mc = RpiOptions{200, 100, 1};
  const IntervalBox v = NoiseModel{}.three_sigma_box();
  const IntervalBox v2 = v.inflated(2.0);
  const IntervalBox w = force_disturbance_box(p, 0.1, 0.05);
  const ErrorSystem e1 = build_error_system(m.a, m.b, m.c, lqr.k, l, w, v);
  const ErrorSystem e2 = build_error_system(m.a, m.b, m.c, lqr.k, l, w, v2);
  Rng r1 = make_rng(1, 0), r2 = make_rng(1, 0);
  const IntervalBox s1 = estimate_rpi(e1, to.mc, r1);
  const IntervalBox s2 = estimate_rpi(e2, to.mc, r2);
  // same stream, instances scale linearly with the uncertainty box
  CHECK((s2.halfwidth() - s1.halfwidth()).minCoeff() >= -1e-12);
}

TEST_CASE("an oversized disturbance makes the tube design infeasible") {
  const MultirotorParams p;
  const LinearModel m = hover_linearized_model(p, 0.1);
  const RtmpcSettings s = default_rtmpc_settings();
  const LqrSolution lqr = solve_lqr(m.a, m.b, s.q, s.r);
  TubeOptions to;
  to.mc = RpiOptions{100, 100, 1};
  CHECK_THROWS_AS(compute_tube(m, lqr.k, design_observer_gain(m, 30.0), force_disturbance_ball(p, 0.1, 1.5),
                               NoiseModel{}.three_sigma_box(), p.state_box, p.input_box, to),
                  EmptyResult);
}
