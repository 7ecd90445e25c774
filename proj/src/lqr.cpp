#include "tubeil/lqr.hpp"

#include <sstream>

namespace tubeil {

namespace {

Mat riccati_map(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p) {
  const Mat pa = p * a;
  const Mat btpa = b.transpose() * pa;
  const Mat gram = r + b.transpose() * p * b;
  Mat next = a.transpose() * pa - btpa.transpose() * gram.ldlt().solve(btpa) + q;
  return 0.5 * (next + next.transpose());
}

void check_shapes(const Mat& a, const Mat& b, const Mat& q, const Mat& r) {
  const auto n = a.rows();
  const auto m = b.cols();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != m || r.cols() != m) {
    throw DimensionMismatch("solve_dare: inconsistent matrix dimensions");
  }
}

}  // namespace

Mat solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r, double tol, int max_iter) {
  check_shapes(a, b, q, r);
  Mat p = 0.5 * (q + q.transpose());
  for (int it = 0; it < max_iter; ++it) {
    Mat next = riccati_map(a, b, q, r, p);
    const double step = (next - p).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
    p.swap(next);
    if (step <= tol * scale) return p;
  }
  std::ostringstream os;
  os << "solve_dare: no convergence after " << max_iter << " iterations";
  throw NoConvergence(os.str());
}

Mat lqr_gain(const Mat& a, const Mat& b, const Mat& p, const Mat& r) {
  const Mat gram = r + b.transpose() * p * b;
  Mat k = -gram.ldlt().solve(b.transpose() * p * a);
  const double rho = spectral_radius(a + b * k);
  if (rho >= 1.0) {
    throw NotStabilizing("lqr_gain: A + BK has spectral radius " + std::to_string(rho));
  }
  return k;
}

double dare_residual(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p) {
  return (p - riccati_map(a, b, q, r, p)).cwiseAbs().maxCoeff();
}

LqrSolution solve_lqr(const Mat& a, const Mat& b, const Mat& q, const Mat& r) {
  Mat p = solve_dare(a, b, q, r);
  Mat k = lqr_gain(a, b, p, r);
  return LqrSolution{std::move(p), std::move(k)};
}

}  // namespace tubeil
