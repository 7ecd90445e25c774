#pragma once

#include "tubeil/common.hpp"

namespace tubeil {

struct LqrSolution {
  Mat p;  ///< cost-to-go
  Mat k;  ///< feedback gain, u = K x
};

/// Solves P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q by fixed-point iteration from
/// P_0 = Q. Stops when max|P_{k+1} - P_k| <= tol * max(1, max|P_k|).
/// Throws NoConvergence after max_iter iterations.
Mat solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r, double tol = 1e-13,
               int max_iter = 200000);

/// K = -(R + B'PB)^-1 B'PA. Throws NotStabilizing when A + BK is not Schur.
Mat lqr_gain(const Mat& a, const Mat& b, const Mat& p, const Mat& r);

/// Elementwise max of P - Ric(P).
double dare_residual(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p);

LqrSolution solve_lqr(const Mat& a, const Mat& b, const Mat& q, const Mat& r);

}  // namespace tubeil
