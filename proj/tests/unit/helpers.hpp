#pragma once

#include "tubeil/common.hpp"
#include "tubeil/geometry.hpp"

namespace testutil {

inline tubeil::Vec Vec2(double a, double b) {
  tubeil::Vec v(2);
  v << a, b;
  return v;
}

inline tubeil::Vec randu(int n, tubeil::Rng& rng, double lo, double hi) {
  tubeil::Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = tubeil::uniform(rng, lo, hi);
  return v;
}

inline tubeil::Mat randn(int rows, int cols, tubeil::Rng& rng, double scale = 1.0) {
  tubeil::Mat m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * tubeil::standard_normal(rng);
  }
  return m;
}

inline tubeil::IntervalBox random_box(int n, tubeil::Rng& rng, double max_half = 2.0) {
  const tubeil::Vec c = randu(n, rng, -3.0, 3.0);
  const tubeil::Vec h = randu(n, rng, 0.0, max_half);
  return tubeil::IntervalBox(c - h, c + h);
}

}  // namespace testutil
