#include "tubeil/common.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace tubeil {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// The standard distributions are implementation-defined; these are not, so
// streams stay reproducible across standard libraries.
double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double standard_normal(Rng& rng) {
  // Box-Muller, one draw per call (the partner value is discarded so that
  // each call consumes exactly two engine outputs).
  double u1 = 0.0;
  do {
    u1 = uniform(rng, 0.0, 1.0);
  } while (u1 <= 0.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double spectral_radius(const Mat& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace tubeil
