#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tubeil {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Random stream used everywhere randomness is consumed. Fixed engine so that
/// results are reproducible for a given seed on a given standard library.
using Rng = std::mt19937_64;

/// Derives an independent sub-stream seed from a base seed and a stream index.
/// SplitMix64 finalizer over (base, index); stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

inline Rng make_rng(std::uint64_t base, std::uint64_t index) {
  return Rng{derive_seed(base, index)};
}

double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);

/// Largest absolute eigenvalue.
double spectral_radius(const Mat& m);

// ---------------------------------------------------------------------------
// Error types. Every failure mode that a caller can act on has its own type.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A Pontryagin difference (or constraint tightening) produced an empty box.
class EmptyResult : public Error {
 public:
  EmptyResult(const std::string& what, int axis) : Error(what), axis_(axis) {}
  int axis() const { return axis_; }

 private:
  int axis_;
};

class NotSchurStable : public Error {
 public:
  using Error::Error;
};

/// The LQR gain does not stabilize A + BK.
class NotStabilizing : public NotSchurStable {
 public:
  using NotSchurStable::NotSchurStable;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class SingularC : public Error {
 public:
  using Error::Error;
};

class CameraBelowPlane : public Error {
 public:
  using Error::Error;
};

class ReferenceViolatesConstraints : public Error {
 public:
  using Error::Error;
};

class QpInfeasible : public Error {
 public:
  using Error::Error;
};

class ExpertInfeasible : public Error {
 public:
  ExpertInfeasible(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace tubeil
