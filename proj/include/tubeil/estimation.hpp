#pragma once

#include "tubeil/model.hpp"

namespace tubeil {

/// Gain placing every eigenvalue of A - LC at exp(-pole_rate * ts). Requires
/// a square, invertible C. Throws SingularC otherwise and NotSchurStable when
/// the resulting pole is not strictly inside the unit circle.
Mat design_observer_gain(const LinearModel& model, double pole_rate);

/// Luenberger observer x_hat' = A x_hat + B u + L (o - C x_hat).
class Observer {
 public:
  Observer(LinearModel model, Mat gain, Vec x_hat);

  const Vec& estimate() const { return x_hat_; }
  const Mat& gain() const { return l_; }
  const LinearModel& model() const { return model_; }
  void reset(const Vec& x_hat) { x_hat_ = x_hat; }

  /// Propagates the estimate one step and returns the new value.
  const Vec& step(const Vec& u, const Vec& o_bar);

 private:
  LinearModel model_;
  Mat l_;
  Vec x_hat_;
};

/// Single observer update, x_hat' = A x_hat + B u + L (o_bar - C x_hat).
Vec observer_step(const LinearModel& model, const Mat& l, const Vec& x_hat, const Vec& u,
                  const Vec& o_bar);

}  // namespace tubeil
