#include "tubeil/estimation.hpp"

#include <cmath>

namespace tubeil {

Mat design_observer_gain(const LinearModel& model, double pole_rate) {
  const Mat& c = model.c;
  if (c.rows() != c.cols()) throw SingularC("design_observer_gain: C is not square");
  Eigen::FullPivLU<Mat> lu(c);
  if (!lu.isInvertible()) throw SingularC("design_observer_gain: C is singular");

  const double pole = std::exp(-pole_rate * model.ts);
  if (!(pole < 1.0)) {
    throw NotSchurStable("design_observer_gain: pole " + std::to_string(pole) + " is not inside the unit circle");
  }
  const Mat shifted = model.a - pole * Mat::Identity(model.nx(), model.nx());
  return shifted * lu.inverse();
}

Vec observer_step(const LinearModel& model, const Mat& l, const Vec& x_hat, const Vec& u,
                  const Vec& o_bar) {
  if (x_hat.size() != model.nx() || u.size() != model.nu() || o_bar.size() != model.no()) {
    throw DimensionMismatch("observer_step: dimension mismatch");
  }
  return model.a * x_hat + model.b * u + l * (o_bar - model.c * x_hat);
}

Observer::Observer(LinearModel model, Mat gain, Vec x_hat)
    : model_(std::move(model)), l_(std::move(gain)), x_hat_(std::move(x_hat)) {
  if (l_.rows() != model_.nx() || l_.cols() != model_.no() || x_hat_.size() != model_.nx()) {
    throw DimensionMismatch("Observer: dimension mismatch");
  }
}

const Vec& Observer::step(const Vec& u, const Vec& o_bar) {
  x_hat_ = observer_step(model_, l_, x_hat_, u, o_bar);
  return x_hat_;
}

}  // namespace tubeil
