#include "tubeil/tube.hpp"

namespace tubeil {

IntervalBox force_disturbance_box(const MultirotorParams& params, double ts, double fraction) {
  const Mat gf = force_input_matrix(params, ts);
  const IntervalBox force = IntervalBox::symmetric(Vec::Constant(3, fraction * params.weight()));
  return linear_map_box(gf, force);
}

ForceBall force_disturbance_ball(const MultirotorParams& params, double ts, double fraction) {
  return ForceBall{force_input_matrix(params, ts), fraction * params.weight()};
}

TubeDesign tighten(const IntervalBox& s_rpi, const Mat& k, const IntervalBox& x_box,
                   const IntervalBox& u_box) {
  const int nx = static_cast<int>(k.cols());
  const int nu = static_cast<int>(k.rows());
  if (s_rpi.dim() != 2 * nx) throw DimensionMismatch("tighten: RPI set must have dimension 2 n_x");

  Mat sum_map(nx, 2 * nx);
  sum_map << Mat::Identity(nx, nx), Mat::Identity(nx, nx);
  Mat input_map = Mat::Zero(nu, 2 * nx);
  input_map.rightCols(nx) = k;

  IntervalBox z = linear_map_box(sum_map, s_rpi);
  IntervalBox u_margin = linear_map_box(input_map, s_rpi);

  auto tightened = [](const IntervalBox& set, const IntervalBox& by, const char* name) {
    try {
      return pontryagin_diff(set, by);
    } catch (const EmptyResult& e) {
      throw EmptyResult(std::string("tube tightening empties the ") + name + " constraint on axis " +
                            std::to_string(e.axis()),
                        e.axis());
    }
  };
  IntervalBox x_tight = tightened(x_box, z, "state");
  IntervalBox u_tight = tightened(u_box, u_margin, "input");
  IntervalBox z_ctrl = s_rpi.segment(nx, nx);
  return TubeDesign{s_rpi, z, z_ctrl, u_margin, x_tight, u_tight, x_tight};
}

TubeDesign compute_tube(const LinearModel& model, const Mat& k, const Mat& l, const IntervalBox& w,
                        const IntervalBox& v, const IntervalBox& x_box, const IntervalBox& u_box,
                        const TubeOptions& opts) {
  const ErrorSystem sys = build_error_system(model.a, model.b, model.c, k, l, w, v);
  Rng rng{opts.seed};
  const IntervalBox s_rpi = estimate_rpi(sys, opts.mc, rng).inflated(opts.inflation);
  return tighten(s_rpi, k, x_box, u_box);
}

TubeDesign compute_tube(const LinearModel& model, const Mat& k, const Mat& l, const ForceBall& w,
                        const IntervalBox& v, const IntervalBox& x_box, const IntervalBox& u_box,
                        const TubeOptions& opts) {
  const ErrorSystem sys = build_error_system(model.a, model.b, model.c, k, l, w, v);
  Rng rng{opts.seed};
  const IntervalBox s_rpi = estimate_rpi(sys, opts.mc, rng).inflated(opts.inflation);
  return tighten(s_rpi, k, x_box, u_box);
}

}  // namespace tubeil
