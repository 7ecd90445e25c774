#include "tubeil/geometry.hpp"

#include <sstream>

#include "tubeil/parallel.hpp"

namespace tubeil {

namespace {

void require_same_dim(int a, int b, const char* op) {
  if (a != b) {
    std::ostringstream os;
    os << op << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionMismatch(os.str());
  }
}

}  // namespace

IntervalBox::IntervalBox(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  require_same_dim(static_cast<int>(lower_.size()), static_cast<int>(upper_.size()), "IntervalBox");
  if (lower_.size() == 0) throw DimensionMismatch("IntervalBox: dimension must be positive");
  for (int i = 0; i < lower_.size(); ++i) {
    if (!(lower_[i] <= upper_[i])) {
      std::ostringstream os;
      os << "IntervalBox: empty on axis " << i << " [" << lower_[i] << ", " << upper_[i] << "]";
      throw EmptyResult(os.str(), i);
    }
  }
}

IntervalBox IntervalBox::point(const Vec& c) { return IntervalBox(c, c); }

IntervalBox IntervalBox::symmetric(const Vec& halfwidth) { return IntervalBox(-halfwidth, halfwidth); }

IntervalBox IntervalBox::product(const IntervalBox& a, const IntervalBox& b) {
  Vec lo(a.dim() + b.dim());
  Vec hi(a.dim() + b.dim());
  lo << a.lower(), b.lower();
  hi << a.upper(), b.upper();
  return IntervalBox(std::move(lo), std::move(hi));
}

IntervalBox IntervalBox::segment(int start, int count) const {
  if (start < 0 || count <= 0 || start + count > dim()) {
    throw DimensionMismatch("IntervalBox::segment: range out of bounds");
  }
  return IntervalBox(lower_.segment(start, count), upper_.segment(start, count));
}

IntervalBox IntervalBox::inflated(double factor) const {
  const Vec c = center();
  const Vec h = halfwidth() * factor;
  return IntervalBox(c - h, c + h);
}

bool IntervalBox::subset_of(const IntervalBox& other, double tol) const {
  require_same_dim(dim(), other.dim(), "subset_of");
  return ((lower_.array() >= other.lower_.array() - tol).all() &&
          (upper_.array() <= other.upper_.array() + tol).all());
}

Vec IntervalBox::clamp(const Vec& x) const {
  require_same_dim(dim(), static_cast<int>(x.size()), "clamp");
  return x.cwiseMax(lower_).cwiseMin(upper_);
}

IntervalBox minkowski_sum(const IntervalBox& a, const IntervalBox& b) {
  require_same_dim(a.dim(), b.dim(), "minkowski_sum");
  return IntervalBox(a.lower() + b.lower(), a.upper() + b.upper());
}

IntervalBox pontryagin_diff(const IntervalBox& a, const IntervalBox& b) {
  require_same_dim(a.dim(), b.dim(), "pontryagin_diff");
  Vec lo = a.lower() - b.lower();
  Vec hi = a.upper() - b.upper();
  for (int i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) {
      std::ostringstream os;
      os << "pontryagin_diff: empty on axis " << i << " (subtrahend width " << b.upper()[i] - b.lower()[i]
         << " exceeds minuend width " << a.upper()[i] - a.lower()[i] << ")";
      throw EmptyResult(os.str(), i);
    }
  }
  return IntervalBox(std::move(lo), std::move(hi));
}

IntervalBox linear_map_box(const Mat& m, const IntervalBox& b) {
  require_same_dim(static_cast<int>(m.cols()), b.dim(), "linear_map_box");
  const Vec c = m * b.center();
  const Vec h = m.cwiseAbs() * b.halfwidth();
  return IntervalBox(c - h, c + h);
}

bool contains(const IntervalBox& b, const Vec& x, double tol) {
  require_same_dim(b.dim(), static_cast<int>(x.size()), "contains");
  return (x.array() >= b.lower().array() - tol).all() && (x.array() <= b.upper().array() + tol).all();
}

Vec sample_uniform(const IntervalBox& b, Rng& rng) {
  Vec x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x[i] = uniform(rng, b.lower()[i], b.upper()[i]);
  return x;
}

ErrorSystem build_error_system(const Mat& a, const Mat& b, const Mat& c, const Mat& k,
                               const Mat& l, const IntervalBox& w, const IntervalBox& v) {
  const int nx = static_cast<int>(a.rows());
  const int nu = static_cast<int>(b.cols());
  const int no = static_cast<int>(c.rows());
  require_same_dim(static_cast<int>(a.cols()), nx, "build_error_system(A)");
  require_same_dim(static_cast<int>(b.rows()), nx, "build_error_system(B)");
  require_same_dim(static_cast<int>(c.cols()), nx, "build_error_system(C)");
  require_same_dim(static_cast<int>(k.rows()), nu, "build_error_system(K rows)");
  require_same_dim(static_cast<int>(k.cols()), nx, "build_error_system(K cols)");
  require_same_dim(static_cast<int>(l.rows()), nx, "build_error_system(L rows)");
  require_same_dim(static_cast<int>(l.cols()), no, "build_error_system(L cols)");
  require_same_dim(w.dim(), nx, "build_error_system(W)");
  require_same_dim(v.dim(), no, "build_error_system(V)");

  const Mat est = a - l * c;
  const Mat ctrl = a + b * k;
  const double rho_est = spectral_radius(est);
  const double rho_ctrl = spectral_radius(ctrl);
  if (rho_est >= 1.0) {
    throw NotSchurStable("build_error_system: A - LC has spectral radius " + std::to_string(rho_est));
  }
  if (rho_ctrl >= 1.0) {
    throw NotSchurStable("build_error_system: A + BK has spectral radius " + std::to_string(rho_ctrl));
  }

  Mat a_xi = Mat::Zero(2 * nx, 2 * nx);
  a_xi.topLeftCorner(nx, nx) = est;
  a_xi.bottomLeftCorner(nx, nx) = l * c;
  a_xi.bottomRightCorner(nx, nx) = ctrl;

  Mat d_map = Mat::Zero(2 * nx, nx + no);
  d_map.topLeftCorner(nx, nx).setIdentity();
  d_map.topRightCorner(nx, no) = -l;
  d_map.bottomRightCorner(nx, no) = l;

  IntervalBox uncertainty = IntervalBox::product(w, v);
  IntervalBox d_box = linear_map_box(d_map, uncertainty);
  return ErrorSystem{std::move(a_xi), std::move(d_map), std::move(d_box), std::move(uncertainty), std::nullopt};
}

Vec ForceBall::sample(Rng& rng) const {
  const int d = static_cast<int>(map.cols());
  Vec f(d);
  do {
    for (int i = 0; i < d; ++i) f[i] = uniform(rng, -1.0, 1.0);
  } while (f.squaredNorm() > 1.0);
  return map * (radius * f);
}

IntervalBox ForceBall::bounding_box() const {
  const Vec h = radius * map.rowwise().norm();
  return IntervalBox::symmetric(h);
}

ErrorSystem build_error_system(const Mat& a, const Mat& b, const Mat& c, const Mat& k,
                               const Mat& l, const ForceBall& w, const IntervalBox& v) {
  if (w.radius < 0.0) throw Error("build_error_system: negative force radius");
  ErrorSystem sys = build_error_system(a, b, c, k, l, w.bounding_box(), v);
  sys.force_ball = w;
  return sys;
}

ErrorSystem ErrorSystem::with_box_disturbance(Mat a_xi, const IntervalBox& d) {
  if (a_xi.rows() != d.dim() || a_xi.cols() != d.dim()) {
    throw DimensionMismatch("ErrorSystem::with_box_disturbance: dimension mismatch");
  }
  Mat d_map = Mat::Identity(d.dim(), d.dim());
  return ErrorSystem{std::move(a_xi), std::move(d_map), d, d, std::nullopt};
}

IntervalBox estimate_rpi(const ErrorSystem& sys, const RpiOptions& opts, Rng& rng) {
  if (opts.n_traj < 1 || opts.horizon < 1) {
    throw Error("estimate_rpi: n_traj and horizon must be >= 1");
  }
  const int n = sys.d_box.dim();
  const int m = sys.uncertainty.dim();
  if (sys.a_xi.rows() != n || sys.d_map.rows() != n || sys.d_map.cols() != m) {
    throw DimensionMismatch("estimate_rpi: inconsistent error system");
  }
  const ForceBall* ball = sys.force_ball ? &*sys.force_ball : nullptr;
  if (ball && ball->map.rows() > m) throw DimensionMismatch("estimate_rpi: force map too tall");
  const std::uint64_t base = rng();

  std::vector<Vec> lows(opts.n_traj), highs(opts.n_traj);
  parallel_for(opts.n_traj, opts.jobs, [&](int i) {
    Rng sub = make_rng(base, static_cast<std::uint64_t>(i));
    Vec xi = Vec::Zero(n);
    Vec lo = xi, hi = xi;
    Vec next(n);
    Vec sample(m);
    const Vec& ulo = sys.uncertainty.lower();
    const Vec& uhi = sys.uncertainty.upper();
    for (int t = 0; t < opts.horizon; ++t) {
      for (int j = 0; j < m; ++j) sample[j] = uniform(sub, ulo[j], uhi[j]);
      if (ball) sample.head(ball->map.rows()) = ball->sample(sub);
      next.noalias() = sys.a_xi * xi;
      next.noalias() += sys.d_map * sample;
      xi.swap(next);
      lo = lo.cwiseMin(xi);
      hi = hi.cwiseMax(xi);
    }
    lows[i] = std::move(lo);
    highs[i] = std::move(hi);
  });

  Vec lo = Vec::Zero(n), hi = Vec::Zero(n);
  for (int i = 0; i < opts.n_traj; ++i) {
    lo = lo.cwiseMin(lows[i]);
    hi = hi.cwiseMax(highs[i]);
  }
  return IntervalBox(std::move(lo), std::move(hi));
}

}  // namespace tubeil
