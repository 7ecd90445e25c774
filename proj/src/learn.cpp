#include "tubeil/learn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tubeil/dataset.hpp"

namespace tubeil {

using json = nlohmann::json;

Architecture Architecture::tiny() { return for_image(8, 6); }

Architecture Architecture::for_image(int width, int height) {
  Architecture a;
  a.image_width = width;
  a.image_height = height;
  return a;
}

std::vector<ConvShape> Architecture::conv_shapes() const {
  if (image_width <= 0 || image_height <= 0) throw ShapeMismatch("architecture: image size must be positive");
  std::vector<ConvShape> out;
  int c = 1, h = image_height, w = image_width;
  int offset = 0;
  for (const ConvSpec& s : conv) {
    if (s.out_channels <= 0 || s.kernel <= 0 || s.stride <= 0 || s.pad < 0) {
      throw ShapeMismatch("architecture: invalid conv layer");
    }
    const int oh = (h + 2 * s.pad - s.kernel) / s.stride + 1;
    const int ow = (w + 2 * s.pad - s.kernel) / s.stride + 1;
    if (h + 2 * s.pad < s.kernel || w + 2 * s.pad < s.kernel || oh <= 0 || ow <= 0) {
      throw ShapeMismatch("architecture: conv layer produces an empty feature map");
    }
    ConvShape cs{c, h, w, s.out_channels, oh, ow, s.kernel, s.stride, s.pad, offset, 0};
    offset += s.out_channels * c * s.kernel * s.kernel;
    cs.bias_offset = offset;
    offset += s.out_channels;
    out.push_back(cs);
    c = s.out_channels;
    h = oh;
    w = ow;
  }
  return out;
}

int Architecture::flat_features() const {
  const auto shapes = conv_shapes();
  if (shapes.empty()) return image_size();
  const ConvShape& last = shapes.back();
  return last.out_c * last.out_h * last.out_w;
}

std::vector<DenseShape> Architecture::dense_shapes() const {
  const auto shapes = conv_shapes();
  int offset = shapes.empty() ? 0 : shapes.back().bias_offset + shapes.back().out_c;
  std::vector<DenseShape> out;
  int in = flat_features() + n_other + n_ref;
  auto add = [&](int in_dim, int out_dim) {
    if (out_dim <= 0) throw ShapeMismatch("architecture: dense layer width must be positive");
    DenseShape d{in_dim, out_dim, offset, offset + in_dim * out_dim};
    offset += in_dim * out_dim + out_dim;
    out.push_back(d);
  };
  for (int h : hidden) {
    add(in, h);
    in = h;
  }
  add(in, n_action);
  add(in, n_state);
  return out;
}

int Architecture::num_params() const {
  const auto d = dense_shapes();
  return d.back().bias_offset + d.back().out;
}

bool Architecture::operator==(const Architecture& o) const {
  if (conv.size() != o.conv.size()) return false;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const ConvSpec& a = conv[i];
    const ConvSpec& b = o.conv[i];
    if (a.out_channels != b.out_channels || a.kernel != b.kernel || a.stride != b.stride || a.pad != b.pad) {
      return false;
    }
  }
  return image_width == o.image_width && image_height == o.image_height && n_other == o.n_other &&
         n_ref == o.n_ref && hidden == o.hidden && n_action == o.n_action && n_state == o.n_state;
}

Vec encode_reference(const Mat& window, int stride) {
  if (window.rows() < 6 || stride <= 0) throw DimensionMismatch("encode_reference: bad window");
  const int n = static_cast<int>((window.cols() - 1) / stride) + 1;
  Vec out(6 * n);
  for (int i = 0; i < n; ++i) out.segment(6 * i, 6) = window.col(i * stride).head(6);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::add(const float* image, const Vec& o, const Vec& r, const Vec& action, const Vec& state) {
  if (o.size() != n_other || r.size() != n_ref || action.size() != n_action || state.size() != n_state) {
    throw ShapeMismatch("Dataset::add: sample shape does not match the layout");
  }
  images.insert(images.end(), image, image + image_size);
  for (int i = 0; i < n_other; ++i) other.push_back(static_cast<float>(o[i]));
  for (int i = 0; i < n_ref; ++i) ref.push_back(static_cast<float>(r[i]));
  for (int i = 0; i < n_action; ++i) u.push_back(static_cast<float>(action[i]));
  for (int i = 0; i < n_state; ++i) x.push_back(static_cast<float>(state[i]));
}

bool Dataset::same_layout(const Dataset& o) const {
  return image_size == o.image_size && n_other == o.n_other && n_ref == o.n_ref && n_action == o.n_action &&
         n_state == o.n_state;
}

void Dataset::append(const Dataset& o) {
  if (o.empty()) return;
  if (image_size == 0) {
    *this = o;
    return;
  }
  if (!same_layout(o)) throw ShapeMismatch("Dataset::append: layout mismatch");
  images.insert(images.end(), o.images.begin(), o.images.end());
  other.insert(other.end(), o.other.begin(), o.other.end());
  ref.insert(ref.end(), o.ref.begin(), o.ref.end());
  u.insert(u.end(), o.u.begin(), o.u.end());
  x.insert(x.end(), o.x.begin(), o.x.end());
}

template <typename Scalar>
BatchT<Scalar> make_batch(const Dataset& data, const std::vector<int>& rows) {
  BatchT<Scalar> b;
  const int n = static_cast<int>(rows.size());
  b.images.resize(data.image_size, n);
  b.other.resize(data.n_other, n);
  b.ref.resize(data.n_ref, n);
  b.u.resize(data.n_action, n);
  b.x.resize(data.n_state, n);
  auto copy = [](const std::vector<float>& src, int width, int row, auto& dst, int col) {
    const float* p = src.data() + static_cast<std::size_t>(row) * width;
    for (int i = 0; i < width; ++i) dst(i, col) = static_cast<Scalar>(p[i]);
  };
  for (int j = 0; j < n; ++j) {
    const int r = rows[static_cast<std::size_t>(j)];
    if (r < 0 || r >= data.size()) throw ShapeMismatch("make_batch: row out of range");
    copy(data.images, data.image_size, r, b.images, j);
    copy(data.other, data.n_other, r, b.other, j);
    copy(data.ref, data.n_ref, r, b.ref, j);
    copy(data.u, data.n_action, r, b.u, j);
    copy(data.x, data.n_state, r, b.x, j);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Network

namespace {

// Activations are C x (B * H * W), column j = b * H * W + y * W + x.
template <typename M>
void im2col(const typename M::Scalar* in, int batch, const ConvShape& s, M& col) {
  const int k2 = s.kernel * s.kernel;
  const int rows = s.in_c * k2;
  const int in_hw = s.in_h * s.in_w;
  const int out_hw = s.out_h * s.out_w;
  col.resize(rows, static_cast<Eigen::Index>(batch) * out_hw);
  auto* dst = col.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        auto* cj = dst + (static_cast<std::size_t>(b) * out_hw + oy * s.out_w + ox) * rows;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            const int r0 = ky * s.kernel + kx;
            if (iy < 0 || iy >= s.in_h || ix < 0 || ix >= s.in_w) {
              for (int c = 0; c < s.in_c; ++c) cj[c * k2 + r0] = 0;
            } else {
              const auto* src = in + (static_cast<std::size_t>(b) * in_hw + iy * s.in_w + ix) * s.in_c;
              for (int c = 0; c < s.in_c; ++c) cj[c * k2 + r0] = src[c];
            }
          }
        }
      }
    }
  }
}

template <typename M>
void col2im(const M& col, int batch, const ConvShape& s, typename M::Scalar* out) {
  const int k2 = s.kernel * s.kernel;
  const int rows = s.in_c * k2;
  const int in_hw = s.in_h * s.in_w;
  const int out_hw = s.out_h * s.out_w;
  std::fill(out, out + static_cast<std::size_t>(batch) * in_hw * s.in_c, typename M::Scalar(0));
  const auto* src = col.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        const auto* cj = src + (static_cast<std::size_t>(b) * out_hw + oy * s.out_w + ox) * rows;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            auto* dst = out + (static_cast<std::size_t>(b) * in_hw + iy * s.in_w + ix) * s.in_c;
            const int r0 = ky * s.kernel + kx;
            for (int c = 0; c < s.in_c; ++c) dst[c] += cj[c * k2 + r0];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
struct Network<Scalar>::Cache {
  std::vector<M> cols;  // im2col of each conv input
  std::vector<M> acts;  // conv outputs after ReLU
  M fc_in;
  std::vector<M> hidden;  // hidden FC outputs after ReLU
  M u, x;
};

template <typename Scalar>
Network<Scalar>::Network(Architecture arch)
    : arch_(std::move(arch)), conv_(arch_.conv_shapes()), dense_(arch_.dense_shapes()),
      theta_(V::Zero(arch_.num_params())) {}

template <typename Scalar>
Network<Scalar>::Network(Architecture arch, V theta)
    : arch_(std::move(arch)), conv_(arch_.conv_shapes()), dense_(arch_.dense_shapes()), theta_(std::move(theta)) {
  if (theta_.size() != arch_.num_params()) {
    throw ShapeMismatch("Network: parameter count " + std::to_string(theta_.size()) + " does not match architecture (" +
                        std::to_string(arch_.num_params()) + ")");
  }
}

template <typename Scalar>
void Network<Scalar>::init(std::uint64_t seed) {
  Rng rng{seed};
  theta_.setZero();
  for (const ConvShape& s : conv_) {
    const int fan_in = s.in_c * s.kernel * s.kernel;
    const double lim = std::sqrt(6.0 / fan_in);
    for (int i = 0; i < s.out_c * fan_in; ++i) theta_[s.weight_offset + i] = static_cast<Scalar>(uniform(rng, -lim, lim));
  }
  for (const DenseShape& d : dense_) {
    const double lim = std::sqrt(6.0 / d.in);
    for (int i = 0; i < d.in * d.out; ++i) theta_[d.weight_offset + i] = static_cast<Scalar>(uniform(rng, -lim, lim));
  }
}

template <typename Scalar>
void Network<Scalar>::run(const BatchT<Scalar>& batch, Cache& cache) const {
  const int bsz = batch.size();
  if (bsz == 0) throw ShapeMismatch("Network: empty batch");
  if (batch.images.rows() != arch_.image_size() || batch.other.rows() != arch_.n_other ||
      batch.ref.rows() != arch_.n_ref || batch.other.cols() != bsz || batch.ref.cols() != bsz) {
    throw ShapeMismatch("Network: input shapes do not match the architecture");
  }
  cache.cols.resize(conv_.size());
  cache.acts.resize(conv_.size());
  const Scalar* in = batch.images.data();
  for (std::size_t l = 0; l < conv_.size(); ++l) {
    const ConvShape& s = conv_[l];
    im2col(in, bsz, s, cache.cols[l]);
    Eigen::Map<const M> w(theta_.data() + s.weight_offset, s.out_c, s.in_c * s.kernel * s.kernel);
    Eigen::Map<const V> b(theta_.data() + s.bias_offset, s.out_c);
    M& a = cache.acts[l];
    a.noalias() = w * cache.cols[l];
    a.colwise() += b;
    a = a.cwiseMax(Scalar(0));
    in = a.data();
  }
  const int flat = arch_.flat_features();
  cache.fc_in.resize(flat + arch_.n_other + arch_.n_ref, bsz);
  cache.fc_in.topRows(flat) = Eigen::Map<const M>(in, flat, bsz);
  cache.fc_in.middleRows(flat, arch_.n_other) = batch.other;
  cache.fc_in.bottomRows(arch_.n_ref) = batch.ref;

  const std::size_t nh = arch_.hidden.size();
  cache.hidden.resize(nh);
  const M* h = &cache.fc_in;
  for (std::size_t l = 0; l < nh; ++l) {
    const DenseShape& d = dense_[l];
    Eigen::Map<const M> w(theta_.data() + d.weight_offset, d.out, d.in);
    Eigen::Map<const V> b(theta_.data() + d.bias_offset, d.out);
    cache.hidden[l].noalias() = w * *h;
    cache.hidden[l].colwise() += b;
    cache.hidden[l] = cache.hidden[l].cwiseMax(Scalar(0));
    h = &cache.hidden[l];
  }
  auto head = [&](const DenseShape& d, M& out) {
    Eigen::Map<const M> w(theta_.data() + d.weight_offset, d.out, d.in);
    Eigen::Map<const V> b(theta_.data() + d.bias_offset, d.out);
    out.noalias() = w * *h;
    out.colwise() += b;
  };
  head(dense_[nh], cache.u);
  head(dense_[nh + 1], cache.x);
}

template <typename Scalar>
void Network<Scalar>::forward(const BatchT<Scalar>& batch, M& u, M& x) const {
  Cache cache;
  run(batch, cache);
  u = std::move(cache.u);
  x = std::move(cache.x);
}

template <typename Scalar>
void Network<Scalar>::forward_one(const Scalar* image, const V& other, const V& ref, V& u, V& x) const {
  BatchT<Scalar> b;
  b.images = Eigen::Map<const M>(image, arch_.image_size(), 1);
  b.other = other;
  b.ref = ref;
  M mu, mx;
  forward(b, mu, mx);
  u = mu.col(0);
  x = mx.col(0);
}

template <typename Scalar>
Scalar Network<Scalar>::loss(const BatchT<Scalar>& batch, Scalar lambda) const {
  Cache cache;
  run(batch, cache);
  if (batch.u.rows() != arch_.n_action || batch.x.rows() != arch_.n_state || batch.u.cols() != batch.size() ||
      batch.x.cols() != batch.size()) {
    throw ShapeMismatch("Network::loss: target shapes do not match");
  }
  return ((cache.u - batch.u).squaredNorm() + lambda * (cache.x - batch.x).squaredNorm()) /
         static_cast<Scalar>(batch.size());
}

template <typename Scalar>
Scalar Network<Scalar>::loss_and_gradient(const BatchT<Scalar>& batch, Scalar lambda, V& grad) const {
  Cache cache;
  run(batch, cache);
  const int bsz = batch.size();
  if (batch.u.rows() != arch_.n_action || batch.x.rows() != arch_.n_state || batch.u.cols() != bsz ||
      batch.x.cols() != bsz) {
    throw ShapeMismatch("Network::loss_and_gradient: target shapes do not match");
  }
  const M eu = cache.u - batch.u;
  const M ex = cache.x - batch.x;
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(bsz);
  const Scalar value = (eu.squaredNorm() + lambda * ex.squaredNorm()) * inv_b;

  grad = V::Zero(theta_.size());
  const std::size_t nh = arch_.hidden.size();
  const M& h_last = nh ? cache.hidden.back() : cache.fc_in;

  M du = (Scalar(2) * inv_b) * eu;
  M dx = (Scalar(2) * lambda * inv_b) * ex;
  M dh;
  {
    const DenseShape& du_s = dense_[nh];
    const DenseShape& dx_s = dense_[nh + 1];
    Eigen::Map<M>(grad.data() + du_s.weight_offset, du_s.out, du_s.in).noalias() = du * h_last.transpose();
    Eigen::Map<V>(grad.data() + du_s.bias_offset, du_s.out) = du.rowwise().sum();
    Eigen::Map<M>(grad.data() + dx_s.weight_offset, dx_s.out, dx_s.in).noalias() = dx * h_last.transpose();
    Eigen::Map<V>(grad.data() + dx_s.bias_offset, dx_s.out) = dx.rowwise().sum();
    Eigen::Map<const M> wu(theta_.data() + du_s.weight_offset, du_s.out, du_s.in);
    Eigen::Map<const M> wx(theta_.data() + dx_s.weight_offset, dx_s.out, dx_s.in);
    dh.noalias() = wu.transpose() * du;
    dh.noalias() += wx.transpose() * dx;
  }
  for (std::size_t l = nh; l-- > 0;) {
    const DenseShape& d = dense_[l];
    const M& out = cache.hidden[l];
    dh = (out.array() > Scalar(0)).select(dh, Scalar(0));
    const M& in = l ? cache.hidden[l - 1] : cache.fc_in;
    Eigen::Map<M>(grad.data() + d.weight_offset, d.out, d.in).noalias() = dh * in.transpose();
    Eigen::Map<V>(grad.data() + d.bias_offset, d.out) = dh.rowwise().sum();
    Eigen::Map<const M> w(theta_.data() + d.weight_offset, d.out, d.in);
    M prev;
    prev.noalias() = w.transpose() * dh;
    dh = std::move(prev);
  }
  if (conv_.empty()) return value;

  // dh now holds d(loss)/d(fc_in); the flat block maps back onto the last conv map.
  const int flat = arch_.flat_features();
  M da = dh.topRows(flat);
  for (std::size_t l = conv_.size(); l-- > 0;) {
    const ConvShape& s = conv_[l];
    const M& act = cache.acts[l];
    Eigen::Map<M> dz(da.data(), s.out_c, static_cast<Eigen::Index>(bsz) * s.out_h * s.out_w);
    dz = (act.array() > Scalar(0)).select(dz, Scalar(0));
    const int fan = s.in_c * s.kernel * s.kernel;
    Eigen::Map<M>(grad.data() + s.weight_offset, s.out_c, fan).noalias() = dz * cache.cols[l].transpose();
    Eigen::Map<V>(grad.data() + s.bias_offset, s.out_c) = dz.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const M> w(theta_.data() + s.weight_offset, s.out_c, fan);
    M dcol;
    dcol.noalias() = w.transpose() * dz;
    M din(s.in_c, static_cast<Eigen::Index>(bsz) * s.in_h * s.in_w);
    col2im(dcol, bsz, s, din.data());
    da = std::move(din);
  }
  return value;
}

template class Network<float>;
template class Network<double>;
template BatchT<float> make_batch<float>(const Dataset&, const std::vector<int>&);
template BatchT<double> make_batch<double>(const Dataset&, const std::vector<int>&);

// ---------------------------------------------------------------------------
// Optimization

namespace {

template <typename VecT>
void adam_update(AdamState& adam, VecT& theta, const VecT& grad) {
  using S = typename VecT::Scalar;
  if (theta.size() != grad.size()) throw ShapeMismatch("adam_step: gradient size mismatch");
  if (adam.m.size() != theta.size()) {
    if (adam.step != 0 || adam.m.size() != 0) throw ShapeMismatch("adam_step: moment size mismatch");
    adam.m = Eigen::VectorXf::Zero(theta.size());
    adam.v = Eigen::VectorXf::Zero(theta.size());
  }
  ++adam.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  const auto b1 = static_cast<float>(adam.beta1);
  const auto b2 = static_cast<float>(adam.beta2);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const auto g = static_cast<float>(grad[i]);
    adam.m[i] = b1 * adam.m[i] + (1.0f - b1) * g;
    adam.v[i] = b2 * adam.v[i] + (1.0f - b2) * g * g;
    const double mh = adam.m[i] / c1;
    const double vh = adam.v[i] / c2;
    theta[i] -= static_cast<S>(adam.lr * mh / (std::sqrt(vh) + adam.eps));
  }
}

}  // namespace

void adam_step(AdamState& adam, Eigen::VectorXf& theta, const Eigen::VectorXf& grad) {
  adam_update(adam, theta, grad);
}

void adam_step(AdamState& adam, Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  adam_update(adam, theta, grad);
}

TrainResult train(PolicyNet& net, const Dataset& data, const TrainOptions& opts) {
  if (data.empty()) throw Error("train: empty dataset");
  if (opts.epochs < 0 || opts.batch <= 0) throw ConfigError("train: epochs >= 0 and batch > 0 required");
  if (data.image_size != net.arch().image_size() || data.n_other != net.arch().n_other ||
      data.n_ref != net.arch().n_ref) {
    throw ShapeMismatch("train: dataset layout does not match the network");
  }
  const auto start = std::chrono::steady_clock::now();
  Rng rng = make_rng(opts.seed, 0);
  if (!opts.incremental) net.init(derive_seed(opts.seed, 1));
  AdamState adam(net.num_params());
  adam.lr = opts.lr;

  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  Eigen::VectorXf grad;
  const auto lambda = static_cast<float>(opts.aux_weight);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // Fisher-Yates with our own uniform so the order does not depend on the
    // standard library's shuffle.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(opts.batch)) {
      const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(opts.batch));
      const std::vector<int> rows(order.begin() + static_cast<std::ptrdiff_t>(s),
                                  order.begin() + static_cast<std::ptrdiff_t>(e));
      const BatchT<float> batch = make_batch<float>(data, rows);
      const float l = net.loss_and_gradient(batch, lambda, grad);
      total += static_cast<double>(l) * static_cast<double>(rows.size());
      adam_step(adam, net.theta(), grad);
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json arch_to_json(const Architecture& a) {
  json conv = json::array();
  for (const ConvSpec& c : a.conv) {
    conv.push_back({{"out_channels", c.out_channels}, {"kernel", c.kernel}, {"stride", c.stride}, {"pad", c.pad}});
  }
  return {{"image_width", a.image_width}, {"image_height", a.image_height}, {"conv", conv},
          {"n_other", a.n_other},         {"n_ref", a.n_ref},               {"hidden", a.hidden},
          {"n_action", a.n_action},       {"n_state", a.n_state}};
}

Architecture arch_from_json(const json& j) {
  Architecture a;
  a.image_width = j.at("image_width").get<int>();
  a.image_height = j.at("image_height").get<int>();
  a.conv.clear();
  for (const json& c : j.at("conv")) {
    a.conv.push_back({c.at("out_channels").get<int>(), c.at("kernel").get<int>(), c.at("stride").get<int>(),
                      c.at("pad").get<int>()});
  }
  a.n_other = j.at("n_other").get<int>();
  a.n_ref = j.at("n_ref").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.n_action = j.at("n_action").get<int>();
  a.n_state = j.at("n_state").get<int>();
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyNet& net, const std::string& config_hash,
                     const std::string& metadata_json) {
  json header;
  header["format"] = "tubeil-policy";
  header["version"] = 1;
  header["config_hash"] = config_hash;
  header["architecture"] = arch_to_json(net.arch());
  header["num_params"] = net.num_params();
  header["metadata"] = json::parse(metadata_json);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_checkpoint: cannot open " + path);
  out << header.dump() << '\n';
  write_f32_le(out, net.theta().data(), static_cast<std::size_t>(net.num_params()));
  if (!out) throw Error("save_checkpoint: write failed for " + path);
}

PolicyNet load_checkpoint(const std::string& path, const std::string& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_checkpoint: cannot open " + path);
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error("load_checkpoint: bad header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "tubeil-policy") throw Error("load_checkpoint: not a policy checkpoint: " + path);
  const std::string hash = header.at("config_hash").get<std::string>();
  if (!expected_hash.empty() && hash != expected_hash) {
    throw ConfigError("load_checkpoint: config hash " + hash + " in " + path + " does not match " + expected_hash);
  }
  const Architecture arch = arch_from_json(header.at("architecture"));
  const int n = header.at("num_params").get<int>();
  if (n != arch.num_params()) throw ShapeMismatch("load_checkpoint: parameter count does not match architecture");
  Eigen::VectorXf theta(n);
  read_f32_le(in, theta.data(), static_cast<std::size_t>(n));
  if (!in) throw Error("load_checkpoint: truncated parameter blob in " + path);
  return PolicyNet(arch, std::move(theta));
}

}  // namespace tubeil
