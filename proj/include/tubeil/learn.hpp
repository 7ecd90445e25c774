#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tubeil/common.hpp"

namespace tubeil {

struct ConvSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
};

struct ConvShape {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kernel, stride, pad;
  int weight_offset, bias_offset;
};

struct DenseShape {
  int in, out;
  int weight_offset, bias_offset;
};

/// Conv trunk -> flatten -> concat(other, reference) -> FC stack -> action
/// and auxiliary state heads. ReLU after every conv and hidden FC layer.
struct Architecture {
  int image_width = 64;
  int image_height = 48;
  std::vector<ConvSpec> conv = {{8, 5, 2, 2}, {16, 3, 2, 1}, {16, 3, 2, 1}};
  int n_other = 5;
  int n_ref = 66;
  std::vector<int> hidden = {128, 64};
  int n_action = 3;
  int n_state = 8;

  static Architecture desk() { return Architecture{}; }
  /// Same layers on an 8x6 image (gradient checks).
  static Architecture tiny();
  static Architecture for_image(int width, int height);

  /// Throws ShapeMismatch when a conv layer would produce an empty map.
  std::vector<ConvShape> conv_shapes() const;
  std::vector<DenseShape> dense_shapes() const;  // hidden..., action head, state head
  int image_size() const { return image_width * image_height; }
  int flat_features() const;
  int num_params() const;
  bool operator==(const Architecture&) const;
};

/// Every 3rd desired state of an n_x x (N+1) window, positions and velocities.
Vec encode_reference(const Mat& window, int stride = 3);

/// Flat f32 samples; one row per sample in each block.
struct Dataset {
  int image_size = 0;
  int n_other = 5;
  int n_ref = 66;
  int n_action = 3;
  int n_state = 8;
  std::vector<float> images, other, ref, u, x;

  Dataset() = default;
  explicit Dataset(const Architecture& arch)
      : image_size(arch.image_size()), n_other(arch.n_other), n_ref(arch.n_ref), n_action(arch.n_action),
        n_state(arch.n_state) {}

  int size() const { return image_size > 0 ? static_cast<int>(images.size() / image_size) : 0; }
  bool empty() const { return size() == 0; }
  int record_floats() const { return image_size + n_other + n_ref + n_action + n_state; }
  void add(const float* image, const Vec& o, const Vec& r, const Vec& action, const Vec& state);
  void append(const Dataset& other);
  bool same_layout(const Dataset& other) const;
};

template <typename Scalar>
struct BatchT {
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  M images;  // image_size x B
  M other;   // n_other x B
  M ref;     // n_ref x B
  M u;       // targets
  M x;
  int size() const { return static_cast<int>(images.cols()); }
};

template <typename Scalar>
BatchT<Scalar> make_batch(const Dataset& data, const std::vector<int>& rows);

template <typename Scalar>
class Network {
 public:
  using V = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit Network(Architecture arch);
  Network(Architecture arch, V theta);

  const Architecture& arch() const { return arch_; }
  const V& theta() const { return theta_; }
  V& theta() { return theta_; }
  int num_params() const { return static_cast<int>(theta_.size()); }

  /// He-uniform weights, zero biases.
  void init(std::uint64_t seed);

  /// Outputs are n_action x B and n_state x B.
  void forward(const BatchT<Scalar>& batch, M& u, M& x) const;
  /// Single sample; image has image_size entries.
  void forward_one(const Scalar* image, const V& other, const V& ref, V& u, V& x) const;

  /// Mean over the batch of |u - u*|^2 + lambda |x - x*|^2.
  Scalar loss(const BatchT<Scalar>& batch, Scalar lambda) const;
  /// Loss and its exact gradient with respect to theta.
  Scalar loss_and_gradient(const BatchT<Scalar>& batch, Scalar lambda, V& grad) const;

  template <typename Other>
  Network<Other> cast() const {
    return Network<Other>(arch_, theta_.template cast<Other>());
  }

 private:
  struct Cache;
  void run(const BatchT<Scalar>& batch, Cache& cache) const;

  Architecture arch_;
  std::vector<ConvShape> conv_;
  std::vector<DenseShape> dense_;
  V theta_;
};

using PolicyNet = Network<float>;

struct AdamState {
  Eigen::VectorXf m;
  Eigen::VectorXf v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(int n = 0) : m(Eigen::VectorXf::Zero(n)), v(Eigen::VectorXf::Zero(n)) {}
};

/// Bias-corrected ADAM update of theta in place.
void adam_step(AdamState& adam, Eigen::VectorXf& theta, const Eigen::VectorXf& grad);
/// Same update in double precision (used by the hand-evaluated tests).
void adam_step(AdamState& adam, Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

struct TrainOptions {
  int epochs = 50;
  int batch = 32;
  double lr = 1e-3;
  double aux_weight = 0.1;
  std::uint64_t seed = 0;
  /// Continue from the given parameters instead of a fresh initialization.
  bool incremental = false;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  double seconds = 0.0;
};

TrainResult train(PolicyNet& net, const Dataset& data, const TrainOptions& opts);

/// JSON header line, newline, then little-endian f32 parameters.
void save_checkpoint(const std::string& path, const PolicyNet& net, const std::string& config_hash,
                     const std::string& metadata_json = "{}");
/// Throws ConfigError when the stored config hash differs from `expected_hash`
/// (unless expected_hash is empty).
PolicyNet load_checkpoint(const std::string& path, const std::string& expected_hash);

}  // namespace tubeil
