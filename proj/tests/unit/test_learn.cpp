#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "tubeil/dataset.hpp"
#include "tubeil/learn.hpp"

using namespace tubeil;
namespace fs = std::filesystem;

namespace {

Dataset random_dataset(const Architecture& arch, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  Dataset d(arch);
  std::vector<float> img(static_cast<std::size_t>(arch.image_size()));
  for (int i = 0; i < n; ++i) {
    for (float& p : img) p = static_cast<float>(uniform(rng, 0.0, 1.0));
    d.add(img.data(), testutil::randu(arch.n_other, rng, -1, 1), testutil::randu(arch.n_ref, rng, -1, 1),
          testutil::randu(arch.n_action, rng, -1, 1), testutil::randu(arch.n_state, rng, -1, 1));
  }
  return d;
}

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("architecture shapes") {
  const Architecture desk = Architecture::desk();
  CHECK(desk.image_size() == 64 * 48);
  CHECK(desk.flat_features() == 16 * 6 * 8);
  int expected = 0;
  for (const ConvShape& c : desk.conv_shapes()) expected += c.out_c * c.in_c * c.kernel * c.kernel + c.out_c;
  for (const DenseShape& d : desk.dense_shapes()) expected += d.in * d.out + d.out;
  CHECK(desk.num_params() == expected);
  const Architecture tiny = Architecture::tiny();
  CHECK(tiny.image_size() == 48);
  CHECK(tiny.num_params() < desk.num_params());
}

TEST_CASE("reference encoding samples every stride-th window column") {
  Mat w = Mat::Zero(8, 31);
  for (int j = 0; j < 31; ++j) w.col(j).setConstant(j);
  const Vec e = encode_reference(w, 3);
  CHECK(e.size() == 66);
  CHECK(e[0] == 0.0);
  CHECK(e[6] == 3.0);
  CHECK(e[65] == 30.0);
}

TEST_CASE("exact gradient matches central differences on the tiny net") {
  const Architecture arch = Architecture::tiny();
  Network<double> net(arch);
  net.init(4);
  Rng rng = make_rng(31, 0);
  for (int i = 0; i < net.num_params(); ++i) {
    if (net.theta()[i] == 0.0) net.theta()[i] = uniform(rng, -0.05, 0.05);
  }
  const Dataset d = random_dataset(arch, 5, 3);
  const auto batch = make_batch<double>(d, iota(5));
  Network<double>::V grad;
  const double loss = net.loss_and_gradient(batch, 0.1, grad);
  CHECK(loss == doctest::Approx(net.loss(batch, 0.1)).epsilon(1e-14));
  double worst = 0.0;
  for (int k = 0; k < 300; ++k) {
    const int i = static_cast<int>(uniform(rng, 0.0, net.num_params()));
    const double keep = net.theta()[i];
    net.theta()[i] = keep + 1e-5;
    const double lp = net.loss(batch, 0.1);
    net.theta()[i] = keep - 1e-5;
    const double lm = net.loss(batch, 0.1);
    net.theta()[i] = keep;
    const double fd = (lp - lm) / 2e-5;
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("single-sample forward matches the batched forward") {
  const Architecture arch = Architecture::desk();
  PolicyNet net(arch);
  net.init(5);
  const Dataset d = random_dataset(arch, 3, 4);
  const auto batch = make_batch<float>(d, iota(3));
  PolicyNet::M u, x;
  net.forward(batch, u, x);
  for (int b = 0; b < 3; ++b) {
    PolicyNet::V ub, xb;
    net.forward_one(d.images.data() + static_cast<std::size_t>(b) * d.image_size, batch.other.col(b), batch.ref.col(b),
                    ub, xb);
    CHECK((ub - u.col(b)).norm() < 1e-5f);
    CHECK((xb - x.col(b)).norm() < 1e-5f);
  }
  // float and double networks agree
  const Network<double> nd = net.cast<double>();
  Network<double>::M ud, xd;
  nd.forward(make_batch<double>(d, iota(3)), ud, xd);
  CHECK((ud.cast<float>() - u).norm() < 1e-4f);
}

TEST_CASE("first ADAM step moves each coordinate by the learning rate") {
  AdamState adam(3);
  adam.lr = 1e-3;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 1e-3;
  adam_step(adam, theta, g);
  CHECK(theta[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(theta[2] == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("training reduces the loss and is deterministic under a seed") {
  const Architecture arch = Architecture::tiny();
  const Dataset d = random_dataset(arch, 64, 6);
  TrainOptions o;
  o.epochs = 30;
  o.batch = 16;
  o.lr = 3e-3;
  o.seed = 9;
  PolicyNet a(arch), b(arch);
  const TrainResult ra = train(a, d, o);
  train(b, d, o);
  CHECK(ra.epoch_loss.back() < 0.7 * ra.epoch_loss.front());
  CHECK(a.theta() == b.theta());
  // incremental training continues from the current weights
  TrainOptions inc = o;
  inc.incremental = true;
  inc.epochs = 1;
  const PolicyNet before = a;
  train(a, d, inc);
  CHECK(a.theta() != before.theta());
  CHECK((a.theta() - before.theta()).norm() < 0.5 * before.theta().norm());
}

TEST_CASE("f32 little-endian byte layout") {
  std::ostringstream os;
  const float v[2] = {1.0f, -2.5f};
  write_f32_le(os, v, 2);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 8);
  const unsigned char expect[8] = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x20, 0xC0};
  CHECK(std::memcmp(bytes.data(), expect, 8) == 0);
  std::istringstream is(bytes);
  float back[2];
  read_f32_le(is, back, 2);
  CHECK(back[0] == 1.0f);
  CHECK(back[1] == -2.5f);
}

TEST_CASE("dataset persistence round trip is bit-exact and hash-checked") {
  const Architecture arch = Architecture::tiny();
  const Dataset d = random_dataset(arch, 9, 7);
  const fs::path dir = temp_dir("tubeil_unit_dataset");
  save_dataset(dir.string(), d, "00000000deadbeef", R"({"note": "unit"})");
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::file_size(dir / "samples.bin") == static_cast<std::uintmax_t>(9 * d.record_floats() * 4));
  const Dataset back = load_dataset(dir.string(), "00000000deadbeef");
  CHECK(back.same_layout(d));
  CHECK(back.images == d.images);
  CHECK(back.other == d.other);
  CHECK(back.ref == d.ref);
  CHECK(back.u == d.u);
  CHECK(back.x == d.x);
  CHECK_THROWS_AS(load_dataset(dir.string(), "ffffffffffffffff"), ConfigError);
  CHECK_NOTHROW(load_dataset(dir.string(), ""));
  fs::resize_file(dir / "samples.bin", fs::file_size(dir / "samples.bin") - 4);
  CHECK_THROWS(load_dataset(dir.string(), "00000000deadbeef"));
  CHECK_THROWS(load_dataset((dir / "missing").string(), ""));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bit-exact and hash-checked") {
  PolicyNet net(Architecture::tiny());
  net.init(8);
  const fs::path dir = temp_dir("tubeil_unit_ckpt");
  const std::string path = (dir / "p.ckpt").string();
  save_checkpoint(path, net, "0123456789abcdef");
  const PolicyNet back = load_checkpoint(path, "0123456789abcdef");
  CHECK(back.arch() == net.arch());
  CHECK(back.theta() == net.theta());
  CHECK_THROWS_AS(load_checkpoint(path, "aaaaaaaaaaaaaaaa"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("dataset rejects samples of the wrong shape") {
  Dataset d(Architecture::tiny());
  std::vector<float> img(48, 0.5f);
  CHECK_THROWS_AS(d.add(img.data(), Vec::Zero(4), Vec::Zero(66), Vec::Zero(3), Vec::Zero(8)), ShapeMismatch);
  Dataset other(Architecture::desk());
  CHECK_FALSE(d.same_layout(other));
}
