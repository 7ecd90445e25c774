#include "tubeil/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tubeil {

using json = nlohmann::json;

RunConfig::RunConfig() {
  const RtmpcSettings d = default_rtmpc_settings();
  controller.q_diag = d.q.diagonal();
  controller.r_diag = d.r.diagonal();
  controller.horizon = d.horizon;
  controller.soft_penalty = d.soft_penalty;
}

Architecture RunConfig::architecture() const {
  Architecture a = Architecture::for_image(camera.width, camera.height);
  a.conv = learn.conv;
  a.hidden = learn.hidden;
  a.n_ref = 6 * (controller.horizon / learn.reference_stride + 1);
  return a;
}

RtmpcSettings RunConfig::rtmpc_settings() const {
  RtmpcSettings s;
  s.q = controller.q_diag.asDiagonal();
  s.r = controller.r_diag.asDiagonal();
  s.horizon = controller.horizon;
  s.soft_penalty = controller.soft_penalty;
  s.qp.max_iter = controller.qp_max_iter;
  s.qp.feasibility_tol = controller.qp_feasibility_tol;
  return s;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"mass", c.model.mass},
                {"gravity", c.model.gravity},
                {"attitude_time_constant", c.model.attitude_time_constant},
                {"drag_coeff", vec_json(c.model.drag_coeff)},
                {"ts", c.ts}};
  j["constraints"] = {{"state_lower", vec_json(c.model.state_box.lower())},
                      {"state_upper", vec_json(c.model.state_box.upper())},
                      {"input_lower", vec_json(c.model.input_box.lower())},
                      {"input_upper", vec_json(c.model.input_box.upper())}};
  j["noise"] = {{"sigma3_cam", vec_json(3.0 * c.noise.sigma_cam)},
                {"sigma3_other", vec_json(3.0 * c.noise.sigma_other)}};
  j["tube"] = {{"n_traj", c.tube.n_traj},
               {"horizon", c.tube.horizon},
               {"inflation", c.tube.inflation},
               {"seed", c.tube.seed},
               {"force_fraction", c.tube.force_fraction},
               {"force_shape", c.tube.force_shape},
               {"observer_pole_rate", c.tube.observer_pole_rate}};
  j["controller"] = {{"q_diag", vec_json(c.controller.q_diag)},
                     {"r_diag", vec_json(c.controller.r_diag)},
                     {"horizon", c.controller.horizon},
                     {"soft_penalty", c.controller.soft_penalty},
                     {"qp_max_iter", c.controller.qp_max_iter},
                     {"qp_feasibility_tol", c.controller.qp_feasibility_tol}};
  j["reference"] = {{"duration", c.reference.duration},
                    {"peak_speed", c.reference.peak_speed},
                    {"period", c.reference.period}};
  j["wind"] = {{"segment_duration", c.wind.segment_duration},
               {"fraction_min", c.wind.fraction_min},
               {"fraction_max", c.wind.fraction_max},
               {"dr_factor_min", c.wind.dr_factor_min},
               {"dr_factor_max", c.wind.dr_factor_max}};
  j["camera"] = {{"fx", c.camera.fx},       {"fy", c.camera.fy},         {"cx", c.camera.cx},
                 {"cy", c.camera.cy},       {"width", c.camera.width},   {"height", c.camera.height}};
  j["scene"] = {{"seed", c.scene.seed},
                {"octaves", c.scene.octaves},
                {"base_cell", c.scene.base_cell},
                {"extent", c.scene.extent},
                {"flight_altitude", c.scene.flight_altitude}};
  json conv = json::array();
  for (const ConvSpec& s : c.learn.conv) {
    conv.push_back({{"out_channels", s.out_channels}, {"kernel", s.kernel}, {"stride", s.stride}, {"pad", s.pad}});
  }
  j["learn"] = {{"epochs", c.learn.epochs},   {"batch", c.learn.batch},   {"lr", c.learn.lr},
                {"aux_weight", c.learn.aux_weight}, {"conv", conv}, {"hidden", c.learn.hidden},
                {"reference_stride", c.learn.reference_stride}};
  j["pipeline"] = {{"methods", c.pipeline.methods},
                   {"augmentations", c.pipeline.augmentations},
                   {"iterations", c.pipeline.iterations},
                   {"demos_per_iteration", c.pipeline.demos_per_iteration},
                   {"vsa_iterations", c.pipeline.vsa_iterations},
                   {"vsa_demos_per_iteration", c.pipeline.vsa_demos_per_iteration},
                   {"seeds", c.pipeline.seeds},
                   {"eval_episodes", c.pipeline.eval_episodes},
                   {"init_jitter", c.pipeline.init_jitter},
                   {"envs", c.pipeline.envs}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

// Strict object reader: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Reader sub(const std::string& key) {
    used_.insert(key);
    return Reader(j_.at(key), path_ + "." + key);
  }

  void number(const std::string& key, double& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "must be a number");
    out = v.get<double>();
  }
  void integer(const std::string& key, int& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    out = v.get<int>();
  }
  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      fail(key, "must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  void string(const std::string& key, std::string& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "must be a string");
    out = v.get<std::string>();
  }
  void vector(const std::string& key, Vec& out, Eigen::Index size) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != size) {
      fail(key, "must be an array of " + std::to_string(size) + " numbers");
    }
    out.resize(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      const json& e = v[static_cast<std::size_t>(i)];
      if (!e.is_number()) fail(key, "must contain only numbers");
      out[i] = e.get<double>();
    }
  }
  void int_list(const std::string& key, std::vector<int>& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key, "must be an array of integers");
    out.clear();
    for (const json& e : v) {
      if (!e.is_number_integer()) fail(key, "must contain only integers");
      out.push_back(e.get<int>());
    }
  }
  void seed_list(const std::string& key, std::vector<std::uint64_t>& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key, "must be an array of non-negative integers");
    out.clear();
    for (const json& e : v) {
      if (!e.is_number_unsigned()) fail(key, "must contain only non-negative integers");
      out.push_back(e.get<std::uint64_t>());
    }
  }
  void string_list(const std::string& key, std::vector<std::string>& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key, "must be an array of strings");
    out.clear();
    for (const json& e : v) {
      if (!e.is_string()) fail(key, "must contain only strings");
      out.push_back(e.get<std::string>());
    }
  }
  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError("config: unknown key " + path_ + "." + item.key());
    }
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError("config: " + path_ + " " + what); }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: " + path_ + "." + key + " " + what);
  }

 private:
  bool take(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

bool valid_augmentation(const std::string& a) {
  if (a == "none" || a == "DR") return true;
  if (a.rfind("VSA-", 0) != 0 || a.size() == 4) return false;
  for (std::size_t i = 4; i < a.size(); ++i) {
    if (a[i] < '0' || a[i] > '9') return false;
  }
  return true;
}

IntervalBox make_box(const Vec& lo, const Vec& hi, const char* name) {
  try {
    return IntervalBox(lo, hi);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: constraints.") + name + ": " + e.what());
  }
}

void validate(const RunConfig& c) {
  require(c.model.mass > 0 && c.model.gravity > 0, "model.mass and model.gravity must be positive");
  require(c.model.attitude_time_constant > 0, "model.attitude_time_constant must be positive");
  require((c.model.drag_coeff.array() >= 0).all(), "model.drag_coeff must be non-negative");
  require(c.ts > 0, "model.ts must be positive");
  require(contains(c.model.state_box, Vec::Zero(kNx)) && contains(c.model.input_box, Vec::Zero(kNu)),
          "constraint boxes must contain the hover point");
  require((c.noise.sigma_cam.array() >= 0).all() && (c.noise.sigma_other.array() >= 0).all(),
          "noise sigmas must be non-negative");
  require(c.tube.n_traj >= 1 && c.tube.horizon >= 1, "tube.n_traj and tube.horizon must be >= 1");
  require(c.tube.inflation >= 0, "tube.inflation must be non-negative");
  require(c.tube.force_fraction >= 0, "tube.force_fraction must be non-negative");
  require(c.tube.force_shape == "ball" || c.tube.force_shape == "box", "tube.force_shape must be ball or box");
  require(c.tube.observer_pole_rate > 0, "tube.observer_pole_rate must be positive");
  require((c.controller.q_diag.array() >= 0).all(), "controller.q_diag must be non-negative");
  require((c.controller.r_diag.array() > 0).all(), "controller.r_diag must be positive");
  require(c.controller.horizon >= 1, "controller.horizon must be >= 1");
  require(c.controller.soft_penalty > 0 && c.controller.qp_max_iter > 0 && c.controller.qp_feasibility_tol > 0,
          "controller QP settings must be positive");
  require(c.reference.duration > 0 && c.reference.peak_speed > 0 && c.reference.period > 0,
          "reference values must be positive");
  require(c.wind.segment_duration > 0 && c.wind.fraction_min >= 0 && c.wind.fraction_min <= c.wind.fraction_max,
          "wind fractions must satisfy 0 <= min <= max and segment_duration > 0");
  require(c.wind.dr_factor_min >= 0 && c.wind.dr_factor_min <= c.wind.dr_factor_max,
          "wind.dr_factor range is invalid");
  c.camera.validate();
  require(c.scene.octaves >= 1 && c.scene.base_cell > 0 && c.scene.extent > 0 && c.scene.flight_altitude > 0.05,
          "scene values are invalid");
  require(c.learn.epochs >= 0 && c.learn.batch >= 1 && c.learn.lr > 0 && c.learn.aux_weight >= 0,
          "learn hyperparameters are invalid");
  require(c.learn.reference_stride >= 1, "learn.reference_stride must be >= 1");
  try {
    c.architecture().num_params();
  } catch (const Error& e) {
    throw ConfigError(std::string("config: learn architecture: ") + e.what());
  }
  for (const auto& m : c.pipeline.methods) require(m == "BC" || m == "DAgger", "unknown pipeline method " + m);
  for (const auto& a : c.pipeline.augmentations) require(valid_augmentation(a), "unknown augmentation " + a);
  for (const auto& e : c.pipeline.envs) require(e == "noise" || e == "noise+wind", "unknown environment " + e);
  require(c.pipeline.iterations >= 1 && c.pipeline.demos_per_iteration >= 1 && c.pipeline.vsa_iterations >= 1 &&
              c.pipeline.vsa_demos_per_iteration >= 1,
          "pipeline iteration counts must be >= 1");
  require(!c.pipeline.seeds.empty(), "pipeline.seeds must not be empty");
  require(c.pipeline.eval_episodes >= 1, "pipeline.eval_episodes must be >= 1");
  require(c.pipeline.init_jitter >= 0, "pipeline.init_jitter must be non-negative");
}

RunConfig from_json(const json& root) {
  RunConfig c;
  Reader r(root, "config");
  if (r.has("model")) {
    Reader m = r.sub("model");
    m.number("mass", c.model.mass);
    m.number("gravity", c.model.gravity);
    m.number("attitude_time_constant", c.model.attitude_time_constant);
    Vec drag = c.model.drag_coeff;
    m.vector("drag_coeff", drag, 3);
    c.model.drag_coeff = drag;
    m.number("ts", c.ts);
    m.finish();
  }
  c.model.input_box = MultirotorParams::default_input_box(c.model.weight());
  if (r.has("constraints")) {
    Reader k = r.sub("constraints");
    Vec sl = c.model.state_box.lower(), su = c.model.state_box.upper();
    Vec il = c.model.input_box.lower(), iu = c.model.input_box.upper();
    k.vector("state_lower", sl, kNx);
    k.vector("state_upper", su, kNx);
    k.vector("input_lower", il, kNu);
    k.vector("input_upper", iu, kNu);
    k.finish();
    c.model.state_box = make_box(sl, su, "state");
    c.model.input_box = make_box(il, iu, "input");
  }
  if (r.has("noise")) {
    Reader n = r.sub("noise");
    Vec cam = 3.0 * c.noise.sigma_cam;
    Vec other = 3.0 * c.noise.sigma_other;
    n.vector("sigma3_cam", cam, 3);
    n.vector("sigma3_other", other, 5);
    n.finish();
    c.noise.sigma_cam = cam / 3.0;
    c.noise.sigma_other = other / 3.0;
  }
  if (r.has("tube")) {
    Reader t = r.sub("tube");
    t.integer("n_traj", c.tube.n_traj);
    t.integer("horizon", c.tube.horizon);
    t.number("inflation", c.tube.inflation);
    t.unsigned_integer("seed", c.tube.seed);
    t.number("force_fraction", c.tube.force_fraction);
    t.string("force_shape", c.tube.force_shape);
    t.number("observer_pole_rate", c.tube.observer_pole_rate);
    t.finish();
  }
  if (r.has("controller")) {
    Reader k = r.sub("controller");
    k.vector("q_diag", c.controller.q_diag, kNx);
    k.vector("r_diag", c.controller.r_diag, kNu);
    k.integer("horizon", c.controller.horizon);
    k.number("soft_penalty", c.controller.soft_penalty);
    k.integer("qp_max_iter", c.controller.qp_max_iter);
    k.number("qp_feasibility_tol", c.controller.qp_feasibility_tol);
    k.finish();
  }
  if (r.has("reference")) {
    Reader k = r.sub("reference");
    k.number("duration", c.reference.duration);
    k.number("peak_speed", c.reference.peak_speed);
    k.number("period", c.reference.period);
    k.finish();
  }
  if (r.has("wind")) {
    Reader k = r.sub("wind");
    k.number("segment_duration", c.wind.segment_duration);
    k.number("fraction_min", c.wind.fraction_min);
    k.number("fraction_max", c.wind.fraction_max);
    k.number("dr_factor_min", c.wind.dr_factor_min);
    k.number("dr_factor_max", c.wind.dr_factor_max);
    k.finish();
  }
  if (r.has("camera")) {
    Reader k = r.sub("camera");
    k.number("fx", c.camera.fx);
    k.number("fy", c.camera.fy);
    k.number("cx", c.camera.cx);
    k.number("cy", c.camera.cy);
    k.integer("width", c.camera.width);
    k.integer("height", c.camera.height);
    k.finish();
  }
  if (r.has("scene")) {
    Reader k = r.sub("scene");
    k.unsigned_integer("seed", c.scene.seed);
    k.integer("octaves", c.scene.octaves);
    k.number("base_cell", c.scene.base_cell);
    k.number("extent", c.scene.extent);
    k.number("flight_altitude", c.scene.flight_altitude);
    k.finish();
  }
  if (r.has("learn")) {
    Reader k = r.sub("learn");
    k.integer("epochs", c.learn.epochs);
    k.integer("batch", c.learn.batch);
    k.number("lr", c.learn.lr);
    k.number("aux_weight", c.learn.aux_weight);
    if (k.has("conv")) {
      const json& conv = k.raw("conv");
      if (!conv.is_array()) throw ConfigError("config: config.learn.conv must be an array");
      c.learn.conv.clear();
      for (const json& layer : conv) {
        Reader l(layer, "config.learn.conv[]");
        ConvSpec s;
        l.integer("out_channels", s.out_channels);
        l.integer("kernel", s.kernel);
        l.integer("stride", s.stride);
        l.integer("pad", s.pad);
        l.finish();
        c.learn.conv.push_back(s);
      }
    }
    k.int_list("hidden", c.learn.hidden);
    k.integer("reference_stride", c.learn.reference_stride);
    k.finish();
  }
  if (r.has("pipeline")) {
    Reader k = r.sub("pipeline");
    k.string_list("methods", c.pipeline.methods);
    k.string_list("augmentations", c.pipeline.augmentations);
    k.integer("iterations", c.pipeline.iterations);
    k.integer("demos_per_iteration", c.pipeline.demos_per_iteration);
    k.integer("vsa_iterations", c.pipeline.vsa_iterations);
    k.integer("vsa_demos_per_iteration", c.pipeline.vsa_demos_per_iteration);
    k.seed_list("seeds", c.pipeline.seeds);
    k.integer("eval_episodes", c.pipeline.eval_episodes);
    k.number("init_jitter", c.pipeline.init_jitter);
    k.string_list("envs", c.pipeline.envs);
    k.finish();
  }
  r.unsigned_integer("seed", c.seed);
  r.string("output_dir", c.output_dir);
  r.finish();
  validate(c);
  return c;
}

}  // namespace

std::string RunConfig::canonical_json() const {
  json j = to_json(*this);
  j.erase("output_dir");
  return j.dump();
}

std::string RunConfig::hash() const { return fnv1a_hex(canonical_json()); }

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return from_json(root);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2); }

void apply_full_scale(RunConfig& cfg) {
  cfg.reference.duration = 30.0;
  cfg.camera = CameraIntrinsics::full_scale();
}

}  // namespace tubeil
