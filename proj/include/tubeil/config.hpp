#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tubeil/learn.hpp"
#include "tubeil/model.hpp"
#include "tubeil/rtmpc.hpp"
#include "tubeil/sensing.hpp"
#include "tubeil/tube.hpp"

namespace tubeil {

struct TubeConfig {
  int n_traj = 2000;
  int horizon = 300;
  double inflation = 1.0;
  std::uint64_t seed = 1;
  /// Bound on the process force as a fraction of the weight.
  double force_fraction = 0.25;
  /// "ball" bounds the force magnitude, "box" every axis separately.
  std::string force_shape = "ball";
  /// Observer poles at exp(-rate * ts).
  double observer_pole_rate = 30.0;
};

struct ControllerConfig {
  Vec q_diag;
  Vec r_diag;
  int horizon = 30;
  double soft_penalty = 1e6;
  int qp_max_iter = 20000;
  double qp_feasibility_tol = 1e-10;
};

struct ReferenceConfig {
  double duration = 10.0;
  double peak_speed = 3.5;
  /// Time for one full figure-eight; sets the lemniscate scale.
  double period = 10.0;
};

struct WindConfig {
  double segment_duration = 4.0;
  double fraction_min = 0.15;
  double fraction_max = 0.20;
  /// Domain randomization factor range applied to fraction_max.
  double dr_factor_min = 0.10;
  double dr_factor_max = 1.10;
};

struct LearnConfig {
  int epochs = 50;
  int batch = 32;
  double lr = 1e-3;
  double aux_weight = 0.1;
  std::vector<ConvSpec> conv = Architecture{}.conv;
  std::vector<int> hidden = {128, 64};
  int reference_stride = 3;
};

struct PipelineConfig {
  std::vector<std::string> methods = {"BC", "DAgger"};
  std::vector<std::string> augmentations = {"none", "DR", "VSA-50", "VSA-100", "VSA-200"};
  int iterations = 15;          // M for the baselines
  int demos_per_iteration = 10;  // K for the baselines
  int vsa_iterations = 2;
  int vsa_demos_per_iteration = 1;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int eval_episodes = 20;
  double init_jitter = 0.2;
  std::vector<std::string> envs = {"noise", "noise+wind"};
};

struct RunConfig {
  MultirotorParams model;
  double ts = 0.1;
  NoiseModel noise;
  TubeConfig tube;
  ControllerConfig controller;
  ReferenceConfig reference;
  WindConfig wind;
  CameraIntrinsics camera;
  SceneModel scene;
  LearnConfig learn;
  PipelineConfig pipeline;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  RunConfig();

  Architecture architecture() const;
  RtmpcSettings rtmpc_settings() const;
  /// Canonical JSON of the resolved configuration (output_dir excluded).
  std::string canonical_json() const;
  /// 16 hex digits of FNV-1a over canonical_json().
  std::string hash() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError. Missing keys keep their defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
/// Full resolved config as pretty JSON (including output_dir).
std::string config_to_json(const RunConfig& cfg);

/// 30 s episodes and 640x480 rendering.
void apply_full_scale(RunConfig& cfg);

std::string fnv1a_hex(const std::string& text);

}  // namespace tubeil
