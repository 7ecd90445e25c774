#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "tubeil/config.hpp"
#include "tubeil/estimation.hpp"
#include "tubeil/learn.hpp"
#include "tubeil/rtmpc.hpp"
#include "tubeil/sensing.hpp"

namespace tubeil {

/// Everything derived from a RunConfig: model, gains, tube, reference, camera.
struct Setup {
  RunConfig cfg;
  MultirotorParams params;
  LinearModel model;
  LqrSolution lqr;
  Mat observer_gain;
  TubeDesign tube;
  RtmpcSettings settings;
  ReferenceTrajectory reference;
  CameraRig rig;
  Architecture arch;

  /// Control steps per episode (reference samples minus one).
  int steps() const { return reference.size() - 1; }
  RtmpcController make_controller() const;
};

/// Throws EmptyResult / NotSchurStable / ReferenceViolatesConstraints when the
/// configuration admits no tube design.
Setup make_setup(const RunConfig& cfg);

struct EnvConfig {
  std::string name = "noise";
  bool noise = true;
  bool wind = false;
  double wind_fraction_min = 0.15;
  double wind_fraction_max = 0.20;
};

/// "noise", "noise+wind", or "nominal" (no noise, no wind).
EnvConfig make_env(const std::string& name, const WindConfig& wind);
/// Domain randomization: wind on, magnitude factor ~ U(dr_min, dr_max) times
/// the maximum wind force, drawn once per call.
EnvConfig dr_wrap(const EnvConfig& env, const WindConfig& wind, Rng& rng);

/// Clipped policy action from (image of the true pose, noisy other, reference).
class Learner {
 public:
  Learner(const PolicyNet& net, const Setup& setup);
  Vec act(const Vec& x_true, const Vec& o_bar, const Mat& window) const;
  /// Unclipped network output only, for timing.
  Vec forward(const std::vector<float>& image, const Vec& o_bar, const Mat& window) const;

 private:
  const PolicyNet& net_;
  const Setup& setup_;
};

struct StepRecord {
  Vec x;         // true state
  Vec x_hat;     // estimate used by the expert
  Vec o_bar;     // full noisy measurement
  Vec u_exec;    // executed action
  Vec u_expert;  // expert label (clipped ancillary action)
  Vec u_bar;     // safe action u_bar*_t
  Vec x_bar;     // safe state x_bar*_t
  int t = 0;
};

struct RolloutOptions {
  const PolicyNet* learner = nullptr;
  /// Probability of executing the expert action (the collection schedule uses 0 or 1).
  double beta = 1.0;
  /// Query the expert at every step even when the learner acts.
  bool labels = true;
  bool record = false;
};

struct EpisodeResult {
  bool success = true;
  int steps = 0;
  int softened = 0;
  /// Sum over steps of |x - x_des|_Q^2 + |u|_R^2.
  double cost = 0.0;
  double pos_sq = 0.0;  // sum over steps of |p - p_des|^2
  double vel_sq = 0.0;
  bool expert_failed = false;
  int expert_fail_step = -1;
  std::string error;
  std::vector<StepRecord> records;
};

/// One lemniscate episode. Streams are derived from episode_seed so two
/// rollouts with the same seed see identical initial jitter, noise and wind.
EpisodeResult run_episode(const Setup& s, const EnvConfig& env, std::uint64_t episode_seed,
                          const RolloutOptions& opts);

struct Demonstration {
  std::vector<StepRecord> records;
  std::uint64_t seed = 0;
  std::string env;
  double beta = 1.0;
  bool success = true;
};

/// Episode with labels and records. beta must be 0 or 1; beta = 0 needs a
/// learner. ExpertInfeasible is reported through the returned records being
/// truncated (the failing step is not recorded).
Demonstration collect_demonstration(const Setup& s, const EnvConfig& env, std::uint64_t seed,
                                    const PolicyNet* learner, double beta);

struct AugmentedSet {
  Dataset data;
  std::vector<Vec> sources;   // x+ of each augmented sample (originals excluded)
  std::vector<Vec> preclip;   // u_bar + K (x+ - x_bar) before clipping
  std::vector<int> steps;     // demonstration step of each augmented sample
  int s_per_step = 0;
};

/// Original demonstration samples followed, per step, by s_per_step tube
/// samples x+ ~ U(x_bar*_t (+) Z) labelled with the clipped ancillary action.
AugmentedSet vsa_augment(const Setup& s, const Demonstration& demo, int s_per_step, std::uint64_t seed,
                         int jobs = 1);

struct EvalReport {
  int episodes = 0;
  double success_rate = 0.0;
  /// Mean relative stage-cost excess over the paired expert rollout, over
  /// episodes where both succeeded. NaN when there are none.
  double expert_gap = 0.0;
  double pos_mse = 0.0;  // mean over steps of |p - p_des|^2, successful episodes
  double vel_mse = 0.0;
  int softened_steps = 0;
  double seconds = 0.0;
  std::vector<EpisodeResult> episodes_log;  // without records
};

/// Caches paired expert rollouts keyed by (env, episode seed).
class ExpertCache {
 public:
  bool find(const std::string& env, std::uint64_t seed, EpisodeResult& out) const;
  void store(const std::string& env, std::uint64_t seed, const EpisodeResult& r);

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::uint64_t>, EpisodeResult> map_;
};

/// policy == nullptr evaluates the expert (its gap is exactly 0).
EvalReport evaluate(const Setup& s, const EnvConfig& env, const PolicyNet* policy, int n_episodes,
                    std::uint64_t seed, int jobs = 1, ExpertCache* cache = nullptr);

struct ContainmentReport {
  int episodes = 0;
  int successes = 0;
  long steps = 0;
  long contained = 0;  // steps with x - x_bar* in Z
  int softened_steps = 0;
  double fraction() const { return steps ? static_cast<double>(contained) / static_cast<double>(steps) : 0.0; }
};

/// Expert on the linear plant with process noise drawn from the design
/// disturbance set W and measurement noise from the noise model. Counts the
/// steps where the true state lies in x_bar*_t (+) Z.
ContainmentReport tube_containment(const Setup& s, int n_episodes, std::uint64_t seed, int jobs = 1);

struct MethodSpec {
  std::string method = "BC";
  std::string augmentation = "none";
  int iterations = 1;
  int demos_per_iteration = 1;
  int s_per_step = 0;  // > 0 for VSA
  bool dr = false;
  bool vsa() const { return s_per_step > 0; }
};

/// Iteration counts from the config (VSA uses its own M and K).
MethodSpec method_spec(const PipelineConfig& p, const std::string& method, const std::string& augmentation);

struct IterationRow {
  std::string method, augmentation, env;
  std::uint64_t seed = 0;
  int iteration = 0;
  int n_demos = 0;
  EvalReport report;
  double t_iter_seconds = 0.0;
};

struct MethodRun {
  std::vector<IterationRow> rows;
  PolicyNet policy{Architecture::desk()};
  /// First augmented (or plain) training batch, kept for debug images.
  Dataset first_batch;
};

using Progress = std::function<void(const std::string&)>;

/// Collect / train / evaluate loop for one method, augmentation and seed.
MethodRun run_method(const Setup& s, const MethodSpec& spec, std::uint64_t seed, int jobs,
                     ExpertCache* cache = nullptr, const Progress& progress = {});

/// Evaluation episode seeds are shared by every method of a grid seed.
std::uint64_t eval_seed(std::uint64_t seed);
/// Seed of demonstration number `index` (shared by every method).
std::uint64_t demo_seed(std::uint64_t seed, int index);

struct InferenceTiming {
  int calls = 0;
  double policy_ms = 0.0;
  double rtmpc_ms = 0.0;
  double render_ms = 0.0;
  double ratio() const { return rtmpc_ms > 0 ? policy_ms / rtmpc_ms : 0.0; }
};

/// Paired timing of policy forward passes and RTMPC steps over `calls`
/// states taken from an expert rollout.
InferenceTiming compare_inference(const Setup& s, const PolicyNet& policy, int calls, std::uint64_t seed);

// CSV helpers -----------------------------------------------------------------

inline const char* kMetricsHeader =
    "method,augmentation,seed,iteration,n_demos,env,success_rate,expert_gap,pos_mse,vel_mse,t_iter_seconds";

std::string format_number(double v);
std::string metrics_row(const IterationRow& r);

struct GridResult {
  std::vector<IterationRow> rows;
  std::vector<std::string> failures;
  std::string summary_csv;
  std::string timings_csv;
};

/// Runs every (method, augmentation, seed) of the config, writing
/// metrics.csv, summary.csv, timings.csv, failures.txt and debug PGMs into
/// out_dir. Individual failures are recorded and the grid continues.
GridResult run_experiment_grid(const Setup& s, const std::string& out_dir, int jobs,
                               const Progress& progress = {});

/// Summary table from iteration rows (no timing columns, deterministic).
std::string summary_csv(const std::vector<IterationRow>& rows, const RunConfig& cfg);

}  // namespace tubeil
