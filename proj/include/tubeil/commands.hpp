#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tubeil/config.hpp"
#include "tubeil/pipeline.hpp"

namespace tubeil {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitInfeasible = 3, kExitRuntime = 4 };

/// Maps an exception to an exit code: ConfigError -> 2, infeasible design
/// (empty tightening, unstable gains, reference outside the tightened box) -> 3,
/// anything else -> 4.
int exit_code_for(const std::exception& e);

/// Flags shared by every subcommand.
struct CommonOptions {
  std::string config_path;  // empty: built-in defaults
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;  // empty: keep the config value
  std::optional<double> episode_seconds;
  bool full_scale = false;
};

/// Loads the config and applies the overrides in order: --full-scale,
/// --episode-seconds, --seed, --out, then the TUBEIL_OUT environment variable.
RunConfig resolve_config(const CommonOptions& opts);

/// Writes <out>/tube.json.
TubeDesign cmd_tube(const RunConfig& cfg, std::ostream& log);

struct EvalRow {
  std::string env;
  std::string policy;  // "expert" or the checkpoint path
  EvalReport report;
};

/// Expert evaluation on each env; writes <out>/expert.csv. An empty env list
/// uses the config envs; episodes <= 0 uses the config count.
std::vector<EvalRow> cmd_expert(const RunConfig& cfg, const std::vector<std::string>& envs, int episodes, int jobs,
                                std::ostream& log);

struct CollectOptions {
  std::string augmentation = "none";
  int demos = 1;
  /// Learner checkpoint. When set the learner acts (beta = 0) and the expert
  /// only labels.
  std::string checkpoint;
};

/// Writes <out>/dataset and returns its path.
std::string cmd_collect(const RunConfig& cfg, const CollectOptions& opts, int jobs, std::ostream& log);

/// Trains from scratch on <dataset>; writes <out>/policy.ckpt and returns its path.
std::string cmd_train(const RunConfig& cfg, const std::string& dataset_dir, std::ostream& log);

/// Learner evaluation (expert when checkpoint is empty); writes <out>/eval.csv.
std::vector<EvalRow> cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                              const std::vector<std::string>& envs, int episodes, int jobs, std::ostream& log);

/// Full method grid plus timing comparison into <out>.
GridResult cmd_reproduce(const RunConfig& cfg, int jobs, std::ostream& log);

std::string eval_csv(const std::vector<EvalRow>& rows, const RunConfig& cfg);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace tubeil
