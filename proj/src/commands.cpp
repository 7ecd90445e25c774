#include "tubeil/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tubeil/dataset.hpp"

namespace tubeil {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const EmptyResult*>(&e) || dynamic_cast<const NotSchurStable*>(&e) ||
      dynamic_cast<const ReferenceViolatesConstraints*>(&e) || dynamic_cast<const SingularC*>(&e)) {
    return kExitInfeasible;
  }
  return kExitRuntime;
}

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig() : load_config(opts.config_path);
  if (opts.full_scale) apply_full_scale(cfg);
  if (opts.episode_seconds) cfg.reference.duration = *opts.episode_seconds;
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  if (const char* env = std::getenv("TUBEIL_OUT"); env && *env) cfg.output_dir = env;
  if (opts.jobs < 1) throw ConfigError("--jobs must be >= 1");
  // round trip through the strict parser so overrides are range-checked too
  return parse_config(config_to_json(cfg));
}

namespace {

fs::path out_path(const RunConfig& cfg) {
  fs::path p(cfg.output_dir);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

json box_json(const IntervalBox& b) {
  return json{{"lower", std::vector<double>(b.lower().data(), b.lower().data() + b.dim())},
              {"upper", std::vector<double>(b.upper().data(), b.upper().data() + b.dim())}};
}

std::vector<std::string> env_list(const RunConfig& cfg, const std::vector<std::string>& envs) {
  return envs.empty() ? cfg.pipeline.envs : envs;
}

std::vector<EvalRow> run_eval(const RunConfig& cfg, const PolicyNet* policy, const std::string& label,
                              const std::vector<std::string>& envs, int episodes, int jobs, std::ostream& log) {
  const Setup s = make_setup(cfg);
  const int n = episodes > 0 ? episodes : cfg.pipeline.eval_episodes;
  std::vector<EvalRow> rows;
  for (const auto& name : env_list(cfg, envs)) {
    const EnvConfig env = make_env(name, cfg.wind);
    EvalRow row{name, label, evaluate(s, env, policy, n, eval_seed(cfg.seed), jobs)};
    row.report.episodes_log.clear();
    log << label << " on " << name << ": success " << row.report.success_rate << ", expert gap "
        << format_number(row.report.expert_gap) << ", pos mse " << format_number(row.report.pos_mse) << '\n';
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string eval_csv(const std::vector<EvalRow>& rows, const RunConfig& cfg) {
  std::ostringstream os;
  os << "# config_hash " << cfg.hash() << '\n';
  os << "policy,env,seed,episodes,success_rate,expert_gap,pos_mse,vel_mse,softened_steps\n";
  for (const auto& r : rows) {
    os << r.policy << ',' << r.env << ',' << cfg.seed << ',' << r.report.episodes << ','
       << format_number(r.report.success_rate) << ',' << format_number(r.report.expert_gap) << ','
       << format_number(r.report.pos_mse) << ',' << format_number(r.report.vel_mse) << ','
       << r.report.softened_steps << '\n';
  }
  return os.str();
}

TubeDesign cmd_tube(const RunConfig& cfg, std::ostream& log) {
  const Setup s = make_setup(cfg);
  const TubeDesign& t = s.tube;
  json j;
  j["config_hash"] = cfg.hash();
  j["s_rpi"] = box_json(t.s_rpi);
  j["z"] = box_json(t.z);
  j["z_ctrl"] = box_json(t.z_ctrl);
  j["u_margin"] = box_json(t.u_margin);
  j["x_tight"] = box_json(t.x_tight);
  j["u_tight"] = box_json(t.u_tight);
  j["x_terminal"] = box_json(t.x_terminal);
  const Mat& k = s.lqr.k;
  j["lqr_gain"] = std::vector<double>(k.data(), k.data() + k.size());
  j["lqr_gain_shape"] = {k.rows(), k.cols()};
  const fs::path path = out_path(cfg) / "tube.json";
  write_text(path, j.dump(2) + "\n");
  const Eigen::IOFormat fmt(4, Eigen::DontAlignCols, " ", " ");
  log << "Z halfwidth       " << t.z.halfwidth().transpose().format(fmt) << '\n';
  log << "input margin      " << t.u_margin.halfwidth().transpose().format(fmt) << '\n';
  log << "tightened X upper " << t.x_tight.upper().transpose().format(fmt) << '\n';
  log << "tightened U upper " << t.u_tight.upper().transpose().format(fmt) << '\n';
  log << "wrote " << path.string() << '\n';
  return t;
}

std::vector<EvalRow> cmd_expert(const RunConfig& cfg, const std::vector<std::string>& envs, int episodes, int jobs,
                                std::ostream& log) {
  std::vector<EvalRow> rows = run_eval(cfg, nullptr, "expert", envs, episodes, jobs, log);
  const fs::path path = out_path(cfg) / "expert.csv";
  write_text(path, eval_csv(rows, cfg));
  log << "wrote " << path.string() << '\n';
  return rows;
}

std::string cmd_collect(const RunConfig& cfg, const CollectOptions& opts, int jobs, std::ostream& log) {
  if (opts.demos < 1) throw ConfigError("collect: --demos must be >= 1");
  const MethodSpec spec = method_spec(cfg.pipeline, opts.checkpoint.empty() ? "BC" : "DAgger", opts.augmentation);
  const Setup s = make_setup(cfg);
  std::optional<PolicyNet> learner;
  if (!opts.checkpoint.empty()) {
    if (!fs::exists(opts.checkpoint)) throw ConfigError("collect: checkpoint not found: " + opts.checkpoint);
    learner.emplace(load_checkpoint(opts.checkpoint, cfg.hash()));
  }
  const double beta = learner ? 0.0 : 1.0;
  const EnvConfig source = make_env("noise", cfg.wind);
  Dataset data(s.arch);
  int steps = 0;
  for (int k = 0; k < opts.demos; ++k) {
    const std::uint64_t ds = demo_seed(cfg.seed, k);
    EnvConfig env = source;
    if (spec.dr) {
      Rng r = make_rng(ds, 99);
      env = dr_wrap(source, cfg.wind, r);
    }
    const Demonstration d = collect_demonstration(s, env, ds, learner ? &*learner : nullptr, beta);
    steps += static_cast<int>(d.records.size());
    data.append(vsa_augment(s, d, spec.s_per_step, derive_seed(ds, 5), jobs).data);
    log << "demo " << k << ": " << d.records.size() << " steps" << (d.success ? "" : " (terminated early)") << '\n';
  }
  json meta{{"augmentation", opts.augmentation},
            {"demos", opts.demos},
            {"demo_steps", steps},
            {"beta", beta},
            {"seed", cfg.seed},
            {"checkpoint", opts.checkpoint}};
  const fs::path dir = out_path(cfg) / "dataset";
  save_dataset(dir.string(), data, cfg.hash(), meta.dump());
  log << "wrote " << data.size() << " samples to " << dir.string() << '\n';
  return dir.string();
}

std::string cmd_train(const RunConfig& cfg, const std::string& dataset_dir, std::ostream& log) {
  if (!fs::exists(fs::path(dataset_dir) / "manifest.json")) {
    throw ConfigError("train: no dataset at " + dataset_dir + " (manifest.json missing)");
  }
  const Dataset data = load_dataset(dataset_dir, cfg.hash());
  const Architecture arch = cfg.architecture();
  if (!data.same_layout(Dataset(arch))) throw ConfigError("train: dataset layout does not match the config architecture");
  PolicyNet net(arch);
  TrainOptions to;
  to.epochs = cfg.learn.epochs;
  to.batch = cfg.learn.batch;
  to.lr = cfg.learn.lr;
  to.aux_weight = cfg.learn.aux_weight;
  to.seed = derive_seed(cfg.seed, 100);
  const TrainResult r = train(net, data, to);
  json meta{{"dataset", dataset_dir}, {"samples", data.size()}, {"epochs", to.epochs}, {"seed", cfg.seed}};
  if (!r.epoch_loss.empty()) meta["final_loss"] = r.epoch_loss.back();
  const fs::path path = out_path(cfg) / "policy.ckpt";
  save_checkpoint(path.string(), net, cfg.hash(), meta.dump());
  log << "trained " << to.epochs << " epochs on " << data.size() << " samples in " << r.seconds << " s";
  if (!r.epoch_loss.empty()) log << ", final loss " << r.epoch_loss.back();
  log << "\nwrote " << path.string() << '\n';
  return path.string();
}

std::vector<EvalRow> cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                              const std::vector<std::string>& envs, int episodes, int jobs, std::ostream& log) {
  std::optional<PolicyNet> net;
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw ConfigError("eval: checkpoint not found: " + checkpoint);
    net.emplace(load_checkpoint(checkpoint, cfg.hash()));
  }
  std::vector<EvalRow> rows =
      run_eval(cfg, net ? &*net : nullptr, checkpoint.empty() ? "expert" : checkpoint, envs, episodes, jobs, log);
  const fs::path path = out_path(cfg) / "eval.csv";
  write_text(path, eval_csv(rows, cfg));
  log << "wrote " << path.string() << '\n';
  return rows;
}

GridResult cmd_reproduce(const RunConfig& cfg, int jobs, std::ostream& log) {
  const Setup s = make_setup(cfg);
  const fs::path out = out_path(cfg);
  write_text(out / "config.json", config_to_json(cfg) + "\n");
  GridResult g = run_experiment_grid(s, out.string(), jobs, [&log](const std::string& line) { log << line << '\n'; });
  log << "wrote metrics.csv, summary.csv, timings.csv to " << out.string() << '\n';
  if (!g.failures.empty()) log << g.failures.size() << " run(s) failed, see failures.txt\n";
  return g;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Tube MPC expert and sampling-augmented imitation learning toolkit", "tubeil"};
  app.require_subcommand(1);
  CommonOptions common;
  std::uint64_t seed = 0;
  double episode_seconds = 0.0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Base seed");
    sub->add_option("--jobs", common.jobs, "Worker threads (1 = serial)")->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "Output directory (TUBEIL_OUT overrides)");
    sub->add_option("--episode-seconds", episode_seconds, "Episode length in seconds")->check(CLI::PositiveNumber);
    sub->add_flag("--full-scale", common.full_scale, "30 s episodes and 640x480 rendering");
  };

  std::vector<std::string> envs;
  int episodes = 0;
  CollectOptions collect;
  std::string dataset, checkpoint;

  CLI::App* tube = app.add_subcommand("tube", "Compute and print the tube design");
  add_common(tube);
  CLI::App* expert = app.add_subcommand("expert", "Evaluate the observer and RTMPC expert");
  add_common(expert);
  expert->add_option("--env", envs, "Environments (noise, noise+wind, nominal)");
  expert->add_option("--episodes", episodes, "Episodes per environment");
  CLI::App* col = app.add_subcommand("collect", "Collect (and augment) demonstrations into a dataset");
  add_common(col);
  col->add_option("--augmentation", collect.augmentation, "none, DR or VSA-<S>");
  col->add_option("--demos", collect.demos, "Number of demonstrations")->check(CLI::PositiveNumber);
  col->add_option("--checkpoint", collect.checkpoint, "Learner checkpoint (DAgger collection)");
  CLI::App* tr = app.add_subcommand("train", "Train a policy on a dataset");
  add_common(tr);
  tr->add_option("--dataset", dataset, "Dataset directory")->required();
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a policy checkpoint (or the expert)");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Policy checkpoint; omit for the expert");
  ev->add_option("--env", envs, "Environments");
  ev->add_option("--episodes", episodes, "Episodes per environment");
  CLI::App* rep = app.add_subcommand("reproduce", "Run the full method grid and timing comparison");
  add_common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      if (sub->count("--seed")) common.seed = seed;
      if (sub->count("--episode-seconds")) common.episode_seconds = episode_seconds;
    }
    const RunConfig cfg = resolve_config(common);
    std::ostream& log = std::cout;
    log << "config hash " << cfg.hash() << '\n';
    if (tube->parsed()) {
      cmd_tube(cfg, log);
    } else if (expert->parsed()) {
      cmd_expert(cfg, envs, episodes, common.jobs, log);
    } else if (col->parsed()) {
      cmd_collect(cfg, collect, common.jobs, log);
    } else if (tr->parsed()) {
      cmd_train(cfg, dataset, log);
    } else if (ev->parsed()) {
      cmd_eval(cfg, checkpoint, envs, episodes, common.jobs, log);
    } else if (rep->parsed()) {
      const GridResult g = cmd_reproduce(cfg, common.jobs, log);
      if (!g.failures.empty()) return kExitRuntime;
    }
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    std::cerr << "error: " << e.what() << '\n';
    if (const auto* empty = dynamic_cast<const EmptyResult*>(&e)) {
      std::cerr << "emptied constraint axis " << empty->axis() << '\n';
    }
    return code;
  }
  return kExitOk;
}

}  // namespace tubeil
