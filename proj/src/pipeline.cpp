#include "tubeil/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "tubeil/parallel.hpp"

namespace tubeil {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------
// Setup

RtmpcController Setup::make_controller() const {
  return RtmpcController(model, lqr, tube, params.input_box, settings);
}

Setup make_setup(const RunConfig& cfg) {
  const MultirotorParams params = cfg.model;
  const LinearModel model = hover_linearized_model(params, cfg.ts);
  const RtmpcSettings settings = cfg.rtmpc_settings();
  const LqrSolution lqr = solve_lqr(model.a, model.b, settings.q, settings.r);
  const Mat l = design_observer_gain(model, cfg.tube.observer_pole_rate);

  TubeOptions to;
  to.mc = RpiOptions{cfg.tube.n_traj, cfg.tube.horizon, 1};
  to.inflation = cfg.tube.inflation;
  to.seed = cfg.tube.seed;
  const IntervalBox v = cfg.noise.three_sigma_box();
  TubeDesign tube =
      cfg.tube.force_shape == "ball"
          ? compute_tube(model, lqr.k, l, force_disturbance_ball(params, cfg.ts, cfg.tube.force_fraction), v,
                         params.state_box, params.input_box, to)
          : compute_tube(model, lqr.k, l, force_disturbance_box(params, cfg.ts, cfg.tube.force_fraction), v,
                         params.state_box, params.input_box, to);
  const double scale = lemniscate_scale_for_period(cfg.reference.period, cfg.reference.peak_speed);
  ReferenceTrajectory reference =
      lemniscate_reference(cfg.reference.duration, cfg.ts, scale, cfg.reference.peak_speed, params.state_box);
  CameraRig rig;
  rig.intr = cfg.camera;
  rig.scene = cfg.scene;
  return Setup{cfg, params, model, lqr, l, std::move(tube), settings, std::move(reference), rig, cfg.architecture()};
}

// ---------------------------------------------------------------------------
// Environments

EnvConfig make_env(const std::string& name, const WindConfig& wind) {
  EnvConfig e;
  e.name = name;
  e.wind_fraction_min = wind.fraction_min;
  e.wind_fraction_max = wind.fraction_max;
  if (name == "noise") {
    e.noise = true;
    e.wind = false;
  } else if (name == "noise+wind") {
    e.noise = true;
    e.wind = true;
  } else if (name == "nominal") {
    e.noise = false;
    e.wind = false;
  } else {
    throw ConfigError("unknown environment " + name);
  }
  return e;
}

EnvConfig dr_wrap(const EnvConfig& env, const WindConfig& wind, Rng& rng) {
  EnvConfig e = env;
  const double factor = uniform(rng, wind.dr_factor_min, wind.dr_factor_max);
  e.wind = true;
  e.wind_fraction_min = factor * wind.fraction_max;
  e.wind_fraction_max = factor * wind.fraction_max;
  e.name = env.name + "+dr";
  return e;
}

// ---------------------------------------------------------------------------
// Learner

Learner::Learner(const PolicyNet& net, const Setup& setup) : net_(net), setup_(setup) {
  if (!(net.arch() == setup.arch)) throw ShapeMismatch("Learner: policy architecture does not match the config");
}

Vec Learner::forward(const std::vector<float>& image, const Vec& o_bar, const Mat& window) const {
  const Eigen::VectorXf other = select_other(o_bar).cast<float>();
  const Eigen::VectorXf ref = encode_reference(window, setup_.cfg.learn.reference_stride).cast<float>();
  Eigen::VectorXf u, x;
  net_.forward_one(image.data(), other, ref, u, x);
  return u.cast<double>();
}

Vec Learner::act(const Vec& x_true, const Vec& o_bar, const Mat& window) const {
  std::vector<float> image(static_cast<std::size_t>(setup_.arch.image_size()));
  render_into(setup_.rig.camera_pose(x_true), setup_.rig.intr, setup_.rig.scene, image.data());
  Vec u = forward(image, o_bar, window);
  if (!u.allFinite()) u.setZero();
  return setup_.params.input_box.clamp(u);
}

// ---------------------------------------------------------------------------
// Rollouts

EpisodeResult run_episode(const Setup& s, const EnvConfig& env, std::uint64_t episode_seed,
                          const RolloutOptions& opts) {
  if (opts.beta < 1.0 && !opts.learner) throw Error("run_episode: a learner is required when beta < 1");
  const RunConfig& cfg = s.cfg;
  Rng init_rng = make_rng(episode_seed, 1);
  Rng noise_rng = make_rng(episode_seed, 2);
  Rng beta_rng = make_rng(episode_seed, 4);
  const double weight = s.params.weight();
  const WindSchedule wind = env.wind ? WindSchedule(cfg.wind.segment_duration, env.wind_fraction_min * weight,
                                                    env.wind_fraction_max * weight, derive_seed(episode_seed, 3))
                                     : WindSchedule::none();
  const NoiseModel noise = env.noise ? cfg.noise : NoiseModel::zero();

  Vec x = s.reference.at(0);
  x[idx::px] += uniform(init_rng, -cfg.pipeline.init_jitter, cfg.pipeline.init_jitter);
  x[idx::py] += uniform(init_rng, -cfg.pipeline.init_jitter, cfg.pipeline.init_jitter);

  const bool need_expert = opts.beta > 0.0 || opts.labels;
  std::optional<RtmpcController> ctrl;
  std::optional<Observer> obs;
  if (need_expert) {
    ctrl.emplace(s.make_controller());
    obs.emplace(s.model, s.observer_gain, s.reference.at(0));
  }
  std::optional<Learner> learner;
  if (opts.learner) learner.emplace(*opts.learner, s);

  const Mat& q = s.settings.q;
  const Mat& r = s.settings.r;
  const int horizon = s.settings.horizon;
  EpisodeResult res;
  for (int t = 0; t < s.steps(); ++t) {
    const Mat window = reference_window(s.reference, t, horizon);
    const Vec o = measure(x, noise, noise_rng);
    RtmpcOutput out;
    if (need_expert) {
      try {
        out = ctrl->step(obs->estimate(), window);
      } catch (const QpInfeasible& e) {
        res.success = false;
        res.expert_failed = true;
        res.expert_fail_step = t;
        res.error = ExpertInfeasible(std::string(e.what()) + " at step " + std::to_string(t), t).what();
        break;
      }
      if (out.stats.softened) ++res.softened;
    }
    const double draw = uniform(beta_rng, 0.0, 1.0);
    const bool use_expert = need_expert && draw < opts.beta;
    const Vec u = use_expert ? out.u : learner->act(x, o, window);
    if (opts.record) {
      StepRecord rec;
      rec.t = t;
      rec.x = x;
      rec.o_bar = o;
      rec.u_exec = u;
      if (need_expert) {
        rec.x_hat = obs->estimate();
        rec.u_expert = out.u;
        rec.u_bar = out.plan.u_bar.col(0);
        rec.x_bar = out.plan.x_bar.col(0);
      }
      res.records.push_back(std::move(rec));
    }
    const Vec e = x - window.col(0);
    res.cost += e.dot(q * e) + u.dot(r * u);
    res.pos_sq += e.head(3).squaredNorm();
    res.vel_sq += e.segment(3, 3).squaredNorm();
    if (need_expert) obs->step(u, o);
    x = step_nonlinear(x, u, wind.force_at(t * cfg.ts), s.params, cfg.ts);
    ++res.steps;
    if (!x.allFinite() || !contains(s.params.state_box, x)) {
      res.success = false;
      break;
    }
  }
  return res;
}

Demonstration collect_demonstration(const Setup& s, const EnvConfig& env, std::uint64_t seed,
                                    const PolicyNet* learner, double beta) {
  if (beta != 0.0 && beta != 1.0) throw Error("collect_demonstration: beta must be 0 or 1");
  if (beta == 0.0 && !learner) throw Error("collect_demonstration: beta = 0 needs a learner");
  RolloutOptions opts;
  opts.learner = learner;
  opts.beta = beta;
  opts.labels = true;
  opts.record = true;
  EpisodeResult r = run_episode(s, env, seed, opts);
  Demonstration d;
  d.records = std::move(r.records);
  d.seed = seed;
  d.env = env.name;
  d.beta = beta;
  d.success = r.success;
  return d;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentedSet vsa_augment(const Setup& s, const Demonstration& demo, int s_per_step, std::uint64_t seed, int jobs) {
  if (s_per_step < 0) throw Error("vsa_augment: s_per_step must be non-negative");
  const int n = static_cast<int>(demo.records.size());
  const int stride = s.cfg.learn.reference_stride;
  const int img = s.arch.image_size();
  const Mat& k = s.lqr.k;
  const IntervalBox& z = s.tube.z;

  struct Chunk {
    Dataset data;
    std::vector<Vec> sources, preclip;
  };
  std::vector<Chunk> chunks(static_cast<std::size_t>(n));
  parallel_for(n, jobs, [&](int t) {
    const StepRecord& rec = demo.records[static_cast<std::size_t>(t)];
    if (rec.u_bar.size() == 0 || rec.x_bar.size() == 0) throw Error("vsa_augment: demonstration has no safe pair");
    Chunk& c = chunks[static_cast<std::size_t>(t)];
    c.data = Dataset(s.arch);
    const Vec ref = encode_reference(reference_window(s.reference, rec.t, s.settings.horizon), stride);
    std::vector<float> image(static_cast<std::size_t>(img));
    render_into(s.rig.camera_pose(rec.x), s.rig.intr, s.rig.scene, image.data());
    c.data.add(image.data(), select_other(rec.o_bar), ref, rec.u_expert, rec.x);

    Rng rng = make_rng(seed, static_cast<std::uint64_t>(t));
    const IntervalBox tube_box(rec.x_bar + z.lower(), rec.x_bar + z.upper());
    for (int j = 0; j < s_per_step; ++j) {
      const Vec xp = sample_uniform(tube_box, rng);
      const Vec u_pre = rec.u_bar + k * (xp - rec.x_bar);
      const Vec u = s.params.input_box.clamp(u_pre);
      render_into(s.rig.camera_pose(xp), s.rig.intr, s.rig.scene, image.data());
      c.data.add(image.data(), select_other(xp), ref, u, xp);
      c.sources.push_back(xp);
      c.preclip.push_back(u_pre);
    }
  });

  AugmentedSet out;
  out.s_per_step = s_per_step;
  out.data = Dataset(s.arch);
  // originals first, then the tube samples in step order
  Dataset originals(s.arch), augmented(s.arch);
  for (int t = 0; t < n; ++t) {
    Chunk& c = chunks[static_cast<std::size_t>(t)];
    originals.add(c.data.images.data(), Eigen::Map<const Eigen::VectorXf>(c.data.other.data(), c.data.n_other).cast<double>(),
                  Eigen::Map<const Eigen::VectorXf>(c.data.ref.data(), c.data.n_ref).cast<double>(),
                  Eigen::Map<const Eigen::VectorXf>(c.data.u.data(), c.data.n_action).cast<double>(),
                  Eigen::Map<const Eigen::VectorXf>(c.data.x.data(), c.data.n_state).cast<double>());
    for (int j = 0; j < s_per_step; ++j) {
      const std::size_t r = static_cast<std::size_t>(j) + 1;
      augmented.images.insert(augmented.images.end(), c.data.images.begin() + static_cast<std::ptrdiff_t>(r * img),
                              c.data.images.begin() + static_cast<std::ptrdiff_t>((r + 1) * img));
      auto copy_block = [&](const std::vector<float>& src, std::vector<float>& dst, int width) {
        dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(r * width),
                   src.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
      };
      copy_block(c.data.other, augmented.other, c.data.n_other);
      copy_block(c.data.ref, augmented.ref, c.data.n_ref);
      copy_block(c.data.u, augmented.u, c.data.n_action);
      copy_block(c.data.x, augmented.x, c.data.n_state);
      out.sources.push_back(std::move(c.sources[static_cast<std::size_t>(j)]));
      out.preclip.push_back(std::move(c.preclip[static_cast<std::size_t>(j)]));
      out.steps.push_back(demo.records[static_cast<std::size_t>(t)].t);
    }
    c = Chunk{};
  }
  out.data = std::move(originals);
  out.data.append(augmented);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

bool ExpertCache::find(const std::string& env, std::uint64_t seed, EpisodeResult& out) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = map_.find({env, seed});
  if (it == map_.end()) return false;
  out = it->second;
  return true;
}

void ExpertCache::store(const std::string& env, std::uint64_t seed, const EpisodeResult& r) {
  std::lock_guard<std::mutex> lock(mutex_);
  map_[{env, seed}] = r;
}

EvalReport evaluate(const Setup& s, const EnvConfig& env, const PolicyNet* policy, int n_episodes,
                    std::uint64_t seed, int jobs, ExpertCache* cache) {
  if (n_episodes < 1) throw Error("evaluate: n_episodes must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<EpisodeResult> learner(static_cast<std::size_t>(n_episodes));
  std::vector<EpisodeResult> expert(static_cast<std::size_t>(n_episodes));
  parallel_for(n_episodes, jobs, [&](int i) {
    const std::uint64_t es = derive_seed(seed, static_cast<std::uint64_t>(i));
    EpisodeResult& ex = expert[static_cast<std::size_t>(i)];
    if (!cache || !cache->find(env.name, es, ex)) {
      RolloutOptions eo;
      eo.beta = 1.0;
      eo.labels = true;
      ex = run_episode(s, env, es, eo);
      if (cache) cache->store(env.name, es, ex);
    }
    if (policy) {
      RolloutOptions lo;
      lo.learner = policy;
      lo.beta = 0.0;
      lo.labels = false;
      learner[static_cast<std::size_t>(i)] = run_episode(s, env, es, lo);
    } else {
      learner[static_cast<std::size_t>(i)] = ex;
    }
  });

  EvalReport rep;
  rep.episodes = n_episodes;
  int ok = 0, paired = 0;
  long steps = 0;
  double gap = 0.0, pos = 0.0, vel = 0.0;
  for (int i = 0; i < n_episodes; ++i) {
    const EpisodeResult& l = learner[static_cast<std::size_t>(i)];
    const EpisodeResult& e = expert[static_cast<std::size_t>(i)];
    rep.softened_steps += l.softened;
    if (!l.success) continue;
    ++ok;
    steps += l.steps;
    pos += l.pos_sq;
    vel += l.vel_sq;
    if (e.success && e.cost > 0.0) {
      gap += (l.cost - e.cost) / e.cost;
      ++paired;
    }
  }
  rep.success_rate = static_cast<double>(ok) / n_episodes;
  rep.expert_gap = paired ? gap / paired : kNaN;
  rep.pos_mse = steps ? pos / static_cast<double>(steps) : kNaN;
  rep.vel_mse = steps ? vel / static_cast<double>(steps) : kNaN;
  rep.episodes_log = std::move(learner);
  rep.seconds = seconds_since(t0);
  return rep;
}

ContainmentReport tube_containment(const Setup& s, int n_episodes, std::uint64_t seed, int jobs) {
  if (n_episodes < 1) throw Error("tube_containment: n_episodes must be >= 1");
  const RunConfig& cfg = s.cfg;
  const bool ball = cfg.tube.force_shape == "ball";
  const ForceBall w_ball = force_disturbance_ball(s.params, cfg.ts, cfg.tube.force_fraction);
  const IntervalBox w_box = force_disturbance_box(s.params, cfg.ts, cfg.tube.force_fraction);
  std::vector<ContainmentReport> per(static_cast<std::size_t>(n_episodes));
  parallel_for(n_episodes, jobs, [&](int i) {
    const std::uint64_t es = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng init_rng = make_rng(es, 1);
    Rng noise_rng = make_rng(es, 2);
    Rng w_rng = make_rng(es, 3);
    Vec x = s.reference.at(0);
    x[idx::px] += uniform(init_rng, -cfg.pipeline.init_jitter, cfg.pipeline.init_jitter);
    x[idx::py] += uniform(init_rng, -cfg.pipeline.init_jitter, cfg.pipeline.init_jitter);
    RtmpcController ctrl = s.make_controller();
    Observer obs(s.model, s.observer_gain, s.reference.at(0));
    ContainmentReport& r = per[static_cast<std::size_t>(i)];
    r.episodes = 1;
    bool ok = true;
    for (int t = 0; t < s.steps(); ++t) {
      const Mat window = reference_window(s.reference, t, s.settings.horizon);
      const Vec o = measure(x, cfg.noise, noise_rng);
      RtmpcOutput out;
      try {
        out = ctrl.step(obs.estimate(), window);
      } catch (const QpInfeasible&) {
        ok = false;
        break;
      }
      if (out.stats.softened) ++r.softened_steps;
      ++r.steps;
      const Vec dev = x - out.plan.x_bar.col(0);
      if (contains(s.tube.z, dev, 1e-9)) ++r.contained;
      obs.step(out.u, o);
      x = s.model.step(x, out.u) + (ball ? w_ball.sample(w_rng) : sample_uniform(w_box, w_rng));
      if (!contains(s.params.state_box, x)) {
        ok = false;
        break;
      }
    }
    r.successes = ok ? 1 : 0;
  });
  ContainmentReport total;
  for (const auto& r : per) {
    total.episodes += r.episodes;
    total.successes += r.successes;
    total.steps += r.steps;
    total.contained += r.contained;
    total.softened_steps += r.softened_steps;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Experiment loop

MethodSpec method_spec(const PipelineConfig& p, const std::string& method, const std::string& augmentation) {
  if (method != "BC" && method != "DAgger") throw ConfigError("unknown method " + method);
  MethodSpec m;
  m.method = method;
  m.augmentation = augmentation;
  if (augmentation.rfind("VSA-", 0) == 0) {
    try {
      m.s_per_step = std::stoi(augmentation.substr(4));
    } catch (const std::exception&) {
      throw ConfigError("bad augmentation " + augmentation);
    }
    if (m.s_per_step <= 0) throw ConfigError("VSA sample count must be positive: " + augmentation);
    m.iterations = p.vsa_iterations;
    m.demos_per_iteration = p.vsa_demos_per_iteration;
  } else if (augmentation == "none" || augmentation == "DR") {
    m.dr = augmentation == "DR";
    m.iterations = p.iterations;
    m.demos_per_iteration = p.demos_per_iteration;
  } else {
    throw ConfigError("unknown augmentation " + augmentation);
  }
  return m;
}

std::uint64_t eval_seed(std::uint64_t seed) { return derive_seed(seed, 0xE7A1ull); }

std::uint64_t demo_seed(std::uint64_t seed, int index) {
  return derive_seed(derive_seed(seed, 0xD3B0ull), static_cast<std::uint64_t>(index));
}

MethodRun run_method(const Setup& s, const MethodSpec& spec, std::uint64_t seed, int jobs, ExpertCache* cache,
                     const Progress& progress) {
  const RunConfig& cfg = s.cfg;
  MethodRun run;
  PolicyNet net(s.arch);
  net.init(derive_seed(seed, 7));
  Dataset all(s.arch);
  const EnvConfig source = make_env("noise", cfg.wind);
  std::vector<EnvConfig> envs;
  for (const auto& name : cfg.pipeline.envs) envs.push_back(make_env(name, cfg.wind));

  const int kd = spec.demos_per_iteration;
  for (int m = 0; m < spec.iterations; ++m) {
    const auto t0 = std::chrono::steady_clock::now();
    const double beta = (spec.method == "BC" || m == 0) ? 1.0 : 0.0;
    std::vector<Demonstration> demos(static_cast<std::size_t>(kd));
    parallel_for(kd, jobs, [&](int k) {
      const std::uint64_t ds = demo_seed(seed, m * kd + k);
      EnvConfig env = source;
      if (spec.dr) {
        Rng r = make_rng(ds, 99);
        env = dr_wrap(source, cfg.wind, r);
      }
      demos[static_cast<std::size_t>(k)] = collect_demonstration(s, env, ds, beta == 0.0 ? &net : nullptr, beta);
    });
    Dataset fresh(s.arch);
    for (int k = 0; k < kd; ++k) {
      const Demonstration& d = demos[static_cast<std::size_t>(k)];
      AugmentedSet a = vsa_augment(s, d, spec.s_per_step, derive_seed(d.seed, 5), jobs);
      fresh.append(a.data);
    }
    if (run.first_batch.empty() && !fresh.empty()) {
      const int keep = std::min(fresh.size(), 16);
      std::vector<int> rows;
      // the first original and the augmented samples that follow the originals
      const int n_orig = static_cast<int>(demos.front().records.size());
      for (int i = 0; i < keep; ++i) rows.push_back(spec.vsa() ? std::min(fresh.size() - 1, n_orig + i) : i);
      run.first_batch = Dataset(s.arch);
      for (int r : rows) {
        const auto rr = static_cast<std::size_t>(r);
        auto vec = [&](const std::vector<float>& src, int w) {
          return Eigen::Map<const Eigen::VectorXf>(src.data() + rr * w, w).cast<double>().eval();
        };
        run.first_batch.add(fresh.images.data() + rr * fresh.image_size, vec(fresh.other, fresh.n_other),
                            vec(fresh.ref, fresh.n_ref), vec(fresh.u, fresh.n_action), vec(fresh.x, fresh.n_state));
      }
    }
    TrainOptions to;
    to.epochs = cfg.learn.epochs;
    to.batch = cfg.learn.batch;
    to.lr = cfg.learn.lr;
    to.aux_weight = cfg.learn.aux_weight;
    to.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(m));
    if (spec.vsa()) {
      to.incremental = m > 0;
      train(net, fresh, to);
    } else {
      all.append(fresh);
      to.incremental = false;
      train(net, all, to);
    }
    const double t_iter = seconds_since(t0);
    for (const EnvConfig& env : envs) {
      IterationRow row;
      row.method = spec.method;
      row.augmentation = spec.augmentation;
      row.env = env.name;
      row.seed = seed;
      row.iteration = m;
      row.n_demos = (m + 1) * kd;
      row.report = evaluate(s, env, &net, cfg.pipeline.eval_episodes, eval_seed(seed), jobs, cache);
      row.report.episodes_log.clear();
      row.t_iter_seconds = t_iter;
      if (progress) {
        std::ostringstream os;
        os << spec.method << "+" << spec.augmentation << " seed " << seed << " iter " << m << " " << env.name
           << ": success " << row.report.success_rate << " gap " << format_number(row.report.expert_gap)
           << " (train " << t_iter << " s)";
        progress(os.str());
      }
      run.rows.push_back(std::move(row));
    }
  }
  run.policy = std::move(net);
  return run;
}

InferenceTiming compare_inference(const Setup& s, const PolicyNet& policy, int calls, std::uint64_t seed) {
  if (calls < 1) throw Error("compare_inference: calls must be >= 1");
  const Demonstration demo = collect_demonstration(s, make_env("noise", s.cfg.wind), seed, nullptr, 1.0);
  if (demo.records.empty()) throw Error("compare_inference: expert rollout produced no steps");
  const Learner learner(policy, s);
  RtmpcController ctrl = s.make_controller();
  InferenceTiming out;
  out.calls = calls;
  std::vector<float> image(static_cast<std::size_t>(s.arch.image_size()));
  double t_policy = 0.0, t_mpc = 0.0, t_render = 0.0;
  volatile double sink = 0.0;
  for (int i = 0; i < calls; ++i) {
    const StepRecord& rec = demo.records[static_cast<std::size_t>(i) % demo.records.size()];
    if (rec.t == 0) ctrl.reset_warm_start();
    const Mat window = reference_window(s.reference, rec.t, s.settings.horizon);
    auto t0 = std::chrono::steady_clock::now();
    render_into(s.rig.camera_pose(rec.x), s.rig.intr, s.rig.scene, image.data());
    t_render += seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const Vec u = learner.forward(image, rec.o_bar, window);
    t_policy += seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const RtmpcOutput out_mpc = ctrl.step(rec.x_hat, window);
    t_mpc += seconds_since(t0);
    sink = sink + u[0] + out_mpc.u[0];
  }
  (void)sink;
  out.policy_ms = 1000.0 * t_policy / calls;
  out.rtmpc_ms = 1000.0 * t_mpc / calls;
  out.render_ms = 1000.0 * t_render / calls;
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metrics_row(const IterationRow& r) {
  std::ostringstream os;
  os << r.method << ',' << r.augmentation << ',' << r.seed << ',' << r.iteration << ',' << r.n_demos << ',' << r.env
     << ',' << format_number(r.report.success_rate) << ',' << format_number(r.report.expert_gap) << ','
     << format_number(r.report.pos_mse) << ',' << format_number(r.report.vel_mse) << ','
     << format_number(r.t_iter_seconds);
  return os.str();
}

namespace {

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '+' || c == '-') c = '_';
  }
  return s;
}

double mean_ignore_nan(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      sum += x;
      ++n;
    }
  }
  return n ? sum / n : kNaN;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

std::string summary_csv(const std::vector<IterationRow>& rows, const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.augmentation);
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  std::ostringstream os;
  os << "# config_hash " << cfg.hash() << '\n';
  os << "method,augmentation,n_demos,n_seeds";
  for (const auto& env : cfg.pipeline.envs) {
    const std::string e = sanitize(env);
    os << ",success_" << e << ",expert_gap_" << e << ",pos_mse_" << e << ",vel_mse_" << e << ",demos_to_90_" << e;
  }
  os << '\n';
  for (const auto& g : groups) {
    std::set<std::uint64_t> seeds;
    int last_iter = 0, n_demos = 0;
    for (const auto& r : rows) {
      if (r.method != g.first || r.augmentation != g.second) continue;
      seeds.insert(r.seed);
      if (r.iteration >= last_iter) {
        last_iter = r.iteration;
        n_demos = r.n_demos;
      }
    }
    os << g.first << ',' << g.second << ',' << n_demos << ',' << seeds.size();
    for (const auto& env : cfg.pipeline.envs) {
      std::vector<double> succ, gap, pos, vel;
      std::map<int, std::vector<double>> by_demos;
      for (const auto& r : rows) {
        if (r.method != g.first || r.augmentation != g.second || r.env != env) continue;
        by_demos[r.n_demos].push_back(r.report.success_rate);
        if (r.iteration != last_iter) continue;
        succ.push_back(r.report.success_rate);
        gap.push_back(r.report.expert_gap);
        pos.push_back(r.report.pos_mse);
        vel.push_back(r.report.vel_mse);
      }
      std::string to90 = "NA";
      for (const auto& [demos, s] : by_demos) {
        if (mean_ignore_nan(s) >= 0.9) {
          to90 = std::to_string(demos);
          break;
        }
      }
      os << ',' << format_number(mean_ignore_nan(succ)) << ',' << format_number(mean_ignore_nan(gap)) << ','
         << format_number(mean_ignore_nan(pos)) << ',' << format_number(mean_ignore_nan(vel)) << ',' << to90;
    }
    os << '\n';
  }
  return os.str();
}

GridResult run_experiment_grid(const Setup& s, const std::string& out_dir, int jobs, const Progress& progress) {
  const RunConfig& cfg = s.cfg;
  fs::create_directories(out_dir);
  const std::string hash = cfg.hash();
  GridResult grid;
  ExpertCache cache;
  std::optional<PolicyNet> timing_policy;
  Dataset debug_batch;
  bool debug_is_vsa = false;

  for (const auto& method : cfg.pipeline.methods) {
    for (const auto& aug : cfg.pipeline.augmentations) {
      const MethodSpec spec = method_spec(cfg.pipeline, method, aug);
      for (std::uint64_t seed : cfg.pipeline.seeds) {
        try {
          MethodRun run = run_method(s, spec, seed, jobs, &cache, progress);
          grid.rows.insert(grid.rows.end(), run.rows.begin(), run.rows.end());
          if (!timing_policy) timing_policy.emplace(run.policy);
          if ((debug_batch.empty() || (!debug_is_vsa && spec.vsa())) && !run.first_batch.empty()) {
            debug_batch = run.first_batch;
            debug_is_vsa = spec.vsa();
          }
        } catch (const std::exception& e) {
          std::ostringstream os;
          os << method << ',' << aug << ',' << seed << ": " << e.what();
          grid.failures.push_back(os.str());
          if (progress) progress("FAILED " + os.str());
        }
      }
    }
  }

  std::ostringstream metrics;
  metrics << "# config_hash " << hash << '\n' << kMetricsHeader << '\n';
  for (const auto& r : grid.rows) metrics << metrics_row(r) << '\n';
  write_text(fs::path(out_dir) / "metrics.csv", metrics.str());

  grid.summary_csv = summary_csv(grid.rows, cfg);
  write_text(fs::path(out_dir) / "summary.csv", grid.summary_csv);

  std::ostringstream timings;
  timings << "# config_hash " << hash << '\n' << "kind,method,augmentation,seed,iteration,value_ms\n";
  for (const auto& r : grid.rows) {
    if (r.env != cfg.pipeline.envs.front()) continue;
    timings << "t_iter," << r.method << ',' << r.augmentation << ',' << r.seed << ',' << r.iteration << ','
            << format_number(1000.0 * r.t_iter_seconds) << '\n';
  }
  if (timing_policy) {
    const InferenceTiming it = compare_inference(s, *timing_policy, 500, derive_seed(cfg.seed, 0x71));
    timings << "policy_forward,,,,," << format_number(it.policy_ms) << '\n';
    timings << "rtmpc_step,,,,," << format_number(it.rtmpc_ms) << '\n';
    timings << "render,,,,," << format_number(it.render_ms) << '\n';
    timings << "speedup,,,,," << format_number(it.policy_ms > 0 ? it.rtmpc_ms / it.policy_ms : 0.0) << '\n';
  }
  grid.timings_csv = timings.str();
  write_text(fs::path(out_dir) / "timings.csv", grid.timings_csv);

  std::ostringstream fails;
  for (const auto& f : grid.failures) fails << f << '\n';
  write_text(fs::path(out_dir) / "failures.txt", fails.str());

  if (!debug_batch.empty()) {
    const fs::path dbg = fs::path(out_dir) / "debug";
    fs::create_directories(dbg);
    for (int i = 0; i < debug_batch.size(); ++i) {
      Image im(cfg.camera.width, cfg.camera.height);
      std::copy_n(debug_batch.images.begin() + static_cast<std::ptrdiff_t>(i) * debug_batch.image_size,
                  debug_batch.image_size, im.pixels.begin());
      char name[32];
      std::snprintf(name, sizeof name, "sample_%02d.pgm", i);
      write_pgm((dbg / name).string(), im, "config_hash " + hash);
    }
  }
  return grid;
}

}  // namespace tubeil
