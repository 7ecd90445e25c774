// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Usage: tubeil_acceptance [N ...]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tubeil/commands.hpp"
#include "tubeil/geometry.hpp"
#include "tubeil/lqr.hpp"
#include "tubeil/qp.hpp"

using namespace tubeil;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

Mat randn(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * standard_normal(rng);
  }
  return m;
}

Vec randu(int n, Rng& rng, double lo, double hi) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// 1 ---------------------------------------------------------------------------

Outcome scalar_rpi() {
  const auto t0 = Clock::now();
  const ErrorSystem sys =
      ErrorSystem::with_box_disturbance(Mat::Constant(1, 1, 0.5), IntervalBox(Vec::Constant(1, -1.0), Vec::Ones(1)));
  Rng rng = make_rng(0, 0);
  const IntervalBox s = estimate_rpi(sys, RpiOptions{}, rng);
  const double secs = since(t0);
  const double lo = s.lower()[0];
  const double hi = s.upper()[0];
  const bool within = std::abs(lo + 2.0) <= 0.1 && std::abs(hi - 2.0) <= 0.1;
  return {within && secs < 1.0, "estimate [" + fmt(lo, 6) + ", " + fmt(hi, 6) + "] vs [-2, 2] (tol 5%), " +
                                    fmt(secs, 3) + " s (limit 1 s)"};
}

// 2 ---------------------------------------------------------------------------

Outcome scalar_dare() {
  const Mat one = Mat::Ones(1, 1);
  LqrSolution sol = solve_lqr(one, one, one, one);  // warm-up
  const int reps = 100;
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) sol = solve_lqr(one, one, one, one);
  const double secs = since(t0) / reps;
  const double p_exact = 0.5 * (1.0 + std::sqrt(5.0));
  const double k_exact = -p_exact / (1.0 + p_exact);
  const double ep = std::abs(sol.p(0, 0) - p_exact);
  const double ek = std::abs(sol.k(0, 0) - k_exact);
  const double ek_printed = std::abs(sol.k(0, 0) + 0.618034);
  const bool pass = ep <= 1e-9 && ek <= 1e-9 && ek_printed <= 5e-7 && secs < 1e-3;
  return {pass, "P err " + fmt(ep, 3) + ", K err " + fmt(ek, 3) + " vs closed form (tol 1e-9), K - (-0.618034) = " +
                    fmt(sol.k(0, 0) + 0.618034, 3) + ", " + fmt(secs * 1e3, 3) + " ms per solve (limit 1 ms)"};
}

// 3 ---------------------------------------------------------------------------

struct BruteResult {
  bool found = false;
  Vec z;
  double objective = 0.0;
};

// Enumerates every active set of the combined constraint list and keeps the
// feasible KKT point with nonnegative multipliers and the lowest objective.
BruteResult brute_force(const QpProblem& qp) {
  const int n = qp.num_vars();
  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(qp.lb[i])) {
      rows.push_back(-Vec::Unit(n, i));
      rhs.push_back(-qp.lb[i]);
    }
    if (std::isfinite(qp.ub[i])) {
      rows.push_back(Vec::Unit(n, i));
      rhs.push_back(qp.ub[i]);
    }
  }
  for (int j = 0; j < qp.num_ineq(); ++j) {
    rows.push_back(qp.g_ineq.row(j).transpose());
    rhs.push_back(qp.h_ineq[j]);
  }
  const int m = static_cast<int>(rows.size());
  BruteResult best;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) act.push_back(i);
    }
    const int k = static_cast<int>(act.size());
    if (k > n) continue;
    Mat kkt = Mat::Zero(n + k, n + k);
    Vec b = Vec::Zero(n + k);
    kkt.topLeftCorner(n, n) = qp.h;
    b.head(n) = -qp.g;
    for (int a = 0; a < k; ++a) {
      kkt.block(0, n + a, n, 1) = rows[act[a]];
      kkt.block(n + a, 0, 1, n) = rows[act[a]].transpose();
      b[n + a] = rhs[act[a]];
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (lu.rank() < n + k) continue;
    const Vec sol = lu.solve(b);
    const Vec z = sol.head(n);
    bool ok = true;
    for (int a = 0; a < k && ok; ++a) ok = sol[n + a] >= -1e-9;
    for (int i = 0; i < m && ok; ++i) ok = rows[i].dot(z) <= rhs[i] + 1e-9;
    if (!ok) continue;
    const double obj = 0.5 * z.dot(qp.h * z) + qp.g.dot(z);
    if (!best.found || obj < best.objective) best = {true, z, obj};
  }
  return best;
}

Outcome qp_enumeration() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2024, 0);
  double worst_err = 0.0, worst_kkt = 0.0;
  int mismatches = 0, max_constraints = 0;
  const int instances = 200;
  for (int it = 0; it < instances; ++it) {
    const int n = 2 + static_cast<int>(uniform(rng, 0.0, 4.0));  // 2..5 variables
    const Mat a = randn(n, n, rng);
    QpProblem qp;
    qp.h = a * a.transpose() + 0.1 * Mat::Identity(n, n);
    qp.g = randn(n, 1, rng, 3.0);
    qp.lb = Vec::Constant(n, -kInf);
    qp.ub = Vec::Constant(n, kInf);
    const Vec z0 = randu(n, rng, -0.5, 0.5);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (uniform(rng, 0.0, 1.0) < 0.5) {
        qp.lb[i] = z0[i] - uniform(rng, 0.0, 1.0);
        ++count;
      }
      if (uniform(rng, 0.0, 1.0) < 0.5) {
        qp.ub[i] = z0[i] + uniform(rng, 0.0, 1.0);
        ++count;
      }
    }
    const int m_ineq = std::min(12 - count, static_cast<int>(uniform(rng, 0.0, 6.0)));
    qp.g_ineq = randn(m_ineq, n, rng);
    qp.h_ineq = qp.g_ineq * z0 + randu(m_ineq, rng, 0.0, 0.5);
    max_constraints = std::max(max_constraints, qp.num_constraints());

    const QpSolution sol = solve_qp(qp);
    const BruteResult ref = brute_force(qp);
    if (!sol.converged() || !ref.found) {
      ++mismatches;
      continue;
    }
    const double err = (sol.z - ref.z).lpNorm<Eigen::Infinity>();
    worst_err = std::max(worst_err, err);
    worst_kkt = std::max(worst_kkt, sol.kkt.max());
    if (err > 1e-6 || sol.kkt.max() > 1e-6) ++mismatches;
  }
  const double secs = since(t0);
  const bool pass = mismatches == 0 && secs < 30.0 && max_constraints <= 12;
  return {pass, std::to_string(instances) + " instances (max " + std::to_string(max_constraints) +
                    " constraints), worst |z - z_enum|_inf " + fmt(worst_err, 3) + ", worst KKT " +
                    fmt(worst_kkt, 3) + ", mismatches " + std::to_string(mismatches) + ", " + fmt(secs, 3) +
                    " s (limit 30 s)"};
}

// 4 ---------------------------------------------------------------------------

Outcome expert_robustness() {
  const auto t0 = Clock::now();
  const RunConfig cfg;
  const Setup s = make_setup(cfg);
  const EnvConfig env = make_env("noise+wind", cfg.wind);
  int ok = 0, total = 0, softened = 0;
  ContainmentReport cont;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const EvalReport r = evaluate(s, env, nullptr, 20, eval_seed(seed));
    ok += static_cast<int>(std::lround(r.success_rate * r.episodes));
    total += r.episodes;
    softened += r.softened_steps;
    const ContainmentReport c = tube_containment(s, 20, derive_seed(seed, 0xC0));
    cont.steps += c.steps;
    cont.contained += c.contained;
    per_seed += " seed " + std::to_string(seed) + ": success " + fmt(r.success_rate, 3) + ", containment " +
                fmt(c.fraction(), 4) + ";";
  }
  const double secs = since(t0);
  const double rate = static_cast<double>(ok) / total;
  const bool pass = ok == total && cont.fraction() >= 0.99 && secs < 300.0;
  return {pass, "success " + std::to_string(ok) + "/" + std::to_string(total) + " (need all), linear-plant containment " +
                    fmt(cont.fraction(), 4) + " (need >= 0.99), softened steps " + std::to_string(softened) + ", " +
                    fmt(secs, 3) + " s (limit 300 s);" + per_seed + " rate " + fmt(rate, 3)};
}

// 5 ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const Architecture arch = Architecture::desk();
  Network<double> net(arch);
  net.init(11);
  Rng rng = make_rng(5, 0);
  // nonzero biases so no pre-activation sits exactly on a ReLU kink
  for (int i = 0; i < net.num_params(); ++i) {
    if (net.theta()[i] == 0.0) net.theta()[i] = uniform(rng, -0.05, 0.05);
  }
  Dataset data(arch);
  std::vector<float> image(static_cast<std::size_t>(arch.image_size()));
  for (int b = 0; b < 4; ++b) {
    for (float& p : image) p = static_cast<float>(uniform(rng, 0.0, 1.0));
    data.add(image.data(), randu(arch.n_other, rng, -1.0, 1.0), randu(arch.n_ref, rng, -1.0, 1.0),
             randu(arch.n_action, rng, -1.0, 1.0), randu(arch.n_state, rng, -1.0, 1.0));
  }
  const auto batch = make_batch<double>(data, {0, 1, 2, 3});
  Network<double>::V grad;
  net.loss_and_gradient(batch, 0.1, grad);
  const double h = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int i = static_cast<int>(uniform(rng, 0.0, static_cast<double>(net.num_params())));
    const double keep = net.theta()[i];
    net.theta()[i] = keep + h;
    const double lp = net.loss(batch, 0.1);
    net.theta()[i] = keep - h;
    const double lm = net.loss(batch, 0.1);
    net.theta()[i] = keep;
    const double fd = (lp - lm) / (2.0 * h);
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, rel);
  }
  const double secs = since(t0);
  return {worst <= 1e-4 && secs < 120.0, std::to_string(net.num_params()) +
                                             " parameters, 200 coordinates, worst relative error " + fmt(worst, 3) +
                                             " (limit 1e-4), " + fmt(secs, 3) + " s (limit 120 s)"};
}

// 6 ---------------------------------------------------------------------------

struct IlResult {
  Outcome a, b, c, d;
  double seconds = 0.0;
};

IlResult il_comparison() {
  const auto t0 = Clock::now();
  const RunConfig cfg;
  const Setup s = make_setup(cfg);
  ExpertCache cache;
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  auto spec_for = [&](const std::string& method, const std::string& aug, int iterations) {
    MethodSpec m = method_spec(cfg.pipeline, method, aug);
    m.iterations = iterations;
    m.demos_per_iteration = 1;
    return m;
  };
  auto metric = [](const MethodRun& run, const std::string& env, int iteration) -> const EvalReport& {
    for (const auto& r : run.rows) {
      if (r.env == env && r.iteration == iteration) return r.report;
    }
    throw Error("acceptance: missing evaluation row for " + env);
  };
  auto log = [](const std::string& line) { std::cout << "    " << line << std::endl; };

  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
  int d_count = 0;
  std::string sa, sb, sc, sd;
  for (std::uint64_t seed : seeds) {
    const MethodRun vsa50 = run_method(s, spec_for("BC", "VSA-50", 1), seed, 1, &cache, log);
    const double ra = metric(vsa50, "noise", 0).success_rate;
    const MethodRun bc = run_method(s, spec_for("BC", "none", 1), seed, 1, &cache, log);
    const double rb = metric(bc, "noise", 0).success_rate;
    const MethodRun dag = run_method(s, spec_for("DAgger", "VSA-100", 2), seed, 1, &cache, log);
    const double rc = metric(dag, "noise+wind", 1).success_rate;
    const double rd = metric(dag, "noise", 1).expert_gap;
    a += ra;
    b += rb;
    c += rc;
    if (!std::isnan(rd)) {
      d += rd;
      ++d_count;
    }
    sa += " " + fmt(ra, 3);
    sb += " " + fmt(rb, 3);
    sc += " " + fmt(rc, 3);
    sd += " " + format_number(rd);
  }
  const double n = static_cast<double>(seeds.size());
  a /= n;
  b /= n;
  c /= n;
  d = d_count ? d / d_count : std::nan("");
  IlResult out;
  out.seconds = since(t0);
  const std::string budget = ", total " + fmt(out.seconds, 4) + " s (limit 3600 s)";
  const bool in_budget = out.seconds <= 3600.0;
  out.a = {a >= 0.90 && in_budget, "BC+VSA-50, 1 demo, noise: mean success " + fmt(a, 3) + " (need >= 0.90), per seed" + sa};
  out.b = {b <= 0.60 && in_budget, "BC no augmentation, 1 demo, noise: mean success " + fmt(b, 3) + " (need <= 0.60), per seed" + sb};
  out.c = {c >= 0.80 && in_budget,
           "DAgger+VSA-100, 2 demos, noise+wind: mean success " + fmt(c, 3) + " (need >= 0.80), per seed" + sc};
  out.d = {d_count > 0 && d <= 0.35 && in_budget,
           "DAgger+VSA-100 expert gap, noise: mean " + format_number(d) + " (need <= 0.35), per seed" + sd + budget};
  return out;
}

// 7 ---------------------------------------------------------------------------

Outcome inference_speed() {
  const RunConfig cfg;
  const Setup s = make_setup(cfg);
  PolicyNet net(s.arch);
  net.init(3);
  const InferenceTiming t = compare_inference(s, net, 500, 17);
  return {t.ratio() <= 0.5, "policy forward " + fmt(t.policy_ms, 4) + " ms, RTMPC step " + fmt(t.rtmpc_ms, 4) +
                                " ms over 500 paired calls, ratio " + fmt(t.ratio(), 3) + " (need <= 0.5), speedup " +
                                fmt(1.0 / t.ratio(), 3) + "x"};
}

// 8 ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.pipeline.methods = {"BC", "DAgger"};
  cfg.pipeline.augmentations = {"none", "DR", "VSA-5"};
  cfg.pipeline.iterations = 2;
  cfg.pipeline.demos_per_iteration = 1;
  cfg.pipeline.seeds = {0, 1};
  cfg.pipeline.eval_episodes = 3;
  cfg.learn.epochs = 2;
  const fs::path root = fs::temp_directory_path() / "tubeil_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream sink;
  cfg.output_dir = (root / "run1").string();
  cmd_reproduce(cfg, 1, sink);
  cfg.output_dir = (root / "run2").string();
  cmd_reproduce(cfg, 1, sink);
  const std::string s1 = slurp(root / "run1" / "summary.csv");
  const std::string s2 = slurp(root / "run2" / "summary.csv");
  const bool same = !s1.empty() && s1 == s2;
  const double secs = since(t0);
  fs::remove_all(root);
  return {same, std::string("two reproduce runs, summary.csv ") + (same ? "byte-identical" : "DIFFERS") + " (" +
                    std::to_string(s1.size()) + " bytes), " + fmt(secs, 3) + " s"};
}

void report(int id, const std::string& tag, const Outcome& o, bool& all) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << tag << ": " << o.detail << std::endl;
  all = all && o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
  bool all = true;
  const std::map<int, std::function<Outcome()>> simple = {{1, scalar_rpi},        {2, scalar_dare},
                                                          {3, qp_enumeration},    {4, expert_robustness},
                                                          {5, gradient_check},    {7, inference_speed},
                                                          {8, determinism}};
  for (int id = 1; id <= 8; ++id) {
    if (!want(id)) continue;
    try {
      if (id == 6) {
        const IlResult r = il_comparison();
        report(6, "a", r.a, all);
        report(6, "b", r.b, all);
        report(6, "c", r.c, all);
        report(6, "d", r.d, all);
      } else {
        report(id, "", simple.at(id)(), all);
      }
    } catch (const std::exception& e) {
      report(id, "", Outcome{false, std::string("exception: ") + e.what()}, all);
    }
  }
  std::cout << (all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
