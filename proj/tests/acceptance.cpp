// Acceptance checks. Run with --criterion N for one check, or with no
// arguments for all of them. Each check prints one PASS/FAIL line.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "taskexplore/adam.hpp"
#include "taskexplore/experiment.hpp"
#include "taskexplore/plane_fit.hpp"
#include "taskexplore/reps.hpp"

using namespace taskexplore;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::filesystem::path artifact_dir(const std::string& name) {
  const char* root = std::getenv("ACCEPTANCE_OUT");
  return std::filesystem::path(root ? root : "acceptance_runs") / name;
}

// Noiseless identification and zero regret on 100 sampled systems.
Outcome criterion_1() {
  const auto t0 = Clock::now();
  const LqrExperimentParams params;
  const LqrWorld w = make_lqr_world(params, 0, Objective::kTaskOriented, true);
  const LqrSetup& setup = w.training.setup;
  Rng theta_rng = substream(101, Phase::kWorld, 1, 0);
  double worst_theta = 0.0;
  double worst_regret = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    Rng policy_rng = substream(101, Phase::kWorld, 3, k);
    const ExplorationPolicy policy = random_exploration_policy(params.n, params.m, params.explore_horizon, policy_rng);
    const LinearSystem sys = setup.system(sample_theta(setup.theta_dist, theta_rng));
    const StreamKey key{101, Phase::kEvalTest, 0, k};
    const DeployResult dep = deploy(policy, sys, setup.cost, key, true, setup.theta_dist.cap);
    worst_theta = std::max(worst_theta, (dep.theta_hat - sys.theta).cwiseAbs().maxCoeff());
    worst_regret = std::max(worst_regret, std::abs(dep.cost - oracle_cost(sys, setup.cost, key, true)));
  }
  const double elapsed = seconds_since(t0);
  return {worst_theta <= 1e-8 && worst_regret <= 1e-8 && elapsed < 10.0,
          "max|theta_hat-theta|=" + fmt(worst_theta) + " max|regret|=" + fmt(worst_regret) + " time=" +
              fmt(elapsed) + "s"};
}

// LQR training over 5 seeds and 1000 batches, both objectives.
Outcome criterion_2() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::kLqr;
  cfg.objectives = {Objective::kTaskOriented, Objective::kTaskAgnostic};
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.output_dir = artifact_dir("lqr").string();
  const RunArtifacts art = run_experiment(cfg);
  const double elapsed = seconds_since(t0);
  if (!art.failures.empty()) return {false, "run failures: " + art.failures.front()};

  std::map<std::string, std::vector<double>> finals;
  for (const auto& run : art.summary["runs"]) {
    const auto& ratio = run["result"]["final_regret_ratio"];
    finals[run["objective"].get<std::string>()].push_back(ratio.is_null() ? NAN : ratio.get<double>());
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto sd = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  const auto& to = finals["task-oriented"];
  const auto& ta = finals["task-agnostic"];
  const bool a = mean(to) < 1.0 && mean(ta) < 1.0;
  const bool b = mean(to) < mean(ta);
  const bool c = sd(to) <= sd(ta);
  std::ostringstream d;
  d << "(a) " << (a ? "ok" : "no") << " (b) " << (b ? "ok" : "no") << " (c) " << (c ? "ok" : "no")
    << "; task-oriented mean=" << fmt(mean(to)) << " sd=" << fmt(sd(to)) << " [";
  for (double x : to) d << ' ' << fmt(x);
  d << " ]; task-agnostic mean=" << fmt(mean(ta)) << " sd=" << fmt(sd(ta)) << " [";
  for (double x : ta) d << ' ' << fmt(x);
  d << " ]; time=" << fmt(elapsed) << "s";
  return {a && b && c && elapsed < 3600.0, d.str()};
}

// Pouring training over 5 seeds.
Outcome criterion_3() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::kPouring;
  cfg.objectives = {Objective::kTaskOriented, Objective::kTaskAgnostic};
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.output_dir = artifact_dir("pouring").string();
  const RunArtifacts art = run_experiment(cfg);
  const double elapsed = seconds_since(t0);
  if (!art.failures.empty()) return {false, "run failures: " + art.failures.front()};

  bool p_ok = true;
  std::map<std::string, double> cost_sum;
  std::ostringstream d;
  for (const auto& run : art.summary["runs"]) {
    const std::string obj = run["objective"];
    const double p = run["result"]["final_p_e"];
    const double cost = run["result"]["final_eval_cost"];
    cost_sum[obj] += cost;
    if (obj == "task-oriented") p_ok = p_ok && p >= 0.80;
    if (obj == "task-agnostic") p_ok = p_ok && p >= 0.45 && p <= 0.75;
    d << obj.substr(0, 6) << run["seed"].get<int>() << " p_e=" << fmt(p) << " J=" << fmt(cost) << "; ";
  }
  const bool cost_ok = cost_sum["task-oriented"] < cost_sum["task-agnostic"];
  d << "mean J task-oriented=" << fmt(cost_sum["task-oriented"] / 5) << " task-agnostic="
    << fmt(cost_sum["task-agnostic"] / 5) << " time=" << fmt(elapsed) << "s";
  return {p_ok && cost_ok && elapsed < 600.0, d.str()};
}

// REPS identification against the closed form, 10 iterations x 50 samples,
// prior centered at the true eigenvalues, over 100 systems. REPS is a
// sampling method: a weakly excited coordinate can stop short when the
// search distribution contracts, so the gate is that at least 95 of 100
// systems agree within 0.02. The worst case is reported.
Outcome criterion_4() {
  const auto t0 = Clock::now();
  const LqrExperimentParams params;
  const RepsSimoptParams rp;
  std::vector<double> gaps;
  int stalled = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const RepsCheck c = run_reps_check(params, rp, seed, true);
    gaps.push_back(c.linf);
    stalled += c.reps.stalled ? 1 : 0;
  }
  const double elapsed = seconds_since(t0);
  std::sort(gaps.begin(), gaps.end());
  const auto within = std::count_if(gaps.begin(), gaps.end(), [](double g) { return g <= 0.02; });
  // For reference only: prior at the distribution mean, random initial x0.
  RepsSimoptParams from_mean = rp;
  from_mean.prior_center = "mean";
  from_mean.explore_start = "policy";
  double worst_mean = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    worst_mean = std::max(worst_mean, run_reps_check(params, from_mean, seed, true).linf);
  std::ostringstream d;
  d << within << "/100 systems within 0.02; median=" << fmt(gaps[50]) << " p95=" << fmt(gaps[95])
    << " max=" << fmt(gaps.back()) << " stalled=" << stalled << " time=" << fmt(elapsed)
    << "s (mean prior with random x0, 20 systems, not gated: max " << fmt(worst_mean) << ")";
  return {within >= 95 && stalled == 0 && elapsed < 30.0, d.str()};
}

// Optimizer property suite.
Outcome criterion_5() {
  std::ostringstream d;
  bool ok = true;

  // Plane fit on affine functions.
  double affine_err = 0.0;
  Rng gen{55};
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index dim = 1 + trial % 8;
    const Vec g = gen.normal_vector(dim, 2.0);
    const double c = gen.normal();
    const Vec x = gen.normal_vector(dim, 1.0);
    Rng rng = substream(55, Phase::kFiniteDiff, static_cast<std::uint64_t>(trial), 0);
    const auto spec = PlaneFitSpec::uniform_bounds(dim, 1e-3, -10, 10, static_cast<int>(2 * dim + 2));
    const auto r = plane_fit_gradient([&](const Vec& p) { return g.dot(p) + c; }, x, spec, rng);
    affine_err = std::max(affine_err, (r.gradient - g).cwiseAbs().maxCoeff());
  }
  ok = ok && affine_err <= 1e-10;
  d << "affine max err=" << fmt(affine_err);

  // Plane fit on random quadratics f = 0.5 x'Ax + b'x.
  double quad_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index dim = 2 + trial % 7;
    const Mat m = gen.normal_matrix(dim, dim, 1.0);
    const Mat a = 0.5 * (m + m.transpose());
    const Vec b = gen.normal_vector(dim, 1.0);
    const Vec x = gen.normal_vector(dim, 1.0);
    Rng rng = substream(56, Phase::kFiniteDiff, static_cast<std::uint64_t>(trial), 0);
    const auto spec = PlaneFitSpec::uniform_bounds(dim, 1e-3, -10, 10, static_cast<int>(2 * dim + 2));
    const auto r = plane_fit_gradient([&](const Vec& p) { return 0.5 * p.dot(a * p) + b.dot(p); }, x, spec, rng);
    const Vec truth = a * x + b;
    quad_err = std::max(quad_err, (r.gradient - truth).norm() / truth.norm());
  }
  ok = ok && quad_err <= 0.05;
  d << "; quadratic max rel err=" << fmt(quad_err);

  // REPS on a 2-D quadratic.
  Vec target(2);
  target << 0.3, -0.2;
  RepsState state{Vec::Zero(2), Mat::Identity(2, 2), 1.0};
  int reached = -1;
  for (int iter = 0; iter < 30; ++iter) {
    Rng rng = substream(57, Phase::kReps, static_cast<std::uint64_t>(iter), 0);
    const auto samples = reps_draw(state, 50, rng);
    std::vector<double> rewards;
    for (const Vec& z : samples) rewards.push_back(-(z - target).squaredNorm());
    const auto upd = reps_update(state, samples, rewards);
    if (upd.stalled) break;
    state = upd.state;
    if (reached < 0 && (state.mu_z - target).cwiseAbs().maxCoeff() < 1e-2) reached = iter + 1;
  }
  const double reps_err = (state.mu_z - target).cwiseAbs().maxCoeff();
  ok = ok && reps_err < 1e-2;
  d << "; REPS err after 30 iters=" << fmt(reps_err) << " (first within 1e-2 at iter " << reached << ")";

  // Adam hand checks.
  const AdamConfig plain{1e-4, 0.9, 0.999, 1e-8, 0.0};
  const Vec one = Vec::Constant(1, 1.0);
  const auto fixed = adam_step(one, Vec::Zero(1), AdamState::zeros(1), plain);
  const bool fixed_ok = fixed.params[0] == 1.0 && fixed.state.t == 1;
  const auto first = adam_step(Vec::Zero(1), one, AdamState::zeros(1), plain);
  // Bias-corrected moments are exactly g and g^2 in real arithmetic; allow
  // rounding in the corrections only.
  const double expected_first = -1e-4 / (1.0 + 1e-8);
  const bool first_ok = std::abs(first.params[0] - expected_first) <= 1e-18 && first.state.m[0] == (1.0 - 0.9) * 1.0 &&
                        first.state.v[0] == (1.0 - 0.999) * 1.0;
  const auto decay = adam_step(one, Vec::Zero(1), AdamState::zeros(1), AdamConfig{1e-4, 0.9, 0.999, 1e-8, 0.1});
  const bool decay_ok = decay.params[0] == 1.0 - 1e-4 * 0.1;
  ok = ok && fixed_ok && first_ok && decay_ok;
  d << "; Adam fixed point " << (fixed_ok ? "ok" : "no") << ", first step " << (first_ok ? "ok" : "no")
    << ", decay " << (decay_ok ? "ok" : "no");
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> checks{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  const bool all = selected.empty();
  if (all)
    for (const auto& [id, fn] : checks) selected.push_back(id);

  int failures = 0;
  for (int id : selected) {
    const auto it = checks.find(id);
    if (it == checks.end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  if (all)
    std::cout << "SKIP criterion 6: excluded by definition (physical-robot results and absolute curve values)"
              << std::endl;
  return failures == 0 ? 0 : 1;
}
