#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskexplore/adam.hpp"
#include "taskexplore/linear_system.hpp"
#include "taskexplore/lqr.hpp"
#include "taskexplore/parallel.hpp"
#include "taskexplore/plane_fit.hpp"
#include "taskexplore/random.hpp"

namespace taskexplore {

enum class Objective { kTaskOriented, kTaskAgnostic };

inline std::string to_string(Objective o) {
  return o == Objective::kTaskOriented ? "task-oriented" : "task-agnostic";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "task-oriented" || s == "task_oriented") return Objective::kTaskOriented;
  if (s == "task-agnostic" || s == "task_agnostic") return Objective::kTaskAgnostic;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

/// Identifies the random substreams of one pipeline sample. Channel 0 drives
/// the exploration rollout, channel 1 the task rollout; the oracle task
/// rollout reuses channel 1 so regret isolates identification error.
struct StreamKey {
  std::uint64_t seed = 0;
  Phase phase = Phase::kEvalTest;
  std::uint64_t batch = 0;
  std::uint64_t sample = 0;

  Rng stream(std::uint64_t channel) const {
    return Rng{seed, static_cast<std::uint64_t>(phase), batch, sample, channel};
  }
};

inline constexpr std::uint64_t kExploreChannel = 0;
inline constexpr std::uint64_t kTaskChannel = 1;

/// Fixed quantities of one LQR experiment: known basis and input matrix,
/// eigenvalue distribution, noise levels and task cost.
struct LqrSetup {
  Mat basis_u;
  Mat input_b;
  ThetaDistribution theta_dist;
  double obs_noise_std = 0.05;
  double dyn_noise_std = 0.05;
  LqrCostSpec cost;

  LinearSystem system(const Vec& theta) const {
    return LinearSystem::make(basis_u, theta, input_b, obs_noise_std, dyn_noise_std);
  }
  Eigen::Index state_dim() const { return basis_u.rows(); }
  Eigen::Index input_dim() const { return input_b.cols(); }
};

/// Exploration controller u_t = K_e o_t started from a learned state.
struct ExplorationPolicy {
  Mat gains_ke;
  Vec x0_explore;
  int explore_horizon = 4;

  Eigen::Index param_count() const { return gains_ke.size() + x0_explore.size(); }

  /// [vec(K_e) column-major, x0_explore].
  Vec flatten() const {
    Vec p(param_count());
    p.head(gains_ke.size()) = gains_ke.reshaped();
    p.tail(x0_explore.size()) = x0_explore;
    return p;
  }

  ExplorationPolicy with_params(const Vec& p) const {
    if (p.size() != param_count()) throw std::invalid_argument("ExplorationPolicy: parameter count mismatch");
    ExplorationPolicy out = *this;
    out.gains_ke = p.head(gains_ke.size()).reshaped(gains_ke.rows(), gains_ke.cols());
    out.x0_explore = p.tail(x0_explore.size());
    return out;
  }
};

/// K_e entries Normal(0, gain_std^2), x0 entries Normal(0, x0_std^2).
inline ExplorationPolicy random_exploration_policy(Eigen::Index n, Eigen::Index m, int horizon, Rng& rng,
                                                   double gain_std = 0.1, double x0_std = 1.0) {
  ExplorationPolicy p;
  p.gains_ke = rng.normal_matrix(m, n, gain_std);
  p.x0_explore = rng.normal_vector(n, x0_std);
  p.explore_horizon = horizon;
  return p;
}

struct DeployResult {
  double cost = 0.0;
  Vec theta_hat;
  Trajectory explore_traj;
  Trajectory task_traj;
  bool diverged = false;
};

/// Explore, identify, plan, execute: returns the task cost incurred on `sys`.
inline DeployResult deploy(const ExplorationPolicy& policy, const LinearSystem& sys, const LqrCostSpec& cost,
                           const StreamKey& key, bool noiseless, double cap) {
  if (policy.gains_ke.rows() != sys.input_dim() || policy.gains_ke.cols() != sys.state_dim() ||
      policy.x0_explore.size() != sys.state_dim())
    throw std::invalid_argument("deploy: policy and system dimensions disagree");
  if (policy.explore_horizon < 1) throw std::invalid_argument("deploy: exploration horizon must be >= 1");

  DeployResult out;
  Rng explore_rng = key.stream(kExploreChannel);
  out.explore_traj = rollout(sys, LinearFeedback{&policy.gains_ke}, policy.x0_explore, policy.explore_horizon,
                             explore_rng, noiseless);
  out.theta_hat = simopt_closed_form(sys.basis_u, sys.input_b, out.explore_traj, cap);
  const Mat a_hat = sys.basis_u * out.theta_hat.asDiagonal() * sys.basis_u.transpose();
  const LqrPolicy task_policy = solve_lqr(a_hat, sys.input_b, cost);
  Rng task_rng = key.stream(kTaskChannel);
  out.task_traj = rollout(sys, task_policy, cost.x0_task, cost.task_horizon, task_rng, noiseless);
  out.cost = lqr_cost(out.task_traj, cost);
  out.diverged = out.explore_traj.diverged || out.task_traj.diverged;
  return out;
}

/// Cost of the task policy planned with the true dynamics, on the task channel.
inline double oracle_cost(const LinearSystem& sys, const LqrCostSpec& cost, const StreamKey& key, bool noiseless) {
  const LqrPolicy task_policy = solve_lqr(sys.a, sys.input_b, cost);
  Rng task_rng = key.stream(kTaskChannel);
  const Trajectory traj = rollout(sys, task_policy, cost.x0_task, cost.task_horizon, task_rng, noiseless);
  return lqr_cost(traj, cost);
}

struct RegretSample {
  Vec theta;
  double regret = 0.0;
  double cost = 0.0;
};

struct RegretReport {
  double mean_regret = 0.0;
  double mean_cost = 0.0;
  std::vector<RegretSample> per_sample;
  int failed = 0;
  int diverged = 0;
};

/// Average regret of `policy` over a fixed set of systems. Sample n uses the
/// substreams (seed, phase, batch, n).
inline RegretReport evaluate_expected_regret(const ExplorationPolicy& policy, const LqrSetup& setup,
                                             const std::vector<Vec>& thetas, const StreamKey& base,
                                             bool noiseless) {
  if (thetas.empty()) throw std::invalid_argument("evaluate_expected_regret: need at least one system");
  struct Slot {
    std::optional<RegretSample> sample;
    bool diverged = false;
  };
  std::vector<Slot> slots(thetas.size());
  parallel_for(thetas.size(), [&](std::size_t k) {
    StreamKey key = base;
    key.sample = k;
    try {
      const LinearSystem sys = setup.system(thetas[k]);
      const double best = oracle_cost(sys, setup.cost, key, noiseless);
      const DeployResult dep = deploy(policy, sys, setup.cost, key, noiseless, setup.theta_dist.cap);
      slots[k].sample = RegretSample{thetas[k], dep.cost - best, dep.cost};
      slots[k].diverged = dep.diverged;
    } catch (const std::exception&) {
      slots[k].sample.reset();
    }
  });

  RegretReport report;
  for (Slot& s : slots) {
    if (!s.sample) {
      ++report.failed;
      continue;
    }
    report.diverged += s.diverged ? 1 : 0;
    report.per_sample.push_back(std::move(*s.sample));
  }
  if (report.per_sample.empty()) throw std::runtime_error("evaluate_expected_regret: every sample failed");
  for (const RegretSample& s : report.per_sample) {
    report.mean_regret += s.regret;
    report.mean_cost += s.cost;
  }
  report.mean_regret /= static_cast<double>(report.per_sample.size());
  report.mean_cost /= static_cast<double>(report.per_sample.size());
  return report;
}

/// Draws `count` systems from `dist` on stream (seed, phase, batch, n) and evaluates them.
inline RegretReport evaluate_expected_regret(const ExplorationPolicy& policy, const LqrSetup& setup,
                                             const ThetaDistribution& dist, int count, const StreamKey& base,
                                             bool noiseless) {
  if (count < 1) throw std::invalid_argument("evaluate_expected_regret: count must be >= 1");
  std::vector<Vec> thetas;
  thetas.reserve(static_cast<std::size_t>(count));
  Rng rng = substream(base.seed, Phase::kWorld, 4, base.batch);
  for (int k = 0; k < count; ++k) {
    thetas.push_back(sample_theta(dist, rng));
  }
  return evaluate_expected_regret(policy, setup, thetas, base, noiseless);
}

inline constexpr double kRegretFloor = 1e-12;

/// mean_regret(policy) / mean_regret(baseline) on the same systems and substreams.
inline double regret_ratio(const ExplorationPolicy& policy, const ExplorationPolicy& baseline, const LqrSetup& setup,
                           const std::vector<Vec>& test_thetas, const StreamKey& base, bool noiseless) {
  const double denom = evaluate_expected_regret(baseline, setup, test_thetas, base, noiseless).mean_regret;
  if (!(denom > kRegretFloor))
    throw std::domain_error("regret_ratio: baseline regret is not above the numeric floor");
  return evaluate_expected_regret(policy, setup, test_thetas, base, noiseless).mean_regret / denom;
}

/// Regularizer h = sum over the exploration trajectory of x^T Q_e x + u^T R_e u, weighted by gamma.
struct ExplorationRegSpec {
  Mat q_explore;
  Mat r_explore;
  double gamma = 1.0;
};

struct TrainingConfig {
  Objective objective = Objective::kTaskOriented;
  LqrSetup setup;
  AdamConfig adam;
  PlaneFitSpec fd;
  int batch_size = 70;
  std::vector<Vec> train_thetas;
  std::vector<Vec> test_thetas;
  int n_batches = 1000;
  int eval_interval = 25;
  /// Gradients longer than this multiple of the median norm of the last
  /// `clip_window` accepted gradients are rescaled to that length; 0 disables.
  double clip_factor = 5.0;
  int clip_window = 50;
  std::uint64_t seed = 0;
  bool noiseless = false;
};

/// Rescales `grad` when its norm exceeds factor * median(history), then
/// records the pre-clip norm. Returns true when the gradient was clipped.
inline bool clip_to_history(Vec& grad, std::vector<double>& history, double factor, int window) {
  const double norm = grad.norm();
  bool clipped = false;
  if (factor > 0.0 && !history.empty()) {
    std::vector<double> sorted = history;
    const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double limit = factor * *mid;
    if (norm > limit && limit > 0.0) {
      grad *= limit / norm;
      clipped = true;
    }
  }
  history.push_back(norm);
  if (static_cast<int>(history.size()) > window) history.erase(history.begin());
  return clipped;
}

/// Training-set indices of batch b. Consecutive batches walk through a fresh
/// permutation of the training set each epoch.
inline std::vector<std::size_t> batch_indices(const TrainingConfig& cfg, std::uint64_t batch) {
  const std::size_t pool = cfg.train_thetas.size();
  if (pool == 0) throw std::invalid_argument("batch_indices: empty training set");
  const auto size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> out;
  out.reserve(size);
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm;
  for (std::size_t k = 0; k < size; ++k) {
    const std::uint64_t pos = batch * size + k;
    const std::uint64_t epoch = pos / pool;
    if (epoch != cached_epoch) {
      Rng rng = substream(cfg.seed, Phase::kTrainShuffle, epoch, 0);
      perm = permutation(pool, rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % pool]);
  }
  return out;
}

struct LossBreakdown {
  double loss = 0.0;
  double mean_task_cost = 0.0;    // task-oriented term
  double mean_param_error = 0.0;  // task-agnostic term
  double mean_regularizer = 0.0;  // h before gamma
};

/// Training objective of one batch. All members reuse the batch's substreams,
/// so evaluating nearby parameter vectors gives common random numbers.
inline LossBreakdown exploration_loss(const Vec& params, const ExplorationPolicy& shape, const TrainingConfig& cfg,
                                      const ExplorationRegSpec& reg, std::uint64_t batch) {
  const ExplorationPolicy policy = shape.with_params(params);
  const std::vector<std::size_t> members = batch_indices(cfg, batch);
  LossBreakdown out;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const StreamKey key{cfg.seed, Phase::kTrainBatch, batch, k};
    const Vec& theta = cfg.train_thetas[members[k]];
    const LinearSystem sys = cfg.setup.system(theta);
    if (cfg.objective == Objective::kTaskOriented) {
      const DeployResult dep = deploy(policy, sys, cfg.setup.cost, key, cfg.noiseless, cfg.setup.theta_dist.cap);
      out.mean_task_cost += dep.cost;
      out.mean_regularizer += quadratic_cost(dep.explore_traj, reg.q_explore, reg.r_explore);
    } else {
      Rng explore_rng = key.stream(kExploreChannel);
      const Trajectory traj = rollout(sys, LinearFeedback{&policy.gains_ke}, policy.x0_explore,
                                      policy.explore_horizon, explore_rng, cfg.noiseless);
      const Vec theta_hat = simopt_closed_form(sys.basis_u, sys.input_b, traj, cfg.setup.theta_dist.cap);
      out.mean_param_error += (theta_hat - theta).squaredNorm();
      out.mean_regularizer += quadratic_cost(traj, reg.q_explore, reg.r_explore);
    }
  }
  const auto count = static_cast<double>(members.size());
  out.mean_task_cost /= count;
  out.mean_param_error /= count;
  out.mean_regularizer /= count;
  const double data_term =
      cfg.objective == Objective::kTaskOriented ? out.mean_task_cost : out.mean_param_error;
  out.loss = data_term + reg.gamma * out.mean_regularizer;
  return out;
}

struct CurvePoint {
  int batch = 0;
  double loss = 0.0;
  double regret_ratio = 0.0;  // NaN when the baseline regret is degenerate
};

struct TrainResult {
  ExplorationPolicy policy;
  std::vector<CurvePoint> curve;
  double baseline_regret = 0.0;
  int skipped_steps = 0;
  int clipped_steps = 0;
  bool delta_halved = false;
  bool aborted = false;
};

/// Gradient descent on the exploration loss with plane-fit gradients and Adam.
/// `init` doubles as the regret-ratio baseline.
inline TrainResult train_exploration(const TrainingConfig& cfg, const ExplorationRegSpec& reg,
                                     const ExplorationPolicy& init) {
  if (cfg.batch_size < 1) throw std::invalid_argument("train_exploration: batch_size must be >= 1");
  if (cfg.train_thetas.empty() || cfg.test_thetas.empty())
    throw std::invalid_argument("train_exploration: training and test sets must be nonempty");
  if (init.gains_ke.rows() != cfg.setup.input_dim() || init.gains_ke.cols() != cfg.setup.state_dim() ||
      init.x0_explore.size() != cfg.setup.state_dim())
    throw std::invalid_argument("train_exploration: initial policy does not match the system");
  cfg.adam.validate();

  const StreamKey eval_key{cfg.seed, Phase::kEvalTest, 0, 0};
  TrainResult out;
  out.policy = init;
  out.baseline_regret = evaluate_expected_regret(init, cfg.setup, cfg.test_thetas, eval_key, cfg.noiseless).mean_regret;

  auto record = [&](int batch, const Vec& params) {
    CurvePoint pt;
    pt.batch = batch;
    pt.loss = exploration_loss(params, init, cfg, reg, static_cast<std::uint64_t>(batch)).loss;
    if (out.baseline_regret > kRegretFloor) {
      const ExplorationPolicy current = init.with_params(params);
      pt.regret_ratio =
          evaluate_expected_regret(current, cfg.setup, cfg.test_thetas, eval_key, cfg.noiseless).mean_regret /
          out.baseline_regret;
    } else {
      pt.regret_ratio = std::numeric_limits<double>::quiet_NaN();
    }
    out.curve.push_back(pt);
  };

  Vec params = init.flatten();
  AdamState adam = AdamState::zeros(params.size());
  PlaneFitSpec fd = cfg.fd;
  std::vector<double> norm_history;
  record(0, params);

  for (int b = 0; b < cfg.n_batches; ++b) {
    const auto batch = static_cast<std::uint64_t>(b);
    auto objective = [&](const Vec& p) { return exploration_loss(p, init, cfg, reg, batch).loss; };
    Rng fd_rng = substream(cfg.seed, Phase::kFiniteDiff, batch, 0);
    const PlaneFitResult grad = plane_fit_gradient(objective, params, fd, fd_rng);
    if (!grad.values.allFinite() || !grad.gradient.allFinite()) {
      ++out.skipped_steps;
      if (out.delta_halved) {
        out.aborted = true;
        break;
      }
      fd.delta *= 0.5;
      out.delta_halved = true;
      continue;
    }
    Vec direction = grad.gradient;
    if (clip_to_history(direction, norm_history, cfg.clip_factor, cfg.clip_window)) ++out.clipped_steps;
    AdamResult step = adam_step(params, direction, adam, cfg.adam);
    params = std::move(step.params);
    adam = std::move(step.state);
    const int done = b + 1;
    if (done % cfg.eval_interval == 0 || done == cfg.n_batches) record(done, params);
  }
  out.policy = init.with_params(params);
  return out;
}

/// Hyperparameters of the LQR experiment; defaults follow the published setup
/// where it is stated.
struct LqrExperimentParams {
  int n = 6;
  int m = 3;
  std::vector<double> theta_mean{0.9, 0.9, 0.9, 0.6, 0.6, 0.6};
  double theta_std = 0.2;
  double theta_cap = 1.1;
  double obs_noise_std = 0.05;
  double dyn_noise_std = 0.05;
  std::vector<double> q_diag{100, 100, 10, 10, 10, 1};
  std::vector<double> r_diag{0.1, 0.1, 0.1};
  int task_horizon = 20;
  int explore_horizon = 4;
  int n_train = 1000;
  int n_test = 100;
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8, 0.1};
  int batch_size = 70;
  int n_batches = 1000;
  int eval_interval = 25;
  double fd_delta = 1e-3;
  double fd_bound = 10.0;
  double gamma = 1.0;
  double reg_q = 0.01;
  double reg_r = 0.01;
  double init_gain_std = 0.1;
  double init_x0_std = 1.0;
  double clip_factor = 5.0;
  int clip_window = 50;

  void validate() const {
    if (n < 1 || m < 1) throw std::invalid_argument("lqr: n and m must be >= 1");
    if (static_cast<int>(theta_mean.size()) != n) throw std::invalid_argument("lqr: theta_mean must have n entries");
    if (static_cast<int>(q_diag.size()) != n) throw std::invalid_argument("lqr: q_diag must have n entries");
    if (static_cast<int>(r_diag.size()) != m) throw std::invalid_argument("lqr: r_diag must have m entries");
    if (theta_std < 0.0 || !(theta_cap > 0.0)) throw std::invalid_argument("lqr: need theta_std >= 0 and cap > 0");
    if (obs_noise_std < 0.0 || dyn_noise_std < 0.0) throw std::invalid_argument("lqr: noise std must be >= 0");
    if (task_horizon < 1 || explore_horizon < 1) throw std::invalid_argument("lqr: horizons must be >= 1");
    if (n_train < 1 || n_test < 1) throw std::invalid_argument("lqr: train/test sets must be nonempty");
    if (batch_size < 1) throw std::invalid_argument("lqr: batch_size must be >= 1");
    if (n_batches < 0) throw std::invalid_argument("lqr: n_batches must be >= 0");
    if (eval_interval < 1) throw std::invalid_argument("lqr: eval_interval must be >= 1");
    if (!(fd_delta > 0.0) || !(fd_bound > 0.0)) throw std::invalid_argument("lqr: fd_delta and fd_bound must be > 0");
    if (clip_factor < 0.0 || clip_window < 1) throw std::invalid_argument("lqr: need clip_factor >= 0 and clip_window >= 1");
    if (gamma < 0.0 || reg_q < 0.0 || reg_r < 0.0) throw std::invalid_argument("lqr: regularizer weights must be >= 0");
    adam.validate();
  }
};

/// Everything one seed of the LQR experiment needs.
struct LqrWorld {
  TrainingConfig training;
  ExplorationRegSpec reg;
  ExplorationPolicy initial_policy;
};

inline LqrWorld make_lqr_world(const LqrExperimentParams& p, std::uint64_t seed, Objective objective, bool noiseless) {
  p.validate();
  LqrWorld w;
  TrainingConfig& cfg = w.training;
  cfg.objective = objective;
  cfg.seed = seed;
  cfg.noiseless = noiseless;
  cfg.adam = p.adam;
  cfg.batch_size = p.batch_size;
  cfg.n_batches = p.n_batches;
  cfg.eval_interval = p.eval_interval;
  cfg.clip_factor = p.clip_factor;
  cfg.clip_window = p.clip_window;

  Rng basis_rng = substream(seed, Phase::kWorld, 0, 0);
  Rng input_rng = substream(seed, Phase::kWorld, 0, 1);
  LqrSetup& s = cfg.setup;
  s.basis_u = random_orthonormal_basis(p.n, basis_rng);
  s.input_b = random_input_matrix(p.n, p.m, input_rng);
  s.theta_dist = ThetaDistribution{Eigen::Map<const Vec>(p.theta_mean.data(), p.n), p.theta_std, p.theta_cap};
  s.obs_noise_std = p.obs_noise_std;
  s.dyn_noise_std = p.dyn_noise_std;
  s.cost.q_matrix = Eigen::Map<const Vec>(p.q_diag.data(), p.n).asDiagonal();
  s.cost.r_matrix = Eigen::Map<const Vec>(p.r_diag.data(), p.m).asDiagonal();
  s.cost.task_horizon = p.task_horizon;
  s.cost.x0_task = Vec::Ones(p.n) / std::sqrt(static_cast<double>(p.n));

  Rng train_rng = substream(seed, Phase::kWorld, 1, 0);
  for (int k = 0; k < p.n_train; ++k) cfg.train_thetas.push_back(sample_theta(s.theta_dist, train_rng));
  Rng test_rng = substream(seed, Phase::kWorld, 2, 0);
  for (int k = 0; k < p.n_test; ++k) cfg.test_thetas.push_back(sample_theta(s.theta_dist, test_rng));

  Rng policy_rng = substream(seed, Phase::kWorld, 3, 0);
  w.initial_policy = random_exploration_policy(p.n, p.m, p.explore_horizon, policy_rng, p.init_gain_std, p.init_x0_std);

  const Eigen::Index dim = w.initial_policy.param_count();
  cfg.fd = PlaneFitSpec::uniform_bounds(dim, p.fd_delta, -p.fd_bound, p.fd_bound, static_cast<int>(2 * dim + 2));

  w.reg.q_explore = p.reg_q * Mat::Identity(p.n, p.n);
  w.reg.r_explore = p.reg_r * Mat::Identity(p.m, p.m);
  w.reg.gamma = p.gamma;
  return w;
}

}  // namespace taskexplore
