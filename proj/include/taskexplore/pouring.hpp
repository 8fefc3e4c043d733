#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "taskexplore/adam.hpp"
#include "taskexplore/parallel.hpp"
#include "taskexplore/pipeline.hpp"
#include "taskexplore/plane_fit.hpp"
#include "taskexplore/random.hpp"

namespace taskexplore {

/// Cylindrical cup; lengths in cm, density in g/cm^3.
struct CupGeometry {
  double radius = 3.1;
  double height = 10.5;
  double density = 1.0;

  double base_area() const { return std::numbers::pi * radius * radius; }
  double capacity() const { return base_area() * height; }
  /// Largest tilt for which the remaining-volume model holds.
  double max_tilt() const { return std::atan(height / (2.0 * radius)) - 1e-6; }

  void validate() const {
    if (!(radius > 0.0) || !(height > 0.0) || !(density > 0.0))
      throw std::invalid_argument("CupGeometry: radius, height and density must be > 0");
  }
};

/// Tilt angle at which a cylindrical cup retains `remaining_volume`, clamped
/// to [0, max_tilt].
inline double tilt_angle(const CupGeometry& geom, double remaining_volume) {
  const double phi = std::atan((geom.height - remaining_volume / geom.base_area()) / geom.radius);
  return std::clamp(phi, 0.0, geom.max_tilt());
}

/// Volume retained at tilt `phi`; inverse of tilt_angle on the valid interval.
inline double retained_volume(const CupGeometry& geom, double phi) {
  return geom.base_area() * (geom.height - geom.radius * std::tan(phi));
}

struct PouringWorld {
  std::array<double, 2> masses{200.0, 200.0};
  double meas_noise_std = 30.0;
  double pour_noise_std = 5.0;
  int task_cup = 0;
};

/// Goal distribution Normal(mean, std^2) clipped to [lo, hi] grams.
struct PouringGoal {
  double goal_mean = 50.0;
  double goal_std = 15.0;
  double lo = 10.0;
  double hi = 100.0;

  double sample(Rng& rng) const { return std::clamp(rng.normal(goal_mean, goal_std), lo, hi); }
};

struct PouringExplorationPolicy {
  double p_e = 0.5;
  int horizon = 6;
};

struct PourResult {
  double tilt_angle = 0.0;
  double poured = 0.0;
  double cost = 0.0;
};

/// Tilts to the angle that should leave estimated_mass - goal grams, then pours
/// from the true cup. `pour_noise` is added to the poured mass.
inline PourResult pour_with_noise(const CupGeometry& geom, double true_mass, double estimated_mass, double goal,
                                  double pour_noise) {
  PourResult out;
  out.tilt_angle = tilt_angle(geom, (estimated_mass - goal) / geom.density);
  const double remaining = std::min(true_mass / geom.density, retained_volume(geom, out.tilt_angle));
  out.poured = std::max(0.0, true_mass - geom.density * remaining + pour_noise);
  out.cost = std::abs(goal - out.poured);
  return out;
}

inline PourResult simulate_pour(const CupGeometry& geom, const PouringWorld& world, double estimated_mass,
                                double goal, Rng& rng, bool noiseless) {
  if (estimated_mass < 0.0) estimated_mass = 0.0;
  const double noise = noiseless ? 0.0 : rng.clipped_normal(world.pour_noise_std);
  return pour_with_noise(geom, world.masses[static_cast<std::size_t>(world.task_cup)], estimated_mass, goal, noise);
}

struct PouringEpisode {
  double cost = 0.0;
  std::array<double, 2> estimates{};
  std::array<int, 2> measurements{};
  double goal = 0.0;
  PourResult pour;
};

/// One measure-then-pour episode. Every random draw is taken up front in a
/// fixed order, so changing p_e only changes which pre-drawn measurements are
/// used.
inline PouringEpisode pouring_episode(const PouringExplorationPolicy& policy, const PouringWorld& world,
                                      const CupGeometry& geom, const PouringGoal& goal_dist, Rng& rng,
                                      bool noiseless) {
  if (policy.horizon < 2) throw std::invalid_argument("pouring_episode: horizon must be >= 2");
  const auto choices = static_cast<std::size_t>(policy.horizon - 2);
  const auto max_per_cup = static_cast<std::size_t>(policy.horizon - 1);

  std::vector<double> allocation(choices);
  for (double& u : allocation) u = rng.uniform();
  std::array<std::vector<double>, 2> noise;
  for (auto& cup_noise : noise) {
    cup_noise.resize(max_per_cup);
    for (double& e : cup_noise) e = rng.clipped_normal(world.meas_noise_std);
  }
  const double goal = goal_dist.sample(rng);
  const double pour_noise = rng.clipped_normal(world.pour_noise_std);

  const auto task = static_cast<std::size_t>(world.task_cup);
  const std::size_t other = 1 - task;
  PouringEpisode ep;
  std::array<double, 2> sums{};
  auto measure = [&](std::size_t cup) {
    const auto k = static_cast<std::size_t>(ep.measurements[cup]);
    sums[cup] += world.masses[cup] + (noiseless ? 0.0 : noise[cup][k]);
    ep.measurements[cup] += 1;
  };
  measure(0);
  measure(1);
  for (double u : allocation) measure(u < policy.p_e ? task : other);
  for (std::size_t c = 0; c < 2; ++c) ep.estimates[c] = sums[c] / ep.measurements[c];

  ep.goal = goal;
  ep.pour = pour_with_noise(geom, world.masses[task], std::max(0.0, ep.estimates[task]), goal,
                            noiseless ? 0.0 : pour_noise);
  ep.cost = ep.pour.cost;
  return ep;
}

struct PouringTrainConfig {
  Objective objective = Objective::kTaskOriented;
  CupGeometry geom;
  PouringGoal goal;
  double meas_noise_std = 30.0;
  double pour_noise_std = 5.0;
  double mass_lo = 150.0;
  double mass_hi = 300.0;
  int horizon = 6;
  AdamConfig adam{5e-3, 0.9, 0.999, 1e-8, 0.0};
  double fd_delta = 0.05;
  double p_lower = 0.01;
  double p_upper = 0.99;
  int fd_samples = 10;
  int batch_size = 100;
  int n_batches = 300;
  double init_p = 0.5;
  int eval_episodes = 2000;
  std::uint64_t seed = 0;
  bool noiseless = false;

  void validate() const {
    geom.validate();
    adam.validate();
    if (horizon < 2) throw std::invalid_argument("pouring: horizon must be >= 2");
    if (!(p_lower < p_upper) || p_lower < 0.0 || p_upper > 1.0)
      throw std::invalid_argument("pouring: need 0 <= p_lower < p_upper <= 1");
    if (!(init_p > 0.0 && init_p < 1.0)) throw std::invalid_argument("pouring: init_p must be in (0, 1)");
    if (batch_size < 1 || n_batches < 0 || eval_episodes < 1)
      throw std::invalid_argument("pouring: batch_size and eval_episodes must be >= 1, n_batches >= 0");
    if (fd_samples < 2) throw std::invalid_argument("pouring: fd_samples must be >= 2");
    if (!(fd_delta > 0.0)) throw std::invalid_argument("pouring: fd_delta must be > 0");
    if (meas_noise_std < 0.0 || pour_noise_std < 0.0) throw std::invalid_argument("pouring: noise std must be >= 0");
    if (!(mass_lo <= mass_hi)) throw std::invalid_argument("pouring: mass range is empty");
    if (geom.capacity() * geom.density < mass_hi)
      throw std::invalid_argument("pouring: cup capacity is below the largest initial mass");
  }
};

/// Episode k of a batch: world masses are drawn first, then the episode.
inline PouringEpisode pouring_batch_episode(const PouringTrainConfig& cfg, double p_e, Phase phase,
                                            std::uint64_t batch, std::uint64_t k) {
  Rng rng = substream(cfg.seed, phase, batch, k);
  PouringWorld world;
  world.masses = {rng.uniform(cfg.mass_lo, cfg.mass_hi), rng.uniform(cfg.mass_lo, cfg.mass_hi)};
  world.meas_noise_std = cfg.meas_noise_std;
  world.pour_noise_std = cfg.pour_noise_std;
  PouringEpisode ep = pouring_episode({p_e, cfg.horizon}, world, cfg.geom, cfg.goal, rng, cfg.noiseless);
  if (cfg.objective == Objective::kTaskAgnostic) {
    // Reuse `cost` as the per-episode training loss.
    const double e0 = ep.estimates[0] - world.masses[0];
    const double e1 = ep.estimates[1] - world.masses[1];
    ep.cost = e0 * e0 + e1 * e1;
  }
  return ep;
}

/// Batch-mean training loss: task cost J or squared mass error in g^2.
inline double pouring_loss(const PouringTrainConfig& cfg, double p_e, std::uint64_t batch) {
  double total = 0.0;
  for (int k = 0; k < cfg.batch_size; ++k)
    total += pouring_batch_episode(cfg, p_e, Phase::kPourTrain, batch, static_cast<std::uint64_t>(k)).cost;
  return total / cfg.batch_size;
}

/// Mean task cost over a fixed set of held-out episodes.
inline double pouring_eval_cost(const PouringTrainConfig& cfg, double p_e) {
  PouringTrainConfig task_cfg = cfg;
  task_cfg.objective = Objective::kTaskOriented;
  std::vector<double> costs(static_cast<std::size_t>(cfg.eval_episodes));
  parallel_for(costs.size(), [&](std::size_t k) {
    costs[k] = pouring_batch_episode(task_cfg, p_e, Phase::kPourEval, 0, k).cost;
  });
  double total = 0.0;
  for (double c : costs) total += c;
  return total / static_cast<double>(costs.size());
}

struct PouringCurvePoint {
  int batch = 0;
  double loss = 0.0;
  double p_e = 0.0;
};

struct PouringTrainResult {
  double p_e = 0.0;
  std::vector<PouringCurvePoint> curve;
  double final_eval_cost = 0.0;
};

inline PouringTrainResult train_pouring(const PouringTrainConfig& cfg) {
  cfg.validate();
  PouringTrainResult out;
  double p = cfg.init_p;
  AdamState adam = AdamState::zeros(1);
  const PlaneFitSpec fd{cfg.fd_delta, Vec::Constant(1, cfg.p_lower), Vec::Constant(1, cfg.p_upper), cfg.fd_samples};

  out.curve.push_back({0, pouring_loss(cfg, p, 0), p});
  for (int b = 0; b < cfg.n_batches; ++b) {
    const auto batch = static_cast<std::uint64_t>(b);
    auto objective = [&](const Vec& x) { return pouring_loss(cfg, x[0], batch); };
    Rng fd_rng = substream(cfg.seed, Phase::kFiniteDiff, batch, 1);
    const PlaneFitResult grad = plane_fit_gradient(objective, Vec::Constant(1, p), fd, fd_rng);
    AdamResult step = adam_step(Vec::Constant(1, p), grad.gradient, adam, cfg.adam);
    adam = std::move(step.state);
    p = std::clamp(step.params[0], cfg.p_lower, cfg.p_upper);
    out.curve.push_back({b + 1, pouring_loss(cfg, p, static_cast<std::uint64_t>(b + 1)), p});
  }
  out.p_e = p;
  out.final_eval_cost = pouring_eval_cost(cfg, p);
  return out;
}

}  // namespace taskexplore
