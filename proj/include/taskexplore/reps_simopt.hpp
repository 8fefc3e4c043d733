#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "taskexplore/lqr.hpp"
#include "taskexplore/reps.hpp"

namespace taskexplore {

struct RepsSimoptIteration {
  double eta = 0.0;
  double kl = 0.0;
  double best_reward = 0.0;
};

struct RepsSimoptResult {
  Vec theta_hat;
  RepsState state;
  std::vector<RepsSimoptIteration> history;
  bool stalled = false;
};

/// Eigenvalue identification by REPS: samples are scored by the negative sum
/// of squared one-step prediction errors on `traj`. Samples are clamped to
/// [-cap, cap] before scoring, and so is the returned mean.
inline RepsSimoptResult reps_simopt(const Mat& basis_u, const Mat& b, const Trajectory& traj, const RepsState& prior,
                                    int iters, int samples_per_iter, double cap, Rng& rng) {
  if (prior.mu_z.size() != basis_u.cols() || prior.sigma_z.rows() != prior.mu_z.size() ||
      prior.sigma_z.cols() != prior.mu_z.size())
    throw std::invalid_argument("reps_simopt: prior dimension mismatch");
  if (Eigen::LLT<Mat>(prior.sigma_z).info() != Eigen::Success)
    throw std::invalid_argument("reps_simopt: prior covariance must be positive definite");
  if (iters < 0 || samples_per_iter < 2) throw std::invalid_argument("reps_simopt: need iters >= 0, samples >= 2");

  RepsSimoptResult out;
  out.state = prior;
  for (int it = 0; it < iters; ++it) {
    std::vector<Vec> samples = reps_draw(out.state, static_cast<std::size_t>(samples_per_iter), rng);
    std::vector<double> rewards;
    rewards.reserve(samples.size());
    for (Vec& z : samples) {
      z = z.cwiseMax(-cap).cwiseMin(cap);
      rewards.push_back(-one_step_prediction_error(basis_u, b, traj, z));
    }
    const RepsUpdateResult upd = reps_update(out.state, samples, rewards);
    if (upd.stalled) {
      out.stalled = true;
      break;
    }
    out.state = upd.state;
    out.history.push_back({upd.eta, upd.kl, *std::max_element(rewards.begin(), rewards.end())});
  }
  out.theta_hat = out.state.mu_z.cwiseMax(-cap).cwiseMin(cap);
  return out;
}

}  // namespace taskexplore
