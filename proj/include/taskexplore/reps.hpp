#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "taskexplore/random.hpp"

namespace taskexplore {

/// Gaussian search distribution of episodic REPS plus its KL step bound.
struct RepsState {
  Vec mu_z;
  Mat sigma_z;
  double eps_kl = 1.0;
};

inline constexpr double kRepsEtaMin = 1e-6;
inline constexpr double kRepsEtaMax = 1e6;
inline constexpr double kRepsCovRidge = 1e-9;
inline constexpr double kRepsWeightFloor = 1e-300;

/// Dual objective eta*eps + eta*log(mean(exp(R/eta))), evaluated with rewards
/// shifted by their maximum. The shift adds the constant max(R).
inline double reps_dual(std::span<const double> rewards, double eps_kl, double eta) {
  double best = -std::numeric_limits<double>::infinity();
  for (double r : rewards) best = std::max(best, r);
  double sum = 0.0;
  for (double r : rewards) sum += std::exp((r - best) / eta);
  return eta * eps_kl + eta * std::log(sum / static_cast<double>(rewards.size())) + best;
}

/// Normalized sample weights d_n / sum(d) at temperature eta.
inline Vec reps_weights(std::span<const double> rewards, double eta) {
  double best = -std::numeric_limits<double>::infinity();
  for (double r : rewards) best = std::max(best, r);
  Vec w(static_cast<Eigen::Index>(rewards.size()));
  for (std::size_t n = 0; n < rewards.size(); ++n)
    w[static_cast<Eigen::Index>(n)] = std::exp((rewards[n] - best) / eta);
  return w / w.sum();
}

/// KL divergence of normalized weights from the uniform distribution.
inline double reps_weight_kl(const Vec& weights) {
  const auto n = static_cast<double>(weights.size());
  double kl = 0.0;
  for (double w : weights)
    if (w > 0.0) kl += w * std::log(n * w);
  return kl;
}

/// Temperature minimizing the REPS dual over [kRepsEtaMin, kRepsEtaMax].
/// Brent's method runs on log(eta), where the dual is unimodal.
inline double reps_solve_temperature(std::span<const double> rewards, double eps_kl) {
  if (rewards.empty()) throw std::invalid_argument("reps: need at least one reward");
  if (!(eps_kl > 0.0)) throw std::invalid_argument("reps: eps_kl must be > 0");
  double lo = rewards[0];
  double hi = rewards[0];
  for (double r : rewards) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  // Constant rewards: the dual is eta*eps + const.
  if (hi - lo == 0.0) return kRepsEtaMin;

  auto dual_log = [&](double log_eta) { return reps_dual(rewards, eps_kl, std::exp(log_eta)); };
  std::uintmax_t max_iter = 500;
  const auto [log_eta, value] = boost::math::tools::brent_find_minima(
      dual_log, std::log(kRepsEtaMin), std::log(kRepsEtaMax),
      std::numeric_limits<double>::digits / 2, max_iter);
  (void)value;
  return std::clamp(std::exp(log_eta), kRepsEtaMin, kRepsEtaMax);
}

struct RepsUpdateResult {
  RepsState state;
  double eta = 0.0;
  Vec weights;      // normalized
  double kl = 0.0;  // of weights against uniform
  bool stalled = false;
};

/// Reweights samples by exp(R/eta*) and refits the Gaussian. The covariance
/// is taken around the new mean, then symmetrized and ridged by 1e-9 * I.
inline RepsUpdateResult reps_update(const RepsState& state, const std::vector<Vec>& samples,
                                    std::span<const double> rewards) {
  if (samples.size() != rewards.size())
    throw std::invalid_argument("reps_update: samples and rewards differ in length");
  if (samples.size() < 2) throw std::invalid_argument("reps_update: need at least two samples");
  const Eigen::Index dim = state.mu_z.size();
  for (const Vec& z : samples)
    if (z.size() != dim) throw std::invalid_argument("reps_update: sample dimension mismatch");

  RepsUpdateResult out;
  out.state = state;
  for (double r : rewards) {
    if (!std::isfinite(r)) {
      out.stalled = true;
      return out;
    }
  }
  out.eta = reps_solve_temperature(rewards, state.eps_kl);

  double best = -std::numeric_limits<double>::infinity();
  for (double r : rewards) best = std::max(best, r);
  Vec d(static_cast<Eigen::Index>(rewards.size()));
  for (std::size_t n = 0; n < rewards.size(); ++n)
    d[static_cast<Eigen::Index>(n)] = std::exp((rewards[n] - best) / out.eta);
  const double total = d.sum();
  if (!(total > kRepsWeightFloor) || !std::isfinite(total)) {
    out.stalled = true;
    return out;
  }
  out.weights = d / total;
  out.kl = reps_weight_kl(out.weights);

  Vec mean = Vec::Zero(dim);
  for (std::size_t n = 0; n < samples.size(); ++n)
    mean += out.weights[static_cast<Eigen::Index>(n)] * samples[n];
  Mat cov = Mat::Zero(dim, dim);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Vec diff = samples[n] - mean;
    cov += out.weights[static_cast<Eigen::Index>(n)] * diff * diff.transpose();
  }
  cov = 0.5 * (cov + cov.transpose()).eval();
  cov.diagonal().array() += kRepsCovRidge;

  out.state.mu_z = std::move(mean);
  out.state.sigma_z = std::move(cov);
  return out;
}

/// Draws `count` samples from Normal(mu_z, sigma_z).
inline std::vector<Vec> reps_draw(const RepsState& state, std::size_t count, Rng& rng) {
  const Eigen::Index dim = state.mu_z.size();
  Mat factor;
  Eigen::LLT<Mat> llt(state.sigma_z);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> eig(state.sigma_z);
    factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  std::vector<Vec> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(state.mu_z + factor * rng.normal_vector(dim, 1.0));
  return out;
}

}  // namespace taskexplore
