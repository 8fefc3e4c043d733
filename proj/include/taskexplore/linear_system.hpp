#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "taskexplore/random.hpp"

namespace taskexplore {

/// Distribution of ground-truth eigenvalues: independent normals, clamped.
struct ThetaDistribution {
  Vec mean;
  double std = 0.2;
  double cap = 1.1;
};

inline Vec sample_theta(const ThetaDistribution& dist, Rng& rng) {
  Vec theta(dist.mean.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    theta[i] = std::clamp(rng.normal(dist.mean[i], dist.std), -dist.cap, dist.cap);
  return theta;
}

inline constexpr double kOrthonormalTol = 1e-10;

inline bool is_orthonormal(const Mat& basis_u, double tol = kOrthonormalTol) {
  if (basis_u.rows() != basis_u.cols()) return false;
  const Mat gram = basis_u.transpose() * basis_u;
  return (gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= tol;
}

/// A = U diag(theta) U^T.
inline Mat assemble_dynamics(const Mat& basis_u, const Vec& theta) {
  if (basis_u.cols() != theta.size())
    throw std::invalid_argument("assemble_dynamics: basis and theta dimension mismatch");
  if (!is_orthonormal(basis_u))
    throw std::invalid_argument("assemble_dynamics: basis is not orthonormal");
  return basis_u * theta.asDiagonal() * basis_u.transpose();
}

/// Orthonormal basis from the QR factorization of a Gaussian matrix.
inline Mat random_orthonormal_basis(Eigen::Index n, Rng& rng) {
  const Mat gauss = rng.normal_matrix(n, n, 1.0);
  Eigen::HouseholderQR<Mat> qr(gauss);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  // Fix column signs so the factorization is unique.
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

/// Input matrix with i.i.d. Normal(0, 1/n) entries.
inline Mat random_input_matrix(Eigen::Index n, Eigen::Index m, Rng& rng) {
  return rng.normal_matrix(n, m, 1.0 / std::sqrt(static_cast<double>(n)));
}

/// Discrete-time linear system x' = A x + B u + w with A = U diag(theta) U^T.
struct LinearSystem {
  Mat basis_u;
  Vec theta;
  Mat input_b;
  double obs_noise_std = 0.0;
  double dyn_noise_std = 0.0;
  Mat a;  // cached U diag(theta) U^T

  static LinearSystem make(Mat basis_u, Vec theta, Mat input_b, double obs_noise_std,
                           double dyn_noise_std) {
    if (input_b.rows() != basis_u.rows())
      throw std::invalid_argument("LinearSystem: B row count must equal state dimension");
    if (obs_noise_std < 0.0 || dyn_noise_std < 0.0)
      throw std::invalid_argument("LinearSystem: noise std must be >= 0");
    LinearSystem sys{std::move(basis_u), std::move(theta), std::move(input_b),
                     obs_noise_std, dyn_noise_std, Mat()};
    sys.a = assemble_dynamics(sys.basis_u, sys.theta);
    return sys;
  }

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return input_b.cols(); }
};

/// States x_1..x_T, observations o_0..o_T and applied actions u_0..u_{T-1}.
/// A diverged rollout stops early; `horizon` keeps the requested length.
struct Trajectory {
  Vec x0;
  std::vector<Vec> states;
  std::vector<Vec> observations;
  std::vector<Vec> actions;
  int horizon = 0;
  bool diverged = false;

  int steps() const { return static_cast<int>(actions.size()); }
  /// State at time t in [0, steps()].
  const Vec& state(int t) const { return t == 0 ? x0 : states[static_cast<std::size_t>(t - 1)]; }
};

inline constexpr double kDivergenceBound = 1e6;

/// Simulates `horizon` steps. The controller is called as controller(t, o_t)
/// and sees the noisy observation of the current state.
template <typename Controller>
Trajectory rollout(const LinearSystem& sys, Controller&& controller, const Vec& x0, int horizon,
                   Rng& rng, bool noiseless) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  if (x0.size() != sys.state_dim()) throw std::invalid_argument("rollout: x0 dimension mismatch");
  const Eigen::Index n = sys.state_dim();
  const double obs_std = noiseless ? 0.0 : sys.obs_noise_std;
  const double dyn_std = noiseless ? 0.0 : sys.dyn_noise_std;

  auto observe = [&](const Vec& x) -> Vec {
    if (obs_std == 0.0) return x;
    return x + rng.normal_vector(n, obs_std);
  };

  Trajectory traj;
  traj.x0 = x0;
  traj.horizon = horizon;
  traj.states.reserve(static_cast<std::size_t>(horizon));
  traj.actions.reserve(static_cast<std::size_t>(horizon));
  traj.observations.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.observations.push_back(observe(x0));

  Vec x = x0;
  for (int t = 0; t < horizon; ++t) {
    Vec u = controller(t, traj.observations.back());
    if (u.size() != sys.input_dim()) throw std::invalid_argument("rollout: controller output dimension mismatch");
    Vec next = sys.a * x + sys.input_b * u;
    if (dyn_std != 0.0) next += rng.normal_vector(n, dyn_std);
    if (!next.allFinite() || !u.allFinite()) {
      traj.diverged = true;
      break;
    }
    traj.actions.push_back(std::move(u));
    traj.states.push_back(next);
    traj.observations.push_back(observe(next));
    x = std::move(next);
    if (x.cwiseAbs().maxCoeff() > kDivergenceBound) {
      traj.diverged = t + 1 < horizon;
      break;
    }
  }
  return traj;
}

/// Time-invariant linear feedback u = K o.
struct LinearFeedback {
  const Mat* gains;
  Vec operator()(int, const Vec& o) const { return *gains * o; }
};

}  // namespace taskexplore
