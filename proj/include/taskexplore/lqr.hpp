#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskexplore/linear_system.hpp"

namespace taskexplore {

struct LqrCostSpec {
  Mat q_matrix;
  Mat r_matrix;
  int task_horizon = 20;
  Vec x0_task;
};

/// Time-varying feedback u_t = K_t o_t.
struct LqrPolicy {
  std::vector<Mat> gains;

  Vec operator()(int t, const Vec& o) const { return gains[static_cast<std::size_t>(t)] * o; }
};

struct LqrSolution {
  LqrPolicy policy;
  std::vector<Mat> cost_to_go;  // P_0..P_T
};

namespace detail {

// Riccati backward pass with compile-time dimensions N x M (Eigen::Dynamic
// for runtime sizes).
template <int N, int M>
void riccati_backward(const Mat& a_hat_in, const Mat& b_in, const LqrCostSpec& cost, LqrSolution& out) {
  using StateMat = Eigen::Matrix<double, N, N>;
  using InputMat = Eigen::Matrix<double, N, M>;
  using GainMat = Eigen::Matrix<double, M, N>;
  using ActionMat = Eigen::Matrix<double, M, M>;
  const StateMat a_hat = a_hat_in;
  const InputMat b = b_in;
  const StateMat q = cost.q_matrix;
  const ActionMat r = cost.r_matrix;
  const auto horizon = static_cast<std::size_t>(cost.task_horizon);
  StateMat p = q;
  out.cost_to_go[horizon] = cost.q_matrix;
  for (std::size_t k = horizon; k-- > 0;) {
    const GainMat btp = b.transpose() * p;
    const ActionMat gram = r + btp * b;
    const GainMat rhs = btp * a_hat;
    GainMat gain;
    Eigen::LLT<ActionMat> llt(gram);
    if (llt.info() == Eigen::Success) {
      gain = -llt.solve(rhs);
    } else {
      Eigen::FullPivLU<ActionMat> lu(gram);
      if (!lu.isInvertible())
        throw std::runtime_error("solve_lqr: R + B^T P B is singular at step " + std::to_string(k));
      gain = -lu.solve(rhs);
    }
    const StateMat closed = a_hat + b * gain;
    const StateMat next = q + gain.transpose() * r * gain + closed.transpose() * p * closed;
    p = 0.5 * (next + next.transpose());
    out.cost_to_go[k] = p;
    out.policy.gains[k] = gain;
  }
}

}  // namespace detail

/// Finite-horizon discrete Riccati recursion, P_T = Q. P_t is symmetrized
/// after every step.
inline LqrSolution solve_lqr_full(const Mat& a_hat, const Mat& b, const LqrCostSpec& cost) {
  const Eigen::Index n = a_hat.rows();
  const Eigen::Index m = b.cols();
  if (a_hat.cols() != n || b.rows() != n || cost.q_matrix.rows() != n || cost.q_matrix.cols() != n ||
      cost.r_matrix.rows() != m || cost.r_matrix.cols() != m)
    throw std::invalid_argument("solve_lqr: dimension mismatch");
  if (cost.task_horizon < 1) throw std::invalid_argument("solve_lqr: horizon must be >= 1");

  const auto horizon = static_cast<std::size_t>(cost.task_horizon);
  LqrSolution out;
  out.policy.gains.resize(horizon);
  out.cost_to_go.resize(horizon + 1);
  // Fixed-size fast path for the default experiment dimensions.
  if (n == 6 && m == 3)
    detail::riccati_backward<6, 3>(a_hat, b, cost, out);
  else
    detail::riccati_backward<Eigen::Dynamic, Eigen::Dynamic>(a_hat, b, cost, out);
  return out;
}

inline LqrPolicy solve_lqr(const Mat& a_hat, const Mat& b, const LqrCostSpec& cost) {
  return solve_lqr_full(a_hat, b, cost).policy;
}

/// Sum of x_t^T Q x_t over t = 1..T and u_t^T R u_t over the T applied actions.
/// A truncated (diverged) trajectory is charged its last state's cost for each
/// missing step.
inline double quadratic_cost(const Trajectory& traj, const Mat& q, const Mat& r) {
  if (q.rows() != traj.x0.size() || q.cols() != traj.x0.size())
    throw std::invalid_argument("quadratic_cost: Q dimension mismatch");
  double total = 0.0;
  for (const Vec& x : traj.states) total += x.dot(q * x);
  for (const Vec& u : traj.actions) {
    if (u.size() != r.rows() || r.rows() != r.cols())
      throw std::invalid_argument("quadratic_cost: R dimension mismatch");
    total += u.dot(r * u);
  }
  const int missing = traj.horizon - static_cast<int>(traj.states.size());
  if (missing > 0) {
    const Vec& last = traj.states.empty() ? traj.x0 : traj.states.back();
    total += static_cast<double>(missing) * last.dot(q * last);
  }
  return total;
}

inline double lqr_cost(const Trajectory& traj, const LqrCostSpec& cost) {
  if (traj.horizon != cost.task_horizon)
    throw std::invalid_argument("lqr_cost: trajectory horizon differs from task horizon");
  return quadratic_cost(traj, cost.q_matrix, cost.r_matrix);
}

/// Least-squares eigenvalue estimate from an observed trajectory.
///
/// With z_t = U^T o_t and c_t = U^T B u_t, the dynamics decouple per
/// eigen-coordinate: z_{t+1,i} = theta_i z_{t,i} + c_{t,i}. Each theta_i is
/// the scalar least-squares slope; an unexcited coordinate (zero denominator)
/// yields 0. The result is clamped to [-cap, cap].
inline Vec simopt_closed_form(const Mat& basis_u, const Mat& b, const Trajectory& traj, double cap) {
  const Eigen::Index n = basis_u.rows();
  Vec num = Vec::Zero(n);
  Vec den = Vec::Zero(n);
  const int steps = traj.steps();
  if (static_cast<int>(traj.observations.size()) < steps + 1)
    throw std::invalid_argument("simopt_closed_form: missing observations");
  const Mat ut = basis_u.transpose();
  const Mat utb = ut * b;
  Vec z = ut * traj.observations[0];
  for (int t = 0; t < steps; ++t) {
    const Vec z_next = ut * traj.observations[static_cast<std::size_t>(t) + 1];
    const Vec c = utb * traj.actions[static_cast<std::size_t>(t)];
    num.array() += z.array() * (z_next - c).array();
    den.array() += z.array().square();
    z = z_next;
  }
  Vec theta(n);
  for (Eigen::Index i = 0; i < n; ++i)
    theta[i] = den[i] > 0.0 ? std::clamp(num[i] / den[i], -cap, cap) : 0.0;
  return theta;
}

/// Sum of squared one-step prediction errors of A(theta) on the observations.
inline double one_step_prediction_error(const Mat& basis_u, const Mat& b, const Trajectory& traj,
                                        const Vec& theta) {
  const Mat a = basis_u * theta.asDiagonal() * basis_u.transpose();
  double err = 0.0;
  for (int t = 0; t < traj.steps(); ++t) {
    const auto k = static_cast<std::size_t>(t);
    err += (a * traj.observations[k] + b * traj.actions[k] - traj.observations[k + 1]).squaredNorm();
  }
  return err;
}

}  // namespace taskexplore
