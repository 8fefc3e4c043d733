#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "taskexplore/parallel.hpp"
#include "taskexplore/random.hpp"

namespace taskexplore {

/// Settings for plane-fitting finite differences.
///
/// `delta` is the standard deviation of each Gaussian perturbation. Samples are
/// clipped so that every perturbed point stays inside [lower, upper].
struct PlaneFitSpec {
  double delta = 1e-3;
  Vec lower;
  Vec upper;
  int n_samples = 0;

  static PlaneFitSpec uniform_bounds(Eigen::Index dim, double delta, double lo, double hi,
                                     int n_samples) {
    return {delta, Vec::Constant(dim, lo), Vec::Constant(dim, hi), n_samples};
  }

  void validate(Eigen::Index dim) const {
    if (!(delta > 0.0)) throw std::invalid_argument("plane_fit: delta must be > 0");
    if (lower.size() != dim || upper.size() != dim)
      throw std::invalid_argument("plane_fit: bounds dimension mismatch");
    if ((lower.array() > upper.array()).any())
      throw std::invalid_argument("plane_fit: lower bound exceeds upper bound");
    if (n_samples < dim + 1) throw std::invalid_argument("plane_fit: need n_samples >= dim + 1");
  }
};

struct PlaneFitResult {
  Vec gradient;
  Mat samples;     // one perturbed point per column
  Vec values;      // objective at each sample
  Eigen::Index rank = 0;
  bool degenerate = false;  // centered samples had rank zero
};

/// Estimates the gradient of `f` at `x` by least-squares fitting a plane to
/// objective values at clipped Gaussian perturbations around `x`.
///
/// Objective evaluations run through parallel_for, so `f` must be safe to call
/// concurrently. Perturbations are drawn sequentially from `rng` before any
/// evaluation, so the result does not depend on scheduling.
template <typename Objective>
PlaneFitResult plane_fit_gradient(Objective&& f, const Vec& x, const PlaneFitSpec& spec, Rng& rng) {
  const Eigen::Index dim = x.size();
  spec.validate(dim);
  const auto n = static_cast<Eigen::Index>(spec.n_samples);

  PlaneFitResult out;
  out.samples.resize(dim, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double step = rng.normal(0.0, spec.delta);
      out.samples(i, k) = x[i] + std::clamp(step, spec.lower[i] - x[i], spec.upper[i] - x[i]);
    }
  }

  out.values.resize(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    const auto col = static_cast<Eigen::Index>(k);
    out.values[col] = f(Vec(out.samples.col(col)));
  });

  // Rows are samples: (X - X_bar) * g ~= (F - F_bar).
  const Mat centered = (out.samples.colwise() - out.samples.rowwise().mean()).transpose();
  const Vec responses = out.values.array() - out.values.mean();
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(centered);
  out.rank = cod.rank();
  if (out.rank == 0) {
    out.degenerate = true;
    out.gradient = Vec::Zero(dim);
  } else {
    out.gradient = cod.solve(responses);
  }
  return out;
}

}  // namespace taskexplore
