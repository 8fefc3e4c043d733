#pragma once

#include <cmath>
#include <stdexcept>

#include "taskexplore/random.hpp"

namespace taskexplore {

struct AdamConfig {
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("adam: alpha must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be > 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("adam: weight_decay must be >= 0");
  }
};

struct AdamState {
  Vec m;
  Vec v;
  long t = 0;

  static AdamState zeros(Eigen::Index dim) { return {Vec::Zero(dim), Vec::Zero(dim), 0}; }
};

struct AdamResult {
  Vec params;
  AdamState state;
};

/// One bias-corrected Adam step with decoupled weight decay: the decay term
/// -alpha * weight_decay * params is added separately from the moment update.
inline AdamResult adam_step(const Vec& params, const Vec& grad, const AdamState& state,
                            const AdamConfig& cfg) {
  if (grad.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: dimension mismatch between params, grad and moments");
  }
  AdamResult out{params, state};
  AdamState& s = out.state;
  s.t += 1;
  s.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  s.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  const Vec m_hat = s.m / c1;
  const Vec v_hat = s.v / c2;
  out.params = params.array() - cfg.alpha * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  if (cfg.weight_decay != 0.0) out.params -= cfg.alpha * cfg.weight_decay * params;
  return out;
}

}  // namespace taskexplore
