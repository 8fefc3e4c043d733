#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace taskexplore {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Tags separating independent random substreams derived from one master seed.
enum class Phase : std::uint64_t {
  kWorld = 1,        // per-seed fixed quantities: U, B, theta sets, initial policy
  kTrainBatch = 2,   // training batch members
  kTrainShuffle = 3, // epoch permutations of the training set
  kEvalTest = 4,     // held-out regret evaluation
  kFiniteDiff = 5,   // plane-fit perturbations
  kReps = 6,
  kPourTrain = 7,
  kPourEval = 8,
  kDemo = 9,
};

/// Deterministic random stream.
///
/// Built on std::mt19937_64 and std::seed_seq, both of which are specified
/// bit-exactly by the standard. Distributions are implemented here rather
/// than with <random>'s distribution objects, whose algorithms are
/// implementation-defined, so output is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * key.size());
    for (std::uint64_t k : key) {
      words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
      words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    // Condense the key to one 64-bit seed; seeding the engine from a full
    // seed_seq costs ~20us, which dominates short rollouts.
    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 2> condensed{};
    seq.generate(condensed.begin(), condensed.end());
    engine_.seed((static_cast<std::uint64_t>(condensed[1]) << 32) | condensed[0]);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Normal(0, std^2) truncated to [-std, +std] by clipping.
  double clipped_normal(double std) {
    const double x = std * normal();
    return std::clamp(x, -std, std);
  }

  Vec normal_vector(Eigen::Index n, double std) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std * normal();
    return v;
  }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double std) {
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = std * normal();
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Substream keyed by (master seed, phase, batch index, sample index).
inline Rng substream(std::uint64_t seed, Phase phase, std::uint64_t batch,
                     std::uint64_t sample) {
  return Rng{seed, static_cast<std::uint64_t>(phase), batch, sample};
}

/// Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace taskexplore
