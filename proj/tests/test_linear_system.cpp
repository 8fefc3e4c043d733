#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "taskexplore/linear_system.hpp"

using namespace taskexplore;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("theta sampling") {
  Rng rng{1};
  SECTION("zero std returns the mean") {
    const ThetaDistribution dist{vec({0.9, 0.6, -0.3}), 0.0, 1.1};
    CHECK(sample_theta(dist, rng) == dist.mean);
  }
  SECTION("draws beyond the cap clamp symmetrically") {
    const ThetaDistribution hi{vec({1.3}), 0.0, 1.1};
    CHECK(sample_theta(hi, rng)[0] == 1.1);
    const ThetaDistribution lo{vec({-1.2}), 0.0, 1.1};
    CHECK(sample_theta(lo, rng)[0] == -1.1);
  }
  SECTION("samples stay within the cap") {
    const ThetaDistribution dist{Vec::Constant(6, 0.9), 0.5, 1.1};
    for (int k = 0; k < 1000; ++k) CHECK(sample_theta(dist, rng).cwiseAbs().maxCoeff() <= 1.1);
  }
}

TEST_CASE("assemble_dynamics") {
  Rng rng{2};
  const Vec theta = vec({0.9, -0.4, 0.2, 1.05});
  CHECK(assemble_dynamics(Mat::Identity(4, 4), theta) == Mat(theta.asDiagonal()));

  const Mat u = random_orthonormal_basis(4, rng);
  REQUIRE(is_orthonormal(u));
  CHECK((assemble_dynamics(u, Vec::Ones(4)) - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);

  for (int trial = 0; trial < 50; ++trial) {
    const Mat basis = random_orthonormal_basis(6, rng);
    const Vec th = rng.normal_vector(6, 0.5);
    Eigen::SelfAdjointEigenSolver<Mat> eig(assemble_dynamics(basis, th));
    Vec sorted = th;
    std::sort(sorted.begin(), sorted.end());
    CHECK((eig.eigenvalues() - sorted).cwiseAbs().maxCoeff() <= 1e-10);
  }

  Mat skewed = Mat::Identity(2, 2);
  skewed(0, 1) = 0.1;
  CHECK_THROWS_AS(assemble_dynamics(skewed, Vec::Ones(2)), std::invalid_argument);
  CHECK_THROWS_AS(assemble_dynamics(Mat::Identity(3, 3), Vec::Ones(2)), std::invalid_argument);
}

TEST_CASE("rollout") {
  Rng rng{3};
  const Mat zero_gain = Mat::Zero(1, 2);
  SECTION("identity dynamics without input hold the state") {
    const auto sys = LinearSystem::make(Mat::Identity(2, 2), Vec::Ones(2), Mat::Ones(2, 1), 0.05, 0.05);
    const Vec x0 = vec({0.3, -0.7});
    const Trajectory traj = rollout(sys, LinearFeedback{&zero_gain}, x0, 5, rng, true);
    REQUIRE(traj.states.size() == 5);
    for (const Vec& x : traj.states) CHECK(x == x0);
    for (const Vec& o : traj.observations) CHECK(o == x0);
  }
  SECTION("scalar geometric decay") {
    const auto sys = LinearSystem::make(Mat::Identity(1, 1), vec({0.5}), Mat::Constant(1, 1, 3.0), 0.0, 0.0);
    const Mat k = Mat::Zero(1, 1);
    const Trajectory traj = rollout(sys, LinearFeedback{&k}, vec({1.0}), 3, rng, true);
    CHECK(traj.states[0][0] == 0.5);
    CHECK(traj.states[1][0] == 0.25);
    CHECK(traj.states[2][0] == 0.125);
  }
  SECTION("origin is a fixed point under linear feedback") {
    const auto sys = LinearSystem::make(random_orthonormal_basis(2, rng), vec({0.9, 0.5}), Mat::Ones(2, 1), 0.0, 0.0);
    const Trajectory traj = rollout(sys, LinearFeedback{&zero_gain}, Vec::Zero(2), 4, rng, false);
    for (const Vec& x : traj.states) CHECK(x.isZero(0.0));
    for (const Vec& u : traj.actions) CHECK(u.isZero(0.0));
  }
  SECTION("controller sees the noisy observation") {
    const auto sys = LinearSystem::make(Mat::Identity(1, 1), vec({0.5}), Mat::Ones(1, 1), 1.0, 0.0);
    const Mat k = Mat::Ones(1, 1);
    const Trajectory traj = rollout(sys, LinearFeedback{&k}, vec({0.0}), 3, rng, false);
    for (int t = 0; t < 3; ++t)
      CHECK(traj.actions[static_cast<std::size_t>(t)] == traj.observations[static_cast<std::size_t>(t)]);
    CHECK(traj.observations[0][0] != 0.0);
  }
  SECTION("unstable system truncates with a divergence flag") {
    const auto sys = LinearSystem::make(Mat::Identity(1, 1), vec({1e3}), Mat::Ones(1, 1), 0.0, 0.0);
    const Mat k = Mat::Zero(1, 1);
    const Trajectory traj = rollout(sys, LinearFeedback{&k}, vec({1.0}), 10, rng, true);
    CHECK(traj.diverged);
    CHECK(traj.steps() < 10);
    CHECK(traj.horizon == 10);
  }
  SECTION("same stream gives the same noisy trajectory") {
    const auto sys = LinearSystem::make(random_orthonormal_basis(3, rng), vec({0.9, 0.6, 0.2}), Mat::Ones(3, 1) / 3.0,
                                        0.05, 0.05);
    const Mat k = Mat::Constant(1, 3, 0.1);
    Rng a = substream(7, Phase::kEvalTest, 0, 0);
    Rng b = substream(7, Phase::kEvalTest, 0, 0);
    const Trajectory ta = rollout(sys, LinearFeedback{&k}, Vec::Ones(3), 8, a, false);
    const Trajectory tb = rollout(sys, LinearFeedback{&k}, Vec::Ones(3), 8, b, false);
    for (std::size_t t = 0; t < ta.states.size(); ++t) CHECK(ta.states[t] == tb.states[t]);
  }
}

TEST_CASE("LinearSystem validates its inputs") {
  CHECK_THROWS_AS(LinearSystem::make(Mat::Identity(2, 2), Vec::Ones(2), Mat::Ones(3, 1), 0.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(LinearSystem::make(Mat::Identity(2, 2), Vec::Ones(2), Mat::Ones(2, 1), -1.0, 0.0),
                  std::invalid_argument);
  Rng rng{4};
  const auto sys = LinearSystem::make(Mat::Identity(2, 2), Vec::Ones(2), Mat::Ones(2, 1), 0.0, 0.0);
  const Mat k = Mat::Zero(1, 2);
  CHECK_THROWS_AS(rollout(sys, LinearFeedback{&k}, Vec::Ones(3), 2, rng, true), std::invalid_argument);
  CHECK_THROWS_AS(rollout(sys, LinearFeedback{&k}, Vec::Ones(2), 0, rng, true), std::invalid_argument);
}
