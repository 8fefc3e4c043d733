#include <catch2/catch_amalgamated.hpp>

#include "taskexplore/plane_fit.hpp"

using namespace taskexplore;

TEST_CASE("plane fit is exact on affine objectives") {
  Rng gen{11};
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index dim = 1 + trial % 6;
    const Vec g = gen.normal_vector(dim, 3.0);
    const double c = gen.normal(0.0, 5.0);
    const Vec x = gen.normal_vector(dim, 1.0);
    const auto spec = PlaneFitSpec::uniform_bounds(dim, 1e-3, -10.0, 10.0, static_cast<int>(2 * dim + 2));
    Rng rng = substream(1, Phase::kFiniteDiff, static_cast<std::uint64_t>(trial), 0);
    const auto r = plane_fit_gradient([&](const Vec& p) { return g.dot(p) + c; }, x, spec, rng);
    REQUIRE(r.rank == dim);
    CHECK((r.gradient - g).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("constant objective has zero gradient") {
  const auto spec = PlaneFitSpec::uniform_bounds(3, 0.1, -1.0, 1.0, 8);
  Rng rng{2};
  const auto r = plane_fit_gradient([](const Vec&) { return 4.2; }, Vec::Zero(3), spec, rng);
  CHECK(r.gradient.norm() == 0.0);
}

TEST_CASE("quadratic at (1, 0) matches analytic gradient") {
  // f = x1^2 + 2 x2 has gradient (2 x1, 2) = (2, 2).
  Vec x(2);
  x << 1.0, 0.0;
  const auto spec = PlaneFitSpec::uniform_bounds(2, 1e-3, -10.0, 10.0, 10);
  Rng rng{3};
  const auto r = plane_fit_gradient([](const Vec& p) { return p[0] * p[0] + 2.0 * p[1]; }, x, spec, rng);
  CHECK(r.gradient[0] == Catch::Approx(2.0).epsilon(0.01));
  CHECK(r.gradient[1] == Catch::Approx(2.0).epsilon(0.01));
}

TEST_CASE("samples respect the bounds") {
  Vec x(2);
  x << 0.01, 0.99;
  const PlaneFitSpec spec{0.5, Vec::Constant(2, 0.0), Vec::Constant(2, 1.0), 200};
  Rng rng{4};
  const auto r = plane_fit_gradient([](const Vec& p) { return p.sum(); }, x, spec, rng);
  CHECK((r.samples.array() >= 0.0).all());
  CHECK((r.samples.array() <= 1.0).all());
}

TEST_CASE("fully clipped samples are flagged degenerate") {
  const PlaneFitSpec spec{0.1, Vec::Constant(1, 0.5), Vec::Constant(1, 0.5), 5};
  Rng rng{5};
  const auto r = plane_fit_gradient([](const Vec& p) { return 3.0 * p[0]; }, Vec::Constant(1, 0.5), spec, rng);
  CHECK(r.degenerate);
  CHECK(r.gradient.size() == 1);
  CHECK(r.gradient[0] == 0.0);
}

TEST_CASE("invalid specs are rejected") {
  Rng rng{6};
  auto f = [](const Vec& p) { return p.sum(); };
  CHECK_THROWS_AS(plane_fit_gradient(f, Vec::Zero(3), PlaneFitSpec::uniform_bounds(3, 1e-3, -1, 1, 3), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(plane_fit_gradient(f, Vec::Zero(2), PlaneFitSpec::uniform_bounds(2, 0.0, -1, 1, 5), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(plane_fit_gradient(f, Vec::Zero(2), PlaneFitSpec::uniform_bounds(2, 1e-3, 1, -1, 5), rng),
                  std::invalid_argument);
}
