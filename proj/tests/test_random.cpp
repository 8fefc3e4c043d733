#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "taskexplore/parallel.hpp"
#include "taskexplore/random.hpp"

using namespace taskexplore;

TEST_CASE("substreams are reproducible and distinct") {
  Rng a = substream(7, Phase::kTrainBatch, 3, 11);
  Rng b = substream(7, Phase::kTrainBatch, 3, 11);
  Rng c = substream(7, Phase::kTrainBatch, 3, 12);
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next();
    REQUIRE(x == b.next());
    CHECK(x != c.next());
  }
}

TEST_CASE("normal draws have unit moments") {
  Rng rng{42};
  const int n = 200000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(sum_sq / n - mean * mean == Catch::Approx(1.0).epsilon(0.01));
}

TEST_CASE("clipped normal stays within one standard deviation") {
  Rng rng{1};
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.clipped_normal(30.0);
    REQUIRE(x >= -30.0);
    REQUIRE(x <= 30.0);
  }
}

TEST_CASE("permutation covers every index once") {
  Rng rng{5};
  const auto perm = permutation(1000, rng);
  std::set<std::size_t> seen(perm.begin(), perm.end());
  CHECK(seen.size() == 1000);
  CHECK(*seen.rbegin() == 999);
}

TEST_CASE("parallel_for result is independent of worker count") {
  std::vector<double> serial(257);
  std::vector<double> threaded(257);
  auto body = [](std::vector<double>& out) {
    return [&out](std::size_t i) {
      Rng rng = substream(3, Phase::kDemo, 0, i);
      out[i] = rng.normal();
    };
  };
  parallel_for(serial.size(), body(serial), 1);
  parallel_for(threaded.size(), body(threaded), 4);
  CHECK(serial == threaded);
}

TEST_CASE("parallel_for propagates exceptions") {
  CHECK_THROWS_AS(parallel_for(
                      10, [](std::size_t i) { if (i == 7) throw std::runtime_error("boom"); }, 3),
                  std::runtime_error);
}
