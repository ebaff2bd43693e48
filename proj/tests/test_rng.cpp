#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <set>
#include <vector>

#include "chartsim/parallel.hpp"
#include "chartsim/rng.hpp"

using namespace chartsim;

TEST(SplitMix, MatchesReferenceSequence) {
  // First three outputs of the reference generator seeded with 0.
  SplitMix64 g(0);
  EXPECT_EQ(g(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(g(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(g(), 0x06C45D188009454FULL);
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(SplitMix, UniformStaysInUnitInterval) {
  SplitMix64 g(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = g.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(SplitMix, BelowCoversRangeEvenly) {
  SplitMix64 g(11);
  std::vector<int> hist(7);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++hist[g.below(7)];
  // 3 sigma binomial bound per bucket
  const double p = 1.0 / 7.0, sigma = std::sqrt(n * p * (1 - p));
  for (int c : hist) EXPECT_NEAR(c, n * p, 3 * sigma);
}

TEST(SplitMix, RangeIsInclusive) {
  SplitMix64 g(5);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(g.range(-2, 2));
  EXPECT_EQ(seen, (std::set<int>{-2, -1, 0, 1, 2}));
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 50; ++b) seeds.insert(derive_seed(42, a, b));
  EXPECT_EQ(seeds.size(), 2500u);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
}

TEST(ParallelFor, ResultIndependentOfThreadCount) {
  auto run = [](unsigned threads) {
    std::vector<std::uint64_t> out(1000);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = derive_seed(7, i); }, threads);
    return out;
  };
  EXPECT_EQ(run(1), run(4));
}

TEST(ParallelFor, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(
                   10, [](std::size_t i) { if (i == 7) throw std::runtime_error("boom"); }, 3),
               std::runtime_error);
}
