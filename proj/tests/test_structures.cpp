#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace spn;
using namespace spn::testing;

TEST(Rng, EngineIsTheStandardMersenneTwister) {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the standard.
  Rng rng(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  EXPECT_EQ(x, 9981545732273789042ULL);
}

TEST(Rng, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Rng, DirichletMoments) {
  Rng rng(17);
  for (double alpha : {0.5, 1.0, 2.0}) {
    double s0 = 0, s00 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const auto w = rng.dirichlet(3, alpha);
      EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
      s0 += w[0];
      s00 += w[0] * w[0];
    }
    const double mean = s0 / n;
    const double var = s00 / n - mean * mean;
    EXPECT_NEAR(mean, 1.0 / 3, 0.01);
    // Var of one coordinate of a symmetric Dirichlet(alpha) on 3 cells.
    const double a0 = 3 * alpha;
    EXPECT_NEAR(var, (alpha * (a0 - alpha)) / (a0 * a0 * (a0 + 1)), 0.005);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(3);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.01);
}

TEST(Grid, VariableCountsAndValidity) {
  for (int l : {2, 3, 4}) {
    for (auto cells : {GridSpec::Cells::leaves, GridSpec::Cells::sums}) {
      const SpnGraph g = gen_pd_grid({l, GridSpec::Leaves::indicators, 2, cells});
      EXPECT_EQ(g.num_variables(), static_cast<std::size_t>(l * l));
      const auto r = validate(g);
      EXPECT_TRUE(r.complete);
      EXPECT_TRUE(r.decomposable);
      EXPECT_EQ(g.variable(l + 1).name, "X1_1");
      // The root joins l-1 vertical and l-1 horizontal splits.
      EXPECT_EQ(g.node(g.root()).children().size(), static_cast<std::size_t>(2 * (l - 1)));
    }
  }
}

TEST(Grid, FrozenSizes) {
  // Unit regions enter their parents directly: {nodes, edges, sums}.
  const std::size_t leaves[3][3] = {{31, 54, 5}, {141, 288, 27}, {436, 960, 84}};
  for (int l = 2; l <= 4; ++l) {
    const SpnGraph g = gen_pd_grid({l});
    EXPECT_EQ(g.size(), leaves[l - 2][0]) << l;
    EXPECT_EQ(g.num_edges(), leaves[l - 2][1]) << l;
    EXPECT_EQ(g.sums().size(), leaves[l - 2][2]) << l;
  }
}

TEST(Grid, GaussianLeavesAndDeterminism) {
  GridSpec spec{3, GridSpec::Leaves::gaussians, 3};
  const SpnGraph g = gen_pd_grid(spec);
  EXPECT_FALSE(g.all_discrete());
  EXPECT_TRUE(validate(g).valid());
  EXPECT_EQ(g, gen_pd_grid(spec));
  EXPECT_NEAR(log_evaluate(g, Evidence(9)), 0.0, 1e-12);
  EXPECT_THROW(gen_pd_grid({1}), Error);
}

TEST(Grid, SharedCellSumsFactorizeTheDistribution) {
  const SpnGraph g = sample_weights(gen_pd_grid({2, GridSpec::Leaves::indicators, 2, GridSpec::Cells::sums}), {0.5, 4});
  const auto t = oracle::enumerate(g);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto x = t.assignment(i);
    double prod = 0;
    for (VarId v = 0; v < 4; ++v) prod += log_evaluate(g, Evidence(4).observe(v, x[v]));
    EXPECT_NEAR(t.log_probs[i], prod, 1e-12);
  }
}

TEST(Grid, DefaultGridIsNotFactorized) {
  const SpnGraph g = sample_weights(gen_pd_grid({2}), {0.5, 4});
  const double joint = log_evaluate(g, Evidence::complete(std::vector<int>{0, 0, 0, 0}));
  double prod = 0;
  for (VarId v = 0; v < 4; ++v) prod += log_evaluate(g, Evidence(4).observe(v, 0));
  EXPECT_GT(std::abs(joint - prod), 1e-3);
}

TEST(SampleWeights, SameSeedSameWeights) {
  const SpnGraph g = gen_pd_grid({3});
  const SpnGraph a = sample_weights(g, {1.0, 5});
  EXPECT_EQ(a, sample_weights(g, {1.0, 5}));
  EXPECT_NE(a, sample_weights(g, {1.0, 6}));
  for (NodeId s : a.sums()) {
    double t = 0;
    for (double w : a.node(s).sum().weights) t += w;
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
  EXPECT_THROW(sample_weights(g, {0.0, 1}), Error);
}

TEST(Chain, StructureAndProperties) {
  for (int k = 2; k <= 12; ++k) {
    const SpnGraph g = gen_chain(k);
    EXPECT_EQ(g.sums().size(), static_cast<std::size_t>(k));
    EXPECT_EQ(g.num_variables(), static_cast<std::size_t>(k + 1));
    const auto r = validate(g);
    EXPECT_TRUE(r.valid());
    EXPECT_EQ(r.selective, Tristate::yes);
    for (NodeId s : g.sums()) EXPECT_EQ(g.node(s).children().size(), 2u);
  }
  EXPECT_THROW(gen_chain(1), Error);
}

TEST(RandomSpn, IsValidAndReproducible) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    RandomSpnSpec spec;
    spec.num_variables = 2 + static_cast<int>(s % 9);
    spec.gaussian_leaves = s % 3 == 0;
    const SpnGraph g = gen_random_spn(spec, s);
    EXPECT_TRUE(validate(g, 0).valid());
    EXPECT_EQ(g, gen_random_spn(spec, s));
  }
}

TEST(DrawSamples, FrequenciesMatchTheModel) {
  const SpnGraph g = load_fixture("four_sums.json");
  const auto rows = draw_samples(g, 40000, 7);
  const auto t = oracle::enumerate(g);
  std::vector<double> freq(8, 0.0);
  for (const auto& r : rows) freq[t.index_of({(int)r[0], (int)r[1], (int)r[2]})] += 1.0 / rows.size();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(freq[i], std::exp(t.log_probs[i]), 0.01);
}
