#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_util.hpp"

using namespace spn;
using namespace spn::testing;

namespace {

std::vector<SpnGraph> corpus() {
  std::vector<SpnGraph> gs;
  gs.push_back(load_fixture("four_sums.json"));
  gs.push_back(load_fixture("low_depth_bias.json"));
  gs.push_back(load_fixture("mixture.json"));
  gs.push_back(gen_pd_grid({2}));
  gs.push_back(gen_pd_grid({2, GridSpec::Leaves::indicators, 2, GridSpec::Cells::sums}));
  gs.push_back(gen_chain(4));
  for (std::uint64_t s = 0; s < 6; ++s) gs.push_back(random_discrete_spn(5, s + 500));
  return gs;
}

std::size_t sum_children(const SpnGraph& g) {
  std::size_t k = 0;
  for (NodeId s : g.sums()) k += g.node(s).children().size();
  return k;
}

}  // namespace

TEST(ConditioningSums, Basics) {
  GraphBuilder b;
  b.add_variable(VarKind::continuous, 0);
  const NodeId a = b.add_gaussian(0, 0.0, 1.0);
  const NodeId c = b.add_gaussian(0, 2.0, 1.0);
  const SpnGraph gmm = b.build(b.add_sum({a, c}, {0.3, 0.7}));
  EXPECT_TRUE(conditioning_sums(gmm, gmm.root()).empty());
  try {
    conditioning_sums(gmm, 0);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotASum);
  }

  const SpnGraph g = load_fixture("four_sums.json");
  ASSERT_EQ(g.sums().size(), 4u);
  const NodeId root = g.root();
  for (NodeId s : g.sums()) {
    const auto cs = conditioning_sums(g, s);
    if (s == root)
      EXPECT_TRUE(cs.empty());
    else
      EXPECT_EQ(cs, std::vector<NodeId>{root});
  }
}

TEST(ConditioningSums, ChainSumsAreConditionedByAllAncestors) {
  const SpnGraph g = gen_chain(6);
  // g.sums() is bottom-up: the deepest sum first.
  const auto& sums = g.sums();
  for (std::size_t i = 0; i < sums.size(); ++i)
    EXPECT_EQ(conditioning_sums(g, sums[i]).size(), sums.size() - 1 - i);
}

TEST(Augment, FourSumsCensus) {
  const SpnGraph g = load_fixture("four_sums.json");
  const AugmentedSpn aug = augment(g);
  EXPECT_EQ(aug.model_variable_count, 3u);
  EXPECT_EQ(aug.latents.size(), 4u);
  EXPECT_EQ(aug.graph.num_variables(), 7u);
  EXPECT_EQ(aug.num_twins(), 3u);
  EXPECT_EQ(aug.twin_link_edges, 6u);
  EXPECT_FALSE(aug.twin_of(g.root()).has_value());
  for (const auto& lv : aug.latents) {
    EXPECT_EQ(aug.graph.variable(lv.var).cardinality, static_cast<int>(lv.links.size()));
    EXPECT_EQ(aug.graph.variable(lv.var).name, "Z" + std::to_string(lv.var - 3));
  }
}

TEST(Augment, StructureCountsAndValidity) {
  for (const SpnGraph& g : corpus()) {
    const AugmentedSpn aug = augment(g);
    const std::size_t k = sum_children(g);
    std::size_t twin_children = 0;
    for (const auto& lv : aug.latents)
      if (lv.twin) twin_children += lv.links.size();
    EXPECT_EQ(aug.graph.size(), g.size() + 2 * k + aug.num_twins());
    EXPECT_EQ(aug.graph.num_edges(), g.num_edges() + 2 * k + twin_children + aug.twin_link_edges);
    const auto r = validate(aug.graph);
    EXPECT_TRUE(r.complete);
    EXPECT_TRUE(r.decomposable);
    if (r.selective != Tristate::unknown) { EXPECT_EQ(r.selective, Tristate::yes); }
    // Size stays between |S| and a quadratic bound.
    EXPECT_LE(aug.graph.size() + aug.graph.num_edges(),
              4 * (g.size() + g.num_edges()) * (g.size() + g.num_edges()));
    for (NodeId n = 0; n < g.size(); ++n) EXPECT_EQ(aug.original_of_augmented[aug.augmented_of_original[n]], n);
  }
}

TEST(Augment, ChainTwinLinkEdgesAreQuadratic) {
  for (int k = 2; k <= 12; ++k) {
    const AugmentedSpn aug = augment(gen_chain(k));
    EXPECT_EQ(aug.twin_link_edges, static_cast<std::size_t>(k * (k - 1) / 2)) << "K=" << k;
    EXPECT_EQ(aug.num_twins(), static_cast<std::size_t>(k - 1));
  }
}

TEST(Augment, RejectsInvalidInput) {
  try {
    augment(load_fixture("broken_scope.json"));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInputSpn);
  }
}

TEST(Augment, PreservesTheModelDistribution) {
  for (const SpnGraph& g : corpus()) {
    for (auto policy : {TwinWeightPolicy::uniform(), TwinWeightPolicy::deterministic()}) {
      const AugmentedSpn aug = augment(g, policy);
      Rng rng(11);
      for (int i = 0; i < 50; ++i) {
        const Evidence e = random_evidence(g, rng);
        const double a = log_evaluate(g, e);
        const double b = log_evaluate(aug.graph, e.extended(aug.graph.num_variables()));
        if (a == kNegInf)
          EXPECT_EQ(b, kNegInf);
        else
          EXPECT_NEAR(a, b, 1e-9);
      }
    }
  }
}

TEST(Augment, GaussianMixtureLatentPosterior) {
  GraphBuilder b;
  b.add_variable(VarKind::continuous, 0);
  const NodeId a = b.add_gaussian(0, 0.0, 1.0);
  const NodeId c = b.add_gaussian(0, 2.0, 1.0);
  const SpnGraph g = b.build(b.add_sum({a, c}, {0.3, 0.7}));
  const AugmentedSpn aug = augment(g);
  EXPECT_EQ(aug.graph.num_variables(), 2u);
  for (double x : {-1.0, 0.5, 3.0}) {
    const double s = log_evaluate(g, Evidence(1).observe(0, x));
    const double z0 = log_evaluate(aug.graph, Evidence(2).observe(0, x).observe(1, 0));
    const double z1 = log_evaluate(aug.graph, Evidence(2).observe(0, x).observe(1, 1));
    EXPECT_NEAR(z0, std::log(0.3) + gaussian_log_pdf(x, 0.0, 1.0), 1e-13);
    EXPECT_NEAR(log_add(z0, z1), s, 1e-13);
  }
}

TEST(Augment, JointMarginalizesToTheOriginal) {
  for (const SpnGraph& g : corpus()) {
    const AugmentedSpn aug = augment(g);
    if (joint_state_count(aug.graph) > (1u << 20)) continue;
    const auto joint = oracle::enumerate(aug.graph);
    std::vector<VarId> xs(g.num_variables());
    for (VarId v = 0; v < xs.size(); ++v) xs[v] = v;
    const auto marg = oracle::marginalize_to(joint, xs);
    const auto orig = oracle::enumerate(g);
    ASSERT_EQ(marg.size(), orig.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
      if (orig.log_probs[i] == kNegInf)
        EXPECT_EQ(marg.log_probs[i], kNegInf);
      else
        EXPECT_NEAR(marg.log_probs[i], orig.log_probs[i], 1e-9);
    }
  }
}

TEST(Configure, EmptyAssignmentKeepsTheGraph) {
  const AugmentedSpn aug = augment(load_fixture("four_sums.json"));
  const ConfiguredSpn c = configure(aug, {});
  EXPECT_EQ(c.graph, aug.graph);
  EXPECT_EQ(c.retained.size(), aug.graph.size());
}

TEST(Configure, Errors) {
  const AugmentedSpn aug = augment(load_fixture("four_sums.json"));
  try {
    configure(aug, {{0, 0}});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotAnLv);
  }
  try {
    configure(aug, {{3, 5}});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StateOutOfRange);
  }
}

// A fully configured SPN computes S'(x, y) at y and vanishes at every other
// latent state; every sum of the assigned latent keeps a single child.
TEST(Configure, FullAssignmentSelectsOneJointState) {
  const SpnGraph g = load_fixture("four_sums.json");
  const AugmentedSpn aug = augment(g);
  const std::size_t nx = g.num_variables();
  const std::size_t n = aug.graph.num_variables();
  std::vector<int> card;
  for (const auto& lv : aug.latents) card.push_back(static_cast<int>(lv.links.size()));
  std::vector<int> y(card.size(), 0);
  auto advance = [&](std::vector<int>& v) {
    for (std::size_t i = v.size(); i-- > 0;) {
      if (++v[i] < card[i]) return true;
      v[i] = 0;
    }
    return false;
  };
  do {
    LatentAssignment a;
    for (std::size_t j = 0; j < y.size(); ++j) a.emplace_back(nx + j, y[j]);
    const ConfiguredSpn c = configure(aug, a);
    for (NodeId s = 0; s < c.graph.size(); ++s)
      if (c.graph.node(s).is_sum()) { EXPECT_EQ(c.graph.node(s).children().size(), 1u); }
    std::vector<int> yy(card.size(), 0);
    do {
      for (int xi = 0; xi < 8; ++xi) {
        Evidence e(n);
        for (std::size_t v = 0; v < nx; ++v) e.observe(v, (xi >> v) & 1);
        for (std::size_t j = 0; j < yy.size(); ++j) e.observe(nx + j, yy[j]);
        const double got = log_evaluate(c.graph, e);
        if (yy == y) {
          const double want = log_evaluate(aug.graph, e);
          if (want == kNegInf)
            EXPECT_EQ(got, kNegInf);
          else
            EXPECT_NEAR(got, want, 1e-12);
        } else {
          EXPECT_EQ(got, kNegInf);
        }
      }
    } while (advance(yy));
  } while (advance(y));
}

// Partial configuration: sums assigned by Y keep one child, and every
// retained node whose scope avoids Y keeps all of its children.
TEST(Configure, PartialAssignmentKeepsUnaffectedSubgraphs) {
  for (const SpnGraph& g : corpus()) {
    const AugmentedSpn aug = augment(g);
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      LatentAssignment y;
      std::set<VarId> ys;
      for (const auto& lv : aug.latents)
        if (rng.uniform() < 0.5) {
          y.emplace_back(lv.var, static_cast<int>(rng.below(lv.links.size())));
          ys.insert(lv.var);
        }
      const ConfiguredSpn c = configure(aug, y);
      for (NodeId n : c.retained) {
        const NodeId m = *c.configured_of_augmented[n];
        const auto sc = aug.graph.scope(n);
        const bool touches = std::any_of(sc.begin(), sc.end(), [&](VarId v) { return ys.count(v) > 0; });
        if (!touches) {
          EXPECT_EQ(c.graph.node(m).children().size(), aug.graph.node(n).children().size());
        }
      }
      for (const auto& lv : aug.latents) {
        if (!ys.count(lv.var)) continue;
        if (auto m = c.configured_of_augmented[lv.sum]) { EXPECT_EQ(c.graph.node(*m).children().size(), 1u); }
      }
      // Evaluating the configured SPN at Y = y equals the augmented SPN.
      Evidence e(aug.graph.num_variables());
      for (const auto& [v, s] : y) e.observe(v, s);
      Rng r2(trial);
      const Evidence ex = random_evidence(g, r2);
      for (VarId v = 0; v < g.num_variables(); ++v) e.set(v, ex[v]);
      const double got = log_evaluate(c.graph, e);
      const double want = log_evaluate(aug.graph, e);
      if (want == kNegInf)
        EXPECT_EQ(got, kNegInf);
      else
        EXPECT_NEAR(got, want, 1e-12);
    }
  }
}

TEST(BnSkeleton, GaussianMixtureAndFourSums) {
  GraphBuilder b;
  b.add_variable(VarKind::continuous, 0);
  const NodeId a = b.add_gaussian(0, 0.0, 1.0);
  const NodeId c = b.add_gaussian(0, 2.0, 1.0);
  const SpnGraph gmm = b.build(b.add_sum({a, c}, {0.3, 0.7}));
  EXPECT_EQ(bn_skeleton(gmm), (std::vector<std::pair<VarId, VarId>>{{1, 0}}));

  const SpnGraph g = load_fixture("four_sums.json");
  const auto edges = bn_skeleton(g);
  // Root latent (id 6) is the parent of the three others; each child sum
  // latent points at the two variables of its scope; the root at all three.
  std::set<std::pair<VarId, VarId>> want{{6, 3}, {6, 4}, {6, 5}, {6, 0}, {6, 1}, {6, 2}};
  for (std::size_t j = 0; j < 3; ++j)
    for (VarId x : g.scope(g.sums()[j])) want.emplace(3 + j, x);
  const std::set<std::pair<VarId, VarId>> got(edges.begin(), edges.end());
  EXPECT_EQ(got, want);
  for (auto [from, to] : edges) EXPECT_GE(from, g.num_variables());
}

TEST(LatentConditionals, HoldsOnFixtureForEveryPolicy) {
  SpnGraph g = load_fixture("four_sums.json");
  g = sample_weights(g, {1.0, 9});
  std::map<NodeId, std::vector<double>> tw;
  for (NodeId s : g.sums()) {
    Rng rng(s);
    tw[s] = rng.dirichlet(g.node(s).children().size(), 1.0);
  }
  for (auto policy : {TwinWeightPolicy::uniform(), TwinWeightPolicy::deterministic(1),
                      TwinWeightPolicy::explicit_weights(tw)}) {
    for (NodeId s : g.sums()) {
      const Theorem1Report r = check_theorem1(g, s, policy);
      EXPECT_TRUE(r.holds) << "sum " << s << " err " << r.max_abs_error;
      EXPECT_TRUE(r.single_path);
      EXPECT_EQ(r.sum_partition + r.twin_partition, r.parent_configurations);
      if (s == g.root()) { EXPECT_EQ(r.twin_partition, 0u); }
    }
  }
}

TEST(LatentConditionals, HoldsOnRandomSpns) {
  // Small SPNs keep the augmented joint table within the enumeration budget.
  RandomSpnSpec spec;
  spec.num_variables = 3;
  spec.max_sum_children = 2;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const SpnGraph g = gen_random_spn(spec, seed + 900);
    for (NodeId s : g.sums()) EXPECT_TRUE(check_theorem1(g, s).holds) << "seed " << seed << " sum " << s;
  }
}

TEST(LatentConditionals, Errors) {
  const SpnGraph g = load_fixture("four_sums.json");
  try {
    check_theorem1(g, 0);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotASum);
  }
  const SpnGraph big = gen_pd_grid({4});
  try {
    check_theorem1(big, big.root());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooLarge);
  }
}

TEST(TwinWeightPolicy, Variants) {
  EXPECT_EQ(TwinWeightPolicy::uniform().for_sum(0, 4), std::vector<double>(4, 0.25));
  EXPECT_EQ(TwinWeightPolicy::deterministic().for_sum(0, 3), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(TwinWeightPolicy::deterministic(2).for_sum(0, 3), (std::vector<double>{0, 0, 1}));
  const auto ex = TwinWeightPolicy::explicit_weights({{5, {0.2, 0.8}}});
  EXPECT_EQ(ex.for_sum(5, 2), (std::vector<double>{0.2, 0.8}));
  EXPECT_THROW(ex.for_sum(6, 2), Error);
  EXPECT_THROW(TwinWeightPolicy::explicit_weights({{5, {0.2, 0.7}}}).for_sum(5, 2), Error);
}

TEST(Augment, TwinWeightsFollowThePolicy) {
  const SpnGraph g = load_fixture("four_sums.json");
  const AugmentedSpn aug = augment(g, TwinWeightPolicy::deterministic());
  for (const auto& lv : aug.latents) {
    if (!lv.twin) continue;
    const auto& w = aug.graph.node(*lv.twin).sum().weights;
    EXPECT_EQ(w, lv.twin_weights);
    EXPECT_EQ(w.front(), 1.0);
    const auto kids = aug.graph.node(*lv.twin).children();
    EXPECT_TRUE(std::equal(kids.begin(), kids.end(), lv.indicators.begin(), lv.indicators.end()));
  }
}
