#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "spn/error.hpp"
#include "spn/graph.hpp"
#include "spn/rng.hpp"

namespace spn {

struct GridSpec {
  enum class Leaves { indicators, gaussians };
  /// How a single-variable region enters its parents: by its leaves directly
  /// (products are formed for every pair of nodes of the two subregions), or
  /// through one sum over those leaves that is shared by all parents.
  enum class Cells { leaves, sums };
  int side = 2;
  Leaves leaves = Leaves::indicators;
  int gaussians_per_cell = 2;
  Cells cells = Cells::leaves;
};

/// Poon-Domingos style grid SPN at unit resolution. Every axis-aligned
/// rectangle of two or more cells is one sum, shared between all parents. For
/// each split line (vertical splits first, then horizontal ones) the two
/// subregions are joined by products, one per pair of their nodes: a larger
/// region contributes its sum, a unit region each of its leaves (or its single
/// cell sum with Cells::sums). Variables are numbered row-major; sum weights
/// start uniform.
inline SpnGraph gen_pd_grid(const GridSpec& spec) {
  if (spec.side < 2) throw Error(ErrorCode::InvalidArgument, "grid side must be at least 2");
  if (spec.leaves == GridSpec::Leaves::gaussians && spec.gaussians_per_cell < 1)
    throw Error(ErrorCode::InvalidArgument, "need at least one Gaussian per cell");
  const int l = spec.side;
  GraphBuilder b;
  for (int r = 0; r < l; ++r)
    for (int c = 0; c < l; ++c)
      b.add_variable(spec.leaves == GridSpec::Leaves::indicators ? VarKind::discrete : VarKind::continuous,
                     spec.leaves == GridSpec::Leaves::indicators ? 2 : 0,
                     "X" + std::to_string(r) + "_" + std::to_string(c));

  std::map<std::tuple<int, int, int, int>, std::vector<NodeId>> memo;  // (row, col, height, width)
  auto region = [&](auto&& self, int r, int c, int h, int w) -> const std::vector<NodeId>& {
    const auto key = std::make_tuple(r, c, h, w);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::vector<NodeId> kids;
    if (h == 1 && w == 1) {
      const VarId v = static_cast<VarId>(r * l + c);
      if (spec.leaves == GridSpec::Leaves::indicators) {
        kids = {b.add_indicator(v, 0), b.add_indicator(v, 1)};
      } else {
        const int m = spec.gaussians_per_cell;
        for (int i = 0; i < m; ++i) {
          const double mean = m == 1 ? 0.0 : -1.0 + 2.0 * i / (m - 1);
          kids.push_back(b.add_gaussian(v, mean, 1.0));
        }
      }
      if (spec.cells == GridSpec::Cells::leaves) return memo.emplace(key, std::move(kids)).first->second;
    } else {
      auto join = [&](const std::vector<NodeId>& left, const std::vector<NodeId>& right) {
        for (NodeId a : left)
          for (NodeId z : right) kids.push_back(b.add_product({a, z}));
      };
      for (int s = 1; s < w; ++s) {
        const auto left = self(self, r, c, h, s);
        join(left, self(self, r, c + s, h, w - s));
      }
      for (int s = 1; s < h; ++s) {
        const auto top = self(self, r, c, s, w);
        join(top, self(self, r + s, c, h - s, w));
      }
    }
    const NodeId id = b.add_sum(std::move(kids));
    return memo.emplace(key, std::vector<NodeId>{id}).first->second;
  };
  const NodeId root = region(region, 0, 0, l, l).front();
  return b.build(root);
}

struct WeightPrior {
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

/// Draws every sum's weights i.i.d. from a symmetric Dirichlet, visiting sums
/// in topological order with one generator.
inline SpnGraph sample_weights(const SpnGraph& g, const WeightPrior& prior) {
  if (!(prior.alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "Dirichlet alpha must be positive");
  Rng rng(prior.seed);
  auto w = sum_weight_table(g);
  for (NodeId s : g.sums()) w[s] = rng.dirichlet(w[s].size(), prior.alpha);
  return with_sum_weights(g, w);
}

/// Chain of K sums over K+1 binary variables X_0..X_K. Sum k mixes sum k+1
/// with distribution D_k; the last sum mixes D_{K-1} and D_K. D_k is the
/// product of indicators setting X_k = 1 and every other variable to 0, so
/// all sums share the full scope and the chain is complete, decomposable and
/// selective.
inline SpnGraph gen_chain(int k_sums) {
  if (k_sums < 2) throw Error(ErrorCode::InvalidArgument, "chain needs at least 2 sums");
  GraphBuilder b;
  const int n = k_sums + 1;
  for (int i = 0; i < n; ++i) b.add_variable(VarKind::discrete, 2);
  std::vector<NodeId> dist;
  for (int d = 0; d < n; ++d) {
    std::vector<NodeId> lits;
    for (int i = 0; i < n; ++i) lits.push_back(b.add_indicator(static_cast<VarId>(i), i == d ? 1 : 0));
    dist.push_back(b.add_product(std::move(lits)));
  }
  NodeId below = b.add_sum({dist[k_sums - 1], dist[k_sums]});
  for (int k = k_sums - 2; k >= 0; --k) below = b.add_sum({below, dist[k]});
  return b.build(below);
}

struct RandomSpnSpec {
  int num_variables = 6;
  int cardinality = 2;
  int max_sum_children = 3;
  int max_product_children = 3;
  double share_probability = 0.3;  // reuse an existing sub-SPN over the same scope
  bool gaussian_leaves = false;
};

/// Random complete and decomposable SPN: sums over products over random
/// partitions of the scope, down to single-variable sums over leaves. Sub-SPNs
/// over an already seen scope are reused with some probability, giving DAGs.
/// Weights are Dirichlet(1).
inline SpnGraph gen_random_spn(const RandomSpnSpec& spec, std::uint64_t seed) {
  if (spec.num_variables < 1 || spec.max_sum_children < 1 || spec.max_product_children < 2)
    throw Error(ErrorCode::InvalidArgument, "bad random SPN spec");
  if (!spec.gaussian_leaves && spec.cardinality < 2) throw Error(ErrorCode::InvalidArgument, "cardinality < 2");
  Rng rng(seed);
  GraphBuilder b;
  for (int i = 0; i < spec.num_variables; ++i)
    b.add_variable(spec.gaussian_leaves ? VarKind::continuous : VarKind::discrete,
                   spec.gaussian_leaves ? 0 : spec.cardinality);
  std::map<std::vector<VarId>, std::vector<NodeId>> pool;

  auto make_sum = [&](auto&& self, const std::vector<VarId>& scope) -> NodeId {
    auto& seen = pool[scope];
    if (!seen.empty() && rng.uniform() < spec.share_probability) return seen[rng.below(seen.size())];
    std::vector<NodeId> kids;
    if (scope.size() == 1) {
      if (spec.gaussian_leaves) {
        const int m = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(spec.max_sum_children)));
        for (int i = 0; i < m; ++i) kids.push_back(b.add_gaussian(scope[0], rng.uniform(-2.0, 2.0), rng.uniform(0.2, 1.5)));
      } else {
        for (int s = 0; s < spec.cardinality; ++s) kids.push_back(b.add_indicator(scope[0], s));
      }
    } else {
      const int m = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(spec.max_sum_children)));
      for (int i = 0; i < m; ++i) {
        const std::size_t parts = std::min<std::size_t>(
            scope.size(), 2 + rng.below(static_cast<std::size_t>(spec.max_product_children - 1)));
        std::vector<VarId> shuffled = scope;
        for (std::size_t j = shuffled.size(); j-- > 1;) std::swap(shuffled[j], shuffled[rng.below(j + 1)]);
        std::vector<std::vector<VarId>> blocks(parts);
        for (std::size_t j = 0; j < shuffled.size(); ++j)
          blocks[j < parts ? j : rng.below(parts)].push_back(shuffled[j]);
        std::vector<NodeId> factors;
        for (auto& blk : blocks) {
          std::sort(blk.begin(), blk.end());
          factors.push_back(self(self, blk));
        }
        kids.push_back(b.add_product(std::move(factors)));
      }
    }
    const NodeId id = b.add_sum(kids, rng.dirichlet(kids.size(), 1.0));
    pool[scope].push_back(id);
    return id;
  };
  std::vector<VarId> all(static_cast<std::size_t>(spec.num_variables));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return b.build(make_sum(make_sum, all));
}

/// Ancestral sampling: sums pick a child by weight, products visit every
/// child, leaves emit a value. Returns one row of values per sample.
inline std::vector<std::vector<double>> draw_samples(const SpnGraph& g, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out(count, std::vector<double>(g.num_variables(), 0.0));
  std::vector<NodeId> stack;
  for (auto& row : out) {
    stack.assign(1, g.root());
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      const Node& node = g.node(n);
      if (const auto* s = std::get_if<SumNode>(&node.payload)) {
        double u = rng.uniform();
        std::size_t k = 0;
        while (k + 1 < s->weights.size() && u >= s->weights[k]) u -= s->weights[k++];
        stack.push_back(s->children[k]);
      } else if (const auto* p = std::get_if<ProductNode>(&node.payload)) {
        for (auto it = p->children.rbegin(); it != p->children.rend(); ++it) stack.push_back(*it);
      } else if (const auto* ind = std::get_if<IndicatorLeaf>(&node.payload)) {
        row[ind->var] = ind->state;
      } else {
        const GaussianLeaf& leaf = node.gaussian();
        row[leaf.var] = leaf.mean + std::sqrt(leaf.variance) * rng.normal();
      }
    }
  }
  return out;
}

}  // namespace spn
