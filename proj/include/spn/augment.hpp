#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "spn/error.hpp"
#include "spn/evaluate.hpp"
#include "spn/graph.hpp"
#include "spn/oracle.hpp"
#include "spn/validate.hpp"

namespace spn {

/// Descendant relation restricted to sum nodes: bit j of row n is set iff the
/// j-th sum (in topological order) is n itself or a descendant of n.
class SumReachability {
 public:
  explicit SumReachability(const SpnGraph& g) : words_((g.sums().size() + 63) / 64), index_(g.size(), npos) {
    for (std::size_t j = 0; j < g.sums().size(); ++j) index_[g.sums()[j]] = j;
    bits_.assign(g.size() * words_, 0);
    for (NodeId n = 0; n < g.size(); ++n) {
      std::uint64_t* row = &bits_[n * words_];
      if (index_[n] != npos) row[index_[n] / 64] |= std::uint64_t{1} << (index_[n] % 64);
      for (NodeId c : g.node(n).children()) {
        const std::uint64_t* child = &bits_[c * words_];
        for (std::size_t w = 0; w < words_; ++w) row[w] |= child[w];
      }
    }
  }

  /// Position of sum `s` in the topological list of sums.
  std::size_t sum_index(NodeId s) const {
    if (s >= index_.size() || index_[s] == npos) throw Error(ErrorCode::NotASum, "node " + std::to_string(s));
    return index_[s];
  }
  bool is_sum(NodeId n) const { return n < index_.size() && index_[n] != npos; }

  /// True iff sum `s` is in desc(n) (including n == s).
  bool reaches(NodeId n, NodeId s) const {
    const std::size_t j = sum_index(s);
    return (bits_[n * words_ + j / 64] >> (j % 64)) & 1U;
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t words_;
  std::vector<std::size_t> index_;
  std::vector<std::uint64_t> bits_;
};

/// Ancestor sums of `s` (excluding s) having at least one child that does
/// not reach `s`. These are the sums that lose completeness when the
/// indicators of Z_s are attached below `s`.
inline std::vector<NodeId> conditioning_sums(const SpnGraph& g, const SumReachability& reach, NodeId s) {
  reach.sum_index(s);
  std::vector<NodeId> out;
  for (NodeId a : g.sums()) {
    if (a == s || !reach.reaches(a, s)) continue;
    for (NodeId c : g.node(a).children()) {
      if (!reach.reaches(c, s)) {
        out.push_back(a);
        break;
      }
    }
  }
  return out;
}

inline std::vector<NodeId> conditioning_sums(const SpnGraph& g, NodeId s) {
  if (!g.node(s).is_sum()) throw Error(ErrorCode::NotASum, "node " + std::to_string(s));
  return conditioning_sums(g, SumReachability(g), s);
}

/// Twin weights w-bar for the twin sums created by augmentation.
struct TwinWeightPolicy {
  enum class Kind { uniform, deterministic, explicit_weights };
  Kind kind = Kind::uniform;
  std::size_t deterministic_child = 0;
  std::map<NodeId, std::vector<double>> weights;  // original sum id -> twin weights

  static TwinWeightPolicy uniform() { return {}; }
  static TwinWeightPolicy deterministic(std::size_t child = 0) { return {Kind::deterministic, child, {}}; }
  static TwinWeightPolicy explicit_weights(std::map<NodeId, std::vector<double>> w) {
    return {Kind::explicit_weights, 0, std::move(w)};
  }

  std::vector<double> for_sum(NodeId sum, std::size_t num_children) const {
    switch (kind) {
      case Kind::uniform:
        return std::vector<double>(num_children, 1.0 / double(num_children));
      case Kind::deterministic: {
        std::vector<double> w(num_children, 0.0);
        w[std::min(deterministic_child, num_children - 1)] = 1.0;
        return w;
      }
      case Kind::explicit_weights: {
        const auto it = weights.find(sum);
        if (it == weights.end() || it->second.size() != num_children)
          throw Error(ErrorCode::InvalidArgument, "no twin weights for sum " + std::to_string(sum));
        double total = 0.0;
        for (double w : it->second) {
          if (w < 0.0) throw Error(ErrorCode::NegativeWeight, "twin weight of sum " + std::to_string(sum));
          total += w;
        }
        if (std::abs(total - 1.0) > 1e-9)
          throw Error(ErrorCode::NonNormalizedWeights, "twin weights of sum " + std::to_string(sum));
        return it->second;
      }
    }
    return {};
  }
};

struct LatentVariable {
  VarId var = 0;                    // id of Z_S in the augmented graph
  NodeId original_sum = 0;          // S in the original graph
  NodeId sum = 0;                   // S in the augmented graph
  std::vector<NodeId> links;        // P_S^k, k = 0..K_S-1
  std::vector<NodeId> indicators;   // lambda_{Z_S = k}
  std::optional<NodeId> twin;       // S-bar, present iff S has conditioning sums
  std::vector<double> twin_weights; // empty when there is no twin
};

/// Augmented SPN over X u Z together with the bookkeeping that relates it to
/// the original graph. Latent variables are indexed in topological order of
/// the original sums and occupy variable ids model_variable_count + j.
struct AugmentedSpn {
  SpnGraph graph;
  std::size_t model_variable_count = 0;
  std::vector<LatentVariable> latents;
  std::vector<NodeId> augmented_of_original;
  std::vector<std::optional<NodeId>> original_of_augmented;
  std::size_t twin_link_edges = 0;

  const LatentVariable& latent_of_sum(NodeId original_sum) const {
    for (const auto& lv : latents)
      if (lv.original_sum == original_sum) return lv;
    throw Error(ErrorCode::NotASum, "node " + std::to_string(original_sum));
  }
  VarId lv_of_sum(NodeId original_sum) const { return latent_of_sum(original_sum).var; }
  NodeId link_of(NodeId original_sum, std::size_t k) const { return latent_of_sum(original_sum).links.at(k); }
  std::optional<NodeId> twin_of(NodeId original_sum) const { return latent_of_sum(original_sum).twin; }
  std::size_t num_twins() const {
    return static_cast<std::size_t>(std::count_if(latents.begin(), latents.end(),
                                                  [](const LatentVariable& l) { return l.twin.has_value(); }));
  }
  const LatentVariable& latent_of_var(VarId z) const {
    if (z < model_variable_count || z >= model_variable_count + latents.size())
      throw Error(ErrorCode::NotAnLv, "variable " + std::to_string(z));
    return latents[z - model_variable_count];
  }
};

/// Introduces links, latent indicators and twin sums. Follows the standard
/// construction: every sum edge S -> C_k is routed through a new product
/// P_S^k = C_k x lambda_{Z_S=k}; a twin S-bar over the indicators of Z_S is
/// created when S has conditioning sums and is attached to every link of a
/// conditioning sum that does not reach S.
inline AugmentedSpn augment(const SpnGraph& g, const TwinWeightPolicy& policy = TwinWeightPolicy::uniform()) {
  const ValidationReport report = validate(g, 0);
  if (!report.valid()) throw Error(ErrorCode::InvalidInputSpn, "augmentation needs a complete and decomposable SPN");

  const SumReachability reach(g);
  const auto& sums = g.sums();
  const std::size_t nx = g.num_variables();

  AugmentedSpn out;
  out.model_variable_count = nx;
  GraphBuilder b(g.variables());
  for (std::size_t j = 0; j < sums.size(); ++j) {
    std::string name = "Z" + std::to_string(j);
    while (g.find_variable(name)) name += "_lv";
    b.add_variable(VarKind::discrete, static_cast<int>(g.node(sums[j]).children().size()), name);
  }

  // Indicators and twins only depend on the latent variables, so they are
  // created first; links of ancestor sums can then refer to them.
  out.latents.resize(sums.size());
  for (std::size_t j = 0; j < sums.size(); ++j) {
    auto& lv = out.latents[j];
    lv.var = nx + j;
    lv.original_sum = sums[j];
    const std::size_t k_s = g.node(sums[j]).children().size();
    for (std::size_t k = 0; k < k_s; ++k) lv.indicators.push_back(b.add_indicator(lv.var, static_cast<int>(k)));
    if (!conditioning_sums(g, reach, sums[j]).empty()) {
      lv.twin_weights = policy.for_sum(sums[j], k_s);
      lv.twin = b.add_sum(lv.indicators, lv.twin_weights);
    }
  }

  out.augmented_of_original.resize(g.size());
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.node(n);
    if (node.is_leaf()) {
      out.augmented_of_original[n] =
          node.is_indicator() ? b.add_indicator(node.indicator().var, node.indicator().state)
                              : b.add_gaussian(node.gaussian().var, node.gaussian().mean, node.gaussian().variance);
    } else if (node.is_product()) {
      std::vector<NodeId> kids;
      for (NodeId c : node.children()) kids.push_back(out.augmented_of_original[c]);
      out.augmented_of_original[n] = b.add_product(std::move(kids));
    } else {
      auto& lv = out.latents[reach.sum_index(n)];
      const SumNode& s = node.sum();
      for (std::size_t k = 0; k < s.children.size(); ++k) {
        const NodeId child = s.children[k];
        std::vector<NodeId> kids{out.augmented_of_original[child], lv.indicators[k]};
        for (std::size_t j = 0; j < sums.size(); ++j) {
          const NodeId other = sums[j];
          if (other == n || !reach.reaches(n, other) || reach.reaches(child, other)) continue;
          kids.push_back(*out.latents[j].twin);
          ++out.twin_link_edges;
        }
        lv.links.push_back(b.add_product(std::move(kids)));
      }
      lv.sum = b.add_sum(lv.links, s.weights);
      out.augmented_of_original[n] = lv.sum;
    }
  }

  auto built = b.build_with_map(out.augmented_of_original[g.root()]);
  out.graph = std::move(built.graph);
  // Every created node is reachable, so builder ids are the final ids.
  out.original_of_augmented.assign(out.graph.size(), std::nullopt);
  for (NodeId n = 0; n < g.size(); ++n) out.original_of_augmented[out.augmented_of_original[n]] = n;
  return out;
}

/// Partial assignment to latent variables: (variable id, state) pairs.
using LatentAssignment = std::vector<std::pair<VarId, int>>;

struct ConfiguredSpn {
  SpnGraph graph;
  LatentAssignment assignment;
  std::vector<NodeId> retained;                                // augmented ids, ascending
  std::vector<std::optional<NodeId>> configured_of_augmented;  // augmented id -> configured id
};

/// Deletes the indicators lambda_{Y=y'} (y' != y) and their links, then every
/// node no longer reachable from the root. Surviving edges keep their
/// weights, so the result is in general not locally normalized.
inline ConfiguredSpn configure(const AugmentedSpn& aug, const LatentAssignment& y) {
  std::vector<char> deleted(aug.graph.size(), 0);
  for (const auto& [z, state] : y) {
    const LatentVariable& lv = aug.latent_of_var(z);
    if (state < 0 || static_cast<std::size_t>(state) >= lv.links.size())
      throw Error(ErrorCode::StateOutOfRange, "state " + std::to_string(state) + " of latent " + std::to_string(z));
    for (std::size_t k = 0; k < lv.links.size(); ++k) {
      if (static_cast<int>(k) == state) continue;
      deleted[lv.links[k]] = 1;
      deleted[lv.indicators[k]] = 1;
    }
  }

  GraphBuilder b = GraphBuilder::from(aug.graph);
  for (NodeId n = 0; n < aug.graph.size(); ++n) {
    if (deleted[n]) continue;
    auto& payload = b.mutable_node(n).payload;
    if (auto* s = std::get_if<SumNode>(&payload)) {
      SumNode kept;
      for (std::size_t k = 0; k < s->children.size(); ++k) {
        if (deleted[s->children[k]]) continue;
        kept.children.push_back(s->children[k]);
        kept.weights.push_back(s->weights[k]);
      }
      *s = std::move(kept);
    } else if (auto* p = std::get_if<ProductNode>(&payload)) {
      std::erase_if(p->children, [&](NodeId c) { return deleted[c] != 0; });
    }
  }

  BuildOptions opts;
  opts.require_normalized = false;
  auto built = b.build_with_map(aug.graph.root(), opts);
  ConfiguredSpn out;
  out.graph = std::move(built.graph);
  out.assignment = y;
  out.configured_of_augmented = std::move(built.new_id);
  for (NodeId n = 0; n < aug.graph.size(); ++n)
    if (out.configured_of_augmented[n]) out.retained.push_back(n);
  return out;
}

/// Directed edges of the Bayesian-network reading of the augmented SPN:
/// Z_p -> Z_S for the latent parents of every sum and Z_S -> X for X in sc(S).
/// Latent j has id num_variables + j.
inline std::vector<std::pair<VarId, VarId>> bn_skeleton(const SpnGraph& g) {
  const SumReachability reach(g);
  const auto& sums = g.sums();
  const std::size_t nx = g.num_variables();
  std::set<std::pair<VarId, VarId>> edges;
  for (std::size_t j = 0; j < sums.size(); ++j) {
    for (std::size_t i = 0; i < sums.size(); ++i)
      if (i != j && reach.reaches(sums[i], sums[j])) edges.emplace(nx + i, nx + j);
    for (VarId x : g.scope(sums[j])) edges.emplace(nx + j, x);
  }
  return {edges.begin(), edges.end()};
}

struct Theorem1Report {
  NodeId sum = 0;
  std::size_t parent_configurations = 0;
  std::size_t sum_partition = 0;   // parent states whose configured SPN keeps S
  std::size_t twin_partition = 0;  // parent states whose configured SPN keeps the twin
  bool single_path = true;         // exactly one of S, S-bar survives each configuration
  double max_abs_error = 0.0;      // over |S'(Z_S=k, y_n, z) - w_k S'(y_n, z)|
  bool holds = false;
};

inline constexpr std::uint64_t kTheorem1StateBudget = std::uint64_t{1} << 20;

/// Checks, by enumeration of the augmented joint distribution, that the
/// weights (resp. twin weights) of `sum` are the conditional distribution of
/// Z_S given its latent parents, independently of the non-descendants.
/// The parent space is split by configuring the augmented SPN on each
/// parent state and observing whether S or its twin survives.
inline Theorem1Report check_theorem1(const SpnGraph& g, NodeId sum,
                                     const TwinWeightPolicy& policy = TwinWeightPolicy::uniform(),
                                     double tolerance = 1e-9) {
  if (!g.node(sum).is_sum()) throw Error(ErrorCode::NotASum, "node " + std::to_string(sum));
  const AugmentedSpn aug = augment(g, policy);
  if (joint_state_count(aug.graph) > kTheorem1StateBudget)
    throw Error(ErrorCode::TooLarge, "augmented joint state space exceeds 2^20");

  const SumReachability reach(g);
  const auto& sums = g.sums();
  const LatentVariable& target = aug.latent_of_sum(sum);
  const std::size_t nx = g.num_variables();

  std::vector<VarId> parents, children, non_desc;
  std::vector<char> role(aug.graph.num_variables(), 0);  // 1 parent, 2 child, 3 self
  for (std::size_t j = 0; j < sums.size(); ++j) {
    if (sums[j] == sum) continue;
    if (reach.reaches(sums[j], sum)) role[nx + j] = 1;
    if (reach.reaches(sum, sums[j])) role[nx + j] = 2;
  }
  for (VarId x : g.scope(sum)) role[x] = 2;
  role[target.var] = 3;
  for (VarId v = 0; v < role.size(); ++v) {
    if (role[v] == 1) parents.push_back(v);
    if (role[v] == 0) non_desc.push_back(v);
  }

  std::vector<VarId> keep = parents;
  keep.insert(keep.end(), non_desc.begin(), non_desc.end());
  keep.push_back(target.var);
  const auto table = oracle::marginalize_to(oracle::enumerate(aug.graph), keep);

  const auto& sum_weights = g.node(sum).sum().weights;
  const std::size_t k_s = sum_weights.size();

  Theorem1Report r;
  r.sum = sum;
  std::vector<int> z(parents.size(), 0);
  std::vector<int> cards;
  for (VarId p : parents) cards.push_back(aug.graph.variable(p).cardinality);
  std::vector<int> ny(non_desc.size(), 0);
  std::vector<int> ny_cards;
  for (VarId v : non_desc) ny_cards.push_back(aug.graph.variable(v).cardinality);

  auto advance = [](std::vector<int>& x, const std::vector<int>& c) {
    for (std::size_t i = x.size(); i-- > 0;) {
      if (++x[i] < c[i]) return true;
      x[i] = 0;
    }
    return false;
  };

  do {
    ++r.parent_configurations;
    LatentAssignment y;
    for (std::size_t i = 0; i < parents.size(); ++i) y.emplace_back(parents[i], z[i]);
    const ConfiguredSpn conf = configure(aug, y);
    const bool has_sum = conf.configured_of_augmented[target.sum].has_value();
    const bool has_twin = target.twin && conf.configured_of_augmented[*target.twin].has_value();
    if (has_sum == has_twin) r.single_path = false;
    if (has_sum)
      ++r.sum_partition;
    else
      ++r.twin_partition;
    const std::vector<double>& w = has_sum ? sum_weights : target.twin_weights;

    std::fill(ny.begin(), ny.end(), 0);
    do {
      std::vector<int> key = z;
      key.insert(key.end(), ny.begin(), ny.end());
      key.push_back(0);
      double total = 0.0;
      std::vector<double> joint(k_s);
      for (std::size_t k = 0; k < k_s; ++k) {
        key.back() = static_cast<int>(k);
        joint[k] = std::exp(table.log_probs[table.index_of(key)]);
        total += joint[k];
      }
      for (std::size_t k = 0; k < k_s; ++k)
        r.max_abs_error = std::max(r.max_abs_error, std::abs(joint[k] - w[k] * total));
    } while (advance(ny, ny_cards));
  } while (advance(z, cards));

  r.holds = r.single_path && r.max_abs_error <= tolerance;
  return r;
}

}  // namespace spn
