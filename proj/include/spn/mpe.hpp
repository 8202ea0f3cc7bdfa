#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "spn/augment.hpp"
#include "spn/evaluate.hpp"
#include "spn/evidence.hpp"
#include "spn/graph.hpp"
#include "spn/logmath.hpp"
#include "spn/validate.hpp"

namespace spn {

/// Max-product view of an SPN. Sums become max nodes over
/// log w_k + (v(C_k) + t_1 + t_2 + ...), where the optional per-edge terms
/// t_i carry the twin-weight corrections of the simulated augmented mode.
/// Terms are added left to right after the child value, which reproduces the
/// floating-point evaluation order of the explicit link products.
struct MaxProductNetwork {
  const SpnGraph* graph = nullptr;
  std::vector<std::vector<std::vector<double>>> edge_terms;  // [node][child index] -> terms; may be empty

  const SpnGraph& spn() const { return *graph; }

  double edge_value(NodeId s, std::size_t k, std::span<const double> values) const {
    const SumNode& sum = graph->node(s).sum();
    double v = values[sum.children[k]];
    if (!edge_terms.empty() && !edge_terms[s].empty())
      for (double t : edge_terms[s][k]) v += t;
    return sum.log_weights[k] + v;
  }
};

inline MaxProductNetwork to_mpn(const SpnGraph& g) { return MaxProductNetwork{&g, {}}; }

/// Maximum of a leaf over the evidence set and the value attaining it.
struct LeafMax {
  double log_value = kNegInf;
  double argmax = 0.0;
};

inline LeafMax leaf_max(const Node& leaf, const VarEvidence& ev) {
  if (const auto* ind = std::get_if<IndicatorLeaf>(&leaf.payload))
    return {admits_state(ev, ind->state) ? 0.0 : kNegInf, static_cast<double>(ind->state)};
  const GaussianLeaf& g = leaf.gaussian();
  double x = g.mean;
  if (const auto* c = std::get_if<Complete>(&ev))
    x = c->value;
  else if (const auto* iv = std::get_if<Interval>(&ev))
    x = std::clamp(g.mean, iv->lo, iv->hi);
  return {gaussian_log_pdf(x, g.mean, g.variance), x};
}

/// Upward max-product pass; out must have one slot per node.
inline void max_forward(const MaxProductNetwork& mpn, const Evidence& e, std::span<double> out) {
  const SpnGraph& g = mpn.spn();
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.node(n);
    if (const auto* s = std::get_if<SumNode>(&node.payload)) {
      double best = kNegInf;
      for (std::size_t k = 0; k < s->children.size(); ++k) best = std::max(best, mpn.edge_value(n, k, out));
      out[n] = best;
    } else if (const auto* p = std::get_if<ProductNode>(&node.payload)) {
      double acc = 0.0;
      for (NodeId c : p->children) acc += out[c];
      out[n] = acc;
    } else {
      out[n] = leaf_max(node, e[*node.leaf_var()]).log_value;
    }
  }
}

inline double mpn_value(const MaxProductNetwork& mpn, const Evidence& e) {
  check_evidence(mpn.spn(), e);
  std::vector<double> v(mpn.spn().size());
  max_forward(mpn, e, v);
  return v[mpn.spn().root()];
}

struct MpeResult {
  std::vector<double> assignment;  // one value per variable of the graph searched
  double log_score = kNegInf;      // MPN root value
  std::vector<NodeId> visited;     // max nodes on the backtracked path, ascending
};

namespace detail {

// Top-down backtracking: max nodes follow their first maximizing child,
// products follow all children, leaves write their maximizer.
inline MpeResult backtrack(const MaxProductNetwork& mpn, const Evidence& e) {
  const SpnGraph& g = mpn.spn();
  check_evidence(g, e);
  std::vector<double> v(g.size());
  max_forward(mpn, e, v);

  MpeResult r;
  r.log_score = v[g.root()];
  r.assignment.assign(g.num_variables(), std::numeric_limits<double>::quiet_NaN());
  std::vector<char> seen(g.size(), 0);
  std::deque<NodeId> queue{g.root()};
  seen[g.root()] = 1;
  auto push = [&](NodeId c) {
    if (!seen[c]) {
      seen[c] = 1;
      queue.push_back(c);
    }
  };
  while (!queue.empty()) {
    const NodeId n = queue.front();
    queue.pop_front();
    const Node& node = g.node(n);
    if (const auto* s = std::get_if<SumNode>(&node.payload)) {
      r.visited.push_back(n);
      std::size_t best_k = 0;
      double best = kNegInf;
      for (std::size_t k = 0; k < s->children.size(); ++k) {
        const double val = mpn.edge_value(n, k, v);
        if (val > best) {
          best = val;
          best_k = k;
        }
      }
      push(s->children[best_k]);
    } else if (const auto* p = std::get_if<ProductNode>(&node.payload)) {
      for (NodeId c : p->children) push(c);
    } else {
      r.assignment[*node.leaf_var()] = leaf_max(node, e[*node.leaf_var()]).argmax;
    }
  }
  // Only reachable on zero-probability evidence; keep the assignment total.
  for (const auto& var : g.variables()) {
    if (!std::isnan(r.assignment[var.id])) continue;
    const VarEvidence& ev = e[var.id];
    if (const auto* c = std::get_if<Complete>(&ev))
      r.assignment[var.id] = c->value;
    else if (const auto* sub = std::get_if<DiscreteSubset>(&ev))
      r.assignment[var.id] = sub->states.front();
    else if (const auto* iv = std::get_if<Interval>(&ev))
      r.assignment[var.id] = std::isfinite(iv->lo) ? iv->lo : (std::isfinite(iv->hi) ? iv->hi : 0.0);
    else
      r.assignment[var.id] = 0.0;
  }
  std::sort(r.visited.begin(), r.visited.end());
  return r;
}

}  // namespace detail

struct MpeOptions {
  bool verify_selective = false;
  std::uint64_t selectivity_budget = kDefaultSelectivityBudget;
};

/// Viterbi-style MPE. Exact when the SPN is selective; on other SPNs the
/// score is the best single induced tree, a lower bound on the true maximum.
inline MpeResult mpe_selective(const SpnGraph& g, const Evidence& e, const MpeOptions& opts = {}) {
  check_evidence(g, e);
  if (opts.verify_selective && validate(g, opts.selectivity_budget).selective == Tristate::no)
    throw Error(ErrorCode::NotSelective, "the SPN is not selective");
  return detail::backtrack(to_mpn(g), e);
}

enum class MpeMode { explicit_graph, simulated };

/// Twin-weight corrections for running augmented MPE on the original graph.
/// For each sum S and child k the terms are log h(S'-bar) for every sum S'
/// below S that C_k does not reach, in topological order of the sums, where h
/// is the largest twin weight consistent with the latent evidence.
struct TwinCorrection {
  std::vector<std::vector<std::vector<double>>> edge_terms;
  std::vector<std::optional<std::vector<double>>> twin_log_weights;  // per sum index
  std::vector<double> log_h;                                         // per sum index
};

inline TwinCorrection twin_correction(const SpnGraph& g, const TwinWeightPolicy& policy, const Evidence& e,
                                      bool presum = false) {
  const SumReachability reach(g);
  const auto& sums = g.sums();
  const std::size_t nx = g.num_variables();
  TwinCorrection tc;
  tc.twin_log_weights.resize(sums.size());
  tc.log_h.assign(sums.size(), 0.0);
  for (std::size_t j = 0; j < sums.size(); ++j) {
    if (conditioning_sums(g, reach, sums[j]).empty()) continue;
    const std::size_t k_s = g.node(sums[j]).children().size();
    std::vector<double> lw;
    for (double w : policy.for_sum(sums[j], k_s)) lw.push_back(safe_log(w));
    const bool has_ev = e.size() > nx + j;
    double h = kNegInf;
    for (std::size_t k = 0; k < k_s; ++k)
      if (!has_ev || admits_state(e[nx + j], static_cast<int>(k))) h = std::max(h, lw[k]);
    tc.log_h[j] = h;
    tc.twin_log_weights[j] = std::move(lw);
  }
  tc.edge_terms.resize(g.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const NodeId s = sums[i];
    const auto kids = g.node(s).children();
    auto& rows = tc.edge_terms[s];
    rows.resize(kids.size());
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool has_ev = e.size() > nx + i;
      if (has_ev && !admits_state(e[nx + i], static_cast<int>(k))) rows[k].push_back(kNegInf);
      for (std::size_t j = 0; j < sums.size(); ++j) {
        if (j == i || !reach.reaches(s, sums[j]) || reach.reaches(kids[k], sums[j])) continue;
        rows[k].push_back(tc.log_h[j]);
      }
      if (presum && rows[k].size() > 1) {
        double t = 0.0;
        for (double x : rows[k]) t += x;
        rows[k] = {t};
      }
    }
  }
  return tc;
}

/// MPE over X u Z in the augmented SPN. Explicit mode builds the augmented
/// graph; simulated mode runs on the original graph with corrected weights
/// and fills latent states of sums off the path with the best twin state.
/// Evidence covers X, optionally followed by the latent variables.
/// The result assignment lists X then Z (latent j belongs to the j-th sum in
/// topological order); `visited` holds original sum ids.
inline MpeResult mpe_augmented(const SpnGraph& g, const Evidence& e, const TwinWeightPolicy& policy,
                               MpeMode mode = MpeMode::simulated) {
  const std::size_t nx = g.num_variables();
  const std::size_t nz = g.sums().size();
  if (e.size() != nx && e.size() != nx + nz)
    throw Error(ErrorCode::EvidenceTypeMismatch, "evidence must cover X or X and the latent variables");

  if (mode == MpeMode::explicit_graph) {
    const AugmentedSpn aug = augment(g, policy);
    MpeResult r = mpe_selective(aug.graph, e.extended(nx + nz));
    std::vector<NodeId> visited;
    for (NodeId n : r.visited)
      if (auto o = aug.original_of_augmented[n]) visited.push_back(*o);
    std::sort(visited.begin(), visited.end());
    r.visited = std::move(visited);
    return r;
  }

  if (!validate(g, 0).valid()) throw Error(ErrorCode::InvalidInputSpn, "need a complete and decomposable SPN");
  const Evidence ex = e.truncated(nx);
  check_evidence(g, ex);
  for (std::size_t j = 0; j < nz && e.size() > nx; ++j) {
    const VarEvidence& ev = e[nx + j];
    if (std::holds_alternative<Interval>(ev)) throw Error(ErrorCode::EvidenceTypeMismatch, "interval on latent");
    if (const auto* s = std::get_if<DiscreteSubset>(&ev); s && s->states.empty())
      throw Error(ErrorCode::EmptyEvidenceSet, "empty latent subset");
  }
  TwinCorrection tc = twin_correction(g, policy, e);
  MaxProductNetwork mpn{&g, std::move(tc.edge_terms)};
  MpeResult r = detail::backtrack(mpn, ex);

  std::vector<double> v(g.size());
  max_forward(mpn, ex, v);
  r.assignment.resize(nx + nz, 0.0);
  std::vector<char> on_path(g.size(), 0);
  for (NodeId s : r.visited) on_path[s] = 1;
  for (std::size_t j = 0; j < nz; ++j) {
    const NodeId s = g.sums()[j];
    std::size_t state = 0;
    if (on_path[s]) {
      double best = kNegInf;
      for (std::size_t k = 0; k < g.node(s).children().size(); ++k) {
        const double val = mpn.edge_value(s, k, v);
        if (val > best) {
          best = val;
          state = k;
        }
      }
    } else if (tc.twin_log_weights[j]) {
      const auto& lw = *tc.twin_log_weights[j];
      double best = kNegInf;
      for (std::size_t k = 0; k < lw.size(); ++k) {
        if (e.size() > nx && !admits_state(e[nx + j], static_cast<int>(k))) continue;
        if (lw[k] > best) {
          best = lw[k];
          state = k;
        }
      }
    }
    r.assignment[nx + j] = static_cast<double>(state);
  }
  return r;
}

/// Log-likelihood of the X part of an MPE result in the original SPN.
inline double mpe_quality(const SpnGraph& g, const MpeResult& result) {
  if (result.assignment.size() < g.num_variables())
    throw Error(ErrorCode::InvalidArgument, "assignment does not cover the model variables");
  const std::vector<double> x(result.assignment.begin(), result.assignment.begin() + g.num_variables());
  return log_evaluate(g, Evidence::complete(std::span<const double>(x)));
}

}  // namespace spn
