#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spn/graph.hpp"

namespace spn {

enum class Tristate { yes, no, unknown };

constexpr std::string_view to_string(Tristate t) {
  switch (t) {
    case Tristate::yes: return "yes";
    case Tristate::no: return "no";
    case Tristate::unknown: return "unknown";
  }
  return "unknown";
}

struct SelectivityWitness {
  std::vector<int> input;  // complete assignment, one state per variable
  NodeId sum = 0;          // a sum with two non-zero children under `input`
};

struct ValidationReport {
  bool complete = true;
  std::vector<NodeId> incomplete_sums;
  bool decomposable = true;
  std::vector<NodeId> non_decomposable_products;
  Tristate selective = Tristate::unknown;
  std::optional<SelectivityWitness> witness;

  bool valid() const { return complete && decomposable; }
};

inline constexpr std::uint64_t kDefaultSelectivityBudget = std::uint64_t{1} << 20;

/// Number of complete joint states of the graph's variables, saturating at
/// UINT64_MAX. Continuous variables make the count infinite.
inline std::uint64_t joint_state_count(const SpnGraph& g) {
  std::uint64_t n = 1;
  for (const auto& v : g.variables()) {
    if (!v.is_discrete()) return UINT64_MAX;
    const auto card = static_cast<std::uint64_t>(v.cardinality);
    if (n > UINT64_MAX / card) return UINT64_MAX;
    n *= card;
  }
  return n;
}

namespace detail {

// Mixed-radix odometer over the joint discrete state space; returns false
// after the last state.
inline bool next_state(std::vector<int>& x, const std::vector<Variable>& vars) {
  for (std::size_t i = x.size(); i-- > 0;) {
    if (++x[i] < vars[i].cardinality) return true;
    x[i] = 0;
  }
  return false;
}

}  // namespace detail

/// Completeness and decomposability are syntactic and always decided.
/// Selectivity is semantic (all inputs, all weights): it is decided by
/// enumerating the joint state space on the support of each node, and only
/// when every leaf is an indicator and the space fits in `selectivity_budget`.
inline ValidationReport validate(const SpnGraph& g,
                                 std::uint64_t selectivity_budget = kDefaultSelectivityBudget) {
  ValidationReport r;
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.node(n);
    if (node.is_sum()) {
      const auto kids = node.children();
      for (std::size_t k = 1; k < kids.size(); ++k) {
        const auto a = g.scope(kids[0]);
        const auto b = g.scope(kids[k]);
        if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) {
          r.complete = false;
          r.incomplete_sums.push_back(n);
          break;
        }
      }
    } else if (node.is_product()) {
      std::size_t total = 0;
      for (NodeId c : node.children()) total += g.scope(c).size();
      if (total != g.scope(n).size()) {
        r.decomposable = false;
        r.non_decomposable_products.push_back(n);
      }
    }
  }

  bool indicators_only = true;
  for (const auto& node : g.nodes())
    if (node.is_gaussian()) indicators_only = false;
  const std::uint64_t states = joint_state_count(g);
  if (!indicators_only || states > selectivity_budget) return r;

  std::vector<int> x(g.num_variables(), 0);
  std::vector<char> support(g.size());
  r.selective = Tristate::yes;
  do {
    for (NodeId n = 0; n < g.size(); ++n) {
      const Node& node = g.node(n);
      if (node.is_indicator()) {
        support[n] = x[node.indicator().var] == node.indicator().state;
      } else if (node.is_product()) {
        char all = 1;
        for (NodeId c : node.children()) all &= support[c];
        support[n] = all;
      } else {
        int nonzero = 0;
        for (NodeId c : node.children()) nonzero += support[c];
        support[n] = nonzero > 0;
        if (nonzero > 1 && r.selective == Tristate::yes) {
          r.selective = Tristate::no;
          r.witness = SelectivityWitness{x, n};
        }
      }
    }
    if (r.selective == Tristate::no) break;
  } while (detail::next_state(x, g.variables()));
  return r;
}

}  // namespace spn
