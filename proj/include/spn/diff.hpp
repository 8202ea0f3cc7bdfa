#pragma once

#include <vector>

#include "spn/evaluate.hpp"
#include "spn/graph.hpp"
#include "spn/logmath.hpp"

namespace spn {

struct BackpropResult {
  double log_value = kNegInf;
  std::vector<double> log_node_values;       // log N(e)
  std::vector<double> log_node_derivatives;  // log dS(e)/dN
};

namespace detail {

// Product sibling products in log domain. A product with one zero child still
// passes a finite derivative to that child; with two or more zeros everything
// below it receives zero.
struct ProductSiblings {
  int zeros = 0;
  double finite_sum = 0.0;

  double excluding(double child_value) const {
    if (child_value == kNegInf) return zeros == 1 ? finite_sum : kNegInf;
    return zeros == 0 ? finite_sum - child_value : kNegInf;
  }
};

}  // namespace detail

/// Upward pass followed by one top-down pass accumulating dS/dN for all nodes.
inline void backprop_into(const SpnGraph& g, const Evidence& e, BackpropResult& out) {
  out.log_node_values.resize(g.size());
  log_forward(g, e, out.log_node_values);
  const auto& v = out.log_node_values;
  auto& d = out.log_node_derivatives;
  d.assign(g.size(), kNegInf);
  d[g.root()] = 0.0;
  out.log_value = v[g.root()];

  for (NodeId n = g.size(); n-- > 0;) {
    if (d[n] == kNegInf) continue;
    const Node& node = g.node(n);
    if (const auto* s = std::get_if<SumNode>(&node.payload)) {
      for (std::size_t k = 0; k < s->children.size(); ++k) {
        const NodeId c = s->children[k];
        d[c] = log_add(d[c], d[n] + s->log_weights[k]);
      }
    } else if (const auto* p = std::get_if<ProductNode>(&node.payload)) {
      detail::ProductSiblings sib;
      for (NodeId c : p->children) {
        if (v[c] == kNegInf)
          ++sib.zeros;
        else
          sib.finite_sum += v[c];
      }
      if (sib.zeros > 1) continue;
      for (NodeId c : p->children) {
        const double rest = sib.excluding(v[c]);
        if (rest != kNegInf) d[c] = log_add(d[c], d[n] + rest);
      }
    }
  }
}

inline BackpropResult backprop(const SpnGraph& g, const Evidence& e) {
  BackpropResult r;
  backprop_into(g, e, r);
  return r;
}

/// Table t[X][x] = log S(X = x, e \ X) for every discrete X and state x, read
/// off the derivatives at the indicator leaves. Rows of continuous variables
/// are empty.
inline std::vector<std::vector<double>> modified_evidence_all(const SpnGraph& g, const Evidence& e) {
  const BackpropResult br = backprop(g, e);
  std::vector<std::vector<double>> table(g.num_variables());
  for (const auto& var : g.variables())
    if (var.is_discrete()) table[var.id].assign(var.cardinality, kNegInf);
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.node(n);
    if (!node.is_indicator()) continue;
    const auto& ind = node.indicator();
    auto& cell = table[ind.var][ind.state];
    cell = log_add(cell, br.log_node_derivatives[n]);
  }
  return table;
}

}  // namespace spn
