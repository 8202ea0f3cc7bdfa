#pragma once

#include <span>
#include <vector>

#include "spn/evidence.hpp"
#include "spn/graph.hpp"
#include "spn/logmath.hpp"

namespace spn {

/// log D(e) for a leaf: point density or indicator for complete evidence, the
/// integral over the evidence set otherwise, 0 when marginalized.
inline double leaf_log_value(const Node& leaf, const VarEvidence& ev) {
  if (std::holds_alternative<Marginalized>(ev)) return 0.0;
  if (const auto* ind = std::get_if<IndicatorLeaf>(&leaf.payload))
    return admits_state(ev, ind->state) ? 0.0 : kNegInf;
  const auto& g = leaf.gaussian();
  if (const auto* c = std::get_if<Complete>(&ev)) return gaussian_log_pdf(c->value, g.mean, g.variance);
  const auto& iv = std::get<Interval>(ev);
  return gaussian_log_interval_mass(iv.lo, iv.hi, g.mean, g.variance);
}

/// Upward pass writing log N(e) for every node into `out` (size == g.size()).
/// Evidence is assumed to have passed check_evidence().
inline void log_forward_unchecked(const SpnGraph& g, const Evidence& e, std::span<double> out) {
  const auto& nodes = g.nodes();
  for (NodeId n = 0; n < nodes.size(); ++n) {
    const Node& node = nodes[n];
    if (const auto* s = std::get_if<SumNode>(&node.payload)) {
      double m = kNegInf;
      for (std::size_t k = 0; k < s->children.size(); ++k)
        m = std::max(m, s->log_weights[k] + out[s->children[k]]);
      if (m == kNegInf) {
        out[n] = kNegInf;
        continue;
      }
      double acc = 0.0;
      for (std::size_t k = 0; k < s->children.size(); ++k)
        acc += std::exp(s->log_weights[k] + out[s->children[k]] - m);
      out[n] = m + std::log(acc);
    } else if (const auto* p = std::get_if<ProductNode>(&node.payload)) {
      double acc = 0.0;
      for (NodeId c : p->children) acc += out[c];
      out[n] = acc;
    } else {
      out[n] = leaf_log_value(node, e[*node.leaf_var()]);
    }
  }
}

inline void log_forward(const SpnGraph& g, const Evidence& e, std::span<double> out) {
  check_evidence(g, e);
  if (out.size() != g.size())
    throw Error(ErrorCode::InvalidArgument, "scratch buffer size mismatch");
  log_forward_unchecked(g, e, out);
}

inline std::vector<double> log_forward(const SpnGraph& g, const Evidence& e) {
  std::vector<double> out(g.size());
  log_forward(g, e, out);
  return out;
}

/// log S(e). Uses a caller-owned scratch buffer so concurrent calls on one
/// graph do not share state.
inline double log_evaluate(const SpnGraph& g, const Evidence& e, std::vector<double>& scratch) {
  scratch.resize(g.size());
  log_forward(g, e, scratch);
  return scratch[g.root()];
}

inline double log_evaluate(const SpnGraph& g, const Evidence& e) {
  std::vector<double> scratch;
  return log_evaluate(g, e, scratch);
}

}  // namespace spn
