#pragma once

// Brute-force reference path. Nothing here calls into evaluate.hpp: the
// joint table is filled by a separate linear-domain circuit walk so that
// comparisons against log_evaluate exercise two independent implementations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "spn/error.hpp"
#include "spn/evidence.hpp"
#include "spn/graph.hpp"

namespace spn::oracle {

inline constexpr std::uint64_t kMaxTableEntries = std::uint64_t{1} << 24;

/// Dense table over the full product state space. Entry order is
/// lexicographic in `vars` (the last variable varies fastest).
struct JointTable {
  std::vector<VarId> vars;
  std::vector<int> cardinalities;
  std::vector<double> log_probs;

  std::size_t size() const { return log_probs.size(); }

  std::vector<int> assignment(std::size_t index) const {
    std::vector<int> x(vars.size());
    for (std::size_t i = vars.size(); i-- > 0;) {
      x[i] = static_cast<int>(index % cardinalities[i]);
      index /= cardinalities[i];
    }
    return x;
  }

  std::size_t index_of(const std::vector<int>& x) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vars.size(); ++i) idx = idx * cardinalities[i] + x[i];
    return idx;
  }
};

enum class QueryMode { marginal, max };

struct QueryResult {
  double log_value = -std::numeric_limits<double>::infinity();
  std::optional<std::vector<int>> argmax;  // set in max mode when the value is > 0
};

/// Linear-domain value of the circuit at one complete discrete assignment.
inline double circuit_value(const SpnGraph& g, const std::vector<int>& x, std::vector<double>& buf) {
  buf.resize(g.size());
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.nodes()[n];
    if (node.is_indicator()) {
      buf[n] = x[node.indicator().var] == node.indicator().state ? 1.0 : 0.0;
    } else if (node.is_product()) {
      double p = 1.0;
      for (NodeId c : node.product().children) p *= buf[c];
      buf[n] = p;
    } else {
      const SumNode& s = node.sum();
      double acc = 0.0;
      for (std::size_t k = 0; k < s.children.size(); ++k) acc += s.weights[k] * buf[s.children[k]];
      buf[n] = acc;
    }
  }
  return buf[g.root()];
}

inline JointTable enumerate(const SpnGraph& g) {
  JointTable t;
  std::uint64_t entries = 1;
  for (const auto& v : g.variables()) {
    if (!v.is_discrete())
      throw Error(ErrorCode::ContinuousVariablePresent, "variable " + v.name + " is continuous");
    entries *= static_cast<std::uint64_t>(v.cardinality);
    if (entries > kMaxTableEntries)
      throw Error(ErrorCode::TooLarge, "joint table exceeds 2^24 entries");
    t.vars.push_back(v.id);
    t.cardinalities.push_back(v.cardinality);
  }
  t.log_probs.resize(entries);
  std::vector<int> x(g.num_variables(), 0);
  std::vector<double> buf;
  for (std::size_t i = 0; i < entries; ++i) {
    const double p = circuit_value(g, x, buf);
    t.log_probs[i] = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    for (std::size_t j = x.size(); j-- > 0;) {
      if (++x[j] < t.cardinalities[j]) break;
      x[j] = 0;
    }
  }
  return t;
}

inline bool consistent(const JointTable& t, const Evidence& e, const std::vector<int>& x) {
  for (std::size_t i = 0; i < t.vars.size(); ++i) {
    const VarEvidence& ev = e[t.vars[i]];
    if (std::holds_alternative<Marginalized>(ev)) continue;
    if (const auto* c = std::get_if<Complete>(&ev)) {
      if (c->value != x[i]) return false;
    } else if (const auto* s = std::get_if<DiscreteSubset>(&ev)) {
      if (!s->contains(x[i])) return false;
    } else {
      throw Error(ErrorCode::EvidenceTypeMismatch, "interval evidence on a discrete table");
    }
  }
  return true;
}

/// Marginal: log of the total mass consistent with e. Max: the largest
/// consistent entry; ties go to the lexicographically smallest assignment.
inline QueryResult oracle_query(const JointTable& t, const Evidence& e, QueryMode mode) {
  QueryResult r;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  long double total = 0.0L;
  double shift = -std::numeric_limits<double>::infinity();
  for (double lp : t.log_probs) shift = std::max(shift, lp);

  for (std::size_t i = 0; i < t.size(); ++i) {
    const double lp = t.log_probs[i];
    if (lp == -std::numeric_limits<double>::infinity()) continue;
    const auto x = t.assignment(i);
    if (!consistent(t, e, x)) continue;
    if (mode == QueryMode::marginal) {
      total += std::exp(static_cast<long double>(lp - shift));
    } else if (lp > best) {
      best = lp;
      best_index = i;
    }
  }
  if (mode == QueryMode::marginal) {
    r.log_value = total > 0.0L ? shift + static_cast<double>(std::log(total))
                               : -std::numeric_limits<double>::infinity();
  } else {
    r.log_value = best;
    if (best > -std::numeric_limits<double>::infinity()) r.argmax = t.assignment(best_index);
  }
  return r;
}

/// Sums out every variable not in `keep` (order of `keep` defines the result).
inline JointTable marginalize_to(const JointTable& t, const std::vector<VarId>& keep) {
  JointTable out;
  std::vector<std::size_t> pos;
  for (VarId v : keep) {
    const auto it = std::find(t.vars.begin(), t.vars.end(), v);
    if (it == t.vars.end()) throw Error(ErrorCode::UnknownVariable, "variable " + std::to_string(v));
    pos.push_back(static_cast<std::size_t>(it - t.vars.begin()));
    out.vars.push_back(v);
    out.cardinalities.push_back(t.cardinalities[pos.back()]);
  }
  std::size_t n = 1;
  for (int c : out.cardinalities) n *= static_cast<std::size_t>(c);
  std::vector<long double> mass(n, 0.0L);
  std::vector<int> y(keep.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.log_probs[i] == -std::numeric_limits<double>::infinity()) continue;
    const auto x = t.assignment(i);
    for (std::size_t j = 0; j < keep.size(); ++j) y[j] = x[pos[j]];
    mass[out.index_of(y)] += std::exp(static_cast<long double>(t.log_probs[i]));
  }
  out.log_probs.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.log_probs[i] = mass[i] > 0.0L ? static_cast<double>(std::log(mass[i]))
                                      : -std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace spn::oracle
