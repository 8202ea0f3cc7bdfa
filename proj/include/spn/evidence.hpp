#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "spn/error.hpp"
#include "spn/graph.hpp"
#include "spn/logmath.hpp"

namespace spn {

struct Marginalized {
  friend bool operator==(const Marginalized&, const Marginalized&) = default;
};

struct Complete {
  double value = 0.0;
  friend bool operator==(const Complete&, const Complete&) = default;
};

/// Non-empty set of admissible states of a discrete variable (kept sorted).
struct DiscreteSubset {
  std::vector<int> states;
  bool contains(int s) const { return std::binary_search(states.begin(), states.end(), s); }
  friend bool operator==(const DiscreteSubset&, const DiscreteSubset&) = default;
};

/// Closed interval of a continuous variable; either end may be infinite.
struct Interval {
  double lo = kNegInf;
  double hi = kInf;
  friend bool operator==(const Interval&, const Interval&) = default;
};

using VarEvidence = std::variant<Marginalized, Complete, DiscreteSubset, Interval>;

/// One element of the evidence sets: a per-variable restriction of the domain.
class Evidence {
 public:
  Evidence() = default;
  explicit Evidence(std::size_t num_variables) : vars_(num_variables, Marginalized{}) {}

  static Evidence marginal(std::size_t n) { return Evidence(n); }

  static Evidence complete(std::span<const double> values) {
    Evidence e(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) e.vars_[i] = Complete{values[i]};
    return e;
  }
  static Evidence complete(std::span<const int> states) {
    Evidence e(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) e.vars_[i] = Complete{double(states[i])};
    return e;
  }

  std::size_t size() const { return vars_.size(); }
  const VarEvidence& operator[](VarId v) const { return vars_.at(v); }

  Evidence& set(VarId v, VarEvidence ev) {
    if (auto* s = std::get_if<DiscreteSubset>(&ev)) {
      std::sort(s->states.begin(), s->states.end());
      s->states.erase(std::unique(s->states.begin(), s->states.end()), s->states.end());
    }
    vars_.at(v) = std::move(ev);
    return *this;
  }
  Evidence& observe(VarId v, double value) { return set(v, Complete{value}); }
  Evidence& marginalize(VarId v) { return set(v, Marginalized{}); }

  /// Appends marginalized slots up to n variables (e.g. latent variables).
  Evidence extended(std::size_t n) const {
    Evidence e = *this;
    if (e.vars_.size() < n) e.vars_.resize(n, Marginalized{});
    return e;
  }
  Evidence truncated(std::size_t n) const {
    Evidence e = *this;
    e.vars_.resize(std::min(n, e.vars_.size()));
    return e;
  }

  bool is_complete(VarId v) const { return std::holds_alternative<Complete>(vars_.at(v)); }
  bool is_marginalized(VarId v) const { return std::holds_alternative<Marginalized>(vars_.at(v)); }

  friend bool operator==(const Evidence&, const Evidence&) = default;

 private:
  std::vector<VarEvidence> vars_;
};

/// True iff `state` is admissible for a discrete variable under `ev`.
inline bool admits_state(const VarEvidence& ev, int state) {
  if (std::holds_alternative<Marginalized>(ev)) return true;
  if (const auto* c = std::get_if<Complete>(&ev)) return c->value == double(state);
  if (const auto* s = std::get_if<DiscreteSubset>(&ev)) return s->contains(state);
  return false;
}

/// Rejects evidence whose shape does not match the graph's variables.
inline void check_evidence(const SpnGraph& g, const Evidence& e) {
  if (e.size() != g.num_variables())
    throw Error(ErrorCode::EvidenceTypeMismatch, "evidence covers " + std::to_string(e.size()) +
                                                     " variables, graph has " +
                                                     std::to_string(g.num_variables()));
  for (const auto& var : g.variables()) {
    const VarEvidence& ev = e[var.id];
    if (var.is_discrete()) {
      if (std::holds_alternative<Interval>(ev))
        throw Error(ErrorCode::EvidenceTypeMismatch, "interval on discrete variable " + var.name);
      if (const auto* c = std::get_if<Complete>(&ev)) {
        if (c->value != std::floor(c->value) || c->value < 0 || c->value >= var.cardinality)
          throw Error(ErrorCode::StateOutOfRange, var.name + "=" + std::to_string(c->value));
      }
      if (const auto* s = std::get_if<DiscreteSubset>(&ev)) {
        if (s->states.empty()) throw Error(ErrorCode::EmptyEvidenceSet, "empty subset for " + var.name);
        if (s->states.front() < 0 || s->states.back() >= var.cardinality)
          throw Error(ErrorCode::StateOutOfRange, "subset of " + var.name);
      }
    } else {
      if (std::holds_alternative<DiscreteSubset>(ev))
        throw Error(ErrorCode::EvidenceTypeMismatch, "subset on continuous variable " + var.name);
      if (const auto* iv = std::get_if<Interval>(&ev)) {
        if (std::isnan(iv->lo) || std::isnan(iv->hi) || iv->lo > iv->hi)
          throw Error(ErrorCode::EmptyEvidenceSet, "interval for " + var.name);
      }
      if (const auto* c = std::get_if<Complete>(&ev)) {
        if (!std::isfinite(c->value))
          throw Error(ErrorCode::EvidenceTypeMismatch, "non-finite value for " + var.name);
      }
    }
  }
}

}  // namespace spn
