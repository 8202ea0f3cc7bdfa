#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spn/error.hpp"
#include "spn/logmath.hpp"

namespace spn {

using NodeId = std::size_t;
using VarId = std::size_t;

enum class VarKind { discrete, continuous };

struct Variable {
  VarId id = 0;
  VarKind kind = VarKind::discrete;
  int cardinality = 2;  // ignored for continuous variables
  std::string name;

  bool is_discrete() const { return kind == VarKind::discrete; }
  friend bool operator==(const Variable&, const Variable&) = default;
};

struct SumNode {
  std::vector<NodeId> children;
  std::vector<double> weights;
  std::vector<double> log_weights;
  friend bool operator==(const SumNode&, const SumNode&) = default;
};

struct ProductNode {
  std::vector<NodeId> children;
  friend bool operator==(const ProductNode&, const ProductNode&) = default;
};

struct IndicatorLeaf {
  VarId var = 0;
  int state = 0;
  friend bool operator==(const IndicatorLeaf&, const IndicatorLeaf&) = default;
};

struct GaussianLeaf {
  VarId var = 0;
  double mean = 0.0;
  double variance = 1.0;
  friend bool operator==(const GaussianLeaf&, const GaussianLeaf&) = default;
};

struct Node {
  std::variant<SumNode, ProductNode, IndicatorLeaf, GaussianLeaf> payload;

  bool is_sum() const { return std::holds_alternative<SumNode>(payload); }
  bool is_product() const { return std::holds_alternative<ProductNode>(payload); }
  bool is_indicator() const { return std::holds_alternative<IndicatorLeaf>(payload); }
  bool is_gaussian() const { return std::holds_alternative<GaussianLeaf>(payload); }
  bool is_leaf() const { return is_indicator() || is_gaussian(); }

  const SumNode& sum() const { return std::get<SumNode>(payload); }
  const ProductNode& product() const { return std::get<ProductNode>(payload); }
  const IndicatorLeaf& indicator() const { return std::get<IndicatorLeaf>(payload); }
  const GaussianLeaf& gaussian() const { return std::get<GaussianLeaf>(payload); }

  std::span<const NodeId> children() const {
    if (const auto* s = std::get_if<SumNode>(&payload)) return s->children;
    if (const auto* p = std::get_if<ProductNode>(&payload)) return p->children;
    return {};
  }

  std::optional<VarId> leaf_var() const {
    if (const auto* i = std::get_if<IndicatorLeaf>(&payload)) return i->var;
    if (const auto* g = std::get_if<GaussianLeaf>(&payload)) return g->var;
    return std::nullopt;
  }

  friend bool operator==(const Node&, const Node&) = default;
};

/// Immutable rooted DAG of sum, product and leaf nodes. Nodes are stored in
/// topological order (children before parents) and the root is the last node.
/// Instances are produced by GraphBuilder and are safe to share across threads.
class SpnGraph {
 public:
  SpnGraph() = default;

  const std::vector<Variable>& variables() const { return variables_; }
  const Variable& variable(VarId v) const { return variables_.at(v); }
  std::size_t num_variables() const { return variables_.size(); }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId n) const {
    if (n >= nodes_.size()) throw Error(ErrorCode::UnknownNode, "node " + std::to_string(n));
    return nodes_[n];
  }
  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return root_; }

  std::span<const VarId> scope(NodeId n) const {
    if (n >= scopes_.size()) throw Error(ErrorCode::UnknownNode, "node " + std::to_string(n));
    return scopes_[n];
  }

  /// Sum nodes in topological order.
  const std::vector<NodeId>& sums() const { return sums_; }

  std::size_t num_edges() const {
    std::size_t e = 0;
    for (const auto& n : nodes_) e += n.children().size();
    return e;
  }

  std::optional<VarId> find_variable(std::string_view name) const {
    for (const auto& v : variables_)
      if (v.name == name) return v.id;
    return std::nullopt;
  }

  bool all_discrete() const {
    return std::all_of(variables_.begin(), variables_.end(),
                       [](const Variable& v) { return v.is_discrete(); });
  }

  friend bool operator==(const SpnGraph& a, const SpnGraph& b) {
    return a.root_ == b.root_ && a.variables_ == b.variables_ && a.nodes_ == b.nodes_;
  }

 private:
  friend class GraphBuilder;
  std::vector<Variable> variables_;
  std::vector<Node> nodes_;
  std::vector<std::vector<VarId>> scopes_;
  std::vector<NodeId> sums_;
  NodeId root_ = 0;
};

struct BuildOptions {
  /// Reject sums whose weights are off the simplex by more than this.
  double normalization_tolerance = 1e-9;
  /// Configured SPNs keep their surviving edges unrenormalized.
  bool require_normalized = true;
};

/// Incremental construction of an SpnGraph. Children must already exist when a
/// node is added, so the insertion order is a topological order and cycles
/// cannot be expressed. build() keeps only the nodes reachable from the root.
class GraphBuilder {
 public:
  GraphBuilder() = default;
  explicit GraphBuilder(std::vector<Variable> variables) {
    for (auto& v : variables) add_variable(v.kind, v.cardinality, v.name);
  }

  VarId add_variable(VarKind kind, int cardinality, std::string name = {}) {
    const VarId id = variables_.size();
    if (kind == VarKind::discrete && cardinality < 1)
      throw Error(ErrorCode::InvalidArgument, "discrete cardinality must be positive");
    if (name.empty()) name = "X" + std::to_string(id);
    variables_.push_back(Variable{id, kind, kind == VarKind::discrete ? cardinality : 0, std::move(name)});
    return id;
  }

  const std::vector<Variable>& variables() const { return variables_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId n) const { return nodes_.at(n); }

  NodeId add_indicator(VarId var, int state) {
    check_var(var);
    const auto& v = variables_[var];
    if (!v.is_discrete())
      throw Error(ErrorCode::InvalidArgument, "indicator on continuous variable " + v.name);
    if (state < 0 || state >= v.cardinality)
      throw Error(ErrorCode::StateOutOfRange,
                  "state " + std::to_string(state) + " of " + v.name);
    return push(Node{IndicatorLeaf{var, state}});
  }

  NodeId add_gaussian(VarId var, double mean, double variance) {
    check_var(var);
    if (variables_[var].is_discrete())
      throw Error(ErrorCode::InvalidArgument, "gaussian on discrete variable " + variables_[var].name);
    if (!std::isfinite(mean)) throw Error(ErrorCode::InvalidArgument, "non-finite mean");
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw Error(ErrorCode::NonPositiveVariance, "variance " + std::to_string(variance));
    return push(Node{GaussianLeaf{var, mean, variance}});
  }

  NodeId add_product(std::vector<NodeId> children) {
    if (children.empty()) throw Error(ErrorCode::EmptyChildren, "product without children");
    check_children(children);
    return push(Node{ProductNode{std::move(children)}});
  }

  NodeId add_sum(std::vector<NodeId> children, std::vector<double> weights) {
    if (children.empty()) throw Error(ErrorCode::EmptyChildren, "sum without children");
    if (weights.size() != children.size())
      throw Error(ErrorCode::InvalidArgument, "sum has " + std::to_string(children.size()) +
                                                  " children but " + std::to_string(weights.size()) +
                                                  " weights");
    for (double w : weights) {
      if (!std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "non-finite weight");
      if (w < 0.0) throw Error(ErrorCode::NegativeWeight, std::to_string(w));
    }
    check_children(children);
    return push(Node{SumNode{std::move(children), std::move(weights), {}}});
  }

  /// Sum with uniform weights.
  NodeId add_sum(std::vector<NodeId> children) {
    std::vector<double> w(children.size(), children.empty() ? 0.0 : 1.0 / children.size());
    return add_sum(std::move(children), std::move(w));
  }

  struct Result {
    SpnGraph graph;
    std::vector<std::optional<NodeId>> new_id;  // builder id -> graph id (nullopt if pruned)
  };

  Result build_with_map(NodeId root, const BuildOptions& opts = {}) const {
    if (root >= nodes_.size()) throw Error(ErrorCode::UnknownReference, "root " + std::to_string(root));

    std::vector<char> reachable(nodes_.size(), 0);
    reachable[root] = 1;
    for (NodeId n = root + 1; n-- > 0;) {
      if (!reachable[n]) continue;
      for (NodeId c : nodes_[n].children()) reachable[c] = 1;
    }

    Result out;
    out.new_id.assign(nodes_.size(), std::nullopt);
    SpnGraph& g = out.graph;
    g.variables_ = variables_;
    for (NodeId n = 0; n <= root; ++n) {
      if (!reachable[n]) continue;
      const NodeId id = g.nodes_.size();
      out.new_id[n] = id;
      Node node = nodes_[n];
      if (auto* s = std::get_if<SumNode>(&node.payload)) {
        for (auto& c : s->children) c = *out.new_id[c];
        normalize(*s, opts, n);
        s->log_weights.resize(s->weights.size());
        std::transform(s->weights.begin(), s->weights.end(), s->log_weights.begin(), safe_log);
        g.sums_.push_back(id);
      } else if (auto* p = std::get_if<ProductNode>(&node.payload)) {
        for (auto& c : p->children) c = *out.new_id[c];
      }
      g.nodes_.push_back(std::move(node));
    }
    g.root_ = g.nodes_.size() - 1;

    g.scopes_.resize(g.nodes_.size());
    for (NodeId n = 0; n < g.nodes_.size(); ++n) {
      const Node& node = g.nodes_[n];
      if (auto v = node.leaf_var()) {
        g.scopes_[n] = {*v};
        continue;
      }
      std::vector<VarId> sc;
      for (NodeId c : node.children()) {
        std::vector<VarId> merged;
        merged.reserve(sc.size() + g.scopes_[c].size());
        std::set_union(sc.begin(), sc.end(), g.scopes_[c].begin(), g.scopes_[c].end(),
                       std::back_inserter(merged));
        sc = std::move(merged);
      }
      g.scopes_[n] = std::move(sc);
    }
    if (g.scopes_[g.root_].size() != g.variables_.size())
      throw Error(ErrorCode::ScopeMismatch,
                  "root scope covers " + std::to_string(g.scopes_[g.root_].size()) + " of " +
                      std::to_string(g.variables_.size()) + " variables");
    return out;
  }

  SpnGraph build(NodeId root, const BuildOptions& opts = {}) const {
    return build_with_map(root, opts).graph;
  }

  /// Builder pre-populated with a copy of an existing graph (ids preserved).
  static GraphBuilder from(const SpnGraph& g) {
    GraphBuilder b;
    b.variables_ = g.variables();
    b.nodes_ = g.nodes();
    return b;
  }

  Node& mutable_node(NodeId n) { return nodes_.at(n); }

 private:
  void check_var(VarId v) const {
    if (v >= variables_.size())
      throw Error(ErrorCode::UnknownReference, "variable " + std::to_string(v));
  }
  void check_children(const std::vector<NodeId>& children) const {
    for (NodeId c : children)
      if (c >= nodes_.size()) throw Error(ErrorCode::UnknownReference, "child " + std::to_string(c));
  }
  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  // Weights within 1e-12 of the simplex are kept bit-for-bit so that repeated
  // save/load cycles are stable; anything up to the tolerance is renormalized.
  static void normalize(SumNode& s, const BuildOptions& opts, NodeId id) {
    double total = 0.0;
    for (double w : s.weights) total += w;
    if (!opts.require_normalized) return;
    if (std::abs(total - 1.0) > opts.normalization_tolerance)
      throw Error(ErrorCode::NonNormalizedWeights,
                  "sum " + std::to_string(id) + " weights add to " + std::to_string(total));
    if (std::abs(total - 1.0) > 1e-12)
      for (double& w : s.weights) w /= total;
  }

  std::vector<Variable> variables_;
  std::vector<Node> nodes_;
};

/// Same graph with replaced sum weights; `weights[n]` is read for every sum n.
inline SpnGraph with_sum_weights(const SpnGraph& g, const std::vector<std::vector<double>>& weights,
                                 const BuildOptions& opts = {}) {
  GraphBuilder b = GraphBuilder::from(g);
  for (NodeId s : g.sums()) {
    auto& sum = std::get<SumNode>(b.mutable_node(s).payload);
    if (weights.at(s).size() != sum.children.size())
      throw Error(ErrorCode::InvalidArgument, "weight vector size mismatch at sum " + std::to_string(s));
    for (double w : weights[s])
      if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorCode::NegativeWeight, std::to_string(w));
    sum.weights = weights[s];
  }
  return b.build(g.root(), opts);
}

/// Current sum weights as a per-node table (empty rows for non-sums).
inline std::vector<std::vector<double>> sum_weight_table(const SpnGraph& g) {
  std::vector<std::vector<double>> w(g.size());
  for (NodeId s : g.sums()) w[s] = g.node(s).sum().weights;
  return w;
}

}  // namespace spn
