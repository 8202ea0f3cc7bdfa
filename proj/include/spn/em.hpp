#pragma once

#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "spn/diff.hpp"
#include "spn/error.hpp"
#include "spn/evidence.hpp"
#include "spn/graph.hpp"
#include "spn/logmath.hpp"
#include "spn/rng.hpp"

namespace spn {

struct Dataset {
  std::size_t num_variables = 0;
  std::vector<Evidence> records;

  void add(Evidence e) {
    if (e.size() != num_variables)
      throw Error(ErrorCode::SchemaMismatch, "record has " + std::to_string(e.size()) + " variables, dataset has " +
                                                 std::to_string(num_variables));
    records.push_back(std::move(e));
  }
  std::size_t size() const { return records.size(); }
};

struct TruncatedMoments {
  double mean = 0.0;         // E[x]
  double second = 0.0;       // E[x^2]
  double mass = 0.0;         // P(lo <= x <= hi)
};

/// Moments of N(mean, var) restricted to [lo, hi].
inline TruncatedMoments truncated_gaussian_moments(double mean, double var, double lo, double hi) {
  if (!(var > 0.0)) throw Error(ErrorCode::NonPositiveVariance, std::to_string(var));
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) throw Error(ErrorCode::InvalidArgument, "bad interval");
  const double sd = std::sqrt(var);
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  const double z = std_normal_mass(a, b);
  if (!(z >= 1e-300)) throw Error(ErrorCode::EmptyMass, "interval mass " + std::to_string(z));
  const double pa = std_normal_pdf(a);
  const double pb = std_normal_pdf(b);
  const double apa = std::isfinite(a) ? a * pa : 0.0;
  const double bpb = std::isfinite(b) ? b * pb : 0.0;
  const double m1 = (pa - pb) / z;
  const double m2 = 1.0 + (apa - bpb) / z;
  return {mean + sd * m1, mean * mean + 2.0 * mean * sd * m1 + var * m2, z};
}

struct LeafStats {
  double n = 0.0;    // summed responsibility
  double sx = 0.0;   // sum of p * E[x]
  double sxx = 0.0;  // sum of p * E[x^2]
};

/// Expected sufficient statistics accumulated over records. Values for
/// different record blocks combine with merge() (associative, commutative up
/// to floating-point reassociation).
struct EmAccumulators {
  std::vector<std::vector<double>> edge_mass;  // [sum node][child index]
  std::vector<LeafStats> leaf_stats;           // indexed by node id, used for Gaussian leaves
  double ll_sum = 0.0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;

  EmAccumulators() = default;
  explicit EmAccumulators(const SpnGraph& g) : edge_mass(g.size()), leaf_stats(g.size()) {
    for (NodeId s : g.sums()) edge_mass[s].assign(g.node(s).children().size(), 0.0);
  }

  void merge(const EmAccumulators& o) {
    for (std::size_t n = 0; n < edge_mass.size(); ++n)
      for (std::size_t k = 0; k < edge_mass[n].size(); ++k) edge_mass[n][k] += o.edge_mass[n][k];
    for (std::size_t n = 0; n < leaf_stats.size(); ++n) {
      leaf_stats[n].n += o.leaf_stats[n].n;
      leaf_stats[n].sx += o.leaf_stats[n].sx;
      leaf_stats[n].sxx += o.leaf_stats[n].sxx;
    }
    ll_sum += o.ll_sum;
    accepted += o.accepted;
    rejected += o.rejected;
  }
};

enum UpdateFlags : unsigned { kUpdateWeights = 1, kUpdateMeans = 2, kUpdateVariances = 4, kUpdateAll = 7 };

/// Parses a subset of "WMV", e.g. "WV".
inline unsigned parse_update_set(std::string_view s) {
  unsigned flags = 0;
  for (char c : s) {
    switch (c) {
      case 'W': case 'w': flags |= kUpdateWeights; break;
      case 'M': case 'm': flags |= kUpdateMeans; break;
      case 'V': case 'v': flags |= kUpdateVariances; break;
      default: throw Error(ErrorCode::InvalidArgument, "update set may only contain W, M, V");
    }
  }
  if (flags == 0) throw Error(ErrorCode::InvalidArgument, "empty update set");
  return flags;
}

struct EmOptions {
  int max_iters = 30;
  double rel_ll_tol = 1e-6;
  double variance_floor = 0.01;
  unsigned update = kUpdateAll;
  unsigned threads = 1;
};

/// Adds the posterior statistics of one record. Edge mass of S -> C is
/// dS/dS * w * C(e) / S(e); a Gaussian leaf D gets responsibility
/// dS/dD * D(e) / S(e) together with the moments of x under D restricted to
/// the record's evidence.
inline void e_step_record(const SpnGraph& g, const Evidence& e, EmAccumulators& acc, BackpropResult& scratch) {
  backprop_into(g, e, scratch);
  const double log_s = scratch.log_value;
  if (log_s == kNegInf || std::isnan(log_s)) throw Error(ErrorCode::ZeroProbabilityRecord, "S(e) = 0");
  const auto& v = scratch.log_node_values;
  const auto& d = scratch.log_node_derivatives;

  // Moments first, so a record with an empty truncated mass is rejected
  // before anything is accumulated.
  std::vector<std::pair<NodeId, TruncatedMoments>> moments;
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.node(n);
    if (!node.is_gaussian() || d[n] == kNegInf || v[n] == kNegInf) continue;
    const GaussianLeaf& leaf = node.gaussian();
    const VarEvidence& ev = e[leaf.var];
    TruncatedMoments m;
    if (const auto* c = std::get_if<Complete>(&ev)) {
      m = {c->value, c->value * c->value, 1.0};
    } else if (const auto* iv = std::get_if<Interval>(&ev)) {
      try {
        m = truncated_gaussian_moments(leaf.mean, leaf.variance, iv->lo, iv->hi);
      } catch (const Error& err) {
        if (err.code() == ErrorCode::EmptyMass) throw Error(ErrorCode::ZeroProbabilityRecord, err.what());
        throw;
      }
    } else {
      m = {leaf.mean, leaf.mean * leaf.mean + leaf.variance, 1.0};
    }
    moments.emplace_back(n, m);
  }

  for (NodeId s : g.sums()) {
    if (d[s] == kNegInf) continue;
    const SumNode& sum = g.node(s).sum();
    auto& row = acc.edge_mass[s];
    for (std::size_t k = 0; k < sum.children.size(); ++k) {
      const double lm = d[s] - log_s + sum.log_weights[k] + v[sum.children[k]];
      if (lm != kNegInf) row[k] += std::exp(lm);
    }
  }
  for (const auto& [n, m] : moments) {
    const double p = std::exp(d[n] + v[n] - log_s);
    auto& st = acc.leaf_stats[n];
    st.n += p;
    st.sx += p * m.mean;
    st.sxx += p * m.second;
  }
  acc.ll_sum += log_s;
  ++acc.accepted;
}

inline void e_step_record(const SpnGraph& g, const Evidence& e, EmAccumulators& acc) {
  BackpropResult scratch;
  e_step_record(g, e, acc, scratch);
}

/// E-step over a whole dataset. Records are split into contiguous blocks, one
/// per thread, and the block accumulators are merged in block order.
inline EmAccumulators e_step(const SpnGraph& g, const Dataset& data, unsigned threads = 1) {
  for (const auto& r : data.records) check_evidence(g, r);
  auto run = [&](std::size_t begin, std::size_t end, EmAccumulators& acc) {
    BackpropResult scratch;
    for (std::size_t i = begin; i < end; ++i) {
      try {
        e_step_record(g, data.records[i], acc, scratch);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::ZeroProbabilityRecord) throw;
        ++acc.rejected;
      }
    }
  };
  const std::size_t n = data.size();
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  EmAccumulators total(g);
  if (threads == 1) {
    run(0, n, total);
    return total;
  }
  std::vector<EmAccumulators> parts(threads, EmAccumulators(g));
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        run(n * t / threads, n * (t + 1) / threads, parts[t]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  for (const auto& p : parts) total.merge(p);
  return total;
}

struct MStepResult {
  SpnGraph graph;
  std::vector<NodeId> degenerate_sums;  // zero total mass, weights kept
};

/// Closed-form maximization: weights are the normalized edge masses, Gaussian
/// parameters the moment matches of the accumulated statistics. The variance
/// is taken around the mean the leaf holds after this step, so a V-only
/// update is still a maximizer, and is clamped below at the floor.
inline MStepResult m_step(const SpnGraph& g, const EmAccumulators& acc, const EmOptions& opts) {
  if (!(opts.variance_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "variance floor must be positive");
  if ((opts.update & kUpdateAll) == 0) throw Error(ErrorCode::InvalidArgument, "empty update set");
  MStepResult out;
  GraphBuilder b = GraphBuilder::from(g);
  if (opts.update & kUpdateWeights) {
    for (NodeId s : g.sums()) {
      const auto& mass = acc.edge_mass[s];
      double total = 0.0;
      for (double m : mass) total += m;
      if (!(total > 0.0) || !std::isfinite(total)) {
        out.degenerate_sums.push_back(s);
        continue;
      }
      auto& sum = std::get<SumNode>(b.mutable_node(s).payload);
      for (std::size_t k = 0; k < mass.size(); ++k) sum.weights[k] = mass[k] / total;
    }
  }
  if (opts.update & (kUpdateMeans | kUpdateVariances)) {
    for (NodeId n = 0; n < g.size(); ++n) {
      if (!g.node(n).is_gaussian()) continue;
      const LeafStats& st = acc.leaf_stats[n];
      if (!(st.n > 0.0)) continue;
      auto& leaf = std::get<GaussianLeaf>(b.mutable_node(n).payload);
      if (opts.update & kUpdateMeans) leaf.mean = st.sx / st.n;
      if (opts.update & kUpdateVariances) {
        const double mu = leaf.mean;
        const double var = st.sxx / st.n - 2.0 * mu * st.sx / st.n + mu * mu;
        leaf.variance = std::max(var, opts.variance_floor);
      }
    }
  }
  out.graph = b.build(g.root());
  return out;
}

struct EmResult {
  SpnGraph graph;
  std::vector<double> ll_trace;  // mean train log-likelihood; [0] is the initial value
  std::size_t rejected_records = 0;
};

/// Alternates full-data E-steps and M-steps. Entry i of the trace is the
/// mean log-likelihood after i updates; iteration stops after max_iters
/// updates or when the relative change drops below rel_ll_tol.
inline EmResult em_fit(const SpnGraph& g, const Dataset& data, const EmOptions& opts = {}) {
  if (data.size() == 0) throw Error(ErrorCode::AllRecordsZero, "empty dataset");
  if (opts.max_iters < 0) throw Error(ErrorCode::InvalidArgument, "negative iteration count");
  EmResult r;
  r.graph = g;
  for (int it = 0;; ++it) {
    const EmAccumulators acc = e_step(r.graph, data, opts.threads);
    if (acc.accepted == 0) throw Error(ErrorCode::AllRecordsZero, "every record has zero probability");
    r.rejected_records = acc.rejected;
    const double ll = acc.ll_sum / static_cast<double>(acc.accepted);
    r.ll_trace.push_back(ll);
    if (it >= 1) {
      const double prev = r.ll_trace[r.ll_trace.size() - 2];
      if (std::abs(ll - prev) <= opts.rel_ll_tol * std::abs(prev)) break;
    }
    if (it == opts.max_iters) break;
    r.graph = m_step(r.graph, acc, opts).graph;
  }
  return r;
}

/// Random restart point: Dirichlet(1) weights, means U[-1, 1], variances
/// U[0.01, 1]. Only the parameter kinds in `update` are touched.
inline SpnGraph randomize_parameters(const SpnGraph& g, unsigned update, std::uint64_t seed) {
  Rng rng(seed);
  GraphBuilder b = GraphBuilder::from(g);
  for (NodeId n = 0; n < g.size(); ++n) {
    auto& payload = b.mutable_node(n).payload;
    if (auto* s = std::get_if<SumNode>(&payload)) {
      if (update & kUpdateWeights) s->weights = rng.dirichlet(s->children.size(), 1.0);
    } else if (auto* leaf = std::get_if<GaussianLeaf>(&payload)) {
      if (update & kUpdateMeans) leaf->mean = rng.uniform(-1.0, 1.0);
      if (update & kUpdateVariances) leaf->variance = rng.uniform(0.01, 1.0);
    }
  }
  return b.build(g.root());
}

}  // namespace spn
