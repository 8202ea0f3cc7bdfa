#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "spn/augment.hpp"
#include "spn/evaluate.hpp"
#include "spn/mpe.hpp"
#include "spn/oracle.hpp"
#include "spn/structures.hpp"

namespace spn::experiment {

struct MpeExperimentConfig {
  std::vector<int> grids{2, 3, 4};
  std::vector<double> alphas{0.5, 1.0, 2.0};
  int draws = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: hardware concurrency
  double match_tolerance = 1e-9;
  GridSpec::Cells cells = GridSpec::Cells::leaves;
};

enum Method { kMpeDet = 0, kMpeUni = 1, kNumMethods = 2 };
enum Scoring { kAugUniform = 0, kAugDeterministic = 1, kOriginal = 2, kNumScorings = 3 };

inline constexpr const char* kMethodNames[] = {"MPEDet", "MPEUni"};
inline constexpr const char* kScoringNames[] = {"aug_uniform", "aug_deterministic", "original"};

struct CellStats {
  double mean_gap = 0.0;  // mean of score - ground truth (<= 0)
  int matches = 0;        // draws with |gap| <= tolerance
};

struct Cell {
  int grid = 0;
  double alpha = 0.0;
  int draws = 0;
  CellStats stats[kNumScorings][kNumMethods];
  std::string truth[kNumScorings];  // how the ground truth was obtained
  int consistency_failures = 0;     // S'(assignment) != MPN root beyond tolerance
  int mode_mismatches = 0;          // simulated and explicit augmented MPE disagree
  int bound_violations = 0;         // a method scored above the ground truth
};

struct DrawOutcome {
  double gap[kNumScorings][kNumMethods] = {};
  bool consistent = true;
  bool modes_agree = true;
  bool bound_ok = true;
  bool enumerated_aug = false;
};

/// Seed of one weight draw, independent of thread scheduling.
inline std::uint64_t draw_seed(std::uint64_t seed, int grid, double alpha, int draw) {
  return derive_seed(seed, static_cast<std::uint64_t>(grid), std::bit_cast<std::uint64_t>(alpha),
                     static_cast<std::uint64_t>(draw));
}

namespace detail {

inline Evidence complete_evidence(const std::vector<double>& x) { return Evidence::complete(std::span<const double>(x)); }

inline double max_table(const SpnGraph& g) {
  const auto t = oracle::enumerate(g);
  return oracle::oracle_query(t, Evidence(g.num_variables()), oracle::QueryMode::max).log_value;
}

inline bool same(const MpeResult& a, const MpeResult& b) {
  return a.assignment == b.assignment && a.log_score == b.log_score;
}

}  // namespace detail

/// One weight draw: MPEDet and MPEUni (simulated augmented MPE on the
/// original graph) scored in both augmented SPNs and in the original SPN.
/// Ground truth in an augmented SPN is the joint X u Z maximum by
/// enumeration when the state space fits the oracle guard, and otherwise the
/// explicit augmented MPN root, which is exact because augmented SPNs are
/// selective; in that case the backtracked assignment must evaluate to the
/// root value. Ground truth in the original SPN is enumeration over X.
inline DrawOutcome run_draw(const SpnGraph& g, double tol) {
  DrawOutcome out;
  const Evidence none(g.num_variables());
  const MpeResult det = mpe_augmented(g, none, TwinWeightPolicy::deterministic(), MpeMode::simulated);
  const MpeResult uni = mpe_augmented(g, none, TwinWeightPolicy::uniform(), MpeMode::simulated);
  const MpeResult* methods[kNumMethods] = {&det, &uni};

  const TwinWeightPolicy policies[2] = {TwinWeightPolicy::uniform(), TwinWeightPolicy::deterministic()};
  const MpeResult* same_policy[2] = {&uni, &det};
  for (int s = 0; s < 2; ++s) {
    const AugmentedSpn aug = augment(g, policies[s]);
    const MpeResult exact = mpe_selective(aug.graph, none.extended(aug.graph.num_variables()));
    if (!detail::same(exact, *same_policy[s])) out.modes_agree = false;
    double truth = exact.log_score;
    if (joint_state_count(aug.graph) <= oracle::kMaxTableEntries) {
      truth = detail::max_table(aug.graph);
      out.enumerated_aug = true;
    }
    if (std::abs(log_evaluate(aug.graph, detail::complete_evidence(exact.assignment)) - exact.log_score) > tol)
      out.consistent = false;
    for (int m = 0; m < kNumMethods; ++m) {
      const double score = log_evaluate(aug.graph, detail::complete_evidence(methods[m]->assignment));
      out.gap[s][m] = score - truth;
      if (out.gap[s][m] > tol) out.bound_ok = false;
    }
  }
  const double truth = detail::max_table(g);
  for (int m = 0; m < kNumMethods; ++m) {
    out.gap[kOriginal][m] = mpe_quality(g, *methods[m]) - truth;
    if (out.gap[kOriginal][m] > tol) out.bound_ok = false;
  }
  return out;
}

inline std::vector<Cell> run_mpe_experiment(const MpeExperimentConfig& cfg) {
  if (cfg.draws < 1) throw Error(ErrorCode::InvalidArgument, "draws must be positive");
  for (int l : cfg.grids) {
    if (l < 2) throw Error(ErrorCode::InvalidArgument, "grid side must be at least 2");
    if (std::uint64_t{1} << std::min(63, l * l) > oracle::kMaxTableEntries)
      throw Error(ErrorCode::TooLarge, "grid " + std::to_string(l) + " exceeds the enumeration guard");
  }
  for (double a : cfg.alphas)
    if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be positive");

  unsigned threads = cfg.threads ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
  std::vector<Cell> cells;
  for (int l : cfg.grids) {
    const SpnGraph base = gen_pd_grid(GridSpec{l, GridSpec::Leaves::indicators, 2, cfg.cells});
    for (double alpha : cfg.alphas) {
      std::vector<DrawOutcome> outcomes(static_cast<std::size_t>(cfg.draws));
      std::vector<std::exception_ptr> errors(threads);
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (int d = static_cast<int>(t); d < cfg.draws; d += static_cast<int>(threads)) {
              const SpnGraph g = sample_weights(base, {alpha, draw_seed(cfg.seed, l, alpha, d)});
              outcomes[d] = run_draw(g, cfg.match_tolerance);
            }
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);

      Cell c;
      c.grid = l;
      c.alpha = alpha;
      c.draws = cfg.draws;
      for (const auto& o : outcomes) {
        for (int s = 0; s < kNumScorings; ++s)
          for (int m = 0; m < kNumMethods; ++m) {
            c.stats[s][m].mean_gap += o.gap[s][m];
            if (std::abs(o.gap[s][m]) <= cfg.match_tolerance) ++c.stats[s][m].matches;
          }
        c.consistency_failures += !o.consistent;
        c.mode_mismatches += !o.modes_agree;
        c.bound_violations += !o.bound_ok;
      }
      for (auto& row : c.stats)
        for (auto& st : row) {
          st.mean_gap /= cfg.draws;
          if (st.matches == cfg.draws) st.mean_gap = 0.0;
        }
      const std::string aug_truth = outcomes.front().enumerated_aug ? "enumeration" : "mpn_root";
      c.truth[kAugUniform] = c.truth[kAugDeterministic] = aug_truth;
      c.truth[kOriginal] = "enumeration";
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

inline nlohmann::json report_json(const MpeExperimentConfig& cfg, const std::vector<Cell>& cells) {
  using nlohmann::json;
  json jcells = json::array();
  for (const auto& c : cells) {
    json scorings = json::object();
    for (int s = 0; s < kNumScorings; ++s) {
      json methods = json::object();
      for (int m = 0; m < kNumMethods; ++m)
        methods[kMethodNames[m]] = json{{"mean_gap", c.stats[s][m].mean_gap}, {"matches", c.stats[s][m].matches}};
      methods["ground_truth"] = c.truth[s];
      scorings[kScoringNames[s]] = std::move(methods);
    }
    jcells.push_back(json{{"grid", c.grid},
                          {"variables", c.grid * c.grid},
                          {"alpha", c.alpha},
                          {"draws", c.draws},
                          {"scorings", std::move(scorings)},
                          {"consistency_failures", c.consistency_failures},
                          {"mode_mismatches", c.mode_mismatches},
                          {"bound_violations", c.bound_violations}});
  }
  return json{{"format", 1},
              {"config",
               {{"grids", cfg.grids},
                {"alphas", cfg.alphas},
                {"draws", cfg.draws},
                {"seed", cfg.seed},
                {"match_tolerance", cfg.match_tolerance},
                {"cells", cfg.cells == GridSpec::Cells::leaves ? "leaves" : "sums"}}},
              {"cells", std::move(jcells)}};
}

/// One aligned table per scoring model: rows are (variables, alpha), columns
/// the two methods as "mean gap (matches)".
inline std::string report_text(const std::vector<Cell>& cells) {
  std::string out;
  char buf[160];
  for (int s = 0; s < kNumScorings; ++s) {
    out += std::string("scoring: ") + kScoringNames[s] + "\n";
    std::snprintf(buf, sizeof buf, "%6s %6s %18s %18s\n", "RVs", "alpha", kMethodNames[0], kMethodNames[1]);
    out += buf;
    for (const auto& c : cells) {
      char a[40], b[40];
      std::snprintf(a, sizeof a, "%.2f (%d)", c.stats[s][0].mean_gap, c.stats[s][0].matches);
      std::snprintf(b, sizeof b, "%.2f (%d)", c.stats[s][1].mean_gap, c.stats[s][1].matches);
      std::snprintf(buf, sizeof buf, "%6d %6.1f %18s %18s\n", c.grid * c.grid, c.alpha, a, b);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace spn::experiment
