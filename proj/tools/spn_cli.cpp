#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spn/spn.hpp"

namespace {

using namespace spn;

constexpr int kExitOk = 0;
constexpr int kExitSemantic = 1;
constexpr int kExitParse = 2;

std::string fmt_log(double v) {
  if (v == kNegInf) return "-inf";
  if (v == 0.0 || std::abs(v) < 5e-13) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  return buf;
}

std::string fmt_value(const Variable& var, double v) {
  if (var.is_discrete()) return std::to_string(static_cast<long long>(v));
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

TwinWeightPolicy policy_from(const std::string& name) {
  if (name == "uniform") return TwinWeightPolicy::uniform();
  if (name == "deterministic") return TwinWeightPolicy::deterministic();
  throw Error(ErrorCode::InvalidArgument, "twins must be uniform or deterministic");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_validate(const std::string& path, std::uint64_t budget) {
  const auto mf = io::load_model(path);
  const auto r = validate(mf.graph, budget);
  auto list = [](const std::vector<NodeId>& ids) {
    std::string s;
    for (NodeId n : ids) s += " " + std::to_string(n);
    return s;
  };
  std::cout << "nodes: " << mf.graph.size() << "\n";
  std::cout << "edges: " << mf.graph.num_edges() << "\n";
  std::cout << "complete: " << (r.complete ? "yes" : "no") << "\n";
  if (!r.complete) std::cout << "incomplete sums:" << list(r.incomplete_sums) << "\n";
  std::cout << "decomposable: " << (r.decomposable ? "yes" : "no") << "\n";
  if (!r.decomposable) std::cout << "non-decomposable products:" << list(r.non_decomposable_products) << "\n";
  std::cout << "selective: " << to_string(r.selective) << "\n";
  if (r.witness) {
    std::cout << "witness sum: " << r.witness->sum << "\nwitness input:";
    for (std::size_t v = 0; v < r.witness->input.size(); ++v)
      std::cout << " " << mf.graph.variable(v).name << "=" << r.witness->input[v];
    std::cout << "\n";
  }
  return r.valid() ? kExitOk : kExitSemantic;
}

int cmd_eval(const std::string& path, const std::string& evidence) {
  const auto mf = io::load_model(path);
  const Evidence e = io::parse_evidence_spec(mf.graph, evidence);
  std::cout << fmt_log(log_evaluate(mf.graph, e)) << "\n";
  return kExitOk;
}

int cmd_augment(const std::string& path, const std::string& twins, const std::string& out) {
  const auto mf = io::load_model(path);
  if (mf.lv) throw Error(ErrorCode::AlreadyAugmented, path + " already carries latent variables");
  const AugmentedSpn aug = augment(mf.graph, policy_from(twins));
  std::cout << "latent variables: " << aug.latents.size() << "\n";
  std::cout << "twins: " << aug.num_twins() << "\n";
  std::cout << "twin-link edges: " << aug.twin_link_edges << "\n";
  std::cout << "nodes: " << mf.graph.size() << " -> " << aug.graph.size() << "\n";
  std::cout << "edges: " << mf.graph.num_edges() << " -> " << aug.graph.num_edges() << "\n";
  const std::string text = io::dump_model(aug.graph, io::lv_block(aug));
  if (out.empty() || out == "-")
    std::cout << text;
  else
    io::write_file(out, text);
  return kExitOk;
}

struct EmArgs {
  std::string model, data, update = "WMV", init = "original", out, trace;
  int iters = 30;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  double floor = 0.01;
  unsigned threads = 1;
};

int cmd_em(const EmArgs& a) {
  const auto mf = io::load_model(a.model);
  const Dataset data = io::load_csv(mf.graph, a.data);
  EmOptions opts;
  opts.max_iters = a.iters;
  opts.rel_ll_tol = a.tol;
  opts.variance_floor = a.floor;
  opts.update = parse_update_set(a.update);
  opts.threads = a.threads;
  SpnGraph start = mf.graph;
  if (a.init == "random")
    start = randomize_parameters(start, opts.update, a.seed);
  else if (a.init != "original")
    throw Error(ErrorCode::InvalidArgument, "init must be original or random");
  const EmResult r = em_fit(start, data, opts);

  std::string trace;
  char buf[64];
  for (double ll : r.ll_trace) {
    std::snprintf(buf, sizeof buf, "%.17g\n", ll);
    trace += buf;
  }
  if (!a.trace.empty()) io::write_file(a.trace, trace);
  std::cerr << "records: " << data.size() << ", rejected: " << r.rejected_records
            << ", iterations: " << r.ll_trace.size() - 1 << "\n";
  if (a.trace.empty()) std::cerr << trace;
  const std::string text = io::dump_model(r.graph, mf.lv);
  if (a.out.empty() || a.out == "-")
    std::cout << text;
  else
    io::write_file(a.out, text);
  return kExitOk;
}

int cmd_mpe(const std::string& path, const std::string& evidence, const std::string& mode, const std::string& twins) {
  const auto mf = io::load_model(path);
  const SpnGraph& g = mf.graph;
  const Evidence e = io::parse_evidence_spec(g, evidence);
  if (mode == "selective") {
    MpeOptions opts;
    opts.verify_selective = true;
    const MpeResult r = mpe_selective(g, e, opts);
    for (const auto& v : g.variables()) std::cout << v.name << "=" << fmt_value(v, r.assignment[v.id]) << "\n";
    std::cout << "log_score=" << fmt_log(r.log_score) << "\n";
    return kExitOk;
  }
  if (mode != "augmented") throw Error(ErrorCode::InvalidArgument, "mode must be selective or augmented");
  const TwinWeightPolicy policy = policy_from(twins);
  const MpeResult r = mpe_augmented(g, e, policy, MpeMode::simulated);
  const AugmentedSpn aug = augment(g, policy);
  for (const auto& v : aug.graph.variables()) std::cout << v.name << "=" << fmt_value(v, r.assignment[v.id]) << "\n";
  std::cout << "log_score=" << fmt_log(r.log_score) << "\n";
  std::cout << "log_likelihood_original=" << fmt_log(mpe_quality(g, r)) << "\n";
  return kExitOk;
}

GridSpec::Cells cells_from(const std::string& name) {
  if (name == "leaves") return GridSpec::Cells::leaves;
  if (name == "sums") return GridSpec::Cells::sums;
  throw Error(ErrorCode::InvalidArgument, "cells must be leaves or sums");
}

int cmd_experiment(const std::string& grids, const std::string& alphas, int draws, std::uint64_t seed,
                   unsigned threads, const std::string& cells, const std::string& out) {
  experiment::MpeExperimentConfig cfg;
  cfg.grids.clear();
  cfg.alphas.clear();
  for (const auto& s : split_list(grids)) cfg.grids.push_back(std::stoi(s));
  for (const auto& s : split_list(alphas)) cfg.alphas.push_back(std::stod(s));
  cfg.draws = draws;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.cells = cells_from(cells);
  const auto result = experiment::run_mpe_experiment(cfg);
  std::cout << experiment::report_text(result);
  if (!out.empty()) io::write_file(out, experiment::report_json(cfg, result).dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sum-product network tool: validation, evaluation, augmentation, EM and MPE"};
  app.require_subcommand(1);

  std::string model, evidence, out, twins = "uniform", mode = "selective";
  std::uint64_t budget = kDefaultSelectivityBudget;

  auto* v = app.add_subcommand("validate", "check completeness, decomposability and selectivity");
  v->add_option("model", model, "model file")->required();
  v->add_option("--budget", budget, "largest joint state space enumerated for selectivity");

  auto* ev = app.add_subcommand("eval", "print log S(e)");
  ev->add_option("model", model, "model file")->required();
  ev->add_option("--evidence,-e", evidence, "e.g. \"X0=1; X1 in {0,1}; X2 in [0,2]; X3=?\"");

  auto* au = app.add_subcommand("augment", "add latent variables, links and twin sums");
  au->add_option("model", model, "model file")->required();
  au->add_option("--twins", twins, "twin weights: uniform or deterministic");
  au->add_option("-o,--output", out, "output model file (default stdout)");

  EmArgs em;
  auto* emc = app.add_subcommand("em", "fit sum weights and Gaussian leaves");
  emc->add_option("model", em.model, "model file")->required();
  emc->add_option("--data", em.data, "CSV dataset")->required();
  emc->add_option("--iters", em.iters, "maximum number of iterations");
  emc->add_option("--update", em.update, "parameters to update, subset of WMV");
  emc->add_option("--seed", em.seed, "seed for random initialization");
  emc->add_option("--init", em.init, "original or random");
  emc->add_option("--tol", em.tol, "relative log-likelihood tolerance");
  emc->add_option("--variance-floor", em.floor, "lower bound for Gaussian variances");
  emc->add_option("--threads", em.threads, "E-step threads");
  emc->add_option("-o,--output", em.out, "output model file (default stdout)");
  emc->add_option("--trace", em.trace, "file receiving the mean log-likelihood per iteration");

  auto* mp = app.add_subcommand("mpe", "most probable explanation");
  mp->add_option("model", model, "model file")->required();
  mp->add_option("--evidence,-e", evidence, "evidence specification");
  mp->add_option("--mode", mode, "selective or augmented");
  mp->add_option("--twins", twins, "twin weights for augmented mode");

  std::string grids = "2,3,4", alphas = "0.5,1,2", cells = "leaves";
  int draws = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  auto* ex = app.add_subcommand("experiment-mpe", "MPE study on random-weight grid SPNs");
  ex->add_option("--grids", grids, "comma-separated grid sides");
  ex->add_option("--alphas", alphas, "comma-separated Dirichlet concentrations");
  ex->add_option("--draws", draws, "weight draws per cell");
  ex->add_option("--seed", seed, "experiment seed");
  ex->add_option("--threads", threads, "worker threads (0: all cores)");
  ex->add_option("--cells", cells, "unit regions enter as leaves or as shared sums");
  ex->add_option("-o,--output", out, "JSON report");

  auto* gen = app.add_subcommand("generate", "write a generated structure");
  gen->require_subcommand(1);
  int side = 2, gaussians = 0, chain_k = 2;
  double alpha = 0.0;
  auto* gg = gen->add_subcommand("grid", "Poon-Domingos grid");
  gg->add_option("--side", side, "grid side length");
  gg->add_option("--gaussians", gaussians, "Gaussian leaves per cell (0: binary indicators)");
  gg->add_option("--cells", cells, "unit regions enter as leaves or as shared sums");
  gg->add_option("--alpha", alpha, "draw Dirichlet weights with this concentration (0: uniform)");
  gg->add_option("--seed", seed, "weight seed");
  gg->add_option("-o,--output", out, "output model file (default stdout)");
  auto* gc = gen->add_subcommand("chain", "chain of sums");
  gc->add_option("--k", chain_k, "number of sums");
  gc->add_option("-o,--output", out, "output model file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitParse;
  }

  try {
    if (*v) return cmd_validate(model, budget);
    if (*ev) return cmd_eval(model, evidence);
    if (*au) return cmd_augment(model, twins, out);
    if (*emc) return cmd_em(em);
    if (*mp) return cmd_mpe(model, evidence, mode, twins);
    if (*ex) return cmd_experiment(grids, alphas, draws, seed, threads, cells, out);
    if (*gen) {
      SpnGraph g;
      if (*gg) {
        GridSpec spec{side};
        spec.cells = cells_from(cells);
        if (gaussians > 0) {
          spec.leaves = GridSpec::Leaves::gaussians;
          spec.gaussians_per_cell = gaussians;
        }
        g = gen_pd_grid(spec);
        if (alpha > 0.0) g = sample_weights(g, {alpha, seed});
      } else {
        g = gen_chain(chain_k);
      }
      const std::string text = io::dump_model(g);
      if (out.empty() || out == "-")
        std::cout << text;
      else
        io::write_file(out, text);
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ParseError ? kExitParse : kExitSemantic;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSemantic;
  }
  return kExitOk;
}
