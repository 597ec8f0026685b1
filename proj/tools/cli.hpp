#pragma once

// Command-line driver: design | simulate | verify | oracle | export.
// Exit codes: 0 ok, 1 validation, 2 check failure, 3 budget.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "lmpseq/lmpseq.hpp"

#ifndef LMPSEQ_VERSION
#define LMPSEQ_VERSION "0.0.0"
#endif

namespace lmpseq::cli {

enum ExitCode { exit_ok = 0, exit_validation = 1, exit_check_failure = 2, exit_budget = 3 };

struct Invocation {
  std::string command;
  RunConfig config;
  std::uint64_t config_hash = 0;
};

namespace detail {

inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";  // folds -0
  return fmt::format("{:.17g}", x);
}

class Writer {
 public:
  explicit Writer(const Invocation& inv) : inv_(inv) {
    std::filesystem::create_directories(inv.config.directory);
  }

  std::string header() const {
    return fmt::format("# lmpseq {}\n# command: {}\n# config_hash: {:016x}\n# seed: {}\n",
                       LMPSEQ_VERSION, inv_.command, inv_.config_hash, inv_.config.seed);
  }

  std::filesystem::path write(const std::string& name, const std::string& body) const {
    const auto path = std::filesystem::path(inv_.config.directory) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << header() << body;
    return path;
  }

 private:
  const Invocation& inv_;
};

inline PipelineOptions pipeline_options(const RunConfig& cfg) {
  PipelineOptions po;
  po.recursion.sup_norm_tolerance = cfg.sup_norm_tol;
  po.recursion.max_horizon = cfg.max_horizon;
  if (cfg.half_width) po.grid = UniformGrid::symmetric(*cfg.half_width, cfg.nodes.value_or(4001));
  po.grid_nodes = cfg.nodes;
  po.force_grid = cfg.force_grid;
  po.rule = cfg.rule;
  po.quadrature_nodes = cfg.quadrature_nodes;
  po.root_tolerance = cfg.root_tol;
  po.simulation.reps = cfg.reps;
  po.simulation.seed = cfg.seed;
  po.simulation.workers = cfg.workers;
  po.history_budget = cfg.budget;
  return po;
}

struct Built {
  ObservationModel model;
  PipelineOptions options;
  RecursionOutput recursion;
  TestDesign design;
  std::optional<UniformGrid> grid;
};

inline Built build(const RunConfig& cfg) {
  Built out{build_model(cfg), pipeline_options(cfg), {}, {}, {}};
  auto [rec, design] = build_design(out.model, cfg.b, cfg.c, cfg.horizon, out.options, out.grid);
  out.recursion = std::move(rec);
  out.design = std::move(design);
  return out;
}

inline bool exact_capable(const Built& b) { return b.design.truncated() && b.model.all_discrete(); }

inline std::string boundaries_csv(const ContinuationRegions& regions) {
  std::string s;
  if (!regions.horizon) {
    s += fmt::format("# untruncated: stages beyond {} repeat with period {}\n",
                     regions.prefix + regions.cycle, regions.cycle);
  }
  s += "stage,A,B\n";
  for (const auto& sb : regions.stages) {
    if (sb.empty()) {
      s += fmt::format("{},EMPTY,EMPTY\n", sb.stage);
    } else {
      s += fmt::format("{},{},{}\n", sb.stage, num(sb.interval->lower), num(sb.interval->upper));
    }
  }
  return s;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Read a boundary file in the format design writes.
inline ContinuationRegions read_boundaries(const std::string& path, const ContinuationRegions& like) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open boundary file");
  ContinuationRegions out = like;
  out.stages.clear();
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line != "stage,A,B") throw ConfigError(path + ": line " + std::to_string(lineno) + ": expected header stage,A,B");
      continue;
    }
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    StageBoundary sb;
    try {
      sb.stage = static_cast<std::size_t>(std::stoull(a));
      if (trim(b) != "EMPTY") sb.interval = Interval{std::stod(b), std::stod(c)};
    } catch (const std::exception&) {
      throw ConfigError(path + ": line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
    }
    out.stages.push_back(sb);
  }
  if (out.stages.size() != like.stages.size()) {
    throw ConfigError(path + ": expected " + std::to_string(like.stages.size()) + " stage rows, found " +
                      std::to_string(out.stages.size()));
  }
  return out;
}

inline std::vector<double> eval_thetas(const RunConfig& cfg) {
  std::vector<double> t = cfg.thetas;
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// Assumption constants whose scan covers every evaluation theta.
inline AssumptionConstants covering_constants(const ObservationModel& model, const RunConfig& cfg) {
  double delta = cfg.delta.value_or(default_delta(model));
  for (double t : cfg.thetas) delta = std::max(delta, std::abs(t - model.theta0()) * (1.0 + 1e-9));
  std::vector<double> scan = default_theta_scan(model, delta);
  for (double t : cfg.thetas) {
    if (t != model.theta0()) scan.push_back(t);
  }
  return estimate_assumption_constants(model, delta, scan);
}

inline std::string check_row(const CheckReport& r) {
  return fmt::format("{},\"{}\",{},{},{},{},{},{},{}\n", r.name, r.instance, num(r.lhs),
                     to_string(r.relation), num(r.rhs), num(r.slack), num(r.tolerance),
                     to_string(r.provenance), r.pass ? "PASS" : "FAIL");
}

// ---------------------------------------------------------------------------
// commands

inline int cmd_design(const Invocation& inv, std::ostream& out) {
  const RunConfig& cfg = inv.config;
  const Built b = build(cfg);
  const Writer w(inv);
  std::string vf = "stage,z,v,r\n";
  const std::size_t stored = b.recursion.r.size();
  for (std::size_t n = 0; n < stored; ++n) {
    const ValueFunction& v = b.recursion.v[n];
    const ValueFunction& r = b.recursion.r[n];
    for (double z : v.nodes()) vf += fmt::format("{},{},{},{}\n", n, num(z), num(v(z)), num(r(z)));
  }
  w.write("value_functions.csv", vf);
  w.write("boundaries.csv", boundaries_csv(b.design.regions));
  {
    const auto path = std::filesystem::path(cfg.directory) / "effective_config.yaml";
    std::ofstream f(path, std::ios::binary);
    f << w.header() << canonical(cfg);
  }
  out << fmt::format("design: {} stage boundaries, {} value-function stages, {}\n",
                     b.design.regions.stages.size(), stored,
                     b.grid ? fmt::format("grid step {}", num(b.grid->step)) : std::string("exact breakpoints"));
  return exit_ok;
}

inline std::string summary_row(const std::string& label, const Characteristics& mc,
                               const std::optional<Characteristics>& exact) {
  std::string s = fmt::format("{},{},{},{},{},{},{},{}", label, num(mc.alpha.value), num(mc.alpha.se),
                              num(mc.asn.value), num(mc.asn.se), num(mc.power_derivative.value),
                              num(mc.power_derivative.se), to_string(mc.provenance));
  if (exact) {
    s += fmt::format(",{},{},{}", num(exact->alpha.value), num(exact->asn.value),
                     num(exact->power_derivative.value));
  }
  return s + "\n";
}

inline int cmd_simulate(const Invocation& inv, std::ostream& out) {
  const RunConfig& cfg = inv.config;
  const Built b = build(cfg);
  const Writer w(inv);
  const auto thetas = eval_thetas(cfg);
  const Characteristics mc = simulate(b.design, b.model, thetas, b.options.simulation);
  std::optional<Characteristics> exact;
  if (exact_capable(b)) exact = exact_characteristics(b.design, b.model, thetas, cfg.budget);

  std::string ch = fmt::format("# reps: {}\n", cfg.reps);
  ch += "theta,power,power_se,asn,asn_se,kl_to_stop,kl_se,provenance";
  if (exact) ch += ",exact_power,exact_asn,exact_kl_to_stop";
  ch += "\n";
  for (const auto& [theta, p] : mc.power) {
    const Estimate& a = mc.asn_at.at(theta);
    const Estimate& k = mc.kl_to_stop.at(theta);
    ch += fmt::format("{},{},{},{},{},{},{},{}", num(theta), num(p.value), num(p.se), num(a.value),
                      num(a.se), num(k.value), num(k.se), to_string(mc.provenance));
    if (exact) {
      ch += fmt::format(",{},{},{}", num(exact->power.at(theta).value),
                        num(exact->asn_at.at(theta).value), num(exact->kl_to_stop.at(theta).value));
    }
    ch += "\n";
  }
  w.write("characteristics.csv", ch);

  std::string sm = fmt::format("# reps: {}\n", cfg.reps);
  sm += "test,alpha,alpha_se,asn,asn_se,beta_dot,beta_dot_se,provenance";
  if (exact) sm += ",exact_alpha,exact_asn,exact_beta_dot";
  sm += "\n";
  sm += summary_row("lmp", mc, exact);
  if (cfg.b <= 0.0) {
    std::optional<Characteristics> em;
    if (exact) em = mirrored(*exact);
    sm += summary_row("mirrored", mirrored(mc), em);
  }
  w.write("summary.csv", sm);

  if (cfg.reps <= cfg.trace_max_reps) {
    SimulationOptions so = b.options.simulation;
    const auto trace = simulate_trace(b.design, b.model, b.model.theta0(), so);
    std::string t = "rep,stopped_at,z_at_stop,decision\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
      t += fmt::format("{},{},{},{}\n", i, trace[i].stopped_at, num(trace[i].z_at_stop),
                       to_string(trace[i].decision));
    }
    w.write("trace.csv", t);
  }
  out << fmt::format("simulate: alpha={} asn={} beta_dot={} ({} reps)\n", num(mc.alpha.value),
                     num(mc.asn.value), num(mc.power_derivative.value), cfg.reps);
  return exit_ok;
}

inline double atom_score(const ObservationModel& model, std::size_t j, std::size_t i) {
  return ::lmpseq::detail::discrete_stage(model, j).score(i);
}

inline int cmd_verify(const Invocation& inv, std::ostream& out) {
  const RunConfig& cfg = inv.config;
  Built b = build(cfg);
  const Writer w(inv);
  const bool grid = b.grid.has_value();
  const double law_tol = grid ? 1e-6 : 1e-9;
  const double root_tol = cfg.root_tol.value_or(default_root_tolerance(b.model));
  const std::string inst = fmt::format("b={} c={}", cfg.b, cfg.c);
  std::vector<CheckReport> reports;

  reports.push_back(value_law_check(b.recursion, law_tol, inst));
  if (cfg.boundaries) {
    ContinuationRegions regions = read_boundaries(*cfg.boundaries, b.design.regions);
    b.design = make_design(b.model, std::move(regions));
  }
  for (auto& r : boundary_checks(b.design.regions, b.recursion, root_tol, inst)) reports.push_back(r);
  {
    const double half = b.grid ? b.grid->half_width() : 4.0 * std::abs(cfg.b) + 8.0;
    const ProbeResult pr = probe_rule_equivalence(b.design.regions, b.recursion, 10000, cfg.seed, half);
    reports.push_back(make_report("rule_equivalence", inst + fmt::format(" probes={}", pr.probes),
                                  static_cast<double>(pr.mismatches), Relation::equal, 0.0, 0.0));
  }

  const AssumptionConstants ac = covering_constants(b.model, cfg);
  const auto thetas = eval_thetas(cfg);
  if (exact_capable(b)) {
    const TruncatedTest test = truncated_test(b.design);
    const Characteristics ch = exact_characteristics(b.design, b.model, thetas, cfg.budget);
    const double t0 = b.model.theta0();
    const auto abs_score = [&](std::size_t j, std::size_t i) {
      return std::abs(atom_score(b.model, j, i));
    };
    const auto sq_score = [&](std::size_t j, std::size_t i) {
      const double q = atom_score(b.model, j, i);
      return q * q;
    };
    const auto one = [](std::size_t, std::size_t) { return 1.0; };
    std::vector<double> wald_thetas{t0};
    for (double t : thetas) wald_thetas.push_back(t);
    for (double t : wald_thetas) {
      reports.push_back(wald_identity_check(b.model, test, one, t, inst + " Y=1", 1e-12, cfg.budget));
      reports.push_back(wald_identity_check(b.model, test, abs_score, t, inst + " Y=|q|", 1e-12, cfg.budget));
      reports.push_back(wald_identity_check(b.model, test, sq_score, t, inst + " Y=q^2", 1e-12, cfg.budget));
    }
    for (double t : thetas) {
      if (t == t0) continue;
      reports.push_back(kl_decomposition_check(b.model, test, t, inst, 1e-12, cfg.budget));
      const auto lr = [&, t](const HistoryView& h) {
        return history_probability(b.model, h, t) / h.prob0;
      };
      reports.push_back(jensen_check(
          b.model, test, [](double x) { return -std::log(x); }, [](const HistoryView&) { return 1.0; },
          lr, inst + fmt::format(" G=-ln theta={}", t), 1e-12, cfg.budget));
      const auto [lo, up] = info_inequality_check(ch, t, ac.gamma1, inst);
      reports.push_back(lo);
      reports.push_back(up);
    }
    reports.push_back(derivative_bound_check(ch, ac.gamma1, inst));
    std::vector<double> steps;
    for (double h : cfg.steps) {
      if (b.model.parameter_interval().contains(t0 - h) && b.model.parameter_interval().contains(t0 + h)) {
        steps.push_back(h);
      }
    }
    if (!steps.empty()) {
      for (auto& r : derivative_formula_check(b.model, test, steps, inst, 1e-12, cfg.budget)) {
        reports.push_back(r);
      }
    }
  } else {
    const Characteristics ch = simulate(b.design, b.model, thetas, b.options.simulation);
    for (double t : thetas) {
      if (t == b.model.theta0()) continue;
      const auto [lo, up] = info_inequality_check(ch, t, ac.gamma1, inst);
      reports.push_back(lo);
      reports.push_back(up);
    }
    reports.push_back(derivative_bound_check(ch, ac.gamma1, inst));
  }

  std::string body = "check,instance,lhs,relation,rhs,slack,tolerance,provenance,verdict\n";
  std::size_t failures = 0;
  for (const auto& r : reports) {
    body += check_row(r);
    if (!r.pass) {
      ++failures;
      out << "FAIL " << describe(r) << "\n";
    }
  }
  w.write("checks.csv", body);
  out << fmt::format("verify: {} checks, {} failed\n", reports.size(), failures);
  return failures == 0 ? exit_ok : exit_check_failure;
}

inline int cmd_oracle(const Invocation& inv, std::ostream& out) {
  const RunConfig& cfg = inv.config;
  const ObservationModel model = build_model(cfg);
  if (!cfg.horizon) throw ConfigError("oracle needs a truncated design (design.horizon)");
  if (!model.all_discrete()) throw ConfigError("oracle needs an all-discrete model");
  const std::size_t N = *cfg.horizon;
  require_history_budget(model, N, cfg.budget);
  const OracleResult res = brute_force_min(model, N, cfg.b, cfg.c, cfg.budget);
  const RecursionOutput rec = backward_induction(model, N, cfg.c, ExpectationOperator::exact());
  const double cert = cfg.c + rec.r_at(0)(cfg.b);
  double delta = std::abs(res.dp_min - cert);
  if (res.enumeration_min) delta = std::max(delta, std::abs(*res.enumeration_min - cert));

  std::size_t violations = 0;
  if (!res.minimizers.empty()) {
    for (const auto& r : res.minimizers) violations += stopping_sandwich(r, rec, cfg.b, model).violations;
  } else {
    const HistoryTree tree = HistoryTree::build(model, N, cfg.budget);
    const ContinuationRegions regions = assemble_regions(rec, cfg.b, default_root_tolerance(model));
    const TestDesign design = make_design(model, regions);
    const ExplicitRule rule = rule_from_design(tree, design);
    violations += stopping_sandwich(rule, rec, cfg.b, model).violations;
    delta = std::max(delta, std::abs(lagrange_value(rule, cfg.b, cfg.c, model, cfg.budget) - cert));
  }
  const bool pass = delta <= 1e-9 && violations == 0;
  std::string body =
      "N,b,c,model_hash,brute_force_min,dp_min,value_recursion,max_abs_delta,rules,minimizers,"
      "sandwich_violations,verdict\n";
  body += fmt::format("{},{},{},{:016x},{},{},{},{},{},{},{},{}\n", N, num(cfg.b), num(cfg.c),
                      fnv1a(canonical_model(cfg)),
                      res.enumeration_min ? num(*res.enumeration_min) : std::string("NA"),
                      num(res.dp_min), num(cert), num(delta), res.rule_count, res.minimizer_count,
                      violations, pass ? "PASS" : "FAIL");
  Writer(inv).write("certificate.csv", body);
  out << fmt::format("oracle: min={} value_recursion={} |delta|={} {}\n", num(res.dp_min), num(cert),
                     num(delta), pass ? "PASS" : "FAIL");
  return pass ? exit_ok : exit_check_failure;
}

inline int cmd_export(const Invocation& inv, std::ostream& out) {
  const RunConfig& cfg = inv.config;
  const Built b = build(cfg);
  double half;
  if (cfg.export_half_width) {
    half = *cfg.export_half_width;
  } else if (b.grid) {
    half = b.grid->half_width();
  } else {
    half = 1.0;
    for (const auto& v : b.recursion.v) {
      half = std::max({half, std::abs(v.nodes().front()), std::abs(v.nodes().back())});
    }
    half = std::ceil(half + 1.0);
  }
  const std::size_t m = cfg.export_nodes;
  std::string body = "stage,z,v,r\n";
  for (std::size_t n = 0; n < b.recursion.r.size(); ++n) {
    for (std::size_t i = 0; i < m; ++i) {
      const double z = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(m - 1);
      body += fmt::format("{},{},{},{}\n", n, num(z), num(b.recursion.v[n](z)), num(b.recursion.r[n](z)));
    }
  }
  Writer(inv).write("functions.csv", body);
  out << fmt::format("export: {} stages x {} nodes on [-{}, {}]\n", b.recursion.r.size(), m, num(half), num(half));
  return exit_ok;
}

}  // namespace detail

/// Run the command line `args` (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Locally most powerful sequential tests: design, simulate, verify, oracle, export", "lmpseq"};
  app.set_version_flag("--version", std::string(LMPSEQ_VERSION));
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> workers;
  app.add_option("--config", config_path, "YAML run configuration")->required();
  app.add_option("--seed", seed, "overrides evaluation.seed");
  app.add_option("--out", out_dir, "overrides output.directory");
  app.add_option("--workers", workers, "overrides evaluation.workers")->check(CLI::PositiveNumber);
  app.require_subcommand(1, 1);
  app.fallthrough();
  for (const char* name : {"design", "simulate", "verify", "oracle", "export"}) {
    app.add_subcommand(name)->fallthrough();
  }
  app.get_subcommand("design")->description("value functions and continuation boundaries");
  app.get_subcommand("simulate")->description("operating characteristics (exact and Monte Carlo)");
  app.get_subcommand("verify")->description("identities and inequalities; nonzero exit on failure");
  app.get_subcommand("oracle")->description("brute-force optimality certificate");
  app.get_subcommand("export")->description("value functions resampled on a uniform grid");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_validation;
  }

  Invocation inv;
  inv.command = app.get_subcommands().front()->get_name();
  try {
    inv.config = load_config(config_path);
    if (seed) inv.config.seed = *seed;
    if (out_dir) inv.config.directory = *out_dir;
    if (workers) inv.config.workers = *workers;
    inv.config_hash = fnv1a(canonical(inv.config));
    if (inv.command == "design") return detail::cmd_design(inv, out);
    if (inv.command == "simulate") return detail::cmd_simulate(inv, out);
    if (inv.command == "verify") return detail::cmd_verify(inv, out);
    if (inv.command == "oracle") return detail::cmd_oracle(inv, out);
    return detail::cmd_export(inv, out);
  } catch (const BudgetExceeded& e) {
    err << "budget: " << e.what() << "\n";
    return exit_budget;
  } catch (const InvariantViolation& e) {
    err << "check failure: " << e.what() << "\n";
    return exit_check_failure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_validation;
  }
}

}  // namespace lmpseq::cli
