// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <deque>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "cli.hpp"
#include "lmpseq/lmpseq.hpp"

using namespace lmpseq;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (failures.size() < 5) failures.push_back(what);
  }
};

// every recursion built below is recorded here and audited by criterion 2
struct Audited {
  std::string label;
  RecursionOutput rec;
  double tol;
};
std::deque<Audited> audit_log;

const RecursionOutput& keep(std::string label, RecursionOutput rec, double tol) {
  audit_log.push_back({std::move(label), std::move(rec), tol});
  return audit_log.back().rec;
}

constexpr double discrete_law_tol = 1e-9;
constexpr double continuous_law_tol = 1e-6;

DiscreteStage two_point() { return DiscreteStage({-1.0, 1.0}, {0.5, 0.5}, {-0.5, 0.5}); }
DiscreteStage three_point() {
  return DiscreteStage({-1.0, 0.0, 2.0}, {0.3, 0.4, 0.3}, {-0.3, 0.0, 0.3});
}

struct DiscreteFixture {
  std::string name;
  ObservationModel model;
  std::vector<double> thetas;  // three alternatives inside the parameter interval
};

std::vector<DiscreteFixture> discrete_fixtures() {
  return {
      {"two_point", ObservationModel::iid(0.0, two_point()), {-0.4, 0.2, 0.6}},
      {"bernoulli_0.3", ObservationModel::iid(0.3, DiscreteStage::bernoulli(0.3)), {0.15, 0.4, 0.6}},
      {"three_point", ObservationModel::iid(0.0, three_point()), {-0.5, 0.3, 0.8}},
      {"switching", ObservationModel::finitely_nonstationary(0.0, {three_point(), two_point()}),
       {-0.5, 0.3, 0.8}},
  };
}

struct ContinuousFixture {
  std::string name;
  ObservationModel model;
};

std::vector<ContinuousFixture> continuous_fixtures() {
  return {
      {"normal_iid", ObservationModel::iid(0.0, NormalStage{1.0})},
      {"periodic_2", ObservationModel::periodic(0.0, {NormalStage{1.0}, two_point()})},
      {"nonstationary_3", ObservationModel::finitely_nonstationary(
                              0.0, {three_point(), NormalStage{2.0}, NormalStage{1.0}})},
  };
}

std::vector<double> c_sweep() {
  // 20 log-spaced costs from 0.02 to 1.5; the top end empties every interval
  std::vector<double> out;
  for (int k = 0; k < 20; ++k) out.push_back(0.02 * std::pow(75.0, k / 19.0));
  return out;
}

// gamma1 from a scan that contains the evaluated alternatives
AssumptionConstants covering_constants(const ObservationModel& m, const std::vector<double>& thetas) {
  double reach = default_delta(m);
  for (double t : thetas) reach = std::max(reach, 1.01 * std::abs(t - m.theta0()));
  auto scan = default_theta_scan(m, default_delta(m));
  scan.insert(scan.end(), thetas.begin(), thetas.end());
  return estimate_assumption_constants(m, reach, scan);
}

RecursionOutput exact_recursion(const ObservationModel& m, std::size_t N, double c) {
  return backward_induction(m, N, c, ExpectationOperator::exact());
}

RecursionOutput limit_recursion(const ObservationModel& m, double c, double sup_tol = 1e-9) {
  RecursionOptions opts;
  opts.sup_norm_tolerance = sup_tol;
  const auto op = ExpectationOperator::on_grid(default_grid(m, c, 0.0, std::nullopt, 2001), m);
  return iterate_to_limit(m, c, op, opts);
}

// ---------------------------------------------------------------------------

Verdict certificate() {
  Verdict v;
  std::size_t instances = 0, enumerated = 0, minimizers = 0, dp_nodes = 0;
  double worst = 0.0;
  for (const auto& fx : discrete_fixtures()) {
    for (std::size_t N : {2u, 3u, 4u}) {
      for (double b : {-0.5, 0.0, 0.7}) {
        for (double c : {0.05, 0.2}) {
          const auto id = fmt::format("{} N={} b={} c={}", fx.name, N, b, c);
          const auto& rec = keep("certificate " + id, exact_recursion(fx.model, N, c), discrete_law_tol);
          const double target = c + rec.r_at(0)(b);
          const auto res = brute_force_min(fx.model, N, b, c, 1'000'000, 100'000);
          ++instances;
          worst = std::max(worst, std::abs(res.dp_min - target));
          v.require(std::abs(res.dp_min - target) <= 1e-9, id + " dp");
          if (res.enumeration_min) {
            ++enumerated;
            worst = std::max(worst, std::abs(*res.enumeration_min - target));
            v.require(std::abs(*res.enumeration_min - target) <= 1e-9, id + " enumeration");
            for (const auto& rule : res.minimizers) {
              ++minimizers;
              const auto s = stopping_sandwich(rule, rec, b, fx.model, 1e-9);
              v.require(s.holds(), id + " minimizer: " + s.first_violation);
            }
          } else {
            // every optimal action at every history, as found by the history DP
            const auto tree = HistoryTree::build(fx.model, N, 1'000'000);
            for (std::size_t k = 1; k < tree.nodes.size(); ++k) {
              const std::size_t n = tree.depth(k);
              if (n >= N) continue;
              ++dp_nodes;
              const double y = b - tree.nodes[k].z;
              const double d = terminal_value(y) - (c + rec.r_at(n)(y));
              if (std::abs(d) <= 1e-9) continue;
              const bool stop = res.stop_optimal[k], cont = res.continue_optimal[k];
              v.require(d < 0.0 ? (stop && !cont) : (cont && !stop), id + " optimal action");
            }
          }
        }
      }
    }
  }
  v.detail = fmt::format("{} instances ({} enumerated, {} minimizers, {} DP-only nodes), max |delta| {:.2e}",
                         instances, enumerated, minimizers, dp_nodes, worst);
  return v;
}

Verdict value_laws() {
  Verdict v;
  // horizon monotonicity v^{N+1} <= v^N
  double worst_order = 0.0;
  for (const auto& fx : discrete_fixtures()) {
    std::vector<RecursionOutput> recs;
    for (std::size_t N = 1; N <= 7; ++N) recs.push_back(exact_recursion(fx.model, N, 0.05));
    for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
      for (std::size_t n = 0; n <= k + 1; ++n) {
        const double e = max_excess(recs[k + 1].v[n], recs[k].v[n]);
        worst_order = std::max(worst_order, e);
        v.require(e <= discrete_law_tol, fmt::format("{} N={} n={} order", fx.name, k + 1, n));
      }
    }
    for (std::size_t k = 0; k < recs.size(); ++k) {
      keep(fmt::format("laws {} N={}", fx.name, k + 1), std::move(recs[k]), discrete_law_tol);
    }
  }
  for (const auto& fx : continuous_fixtures()) {
    const auto op = ExpectationOperator::on_grid(UniformGrid::symmetric(12.0, 1201), fx.model);
    std::vector<RecursionOutput> recs;
    for (std::size_t N = 1; N <= 10; ++N) recs.push_back(backward_induction(fx.model, N, 0.05, op));
    for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
      for (std::size_t n = 0; n <= k + 1; ++n) {
        const double e = max_excess(recs[k + 1].v[n], recs[k].v[n]);
        worst_order = std::max(worst_order, e);
        v.require(e <= continuous_law_tol, fmt::format("{} N={} n={} order", fx.name, k + 1, n));
      }
    }
    for (std::size_t k = 0; k < recs.size(); ++k) {
      keep(fmt::format("laws {} N={}", fx.name, k + 1), std::move(recs[k]), continuous_law_tol);
    }
  }
  // laws on everything the suite has built so far, this criterion included
  std::size_t functions = 0;
  for (const auto& a : audit_log) {
    for (std::size_t n = 0; n < a.rec.v.size(); ++n) {
      const auto rep = check_laws(a.rec.v[n]);
      ++functions;
      v.require(rep.holds(a.tol), fmt::format("{} v_{}: {}", a.label, n, rep.describe()));
      if (n < a.rec.r.size()) {
        const auto rr = check_laws(a.rec.r[n]);
        ++functions;
        v.require(rr.holds(a.tol), fmt::format("{} r_{}: {}", a.label, n, rr.describe()));
        v.require(max_excess(a.rec.r[n], a.rec.v[n]) <= a.tol, fmt::format("{} r_{} > v_{}", a.label, n, n));
      }
    }
  }
  v.detail = fmt::format("{} recursions, {} functions, worst horizon excess {:.2e}", audit_log.size(),
                         functions, worst_order);
  return v;
}

struct SweepCase {
  std::string name;
  std::function<RecursionOutput(double)> make;
  double tol;
  double probe_half_width;
};

std::vector<SweepCase> sweep_cases() {
  std::vector<SweepCase> out;
  for (const auto& fx : discrete_fixtures()) {
    out.push_back({fx.name + " N=8", [m = fx.model](double c) { return exact_recursion(m, 8, c); },
                   discrete_law_tol, 8.0});
  }
  for (const auto& fx : continuous_fixtures()) {
    out.push_back({fx.name + " limit", [m = fx.model](double c) { return limit_recursion(m, c); },
                   continuous_law_tol, 8.0});
  }
  return out;
}

// per-case boundaries, reused by the symmetry criterion
std::map<std::string, std::vector<std::pair<double, ContinuationRegions>>> sweep_regions;

Verdict dichotomy() {
  Verdict v;
  std::size_t intervals = 0, empties = 0, probes = 0, skipped = 0;
  double worst_discrete = 0.0, worst_continuous = 0.0;
  std::uint64_t seed = 1;
  for (const auto& sc : sweep_cases()) {
    const bool discrete = sc.tol == discrete_law_tol;
    const double root_tol = discrete ? 1e-10 : 1e-7;
    for (double c : c_sweep()) {
      const auto& rec = keep(fmt::format("sweep {} c={:.4g}", sc.name, c), sc.make(c), sc.tol);
      const auto regions = assemble_regions(rec, 0.0, discrete ? 1e-12 : 1e-9);
      for (std::size_t n = 1; n <= regions.stages.size(); ++n) {
        const auto& sb = regions.at(n);
        const auto& r = rec.r_at(n);
        v.require(sb.empty() == (c + r(0.0) > 0.0), fmt::format("{} c={} n={} dichotomy", sc.name, c, n));
        (sb.empty() ? empties : intervals) += 1;
        const double res = boundary_residual(sb, r, c);
        (discrete ? worst_discrete : worst_continuous) =
            std::max(discrete ? worst_discrete : worst_continuous, res);
        v.require(res <= root_tol, fmt::format("{} c={} n={} residual {:.2e}", sc.name, c, n, res));
      }
      const auto p = probe_rule_equivalence(regions, rec, 10000, seed++, sc.probe_half_width);
      probes += p.probes;
      skipped += p.skipped;
      v.require(p.mismatches == 0, fmt::format("{} c={} {} probe mismatches", sc.name, c, p.mismatches));
      sweep_regions[sc.name].emplace_back(c, regions);
    }
  }
  v.detail = fmt::format("{} cases x 20 costs, {} intervals, {} empty, residual {:.1e} / {:.1e}, "
                         "{} probes ({} ties skipped)",
                         sweep_cases().size(), intervals, empties, worst_discrete, worst_continuous, probes,
                         skipped);
  return v;
}

Verdict symmetry() {
  Verdict v;
  std::size_t compared = 0;
  double worst = 0.0;
  for (const char* name : {"normal_iid limit", "two_point N=8"}) {
    const auto it = sweep_regions.find(name);
    v.require(it != sweep_regions.end() && it->second.size() == 20, std::string(name) + " sweep missing");
    if (it == sweep_regions.end()) continue;
    for (const auto& [c, regions] : it->second) {
      for (const auto& sb : regions.stages) {
        if (sb.empty()) continue;
        ++compared;
        const double s = std::abs(sb.interval->lower + sb.interval->upper);
        worst = std::max(worst, s);
        v.require(s <= 1e-6, fmt::format("{} c={} stage {} |A+B|={:.2e}", name, c, sb.stage, s));
      }
    }
  }
  // the untruncated two-point limit as well
  for (double c : c_sweep()) {
    if (c < 0.05) continue;
    const auto m = ObservationModel::iid(0.0, two_point());
    const auto& rec = keep(fmt::format("symmetry two_point limit c={:.4g}", c), limit_recursion(m, c),
                           continuous_law_tol);
    const auto sb = solve_stage_boundary(rec.r_at(1), c, 1e-10, 1);
    if (sb.empty()) continue;
    ++compared;
    const double s = std::abs(sb.interval->lower + sb.interval->upper);
    worst = std::max(worst, s);
    v.require(s <= 1e-6, fmt::format("two_point limit c={} |A+B|={:.2e}", c, s));
  }
  v.require(compared > 0, "no nonempty intervals compared");
  v.detail = fmt::format("{} nonempty intervals, max |A+B| {:.2e}", compared, worst);
  return v;
}

struct DiscreteDesign {
  std::string id;
  const DiscreteFixture* fx;
  TestDesign design;
};

std::vector<DiscreteFixture> fixtures_d = discrete_fixtures();

std::vector<DiscreteDesign> discrete_designs() {
  std::vector<DiscreteDesign> out;
  for (const auto& fx : fixtures_d) {
    for (double b : {-0.5, 0.0, 0.7}) {
      for (std::size_t N : {3u, 5u}) {
        const double c = 0.05;
        const auto& rec = keep(fmt::format("design {} N={} b={}", fx.name, N, b),
                               exact_recursion(fx.model, N, c), discrete_law_tol);
        out.push_back({fmt::format("{} N={} b={}", fx.name, N, b), &fx,
                       make_design(fx.model, assemble_regions(rec, b))});
      }
    }
  }
  return out;
}

Verdict identities() {
  Verdict v;
  std::size_t wald = 0, kl = 0;
  double worst = 0.0;
  for (const auto& dd : discrete_designs()) {
    const auto& m = dd.fx->model;
    const auto test = truncated_test(dd.design);
    const auto q = [&m](std::size_t j, std::size_t i) {
      return std::get<DiscreteStage>(m.stage(j)).score(i);
    };
    const std::vector<std::pair<std::string, std::function<double(std::size_t, std::size_t)>>> ys = {
        {"Y=1", [](std::size_t, std::size_t) { return 1.0; }},
        {"Y=|q|", [&](std::size_t j, std::size_t i) { return std::abs(q(j, i)); }},
        {"Y=q^2+j", [&](std::size_t j, std::size_t i) { return q(j, i) * q(j, i) + double(j); }},
    };
    for (double th : dd.fx->thetas) {
      for (const auto& [name, Y] : ys) {
        const auto r = wald_identity_check(m, test, Y, th, dd.id + " " + name);
        ++wald;
        worst = std::max(worst, std::abs(r.lhs - r.rhs) / std::max(1.0, std::abs(r.rhs)));
        v.require(r.pass && std::abs(r.lhs - r.rhs) <= 1e-12 * std::max(1.0, std::abs(r.rhs)), describe(r));
      }
      const auto r = kl_decomposition_check(m, test, th, dd.id);
      ++kl;
      worst = std::max(worst, std::abs(r.lhs - r.rhs) / std::max(1.0, std::abs(r.rhs)));
      v.require(r.pass, describe(r));
    }
  }
  v.detail = fmt::format("{} Wald and {} KL identities, max relative gap {:.2e}", wald, kl, worst);
  return v;
}

Verdict derivative() {
  Verdict v;
  const auto m = ObservationModel::iid(0.5, DiscreteStage::bernoulli(0.5));
  const auto& rec = keep("derivative bernoulli N=3", exact_recursion(m, 3, 0.2), discrete_law_tol);
  const auto d = make_design(m, assemble_regions(rec, -0.5));
  const std::vector<double> steps{1e-1, 1e-2, 1e-3};
  const auto reps = derivative_formula_check(m, truncated_test(d), steps, "bernoulli N=3");
  std::vector<double> errs;
  for (const auto& r : reps) {
    errs.push_back(r.lhs);
    v.require(r.pass, describe(r));
  }
  const auto ex = exact_characteristics(d, m, {});
  SimulationOptions opts;
  opts.reps = 100000;
  opts.seed = 20240601;
  const auto mc = simulate(d, m, {}, opts);
  const double gap = std::abs(mc.power_derivative.value - ex.power_derivative.value);
  v.require(gap <= 4.0 * mc.power_derivative.se,
            fmt::format("MC {} vs exact {} (se {})", mc.power_derivative.value, ex.power_derivative.value,
                        mc.power_derivative.se));

  // a second design, with the exact value not at a round number
  const auto m3 = ObservationModel::iid(0.0, three_point());
  const auto& rec3 = keep("derivative three_point N=4", exact_recursion(m3, 4, 0.05), discrete_law_tol);
  const auto d3 = make_design(m3, assemble_regions(rec3, 0.7));
  for (const auto& r : derivative_formula_check(m3, truncated_test(d3), steps, "three_point N=4")) {
    v.require(r.pass, describe(r));
  }
  const auto ex3 = exact_characteristics(d3, m3, {});
  opts.seed = 77;
  const auto mc3 = simulate(d3, m3, {}, opts);
  const double gap3 = std::abs(mc3.power_derivative.value - ex3.power_derivative.value);
  v.require(gap3 <= 4.0 * mc3.power_derivative.se, "three_point MC derivative");

  v.detail = fmt::format("exact {:.6f}, fd errors {:.1e} {:.1e} {:.1e}, MC {:.6f} ({:.2f} SE); "
                         "three_point {:.2f} SE",
                         ex.power_derivative.value, errs[0], errs[1], errs[2], mc.power_derivative.value,
                         gap / mc.power_derivative.se, gap3 / mc3.power_derivative.se);
  return v;
}

Verdict envelope() {
  Verdict v;
  std::size_t pairs = 0, mc_pairs = 0;
  // exact characteristics on every discrete design
  for (const auto& dd : discrete_designs()) {
    const auto& th = dd.fx->thetas;
    const auto ch = exact_characteristics(dd.design, dd.fx->model, th);
    const auto k = covering_constants(dd.fx->model, th);
    for (double t : th) {
      const auto [lo, up] = info_inequality_check(ch, t, k.gamma1, dd.id);
      ++pairs;
      v.require(lo.pass, describe(lo));
      v.require(up.pass, describe(up));
    }
    const auto db = derivative_bound_check(ch, k.gamma1, dd.id);
    v.require(db.pass, describe(db));
  }
  // Monte Carlo on the continuous fixtures
  for (const auto& fx : continuous_fixtures()) {
    const double c = 0.1;
    const auto& rec = keep("envelope " + fx.name, limit_recursion(fx.model, c), continuous_law_tol);
    for (double b : {-0.5, 0.0, 0.7}) {
      const auto d = make_design(fx.model, assemble_regions(rec, b, 1e-9));
      const std::vector<double> th{-0.3, 0.2, 0.5};
      SimulationOptions opts;
      opts.reps = 20000;
      opts.seed = 5;
      const auto ch = simulate(d, fx.model, th, opts);
      const auto k = covering_constants(fx.model, th);
      for (double t : th) {
        const auto [lo, up] = info_inequality_check(ch, t, k.gamma1, fx.name);
        ++mc_pairs;
        v.require(lo.pass, describe(lo));
        v.require(up.pass, describe(up));
      }
      const auto db = derivative_bound_check(ch, k.gamma1, fx.name);
      v.require(db.pass, describe(db));
    }
  }
  // edge cases: rejection impossible (b above every reachable z) or certain
  const auto m = ObservationModel::iid(0.0, two_point());
  const auto& rec = keep("envelope edge", exact_recursion(m, 3, 0.1), discrete_law_tol);
  double edge = 0.0;
  for (double b : {5.0, -5.0}) {
    const auto d = make_design(m, assemble_regions(rec, b));
    const auto ch = exact_characteristics(d, m, {0.3});
    const double a = ch.alpha.value;
    v.require(b > 0 ? a == 0.0 : a == 1.0, fmt::format("edge b={} alpha={}", b, a));
    edge = std::max(edge, std::abs(ch.power_derivative.value));
    v.require(std::abs(ch.power_derivative.value) <= 1e-12, fmt::format("edge b={} beta_dot", b));
    const auto k = covering_constants(m, {0.3});
    const auto db = derivative_bound_check(ch, k.gamma1, "edge");
    v.require(db.pass, describe(db));
    const auto [lo, up] = info_inequality_check(ch, 0.3, k.gamma1, "edge");
    v.require(lo.pass && up.pass, describe(lo) + " / " + describe(up));
  }
  v.detail = fmt::format("{} exact and {} Monte Carlo fixture/theta pairs; edge |beta_dot| {:.1e}", pairs,
                         mc_pairs, edge);
  return v;
}

Verdict dominance() {
  Verdict v;
  std::size_t tests = 0, in_class = 0, ties = 0;
  double margin = -1e300;
  struct Case {
    std::string name;
    ObservationModel model;
  };
  const std::vector<Case> cases = {
      {"two_point", ObservationModel::iid(0.0, two_point())},
      {"bernoulli_0.3", ObservationModel::iid(0.3, DiscreteStage::bernoulli(0.3))},
  };
  const double tol = 1e-12;
  for (const auto& cs : cases) {
    for (double b : {-0.5, 0.0, 0.7}) {
      for (double c : {0.05, 0.2}) {
        const std::size_t N = 3;
        const auto id = fmt::format("{} b={} c={}", cs.name, b, c);
        const auto& rec = keep("dominance " + id, exact_recursion(cs.model, N, c), discrete_law_tol);
        const auto d = make_design(cs.model, assemble_regions(rec, b));
        const auto star = exact_characteristics(d, cs.model, {});
        const double a0 = star.alpha.value, n0 = star.asn.value, d0 = star.power_derivative.value;
        tests += for_each_deterministic_test(cs.model, N, [&](const EnumeratedTest& t) {
          // b > 0: level at most alpha*; b < 0: the mirrored class; b = 0: any level
          const bool level_ok = b > 0 ? t.alpha <= a0 + tol : (b < 0 ? t.alpha >= a0 - tol : true);
          if (!level_ok || t.asn > n0 + tol) return;
          ++in_class;
          margin = std::max(margin, t.power_derivative - d0);
          v.require(t.power_derivative <= d0 + tol,
                    fmt::format("{}: alpha {} asn {} beats beta_dot {} > {}", id, t.alpha, t.asn,
                                t.power_derivative, d0));
          if (t.power_derivative < d0 - tol) return;
          ++ties;
          const auto s = stopping_sandwich(*t.rule, rec, b, cs.model, 1e-9);
          std::size_t k = 0;
          const auto dec = decision_sandwich(
              *t.rule, [&](const HistoryView&) { return t.reject[k++] != 0; }, b, cs.model, 1e-12);
          v.require(s.holds(), id + " tie breaks the stopping sandwich: " + s.first_violation);
          v.require(dec.holds(), id + " tie breaks the decision sandwich: " + dec.first_violation);
          if (b != 0.0) {
            v.require(std::abs(t.alpha - a0) <= 1e-12 && std::abs(t.asn - n0) <= 1e-12,
                      id + " tie without equal level and ASN");
          }
        });
      }
    }
  }
  v.detail = fmt::format("{} deterministic tests, {} in class, {} attain beta_dot*, max excess {:.1e}", tests,
                         in_class, ties, margin);
  return v;
}

Verdict structure() {
  Verdict v;
  // Unroll the recursion K stages back from the stored limit and read off the
  // boundaries of each unrolled stage.
  const double c = 0.1;
  const std::size_t K = 12;
  auto unrolled = [&](const ObservationModel& m, const std::string& name) {
    RecursionOptions opts;
    opts.sup_norm_tolerance = 1e-12;
    const auto op = ExpectationOperator::on_grid(UniformGrid::symmetric(12.0, 1201), m);
    const auto& rec = keep("structure " + name, iterate_to_limit(m, c, op, opts), continuous_law_tol);
    std::vector<ValueFunction> vs(K + 2);
    vs[K + 1] = rec.v_at(K + 1);
    std::vector<Interval> out(K + 1);
    for (std::size_t n = K; n >= 1; --n) {
      const auto r = expect_shift(vs[n + 1], n + 1, m, op);
      vs[n] = op.envelope(r, c);
      const auto sb = solve_stage_boundary(r, c, 1e-12, n);
      v.require(!sb.empty(), name + " empty stage");
      if (sb.interval) out[n] = *sb.interval;
    }
    return out;
  };
  auto gap = [](const Interval& a, const Interval& b) {
    return std::max(std::abs(a.lower - b.lower), std::abs(a.upper - b.upper));
  };

  const auto iid = unrolled(ObservationModel::iid(0.0, NormalStage{1.0}), "iid");
  double spread_iid = 0.0;
  for (std::size_t n = 2; n <= K; ++n) spread_iid = std::max(spread_iid, gap(iid[n], iid[1]));
  v.require(spread_iid <= 1e-9, fmt::format("iid spread {:.2e}", spread_iid));

  const auto per = unrolled(ObservationModel::periodic(0.0, {NormalStage{1.0}, two_point()}), "periodic");
  double spread_per = 0.0;
  for (std::size_t n = 3; n <= K; ++n) spread_per = std::max(spread_per, gap(per[n], per[n - 2]));
  const double alternation = gap(per[1], per[2]);
  v.require(spread_per <= 1e-9, fmt::format("period-2 spread {:.2e}", spread_per));
  v.require(alternation > 1e-3, fmt::format("periodic stages coincide ({:.2e})", alternation));

  const auto ns = unrolled(ObservationModel::finitely_nonstationary(
                               0.0, {three_point(), NormalStage{2.0}, NormalStage{1.0}}),
                           "nonstationary");
  double spread_ns = 0.0;
  for (std::size_t n = 3; n <= K; ++n) spread_ns = std::max(spread_ns, gap(ns[n], ns[2]));
  const double early = gap(ns[1], ns[2]);
  v.require(spread_ns <= 1e-9, fmt::format("stages >= 2 spread {:.2e}", spread_ns));
  v.require(early > 1e-3, fmt::format("stage 1 equals the stationary boundary ({:.2e})", early));

  // the stored limit regions report the same shapes
  const auto nsm = ObservationModel::finitely_nonstationary(0.0, {three_point(), NormalStage{2.0}, NormalStage{1.0}});
  const auto op = ExpectationOperator::on_grid(UniformGrid::symmetric(12.0, 1201), nsm);
  const auto& rec = keep("structure regions", iterate_to_limit(nsm, c, op), continuous_law_tol);
  const auto regions = assemble_regions(rec, 0.0, 1e-9);
  v.require(regions.at(2).interval && regions.at(50).interval &&
                gap(*regions.at(2).interval, *regions.at(50).interval) == 0.0,
            "limit regions not constant from stage 2");

  v.detail = fmt::format("iid spread {:.1e}; period-2 spread {:.1e}, alternation {:.3f}; "
                         "k=3 spread {:.1e}, stage-1 offset {:.3f}",
                         spread_iid, spread_per, alternation, spread_ns, early);
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

Verdict determinism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "lmpseq_acceptance_determinism";
  fs::remove_all(root);
  std::size_t files = 0, runs = 0;
  const std::vector<std::string> configs = {"two_point", "three_point", "bernoulli", "degenerate",
                                            "normal_iid", "periodic", "nonstationary"};
  for (const auto& name : configs) {
    const std::string cfg = std::string(LMPSEQ_FIXTURES) + "/" + name + ".yaml";
    const bool discrete = name != "normal_iid" && name != "periodic" && name != "nonstationary";
    for (const char* cmd : {"design", "simulate", "verify", "oracle", "export"}) {
      if (!discrete && std::string(cmd) == "oracle") continue;
      std::map<std::string, std::string> first;
      int first_code = -1;
      for (const char* workers : {"1", "1", "3"}) {
        const fs::path dir = root / name / cmd / std::to_string(runs++);
        std::ostringstream o, e;
        const int code = cli::run({cmd, "--config", cfg, "--out", dir.string(), "--workers", workers}, o, e);
        const auto snap = snapshot(dir);
        if (first_code < 0) {
          first_code = code;
          first = snap;
          files += snap.size();
          v.require(code == 0, fmt::format("{} {} exit {}: {}", name, cmd, code, e.str()));
          v.require(!snap.empty(), fmt::format("{} {} wrote nothing", name, cmd));
          continue;
        }
        v.require(code == first_code, fmt::format("{} {} exit code changed", name, cmd));
        v.require(snap == first, fmt::format("{} {} workers={} output differs", name, cmd, workers));
      }
    }
  }
  fs::remove_all(root);
  v.detail = fmt::format("{} files from {} runs byte-identical across reruns and worker counts", files, runs);
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
  };
  // value laws run last so they see every recursion the suite builds
  const std::vector<Criterion> order = {
      {1, "optimality certificate", certificate},
      {3, "boundary dichotomy", dichotomy},
      {4, "symmetric-score boundaries", symmetry},
      {5, "Wald identity and KL decomposition", identities},
      {6, "power derivative", derivative},
      {7, "inequality envelope", envelope},
      {8, "LMP dominance", dominance},
      {9, "structural boundary shapes", structure},
      {10, "CLI determinism", determinism},
      {2, "value-function laws", value_laws},
  };
  std::map<int, std::pair<std::string, Verdict>> results;
  for (const auto& c : order) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.detail += fmt::format(" [{:.1f}s]", secs);
    std::fprintf(stderr, "  criterion %d done in %.1fs\n", c.id, secs);
    results[c.id] = {c.name, std::move(v)};
  }
  int failed = 0;
  for (const auto& [id, r] : results) {
    const auto& [name, v] = r;
    std::printf("%s  %2d  %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
    for (const auto& f : v.failures) std::printf("          - %s\n", f.c_str());
    if (!v.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", int(results.size()) - failed, results.size());
  return failed == 0 ? 0 : 1;
}
