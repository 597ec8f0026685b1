#pragma once

// Executable identities and inequalities for a (model, test) pair. Exact
// versions walk the history tree of a truncated test on a discrete model;
// the inequality checks also accept Monte Carlo characteristics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lmpseq/boundary.hpp"
#include "lmpseq/errors.hpp"
#include "lmpseq/histories.hpp"
#include "lmpseq/lagrange_oracle.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/test_engine.hpp"
#include "lmpseq/value_function.hpp"
#include "lmpseq/value_recursion.hpp"

namespace lmpseq {

enum class Relation { less_equal, equal, greater_equal };

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::less_equal: return "<=";
    case Relation::equal: return "=";
    case Relation::greater_equal: return ">=";
  }
  return "?";
}

struct CheckReport {
  std::string name;
  std::string instance;
  double lhs = 0.0;
  double rhs = 0.0;
  Relation relation = Relation::equal;
  double slack = 0.0;  // >= 0 when the relation holds
  double tolerance = 0.0;
  bool pass = false;
  Provenance provenance = Provenance::exact;
};

inline CheckReport make_report(std::string name, std::string instance, double lhs, Relation rel,
                               double rhs, double tol, Provenance prov = Provenance::exact) {
  CheckReport r;
  r.name = std::move(name);
  r.instance = std::move(instance);
  r.lhs = lhs;
  r.rhs = rhs;
  r.relation = rel;
  r.tolerance = tol;
  r.provenance = prov;
  switch (rel) {
    case Relation::less_equal: r.slack = rhs - lhs; break;
    case Relation::greater_equal: r.slack = lhs - rhs; break;
    case Relation::equal: r.slack = -std::abs(lhs - rhs); break;
  }
  if (lhs == rhs) r.slack = 0.0;  // both infinite
  r.pass = r.slack >= -tol;
  return r;
}

inline std::string describe(const CheckReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.name << " [" << r.instance << "]: " << r.lhs << ' ' << to_string(r.relation) << ' '
     << r.rhs << " slack=" << r.slack << " tol=" << r.tolerance << (r.pass ? " PASS" : " FAIL");
  return os.str();
}

/// Truncated test on a discrete model, as predicates on histories.
struct TruncatedTest {
  std::size_t horizon = 1;
  std::function<bool(const HistoryView&)> continues;
  std::function<bool(const HistoryView&)> rejects;
};

inline TruncatedTest truncated_test(const TestDesign& design) {
  if (!design.truncated()) throw ConfigError("exact checks need a truncated design");
  TruncatedTest t;
  t.horizon = *design.horizon;
  t.continues = [&design](const HistoryView& h) { return design.continues(h.length(), h.z); };
  t.rejects = [&design](const HistoryView& h) { return design.decide(h.z) == Decision::reject; };
  return t;
}

inline TruncatedTest truncated_test(const ExplicitRule& rule,
                                    std::function<bool(const HistoryView&)> rejects) {
  TruncatedTest t;
  t.horizon = rule.horizon;
  t.continues = [&rule](const HistoryView& h) { return !rule.stops(h.atoms); };
  t.rejects = std::move(rejects);
  return t;
}

inline Characteristics exact_characteristics(const TruncatedTest& test, const ObservationModel& model,
                                             const std::vector<double>& thetas,
                                             std::size_t budget = 1'000'000) {
  return exact_characteristics_of(model, test.horizon, test.continues, test.rejects, thetas, budget);
}

namespace detail {

/// P_theta(tau >= j) for j = 1..N.
inline std::vector<double> survival(const ObservationModel& model, const TruncatedTest& test,
                                    double theta, std::size_t budget) {
  std::vector<double> out(test.horizon + 1, 0.0);
  out[1] = 1.0;
  walk_histories(
      model, test.horizon, test.continues,
      [&](const HistoryView& h, bool stopped) {
        if (!stopped) out[h.length() + 1] += history_probability(model, h, theta);
      },
      budget);
  return out;
}

inline std::string theta_label(double theta) {
  std::ostringstream os;
  os.precision(6);
  os << "theta=" << theta;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// exact identities

/// Sequential Jensen inequality:
///   sum E s_n a_n G(b_n) / sum E s_n a_n >= G(sum E s_n a_n b_n / sum E s_n a_n).
inline CheckReport jensen_check(const ObservationModel& model, const TruncatedTest& test,
                                const std::function<double(double)>& G,
                                const std::function<double(const HistoryView&)>& a,
                                const std::function<double(const HistoryView&)>& b,
                                const std::string& instance, double tol = 1e-12,
                                std::size_t budget = 1'000'000) {
  double norm = 0.0, num = 0.0, mean_b = 0.0;
  walk_histories(
      model, test.horizon, test.continues,
      [&](const HistoryView& h, bool stopped) {
        if (!stopped) return;
        const double an = a(h), bn = b(h);
        if (an < 0.0 || bn < 0.0) throw DomainError("jensen_check: a_n and b_n must be nonnegative");
        norm += h.prob0 * an;
        if (an > 0.0) num += h.prob0 * an * G(bn);
        mean_b += h.prob0 * an * bn;
      },
      budget);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw AssumptionViolation("jensen_check: normalizer sum E s_n a_n is not in (0, inf)");
  }
  const double scale = std::max({1.0, std::abs(num / norm)});
  return make_report("jensen", instance, num / norm, Relation::greater_equal, G(mean_b / norm),
                     tol * scale);
}

/// Wald identity sum_n E s_n sum_{j<=n} Y_j = sum_j E Y_j P(tau >= j) under
/// P_theta, for Y_j = Y(j, atom index) >= 0.
inline CheckReport wald_identity_check(const ObservationModel& model, const TruncatedTest& test,
                                       const std::function<double(std::size_t, std::size_t)>& Y,
                                       double theta, const std::string& instance,
                                       double tol = 1e-12, std::size_t budget = 1'000'000) {
  double lhs = 0.0;
  walk_histories(
      model, test.horizon, test.continues,
      [&](const HistoryView& h, bool stopped) {
        if (!stopped) return;
        double sum = 0.0;
        for (std::size_t j = 1; j <= h.length(); ++j) {
          const double y = Y(j, h.atoms[j - 1]);
          if (y < 0.0) throw DomainError("wald_identity_check: Y must be nonnegative");
          sum += y;
        }
        lhs += history_probability(model, h, theta) * sum;
      },
      budget);
  const auto surv = detail::survival(model, test, theta, budget);
  double rhs = 0.0;
  const double shift = theta - model.theta0();
  for (std::size_t j = 1; j <= test.horizon; ++j) {
    if (surv[j] == 0.0) continue;
    const auto& s = detail::discrete_stage(model, j);
    double ey = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.charged(i)) ey += s.probability(i, shift) * Y(j, i);
    }
    rhs += ey * surv[j];
  }
  return make_report("wald_identity", instance + " " + detail::theta_label(theta), lhs,
                     Relation::equal, rhs, tol * std::max(1.0, std::abs(rhs)));
}

/// I(theta0, theta; psi) = sum_j I_j(theta0, theta) P_theta0(tau >= j).
inline CheckReport kl_decomposition_check(const ObservationModel& model, const TruncatedTest& test,
                                          double theta, const std::string& instance,
                                          double tol = 1e-12, std::size_t budget = 1'000'000) {
  model.require_admissible(theta);
  double lhs = 0.0;
  walk_histories(
      model, test.horizon, test.continues,
      [&](const HistoryView& h, bool stopped) {
        if (stopped) lhs += h.prob0 * history_log_ratio(model, h, theta);
      },
      budget);
  const auto surv = detail::survival(model, test, model.theta0(), budget);
  double rhs = 0.0;
  for (std::size_t j = 1; j <= test.horizon; ++j) {
    if (surv[j] == 0.0) continue;
    const double info = kl_info(model, j, theta);
    if (!std::isfinite(info)) {
      throw AssumptionViolation("kl_decomposition_check: infinite stage information at stage " +
                                std::to_string(j));
    }
    rhs += info * surv[j];
  }
  return make_report("kl_decomposition", instance + " " + detail::theta_label(theta), lhs,
                     Relation::equal, rhs, tol * std::max(1.0, std::abs(rhs)));
}

// ---------------------------------------------------------------------------
// inequalities on characteristics

namespace detail {

inline double xlogy_ratio(double p, double q) {
  // p ln(p/q) with 0 ln 0 = 0
  if (p == 0.0) return 0.0;
  if (q == 0.0) return std::numeric_limits<double>::infinity();
  return p * std::log(p / q);
}

inline double mc_tol(const Characteristics& ch, double se, double exact_tol) {
  return ch.provenance == Provenance::exact ? exact_tol : 4.0 * se + exact_tol;
}

}  // namespace detail

/// w(beta_theta) <= I(theta0, theta; psi) (with the beta_theta0 in {0,1}
/// forms) and I(theta0, theta; psi) <= gamma1 (theta - theta0)^2 E tau.
inline std::pair<CheckReport, CheckReport> info_inequality_check(const Characteristics& ch,
                                                                 double theta, double gamma1,
                                                                 const std::string& instance,
                                                                 double tol = 1e-12) {
  const double b0 = ch.alpha.value;
  const Estimate bt = ch.power.at(theta);
  const Estimate info = ch.kl_to_stop.at(theta);
  const std::string inst = instance + " " + detail::theta_label(theta);
  double w, dw;
  std::string name;
  if (b0 <= 0.0) {
    w = -std::log1p(-bt.value);
    dw = 1.0 / (1.0 - bt.value);
    name = "info_lower_beta0_zero";
  } else if (b0 >= 1.0) {
    w = -std::log(bt.value);
    dw = 1.0 / bt.value;
    name = "info_lower_beta0_one";
  } else {
    w = detail::xlogy_ratio(b0, bt.value) + detail::xlogy_ratio(1.0 - b0, 1.0 - bt.value);
    dw = std::abs(-b0 / bt.value + (1.0 - b0) / (1.0 - bt.value));
    name = "info_lower";
  }
  const double se_lower = std::hypot(dw * bt.se, info.se);
  CheckReport lower = make_report(name, inst, w, Relation::less_equal, info.value,
                                  detail::mc_tol(ch, se_lower, tol), ch.provenance);
  const double h = theta - ch.theta0;
  const double bound = gamma1 * h * h * ch.asn.value;
  const double se_upper = std::hypot(info.se, gamma1 * h * h * ch.asn.se);
  CheckReport upper =
      make_report("info_upper", inst, info.value, Relation::less_equal, bound,
                  detail::mc_tol(ch, se_upper, tol * std::max(1.0, bound)), ch.provenance);
  return {lower, upper};
}

/// beta_dot^2 <= 2 gamma1 beta0 (1 - beta0) E tau; for beta0 in {0, 1} the
/// derivative itself must vanish.
inline CheckReport derivative_bound_check(const Characteristics& ch, double gamma1,
                                          const std::string& instance, double tol = 1e-12) {
  const double a = ch.alpha.value;
  const double d = ch.power_derivative.value;
  if (ch.provenance == Provenance::exact && (a <= 0.0 || a >= 1.0)) {
    return make_report("derivative_vanishes", instance, std::abs(d), Relation::less_equal, 0.0, tol);
  }
  const double lhs = d * d;
  const double rhs = 2.0 * gamma1 * a * (1.0 - a) * ch.asn.value;
  const double se_l = 2.0 * std::abs(d) * ch.power_derivative.se;
  const double se_r = 2.0 * gamma1 *
                      std::hypot((1.0 - 2.0 * a) * ch.alpha.se * ch.asn.value,
                                 a * (1.0 - a) * ch.asn.se);
  return make_report("derivative_bound", instance, lhs, Relation::less_equal, rhs,
                     detail::mc_tol(ch, std::hypot(se_l, se_r), tol * std::max(1.0, rhs)),
                     ch.provenance);
}

/// Central differences of the exact power against the exact derivative.
/// One report per step: err(h) <= 2 C h^2 + floor with C = err(h_0)/h_0^2,
/// i.e. the error shrinks at least quadratically from the first step on
/// (or sits at the rounding floor).
inline std::vector<CheckReport> derivative_formula_check(const ObservationModel& model,
                                                         const TruncatedTest& test,
                                                         const std::vector<double>& steps,
                                                         const std::string& instance,
                                                         double floor = 1e-12,
                                                         std::size_t budget = 1'000'000) {
  if (steps.empty()) throw ConfigError("derivative_formula_check needs at least one step");
  const double t0 = model.theta0();
  std::vector<double> thetas;
  for (double h : steps) {
    thetas.push_back(t0 - h);
    thetas.push_back(t0 + h);
  }
  const Characteristics ch = exact_characteristics(test, model, thetas, budget);
  const double exact = ch.power_derivative.value;
  std::vector<double> errs;
  for (double h : steps) {
    const double fd = (ch.power.at(t0 + h).value - ch.power.at(t0 - h).value) / (2.0 * h);
    errs.push_back(std::abs(fd - exact));
  }
  const double C = errs[0] / (steps[0] * steps[0]);
  std::vector<CheckReport> out;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    std::ostringstream os;
    os << instance << " h=" << steps[k];
    out.push_back(make_report("derivative_formula", os.str(), errs[k], Relation::less_equal,
                              2.0 * C * steps[k] * steps[k] + floor, 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// design-level checks

/// Residuals c + r_n(A) - A and c + r_n(B) of the given regions against the
/// recursion, the emptiness dichotomy, and interval containment of stage
/// rules on nodes of r.
inline std::vector<CheckReport> boundary_checks(const ContinuationRegions& regions,
                                                const RecursionOutput& rec, double tol,
                                                const std::string& instance) {
  std::vector<CheckReport> out;
  double worst_residual = 0.0;
  std::size_t dichotomy_failures = 0;
  for (std::size_t k = 0; k < regions.stages.size(); ++k) {
    const StageBoundary& sb = regions.stages[k];
    const ValueFunction& r = rec.r_at(k + 1);
    const double lead = rec.c + r(0.0);
    if (sb.empty() != (lead > 0.0)) ++dichotomy_failures;
    worst_residual = std::max(worst_residual, boundary_residual(sb, r, rec.c));
  }
  out.push_back(make_report("boundary_residual", instance, worst_residual, Relation::less_equal, 0.0,
                            tol));
  out.push_back(make_report("boundary_dichotomy", instance,
                            static_cast<double>(dichotomy_failures), Relation::equal, 0.0, 0.0));
  return out;
}

/// Value-function laws on every stored stage plus the ordering r <= v.
inline CheckReport value_law_check(const RecursionOutput& rec, double tol,
                                   const std::string& instance) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < rec.r.size(); ++n) {
    for (const ValueFunction* f : {&rec.r[n], &rec.v[n]}) {
      const LawReport lr = check_laws(*f);
      worst = std::max({worst, lr.above_terminal, lr.decreasing, lr.z_minus_v_decreasing,
                        lr.concavity_defect});
    }
    worst = std::max(worst, max_excess(rec.r[n], rec.v[n]));
  }
  return make_report("value_laws", instance, worst, Relation::less_equal, 0.0, tol);
}

}  // namespace lmpseq
