#pragma once

// Backward induction for the value functions of the Lagrange problem:
//   v_N^N = g,   r_{n-1}^N(z) = E_theta0 v_n^N(z - q_n),
//   v_{n-1}^N = min(g, c + r_{n-1}^N),
// and its untruncated limit for models whose stage laws repeat.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lmpseq/errors.hpp"
#include "lmpseq/gaussian.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/value_function.hpp"

namespace lmpseq {

/// Nodes k*step for k = -half_count..half_count; always contains 0.
struct UniformGrid {
  double step = 0.01;
  std::size_t half_count = 1000;

  static UniformGrid symmetric(double half_width, std::size_t nodes) {
    if (!(half_width > 0.0)) throw ConfigError("grid half-width must be positive");
    if (nodes < 16) throw ConfigError("grid needs at least 16 nodes");
    const std::size_t half = nodes / 2;
    return UniformGrid{half_width / static_cast<double>(half), half};
  }

  std::size_t size() const { return 2 * half_count + 1; }
  double half_width() const { return step * static_cast<double>(half_count); }
  double node(std::size_t i) const {
    return step * (static_cast<double>(i) - static_cast<double>(half_count));
  }
  std::vector<double> nodes() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = node(i);
    return out;
  }
};

enum class GaussianRule { exact_piecewise, gauss_hermite };

/// z -> E_theta0 v(z - q) for one stage, plus the matching envelope
/// min(g, c + r). Exact mode keeps arbitrary breakpoints and handles
/// discrete stages only; grid mode keeps every function on one uniform grid.
class ExpectationOperator {
 public:
  static ExpectationOperator exact() { return ExpectationOperator(); }

  static ExpectationOperator on_grid(const UniformGrid& grid, const ObservationModel& model,
                                     GaussianRule rule = GaussianRule::exact_piecewise,
                                     std::size_t quadrature_nodes = 64) {
    ExpectationOperator op;
    op.grid_ = grid;
    op.nodes_ = grid.nodes();
    op.rule_ = rule;
    if (rule == GaussianRule::gauss_hermite) op.gh_ = gaussian::gauss_hermite(quadrature_nodes);
    for (const auto& s : model.distinct_stages()) {
      if (const auto* n = std::get_if<NormalStage>(&s)) op.kernel_for(n->score_sd());
    }
    return op;
  }

  bool grid_mode() const { return grid_.has_value(); }
  const std::optional<UniformGrid>& grid() const { return grid_; }

  /// Bring an arbitrary value function into this operator's representation.
  ValueFunction prepare(const ValueFunction& v) const {
    return grid_ ? resample(v, nodes_) : v;
  }

  ValueFunction apply(const ValueFunction& v, const Stage& stage) const {
    if (const auto* d = std::get_if<DiscreteStage>(&stage)) {
      return grid_ ? discrete_on_grid(v, *d) : discrete_exact(v, *d);
    }
    const auto& normal = std::get<NormalStage>(stage);
    if (!grid_) {
      throw ConfigError("normal stages need a grid-mode expectation operator");
    }
    const ValueFunction on_grid = same_grid(v) ? v : resample(v, nodes_);
    if (rule_ == GaussianRule::gauss_hermite) return normal_by_quadrature(on_grid, normal.score_sd());
    return normal_exact(on_grid, normal.score_sd());
  }

  ValueFunction envelope(const ValueFunction& r, double c) const {
    if (!grid_) return simplify(min_with_terminal(r, c));
    std::vector<double> values(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      values[i] = std::min(terminal_value(nodes_[i]), c + r(nodes_[i]));
    }
    return ValueFunction(nodes_, std::move(values));
  }

 private:
  struct Kernel {
    double sd;
    std::size_t reach;            // table covers offsets -reach..reach
    std::vector<double> table;    // sd * L(d*step/sd)
  };

  ExpectationOperator() = default;

  bool same_grid(const ValueFunction& v) const {
    return v.size() == nodes_.size() && v.nodes().front() == nodes_.front() &&
           v.nodes().back() == nodes_.back();
  }

  const Kernel& kernel_for(double sd) {
    for (const auto& k : kernels_) {
      if (k.sd == sd) return k;
    }
    Kernel k;
    k.sd = sd;
    const std::size_t n = nodes_.size();
    k.reach = std::min<std::size_t>(
        n - 1, static_cast<std::size_t>(std::ceil(9.0 * sd / grid_->step)));
    k.table.resize(2 * k.reach + 1);
    for (std::size_t i = 0; i < k.table.size(); ++i) {
      const double d = static_cast<double>(i) - static_cast<double>(k.reach);
      k.table[i] = sd * gaussian::positive_part_mean(d * grid_->step / sd);
    }
    kernels_.push_back(std::move(k));
    return kernels_.back();
  }

  const Kernel& find_kernel(double sd) const {
    for (const auto& k : kernels_) {
      if (k.sd == sd) return k;
    }
    throw ConfigError("expectation operator was not built for this model");
  }

  static ValueFunction discrete_exact(const ValueFunction& v, const DiscreteStage& s) {
    std::vector<double> shifts, weights;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.charged(i)) continue;
      shifts.push_back(s.score(i));
      weights.push_back(s.f0()[i]);
    }
    std::vector<double> nodes;
    nodes.reserve(v.size() * shifts.size());
    for (double q : shifts) {
      for (double z : v.nodes()) nodes.push_back(z + q);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    std::vector<double> values(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < shifts.size(); ++i) acc += weights[i] * v(nodes[k] - shifts[i]);
      values[k] = acc;
    }
    return simplify(ValueFunction(std::move(nodes), std::move(values)));
  }

  // v(node_k - q) read off the grid by index arithmetic, tails per the contract
  ValueFunction discrete_on_grid(const ValueFunction& v, const DiscreteStage& s) const {
    const ValueFunction g = same_grid(v) ? v : resample(v, nodes_);
    const auto val = g.values();
    const std::size_t n = nodes_.size();
    const double h = grid_->step;
    std::vector<double> values(n, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.charged(i)) continue;
      const double shift = s.score(i) / h;
      const double p = s.f0()[i];
      const double whole = std::floor(shift);
      const double frac = shift - whole;
      const bool aligned = frac < 1e-9 || frac > 1.0 - 1e-9;
      const long long off = static_cast<long long>(aligned ? std::round(shift) : whole);
      for (std::size_t k = 0; k < n; ++k) {
        const long long j = static_cast<long long>(k) - off;  // read at j (aligned) or between j-1, j
        double x;
        if (aligned) {
          if (j < 0) {
            x = val[0] + static_cast<double>(j) * h;
          } else if (j >= static_cast<long long>(n)) {
            x = val[n - 1];
          } else {
            x = val[static_cast<std::size_t>(j)];
          }
        } else {
          x = g(nodes_[k] - s.score(i));
        }
        values[k] += p * x;
      }
    }
    return ValueFunction(nodes_, std::move(values));
  }

  // Writing v(y) = (y - y_0) + v_0 + sum_k kink_k (y - y_k)^+ gives
  //   E v(z - sd Z) = (z - y_0) + v_0 + sum_k kink_k * sd * L((z - y_k)/sd)
  // with L(t) = t Phi(t) + phi(t). Far-left kinks contribute linearly and are
  // folded in through prefix sums; far-right kinks contribute nothing.
  ValueFunction normal_exact(const ValueFunction& v, double sd) const {
    const Kernel& ker = find_kernel(sd);
    const auto y = v.nodes();
    const auto val = v.values();
    const std::size_t n = y.size();
    const double h = grid_->step;
    std::vector<double> kink(n);
    double prev_slope = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double slope = k + 1 < n ? (val[k + 1] - val[k]) / h : 0.0;
      kink[k] = slope - prev_slope;
      prev_slope = slope;
    }
    std::vector<double> p0(n + 1, 0.0), p1(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      p0[k + 1] = p0[k] + kink[k];
      p1[k + 1] = p1[k] + kink[k] * static_cast<double>(k);
    }
    const std::size_t reach = ker.reach;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = (y[i] - y[0]) + val[0];
      // kinks with i - k > reach: contribution kink_k * (i - k) * h
      if (i > reach) {
        const std::size_t m = i - reach;  // k < m
        acc += h * (static_cast<double>(i) * p0[m] - p1[m]);
      }
      const std::size_t lo = i > reach ? i - reach : 0;
      const std::size_t hi = std::min(n - 1, i + reach);
      double window = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) {
        window += kink[k] * ker.table[i + reach - k];
      }
      out[i] = acc + window;
    }
    return ValueFunction(nodes_, std::move(out));
  }

  ValueFunction normal_by_quadrature(const ValueFunction& v, double sd) const {
    std::vector<double> out(nodes_.size(), 0.0);
    for (std::size_t m = 0; m < gh_.nodes.size(); ++m) {
      const double shift = sd * gh_.nodes[m];
      const double w = gh_.weights[m];
      for (std::size_t i = 0; i < nodes_.size(); ++i) out[i] += w * v(nodes_[i] - shift);
    }
    return ValueFunction(nodes_, std::move(out));
  }

  std::optional<UniformGrid> grid_;
  std::vector<double> nodes_;
  GaussianRule rule_ = GaussianRule::exact_piecewise;
  gaussian::QuadratureRule gh_;
  std::vector<Kernel> kernels_;
};

/// r(z) = E_theta0 v(z - q_j).
inline ValueFunction expect_shift(const ValueFunction& v, std::size_t j,
                                  const ObservationModel& model, const ExpectationOperator& op) {
  return op.apply(op.prepare(v), model.stage(j));
}

struct RecursionOptions {
  std::optional<double> law_tolerance;   // default 1e-9 exact, 1e-6 grid
  bool verify_laws = true;
  std::optional<double> sup_norm_tolerance;  // default 1e-9 exact, 1e-6 grid
  std::size_t max_horizon = 100000;
  std::size_t max_nodes = 200000;     // breakpoint cap for exact-mode iteration
  std::optional<double> gamma1;          // enables the lower-bound drift check
};

struct RecursionOutput {
  double c = 0.0;
  std::optional<std::size_t> horizon;  // nullopt for the untruncated limit
  std::size_t prefix = 0;              // untruncated: v_n = v_{n+cycle} for n >= prefix
  std::size_t cycle = 0;
  std::vector<ValueFunction> v;        // v[n]
  std::vector<ValueFunction> r;        // r[n]
  std::vector<double> convergence_log;
  std::size_t iterations = 0;

  bool truncated() const { return horizon.has_value(); }

  std::size_t slot(std::size_t n) const {
    if (truncated()) {
      if (n >= v.size()) throw DomainError("stage beyond the truncation horizon");
      return n;
    }
    while (n >= prefix + cycle) n -= cycle;
    return n;
  }
  const ValueFunction& v_at(std::size_t n) const { return v[slot(n)]; }
  const ValueFunction& r_at(std::size_t n) const {
    const std::size_t k = slot(n);
    if (k >= r.size()) throw DomainError("r_n is undefined at the truncation horizon");
    return r[k];
  }
};

namespace detail {

inline double law_tol(const RecursionOptions& o, const ExpectationOperator& op) {
  return o.law_tolerance.value_or(op.grid_mode() ? 1e-6 : 1e-9);
}

inline void verify(const ValueFunction& f, const char* what, std::size_t n, double tol) {
  const LawReport rep = check_laws(f);
  if (!rep.holds(tol)) {
    throw InvariantViolation(std::string(what) + "_" + std::to_string(n) +
                             " breaks the value-function laws: " + rep.describe());
  }
}

inline void verify_order(const ValueFunction& lower, const ValueFunction& upper, const char* what,
                         std::size_t n, double tol) {
  const double excess = max_excess(lower, upper);
  if (excess > tol) {
    throw InvariantViolation(std::string(what) + " ordering fails at stage " + std::to_string(n) +
                             " by " + std::to_string(excess));
  }
}

}  // namespace detail

inline RecursionOutput backward_induction(const ObservationModel& model, std::size_t horizon,
                                          double c, const ExpectationOperator& op,
                                          const RecursionOptions& opts = {}) {
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (!(c > 0.0)) throw ConfigError("c must be positive");
  if (horizon > model.max_stage()) throw ConfigError("horizon exceeds the explicit stage list");
  const double tol = detail::law_tol(opts, op);
  RecursionOutput out;
  out.c = c;
  out.horizon = horizon;
  out.v.resize(horizon + 1);
  out.r.resize(horizon);
  out.v[horizon] = op.prepare(ValueFunction::terminal());
  for (std::size_t n = horizon; n >= 1; --n) {
    out.r[n - 1] = op.apply(out.v[n], model.stage(n));
    out.v[n - 1] = op.envelope(out.r[n - 1], c);
    if (opts.verify_laws) {
      detail::verify(out.r[n - 1], "r", n - 1, tol);
      detail::verify(out.v[n - 1], "v", n - 1, tol);
      detail::verify_order(out.r[n - 1], out.v[n], "E v(.-q) <= v", n, tol);
      detail::verify_order(out.r[n - 1], out.v[n - 1], "r <= v", n - 1, tol);
    }
  }
  return out;
}

/// Untruncated limit for structured models. The periodic part is iterated
/// from g to a fixed point (each sweep adds one full cycle of horizon, so the
/// iterates decrease monotonically), then the non-repeating prefix is unrolled.
inline RecursionOutput iterate_to_limit(const ObservationModel& model, double c,
                                        const ExpectationOperator& op,
                                        const RecursionOptions& opts = {}) {
  if (!model.structured()) {
    throw ConfigError("untruncated limit needs an iid, periodic or finitely non-stationary model");
  }
  if (!(c > 0.0)) throw ConfigError("c must be positive");
  const double tol = opts.sup_norm_tolerance.value_or(op.grid_mode() ? 1e-6 : 1e-9);
  const double ltol = detail::law_tol(opts, op);
  const std::size_t p = model.prefix_length();
  const std::size_t period = model.cycle_length();

  RecursionOutput out;
  out.c = c;
  out.prefix = p;
  out.cycle = period;
  out.v.resize(p + period);
  out.r.resize(p + period);

  auto sweep = [&](const ValueFunction& top) {
    // top plays v_{p+period}; fills v[p..p+period-1], r[p..p+period-1]
    ValueFunction cur = top;
    for (std::size_t n = p + period; n >= p + 1; --n) {
      out.r[n - 1] = op.apply(cur, model.stage(n));
      cur = op.envelope(out.r[n - 1], c);
      out.v[n - 1] = cur;
    }
    return cur;
  };

  ValueFunction w = op.prepare(ValueFunction::terminal());
  bool converged = false;
  const std::size_t max_sweeps = std::max<std::size_t>(1, opts.max_horizon / period);
  for (std::size_t it = 0; it < max_sweeps; ++it) {
    ValueFunction next = sweep(w);
    if (next.size() > opts.max_nodes) {
      throw BudgetExceeded("value iteration grew to " + std::to_string(next.size()) +
                           " breakpoints; use a grid operator");
    }
    const double delta = sup_distance(next, w);
    out.convergence_log.push_back(delta);
    out.iterations = it + 1;
    const double rise = max_excess(next, w);
    if (rise > ltol) {
      throw InvariantViolation("value iteration is not monotone: iterate rose by " +
                               std::to_string(rise));
    }
    if (opts.gamma1) {
      const double floor_bound = -(*opts.gamma1 / (8.0 * c) + c);
      for (std::size_t n = p; n < p + period; ++n) {
        if (out.r[n](0.0) < floor_bound - ltol) {
          throw InvariantViolation("r_" + std::to_string(n) + "(0) = " +
                                   std::to_string(out.r[n](0.0)) +
                                   " fell below -(gamma1/(8c) + c) = " + std::to_string(floor_bound));
        }
      }
    }
    w = std::move(next);
    if (delta < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::string tail;
    const std::size_t k = out.convergence_log.size();
    for (std::size_t i = k > 5 ? k - 5 : 0; i < k; ++i) {
      tail += " " + std::to_string(out.convergence_log[i]);
    }
    throw ConvergenceError("value iteration did not reach sup-norm tolerance within " +
                           std::to_string(opts.max_horizon) + " stages; last deltas:" + tail);
  }
  sweep(w);
  for (std::size_t n = p; n >= 1; --n) {
    out.r[n - 1] = op.apply(out.v[n], model.stage(n));
    out.v[n - 1] = op.envelope(out.r[n - 1], c);
  }
  if (opts.verify_laws) {
    for (std::size_t n = 0; n < p + period; ++n) {
      detail::verify(out.r[n], "r", n, ltol);
      detail::verify(out.v[n], "v", n, ltol);
      detail::verify_order(out.r[n], out.v[n], "r <= v", n, ltol);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// grid defaults

/// Common lattice step of all discrete scores (every score an integer multiple
/// of it, denominators up to 1000), or nullopt when the model has a normal
/// stage or no such step exists.
inline std::optional<double> score_lattice(const ObservationModel& model) {
  std::vector<double> scores;
  for (const auto& s : model.distinct_stages()) {
    const auto* d = std::get_if<DiscreteStage>(&s);
    if (!d) return std::nullopt;
    for (std::size_t i = 0; i < d->size(); ++i) {
      if (d->charged(i) && d->score(i) != 0.0) scores.push_back(std::abs(d->score(i)));
    }
  }
  if (scores.empty()) return 1.0;
  const double base = *std::min_element(scores.begin(), scores.end());
  for (int den = 1; den <= 1000; ++den) {
    const double step = base / den;
    bool ok = true;
    for (double q : scores) {
      const double k = q / step;
      if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
        ok = false;
        break;
      }
    }
    if (ok) return step;
  }
  return std::nullopt;
}

/// Half-width max(8 sd(q) sqrt(H), 4|b| + 4), with H the horizon when
/// truncated and a crude ASN scale (gamma1/(8c) + c)/c otherwise. For lattice
/// scores the step is a divisor of the lattice step, so shifts land on nodes.
inline UniformGrid default_grid(const ObservationModel& model, double c, double b,
                                std::optional<std::size_t> horizon, std::size_t nodes = 4001) {
  double sd = 0.0;
  for (const auto& s : model.distinct_stages()) sd = std::max(sd, score_sd(s));
  double h;
  if (horizon) {
    h = static_cast<double>(*horizon);
  } else {
    const double gamma1 = estimate_assumption_constants(model).gamma1;
    h = std::clamp((gamma1 / (8.0 * c) + c) / c, 1.0, 400.0);
  }
  const double half = std::max(8.0 * sd * std::sqrt(h), 4.0 * std::abs(b) + 4.0);
  if (const auto lattice = score_lattice(model)) {
    const double target = 2.0 * half / static_cast<double>(std::max<std::size_t>(nodes, 16) - 1);
    const double per = std::max(1.0, std::floor(*lattice / target));
    const double step = *lattice / per;
    return UniformGrid{step, static_cast<std::size_t>(std::ceil(half / step))};
  }
  return UniformGrid::symmetric(half, nodes);
}

/// Exact operator for truncated all-discrete designs, grid operator otherwise
/// (the exact untruncated iteration accumulates breakpoints near the limit
/// boundaries and converges only geometrically).
inline ExpectationOperator default_operator(const ObservationModel& model, double c, double b,
                                            std::optional<std::size_t> horizon) {
  if (model.all_discrete() && horizon) return ExpectationOperator::exact();
  return ExpectationOperator::on_grid(default_grid(model, c, b, horizon), model);
}

}  // namespace lmpseq
