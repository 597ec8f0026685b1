#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lmpseq/errors.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/value_function.hpp"
#include "lmpseq/value_recursion.hpp"

namespace lmpseq {

/// Continuation interval in the variable y = b - z_n: continue iff A < y < B.
struct Interval {
  double lower;  // A <= 0
  double upper;  // B >= 0
};

struct StageBoundary {
  std::size_t stage = 0;
  std::optional<Interval> interval;  // empty when c + r_n(0) > 0

  bool empty() const { return !interval.has_value(); }
  bool continues(double y) const { return interval && y > interval->lower && y < interval->upper; }
  bool in_closure(double y) const {
    return interval && y >= interval->lower && y <= interval->upper;
  }
};

namespace detail {

/// Root of a monotone function on [lo, hi] given opposite-sign endpoint values,
/// by bisection down to `tol`, finished with one secant step inside the final
/// bracket (the functions here are piecewise linear, so that step is usually exact).
template <class F>
double bisect(F&& f, double lo, double hi, double f_lo, double f_hi, double tol) {
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = fm;
    } else {
      hi = mid;
      f_hi = fm;
    }
  }
  if (f_hi == f_lo) return 0.5 * (lo + hi);
  const double z = lo - f_lo * (hi - lo) / (f_hi - f_lo);
  return std::clamp(z, lo, hi);
}

}  // namespace detail

/// Solve c + r(z) = g(z) on z <= 0 (for A) and z >= 0 (for B).
inline StageBoundary solve_stage_boundary(const ValueFunction& r, double c, double root_tol = 1e-10,
                                          std::size_t stage = 0) {
  StageBoundary out;
  out.stage = stage;
  const double peak = -r(0.0) - c;  // max of g - r - c, attained at 0
  if (peak < 0.0) return out;
  if (peak == 0.0) {
    out.interval = Interval{0.0, 0.0};
    return out;
  }
  const auto nodes = r.nodes();
  const double span = std::max(1.0, nodes.back() - nodes.front());

  // left: z - r(z) - c, nondecreasing; its left-tail value is -lower_offset - c
  auto left = [&](double z) { return z - r(z) - c; };
  const double left_tail = -r.lower_offset() - c;
  if (left_tail >= 0.0) {
    throw GridTooNarrow("stage " + std::to_string(stage) +
                            ": lower boundary not bracketed; g - r does not fall below c "
                            "inside the value-function support",
                        2.0 * span);
  }
  const double zl = std::min(nodes.front(), 0.0) - 1.0;
  const double a = detail::bisect(left, zl, 0.0, left(zl), peak, root_tol);

  // right: -r(z) - c, nonincreasing; right-tail value -upper_offset - c
  auto right = [&](double z) { return -r(z) - c; };
  const double right_tail = -r.upper_offset() - c;
  if (right_tail >= 0.0) {
    throw GridTooNarrow("stage " + std::to_string(stage) +
                            ": upper boundary not bracketed inside the value-function support",
                        2.0 * span);
  }
  const double zr = std::max(nodes.back(), 0.0) + 1.0;
  const double b = detail::bisect(right, 0.0, zr, peak, right(zr), root_tol);
  out.interval = Interval{std::min(a, 0.0), std::max(b, 0.0)};
  return out;
}

/// Per-stage continuation regions of a design. Truncated designs list stages
/// 1..N-1; untruncated ones list 1..prefix+cycle and repeat the cycle.
struct ContinuationRegions {
  double b = 0.0;
  double c = 0.0;
  std::optional<std::size_t> horizon;
  std::size_t prefix = 0;
  std::size_t cycle = 0;
  std::vector<StageBoundary> stages;  // stages[n-1] is stage n

  const StageBoundary& at(std::size_t n) const {
    if (n == 0) throw DomainError("stage indices start at 1");
    if (horizon) {
      if (n >= *horizon) throw DomainError("no continuation at or beyond the horizon");
      return stages[n - 1];
    }
    std::size_t m = n;
    while (m > prefix + cycle) m -= cycle;
    return stages[m - 1];
  }

  /// Whether the stopping rule continues after stage n with statistic z_n.
  bool continues(std::size_t n, double z) const {
    if (horizon && n >= *horizon) return false;
    return at(n).continues(b - z);
  }
};

inline ContinuationRegions assemble_regions(const RecursionOutput& rec, double b,
                                            double root_tol = 1e-10) {
  ContinuationRegions out;
  out.b = b;
  out.c = rec.c;
  out.horizon = rec.horizon;
  out.prefix = rec.prefix;
  out.cycle = rec.cycle;
  const std::size_t count = rec.truncated() ? *rec.horizon - 1 : rec.prefix + rec.cycle;
  out.stages.reserve(count);
  for (std::size_t n = 1; n <= count; ++n) {
    out.stages.push_back(solve_stage_boundary(rec.r_at(n), rec.c, root_tol, n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// diagnostics

/// |c + r(A) - A| and |c + r(B)| for a nonempty stage, 0 otherwise.
inline double boundary_residual(const StageBoundary& sb, const ValueFunction& r, double c) {
  if (sb.empty()) return 0.0;
  const double ra = std::abs(c + r(sb.interval->lower) - terminal_value(sb.interval->lower));
  const double rb = std::abs(c + r(sb.interval->upper) - terminal_value(sb.interval->upper));
  return std::max(ra, rb);
}

/// Number of sign changes of g - r - c along the nodes of each half-line;
/// the boundary characterisation requires at most one on each side.
struct SignChanges {
  std::size_t left = 0;
  std::size_t right = 0;
};

inline SignChanges count_sign_changes(const ValueFunction& r, double c, double tol = 0.0) {
  SignChanges out;
  auto sign = [&](double z) {
    const double d = terminal_value(z) - r(z) - c;
    return d > tol ? 1 : (d < -tol ? -1 : 0);
  };
  int prev = 0;
  std::vector<double> left_nodes, right_nodes;
  for (double z : r.nodes()) (z <= 0.0 ? left_nodes : right_nodes).push_back(z);
  left_nodes.push_back(0.0);
  right_nodes.insert(right_nodes.begin(), 0.0);
  prev = 0;
  for (double z : left_nodes) {
    const int s = sign(z);
    if (s != 0 && prev != 0 && s != prev) ++out.left;
    if (s != 0) prev = s;
  }
  prev = 0;
  for (double z : right_nodes) {
    const int s = sign(z);
    if (s != 0 && prev != 0 && s != prev) ++out.right;
    if (s != 0) prev = s;
  }
  return out;
}

/// Compare the value-function form of the stopping rule,
///   continue iff g(y) > c + r_n(y)   (closed: g(y) >= c + r_n(y)),
/// with the interval form y in (A_n, B_n) (closed: [A_n, B_n]) at random
/// (y, n) probes. Points within `ambiguity` of a tie are skipped.
struct ProbeResult {
  std::size_t probes = 0;
  std::size_t skipped = 0;
  std::size_t mismatches = 0;
};

inline ProbeResult probe_rule_equivalence(const ContinuationRegions& regions,
                                          const RecursionOutput& rec, std::size_t count,
                                          std::uint64_t seed, double half_width,
                                          double ambiguity = 1e-9) {
  ProbeResult out;
  Rng rng(mix64(seed));
  const std::size_t stages = regions.stages.size();
  if (stages == 0) return out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(stages));
    const double y = (2.0 * uniform01(rng) - 1.0) * half_width;
    const auto& sb = regions.at(std::min(n, stages));
    const double d = terminal_value(y) - (rec.c + rec.r_at(std::min(n, stages))(y));
    ++out.probes;
    if (std::abs(d) <= ambiguity) {
      ++out.skipped;
      continue;
    }
    const bool open_form = d > 0.0;
    const bool closed_form = d >= 0.0;
    if (open_form != sb.continues(y) || closed_form != sb.in_closure(y)) ++out.mismatches;
  }
  return out;
}

}  // namespace lmpseq
