#pragma once

// Piecewise-linear functions on the z-line with the tail contract shared by
// every value function of the recursion: slope 1 to the left of the first node
// and flat to the right of the last one (g(z) = min(0, z) is the prototype).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lmpseq/errors.hpp"

namespace lmpseq {

inline double terminal_value(double z) { return std::min(0.0, z); }

class ValueFunction {
 public:
  ValueFunction() : z_{0.0}, v_{0.0} {}

  ValueFunction(std::vector<double> nodes, std::vector<double> values)
      : z_(std::move(nodes)), v_(std::move(values)) {
    if (z_.empty() || z_.size() != v_.size()) {
      throw InvariantViolation("value function needs matching, nonempty node and value arrays");
    }
    for (std::size_t i = 1; i < z_.size(); ++i) {
      if (!(z_[i] > z_[i - 1])) throw InvariantViolation("value function nodes must increase strictly");
    }
  }

  /// g(z) = min(0, z), represented exactly by the single kink at 0.
  static ValueFunction terminal() { return ValueFunction(); }

  double operator()(double z) const {
    if (z <= z_.front()) return v_.front() + (z - z_.front());
    if (z >= z_.back()) return v_.back();
    const auto it = std::upper_bound(z_.begin(), z_.end(), z);
    const std::size_t k = static_cast<std::size_t>(it - z_.begin());
    const double t = (z - z_[k - 1]) / (z_[k] - z_[k - 1]);
    return v_[k - 1] + t * (v_[k] - v_[k - 1]);
  }

  std::size_t size() const { return z_.size(); }
  std::span<const double> nodes() const { return z_; }
  std::span<const double> values() const { return v_; }

  /// v(z) = z + lower_offset() below the first node.
  double lower_offset() const { return v_.front() - z_.front(); }
  /// v(z) = upper_offset() above the last node.
  double upper_offset() const { return v_.back(); }

 private:
  std::vector<double> z_, v_;
};

namespace detail {

inline std::vector<double> merged_nodes(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// Drop nodes that carry no kink (within `collinear_tol` in value) and nodes
/// closer than `merge_gap` to their predecessor. The represented function
/// moves by at most max(collinear_tol, merge_gap) at any point.
inline ValueFunction simplify(const ValueFunction& f, double collinear_tol = 1e-14,
                              double merge_gap = 1e-12) {
  const auto z = f.nodes();
  const auto v = f.values();
  std::vector<double> nz, nv;
  nz.reserve(z.size());
  nv.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!nz.empty() && z[i] - nz.back() < merge_gap * std::max(1.0, std::abs(z[i]))) continue;
    nz.push_back(z[i]);
    nv.push_back(v[i]);
  }
  // collinear pass; the virtual neighbours are the tails
  std::vector<double> oz, ov;
  oz.reserve(nz.size());
  ov.reserve(nz.size());
  for (std::size_t i = 0; i < nz.size(); ++i) {
    double pred;  // value at nz[i] predicted from the neighbours
    if (i + 1 == nz.size() && oz.empty()) {
      oz.push_back(nz[i]);
      ov.push_back(nv[i]);
      break;
    }
    if (oz.empty()) {
      // left tail has slope 1 through the next node
      pred = nv[i + 1] - (nz[i + 1] - nz[i]);
    } else if (i + 1 == nz.size()) {
      pred = ov.back();  // flat right tail
    } else {
      const double t = (nz[i] - oz.back()) / (nz[i + 1] - oz.back());
      pred = ov.back() + t * (nv[i + 1] - ov.back());
    }
    const double scale = std::max({1.0, std::abs(nv[i])});
    if (std::abs(pred - nv[i]) <= collinear_tol * scale) continue;
    oz.push_back(nz[i]);
    ov.push_back(nv[i]);
  }
  if (oz.empty()) {
    oz.push_back(nz.back());
    ov.push_back(nv.back());
  }
  return ValueFunction(std::move(oz), std::move(ov));
}

/// min(g, c + r) evaluated exactly: crossings of the two pieces are inserted
/// as nodes, so the result is again piecewise linear without approximation.
inline ValueFunction min_with_terminal(const ValueFunction& r, double c) {
  const double zero = 0.0;
  const auto nodes = detail::merged_nodes(r.nodes(), std::span<const double>(&zero, 1));
  std::vector<double> oz, ov;
  oz.reserve(nodes.size() + 4);
  ov.reserve(nodes.size() + 4);
  double prev_z = 0.0, prev_d = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double z = nodes[i];
    const double gz = terminal_value(z);
    const double cont = c + r(z);
    const double d = gz - cont;
    if (i > 0 && ((prev_d < 0.0 && d > 0.0) || (prev_d > 0.0 && d < 0.0))) {
      const double zc = prev_z + (z - prev_z) * prev_d / (prev_d - d);
      if (zc > prev_z && zc < z) {
        oz.push_back(zc);
        ov.push_back(terminal_value(zc));
      }
    }
    oz.push_back(z);
    ov.push_back(std::min(gz, cont));
    prev_z = z;
    prev_d = d;
  }
  return ValueFunction(std::move(oz), std::move(ov));
}

/// Exact sup |f - h|: the difference is piecewise linear with kinks in the
/// union of both node sets and constant on both tails.
inline double sup_distance(const ValueFunction& f, const ValueFunction& h) {
  const auto nodes = detail::merged_nodes(f.nodes(), h.nodes());
  double out = std::abs(f.lower_offset() - h.lower_offset());
  out = std::max(out, std::abs(f.upper_offset() - h.upper_offset()));
  for (double z : nodes) out = std::max(out, std::abs(f(z) - h(z)));
  return out;
}

/// max_z (f(z) - h(z)); positive means f exceeds h somewhere.
inline double max_excess(const ValueFunction& f, const ValueFunction& h) {
  const auto nodes = detail::merged_nodes(f.nodes(), h.nodes());
  double out = std::max(f.lower_offset() - h.lower_offset(), f.upper_offset() - h.upper_offset());
  for (double z : nodes) out = std::max(out, f(z) - h(z));
  return out;
}

/// Sample f at the given nodes (the result interpolates linearly between them).
inline ValueFunction resample(const ValueFunction& f, std::vector<double> nodes) {
  std::vector<double> values(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) values[i] = f(nodes[i]);
  return ValueFunction(std::move(nodes), std::move(values));
}

// ---------------------------------------------------------------------------
// structural laws

/// Worst-case violation of each law; each entry is <= 0 when the law holds
/// exactly. Checked on the node set, where the piecewise-linear form attains
/// its extremes, plus the tails.
struct LawReport {
  double above_terminal = -1.0;   // max (v - g)
  double decreasing = -1.0;       // max drop v(z_i) - v(z_{i+1})
  double z_minus_v_decreasing = -1.0;
  double concavity_defect = -1.0; // max (chord - v) at interior nodes
  double tail_gap = -1.0;         // |g - v| at the extreme nodes (informational)

  bool holds(double tol) const {
    return above_terminal <= tol && decreasing <= tol && z_minus_v_decreasing <= tol &&
           concavity_defect <= tol;
  }
  std::string describe() const {
    return "v-g=" + std::to_string(above_terminal) + " drop=" + std::to_string(decreasing) +
           " (z-v)drop=" + std::to_string(z_minus_v_decreasing) +
           " concavity=" + std::to_string(concavity_defect);
  }
};

inline LawReport check_laws(const ValueFunction& f) {
  LawReport rep;
  const auto z = f.nodes();
  const auto v = f.values();
  const std::size_t n = z.size();
  rep.above_terminal = std::max(f.lower_offset(), f.upper_offset());
  for (std::size_t i = 0; i < n; ++i) {
    rep.above_terminal = std::max(rep.above_terminal, v[i] - terminal_value(z[i]));
    if (i + 1 < n) {
      rep.decreasing = std::max(rep.decreasing, v[i] - v[i + 1]);
      rep.z_minus_v_decreasing =
          std::max(rep.z_minus_v_decreasing, (z[i] - v[i]) - (z[i + 1] - v[i + 1]));
    }
  }
  // concavity including the tails: slope sequence 1, s_0, ..., s_{n-2}, 0
  // must not increase. Measured in value units as chord-minus-value.
  auto defect = [&](double zl, double vl, double zm, double vm, double zr, double vr) {
    const double t = (zm - zl) / (zr - zl);
    return (vl + t * (vr - vl)) - vm;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double span = std::max(1.0, i + 1 < n ? z[i + 1] - z[i] : 1.0);
    const double zl = i > 0 ? z[i - 1] : z[i] - span;
    const double vl = i > 0 ? v[i - 1] : v[i] - span;
    const double zr = i + 1 < n ? z[i + 1] : z[i] + span;
    const double vr = i + 1 < n ? v[i + 1] : v[i];
    rep.concavity_defect = std::max(rep.concavity_defect, defect(zl, vl, z[i], v[i], zr, vr));
  }
  rep.tail_gap = std::max(std::abs(f.lower_offset()), std::abs(f.upper_offset()));
  return rep;
}

}  // namespace lmpseq
