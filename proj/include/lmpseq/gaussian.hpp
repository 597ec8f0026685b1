#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lmpseq::gaussian {

inline double pdf(double t) {
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}

inline double cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

/// E (t - Z)^+ for standard normal Z, i.e. t*Phi(t) + phi(t).
inline double positive_part_mean(double t) {
  if (t < -38.0) return 0.0;
  return t * cdf(t) + pdf(t);
}

/// Nodes and weights for E f(Z), Z ~ N(0,1): E f(Z) ~= sum w_i f(x_i).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Hermite rule rescaled to the standard normal law. Roots of the
/// physicists' Hermite polynomial are found by Newton iteration on the
/// orthonormal recurrence, seeded with the usual asymptotic guesses.
inline QuadratureRule gauss_hermite(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_hermite: node count must be positive");
  constexpr double kPiQuarter = 0.7511255444649425;  // pi^{-1/4}
  std::vector<double> x(n), w(n);
  const std::size_t m = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double nd = static_cast<double>(n);
    if (i == 0) {
      z = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(nd, 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = kPiQuarter;
      double p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jd = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (jd + 1.0)) * p2 - std::sqrt(jd / (jd + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * nd) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  // stored descending; flip so nodes increase
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
    rule.weights[i] = w[n - 1 - i] * norm;
  }
  return rule;
}

}  // namespace lmpseq::gaussian
