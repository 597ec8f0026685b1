#pragma once

// Independent-observation models indexed by a real parameter theta, with the
// null point theta0 fixed. Each stage j >= 1 has its own marginal law; the
// score q_j(x) = fdot_{theta0,j}(x) / f_{theta0,j}(x) drives everything else.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "lmpseq/errors.hpp"
#include "lmpseq/gaussian.hpp"

namespace lmpseq {

using Rng = std::mt19937_64;

/// Open interval of admissible parameter values.
struct ParameterInterval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double theta) const { return theta > lower && theta < upper; }
  ParameterInterval intersect(const ParameterInterval& o) const {
    return {std::max(lower, o.lower), std::min(upper, o.upper)};
  }
};

/// Finite-support stage whose probabilities move linearly in theta:
///   f_theta(x_i) = f0_i + (theta - theta0) * fdot_i.
/// Bernoulli(theta) is the two-atom member with fdot = (-1, +1).
class DiscreteStage {
 public:
  DiscreteStage(std::vector<double> atoms, std::vector<double> f0, std::vector<double> fdot)
      : atoms_(std::move(atoms)), f0_(std::move(f0)), fdot_(std::move(fdot)) {
    if (atoms_.empty()) throw ConfigError("discrete stage needs at least one atom");
    if (atoms_.size() != f0_.size() || atoms_.size() != fdot_.size()) {
      throw ConfigError("discrete stage: atoms, f0 and fdot must have equal length");
    }
    double mass = 0.0;
    double drift = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!(f0_[i] >= 0.0)) throw ConfigError("discrete stage: f0 must be nonnegative");
      if (f0_[i] == 0.0 && fdot_[i] != 0.0) {
        throw ConfigError("discrete stage: fdot must vanish where f0 is zero");
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (atoms_[k] == atoms_[i]) throw ConfigError("discrete stage: duplicate atom");
      }
      mass += f0_[i];
      drift += fdot_[i];
    }
    if (std::abs(mass - 1.0) > 1e-12) throw ConfigError("discrete stage: f0 must sum to 1");
    if (std::abs(drift) > 1e-12) throw ConfigError("discrete stage: fdot must sum to 0");

    // admissible shifts d = theta - theta0 keep every charged atom positive
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (f0_[i] == 0.0) continue;
      if (fdot_[i] > 0.0) shift_range_.lower = std::max(shift_range_.lower, -f0_[i] / fdot_[i]);
      if (fdot_[i] < 0.0) shift_range_.upper = std::min(shift_range_.upper, f0_[i] / -fdot_[i]);
    }
  }

  static DiscreteStage bernoulli(double theta0) {
    if (!(theta0 > 0.0 && theta0 < 1.0)) throw ConfigError("bernoulli: theta0 must lie in (0,1)");
    return DiscreteStage({0.0, 1.0}, {1.0 - theta0, theta0}, {-1.0, 1.0});
  }

  /// Law that does not depend on theta at all.
  static DiscreteStage degenerate(std::vector<double> atoms, std::vector<double> f0) {
    std::vector<double> zero(atoms.size(), 0.0);
    return DiscreteStage(std::move(atoms), std::move(f0), std::move(zero));
  }

  std::size_t size() const { return atoms_.size(); }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& f0() const { return f0_; }
  const std::vector<double>& fdot() const { return fdot_; }

  /// Admissible theta - theta0 (open).
  const ParameterInterval& shift_range() const { return shift_range_; }

  double probability(std::size_t i, double shift) const { return f0_[i] + shift * fdot_[i]; }
  bool charged(std::size_t i) const { return f0_[i] > 0.0; }
  double score(std::size_t i) const {
    if (!charged(i)) throw DomainError("score requested on a zero-density atom");
    return fdot_[i] / f0_[i];
  }

  /// Index of the atom equal to x, or size() when x is not an atom.
  std::size_t find(double x) const {
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (atoms_[i] == x) return i;
    }
    return atoms_.size();
  }

  friend bool operator==(const DiscreteStage&, const DiscreteStage&) = default;

 private:
  std::vector<double> atoms_, f0_, fdot_;
  ParameterInterval shift_range_{};
};

/// Normal(theta, sigma^2) mean family. Under theta0 the score
/// (x - theta0)/sigma^2 is N(0, 1/sigma^2).
struct NormalStage {
  double sigma = 1.0;

  double score_sd() const { return 1.0 / sigma; }
  friend bool operator==(const NormalStage&, const NormalStage&) = default;
};

using Stage = std::variant<DiscreteStage, NormalStage>;

inline bool is_discrete(const Stage& s) { return std::holds_alternative<DiscreteStage>(s); }

enum class Structure { iid, periodic, finitely_nonstationary, explicit_list };

inline const char* to_string(Structure s) {
  switch (s) {
    case Structure::iid: return "iid";
    case Structure::periodic: return "periodic";
    case Structure::finitely_nonstationary: return "nonstationary";
    case Structure::explicit_list: return "explicit";
  }
  return "?";
}

class ObservationModel {
 public:
  ObservationModel(double theta0, Structure structure, std::vector<Stage> stages)
      : theta0_(theta0), structure_(structure), stages_(std::move(stages)) {
    if (stages_.empty()) throw ConfigError("model needs at least one stage");
    if (structure_ == Structure::iid && stages_.size() != 1) {
      throw ConfigError("iid model takes exactly one stage");
    }
    for (const auto& s : stages_) {
      if (const auto* n = std::get_if<NormalStage>(&s); n && !(n->sigma > 0.0)) {
        throw ConfigError("normal stage: sigma must be positive");
      }
    }
  }

  static ObservationModel iid(double theta0, Stage stage) {
    return ObservationModel(theta0, Structure::iid, {std::move(stage)});
  }
  /// stage(j) = stages[(j-1) mod T].
  static ObservationModel periodic(double theta0, std::vector<Stage> cycle) {
    return ObservationModel(theta0, Structure::periodic, std::move(cycle));
  }
  /// stages[0..k-1] are stages 1..k; stage(j) = stage(k) for j >= k.
  static ObservationModel finitely_nonstationary(double theta0, std::vector<Stage> stages) {
    return ObservationModel(theta0, Structure::finitely_nonstationary, std::move(stages));
  }
  /// Only stages 1..size() exist; supports truncated designs only.
  static ObservationModel explicit_list(double theta0, std::vector<Stage> stages) {
    return ObservationModel(theta0, Structure::explicit_list, std::move(stages));
  }

  double theta0() const { return theta0_; }
  Structure structure() const { return structure_; }
  const std::vector<Stage>& distinct_stages() const { return stages_; }

  bool structured() const { return structure_ != Structure::explicit_list; }

  /// Value functions v_n coincide with v_{n+cycle} for n >= prefix.
  std::size_t prefix_length() const {
    return structure_ == Structure::finitely_nonstationary ? stages_.size() - 1 : 0;
  }
  std::size_t cycle_length() const {
    switch (structure_) {
      case Structure::periodic: return stages_.size();
      case Structure::explicit_list: return 0;
      default: return 1;
    }
  }

  std::size_t stage_slot(std::size_t j) const {
    if (j == 0) throw DomainError("stage indices start at 1");
    switch (structure_) {
      case Structure::iid: return 0;
      case Structure::periodic: return (j - 1) % stages_.size();
      case Structure::finitely_nonstationary: return std::min(j, stages_.size()) - 1;
      case Structure::explicit_list:
        if (j > stages_.size()) {
          throw DomainError("stage " + std::to_string(j) + " beyond the explicit stage list");
        }
        return j - 1;
    }
    return 0;
  }

  const Stage& stage(std::size_t j) const { return stages_[stage_slot(j)]; }

  /// Largest index the model defines (unbounded for structured models).
  std::size_t max_stage() const {
    return structured() ? std::numeric_limits<std::size_t>::max() : stages_.size();
  }

  bool all_discrete() const { return std::all_of(stages_.begin(), stages_.end(), is_discrete); }

  ParameterInterval parameter_interval() const {
    ParameterInterval out;
    for (const auto& s : stages_) {
      if (const auto* d = std::get_if<DiscreteStage>(&s)) {
        out = out.intersect({theta0_ + d->shift_range().lower, theta0_ + d->shift_range().upper});
      }
    }
    return out;
  }

  void require_admissible(double theta) const {
    if (!parameter_interval().contains(theta)) {
      throw DomainError("theta = " + std::to_string(theta) + " outside the parameter interval");
    }
  }

 private:
  double theta0_;
  Structure structure_;
  std::vector<Stage> stages_;
};

// ---------------------------------------------------------------------------
// scores and information

inline double score(const ObservationModel& model, std::size_t j, double x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          const std::size_t i = s.find(x);
          if (i == s.size() || !s.charged(i)) {
            throw DomainError("score: observation " + std::to_string(x) +
                              " has zero null density at stage " + std::to_string(j));
          }
          return s.score(i);
        } else {
          return (x - model.theta0()) / (s.sigma * s.sigma);
        }
      },
      model.stage(j));
}

/// ln f_{theta0,j}(x) / f_{theta,j}(x); +inf where f_theta vanishes.
inline double log_ratio(const Stage& stage, double theta0, double theta, double x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          const std::size_t i = s.find(x);
          if (i == s.size() || !s.charged(i)) throw DomainError("log_ratio: zero null density");
          const double p = s.probability(i, theta - theta0);
          if (p <= 0.0) return std::numeric_limits<double>::infinity();
          return std::log(s.f0()[i] / p);
        } else {
          const double v = s.sigma * s.sigma;
          return ((x - theta) * (x - theta) - (x - theta0) * (x - theta0)) / (2.0 * v);
        }
      },
      stage);
}

/// Kullback-Leibler information I_j(theta0, theta) = E_theta0 ln(f_theta0 / f_theta).
inline double kl_info(const Stage& stage, double theta0, double theta) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          double sum = 0.0;
          for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s.charged(i)) continue;
            const double p = s.probability(i, theta - theta0);
            if (p <= 0.0) return std::numeric_limits<double>::infinity();
            sum += s.f0()[i] * std::log(s.f0()[i] / p);
          }
          return std::max(sum, 0.0);
        } else {
          const double d = theta - theta0;
          return d * d / (2.0 * s.sigma * s.sigma);
        }
      },
      stage);
}

inline double kl_info(const ObservationModel& model, std::size_t j, double theta) {
  return kl_info(model.stage(j), model.theta0(), theta);
}

/// E_theta0 |q_j|.
inline double mean_abs_score(const Stage& stage) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          double sum = 0.0;
          for (std::size_t i = 0; i < s.size(); ++i) {
            if (s.charged(i)) sum += s.f0()[i] * std::abs(s.score(i));
          }
          return sum;
        } else {
          return std::sqrt(2.0 / std::numbers::pi) / s.sigma;
        }
      },
      stage);
}

/// Standard deviation of q_j under theta0.
inline double score_sd(const Stage& stage) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          double m2 = 0.0;
          for (std::size_t i = 0; i < s.size(); ++i) {
            if (s.charged(i)) m2 += s.f0()[i] * s.score(i) * s.score(i);
          }
          return std::sqrt(m2);
        } else {
          return s.score_sd();
        }
      },
      stage);
}

/// Integrate h(x) against f_{theta,stage}. Discrete stages sum exactly over
/// charged atoms; normal stages use a Gauss-Hermite rule.
template <class F>
double expectation(const Stage& stage, double theta0, double theta, F&& h,
                   std::size_t quadrature_nodes = 64) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          double sum = 0.0;
          for (std::size_t i = 0; i < s.size(); ++i) {
            if (s.charged(i)) sum += s.probability(i, theta - theta0) * h(s.atoms()[i]);
          }
          return sum;
        } else {
          const auto rule = gaussian::gauss_hermite(quadrature_nodes);
          double sum = 0.0;
          for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            sum += rule.weights[i] * h(theta + s.sigma * rule.nodes[i]);
          }
          return sum;
        }
      },
      stage);
}

// ---------------------------------------------------------------------------
// sampling

/// splitmix64 finalizer; used to derive independent per-replication streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng replication_rng(std::uint64_t seed, std::uint64_t replication) {
  return Rng(mix64(seed ^ mix64(replication + 0x632be59bd9b4e019ULL)));
}

inline double uniform01(Rng& rng) {
  // 53 random bits -> [0,1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Index of the drawn atom for a discrete stage at theta.
inline std::size_t sample_atom(const DiscreteStage& s, double shift, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = s.probability(i, shift);
    if (p <= 0.0) continue;
    last = i;
    acc += p;
    if (u < acc) return i;
  }
  return last;
}

inline double sample_standard_normal(Rng& rng) {
  // Box-Muller, one draw per call so the stream position is unambiguous
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double sample(const Stage& stage, double theta0, double theta, Rng& rng) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteStage>) {
          return s.atoms()[sample_atom(s, theta - theta0, rng)];
        } else {
          return theta + s.sigma * sample_standard_normal(rng);
        }
      },
      stage);
}

inline double sample(const ObservationModel& model, std::size_t j, double theta, Rng& rng) {
  return sample(model.stage(j), model.theta0(), theta, rng);
}

// ---------------------------------------------------------------------------
// assumption constants

enum class EstimationMethod { exact, scan };

struct AssumptionConstants {
  double delta = 0.0;
  double gamma1 = 0.0;  // sup I_j(theta0,theta)/(theta-theta0)^2 over the scan
  double gamma2 = 0.0;  // sup E_theta0 |q_j|
  EstimationMethod method = EstimationMethod::scan;
};

/// Witness the information bound (gamma1) and the mean-score bound (gamma2)
/// on a theta grid. Every distinct stage is scanned, which for structured
/// models covers all j. For explicit lists the stages 1..max_stage are scanned.
inline AssumptionConstants estimate_assumption_constants(const ObservationModel& model,
                                                         double delta,
                                                         std::span<const double> thetas) {
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  const double t0 = model.theta0();
  AssumptionConstants out;
  out.delta = delta;
  out.method = model.all_discrete() ? EstimationMethod::scan : EstimationMethod::exact;
  bool any_discrete = false;
  for (const auto& stage : model.distinct_stages()) {
    out.gamma2 = std::max(out.gamma2, mean_abs_score(stage));
    if (const auto* n = std::get_if<NormalStage>(&stage)) {
      out.gamma1 = std::max(out.gamma1, 0.5 / (n->sigma * n->sigma));
      continue;
    }
    any_discrete = true;
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      const double th = thetas[j];
      if (th == t0) continue;
      if (std::abs(th - t0) >= delta) {
        throw ConfigError("scan point " + std::to_string(th) + " outside (theta0-delta, theta0+delta)");
      }
      const double info = kl_info(stage, t0, th);
      if (!std::isfinite(info)) {
        throw AssumptionViolation("infinite Kullback-Leibler information at theta = " +
                                  std::to_string(th));
      }
      out.gamma1 = std::max(out.gamma1, info / ((th - t0) * (th - t0)));
    }
  }
  if (any_discrete) out.method = EstimationMethod::scan;
  out.gamma1 = std::max(out.gamma1, std::numeric_limits<double>::min());
  return out;
}

/// Uniform scan of (theta0 - delta, theta0 + delta) clipped to the parameter interval.
inline std::vector<double> default_theta_scan(const ObservationModel& model, double delta,
                                              std::size_t points = 41) {
  const auto range = model.parameter_interval();
  const double lo = std::max(model.theta0() - delta, range.lower);
  const double hi = std::min(model.theta0() + delta, range.upper);
  std::vector<double> out;
  for (std::size_t i = 1; i < points; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points);
    if (t > lo && t < hi) out.push_back(t);
  }
  return out;
}

/// Default delta: half the distance from theta0 to the nearest end of the
/// parameter interval, capped at 0.5.
inline double default_delta(const ObservationModel& model) {
  const auto range = model.parameter_interval();
  const double room = std::min(model.theta0() - range.lower, range.upper - model.theta0());
  return std::min(0.5, 0.5 * room);
}

inline AssumptionConstants estimate_assumption_constants(const ObservationModel& model) {
  const double delta = default_delta(model);
  const auto scan = default_theta_scan(model, delta);
  return estimate_assumption_constants(model, delta, scan);
}

}  // namespace lmpseq
