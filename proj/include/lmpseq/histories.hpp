#pragma once

// Depth-first walk over observation histories (x_1, ..., x_n) of an
// all-discrete model, restricted to histories of positive null probability.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lmpseq/errors.hpp"
#include "lmpseq/model.hpp"

namespace lmpseq {

struct HistoryView {
  std::span<const std::size_t> atoms;  // atoms[j-1] is the atom index observed at stage j
  double z = 0.0;                      // z_n = q_1 + ... + q_n
  double prob0 = 0.0;                  // P_theta0 of the history

  std::size_t length() const { return atoms.size(); }
};

namespace detail {

inline const DiscreteStage& discrete_stage(const ObservationModel& model, std::size_t j) {
  const auto* d = std::get_if<DiscreteStage>(&model.stage(j));
  if (!d) throw ConfigError("exact enumeration needs discrete stages (stage " + std::to_string(j) + ")");
  return *d;
}

}  // namespace detail

/// Worst-case number of histories of length 1..horizon.
inline double history_count(const ObservationModel& model, std::size_t horizon) {
  double total = 0.0, layer = 1.0;
  for (std::size_t j = 1; j <= horizon; ++j) {
    const auto& s = detail::discrete_stage(model, j);
    std::size_t charged = 0;
    for (std::size_t i = 0; i < s.size(); ++i) charged += s.charged(i) ? 1 : 0;
    layer *= static_cast<double>(charged);
    total += layer;
  }
  return total;
}

inline void require_history_budget(const ObservationModel& model, std::size_t horizon,
                                   std::size_t budget) {
  const double count = history_count(model, horizon);
  if (count > static_cast<double>(budget)) {
    throw BudgetExceeded("exact enumeration needs up to " + std::to_string(std::llround(count)) +
                         " histories at horizon " + std::to_string(horizon) + "; budget is " +
                         std::to_string(budget));
  }
}

/// Visit every history reachable under the stopping rule. `continues(view)`
/// is consulted for length < horizon; `visit(view, stopped)` sees every
/// reachable history, with stopped == true where sampling halts there.
template <class Continue, class Visit>
void walk_histories(const ObservationModel& model, std::size_t horizon, Continue&& continues,
                    Visit&& visit, std::size_t budget = 1'000'000) {
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  require_history_budget(model, horizon, budget);
  std::vector<const DiscreteStage*> stages(horizon);
  for (std::size_t j = 1; j <= horizon; ++j) stages[j - 1] = &detail::discrete_stage(model, j);

  std::vector<std::size_t> atoms;
  atoms.reserve(horizon);
  auto recurse = [&](auto&& self, double z, double prob) -> void {
    const std::size_t j = atoms.size() + 1;
    const DiscreteStage& s = *stages[j - 1];
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.charged(i)) continue;
      atoms.push_back(i);
      const HistoryView view{atoms, z + s.score(i), prob * s.f0()[i]};
      const bool stop = j == horizon || !continues(view);
      visit(view, stop);
      if (!stop) self(self, view.z, view.prob0);
      atoms.pop_back();
    }
  };
  recurse(recurse, 0.0, 1.0);
}

/// P_theta of the history.
inline double history_probability(const ObservationModel& model, const HistoryView& h,
                                  double theta) {
  const double shift = theta - model.theta0();
  double p = 1.0;
  for (std::size_t j = 1; j <= h.length(); ++j) {
    p *= detail::discrete_stage(model, j).probability(h.atoms[j - 1], shift);
  }
  return p;
}

/// sum_j ln f_theta0(x_j)/f_theta(x_j) over the history.
inline double history_log_ratio(const ObservationModel& model, const HistoryView& h, double theta) {
  const double shift = theta - model.theta0();
  double acc = 0.0;
  for (std::size_t j = 1; j <= h.length(); ++j) {
    const auto& s = detail::discrete_stage(model, j);
    const std::size_t i = h.atoms[j - 1];
    const double p = s.probability(i, shift);
    if (p <= 0.0) return std::numeric_limits<double>::infinity();
    acc += std::log(s.f0()[i] / p);
  }
  return acc;
}

}  // namespace lmpseq
