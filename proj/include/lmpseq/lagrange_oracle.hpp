#pragma once

// Brute-force minimisation of the Lagrange function
//   L_N(psi; b, c) = sum_n E_theta0 s_n^psi (n c + min(0, b - z_n))
// over deterministic truncated stopping rules of a small discrete model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmpseq/errors.hpp"
#include "lmpseq/histories.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/test_engine.hpp"
#include "lmpseq/value_function.hpp"
#include "lmpseq/value_recursion.hpp"

namespace lmpseq {

/// The tree of positive-probability histories up to the horizon; node 0 is
/// the empty history.
struct HistoryTree {
  struct Node {
    std::vector<std::size_t> atoms;
    double z = 0.0;
    double prob0 = 1.0;
    std::size_t parent = 0;
    std::vector<std::size_t> children;
  };
  std::size_t horizon = 0;
  std::vector<Node> nodes;

  static HistoryTree build(const ObservationModel& model, std::size_t horizon,
                           std::size_t budget = 1'000'000) {
    HistoryTree t;
    t.horizon = horizon;
    t.nodes.push_back(Node{});
    std::vector<std::size_t> last_at_depth(horizon + 1, 0);
    walk_histories(
        model, horizon, [](const HistoryView&) { return true; },
        [&](const HistoryView& h, bool) {
          Node node;
          node.atoms.assign(h.atoms.begin(), h.atoms.end());
          node.z = h.z;
          node.prob0 = h.prob0;
          node.parent = last_at_depth[h.length() - 1];
          const std::size_t id = t.nodes.size();
          t.nodes[node.parent].children.push_back(id);
          t.nodes.push_back(std::move(node));
          last_at_depth[h.length()] = id;
        },
        budget);
    return t;
  }

  std::size_t depth(std::size_t id) const { return nodes[id].atoms.size(); }
};

/// Deterministic truncated stopping rule as a table over histories of length
/// 1..N-1 that the rule reaches; stage N always stops.
struct ExplicitRule {
  std::size_t horizon = 0;
  std::map<std::vector<std::size_t>, bool> stop;

  bool stops(std::span<const std::size_t> atoms) const {
    if (atoms.size() >= horizon) return true;
    const auto it = stop.find(std::vector<std::size_t>(atoms.begin(), atoms.end()));
    if (it == stop.end()) {
      throw DomainError("rule table has no entry for a reachable history of length " +
                        std::to_string(atoms.size()));
    }
    return it->second;
  }
};

namespace detail {

/// Fill a rule table by walking the tree under `stop_here(node id)`.
template <class F>
ExplicitRule rule_from_tree(const HistoryTree& tree, F&& stop_here) {
  ExplicitRule rule;
  rule.horizon = tree.horizon;
  std::vector<std::size_t> stack(tree.nodes[0].children.rbegin(), tree.nodes[0].children.rend());
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (tree.depth(id) >= tree.horizon) continue;
    const bool s = stop_here(id);
    rule.stop[tree.nodes[id].atoms] = s;
    if (!s) {
      const auto& ch = tree.nodes[id].children;
      stack.insert(stack.end(), ch.rbegin(), ch.rend());
    }
  }
  return rule;
}

}  // namespace detail

inline ExplicitRule stop_at_first(const HistoryTree& tree) {
  return detail::rule_from_tree(tree, [](std::size_t) { return true; });
}

inline ExplicitRule always_continue(const HistoryTree& tree) {
  return detail::rule_from_tree(tree, [](std::size_t) { return false; });
}

inline ExplicitRule rule_from_design(const HistoryTree& tree, const TestDesign& design) {
  return detail::rule_from_tree(tree, [&](std::size_t id) {
    return !design.continues(tree.depth(id), tree.nodes[id].z);
  });
}

/// Exact L_N(psi; b, c).
inline double lagrange_value(const ExplicitRule& rule, double b, double c,
                             const ObservationModel& model, std::size_t budget = 1'000'000) {
  double total = 0.0;
  walk_histories(
      model, rule.horizon, [&](const HistoryView& h) { return !rule.stops(h.atoms); },
      [&](const HistoryView& h, bool stopped) {
        if (!stopped) return;
        total += h.prob0 * (static_cast<double>(h.length()) * c + terminal_value(b - h.z));
      },
      budget);
  return total;
}

// ---------------------------------------------------------------------------
// minimisation

struct OracleResult {
  double dp_min = 0.0;
  std::optional<double> enumeration_min;  // when the rule count is small enough
  std::size_t rule_count = 0;             // number of deterministic truncated rules
  std::size_t minimizer_count = 0;
  std::vector<ExplicitRule> minimizers;   // filled by the exhaustive pass
  // per tree node: which actions attain the optimum (DP, tie-aware)
  std::vector<char> stop_optimal;
  std::vector<char> continue_optimal;
};

namespace detail {

/// Number of deterministic rules on the subtree of `id` (saturating at `cap`).
inline double rule_count(const HistoryTree& tree, std::size_t id) {
  if (tree.depth(id) >= tree.horizon) return 1.0;
  double prod = 1.0;
  for (std::size_t ch : tree.nodes[id].children) prod *= rule_count(tree, ch);
  return id == 0 ? prod : 1.0 + prod;
}

/// All stop/continue assignments of the subtree of `id`, as (node, stop) lists.
inline void enumerate_rules(const HistoryTree& tree, std::size_t id,
                            std::vector<std::vector<std::pair<std::size_t, bool>>>& out) {
  if (id != 0 && tree.depth(id) >= tree.horizon) {
    out.push_back({});
    return;
  }
  std::vector<std::vector<std::pair<std::size_t, bool>>> combos{{}};
  for (std::size_t ch : tree.nodes[id].children) {
    std::vector<std::vector<std::pair<std::size_t, bool>>> sub;
    enumerate_rules(tree, ch, sub);
    std::vector<std::vector<std::pair<std::size_t, bool>>> next;
    next.reserve(combos.size() * sub.size());
    for (const auto& a : combos) {
      for (const auto& s : sub) {
        auto merged = a;
        merged.insert(merged.end(), s.begin(), s.end());
        next.push_back(std::move(merged));
      }
    }
    combos = std::move(next);
  }
  if (id == 0) {
    out = std::move(combos);
    return;
  }
  out.push_back({{id, true}});
  for (auto& cmb : combos) {
    cmb.insert(cmb.begin(), {id, false});
    out.push_back(std::move(cmb));
  }
}

inline ExplicitRule rule_from_assignment(const HistoryTree& tree,
                                         const std::vector<std::pair<std::size_t, bool>>& a) {
  ExplicitRule rule;
  rule.horizon = tree.horizon;
  for (const auto& [id, s] : a) rule.stop[tree.nodes[id].atoms] = s;
  return rule;
}

}  // namespace detail

/// Minimum of L_N over deterministic truncated rules, by backward DP over the
/// history tree and, when at most `enumeration_limit` rules exist, by
/// exhaustive enumeration. Actions within `tie_tol` of each other are both
/// treated as optimal.
inline OracleResult brute_force_min(const ObservationModel& model, std::size_t horizon, double b,
                                    double c, std::size_t budget = 1'000'000,
                                    std::size_t enumeration_limit = 4096, double tie_tol = 1e-12) {
  if (!(c > 0.0)) throw ConfigError("c must be positive");
  const HistoryTree tree = HistoryTree::build(model, horizon, budget);
  const std::size_t n_nodes = tree.nodes.size();
  OracleResult out;
  out.stop_optimal.assign(n_nodes, 0);
  out.continue_optimal.assign(n_nodes, 0);

  // cost-to-go conditional on reaching the node (no prob weighting)
  std::vector<double> value(n_nodes, 0.0);
  for (std::size_t k = n_nodes; k-- > 1;) {
    const auto& node = tree.nodes[k];
    const double n = static_cast<double>(node.atoms.size());
    const double stop_cost = n * c + terminal_value(b - node.z);
    if (node.atoms.size() >= horizon) {
      value[k] = stop_cost;
      out.stop_optimal[k] = 1;
      continue;
    }
    double cont = 0.0;
    for (std::size_t ch : node.children) {
      cont += tree.nodes[ch].prob0 / node.prob0 * value[ch];
    }
    value[k] = std::min(stop_cost, cont);
    const double scale = std::max(1.0, std::abs(value[k]));
    out.stop_optimal[k] = stop_cost <= value[k] + tie_tol * scale;
    out.continue_optimal[k] = cont <= value[k] + tie_tol * scale;
  }
  double root = 0.0;
  for (std::size_t ch : tree.nodes[0].children) root += tree.nodes[ch].prob0 * value[ch];
  out.dp_min = root;

  const double count = detail::rule_count(tree, 0);
  out.rule_count = count > 1e18 ? std::numeric_limits<std::size_t>::max()
                                : static_cast<std::size_t>(count);
  if (count <= static_cast<double>(enumeration_limit)) {
    std::vector<std::vector<std::pair<std::size_t, bool>>> all;
    detail::enumerate_rules(tree, 0, all);
    std::vector<double> values(all.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < all.size(); ++i) {
      values[i] = lagrange_value(detail::rule_from_assignment(tree, all[i]), b, c, model, budget);
      best = std::min(best, values[i]);
    }
    out.enumeration_min = best;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (values[i] <= best + tie_tol * std::max(1.0, std::abs(best))) {
        out.minimizers.push_back(detail::rule_from_assignment(tree, all[i]));
      }
    }
    out.minimizer_count = out.minimizers.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// characterisation of optimal rules

struct SandwichReport {
  std::size_t histories = 0;  // reachable histories examined
  std::size_t ties = 0;       // |g - c - r| within tolerance: either action allowed
  std::size_t violations = 0;
  std::string first_violation;

  bool holds() const { return violations == 0; }
};

/// Stopping sandwich: on each reachable history of length n < N,
///   I{g(b - z_n) < c + r_n(b - z_n)} <= psi_n <= I{g(b - z_n) <= c + r_n(b - z_n)}.
inline SandwichReport stopping_sandwich(const ExplicitRule& rule, const RecursionOutput& rec,
                                        double b, const ObservationModel& model,
                                        double tol = 1e-9, std::size_t budget = 1'000'000) {
  SandwichReport rep;
  walk_histories(
      model, rule.horizon, [&](const HistoryView& h) { return !rule.stops(h.atoms); },
      [&](const HistoryView& h, bool stopped) {
        if (h.length() >= rule.horizon) return;
        ++rep.histories;
        const double y = b - h.z;
        const double d = terminal_value(y) - (rec.c + rec.r_at(h.length())(y));
        if (std::abs(d) <= tol) {
          ++rep.ties;
          return;
        }
        const bool must_stop = d < 0.0;
        if (must_stop != stopped) {
          if (rep.violations++ == 0) {
            rep.first_violation = "stage " + std::to_string(h.length()) + " z=" +
                                  std::to_string(h.z) + (must_stop ? " must stop" : " must continue");
          }
        }
      },
      budget);
  return rep;
}

/// Decision sandwich I{z_n > b} <= phi_n <= I{z_n >= b} on stopped histories.
template <class Reject>
SandwichReport decision_sandwich(const ExplicitRule& rule, Reject&& rejects, double b,
                                 const ObservationModel& model, double tol = 1e-12,
                                 std::size_t budget = 1'000'000) {
  SandwichReport rep;
  walk_histories(
      model, rule.horizon, [&](const HistoryView& h) { return !rule.stops(h.atoms); },
      [&](const HistoryView& h, bool stopped) {
        if (!stopped) return;
        ++rep.histories;
        if (std::abs(h.z - b) <= tol) {
          ++rep.ties;
          return;
        }
        if ((h.z > b) != rejects(h)) {
          if (rep.violations++ == 0) {
            rep.first_violation = "stage " + std::to_string(h.length()) + " z=" + std::to_string(h.z);
          }
        }
      },
      budget);
  return rep;
}

// ---------------------------------------------------------------------------
// all deterministic truncated tests

struct EnumeratedTest {
  const ExplicitRule* rule = nullptr;
  std::vector<char> reject;  // per stopping history, in walk order
  double alpha = 0.0;
  double asn = 0.0;
  double power_derivative = 0.0;
};

/// Visit every deterministic truncated test (psi, phi) with exact alpha,
/// E_theta0 tau and derivative of the power at theta0.
template <class Visit>
std::size_t for_each_deterministic_test(const ObservationModel& model, std::size_t horizon,
                                        Visit&& visit, std::size_t max_tests = 10'000'000,
                                        std::size_t budget = 1'000'000) {
  const HistoryTree tree = HistoryTree::build(model, horizon, budget);
  std::vector<std::vector<std::pair<std::size_t, bool>>> all;
  if (detail::rule_count(tree, 0) > static_cast<double>(max_tests)) {
    throw BudgetExceeded("too many stopping rules to enumerate");
  }
  detail::enumerate_rules(tree, 0, all);
  std::size_t visited = 0;
  for (const auto& a : all) {
    const ExplicitRule rule = detail::rule_from_assignment(tree, a);
    std::vector<double> p, z, n;
    walk_histories(
        model, horizon, [&](const HistoryView& h) { return !rule.stops(h.atoms); },
        [&](const HistoryView& h, bool stopped) {
          if (!stopped) return;
          p.push_back(h.prob0);
          z.push_back(h.z);
          n.push_back(static_cast<double>(h.length()));
        },
        budget);
    if (p.size() >= 63) throw BudgetExceeded("too many stopping histories for decision enumeration");
    double asn = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) asn += p[i] * n[i];
    const std::uint64_t combos = std::uint64_t{1} << p.size();
    if (visited + combos > max_tests) throw BudgetExceeded("too many tests to enumerate");
    EnumeratedTest t;
    t.rule = &rule;
    t.asn = asn;
    t.reject.assign(p.size(), 0);
    for (std::uint64_t mask = 0; mask < combos; ++mask) {
      t.alpha = 0.0;
      t.power_derivative = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        t.reject[i] = static_cast<char>((mask >> i) & 1U);
        if (t.reject[i]) {
          t.alpha += p[i];
          t.power_derivative += p[i] * z[i];
        }
      }
      visit(t);
      ++visited;
    }
  }
  return visited;
}

}  // namespace lmpseq
