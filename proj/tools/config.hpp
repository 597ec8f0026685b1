#pragma once

// Run configuration: YAML in, validated RunConfig out. Every validation
// error carries the line and column of the offending node.

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lmpseq/lmpseq.hpp"

namespace lmpseq::cli {

struct StageSpec {
  std::string family;  // normal | bernoulli | table | degenerate
  double sigma = 1.0;
  std::vector<double> atoms, f0, fdot;
};

struct RunConfig {
  // model
  std::string family_summary;
  double theta0 = 0.0;
  Structure structure = Structure::iid;
  std::vector<StageSpec> stages;
  // design
  double b = 0.0;
  double c = 0.1;
  std::optional<std::size_t> horizon;  // untruncated when absent
  std::optional<double> half_width;
  std::optional<std::size_t> nodes;
  std::size_t quadrature_nodes = 64;
  GaussianRule rule = GaussianRule::exact_piecewise;
  bool force_grid = false;
  std::optional<double> sup_norm_tol;
  std::size_t max_horizon = 100000;
  std::optional<double> root_tol;
  // evaluation
  std::vector<double> thetas;
  std::size_t reps = 10000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::vector<double> steps{1e-1, 1e-2, 1e-3};
  std::size_t budget = 1'000'000;
  std::optional<double> delta;
  // output
  std::string directory = "out";
  std::optional<std::string> boundaries;  // verify against this boundary file
  std::size_t trace_max_reps = 100;
  std::size_t export_nodes = 201;
  std::optional<double> export_half_width;
};

namespace detail {

inline std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.is_null()) return "config";
  return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1);
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& field, const std::string& msg) {
  throw ConfigError(where(n) + ": " + field + ": " + msg);
}

inline void allow_keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& keys) {
  if (!n.IsMap()) fail(n, path, "expected a mapping");
  for (const auto& kv : n) {
    const std::string k = kv.first.as<std::string>();
    if (!keys.count(k)) fail(kv.first, path + "." + k, "unknown field");
  }
}

template <class T>
T scalar(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) fail(n, field, "expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, field, "cannot read value '" + n.Scalar() + "'");
  }
}

inline std::vector<double> numbers(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) fail(n, field, "expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    out.push_back(scalar<double>(n[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline StageSpec read_stage(const YAML::Node& n, const std::string& path) {
  allow_keys(n, path, {"family", "sigma", "atoms", "f0", "fdot"});
  StageSpec s;
  if (!n["family"]) fail(n, path + ".family", "missing");
  s.family = scalar<std::string>(n["family"], path + ".family");
  if (s.family == "normal") {
    if (n["sigma"]) s.sigma = scalar<double>(n["sigma"], path + ".sigma");
    if (!(s.sigma > 0.0)) fail(n["sigma"], path + ".sigma", "must be positive");
  } else if (s.family == "table" || s.family == "degenerate") {
    if (!n["atoms"]) fail(n, path + ".atoms", "missing");
    if (!n["f0"]) fail(n, path + ".f0", "missing");
    s.atoms = numbers(n["atoms"], path + ".atoms");
    s.f0 = numbers(n["f0"], path + ".f0");
    if (s.family == "table") {
      if (!n["fdot"]) fail(n, path + ".fdot", "missing");
      s.fdot = numbers(n["fdot"], path + ".fdot");
    } else {
      s.fdot.assign(s.atoms.size(), 0.0);
    }
  } else if (s.family != "bernoulli") {
    fail(n["family"], path + ".family", "unknown family '" + s.family + "'");
  }
  return s;
}

inline Structure read_structure(const YAML::Node& n) {
  const std::string s = scalar<std::string>(n, "model.structure");
  if (s == "iid") return Structure::iid;
  if (s == "periodic") return Structure::periodic;
  if (s == "nonstationary") return Structure::finitely_nonstationary;
  if (s == "explicit") return Structure::explicit_list;
  fail(n, "model.structure", "expected iid, periodic, nonstationary or explicit");
}

}  // namespace detail

inline Stage build_stage(const StageSpec& s, double theta0) {
  if (s.family == "normal") return NormalStage{s.sigma};
  if (s.family == "bernoulli") return DiscreteStage::bernoulli(theta0);
  return DiscreteStage(s.atoms, s.f0, s.fdot);
}

inline ObservationModel build_model(const RunConfig& cfg) {
  std::vector<Stage> stages;
  for (const auto& s : cfg.stages) stages.push_back(build_stage(s, cfg.theta0));
  return ObservationModel(cfg.theta0, cfg.structure, std::move(stages));
}

inline RunConfig parse_config(const YAML::Node& root) {
  using namespace detail;
  RunConfig cfg;
  allow_keys(root, "config", {"model", "design", "evaluation", "output"});
  if (!root["model"]) fail(root, "model", "missing block");
  if (!root["design"]) fail(root, "design", "missing block");

  const YAML::Node m = root["model"];
  allow_keys(m, "model", {"family", "sigma", "atoms", "f0", "fdot", "theta0", "structure", "stages"});
  if (!m["theta0"]) fail(m, "model.theta0", "missing");
  cfg.theta0 = scalar<double>(m["theta0"], "model.theta0");
  if (m["structure"]) cfg.structure = read_structure(m["structure"]);
  if (m["stages"]) {
    if (m["family"]) fail(m["family"], "model.family", "give either family or stages, not both");
    const YAML::Node st = m["stages"];
    if (!st.IsSequence() || st.size() == 0) fail(st, "model.stages", "expected a nonempty list");
    for (std::size_t i = 0; i < st.size(); ++i) {
      cfg.stages.push_back(read_stage(st[i], "model.stages[" + std::to_string(i) + "]"));
    }
  } else {
    YAML::Node copy = YAML::Clone(m);
    copy.remove("theta0");
    copy.remove("structure");
    cfg.stages.push_back(read_stage(copy, "model"));
  }
  if (cfg.structure == Structure::iid && cfg.stages.size() != 1) {
    fail(m["stages"], "model.stages", "iid models take exactly one stage");
  }

  const YAML::Node d = root["design"];
  allow_keys(d, "design", {"b", "c", "horizon", "grid", "sup_norm_tol", "max_horizon", "root_tol"});
  if (d["b"]) cfg.b = scalar<double>(d["b"], "design.b");
  if (!d["c"]) fail(d, "design.c", "missing");
  cfg.c = scalar<double>(d["c"], "design.c");
  if (!(cfg.c > 0.0)) fail(d["c"], "design.c", "must be positive");
  if (d["horizon"]) {
    const YAML::Node h = d["horizon"];
    if (h.IsScalar() && h.Scalar() == "untruncated") {
      cfg.horizon.reset();
    } else {
      const long long v = scalar<long long>(h, "design.horizon");
      if (v < 1) fail(h, "design.horizon", "must be at least 1 or 'untruncated'");
      cfg.horizon = static_cast<std::size_t>(v);
    }
  }
  if (d["grid"]) {
    const YAML::Node g = d["grid"];
    allow_keys(g, "design.grid", {"half_width", "nodes", "quadrature_nodes", "rule", "force"});
    if (g["half_width"]) {
      cfg.half_width = scalar<double>(g["half_width"], "design.grid.half_width");
      if (!(*cfg.half_width > 0.0)) fail(g["half_width"], "design.grid.half_width", "must be positive");
    }
    if (g["nodes"]) {
      const long long v = scalar<long long>(g["nodes"], "design.grid.nodes");
      if (v < 16) fail(g["nodes"], "design.grid.nodes", "must be at least 16");
      cfg.nodes = static_cast<std::size_t>(v);
    }
    if (g["quadrature_nodes"]) {
      const long long v = scalar<long long>(g["quadrature_nodes"], "design.grid.quadrature_nodes");
      if (v < 2 || v > 512) fail(g["quadrature_nodes"], "design.grid.quadrature_nodes", "must lie in [2, 512]");
      cfg.quadrature_nodes = static_cast<std::size_t>(v);
    }
    if (g["rule"]) {
      const std::string r = scalar<std::string>(g["rule"], "design.grid.rule");
      if (r == "exact") cfg.rule = GaussianRule::exact_piecewise;
      else if (r == "gauss_hermite") cfg.rule = GaussianRule::gauss_hermite;
      else fail(g["rule"], "design.grid.rule", "expected exact or gauss_hermite");
    }
    if (g["force"]) cfg.force_grid = scalar<bool>(g["force"], "design.grid.force");
  }
  if (d["sup_norm_tol"]) {
    cfg.sup_norm_tol = scalar<double>(d["sup_norm_tol"], "design.sup_norm_tol");
    if (!(*cfg.sup_norm_tol > 0.0)) fail(d["sup_norm_tol"], "design.sup_norm_tol", "must be positive");
  }
  if (d["max_horizon"]) {
    const long long v = scalar<long long>(d["max_horizon"], "design.max_horizon");
    if (v < 1) fail(d["max_horizon"], "design.max_horizon", "must be at least 1");
    cfg.max_horizon = static_cast<std::size_t>(v);
  }
  if (d["root_tol"]) {
    cfg.root_tol = scalar<double>(d["root_tol"], "design.root_tol");
    if (!(*cfg.root_tol > 0.0)) fail(d["root_tol"], "design.root_tol", "must be positive");
  }

  if (const YAML::Node e = root["evaluation"]) {
    allow_keys(e, "evaluation", {"thetas", "reps", "seed", "workers", "steps", "budget", "delta"});
    if (e["thetas"]) cfg.thetas = numbers(e["thetas"], "evaluation.thetas");
    if (e["reps"]) {
      const long long v = scalar<long long>(e["reps"], "evaluation.reps");
      if (v < 1) fail(e["reps"], "evaluation.reps", "must be at least 1");
      cfg.reps = static_cast<std::size_t>(v);
    }
    if (e["seed"]) cfg.seed = scalar<std::uint64_t>(e["seed"], "evaluation.seed");
    if (e["workers"]) {
      const long long v = scalar<long long>(e["workers"], "evaluation.workers");
      if (v < 1) fail(e["workers"], "evaluation.workers", "must be at least 1");
      cfg.workers = static_cast<std::size_t>(v);
    }
    if (e["steps"]) {
      cfg.steps = numbers(e["steps"], "evaluation.steps");
      for (double h : cfg.steps) {
        if (!(h > 0.0)) fail(e["steps"], "evaluation.steps", "steps must be positive");
      }
      if (cfg.steps.empty()) fail(e["steps"], "evaluation.steps", "must not be empty");
    }
    if (e["budget"]) {
      const long long v = scalar<long long>(e["budget"], "evaluation.budget");
      if (v < 1) fail(e["budget"], "evaluation.budget", "must be at least 1");
      cfg.budget = static_cast<std::size_t>(v);
    }
    if (e["delta"]) {
      cfg.delta = scalar<double>(e["delta"], "evaluation.delta");
      if (!(*cfg.delta > 0.0)) fail(e["delta"], "evaluation.delta", "must be positive");
    }
  }
  if (const YAML::Node o = root["output"]) {
    allow_keys(o, "output", {"directory", "boundaries", "trace_max_reps", "export_nodes", "export_half_width"});
    if (o["directory"]) cfg.directory = scalar<std::string>(o["directory"], "output.directory");
    if (o["boundaries"]) cfg.boundaries = scalar<std::string>(o["boundaries"], "output.boundaries");
    if (o["trace_max_reps"]) {
      cfg.trace_max_reps = static_cast<std::size_t>(scalar<long long>(o["trace_max_reps"], "output.trace_max_reps"));
    }
    if (o["export_nodes"]) {
      const long long v = scalar<long long>(o["export_nodes"], "output.export_nodes");
      if (v < 2) fail(o["export_nodes"], "output.export_nodes", "must be at least 2");
      cfg.export_nodes = static_cast<std::size_t>(v);
    }
    if (o["export_half_width"]) {
      cfg.export_half_width = scalar<double>(o["export_half_width"], "output.export_half_width");
    }
  }

  // semantic checks that need the model
  ObservationModel model = [&] {
    try {
      return build_model(cfg);
    } catch (const ConfigError& e) {
      fail(m, "model", e.what());
    }
  }();
  if (!model.structured() && !cfg.horizon) {
    fail(d, "design.horizon", "explicit stage lists support truncated designs only");
  }
  if (cfg.horizon && !model.structured() && *cfg.horizon > cfg.stages.size()) {
    fail(d["horizon"], "design.horizon", "exceeds the number of listed stages");
  }
  const YAML::Node th = root["evaluation"] ? root["evaluation"]["thetas"] : YAML::Node();
  for (double t : cfg.thetas) {
    if (!model.parameter_interval().contains(t)) {
      fail(th, "evaluation.thetas", "theta " + std::to_string(t) + " outside the parameter interval");
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError(path + ": cannot open config file");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path + ": line " + std::to_string(e.mark.line + 1) + ", column " +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  try {
    return parse_config(root);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace detail {

inline void emit_model(YAML::Emitter& out, const RunConfig& c) {
  out << YAML::Key << "theta0" << YAML::Value << c.theta0;
  out << YAML::Key << "structure" << YAML::Value << to_string(c.structure);
  out << YAML::Key << "stages" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : c.stages) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "family" << YAML::Value << s.family;
    if (s.family == "normal") out << YAML::Key << "sigma" << YAML::Value << s.sigma;
    if (!s.atoms.empty()) {
      out << YAML::Key << "atoms" << YAML::Value << YAML::Flow << s.atoms;
      out << YAML::Key << "f0" << YAML::Value << YAML::Flow << s.f0;
      out << YAML::Key << "fdot" << YAML::Value << YAML::Flow << s.fdot;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
}

}  // namespace detail

/// Canonical text of the model block alone.
inline std::string canonical_model(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  detail::emit_model(out, c);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

/// Canonical text of everything that determines command output (worker
/// count and output directory excluded).
inline std::string canonical(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  detail::emit_model(out, c);
  out << YAML::Key << "b" << YAML::Value << c.b;
  out << YAML::Key << "c" << YAML::Value << c.c;
  out << YAML::Key << "horizon" << YAML::Value
      << (c.horizon ? std::to_string(*c.horizon) : std::string("untruncated"));
  if (c.half_width) out << YAML::Key << "half_width" << YAML::Value << *c.half_width;
  if (c.nodes) out << YAML::Key << "nodes" << YAML::Value << *c.nodes;
  out << YAML::Key << "quadrature_nodes" << YAML::Value << c.quadrature_nodes;
  out << YAML::Key << "rule" << YAML::Value
      << (c.rule == GaussianRule::exact_piecewise ? "exact" : "gauss_hermite");
  out << YAML::Key << "force_grid" << YAML::Value << c.force_grid;
  if (c.sup_norm_tol) out << YAML::Key << "sup_norm_tol" << YAML::Value << *c.sup_norm_tol;
  out << YAML::Key << "max_horizon" << YAML::Value << c.max_horizon;
  if (c.root_tol) out << YAML::Key << "root_tol" << YAML::Value << *c.root_tol;
  out << YAML::Key << "thetas" << YAML::Value << YAML::Flow << c.thetas;
  out << YAML::Key << "reps" << YAML::Value << c.reps;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "steps" << YAML::Value << YAML::Flow << c.steps;
  out << YAML::Key << "budget" << YAML::Value << c.budget;
  if (c.delta) out << YAML::Key << "delta" << YAML::Value << *c.delta;
  if (c.boundaries) out << YAML::Key << "boundaries" << YAML::Value << *c.boundaries;
  out << YAML::Key << "trace_max_reps" << YAML::Value << c.trace_max_reps;
  out << YAML::Key << "export_nodes" << YAML::Value << c.export_nodes;
  if (c.export_half_width) out << YAML::Key << "export_half_width" << YAML::Value << *c.export_half_width;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace lmpseq::cli
