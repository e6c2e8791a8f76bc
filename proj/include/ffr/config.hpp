#pragma once

// Run configuration: one JSON document, validated before any computation.
// Unknown keys are rejected; "--section.key=value" overrides are merged into
// the document before validation.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffr/flow.hpp"

namespace ffr {

struct Tolerances {
  double eps_reg = kDefaultEpsReg;
  double check_tol = 1;  // scales every residual tolerance of `check`
};

struct StateConfig {
  // Optional block expressions; when absent the state is the canonical
  // d-metric of the Lagrangian.
  std::optional<std::vector<std::string>> gh, gv, N;
  std::string f = "0";
  double tau = 1;
};

struct CheckConfig {
  int points = 20;
  int perturbations = 3;
};

struct RunConfig {
  int n = 2;
  std::string lagrangian = "y1^2+y2^2";
  GridDomain domain;
  StateConfig state;
  FlowConfig flow;
  Tolerances tolerances;
  CheckConfig check;
  std::uint64_t seed = 0;
  std::string output;
  std::optional<std::vector<double>> point;
};

namespace config_detail {

using nlohmann::json;

inline void allow(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
T get(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong type (" + std::string(j.type_name()) + ")");
  }
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

// A scalar applies to every axis; an array gives one value per axis.
template <class T, class F>
std::vector<T> per_axis(const json& j, int axes, const std::string& where, F conv) {
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != axes)
      throw ConfigError(where + ": expected " + std::to_string(axes) + " entries");
    std::vector<T> r;
    for (std::size_t k = 0; k < j.size(); ++k) r.push_back(conv(j[k], where + "[" + std::to_string(k) + "]"));
    return r;
  }
  return std::vector<T>(axes, conv(j, where));
}

inline std::vector<std::string> strings(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of expressions");
  std::vector<std::string> r;
  for (const auto& e : j) {
    if (e.is_string())
      r.push_back(e.get<std::string>());
    else if (e.is_number())
      r.push_back(fmt_num(e.get<double>()));
    else
      throw ConfigError(where + ": entries must be strings or numbers");
  }
  return r;
}

inline GridDomain parse_domain(const json& j, int n) {
  const int m = 2 * n;
  GridDomain d;
  d.n = n;
  d.center.assign(m, 0.0);
  d.period.assign(m, 1.0);
  d.res.assign(m, 8);
  if (j.is_array()) {  // one {center, period, resolution} object per axis
    if (static_cast<int>(j.size()) != m) throw ConfigError("domain: expected " + std::to_string(m) + " axes");
    for (int a = 0; a < m; ++a) {
      const std::string w = "domain[" + std::to_string(a) + "]";
      allow(j[a], w, {"center", "period", "resolution"});
      if (j[a].contains("center")) d.center[a] = number(j[a]["center"], w + ".center");
      if (j[a].contains("period")) d.period[a] = number(j[a]["period"], w + ".period");
      if (j[a].contains("resolution")) d.res[a] = integer(j[a]["resolution"], w + ".resolution");
    }
  } else if (!j.is_null()) {
    allow(j, "domain", {"center", "period", "resolution"});
    if (j.contains("center")) d.center = per_axis<double>(j["center"], m, "domain.center", number);
    if (j.contains("period")) d.period = per_axis<double>(j["period"], m, "domain.period", number);
    if (j.contains("resolution")) d.res = per_axis<int>(j["resolution"], m, "domain.resolution", integer);
  }
  d.validate();
  return d;
}

inline FlowConfig parse_flow(const json& j) {
  FlowConfig f;
  if (j.is_null()) return f;
  allow(j, "flow", {"connection", "normalize", "lambda_divisor", "dt", "steps", "stride", "coupling", "integrator",
                    "paper_literal_w", "snapshots"});
  try {
    if (j.contains("connection")) f.connection = parse_connection(get<std::string>(j["connection"], "flow.connection"));
    if (j.contains("coupling")) f.coupling = parse_coupling(get<std::string>(j["coupling"], "flow.coupling"));
    if (j.contains("integrator")) f.integrator = parse_integrator(get<std::string>(j["integrator"], "flow.integrator"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("flow: ") + e.what());
  }
  if (j.contains("normalize")) f.normalize = get<bool>(j["normalize"], "flow.normalize");
  if (j.contains("paper_literal_w")) f.paper_literal_w = get<bool>(j["paper_literal_w"], "flow.paper_literal_w");
  if (j.contains("snapshots")) f.snapshots = get<bool>(j["snapshots"], "flow.snapshots");
  if (j.contains("lambda_divisor")) f.lambda_divisor = number(j["lambda_divisor"], "flow.lambda_divisor");
  if (j.contains("dt")) f.dt = number(j["dt"], "flow.dt");
  if (j.contains("steps")) f.steps = integer(j["steps"], "flow.steps");
  if (j.contains("stride")) f.stride = integer(j["stride"], "flow.stride");
  f.validate();
  return f;
}

// "1e-3" -> number, "true" -> bool, "[1,2]" -> array; anything else is a string.
inline json override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

}  // namespace config_detail

// Merges "section.key" = value into the document, creating objects as needed.
inline void apply_override(nlohmann::json& doc, const std::string& path, const std::string& value) {
  if (path.empty()) throw ConfigError("empty override key");
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("malformed override key '" + path + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override '" + path + "' descends into a non-object");
      *node = nlohmann::json::object();
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = config_detail::override_value(value);
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  if (j.is_null()) return parse_config(nlohmann::json::object());
  allow(j, "", {"n", "lagrangian", "domain", "state", "flow", "tolerances", "check", "seed", "output", "point"});
  RunConfig c;
  if (j.contains("n")) c.n = integer(j["n"], "n");
  if (c.n < 2) throw ConfigError("n: base dimension must be at least 2");
  if (j.contains("lagrangian")) c.lagrangian = get<std::string>(j["lagrangian"], "lagrangian");
  try {
    parse(c.lagrangian, c.n);
  } catch (const Error& e) {
    throw ConfigError(std::string("lagrangian: ") + e.what());
  }
  c.domain = parse_domain(j.value("domain", nlohmann::json()), c.n);
  if (j.contains("state")) {
    const auto& s = j["state"];
    allow(s, "state", {"gh", "gv", "N", "f", "tau"});
    if (s.contains("gh")) c.state.gh = strings(s["gh"], "state.gh");
    if (s.contains("gv")) c.state.gv = strings(s["gv"], "state.gv");
    if (s.contains("N")) c.state.N = strings(s["N"], "state.N");
    if (s.contains("f")) c.state.f = s["f"].is_number() ? fmt_num(s["f"].get<double>()) : get<std::string>(s["f"], "state.f");
    if (s.contains("tau")) c.state.tau = number(s["tau"], "state.tau");
    const int given = c.state.gh.has_value() + c.state.gv.has_value() + c.state.N.has_value();
    if (given != 0 && given != 3) throw ConfigError("state: gh, gv and N must be given together");
    if (!(c.state.tau > 0)) throw ConfigError("state.tau must be positive");
  }
  c.flow = parse_flow(j.value("flow", nlohmann::json()));
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    allow(t, "tolerances", {"eps_reg", "check_tol"});
    if (t.contains("eps_reg")) c.tolerances.eps_reg = number(t["eps_reg"], "tolerances.eps_reg");
    if (t.contains("check_tol")) c.tolerances.check_tol = number(t["check_tol"], "tolerances.check_tol");
    if (!(c.tolerances.eps_reg >= 0)) throw ConfigError("tolerances.eps_reg must be non-negative");
    if (!(c.tolerances.check_tol > 0)) throw ConfigError("tolerances.check_tol must be positive");
  }
  c.flow.eps_reg = c.tolerances.eps_reg;
  if (j.contains("check")) {
    const auto& k = j["check"];
    allow(k, "check", {"points", "perturbations"});
    if (k.contains("points")) c.check.points = integer(k["points"], "check.points");
    if (k.contains("perturbations")) c.check.perturbations = integer(k["perturbations"], "check.perturbations");
    if (c.check.points < 1 || c.check.perturbations < 1) throw ConfigError("check: counts must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output")) c.output = get<std::string>(j["output"], "output");
  if (j.contains("point")) {
    if (!j["point"].is_array()) throw ConfigError("point: expected an array");
    c.point = per_axis<double>(j["point"], 2 * c.n, "point", number);
  }
  return c;
}

inline nlohmann::json read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// "0.1, 0.2, 1, 0.5" -> coordinates; anything malformed is a usage error.
inline std::vector<double> parse_point(const std::string& text, int n) {
  std::vector<double> u;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("point: empty coordinate in '" + text + "'");
    item = item.substr(b, e - b + 1);
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) throw ConfigError("point: malformed coordinate '" + item + "'");
    u.push_back(v);
  }
  if (static_cast<int>(u.size()) != 2 * n)
    throw ConfigError("point: expected " + std::to_string(2 * n) + " coordinates, got " + std::to_string(u.size()));
  return u;
}

// The grid state of a configuration: explicit blocks or the canonical
// d-metric of the Lagrangian, with f sampled from its expression.
inline FlowState build_state(const RunConfig& c) {
  const auto dom = std::make_shared<const GridDomain>(c.domain);
  FlowState s;
  if (c.state.gh)
    s.dm = sample_blocks(dom, *c.state.gh, *c.state.gv, *c.state.N);
  else
    s.dm = sample_dmetric(dom, parse(c.lagrangian, c.n), c.tolerances.eps_reg);
  check_regular_field(s.dm, c.tolerances.eps_reg);
  s.f = sample(dom, parse(c.state.f, c.n));
  s.tau = c.state.tau;
  return s;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["n"] = c.n;
  j["lagrangian"] = c.lagrangian;
  j["domain"] = {{"center", c.domain.center}, {"period", c.domain.period}, {"resolution", c.domain.res}};
  nlohmann::json st = {{"f", c.state.f}, {"tau", c.state.tau}};
  if (c.state.gh) st["gh"] = *c.state.gh, st["gv"] = *c.state.gv, st["N"] = *c.state.N;
  j["state"] = st;
  j["flow"] = {{"connection", to_string(c.flow.connection)},
               {"normalize", c.flow.normalize},
               {"lambda_divisor", c.flow.lambda_divisor},
               {"dt", c.flow.dt},
               {"steps", c.flow.steps},
               {"stride", c.flow.stride},
               {"coupling", to_string(c.flow.coupling)},
               {"integrator", to_string(c.flow.integrator)},
               {"paper_literal_w", c.flow.paper_literal_w},
               {"snapshots", c.flow.snapshots}};
  j["tolerances"] = {{"eps_reg", c.tolerances.eps_reg}, {"check_tol", c.tolerances.check_tol}};
  j["check"] = {{"points", c.check.points}, {"perturbations", c.check.perturbations}};
  j["seed"] = c.seed;
  j["output"] = c.output;
  if (c.point) j["point"] = *c.point;
  return j;
}

}  // namespace ffr
