// ffr: command-line front end.
//
//   ffr <inspect|check|grid|flow|thermo|parse> [--config PATH] [flags]
//       [--section.key=value ...]
//
// Settings are layered: config file, then named flags, then dotted overrides.
// Exit codes: 0 ok, 1 runtime or numerical failure (including a failed
// check), 2 usage or configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ffr/check.hpp"
#include "ffr/config.hpp"
#include "ffr/connections.hpp"
#include "ffr/flow.hpp"

namespace {

using nlohmann::json;
using namespace ffr;

struct Options {
  std::string config, out, point, expression;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol, lambda_divisor, tau;
  std::optional<int> threads;
  bool paper_literal_w = false, normalize = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Top-level keys that may be overridden without a section.
bool overridable(const std::string& key) {
  return key.find('.') != std::string::npos || key == "n" || key == "lagrangian";
}

// Pulls "--a.b=v" arguments out of argv before CLI11 sees them.
std::vector<std::string> split_overrides(int argc, char** argv, Options& o) {
  std::vector<std::string> rest;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const auto eq = a.find('=');
    if (a.rfind("--", 0) == 0 && eq != std::string::npos && overridable(a.substr(2, eq - 2)))
      o.overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    else
      rest.push_back(a);
  }
  return rest;
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "JSON configuration file");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "seed for randomized checks");
  app->add_option("--tol", o.tol, "scale applied to check tolerances")->check(CLI::PositiveNumber);
  app->add_option("--threads", o.threads, "worker threads")->check(CLI::Range(1, 1024));
  app->add_flag("--paper-literal-w", o.paper_literal_w, "also report W with the printed integrand");
  app->add_flag("--normalize", o.normalize, "use the normalized flow");
  app->add_option("--lambda-divisor", o.lambda_divisor, "lambda = r / divisor in the normalized flow");
}

RunConfig load(const Options& o) {
  json doc = o.config.empty() ? json::object() : read_config_file(o.config);
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (o.seed) doc["seed"] = *o.seed;
  if (o.tol) doc["tolerances"]["check_tol"] = *o.tol;
  if (!o.out.empty()) doc["output"] = o.out;
  if (o.paper_literal_w) doc["flow"]["paper_literal_w"] = true;
  if (o.normalize) doc["flow"]["normalize"] = true;
  if (o.lambda_divisor) doc["flow"]["lambda_divisor"] = *o.lambda_divisor;
  if (o.tau) doc["state"]["tau"] = *o.tau;
  for (const auto& [k, v] : o.overrides) apply_override(doc, k, v);
  return parse_config(doc);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
}

int cmd_inspect(const Options& o) {
  const RunConfig c = load(o);
  std::vector<double> u;
  if (!o.point.empty())
    u = parse_point(o.point, c.n);
  else if (c.point)
    u = *c.point;
  else
    throw ConfigError("inspect: no point given (use --point or the 'point' key)");
  const json doc = inspect_document(parse(c.lagrangian, c.n), PhasePoint::from_u(u), c.tolerances.eps_reg);
  const std::string text = doc.dump(2) + "\n";
  std::cout << text;
  if (!c.output.empty()) {
    std::filesystem::create_directories(c.output);
    write_file(std::filesystem::path(c.output) / "inspect.json", text);
  }
  return 0;
}

int cmd_check(const Options& o) {
  const RunConfig c = load(o);
  const CheckReport r = run_checks(c);
  std::cout << r.text();
  if (!c.output.empty()) {
    std::filesystem::create_directories(c.output);
    write_file(std::filesystem::path(c.output) / "check.txt", r.text());
    write_file(std::filesystem::path(c.output) / "check.json", r.json().dump(2) + "\n");
  }
  return r.ok() ? 0 : 1;
}

template <class T>
void ten3_components(std::vector<std::pair<std::string, const ScalarField*>>& out, const std::string& name,
                     const Ten3<T>& t) {
  for (int p = 0; p < t.n; ++p)
    for (int q = 0; q < t.n; ++q)
      for (int r = 0; r < t.n; ++r)
        out.emplace_back(name + "_" + std::to_string(p + 1) + std::to_string(q + 1) + std::to_string(r + 1),
                         &t(p, q, r));
}

template <class T>
void ten4_components(std::vector<std::pair<std::string, const ScalarField*>>& out, const std::string& name,
                     const Ten4<T>& t) {
  for (int p = 0; p < t.n; ++p)
    for (int q = 0; q < t.n; ++q)
      for (int r = 0; r < t.n; ++r)
        for (int s = 0; s < t.n; ++s)
          out.emplace_back(name + "_" + std::to_string(p + 1) + std::to_string(q + 1) + std::to_string(r + 1) +
                               std::to_string(s + 1),
                           &t(p, q, r, s));
}

int cmd_grid(const Options& o) {
  const RunConfig c = load(o);
  const FlowState s = build_state(c);
  GridGeometry geo = grid_geometry(s.dm);
  const auto D = geo.connection();
  const auto C = geo.curvature();
  const auto R = geo.ricci();
  const ScalarField lc_scalar = geo.lc_ricci().scalar;
  const ScalarField dV = volume_element(s.dm);

  std::vector<std::pair<std::string, const ScalarField*>> comps;
  for (auto& p : mat_components("gh", s.dm.gh)) comps.push_back(p);
  for (auto& p : mat_components("gv", s.dm.gv)) comps.push_back(p);
  for (auto& p : mat_components("N", s.dm.N)) comps.push_back(p);
  comps.emplace_back("f", &s.f);
  comps.emplace_back("dV", &dV);
  ten3_components(comps, "Lh", D.Lh);
  ten3_components(comps, "Lv", D.Lv);
  ten3_components(comps, "Ch", D.Ch);
  ten3_components(comps, "Cv", D.Cv);
  ten4_components(comps, "R_hhhh", C.hhhh);
  ten4_components(comps, "R_vvhh", C.vvhh);
  ten4_components(comps, "R_hhhv", C.hhhv);
  ten4_components(comps, "R_vvhv", C.vvhv);
  ten4_components(comps, "R_hhvv", C.hhvv);
  ten4_components(comps, "R_vvvv", C.vvvv);
  for (auto& p : mat_components("Ric_hh", R.hh)) comps.push_back(p);
  for (auto& p : mat_components("Ric_hv", R.hv)) comps.push_back(p);
  for (auto& p : mat_components("Ric_vh", R.vh)) comps.push_back(p);
  for (auto& p : mat_components("Ric_vv", R.vv)) comps.push_back(p);
  comps.emplace_back("R", &R.R);
  comps.emplace_back("S", &R.Sv);
  comps.emplace_back("sR", &R.sR);
  comps.emplace_back("sR_lc", &lc_scalar);

  if (c.output.empty()) {
    write_field_csv(std::cout, comps);
    return 0;
  }
  const std::filesystem::path dir(c.output);
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "grid.csv");
  if (!os) throw Error("cannot write " + (dir / "grid.csv").string());
  write_field_csv(os, comps);
  json names = json::array();
  for (const auto& p : comps) names.push_back(p.first);
  const json meta = {{"n", c.n},
                     {"lagrangian", c.state.gh ? json() : json(c.lagrangian)},
                     {"center", c.domain.center},
                     {"period", c.domain.period},
                     {"resolution", c.domain.res},
                     {"topology", "torus"},
                     {"components", names},
                     {"index_order",
                      {{"N", "N_ai = N^a_i"},
                       {"Lh", "Lh_ijk = L^i_jk"},
                       {"Lv", "Lv_abk = L^a_bk"},
                       {"Ch", "Ch_ijc = C^i_jc"},
                       {"Cv", "Cv_abc = C^a_bc"},
                       {"R_hhhh", "R^i_hjk"},
                       {"R_vvhh", "R^a_bjk"},
                       {"R_hhhv", "R^i_jka"},
                       {"R_vvhv", "R^c_bka"},
                       {"R_hhvv", "R^i_jbc"},
                       {"R_vvvv", "R^a_bcd"}}},
                     {"node_order", "row-major, last axis fastest"}};
  write_file(dir / "grid.json", meta.dump(2) + "\n");
  std::cout << "wrote " << (dir / "grid.csv").string() << " (" << comps.size() << " components, "
            << c.domain.size() << " nodes)\n";
  return 0;
}

int cmd_flow(const Options& o) {
  const RunConfig c = load(o);
  const FlowState s = build_state(c);
  const FlowResult r = run(c.flow, s, c.output);
  if (r.records.empty()) throw Error("flow: no records");
  std::cout << to_json(r.records.back()).dump(2) << "\n";
  return 0;
}

int cmd_thermo(const Options& o) {
  const RunConfig c = load(o);
  FlowState s = build_state(c);
  normalize_f(s);
  const Comparison cmp = compare_connections(s, 1e-8 * c.tolerances.check_tol, c.flow.paper_literal_w);
  const json doc = {{"tau", round_sig(s.tau)},
                    {"dconn", to_json(cmp.dconn)},
                    {"lc", to_json(cmp.lc)},
                    {"difference", round_sig(cmp.difference)},
                    {"verdict", cmp.verdict}};
  std::cout << doc.dump(2) << "\n";
  if (!c.output.empty()) {
    std::filesystem::create_directories(c.output);
    write_file(std::filesystem::path(c.output) / "thermo.json", doc.dump(2) + "\n");
  }
  return 0;
}

int cmd_parse(const Options& o) {
  const RunConfig c = load(o);
  const Expr e = parse(o.expression, c.n);
  const json doc = {{"source", o.expression}, {"n", c.n}, {"canonical", print(e)}};
  std::cout << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Lagrange-Finsler geometry, nonholonomic Ricci flow and entropy functionals", "ffr"};
  app.require_subcommand(1);
  add_common(&app, o);
  auto* inspect = app.add_subcommand("inspect", "all point-wise objects at one phase point, as JSON");
  auto* check = app.add_subcommand("check", "invariant suite at seeded random points");
  auto* grid = app.add_subcommand("grid", "sample the geometry onto the grid and dump fields as CSV");
  auto* flow = app.add_subcommand("flow", "integrate the flow; print the final record");
  auto* thermo = app.add_subcommand("thermo", "entropy and thermodynamic report for both connections");
  auto* parse_cmd = app.add_subcommand("parse", "parse an expression and print its canonical form");
  for (auto* s : {inspect, check, grid, flow, thermo, parse_cmd}) add_common(s, o);
  inspect->add_option("--point", o.point, "comma-separated x1,..,xn,y1,..,yn");
  thermo->add_option("--tau", o.tau, "temperature parameter tau")->check(CLI::PositiveNumber);
  parse_cmd->add_option("expression", o.expression, "expression in x1..xn, y1..yn")->required();

  std::vector<std::string> args;
  try {
    args = split_overrides(argc, argv, o);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ffr: usage error: " << e.what() << "\n" << "run 'ffr --help' for usage\n";
    return 2;
  }

  try {
    if (o.threads) thread_count() = *o.threads;
    if (*inspect) return cmd_inspect(o);
    if (*check) return cmd_check(o);
    if (*grid) return cmd_grid(o);
    if (*flow) return cmd_flow(o);
    if (*thermo) return cmd_thermo(o);
    if (*parse_cmd) return cmd_parse(o);
  } catch (const ConfigError& e) {
    std::cerr << "ffr: config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "ffr: parse error: " << e.what() << "\n";
    return 2;
  } catch (const RegularityError& e) {
    std::cerr << "ffr: regularity failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ffr: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
