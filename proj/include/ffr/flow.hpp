#pragma once

// Ricci flow of the d-metric blocks on a periodic grid, for the canonical
// d-connection and for the Levi-Civita connection, with the N-connection held
// fixed.  Also the f equation, volume normalization, frame evolution and
// breather classification.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffr/entropy.hpp"
#include "ffr/error.hpp"
#include "ffr/fields.hpp"
#include "ffr/format.hpp"

namespace ffr {

enum class Coupling { off, F, W };
enum class Integrator { euler, rk4 };

inline std::string to_string(Coupling c) { return c == Coupling::off ? "off" : c == Coupling::F ? "F" : "W"; }
inline std::string to_string(Integrator i) { return i == Integrator::euler ? "euler" : "rk4"; }
inline Coupling parse_coupling(const std::string& s) {
  if (s == "off") return Coupling::off;
  if (s == "F") return Coupling::F;
  if (s == "W") return Coupling::W;
  throw ConfigError("unknown f coupling '" + s + "' (expected off, F or W)");
}
inline Integrator parse_integrator(const std::string& s) {
  if (s == "euler") return Integrator::euler;
  if (s == "rk4") return Integrator::rk4;
  throw ConfigError("unknown integrator '" + s + "' (expected euler or rk4)");
}

struct FlowConfig {
  Connection connection = Connection::dconn;
  bool normalize = false;
  double lambda_divisor = 5;
  double dt = 0;  // 0 selects stable_dt of the initial state
  int steps = 1;
  int stride = 1;
  Coupling coupling = Coupling::off;
  Integrator integrator = Integrator::euler;
  double eps_reg = kDefaultEpsReg;
  bool paper_literal_w = false;
  bool snapshots = true;

  void validate() const {
    if (!(dt >= 0) || !std::isfinite(dt)) throw ConfigError("flow: dt must be non-negative");
    if (steps < 1) throw ConfigError("flow: steps must be at least 1");
    if (stride < 1) throw ConfigError("flow: stride must be at least 1");
    if (!(lambda_divisor != 0) || !std::isfinite(lambda_divisor))
      throw ConfigError("flow: lambda divisor must be finite and nonzero");
    if (!(eps_reg >= 0)) throw ConfigError("flow: eps_reg must be non-negative");
  }
};

struct TimeSeriesRecord {
  double chi = 0, tau = 0;
  double F = 0, W = 0, E_avg = 0, S = 0, sigma = 0;
  double volume = 0;
  double mixed_residual = 0;
  double min_det_gh = 0;
  double asym_norm = 0;
  // Not part of the CSV: monotonicity right-hand sides at this record.
  double rhs_F = 0, rhs_W = 0;
};

inline const char* kTimeSeriesHeader =
    "chi,tau,F,W,E_avg,S_entropy,sigma,volume,ricci_mixed_residual,min_det_gh,asym_norm";

inline std::string csv_row(const TimeSeriesRecord& r) {
  std::string s;
  for (double v : {r.chi, r.tau, r.F, r.W, r.E_avg, r.S, r.sigma, r.volume, r.mixed_residual, r.min_det_gh,
                   r.asym_norm}) {
    if (!s.empty()) s += ',';
    s += fmt_num(v);
  }
  return s;
}

inline nlohmann::json to_json(const TimeSeriesRecord& r) {
  return {{"chi", round_sig(r.chi)},
          {"tau", round_sig(r.tau)},
          {"F", round_sig(r.F)},
          {"W", round_sig(r.W)},
          {"E_avg", round_sig(r.E_avg)},
          {"S_entropy", round_sig(r.S)},
          {"sigma", round_sig(r.sigma)},
          {"volume", round_sig(r.volume)},
          {"ricci_mixed_residual", round_sig(r.mixed_residual)},
          {"min_det_gh", round_sig(r.min_det_gh)},
          {"asym_norm", round_sig(r.asym_norm)}};
}

// d g_h / d chi and d g_v / d chi with diagnostics of the step.
struct MetricRate {
  Mat<ScalarField> gh, gv;
  double lambda = 0;
  double mixed_residual = 0;  // max |R_ia|, |R_ai| (dconn) or the off-diagonal equation residual (lc)
  double asym_norm = 0;       // max |R_ij - R_ji|, |R_ab - R_ba| before symmetrization
};

namespace flow_detail {

inline double max_abs(const Mat<ScalarField>& m) {
  double r = 0;
  for (const auto& f : m.v) r = std::max(r, f.max_abs());
  return r;
}

inline double max_asym(const Mat<ScalarField>& m) {
  double r = 0;
  for (int i = 0; i < m.rows; ++i)
    for (int j = i + 1; j < m.cols; ++j) r = std::max(r, (m(i, j) - m(j, i)).max_abs());
  return r;
}

inline DMetricField advance(const DMetricField& dm, double dt, const MetricRate& k) {
  DMetricField out = dm;
  for (int i = 0; i < dm.n; ++i)
    for (int j = 0; j < dm.n; ++j) {
      axpy(out.gh(i, j), dt, k.gh(i, j));
      axpy(out.gv(i, j), dt, k.gv(i, j));
    }
  return out;
}

}  // namespace flow_detail

// r = int sR dV / int dV for the chosen connection; lambda = r / divisor.
inline double mean_scalar_curvature(const DMetricField& dm, Connection conn) {
  GridGeometry geo = grid_geometry(dm);
  const ScalarField dV = volume_element(dm);
  const ScalarField& sR = conn == Connection::dconn ? geo.ricci().sR : geo.lc_ricci().scalar;
  return integrate(sR, dV) / integrate(dV);
}

inline double lambda_normalization(const FlowState& s, Connection conn, bool normalize, double divisor = 5) {
  if (!normalize) return 0;
  return mean_scalar_curvature(s.dm, conn) / divisor;
}

// Canonical d-connection: d g_ij = -2 (R_(ij) - lambda g_ij), same for g_ab,
// using the symmetrized adapted Ricci blocks.
inline MetricRate rate_dconn(const DMetricField& dm, double lambda) {
  GridGeometry geo = grid_geometry(dm);
  const auto& Rc = geo.ricci();
  const int n = dm.n;
  MetricRate k{Mat<ScalarField>(n, n, geo.zero()), Mat<ScalarField>(n, n, geo.zero()), lambda, 0, 0};
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      ScalarField h = (Rc.hh(i, j) + Rc.hh(j, i)) * -1.0;
      ScalarField v = (Rc.vv(i, j) + Rc.vv(j, i)) * -1.0;
      if (lambda != 0) {
        axpy(h, 2 * lambda, dm.gh(i, j));
        axpy(v, 2 * lambda, dm.gv(i, j));
      }
      k.gh(j, i) = h;
      k.gh(i, j) = std::move(h);
      k.gv(j, i) = v;
      k.gv(i, j) = std::move(v);
    }
  k.mixed_residual = std::max(flow_detail::max_abs(Rc.hv), flow_detail::max_abs(Rc.vh));
  k.asym_norm = std::max(flow_detail::max_asym(Rc.hh), flow_detail::max_asym(Rc.vv));
  return k;
}

// Levi-Civita connection with coordinate Ricci R_(alpha beta) of the full
// metric and fixed N:
//   d g_ij = 2 [N^a_i N^b_j (R_ab - lambda g_ab) - R_ij + lambda g_ij]
//   d g_ab = -2 (R_ab - lambda g_ab)
// The off-diagonal equation d(N^e_i g_ae) = -2 R_ia + 2 lambda N^e_i g_ae is
// not imposed; its residual is reported.
inline MetricRate rate_lc(const DMetricField& dm, double lambda) {
  GridGeometry geo = grid_geometry(dm);
  const auto& Ric = geo.lc_ricci().Ric;
  const int n = dm.n;
  const ScalarField& z = geo.zero();
  MetricRate k{Mat<ScalarField>(n, n, z), Mat<ScalarField>(n, n, z), lambda, 0, 0};
  Mat<ScalarField> Pv(n, n, z);  // R_ab - lambda g_ab
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      Pv(a, b) = Ric(n + a, n + b);
      if (lambda != 0) axpy(Pv(a, b), -lambda, dm.gv(a, b));
      k.gv(a, b) = Pv(a, b) * -2.0;
    }
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      ScalarField h = Ric(i, j) * -2.0;
      if (lambda != 0) axpy(h, 2 * lambda, dm.gh(i, j));
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          ScalarField t = dm.N(a, i) * dm.N(b, j);
          add_prod(h, 2.0, t, Pv(a, b));
        }
      k.gh(j, i) = h;
      k.gh(i, j) = std::move(h);
    }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a) {
      ScalarField r = Ric(i, n + a) * 2.0;
      for (int e = 0; e < n; ++e) {
        add_prod(r, 1.0, dm.N(e, i), k.gv(a, e));
        if (lambda != 0) {
          ScalarField t = dm.N(e, i) * dm.gv(a, e);
          axpy(r, -2 * lambda, t);
        }
      }
      k.mixed_residual = std::max(k.mixed_residual, r.max_abs());
    }
  return k;
}

inline MetricRate metric_rate(const DMetricField& dm, Connection conn, double lambda) {
  return conn == Connection::dconn ? rate_dconn(dm, lambda) : rate_lc(dm, lambda);
}

// Aborts on non-finite or degenerate blocks, naming chi and the node.
inline void check_state(const DMetricField& dm, double chi, double eps_reg) {
  for (const auto* blk : {&dm.gh, &dm.gv})
    for (const auto& f : blk->v)
      for (std::size_t i = 0; i < f.size(); ++i)
        if (!std::isfinite(f[i]))
          throw NumericalError("non-finite metric at chi = " + fmt_num(chi) + ", node " +
                               describe(f.domain()->point(i)));
  try {
    check_regular_field(dm, eps_reg);
  } catch (const RegularityError& e) {
    throw RegularityError("at chi = " + fmt_num(chi) + ": " + e.what());
  }
}

namespace flow_detail {

// lam gives lambda for a stage state (constant, or r / divisor).
inline FlowState step_metric(const FlowState& s, double dt, Connection conn,
                             const std::function<double(const DMetricField&)>& lam, Integrator integ,
                             MetricRate* info) {
  FlowState out = s;
  MetricRate k1 = metric_rate(s.dm, conn, lam(s.dm));
  if (integ == Integrator::euler) {
    out.dm = advance(s.dm, dt, k1);
  } else {
    const DMetricField d2 = advance(s.dm, dt / 2, k1);
    const MetricRate k2 = metric_rate(d2, conn, lam(d2));
    const DMetricField d3 = advance(s.dm, dt / 2, k2);
    const MetricRate k3 = metric_rate(d3, conn, lam(d3));
    const DMetricField d4 = advance(s.dm, dt, k3);
    const MetricRate k4 = metric_rate(d4, conn, lam(d4));
    out.dm = s.dm;
    for (std::size_t t = 0; t < out.dm.gh.v.size(); ++t) {
      for (auto [blk, K1, K2, K3, K4] : {std::tuple{&out.dm.gh, &k1.gh, &k2.gh, &k3.gh, &k4.gh},
                                         std::tuple{&out.dm.gv, &k1.gv, &k2.gv, &k3.gv, &k4.gv}}) {
        ScalarField& g = blk->v[t];
        axpy(g, dt / 6, K1->v[t]);
        axpy(g, dt / 3, K2->v[t]);
        axpy(g, dt / 3, K3->v[t]);
        axpy(g, dt / 6, K4->v[t]);
      }
    }
  }
  out.chi = s.chi + dt;
  if (info) *info = std::move(k1);
  return out;
}

}  // namespace flow_detail

inline FlowState step_dconn(const FlowState& s, double dt, double lambda, Integrator integ = Integrator::euler,
                            MetricRate* info = nullptr) {
  return flow_detail::step_metric(s, dt, Connection::dconn, [lambda](const DMetricField&) { return lambda; }, integ,
                                  info);
}

inline FlowState step_lc(const FlowState& s, double dt, double lambda, Integrator integ = Integrator::euler,
                         MetricRate* info = nullptr) {
  return flow_detail::step_metric(s, dt, Connection::lc, [lambda](const DMetricField&) { return lambda; }, integ,
                                  info);
}

// d f / d chi = -Lap f + |Df|^2 - sR (+ n / tau in W mode).
inline ScalarField f_rate(const FlowState& s, Connection conn, Coupling mode) {
  const MeasureParts P = measure_parts(s, conn);
  ScalarField r = P.grad2() - P.lap - P.sR;
  if (mode == Coupling::W) {
    if (!(s.tau > 0)) throw NumericalError("f equation: tau reached " + fmt_num(s.tau) + " at chi = " + fmt_num(s.chi));
    r += s.n() / s.tau;
  }
  return r;
}

// One explicit step of the f equation forward in chi.  This is a backward
// heat equation and only stable for very short times; run() integrates it
// backward from the final time instead.
inline FlowState step_f(const FlowState& s, double dt, Coupling mode, Connection conn = Connection::dconn) {
  FlowState out = s;
  if (mode == Coupling::off) return out;
  axpy(out.f, dt, f_rate(s, conn, mode));
  if (mode == Coupling::W) out.tau = s.tau - dt;
  return out;
}

// f(chi - dt) from f(chi) on the metric at chi (a forward heat step).
inline ScalarField step_f_backward(const FlowState& s, double dt, Coupling mode, Connection conn) {
  ScalarField f = s.f;
  axpy(f, -dt, f_rate(s, conn, mode));
  if (!f.finite()) throw NumericalError("non-finite f at chi = " + fmt_num(s.chi - dt));
  return f;
}

// 0.2 h^2 / max |g^-1| over nodes and components.
inline double stable_dt(const FlowState& s, Connection conn = Connection::dconn) {
  const GridDomain& d = *s.domain();
  double h = INFINITY;
  for (int a = 0; a < d.axes(); ++a) h = std::min(h, d.h(a));
  GridGeometry geo = grid_geometry(s.dm);
  double gmax = 0;
  if (conn == Connection::dconn) {
    gmax = std::max(flow_detail::max_abs(geo.ghi()), flow_detail::max_abs(geo.gvi()));
  } else {
    gmax = flow_detail::max_abs(geo.coordinate_metric_inverse());
  }
  return 0.2 * h * h / gmax;
}

inline double min_abs_det(const Mat<ScalarField>& g) {
  const ScalarField d = det(g);
  double m = INFINITY;
  for (double v : d.values()) m = std::min(m, std::fabs(v));
  return m;
}

// Functionals and diagnostics of one state.  W and the thermodynamic values
// use f shifted to unit measure; F and its monotonicity integrand use f as is.
inline TimeSeriesRecord evaluate_record(const FlowState& s, const FlowConfig& cfg, const MetricRate& rate) {
  TimeSeriesRecord r;
  r.chi = s.chi;
  r.tau = s.tau;
  const MeasureParts P = measure_parts(s, cfg.connection);
  r.F = f_functional(P, s.f);
  r.rhs_F = monotonicity_rhs_F(P, s.f);
  r.volume = integrate(P.dV);
  r.mixed_residual = rate.mixed_residual;
  r.asym_norm = rate.asym_norm;
  r.min_det_gh = min_abs_det(s.dm.gh);
  if (s.tau > 0) {
    FlowState t = s;
    normalize_f(t);
    const ThermoReport th = thermodynamics(P, t, false);
    r.W = th.W;
    r.E_avg = th.E_avg;
    r.S = th.S;
    r.sigma = th.sigma;
    r.rhs_W = monotonicity_rhs_W(P, t);
  } else {
    r.W = r.E_avg = r.S = r.sigma = r.rhs_W = NAN;
  }
  return r;
}

struct FlowResult {
  std::vector<TimeSeriesRecord> records;
  FlowState final_state;
  double dt = 0;
};

inline void write_snapshot(const std::filesystem::path& dir, int index, const FlowState& s) {
  char name[32];
  std::snprintf(name, sizeof name, "snap_%06d", index);
  std::vector<std::pair<std::string, const ScalarField*>> comps;
  for (auto& c : mat_components("gh", s.dm.gh)) comps.push_back(c);
  for (auto& c : mat_components("gv", s.dm.gv)) comps.push_back(c);
  for (auto& c : mat_components("N", s.dm.N)) comps.push_back(c);
  comps.emplace_back("f", &s.f);
  std::ofstream os(dir / (std::string(name) + ".csv"));
  write_field_csv(os, comps);
  const GridDomain& d = *s.domain();
  nlohmann::json meta = {{"chi", round_sig(s.chi)},
                         {"tau", round_sig(s.tau)},
                         {"n", d.n},
                         {"center", d.center},
                         {"period", d.period},
                         {"resolution", d.res},
                         {"topology", "torus"},
                         {"fields", "gh_ij = g_ij, gv_ab = g_ab, N_ai = N^a_i, f"},
                         {"node_order", "row-major, last axis fastest"}};
  std::ofstream(dir / (std::string(name) + ".json")) << meta.dump(2) << '\n';
}

// Integrates the flow.  Without coupling, f is carried along unchanged.  With
// F or W coupling the metric is integrated forward to chi_T with
// checkpoints, the state's f is taken as final data at chi_T and the f
// equation is integrated backward, where it is well posed.
inline FlowResult run(const FlowConfig& cfg, const FlowState& init, const std::string& out_dir = {}) {
  cfg.validate();
  FlowResult res;
  const double dt = cfg.dt > 0 ? cfg.dt : stable_dt(init, cfg.connection);
  res.dt = dt;
  if (!(init.tau - cfg.steps * dt > 0))
    throw ConfigError("flow: tau must stay positive over the run (tau0 = " + fmt_num(init.tau) +
                      ", steps*dt = " + fmt_num(cfg.steps * dt) + ")");
  check_state(init.dm, init.chi, cfg.eps_reg);

  std::filesystem::path dir;
  std::ofstream ts;
  if (!out_dir.empty()) {
    dir = out_dir;
    std::filesystem::create_directories(dir);
    ts.open(dir / "timeseries.csv");
    if (!ts) throw Error("cannot write " + (dir / "timeseries.csv").string());
    nlohmann::json meta = {{"connection", to_string(cfg.connection)},
                           {"normalize", cfg.normalize},
                           {"lambda_divisor", cfg.lambda_divisor},
                           {"dt", round_sig(dt)},
                           {"steps", cfg.steps},
                           {"stride", cfg.stride},
                           {"coupling", to_string(cfg.coupling)},
                           {"integrator", to_string(cfg.integrator)},
                           {"n_connection", "fixed"},
                           {"topology", "torus"}};
    std::ofstream(dir / "run.json") << meta.dump(2) << '\n';
  }

  auto advance = [&](const FlowState& s, MetricRate* info) {
    FlowState next = flow_detail::step_metric(
        s, dt, cfg.connection,
        [&](const DMetricField& dm) {
          return cfg.normalize ? mean_scalar_curvature(dm, cfg.connection) / cfg.lambda_divisor : 0.0;
        },
        cfg.integrator, info);
    next.tau = s.tau - dt;
    check_state(next.dm, next.chi, cfg.eps_reg);
    return next;
  };
  auto diagnostics = [&](const FlowState& s) {
    const double lam = cfg.normalize ? mean_scalar_curvature(s.dm, cfg.connection) / cfg.lambda_divisor : 0.0;
    return metric_rate(s.dm, cfg.connection, lam);
  };
  auto emit = [&](int k, const FlowState& s, const MetricRate& rate) {
    res.records.push_back(evaluate_record(s, cfg, rate));
    if (!dir.empty() && cfg.snapshots) write_snapshot(dir, k / cfg.stride, s);
  };

  if (cfg.coupling == Coupling::off) {
    FlowState s = init;
    for (int k = 0; k <= cfg.steps; ++k) {
      MetricRate rate;
      FlowState next;
      if (k < cfg.steps) next = advance(s, &rate);
      if (k % cfg.stride == 0) emit(k, s, k < cfg.steps ? rate : diagnostics(s));
      if (k < cfg.steps) s = std::move(next);
    }
    res.final_state = s;
  } else {
    // Forward pass keeping every K-th metric.
    const int K = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.steps)))));
    std::vector<FlowState> checkpoints;
    FlowState s = init;
    for (int k = 0; k <= cfg.steps; ++k) {
      if (k % K == 0) checkpoints.push_back(s);
      if (k < cfg.steps) s = advance(s, nullptr);
    }
    FlowState last = s;
    last.f = init.f;
    if (cfg.coupling == Coupling::W) normalize_f(last);
    ScalarField f = last.f;
    std::vector<TimeSeriesRecord> recs;
    const int nseg = static_cast<int>(checkpoints.size());
    for (int seg = nseg - 1; seg >= 0; --seg) {
      // Recompute steps k0..k1 from the checkpoint; k1 itself was handled by
      // the following segment unless this is the last one.
      const int k0 = seg * K, k1 = std::min(cfg.steps, k0 + K);
      const int top = seg == nseg - 1 ? k1 : k1 - 1;
      std::vector<FlowState> states{checkpoints[seg]};
      std::vector<MetricRate> rates;
      for (int k = k0; k < k1; ++k) {
        MetricRate rate;
        FlowState next = advance(states.back(), &rate);
        states.push_back(std::move(next));
        rates.push_back(std::move(rate));
      }
      if (top == cfg.steps) rates.push_back(diagnostics(states.back()));
      for (int k = top; k >= k0; --k) {
        FlowState& st = states[k - k0];
        st.f = f;
        if (k % cfg.stride == 0) {
          recs.push_back(evaluate_record(st, cfg, rates[k - k0]));
          if (!dir.empty() && cfg.snapshots) write_snapshot(dir, k / cfg.stride, st);
        }
        // f at step k - 1 from f at step k on the metric at step k.
        if (k > 0) f = step_f_backward(st, dt, cfg.coupling, cfg.connection);
      }
    }
    std::reverse(recs.begin(), recs.end());
    res.records = std::move(recs);
    res.final_state = last;
  }
  if (ts) {
    ts << kTimeSeriesHeader << '\n';
    for (const auto& r : res.records) ts << csv_row(r) << '\n';
  }
  return res;
}

// Vielbein evolution d E_alpha^abar / d chi = E_alpha^gbar (R g^-1)_gbar^abar
// with the coordinate Ricci tensor of the chosen connection.  E has rows
// alpha (frame) and columns abar (coordinate), 2n x 2n.
inline Mat<ScalarField> coordinate_ricci(const DMetricField& dm, Connection conn) {
  GridGeometry geo = grid_geometry(dm);
  const int n = dm.n, m = 2 * n;
  if (conn == Connection::lc) return entropy_detail::sym(geo.lc_ricci().Ric);
  // Adapted blocks R_(ij), R_(ab) pulled back by the coframe e^a = dy^a + N^a_i dx^i.
  const auto& Rc = geo.ricci();
  const Mat<ScalarField> Rh = entropy_detail::sym(Rc.hh), Rv = entropy_detail::sym(Rc.vv);
  Mat<ScalarField> out(m, m, geo.zero());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      ScalarField t = Rh(i, j);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          ScalarField p = dm.N(a, i) * dm.N(b, j);
          add_prod(t, 1.0, p, Rv(a, b));
        }
      out(i, j) = std::move(t);
    }
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < n; ++b) {
      ScalarField t = geo.zero();
      for (int a = 0; a < n; ++a) add_prod(t, 1.0, dm.N(a, i), Rv(a, b));
      out(n + b, i) = t;
      out(i, n + b) = std::move(t);
    }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out(n + a, n + b) = Rv(a, b);
  return out;
}

inline Mat<ScalarField> frame_evolution_step(const Mat<ScalarField>& E, const FlowState& s, double dt,
                                             Connection conn) {
  GridGeometry geo = grid_geometry(s.dm);
  const int m = 2 * s.n();
  if (E.rows != m || E.cols != m) throw Error("frame_evolution_step: frames must be 2n x 2n");
  const Mat<ScalarField> R = coordinate_ricci(s.dm, conn);
  const Mat<ScalarField> Gi = geo.coordinate_metric_inverse();
  Mat<ScalarField> Rg(m, m, geo.zero());  // (R g^-1)_g^a
  for (int g = 0; g < m; ++g)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) add_prod(Rg(g, a), 1.0, R(g, b), Gi(b, a));
  Mat<ScalarField> out = E;
  for (int al = 0; al < m; ++al)
    for (int a = 0; a < m; ++a) {
      ScalarField d = geo.zero();
      for (int g = 0; g < m; ++g) add_prod(d, 1.0, E(al, g), Rg(g, a));
      axpy(out(al, a), dt, d);
    }
  return out;
}

// Coordinate metric from frames: g^{ab} = E_alpha^a E_beta^b eta^{alpha beta}
// with eta diagonal, then inverted.
inline Mat<ScalarField> metric_from_frames(const Mat<ScalarField>& E, const std::vector<double>& eta) {
  const int m = E.rows;
  Mat<ScalarField> Gi(m, m, zero_like(E(0, 0)));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int al = 0; al < m; ++al) add_prod(Gi(a, b), 1.0 / eta[al], E(al, a), E(al, b));
  return inverse(Gi, det(Gi));
}

struct BreatherBlock {
  std::string label;  // steady, shrinking, expanding or none
  double alpha = 0;
  double deviation = 0;
};
struct BreatherResult {
  BreatherBlock h, v;
};

// Finds alpha > 0 minimizing max over nodes of |alpha g_a - g_b| / |g_b|
// (Frobenius norms per node) and labels each block by alpha against 1.
inline BreatherBlock breather_block(const Mat<ScalarField>& ga, const Mat<ScalarField>& gb, double tol) {
  const std::size_t N = ga(0, 0).size();
  auto deviation = [&](double alpha) {
    double worst = 0;
    for (std::size_t i = 0; i < N; ++i) {
      double num = 0, den = 0;
      for (std::size_t t = 0; t < ga.v.size(); ++t) {
        const double d = alpha * ga.v[t][i] - gb.v[t][i];
        num += d * d;
        den += gb.v[t][i] * gb.v[t][i];
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
    return worst;
  };
  // Least-squares start, then golden-section refinement of the convex objective.
  long double ab = 0, aa = 0;
  for (std::size_t t = 0; t < ga.v.size(); ++t)
    for (std::size_t i = 0; i < N; ++i) {
      ab += static_cast<long double>(ga.v[t][i]) * gb.v[t][i];
      aa += static_cast<long double>(ga.v[t][i]) * ga.v[t][i];
    }
  const double a0 = aa > 0 ? static_cast<double>(ab / aa) : 1.0;
  double lo = 0.5 * std::fabs(a0), hi = 2 * std::fabs(a0) + 1e-300;
  const double phi = (std::sqrt(5.0) - 1) / 2;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = deviation(x1), f2 = deviation(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = deviation(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = deviation(x2);
    }
  }
  BreatherBlock b;
  b.alpha = 0.5 * (lo + hi);
  b.deviation = deviation(b.alpha);
  if (deviation(1.0) <= b.deviation + 1e-15) {
    b.alpha = 1.0;
    b.deviation = deviation(1.0);
  }
  if (!(b.deviation < tol))
    b.label = "none";
  else if (std::fabs(b.alpha - 1) <= tol)
    b.label = "steady";
  else
    b.label = b.alpha < 1 ? "shrinking" : "expanding";
  return b;
}

inline BreatherResult breather_classify(const FlowState& a, const FlowState& b, double tol) {
  return {breather_block(a.dm.gh, b.dm.gh, tol), breather_block(a.dm.gv, b.dm.gv, tol)};
}

}  // namespace ffr
