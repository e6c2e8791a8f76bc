#pragma once

// Perelman-type functionals on grid states, their first variation and
// monotonicity integrands, and the thermodynamic triple (<E>, S, sigma) for
// the canonical d-connection and the Levi-Civita connection.
//
// n is the base dimension throughout, so the phase space has dimension 2n and
// the measure is mu = (4 pi tau)^-n e^-f.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffr/error.hpp"
#include "ffr/fields.hpp"
#include "ffr/format.hpp"

namespace ffr {

enum class Connection { dconn, lc };

inline std::string to_string(Connection c) { return c == Connection::dconn ? "dconn" : "lc"; }
inline Connection parse_connection(const std::string& s) {
  if (s == "dconn") return Connection::dconn;
  if (s == "lc") return Connection::lc;
  throw ConfigError("unknown connection '" + s + "' (expected dconn or lc)");
}

// Evolving d-metric blocks, the fixed N, the potential f and the two flow
// parameters with d tau / d chi = -1.
struct FlowState {
  DMetricField dm;
  ScalarField f;
  double chi = 0;
  double tau = 1;

  const DomainPtr& domain() const { return f.domain(); }
  int n() const { return dm.n; }
};

inline constexpr double kPi = 3.14159265358979323846;

struct MeasureState {
  ScalarField mu;
  double tau;
  double residual;  // |int mu dV - 1|
};

inline MeasureState measure(const FlowState& s) {
  if (!(s.tau > 0)) throw Error("measure: tau must be positive, got " + fmt_num(s.tau));
  const double c = std::pow(4 * kPi * s.tau, -s.n());
  ScalarField mu = s.f.map([c](double v) { return c * std::exp(-v); });
  const double total = integrate(mu, volume_element(s.dm));
  return {std::move(mu), s.tau, std::fabs(total - 1)};
}

// Shifts f so that int (4 pi tau)^-n e^-f dV = 1; returns the shift.
inline double normalize_f(FlowState& s) {
  if (!(s.tau > 0)) throw Error("normalize_f: tau must be positive, got " + fmt_num(s.tau));
  const ScalarField dV = volume_element(s.dm);
  // Factor out e^-min f so the exponentials stay in range.
  const double fmin = s.f.min();
  const ScalarField e = s.f.map([fmin](double v) { return std::exp(fmin - v); });
  const double shift = std::log(integrate(e, dV)) - fmin - s.n() * std::log(4 * kPi * s.tau);
  s.f += shift;
  return shift;
}

// Pointwise ingredients of every functional for one connection.  Block lists
// hold {h, v} for the d-connection and the single coordinate block for the
// Levi-Civita connection; Ricci and Hessian blocks are symmetrized.
struct MeasureParts {
  Connection conn;
  int n = 0;
  ScalarField dV, sR, grad_h, grad_v, lap;
  std::vector<Mat<ScalarField>> ric, hess, g, gi;

  ScalarField grad2() const { return grad_h + grad_v; }
};

namespace entropy_detail {

inline Mat<ScalarField> sym(const Mat<ScalarField>& m) {
  Mat<ScalarField> r = m;
  for (int i = 0; i < m.rows; ++i)
    for (int j = i + 1; j < m.cols; ++j) {
      ScalarField s = (m(i, j) + m(j, i)) * 0.5;
      r(j, i) = s;
      r(i, j) = std::move(s);
    }
  return r;
}

// g^ik g^jl A_ij B_kl
inline ScalarField contract(const Mat<ScalarField>& gi, const Mat<ScalarField>& A, const Mat<ScalarField>& B) {
  const int m = gi.rows;
  ScalarField acc = zero_like(A(0, 0));
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < m; ++l) {
      ScalarField up = zero_like(acc);  // (g^-1 A g^-1)^kl
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          ScalarField t = gi(i, k) * gi(j, l);
          add_prod(up, 1.0, t, A(i, j));
        }
      add_prod(acc, 1.0, up, B(k, l));
    }
  return acc;
}

inline ScalarField trace(const Mat<ScalarField>& gi, const Mat<ScalarField>& A) {
  ScalarField acc = zero_like(A(0, 0));
  for (int i = 0; i < gi.rows; ++i)
    for (int j = 0; j < gi.cols; ++j) add_prod(acc, 1.0, gi(i, j), A(i, j));
  return acc;
}

}  // namespace entropy_detail

inline MeasureParts measure_parts(const DMetricField& dm, const ScalarField& f, Connection conn) {
  using namespace entropy_detail;
  const int n = dm.n;
  GridGeometry geo = grid_geometry(dm);
  MeasureParts P;
  P.conn = conn;
  P.n = n;
  P.dV = volume_element(dm);
  const ScalarField z = zero_like(f);
  if (conn == Connection::dconn) {
    const auto& D = geo.connection();
    const auto& Rc = geo.ricci();
    std::vector<ScalarField> dh, dv;
    geo.grad(f, dh, dv);
    Mat<ScalarField> Hh(n, n, z), Hv(n, n, z);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) {
        // D_k D_j f = e_k e_j f - L^i_jk e_i f, and the v analogue with C^a_bc.
        ScalarField h = geo.eh(dh[j], k), v = geo.ev(dv[j], k);
        for (int i = 0; i < n; ++i) {
          add_prod(h, -1.0, D.Lh(i, j, k), dh[i]);
          add_prod(v, -1.0, D.Cv(i, j, k), dv[i]);
        }
        Hh(k, j) = std::move(h);
        Hv(k, j) = std::move(v);
      }
    P.sR = Rc.sR;
    P.g = {dm.gh, dm.gv};
    P.gi = {geo.ghi(), geo.gvi()};
    P.ric = {sym(Rc.hh), sym(Rc.vv)};
    P.hess = {sym(Hh), sym(Hv)};
    P.grad_h = z;
    P.grad_v = z;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        ScalarField th = geo.ghi()(i, j) * dh[i], tv = geo.gvi()(i, j) * dv[i];
        add_prod(P.grad_h, 1.0, th, dh[j]);
        add_prod(P.grad_v, 1.0, tv, dv[j]);
      }
    P.lap = trace(P.gi[0], P.hess[0]) + trace(P.gi[1], P.hess[1]);
  } else {
    const int m = 2 * n;
    const auto& Gam = geo.levi_civita();
    const auto& LR = geo.lc_ricci();
    const Mat<ScalarField> G = geo.coordinate_metric();
    const Mat<ScalarField> Gi = geo.coordinate_metric_inverse();
    std::vector<ScalarField> df;
    for (int a = 0; a < m; ++a) df.push_back(geo.coord(f, a));
    Mat<ScalarField> H(m, m, z);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) {
        ScalarField h = (geo.coord(df[b], a) + geo.coord(df[a], b)) * 0.5;
        for (int c = 0; c < m; ++c) add_prod(h, -1.0, Gam(c, a, b), df[c]);
        H(b, a) = h;
        H(a, b) = std::move(h);
      }
    P.sR = LR.scalar;
    P.g = {G};
    P.gi = {Gi};
    P.ric = {sym(LR.Ric)};
    P.hess = {H};
    P.grad_h = z;
    P.grad_v = z;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        ScalarField t = Gi(a, b) * df[a];
        add_prod(P.grad_h, 1.0, t, df[b]);
      }
    P.lap = trace(Gi, H);
  }
  return P;
}

inline MeasureParts measure_parts(const FlowState& s, Connection conn) { return measure_parts(s.dm, s.f, conn); }

// sum over blocks of |ric + hess + c g|^2 per node
inline ScalarField soliton_norm2(const MeasureParts& P, double c) {
  ScalarField acc = zero_like(P.sR);
  for (std::size_t b = 0; b < P.ric.size(); ++b) {
    Mat<ScalarField> X = P.ric[b];
    for (int i = 0; i < X.rows; ++i)
      for (int j = 0; j < X.cols; ++j) {
        X(i, j) += P.hess[b](i, j);
        if (c != 0) axpy(X(i, j), c, P.g[b](i, j));
      }
    acc += entropy_detail::contract(P.gi[b], X, X);
  }
  return acc;
}

inline ScalarField exp_neg(const ScalarField& f) {
  return f.map([](double v) { return std::exp(-v); });
}

inline double f_functional(const MeasureParts& P, const ScalarField& f) {
  return integrate((P.sR + P.grad2()) * exp_neg(f), P.dV);
}
inline double f_functional(const FlowState& s, Connection conn) { return f_functional(measure_parts(s, conn), s.f); }

// Standard form tau (R + S + |Df|^2) + f - 2n, or with paper_literal the
// printed tau (R + S + |hDf| + |vDf|)^2 + f - 2n.  mu must be normalized.
inline double w_functional(const MeasureParts& P, const FlowState& s, bool paper_literal = false) {
  if (!(s.tau > 0)) throw Error("W functional: tau must be positive, got " + fmt_num(s.tau));
  const MeasureState M = measure(s);
  ScalarField w = s.f - 2.0 * s.n();
  if (paper_literal) {
    ScalarField t = P.sR + P.grad_h.map([](double v) { return std::sqrt(v); }) +
                    P.grad_v.map([](double v) { return std::sqrt(v); });
    add_prod(w, s.tau, t, t);
  } else {
    axpy(w, s.tau, P.sR + P.grad2());
  }
  return integrate(w * M.mu, P.dV);
}
inline double w_functional(const FlowState& s, Connection conn, bool paper_literal = false) {
  return w_functional(measure_parts(s, conn), s, paper_literal);
}

// First variation of the d-connection F along (v_ij, v_ab, delta f):
//   int { -<v_h, Ric_h + Hess_h f> - <v_v, Ric_v + Hess_v f>
//         + (tr v_h / 2 + tr v_v / 2 - delta f)(2 Lap f - |Df|^2 + R + S) } e^-f dV
inline double first_variation_F(const FlowState& s, const Mat<ScalarField>& vh, const Mat<ScalarField>& vv,
                                const ScalarField& df) {
  using namespace entropy_detail;
  const MeasureParts P = measure_parts(s, Connection::dconn);
  const Mat<ScalarField>* v[2] = {&vh, &vv};
  ScalarField acc = zero_like(s.f);
  ScalarField half_trace = zero_like(s.f);
  for (int b = 0; b < 2; ++b) {
    Mat<ScalarField> X = P.ric[b];
    for (std::size_t k = 0; k < X.v.size(); ++k) X.v[k] += P.hess[b].v[k];
    acc -= contract(P.gi[b], *v[b], X);
    axpy(half_trace, 0.5, trace(P.gi[b], *v[b]));
  }
  ScalarField bracket = 2.0 * P.lap - P.grad2() + P.sR;
  add_prod(acc, 1.0, half_trace - df, bracket);
  return integrate(acc * exp_neg(s.f), P.dV);
}

// 2 int |Ric + Hess f|^2 e^-f dV
inline double monotonicity_rhs_F(const MeasureParts& P, const ScalarField& f) {
  return 2 * integrate(soliton_norm2(P, 0.0) * exp_neg(f), P.dV);
}
inline double monotonicity_rhs_F(const FlowState& s, Connection conn = Connection::dconn) {
  return monotonicity_rhs_F(measure_parts(s, conn), s.f);
}

// 2 int tau |Ric + Hess f - g / 2 tau|^2 mu dV
inline double monotonicity_rhs_W(const MeasureParts& P, const FlowState& s) {
  const MeasureState M = measure(s);
  return 2 * s.tau * integrate(soliton_norm2(P, -0.5 / s.tau) * M.mu, P.dV);
}
inline double monotonicity_rhs_W(const FlowState& s, Connection conn = Connection::dconn) {
  return monotonicity_rhs_W(measure_parts(s, conn), s);
}

struct ThermoReport {
  Connection connection = Connection::dconn;
  double tau = 0;
  double F = 0, W = 0;
  std::optional<double> W_paper_literal;
  double logZ = 0, E_avg = 0, S = 0, sigma = 0;
  double identity_residual = 0;  // S - (<E>/tau + log Z)
  double normalization_residual = 0;
  std::string verdict;
};

inline ThermoReport thermodynamics(const MeasureParts& P, const FlowState& s, bool paper_literal = false) {
  if (!(s.tau > 0)) throw Error("thermodynamics: tau must be positive, got " + fmt_num(s.tau));
  const MeasureState M = measure(s);
  if (M.residual > 1e-8)
    throw Error("thermodynamics: measure is not normalized (|int mu dV - 1| = " + fmt_num(M.residual) + ")");
  const int n = s.n();
  const double tau = s.tau;
  const ScalarField q = P.sR + P.grad2();
  ThermoReport r;
  r.connection = P.conn;
  r.tau = tau;
  r.normalization_residual = M.residual;
  r.F = f_functional(P, s.f);
  r.W = w_functional(P, s, false);
  if (paper_literal) r.W_paper_literal = w_functional(P, s, true);
  r.logZ = integrate((static_cast<double>(n) - s.f) * M.mu, P.dV);
  r.E_avg = -tau * tau * integrate((q - n / tau) * M.mu, P.dV);
  ScalarField sint = s.f - 2.0 * n;
  axpy(sint, tau, q);
  r.S = -integrate(sint * M.mu, P.dV);
  r.sigma = 2 * std::pow(tau, 4) * integrate(soliton_norm2(P, -0.5 / tau) * M.mu, P.dV);
  r.identity_residual = r.S - (r.E_avg / tau + r.logZ);
  return r;
}
inline ThermoReport thermodynamics(const FlowState& s, Connection conn, bool paper_literal = false) {
  return thermodynamics(measure_parts(s, conn), s, paper_literal);
}

inline nlohmann::json to_json(const ThermoReport& r) {
  nlohmann::json j;
  j["connection"] = to_string(r.connection);
  j["tau"] = round_sig(r.tau);
  j["F"] = round_sig(r.F);
  j["W"] = round_sig(r.W);
  if (r.W_paper_literal) j["W_paper_literal"] = round_sig(*r.W_paper_literal);
  j["logZ"] = round_sig(r.logZ);
  j["E_avg"] = round_sig(r.E_avg);
  j["S"] = round_sig(r.S);
  j["sigma"] = round_sig(r.sigma);
  j["identity_residual"] = round_sig(r.identity_residual);
  j["verdict"] = r.verdict;
  return j;
}

struct Comparison {
  ThermoReport dconn, lc;
  double difference = 0;  // S_dconn - S_lc
  std::string verdict;
};

// Lower entropy is the thermodynamically more convenient connection.
inline Comparison compare_connections(const FlowState& s, double tol = 1e-8, bool paper_literal = false) {
  Comparison c;
  c.dconn = thermodynamics(s, Connection::dconn, paper_literal);
  c.lc = thermodynamics(s, Connection::lc, paper_literal);
  c.difference = c.dconn.S - c.lc.S;
  if (std::fabs(c.difference) < tol)
    c.verdict = "equivalent";
  else
    c.verdict = c.difference < 0 ? "dconn-favored" : "lc-favored";
  c.dconn.verdict = c.lc.verdict = c.verdict;
  return c;
}

}  // namespace ffr
