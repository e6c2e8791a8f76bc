#pragma once

// Point-wise canonical d-connection, Levi-Civita connection and their
// torsion, distortion and curvature at a phase-space point, evaluated from
// exact jets of L.  Results are plain double tables.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffr/dgeom.hpp"
#include "ffr/format.hpp"
#include "ffr/geometry.hpp"

namespace ffr {

using DConnection = DConnectionT<double>;
using Torsion = TorsionT<double>;
using Distortion = DistortionT<double>;
using CurvatureBlocks = CurvatureT<double>;
using RicciBlocks = RicciT<double>;
using EinsteinBlocks = EinsteinT<double>;

struct Scalars {
  double R = 0, S = 0, sR = 0;
};

struct LCRicciValues {
  Mat<double> Ric;
  double scalar = 0;
};

// Jets of a d-metric given component-wise by expressions in (x, y); the
// lists are row-major n x n (N as N[a][i]).  Used for states that do not come
// from a Lagrangian.
inline DMetricT<Taylor> dmetric_jets(const std::vector<Expr>& gh, const std::vector<Expr>& gv,
                                     const std::vector<Expr>& N, const std::vector<double>& u, int order = 4) {
  const int n = static_cast<int>(u.size()) / 2;
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  if (gh.size() != nn || gv.size() != nn || N.size() != nn)
    throw ConfigError("d-metric: expected " + std::to_string(nn) + " components per block");
  const Taylor z = Taylor::constant(TaylorLayout::get(2 * n, order), 0.0);
  DMetricT<Taylor> dm{n, Mat<Taylor>(n, n, z), Mat<Taylor>(n, n, z), Mat<Taylor>(n, n, z)};
  for (std::size_t k = 0; k < nn; ++k) {
    dm.gh.v[k] = taylor(gh[k], u, order);
    dm.gv.v[k] = taylor(gv[k], u, order);
    dm.N.v[k] = taylor(N[k], u, order);
  }
  return dm;
}

// Jet-backed geometry at one point; every object is computed on demand
// and cached by the underlying DGeometry.
class PointGeometry {
 public:
  PointGeometry(const Expr& L, const PhasePoint& p, double eps_reg = kDefaultEpsReg)
      : jet_(lagrange_jet(L, p.u(), kMaxJetOrder, eps_reg)), geo_(jet_.dmetric(), TaylorCalc{jet_.n}) {}
  // A d-metric supplied directly as jets (N need not come from a spray).
  explicit PointGeometry(const DMetricT<Taylor>& dm) : geo_(dm, TaylorCalc{dm.n}) { jet_.n = dm.n; }

  int n() const { return geo_.n(); }
  DGeometry<Taylor, TaylorCalc>& geo() { return geo_; }

  DMetric dmetric() const {
    const auto& m = geo_.metric();
    DMetric d;
    d.n = m.n;
    d.gh = HMetric{values(m.gh), values(geo_.ghi()), geo_.gh_det().value()};
    d.gv = HMetric{values(m.gv), values(geo_.gvi()), geo_.gv_det().value()};
    d.N.N = values(m.N);
    for (const auto& Gj : jet_.G) d.N.G.push_back(Gj.value());
    return d;
  }

  DConnection connection() {
    const auto& D = geo_.connection();
    return DConnection{values(D.Lh), values(D.Lv), values(D.Ch), values(D.Cv)};
  }
  Anholonomy anholonomy() {
    const auto& A = geo_.anholonomy();
    return Anholonomy{values(A.W), values(A.Omega)};
  }
  Torsion torsion() {
    const auto T = geo_.torsion();
    return Torsion{values(T.hhh), values(T.hhv), values(T.vhh), values(T.vvh), values(T.vvv)};
  }
  Distortion distortion(DistortionForm form = DistortionForm::consistent) {
    const auto Z = geo_.distortion(form);
    return Distortion{values(Z.i_jk), values(Z.a_jk), values(Z.i_bk), values(Z.a_bk),
                      values(Z.i_kb), values(Z.a_jb), values(Z.i_ab), values(Z.a_bc)};
  }
  double compatibility_residual() {
    double m = 0;
    for (const auto& r : geo_.compatibility_residuals()) m = std::max(m, std::fabs(r.value()));
    return m;
  }
  CurvatureBlocks curvature() {
    const auto C = geo_.curvature();
    return CurvatureBlocks{values(C.hhhh), values(C.vvhh), values(C.hhhv),
                           values(C.vvhv), values(C.hhvv), values(C.vvvv)};
  }
  RicciBlocks ricci() {
    const auto& R = geo_.ricci();
    return RicciBlocks{values(R.hh), values(R.hv), values(R.vh), values(R.vv), R.R.value(), R.Sv.value(),
                       R.sR.value()};
  }
  Scalars scalars() {
    const auto& R = geo_.ricci();
    return Scalars{R.R.value(), R.Sv.value(), R.sR.value()};
  }
  EinsteinBlocks einstein() {
    const auto E = geo_.einstein();
    return EinsteinBlocks{values(E.hh), values(E.hv), values(E.vh), values(E.vv)};
  }
  Mat<double> coordinate_metric() const { return values(geo_.coordinate_metric()); }
  Ten3<double> levi_civita() { return values(geo_.levi_civita()); }
  LCRicciValues lc_ricci() {
    const auto& r = geo_.lc_ricci();
    return LCRicciValues{values(r.Ric), r.scalar.value()};
  }
  // Levi-Civita coefficients in the adapted frame, and the full d-connection
  // and distortion tables with the same (2n)^3 layout.
  Ten3<double> levi_civita_adapted() { return values(geo_.levi_civita_adapted()); }
  Ten3<double> dconnection_full() { return values(geo_.dconnection_full()); }
  Ten3<double> distortion_full(DistortionForm form = DistortionForm::consistent) {
    return values(DGeometry<Taylor, TaylorCalc>::distortion_full(geo_.distortion(form), n(), geo_.zero()));
  }
  // max |nabla - (D + Z)| over all (2n)^3 adapted components.
  double distortion_identity_residual(DistortionForm form = DistortionForm::consistent) {
    const auto lc = levi_civita_adapted();
    const auto dc = dconnection_full();
    const auto z = distortion_full(form);
    double m = 0;
    for (std::size_t k = 0; k < lc.v.size(); ++k) m = std::max(m, std::fabs(lc.v[k] - dc.v[k] - z.v[k]));
    return m;
  }

 private:
  LagrangeJet jet_;
  DGeometry<Taylor, TaylorCalc> geo_;
};

inline DConnection canonical_dconnection(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).connection();
}
inline Ten3<double> levi_civita(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).levi_civita();
}
inline Torsion d_torsion(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).torsion();
}
inline Distortion distortion(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).distortion();
}
inline double metric_compatibility_residual(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).compatibility_residual();
}
inline CurvatureBlocks d_curvature(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).curvature();
}
inline RicciBlocks d_ricci(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).ricci();
}
inline Scalars scalar_curvatures(const RicciBlocks& rb, const DMetric& dm) {
  Scalars s;
  for (int i = 0; i < dm.n; ++i)
    for (int j = 0; j < dm.n; ++j) {
      s.R += dm.gh.g_inv(i, j) * rb.hh(i, j);
      s.S += dm.gv.g_inv(i, j) * rb.vv(i, j);
    }
  s.sR = s.R + s.S;
  return s;
}
inline EinsteinBlocks einstein_dtensor(const RicciBlocks& rb, const DMetric& dm) {
  const Scalars s = scalar_curvatures(rb, dm);
  EinsteinBlocks e{rb.hh, rb.hv, rb.vh, rb.vv};
  for (int i = 0; i < dm.n; ++i)
    for (int j = 0; j < dm.n; ++j) {
      e.hh(i, j) -= 0.5 * dm.gh.g(i, j) * s.sR;
      e.vv(i, j) -= 0.5 * dm.gv.g(i, j) * s.sR;
    }
  return e;
}
inline LCRicciValues lc_ricci(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  return PointGeometry(L, p, eps).lc_ricci();
}

// JSON encodings; numbers are rounded to the output precision.
inline nlohmann::json to_json(double v) { return round_sig(v); }
inline nlohmann::json to_json(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(round_sig(x));
  return a;
}
inline nlohmann::json to_json(const Mat<double>& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < m.rows; ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (int j = 0; j < m.cols; ++j) r.push_back(round_sig(m(i, j)));
    a.push_back(r);
  }
  return a;
}
inline nlohmann::json to_json(const Ten3<double>& t) {
  nlohmann::json a = nlohmann::json::array();
  for (int p = 0; p < t.n; ++p) {
    nlohmann::json b = nlohmann::json::array();
    for (int q = 0; q < t.n; ++q) {
      nlohmann::json c = nlohmann::json::array();
      for (int r = 0; r < t.n; ++r) c.push_back(round_sig(t(p, q, r)));
      b.push_back(c);
    }
    a.push_back(b);
  }
  return a;
}
inline nlohmann::json to_json(const Ten4<double>& t) {
  nlohmann::json a = nlohmann::json::array();
  for (int p = 0; p < t.n; ++p) {
    nlohmann::json b = nlohmann::json::array();
    for (int q = 0; q < t.n; ++q) {
      nlohmann::json c = nlohmann::json::array();
      for (int r = 0; r < t.n; ++r) {
        nlohmann::json d = nlohmann::json::array();
        for (int s = 0; s < t.n; ++s) d.push_back(round_sig(t(p, q, r, s)));
        c.push_back(d);
      }
      b.push_back(c);
    }
    a.push_back(b);
  }
  return a;
}

// Every point-wise object at p, with the index order of each table.
inline nlohmann::json inspect_document(const Expr& L, const PhasePoint& p, double eps = kDefaultEpsReg) {
  using nlohmann::json;
  PointGeometry pg(L, p, eps);
  const DMetric dm = pg.dmetric();
  const FrameMatrix fr = adapted_frames(dm.N, &dm.gh.g);
  const auto D = pg.connection();
  const auto A = pg.anholonomy();
  const auto T = pg.torsion();
  const auto Z = pg.distortion();
  const auto C = pg.curvature();
  const auto R = pg.ricci();
  const auto E = pg.einstein();
  const auto lcr = pg.lc_ricci();
  json doc;
  doc["n"] = dm.n;
  doc["point"] = {{"x", to_json(p.x)}, {"y", to_json(p.y)}};
  doc["metric"] = {{"g", to_json(dm.gh.g)}, {"g_inv", to_json(dm.gh.g_inv)}, {"det", to_json(dm.gh.det)},
                   {"signature", signature(dm.gh.g)}, {"index_order", "g[i][j]"}};
  doc["spray"] = {{"G", to_json(dm.N.G)}, {"index_order", "G[a]"}};
  doc["nconnection"] = {{"N", to_json(dm.N.N)}, {"index_order", "N[a][i] = N^a_i"}};
  doc["frames"] = {{"e", to_json(fr.e)}, {"e_inv", to_json(fr.e_inv)}, {"eta", fr.eta},
                   {"index_order", "e[alpha][abar], coordinate index first"}};
  doc["anholonomy"] = {{"W", to_json(A.W)}, {"Omega", to_json(A.Omega)},
                       {"index_order", "W[a][i][b] = dN^a_i/dy^b; Omega[a][j][i] = e_i N^a_j - e_j N^a_i"}};
  doc["dconnection"] = {{"L_h", to_json(D.Lh)}, {"L_v", to_json(D.Lv)}, {"C_h", to_json(D.Ch)},
                        {"C_v", to_json(D.Cv)}, {"compatibility_residual", to_json(pg.compatibility_residual())},
                        {"index_order", "L_h[i][j][k], L_v[a][b][k], C_h[i][j][c], C_v[a][b][c]"}};
  doc["levi_civita"] = {{"Gamma", to_json(pg.levi_civita())},
                        {"adapted", to_json(pg.levi_civita_adapted())},
                        {"coordinate_metric", to_json(pg.coordinate_metric())},
                        {"index_order", "Gamma[g][a][b], upper index first, 2n coordinates (x, y)"}};
  doc["torsion"] = {{"hhh", to_json(T.hhh)}, {"hhv", to_json(T.hhv)}, {"vhh", to_json(T.vhh)},
                    {"vvh", to_json(T.vvh)}, {"vvv", to_json(T.vvv)},
                    {"index_order", "T^i_jk, T^i_ja, T^a_ji, T^a_bi, T^a_bc; upper index first"}};
  doc["distortion"] = {{"i_jk", to_json(Z.i_jk)}, {"a_jk", to_json(Z.a_jk)}, {"i_bk", to_json(Z.i_bk)},
                       {"a_bk", to_json(Z.a_bk)}, {"i_kb", to_json(Z.i_kb)}, {"a_jb", to_json(Z.a_jb)},
                       {"i_ab", to_json(Z.i_ab)}, {"a_bc", to_json(Z.a_bc)},
                       {"identity_residual", to_json(pg.distortion_identity_residual())},
                       {"index_order", "block name lists upper, vector, direction index"}};
  doc["curvature"] = {{"hhhh", to_json(C.hhhh)}, {"vvhh", to_json(C.vvhh)}, {"hhhv", to_json(C.hhhv)},
                      {"vvhv", to_json(C.vvhv)}, {"hhvv", to_json(C.hhvv)}, {"vvvv", to_json(C.vvvv)},
                      {"index_order", "R^i_hjk, R^a_bjk, R^i_jka, R^c_bka, R^i_jbc, R^a_bcd"}};
  doc["ricci"] = {{"hh", to_json(R.hh)}, {"hv", to_json(R.hv)}, {"vh", to_json(R.vh)}, {"vv", to_json(R.vv)},
                  {"index_order", "R_ij, R_ia, R_ai, R_ab"}};
  doc["scalars"] = {{"R", to_json(R.R)}, {"S", to_json(R.Sv)}, {"sR", to_json(R.sR)}};
  doc["einstein"] = {{"hh", to_json(E.hh)}, {"hv", to_json(E.hv)}, {"vh", to_json(E.vh)}, {"vv", to_json(E.vv)}};
  doc["lc_ricci"] = {{"Ric", to_json(lcr.Ric)}, {"scalar", to_json(lcr.scalar)}};
  return doc;
}

}  // namespace ffr
