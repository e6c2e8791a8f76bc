#pragma once

// The invariant suite behind `ffr check`: point-wise geometry and connection
// identities at seeded random points of the configured window, and entropy
// identities on the configured grid state.  Each entry records the worst
// residual over its samples and the tolerance it is held to.

#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffr/config.hpp"
#include "ffr/connections.hpp"

namespace ffr {

struct CheckItem {
  std::string name;
  double value = 0;
  double tol = 0;
  bool at_least = false;  // value >= tol instead of value <= tol
  bool pass = false;
};

struct CheckReport {
  std::uint64_t seed = 0;
  std::string lagrangian;
  int points = 0;
  std::vector<CheckItem> items;

  bool ok() const {
    for (const auto& i : items)
      if (!i.pass) return false;
    return true;
  }

  std::string text() const {
    auto pad = [](std::string s, std::size_t w) { return s.size() < w ? s + std::string(w - s.size(), ' ') : s + ' '; };
    std::ostringstream os;
    os << "seed " << seed << ", " << points << " points, lagrangian " << lagrangian << "\n";
    os << pad("invariant", 44) << pad("value", 22) << pad("tolerance", 22) << "status\n";
    int passed = 0;
    for (const auto& i : items) {
      passed += i.pass;
      os << pad(i.name, 44) << pad(std::isnan(i.value) ? "n/a" : fmt_num(i.value), 22)
         << pad((i.at_least ? ">= " : "<= ") + fmt_num(i.tol), 22) << (i.pass ? "pass" : "FAIL") << "\n";
    }
    os << passed << " passed, " << items.size() - passed << " failed\n";
    return os.str();
  }

  nlohmann::json json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& i : items)
      a.push_back({{"name", i.name},
                   {"value", std::isnan(i.value) ? nlohmann::json() : nlohmann::json(round_sig(i.value))},
                   {"tolerance", round_sig(i.tol)},
                   {"comparison", i.at_least ? ">=" : "<="},
                   {"pass", i.pass}});
    return {{"seed", seed}, {"lagrangian", lagrangian}, {"points", points}, {"invariants", a}, {"ok", ok()}};
  }
};

namespace check_detail {

inline constexpr const char* kRiemannian = "(2+sin(x1))*y1^2 + 0.4*x2*y1*y2 + (1.5+x1*x2^2)*y2^2";

template <class F>
double rich(F f, double h = 1e-3) {
  return (4 * f(h / 2) - f(h)) / 3;
}

// Worst absolute residual tracker.
struct Worst {
  double v = 0;
  void operator()(double x) { v = std::max(v, std::isnan(x) ? INFINITY : std::fabs(x)); }
};

inline double max_abs_t(const Ten4<double>& t) {
  double m = 0;
  for (double x : t.v) m = std::max(m, std::fabs(x));
  return m;
}

inline std::vector<double> random_point(const GridDomain& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<double> u(d.axes());
  for (int a = 0; a < d.axes(); ++a) u[a] = d.center[a] + (U(rng) - 0.5) * d.period[a];
  return u;
}

// Base Christoffels of g(x) by Richardson differences.
inline Ten3<double> fd_christoffel(const std::function<Mat<double>(const std::vector<double>&)>& g,
                                   const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<Mat<double>> dg;
  for (int c = 0; c < n; ++c) {
    Mat<double> d(n, n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        d(i, j) = rich([&](double h) {
          auto p = x, m = x;
          p[c] += h;
          m[c] -= h;
          return (g(p)(i, j) - g(m)(i, j)) / (2 * h);
        });
    dg.push_back(d);
  }
  const Mat<double> g0 = g(x);
  const Mat<double> gi = inverse(g0, det(g0));
  Ten3<double> G(n, 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) G(a, b, c) += 0.5 * gi(a, d) * (dg[b](d, c) + dg[c](d, b) - dg[d](b, c));
  return G;
}

}  // namespace check_detail

// Point-wise invariants of the geometry and connections modules for L.
inline void check_pointwise(CheckReport& rep, const RunConfig& c) {
  using namespace check_detail;
  const Expr L = parse(c.lagrangian, c.n);
  const int n = c.n, m = 2 * n;
  const double eps = c.tolerances.eps_reg, k = c.tolerances.check_tol;
  std::mt19937_64 rng(c.seed);
  Worst hsym, hfd, nfd, el_err, fr_id, fr_cong, compat, tors, dist, lc_sym, lc_comp, bianchi, pair;
  double min_order = INFINITY;
  for (int t = 0; t < c.check.points; ++t) {
    const std::vector<double> u = random_point(c.domain, rng);
    const PhasePoint p = PhasePoint::from_u(u);
    PointGeometry pg(L, p, eps);
    const DMetric dm = pg.dmetric();
    const Mat<double>& g = dm.gh.g;
    const double gscale = std::max(1.0, max_abs(g));
    // Hessian metric: symmetry and 1/2 d2L/dy dy by differences.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        hsym(g(i, j) - g(j, i));
        const double d2 = rich([&](double h) {
          auto at = [&](double si, double sj) {
            auto q = u;
            q[n + i] += si * h;
            q[n + j] += sj * h;
            return evaluate(L, q);
          };
          if (i == j) return (at(1, 0) - 2 * evaluate(L, u) + at(-1, 0)) / (h * h);
          return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
        });
        hfd((g(i, j) - 0.5 * d2) / gscale);
      }
    // N = dG/dy.
    for (int a = 0; a < n; ++a)
      for (int i = 0; i < n; ++i) {
        const double d = rich([&](double h) {
          auto q1 = u, q2 = u;
          q1[n + i] += h;
          q2[n + i] -= h;
          return (lagrange_jet(L, q1, 3, eps).G[a].value() - lagrange_jet(L, q2, 3, eps).G[a].value()) / (2 * h);
        });
        nfd((dm.N.N(a, i) - d) / std::max(1.0, std::fabs(d)));
      }
    // Euler-Lagrange and semispray trajectories.
    {
      const double T = 0.25;
      std::vector<double> errs;
      for (int steps : {25, 50}) {
        const auto a = el_trajectory(L, p, T, steps, eps), b = spray_trajectory(L, p, T, steps, eps);
        double e = 0;
        for (int q = 0; q < m; ++q) e = std::max(e, std::fabs(a.u.back()[q] - b.u.back()[q]));
        errs.push_back(e);
      }
      el_err(errs.back());
      if (errs.back() > 1e-12) min_order = std::min(min_order, std::log2(errs[0] / errs[1]));
    }
    // Frames.
    const FrameMatrix fr = adapted_frames(dm.N, &g);
    const Mat<double> G = coordinate_metric(dm);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        double s = 0, cg = 0;
        for (int q = 0; q < m; ++q) s += fr.e(a, q) * fr.e_inv(q, b);
        fr_id(s - (a == b ? 1.0 : 0.0));
        for (int q = 0; q < m; ++q)
          for (int r = 0; r < m; ++r) {
            const double D = (q < n) == (r < n) ? g(q % n, r % n) : 0.0;
            cg += fr.e(a, q) * D * fr.e(b, r);
          }
        fr_cong((cg - G(a, b)) / std::max(1.0, max_abs(G)));
      }
    // d-connection defining properties and the distortion identity.
    compat(pg.compatibility_residual());
    const auto T = pg.torsion();
    for (double x : T.hhh.v) tors(x);
    for (double x : T.vvv.v) tors(x);
    dist(pg.distortion_identity_residual());
    // Levi-Civita: symmetric and parallel.
    const auto Gam = pg.levi_civita();
    const auto Gj = pg.geo().coordinate_metric();
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int q = 0; q < m; ++q) {
          lc_sym(Gam(q, a, b) - Gam(q, b, a));
          double s = Gj(a, b).derivative(q).value();
          for (int d = 0; d < m; ++d) s -= Gam(d, a, q) * G(d, b) + Gam(d, b, q) * G(a, d);
          lc_comp(s);
        }
    // Curvature antisymmetries: last pair by construction, first pair (after
    // lowering) from metric compatibility.
    const auto C = pg.curvature();
    const double cs = std::max(1.0, std::max({max_abs_t(C.hhhh), max_abs_t(C.vvhh), max_abs_t(C.hhhv),
                                              max_abs_t(C.vvhv), max_abs_t(C.hhvv), max_abs_t(C.vvvv)}));
    const Mat<double>& gv = dm.gv.g;
    for (int i = 0; i < n; ++i)
      for (int h = 0; h < n; ++h)
        for (int j = 0; j < n; ++j)
          for (int l = 0; l < n; ++l) {
            bianchi((C.hhhh(i, h, j, l) + C.hhhh(i, h, l, j)) / cs);
            bianchi((C.vvhh(i, h, j, l) + C.vvhh(i, h, l, j)) / cs);
            bianchi((C.hhvv(i, h, j, l) + C.hhvv(i, h, l, j)) / cs);
            bianchi((C.vvvv(i, h, j, l) + C.vvvv(i, h, l, j)) / cs);
            auto lowered = [&](const Ten4<double>& R, const Mat<double>& metric) {
              double s = 0;
              for (int q = 0; q < n; ++q) s += metric(i, q) * R(q, h, j, l) + metric(h, q) * R(q, i, j, l);
              return s;
            };
            pair(lowered(C.hhhh, g) / cs);
            pair(lowered(C.vvhh, gv) / cs);
            pair(lowered(C.hhhv, g) / cs);
            pair(lowered(C.vvhv, gv) / cs);
            pair(lowered(C.hhvv, g) / cs);
            pair(lowered(C.vvvv, gv) / cs);
          }
  }
  auto add_max = [&](const char* name, double v, double tol) {
    rep.items.push_back({name, v, tol * k, false, v <= tol * k});
  };
  add_max("geometry.hessian_symmetric", hsym.v, 0);
  add_max("geometry.hessian_fd", hfd.v, 1e-6);
  add_max("geometry.nconnection_fd", nfd.v, 1e-8);
  add_max("geometry.el_semispray_agreement", el_err.v, 1e-6);
  const double order = std::isinf(min_order) ? NAN : min_order;
  rep.items.push_back({"geometry.el_semispray_order", order, 3.5, true, std::isnan(order) || order >= 3.5});
  add_max("geometry.frames_inverse", fr_id.v, 0);
  add_max("geometry.frames_congruence", fr_cong.v, 1e-12);
  add_max("connections.metric_compatibility", compat.v, 1e-9);
  add_max("connections.torsion_hh_vv", tors.v, 1e-10);
  add_max("connections.distortion_identity", dist.v, 1e-8);
  add_max("connections.lc_torsion_free", lc_sym.v, 0);
  add_max("connections.lc_metric_compatible", lc_comp.v, 1e-9);
  add_max("connections.curvature_antisymmetry", bianchi.v, 1e-12);
  add_max("connections.curvature_pair_antisymmetry", pair.v, 1e-9);
}

// Reduction to the base geometry for a quadratic Lagrangian with
// y-independent coefficients (a fixed reference Lagrangian).
inline void check_riemannian_reduction(CheckReport& rep, const RunConfig& c) {
  using namespace check_detail;
  const Expr L = parse(kRiemannian, 2);
  std::mt19937_64 rng(c.seed ^ 0x5bd1e995u);
  std::uniform_real_distribution<double> X(-0.7, 0.7), Y(0.5, 1.2);
  Worst chr, vder, mixed;
  for (int t = 0; t < std::max(5, c.check.points / 4); ++t) {
    const std::vector<double> x = {X(rng), X(rng)}, y = {Y(rng), -Y(rng)};
    PointGeometry pg(L, PhasePoint(x, y), c.tolerances.eps_reg);
    const auto base = fd_christoffel(
        [&](const std::vector<double>& q) { return hessian_metric(L, PhasePoint(q, y)).g; }, x);
    const auto D = pg.connection();
    for (std::size_t q = 0; q < base.v.size(); ++q) chr(D.Lh.v[q] - base.v[q]);
    const auto C = pg.curvature();
    for (const auto* blk : {&C.hhhv, &C.vvhv, &C.hhvv, &C.vvvv})
      for (double v : blk->v) vder(v);
    const auto R = pg.ricci();
    for (double v : R.hv.v) mixed(v);
    for (double v : R.vh.v) mixed(v);
  }
  const double k = c.tolerances.check_tol;
  rep.items.push_back({"connections.riemannian_christoffel", chr.v, 1e-8 * k, false, chr.v <= 1e-8 * k});
  rep.items.push_back({"connections.riemannian_vertical_curvature", vder.v, 1e-9 * k, false, vder.v <= 1e-9 * k});
  rep.items.push_back({"connections.riemannian_mixed_ricci", mixed.v, 1e-9 * k, false, mixed.v <= 1e-9 * k});
}

// Entropy identities on the configured grid state.
inline void check_entropy(CheckReport& rep, const RunConfig& c) {
  FlowState s = build_state(c);
  normalize_f(s);
  FlowState t = s;
  t.f += 1.75;
  normalize_f(t);
  double gauge = 0, ident = 0, neg = 0;
  for (auto conn : {Connection::dconn, Connection::lc}) {
    const ThermoReport a = thermodynamics(s, conn), b = thermodynamics(t, conn);
    for (auto [x, y] : {std::pair{a.F, b.F}, {a.W, b.W}, {a.S, b.S}, {a.E_avg, b.E_avg}, {a.logZ, b.logZ}})
      gauge = std::max(gauge, std::fabs(x - y));
    ident = std::max(ident, std::fabs(a.identity_residual));
    const MeasureParts P = measure_parts(s, conn);
    for (double v : {a.sigma, monotonicity_rhs_F(P, s.f), monotonicity_rhs_W(P, s)}) neg = std::max(neg, -v);
  }
  const double k = c.tolerances.check_tol;
  rep.items.push_back({"entropy.measure_gauge", gauge, 1e-10 * k, false, gauge <= 1e-10 * k});
  rep.items.push_back({"entropy.thermodynamic_identity", ident, 1e-10 * k, false, ident <= 1e-10 * k});
  rep.items.push_back({"entropy.sum_of_squares_negativity", neg, 0, false, neg <= 0});
}

// Lemma-level checks on fixed product states, where the d-connection is
// Levi-Civita on each factor: first variation and F monotonicity.
inline void check_entropy_dynamics(CheckReport& rep, const RunConfig& c) {
  const double tp = 2 * kPi;
  GridDomain d;
  d.n = 2;
  d.center = {0.5, 0.5, 0.5, 0.5};
  d.period = {1, 1, 1, 1};
  d.res = {48, 8, 48, 8};
  d.validate();
  auto dom = std::make_shared<const GridDomain>(d);
  auto fld = [&](auto f) { return sample(dom, [&](const std::vector<double>& u) { return f(u); }); };
  const ScalarField z(dom, 0.0);
  FlowState s{DMetricField{2, Mat<ScalarField>(2, 2, z), Mat<ScalarField>(2, 2, z), Mat<ScalarField>(2, 2, z)}, z, 0, 1};
  s.dm.gh(0, 0) = fld([&](auto& u) { return std::exp(0.6 * std::sin(tp * u[0])); });
  s.dm.gh(1, 1) = fld([&](auto& u) { return 1.3 + 0.2 * std::cos(tp * u[0]); });
  s.dm.gh(0, 1) = s.dm.gh(1, 0) = fld([&](auto& u) { return 0.1 * std::sin(tp * u[0]); });
  s.dm.gv(0, 0) = fld([&](auto& u) { return 1 + 0.3 * std::sin(tp * u[2]); });
  s.dm.gv(1, 1) = fld([&](auto& u) { return std::exp(0.4 * std::cos(tp * u[2])); });
  s.f = fld([&](auto& u) { return 0.5 * std::sin(tp * u[0]) + 0.3 * std::cos(tp * u[2]); });

  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> U(-1, 1);
  double worst = 0;
  for (int t = 0; t < c.check.perturbations; ++t) {
    double a[8];
    for (auto& x : a) x = U(rng);
    Mat<ScalarField> vh(2, 2, z), vv(2, 2, z);
    vh(0, 0) = fld([&](auto& u) { return a[0] * std::sin(tp * u[0] + a[1]); });
    vh(0, 1) = vh(1, 0) = fld([&](auto& u) { return a[2] * std::cos(tp * u[0]); });
    vh(1, 1) = ScalarField(dom, a[3]);
    vv(0, 0) = fld([&](auto& u) { return a[4] * std::cos(tp * u[2]); });
    vv(1, 1) = fld([&](auto& u) { return a[5] * std::sin(tp * u[2]); });
    const ScalarField df = fld([&](auto& u) { return a[6] * std::sin(tp * u[0]) + a[7] * std::cos(tp * u[2]); });
    auto F = [&](double e) {
      FlowState q = s;
      for (std::size_t k = 0; k < 4; ++k) {
        axpy(q.dm.gh.v[k], e, vh.v[k]);
        axpy(q.dm.gv.v[k], e, vv.v[k]);
      }
      axpy(q.f, e, df);
      return f_functional(q, Connection::dconn);
    };
    const double fd = (F(1e-5) - F(-1e-5)) / 2e-5;
    worst = std::max(worst, std::fabs(first_variation_F(s, vh, vv, df) - fd) / std::fabs(fd));
  }
  const double k = c.tolerances.check_tol;
  rep.items.push_back({"entropy.first_variation_fd", worst, 1e-4 * k, false, worst <= 1e-4 * k});

  // Coupled (g, f) flow on a conformal product; F must not decrease.
  d.res = {16, 8, 16, 8};
  auto dom16 = std::make_shared<const GridDomain>(d);
  auto f16 = [&](auto f) { return sample(dom16, [&](const std::vector<double>& u) { return f(u); }); };
  const ScalarField z16(dom16, 0.0);
  FlowState p{DMetricField{2, Mat<ScalarField>(2, 2, z16), Mat<ScalarField>(2, 2, z16), Mat<ScalarField>(2, 2, z16)},
              z16, 0, 1};
  const ScalarField ph = f16([&](auto& u) { return std::exp(0.6 * std::sin(tp * u[0])); });
  const ScalarField pv = f16([&](auto& u) { return std::exp(0.6 * std::sin(tp * u[2])); });
  p.dm.gh(0, 0) = p.dm.gh(1, 1) = ph;
  p.dm.gv(0, 0) = p.dm.gv(1, 1) = pv;
  p.f = f16([&](auto& u) { return 0.3 * std::cos(tp * u[0]) + 0.2 * std::sin(tp * u[2]); });
  FlowConfig fc;
  fc.dt = 1e-4;
  fc.steps = 20;
  fc.stride = 2;
  fc.coupling = Coupling::F;
  fc.eps_reg = c.tolerances.eps_reg;
  const auto res = run(fc, p);
  double slope = INFINITY;
  for (std::size_t q = 1; q < res.records.size(); ++q)
    slope = std::min(slope, (res.records[q].F - res.records[q - 1].F) / (res.records[q].chi - res.records[q - 1].chi));
  rep.items.push_back({"entropy.F_monotone_slope", slope, -1e-6, true, slope >= -1e-6});
}

inline CheckReport run_checks(const RunConfig& c) {
  CheckReport rep;
  rep.seed = c.seed;
  rep.lagrangian = c.lagrangian;
  rep.points = c.check.points;
  check_pointwise(rep, c);
  check_riemannian_reduction(rep, c);
  check_entropy(rep, c);
  check_entropy_dynamics(rep, c);
  return rep;
}

}  // namespace ffr
