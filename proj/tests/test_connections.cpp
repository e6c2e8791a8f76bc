#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "ffr/connections.hpp"
#include "oracles.hpp"

using namespace ffr;
using Catch::Matchers::WithinAbs;

namespace {

const char* kFlat = "y1^2+y2^2";
const char* kQuartic = "sqrt(y1^4+y2^4)";
const char* kRiemannian = "(2+sin(x1))*y1^2 + 0.4*x2*y1*y2 + (1.5+x1*x2^2)*y2^2";

Mat<double> riemannian_base(const std::vector<double>& x) {
  Mat<double> g(2, 2, 0.0);
  g(0, 0) = 2 + std::sin(x[0]);
  g(0, 1) = g(1, 0) = 0.2 * x[1];
  g(1, 1) = 1.5 + x[0] * x[1] * x[1];
  return g;
}

std::vector<Expr> exprs(std::initializer_list<const char*> src) {
  std::vector<Expr> r;
  for (auto s : src) r.push_back(parse(s, 2));
  return r;
}

}  // namespace

TEST_CASE("flat Lagrangian has vanishing connection data") {
  PointGeometry pg(parse(kFlat, 2), PhasePoint({0.3, -0.1}, {0.7, 0.2}));
  const auto D = pg.connection();
  for (const auto* t : {&D.Lh, &D.Lv, &D.Ch, &D.Cv}) CHECK(oracle::max_abs(t->v) == 0.0);
  CHECK(oracle::max_abs(pg.levi_civita().v) == 0.0);
  const auto T = pg.torsion();
  for (const auto* t : {&T.hhh, &T.hhv, &T.vhh, &T.vvh, &T.vvv}) CHECK(oracle::max_abs(t->v) == 0.0);
  CHECK(pg.compatibility_residual() == 0.0);
  CHECK(oracle::max_abs(pg.distortion_full().v) == 0.0);
  const auto C = pg.curvature();
  for (const auto* t : {&C.hhhh, &C.vvhh, &C.hhhv, &C.vvhv, &C.hhvv, &C.vvvv}) CHECK(oracle::max_abs(t->v) == 0.0);
  const auto R = pg.ricci();
  CHECK(R.sR == 0.0);
  CHECK(oracle::max_abs(pg.einstein().hh.v) == 0.0);
  CHECK(pg.lc_ricci().scalar == 0.0);
}

TEST_CASE("canonical d-connection defining properties") {
  std::mt19937_64 rng(21);
  for (const char* src : oracle::test_lagrangians()) {
    const Expr L = parse(src, 2);
    for (int t = 0; t < 50; ++t) {
      PointGeometry pg(L, PhasePoint::from_u(oracle::random_point(rng)));
      INFO(src);
      CHECK(pg.compatibility_residual() < 1e-9);
      const auto T = pg.torsion();
      CHECK(oracle::max_abs(T.hhh.v) < 1e-10);
      CHECK(oracle::max_abs(T.vvv.v) < 1e-10);
      CHECK(T.vhh.v == pg.anholonomy().Omega.v);
      const auto D = pg.connection();
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int c = 0; c < 2; ++c) {
            CHECK_THAT(D.Lh(a, b, c), WithinAbs(D.Lh(a, c, b), 1e-12));
            CHECK_THAT(D.Cv(a, b, c), WithinAbs(D.Cv(a, c, b), 1e-12));
            CHECK(T.hhv(a, b, c) == D.Ch(a, b, c));
          }
    }
  }
}

TEST_CASE("quartic Finsler-type Lagrangian has nonzero vertical coefficients") {
  PointGeometry pg(parse(kQuartic, 2), PhasePoint({0.2, 0.1}, {1.0, 0.6}));
  const auto D = pg.connection();
  CHECK(oracle::max_abs(D.Ch.v) > 1e-3);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) CHECK_THAT(D.Ch(a, b, c), WithinAbs(D.Ch(a, c, b), 1e-12));
  CHECK(pg.compatibility_residual() < 1e-9);
}

TEST_CASE("Levi-Civita connection against finite differences of the coordinate metric") {
  std::mt19937_64 rng(22);
  for (const char* src : oracle::test_lagrangians()) {
    const Expr L = parse(src, 2);
    auto G = [&](const std::vector<double>& q) { return coordinate_metric(sasaki_dmetric(L, PhasePoint::from_u(q))); };
    for (int t = 0; t < 5; ++t) {
      const auto u = oracle::random_point(rng);
      PointGeometry pg(L, PhasePoint::from_u(u));
      const auto Gam = pg.levi_civita();
      const auto ref = oracle::christoffel(G, u);
      CHECK(oracle::max_diff(Gam.v, ref.v) < 1e-7);
      for (int g = 0; g < 4; ++g)
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) CHECK(Gam(g, a, b) == Gam(g, b, a));
      // nabla G = 0 with finite-difference coordinate derivatives.
      const auto G0 = G(u);
      for (int c = 0; c < 4; ++c)
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            double s = oracle::rich([&](const std::vector<double>& q) { return G(q)(a, b); }, u, c);
            for (int d = 0; d < 4; ++d) s -= Gam(d, a, c) * G0(d, b) + Gam(d, b, c) * G0(a, d);
            CHECK(std::fabs(s) < 1e-7);
          }
    }
  }
}

TEST_CASE("distortion identity") {
  std::mt19937_64 rng(23);
  for (const char* src : oracle::test_lagrangians()) {
    const Expr L = parse(src, 2);
    for (int t = 0; t < 25; ++t) {
      const auto u = oracle::random_point(rng);
      const LagrangeJet J = lagrange_jet(L, u);
      PointGeometry pg(L, PhasePoint::from_u(u));
      const auto koszul = oracle::koszul_adapted(J.dmetric());
      const auto D = pg.dconnection_full();
      const auto Z = pg.distortion_full();
      double err = 0;
      for (std::size_t k = 0; k < koszul.v.size(); ++k) err = std::max(err, std::fabs(koszul.v[k] - D.v[k] - Z.v[k]));
      INFO(src);
      CHECK(err < 1e-8);
      CHECK(oracle::max_diff(pg.levi_civita_adapted().v, koszul.v) < 1e-9);
      CHECK(pg.distortion_identity_residual() < 1e-8);
      const auto Zb = pg.distortion();
      CHECK(oracle::max_abs(Zb.i_jk.v) == 0.0);
      CHECK(oracle::max_abs(Zb.a_bc.v) == 0.0);
    }
  }
  SECTION("the printed vertical-mixed blocks fail the identity when C is nonzero") {
    PointGeometry pg(parse(kQuartic, 2), PhasePoint({0.2, 0.1}, {1.0, 0.6}));
    CHECK(pg.distortion_identity_residual() < 1e-10);
    CHECK(pg.distortion_identity_residual(DistortionForm::printed) > 1e-3);
  }
  SECTION("constant metrics with N = 0 have no distortion") {
    PointGeometry pg(parse("2*y1^2 + y1*y2 + 3*y2^2", 2), PhasePoint({0.4, 0.2}, {0.3, 0.9}));
    CHECK(oracle::max_abs(pg.distortion_full().v) == 0.0);
  }
  SECTION("injected integrable state: N = 0, g_h(x), constant g_v") {
    const auto u = std::vector<double>{0.3, -0.4, 0.8, 0.5};
    const auto dm = dmetric_jets(exprs({"exp(sin(x1))", "0.1*x2", "0.1*x2", "1+x1^2"}), exprs({"2", "0", "0", "1"}),
                                 exprs({"0", "0", "0", "0"}), u);
    PointGeometry pg(dm);
    CHECK(oracle::max_abs(pg.distortion_full().v) < 1e-15);
    CHECK(oracle::max_diff(pg.levi_civita_adapted().v, pg.dconnection_full().v) < 1e-15);
    CHECK(oracle::max_diff(oracle::koszul_adapted(dm).v, pg.dconnection_full().v) < 1e-12);
  }
  SECTION("injected state with x-dependent g_v keeps a horizontal-vertical distortion") {
    const auto u = std::vector<double>{0.3, -0.4, 0.8, 0.5};
    const auto dm = dmetric_jets(exprs({"1", "0", "0", "1"}), exprs({"exp(x1)", "0", "0", "1"}),
                                 exprs({"0", "0", "0", "0"}), u);
    PointGeometry pg(dm);
    CHECK(oracle::max_abs(pg.distortion().i_ab.v) > 0.1);
    CHECK(pg.distortion_identity_residual() < 1e-12);
  }
}

TEST_CASE("Riemannian reduction") {
  const Expr L = parse(kRiemannian, 2);
  std::mt19937_64 rng(24);
  for (int t = 0; t < 10; ++t) {
    const auto u = oracle::random_point(rng);
    PointGeometry pg(L, PhasePoint::from_u(u));
    const auto D = pg.connection();
    const auto G = oracle::christoffel(riemannian_base, {u[0], u[1]});
    CHECK(oracle::max_diff(D.Lh.v, G.v) < 1e-8);
    CHECK(oracle::max_abs(D.Ch.v) < 1e-12);
    CHECK(oracle::max_abs(D.Cv.v) < 1e-12);
    const auto C = pg.curvature();
    const auto Rm = oracle::riemann(riemannian_base, {u[0], u[1]});
    CHECK(oracle::max_diff(C.hhhh.v, Rm.v) < 1e-6);
    for (const auto* b : {&C.hhhv, &C.vvhv, &C.hhvv, &C.vvvv}) CHECK(oracle::max_abs(b->v) < 1e-9);
    const auto R = pg.ricci();
    CHECK(oracle::max_abs(R.hv.v) < 1e-9);
    CHECK(oracle::max_abs(R.vh.v) < 1e-9);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double ric = 0;
        for (int k = 0; k < 2; ++k) ric += Rm(k, i, j, k);
        CHECK_THAT(R.hh(i, j), WithinAbs(ric, 1e-6));
      }
  }
  SECTION("exponential warp is flat") {
    PointGeometry pg(parse("exp(2*x1)*y1^2 + y2^2", 2), PhasePoint({0.3, 0.1}, {0.5, 0.7}));
    const auto C = pg.curvature();
    CHECK(oracle::max_abs(C.hhhh.v) < 1e-12);
  }
}

TEST_CASE("curvature block antisymmetries and Ricci contractions") {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 100; ++t) {
    const char* src = oracle::test_lagrangians()[t % 4];
    PointGeometry pg(parse(src, 2), PhasePoint::from_u(oracle::random_point(rng)));
    const auto C = pg.curvature();
    const auto R = pg.ricci();
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q)
        for (int r = 0; r < 2; ++r)
          for (int s = 0; s < 2; ++s) {
            CHECK_THAT(C.hhhh(p, q, r, s), WithinAbs(-C.hhhh(p, q, s, r), 1e-10));
            CHECK_THAT(C.vvhh(p, q, r, s), WithinAbs(-C.vvhh(p, q, s, r), 1e-10));
            CHECK_THAT(C.hhvv(p, q, r, s), WithinAbs(-C.hhvv(p, q, s, r), 1e-10));
            CHECK_THAT(C.vvvv(p, q, r, s), WithinAbs(-C.vvvv(p, q, s, r), 1e-10));
          }
    const DMetric dm = pg.dmetric();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double hh = 0, hv = 0, vh = 0, vv = 0;
        for (int k = 0; k < 2; ++k) {
          hh += C.hhhh(k, i, j, k);
          hv -= C.hhhv(k, i, k, j);
          vh += C.vvhv(k, i, j, k);
          vv += C.vvvv(k, i, j, k);
        }
        CHECK_THAT(R.hh(i, j), WithinAbs(hh, 1e-12));
        CHECK_THAT(R.hv(i, j), WithinAbs(hv, 1e-12));
        CHECK_THAT(R.vh(i, j), WithinAbs(vh, 1e-12));
        CHECK_THAT(R.vv(i, j), WithinAbs(vv, 1e-12));
      }
    const Scalars s = scalar_curvatures(R, dm);
    CHECK_THAT(s.R, WithinAbs(R.R, 1e-12));
    CHECK_THAT(s.S, WithinAbs(R.Sv, 1e-12));
    CHECK_THAT(s.sR, WithinAbs(R.sR, 1e-12));
    // g^{ab} G_ab over both blocks = (1 - n) sR.
    const auto E = einstein_dtensor(R, dm);
    double tr = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) tr += dm.gh.g_inv(i, j) * E.hh(i, j) + dm.gv.g_inv(i, j) * E.vv(i, j);
    CHECK_THAT(tr, WithinAbs(-s.sR, 1e-10 * std::max(1.0, std::fabs(s.sR))));
    const auto E2 = pg.einstein();
    CHECK(oracle::max_diff(E.hh.v, E2.hh.v) < 1e-12);
  }
}

// D g = 0 makes every curvature operator skew: g_im R^m_h.. = -g_hm R^m_i..
TEST_CASE("lowered curvature blocks are skew in the first pair") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 40; ++t) {
    const char* src = oracle::test_lagrangians()[t % 4];
    PointGeometry pg(parse(src, 2), PhasePoint::from_u(oracle::random_point(rng)));
    const auto C = pg.curvature();
    const DMetric dm = pg.dmetric();
    auto check = [&](const Ten4<double>& R, const Mat<double>& g) {
      double scale = 1;
      for (double v : R.v) scale = std::max(scale, std::fabs(v));
      for (int i = 0; i < 2; ++i)
        for (int h = 0; h < 2; ++h)
          for (int j = 0; j < 2; ++j)
            for (int l = 0; l < 2; ++l) {
              double s = 0;
              for (int q = 0; q < 2; ++q) s += g(i, q) * R(q, h, j, l) + g(h, q) * R(q, i, j, l);
              CHECK(std::fabs(s) < 1e-10 * scale);
            }
    };
    check(C.hhhh, dm.gh.g);
    check(C.vvhh, dm.gv.g);
    check(C.hhhv, dm.gh.g);
    check(C.vvhv, dm.gv.g);
    check(C.hhvv, dm.gh.g);
    check(C.vvvv, dm.gv.g);
  }
}

TEST_CASE("mixed Ricci blocks of a Finsler-type Lagrangian are computed independently") {
  PointGeometry pg(parse("sqrt(y1^4+y2^4) + 0.1*sin(x1)*y1^2", 2), PhasePoint({0.4, 0.1}, {1.0, 0.7}));
  const auto R = pg.ricci();
  CHECK(oracle::max_abs(R.hv.v) > 1e-6);
  CHECK(oracle::max_diff(R.hv.v, R.vh.v) > 1e-6);
}

TEST_CASE("Levi-Civita Ricci of a conformally flat state") {
  // g = e^{2 phi(x1)} on all four axes, N = 0: Ric = -2(Hess phi - dphi dphi) - (Lap phi + 2|dphi|^2) I.
  const auto u = std::vector<double>{0.3, -0.2, 0.5, 0.8};
  const char* w = "exp(0.6*sin(x1))";
  const auto dm = dmetric_jets(exprs({w, "0", "0", w}), exprs({w, "0", "0", w}), exprs({"0", "0", "0", "0"}), u);
  PointGeometry pg(dm);
  const auto r = pg.lc_ricci();
  const double p1 = 0.3 * std::cos(u[0]), p11 = -0.3 * std::sin(u[0]);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      double ref = (a == b) ? -(p11 + 2 * p1 * p1) : 0.0;
      if (a == 0 && b == 0) ref += -2 * (p11 - p1 * p1);
      CHECK_THAT(r.Ric(a, b), WithinAbs(ref, 1e-12));
      CHECK_THAT(r.Ric(a, b), WithinAbs(r.Ric(b, a), 1e-12));
    }
  const double scal = std::exp(-0.6 * std::sin(u[0])) * (-6 * p11 - 6 * p1 * p1);
  CHECK_THAT(r.scalar, WithinAbs(scal, 1e-12));
}

TEST_CASE("inspect document carries every object with index metadata") {
  const auto doc = inspect_document(parse(kQuartic, 2), PhasePoint({0.2, 0.1}, {1.0, 0.6}));
  for (const char* k : {"metric", "spray", "nconnection", "frames", "anholonomy", "dconnection", "levi_civita",
                        "torsion", "distortion", "curvature", "ricci", "scalars", "einstein", "lc_ricci"})
    CHECK(doc.contains(k));
  CHECK(doc["dconnection"].contains("index_order"));
  CHECK(doc["distortion"]["identity_residual"].get<double>() < 1e-10);
}
