#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ffr/flow.hpp"
#include "states.hpp"

using namespace ffr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kTwoPi = states::kTwoPi;

// Independent reference for the conformal test: d phi / d chi = exp(-2 phi)
// phi'' for g_h = exp(2 phi(x1)) I, with a Fourier second derivative on a
// periodic grid and classical RK4.
std::vector<double> conformal_reference(double a, int m, double T, int steps) {
  std::vector<double> phi(m);
  for (int j = 0; j < m; ++j) phi[j] = a * std::sin(kTwoPi * j / m);
  std::vector<std::vector<double>> D2(m, std::vector<double>(m, 0.0));
  for (int j = 0; j < m; ++j)
    for (int l = 0; l < m; ++l) {
      double s = 0;
      for (int k = 1; k < m / 2; ++k) s -= 2 * std::pow(kTwoPi * k, 2) * std::cos(kTwoPi * k * (j - l) / m);
      s -= std::pow(kTwoPi * m / 2, 2) * std::cos(ffr::kPi * (j - l));
      D2[j][l] = s / m;
    }
  auto rhs = [&](const std::vector<double>& p) {
    std::vector<double> r(m);
    for (int j = 0; j < m; ++j) {
      double s = 0;
      for (int l = 0; l < m; ++l) s += D2[j][l] * p[l];
      r[j] = std::exp(-2 * p[j]) * s;
    }
    return r;
  };
  const double dt = T / steps;
  for (int k = 0; k < steps; ++k) {
    auto add = [&](const std::vector<double>& p, const std::vector<double>& d, double c) {
      std::vector<double> q(m);
      for (int j = 0; j < m; ++j) q[j] = p[j] + c * d[j];
      return q;
    };
    const auto k1 = rhs(phi), k2 = rhs(add(phi, k1, dt / 2)), k3 = rhs(add(phi, k2, dt / 2)), k4 = rhs(add(phi, k3, dt));
    for (int j = 0; j < m; ++j) phi[j] += dt / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
  }
  return phi;
}

FlowState conformal_base(double a, int res) {
  const auto dom = states::domain({res, 8, 8, 8});
  char ph[96];
  std::snprintf(ph, sizeof ph, "exp(%.17g*sin(6.283185307179586*x1))", 2 * a);
  return FlowState{sample_blocks(dom, {ph, "0", "0", ph}, {"1", "0", "0", "1"}, {"0", "0", "0", "0"}),
                   ScalarField(dom, 0.0), 0, 1};
}

FlowState run_steps(FlowState s, int steps, double dt, Connection conn, Integrator integ) {
  for (int k = 0; k < steps; ++k)
    s = conn == Connection::dconn ? step_dconn(s, dt, 0, integ) : step_lc(s, dt, 0, integ);
  return s;
}

}  // namespace

TEST_CASE("flat and constant states are fixed points") {
  const auto dom = states::domain({8, 8, 8, 8});
  auto s = states::flat(dom);
  s.dm.gh(0, 1) = s.dm.gh(1, 0) = ScalarField(dom, 0.3);
  s.dm.gv(1, 1) = ScalarField(dom, 2.5);
  s.dm.N(0, 1) = ScalarField(dom, 0.7);
  for (auto conn : {Connection::dconn, Connection::lc})
    for (auto integ : {Integrator::euler, Integrator::rk4}) {
      const FlowState t = flow_detail::step_metric(s, 1e-3, conn, [](const DMetricField&) { return 0.0; }, integ, nullptr);
      CHECK(states::max_diff(t.dm.gh, s.dm.gh) < 1e-12);
      CHECK(states::max_diff(t.dm.gv, s.dm.gv) < 1e-12);
      CHECK(t.chi == 1e-3);
    }
}

TEST_CASE("conformal flow matches the scalar reference") {
  const double a = 0.3;
  const FlowState s0 = conformal_base(a, 32);
  const double dt = 1e-4;
  const int steps = 20;
  const FlowState s = run_steps(s0, steps, dt, Connection::dconn, Integrator::rk4);
  const auto ref = conformal_reference(a, 64, steps * dt, 4 * steps);
  const auto& dom = *s.domain();
  double err = 0, change = 0;
  for (std::size_t node = 0; node < dom.size(); node += dom.stride(0)) {
    const int i = dom.multi(node)[0];
    const double phi = 0.5 * std::log(s.dm.gh(0, 0)[node]);
    err = std::max(err, std::fabs(phi - ref[2 * i]));
    change = std::max(change, std::fabs(ref[2 * i] - a * std::sin(kTwoPi * i / 32)));
    CHECK(s.dm.gh(1, 1)[node] == s.dm.gh(0, 0)[node]);
  }
  INFO("err " << err << " change " << change);
  CHECK(change > 1e-2);
  CHECK(err < 1e-3 * change);
  CHECK(states::max_diff(s.dm.gv, s0.dm.gv) == 0.0);
}

TEST_CASE("integrator order on the conformal test") {
  const FlowState s0 = states::shrinking_conformal(0.5, 16);
  const double dt0 = stable_dt(s0);
  const int n0 = 8;
  const FlowState ref = run_steps(s0, 16 * n0, dt0 / 16, Connection::dconn, Integrator::rk4);
  auto err = [&](int refine, Integrator integ) {
    const FlowState s = run_steps(s0, n0 * refine, dt0 / refine, Connection::dconn, integ);
    return states::max_diff(s.dm.gh, ref.dm.gh);
  };
  const double e1 = err(1, Integrator::euler), e2 = err(2, Integrator::euler);
  INFO("euler " << e1 << " " << e2);
  CHECK_THAT(std::log2(e1 / e2), WithinAbs(1.0, 0.1));
  const double r1 = err(1, Integrator::rk4), r2 = err(2, Integrator::rk4);
  INFO("rk4 " << r1 << " " << r2);
  CHECK_THAT(std::log2(r1 / r2), WithinAbs(4.0, 0.4));
}

TEST_CASE("Euler step is the discretized flow equation") {
  const FlowState s = states::generic(8);
  MetricRate k;
  const double dt = 1e-4, lam = 0.3;
  const FlowState t = step_dconn(s, dt, lam, Integrator::euler, &k);
  GridGeometry geo = grid_geometry(s.dm);
  const auto& R = geo.ricci();
  double e = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const ScalarField lhs = (t.dm.gh(i, j) - s.dm.gh(i, j)) * (1 / dt);
      const ScalarField rhs = (R.hh(i, j) + R.hh(j, i)) * -1.0 + s.dm.gh(i, j) * (2 * lam);
      e = std::max(e, states::max_diff(lhs, rhs));
    }
  CHECK(e < 1e-8);
  CHECK(k.lambda == lam);
}

TEST_CASE("d-connection and Levi-Civita flows agree on integrable states") {
  FlowState s = states::integrable(16);
  for (int k = 0; k < 3; ++k) {
    const FlowState a = step_dconn(s, 1e-4, 0), b = step_lc(s, 1e-4, 0);
    CHECK(states::max_diff(a.dm.gh, b.dm.gh) < 1e-9);
    s = a;
  }
}

TEST_CASE("symmetry is preserved bit-exactly and constraints are recorded") {
  FlowState s = states::generic(8);
  MetricRate info;
  for (int k = 0; k < 3; ++k) s = step_dconn(s, 1e-4, 0, Integrator::rk4, &info);
  CHECK(s.dm.gh(0, 1).values() == s.dm.gh(1, 0).values());
  CHECK(s.dm.gv(0, 1).values() == s.dm.gv(1, 0).values());
  CHECK(info.mixed_residual > 1e-6);
  CHECK(info.asym_norm >= 0);
  CHECK(states::max_diff(s.dm.N, states::generic(8).dm.N) == 0.0);  // N is held fixed

  FlowState l = states::generic(8);
  l = step_lc(l, 1e-4, 0, Integrator::euler, &info);
  CHECK(l.dm.gh(0, 1).values() == l.dm.gh(1, 0).values());
  CHECK(info.mixed_residual > 1e-6);
}

TEST_CASE("regularity failures name chi and the node") {
  FlowState s = states::flat(states::domain({8, 8, 8, 8}));
  s.dm.gh(0, 0)[5] = 1e-30;
  try {
    check_state(s.dm, 0.25, kDefaultEpsReg);
    FAIL("expected a regularity error");
  } catch (const RegularityError& e) {
    CHECK(std::string(e.what()).find("chi = 0.25") != std::string::npos);
  }
  s.dm.gh(0, 0)[5] = NAN;
  CHECK_THROWS_AS(check_state(s.dm, 0, kDefaultEpsReg), NumericalError);
}

TEST_CASE("normalization constant") {
  const FlowState flat = states::flat(states::domain({8, 8, 8, 8}));
  CHECK(lambda_normalization(flat, Connection::dconn, true) == 0.0);
  const FlowState s = states::shrinking_conformal(0.5, 16);
  CHECK(lambda_normalization(s, Connection::dconn, false) == 0.0);
  GridGeometry geo = grid_geometry(s.dm);
  const ScalarField dV = volume_element(s.dm);
  const double r = integrate(geo.ricci().sR, dV) / integrate(dV);
  CHECK_THAT(lambda_normalization(s, Connection::dconn, true), WithinRel(r / 5, 1e-12));
  CHECK_THAT(lambda_normalization(s, Connection::dconn, true, 4), WithinRel(r / 4, 1e-12));
  CHECK(r > 0);
}

TEST_CASE("volume under normalized and unnormalized flow") {
  const FlowState s = states::shrinking_conformal(0.5, 16);
  auto drift = [&](bool normalize, double divisor) {
    FlowConfig cfg;
    cfg.steps = 100;
    cfg.stride = 100;
    cfg.normalize = normalize;
    cfg.lambda_divisor = divisor;
    const auto res = run(cfg, s);
    REQUIRE(res.records.size() == 2);
    return res.records.back().volume / res.records.front().volume - 1;
  };
  CHECK(drift(false, 5) < -0.1);
  CHECK(std::fabs(drift(true, 4)) < 1e-3);  // lambda = r / (2n) preserves the volume to first order
}

TEST_CASE("f equation") {
  const auto dom = states::domain({8, 8, 8, 8});
  FlowState s = states::flat(dom, 2.0);
  s.f = ScalarField(dom, 0.7);
  SECTION("F mode leaves a constant f on a flat state unchanged") {
    CHECK(states::max_diff(step_f(s, 1e-3, Coupling::F).f, s.f) == 0.0);
  }
  SECTION("W mode shifts it by n / tau per unit time") {
    const FlowState t = step_f(s, 1e-3, Coupling::W);
    CHECK_THAT(t.f.min(), WithinAbs(0.7 + 1e-3 * 2 / 2.0, 1e-15));
    CHECK_THAT(t.f.max(), WithinAbs(0.7 + 1e-3 * 2 / 2.0, 1e-15));
    CHECK(t.tau == 2.0 - 1e-3);
  }
  SECTION("off mode does nothing") { CHECK(states::max_diff(step_f(s, 1, Coupling::off).f, s.f) == 0.0); }
  SECTION("the coupled measure e^-f dV is conserved to second order per step") {
    FlowState p = states::conformal_product(0.3, 16);
    p.f = states::field(p.domain(), [](auto& u) { return 0.3 * std::cos(kTwoPi * u[0]) + 0.2 * std::sin(kTwoPi * u[2]); });
    auto mass = [](const FlowState& q) { return integrate(exp_neg(q.f), volume_element(q.dm)); };
    auto drift = [&](double dt) {
      FlowState q = step_dconn(p, dt, 0);
      q.f = step_f(p, dt, Coupling::F).f;
      return std::fabs(mass(q) / mass(p) - 1);
    };
    const double d1 = drift(1e-4), d2 = drift(5e-5);
    INFO(d1 << " " << d2);
    CHECK(d1 < 1e-5);
    CHECK(d1 / d2 > 3.0);
  }
}

TEST_CASE("coupled run keeps F nondecreasing") {
  FlowState s = states::conformal_product(0.3, 16);
  s.f = states::field(s.domain(), [](auto& u) { return 0.3 * std::cos(kTwoPi * u[0]) + 0.2 * std::sin(kTwoPi * u[2]); });
  FlowConfig cfg;
  cfg.dt = 1e-4;
  cfg.steps = 40;
  cfg.stride = 4;
  cfg.coupling = Coupling::F;
  const auto res = run(cfg, s);
  REQUIRE(res.records.size() == 11);
  for (std::size_t k = 1; k < res.records.size(); ++k) {
    const auto& a = res.records[k - 1];
    const auto& b = res.records[k];
    CHECK(b.chi > a.chi);
    CHECK((b.F - a.F) / (b.chi - a.chi) >= -1e-6);
    CHECK(a.rhs_F >= 0);
  }
  CHECK(res.records.back().F > res.records.front().F);
}

TEST_CASE("run output") {
  const auto dir = std::filesystem::temp_directory_path() / "ffr_test_flow_run";
  std::filesystem::remove_all(dir);
  FlowConfig cfg;
  cfg.steps = 6;
  cfg.stride = 2;
  const auto res = run(cfg, states::shrinking_conformal(0.5, 16), dir.string());
  CHECK(res.records.size() == 4);
  std::ifstream ts(dir / "timeseries.csv");
  std::string line;
  std::getline(ts, line);
  CHECK(line == kTimeSeriesHeader);
  int rows = 0;
  while (std::getline(ts, line)) ++rows;
  CHECK(rows == 4);
  CHECK(std::filesystem::exists(dir / "run.json"));
  CHECK(std::filesystem::exists(dir / "snap_000003.csv"));
  CHECK(std::filesystem::exists(dir / "snap_000003.json"));
  CHECK(res.records.back().chi == Catch::Approx(6 * res.dt));

  cfg.stride = 0;
  CHECK_THROWS_AS(run(cfg, states::shrinking_conformal(0.5, 16)), ConfigError);
  cfg.stride = 1;
  cfg.dt = 2.0;
  CHECK_THROWS_AS(run(cfg, states::shrinking_conformal(0.5, 16)), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame evolution") {
  const FlowState s = states::generic(8);
  GridGeometry geo = grid_geometry(s.dm);
  const int m = 4;
  // Frames e_i = A (d_i - N^a_i d_a), e_a = B d_a with A A^T = g_h^-1, B B^T = g_v^-1.
  auto chol = [](const Mat<ScalarField>& gi) {
    Mat<ScalarField> L(2, 2, zero_like(gi(0, 0)));
    for (std::size_t k = 0; k < gi(0, 0).size(); ++k) {
      const double l00 = std::sqrt(gi(0, 0)[k]), l10 = gi(1, 0)[k] / l00;
      L(0, 0)[k] = l00;
      L(1, 0)[k] = l10;
      L(1, 1)[k] = std::sqrt(gi(1, 1)[k] - l10 * l10);
    }
    return L;
  };
  const Mat<ScalarField> A = chol(geo.ghi()), B = chol(geo.gvi());
  Mat<ScalarField> E(m, m, geo.zero());
  for (int al = 0; al < 2; ++al)
    for (int i = 0; i < 2; ++i) {
      E(al, i) = A(i, al);
      for (int a = 0; a < 2; ++a) add_prod(E(al, 2 + a), -1.0, A(i, al), s.dm.N(a, i));
      E(2 + al, 2 + i) = B(i, al);
    }
  const std::vector<double> eta(m, 1.0);
  CHECK(states::max_diff(metric_from_frames(E, eta), geo.coordinate_metric()) < 1e-12);

  auto track = [&](double dt, int steps) {
    Mat<ScalarField> F = E;
    FlowState t = s;
    for (int k = 0; k < steps; ++k) {
      F = frame_evolution_step(F, t, dt, Connection::dconn);
      t = step_dconn(t, dt, 0);
    }
    double lower = 0;
    for (int a = 0; a < 2; ++a)
      for (int i = 0; i < 2; ++i) lower = std::max(lower, max_abs(F(2 + a, i)));
    CHECK(lower < 1e-12);
    return states::max_diff(metric_from_frames(F, eta), grid_geometry(t.dm).coordinate_metric());
  };
  const double e1 = track(2e-4, 4), e2 = track(1e-4, 8);
  INFO(e1 << " " << e2);
  CHECK(e1 < 1e-4);
  CHECK_THAT(e1 / e2, WithinAbs(2.0, 0.2));
}

TEST_CASE("breather classification") {
  const FlowState a = states::generic(8);
  FlowState b = a;
  const auto same = breather_classify(a, b, 1e-8);
  CHECK(same.h.label == "steady");
  CHECK(same.v.label == "steady");
  CHECK(same.h.alpha == 1.0);
  for (auto& e : b.dm.gh.v) e *= 2.0;
  for (auto& e : b.dm.gv.v) e *= 0.5;
  const auto scaled = breather_classify(a, b, 1e-8);
  CHECK(scaled.h.label == "expanding");
  CHECK_THAT(scaled.h.alpha, WithinRel(2.0, 1e-10));
  CHECK(scaled.v.label == "shrinking");
  CHECK_THAT(scaled.v.alpha, WithinRel(0.5, 1e-10));
  b.dm.gh(0, 0)[3] += 0.1;
  CHECK(breather_classify(a, b, 1e-8).h.label == "none");
}

TEST_CASE("time-series records") {
  TimeSeriesRecord r;
  r.chi = 0.1;
  r.F = 1.0 / 3;
  CHECK(csv_row(r).rfind("0.1,0,0.333333333333,", 0) == 0);
  CHECK(to_json(r)["F"] == 0.333333333333);
  FlowConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
