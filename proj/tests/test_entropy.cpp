#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ffr/entropy.hpp"
#include "states.hpp"

using namespace ffr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kTwoPi = states::kTwoPi;

std::vector<FlowState> assorted() {
  std::vector<FlowState> out;
  out.push_back(states::flat(states::domain({8, 8, 8, 8})));
  out.push_back(states::integrable(16));
  out.push_back(states::generic(8));
  out.push_back(states::product(16, 0.7));
  out.push_back(states::quartic(8));
  for (auto& s : out) normalize_f(s);
  return out;
}

// Random smooth perturbation of a product state: blocks depend on (x1) and
// (y1) only, as the state does.
struct Perturbation {
  Mat<ScalarField> vh, vv;
  ScalarField df;
};

Perturbation perturbation(const DomainPtr& dom, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  double a[8];
  for (auto& x : a) x = U(rng);
  const ScalarField z(dom, 0.0);
  Perturbation p{Mat<ScalarField>(2, 2, z), Mat<ScalarField>(2, 2, z), z};
  p.vh(0, 0) = states::field(dom, [&](auto& u) { return a[0] * std::sin(kTwoPi * u[0] + a[1]); });
  p.vh(0, 1) = p.vh(1, 0) = states::field(dom, [&](auto& u) { return a[2] * std::cos(kTwoPi * u[0]); });
  p.vh(1, 1) = ScalarField(dom, a[3]);
  p.vv(0, 0) = states::field(dom, [&](auto& u) { return a[4] * std::cos(kTwoPi * u[2]); });
  p.vv(1, 1) = states::field(dom, [&](auto& u) { return a[5] * std::sin(kTwoPi * u[2]); });
  p.df = states::field(dom, [&](auto& u) { return a[6] * std::sin(kTwoPi * u[0]) + a[7] * std::cos(kTwoPi * u[2]); });
  return p;
}

double central_difference(const FlowState& s, const Perturbation& p, double eps = 1e-5) {
  auto F = [&](double e) {
    FlowState q = s;
    for (std::size_t k = 0; k < 4; ++k) {
      axpy(q.dm.gh.v[k], e, p.vh.v[k]);
      axpy(q.dm.gv.v[k], e, p.vv.v[k]);
    }
    axpy(q.f, e, p.df);
    return f_functional(q, Connection::dconn);
  };
  return (F(eps) - F(-eps)) / (2 * eps);
}

}  // namespace

TEST_CASE("measure normalization") {
  const auto dom = states::domain({8, 8, 8, 8}, {0, 0, 0, 0}, {2, 1, 1, 1});
  FlowState s = states::flat(dom, 0.5);
  SECTION("flat torus") {
    const double shift = normalize_f(s);
    CHECK_THAT(shift, WithinAbs(std::log(2.0) - 2 * std::log(4 * kPi * 0.5), 1e-14));
    CHECK(measure(s).residual < 1e-14);
    CHECK_THAT(normalize_f(s), WithinAbs(0.0, 1e-14));
  }
  SECTION("a shifted potential normalizes to the same field") {
    s.f = states::field(dom, [](auto& u) { return 3 * std::sin(kTwoPi * u[1]); });
    FlowState t = s;
    t.f += 40.0;
    normalize_f(s);
    normalize_f(t);
    CHECK(states::max_diff(s.f, t.f) < 1e-12);
  }
}

TEST_CASE("F functional") {
  SECTION("vanishes on flat states with constant f") {
    FlowState s = states::flat(states::domain({8, 8, 8, 8}));
    s.f += 0.3;
    CHECK(f_functional(s, Connection::dconn) == 0.0);
    CHECK(f_functional(s, Connection::lc) == 0.0);
  }
  SECTION("flat state with f = sin(2 pi x1) against quadrature") {
    const auto dom = states::domain({1024, 8, 8, 8});
    FlowState s = states::flat(dom);
    s.f = states::field(dom, [](auto& u) { return std::sin(kTwoPi * u[0]); });
    // int (2 pi cos)^2 e^-sin dx on a fine periodic grid (spectrally accurate).
    const int m = 1 << 14;
    long double ref = 0;
    for (int j = 0; j < m; ++j) {
      const double x = static_cast<double>(j) / m;
      ref += std::pow(kTwoPi * std::cos(kTwoPi * x), 2) * std::exp(-std::sin(kTwoPi * x));
    }
    ref /= m;
    CHECK_THAT(f_functional(s, Connection::dconn), WithinAbs(static_cast<double>(ref), 1e-8));
    CHECK_THAT(f_functional(s, Connection::lc), WithinAbs(static_cast<double>(ref), 1e-8));
  }
  SECTION("connections agree on integrable states") {
    const FlowState s = states::integrable(16);
    CHECK_THAT(f_functional(s, Connection::lc), WithinAbs(f_functional(s, Connection::dconn), 1e-9));
  }
}

TEST_CASE("W functional") {
  const auto dom = states::domain({8, 8, 8, 8});
  FlowState s = states::normalized(states::flat(dom, 1.0));
  const double f0 = s.f[0];
  CHECK_THAT(w_functional(s, Connection::dconn), WithinAbs(f0 - 4, 1e-12));
  CHECK_THAT(w_functional(s, Connection::dconn, true), WithinAbs(f0 - 4, 1e-12));
  FlowState t = states::normalized(states::product(16));
  CHECK(std::fabs(w_functional(t, Connection::dconn, true) - w_functional(t, Connection::dconn)) > 1e-3);
  s.tau = 0;
  CHECK_THROWS_AS(w_functional(s, Connection::dconn), Error);
}

TEST_CASE("first variation of F") {
  SECTION("vanishes for the zero perturbation") {
    const FlowState s = states::product(16);
    const ScalarField z(s.domain(), 0.0);
    CHECK(first_variation_F(s, Mat<ScalarField>(2, 2, z), Mat<ScalarField>(2, 2, z), z) == 0.0);
  }
  SECTION("matches central differences") {
    const FlowState s = states::product(48);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 3; ++t) {
      const Perturbation p = perturbation(s.domain(), rng);
      const double an = first_variation_F(s, p.vh, p.vv, p.df);
      CHECK_THAT(an, WithinRel(central_difference(s, p), 1e-4));
    }
  }
}

TEST_CASE("monotonicity right-hand sides") {
  SECTION("flat state with normalized constant f") {
    const FlowState s = states::normalized(states::flat(states::domain({8, 8, 8, 8}), 1.0));
    CHECK(monotonicity_rhs_F(s) == 0.0);
    CHECK_THAT(monotonicity_rhs_W(s), WithinAbs(2.0, 1e-12));  // n / tau
    FlowState t = states::normalized(states::flat(states::domain({8, 8, 8, 8}), 2.0));
    CHECK_THAT(monotonicity_rhs_W(t), WithinAbs(1.0, 1e-12));
  }
  SECTION("nonnegative on assorted states") {
    for (const auto& s : assorted())
      for (auto conn : {Connection::dconn, Connection::lc}) {
        CHECK(monotonicity_rhs_F(s, conn) >= 0);
        CHECK(monotonicity_rhs_W(s, conn) >= 0);
      }
  }
}

TEST_CASE("thermodynamic identity") {
  SECTION("flat closed forms") {
    const FlowState s = states::normalized(states::flat(states::domain({8, 8, 8, 8}), 1.0));
    const double f0 = s.f[0];
    for (auto conn : {Connection::dconn, Connection::lc}) {
      const ThermoReport r = thermodynamics(s, conn);
      CHECK_THAT(r.E_avg, WithinAbs(2.0, 1e-10));
      CHECK_THAT(r.S, WithinAbs(4 - f0, 1e-10));
      CHECK_THAT(r.sigma, WithinAbs(2.0, 1e-10));  // 2 tau^4 n / (2 tau^2)
      CHECK(std::fabs(r.identity_residual) < 1e-10);
    }
  }
  SECTION("identity and sign on assorted states") {
    for (const auto& s : assorted())
      for (auto conn : {Connection::dconn, Connection::lc}) {
        const ThermoReport r = thermodynamics(s, conn, true);
        CHECK(std::fabs(r.identity_residual) < 1e-10);
        CHECK(r.sigma >= 0);
        CHECK(r.W_paper_literal.has_value());
        CHECK_THAT(r.S, WithinAbs(-r.W, 1e-12));
      }
  }
  SECTION("unnormalized measures are rejected") {
    FlowState s = states::flat(states::domain({8, 8, 8, 8}));
    CHECK_THROWS_AS(thermodynamics(s, Connection::dconn), Error);
  }
}

TEST_CASE("measure gauge invariance") {
  for (const auto& s : assorted()) {
    FlowState t = s;
    t.f += 2.5;
    normalize_f(t);
    for (auto conn : {Connection::dconn, Connection::lc}) {
      const ThermoReport a = thermodynamics(s, conn), b = thermodynamics(t, conn);
      CHECK_THAT(b.F, WithinAbs(a.F, 1e-10));
      CHECK_THAT(b.W, WithinAbs(a.W, 1e-10));
      CHECK_THAT(b.S, WithinAbs(a.S, 1e-10));
      CHECK_THAT(b.E_avg, WithinAbs(a.E_avg, 1e-10));
    }
  }
}

TEST_CASE("connection comparison") {
  SECTION("integrable states are equivalent") {
    const auto c = compare_connections(states::normalized(states::integrable(16)));
    CHECK(c.verdict == "equivalent");
    CHECK(std::fabs(c.difference) < 1e-8);
    CHECK(c.dconn.verdict == c.verdict);
  }
  SECTION("quartic Finsler state") {
    const auto c = compare_connections(states::normalized(states::quartic(8)));
    INFO("difference " << c.difference);
    CHECK(c.verdict == "dconn-favored");
    CHECK(compare_connections(states::normalized(states::quartic(8))).difference == c.difference);
  }
  SECTION("report serialization") {
    const auto c = compare_connections(states::normalized(states::flat(states::domain({8, 8, 8, 8}))));
    const auto j = to_json(c.lc);
    CHECK(j["connection"] == "lc");
    CHECK(j["verdict"] == "equivalent");
    CHECK(!j.contains("W_paper_literal"));
    for (const char* k : {"tau", "F", "W", "logZ", "E_avg", "S", "sigma", "identity_residual"}) CHECK(j.contains(k));
  }
}
