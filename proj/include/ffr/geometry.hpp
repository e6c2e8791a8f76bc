#pragma once

// Point-wise Lagrange geometry: Hessian metric, semispray, canonical
// N-connection, adapted frames, anholonomy, Sasaki d-metric, coordinate
// metric, and the Euler-Lagrange / semispray trajectories.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ffr/dgeom.hpp"
#include "ffr/expr.hpp"
#include "ffr/format.hpp"
#include "ffr/tensor.hpp"

namespace ffr {

inline constexpr double kDefaultEpsReg = 1e-10;

struct PhasePoint {
  std::vector<double> x, y;

  PhasePoint() = default;
  PhasePoint(std::vector<double> xs, std::vector<double> ys) : x(std::move(xs)), y(std::move(ys)) {
    if (x.size() != y.size()) throw Error("phase point: x and y dimensions differ");
  }
  static PhasePoint from_u(const std::vector<double>& u) {
    const std::size_t n = u.size() / 2;
    return PhasePoint({u.begin(), u.begin() + n}, {u.begin() + n, u.end()});
  }
  int n() const { return static_cast<int>(x.size()); }
  std::vector<double> u() const {
    std::vector<double> r = x;
    r.insert(r.end(), y.begin(), y.end());
    return r;
  }
};

inline std::string describe(const std::vector<double>& u) {
  std::string s = "(";
  for (std::size_t i = 0; i < u.size(); ++i) s += (i ? ", " : "") + fmt_num(u[i]);
  return s + ")";
}

struct HMetric {
  Mat<double> g, g_inv;
  double det = 0.0;
};

struct NConnection {
  std::vector<double> G;  // G^a
  Mat<double> N;          // N(a, i) = N^a_i
};

struct FrameMatrix {
  Mat<double> e;      // e(alpha, abar), rows are coordinate indices
  Mat<double> e_inv;  // coframe
  std::vector<int> eta;
};

struct Anholonomy {
  Ten3<double> W, Omega;
};

struct DMetric {
  int n = 0;
  HMetric gh, gv;
  NConnection N;
};

// |det g| must exceed eps * (max-norm of g)^n.
inline void check_regular(double detv, double maxnorm, int n, double eps, const std::vector<double>& u,
                          const char* what = "Hessian") {
  const double thr = eps * std::pow(maxnorm, n);
  if (!(std::fabs(detv) > thr) || !std::isfinite(detv))
    throw RegularityError(std::string("degenerate ") + what + " at u = " + describe(u) + ": |det| = " +
                          fmt_num(std::fabs(detv)) + " <= " + fmt_num(thr));
}

template <class S>
Mat<double> values(const Mat<S>& m) {
  Mat<double> r(m.rows, m.cols, 0.0);
  for (std::size_t k = 0; k < m.v.size(); ++k) r.v[k] = value_of(m.v[k]);
  return r;
}
template <class S>
Ten3<double> values(const Ten3<S>& t) {
  Ten3<double> r(t.n, 0.0);
  for (std::size_t k = 0; k < t.v.size(); ++k) r.v[k] = value_of(t.v[k]);
  return r;
}
template <class S>
Ten4<double> values(const Ten4<S>& t) {
  Ten4<double> r(t.n, 0.0);
  for (std::size_t k = 0; k < t.v.size(); ++k) r.v[k] = value_of(t.v[k]);
  return r;
}

inline double max_abs(const Mat<double>& m) {
  double r = 0.0;
  for (double v : m.v) r = std::max(r, std::fabs(v));
  return r;
}

// Exact derivatives along the jet variables (x1..xn, y1..yn).
struct TaylorCalc {
  int n;
  Taylor dx(const Taylor& f, int k) const { return f.derivative(k); }
  Taylor dy(const Taylor& f, int a) const { return f.derivative(n + a); }
};

// All jet-level objects of L at u needed downstream.
struct LagrangeJet {
  int n = 0;
  std::vector<double> u;
  Taylor L;
  Mat<Taylor> g;      // Hessian metric
  Mat<Taylor> g_inv;
  Taylor g_det;
  std::vector<Taylor> G;  // spray
  Mat<Taylor> N;          // N(a, i)

  DMetricT<Taylor> dmetric() const { return DMetricT<Taylor>{n, g, g, N}; }
};

inline LagrangeJet lagrange_jet(const Expr& L, const std::vector<double>& u, int order = kMaxJetOrder,
                                double eps_reg = kDefaultEpsReg) {
  if (order < 3) throw Error("lagrange_jet needs order >= 3");
  const int n = L.n();
  LagrangeJet J;
  J.n = n;
  J.u = u;
  J.L = taylor(L, u, order);
  const TaylorLayout& lay = J.L.layout();
  J.g = Mat<Taylor>(n, n, Taylor());
  std::vector<Taylor> Ly;
  for (int a = 0; a < n; ++a) Ly.push_back(J.L.derivative(n + a));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Taylor gij = Ly[i].derivative(n + j) * 0.5;
      J.g(i, j) = gij;
      J.g(j, i) = std::move(gij);
    }
  J.g_det = det(J.g);
  check_regular(J.g_det.value(), max_abs(values(J.g)), n, eps_reg, u);
  J.g_inv = inverse(J.g, J.g_det);
  // 4 G^j = g^ij (d2L/dy^i dx^k y^k - dL/dx^i)
  std::vector<Taylor> bracket;
  for (int i = 0; i < n; ++i) {
    Taylor b = -J.L.derivative(i);
    for (int k = 0; k < n; ++k) b += Ly[i].derivative(k) * Taylor::variable(lay, n + k, u[n + k]);
    bracket.push_back(std::move(b));
  }
  for (int j = 0; j < n; ++j) {
    Taylor Gj = Taylor::constant(lay, 0.0);
    for (int i = 0; i < n; ++i) add_prod(Gj, 0.25, J.g_inv(j, i), bracket[i]);
    J.G.push_back(std::move(Gj));
  }
  J.N = Mat<Taylor>(n, n, Taylor());
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < n; ++i) J.N(a, i) = J.G[a].derivative(n + i);
  return J;
}

inline HMetric hessian_metric(const Expr& L, const PhasePoint& p, double eps_reg = kDefaultEpsReg) {
  const int n = L.n();
  Taylor t = taylor(L, p.u(), 2);
  HMetric h;
  h.g = Mat<double>(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::vector<int> alpha(2 * n, 0);
      ++alpha[n + i];
      ++alpha[n + j];
      h.g(i, j) = 0.5 * t.partial(alpha);
    }
  h.det = det(h.g);
  check_regular(h.det, max_abs(h.g), n, eps_reg, p.u());
  h.g_inv = inverse(h.g, h.det);
  return h;
}

inline NConnection spray(const Expr& L, const PhasePoint& p, double eps_reg = kDefaultEpsReg) {
  LagrangeJet J = lagrange_jet(L, p.u(), 3, eps_reg);
  NConnection c;
  for (const auto& Gj : J.G) c.G.push_back(Gj.value());
  return c;
}

inline NConnection nconnection(const Expr& L, const PhasePoint& p, double eps_reg = kDefaultEpsReg) {
  LagrangeJet J = lagrange_jet(L, p.u(), 3, eps_reg);
  NConnection c;
  for (const auto& Gj : J.G) c.G.push_back(Gj.value());
  c.N = values(J.N);
  return c;
}

// Eigenvalue signs of a symmetric matrix (cyclic Jacobi rotations).
inline std::vector<int> signature(const Mat<double>& g) {
  const int n = g.rows;
  Mat<double> a = g;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
        const double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<int> eta;
  for (int i = 0; i < n; ++i) eta.push_back(a(i, i) > 0 ? 1 : (a(i, i) < 0 ? -1 : 0));
  std::sort(eta.begin(), eta.end(), std::greater<int>());
  return eta;
}

// Vielbein of the coordinate metric: G = e diag(g_h, g_v) e^T.
inline FrameMatrix adapted_frames(const NConnection& c, const Mat<double>* gh = nullptr) {
  const int n = c.N.rows;
  FrameMatrix f;
  f.e = Mat<double>(2 * n, 2 * n, 0.0);
  f.e_inv = Mat<double>(2 * n, 2 * n, 0.0);
  for (int a = 0; a < 2 * n; ++a) {
    f.e(a, a) = 1.0;
    f.e_inv(a, a) = 1.0;
  }
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < n; ++b) {
      f.e(i, n + b) = c.N(b, i);
      f.e_inv(i, n + b) = -c.N(b, i);
    }
  f.eta = gh ? signature(*gh) : std::vector<int>(n, 1);
  return f;
}

inline Anholonomy anholonomy(const Expr& L, const PhasePoint& p, double eps_reg = kDefaultEpsReg) {
  LagrangeJet J = lagrange_jet(L, p.u(), 4, eps_reg);
  TaylorCalc calc{J.n};
  DGeometry<Taylor, TaylorCalc> geo(J.dmetric(), calc);
  const auto& A = geo.anholonomy();
  return Anholonomy{values(A.W), values(A.Omega)};
}

inline DMetric sasaki_dmetric(const Expr& L, const PhasePoint& p, double eps_reg = kDefaultEpsReg) {
  LagrangeJet J = lagrange_jet(L, p.u(), 3, eps_reg);
  DMetric d;
  d.n = J.n;
  d.gh.g = values(J.g);
  d.gh.g_inv = values(J.g_inv);
  d.gh.det = J.g_det.value();
  d.gv = d.gh;
  for (const auto& Gj : J.G) d.N.G.push_back(Gj.value());
  d.N.N = values(J.N);
  return d;
}

inline Mat<double> coordinate_metric(const DMetric& dm) {
  const int n = dm.n;
  Mat<double> G(2 * n, 2 * n, 0.0);
  const auto& N = dm.N.N;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double s = dm.gh.g(i, j);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) s += N(a, i) * N(b, j) * dm.gv.g(a, b);
      G(i, j) = s;
      G(j, i) = s;
    }
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int e = 0; e < n; ++e) s += N(e, i) * dm.gv.g(b, e);
      G(i, n + b) = s;
      G(n + b, i) = s;
    }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) G(n + a, n + b) = dm.gv.g(a, b);
  return G;
}

struct Trajectory {
  std::vector<double> s;               // parameter values
  std::vector<std::vector<double>> u;  // (x, y) per sample

  void write_csv(std::ostream& os, int n) const {
    os << "s";
    for (int i = 0; i < n; ++i) os << ",x" << i + 1;
    for (int i = 0; i < n; ++i) os << ",y" << i + 1;
    os << "\n";
    for (std::size_t k = 0; k < s.size(); ++k) {
      os << fmt_num(s[k]);
      for (double v : u[k]) os << "," << fmt_num(v);
      os << "\n";
    }
  }
};

namespace geometry_detail {

// dy/ds for the Euler-Lagrange system: H ydot = dL/dx - (d2L/dy dx) y, H = d2L/dy dy.
inline std::vector<double> el_rhs(const Expr& L, const std::vector<double>& u, double eps_reg) {
  const int n = L.n();
  Taylor t = taylor(L, u, 2);
  Mat<double> H(n, n, 0.0);
  std::vector<double> rhs(n, 0.0);
  std::vector<int> alpha(2 * n, 0);
  auto part = [&](int p, int q) {
    std::fill(alpha.begin(), alpha.end(), 0);
    ++alpha[p];
    if (q >= 0) ++alpha[q];
    return t.partial(alpha);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) H(i, j) = part(n + i, n + j);
    rhs[i] = part(i, -1);
    for (int k = 0; k < n; ++k) rhs[i] -= part(n + i, k) * u[n + k];
  }
  const double d = det(H);
  check_regular(d, max_abs(H), n, eps_reg, u);
  Mat<double> Hi = inverse(H, d);
  std::vector<double> f(2 * n, 0.0);
  for (int i = 0; i < n; ++i) {
    f[i] = u[n + i];
    for (int j = 0; j < n; ++j) f[n + i] += Hi(i, j) * rhs[j];
  }
  return f;
}

// dx/ds = y, dy^a/ds = -2 G^a.
inline std::vector<double> spray_rhs(const Expr& L, const std::vector<double>& u, double eps_reg) {
  const int n = L.n();
  Taylor t = taylor(L, u, 2);
  std::vector<int> alpha(2 * n, 0);
  auto part = [&](int p, int q) {
    std::fill(alpha.begin(), alpha.end(), 0);
    ++alpha[p];
    if (q >= 0) ++alpha[q];
    return t.partial(alpha);
  };
  Mat<double> g(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = 0.5 * part(n + i, n + j);
  const double d = det(g);
  check_regular(d, max_abs(g), n, eps_reg, u);
  Mat<double> gi = inverse(g, d);
  std::vector<double> br(n, 0.0);
  for (int i = 0; i < n; ++i) {
    br[i] = -part(i, -1);
    for (int k = 0; k < n; ++k) br[i] += part(n + i, k) * u[n + k];
  }
  std::vector<double> f(2 * n, 0.0);
  for (int a = 0; a < n; ++a) {
    f[a] = u[n + a];
    double G = 0.0;
    for (int i = 0; i < n; ++i) G += 0.25 * gi(a, i) * br[i];
    f[n + a] = -2.0 * G;
  }
  return f;
}

template <class Rhs>
Trajectory rk4(const Rhs& rhs, const std::vector<double>& u0, double T, int steps) {
  if (steps < 1) throw Error("trajectory: steps must be >= 1");
  const double h = T / steps;
  Trajectory tr;
  std::vector<double> u = u0;
  tr.s.push_back(0.0);
  tr.u.push_back(u);
  const std::size_t m = u.size();
  std::vector<double> tmp(m);
  for (int k = 0; k < steps; ++k) {
    const double s = k * h;
    try {
      auto k1 = rhs(u);
      for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
      auto k2 = rhs(tmp);
      for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
      auto k3 = rhs(tmp);
      for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + h * k3[i];
      auto k4 = rhs(tmp);
      for (std::size_t i = 0; i < m; ++i) u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    } catch (const RegularityError& e) {
      throw RegularityError(std::string(e.what()) + " (trajectory parameter s = " + fmt_num(s) + ")");
    }
    tr.s.push_back((k + 1) * h);
    tr.u.push_back(u);
  }
  return tr;
}

}  // namespace geometry_detail

inline Trajectory el_trajectory(const Expr& L, const PhasePoint& u0, double T, int steps,
                                double eps_reg = kDefaultEpsReg) {
  return geometry_detail::rk4([&](const std::vector<double>& u) { return geometry_detail::el_rhs(L, u, eps_reg); },
                              u0.u(), T, steps);
}

inline Trajectory spray_trajectory(const Expr& L, const PhasePoint& u0, double T, int steps,
                                   double eps_reg = kDefaultEpsReg) {
  return geometry_detail::rk4(
      [&](const std::vector<double>& u) { return geometry_detail::spray_rhs(L, u, eps_reg); }, u0.u(), T, steps);
}

}  // namespace ffr
