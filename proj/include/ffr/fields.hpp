#pragma once

// Periodic tensor-product grids over phase space, node-valued scalar fields,
// fourth-order finite differences and Riemann-sum quadrature.
//
// Axes 0..n-1 are x^1..x^n, axes n..2n-1 are y^1..y^n.  Node (i_0, ..., i_{2n-1})
// sits at center - period/2 + i*h on each axis and is stored row-major with
// the last axis fastest.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "ffr/dgeom.hpp"
#include "ffr/error.hpp"
#include "ffr/format.hpp"
#include "ffr/geometry.hpp"

namespace ffr {

inline int& thread_count() {
  static int t = 1;
  return t;
}

// Runs body(begin, end) over [0, count) in contiguous chunks.  Each index is
// handled by exactly one chunk, so results do not depend on the thread count.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body) {
  const int t = std::max(1, thread_count());
  if (t == 1 || count < 4096) {
    body(0, count);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + t - 1) / t;
  for (int k = 0; k < t; ++k) {
    const std::size_t b = k * chunk, e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back(body, b, e);
  }
  for (auto& th : pool) th.join();
}

struct GridDomain {
  int n = 0;
  std::vector<double> center, period;
  std::vector<int> res;

  static GridDomain uniform(int n, double period, int res) {
    GridDomain d;
    d.n = n;
    d.center.assign(2 * n, 0.0);
    d.period.assign(2 * n, period);
    d.res.assign(2 * n, res);
    d.validate();
    return d;
  }

  void validate() const {
    if (n < 2) throw ConfigError("grid: base dimension must be at least 2");
    const std::size_t m = 2 * static_cast<std::size_t>(n);
    if (center.size() != m || period.size() != m || res.size() != m)
      throw ConfigError("grid: expected " + std::to_string(m) + " axes");
    for (std::size_t a = 0; a < m; ++a) {
      if (res[a] < 8) throw ConfigError("grid: resolution must be at least 8 on axis " + std::to_string(a));
      if (!(period[a] > 0) || !std::isfinite(period[a]))
        throw ConfigError("grid: period must be positive on axis " + std::to_string(a));
      if (!std::isfinite(center[a])) throw ConfigError("grid: non-finite center on axis " + std::to_string(a));
    }
  }

  int axes() const { return 2 * n; }
  double h(int axis) const { return period[axis] / res[axis]; }
  double coord(int axis, int i) const { return center[axis] - 0.5 * period[axis] + i * h(axis); }

  std::size_t size() const {
    std::size_t s = 1;
    for (int r : res) s *= static_cast<std::size_t>(r);
    return s;
  }
  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = axes() - 1; a > axis; --a) s *= static_cast<std::size_t>(res[a]);
    return s;
  }
  std::vector<int> multi(std::size_t node) const {
    std::vector<int> idx(axes());
    for (int a = axes() - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(node % res[a]);
      node /= res[a];
    }
    return idx;
  }
  std::size_t flat(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < axes(); ++a) f = f * res[a] + static_cast<std::size_t>(idx[a]);
    return f;
  }
  std::vector<double> point(std::size_t node) const {
    auto idx = multi(node);
    std::vector<double> u(axes());
    for (int a = 0; a < axes(); ++a) u[a] = coord(a, idx[a]);
    return u;
  }
  double cell_volume() const {
    double v = 1;
    for (int a = 0; a < axes(); ++a) v *= h(a);
    return v;
  }
  bool operator==(const GridDomain& o) const {
    return n == o.n && center == o.center && period == o.period && res == o.res;
  }
};

using DomainPtr = std::shared_ptr<const GridDomain>;

class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(DomainPtr d, double c) : dom_(std::move(d)), v_(dom_->size(), c) {}
  ScalarField(DomainPtr d, std::vector<double> v) : dom_(std::move(d)), v_(std::move(v)) {
    if (v_.size() != dom_->size()) throw Error("field storage does not match the grid");
  }

  const DomainPtr& domain() const { return dom_; }
  std::size_t size() const { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  double max_abs() const {
    double m = 0;
    for (double x : v_) m = std::max(m, std::fabs(x));
    return m;
  }
  double min() const { return *std::min_element(v_.begin(), v_.end()); }
  double max() const { return *std::max_element(v_.begin(), v_.end()); }
  bool finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
  }

  template <class F>
  ScalarField map(F f) const {
    ScalarField r = *this;
    for (double& x : r.v_) x = f(x);
    return r;
  }

  ScalarField& operator+=(const ScalarField& o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  ScalarField& operator*=(const ScalarField& o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] *= o.v_[i];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& x : v_) x *= s;
    return *this;
  }
  ScalarField& operator+=(double s) {
    for (double& x : v_) x += s;
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
  friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
  friend ScalarField operator+(ScalarField a, double s) { return a += s; }
  friend ScalarField operator+(double s, ScalarField a) { return a += s; }
  friend ScalarField operator-(ScalarField a, double s) { return a += -s; }
  friend ScalarField operator-(double s, ScalarField a) { return (a *= -1.0) += s; }
  friend ScalarField operator-(ScalarField a) { return a *= -1.0; }
  friend ScalarField operator/(const ScalarField& a, const ScalarField& b);

 private:
  DomainPtr dom_;
  std::vector<double> v_;
};

inline ScalarField zero_like(const ScalarField& f) { return ScalarField(f.domain(), 0.0); }
inline void axpy(ScalarField& acc, double s, const ScalarField& a) {
  auto& v = acc.values();
  const auto& w = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * w[i];
}
inline void add_prod(ScalarField& acc, double s, const ScalarField& a, const ScalarField& b) {
  auto& v = acc.values();
  const auto& p = a.values();
  const auto& q = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * p[i] * q[i];
}
inline ScalarField recip(const ScalarField& f) {
  ScalarField r = f;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] == 0.0) throw DomainError("division by zero at node " + describe(f.domain()->point(i)));
    r[i] = 1.0 / r[i];
  }
  return r;
}
inline ScalarField operator/(const ScalarField& a, const ScalarField& b) { return a * recip(b); }
inline double value_of(const ScalarField& f) { return f.max_abs(); }
inline double max_abs(const ScalarField& f) { return f.max_abs(); }

// Fourth-order central difference along one axis with periodic wrap.
inline ScalarField fd_derivative(const ScalarField& f, int axis, int order = 1) {
  const GridDomain& d = *f.domain();
  if (axis < 0 || axis >= d.axes()) throw Error("fd_derivative: axis out of range");
  if (order != 1 && order != 2) throw Error("fd_derivative: order must be 1 or 2");
  const std::size_t s = d.stride(axis);
  const std::size_t r = static_cast<std::size_t>(d.res[axis]);
  const std::size_t block = s * r;
  const double h = d.h(axis);
  ScalarField out(f.domain(), 0.0);
  const double* in = f.values().data();
  double* o = out.values().data();
  parallel_for(d.size() / block, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t base = b * block;
      for (std::size_t i = 0; i < r; ++i) {
        const std::size_t im2 = (i + r - 2) % r, im1 = (i + r - 1) % r;
        const std::size_t ip1 = (i + 1) % r, ip2 = (i + 2) % r;
        for (std::size_t j = 0; j < s; ++j) {
          const double fm2 = in[base + im2 * s + j], fm1 = in[base + im1 * s + j];
          const double fp1 = in[base + ip1 * s + j], fp2 = in[base + ip2 * s + j];
          if (order == 1) {
            o[base + i * s + j] = (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h);
          } else {
            const double f0 = in[base + i * s + j];
            o[base + i * s + j] = (16 * (fp1 + fm1) - (fp2 + fm2) - 30 * f0) / (12 * h * h);
          }
        }
      }
    }
  });
  return out;
}

struct GridCalc {
  int n;
  ScalarField dx(const ScalarField& f, int k) const { return fd_derivative(f, k, 1); }
  ScalarField dy(const ScalarField& f, int a) const { return fd_derivative(f, n + a, 1); }
};

using GridGeometry = DGeometry<ScalarField, GridCalc>;
using DMetricField = DMetricT<ScalarField>;

// Pointwise evaluation; a failure at any node names its coordinates.
inline ScalarField sample(const DomainPtr& dom, const std::function<double(const std::vector<double>&)>& f) {
  ScalarField out(dom, 0.0);
  for (std::size_t i = 0; i < dom->size(); ++i) {
    const auto u = dom->point(i);
    try {
      out[i] = f(u);
    } catch (const Error& e) {
      throw DomainError(std::string(e.what()) + " at node " + describe(u));
    }
    if (!std::isfinite(out[i])) throw DomainError("non-finite value at node " + describe(u));
  }
  return out;
}

inline ScalarField sample(const DomainPtr& dom, const Expr& e) {
  return sample(dom, [&](const std::vector<double>& u) { return evaluate(e, u); });
}

// The canonical d-metric (Hessian blocks and N) of L sampled at every node.
inline DMetricField sample_dmetric(const DomainPtr& dom, const Expr& L, double eps_reg = kDefaultEpsReg) {
  const int n = dom->n;
  const ScalarField z(dom, 0.0);
  DMetricField dm{n, Mat<ScalarField>(n, n, z), Mat<ScalarField>(n, n, z), Mat<ScalarField>(n, n, z)};
  for (std::size_t node = 0; node < dom->size(); ++node) {
    const auto u = dom->point(node);
    LagrangeJet J;
    try {
      J = lagrange_jet(L, u, 3, eps_reg);
    } catch (const RegularityError&) {
      throw;
    } catch (const Error& e) {
      throw DomainError(std::string(e.what()) + " at node " + describe(u));
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        dm.gh(i, j)[node] = J.g(i, j).value();
        dm.gv(i, j)[node] = J.g(i, j).value();
        dm.N(i, j)[node] = J.N(i, j).value();
      }
  }
  return dm;
}

// A d-metric given directly by component expressions in x and y: row-major
// n x n source lists for g_ij, g_ab and N(a, i) = N^a_i.  Blocks are
// symmetrized from the upper triangle.
inline DMetricField sample_blocks(const DomainPtr& dom, const std::vector<std::string>& gh,
                                  const std::vector<std::string>& gv, const std::vector<std::string>& N) {
  const int n = dom->n;
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  if (gh.size() != nn || gv.size() != nn || N.size() != nn)
    throw ConfigError("state blocks need " + std::to_string(nn) + " components each");
  const ScalarField z(dom, 0.0);
  DMetricField dm{n, Mat<ScalarField>(n, n, z), Mat<ScalarField>(n, n, z), Mat<ScalarField>(n, n, z)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      if (j >= i) {
        dm.gh(i, j) = dm.gh(j, i) = sample(dom, parse(gh[k], n));
        dm.gv(i, j) = dm.gv(j, i) = sample(dom, parse(gv[k], n));
      }
      dm.N(i, j) = sample(dom, parse(N[k], n));
    }
  return dm;
}

// Smallest |det g_h| and |det g_v| over the nodes, checked against eps_reg.
inline double check_regular_field(const DMetricField& dm, double eps_reg) {
  const ScalarField dh = det(dm.gh), dv = det(dm.gv);
  double worst = INFINITY;
  const auto& dom = dh.domain();
  for (std::size_t i = 0; i < dh.size(); ++i) {
    double mh = 0, mv = 0;
    for (int a = 0; a < dm.n; ++a)
      for (int b = 0; b < dm.n; ++b) {
        mh = std::max(mh, std::fabs(dm.gh(a, b)[i]));
        mv = std::max(mv, std::fabs(dm.gv(a, b)[i]));
      }
    const auto u = dom->point(i);
    check_regular(dh[i], mh, dm.n, eps_reg, u, "h-metric");
    check_regular(dv[i], mv, dm.n, eps_reg, u, "v-metric");
    worst = std::min({worst, std::fabs(dh[i]), std::fabs(dv[i])});
  }
  return worst;
}

inline ScalarField volume_element(const DMetricField& dm) {
  const ScalarField dh = det(dm.gh), dv = det(dm.gv);
  ScalarField r = dh;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double p = std::fabs(dh[i]) * std::fabs(dv[i]);
    if (!(p > 0)) throw RegularityError("degenerate volume element at node " + describe(dh.domain()->point(i)));
    r[i] = std::sqrt(p);
  }
  return r;
}

// Periodic trapezoid rule, identical to a Riemann sum on the torus.
inline double integrate(const ScalarField& f, const ScalarField& w) {
  long double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += static_cast<long double>(f[i]) * w[i];
  return static_cast<double>(s * f.domain()->cell_volume());
}
inline double integrate(const ScalarField& f) {
  long double s = 0;
  for (double x : f.values()) s += x;
  return static_cast<double>(s * f.domain()->cell_volume());
}

inline GridGeometry grid_geometry(const DMetricField& dm) { return GridGeometry(dm, GridCalc{dm.n}); }

inline std::string axis_name(int n, int axis) {
  return (axis < n ? "x" : "y") + std::to_string((axis % n) + 1);
}

// CSV dump: one row per (node, component), nodes row-major.
inline void write_field_csv(std::ostream& os, const std::vector<std::pair<std::string, const ScalarField*>>& comps) {
  if (comps.empty()) return;
  const GridDomain& d = *comps.front().second->domain();
  for (int a = 0; a < d.axes(); ++a) os << axis_name(d.n, a) << ',';
  os << "component,value\n";
  for (std::size_t node = 0; node < d.size(); ++node) {
    const auto u = d.point(node);
    for (const auto& [id, f] : comps) {
      for (double x : u) os << fmt_num(x) << ',';
      os << id << ',' << fmt_num((*f)[node]) << '\n';
    }
  }
}

inline std::vector<std::pair<std::string, const ScalarField*>> mat_components(const std::string& name,
                                                                             const Mat<ScalarField>& m) {
  std::vector<std::pair<std::string, const ScalarField*>> out;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      out.emplace_back(name + "_" + std::to_string(i + 1) + std::to_string(j + 1), &m(i, j));
  return out;
}

}  // namespace ffr
