#pragma once

// Small dense containers generic over the scalar type, plus the scalar
// hooks (zero_like, axpy, add_prod, recip, value_of) the geometry templates
// rely on.  Index storage order is [upper][lower1][lower2]...

#include <cmath>
#include <vector>

#include "ffr/error.hpp"
#include "ffr/taylor.hpp"

namespace ffr {

inline double zero_like(double) { return 0.0; }
inline void axpy(double& acc, double s, double a) { acc += s * a; }
inline void add_prod(double& acc, double s, double a, double b) { acc += s * a * b; }
inline double recip(double x) {
  if (x == 0.0) throw DomainError("division by zero");
  return 1.0 / x;
}
inline double value_of(double x) { return x; }

// A zero at the layout's full order, so accumulating into it keeps the
// order of the summands.
inline Taylor zero_like(const Taylor& t) { return Taylor::constant(t.layout(), 0.0); }
inline void axpy(Taylor& acc, double s, const Taylor& a) {
  if (!acc.valid()) {
    acc = a * s;
    return;
  }
  acc += a * s;
}
inline void add_prod(Taylor& acc, double s, const Taylor& a, const Taylor& b) {
  Taylor p = a * b;
  if (s != 1.0) p *= s;
  if (!acc.valid()) {
    acc = std::move(p);
    return;
  }
  acc += p;
}
inline double value_of(const Taylor& t) { return t.value(); }

template <class S>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<S> v;
  Mat() = default;
  Mat(int r, int c, const S& z) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, z) {}
  S& operator()(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  const S& operator()(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
};

template <class S>
struct Ten3 {
  int n = 0;
  std::vector<S> v;
  Ten3() = default;
  Ten3(int dim, const S& z) : n(dim), v(static_cast<std::size_t>(dim) * dim * dim, z) {}
  S& operator()(int a, int b, int c) { return v[(static_cast<std::size_t>(a) * n + b) * n + c]; }
  const S& operator()(int a, int b, int c) const { return v[(static_cast<std::size_t>(a) * n + b) * n + c]; }
};

template <class S>
struct Ten4 {
  int n = 0;
  std::vector<S> v;
  Ten4() = default;
  Ten4(int dim, const S& z) : n(dim), v(static_cast<std::size_t>(dim) * dim * dim * dim, z) {}
  S& operator()(int a, int b, int c, int d) {
    return v[((static_cast<std::size_t>(a) * n + b) * n + c) * n + d];
  }
  const S& operator()(int a, int b, int c, int d) const {
    return v[((static_cast<std::size_t>(a) * n + b) * n + c) * n + d];
  }
};

template <class S>
Mat<S> minor_of(const Mat<S>& m, int row, int col) {
  Mat<S> r(m.rows - 1, m.cols - 1, zero_like(m(0, 0)));
  for (int i = 0, ri = 0; i < m.rows; ++i) {
    if (i == row) continue;
    for (int j = 0, rj = 0; j < m.cols; ++j) {
      if (j == col) continue;
      r(ri, rj++) = m(i, j);
    }
    ++ri;
  }
  return r;
}

// Determinant by cofactor expansion; no pivoting, so it is valid for any
// scalar type (the dimensions involved are small).
template <class S>
S det(const Mat<S>& m) {
  const int n = m.rows;
  if (n == 1) return m(0, 0);
  if (n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  S acc = zero_like(m(0, 0));
  for (int j = 0; j < n; ++j) add_prod(acc, j % 2 ? -1.0 : 1.0, m(0, j), det(minor_of(m, 0, j)));
  return acc;
}

template <class S>
Mat<S> inverse(const Mat<S>& m, const S& d) {
  const int n = m.rows;
  const S inv_d = recip(d);
  Mat<S> r(n, n, zero_like(m(0, 0)));
  if (n == 1) {
    r(0, 0) = inv_d;
    return r;
  }
  if (n == 2) {
    r(0, 0) = m(1, 1) * inv_d;
    r(1, 1) = m(0, 0) * inv_d;
    r(0, 1) = -(m(0, 1) * inv_d);
    r(1, 0) = -(m(1, 0) * inv_d);
    return r;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      S c = det(minor_of(m, j, i)) * inv_d;
      r(i, j) = (i + j) % 2 ? -c : c;
    }
  return r;
}

}  // namespace ffr
