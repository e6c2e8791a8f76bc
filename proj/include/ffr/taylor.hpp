#pragma once

// Truncated multivariate Taylor polynomials.
//
// A Taylor value of order K in d variables stores the coefficients
// c_alpha = (d^alpha f)(u0) / alpha! for every multi-index |alpha| <= K.
// Monomials are kept in graded order so truncation to a lower order is a
// prefix of the coefficient vector.  Arithmetic between values of different
// orders yields the smaller order; differentiation lowers the order by one.

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "ffr/error.hpp"

namespace ffr {

inline constexpr int kMaxJetOrder = 5;

class TaylorLayout {
 public:
  struct Term {
    int r, a, b;
  };

  static const TaylorLayout& get(int nvars, int max_order) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::unique_ptr<TaylorLayout>> registry;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = registry[{nvars, max_order}];
    if (!slot) slot.reset(new TaylorLayout(nvars, max_order));
    return *slot;
  }

  int nvars() const { return d_; }
  int max_order() const { return K_; }
  int size(int order) const { return prefix_[order]; }
  int exponent(int m, int v) const { return exps_[static_cast<std::size_t>(m) * d_ + v]; }
  int degree(int m) const { return degree_[m]; }
  double factorial_weight(int m) const { return fact_[m]; }

  int index(const std::vector<int>& alpha) const {
    auto it = lookup_.find(alpha);
    return it == lookup_.end() ? -1 : it->second;
  }
  // Index of m + e_v, or -1 when the degree would exceed the layout order.
  int shift(int m, int v) const { return shift_[static_cast<std::size_t>(v) * size(K_) + m]; }

  const std::vector<Term>& terms() const { return terms_; }
  int terms_end(int order) const { return terms_end_[order]; }

 private:
  TaylorLayout(int d, int K) : d_(d), K_(K) {
    std::vector<int> alpha(d, 0);
    prefix_.assign(K + 1, 0);
    for (int k = 0; k <= K; ++k) {
      emit(alpha, 0, k);
      prefix_[k] = static_cast<int>(degree_.size());
    }
    const int total = size(K);
    shift_.assign(static_cast<std::size_t>(d) * total, -1);
    for (int m = 0; m < total; ++m) {
      std::vector<int> a(exps_.begin() + static_cast<std::ptrdiff_t>(m) * d,
                         exps_.begin() + static_cast<std::ptrdiff_t>(m + 1) * d);
      for (int v = 0; v < d; ++v) {
        ++a[v];
        shift_[static_cast<std::size_t>(v) * total + m] = index(a);
        --a[v];
      }
    }
    terms_end_.assign(K + 1, 0);
    for (int r = 0; r < total; ++r) {
      std::vector<int> ar(exps_.begin() + static_cast<std::ptrdiff_t>(r) * d,
                          exps_.begin() + static_cast<std::ptrdiff_t>(r + 1) * d);
      for (int a = 0; a < total && degree_[a] <= degree_[r]; ++a) {
        std::vector<int> rest(d);
        bool ok = true;
        for (int v = 0; v < d && ok; ++v) {
          rest[v] = ar[v] - exponent(a, v);
          ok = rest[v] >= 0;
        }
        if (ok) terms_.push_back({r, a, index(rest)});
      }
      for (int k = degree_[r]; k <= K; ++k) terms_end_[k] = static_cast<int>(terms_.size());
    }
  }

  void emit(std::vector<int>& alpha, int v, int remaining) {
    if (v == d_ - 1) {
      alpha[v] = remaining;
      int deg = 0;
      double f = 1.0;
      for (int a : alpha) {
        deg += a;
        for (int t = 2; t <= a; ++t) f *= t;
      }
      lookup_[alpha] = static_cast<int>(degree_.size());
      exps_.insert(exps_.end(), alpha.begin(), alpha.end());
      degree_.push_back(deg);
      fact_.push_back(f);
      alpha[v] = 0;
      return;
    }
    for (int a = remaining; a >= 0; --a) {
      alpha[v] = a;
      emit(alpha, v + 1, remaining - a);
    }
    alpha[v] = 0;
  }

  int d_, K_;
  std::vector<int> prefix_;
  std::vector<int> exps_;
  std::vector<int> degree_;
  std::vector<double> fact_;
  std::map<std::vector<int>, int> lookup_;
  std::vector<int> shift_;
  std::vector<Term> terms_;
  std::vector<int> terms_end_;
};

class Taylor {
 public:
  Taylor() = default;
  Taylor(const TaylorLayout& layout, int order)
      : L_(&layout), order_(order), c_(static_cast<std::size_t>(layout.size(order)), 0.0) {}

  static Taylor constant(const TaylorLayout& layout, double v) {
    Taylor t(layout, layout.max_order());
    t.c_[0] = v;
    return t;
  }
  static Taylor variable(const TaylorLayout& layout, int var, double x0) {
    Taylor t(layout, layout.max_order());
    t.c_[0] = x0;
    if (layout.max_order() >= 1) t.c_[1 + var] = 1.0;
    return t;
  }

  bool valid() const { return L_ != nullptr; }
  const TaylorLayout& layout() const { return *L_; }
  int order() const { return order_; }
  double value() const { return c_[0]; }
  double coeff(int m) const { return c_[m]; }
  const std::vector<double>& coeffs() const { return c_; }

  // Mixed partial d^alpha f(u0).
  double partial(const std::vector<int>& alpha) const {
    int m = L_->index(alpha);
    if (m < 0 || m >= static_cast<int>(c_.size())) throw Error("partial: multi-index exceeds jet order");
    return c_[m] * L_->factorial_weight(m);
  }

  Taylor derivative(int v) const {
    if (order_ < 1) throw Error("derivative of an order-0 Taylor value");
    Taylor r(*L_, order_ - 1);
    for (int m = 0; m < L_->size(order_ - 1); ++m) {
      int up = L_->shift(m, v);
      r.c_[m] = c_[up] * (L_->exponent(m, v) + 1);
    }
    return r;
  }

  Taylor truncated(int order) const {
    if (order >= order_) return *this;
    Taylor r(*L_, order);
    std::copy(c_.begin(), c_.begin() + L_->size(order), r.c_.begin());
    return r;
  }

  Taylor operator-() const {
    Taylor r = *this;
    for (double& x : r.c_) x = -x;
    return r;
  }
  Taylor& operator+=(const Taylor& o) {
    if (o.order_ < order_) *this = truncated(o.order_);
    for (std::size_t m = 0; m < c_.size(); ++m) c_[m] += o.c_[m];
    return *this;
  }
  Taylor& operator-=(const Taylor& o) {
    if (o.order_ < order_) *this = truncated(o.order_);
    for (std::size_t m = 0; m < c_.size(); ++m) c_[m] -= o.c_[m];
    return *this;
  }
  Taylor& operator*=(double s) {
    for (double& x : c_) x *= s;
    return *this;
  }
  Taylor& operator+=(double s) {
    c_[0] += s;
    return *this;
  }

  friend Taylor operator+(Taylor a, const Taylor& b) { return a += b; }
  friend Taylor operator-(Taylor a, const Taylor& b) { return a -= b; }
  friend Taylor operator*(Taylor a, double s) { return a *= s; }
  friend Taylor operator*(double s, Taylor a) { return a *= s; }
  friend Taylor operator+(Taylor a, double s) { return a += s; }
  friend Taylor operator+(double s, Taylor a) { return a += s; }
  friend Taylor operator-(Taylor a, double s) { return a += -s; }
  friend Taylor operator-(double s, const Taylor& a) { return (-a) += s; }

  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    const int k = a.order_ < b.order_ ? a.order_ : b.order_;
    Taylor r(*a.L_, k);
    const auto& terms = a.L_->terms();
    const int end = a.L_->terms_end(k);
    const double* ca = a.c_.data();
    const double* cb = b.c_.data();
    double* cr = r.c_.data();
    for (int t = 0; t < end; ++t) cr[terms[t].r] += ca[terms[t].a] * cb[terms[t].b];
    return r;
  }

  // f(a) from the Taylor coefficients f^(k)(a0)/k!, k = 0..order.
  static Taylor compose(const Taylor& a, const std::vector<double>& series) {
    Taylor h = a;
    h.c_[0] = 0.0;
    Taylor r = constant(*a.L_, series[a.order_]).truncated(a.order_);
    for (int k = a.order_ - 1; k >= 0; --k) {
      r = r * h;
      r.c_[0] += series[k];
    }
    return r;
  }

 private:
  const TaylorLayout* L_ = nullptr;
  int order_ = 0;
  std::vector<double> c_;
};

namespace taylor_detail {

inline std::vector<double> cyclic(int order, const double (&cycle)[4]) {
  std::vector<double> s(order + 1);
  double f = 1.0;
  for (int k = 0; k <= order; ++k) {
    if (k > 0) f *= k;
    s[k] = cycle[k % 4] / f;
  }
  return s;
}

}  // namespace taylor_detail

inline Taylor recip(const Taylor& a) {
  const double a0 = a.value();
  if (a0 == 0.0) throw DomainError("division by zero");
  std::vector<double> s(a.order() + 1);
  double p = 1.0 / a0;
  for (int k = 0; k <= a.order(); ++k) {
    s[k] = (k % 2 ? -p : p);
    p /= a0;
  }
  return Taylor::compose(a, s);
}

inline Taylor operator/(const Taylor& a, const Taylor& b) { return a * recip(b); }
inline Taylor operator/(const Taylor& a, double s) { return a * (1.0 / s); }
inline Taylor operator/(double s, const Taylor& b) { return s * recip(b); }

inline Taylor exp(const Taylor& a) {
  std::vector<double> s(a.order() + 1);
  double e = std::exp(a.value()), f = 1.0;
  for (int k = 0; k <= a.order(); ++k) {
    if (k > 0) f *= k;
    s[k] = e / f;
  }
  return Taylor::compose(a, s);
}

inline Taylor log(const Taylor& a) {
  const double a0 = a.value();
  if (!(a0 > 0.0)) throw DomainError("log of a non-positive value");
  std::vector<double> s(a.order() + 1);
  s[0] = std::log(a0);
  double p = 1.0;
  for (int k = 1; k <= a.order(); ++k) {
    p /= a0;
    s[k] = (k % 2 ? p : -p) / k;
  }
  return Taylor::compose(a, s);
}

inline Taylor sin(const Taylor& a) {
  const double sv = std::sin(a.value()), cv = std::cos(a.value());
  return Taylor::compose(a, taylor_detail::cyclic(a.order(), {sv, cv, -sv, -cv}));
}
inline Taylor cos(const Taylor& a) {
  const double sv = std::sin(a.value()), cv = std::cos(a.value());
  return Taylor::compose(a, taylor_detail::cyclic(a.order(), {cv, -sv, -cv, sv}));
}
inline Taylor sinh(const Taylor& a) {
  const double sv = std::sinh(a.value()), cv = std::cosh(a.value());
  return Taylor::compose(a, taylor_detail::cyclic(a.order(), {sv, cv, sv, cv}));
}
inline Taylor cosh(const Taylor& a) {
  const double sv = std::sinh(a.value()), cv = std::cosh(a.value());
  return Taylor::compose(a, taylor_detail::cyclic(a.order(), {cv, sv, cv, sv}));
}
inline Taylor tan(const Taylor& a) {
  if (std::cos(a.value()) == 0.0) throw DomainError("tan at a pole");
  return sin(a) / cos(a);
}
inline Taylor tanh(const Taylor& a) { return sinh(a) / cosh(a); }

inline Taylor pow(const Taylor& a, double p) {
  if (p == std::floor(p) && std::fabs(p) <= 64.0) {
    long e = static_cast<long>(std::fabs(p));
    Taylor r = Taylor::constant(a.layout(), 1.0).truncated(a.order());
    Taylor base = a;
    while (e > 0) {
      if (e & 1) r = r * base;
      e >>= 1;
      if (e > 0) base = base * base;
    }
    return p < 0 ? recip(r) : r;
  }
  const double a0 = a.value();
  if (a0 < 0.0) throw DomainError("non-integer power of a negative value");
  if (a0 == 0.0) {
    if (a.order() > 0 || p < 0) throw DomainError("non-integer power at zero is not differentiable");
    return Taylor::constant(a.layout(), 0.0).truncated(0);
  }
  std::vector<double> s(a.order() + 1);
  double binom = 1.0, ap = std::pow(a0, p);
  for (int k = 0; k <= a.order(); ++k) {
    s[k] = binom * ap;
    binom *= (p - k) / (k + 1);
    ap /= a0;
  }
  return Taylor::compose(a, s);
}

inline Taylor sqrt(const Taylor& a) {
  if (a.value() < 0.0) throw DomainError("sqrt of a negative value");
  return pow(a, 0.5);
}

}  // namespace ffr
