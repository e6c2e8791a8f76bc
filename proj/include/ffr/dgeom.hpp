#pragma once

// Canonical d-connection, torsion, distortion, curvature and Ricci blocks of
// a d-metric (g_ij, g_ab, N^a_i), and the Levi-Civita connection of the
// associated coordinate metric.
//
// Everything here is generic over a scalar type S and a calculus policy
// providing coordinate derivatives:
//
//   calc.dx(f, k)   d f / d x^k
//   calc.dy(f, a)   d f / d y^a
//
// The analytic backend uses S = Taylor (exact jets); the grid backend uses
// S = ScalarField with finite-difference stencils.

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "ffr/tensor.hpp"

namespace ffr {

template <class S>
struct DMetricT {
  int n = 0;
  Mat<S> gh;  // g_ij
  Mat<S> gv;  // g_ab
  Mat<S> N;   // N(a, i) = N^a_i
};

template <class S>
struct DConnectionT {
  Ten3<S> Lh;  // L^i_jk
  Ten3<S> Lv;  // L^a_bk
  Ten3<S> Ch;  // C^i_jc
  Ten3<S> Cv;  // C^a_bc
};

template <class S>
struct AnholonomyT {
  Ten3<S> W;      // W(a, i, b) = d N^a_i / d y^b
  Ten3<S> Omega;  // Omega(a, j, i) = e_i N^a_j - e_j N^a_i
};

template <class S>
struct TorsionT {
  Ten3<S> hhh;  // T^i_jk
  Ten3<S> hhv;  // T^i_ja
  Ten3<S> vhh;  // T^a_ji
  Ten3<S> vvh;  // T^a_bi
  Ten3<S> vvv;  // T^a_bc
};

// The eight distortion blocks; the first index is upper, the rest follow
// the naming (vector index, then direction index).
template <class S>
struct DistortionT {
  Ten3<S> i_jk;  // Z^i_jk
  Ten3<S> a_jk;  // Z^a_jk
  Ten3<S> i_bk;  // Z^i_bk
  Ten3<S> a_bk;  // Z^a_bk
  Ten3<S> i_kb;  // Z^i_kb
  Ten3<S> a_jb;  // Z^a_jb
  Ten3<S> i_ab;  // Z^i_ab
  Ten3<S> a_bc;  // Z^a_bc
};

enum class DistortionForm {
  consistent,  // blocks satisfying LC = D + Z exactly
  printed      // the blocks as usually printed, for comparison only
};

template <class S>
struct CurvatureT {
  Ten4<S> hhhh;  // R^i_hjk
  Ten4<S> vvhh;  // R^a_bjk
  Ten4<S> hhhv;  // R^i_jka
  Ten4<S> vvhv;  // R^c_bka
  Ten4<S> hhvv;  // R^i_jbc
  Ten4<S> vvvv;  // R^a_bcd
};

template <class S>
struct RicciT {
  Mat<S> hh;  // R_ij
  Mat<S> hv;  // R_ia
  Mat<S> vh;  // R_ai
  Mat<S> vv;  // R_ab
  S R, Sv, sR;
};

template <class S>
struct EinsteinT {
  Mat<S> hh, hv, vh, vv;
};

template <class S, class Calc>
class DGeometry {
 public:
  DGeometry(DMetricT<S> dm, const Calc& calc) : dm_(std::move(dm)), calc_(calc), n_(dm_.n) {
    z_ = zero_like(dm_.gh(0, 0));
    gh_det_ = det(dm_.gh);
    gv_det_ = det(dm_.gv);
    ghi_ = inverse(dm_.gh, gh_det_);
    gvi_ = inverse(dm_.gv, gv_det_);
  }

  int n() const { return n_; }
  const DMetricT<S>& metric() const { return dm_; }
  const Mat<S>& ghi() const { return ghi_; }
  const Mat<S>& gvi() const { return gvi_; }
  const S& gh_det() const { return gh_det_; }
  const S& gv_det() const { return gv_det_; }
  const Calc& calc() const { return calc_; }
  const S& zero() const { return z_; }

  // Elongated derivatives of f: out_h[k] = e_k f, out_v[b] = e_b f.
  void grad(const S& f, std::vector<S>& out_h, std::vector<S>& out_v) const {
    out_v.clear();
    out_h.clear();
    for (int c = 0; c < n_; ++c) out_v.push_back(calc_.dy(f, c));
    for (int k = 0; k < n_; ++k) {
      S d = calc_.dx(f, k);
      for (int c = 0; c < n_; ++c) add_prod(d, -1.0, dm_.N(c, k), out_v[c]);
      out_h.push_back(std::move(d));
    }
  }
  S eh(const S& f, int k) const {
    S d = calc_.dx(f, k);
    for (int c = 0; c < n_; ++c) add_prod(d, -1.0, dm_.N(c, k), calc_.dy(f, c));
    return d;
  }
  S ev(const S& f, int b) const { return calc_.dy(f, b); }

  // First derivatives of the d-metric and N in the adapted frame.
  struct FrameDerivs {
    std::vector<Mat<S>> hgh, vgh;  // [k](i,j) = e_k g_ij ; [c](i,j) = e_c g_ij
    std::vector<Mat<S>> hgv, vgv;  // same for g_ab
    std::vector<Mat<S>> hN, vN;    // [k](a,j) = e_k N^a_j ; [b](a,k) = d_b N^a_k
  };

  const FrameDerivs& derivs() {
    if (!fd_) {
      FrameDerivs fd;
      auto sym = [&](const Mat<S>& g, std::vector<Mat<S>>& h, std::vector<Mat<S>>& v) {
        h.assign(n_, Mat<S>(n_, n_, z_));
        v.assign(n_, Mat<S>(n_, n_, z_));
        std::vector<S> dh, dv;
        for (int i = 0; i < n_; ++i)
          for (int j = i; j < n_; ++j) {
            grad(g(i, j), dh, dv);
            for (int k = 0; k < n_; ++k) {
              h[k](i, j) = dh[k];
              h[k](j, i) = dh[k];
              v[k](i, j) = dv[k];
              v[k](j, i) = dv[k];
            }
          }
      };
      sym(dm_.gh, fd.hgh, fd.vgh);
      sym(dm_.gv, fd.hgv, fd.vgv);
      fd.hN.assign(n_, Mat<S>(n_, n_, z_));
      fd.vN.assign(n_, Mat<S>(n_, n_, z_));
      std::vector<S> dh, dv;
      for (int a = 0; a < n_; ++a)
        for (int j = 0; j < n_; ++j) {
          grad(dm_.N(a, j), dh, dv);
          for (int k = 0; k < n_; ++k) {
            fd.hN[k](a, j) = std::move(dh[k]);
            fd.vN[k](a, j) = std::move(dv[k]);
          }
        }
      fd_ = std::move(fd);
    }
    return *fd_;
  }

  const AnholonomyT<S>& anholonomy() {
    if (!anh_) {
      const auto& fd = derivs();
      AnholonomyT<S> A{Ten3<S>(n_, z_), Ten3<S>(n_, z_)};
      for (int a = 0; a < n_; ++a)
        for (int i = 0; i < n_; ++i)
          for (int b = 0; b < n_; ++b) A.W(a, i, b) = fd.vN[b](a, i);
      for (int a = 0; a < n_; ++a)
        for (int j = 0; j < n_; ++j)
          for (int i = j + 1; i < n_; ++i) {
            S w = fd.hN[i](a, j) - fd.hN[j](a, i);
            A.Omega(a, i, j) = -w;
            A.Omega(a, j, i) = std::move(w);
          }
      anh_ = std::move(A);
    }
    return *anh_;
  }

  const DConnectionT<S>& connection() {
    if (!conn_) {
      const auto& fd = derivs();
      const auto& gv = dm_.gv;
      DConnectionT<S> D{Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_)};
      Ten3<S> low(n_, z_);  // lowered coefficient, contracted with the inverse afterwards
      auto raise = [&](const Mat<S>& inv, Ten3<S>& out) {
        for (int i = 0; i < n_; ++i)
          for (int j = 0; j < n_; ++j)
            for (int k = 0; k < n_; ++k) {
              S acc = z_;
              for (int r = 0; r < n_; ++r) add_prod(acc, 1.0, inv(i, r), low(r, j, k));
              out(i, j, k) = std::move(acc);
            }
      };
      // L^i_jk = 1/2 g^ir (e_k g_jr + e_j g_kr - e_r g_jk)
      for (int r = 0; r < n_; ++r)
        for (int j = 0; j < n_; ++j)
          for (int k = 0; k < n_; ++k) {
            S t = fd.hgh[k](j, r) + fd.hgh[j](k, r) - fd.hgh[r](j, k);
            low(r, j, k) = t * 0.5;
          }
      raise(ghi_, D.Lh);
      // L^a_bk = e_b N^a_k + 1/2 g^ac (e_k g_bc - g_dc e_b N^d_k - g_db e_c N^d_k)
      for (int c = 0; c < n_; ++c)
        for (int b = 0; b < n_; ++b)
          for (int k = 0; k < n_; ++k) {
            S t = fd.hgv[k](b, c);
            for (int d = 0; d < n_; ++d) {
              add_prod(t, -1.0, gv(d, c), fd.vN[b](d, k));
              add_prod(t, -1.0, gv(d, b), fd.vN[c](d, k));
            }
            low(c, b, k) = t * 0.5;
          }
      raise(gvi_, D.Lv);
      for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b)
          for (int k = 0; k < n_; ++k) D.Lv(a, b, k) += fd.vN[b](a, k);
      // C^i_jc = 1/2 g^ik e_c g_jk
      for (int r = 0; r < n_; ++r)
        for (int j = 0; j < n_; ++j)
          for (int c = 0; c < n_; ++c) low(r, j, c) = fd.vgh[c](j, r) * 0.5;
      raise(ghi_, D.Ch);
      // C^a_bc = 1/2 g^ad (e_b g_dc + e_c g_bd - e_d g_bc)
      for (int d = 0; d < n_; ++d)
        for (int b = 0; b < n_; ++b)
          for (int c = 0; c < n_; ++c) {
            S t = fd.vgv[b](d, c) + fd.vgv[c](b, d) - fd.vgv[d](b, c);
            low(d, b, c) = t * 0.5;
          }
      raise(gvi_, D.Cv);
      conn_ = std::move(D);
    }
    return *conn_;
  }

  TorsionT<S> torsion() {
    const auto& D = connection();
    const auto& A = anholonomy();
    TorsionT<S> T{Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_)};
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) {
          T.hhh(i, j, k) = D.Lh(i, j, k) - D.Lh(i, k, j);
          T.hhv(i, j, k) = D.Ch(i, j, k);
          T.vhh(i, j, k) = A.Omega(i, j, k);
          T.vvh(i, j, k) = A.W(i, k, j) - D.Lv(i, j, k);
          T.vvv(i, j, k) = D.Cv(i, j, k) - D.Cv(i, k, j);
        }
    return T;
  }

  // All components of D g: h- and v-covariant derivatives of both blocks.
  std::vector<S> compatibility_residuals() {
    const auto& D = connection();
    const auto& fd = derivs();
    std::vector<S> out;
    auto block = [&](const Mat<S>& g, const std::vector<Mat<S>>& dg, const Ten3<S>& G) {
      for (int k = 0; k < n_; ++k)
        for (int i = 0; i < n_; ++i)
          for (int j = 0; j < n_; ++j) {
            S r = dg[k](i, j);
            for (int m = 0; m < n_; ++m) {
              add_prod(r, -1.0, G(m, i, k), g(m, j));
              add_prod(r, -1.0, G(m, j, k), g(i, m));
            }
            out.push_back(std::move(r));
          }
    };
    block(dm_.gh, fd.hgh, D.Lh);
    block(dm_.gv, fd.hgv, D.Lv);
    block(dm_.gh, fd.vgh, D.Ch);
    block(dm_.gv, fd.vgv, D.Cv);
    return out;
  }

  DistortionT<S> distortion(DistortionForm form = DistortionForm::consistent) {
    const auto& D = connection();
    const auto& A = anholonomy();
    const auto& gh = dm_.gh;
    const auto& gv = dm_.gv;
    DistortionT<S> Z{Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_),
                     Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_), Ten3<S>(n_, z_)};
    // Xi^c_aj = L^c_aj - e_a N^c_j
    Ten3<S> Xi(n_, z_);
    for (int c = 0; c < n_; ++c)
      for (int a = 0; a < n_; ++a)
        for (int j = 0; j < n_; ++j) Xi(c, a, j) = D.Lv(c, a, j) - A.W(c, j, a);
    // q^{ih}_jk C^j_hb with q = 1/2 (delta delta -+ g_jk g^ih)
    auto qC = [&](int i, int k, int b, double sign) {
      S acc = D.Ch(i, k, b) * 0.5;
      for (int h = 0; h < n_; ++h)
        for (int j = 0; j < n_; ++j) {
          S t = gh(j, k) * ghi_(i, h);
          add_prod(acc, 0.5 * sign, t, D.Ch(j, h, b));
        }
      return acc;
    };
    // pm q^{ad}_cb Xi^c_dj = 1/2 (Xi^a_bj +- g_cb g^ad Xi^c_dj)
    auto qXi = [&](int a, int b, int j, double sign) {
      S acc = Xi(a, b, j) * 0.5;
      for (int d = 0; d < n_; ++d)
        for (int c = 0; c < n_; ++c) {
          S t = gv(c, b) * gvi_(a, d);
          add_prod(acc, 0.5 * sign, t, Xi(c, d, j));
        }
      return acc;
    };
    // 1/2 Omega^c_jk g_cb g^ji
    auto Og = [&](int i, int b, int k) {
      S acc = z_;
      for (int j = 0; j < n_; ++j)
        for (int c = 0; c < n_; ++c) {
          S t = gv(c, b) * ghi_(j, i);
          add_prod(acc, 0.5, t, A.Omega(c, j, k));
        }
      return acc;
    };
    const bool printed = form == DistortionForm::printed;
    for (int p = 0; p < n_; ++p)
      for (int q = 0; q < n_; ++q)
        for (int r = 0; r < n_; ++r) {
          // Z^a_jk = -C^i_jb g_ik g^ab - 1/2 Omega^a_jk     (a=p, j=q, k=r)
          {
            S acc = A.Omega(p, q, r) * -0.5;
            for (int i = 0; i < n_; ++i)
              for (int b = 0; b < n_; ++b) {
                S t = gh(i, r) * gvi_(p, b);
                add_prod(acc, -1.0, t, D.Ch(i, q, b));
              }
            Z.a_jk(p, q, r) = std::move(acc);
          }
          // Z^i_bk  (i=p, b=q, k=r)
          Z.i_bk(p, q, r) = printed ? Og(p, q, r) - qC(p, r, q, -1.0) : Og(p, q, r) + qC(p, r, q, 1.0);
          // Z^i_kb = 1/2 Omega^c_jk g_cb g^ji + C^j_hb q^{ih}_jk   (i=p, k=q, b=r)
          Z.i_kb(p, q, r) = Og(p, r, q) + qC(p, q, r, -1.0);
          // Z^a_bk  (a=p, b=q, k=r)
          Z.a_bk(p, q, r) = printed ? qXi(p, q, r, 1.0) : qXi(p, q, r, -1.0);
          // Z^a_jb  (a=p, j=q, b=r)
          Z.a_jb(p, q, r) = printed ? -qXi(p, r, q, 1.0) : qXi(p, r, q, 1.0);
          // Z^i_ab = -g^ij/2 (g_cb Xi^c_aj + g_ca Xi^c_bj)   (i=p, a=q, b=r)
          {
            S acc = z_;
            for (int j = 0; j < n_; ++j) {
              S inner = z_;
              for (int c = 0; c < n_; ++c) {
                add_prod(inner, 1.0, gv(c, r), Xi(c, q, j));
                add_prod(inner, 1.0, gv(c, q), Xi(c, r, j));
              }
              add_prod(acc, -0.5, ghi_(p, j), inner);
            }
            Z.i_ab(p, q, r) = std::move(acc);
          }
        }
    return Z;
  }

  // Directional derivative of a connection coefficient; dir < n is e_k,
  // dir >= n is e_a.  Memoized.
  const S& dconn(int family, int p, int q, int r, int dir) {
    const std::size_t key = ((((static_cast<std::size_t>(family) * n_ + p) * n_ + q) * n_ + r) * 2 * n_) + dir;
    auto it = dmemo_.find(key);
    if (it != dmemo_.end()) return it->second;
    const auto& D = connection();
    const Ten3<S>* t = family == 0 ? &D.Lh : family == 1 ? &D.Lv : family == 2 ? &D.Ch : &D.Cv;
    S v = dir < n_ ? eh((*t)(p, q, r), dir) : ev((*t)(p, q, r), dir - n_);
    return dmemo_.emplace(key, std::move(v)).first->second;
  }
  void clear_memo() { dmemo_.clear(); }

  // Curvature components, as printed formulas.
  S R_hhhh(int i, int h, int j, int k) {
    const auto& D = connection();
    const auto& A = anholonomy();
    S r = dconn(0, i, h, j, k) - dconn(0, i, h, k, j);
    for (int m = 0; m < n_; ++m) {
      add_prod(r, 1.0, D.Lh(m, h, j), D.Lh(i, m, k));
      add_prod(r, -1.0, D.Lh(m, h, k), D.Lh(i, m, j));
    }
    for (int a = 0; a < n_; ++a) add_prod(r, -1.0, D.Ch(i, h, a), A.Omega(a, k, j));
    return r;
  }
  S R_vvhh(int a, int b, int j, int k) {
    const auto& D = connection();
    const auto& A = anholonomy();
    S r = dconn(1, a, b, j, k) - dconn(1, a, b, k, j);
    for (int c = 0; c < n_; ++c) {
      add_prod(r, 1.0, D.Lv(c, b, j), D.Lv(a, c, k));
      add_prod(r, -1.0, D.Lv(c, b, k), D.Lv(a, c, j));
      add_prod(r, -1.0, D.Cv(a, b, c), A.Omega(c, k, j));
    }
    return r;
  }
  // T^b_ka = -T^b_ak = L^b_ak - d_a N^b_k
  S T_hv(int b, int k, int a) {
    const auto& D = connection();
    const auto& A = anholonomy();
    return D.Lv(b, a, k) - A.W(b, k, a);
  }
  // The C T term carries the sign of R(e_k, e_a) = [D_k, D_a] - D_[e_k, e_a];
  // with the opposite sign the block is not skew for a metric connection.
  S R_hhhv(int i, int j, int k, int a) {
    const auto& D = connection();
    // D_k C^i_ja = e_k C^i_ja + L^i_mk C^m_ja - L^m_jk C^i_ma - L^b_ak C^i_jb
    S r = dconn(0, i, j, k, n_ + a) - dconn(2, i, j, a, k);
    for (int m = 0; m < n_; ++m) {
      add_prod(r, -1.0, D.Lh(i, m, k), D.Ch(m, j, a));
      add_prod(r, 1.0, D.Lh(m, j, k), D.Ch(i, m, a));
      add_prod(r, 1.0, D.Lv(m, a, k), D.Ch(i, j, m));
    }
    for (int b = 0; b < n_; ++b) add_prod(r, -1.0, D.Ch(i, j, b), T_hv(b, k, a));
    return r;
  }
  S R_vvhv(int c, int b, int k, int a) {
    const auto& D = connection();
    S r = dconn(1, c, b, k, n_ + a) - dconn(3, c, b, a, k);
    for (int d = 0; d < n_; ++d) {
      add_prod(r, -1.0, D.Lv(c, d, k), D.Cv(d, b, a));
      add_prod(r, 1.0, D.Lv(d, b, k), D.Cv(c, d, a));
      add_prod(r, 1.0, D.Lv(d, a, k), D.Cv(c, b, d));
    }
    for (int d = 0; d < n_; ++d) add_prod(r, -1.0, D.Cv(c, b, d), T_hv(d, k, a));
    return r;
  }
  S R_hhvv(int i, int j, int b, int c) {
    const auto& D = connection();
    S r = dconn(2, i, j, b, n_ + c) - dconn(2, i, j, c, n_ + b);
    for (int h = 0; h < n_; ++h) {
      add_prod(r, 1.0, D.Ch(h, j, b), D.Ch(i, h, c));
      add_prod(r, -1.0, D.Ch(h, j, c), D.Ch(i, h, b));
    }
    return r;
  }
  S R_vvvv(int a, int b, int c, int d) {
    const auto& D = connection();
    S r = dconn(3, a, b, c, n_ + d) - dconn(3, a, b, d, n_ + c);
    for (int e = 0; e < n_; ++e) {
      add_prod(r, 1.0, D.Cv(e, b, c), D.Cv(a, e, d));
      add_prod(r, -1.0, D.Cv(e, b, d), D.Cv(a, e, c));
    }
    return r;
  }

  CurvatureT<S> curvature() {
    CurvatureT<S> C{Ten4<S>(n_, z_), Ten4<S>(n_, z_), Ten4<S>(n_, z_),
                    Ten4<S>(n_, z_), Ten4<S>(n_, z_), Ten4<S>(n_, z_)};
    for (int p = 0; p < n_; ++p)
      for (int q = 0; q < n_; ++q)
        for (int r = 0; r < n_; ++r)
          for (int s = 0; s < n_; ++s) {
            C.hhhh(p, q, r, s) = R_hhhh(p, q, r, s);
            C.vvhh(p, q, r, s) = R_vvhh(p, q, r, s);
            C.hhhv(p, q, r, s) = R_hhhv(p, q, r, s);
            C.vvhv(p, q, r, s) = R_vvhv(p, q, r, s);
            C.hhvv(p, q, r, s) = R_hhvv(p, q, r, s);
            C.vvvv(p, q, r, s) = R_vvvv(p, q, r, s);
          }
    return C;
  }

  // Ricci blocks by direct contraction (no full curvature storage).
  const RicciT<S>& ricci() {
    if (!ric_) {
      RicciT<S> Rc{Mat<S>(n_, n_, z_), Mat<S>(n_, n_, z_), Mat<S>(n_, n_, z_), Mat<S>(n_, n_, z_), z_, z_, z_};
      for (int p = 0; p < n_; ++p)
        for (int q = 0; q < n_; ++q) {
          S hh = z_, hv = z_, vh = z_, vv = z_;
          for (int k = 0; k < n_; ++k) {
            hh += R_hhhh(k, p, q, k);       // R_ij = R^k_ijk
            hv -= R_hhhv(k, p, k, q);       // R_ia = -R^k_ika
            vh += R_vvhv(k, p, q, k);       // R_ai = R^b_aib
            vv += R_vvvv(k, p, q, k);       // R_ab = R^c_abc
          }
          Rc.hh(p, q) = std::move(hh);
          Rc.hv(p, q) = std::move(hv);
          Rc.vh(p, q) = std::move(vh);
          Rc.vv(p, q) = std::move(vv);
        }
      clear_memo();
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) {
          add_prod(Rc.R, 1.0, ghi_(i, j), Rc.hh(i, j));
          add_prod(Rc.Sv, 1.0, gvi_(i, j), Rc.vv(i, j));
        }
      Rc.sR = Rc.R + Rc.Sv;
      ric_ = std::move(Rc);
    }
    return *ric_;
  }

  EinsteinT<S> einstein() {
    const auto& Rc = ricci();
    EinsteinT<S> G{Rc.hh, Rc.hv, Rc.vh, Rc.vv};
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        add_prod(G.hh(i, j), -0.5, dm_.gh(i, j), Rc.sR);
        add_prod(G.vv(i, j), -0.5, dm_.gv(i, j), Rc.sR);
      }
    return G;
  }

  // Coordinate metric (x, y ordering), its inverse, determinant.
  Mat<S> coordinate_metric() const {
    const int m = 2 * n_;
    Mat<S> G(m, m, z_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) {
        S gij = dm_.gh(i, j);
        for (int a = 0; a < n_; ++a) {
          S t = z_;
          for (int b = 0; b < n_; ++b) add_prod(t, 1.0, dm_.gv(a, b), dm_.N(b, j));
          add_prod(gij, 1.0, dm_.N(a, i), t);
        }
        G(j, i) = gij;
        G(i, j) = std::move(gij);
      }
    for (int i = 0; i < n_; ++i)
      for (int b = 0; b < n_; ++b) {
        S t = z_;
        for (int e = 0; e < n_; ++e) add_prod(t, 1.0, dm_.N(e, i), dm_.gv(b, e));
        G(i, n_ + b) = t;
        G(n_ + b, i) = std::move(t);
      }
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) G(n_ + a, n_ + b) = dm_.gv(a, b);
    return G;
  }

  Mat<S> coordinate_metric_inverse() const {
    const int m = 2 * n_;
    Mat<S> Gi(m, m, z_);
    Mat<S> gN(n_, n_, z_);  // gN(i, a) = g^ij N^a_j
    for (int i = 0; i < n_; ++i)
      for (int a = 0; a < n_; ++a)
        for (int j = 0; j < n_; ++j) add_prod(gN(i, a), 1.0, ghi_(i, j), dm_.N(a, j));
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) Gi(i, j) = ghi_(i, j);
    for (int i = 0; i < n_; ++i)
      for (int a = 0; a < n_; ++a) {
        Gi(i, n_ + a) = -gN(i, a);
        Gi(n_ + a, i) = -gN(i, a);
      }
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        S t = gvi_(a, b);
        for (int i = 0; i < n_; ++i) add_prod(t, 1.0, dm_.N(a, i), gN(i, b));
        Gi(n_ + a, n_ + b) = std::move(t);
      }
    return Gi;
  }

  S coord(const S& f, int alpha) const { return alpha < n_ ? calc_.dx(f, alpha) : calc_.dy(f, alpha - n_); }

  // Christoffel symbols of the coordinate metric, Gamma(g, a, b).
  const Ten3<S>& levi_civita() {
    if (!lc_) {
      const int m = 2 * n_;
      Mat<S> G = coordinate_metric();
      Mat<S> Gi = coordinate_metric_inverse();
      std::vector<Mat<S>> dG(m, Mat<S>(m, m, z_));
      for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b)
          for (int c = 0; c < m; ++c) {
            S d = coord(G(a, b), c);
            dG[c](b, a) = d;
            dG[c](a, b) = std::move(d);
          }
      Ten3<S> low(m, z_);
      for (int d = 0; d < m; ++d)
        for (int a = 0; a < m; ++a)
          for (int b = a; b < m; ++b) {
            S t = dG[a](d, b) + dG[b](d, a) - dG[d](a, b);
            t *= 0.5;
            low(d, b, a) = t;
            low(d, a, b) = std::move(t);
          }
      Ten3<S> Gam(m, z_);
      for (int g = 0; g < m; ++g)
        for (int a = 0; a < m; ++a)
          for (int b = a; b < m; ++b) {
            S acc = z_;
            for (int d = 0; d < m; ++d) add_prod(acc, 1.0, Gi(g, d), low(d, a, b));
            Gam(g, b, a) = acc;
            Gam(g, a, b) = std::move(acc);
          }
      lc_ = std::move(Gam);
    }
    return *lc_;
  }

  // Coordinate Ricci tensor of the Levi-Civita connection and its scalar.
  struct LCRicci {
    Mat<S> Ric;
    S scalar;
  };
  const LCRicci& lc_ricci() {
    if (!lcr_) {
      const int m = 2 * n_;
      const auto& Gam = levi_civita();
      Mat<S> Gi = coordinate_metric_inverse();
      std::vector<S> trace(m, z_);  // Gamma^g_ag
      for (int a = 0; a < m; ++a)
        for (int g = 0; g < m; ++g) trace[a] += Gam(g, a, g);
      // Discrete derivatives do not keep d_b trace_a symmetric in (a, b), so
      // every entry is formed and the symmetric part kept.
      Mat<S> Raw(m, m, z_), Ric(m, m, z_);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          S r = z_;
          for (int g = 0; g < m; ++g) r += coord(Gam(g, a, b), g);
          r -= coord(trace[a], b);
          for (int d = 0; d < m; ++d) add_prod(r, 1.0, trace[d], Gam(d, a, b));
          for (int g = 0; g < m; ++g)
            for (int d = 0; d < m; ++d) add_prod(r, -1.0, Gam(g, b, d), Gam(d, a, g));
          Raw(a, b) = std::move(r);
        }
      for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) {
          S r = (Raw(a, b) + Raw(b, a)) * 0.5;
          Ric(b, a) = r;
          Ric(a, b) = std::move(r);
        }
      S sc = z_;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) add_prod(sc, 1.0, Gi(a, b), Ric(a, b));
      lcr_ = LCRicci{std::move(Ric), std::move(sc)};
    }
    return *lcr_;
  }

  // Levi-Civita coefficients in the adapted frame (e_i, e_a), same index
  // convention as the d-connection: nabla_{e_b} e_a = Gamma(g, a, b) e_g.
  Ten3<S> levi_civita_adapted() {
    const int m = 2 * n_;
    const auto& Gam = levi_civita();
    // Frame vectors A(fa, a): e_fa = A(fa, a) d_a; B = A^{-1}.
    Mat<S> Am(m, m, z_), Bm(m, m, z_);
    const S one = z_ + 1.0;
    for (int a = 0; a < m; ++a) {
      Am(a, a) = one;
      Bm(a, a) = one;
    }
    for (int i = 0; i < n_; ++i)
      for (int c = 0; c < n_; ++c) {
        Am(i, n_ + c) = -dm_.N(c, i);
        Bm(i, n_ + c) = dm_.N(c, i);
      }
    // dA[b](fa, g) = d_b A(fa, g): only the -N block varies.
    Ten3<S> out(m, z_);
    std::vector<std::vector<S>> dN(static_cast<std::size_t>(n_) * n_);
    for (int c = 0; c < n_; ++c)
      for (int i = 0; i < n_; ++i)
        for (int b = 0; b < m; ++b) dN[c * n_ + i].push_back(coord(dm_.N(c, i), b));
    for (int fa = 0; fa < m; ++fa)
      for (int fb = 0; fb < m; ++fb) {
        // w^g = A(fb, b) (d_b A(fa, g) + A(fa, a) Gamma(g, a, b))
        std::vector<S> w(m, z_);
        for (int g = 0; g < m; ++g) {
          S acc = z_;
          for (int b = 0; b < m; ++b) {
            S inner = z_;
            if (fa < n_ && g >= n_) inner -= dN[(g - n_) * n_ + fa][b];
            for (int a = 0; a < m; ++a) add_prod(inner, 1.0, Am(fa, a), Gam(g, a, b));
            add_prod(acc, 1.0, Am(fb, b), inner);
          }
          w[g] = std::move(acc);
        }
        for (int fg = 0; fg < m; ++fg) {
          S acc = z_;
          for (int g = 0; g < m; ++g) add_prod(acc, 1.0, Bm(g, fg), w[g]);
          out(fg, fa, fb) = std::move(acc);
        }
      }
    return out;
  }

  // Canonical d-connection as a full 2n table in the adapted frame.
  Ten3<S> dconnection_full() {
    const auto& D = connection();
    Ten3<S> out(2 * n_, z_);
    for (int p = 0; p < n_; ++p)
      for (int q = 0; q < n_; ++q)
        for (int r = 0; r < n_; ++r) {
          out(p, q, r) = D.Lh(p, q, r);
          out(n_ + p, n_ + q, r) = D.Lv(p, q, r);
          out(p, q, n_ + r) = D.Ch(p, q, r);
          out(n_ + p, n_ + q, n_ + r) = D.Cv(p, q, r);
        }
    return out;
  }

  static Ten3<S> distortion_full(const DistortionT<S>& Z, int n, const S& z) {
    Ten3<S> out(2 * n, z);
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        for (int r = 0; r < n; ++r) {
          out(p, q, r) = Z.i_jk(p, q, r);
          out(n + p, q, r) = Z.a_jk(p, q, r);
          out(p, n + q, r) = Z.i_bk(p, q, r);
          out(n + p, n + q, r) = Z.a_bk(p, q, r);
          out(p, q, n + r) = Z.i_kb(p, q, r);
          out(n + p, q, n + r) = Z.a_jb(p, q, r);
          out(p, n + q, n + r) = Z.i_ab(p, q, r);
          out(n + p, n + q, n + r) = Z.a_bc(p, q, r);
        }
    return out;
  }

 private:
  DMetricT<S> dm_;
  Calc calc_;
  int n_;
  S z_;
  S gh_det_, gv_det_;
  Mat<S> ghi_, gvi_;
  std::optional<FrameDerivs> fd_;
  std::optional<AnholonomyT<S>> anh_;
  std::optional<DConnectionT<S>> conn_;
  std::optional<RicciT<S>> ric_;
  std::optional<Ten3<S>> lc_;
  std::optional<LCRicci> lcr_;
  std::map<std::size_t, S> dmemo_;
};

}  // namespace ffr
