#pragma once

// Small dense complex matrices for the matrix-valued Weyl theory. Sizes stay
// at the dimension of the operator (a handful), so everything is direct:
// partial-pivot LU column solves and power iteration for the 2-norm.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "mprobe/errors.hpp"
#include "mprobe/numerics.hpp"

namespace mprobe {

class CMat {
 public:
  CMat() = default;
  explicit CMat(int n) : n_(n), a_(static_cast<std::size_t>(n) * n) {}
  CMat(int n, std::vector<cplx> entries) : n_(n), a_(std::move(entries)) {
    if (a_.size() != static_cast<std::size_t>(n) * n)
      throw ValidationError("CMat: entry count does not match dimension");
  }

  static CMat identity(int n) {
    CMat m(n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static CMat scalar(int n, cplx v) {
    CMat m(n);
    for (int i = 0; i < n; ++i) m(i, i) = v;
    return m;
  }

  int dim() const { return n_; }
  cplx& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  const cplx& operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  const std::vector<cplx>& data() const { return a_; }

  CMat& operator+=(const CMat& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }
  CMat& operator-=(const CMat& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }
  CMat& operator*=(cplx c) {
    for (auto& v : a_) v *= c;
    return *this;
  }

  friend CMat operator+(CMat a, const CMat& b) { return a += b; }
  friend CMat operator-(CMat a, const CMat& b) { return a -= b; }
  friend CMat operator*(CMat a, cplx c) { return a *= c; }
  friend CMat operator*(cplx c, CMat a) { return a *= c; }
  friend CMat operator*(CMat a, double c) { return a *= cplx(c, 0.0); }
  friend CMat operator*(double c, CMat a) { return a *= cplx(c, 0.0); }
  friend CMat operator-(CMat a) { return a *= cplx(-1.0, 0.0); }

  friend CMat operator*(const CMat& a, const CMat& b) {
    CMat r(a.n_);
    for (int i = 0; i < a.n_; ++i)
      for (int k = 0; k < a.n_; ++k) {
        const cplx aik = a(i, k);
        if (aik == cplx{}) continue;
        for (int j = 0; j < a.n_; ++j) r(i, j) += aik * b(k, j);
      }
    return r;
  }

  CMat transpose() const {
    CMat r(n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) r(j, i) = (*this)(i, j);
    return r;
  }
  CMat adjoint() const {
    CMat r(n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) r(j, i) = std::conj((*this)(i, j));
    return r;
  }
  CMat conj() const {
    CMat r(n_);
    for (std::size_t k = 0; k < a_.size(); ++k) r.a_[k] = std::conj(a_[k]);
    return r;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const auto& v : a_) s += std::norm(v);
    return std::sqrt(s);
  }
  double max_abs() const {
    double s = 0.0;
    for (const auto& v : a_) s = std::max(s, std::abs(v));
    return s;
  }

 private:
  int n_ = 0;
  std::vector<cplx> a_;
};

// Solves A X = B by LU with partial pivoting (column solves, no explicit
// inverse). Throws on a numerically singular pivot.
inline CMat solve(CMat a, CMat b) {
  const int n = a.dim();
  if (b.dim() != n) throw ValidationError("solve: dimension mismatch");
  std::vector<int> perm(static_cast<std::size_t>(n));
  double scale = a.max_abs();
  if (scale == 0.0) throw NumericalError("solve: zero matrix");
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (std::abs(a(piv, c)) < 1e-14 * scale)
      throw NumericalError("solve: matrix numerically singular");
    if (piv != c) {
      for (int k = 0; k < n; ++k) std::swap(a(piv, k), a(c, k));
      for (int k = 0; k < n; ++k) std::swap(b(piv, k), b(c, k));
    }
    for (int r = c + 1; r < n; ++r) {
      const cplx f = a(r, c) / a(c, c);
      if (f == cplx{}) continue;
      a(r, c) = f;
      for (int k = c + 1; k < n; ++k) a(r, k) -= f * a(c, k);
      for (int k = 0; k < n; ++k) b(r, k) -= f * b(c, k);
    }
  }
  // Back substitution, one right-hand-side column at a time.
  for (int col = 0; col < n; ++col) {
    for (int r = n - 1; r >= 0; --r) {
      cplx s = b(r, col);
      for (int k = r + 1; k < n; ++k) s -= a(r, k) * b(k, col);
      b(r, col) = s / a(r, r);
    }
  }
  return b;
}

inline CMat inverse(const CMat& a) { return solve(a, CMat::identity(a.dim())); }

inline bool is_hermitian(const CMat& a, double tol) {
  const double scale = std::max(1.0, a.max_abs());
  for (int i = 0; i < a.dim(); ++i)
    for (int j = i; j < a.dim(); ++j)
      if (std::abs(a(i, j) - std::conj(a(j, i))) > tol * scale) return false;
  return true;
}

namespace detail {

// Largest eigenvalue of a Hermitian positive semidefinite matrix by power
// iteration with a fixed start vector (deterministic).
inline double psd_eig_max(const CMat& h) {
  const int n = h.dim();
  if (n == 1) return std::max(0.0, h(0, 0).real());
  std::vector<cplx> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = cplx(1.0 + 0.013 * i, 0.004 * (i + 1));
  double lambda = 0.0;
  for (int it = 0; it < 400; ++it) {
    std::vector<cplx> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      cplx s = 0.0;
      for (int j = 0; j < n; ++j) s += h(i, j) * v[j];
      w[i] = s;
    }
    double nrm = 0.0;
    for (const auto& x : w) nrm += std::norm(x);
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return 0.0;
    for (auto& x : w) x /= nrm;
    double ray = 0.0;
    for (int i = 0; i < n; ++i) {
      cplx s = 0.0;
      for (int j = 0; j < n; ++j) s += h(i, j) * w[j];
      ray += (std::conj(w[i]) * s).real();
    }
    if (it > 8 && std::abs(ray - lambda) <= 1e-15 * std::max(1.0, std::abs(ray))) {
      lambda = ray;
      break;
    }
    lambda = ray;
    v = std::move(w);
  }
  return lambda;
}

}  // namespace detail

// Extremal eigenvalues of a Hermitian matrix (via shifted power iteration).
inline double hermitian_eig_max(const CMat& h) {
  const double c = h.frobenius_norm() + 1.0;
  return detail::psd_eig_max(h + CMat::scalar(h.dim(), c)) - c;
}
inline double hermitian_eig_min(const CMat& h) { return -hermitian_eig_max(-h); }

// Operator 2-norm: sqrt of the top eigenvalue of A^* A.
inline double spectral_norm(const CMat& a) {
  if (a.dim() == 1) return std::abs(a(0, 0));
  return std::sqrt(std::max(0.0, detail::psd_eig_max(a.adjoint() * a)));
}

}  // namespace mprobe
