#pragma once

// Discrete analog: finite Jacobi operators, their m-functions and moment
// expansions, the decay-order <-> coefficient-agreement correspondence, and
// coefficient recovery from a discrete spectral measure.
//
// The order correspondence is an exact combinatorial statement, so moments
// and the equivalence verifier run in exact rational arithmetic
// (boost::multiprecision) as well as in doubles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mprobe/errors.hpp"
#include "mprobe/numerics.hpp"

namespace mprobe::jacobi {

using Rational = boost::multiprecision::cpp_rational;

// Symmetric tridiagonal operator: diagonal b_0..b_{n-1}, off-diagonal
// a_0..a_{n-2} > 0. T is double or Rational.
template <class T>
struct JacobiOperator {
  std::vector<T> a;
  std::vector<T> b;

  int size() const { return static_cast<int>(b.size()); }

  void check() const {
    if (b.empty()) throw ValidationError("jacobi: operator must have size >= 1");
    if (a.size() + 1 != b.size())
      throw ValidationError("jacobi: need exactly size-1 off-diagonal entries");
    for (const auto& ak : a)
      if (!(ak > T(0))) throw ValidationError("jacobi: off-diagonal entries must be positive");
  }

  // Bound on the operator norm: max_k (|b_k| + a_{k-1} + a_k).
  double norm_bound() const {
    double bound = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      double row = std::abs(static_cast<double>(b[k]));
      if (k > 0) row += static_cast<double>(a[k - 1]);
      if (k + 1 < b.size()) row += static_cast<double>(a[k]);
      bound = std::max(bound, row);
    }
    return bound;
  }
};

template <class T>
struct DiscreteMeasure {
  std::vector<T> points;   // distinct
  std::vector<T> weights;  // positive, summing to 1

  void check() const {
    if (points.empty() || points.size() != weights.size())
      throw ValidationError("measure: points and weights must be nonempty and equal-length");
    for (const auto& w : weights)
      if (!(w > T(0))) throw ValidationError("measure: weights must be positive");
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t j = i + 1; j < points.size(); ++j)
        if (points[i] == points[j]) throw ValidationError("measure: points must be distinct");
    T sum(0);
    for (const auto& w : weights) sum += w;
    if constexpr (std::is_same_v<T, double>) {
      if (std::abs(sum - 1.0) > 1e-14 * points.size())
        throw ValidationError("measure: weights must sum to 1");
    } else {
      if (sum != T(1)) throw ValidationError("measure: weights must sum to 1 exactly");
    }
  }
};

// m(z) = (delta_0, (J - z)^{-1} delta_0) by the tridiagonal continued
// fraction; the recursion is exactly the elimination from the bottom row.
inline cplx jacobi_m(const JacobiOperator<double>& J, cplx z) {
  J.check();
  const int n = J.size();
  const double scale = J.norm_bound() + std::abs(z) + 1.0;
  cplx t = J.b[static_cast<std::size_t>(n - 1)] - z;
  for (int k = n - 2; k >= 0; --k) {
    if (std::abs(t) < 1e-15 * scale)
      throw PoleError("jacobi_m: z is (numerically) an eigenvalue", z);
    t = J.b[static_cast<std::size_t>(k)] - z - J.a[static_cast<std::size_t>(k)] * J.a[static_cast<std::size_t>(k)] / t;
  }
  if (std::abs(t) < 1e-15 * scale)
    throw PoleError("jacobi_m: z is (numerically) an eigenvalue", z);
  return 1.0 / t;
}

// Moments mu_k = <delta_0, J^k delta_0>, k = 0..K, by iterated application
// of the tridiagonal matrix; exact in rational arithmetic.
template <class T>
inline std::vector<T> moments(const JacobiOperator<T>& J, int K) {
  J.check();
  if (K < 0) throw ValidationError("moments: K must be >= 0");
  const std::size_t n = J.b.size();
  std::vector<T> u(n, T(0)), v(n, T(0));
  u[0] = T(1);
  std::vector<T> mu;
  mu.reserve(static_cast<std::size_t>(K) + 1);
  mu.push_back(T(1));
  for (int k = 1; k <= K; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      T s = J.b[i] * u[i];
      if (i > 0) s += J.a[i - 1] * u[i - 1];
      if (i + 1 < n) s += J.a[i] * u[i + 1];
      v[i] = s;
    }
    std::swap(u, v);
    mu.push_back(u[0]);
  }
  return mu;
}

// Largest N with m1 - m2 = O(|z|^{-N}): one past the first moment mismatch.
struct DecayOrder {
  int N = 0;                 // valid when !all_compared_equal
  int first_mismatch = -1;   // index k* of the first differing moment
  bool all_compared_equal = false;
  int k_max = 0;             // N >= k_max + 2 when all compared moments agree
};

template <class T>
inline DecayOrder decay_order(const JacobiOperator<T>& J1, const JacobiOperator<T>& J2,
                              int K_max) {
  const auto mu1 = moments(J1, K_max);
  const auto mu2 = moments(J2, K_max);
  DecayOrder d;
  d.k_max = K_max;
  for (int k = 0; k <= K_max; ++k) {
    bool differ;
    if constexpr (std::is_same_v<T, double>) {
      const double scale = std::max({1.0, std::abs(mu1[static_cast<std::size_t>(k)]),
                                     std::abs(mu2[static_cast<std::size_t>(k)])});
      differ = std::abs(mu1[static_cast<std::size_t>(k)] - mu2[static_cast<std::size_t>(k)]) > 1e-12 * scale;
    } else {
      differ = mu1[static_cast<std::size_t>(k)] != mu2[static_cast<std::size_t>(k)];
    }
    if (differ) {
      d.first_mismatch = k;
      d.N = k + 1;
      return d;
    }
  }
  d.all_compared_equal = true;
  return d;
}

// Index ranges implied by decay of order N (inclusive upper indices; -1
// means the range is empty).
struct AgreementDepth {
  int a_upto = -1;
  int b_upto = -1;
};

inline AgreementDepth agreement_depth(int N) {
  if (N < 3) throw ValidationError("agreement_depth: requires N >= 3");
  AgreementDepth d;
  if (N % 2 == 0) {
    d.a_upto = (N - 4) / 2;
    d.b_upto = (N - 4) / 2;
  } else {
    d.a_upto = (N - 5) / 2;  // empty for N = 3
    d.b_upto = (N - 3) / 2;
  }
  return d;
}

struct EquivalenceReport {
  bool ok = true;
  int checked_N_lo = 3, checked_N_hi = 0;
  std::vector<std::string> violations;
};

// Checks, for every N in [3, K_max + 1], both directions of
//   m1 - m2 = O(|z|^{-N})  <=>  coefficients agree over the predicted ranges.
// The left side is "the first N-1 moments coincide" (exact in rational mode).
template <class T>
inline EquivalenceReport verify_order_equivalence(const JacobiOperator<T>& J1,
                                                  const JacobiOperator<T>& J2, int K_max) {
  const auto ord = decay_order(J1, J2, K_max);
  const int k_star = ord.all_compared_equal ? K_max + 1 : ord.first_mismatch;

  auto first_diff = [](const std::vector<T>& x, const std::vector<T>& y) {
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i)
      if (x[i] != y[i]) return static_cast<int>(i);
    return static_cast<int>(n);  // all shared entries agree
  };
  const int d_a = first_diff(J1.a, J2.a);
  const int d_b = first_diff(J1.b, J2.b);

  EquivalenceReport rep;
  rep.checked_N_hi = K_max + 1;
  for (int N = 3; N <= K_max + 1; ++N) {
    const bool decay_holds = k_star >= N - 1;  // moments 0..N-2 all agree
    const auto depth = agreement_depth(N);
    const bool pattern_holds = d_a > depth.a_upto && d_b > depth.b_upto;
    if (decay_holds != pattern_holds) {
      rep.ok = false;
      rep.violations.push_back("N = " + std::to_string(N) + ": decay_holds = " +
                               (decay_holds ? "true" : "false") + " but pattern_holds = " +
                               (pattern_holds ? "true" : "false") + " (k* = " +
                               std::to_string(k_star) + ", d_a = " + std::to_string(d_a) +
                               ", d_b = " + std::to_string(d_b) + ")");
    }
  }
  return rep;
}

// Stieltjes/Lanczos reconstruction: orthonormalize {1, x, x^2, ...} in
// L^2(d rho) with full reorthogonalization, reading off
// a_k = <x p_k, p_{k+1}>, b_k = <x p_k, p_k>.
inline JacobiOperator<double> reconstruct(const DiscreteMeasure<double>& mu, int n) {
  mu.check();
  const std::size_t M = mu.points.size();
  if (static_cast<int>(M) < n)
    throw ValidationError("reconstruct: measure has fewer support points than requested size");
  if (n < 1) throw ValidationError("reconstruct: size must be >= 1");

  std::vector<std::vector<double>> p;  // value vectors scaled by sqrt(weights)
  std::vector<double> cur(M), prev;
  for (std::size_t i = 0; i < M; ++i) cur[i] = std::sqrt(mu.weights[i]);
  double nrm = 0.0;
  for (double x : cur) nrm += x * x;
  nrm = std::sqrt(nrm);
  for (double& x : cur) x /= nrm;

  JacobiOperator<double> J;
  auto dot = [M](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i) s += x[i] * y[i];
    return s;
  };

  for (int k = 0; k < n; ++k) {
    p.push_back(cur);
    std::vector<double> v(M);
    for (std::size_t i = 0; i < M; ++i) v[i] = mu.points[i] * cur[i];
    J.b.push_back(dot(cur, v));
    if (k == n - 1) break;
    for (std::size_t i = 0; i < M; ++i) v[i] -= J.b.back() * cur[i];
    if (!prev.empty())
      for (std::size_t i = 0; i < M; ++i) v[i] -= J.a.back() * prev[i];
    for (int pass = 0; pass < 2; ++pass)  // full reorthogonalization, twice
      for (const auto& pj : p) {
        const double c = dot(pj, v);
        for (std::size_t i = 0; i < M; ++i) v[i] -= c * pj[i];
      }
    const double ak = std::sqrt(dot(v, v));
    if (!(ak > 1e-14)) throw NumericalError("reconstruct: rank failure (measure too small)");
    J.a.push_back(ak);
    for (double& x : v) x /= ak;
    prev = std::move(cur);
    cur = std::move(v);
  }
  return J;
}

// Exact-rational reconstruction via monic orthogonal polynomials: returns
// b_k exactly and a_k^2 exactly (a_k itself is a square root).
struct RationalRecurrence {
  std::vector<Rational> a_sq;
  std::vector<Rational> b;
};

inline RationalRecurrence reconstruct_exact(const DiscreteMeasure<Rational>& mu, int n) {
  mu.check();
  const std::size_t M = mu.points.size();
  if (static_cast<int>(M) < n)
    throw ValidationError("reconstruct_exact: measure has fewer support points than requested");
  std::vector<Rational> pk(M, Rational(1)), pkm1(M, Rational(0));
  Rational norm_k(0), norm_km1(1);
  for (std::size_t i = 0; i < M; ++i) norm_k += mu.weights[i];

  RationalRecurrence rec;
  for (int k = 0; k < n; ++k) {
    Rational xb(0);
    for (std::size_t i = 0; i < M; ++i) xb += mu.weights[i] * mu.points[i] * pk[i] * pk[i];
    rec.b.push_back(xb / norm_k);
    if (k == n - 1) break;
    const Rational ck = k == 0 ? Rational(0) : norm_k / norm_km1;
    std::vector<Rational> next(M);
    for (std::size_t i = 0; i < M; ++i)
      next[i] = (mu.points[i] - rec.b.back()) * pk[i] - (k == 0 ? Rational(0) : ck * pkm1[i]);
    Rational norm_next(0);
    for (std::size_t i = 0; i < M; ++i) norm_next += mu.weights[i] * next[i] * next[i];
    if (norm_next == 0) throw NumericalError("reconstruct_exact: rank failure");
    rec.a_sq.push_back(norm_next / norm_k);
    pkm1 = std::move(pk);
    pk = std::move(next);
    norm_km1 = norm_k;
    norm_k = norm_next;
  }
  return rec;
}

// Eigenvalues by Sturm bisection plus first-component weights from the
// orthonormal-polynomial recurrence: the spectral measure of J.
inline DiscreteMeasure<double> spectral_measure(const JacobiOperator<double>& J) {
  J.check();
  const int n = J.size();
  const double r = J.norm_bound() + 1e-8;

  auto count_below = [&](double x) {
    int cnt = 0;
    double d = J.b[0] - x;
    if (d < 0) ++cnt;
    for (int k = 1; k < n; ++k) {
      double denom = d;
      if (std::abs(denom) < 1e-300) denom = denom < 0 ? -1e-300 : 1e-300;
      d = J.b[static_cast<std::size_t>(k)] - x -
          J.a[static_cast<std::size_t>(k - 1)] * J.a[static_cast<std::size_t>(k - 1)] / denom;
      if (d < 0) ++cnt;
    }
    return cnt;
  };

  DiscreteMeasure<double> mu;
  mu.points.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    double lo = -r, hi = r;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * r; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (count_below(mid) >= j + 1)
        hi = mid;
      else
        lo = mid;
    }
    mu.points[static_cast<std::size_t>(j)] = 0.5 * (lo + hi);
  }

  mu.weights.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    const double lam = mu.points[static_cast<std::size_t>(j)];
    double pm1 = 0.0, p0 = 1.0, ssq = 1.0;
    for (int k = 0; k + 1 < n; ++k) {
      const double p1 = ((lam - J.b[static_cast<std::size_t>(k)]) * p0 -
                         (k > 0 ? J.a[static_cast<std::size_t>(k - 1)] : 0.0) * pm1) /
                        J.a[static_cast<std::size_t>(k)];
      ssq += p1 * p1;
      pm1 = p0;
      p0 = p1;
    }
    mu.weights[static_cast<std::size_t>(j)] = 1.0 / ssq;
    total += mu.weights[static_cast<std::size_t>(j)];
  }
  for (auto& w : mu.weights) w /= total;
  return mu;
}

// Monomial-basis coefficients of the orthonormal polynomials P_0..P_{n-1}
// generated by the three-term recurrence of J.
struct PolynomialTable {
  std::vector<std::vector<double>> coeffs;  // coeffs[k][j] = coefficient of x^j in P_k
};

inline PolynomialTable polynomial_table(const JacobiOperator<double>& J) {
  J.check();
  const int n = J.size();
  PolynomialTable t;
  t.coeffs.assign(static_cast<std::size_t>(n), {});
  t.coeffs[0] = {1.0};
  for (int k = 0; k + 1 < n; ++k) {
    const auto& pk = t.coeffs[static_cast<std::size_t>(k)];
    std::vector<double> next(pk.size() + 1, 0.0);
    for (std::size_t j = 0; j < pk.size(); ++j) {
      next[j + 1] += pk[j];                      // x * P_k
      next[j] -= J.b[static_cast<std::size_t>(k)] * pk[j];  // -b_k P_k
    }
    if (k > 0) {
      const auto& pm = t.coeffs[static_cast<std::size_t>(k - 1)];
      for (std::size_t j = 0; j < pm.size(); ++j) next[j] -= J.a[static_cast<std::size_t>(k - 1)] * pm[j];
    }
    for (auto& c : next) c /= J.a[static_cast<std::size_t>(k)];
    t.coeffs[static_cast<std::size_t>(k + 1)] = std::move(next);
  }
  return t;
}

// Parses "p/q" or integer strings into exact rationals.
inline Rational parse_rational(const std::string& s) {
  const auto slash = s.find('/');
  try {
    if (slash == std::string::npos)
      return Rational(boost::multiprecision::cpp_int(s));
    const boost::multiprecision::cpp_int p(s.substr(0, slash));
    const boost::multiprecision::cpp_int q(s.substr(slash + 1));
    if (q == 0) throw ValidationError("rational: zero denominator in '" + s + "'");
    return Rational(p, q);
  } catch (const std::runtime_error&) {
    throw ValidationError("rational: cannot parse '" + s + "'");
  }
}

inline std::string rational_to_string(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

}  // namespace mprobe::jacobi
