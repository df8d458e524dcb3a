#pragma once

// Data model: compactly supported piecewise-polynomial potentials (scalar and
// Hermitian matrix valued), projective boundary conditions, and the problem
// geometry. Everything is a value type, immutable after validation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mprobe/errors.hpp"
#include "mprobe/matrix.hpp"
#include "mprobe/numerics.hpp"

namespace mprobe {

// Polynomial in a local coordinate t, coefficients c[0] + c[1] t + ...
// V is double (scalar potentials) or CMat (matrix potentials).
template <class V>
struct Poly {
  std::vector<V> c;

  bool empty() const { return c.empty(); }
  int degree() const { return c.empty() ? -1 : static_cast<int>(c.size()) - 1; }

  V eval(double t) const {
    if (c.empty()) return V{};
    V acc = c.back();
    for (int k = static_cast<int>(c.size()) - 2; k >= 0; --k) acc = acc * t + c[k];
    return acc;
  }

  // Coefficients of p(s + t) as a polynomial in t (Taylor shift by s).
  Poly shifted(double s) const {
    Poly r = *this;
    const int n = static_cast<int>(r.c.size());
    for (int i = 0; i < n - 1; ++i)
      for (int j = n - 2; j >= i; --j) r.c[j] = r.c[j] + r.c[j + 1] * s;
    return r;
  }

  // Coefficients of p(w - t): shift to w, then flip the sign of odd terms.
  Poly reflected(double w) const {
    Poly r = shifted(w);
    for (std::size_t k = 1; k < r.c.size(); k += 2) r.c[k] = -r.c[k];
    return r;
  }

  Poly antiderivative() const {
    Poly r;
    r.c.resize(c.size() + 1);
    if (!c.empty()) r.c[0] = c[0] * 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) r.c[k + 1] = c[k] * (1.0 / (double)(k + 1));
    return r;
  }

  double integral(double t0, double t1) const
    requires std::is_same_v<V, double>
  {
    const Poly F = antiderivative();
    return F.eval(t1) - F.eval(t0);
  }

  // Upper bound for sup_{0<=t<=w} of the coefficient magnitudes' polynomial.
  double sup_bound(double w) const {
    double s = 0.0, p = 1.0;
    for (const auto& ck : c) {
      if constexpr (std::is_same_v<V, CMat>)
        s += spectral_norm(ck) * p;
      else
        s += std::abs(ck) * p;
      p *= w;
    }
    return s;
  }
};

template <class V>
struct PiecewisePotentialT {
  using Value = V;

  std::vector<double> breakpoints;  // x0 = 0 < x1 < ... < xn
  std::vector<Poly<V>> segments;    // segments[i] lives on [x_i, x_{i+1}], local t = x - x_i

  double support_sup() const { return breakpoints.empty() ? 0.0 : breakpoints.back(); }

  // Index of the segment containing x, or -1 when x >= support (value 0 there).
  int segment_index(double x) const {
    if (x < 0.0) throw ValidationError("potential evaluation: x must be nonnegative");
    if (segments.empty() || x >= support_sup()) return -1;
    // breakpoints are few; linear scan keeps evaluation allocation-free
    int i = static_cast<int>(segments.size()) - 1;
    while (i > 0 && x < breakpoints[static_cast<std::size_t>(i)]) --i;
    return i;
  }

  V eval(double x) const {
    const int i = segment_index(x);
    if (i < 0) return zero_value();
    return segments[static_cast<std::size_t>(i)].eval(x - breakpoints[static_cast<std::size_t>(i)]);
  }

  V zero_value() const {
    if constexpr (std::is_same_v<V, double>)
      return 0.0;
    else
      return V(dim);
  }

  // Upper bound on sup |q| over the support (coefficient-sum bound per segment).
  double sup_norm_bound() const {
    double b = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i)
      b = std::max(b, segments[i].sup_bound(breakpoints[i + 1] - breakpoints[i]));
    return b;
  }

  int dim = 1;  // matrix dimension; 1 for scalar
};

using PiecewisePotential = PiecewisePotentialT<double>;
using HermitianMatrixPotential = PiecewisePotentialT<CMat>;

// Rigorous enclosure of the range of a scalar polynomial on [0, w]:
// fine-grid extrema widened by a Lipschitz slack from the derivative bound.
inline std::pair<double, double> poly_range_bound(const Poly<double>& p, double w,
                                                  int samples = 256) {
  if (p.c.empty() || w <= 0.0) return {0.0, 0.0};
  double dbound = 0.0, pw = 1.0;
  for (std::size_t k = 1; k < p.c.size(); ++k) {
    dbound += static_cast<double>(k) * std::abs(p.c[k]) * pw;
    pw *= w;
  }
  double lo = p.eval(0.0), hi = lo;
  for (int i = 1; i <= samples; ++i) {
    const double v = p.eval(w * i / samples);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double slack = 0.5 * dbound * w / samples;
  return {lo - slack, hi + slack};
}

// Same idea for Hermitian matrix polynomials, enclosing the eigenvalue range.
inline std::pair<double, double> matrix_poly_eig_range(const Poly<CMat>& p, double w,
                                                       int samples = 64) {
  if (p.c.empty() || w <= 0.0) return {0.0, 0.0};
  double dbound = 0.0, pw = 1.0;
  for (std::size_t k = 1; k < p.c.size(); ++k) {
    dbound += static_cast<double>(k) * spectral_norm(p.c[k]) * pw;
    pw *= w;
  }
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i <= samples; ++i) {
    const CMat v = p.eval(w * i / samples);
    const double emin = hermitian_eig_min(v), emax = hermitian_eig_max(v);
    if (i == 0) {
      lo = emin;
      hi = emax;
    } else {
      lo = std::min(lo, emin);
      hi = std::max(hi, emax);
    }
  }
  const double slack = 0.5 * dbound * w / samples;
  return {lo - slack, hi + slack};
}

// Lower bound on inf q over the whole domain (the zero tail counts).
inline double potential_inf_bound(const PiecewisePotential& q) {
  double lo = 0.0;
  for (std::size_t i = 0; i < q.segments.size(); ++i)
    lo = std::min(lo, poly_range_bound(q.segments[i], q.breakpoints[i + 1] - q.breakpoints[i]).first);
  return lo;
}

inline double potential_inf_bound(const HermitianMatrixPotential& q) {
  double lo = 0.0;
  for (std::size_t i = 0; i < q.segments.size(); ++i)
    lo = std::min(lo,
                  matrix_poly_eig_range(q.segments[i], q.breakpoints[i + 1] - q.breakpoints[i]).first);
  return lo;
}

// Exact integral of a scalar potential over [x1, x2] (within [0, inf)).
inline double potential_integral(const PiecewisePotential& q, double x1, double x2) {
  if (x2 < x1) return -potential_integral(q, x2, x1);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.segments.size(); ++i) {
    const double lo = std::max(x1, q.breakpoints[i]);
    const double hi = std::min(x2, q.breakpoints[i + 1]);
    if (hi > lo) acc += q.segments[i].integral(lo - q.breakpoints[i], hi - q.breakpoints[i]);
  }
  return acc;
}

// sin(b) g' + cos(b) g = 0 stored as the projective pair (c, s), c^2+s^2 = 1,
// s >= 0. Dirichlet is (1, 0). cot(b) is never formed.
struct BoundaryCondition {
  double c = 1.0;
  double s = 0.0;

  static BoundaryCondition dirichlet() { return {1.0, 0.0}; }
  static BoundaryCondition neumann() { return {0.0, 1.0}; }
  static BoundaryCondition from_angle(double alpha) { return {std::cos(alpha), std::sin(alpha)}; }

  bool is_dirichlet(double tol = 1e-14) const { return std::abs(s) <= tol; }
  double angle() const {
    double a = std::atan2(s, c);
    if (a < 0.0) a += kPi;  // fold (-pi,0) onto [0,pi) projectively
    if (a >= kPi) a -= kPi;
    return a;
  }

  BoundaryCondition normalized() const {
    const double n = std::hypot(c, s);
    if (n == 0.0) throw ValidationError("boundary condition: (c, s) must not both vanish");
    double cc = c / n, ss = s / n;
    if (ss < 0.0 || (ss == 0.0 && cc < 0.0)) {
      cc = -cc;
      ss = -ss;
    }
    if (ss == 0.0) cc = 1.0;
    return {cc, ss};
  }

  bool operator==(const BoundaryCondition&) const = default;
};

enum class GeometryKind { HalfLine, FiniteInterval, FullLine };

struct ProblemSpec {
  GeometryKind geometry = GeometryKind::HalfLine;
  double b = 0.0;  // FiniteInterval only
  std::variant<PiecewisePotential, HermitianMatrixPotential> potential;
  BoundaryCondition left_bc = BoundaryCondition::dirichlet();
  std::optional<BoundaryCondition> right_bc;  // FiniteInterval only

  bool is_matrix() const { return std::holds_alternative<HermitianMatrixPotential>(potential); }
  const PiecewisePotential& scalar_potential() const {
    return std::get<PiecewisePotential>(potential);
  }
  const HermitianMatrixPotential& matrix_potential() const {
    return std::get<HermitianMatrixPotential>(potential);
  }
  double support_sup() const {
    return is_matrix() ? matrix_potential().support_sup() : scalar_potential().support_sup();
  }
};

namespace detail {

template <class V>
inline void check_potential(const PiecewisePotentialT<V>& p, std::vector<std::string>& issues) {
  if (p.breakpoints.empty()) {
    issues.push_back("potential.breakpoints: must contain at least x0 = 0");
    return;
  }
  if (p.breakpoints.front() != 0.0)
    issues.push_back("potential.breakpoints[0]: must equal 0");
  for (std::size_t i = 0; i + 1 < p.breakpoints.size(); ++i)
    if (!(p.breakpoints[i] < p.breakpoints[i + 1]))
      issues.push_back("potential.breakpoints[" + std::to_string(i + 1) +
                       "]: breakpoints must be strictly increasing");
  if (p.segments.size() + 1 != p.breakpoints.size())
    issues.push_back("potential.segments: need exactly one coefficient list per interval");
  if constexpr (std::is_same_v<V, CMat>) {
    if (p.dim < 1) issues.push_back("potential.dim: must be >= 1");
    for (std::size_t i = 0; i < p.segments.size(); ++i)
      for (std::size_t k = 0; k < p.segments[i].c.size(); ++k) {
        const CMat& m = p.segments[i].c[k];
        if (m.dim() != p.dim)
          issues.push_back("potential.segments[" + std::to_string(i) + "][" + std::to_string(k) +
                           "]: coefficient dimension mismatch");
        else if (!is_hermitian(m, 1e-14))
          issues.push_back("potential.segments[" + std::to_string(i) + "][" + std::to_string(k) +
                           "]: matrix coefficient not Hermitian");
      }
  }
}

}  // namespace detail

// Enforces all invariants and returns the normalized spec (boundary pairs
// scaled to c^2 + s^2 = 1 with s >= 0). Every violation is reported with its
// field path.
inline ProblemSpec validate(const ProblemSpec& in) {
  std::vector<std::string> issues;
  ProblemSpec out = in;

  std::visit([&](const auto& p) { detail::check_potential(p, issues); }, in.potential);

  try {
    out.left_bc = in.left_bc.normalized();
  } catch (const ValidationError& e) {
    issues.push_back(std::string("left_bc: ") + e.what());
  }
  if (in.right_bc) {
    try {
      out.right_bc = in.right_bc->normalized();
    } catch (const ValidationError& e) {
      issues.push_back(std::string("right_bc: ") + e.what());
    }
  }

  const double alpha = issues.empty() ? out.support_sup() : 0.0;
  switch (in.geometry) {
    case GeometryKind::HalfLine:
      if (in.right_bc) issues.push_back("right_bc: only allowed for finite_interval geometry");
      break;
    case GeometryKind::FiniteInterval:
      if (!(in.b > 0.0)) issues.push_back("geometry.finite_interval: b must be positive");
      if (issues.empty() && alpha > in.b + 1e-14)
        issues.push_back("geometry.finite_interval: potential support exceeds b");
      if (!in.right_bc) out.right_bc = BoundaryCondition::dirichlet();
      if (in.is_matrix())
        issues.push_back("potential: matrix potentials are supported on the half line only");
      break;
    case GeometryKind::FullLine:
      if (in.right_bc) issues.push_back("right_bc: only allowed for finite_interval geometry");
      if (!in.left_bc.normalized().is_dirichlet())
        issues.push_back("left_bc: full-line problems use the Dirichlet pairing at x = 0");
      if (in.is_matrix())
        issues.push_back("potential: matrix potentials are supported on the half line only");
      if (issues.empty() && !(alpha > 0.0))
        issues.push_back("potential: full-line potential needs a nonempty symmetric interval");
      break;
  }

  if (!issues.empty()) throw ValidationError("invalid problem specification", issues);
  return out;
}

// Restriction of a scalar potential to [lo, hi], re-based to [0, hi-lo].
inline PiecewisePotential restrict_potential(const PiecewisePotential& p, double lo, double hi) {
  PiecewisePotential r;
  r.breakpoints.push_back(0.0);
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    const double sl = std::max(lo, p.breakpoints[i]);
    const double sh = std::min(hi, p.breakpoints[i + 1]);
    if (sh <= sl) continue;
    r.segments.push_back(p.segments[i].shifted(sl - p.breakpoints[i]));
    r.breakpoints.push_back(sh - lo);
  }
  if (r.segments.empty()) r.breakpoints = {0.0};
  return r;
}

// Mirror image of a potential on [0, L]: result(t) = p(L - t).
inline PiecewisePotential reflect_potential(const PiecewisePotential& p, double L) {
  const PiecewisePotential q = restrict_potential(p, 0.0, L);
  PiecewisePotential r;
  r.breakpoints.push_back(0.0);
  for (std::size_t i = q.segments.size(); i-- > 0;) {
    const double w = q.breakpoints[i + 1] - q.breakpoints[i];
    r.segments.push_back(q.segments[i].reflected(w));
    r.breakpoints.push_back(L - q.breakpoints[i]);
  }
  return r;
}

// A full-line potential document describes q on the symmetric interval
// [-L, L], L = support_sup/2, via q(x) = p(x + L). This splits it into the
// two half-line restrictions q_plus(t) = q(t), q_minus(t) = q(-t), t >= 0.
struct FullLineSplit {
  PiecewisePotential q_plus;
  PiecewisePotential q_minus;
  double half_width = 0.0;
};

inline FullLineSplit split_full_line(const PiecewisePotential& p) {
  const double L = p.support_sup() / 2.0;
  FullLineSplit s;
  s.half_width = L;
  s.q_plus = restrict_potential(p, L, 2.0 * L);
  s.q_minus = reflect_potential(p, L);
  return s;
}

}  // namespace mprobe
