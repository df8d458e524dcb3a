#pragma once

// Weyl-Titchmarsh machinery: Jost solutions, half-line / finite-interval /
// full-line / matrix m-functions, and the x-dependent Riccati trace.
//
// The integrator exploits that potentials are piecewise polynomials: on each
// step the solution of -f'' + (q - z) f = 0 has an explicitly computable
// Taylor series (the coefficient q - z is a polynomial), so steps are taken
// by series recurrence with the tail driven below rounding. Integration runs
// backward from the support edge, where the Weyl solution is exactly
// exponential; that is the direction in which the wanted solution grows and
// contamination dies out.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <utility>
#include <vector>

#include "mprobe/errors.hpp"
#include "mprobe/matrix.hpp"
#include "mprobe/model.hpp"
#include "mprobe/numerics.hpp"

namespace mprobe {

struct OdeOptions {
  double rel_tol = 1e-10;      // advertised accuracy; the stepper aims lower
  double riccati_guard = 1e6;  // |m| beyond this triggers the linear fallback
  int max_order = 80;          // Taylor truncation cap per step
  double rho_max = 3.0;        // cap on |sqrt(z)| * step
  double min_step = 1e-12;
  bool allow_any_real_z = false;  // diagnostic switch: skip the spectral-floor check
};

namespace weyl_detail {

inline double vnorm(const cplx& v) { return std::abs(v); }
inline double vnorm(const CMat& m) { return m.frobenius_norm(); }
inline cplx vzero(const cplx&) { return cplx{}; }
inline CMat vzero(const CMat& m) { return CMat(m.dim()); }

constexpr double kTailEps = 1e-17;

// One coefficient segment of w(x) = q(x) - z, local to xl.
template <class V>
struct CoefSegment {
  double xl, xr;
  Poly<V> w;
  double rate;  // sqrt of a sup bound on |w|, used for step-size proposals
};

template <class V>
using CoefTable = std::vector<CoefSegment<V>>;

// Complexified coefficient table for scalar potentials: w = q - z.
struct CoefSegmentC {
  double xl, xr;
  Poly<cplx> w;
  double rate;
};
using CoefTableC = std::vector<CoefSegmentC>;

inline CoefTableC scalar_coef_table(const PiecewisePotential& q, cplx z, double x_hi) {
  CoefTableC t;
  auto push = [&](double xl, double xr, const Poly<double>& p) {
    if (!(xr > xl)) return;
    Poly<cplx> w;
    w.c.assign(p.c.begin(), p.c.end());
    if (w.c.empty()) w.c.push_back(cplx{});
    w.c[0] -= z;
    const double bound = w.sup_bound(xr - xl);
    t.push_back(CoefSegmentC{xl, xr, std::move(w), std::sqrt(std::max(1.0, bound))});
  };
  for (std::size_t i = 0; i < q.segments.size(); ++i) {
    const double xl = q.breakpoints[i];
    const double xr = std::min(q.breakpoints[i + 1], x_hi);
    if (xr > xl) push(xl, xr, q.segments[i]);
  }
  const double alpha = q.support_sup();
  if (x_hi > alpha) push(alpha, x_hi, Poly<double>{});
  return t;
}

inline CoefTable<CMat> matrix_coef_table(const HermitianMatrixPotential& q, cplx z, double x_hi) {
  CoefTable<CMat> t;
  const int m = q.dim;
  auto push = [&](double xl, double xr, Poly<CMat> w) {
    if (!(xr > xl)) return;
    if (w.c.empty()) w.c.push_back(CMat(m));
    w.c[0] -= CMat::scalar(m, z);
    const double bound = w.sup_bound(xr - xl);
    t.push_back(CoefSegment<CMat>{xl, xr, std::move(w), std::sqrt(std::max(1.0, bound))});
  };
  for (std::size_t i = 0; i < q.segments.size(); ++i) {
    const double xl = q.breakpoints[i];
    const double xr = std::min(q.breakpoints[i + 1], x_hi);
    if (xr > xl) push(xl, xr, q.segments[i]);
  }
  const double alpha = q.support_sup();
  if (x_hi > alpha) push(alpha, x_hi, Poly<CMat>{});
  return t;
}

// Taylor coefficients of the solution of f'' = w(t) f from (f, f') at t = 0,
// truncated once the terms at |h| fall below rounding relative to the
// running scale. Returns false if the series has not settled by max_order.
template <class V>
inline bool linear_series(const Poly<V>& w, const V& f0, const V& df0, double h, int max_order,
                          std::vector<V>& a) {
  const double habs = std::abs(h);
  a.clear();
  a.push_back(f0);
  a.push_back(df0);
  const int d = w.degree();
  double scale = std::max(vnorm(f0), habs * vnorm(df0));
  double hk = habs;  // |h|^k for k = 1
  double prev_term = scale;
  for (int k = 0;; ++k) {
    V s = vzero(f0);
    const int jmax = std::min(k, d);
    for (int j = 0; j <= jmax; ++j) s += w.c[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(k - j)];
    s = s * (1.0 / ((double)(k + 1) * (double)(k + 2)));
    a.push_back(s);
    hk *= habs;
    const double term = vnorm(s) * hk;
    scale = std::max(scale, term);
    if (k >= 2 && term <= kTailEps * scale && prev_term <= kTailEps * scale) return true;
    prev_term = term;
    if (static_cast<int>(a.size()) > max_order) return false;
  }
}

template <class V>
inline V series_eval(const std::vector<V>& a, double t) {
  V acc = a.back();
  for (int k = static_cast<int>(a.size()) - 2; k >= 0; --k) acc = acc * t + a[static_cast<std::size_t>(k)];
  return acc;
}

template <class V>
inline V series_eval_deriv(const std::vector<V>& a, double t) {
  const int n = static_cast<int>(a.size());
  V acc = a[static_cast<std::size_t>(n - 1)] * (double)(n - 1);
  for (int k = n - 2; k >= 1; --k) acc = acc * t + a[static_cast<std::size_t>(k)] * (double)k;
  return acc;
}

template <class V>
struct StepRecord {
  double x0;  // step start (right end; integration is backward)
  double h;   // signed step, h < 0
  std::vector<V> coef;
};

template <class V>
struct BackwardRun {
  std::vector<StepRecord<V>> steps;  // in integration order, x descending
  V f, df;                           // values at x_to (up to exp(log_scale) if rescaled)
  double log_scale = 0.0;
  bool rescaled = false;
};

// Backward integration of f'' = (q - z) f over [x_to, x_from]. Steps never
// cross segment boundaries so each step sees a single polynomial coefficient.
template <class V, class Table>
inline BackwardRun<V> integrate_linear_backward(const Table& segs, double x_from, double x_to,
                                                V f, V df, const OdeOptions& opt, bool keep_steps,
                                                bool allow_rescale) {
  BackwardRun<V> run;
  double x = x_from;
  int si = static_cast<int>(segs.size()) - 1;
  std::vector<V> a;
  while (x > x_to + 1e-14 * std::max(1.0, std::abs(x_from))) {
    while (si > 0 && x <= segs[static_cast<std::size_t>(si)].xl + 1e-15) --si;
    const auto& seg = segs[static_cast<std::size_t>(si)];
    const double lo = std::max(seg.xl, x_to);
    double h = -std::min(x - lo, opt.rho_max / seg.rate);
    const auto w = seg.w.shifted(x - seg.xl);
    for (;;) {
      if (linear_series(w, f, df, h, opt.max_order, a)) break;
      h *= 0.5;
      if (-h < opt.min_step)
        throw NumericalError("linear integration: step refinement failed");
    }
    if (keep_steps) run.steps.push_back(StepRecord<V>{x, h, a});
    f = series_eval(a, h);
    df = series_eval_deriv(a, h);
    x += h;
    if (allow_rescale) {
      const double big = std::max(vnorm(f), vnorm(df));
      if (big > 1e120) {
        f = f * (1.0 / big);
        df = df * (1.0 / big);
        run.log_scale += std::log(big);
        run.rescaled = true;
      }
    }
  }
  run.f = f;
  run.df = df;
  return run;
}

// Evaluates (f, f') at grid points from the recorded steps. Grid must lie in
// the integrated range. Only valid for runs without rescaling.
template <class V>
inline std::vector<std::pair<V, V>> sample_steps(const std::vector<StepRecord<V>>& steps,
                                                 const std::vector<double>& grid, V f_start,
                                                 V df_start, double x_from) {
  std::vector<std::pair<V, V>> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    if (x >= x_from - 1e-14 * std::max(1.0, std::abs(x_from))) {
      out[g] = {f_start, df_start};
      continue;
    }
    // steps are ordered by descending x0; find the one covering x
    std::size_t lo = 0, hi = steps.size();
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (steps[mid].x0 + 1e-15 >= x)
        lo = mid;
      else
        hi = mid;
    }
    const auto& st = steps[lo];
    double t = x - st.x0;
    if (t > 0.0) t = 0.0;
    if (t < st.h) t = st.h;
    out[g] = {series_eval(st.coef, t), series_eval_deriv(st.coef, t)};
  }
  return out;
}

// Riccati series for m' = w(t) - m^2.
inline bool riccati_series(const Poly<cplx>& w, cplx m0, double h, int max_order,
                           std::vector<cplx>& b) {
  const double habs = std::abs(h);
  b.clear();
  b.push_back(m0);
  const int d = w.degree();
  double scale = std::max(1.0, std::abs(m0));
  double hk = 1.0;
  double prev_term = scale;
  for (int k = 0;; ++k) {
    cplx conv{};
    for (int j = 0; j <= k; ++j) conv += b[static_cast<std::size_t>(j)] * b[static_cast<std::size_t>(k - j)];
    cplx s = (k <= d ? w.c[static_cast<std::size_t>(k)] : cplx{}) - conv;
    s /= (double)(k + 1);
    b.push_back(s);
    hk *= habs;
    const double term = std::abs(s) * hk * habs;
    scale = std::max(scale, term);
    if (k >= 2 && term <= kTailEps * scale && prev_term <= kTailEps * scale) return true;
    prev_term = term;
    if (static_cast<int>(b.size()) > max_order) return false;
  }
}

// H >= inf q, so real-axis evaluation is safe strictly below that.
inline double halfline_spectral_floor(const PiecewisePotential& q) {
  return potential_inf_bound(q) - 1.0;
}

inline double bc_floor_correction(const BoundaryCondition& bc) {
  if (bc.s <= 0.0) return 0.0;  // Dirichlet: no boundary bound state
  const double cot = bc.c / bc.s;
  return cot < 0.0 ? cot * cot : 0.0;
}

inline void check_z_domain(cplx z, double floor, const OdeOptions& opt, const char* who) {
  if (opt.allow_any_real_z) return;
  if (z.imag() != 0.0) return;
  if (z.real() <= floor) return;
  throw ValidationError(std::string(who) +
                        ": real z must lie below the spectral floor (z <= " +
                        std::to_string(floor) + ")");
}

}  // namespace weyl_detail

enum class SolutionKind { Jost, WeylFinite, MatrixJost };

template <class V>
struct SolutionTrace {
  SolutionKind kind = SolutionKind::Jost;
  cplx z;
  std::vector<double> grid;                // ascending x samples
  std::vector<std::pair<V, V>> values;     // (f, f') per sample
};

inline std::vector<double> uniform_grid(double hi, double step) {
  std::vector<double> g;
  if (!(step > 0.0)) throw ValidationError("grid step must be positive");
  for (double x = 0.0; x < hi - 0.5 * step; x += step) g.push_back(x);
  g.push_back(hi);
  return g;
}

// Jost solution of -f'' + (q - z) f = 0 with f = e^{i sqrt(z) x} beyond the
// support, integrated backward from the support edge and sampled on a
// uniform grid. `x_top > 0` extends the sampled range past the support
// (where f is the plain exponential).
inline SolutionTrace<cplx> jost_solution(const PiecewisePotential& q, cplx z, double grid_step,
                                         const OdeOptions& opt = {}, double x_top = 0.0) {
  if (z == cplx{}) throw ValidationError("jost_solution: z = 0 is degenerate");
  const double alpha = std::max(q.support_sup(), x_top);
  const cplx w = principal_sqrt(z);
  const cplx f_a = std::exp(cplx(0, 1) * w * alpha);
  const cplx df_a = cplx(0, 1) * w * f_a;
  SolutionTrace<cplx> tr;
  tr.kind = SolutionKind::Jost;
  tr.z = z;
  if (alpha <= 0.0) {
    tr.grid = {0.0};
    tr.values = {{f_a, df_a}};
    return tr;
  }
  const auto table = weyl_detail::scalar_coef_table(q, z, alpha);
  auto run = weyl_detail::integrate_linear_backward<cplx>(table, alpha, 0.0, f_a, df_a, opt,
                                                          /*keep_steps=*/true,
                                                          /*allow_rescale=*/false);
  tr.grid = uniform_grid(alpha, grid_step);
  tr.values = weyl_detail::sample_steps(run.steps, tr.grid, f_a, df_a, alpha);
  return tr;
}

// Half-line Dirichlet m-function m(z) = f'(z,0)/f(z,0). Uses a normalized
// Jost start (the ratio is scale free), so arbitrarily fast decay of the
// true Jost solution cannot underflow.
inline cplx m_halfline(const PiecewisePotential& q, cplx z, const OdeOptions& opt = {}) {
  if (z == cplx{}) throw ValidationError("m_halfline: z = 0 is degenerate");
  weyl_detail::check_z_domain(z, weyl_detail::halfline_spectral_floor(q), opt, "m_halfline");
  const double alpha = q.support_sup();
  const cplx w = principal_sqrt(z);
  cplx f = 1.0, df = cplx(0, 1) * w;
  if (alpha > 0.0) {
    const auto table = weyl_detail::scalar_coef_table(q, z, alpha);
    auto run = weyl_detail::integrate_linear_backward<cplx>(table, alpha, 0.0, f, df, opt, false,
                                                            /*allow_rescale=*/true);
    f = run.f;
    df = run.df;
  }
  if (f == cplx{} || !std::isfinite(std::abs(df / f)))
    throw PoleError("m_halfline: f(z, 0) vanished", z);
  return df / f;
}

struct RiccatiTrace {
  std::vector<double> grid;  // ascending x in [0, x_max]
  std::vector<cplx> m;       // m(z, x) samples
  bool used_fallback = false;
};

// x-dependent m(z, x) by backward integration of m' + m^2 = q - z from
// m(z, alpha) = i sqrt(z). A Riccati blow-up (|m| beyond the guard) switches
// the whole trace to the linear-system form; only failure of both paths is a
// hard error.
inline RiccatiTrace riccati_m_trace(const PiecewisePotential& q, cplx z, double x_max,
                                    double grid_step, const OdeOptions& opt = {}) {
  const double alpha = q.support_sup();
  if (x_max > alpha + 1e-12)
    throw ValidationError("riccati_m_trace: x_max must not exceed the support bound");
  weyl_detail::check_z_domain(z, weyl_detail::halfline_spectral_floor(q), opt, "riccati_m_trace");
  const cplx isqz = cplx(0, 1) * principal_sqrt(z);

  RiccatiTrace tr;
  tr.grid = uniform_grid(x_max, grid_step);
  tr.m.assign(tr.grid.size(), isqz);

  const auto table = weyl_detail::scalar_coef_table(q, z, alpha);
  bool fell_back = false;

  // Riccati path.
  {
    double x = alpha;
    cplx m = isqz;
    int gi = static_cast<int>(tr.grid.size()) - 1;
    while (gi >= 0 && tr.grid[static_cast<std::size_t>(gi)] >= x - 1e-14) {
      tr.m[static_cast<std::size_t>(gi)] = m;
      --gi;
    }
    int si = static_cast<int>(table.size()) - 1;
    std::vector<cplx> b;
    bool ok = true;
    while (x > 1e-15) {
      while (si > 0 && x <= table[static_cast<std::size_t>(si)].xl + 1e-15) --si;
      const auto& seg = table[static_cast<std::size_t>(si)];
      const double rate = std::max(seg.rate, std::abs(m));
      double h = -std::min(x - std::max(seg.xl, 0.0), opt.rho_max / rate);
      const auto w = seg.w.shifted(x - seg.xl);
      bool stepped = false;
      for (;;) {
        if (weyl_detail::riccati_series(w, m, h, opt.max_order, b)) {
          stepped = true;
          break;
        }
        h *= 0.5;
        if (-h < opt.min_step) break;
      }
      if (!stepped) {
        ok = false;
        break;
      }
      while (gi >= 0 && tr.grid[static_cast<std::size_t>(gi)] >= x + h - 1e-14) {
        tr.m[static_cast<std::size_t>(gi)] =
            weyl_detail::series_eval(b, tr.grid[static_cast<std::size_t>(gi)] - x);
        --gi;
      }
      m = weyl_detail::series_eval(b, h);
      x += h;
      if (std::abs(m) > opt.riccati_guard) {
        ok = false;
        break;
      }
    }
    if (ok) return tr;
    fell_back = true;
  }

  // Linear-system fallback: sample m = f'/f from the recorded steps.
  {
    cplx f = 1.0, df = isqz;
    auto run = weyl_detail::integrate_linear_backward<cplx>(table, alpha, 0.0, f, df, opt,
                                                            /*keep_steps=*/true,
                                                            /*allow_rescale=*/true);
    auto vals = weyl_detail::sample_steps(run.steps, tr.grid, f, df, alpha);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (vals[i].first == cplx{})
        throw PoleError("riccati_m_trace: pole of m at a grid point", z);
      tr.m[i] = vals[i].second / vals[i].first;
    }
    tr.used_fallback = fell_back;
  }
  return tr;
}

// sup over x in [0, a] of |m(z, x) - i sqrt(z)|; o(1) as |z| grows along rays.
inline double atkinson_residual(const PiecewisePotential& q, cplx z, double a,
                                const OdeOptions& opt = {}) {
  const double x_max = std::min(a, q.support_sup());
  const cplx isqz = cplx(0, 1) * principal_sqrt(z);
  if (x_max <= 0.0) return 0.0;
  const auto tr = riccati_m_trace(q, z, x_max, x_max / 256.0, opt);
  double sup = 0.0;
  for (const auto& m : tr.m) sup = std::max(sup, std::abs(m - isqz));
  return sup;
}

// Free finite-interval Weyl solution (q = 0): closed form with the reflection
// factor zeta evaluated projectively so Dirichlet gives zeta = -1 exactly.
inline cplx free_weyl_zeta(const BoundaryCondition& beta, cplx z) {
  const cplx miw = -cplx(0, 1) * principal_sqrt(z);
  const cplx num = miw * beta.s - beta.c;
  const cplx den = miw * beta.s + beta.c;
  if (den == cplx{}) throw PoleError("free_weyl_zeta: projective denominator vanished", z);
  return num / den;
}

inline cplx free_weyl_finite(cplx z, double b, const BoundaryCondition& beta, double x) {
  if (x < 0.0 || x > b) throw ValidationError("free_weyl_finite: x must lie in [0, b]");
  const cplx w = principal_sqrt(z);
  const cplx iw = cplx(0, 1) * w;
  const cplx zeta = free_weyl_zeta(beta, z);
  const cplx den = 1.0 + zeta * std::exp(2.0 * iw * b);
  if (std::abs(den) < 1e-14 * (1.0 + std::abs(zeta)))
    throw PoleError("free_weyl_finite: eigenvalue of the free interval operator", z);
  return (std::exp(iw * x) + zeta * std::exp(iw * (2.0 * b - x))) / den;
}

inline cplx free_weyl_finite_deriv(cplx z, double b, const BoundaryCondition& beta, double x) {
  if (x < 0.0 || x > b) throw ValidationError("free_weyl_finite_deriv: x must lie in [0, b]");
  const cplx w = principal_sqrt(z);
  const cplx iw = cplx(0, 1) * w;
  const cplx zeta = free_weyl_zeta(beta, z);
  const cplx den = 1.0 + zeta * std::exp(2.0 * iw * b);
  if (std::abs(den) < 1e-14 * (1.0 + std::abs(zeta)))
    throw PoleError("free_weyl_finite_deriv: eigenvalue of the free interval operator", z);
  return iw * (std::exp(iw * x) - zeta * std::exp(iw * (2.0 * b - x))) / den;
}

inline double finite_spectral_floor(const PiecewisePotential& q, const BoundaryCondition& beta) {
  return potential_inf_bound(q) - weyl_detail::bc_floor_correction(beta) - 1.0;
}

// (psi, psi')(0) for the finite-interval Weyl solution normalized to
// (s, -c) at x = b, returned with the accumulated rescale exponent:
// true value = f * exp(log_scale).
struct ScaledEndpoint {
  cplx f, df;
  double log_scale = 0.0;
};

inline ScaledEndpoint weyl_finite_endpoint(const PiecewisePotential& q, double b,
                                           const BoundaryCondition& beta_in, cplx z,
                                           const OdeOptions& opt = {}) {
  const BoundaryCondition beta = beta_in.normalized();
  if (q.support_sup() > b + 1e-14)
    throw ValidationError("finite interval: potential support exceeds the interval length b");
  const auto table = weyl_detail::scalar_coef_table(q, z, b);
  auto run = weyl_detail::integrate_linear_backward<cplx>(table, b, 0.0, cplx(beta.s), cplx(-beta.c),
                                                          opt, false, /*allow_rescale=*/true);
  return ScaledEndpoint{run.f, run.df, run.log_scale};
}

// Finite-interval m-function m(z; b, beta): integrate (psi, psi') backward
// from (s, -c) at x = b and return psi'(z,0)/psi(z,0).
inline cplx m_finite(const PiecewisePotential& q, double b, const BoundaryCondition& beta_in,
                     cplx z, const OdeOptions& opt = {}) {
  const BoundaryCondition beta = beta_in.normalized();
  weyl_detail::check_z_domain(z, finite_spectral_floor(q, beta), opt, "m_finite");
  const auto end = weyl_finite_endpoint(q, b, beta, z, opt);
  if (end.f == cplx{}) throw PoleError("m_finite: z is an eigenvalue of H(b, beta)", z);
  const cplx m = end.df / end.f;
  if (!std::isfinite(m.real()) || !std::isfinite(m.imag()) || std::abs(m) > 1e12)
    throw PoleError("m_finite: z is (numerically) an eigenvalue of H(b, beta)", z);
  return m;
}

// Finite-interval solution trace normalized to (psi, psi')(b) = (s, -c).
inline SolutionTrace<cplx> weyl_finite_trace(const PiecewisePotential& q, double b,
                                             const BoundaryCondition& beta_in, cplx z,
                                             double grid_step, const OdeOptions& opt = {}) {
  const BoundaryCondition beta = beta_in.normalized();
  if (q.support_sup() > b + 1e-14)
    throw ValidationError("weyl_finite_trace: potential support exceeds b");
  const auto table = weyl_detail::scalar_coef_table(q, z, b);
  const cplx f = beta.s, df = -beta.c;
  auto run = weyl_detail::integrate_linear_backward<cplx>(table, b, 0.0, f, df, opt,
                                                          /*keep_steps=*/true, false);
  SolutionTrace<cplx> tr;
  tr.kind = SolutionKind::WeylFinite;
  tr.z = z;
  tr.grid = uniform_grid(b, grid_step);
  tr.values = weyl_detail::sample_steps(run.steps, tr.grid, f, df, b);
  return tr;
}

// Moebius transform (c, s) of a Dirichlet m-function: m_alpha for the
// boundary condition sin(a) g' + cos(a) g = 0 at x = 0.
inline cplx m_alpha_transform(cplx m, const BoundaryCondition& alpha) {
  const cplx den = alpha.c + alpha.s * m;
  if (den == cplx{}) throw PoleError("m_alpha_transform: zero denominator", m);
  return (-alpha.s + alpha.c * m) / den;
}

// Inverse of the transform above (recovers the Dirichlet m).
inline cplx m_alpha_inverse(cplx m_alpha, const BoundaryCondition& alpha) {
  const cplx den = alpha.c - alpha.s * m_alpha;
  if (den == cplx{}) throw PoleError("m_alpha_inverse: zero denominator", m_alpha);
  return (alpha.s + alpha.c * m_alpha) / den;
}

// 2x2 full-line Weyl matrix from the two half-line m-functions.
inline CMat full_line_M(cplx m_minus, cplx m_plus) {
  const cplx d = m_minus - m_plus;
  if (d == cplx{}) throw NumericalError("full_line_M: m_minus equals m_plus");
  CMat M(2);
  const cplx inv = 1.0 / d;
  M(0, 0) = inv;
  M(0, 1) = inv * 0.5 * (m_minus + m_plus);
  M(1, 0) = M(0, 1);
  M(1, 1) = inv * m_minus * m_plus;
  return M;
}

// Matrix Jost solution trace with the true normalization F = e^{i sqrt(z) x} I
// beyond the support.
inline SolutionTrace<CMat> matrix_jost_solution(const HermitianMatrixPotential& q, cplx z,
                                                double grid_step, const OdeOptions& opt = {}) {
  const double alpha = q.support_sup();
  const int m = q.dim;
  const cplx w = principal_sqrt(z);
  const cplx e = std::exp(cplx(0, 1) * w * alpha);
  CMat F = CMat::scalar(m, e);
  CMat dF = CMat::scalar(m, cplx(0, 1) * w * e);
  SolutionTrace<CMat> tr;
  tr.kind = SolutionKind::MatrixJost;
  tr.z = z;
  if (alpha <= 0.0) {
    tr.grid = {0.0};
    tr.values = {{F, dF}};
    return tr;
  }
  const auto table = weyl_detail::matrix_coef_table(q, z, alpha);
  auto run = weyl_detail::integrate_linear_backward<CMat>(table, alpha, 0.0, F, dF, opt,
                                                          /*keep_steps=*/true, false);
  tr.grid = uniform_grid(alpha, grid_step);
  tr.values = weyl_detail::sample_steps(run.steps, tr.grid, F, dF, alpha);
  return tr;
}

// m x m Weyl-Titchmarsh matrix M(z) = F'(z,0) F(z,0)^{-1}, computed by column
// solves against F(0) rather than an explicit inverse.
inline CMat matrix_M(const HermitianMatrixPotential& q, cplx z, const OdeOptions& opt = {}) {
  const double alpha = q.support_sup();
  const int m = q.dim;
  weyl_detail::check_z_domain(z, potential_inf_bound(q) - 1.0, opt, "matrix_M");
  const cplx w = principal_sqrt(z);
  CMat F = CMat::identity(m);
  CMat dF = CMat::scalar(m, cplx(0, 1) * w);
  if (alpha > 0.0) {
    const auto table = weyl_detail::matrix_coef_table(q, z, alpha);
    auto run = weyl_detail::integrate_linear_backward<CMat>(table, alpha, 0.0, F, dF, opt, false,
                                                            /*allow_rescale=*/true);
    F = run.f;
    dF = run.df;
  }
  try {
    return solve(F.transpose(), dF.transpose()).transpose();
  } catch (const NumericalError&) {
    throw PoleError("matrix_M: F(z, 0) numerically singular", z);
  }
}

// M(z, x) samples for diagnostics (matrix analog of the Riccati trace).
inline std::vector<std::pair<double, CMat>> matrix_m_trace(const HermitianMatrixPotential& q,
                                                           cplx z, double x_max, double grid_step,
                                                           const OdeOptions& opt = {}) {
  const double alpha = q.support_sup();
  const int m = q.dim;
  const cplx w = principal_sqrt(z);
  CMat F = CMat::identity(m);
  CMat dF = CMat::scalar(m, cplx(0, 1) * w);
  const auto table = weyl_detail::matrix_coef_table(q, z, alpha);
  auto run = weyl_detail::integrate_linear_backward<CMat>(table, alpha, 0.0, F, dF, opt,
                                                          /*keep_steps=*/true, false);
  const auto grid = uniform_grid(x_max, grid_step);
  const auto vals = weyl_detail::sample_steps(run.steps, grid, F, dF, alpha);
  std::vector<std::pair<double, CMat>> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    out.emplace_back(grid[i], solve(vals[i].first.transpose(), vals[i].second.transpose()).transpose());
  return out;
}

// Joint backward run of two scalar Jost solutions on a common step partition,
// with the exact per-step series quadrature of (q1 - q2) f1 f2. Feeds the
// Wronskian identity diagnostics.
struct JostPairQuadrature {
  cplx integral;  // int_0^a (q1 - q2) f1 f2 dx
  cplx f1_a, df1_a, f2_a, df2_a;
  cplx f1_0, df1_0, f2_0, df2_0;
};

inline JostPairQuadrature jost_pair_quadrature(const PiecewisePotential& q1,
                                               const PiecewisePotential& q2, cplx z, double a,
                                               const OdeOptions& opt = {}) {
  using weyl_detail::linear_series;
  const double x_top = std::max({a, q1.support_sup(), q2.support_sup()});
  const auto t1 = weyl_detail::scalar_coef_table(q1, z, x_top);
  const auto t2 = weyl_detail::scalar_coef_table(q2, z, x_top);
  const cplx w = principal_sqrt(z);
  const cplx e = std::exp(cplx(0, 1) * w * x_top);
  cplx f1 = e, df1 = cplx(0, 1) * w * e, f2 = f1, df2 = df1;

  JostPairQuadrature out{};
  double x = x_top;
  int s1 = static_cast<int>(t1.size()) - 1, s2 = static_cast<int>(t2.size()) - 1;
  std::vector<cplx> a1, a2;
  bool captured_a = false;
  if (x_top <= a + 1e-15) {
    out.f1_a = f1; out.df1_a = df1; out.f2_a = f2; out.df2_a = df2;
    captured_a = true;
  }
  cplx acc{};  // sum of int_0^h (w1 - w2)(t) f1 f2 dt over steps inside [0, a]
  while (x > 1e-15) {
    while (s1 > 0 && x <= t1[static_cast<std::size_t>(s1)].xl + 1e-15) --s1;
    while (s2 > 0 && x <= t2[static_cast<std::size_t>(s2)].xl + 1e-15) --s2;
    const auto& g1 = t1[static_cast<std::size_t>(s1)];
    const auto& g2 = t2[static_cast<std::size_t>(s2)];
    double lo = std::max(g1.xl, g2.xl);
    if (x > a && a > lo) lo = a;  // land a step boundary exactly on x = a
    const double rate = std::max(g1.rate, g2.rate);
    double h = -std::min(x - lo, opt.rho_max / rate);
    const auto w1 = g1.w.shifted(x - g1.xl);
    const auto w2 = g2.w.shifted(x - g2.xl);
    for (;;) {
      if (linear_series(w1, f1, df1, h, opt.max_order, a1) &&
          linear_series(w2, f2, df2, h, opt.max_order, a2))
        break;
      h *= 0.5;
      if (-h < opt.min_step) throw NumericalError("jost pair: step refinement failed");
    }
    if (x <= a + 1e-15) {
      // exact step quadrature: ((w1 - w2) * f1 * f2) integrated term by term
      const std::size_t n1 = a1.size(), n2 = a2.size();
      std::vector<cplx> prod(n1 + n2 - 1, cplx{});
      for (std::size_t i = 0; i < n1; ++i) {
        if (a1[i] == cplx{}) continue;
        for (std::size_t j = 0; j < n2; ++j) prod[i + j] += a1[i] * a2[j];
      }
      std::vector<cplx> dq(std::max(w1.c.size(), w2.c.size()), cplx{});
      for (std::size_t i = 0; i < w1.c.size(); ++i) dq[i] += w1.c[i];
      for (std::size_t i = 0; i < w2.c.size(); ++i) dq[i] -= w2.c[i];
      double hp = h;  // h^{k+1}
      std::vector<cplx> full(prod.size() + dq.size() - 1, cplx{});
      for (std::size_t i = 0; i < dq.size(); ++i) {
        if (dq[i] == cplx{}) continue;
        for (std::size_t j = 0; j < prod.size(); ++j) full[i + j] += dq[i] * prod[j];
      }
      cplx step_int{};
      for (std::size_t k = 0; k < full.size(); ++k) {
        step_int += full[k] * (hp / (double)(k + 1));
        hp *= h;
      }
      acc += step_int;
    }
    f1 = weyl_detail::series_eval(a1, h);
    df1 = weyl_detail::series_eval_deriv(a1, h);
    f2 = weyl_detail::series_eval(a2, h);
    df2 = weyl_detail::series_eval_deriv(a2, h);
    x += h;
    if (!captured_a && x <= a + 1e-15) {
      out.f1_a = f1; out.df1_a = df1; out.f2_a = f2; out.df2_a = df2;
      captured_a = true;
    }
  }
  out.f1_0 = f1; out.df1_0 = df1; out.f2_0 = f2; out.df2_0 = df2;
  out.integral = -acc;  // steps run downward; flip to int_0^a
  return out;
}

// Sampled m-function values along a ray. Scalars are stored as 1x1 matrices
// so the probe can treat all kinds uniformly.
struct MTrace {
  enum class Kind { HalfLine, Finite, FullLine2x2, Matrix };

  SpectralRay ray;
  Kind kind = Kind::HalfLine;
  int dim = 1;
  double b = 0.0;                                      // Finite only
  BoundaryCondition beta = BoundaryCondition::dirichlet();  // Finite only
  std::vector<cplx> z, sqrt_z;
  std::vector<CMat> value;

  cplx scalar(std::size_t i) const { return value[i](0, 0); }
  bool compatible_with(const MTrace& o) const {
    return ray == o.ray && kind == o.kind && dim == o.dim;
  }
};

// Builds the m-trace for a validated problem along a ray. Pure per point;
// points are distributed over `jobs` workers with index-ordered output.
inline MTrace make_mtrace(const ProblemSpec& spec_in, const SpectralRay& ray,
                          const OdeOptions& opt = {}, int jobs = 1) {
  const ProblemSpec spec = validate(spec_in);
  const auto pts = ray_points(ray);
  MTrace tr;
  tr.ray = ray;
  tr.z.resize(pts.size());
  tr.sqrt_z.resize(pts.size());
  tr.value.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    tr.z[i] = pts[i].z;
    tr.sqrt_z[i] = pts[i].sqrt_z;
  }

  if (spec.is_matrix()) {
    tr.kind = MTrace::Kind::Matrix;
    tr.dim = spec.matrix_potential().dim;
    const auto& Q = spec.matrix_potential();
    parallel_for(static_cast<int>(pts.size()), jobs,
                 [&](int i) { tr.value[static_cast<std::size_t>(i)] = matrix_M(Q, pts[static_cast<std::size_t>(i)].z, opt); });
    return tr;
  }

  const auto& q = spec.scalar_potential();
  switch (spec.geometry) {
    case GeometryKind::HalfLine: {
      tr.kind = MTrace::Kind::HalfLine;
      const bool transform = !spec.left_bc.is_dirichlet();
      parallel_for(static_cast<int>(pts.size()), jobs, [&](int i) {
        cplx m = m_halfline(q, pts[static_cast<std::size_t>(i)].z, opt);
        if (transform) m = m_alpha_transform(m, spec.left_bc);
        tr.value[static_cast<std::size_t>(i)] = CMat(1, {m});
      });
      break;
    }
    case GeometryKind::FiniteInterval: {
      tr.kind = MTrace::Kind::Finite;
      tr.b = spec.b;
      tr.beta = *spec.right_bc;
      const bool transform = !spec.left_bc.is_dirichlet();
      parallel_for(static_cast<int>(pts.size()), jobs, [&](int i) {
        cplx m = m_finite(q, spec.b, *spec.right_bc, pts[static_cast<std::size_t>(i)].z, opt);
        if (transform) m = m_alpha_transform(m, spec.left_bc);
        tr.value[static_cast<std::size_t>(i)] = CMat(1, {m});
      });
      break;
    }
    case GeometryKind::FullLine: {
      tr.kind = MTrace::Kind::FullLine2x2;
      tr.dim = 2;
      const auto split = split_full_line(q);
      parallel_for(static_cast<int>(pts.size()), jobs, [&](int i) {
        const cplx z = pts[static_cast<std::size_t>(i)].z;
        const cplx m_plus = m_halfline(split.q_plus, z, opt);
        const cplx m_minus = -m_halfline(split.q_minus, z, opt);
        tr.value[static_cast<std::size_t>(i)] = full_line_M(m_minus, m_plus);
      });
      break;
    }
  }
  return tr;
}

}  // namespace mprobe
