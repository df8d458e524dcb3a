#pragma once

// Transformation kernels and the proof-pipeline diagnostics: the triangular
// kernel K(x,y) behind f(z,x) = e^{i sqrt(z) x} + int K e^{i sqrt(z) y} dy,
// the product kernel L for f1 f2, the Wronskian identity, the homogeneous
// Volterra replay, and finite Laplace transforms.
//
// For a potential supported in [0, alpha] the kernel K(x, y) is supported on
// the triangle x <= y <= 2 alpha - x (the integral equation forces K = 0
// beyond the line y = 2 alpha - x). Grids therefore cover [0, 2 alpha]; the
// product identity and the kernel form of the Jost solution integrate over
// that full support, which is what makes their residuals clean O(h^2).
//
// The Picard iteration runs in the characteristic variables
// xi = (x+y)/2, eta = (y-x)/2, where the iterated integral lands on grid
// points (half-step grid), so no interpolation enters the solve.

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "mprobe/errors.hpp"
#include "mprobe/model.hpp"
#include "mprobe/numerics.hpp"
#include "mprobe/weyl.hpp"

namespace mprobe {

// K(x_i, y_j) on the closed triangle 0 <= x <= y <= length, packed rows.
struct TriangularKernelGrid {
  double length = 0.0;         // domain length of the triangle
  int n = 0;                   // number of cells; grid step is length / n
  std::vector<double> vals;    // packed: row i holds columns i..n

  TriangularKernelGrid() = default;
  TriangularKernelGrid(double len, int cells)
      : length(len), n(cells), vals(packed_size(cells), 0.0) {}

  static std::size_t packed_size(int n) {
    return static_cast<std::size_t>(n + 1) * (n + 2) / 2;
  }
  double h() const { return length / n; }

  std::size_t idx(int i, int j) const {
    // offset of row i = sum_{r<i} (n+1-r)
    return static_cast<std::size_t>(i) * (2 * n + 3 - i) / 2 + static_cast<std::size_t>(j - i);
  }
  double at(int i, int j) const {
    if (i < 0 || j < i || j > n || i > n) return 0.0;
    return vals[idx(i, j)];
  }
  double& ref(int i, int j) { return vals[idx(i, j)]; }

  // Bilinear interpolation on the triangle; zero outside.
  double value_at(double x, double y) const {
    if (x > y || x < 0.0 || y > length) return 0.0;
    const double hh = h();
    const int i = std::min(n - 1, std::max(0, static_cast<int>(std::floor(x / hh))));
    const int j = std::min(n - 1, std::max(0, static_cast<int>(std::floor(y / hh))));
    const double u = x / hh - i, v = y / hh - j;
    return (1 - u) * (1 - v) * at(i, j) + u * (1 - v) * at(i + 1, j) +
           (1 - u) * v * at(i, j + 1) + u * v * at(i + 1, j + 1);
  }
};

struct KernelOptions {
  double picard_tol = 1e-12;  // sup-norm increment threshold
  int max_iterations = 200;   // Picard updates; 0 returns the source term K0
  bool fail_on_nonconvergence = true;
};

// Numeric integral of |q| (and the first moment of |q|) by composite Simpson
// on a fine subgrid; used by the explicit kernel bound.
inline double potential_abs_integral(const PiecewisePotential& q, double lo, double hi,
                                     int panels_per_unit = 4096) {
  if (hi <= lo) return 0.0;
  double acc = 0.0;
  for (std::size_t sidx = 0; sidx < q.segments.size(); ++sidx) {
    const double sl = std::max(lo, q.breakpoints[sidx]);
    const double sh = std::min(hi, q.breakpoints[sidx + 1]);
    if (sh <= sl) continue;
    const int panels = std::max(8, static_cast<int>((sh - sl) * panels_per_unit)) & ~1;
    const double hh = (sh - sl) / panels;
    double s = std::abs(q.eval(sl)) + std::abs(q.eval(sh));
    for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * std::abs(q.eval(sl + k * hh));
    acc += s * hh / 3.0;
  }
  return acc;
}

inline double potential_abs_moment(const PiecewisePotential& q, double lo, double hi,
                                   int panels_per_unit = 4096) {
  if (hi <= lo) return 0.0;
  double acc = 0.0;
  for (std::size_t sidx = 0; sidx < q.segments.size(); ++sidx) {
    const double sl = std::max(lo, q.breakpoints[sidx]);
    const double sh = std::min(hi, q.breakpoints[sidx + 1]);
    if (sh <= sl) continue;
    const int panels = std::max(8, static_cast<int>((sh - sl) * panels_per_unit)) & ~1;
    const double hh = (sh - sl) / panels;
    double s = sl * std::abs(q.eval(sl)) + sh * std::abs(q.eval(sh));
    for (int k = 1; k < panels; ++k) {
      const double x = sl + k * hh;
      s += (k % 2 ? 4.0 : 2.0) * x * std::abs(q.eval(x));
    }
    acc += s * hh / 3.0;
  }
  return acc;
}

// Pointwise bound on |K(x, y)|: half the tail mass of |q| from (x+y)/2 times
// the exponential of the first moment of |q| beyond x.
inline double kernel_bound(const PiecewisePotential& q, double x, double y) {
  const double alpha = q.support_sup();
  return 0.5 * potential_abs_integral(q, (x + y) / 2.0, alpha) *
         std::exp(potential_abs_moment(q, x, alpha));
}

// Solves the kernel integral equation by successive approximation starting
// from the inhomogeneous term. `alpha_override` extends the declared support
// (harmless: q vanishes there) so kernels of two potentials share a grid.
// `opt.max_iterations = 1` stops at the first iterate.
inline TriangularKernelGrid transformation_kernel(const PiecewisePotential& q, double h,
                                                  const KernelOptions& opt = {},
                                                  double alpha_override = 0.0) {
  const double alpha = std::max(q.support_sup(), alpha_override);
  if (!(h > 0.0)) throw ValidationError("transformation_kernel: step must be positive");
  const double cells = alpha / h;
  const int n_h = static_cast<int>(std::lround(cells));
  if (std::abs(cells - n_h) > 1e-9 * std::max(1.0, cells) || n_h < 8)
    throw ValidationError("transformation_kernel: h must divide the support into >= 8 cells");

  // Characteristic-variable solve on the half-step grid.
  const int nb = 2 * n_h;          // xi, eta indices 0..nb
  const double hb = h / 2.0;
  const std::size_t stride = static_cast<std::size_t>(nb + 1);
  std::vector<double> B(stride * stride, 0.0), S(stride), Qd(stride * stride, 0.0);
  std::vector<double> A(stride * stride, 0.0), T(stride * stride, 0.0);

  for (int i = 0; i <= nb; ++i) S[static_cast<std::size_t>(i)] = 0.5 * potential_integral(q, i * hb, alpha);
  for (int i = 0; i <= nb; ++i)
    for (int j = 0; j <= i; ++j) Qd[i * stride + j] = q.eval(i * hb - j * hb);
  for (int i = 0; i <= nb; ++i)
    for (int j = 0; j <= i; ++j) B[i * stride + j] = S[static_cast<std::size_t>(i)];

  bool converged = false;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    // g = Qd .* B ; A(i,j) = int_0^{eta_j} g(i, .) ; T(i,j) = int_{xi_i}^{alpha} A(., j)
    for (int i = 0; i <= nb; ++i) {
      A[i * stride + 0] = 0.0;
      for (int j = 1; j <= i; ++j)
        A[i * stride + j] = A[i * stride + j - 1] +
                            0.5 * hb * (Qd[i * stride + j - 1] * B[i * stride + j - 1] +
                                        Qd[i * stride + j] * B[i * stride + j]);
    }
    for (int j = 0; j <= nb; ++j) T[static_cast<std::size_t>(nb) * stride + j] = 0.0;
    for (int i = nb - 1; i >= 0; --i)
      for (int j = 0; j <= i; ++j)
        T[i * stride + j] = T[(i + 1) * stride + j] +
                            0.5 * hb * (A[i * stride + j] + A[(i + 1) * stride + j]);
    double inc = 0.0;
    for (int i = 0; i <= nb; ++i)
      for (int j = 0; j <= i; ++j) {
        const double bn = S[static_cast<std::size_t>(i)] + T[i * stride + j];
        inc = std::max(inc, std::abs(bn - B[i * stride + j]));
        B[i * stride + j] = bn;
      }
    if (inc < opt.picard_tol) {
      converged = true;
      break;
    }
  }
  if (!converged && opt.max_iterations > 0 && opt.fail_on_nonconvergence)
    throw NumericalError("transformation_kernel: Picard iteration did not converge");

  // Export to (x, y): K(x_i, y_j) = B(xi = i+j, eta = j-i) on the h grid.
  TriangularKernelGrid K(2.0 * alpha, nb);
  for (int i = 0; i <= nb; ++i)
    for (int j = i; j <= nb; ++j)
      K.ref(i, j) = (i + j <= nb) ? B[static_cast<std::size_t>(i + j) * stride + (j - i)] : 0.0;
  return K;
}

// f(z, x) from the kernel: e^{i sqrt(z) x} + int_x K(x,y) e^{i sqrt(z) y} dy
// over the kernel's support row, by composite trapezoid.
inline cplx jost_via_kernel(const TriangularKernelGrid& K, cplx z, double x) {
  const double h = K.h();
  const int i = static_cast<int>(std::lround(x / h));
  if (std::abs(i * h - x) > 1e-9 * std::max(1.0, K.length) || i < 0 || i > K.n)
    throw ValidationError("jost_via_kernel: x must be a grid point");
  const cplx iw = cplx(0, 1) * principal_sqrt(z);
  cplx acc{};
  const int j_hi = K.n - i;  // support edge y = 2 alpha - x
  for (int j = i; j <= j_hi; ++j) {
    const double wgt = (j == i || j == j_hi) ? 0.5 : 1.0;
    acc += wgt * K.at(i, j) * std::exp(iw * (j * h));
  }
  return std::exp(iw * x) + acc * h;
}

// Product kernel: L(x,y) = 2[K1 + K2](x, 2y-x) + 2 int K1(x,x') K2(x,2y-x') dx'.
// All arguments land on grid points; the kernels' zero extension beyond their
// support supplies the correct limits.
inline TriangularKernelGrid product_kernel(const TriangularKernelGrid& K1,
                                           const TriangularKernelGrid& K2) {
  if (K1.n != K2.n || std::abs(K1.length - K2.length) > 1e-12 * std::max(1.0, K1.length))
    throw ValidationError("product_kernel: kernel domains do not match");
  const int n = K1.n;
  const double h = K1.h();
  TriangularKernelGrid L(K1.length, n);
  for (int i = 0; i <= n; ++i) {
    for (int j = i; j <= n; ++j) {
      const int m = 2 * j - i;  // index of 2y - x
      double v = 2.0 * (K1.at(i, m) + K2.at(i, m));
      if (m > i) {
        double conv = 0.5 * (K1.at(i, i) * K2.at(i, m) + K1.at(i, m) * K2.at(i, i));
        for (int k = i + 1; k < m; ++k) conv += K1.at(i, k) * K2.at(i, m - k + i);
        v += 2.0 * conv * h;
      }
      L.ref(i, j) = v;
    }
  }
  return L;
}

// Max over grid x in [0, a] of |f1 f2 - e^{2 i sqrt(z) x} - int L e^{2 i sqrt(z) y} dy|,
// integrating over the product kernel's full support [x, 2a - x]. Both error
// sources (kernel Picard grid and the trapezoid here) are O(h^2).
struct ProductIdentityReport {
  double residual = 0.0;
  double a = 0.0;
};

inline ProductIdentityReport product_identity_residual(const PiecewisePotential& q1,
                                                       const PiecewisePotential& q2, cplx z,
                                                       double h, const KernelOptions& kopt = {},
                                                       const OdeOptions& oopt = {}) {
  const double a = std::max(q1.support_sup(), q2.support_sup());
  const auto K1 = transformation_kernel(q1, h, kopt, a);
  const auto K2 = transformation_kernel(q2, h, kopt, a);
  const auto L = product_kernel(K1, K2);
  const int n = L.n;  // grid over [0, 2a]
  const int n_half = n / 2;
  const auto f1 = jost_solution(q1, z, h, oopt, a);
  const auto f2 = jost_solution(q2, z, h, oopt, a);
  const cplx iw = cplx(0, 1) * principal_sqrt(z);

  double worst = 0.0;
  for (int i = 0; i <= n_half; ++i) {
    const double x = i * h;
    cplx acc{};
    const int j_hi = n - i;
    for (int j = i; j <= j_hi; ++j) {
      const double wgt = (j == i || j == j_hi) ? 0.5 : 1.0;
      acc += wgt * L.at(i, j) * std::exp(2.0 * iw * (j * h));
    }
    const cplx lhs = f1.values[static_cast<std::size_t>(i)].first * f2.values[static_cast<std::size_t>(i)].first;
    const cplx rhs = std::exp(2.0 * iw * x) + acc * h;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return ProductIdentityReport{worst, a};
}

// Both sides of the integrated Wronskian identity:
//   lhs = int_0^a (q1 - q2) f1 f2 dx,
//   rhs = [f1 f2 (m1 - m2)]_0^a = [f1' f2 - f1 f2']_0^a.
// The left side uses the exact per-step series quadrature of the shared
// integrator run, so the residual sits at rounding level.
struct WronskianCheck {
  cplx lhs, rhs;
  double residual;
};

inline WronskianCheck wronskian_identity_check(const PiecewisePotential& q1,
                                               const PiecewisePotential& q2, cplx z, double a,
                                               const OdeOptions& opt = {}) {
  const auto pq = jost_pair_quadrature(q1, q2, z, a, opt);
  const cplx at_a = pq.df1_a * pq.f2_a - pq.f1_a * pq.df2_a;
  const cplx at_0 = pq.df1_0 * pq.f2_0 - pq.f1_0 * pq.df2_0;
  const cplx rhs = at_a - at_0;
  return WronskianCheck{pq.integral, rhs, std::abs(pq.integral - rhs)};
}

// Leading sub-triangle of a kernel grid (same step, shorter domain).
inline TriangularKernelGrid sub_triangle(const TriangularKernelGrid& L, int new_n) {
  if (new_n < 0 || new_n > L.n) throw ValidationError("sub_triangle: size out of range");
  TriangularKernelGrid S(L.h() * new_n, new_n);
  for (int i = 0; i <= new_n; ++i)
    for (int j = i; j <= new_n; ++j) S.ref(i, j) = L.at(i, j);
  return S;
}

// Forward substitution for u(y) + int_0^y L(x,y) u(x) dx = g(y) on the grid
// of L. A homogeneous right-hand side returns identically zero.
inline std::vector<double> volterra_solve(const TriangularKernelGrid& L,
                                          const std::vector<double>& g) {
  if (g.size() != static_cast<std::size_t>(L.n) + 1)
    throw ValidationError("volterra_solve: right-hand side does not match the grid");
  const double h = L.h();
  std::vector<double> u(g.size());
  u[0] = g[0];
  for (int j = 1; j <= L.n; ++j) {
    double s = 0.5 * L.at(0, j) * u[0];
    for (int i = 1; i < j; ++i) s += L.at(i, j) * u[static_cast<std::size_t>(i)];
    const double diag = 0.5 * h * L.at(j, j);
    u[static_cast<std::size_t>(j)] = (g[static_cast<std::size_t>(j)] - h * s) / (1.0 + diag);
  }
  return u;
}

// Composite product-trapezoid value of int_0^a g(y) e^{-x y} dy for a grid
// function g; exact for piecewise-linear g, any x >= 0.
inline double finite_laplace(const std::vector<double>& g, double a, double x) {
  if (g.size() < 2) throw ValidationError("finite_laplace: need at least two samples");
  if (x < 0.0) throw ValidationError("finite_laplace: x must be nonnegative");
  const double h = a / static_cast<double>(g.size() - 1);
  const double u = x * h;
  double phiA, phiB;  // int_0^1 (1-s) e^{-us} ds and int_0^1 s e^{-us} ds
  if (u < 1e-4) {
    phiA = 0.5 - u / 6.0 + u * u / 24.0 - u * u * u / 120.0;
    phiB = 0.5 - u / 3.0 + u * u / 8.0 - u * u * u / 30.0;
  } else {
    const double eu = std::exp(-u);
    phiB = (1.0 - (1.0 + u) * eu) / (u * u);
    phiA = (1.0 - eu) / u - phiB;
  }
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double e0 = std::exp(-x * (h * static_cast<double>(k)));
    acc += e0 * h * (g[k] * phiA + g[k + 1] * phiB);
  }
  return acc;
}

// Companion diagnostic: fits the decay exponent of the finite Laplace
// transform over a geometric x grid; the fitted rate estimates inf supp(g).
inline DecayFit laplace_support_infimum(const std::vector<double>& g, double a, double x_lo,
                                        double x_hi, int count) {
  std::vector<std::pair<double, double>> pts;
  const double llo = std::log(x_lo), lhi = std::log(x_hi);
  for (int k = 0; k < count; ++k) {
    const double x = std::exp(llo + (lhi - llo) * k / (count - 1));
    pts.emplace_back(x, std::abs(finite_laplace(g, a, x)));
  }
  return log_linear_fit(pts, 1e-300);
}

// The uniqueness pipeline replay: the grid function
//   d(y) = (q1 - q2)(y) + int_0^y L(x,y) (q1 - q2)(x) dx,   y in [0, a],
// its sup norm, and the interchange-of-integration check equating the engine
// quadrature of (q1 - q2) f1 f2 with the kernel-side y-integral.
struct PipelineReport {
  std::vector<double> grid;  // y samples in [0, a]
  std::vector<double> d;
  double pipeline_sup = 0.0;
  cplx direct_integral{};
  cplx swapped_integral{};
  double interchange_residual = 0.0;
};

inline PipelineReport borg_marchenko_pipeline(const PiecewisePotential& q1,
                                              const PiecewisePotential& q2, cplx z, double h,
                                              const KernelOptions& kopt = {},
                                              const OdeOptions& oopt = {}) {
  const double a = std::max(q1.support_sup(), q2.support_sup());
  const auto K1 = transformation_kernel(q1, h, kopt, a);
  const auto K2 = transformation_kernel(q2, h, kopt, a);
  const auto L = product_kernel(K1, K2);
  const int n = L.n, n_half = n / 2;

  std::vector<double> dq(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double x = i * h;
    dq[static_cast<std::size_t>(i)] =
        (x <= q1.support_sup() ? q1.eval(std::min(x, q1.support_sup())) : 0.0) -
        (x <= q2.support_sup() ? q2.eval(std::min(x, q2.support_sup())) : 0.0);
  }

  PipelineReport rep;
  rep.grid.resize(static_cast<std::size_t>(n_half) + 1);
  rep.d.resize(static_cast<std::size_t>(n_half) + 1);
  for (int j = 0; j <= n_half; ++j) {
    rep.grid[static_cast<std::size_t>(j)] = j * h;
    double conv = 0.0;
    if (j > 0) {
      conv = 0.5 * (L.at(0, j) * dq[0] + L.at(j, j) * dq[static_cast<std::size_t>(j)]);
      for (int i = 1; i < j; ++i) conv += L.at(i, j) * dq[static_cast<std::size_t>(i)];
      conv *= h;
    }
    rep.d[static_cast<std::size_t>(j)] = dq[static_cast<std::size_t>(j)] + conv;
    rep.pipeline_sup = std::max(rep.pipeline_sup, std::abs(rep.d[static_cast<std::size_t>(j)]));
  }

  rep.direct_integral = jost_pair_quadrature(q1, q2, z, a, oopt).integral;
  const cplx iw = cplx(0, 1) * principal_sqrt(z);
  cplx swapped{};
  for (int j = 0; j <= n; ++j) {
    const double y = j * h;
    double inner = (j <= n_half) ? dq[static_cast<std::size_t>(j)] : 0.0;
    const int x_hi = std::min(j, n - j);  // x <= min(y, 2a - y)
    if (x_hi > 0) {
      double conv = 0.5 * (L.at(0, j) * dq[0] + L.at(x_hi, j) * dq[static_cast<std::size_t>(x_hi)]);
      for (int i = 1; i < x_hi; ++i) conv += L.at(i, j) * dq[static_cast<std::size_t>(i)];
      inner += conv * h;
    }
    const double wgt = (j == 0 || j == n) ? 0.5 : 1.0;
    swapped += wgt * inner * std::exp(2.0 * iw * y);
  }
  rep.swapped_integral = swapped * h;
  rep.interchange_residual = std::abs(rep.direct_integral - rep.swapped_integral);
  return rep;
}

}  // namespace mprobe
