#pragma once

// Shared low-level numerics: the principal complex square root, logarithmic
// ray grids in the spectral plane, and least-squares extraction of
// exponential decay rates from sampled differences.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <thread>
#include <vector>

#include "mprobe/errors.hpp"

namespace mprobe {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Square root with Im(w) >= 0. For real negative z the result is exactly
// i*sqrt(|z|); for all z, w*w reproduces z to rounding.
inline cplx principal_sqrt(cplx z) {
  if (z.imag() == 0.0) {
    if (z.real() < 0.0) return cplx(0.0, std::sqrt(-z.real()));
    return cplx(std::sqrt(z.real()), 0.0);
  }
  cplx w = std::sqrt(z);  // principal branch, Re(w) >= 0
  if (w.imag() < 0.0) w = -w;
  return w;
}

// A logarithmic grid of spectral points, either on the ray arg(z) = pi - eps
// or on the negative real axis.
struct SpectralRay {
  enum class Mode { Ray, NegativeAxis };

  Mode mode = Mode::NegativeAxis;
  double epsilon = 0.0;  // Ray mode only, in (0, pi)
  double r_min = 10.0;
  double r_max = 150.0;
  int count = 32;

  static SpectralRay negative_axis(double r_min, double r_max, int count) {
    return SpectralRay{Mode::NegativeAxis, 0.0, r_min, r_max, count};
  }
  static SpectralRay ray(double eps, double r_min, double r_max, int count) {
    return SpectralRay{Mode::Ray, eps, r_min, r_max, count};
  }

  bool operator==(const SpectralRay&) const = default;

  void check() const {
    std::vector<std::string> issues;
    if (!(r_min > 0.0)) issues.push_back("ray.r_min: must be positive");
    if (!(r_min < r_max)) issues.push_back("ray.r_min/r_max: need 0 < r_min < r_max");
    if (count < 2) issues.push_back("ray.count: need at least 2 points");
    if (mode == Mode::Ray && !(epsilon > 0.0 && epsilon < kPi))
      issues.push_back("ray.epsilon: must lie in (0, pi)");
    if (!issues.empty()) throw ValidationError("invalid spectral ray", issues);
  }
};

struct RayPoint {
  cplx z;
  cplx sqrt_z;  // principal root, Im >= 0
};

// Log-spaced |z| values on the declared ray, ascending, each paired with its
// principal square root. Deterministic: same ray gives bit-identical output.
inline std::vector<RayPoint> ray_points(const SpectralRay& ray) {
  ray.check();
  std::vector<RayPoint> pts;
  pts.reserve(static_cast<std::size_t>(ray.count));
  const double lo = std::log(ray.r_min);
  const double hi = std::log(ray.r_max);
  for (int k = 0; k < ray.count; ++k) {
    const double r = std::exp(lo + (hi - lo) * k / (ray.count - 1));
    cplx z;
    if (ray.mode == SpectralRay::Mode::NegativeAxis) {
      z = cplx(-r, 0.0);
    } else {
      z = std::polar(r, kPi - ray.epsilon);
    }
    pts.push_back(RayPoint{z, principal_sqrt(z)});
  }
  return pts;
}

// Result of fitting log||dm|| against s = 2 Im(sqrt z).
struct DecayFit {
  double a_hat = 0.0;      // agreement-length estimate (>= 0); detection bound when saturated
  double intercept = 0.0;  // fitted value of log y at s = 0
  double std_err = 0.0;    // standard error of a_hat
  int points_used = 0;
  double window_lo = 0.0;  // abscissa window of the used points; probe-level
  double window_hi = 0.0;  // callers replace this with the |z| window
  bool saturated_at_floor = false;
};

namespace detail {

struct FitRows {
  std::vector<double> s, logy;
  double s_max_all = 0.0;
  bool any_dropped = false;
};

inline FitRows usable_rows(const std::vector<std::pair<double, double>>& pts, double floor) {
  if (pts.empty()) throw ValidationError("decay fit: no points given");
  FitRows r;
  for (const auto& [s, y] : pts) {
    r.s_max_all = std::max(r.s_max_all, s);
    if (y > floor && std::isfinite(s) && std::isfinite(y)) {
      r.s.push_back(s);
      r.logy.push_back(std::log(y));
    } else {
      r.any_dropped = true;
    }
  }
  return r;
}

inline DecayFit saturated_fit(const FitRows& rows, double floor) {
  DecayFit f;
  f.saturated_at_floor = true;
  f.points_used = static_cast<int>(rows.s.size());
  // Detection bound: agreement can only be certified up to where the floor
  // cuts the exponential off, a <= -log(floor) / s_max.
  f.a_hat = rows.s_max_all > 0.0 ? -std::log(floor) / rows.s_max_all : 0.0;
  f.window_lo = rows.s.empty() ? 0.0 : *std::min_element(rows.s.begin(), rows.s.end());
  f.window_hi = rows.s.empty() ? 0.0 : *std::max_element(rows.s.begin(), rows.s.end());
  return f;
}

// Solves the small normal system X^T X beta = X^T y in long double.
// Columns of X are given as vectors; returns beta and (X^T X)^{-1} diagonal.
inline bool normal_solve(const std::vector<const std::vector<double>*>& cols,
                         const std::vector<double>& y, std::vector<long double>& beta,
                         std::vector<long double>& inv_diag) {
  const std::size_t p = cols.size(), n = y.size();
  std::vector<long double> G(p * p, 0.0L), rhs(p, 0.0L);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < n; ++i) s += (long double)(*cols[a])[i] * (*cols[b])[i];
      G[a * p + b] = s;
    }
    long double s = 0.0L;
    for (std::size_t i = 0; i < n; ++i) s += (long double)(*cols[a])[i] * y[i];
    rhs[a] = s;
  }
  // Gauss-Jordan with partial pivoting, carrying the inverse for the variance.
  std::vector<long double> inv(p * p, 0.0L);
  for (std::size_t i = 0; i < p; ++i) inv[i * p + i] = 1.0L;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::fabs((double)G[r * p + c]) > std::fabs((double)G[piv * p + c])) piv = r;
    if (G[piv * p + c] == 0.0L) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < p; ++k) {
        std::swap(G[piv * p + k], G[c * p + k]);
        std::swap(inv[piv * p + k], inv[c * p + k]);
      }
      std::swap(rhs[piv], rhs[c]);
    }
    const long double d = G[c * p + c];
    for (std::size_t k = 0; k < p; ++k) {
      G[c * p + k] /= d;
      inv[c * p + k] /= d;
    }
    rhs[c] /= d;
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = G[r * p + c];
      if (f == 0.0L) continue;
      for (std::size_t k = 0; k < p; ++k) {
        G[r * p + k] -= f * G[c * p + k];
        inv[r * p + k] -= f * inv[c * p + k];
      }
      rhs[r] -= f * rhs[c];
    }
  }
  beta = rhs;
  inv_diag.resize(p);
  for (std::size_t i = 0; i < p; ++i) inv_diag[i] = inv[i * p + i];
  return true;
}

}  // namespace detail

// Ordinary least squares of log y against s over the points with y > floor.
// The slope is -a_hat. Fewer than two usable points gives the
// "indistinguishable" result: saturated_at_floor set and a_hat holding the
// detection bound -log(floor)/s_max.
inline DecayFit log_linear_fit(const std::vector<std::pair<double, double>>& pts, double floor) {
  auto rows = detail::usable_rows(pts, floor);
  const std::size_t n = rows.s.size();
  if (n < 2) return detail::saturated_fit(rows, floor);

  std::vector<double> ones(n, 1.0);
  std::vector<long double> beta, invd;
  if (!detail::normal_solve({&ones, &rows.s}, rows.logy, beta, invd))
    throw ValidationError("decay fit: degenerate abscissas");

  long double rss = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double r = rows.logy[i] - beta[0] - beta[1] * rows.s[i];
    rss += r * r;
  }
  DecayFit f;
  f.intercept = static_cast<double>(beta[0]);
  f.a_hat = std::max(0.0, static_cast<double>(-beta[1]));
  f.points_used = static_cast<int>(n);
  f.saturated_at_floor = rows.any_dropped;
  f.window_lo = *std::min_element(rows.s.begin(), rows.s.end());
  f.window_hi = *std::max_element(rows.s.begin(), rows.s.end());
  const long double sigma2 = n > 2 ? rss / (long double)(n - 2) : 0.0L;
  f.std_err = std::sqrt(std::max(0.0, static_cast<double>(sigma2 * invd[1])));
  return f;
}

// Decay-rate fit with an additional log(s) regressor:
//   log y = intercept + drift*log s - a*s.
// The drift column soaks up algebraic prefactors (powers of sqrt|z|) that a
// plain log-linear fit would fold into the exponent. Pure exponentials are
// recovered exactly since the model nests them with drift = 0.
inline DecayFit log_linear_fit_with_drift(const std::vector<std::pair<double, double>>& pts,
                                          double floor) {
  auto rows = detail::usable_rows(pts, floor);
  const std::size_t n = rows.s.size();
  if (n < 2) return detail::saturated_fit(rows, floor);
  if (n < 4) return log_linear_fit(pts, floor);  // not enough points for 3 parameters

  std::vector<double> ones(n, 1.0), logs(n);
  for (std::size_t i = 0; i < n; ++i) logs[i] = std::log(rows.s[i]);
  std::vector<long double> beta, invd;
  if (!detail::normal_solve({&ones, &logs, &rows.s}, rows.logy, beta, invd))
    throw ValidationError("decay fit: degenerate abscissas");

  long double rss = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double r = rows.logy[i] - beta[0] - beta[1] * logs[i] - beta[2] * rows.s[i];
    rss += r * r;
  }
  DecayFit f;
  f.intercept = static_cast<double>(beta[0]);
  f.a_hat = std::max(0.0, static_cast<double>(-beta[2]));
  f.points_used = static_cast<int>(n);
  f.saturated_at_floor = rows.any_dropped;
  f.window_lo = *std::min_element(rows.s.begin(), rows.s.end());
  f.window_hi = *std::max_element(rows.s.begin(), rows.s.end());
  const long double sigma2 = n > 3 ? rss / (long double)(n - 3) : 0.0L;
  f.std_err = std::sqrt(std::max(0.0, static_cast<double>(sigma2 * invd[2])));
  return f;
}

// Below this value a sampled ||m1 - m2|| is treated as rounding noise.
inline constexpr double kDefaultFloor = 1e-13;

// Index-addressed parallel map; results are written by index, so the output
// does not depend on the number of workers.
template <class F>
inline void parallel_for(int n, int jobs, F&& body) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      body(i);
    }
  };
  std::vector<std::thread> pool;
  const int k = std::min(jobs, n);
  pool.reserve(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace mprobe
