#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mprobe/weyl.hpp"
#include "test_support.hpp"

using namespace mprobe;
using Catch::Approx;

namespace {

// Closed-form oracle for q = c on [0, w] glued to the free solution at w:
// solve f'' = (c - z) f on [0, w] by exponential matching to e^{i sqrt(z) x}.
struct ConstOracle {
  cplx f0, df0;
};
ConstOracle const_potential_oracle(double c, double w, cplx z) {
  const cplx iw = cplx(0, 1) * principal_sqrt(z);
  const cplx mu = principal_sqrt(cplx(c, 0.0) - z);  // f = A e^{mu x} + B e^{-mu x}
  const cplx fw = std::exp(iw * w), dfw = iw * fw;
  const cplx A = 0.5 * (fw + dfw / mu) * std::exp(-mu * w);
  const cplx B = 0.5 * (fw - dfw / mu) * std::exp(mu * w);
  return {A + B, mu * (A - B)};
}

PiecewisePotential declared_zero(double len) {
  PiecewisePotential q;
  q.breakpoints = {0.0, len};
  q.segments.push_back(Poly<double>{{0.0}});
  return q;
}

}  // namespace

TEST_CASE("jost solution of the free equation is the exponential") {
  const auto q = declared_zero(1.0);
  const auto tr = jost_solution(q, cplx(-1.0, 0.0), 0.125);
  REQUIRE(tr.grid.back() == Approx(1.0));
  for (std::size_t i = 0; i < tr.grid.size(); ++i) {
    const double x = tr.grid[i];
    CHECK(std::abs(tr.values[i].first - std::exp(-x)) < 1e-13);
    CHECK(std::abs(tr.values[i].second + std::exp(-x)) < 1e-13);
  }
  // f(1) = e^{-1}, f'(1) = -e^{-1}
  CHECK(std::abs(tr.values.back().first - std::exp(-1.0)) < 1e-14);

  const cplx z(0.0, 2.0);
  const auto trc = jost_solution(declared_zero(1.0), z, 0.25);
  const cplx iw = cplx(0, 1) * principal_sqrt(z);
  for (std::size_t i = 0; i < trc.grid.size(); ++i)
    CHECK(std::abs(trc.values[i].first - std::exp(iw * trc.grid[i])) < 1e-13);
}

TEST_CASE("jost solution matches the constant-potential oracle") {
  const auto q = testsup::make_indicator(0.0, 1.0, 1.0);
  const cplx z(-1.0, 0.0);
  const auto tr = jost_solution(q, z, 1.0);
  const auto oracle = const_potential_oracle(1.0, 1.0, z);
  CHECK(std::abs(tr.values[0].first - oracle.f0) < 1e-9);
  CHECK(std::abs(tr.values[0].second - oracle.df0) < 1e-9);
}

TEST_CASE("jost exponential bound") {
  const auto q = testsup::make_bump(0.3, 1.4, 2.5);
  const double alpha = q.support_sup();
  for (const cplx z : {cplx(-9.0, 0.0), cplx(3.0, 4.0), cplx(-20.0, 5.0)}) {
    const double imw = principal_sqrt(z).imag();
    const auto tr = jost_solution(q, z, alpha / 64.0);
    for (std::size_t i = 0; i < tr.grid.size(); ++i) {
      const double x = tr.grid[i];
      double moment = 0.0;  // int_x^alpha (y - x) |q(y)| dy via |q| quadrature
      const int panels = 256;
      for (int k = 0; k < panels; ++k) {
        const double y0 = x + (alpha - x) * k / panels;
        const double y1 = x + (alpha - x) * (k + 1) / panels;
        moment += 0.5 * (y1 - y0) *
                  ((y0 - x) * std::abs(q.eval(y0)) + (y1 - x) * std::abs(q.eval(y1)));
      }
      CHECK(std::abs(tr.values[i].first) <=
            std::exp(-imw * x) * std::exp(moment) * (1.0 + 1e-10));
    }
  }
}

TEST_CASE("jost trace satisfies the ODE under a three-point check") {
  const auto q = testsup::make_bump(0.0, 1.0, 2.0);
  const cplx z(-9.0, 0.0);
  const double h = 1e-3;
  const auto tr = jost_solution(q, z, h);
  for (std::size_t i = 1; i + 1 < tr.grid.size(); i += 7) {
    const double x = tr.grid[i];
    const cplx second =
        (tr.values[i - 1].first - 2.0 * tr.values[i].first + tr.values[i + 1].first) / (h * h);
    const cplx expect = (q.eval(x) - z) * tr.values[i].first;
    CHECK(std::abs(second - expect) < 1e-4 * (1.0 + std::abs(expect)));
  }
}

TEST_CASE("m_halfline free values") {
  const auto q = declared_zero(1.0);
  CHECK(std::abs(m_halfline(q, cplx(-1.0, 0.0)) - cplx(-1.0, 0.0)) < 1e-13);
  const cplx expect = std::polar(1.0, 3.0 * kPi / 4.0);
  CHECK(std::abs(m_halfline(q, cplx(0.0, 1.0)) - expect) < 1e-13);
}

TEST_CASE("m_halfline matches the constant-potential oracle") {
  const auto q = testsup::make_indicator(0.0, 1.0, 1.0);
  const auto oracle = const_potential_oracle(1.0, 1.0, cplx(-1.0, 0.0));
  CHECK(std::abs(m_halfline(q, cplx(-1.0, 0.0)) - oracle.df0 / oracle.f0) < 1e-9);
}

TEST_CASE("m_halfline enforces the spectral floor") {
  const auto q = testsup::make_indicator(0.0, 1.0, -4.0);  // inf q = -4, floor = -5
  CHECK_THROWS_AS(m_halfline(q, cplx(-2.0, 0.0)), ValidationError);
  CHECK_NOTHROW(m_halfline(q, cplx(-6.0, 0.0)));
  CHECK_NOTHROW(m_halfline(q, cplx(-2.0, 0.5)));  // off the axis is always fine
}

TEST_CASE("herglotz and conjugate symmetry of m") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    const auto q = testsup::make_bump(testsup::uniform(rng, 0.0, 0.4),
                                      testsup::uniform(rng, 0.8, 1.6),
                                      testsup::uniform(rng, -3.0, 3.0));
    for (const cplx z : {cplx(1.0, 0.7), cplx(-4.0, 2.0), cplx(10.0, 0.1)}) {
      const cplx m = m_halfline(q, z);
      CHECK(m.imag() > 0.0);
      CHECK(std::abs(m_halfline(q, std::conj(z)) - std::conj(m)) < 1e-12 * (1.0 + std::abs(m)));
    }
  }
}

TEST_CASE("riccati trace constants") {
  const auto q0 = declared_zero(1.0);
  const cplx z(-4.0, 0.0);
  const auto tr = riccati_m_trace(q0, z, 1.0, 0.125);
  const cplx isqz = cplx(0, 1) * principal_sqrt(z);
  for (const auto& m : tr.m) CHECK(std::abs(m - isqz) < 1e-13);
  CHECK_FALSE(tr.used_fallback);

  const auto qb = testsup::make_bump(0.0, 1.0, 1.5);
  const auto trb = riccati_m_trace(qb, cplx(-9.0, 0.0), 1.0, 0.25);
  CHECK(std::abs(trb.m.back() - cplx(0, 1) * principal_sqrt(cplx(-9.0, 0.0))) < 1e-13);
}

TEST_CASE("riccati trace agrees with the linear engine") {
  const auto q = testsup::make_indicator(1.0, 2.0, 1.0);
  const cplx z(-25.0, 0.0);
  const auto tr = riccati_m_trace(q, z, 2.0, 0.5);
  CHECK(std::abs(tr.m.front() - m_halfline(q, z)) < 1e-9);
  CHECK_FALSE(tr.used_fallback);
}

TEST_CASE("riccati residual is small on a refined grid") {
  const auto q = testsup::make_bump(0.0, 1.0, 2.0);
  const cplx z(-9.0, 0.0);
  const double h = 1e-4;
  const auto tr = riccati_m_trace(q, z, 1.0, h);
  for (std::size_t i = 1; i + 1 < tr.m.size(); i += 41) {
    const cplx deriv = (tr.m[i + 1] - tr.m[i - 1]) / (2.0 * h);
    const cplx resid = deriv + tr.m[i] * tr.m[i] - (q.eval(tr.grid[i]) - z);
    CHECK(std::abs(resid) < 1e-6);
  }
}

TEST_CASE("riccati blow-up falls back to the linear system") {
  // deep well: f oscillates and crosses zero inside the support, so m has a
  // pole there; the guard must reroute the whole trace.
  const auto q = testsup::make_indicator(0.0, 2.0, -10.0);
  OdeOptions opt;
  opt.allow_any_real_z = true;
  const cplx z(-5.0, 0.0);
  const auto tr = riccati_m_trace(q, z, 2.0, 0.125, opt);
  CHECK(tr.used_fallback);
  CHECK(std::abs(tr.m.front() - m_halfline(q, z, opt)) < 1e-9);
}

TEST_CASE("atkinson residual trend along the ray") {
  const auto q0 = declared_zero(1.0);
  CHECK(atkinson_residual(q0, cplx(-30.0, 0.0), 1.0) < 1e-13);

  const auto q = testsup::make_bump(0.2, 0.9, 2.0);
  double prev = 1e300;
  for (double r : {1e2, 1e3, 1e4}) {
    const cplx z = std::polar(r, 3.0 * kPi / 4.0);
    const double res = atkinson_residual(q, z, 1.0);
    CHECK(res < prev);
    prev = res;
  }
  CHECK(prev < 0.1);
}

TEST_CASE("m_finite free closed forms") {
  const auto q = declared_zero(1.0);
  CHECK(m_finite(q, 1.0, BoundaryCondition::dirichlet(), cplx(-1, 0)).real() ==
        Approx(-1.0 / std::tanh(1.0)).epsilon(1e-12));
  CHECK(m_finite(q, 1.0, BoundaryCondition::neumann(), cplx(-1, 0)).real() ==
        Approx(-std::tanh(1.0)).epsilon(1e-12));
  // long interval converges to the half line at rate e^{-2 b}
  const cplx m10 = m_finite(declared_zero(1.0), 10.0, BoundaryCondition::dirichlet(), cplx(-1, 0));
  CHECK(std::abs(m10 - cplx(-1.0, 0.0)) < 1e-8);
  CHECK(m10.real() == Approx(-1.0 / std::tanh(10.0)).epsilon(1e-12));
}

TEST_CASE("m_finite agrees with the free Weyl closed form for nonzero cot") {
  const auto q = declared_zero(1.0);
  const auto beta = BoundaryCondition::from_angle(kPi / 3.0);
  for (double r : {2.0, 9.0, 100.0}) {
    const cplx z(-r, 0.0);
    const cplx m = m_finite(q, 1.0, beta, z);
    const cplx psi = free_weyl_finite(z, 1.0, beta, 0.0);
    const cplx dpsi = free_weyl_finite_deriv(z, 1.0, beta, 0.0);
    CHECK(std::abs(m - dpsi / psi) < 1e-11 * (1.0 + std::abs(m)));
  }
}

TEST_CASE("m_finite pole at an eigenvalue") {
  // q = -10 on [0, pi] Dirichlet-Dirichlet: eigenvalues j^2 - 10, so z = -9.
  PiecewisePotential q;
  q.breakpoints = {0.0, kPi};
  q.segments.push_back(Poly<double>{{-10.0}});
  OdeOptions opt;
  opt.allow_any_real_z = true;
  CHECK_THROWS_AS(m_finite(q, kPi, BoundaryCondition::dirichlet(), cplx(-9.0, 0.0), opt),
                  PoleError);
  CHECK_NOTHROW(m_finite(q, kPi, BoundaryCondition::dirichlet(), cplx(-9.5, 0.0), opt));
}

TEST_CASE("free finite Weyl solution") {
  // Dirichlet: zeta = -1 exactly
  CHECK(free_weyl_zeta(BoundaryCondition::dirichlet(), cplx(-3.0, 0.0)) == cplx(-1.0, 0.0));
  // Neumann at z = -1: psi(x) = (e^{-x} + e^{-(2b-x)}) / (1 + e^{-2b})
  const double b = 1.5;
  for (double x : {0.0, 0.4, 1.1}) {
    const double expect = (std::exp(-x) + std::exp(-(2 * b - x))) / (1.0 + std::exp(-2 * b));
    CHECK(std::abs(free_weyl_finite(cplx(-1, 0), b, BoundaryCondition::neumann(), x) - expect) <
          1e-14);
  }
  CHECK(std::abs(free_weyl_finite(cplx(-1, 0), 1.0, BoundaryCondition::neumann(), 0.0) - 1.0) <
        1e-14);
  // eigenvalue of the free Dirichlet interval: z = 1 on [0, pi]
  CHECK_THROWS_AS(free_weyl_finite(cplx(1.0, 0.0), kPi, BoundaryCondition::dirichlet(), 0.5),
                  PoleError);
}

TEST_CASE("finite-interval asymptotics in the paper normalization") {
  // psi_paper(x) = psi_engine(x) * psi0(z, b) / s; then psi_paper(0) -> 1.
  const auto q = testsup::make_bump(0.0, 1.0, 2.0);
  const auto beta = BoundaryCondition::from_angle(kPi / 4.0);
  double prev = 1e300;
  for (double r : {1e2, 1e3, 1e4}) {
    const cplx z(-r, 0.0);
    const auto end = weyl_finite_endpoint(q, 1.0, beta, z);
    const cplx psi0_b = free_weyl_finite(z, 1.0, beta, 1.0);
    const cplx psi_paper_0 = end.f * std::exp(end.log_scale) * psi0_b / beta.s;
    const double dev = std::abs(psi_paper_0 - 1.0);
    CHECK(dev < prev);
    CHECK(dev < 3.0 / std::sqrt(r));
    prev = dev;
  }
}

TEST_CASE("half-line free limit of the finite m") {
  const auto q = declared_zero(0.5);
  const cplx z(-4.0, 0.0);
  const cplx m_half = cplx(0, 1) * principal_sqrt(z);  // -2
  const auto beta = BoundaryCondition::from_angle(kPi / 3.0);
  double prev_err = 0.0;
  for (double b : {1.0, 2.0, 3.0}) {
    const double err = std::abs(m_finite(q, b, beta, z) - m_half);
    if (prev_err > 0.0) {
      const double ratio = err / prev_err;  // should be about e^{-2 * 2 * 1}
      CHECK(ratio < std::exp(-4.0) * 2.0);
      CHECK(ratio > std::exp(-4.0) / 2.0);
    }
    prev_err = err;
  }
}

TEST_CASE("moebius boundary transform") {
  CHECK(m_alpha_transform(cplx(0.3, 1.7), BoundaryCondition::from_angle(0.0)) == cplx(0.3, 1.7));
  CHECK(std::abs(m_alpha_transform(cplx(-1, 0), BoundaryCondition::from_angle(kPi / 2)) -
                 cplx(1, 0)) < 1e-14);
  CHECK(std::abs(m_alpha_transform(cplx(0, 1), BoundaryCondition::from_angle(kPi / 4)) -
                 cplx(0, 1)) < 1e-14);
  CHECK_THROWS_AS(m_alpha_transform(cplx(-1.0, 0.0), BoundaryCondition::from_angle(kPi / 4)),
                  PoleError);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const cplx m(testsup::uniform(rng, -3, 3), testsup::uniform(rng, 0.1, 3));
    const auto bc = BoundaryCondition::from_angle(testsup::uniform(rng, 0.1, 3.0));
    CHECK(std::abs(m_alpha_inverse(m_alpha_transform(m, bc), bc) - m) < 1e-12);
  }
}

TEST_CASE("full-line M matrix") {
  // free line at z = -1: m_+ = -1, m_- = +1
  const auto q0 = declared_zero(1.0);
  const cplx z(-1.0, 0.0);
  const cplx m_plus = m_halfline(q0, z);
  const cplx m_minus = -m_halfline(q0, z);
  const CMat M = full_line_M(m_minus, m_plus);
  CHECK(std::abs(M(0, 0) - cplx(0.5, 0)) < 1e-13);
  CHECK(std::abs(M(1, 1) - cplx(-0.5, 0)) < 1e-13);
  CHECK(std::abs(M(0, 1)) < 1e-14);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const cplx a(testsup::uniform(rng, -2, 2), testsup::uniform(rng, 0.1, 2));
    const cplx b(testsup::uniform(rng, -2, 2), testsup::uniform(rng, 0.1, 2));
    if (std::abs(a - b) < 1e-6) continue;
    const CMat m = full_line_M(a, b);
    CHECK(m(0, 1) == m(1, 0));  // symmetric by construction
  }
  CHECK_THROWS_AS(full_line_M(cplx(1, 1), cplx(1, 1)), NumericalError);
}

TEST_CASE("matrix M of decoupled potentials") {
  const cplx z(-4.0, 0.0);
  HermitianMatrixPotential Q;
  Q.dim = 2;
  Q.breakpoints = {0.0, 1.0};
  Poly<CMat> seg;
  CMat c0(2);
  c0(0, 0) = 1.0;  // Q = diag(indicator of [0,1], 0)
  seg.c.push_back(c0);
  Q.segments.push_back(seg);

  const CMat M = matrix_M(Q, z);
  const auto q_scalar = testsup::make_indicator(0.0, 1.0, 1.0);
  CHECK(std::abs(M(0, 0) - m_halfline(q_scalar, z)) < 1e-11);
  CHECK(std::abs(M(1, 1) - cplx(0, 1) * principal_sqrt(z)) < 1e-11);
  CHECK(std::abs(M(0, 1)) < 1e-12);
  CHECK(std::abs(M(1, 0)) < 1e-12);
}

namespace {
HermitianMatrixPotential coupled_matrix_bump() {
  HermitianMatrixPotential Q;
  Q.dim = 2;
  Q.breakpoints = {0.0, 1.0};
  CMat h(2);
  h(0, 0) = 1.0;
  h(0, 1) = cplx(0.4, 0.3);
  h(1, 0) = cplx(0.4, -0.3);
  h(1, 1) = -0.5;
  Poly<CMat> seg;
  for (double c : {0.0, 0.0, 2.0, -4.0, 2.0}) seg.c.push_back(h * c);  // bump profile
  Q.segments.push_back(seg);
  return Q;
}
}  // namespace

TEST_CASE("matrix M symmetries and Herglotz property") {
  const auto Q = coupled_matrix_bump();
  for (const cplx z : {cplx(1.0, 2.0), cplx(-3.0, 0.5), cplx(5.0, 1.0)}) {
    const CMat M = matrix_M(Q, z);
    const CMat Mc = matrix_M(Q, std::conj(z));
    CHECK((Mc.adjoint() - M).max_abs() < 1e-10 * (1.0 + M.max_abs()));
    if (z.imag() > 0.0) {
      const CMat im = (M - M.adjoint()) * cplx(0.0, -0.5);  // (M - M*)/(2i)
      CHECK(hermitian_eig_min(im) > -1e-10);
    }
  }
  // free matrix case
  HermitianMatrixPotential Q0;
  Q0.dim = 2;
  Q0.breakpoints = {0.0, 1.0};
  Poly<CMat> zseg;
  zseg.c.push_back(CMat(2));
  Q0.segments.push_back(zseg);
  const cplx z(-9.0, 0.0);
  const CMat M0 = matrix_M(Q0, z);
  CHECK((M0 - CMat::scalar(2, cplx(0, 1) * principal_sqrt(z))).max_abs() < 1e-12);
}

TEST_CASE("matrix Riccati residual") {
  const auto Q = coupled_matrix_bump();
  const cplx z(-9.0, 0.0);
  const double h = 2e-4;
  const auto tr = matrix_m_trace(Q, z, 1.0, h);
  for (std::size_t i = 1; i + 1 < tr.size(); i += 511) {
    const CMat deriv = (tr[i + 1].second - tr[i - 1].second) * (1.0 / (2.0 * h));
    const CMat resid = deriv + tr[i].second * tr[i].second -
                       (Q.eval(tr[i].first) - CMat::scalar(2, z));
    CHECK(resid.max_abs() < 1e-6);
  }
}

TEST_CASE("trace builder assembles rays and boundary transforms") {
  ProblemSpec spec;
  spec.potential = testsup::make_bump(0.0, 1.0, 1.0);
  spec.left_bc = BoundaryCondition::from_angle(kPi / 3.0);
  const auto ray = SpectralRay::negative_axis(10.0, 80.0, 6);
  const auto tr = make_mtrace(spec, ray);
  REQUIRE(tr.z.size() == 6);
  CHECK(tr.kind == MTrace::Kind::HalfLine);
  for (std::size_t i = 0; i < tr.z.size(); ++i) {
    const cplx base = m_halfline(spec.scalar_potential(), tr.z[i]);
    CHECK(std::abs(tr.scalar(i) - m_alpha_transform(base, spec.left_bc.normalized())) < 1e-12);
    CHECK(tr.z[i].imag() == 0.0);  // on the declared ray
  }

  ProblemSpec full;
  full.geometry = GeometryKind::FullLine;
  full.potential = testsup::make_bump(0.0, 2.0, 1.0);
  const auto trf = make_mtrace(full, ray);
  CHECK(trf.kind == MTrace::Kind::FullLine2x2);
  CHECK(trf.dim == 2);
}
