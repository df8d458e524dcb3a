#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mprobe/probe.hpp"
#include "test_support.hpp"

using namespace mprobe;
using Catch::Approx;

namespace {

ProblemSpec halfline(const PiecewisePotential& q,
                     BoundaryCondition bc = BoundaryCondition::dirichlet()) {
  ProblemSpec s;
  s.potential = q;
  s.left_bc = bc;
  return s;
}

const SpectralRay kDefaultWindow = SpectralRay::negative_axis(10.0, 150.0, 32);

}  // namespace

TEST_CASE("delta_m_trace basics") {
  const auto t = make_mtrace(halfline(testsup::make_bump(0.0, 1.0, 1.0)), kDefaultWindow);
  const auto d = delta_m_trace(t, t);
  for (const auto& [s, v] : d) {
    CHECK(v == 0.0);
    CHECK(s > 0.0);
  }
  auto other = make_mtrace(halfline(testsup::make_bump(0.0, 1.0, 1.0)),
                           SpectralRay::negative_axis(10.0, 150.0, 16));
  CHECK_THROWS_AS(delta_m_trace(t, other), ValidationError);
}

TEST_CASE("delta of distinct potentials is positive and decaying") {
  PiecewisePotential q0;
  q0.breakpoints = {0.0};
  const auto t1 = make_mtrace(halfline(q0), kDefaultWindow);
  const auto t2 = make_mtrace(halfline(testsup::make_indicator(1.0, 2.0, 1.0)), kDefaultWindow);
  const auto d = delta_m_trace(t1, t2);
  for (std::size_t i = 1; i < d.size(); ++i) {
    CHECK(d[i].second > 0.0);
    CHECK(d[i].second < d[i - 1].second);
  }
}

TEST_CASE("fit_agreement_length on synthetic and engine data") {
  // fit of its own model: diffs decaying at rate 0.7 in s = 2 Im sqrt z
  std::vector<std::pair<double, double>> synth;
  for (int k = 0; k < 24; ++k) {
    const double s = 5.0 + k;
    synth.emplace_back(s, std::exp(-0.7 * s));
  }
  const auto rep = fit_agreement_length(synth);
  CHECK(rep.a_hat == Approx(0.7).margin(1e-10));
  CHECK(rep.verdict == Verdict::FirstDifferenceNear);

  // identical potentials: indistinguishable down to the floor
  const auto q = testsup::make_bump(0.0, 1.0, 1.0);
  const auto t = make_mtrace(halfline(q), kDefaultWindow);
  const auto same = fit_agreement_length(delta_m_trace(t, t));
  CHECK(same.verdict == Verdict::IndistinguishableToFloor);
  CHECK(same.a_hat > 0.0);  // detection bound

  // q1 = 0 against the indicator of [1, 2]: first difference at 1
  PiecewisePotential q0;
  q0.breakpoints = {0.0};
  const auto t1 = make_mtrace(halfline(q0), kDefaultWindow);
  const auto t2 = make_mtrace(halfline(testsup::make_indicator(1.0, 2.0, 1.0)), kDefaultWindow);
  const auto fit = fit_agreement_length(delta_m_trace(t1, t2));
  CHECK(fit.a_hat == Approx(1.0).margin(0.05));
  CHECK(fit.verdict == Verdict::FirstDifferenceNear);
}

TEST_CASE("estimate_alpha recovers boundary angles") {
  const auto wide = SpectralRay::negative_axis(1e3, 1e5, 24);
  const auto q = testsup::make_bump(0.0, 0.5, 1.0);

  const auto dirichlet = estimate_alpha(make_mtrace(halfline(q), wide));
  CHECK(dirichlet.conclusive);
  CHECK(dirichlet.alpha == 0.0);
  CHECK(dirichlet.growth_exponent == Approx(0.5).margin(0.05));

  const auto neumann = estimate_alpha(
      make_mtrace(halfline(q, BoundaryCondition::from_angle(kPi / 2.0)), wide));
  CHECK(neumann.conclusive);
  CHECK(neumann.alpha == Approx(kPi / 2.0).margin(1e-5));

  const auto third = estimate_alpha(
      make_mtrace(halfline(q, BoundaryCondition::from_angle(kPi / 3.0)), wide));
  CHECK(third.conclusive);
  CHECK(third.alpha == Approx(kPi / 3.0).margin(1e-5));

  // synthetic ambiguous trace: |m| ~ r^{1/4} sits in neither regime
  MTrace fake;
  fake.ray = wide;
  fake.kind = MTrace::Kind::HalfLine;
  for (const auto& pt : ray_points(wide)) {
    fake.z.push_back(pt.z);
    fake.sqrt_z.push_back(pt.sqrt_z);
    fake.value.push_back(CMat(1, {cplx(std::pow(std::abs(pt.z), 0.25), 0.0)}));
  }
  CHECK_FALSE(estimate_alpha(fake).conclusive);
}

TEST_CASE("boundary-condition mismatch asymptote") {
  PiecewisePotential q0;
  q0.breakpoints = {0.0};
  const auto b1 = BoundaryCondition::from_angle(kPi / 2.0);
  const auto b2 = BoundaryCondition::from_angle(kPi / 4.0);
  const auto ray = SpectralRay::negative_axis(25.0, 1e4, 12);

  const auto ratios = bc_mismatch_asymptote(q0, 1.0, b1, b2, ray);
  for (const auto& [z, r] : ratios) {
    CHECK(std::abs(r - 1.0) <= 5.0 / std::sqrt(std::abs(z)));
  }
  // swapping the angles leaves the ratio unchanged
  const auto swapped = bc_mismatch_asymptote(q0, 1.0, b2, b1, ray);
  for (std::size_t i = 0; i < ratios.size(); ++i)
    CHECK(std::abs(ratios[i].second - swapped[i].second) < 1e-12);

  CHECK_THROWS_AS(bc_mismatch_asymptote(q0, 1.0, b1, b1, ray), ValidationError);
  CHECK_THROWS_AS(bc_mismatch_asymptote(q0, 1.0, BoundaryCondition::dirichlet(), b2, ray),
                  ValidationError);

  // nonzero potential: the ratio still settles to 1
  const auto qb = testsup::make_bump(0.0, 1.0, 1.5);
  const auto with_q = bc_mismatch_asymptote(qb, 1.0, b1, b2, ray);
  CHECK(std::abs(with_q.back().second - 1.0) < 0.05);
  CHECK(std::abs(with_q.back().second - 1.0) < std::abs(with_q.front().second - 1.0));
}

namespace {
ProblemSpec full_line_spec(const PiecewisePotential& p) {
  ProblemSpec s;
  s.geometry = GeometryKind::FullLine;
  s.potential = p;
  return s;
}
}  // namespace

TEST_CASE("full-line agreement: symmetric interval semantics") {
  // document potential on [0, 4] => full-line support [-2, 2]
  const auto base = testsup::make_bump(0.0, 4.0, 1.0);

  // difference only on the left: x in [-2, -1] <-> document [0, 1]; jumps at
  // the inner edge x = -1 so the first-difference point is sharp
  PiecewisePotential left = testsup::split_at(base, 1.0);
  left.segments[0] = testsup::poly_add(left.segments[0], Poly<double>{{0.0, 0.0, 0.8}});

  const auto ray = kDefaultWindow;
  const auto t1 = make_mtrace(full_line_spec(base), ray);
  const auto t2 = make_mtrace(full_line_spec(left), ray);
  const auto rep = full_line_agreement(t1, t2);
  CHECK(rep.a_hat == Approx(1.0).margin(0.06));

  const auto same = full_line_agreement(t1, t1);
  CHECK(same.verdict == Verdict::IndistinguishableToFloor);
}

TEST_CASE("probe_run end to end with matching non-Dirichlet conditions") {
  // difference starting at 0.7, both problems carrying the same Robin angle
  const double a_star = 0.7;
  const auto q1 = testsup::make_bump(0.0, 1.4, 1.2);
  PiecewisePotential q2 = testsup::split_at(q1, a_star);
  q2.segments.back() = testsup::poly_add(q2.segments.back(), Poly<double>{{0.9, -0.9 / 0.7}});

  const auto bc = BoundaryCondition::from_angle(kPi / 3.0);
  const auto ray = SpectralRay::negative_axis(10.0 / (a_star * a_star),
                                              150.0 / (a_star * a_star), 32);
  const auto res = probe_run(halfline(q1, bc), halfline(q2, bc), ray);
  CHECK(res.report.a_hat == Approx(a_star).epsilon(0.05));
  CHECK(res.report.verdict == Verdict::FirstDifferenceNear);
  REQUIRE(res.report.alpha_estimates.has_value());
  // window is reported in |z|
  CHECK(res.report.fit.window_hi == Approx(150.0 / (a_star * a_star)).epsilon(0.01));
}

TEST_CASE("probe_run rejects mismatched kinds") {
  HermitianMatrixPotential Q;
  Q.dim = 2;
  Q.breakpoints = {0.0, 1.0};
  Poly<CMat> seg;
  seg.c.push_back(CMat(2));
  Q.segments.push_back(seg);
  ProblemSpec matrix;
  matrix.potential = Q;
  CHECK_THROWS_AS(probe_run(halfline(testsup::make_bump(0.0, 1.0, 1.0)), matrix, kDefaultWindow),
                  ValidationError);
}

TEST_CASE("probe invariant: monotone information") {
  const auto base = testsup::make_bump(0.0, 2.0, 1.3);
  auto with_diff = [&](double a_star) {
    PiecewisePotential q = testsup::split_at(base, a_star);
    q.segments.back() =
        testsup::poly_add(q.segments.back(), Poly<double>{{0.8, -0.8 / (2.0 - a_star)}});
    return q;
  };
  auto fit_at = [&](double a_star) {
    const auto ray = SpectralRay::negative_axis(10.0 / (a_star * a_star),
                                                150.0 / (a_star * a_star), 32);
    const auto t1 = make_mtrace(halfline(base), ray);
    const auto t2 = make_mtrace(halfline(with_diff(a_star)), ray);
    return fit_agreement_length(delta_m_trace(t1, t2)).a_hat;
  };
  const double a_half = fit_at(0.5);
  const double a_one = fit_at(1.0);
  CHECK(a_one > a_half - 0.03);
  CHECK(a_half == Approx(0.5).epsilon(0.06));
  CHECK(a_one == Approx(1.0).epsilon(0.06));
}

TEST_CASE("probe invariant: diagonal matrix probes track the worst scalar channel") {
  // channel 1 differs at 0.5, channel 2 differs at 1.0
  const auto base1 = testsup::make_bump(0.0, 1.5, 1.0);
  const auto base2 = testsup::make_bump(0.0, 1.5, -0.8);
  auto add_jump = [](const PiecewisePotential& q, double at) {
    PiecewisePotential out = testsup::split_at(q, at);
    out.segments.back() =
        testsup::poly_add(out.segments.back(), Poly<double>{{0.9, -0.9 / (1.5 - at)}});
    return out;
  };
  const auto d1 = add_jump(base1, 0.5);
  const auto d2 = add_jump(base2, 1.0);

  auto diag_spec = [](const PiecewisePotential& qa, const PiecewisePotential& qb) {
    HermitianMatrixPotential Q;
    Q.dim = 2;
    // merge breakpoints by splitting both onto the union grid
    std::vector<double> bks = qa.breakpoints;
    for (double b : qb.breakpoints) bks.push_back(b);
    std::sort(bks.begin(), bks.end());
    bks.erase(std::unique(bks.begin(), bks.end(),
                          [](double x, double y) { return std::abs(x - y) < 1e-12; }),
              bks.end());
    Q.breakpoints = bks;
    for (std::size_t i = 0; i + 1 < bks.size(); ++i) {
      const auto pa = restrict_potential(qa, bks[i], bks[i + 1]);
      const auto pb = restrict_potential(qb, bks[i], bks[i + 1]);
      Poly<CMat> seg;
      const std::size_t deg = std::max(pa.segments.empty() ? 0 : pa.segments[0].c.size(),
                                       pb.segments.empty() ? 0 : pb.segments[0].c.size());
      for (std::size_t k = 0; k < std::max<std::size_t>(deg, 1); ++k) {
        CMat m(2);
        if (!pa.segments.empty() && k < pa.segments[0].c.size()) m(0, 0) = pa.segments[0].c[k];
        if (!pb.segments.empty() && k < pb.segments[0].c.size()) m(1, 1) = pb.segments[0].c[k];
        seg.c.push_back(m);
      }
      Q.segments.push_back(seg);
    }
    ProblemSpec s;
    s.potential = Q;
    return s;
  };

  const auto t1 = make_mtrace(diag_spec(base1, base2), kDefaultWindow);
  const auto t2 = make_mtrace(diag_spec(d1, d2), kDefaultWindow);
  const auto matrix_fit = fit_agreement_length(delta_m_trace(t1, t2));

  const auto ray = SpectralRay::negative_axis(10.0 / 0.25, 150.0 / 0.25, 32);
  const auto s1 = make_mtrace(halfline(base1), ray);
  const auto s2 = make_mtrace(halfline(d1), ray);
  const auto scalar_fit = fit_agreement_length(delta_m_trace(s1, s2));

  CHECK(matrix_fit.a_hat == Approx(scalar_fit.a_hat).epsilon(0.06));
  CHECK(matrix_fit.a_hat == Approx(0.5).epsilon(0.06));
}

TEST_CASE("probe invariant: boundary-angle mismatch dominates") {
  const auto q = testsup::make_bump(0.0, 0.5, 1.0);
  const auto res = probe_run(halfline(q), halfline(q, BoundaryCondition::from_angle(kPi / 4.0)),
                             kDefaultWindow);
  CHECK(res.report.a_hat <= 0.05);
  // the raw difference trace does not decay
  CHECK(res.diffs.back().second > 0.5 * res.diffs.front().second);
  REQUIRE(res.report.alpha_estimates.has_value());
}
