#include <doctest.h>

#include <cmath>

#include "capcmk/solver.hpp"
#include "oracles.hpp"

using namespace capcmk;

namespace {

GridPtr make_full(Real theta, int n) { return CapGrid::build({2, theta}, n, n, GridMode::Full2D); }

ScalarField constant_field(const GridPtr& g, Real c) {
  ScalarField f(g);
  f.values.setConstant(c);
  return f;
}

ProblemSpec make_spec(const GridPtr& g, int k, ScalarField f) {
  ProblemSpec spec;
  spec.grid = g;
  spec.k = k;
  spec.f = std::move(f);
  return spec;
}

} // namespace

TEST_CASE("validation accepts clean data and flags the rest") {
  const Real theta = kPi / 3;
  auto g = make_full(theta, 48);

  auto ok = validate_data(make_spec(g, 1, constant_field(g, 1.0)));
  CHECK(ok.ok());
  CHECK(ok.warnings.empty());

  // violated necessary condition, defect matches the analytic quadrature
  ScalarField f = constant_field(g, 1.0);
  f.values += 0.5 * kernel_fields(g)[0].values;
  auto bad = validate_data(make_spec(g, 1, f));
  CHECK_FALSE(bad.ok());
  CHECK(bad.errors.front().find("E_1") != std::string::npos);
  const Real c = std::cos(theta);
  const Real analytic = 0.5 * kPi * (2.0 / 3.0 - c + c * c * c / 3.0);
  CHECK(bad.ortho_defect(0) == doctest::Approx(analytic).epsilon(0.05));

  // f = (ell / max ell)^{-k}: f^{-1/k} is proportional to ell, hence convex;
  // it decreases toward the rim, so only the Neumann warning fires
  ScalarField ell = ell_field(g);
  ScalarField fconv(g);
  fconv.values = (ell.values / ell.values.maxCoeff()).array().inverse();
  auto conv = validate_data(make_spec(g, 1, fconv));
  CHECK(conv.ok());
  CHECK(conv.convexity_min_eig > -1e-8);
  REQUIRE(conv.warnings.size() == 1);
  CHECK(conv.warnings[0].find("grad_mu") != std::string::npos);

  // f = ell^k at theta >= pi/3 is fully inside the hypothesis class
  auto g5 = make_full(2 * kPi / 5, 48);
  ScalarField fell(g5);
  fell.values = ell_field(g5).values;
  auto clean = validate_data(make_spec(g5, 1, fell));
  CHECK(clean.ok());
  CHECK(clean.warnings.empty());

  // the same data at theta < pi/3 violates the convexity hypothesis
  auto g4 = make_full(kPi / 4, 48);
  ScalarField fell4(g4);
  fell4.values = ell_field(g4).values;
  auto viol = validate_data(make_spec(g4, 1, fell4));
  CHECK(viol.ok());
  REQUIRE_FALSE(viol.warnings.empty());
  CHECK(viol.warnings[0].find("not convex") != std::string::npos);

  // non-positive f is a hard error
  ScalarField fneg = constant_field(g, 1.0);
  fneg.values(7) = -0.1;
  CHECK_FALSE(validate_data(make_spec(g, 1, fneg)).ok());

  // theta beyond pi/2 only warns
  auto gw = make_full(0.6 * kPi, 48);
  auto warn = validate_data(make_spec(gw, 1, constant_field(gw, 1.0)));
  CHECK(warn.ok());
  CHECK(warn.theta_warning);
}

TEST_CASE("default homotopy path endpoints are exact") {
  auto g = make_full(kPi / 3, 32);
  ScalarField f(g);
  for (int p = 0; p < g->num_nodes(); ++p) f.values(p) = 1.5 + 0.3 * std::cos(g->rho_of(p));
  HomotopyPath path(f, 2);
  CHECK((path.at(0.0).values.array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK((path.at(1.0).values - f.values).cwiseAbs().maxCoeff() == 0.0);

  // constant data: q(t) = ((1-t) + t c^{-1/k})^{-k}, monotone in t
  ScalarField fc = constant_field(g, 3.0);
  HomotopyPath pc(fc, 2);
  Real prev = 1.0;
  for (Real t : {0.2, 0.4, 0.6, 0.8}) {
    const Real expect = std::pow((1 - t) + t * std::pow(3.0, -0.5), -2.0);
    const Real got = pc.at(t).values(0);
    CHECK(got == doctest::Approx(expect).epsilon(1e-14));
    CHECK(got > prev);
    prev = got;
  }

  auto sample = sample_admissibility(pc.at(0.5), 2, 1e-6);
  CHECK(sample.admissible);
}

TEST_CASE("translation normalization removes exactly the kernel part") {
  auto g = make_full(kPi / 3, 48);
  ScalarField ell = ell_field(g);
  ScalarField shifted = ell;
  shifted.values += 3.0 * kernel_fields(g)[0].values - 0.7 * kernel_fields(g)[1].values;
  ScalarField back = normalize_translation(shifted);
  CHECK((back.values - ell.values).cwiseAbs().maxCoeff() <= 1e-12);

  ScalarField twice = normalize_translation(back);
  CHECK((twice.values - back.values).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(orthogonality_defect(back).cwiseAbs().maxCoeff() <= 1e-12);

  auto ga = CapGrid::build({3, kPi / 3}, 32, 1, GridMode::Axisymmetric);
  ScalarField ha = ell_field(ga);
  CHECK((normalize_translation(ha).values - ha.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Newton recovers the exact cap from a scaled start") {
  const Real theta = kPi / 3;
  auto g = make_full(theta, 64);
  ScalarField h0 = ell_field(g);
  h0.values *= 1.2;

  // k = 1 is linear: one Newton step lands on the discrete solution
  auto res1 = newton_solve(h0, constant_field(g, 2.0), 1, {});
  CHECK(res1.trace.converged);
  CHECK(res1.trace.iterations <= 2);
  CHECK((res1.h.values - ell_field(g).values).cwiseAbs().maxCoeff() <= 5e-4);

  auto res2 = newton_solve(h0, constant_field(g, 1.0), 2, {});
  CHECK(res2.trace.converged);
  CHECK(res2.trace.iterations <= 8);
  CHECK((res2.h.values - ell_field(g).values).cwiseAbs().maxCoeff() <= 5e-4);

  // monotone residual trace
  for (size_t i = 1; i < res2.trace.residual_norms.size(); ++i)
    CHECK(res2.trace.residual_norms[i] < res2.trace.residual_norms[i - 1]);

  // failure paths are reported, best iterate returned
  SolverSettings tight;
  tight.max_newton = 0;
  auto stall = newton_solve(h0, constant_field(g, 2.0), 1, tight);
  CHECK_FALSE(stall.trace.converged);
  CHECK(stall.status == SolveStatus::NoConvergence);

  ScalarField hneg = ell_field(g);
  hneg.values *= -1.0;
  auto lost = newton_solve(hneg, constant_field(g, 2.0), 1, {});
  CHECK(lost.status == SolveStatus::EllipticityLost);
}

TEST_CASE("Newton recovery of a manufactured solution at second order") {
  const Real theta = kPi / 3;
  for (int k : {1, 2}) {
    std::vector<Real> errs;
    for (int n : {24, 48, 96}) {
      auto g = make_full(theta, n);
      auto mf = testing::manufactured_case(g, 0.05, k);
      ScalarField h0 = ell_field(g);
      h0.values *= std::pow(mf.f.values.mean() / binomial(2, k), 1.0 / k);
      auto res = newton_solve(h0, mf.f, k, {});
      REQUIRE(res.trace.converged);
      errs.push_back((res.h.values - mf.h.values).cwiseAbs().maxCoeff());
    }
    CHECK(testing::fitted_order(errs) >= 1.8);
  }
}

TEST_CASE("solve pipeline on constant data returns the cap") {
  const Real theta = kPi / 3;
  auto g = make_full(theta, 64);
  auto result = solve(make_spec(g, 1, constant_field(g, 2.0)));
  const SolveReport& rep = result.report;

  CHECK(rep.converged);
  CHECK(rep.t_reached == 1.0);
  CHECK(rep.homotopy_steps >= 1);
  CHECK((result.h.h.values - ell_field(g).values).cwiseAbs().maxCoeff() <= 5e-4);
  CHECK(rep.certificate.strict);
  CHECK(rep.min_eigenvalue_W == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(rep.certificate.min_sigma(0) == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(rep.certificate.min_sigma(1) == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(rep.robin_defect <= 1e-4);
  CHECK(rep.ortho_defect <= 1e-10);

  // report honesty: the recorded residual is the recomputation, bit for bit
  const Real recomputed =
      residual(result.h.h, constant_field(g, 2.0), 1).values.cwiseAbs().maxCoeff();
  CHECK(rep.final_residual == recomputed);

  // json serialization carries the stable keys
  auto j = report_to_json(rep);
  for (const char* key : {"final_residual", "min_eigenvalue_W", "homotopy_steps", "newton_total",
                          "ortho_defect", "robin_defect", "t_reached"})
    CHECK(j.contains(key));
}

TEST_CASE("solve in Gauss-curvature mode and on axisymmetric grids") {
  // k = n = 2 at theta = pi/2: det W = 1 with Neumann data, h = ell = 1
  auto g = make_full(kPi / 2, 48);
  auto res = solve(make_spec(g, 2, constant_field(g, 1.0)));
  CHECK(res.report.converged);
  CHECK((res.h.h.values.array() - 1.0).abs().maxCoeff() <= 1e-6);

  // n = 3, k = 2 axisymmetric: f = 1 pairs with ell/sqrt(3), f = 3 with ell
  auto ga = CapGrid::build({3, kPi / 3}, 512, 1, GridMode::Axisymmetric);
  auto r1 = solve(make_spec(ga, 2, constant_field(ga, 1.0)));
  CHECK(r1.report.converged);
  CHECK((r1.h.h.values - ell_field(ga).values / std::sqrt(3.0)).cwiseAbs().maxCoeff() <= 1e-4);

  auto r3 = solve(make_spec(ga, 2, constant_field(ga, 3.0)));
  CHECK(r3.report.converged);
  CHECK((r3.h.h.values - ell_field(ga).values).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("solves from translated starts agree after normalization") {
  auto g = make_full(kPi / 3, 48);
  ScalarField f = constant_field(g, 2.0);
  auto a = newton_solve(ell_field(g), f, 1, {});
  ScalarField shifted = ell_field(g);
  shifted.values += 0.3 * kernel_fields(g)[0].values;
  auto b = newton_solve(shifted, f, 1, {});
  REQUIRE(a.trace.converged);
  REQUIRE(b.trace.converged);
  ScalarField na = normalize_translation(a.h), nb = normalize_translation(b.h);
  CHECK((na.values - nb.values).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("solve rejects inconsistent data with the failing check named") {
  auto g = make_full(kPi / 3, 32);
  ScalarField f = constant_field(g, 1.0);
  f.values += 0.5 * kernel_fields(g)[0].values;
  CHECK_THROWS_AS(solve(make_spec(g, 1, f)), InvalidDataError);
  try {
    solve(make_spec(g, 1, f));
  } catch (const InvalidDataError& e) {
    CHECK(std::string(e.what()).find("inconsistent-data") != std::string::npos);
  }
}

TEST_CASE("convexity certificate is eigenvalue evidence") {
  auto g = make_full(kPi / 3, 48);
  ScalarField ell = ell_field(g);

  auto cert = convexity_certificate(ell, 1);
  CHECK(cert.strict);
  CHECK(cert.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(cert.min_sigma(1) == doctest::Approx(1.0).epsilon(1e-2));

  ScalarField scaled = ell;
  scaled.values *= 0.5;
  CHECK(convexity_certificate(scaled, 1).min_eigenvalue == doctest::Approx(0.5).epsilon(1e-2));

  // a rough non-Robin wiggle destroys definiteness; the flag must follow the
  // computed spectrum and name the worst node
  ScalarField rough = ell;
  for (int p = 0; p < g->num_nodes(); ++p)
    rough.values(p) += 0.05 * std::cos(8.0 * g->rho_of(p));
  auto bad = convexity_certificate(rough, 1);
  CHECK_FALSE(bad.strict);
  CHECK(bad.min_eigenvalue < 0.0);
  CHECK(bad.worst_node >= 0);
  CHECK(bad.strict == (bad.min_eigenvalue > bad.eps));
}
