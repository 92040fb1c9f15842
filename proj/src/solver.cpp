#include "capcmk/solver.hpp"

#include <Eigen/SparseLU>
#include <chrono>
#include <cmath>
#include <sstream>

#include "capcmk/symfunc.hpp"

namespace capcmk {

namespace {

Real inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::string describe_node(const CapGrid& g, int p) {
  std::ostringstream os;
  os << "node " << p << " (rho=" << g.rho_of(p);
  if (g.mode() == GridMode::Full2D) os << ", phi=" << g.phi_of(p);
  os << ")";
  return os.str();
}

} // namespace

ValidationReport validate_data(const ProblemSpec& spec) {
  ValidationReport rep;
  const CapGrid& g = *spec.grid;
  const ScalarField& f = spec.f;
  if (!f.grid->same_grid(g)) throw std::invalid_argument("validate_data: f grid mismatch");
  if (spec.k < 1 || spec.k > g.dim())
    throw std::invalid_argument("validate_data: curvature order k out of range");

  rep.min_f = f.values.minCoeff();
  const Real fmax = f.values.maxCoeff();
  if (!(rep.min_f > 0.0) || rep.min_f <= 1e-12 * fmax) {
    Eigen::Index p;
    f.values.minCoeff(&p);
    rep.errors.push_back("invalid-data: f must be strictly positive, worst at " +
                         describe_node(g, static_cast<int>(p)));
    return rep; // the remaining checks need f > 0
  }

  rep.ortho_defect = orthogonality_defect(f);
  const Real area = g.weights().sum();
  rep.ortho_tol = spec.settings.ortho_tol_rel * fmax * area;
  for (int alpha = 0; alpha < rep.ortho_defect.size(); ++alpha) {
    if (std::abs(rep.ortho_defect(alpha)) > rep.ortho_tol) {
      std::ostringstream os;
      os << "inconsistent-data: necessary condition int f <xi,E_" << (alpha + 1)
         << "> dH = 0 fails (defect " << rep.ortho_defect(alpha) << ", tolerance "
         << rep.ortho_tol << ")";
      rep.errors.push_back(os.str());
    }
  }

  // convexity of f^{-1/k}: A[f^{-1/k}] positive semi-definite up to margin.
  // One-sided closures here, the field need not satisfy the Robin condition.
  ScalarField groot(f.grid);
  groot.values = f.values.array().pow(-1.0 / spec.k);
  if (!groot.values.allFinite()) {
    rep.errors.push_back("invalid-data: f^{-1/k} overflows");
    return rep;
  }
  SymMatrixField A = build_W(groot, BoundaryClosure::OneSided);
  Real min_eig = std::numeric_limits<Real>::infinity();
  Real scale = 0.0;
  int worst = 0;
  for (int p = 0; p < g.num_nodes(); ++p) {
    Vector lam = A.node_eigenvalues(p);
    scale = std::max(scale, lam.cwiseAbs().maxCoeff());
    if (lam(0) < min_eig) {
      min_eig = lam(0);
      worst = p;
    }
  }
  rep.convexity_min_eig = min_eig;
  if (min_eig < -spec.settings.hypothesis_tol * scale) {
    std::ostringstream os;
    os << "hypothesis: f^{-1/k} is not convex (min eigenvalue " << min_eig << " at "
       << describe_node(g, worst) << "); existence not guaranteed";
    rep.warnings.push_back(os.str());
  }

  Vector df = boundary_normal_derivative(f);
  rep.neumann_min = df.minCoeff();
  const Real fscale = fmax - rep.min_f;
  if (rep.neumann_min < -spec.settings.hypothesis_tol * std::max(fscale, fmax)) {
    std::ostringstream os;
    os << "hypothesis: grad_mu f >= 0 fails on the rim (min " << rep.neumann_min
       << "); convexity preservation not guaranteed";
    rep.warnings.push_back(os.str());
  }

  if (g.domain().beyond_right_angle()) {
    rep.theta_warning = true;
    rep.warnings.push_back("hypothesis: theta > pi/2 is outside the proven range");
  }
  return rep;
}

HomotopyPath::HomotopyPath(ScalarField f, int k) : f_(std::move(f)), k_(k) {
  froot_ = ScalarField(f_.grid);
  froot_.values = f_.values.array().pow(-1.0 / k_);
  if (!froot_.values.allFinite())
    throw InvalidDataError("invalid-data: f^{-1/k} overflows along the homotopy");
}

ScalarField HomotopyPath::at(Real t) const {
  ScalarField q(f_.grid);
  if (t <= 0.0) {
    q.values.setOnes();
  } else if (t >= 1.0) {
    q.values = f_.values; // endpoint exact
  } else {
    q.values = ((1.0 - t) + t * froot_.values.array()).pow(-Real(k_));
  }
  return q;
}

PathSample sample_admissibility(const ScalarField& q, int k, Real hypothesis_tol) {
  PathSample s;
  s.q_min = q.values.minCoeff();
  s.ortho_defect = inf_norm(orthogonality_defect(q));
  ScalarField qroot(q.grid);
  qroot.values = q.values.array().pow(-1.0 / k);
  SymMatrixField A = build_W(qroot, BoundaryClosure::OneSided);
  Real min_eig = std::numeric_limits<Real>::infinity();
  Real scale = 0.0;
  for (int p = 0; p < q.grid->num_nodes(); ++p) {
    Vector lam = A.node_eigenvalues(p);
    min_eig = std::min(min_eig, lam(0));
    scale = std::max(scale, lam.cwiseAbs().maxCoeff());
  }
  s.convexity_min_eig = min_eig;
  const Real area = q.grid->weights().sum();
  s.admissible = s.q_min > 0 && min_eig >= -hypothesis_tol * scale &&
                 s.ortho_defect <= 1e-8 * q.values.cwiseAbs().maxCoeff() * area;
  return s;
}

namespace {

ScalarField project_off_kernels(const std::vector<ScalarField>& vs, ScalarField h) {
  if (vs.empty()) return h;
  const int m = static_cast<int>(vs.size());
  Matrix gram(m, m);
  Vector b(m);
  for (int a = 0; a < m; ++a) {
    b(a) = weighted_inner(h, vs[a]);
    for (int c = 0; c < m; ++c) gram(a, c) = weighted_inner(vs[a], vs[c]);
  }
  Vector coeff = gram.ldlt().solve(b);
  for (int a = 0; a < m; ++a) h.values -= coeff(a) * vs[a].values;
  return h;
}

} // namespace

ScalarField normalize_translation(const ScalarField& h) {
  return project_off_kernels(kernel_fields(h.grid), h);
}

NewtonResult newton_solve(const HessianOperator& op, const ScalarField& h0,
                          const ScalarField& f_t, int k, const SolverSettings& settings,
                          NewtonWorkspace* workspace) {
  NewtonResult result;
  result.h = project_off_kernels(op.kernels(), h0);
  NewtonTrace& trace = result.trace;

  const Real fmax = f_t.values.maxCoeff();
  const Real tol = settings.tol_newton_rel * fmax;

  auto raw_norm = [&](const ScalarField& h) {
    return inf_norm(op.residual(h, f_t, k, ResidualForm::Raw).values);
  };
  auto form_resid = [&](const ScalarField& h) { return op.residual(h, f_t, k, settings.form); };

  {
    SymMatrixField W0 = op.W(result.h);
    const int bad = op.gamma_violation(W0, k, settings.gamma_eps);
    if (bad >= 0) {
      result.status = SolveStatus::EllipticityLost;
      trace.failure = "ellipticity-lost: initial guess leaves Gamma_k at " +
                      describe_node(*op.grid(), bad);
      return result;
    }
  }

  NewtonWorkspace local;
  NewtonWorkspace& ws = workspace ? *workspace : local;
  // sigma_1 is linear in W, so the bordered matrix never changes with h and
  // one factorization serves the whole continuation run
  const bool constant_jacobian = (k == 1);

  trace.residual_norms.push_back(inf_norm(form_resid(result.h).values));

  for (int iter = 0; iter < settings.max_newton; ++iter) {
    if (raw_norm(result.h) <= tol) {
      trace.converged = true;
      result.status = SolveStatus::Converged;
      return result;
    }

    if (!(constant_jacobian && ws.ready)) {
      LinearSystem sys;
      try {
        sys = op.linearize(result.h, k, settings.form, settings.gamma_eps);
      } catch (const EllipticityLostError& e) {
        result.status = SolveStatus::EllipticityLost;
        trace.failure = e.what();
        return result;
      }
      ws.lu.compute(sys.matrix);
      if (ws.lu.info() != Eigen::Success) {
        result.status = SolveStatus::NoConvergence;
        trace.failure = "linear solve failed (singular bordered system)";
        return result;
      }
      ws.matrix_rowwise = sys.matrix;
      ws.num_nodes = sys.num_nodes;
      ws.num_multipliers = sys.num_multipliers;
      ws.ready = constant_jacobian;
    }

    Vector rhs = Vector::Zero(ws.num_nodes + ws.num_multipliers);
    rhs.head(ws.num_nodes) = -form_resid(result.h).values;
    Vector sol = ws.lu.solve(rhs);
    // one round of iterative refinement; the pole stencils push cond(J) to
    // ~1e6 and the plain LU solve alone caps the residual near 1e-10
    {
      Vector linres = rhs - compensated_product(ws.matrix_rowwise, sol);
      sol += ws.lu.solve(linres);
    }
    Vector step = sol.head(ws.num_nodes);

    const Real current = trace.residual_norms.back();
    Real s = 1.0;
    bool accepted = false;
    bool entered_cone = false;
    ScalarField h_try;
    Real r_try = 0.0;
    for (int halving = 0; halving <= settings.max_halvings; ++halving) {
      h_try = result.h;
      h_try.values += s * step;
      h_try = project_off_kernels(op.kernels(), h_try);
      if (op.gamma_violation(op.W(h_try), k, settings.gamma_eps) < 0) {
        entered_cone = true;
        r_try = inf_norm(form_resid(h_try).values);
        if (r_try < (1.0 - settings.armijo_c * s) * current) {
          accepted = true;
          break;
        }
      }
      s *= 0.5;
      ++trace.halvings;
    }
    if (!accepted) {
      result.status = entered_cone ? SolveStatus::NoConvergence : SolveStatus::EllipticityLost;
      trace.failure = entered_cone
                          ? "no-convergence: line search stalled"
                          : "ellipticity-lost: no damped step re-enters Gamma_k";
      return result;
    }
    result.h = h_try;
    trace.residual_norms.push_back(r_try);
    ++trace.iterations;
  }

  if (raw_norm(result.h) <= tol) {
    trace.converged = true;
    result.status = SolveStatus::Converged;
  } else {
    result.status = SolveStatus::NoConvergence;
    trace.failure = "no-convergence: iteration cap reached";
  }
  return result;
}

NewtonResult newton_solve(const ScalarField& h0, const ScalarField& f_t, int k,
                          const SolverSettings& settings) {
  HessianOperator op(h0.grid);
  return newton_solve(op, h0, f_t, k, settings, nullptr);
}

ConvexityCertificate convexity_certificate(const ScalarField& h, int k, Real eps_rel) {
  const CapGrid& g = *h.grid;
  const int n = g.dim();
  SymMatrixField W = build_W(h);
  ConvexityCertificate cert;
  cert.min_eigenvalue = std::numeric_limits<Real>::infinity();
  cert.max_eigenvalue = -std::numeric_limits<Real>::infinity();
  cert.min_sigma = Vector::Constant(n, std::numeric_limits<Real>::infinity());
  for (int p = 0; p < g.num_nodes(); ++p) {
    Vector lam = W.node_eigenvalues(p);
    if (lam(0) < cert.min_eigenvalue) {
      cert.min_eigenvalue = lam(0);
      cert.worst_node = p;
    }
    cert.max_eigenvalue = std::max(cert.max_eigenvalue, lam(n - 1));
    Vector sig = sigma_all(lam);
    for (int j = 1; j <= n; ++j) cert.min_sigma(j - 1) = std::min(cert.min_sigma(j - 1), sig(j));
  }
  (void)k;
  cert.eps = eps_rel * std::max(cert.max_eigenvalue, 0.0);
  cert.strict = cert.min_eigenvalue > cert.eps;
  return cert;
}

nlohmann::ordered_json report_to_json(const SolveReport& r) {
  nlohmann::ordered_json j;
  j["converged"] = r.converged;
  switch (r.status) {
    case SolveStatus::Converged: j["status"] = "converged"; break;
    case SolveStatus::NoConvergence: j["status"] = "no-convergence"; break;
    case SolveStatus::EllipticityLost: j["status"] = "ellipticity-lost"; break;
    case SolveStatus::ContinuationStuck: j["status"] = "continuation-stuck"; break;
  }
  if (!r.failure.empty()) j["failure"] = r.failure;
  j["final_residual"] = r.final_residual;
  j["min_eigenvalue_W"] = r.min_eigenvalue_W;
  j["homotopy_steps"] = r.homotopy_steps;
  j["newton_total"] = r.newton_total;
  j["ortho_defect"] = r.ortho_defect;
  j["robin_defect"] = r.robin_defect;
  j["t_reached"] = r.t_reached;
  j["certificate"] = {{"min_eigenvalue", r.certificate.min_eigenvalue},
                      {"max_eigenvalue", r.certificate.max_eigenvalue},
                      {"worst_node", r.certificate.worst_node},
                      {"eps", r.certificate.eps},
                      {"strict", r.certificate.strict}};
  j["certificate"]["min_sigma"] = std::vector<Real>(
      r.certificate.min_sigma.data(), r.certificate.min_sigma.data() + r.certificate.min_sigma.size());
  j["warnings"] = r.warnings;
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"t", s.t},
                     {"newton_iters", s.newton_iters},
                     {"residual", s.residual},
                     {"accepted", s.accepted},
                     {"q_min", s.admissibility.q_min},
                     {"path_ortho_defect", s.admissibility.ortho_defect},
                     {"path_convexity_min_eig", s.admissibility.convexity_min_eig},
                     {"admissible", s.admissibility.admissible}});
  }
  j["steps"] = steps;
  j["wall_time_seconds"] = r.wall_time_seconds;
  return j;
}

SolveResult solve(const ProblemSpec& spec) {
  const auto t_start = std::chrono::steady_clock::now();
  SolveResult out;
  SolveReport& rep = out.report;

  ValidationReport val = validate_data(spec);
  rep.warnings = val.warnings;
  if (!val.ok()) {
    std::string joined;
    for (const auto& e : val.errors) joined += (joined.empty() ? "" : "; ") + e;
    throw InvalidDataError(joined);
  }

  const CapGrid& g = *spec.grid;
  const int n = g.dim();
  const SolverSettings& s = spec.settings;
  HessianOperator op(spec.grid);
  HomotopyPath path(spec.f, spec.k);

  ScalarField h = ell_field(spec.grid);
  h.values *= std::pow(binomial(n, spec.k), -1.0 / spec.k);

  NewtonWorkspace workspace;
  auto run_step = [&](Real t, const ScalarField& target) {
    NewtonResult res = newton_solve(op, h, target, spec.k, s, &workspace);
    HomotopyStep step;
    step.t = t;
    step.newton_iters = res.trace.iterations;
    step.residual = res.trace.residual_norms.back();
    step.accepted = res.trace.converged;
    step.admissibility = sample_admissibility(target, spec.k, s.hypothesis_tol);
    if (!step.admissibility.admissible)
      rep.warnings.push_back("path: admissibility violated at t=" + std::to_string(t));
    rep.steps.push_back(step);
    rep.newton_total += res.trace.iterations;
    if (res.trace.converged) h = res.h;
    return res;
  };

  // discrete solution at t = 0 (the continuum one is exact only up to O(d^2))
  NewtonResult first = run_step(0.0, path.at(0.0));
  if (!first.trace.converged) {
    rep.status = first.status;
    rep.failure = first.trace.failure;
  } else {
    Real t = 0.0;
    Real step = s.t_step0;
    while (t < 1.0) {
      const Real t_try = std::min(1.0, t + step);
      NewtonResult res = run_step(t_try, path.at(t_try));
      if (res.trace.converged) {
        t = t_try;
        ++rep.homotopy_steps;
        if (res.trace.iterations <= s.fast_iters) step *= s.t_growth;
      } else {
        step *= 0.5;
        if (step < s.t_floor) {
          rep.status = SolveStatus::ContinuationStuck;
          std::ostringstream os;
          os << "continuation-stuck: step floor reached, last good t = " << t << " ("
             << res.trace.failure << ")";
          rep.failure = os.str();
          break;
        }
      }
    }
    rep.t_reached = t;
    if (t >= 1.0) {
      rep.status = SolveStatus::Converged;
      rep.converged = true;
    }
  }

  h = normalize_translation(h);
  out.h = make_support(h);
  rep.final_residual = inf_norm(op.residual(h, spec.f, spec.k, ResidualForm::Raw).values);
  rep.robin_defect = out.h.robin_defect;
  rep.ortho_defect = inf_norm(orthogonality_defect(h));
  rep.certificate = convexity_certificate(h, spec.k, s.convexity_eps_rel);
  rep.min_eigenvalue_W = rep.certificate.min_eigenvalue;
  if (rep.converged && !rep.certificate.strict)
    rep.warnings.push_back("certificate: solution is not strictly convex at the margin");
  out.body = reconstruct_surface(h, &spec.f, spec.k);

  rep.wall_time_seconds =
      std::chrono::duration<Real>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

} // namespace capcmk
