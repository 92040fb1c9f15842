#pragma once

#include <string>
#include <vector>

#include <Eigen/SparseLU>
#include <json.hpp>

#include "capcmk/body.hpp"
#include "capcmk/cap_grid.hpp"
#include "capcmk/hessian_op.hpp"
#include "capcmk/types.hpp"

// Continuity method: homotopy continuation from f = 1 (solved exactly by
// C(n,k)^{-1/k} ell) to the target data, with damped Newton corrections,
// translation normalization and convexity monitoring.

namespace capcmk {

struct SolverSettings {
  Real tol_newton_rel = 1e-10; // convergence on ||sigma_k(W) - f||_inf / max f
  int max_newton = 40;
  int max_halvings = 30;
  Real armijo_c = 1e-4;
  Real t_step0 = 0.1;
  Real t_growth = 1.5;
  Real t_floor = 1e-4;
  int fast_iters = 4; // grow the homotopy step when Newton needed fewer
  ResidualForm form = ResidualForm::Normalized;
  Real ortho_tol_rel = 1e-8;
  Real convexity_eps_rel = 1e-8;
  Real gamma_eps = 1e-10;
  Real hypothesis_tol = 1e-6; // margin for the warning-level hypothesis checks
};

struct ProblemSpec {
  GridPtr grid;
  int k = 1;
  ScalarField f;
  SolverSettings settings;
};

struct ValidationReport {
  Real min_f = 0.0;
  Vector ortho_defect;
  Real ortho_tol = 0.0;
  Real convexity_min_eig = 0.0; // min eigenvalue of A[f^{-1/k}] over nodes
  Real neumann_min = 0.0;       // min over the rim of grad_mu f
  bool theta_warning = false;
  std::vector<std::string> errors;   // abort the solve
  std::vector<std::string> warnings; // solve attempted, theorem not guaranteed
  bool ok() const { return errors.empty(); }
};

/// Checks positivity, the necessary orthogonality condition, convexity of
/// f^{-1/k} and boundary monotonicity of f. The first two failures are
/// errors, the last two warnings.
ValidationReport validate_data(const ProblemSpec& spec);

/// Default admissible path q(t) = ((1-t) + t f^{-1/k})^{-k}; endpoints are
/// exactly 1 and f.
class HomotopyPath {
public:
  HomotopyPath(ScalarField f, int k);
  ScalarField at(Real t) const;
  int order() const { return k_; }

private:
  ScalarField f_;
  ScalarField froot_; // f^{-1/k}
  int k_;
};

struct PathSample {
  Real t = 0.0;
  Real q_min = 0.0;
  Real ortho_defect = 0.0;
  Real convexity_min_eig = 0.0;
  bool admissible = true;
};

PathSample sample_admissibility(const ScalarField& q, int k, Real hypothesis_tol);

/// Removes the kernel components: h - sum_a <h,v_a>/<v_a,v_a> v_a.
/// Identity on axisymmetric grids.
ScalarField normalize_translation(const ScalarField& h);

enum class SolveStatus { Converged, NoConvergence, EllipticityLost, ContinuationStuck };

struct NewtonTrace {
  std::vector<Real> residual_norms; // iterated-form norm per accepted iterate
  int iterations = 0;
  int halvings = 0;
  bool converged = false;
  std::string failure;
};

struct NewtonResult {
  ScalarField h;
  NewtonTrace trace;
  SolveStatus status = SolveStatus::Converged;
};

/// Factorization cache shared across Newton calls of one continuation run;
/// for k = 1 the Jacobian is constant and one factorization serves them all.
struct NewtonWorkspace {
  Eigen::SparseLU<SparseMatrix> lu;
  Eigen::SparseMatrix<Real, Eigen::RowMajor> matrix_rowwise;
  int num_nodes = 0;
  int num_multipliers = 0;
  bool ready = false;
};

/// Damped Newton on the bordered system: Armijo backtracking on the residual
/// norm (factor 1/2), every accepted iterate stays in Gamma_k and gets its
/// translation component removed. Returns the best iterate on failure.
NewtonResult newton_solve(const HessianOperator& op, const ScalarField& h0,
                          const ScalarField& f_t, int k, const SolverSettings& settings,
                          NewtonWorkspace* workspace = nullptr);
NewtonResult newton_solve(const ScalarField& h0, const ScalarField& f_t, int k,
                          const SolverSettings& settings = {});

struct ConvexityCertificate {
  Real min_eigenvalue = 0.0;
  Real max_eigenvalue = 0.0;
  int worst_node = -1;
  Vector min_sigma; // entry j-1: min over nodes of sigma_j(W), j = 1..n
  Real eps = 0.0;
  bool strict = false;
};

ConvexityCertificate convexity_certificate(const ScalarField& h, int k, Real eps_rel = 1e-8);

struct HomotopyStep {
  Real t = 0.0;
  int newton_iters = 0;
  Real residual = 0.0;
  bool accepted = false;
  PathSample admissibility;
};

struct SolveReport {
  bool converged = false;
  SolveStatus status = SolveStatus::Converged;
  std::string failure;
  int homotopy_steps = 0;
  int newton_total = 0;
  Real t_reached = 0.0;
  Real final_residual = 0.0;
  Real min_eigenvalue_W = 0.0;
  Real ortho_defect = 0.0;
  Real robin_defect = 0.0;
  Real wall_time_seconds = 0.0;
  std::vector<HomotopyStep> steps;
  ConvexityCertificate certificate;
  std::vector<std::string> warnings;
};

nlohmann::ordered_json report_to_json(const SolveReport& report);

struct SolveResult {
  SupportField h;
  CapillaryBody body;
  SolveReport report;
};

/// Full pipeline: validate (throws InvalidDataError on hard failures),
/// continue from t = 0, normalize, reconstruct, certify.
SolveResult solve(const ProblemSpec& spec);

} // namespace capcmk
