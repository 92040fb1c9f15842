#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "capcmk/cap_grid.hpp"
#include "capcmk/errors.hpp"
#include "capcmk/types.hpp"

// Assembly of W = hess(h) + h sigma, the nonlinear residual sigma_k(W) - f,
// the Robin boundary closure, the linearized operator with its bordered
// orthogonality constraints, and the diagnostic defect functionals.

namespace capcmk {

/// Which form of the equation the solver iterates on. Normalized uses
/// sigma_k^{1/k}(W) = f^{1/k}, a concave operator with better Newton
/// behavior; Raw uses sigma_k(W) = f directly.
enum class ResidualForm { Normalized, Raw };

/// Support function plus its measured Robin boundary defect.
struct SupportField {
  ScalarField h;
  Real robin_defect = 0.0;
};

/// Bordered system [J, V; V^T D_w, 0]: one PDE row per node, one constraint
/// row and multiplier column per kernel field.
struct LinearSystem {
  SparseMatrix matrix;
  Vector rhs;
  int num_nodes = 0;
  int num_multipliers = 0;
};

/// Caches the Robin-closure stencils, the kernel fields and the A[.] maps
/// for one grid so repeated assemblies stay cheap.
class HessianOperator {
public:
  explicit HessianOperator(GridPtr grid);

  const GridPtr& grid() const { return grid_; }
  const std::vector<ScalarField>& kernels() const { return kernels_; }

  /// W = hess(h) + h I in the orthonormal frame, Robin ghosts at the rim.
  SymMatrixField W(const ScalarField& h) const;

  /// Per-node sigma_k of a W field.
  ScalarField sigma_of_W(const SymMatrixField& W, int k) const;

  /// Node-wise residual of the chosen form. Requires f > 0 and 1 <= k <= n.
  ScalarField residual(const ScalarField& h, const ScalarField& f, int k,
                       ResidualForm form = ResidualForm::Raw) const;

  /// Jacobian of the residual with respect to nodal values of h.
  SparseMatrix jacobian(const SymMatrixField& W, int k, ResidualForm form) const;

  /// Bordered Newton system at h; throws EllipticityLostError when the
  /// spectrum of W leaves Gamma_k at some node.
  LinearSystem linearize(const ScalarField& h, int k,
                         ResidualForm form = ResidualForm::Normalized,
                         Real gamma_eps = 1e-10) const;

  /// Index of the worst node violating the Gamma_k margin, or -1.
  int gamma_violation(const SymMatrixField& W, int k, Real gamma_eps = 1e-10) const;

  /// Smallest eigenvalue of W over all nodes (second return: its node).
  std::pair<Real, int> min_eigenvalue(const SymMatrixField& W) const;

private:
  GridPtr grid_;
  std::unique_ptr<CovariantStencils> stencils_;
  std::vector<SparseMatrix> amaps_; // A[.] component maps: hessian + delta
  std::vector<Eigen::SparseMatrix<Real, Eigen::RowMajor>> amaps_rowwise_;
  std::vector<Vector> rowsums_; // exact row sums per component
  std::vector<ScalarField> kernels_;
};

/// Sparse matrix-vector product with Neumaier-compensated row sums; the
/// pole-ring stencils amplify cancellation, plain products lose ~6 digits.
Vector compensated_product(const Eigen::SparseMatrix<Real, Eigen::RowMajor>& m, const Vector& x);

SymMatrixField build_W(const ScalarField& h,
                       BoundaryClosure closure = BoundaryClosure::RobinGhost);
ScalarField residual(const ScalarField& h, const ScalarField& f, int k,
                     ResidualForm form = ResidualForm::Raw);
LinearSystem linearize(const ScalarField& h, int k,
                       ResidualForm form = ResidualForm::Normalized);

/// Max over the rim of |one-sided d_rho h - cot(theta) h|.
Real robin_defect(const ScalarField& h);
SupportField make_support(ScalarField h);

/// The n integrals of g against the kernel fields; identically zero on
/// axisymmetric grids by symmetry.
Vector orthogonality_defect(const ScalarField& g);

} // namespace capcmk
