#pragma once

#include <memory>
#include <string>
#include <vector>

#include "capcmk/types.hpp"

// The spherical cap domain: geodesic polar grid, round-metric quadrature,
// boundary geometry and the closed-form intrinsic fields.
//
// Coordinates are geodesic polar (rho, phi) about the cap's pole with metric
// d rho^2 + sin^2(rho) g_{S^{n-1}}. The grid is staggered in rho,
// rho_i = (i + 1/2) * theta / n_rho, so the pole is excluded and the last
// cell face sits exactly at rho = theta.

namespace capcmk {

enum class GridMode { Full2D, Axisymmetric };

struct CapDomain {
  int n = 2;            // hypersurface dimension (cap dimension)
  Real theta = kPi / 3; // contact angle, radians, in (0, pi)

  bool beyond_right_angle() const { return theta > kPi / 2 + 1e-15; }
};

/// Surface area of the unit d-sphere S^d in R^{d+1}.
Real sphere_surface_area(int d);

class CapGrid {
public:
  static std::shared_ptr<const CapGrid> build(const CapDomain& domain, int n_rho, int n_phi,
                                              GridMode mode);

  const CapDomain& domain() const { return domain_; }
  GridMode mode() const { return mode_; }
  int dim() const { return domain_.n; }
  Real theta() const { return domain_.theta; }
  int n_rho() const { return n_rho_; }
  int n_phi() const { return n_phi_; }
  Real d_rho() const { return d_rho_; }
  Real d_phi() const { return d_phi_; }

  int num_nodes() const { return static_cast<int>(weights_.size()); }
  int node(int i, int j) const { return mode_ == GridMode::Full2D ? i * n_phi_ + j : i; }
  int i_of(int p) const { return mode_ == GridMode::Full2D ? p / n_phi_ : p; }
  int j_of(int p) const { return mode_ == GridMode::Full2D ? p % n_phi_ : 0; }
  Real rho(int i) const { return rho_(i); }
  Real phi(int j) const { return mode_ == GridMode::Full2D ? phi_(j) : 0.0; }
  Real rho_of(int p) const { return rho_(i_of(p)); }
  Real phi_of(int p) const { return phi(j_of(p)); }

  const Vector& weights() const { return weights_; }
  const Vector& boundary_weights() const { return boundary_weights_; }
  int num_boundary() const { return static_cast<int>(boundary_weights_.size()); }
  /// Node index of the cell-center ring adjacent to the boundary, column b.
  int boundary_node(int b) const { return node(n_rho_ - 1, b); }

  bool same_grid(const CapGrid& other) const;

private:
  CapDomain domain_;
  GridMode mode_;
  int n_rho_ = 0, n_phi_ = 0;
  Real d_rho_ = 0, d_phi_ = 0;
  Vector rho_, phi_;
  Vector weights_, boundary_weights_;
};

using GridPtr = std::shared_ptr<const CapGrid>;

struct ScalarField {
  GridPtr grid;
  Vector values;

  ScalarField() = default;
  ScalarField(GridPtr g, Vector v) : grid(std::move(g)), values(std::move(v)) {}
  explicit ScalarField(GridPtr g) : grid(std::move(g)) {
    values = Vector::Zero(grid->num_nodes());
  }
};

/// Per-node symmetric n x n matrix in the orthonormal frame, stored by
/// distinct components: Full2D three columns (rr, r-phihat, phihat-phihat),
/// axisymmetric two columns (rr, tangential repeated n-1 times).
struct SymMatrixField {
  GridPtr grid;
  Matrix comps;

  Matrix node_matrix(int p) const;
  /// Sorted ascending eigenvalues (principal radii when this holds W).
  Vector node_eigenvalues(int p) const;
  Real min_eigenvalue(int p) const;
};

// Closure used by stencils at the outer ring rho = theta - d_rho/2.
// RobinGhost folds the Robin condition grad_mu h = cot(theta) h into the
// stencil through a ghost cell (valid for support functions); OneSided uses
// pure interior extrapolation (valid for arbitrary fields).
enum class BoundaryClosure { RobinGhost, OneSided };

/// Sparse maps from nodal values to covariant-derivative frame components.
class CovariantStencils {
public:
  CovariantStencils(GridPtr grid, BoundaryClosure closure);

  int num_hessian_components() const { return static_cast<int>(hessian_.size()); }
  /// How many times component c appears in the n x n matrix.
  int multiplicity(int c) const;
  bool is_diagonal_component(int c) const;
  const SparseMatrix& hessian(int c) const { return hessian_[c]; }
  const SparseMatrix& grad_rho() const { return grad_rho_; }
  const SparseMatrix& grad_phihat() const { return grad_phihat_; }
  const GridPtr& grid() const { return grid_; }
  BoundaryClosure closure() const { return closure_; }

private:
  GridPtr grid_;
  BoundaryClosure closure_;
  std::vector<SparseMatrix> hessian_;
  SparseMatrix grad_rho_, grad_phihat_;
};

/// Support function of the cap itself: ell(rho) = 1 - cos(theta) cos(rho).
ScalarField ell_field(const GridPtr& grid);

/// Restrictions of the horizontal coordinates, v_alpha = sin(rho) omega_alpha.
/// Full2D only; axisymmetric grids have none by symmetry.
std::vector<ScalarField> kernel_fields(const GridPtr& grid);

/// Embedding of a cap point into R^{n+1}: (sin(rho) omega, cos(rho) - cos(theta)).
Vector embed(const CapDomain& domain, Real rho, const Eigen::Ref<const Vector>& omega);
Eigen::Vector3d embed_full(Real theta, Real rho, Real phi);
/// Meridian plane coordinates (distance from axis, height).
Eigen::Vector2d embed_meridian(Real theta, Real rho);

Real integrate(const ScalarField& field);
Real integrate_boundary(const ScalarField& field);
/// Quadrature inner product over the cap; grids must match.
Real weighted_inner(const ScalarField& a, const ScalarField& b);

/// Field values extrapolated to the boundary face rho = theta, one per
/// boundary column (cubic one-sided fit through the last four rings).
Vector boundary_values(const ScalarField& field);
/// One-sided normal derivative at rho = theta from the same cubic fit.
Vector boundary_normal_derivative(const ScalarField& field);

SymMatrixField covariant_hessian(const ScalarField& h,
                                 BoundaryClosure closure = BoundaryClosure::OneSided);
/// Frame components of the gradient: column 0 is d/d rho, column 1 (Full2D)
/// is the phihat component d_phi h / sin(rho).
Matrix covariant_gradient(const ScalarField& h,
                          BoundaryClosure closure = BoundaryClosure::OneSided);

} // namespace capcmk
