#pragma once

#include <string>
#include <vector>

#include "capcmk/cap_grid.hpp"
#include "capcmk/hessian_op.hpp"
#include "capcmk/types.hpp"

// Reconstruction of the embedded capillary hypersurface from its support
// function, curvature data, capillary area measures, and the integral
// identity audits (Minkowski, Steiner, contact angle).

namespace capcmk {

struct CapillaryBody {
  GridPtr grid;
  int k = 0;
  /// Embedded vertices: num_nodes x 3 in Full2D, meridian (R, Z) pairs
  /// (num_nodes x 2) on axisymmetric grids.
  Matrix vertices;
  /// Principal curvature radii per node, ascending.
  Matrix radii;
  Vector ell; // weight ell(xi) per node
  Vector f;   // prescribed data per node (empty when not supplied)
};

/// X(xi) = grad h + h (xi - cos(theta) e), tangential gradient pushed through
/// the embedding, Robin ghosts at the rim.
CapillaryBody reconstruct_surface(const ScalarField& h, const ScalarField* f = nullptr,
                                  int k = 0);

/// Principal radii (eigenvalues of W) per node, ascending.
Matrix principal_radii(const ScalarField& h);

/// S_k^c over the masked nodes: C(n,k)^{-1} sum w ell sigma_k(r).
/// mask == nullptr means the whole cap.
Real capillary_area_measure(const CapillaryBody& body, int k,
                            const std::vector<int>* mask = nullptr);

/// Relative residuals of (n-l) int h sigma_l(W) = (l+1) int ell sigma_{l+1}(W)
/// for l = 0..n-1.
Vector minkowski_identity_residuals(const ScalarField& h);

/// Enclosed volume from the support representation:
/// (n+1)^{-1} int h sigma_n(W) dH^n (the flat bottom face carries no flux).
Real body_volume(const ScalarField& h);

struct SteinerCheck {
  std::vector<Real> s;
  std::vector<Real> direct;      // Vol(h + s ell) - Vol(h)
  std::vector<Real> polynomial;  // (n+1)^{-1} sum_k s^{n+1-k} C(n+1,k) S_k^c
  std::vector<Real> rel_residual;
  Real max_rel = 0.0;
};

/// Compares the Steiner polynomial against directly computed parallel-body
/// volumes. Requires a strictly convex h and s >= 0.
SteinerCheck steiner_volume_check(const ScalarField& h, const std::vector<Real>& svals);

struct ContactAngleCheck {
  Real angle_defect = 0.0;    // max | <nu, e> - cos(pi - theta) | over the rim
  Real boundary_height = 0.0; // max |X_{n+1}| of the extrapolated rim
};

/// Measures the contact angle of the reconstructed mesh along the rim from
/// one-sided tangents, plus the height of the extrapolated boundary curve.
ContactAngleCheck contact_angle_check(const CapillaryBody& body);

/// Wavefront OBJ with one vertex per grid node plus an averaged pole vertex;
/// quads split into triangles, watertight fan at the pole. Full2D only.
void export_obj(const CapillaryBody& body, const std::string& path);

/// Per-vertex CSV: index,rho,phi,x,y,z,r1,...,rn,ell,f.
void export_vertex_csv(const CapillaryBody& body, const std::string& path);

} // namespace capcmk
