#include "capcmk/body.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "capcmk/symfunc.hpp"

namespace capcmk {

namespace {

std::string fmt(Real x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Vector node_sigmas_of_radii(const Eigen::Ref<const Vector>& radii) { return sigma_all(radii); }

// cubic one-sided extrapolation of per-column data to the rim face, matching
// boundary_values / boundary_normal_derivative in cap_grid
const Real kFaceValue[4] = {35.0 / 16.0, -35.0 / 16.0, 21.0 / 16.0, -5.0 / 16.0};
const Real kFaceDeriv[4] = {71.0 / 48.0, -141.0 / 48.0, 93.0 / 48.0, -23.0 / 48.0};

} // namespace

CapillaryBody reconstruct_surface(const ScalarField& h, const ScalarField* f, int k) {
  const CapGrid& g = *h.grid;
  CapillaryBody body;
  body.grid = h.grid;
  body.k = k;
  body.ell = ell_field(h.grid).values;
  if (f) {
    if (!f->grid->same_grid(g)) throw std::invalid_argument("reconstruct: f grid mismatch");
    body.f = f->values;
  }

  Matrix grad = covariant_gradient(h, BoundaryClosure::RobinGhost);
  const int N = g.num_nodes();
  if (g.mode() == GridMode::Full2D) {
    body.vertices.resize(N, 3);
    for (int p = 0; p < N; ++p) {
      const Real rho = g.rho_of(p), phi = g.phi_of(p);
      const Real cr = std::cos(rho), sr = std::sin(rho);
      const Real cp = std::cos(phi), sp = std::sin(phi);
      const Eigen::Vector3d e_rho(cr * cp, cr * sp, -sr);
      const Eigen::Vector3d e_phihat(-sp, cp, 0.0);
      const Eigen::Vector3d nu(sr * cp, sr * sp, cr);
      Eigen::Vector3d x = grad(p, 0) * e_rho + grad(p, 1) * e_phihat + h.values(p) * nu;
      body.vertices.row(p) = x.transpose();
    }
  } else {
    body.vertices.resize(N, 2);
    for (int p = 0; p < N; ++p) {
      const Real rho = g.rho_of(p);
      const Real cr = std::cos(rho), sr = std::sin(rho);
      body.vertices(p, 0) = grad(p, 0) * cr + h.values(p) * sr;
      body.vertices(p, 1) = -grad(p, 0) * sr + h.values(p) * cr;
    }
  }
  body.radii = principal_radii(h);
  return body;
}

Matrix principal_radii(const ScalarField& h) {
  SymMatrixField W = build_W(h);
  const int N = h.grid->num_nodes();
  const int n = h.grid->dim();
  Matrix radii(N, n);
  for (int p = 0; p < N; ++p) radii.row(p) = W.node_eigenvalues(p).transpose();
  return radii;
}

Real capillary_area_measure(const CapillaryBody& body, int k, const std::vector<int>* mask) {
  const CapGrid& g = *body.grid;
  if (k < 0 || k > g.dim())
    throw std::invalid_argument("capillary_area_measure: order out of range");
  const Vector& w = g.weights();
  Real sum = 0.0;
  auto contribution = [&](int p) {
    return w(p) * body.ell(p) * sigma_k(Vector(body.radii.row(p)), k);
  };
  if (mask) {
    for (int p : *mask) {
      if (p < 0 || p >= g.num_nodes())
        throw std::invalid_argument("capillary_area_measure: mask index out of range");
      sum += contribution(p);
    }
  } else {
    for (int p = 0; p < g.num_nodes(); ++p) sum += contribution(p);
  }
  return sum / binomial(g.dim(), k);
}

Vector minkowski_identity_residuals(const ScalarField& h) {
  const CapGrid& g = *h.grid;
  const int n = g.dim();
  Matrix radii = principal_radii(h);
  Vector ell = ell_field(h.grid).values;
  const Vector& w = g.weights();
  Vector lhs = Vector::Zero(n), rhs = Vector::Zero(n);
  for (int p = 0; p < g.num_nodes(); ++p) {
    Vector sig = node_sigmas_of_radii(radii.row(p));
    for (int l = 0; l < n; ++l) {
      lhs(l) += (n - l) * w(p) * h.values(p) * sig(l);
      rhs(l) += (l + 1) * w(p) * ell(p) * sig(l + 1);
    }
  }
  Vector res(n);
  for (int l = 0; l < n; ++l)
    res(l) = std::abs(lhs(l) - rhs(l)) / (std::abs(lhs(l)) + std::abs(rhs(l)));
  return res;
}

Real body_volume(const ScalarField& h) {
  const CapGrid& g = *h.grid;
  const int n = g.dim();
  HessianOperator op(h.grid);
  ScalarField sn = op.sigma_of_W(op.W(h), n);
  Real sum = 0.0;
  for (int p = 0; p < g.num_nodes(); ++p) sum += g.weights()(p) * h.values(p) * sn.values(p);
  return sum / (n + 1);
}

SteinerCheck steiner_volume_check(const ScalarField& h, const std::vector<Real>& svals) {
  const CapGrid& g = *h.grid;
  const int n = g.dim();
  Matrix radii = principal_radii(h);
  if (radii.col(0).minCoeff() <= 0.0)
    throw std::domain_error("precondition-violation: steiner check needs a strictly convex body");

  CapillaryBody body = reconstruct_surface(h);
  Vector Sk(n + 1);
  for (int k = 0; k <= n; ++k) Sk(k) = capillary_area_measure(body, k);

  const Real vol0 = body_volume(h);
  ScalarField ell = ell_field(h.grid);

  SteinerCheck out;
  for (Real s : svals) {
    if (s < 0) throw std::invalid_argument("steiner check: s must be nonnegative");
    ScalarField hs = h;
    hs.values += s * ell.values;
    const Real direct = body_volume(hs) - vol0;
    Real poly = 0.0;
    for (int k = 0; k <= n; ++k) poly += std::pow(s, n + 1 - k) * binomial(n + 1, k) * Sk(k);
    poly /= n + 1;
    const Real rel = s == 0.0 ? std::abs(direct - poly)
                              : std::abs(direct - poly) / std::max(std::abs(direct), std::abs(poly));
    out.s.push_back(s);
    out.direct.push_back(direct);
    out.polynomial.push_back(poly);
    out.rel_residual.push_back(rel);
    out.max_rel = std::max(out.max_rel, rel);
  }
  return out;
}

ContactAngleCheck contact_angle_check(const CapillaryBody& body) {
  const CapGrid& g = *body.grid;
  const Real theta = g.theta();
  const int B = g.n_rho() - 1;
  const Real d = 0.5 * g.d_rho();
  ContactAngleCheck out;

  const int cols = g.num_boundary();
  const int dim = static_cast<int>(body.vertices.cols());
  Matrix face(cols, dim), face_drho(cols, dim);
  face.setZero();
  face_drho.setZero();
  for (int b = 0; b < cols; ++b)
    for (int m = 0; m < 4; ++m) {
      face.row(b) += kFaceValue[m] * body.vertices.row(g.node(B - m, b));
      face_drho.row(b) += (kFaceDeriv[m] / d) * body.vertices.row(g.node(B - m, b));
    }

  if (g.mode() == GridMode::Full2D) {
    for (int b = 0; b < cols; ++b) {
      const int bp = (b + 1) % cols, bm = (b + cols - 1) % cols;
      Eigen::Vector3d t_rho = face_drho.row(b);
      Eigen::Vector3d t_phi = (face.row(bp) - face.row(bm)) / (2.0 * g.d_phi());
      Eigen::Vector3d nu = t_rho.cross(t_phi).normalized();
      const Real phi = g.phi(b);
      const Eigen::Vector3d outward(std::sin(theta) * std::cos(phi),
                                    std::sin(theta) * std::sin(phi), std::cos(theta));
      if (nu.dot(outward) < 0) nu = -nu;
      // e = -E_3, so <nu, e> = -nu_z and cos(pi - theta) = -cos(theta)
      out.angle_defect = std::max(out.angle_defect, std::abs(std::cos(theta) - nu.z()));
      out.boundary_height = std::max(out.boundary_height, std::abs(face(b, 2)));
    }
  } else {
    Eigen::Vector2d t = face_drho.row(0);
    Eigen::Vector2d nu(t.y(), -t.x());
    nu.normalize();
    if (nu.dot(Eigen::Vector2d(std::sin(theta), std::cos(theta))) < 0) nu = -nu;
    out.angle_defect = std::abs(std::cos(theta) - nu.y());
    out.boundary_height = std::abs(face(0, 1));
  }
  return out;
}

void export_obj(const CapillaryBody& body, const std::string& path) {
  const CapGrid& g = *body.grid;
  if (g.mode() != GridMode::Full2D)
    throw std::invalid_argument("export_obj: mesh export needs a full-2D grid");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_obj: cannot open " + path);

  const int nr = g.n_rho(), np = g.n_phi();
  for (int p = 0; p < g.num_nodes(); ++p)
    os << "v " << fmt(body.vertices(p, 0)) << " " << fmt(body.vertices(p, 1)) << " "
       << fmt(body.vertices(p, 2)) << "\n";
  // pole vertex: average of the innermost ring (export fidelity only)
  Eigen::RowVector3d pole = Eigen::RowVector3d::Zero();
  for (int j = 0; j < np; ++j) pole += body.vertices.row(g.node(0, j));
  pole /= np;
  os << "v " << fmt(pole(0)) << " " << fmt(pole(1)) << " " << fmt(pole(2)) << "\n";

  const int pole_id = g.num_nodes() + 1; // OBJ indices are 1-based
  auto id = [&](int i, int j) { return g.node(i, (j % np + np) % np) + 1; };
  for (int j = 0; j < np; ++j) os << "f " << pole_id << " " << id(0, j) << " " << id(0, j + 1) << "\n";
  for (int i = 0; i + 1 < nr; ++i)
    for (int j = 0; j < np; ++j) {
      os << "f " << id(i, j) << " " << id(i + 1, j) << " " << id(i + 1, j + 1) << "\n";
      os << "f " << id(i, j) << " " << id(i + 1, j + 1) << " " << id(i, j + 1) << "\n";
    }
  if (!os) throw std::runtime_error("export_obj: write failed for " + path);
}

void export_vertex_csv(const CapillaryBody& body, const std::string& path) {
  const CapGrid& g = *body.grid;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_vertex_csv: cannot open " + path);
  const int n = g.dim();
  const bool full = g.mode() == GridMode::Full2D;
  os << (full ? "index,rho,phi,x,y,z" : "index,rho,x,z");
  for (int r = 1; r <= n; ++r) os << ",r" << r;
  os << ",ell,f\n";
  for (int p = 0; p < g.num_nodes(); ++p) {
    os << p << "," << fmt(g.rho_of(p));
    if (full) os << "," << fmt(g.phi_of(p));
    for (int c = 0; c < body.vertices.cols(); ++c) os << "," << fmt(body.vertices(p, c));
    for (int r = 0; r < n; ++r) os << "," << fmt(body.radii(p, r));
    os << "," << fmt(body.ell(p)) << "," << fmt(body.f.size() ? body.f(p) : 0.0) << "\n";
  }
  if (!os) throw std::runtime_error("export_vertex_csv: write failed for " + path);
}

} // namespace capcmk
