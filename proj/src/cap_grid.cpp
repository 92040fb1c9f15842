#include "capcmk/cap_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace capcmk {

Real sphere_surface_area(int d) {
  // |S^d| = 2 pi^((d+1)/2) / Gamma((d+1)/2)
  if (d < 0) throw std::invalid_argument("sphere_surface_area: negative dimension");
  const Real half = 0.5 * (d + 1);
  return 2.0 * std::pow(kPi, half) / std::tgamma(half);
}

namespace {

// int_a^b sin^m, by the standard reduction. Exact cell masses keep the
// total measure of the cap exact instead of midpoint-accurate.
Real sin_power_integral(int m, Real a, Real b) {
  if (m == 0) return b - a;
  if (m == 1) return std::cos(a) - std::cos(b);
  const Real boundary = (std::pow(std::sin(a), m - 1) * std::cos(a) -
                         std::pow(std::sin(b), m - 1) * std::cos(b)) /
                        m;
  return boundary + Real(m - 1) / Real(m) * sin_power_integral(m - 2, a, b);
}

} // namespace

std::shared_ptr<const CapGrid> CapGrid::build(const CapDomain& domain, int n_rho, int n_phi,
                                              GridMode mode) {
  if (!(domain.theta > 0 && domain.theta < kPi))
    throw std::invalid_argument("build_grid: theta must lie in (0, pi)");
  if (domain.n < 1) throw std::invalid_argument("build_grid: dimension must be >= 1");
  if (mode == GridMode::Full2D && domain.n != 2)
    throw std::invalid_argument("build_grid: unsupported-mode, full-2D requires n = 2");
  if (n_rho < 4) throw std::invalid_argument("build_grid: n_rho must be >= 4");
  if (mode == GridMode::Full2D) {
    if (n_phi < 8) throw std::invalid_argument("build_grid: n_phi must be >= 8");
    if (n_phi % 2 != 0)
      throw std::invalid_argument("build_grid: n_phi must be even (pole continuation)");
  }

  auto grid = std::make_shared<CapGrid>();
  CapGrid& g = const_cast<CapGrid&>(*grid);
  g.domain_ = domain;
  g.mode_ = mode;
  g.n_rho_ = n_rho;
  g.n_phi_ = mode == GridMode::Full2D ? n_phi : 1;
  g.d_rho_ = domain.theta / n_rho;
  g.d_phi_ = mode == GridMode::Full2D ? 2.0 * kPi / n_phi : 0.0;
  g.rho_ = Vector(n_rho);
  for (int i = 0; i < n_rho; ++i) g.rho_(i) = (i + 0.5) * g.d_rho_;

  const int nm1 = domain.n - 1;
  Vector cell_mass(n_rho); // int of sin^{n-1} over each radial cell
  for (int i = 0; i < n_rho; ++i)
    cell_mass(i) = sin_power_integral(nm1, i * g.d_rho_, (i + 1) * g.d_rho_);

  if (mode == GridMode::Full2D) {
    g.phi_ = Vector(n_phi);
    for (int j = 0; j < n_phi; ++j) g.phi_(j) = j * g.d_phi_;
    g.weights_ = Vector(n_rho * n_phi);
    for (int i = 0; i < n_rho; ++i)
      for (int j = 0; j < n_phi; ++j) g.weights_(i * n_phi + j) = cell_mass(i) * g.d_phi_;
    g.boundary_weights_ = Vector::Constant(n_phi, std::pow(std::sin(domain.theta), nm1) * g.d_phi_);
  } else {
    const Real shell = sphere_surface_area(nm1);
    g.weights_ = shell * cell_mass;
    g.boundary_weights_ = Vector::Constant(1, shell * std::pow(std::sin(domain.theta), nm1));
  }
  return grid;
}

bool CapGrid::same_grid(const CapGrid& other) const {
  return domain_.n == other.domain_.n && domain_.theta == other.domain_.theta &&
         mode_ == other.mode_ && n_rho_ == other.n_rho_ && n_phi_ == other.n_phi_;
}

Matrix SymMatrixField::node_matrix(int p) const {
  const int n = grid->dim();
  Matrix A = Matrix::Zero(n, n);
  if (grid->mode() == GridMode::Full2D) {
    A(0, 0) = comps(p, 0);
    A(0, 1) = A(1, 0) = comps(p, 1);
    A(1, 1) = comps(p, 2);
  } else {
    A(0, 0) = comps(p, 0);
    for (int i = 1; i < n; ++i) A(i, i) = comps(p, 1);
  }
  return A;
}

Vector SymMatrixField::node_eigenvalues(int p) const {
  const int n = grid->dim();
  Vector lam(n);
  if (grid->mode() == GridMode::Full2D) {
    const Real a = comps(p, 0), c = comps(p, 1), b = comps(p, 2);
    const Real mid = 0.5 * (a + b);
    const Real rad = std::hypot(0.5 * (a - b), c);
    lam(0) = mid - rad;
    lam(1) = mid + rad;
  } else {
    lam(0) = comps(p, 0);
    for (int i = 1; i < n; ++i) lam(i) = comps(p, 1);
    std::sort(lam.data(), lam.data() + n);
  }
  return lam;
}

Real SymMatrixField::min_eigenvalue(int p) const {
  if (grid->mode() == GridMode::Full2D) {
    const Real a = comps(p, 0), c = comps(p, 1), b = comps(p, 2);
    return 0.5 * (a + b) - std::hypot(0.5 * (a - b), c);
  }
  return std::min(comps(p, 0), comps(p, 1));
}

namespace {

using Entry = std::pair<int, Real>;
using Stencil = std::vector<Entry>;

void axpy(Stencil& dst, const Stencil& src, Real scale) {
  for (const auto& [q, v] : src) dst.emplace_back(q, v * scale);
}

// Weights of the Robin ghost value at rho = theta + d_rho/2 on the last three
// rings, from a cubic fit through ghost/B/B-1/B-2 constrained by
// p'(theta) = cot(theta) p(theta).
struct GhostWeights {
  Real g1, g2, g3;
};

GhostWeights robin_ghost_weights(Real d_rho, Real theta) {
  const Real dc = 0.5 * d_rho * (std::cos(theta) / std::sin(theta));
  const Real denom = 23.0 - 15.0 * dc;
  if (!(std::abs(denom) > 1e-8))
    throw std::invalid_argument("robin ghost: grid too coarse for this contact angle");
  return {(21.0 + 45.0 * dc) / denom, (3.0 - 15.0 * dc) / denom, -(1.0 - 3.0 * dc) / denom};
}

} // namespace

CovariantStencils::CovariantStencils(GridPtr grid, BoundaryClosure closure)
    : grid_(std::move(grid)), closure_(closure) {
  const CapGrid& g = *grid_;
  const int nr = g.n_rho();
  const int N = g.num_nodes();
  const Real dr = g.d_rho();
  const int B = nr - 1;

  const GhostWeights gw = robin_ghost_weights(dr, g.theta());

  const bool full = g.mode() == GridMode::Full2D;
  const int P = full ? g.n_phi() : 1;
  auto wrap = [P](int j) { return ((j % P) + P) % P; };

  // Nodal value at ring/column with the pole continuation folded in:
  // ring -1-m reflects to ring m with phi shifted by pi (Full2D) or
  // unchanged (axisymmetric). Rings beyond B are requested via ghost().
  auto value = [&](int ring, int j) -> Stencil {
    if (ring < 0) {
      const int m = -1 - ring;
      if (full) return {{g.node(m, wrap(j + P / 2)), 1.0}};
      return {{g.node(m, 0), 1.0}};
    }
    return {{g.node(ring, wrap(j)), 1.0}};
  };
  // Ghost value at rho = theta + d_rho/2 for the Robin closure.
  auto ghost = [&](int j) -> Stencil {
    return {{g.node(B, wrap(j)), gw.g1}, {g.node(B - 1, wrap(j)), gw.g2},
            {g.node(B - 2, wrap(j)), gw.g3}};
  };
  // phi derivative along a ring, fourth order (the pole rings amplify phi
  // truncation by 1/sin(rho), second order there would only give first
  // order pointwise for the m = 1 modes).
  auto dphi_at = [&](int ring, int j) -> Stencil {
    Stencil s;
    const Real w = 1.0 / (12.0 * g.d_phi());
    axpy(s, value(ring, j - 2), w);
    axpy(s, value(ring, j - 1), -8.0 * w);
    axpy(s, value(ring, j + 1), 8.0 * w);
    axpy(s, value(ring, j + 2), -w);
    return s;
  };
  auto d2phi_at = [&](int ring, int j) -> Stencil {
    Stencil s;
    const Real w = 1.0 / (12.0 * g.d_phi() * g.d_phi());
    axpy(s, value(ring, j - 2), -w);
    axpy(s, value(ring, j - 1), 16.0 * w);
    axpy(s, value(ring, j), -30.0 * w);
    axpy(s, value(ring, j + 1), 16.0 * w);
    axpy(s, value(ring, j + 2), -w);
    return s;
  };

  // rho derivative of any per-ring quantity (row(ring) must return its
  // stencil). Fourth order away from the boundary for the same reason as
  // dphi_at, the cot(rho) coefficient amplifies by 1/rho at the pole.
  auto d_rho_of = [&](int i, int j, auto&& row, auto&& ghost_row) -> Stencil {
    Stencil s;
    if (i <= B - 2) {
      const Real w = 1.0 / (12.0 * dr);
      axpy(s, row(i - 2, j), w);
      axpy(s, row(i - 1, j), -8.0 * w);
      axpy(s, row(i + 1, j), 8.0 * w);
      axpy(s, row(i + 2, j), -w);
    } else if (i == B - 1) {
      if (closure_ == BoundaryClosure::RobinGhost) {
        const Real w = 1.0 / (12.0 * dr);
        axpy(s, row(B - 3, j), w);
        axpy(s, row(B - 2, j), -8.0 * w);
        axpy(s, row(B, j), 8.0 * w);
        axpy(s, ghost_row(j), -w);
      } else {
        axpy(s, row(B, j), 1.0 / (2.0 * dr));
        axpy(s, row(B - 2, j), -1.0 / (2.0 * dr));
      }
    } else { // i == B
      if (closure_ == BoundaryClosure::RobinGhost) {
        axpy(s, ghost_row(j), 1.0 / (2.0 * dr));
        axpy(s, row(B - 1, j), -1.0 / (2.0 * dr));
      } else {
        const Real c[4] = {11.0, -18.0, 9.0, -2.0};
        for (int m = 0; m < 4; ++m) axpy(s, row(B - m, j), c[m] / (6.0 * dr));
      }
    }
    return s;
  };

  auto d_rho_at = [&](int i, int j) -> Stencil { return d_rho_of(i, j, value, ghost); };
  auto d_rhorho_at = [&](int i, int j) -> Stencil {
    Stencil s;
    if (i < B) {
      axpy(s, value(i + 1, j), 1.0 / (dr * dr));
      axpy(s, value(i, j), -2.0 / (dr * dr));
      axpy(s, value(i - 1, j), 1.0 / (dr * dr));
    } else if (closure_ == BoundaryClosure::RobinGhost) {
      axpy(s, ghost(j), 1.0 / (dr * dr));
      axpy(s, value(B, j), -2.0 / (dr * dr));
      axpy(s, value(B - 1, j), 1.0 / (dr * dr));
    } else {
      const Real c[4] = {2.0, -5.0, 4.0, -1.0};
      for (int m = 0; m < 4; ++m) axpy(s, value(B - m, j), c[m] / (dr * dr));
    }
    return s;
  };
  // rho derivative of the phi derivative (for the mixed component).
  auto ghost_dphi = [&](int j) -> Stencil {
    Stencil s;
    axpy(s, dphi_at(B, j), gw.g1);
    axpy(s, dphi_at(B - 1, j), gw.g2);
    axpy(s, dphi_at(B - 2, j), gw.g3);
    return s;
  };
  auto d_rho_dphi_at = [&](int i, int j) -> Stencil {
    return d_rho_of(i, j, dphi_at, ghost_dphi);
  };

  std::vector<Triplet> t_rr, t_rp, t_pp, t_gr, t_gp;
  auto emit = [](std::vector<Triplet>& out, int row, const Stencil& s) {
    for (const auto& [q, v] : s) out.emplace_back(row, q, v);
  };

  for (int i = 0; i < nr; ++i) {
    const Real cot = std::cos(g.rho(i)) / std::sin(g.rho(i));
    const Real sr = std::sin(g.rho(i));
    for (int j = 0; j < P; ++j) {
      const int p = g.node(i, j);
      emit(t_rr, p, d_rhorho_at(i, j));
      Stencil gr = d_rho_at(i, j);
      emit(t_gr, p, gr);
      if (full) {
        // phihat-phihat: d2_phi / sin^2 + cot(rho) d_rho
        Stencil pp;
        axpy(pp, d2phi_at(i, j), 1.0 / (sr * sr));
        axpy(pp, gr, cot);
        emit(t_pp, p, pp);
        // rho-phihat: (d_rho d_phi - cot(rho) d_phi) / sin(rho)
        Stencil rp = d_rho_dphi_at(i, j);
        axpy(rp, dphi_at(i, j), -cot);
        for (auto& e : rp) e.second /= sr;
        emit(t_rp, p, rp);
        // phihat gradient component
        Stencil gp = dphi_at(i, j);
        for (auto& e : gp) e.second /= sr;
        emit(t_gp, p, gp);
      } else {
        // tangential component: cot(rho) d_rho, repeated n-1 times
        Stencil tt;
        axpy(tt, gr, cot);
        emit(t_pp, p, tt);
      }
    }
  }

  auto compress = [N](const std::vector<Triplet>& trips) {
    SparseMatrix m(N, N);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
  };
  if (full) {
    hessian_ = {compress(t_rr), compress(t_rp), compress(t_pp)};
    grad_phihat_ = compress(t_gp);
  } else {
    hessian_ = {compress(t_rr), compress(t_pp)};
  }
  grad_rho_ = compress(t_gr);
}

int CovariantStencils::multiplicity(int c) const {
  if (grid_->mode() == GridMode::Full2D) return c == 1 ? 2 : 1;
  return c == 0 ? 1 : grid_->dim() - 1;
}

bool CovariantStencils::is_diagonal_component(int c) const {
  if (grid_->mode() == GridMode::Full2D) return c != 1;
  return true;
}

ScalarField ell_field(const GridPtr& grid) {
  ScalarField out(grid);
  const Real ct = std::cos(grid->theta());
  for (int p = 0; p < grid->num_nodes(); ++p)
    out.values(p) = 1.0 - ct * std::cos(grid->rho_of(p));
  return out;
}

std::vector<ScalarField> kernel_fields(const GridPtr& grid) {
  if (grid->mode() != GridMode::Full2D) return {};
  std::vector<ScalarField> fields;
  for (int alpha = 0; alpha < 2; ++alpha) {
    ScalarField v(grid);
    for (int p = 0; p < grid->num_nodes(); ++p) {
      const Real sr = std::sin(grid->rho_of(p));
      const Real ph = grid->phi_of(p);
      v.values(p) = sr * (alpha == 0 ? std::cos(ph) : std::sin(ph));
    }
    fields.push_back(std::move(v));
  }
  return fields;
}

Vector embed(const CapDomain& domain, Real rho, const Eigen::Ref<const Vector>& omega) {
  if (omega.size() != domain.n)
    throw std::invalid_argument("embed: omega must have n components");
  Vector x(domain.n + 1);
  x.head(domain.n) = std::sin(rho) * omega;
  x(domain.n) = std::cos(rho) - std::cos(domain.theta);
  return x;
}

Eigen::Vector3d embed_full(Real theta, Real rho, Real phi) {
  return {std::sin(rho) * std::cos(phi), std::sin(rho) * std::sin(phi),
          std::cos(rho) - std::cos(theta)};
}

Eigen::Vector2d embed_meridian(Real theta, Real rho) {
  return {std::sin(rho), std::cos(rho) - std::cos(theta)};
}

Real integrate(const ScalarField& field) {
  return field.grid->weights().dot(field.values);
}

Real weighted_inner(const ScalarField& a, const ScalarField& b) {
  if (!a.grid->same_grid(*b.grid))
    throw std::invalid_argument("weighted_inner: fields live on different grids");
  return (a.grid->weights().array() * a.values.array() * b.values.array()).sum();
}

namespace {

// Cubic one-sided fit through the last four rings, evaluated at the boundary
// face rho = theta (nodes sit at distances d, 3d, 5d, 7d inside, d = d_rho/2).
const Real kFaceValue[4] = {35.0 / 16.0, -35.0 / 16.0, 21.0 / 16.0, -5.0 / 16.0};
const Real kFaceDeriv[4] = {71.0 / 48.0, -141.0 / 48.0, 93.0 / 48.0, -23.0 / 48.0};

Vector face_combination(const ScalarField& field, const Real coeff[4], Real scale) {
  const CapGrid& g = *field.grid;
  const int B = g.n_rho() - 1;
  const int nb = g.num_boundary();
  Vector out = Vector::Zero(nb);
  for (int b = 0; b < nb; ++b)
    for (int m = 0; m < 4; ++m) out(b) += coeff[m] * field.values(g.node(B - m, b));
  return out * scale;
}

} // namespace

Vector boundary_values(const ScalarField& field) {
  return face_combination(field, kFaceValue, 1.0);
}

Vector boundary_normal_derivative(const ScalarField& field) {
  const Real d = 0.5 * field.grid->d_rho();
  return face_combination(field, kFaceDeriv, 1.0 / d);
}

Real integrate_boundary(const ScalarField& field) {
  return field.grid->boundary_weights().dot(boundary_values(field));
}

SymMatrixField covariant_hessian(const ScalarField& h, BoundaryClosure closure) {
  CovariantStencils st(h.grid, closure);
  SymMatrixField out;
  out.grid = h.grid;
  const int nc = st.num_hessian_components();
  out.comps.resize(h.grid->num_nodes(), nc);
  for (int c = 0; c < nc; ++c) out.comps.col(c) = st.hessian(c) * h.values;
  return out;
}

Matrix covariant_gradient(const ScalarField& h, BoundaryClosure closure) {
  CovariantStencils st(h.grid, closure);
  const bool full = h.grid->mode() == GridMode::Full2D;
  Matrix out(h.grid->num_nodes(), full ? 2 : 1);
  out.col(0) = st.grad_rho() * h.values;
  if (full) out.col(1) = st.grad_phihat() * h.values;
  return out;
}

} // namespace capcmk
