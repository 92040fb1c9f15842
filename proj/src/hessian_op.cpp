#include "capcmk/hessian_op.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "capcmk/parallel.hpp"
#include "capcmk/symfunc.hpp"

namespace capcmk {

namespace {

// sigma_i and entry-derivatives of W at a single node, specialized for the
// two storage layouts. Full2D nodes hold (a, c, b) = (W_rr, W_rp, W_pp);
// axisymmetric nodes hold (a, b) with b repeated n-1 times on the diagonal.

Real node_sigma(const CapGrid& g, const Eigen::Ref<const Vector>& comps, int k) {
  if (k == 0) return 1.0;
  if (k > g.dim()) return 0.0;
  if (g.mode() == GridMode::Full2D) {
    const Real a = comps(0), c = comps(1), b = comps(2);
    return k == 1 ? a + b : a * b - c * c;
  }
  const int n = g.dim();
  const Real a = comps(0), b = comps(1);
  return binomial(n - 1, k) * std::pow(b, k) + a * binomial(n - 1, k - 1) * std::pow(b, k - 1);
}

// d sigma_k / d W_c per distinct component (off-diagonal entries carry their
// multiplicity in the assembly, not here).
void node_sigma_grad(const CapGrid& g, const Eigen::Ref<const Vector>& comps, int k, Real* out) {
  if (g.mode() == GridMode::Full2D) {
    const Real a = comps(0), c = comps(1), b = comps(2);
    if (k == 1) {
      out[0] = 1.0;
      out[1] = 0.0;
      out[2] = 1.0;
    } else {
      out[0] = b;
      out[1] = -c;
      out[2] = a;
    }
    return;
  }
  const int n = g.dim();
  const Real a = comps(0), b = comps(1);
  out[0] = binomial(n - 1, k - 1) * std::pow(b, k - 1);
  out[1] = binomial(n - 2, k - 1) * std::pow(b, k - 1) +
           (k >= 2 ? a * binomial(n - 2, k - 2) * std::pow(b, k - 2) : 0.0);
}

bool node_in_gamma(const CapGrid& g, const Eigen::Ref<const Vector>& comps, int k, Real eps,
                   Real* margin) {
  Real scale;
  if (g.mode() == GridMode::Full2D) {
    const Real a = comps(0), c = comps(1), b = comps(2);
    const Real mid = 0.5 * (a + b), rad = std::hypot(0.5 * (a - b), c);
    scale = std::max(std::abs(mid - rad), std::abs(mid + rad));
  } else {
    scale = std::max(std::abs(comps(0)), std::abs(comps(1)));
  }
  if (!(scale > 0)) {
    if (margin) *margin = 0.0;
    return false;
  }
  Real worst = std::numeric_limits<Real>::infinity();
  Real bound = 1.0;
  for (int i = 1; i <= k; ++i) {
    bound *= scale;
    worst = std::min(worst, node_sigma(g, comps, i) - eps * bound);
  }
  if (margin) *margin = worst;
  return worst > 0.0;
}

void check_problem(const ScalarField& h, const ScalarField& f, int k) {
  if (!h.grid->same_grid(*f.grid))
    throw std::invalid_argument("residual: h and f live on different grids");
  if (k < 1 || k > h.grid->dim())
    throw std::invalid_argument("residual: curvature order k out of range");
  const Real fmax = f.values.maxCoeff();
  if (!(fmax > 0) || f.values.minCoeff() <= 1e-12 * fmax)
    throw InvalidDataError("invalid-data: f must be strictly positive");
}

} // namespace

// The pole-ring stencil coefficients grow like (d_phi sin rho)^{-2}; plain
// accumulation leaves cancellation noise of order eps * max|coeff|, which
// puts a floor under the achievable residual. Compensation brings the
// product back to O(eps) absolutely.
Vector compensated_product(const Eigen::SparseMatrix<Real, Eigen::RowMajor>& m, const Vector& x) {
  Vector out(m.rows());
  for (int r = 0; r < m.outerSize(); ++r) {
    Real sum = 0.0, comp = 0.0;
    for (Eigen::SparseMatrix<Real, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
      const Real term = it.value() * x(it.col());
      const Real t = sum + term;
      comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
      sum = t;
    }
    out(r) = sum + comp;
  }
  return out;
}

HessianOperator::HessianOperator(GridPtr grid) : grid_(std::move(grid)) {
  stencils_ = std::make_unique<CovariantStencils>(grid_, BoundaryClosure::RobinGhost);
  const int N = grid_->num_nodes();
  SparseMatrix eye(N, N);
  eye.setIdentity();
  for (int c = 0; c < stencils_->num_hessian_components(); ++c) {
    amaps_.push_back(stencils_->is_diagonal_component(c) ? SparseMatrix(stencils_->hessian(c) + eye)
                                                         : stencils_->hessian(c));
    amaps_.back().makeCompressed();
    amaps_rowwise_.emplace_back(amaps_.back());

    // Exact row sums for the difference-form evaluation: derivative stencils
    // annihilate constants, so a row away from the Robin ghost sums to the
    // identity contribution exactly. Ghost rows get a compensated sum of the
    // stored coefficients (their magnitudes are not pole-amplified).
    Vector sums(N);
    const Real interior = stencils_->is_diagonal_component(c) ? 1.0 : 0.0;
    for (int p = 0; p < N; ++p) {
      if (grid_->i_of(p) >= grid_->n_rho() - 2) {
        Real sum = 0.0, comp = 0.0;
        for (Eigen::SparseMatrix<Real, Eigen::RowMajor>::InnerIterator it(amaps_rowwise_.back(), p);
             it; ++it) {
          const Real t = sum + it.value();
          comp += std::abs(sum) >= std::abs(it.value()) ? (sum - t) + it.value()
                                                        : (it.value() - t) + sum;
          sum = t;
        }
        sums(p) = sum + comp;
      } else {
        sums(p) = interior;
      }
    }
    rowsums_.push_back(std::move(sums));
  }
  kernels_ = kernel_fields(grid_);
}

SymMatrixField HessianOperator::W(const ScalarField& h) const {
  if (!h.grid->same_grid(*grid_)) throw std::invalid_argument("W: field grid mismatch");
  SymMatrixField out;
  out.grid = grid_;
  const int N = grid_->num_nodes();
  const int nc = static_cast<int>(amaps_.size());
  out.comps.resize(N, nc);
  // difference form: sum_q c_q (h_q - h_p) + S_p h_p. Coefficient rounding
  // then multiplies local differences, not values, which keeps the pole
  // rings from flooring the residual near 1e-10.
  for (int c = 0; c < nc; ++c) {
    const auto& m = amaps_rowwise_[c];
    const Vector& S = rowsums_[c];
    for (int p = 0; p < N; ++p) {
      const Real hp = h.values(p);
      Real sum = 0.0, comp = 0.0;
      for (Eigen::SparseMatrix<Real, Eigen::RowMajor>::InnerIterator it(m, p); it; ++it) {
        const Real term = it.value() * (h.values(it.col()) - hp);
        const Real t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
      }
      out.comps(p, c) = (sum + comp) + S(p) * hp;
    }
  }
  return out;
}

ScalarField HessianOperator::sigma_of_W(const SymMatrixField& Wf, int k) const {
  ScalarField out(grid_);
  const int N = grid_->num_nodes();
  parallel_for(N, [&](int lo, int hi) {
    for (int p = lo; p < hi; ++p) out.values(p) = node_sigma(*grid_, Wf.comps.row(p), k);
  });
  return out;
}

ScalarField HessianOperator::residual(const ScalarField& h, const ScalarField& f, int k,
                                      ResidualForm form) const {
  check_problem(h, f, k);
  SymMatrixField Wf = W(h);
  ScalarField out = sigma_of_W(Wf, k);
  if (form == ResidualForm::Raw) {
    out.values -= f.values;
  } else {
    const Real inv = 1.0 / k;
    for (int p = 0; p < out.values.size(); ++p)
      out.values(p) = std::pow(std::max(out.values(p), 0.0), inv) - std::pow(f.values(p), inv);
  }
  return out;
}

SparseMatrix HessianOperator::jacobian(const SymMatrixField& Wf, int k, ResidualForm form) const {
  const int N = grid_->num_nodes();
  const int nc = static_cast<int>(amaps_.size());
  Matrix gcomp(N, nc);
  parallel_for(N, [&](int lo, int hi) {
    Real g[3];
    for (int p = lo; p < hi; ++p) {
      node_sigma_grad(*grid_, Wf.comps.row(p), k, g);
      Real scale = 1.0;
      if (form == ResidualForm::Normalized) {
        const Real sk = node_sigma(*grid_, Wf.comps.row(p), k);
        scale = std::pow(sk, (1.0 - k) / k) / k;
      }
      for (int c = 0; c < nc; ++c) gcomp(p, c) = scale * g[c];
    }
  });
  SparseMatrix jac(N, N);
  for (int c = 0; c < nc; ++c) {
    const Real mult = stencils_->multiplicity(c);
    jac += SparseMatrix((mult * gcomp.col(c)).asDiagonal() * amaps_[c]);
  }
  jac.makeCompressed();
  return jac;
}

int HessianOperator::gamma_violation(const SymMatrixField& Wf, int k, Real gamma_eps) const {
  const int N = grid_->num_nodes();
  int worst_node = -1;
  Real worst = 0.0;
  for (int p = 0; p < N; ++p) {
    Real margin;
    if (!node_in_gamma(*grid_, Wf.comps.row(p), k, gamma_eps, &margin)) {
      if (worst_node < 0 || margin < worst) {
        worst_node = p;
        worst = margin;
      }
    }
  }
  return worst_node;
}

std::pair<Real, int> HessianOperator::min_eigenvalue(const SymMatrixField& Wf) const {
  Real best = std::numeric_limits<Real>::infinity();
  int node = -1;
  for (int p = 0; p < grid_->num_nodes(); ++p) {
    const Real lam = Wf.min_eigenvalue(p);
    if (lam < best) {
      best = lam;
      node = p;
    }
  }
  return {best, node};
}

LinearSystem HessianOperator::linearize(const ScalarField& h, int k, ResidualForm form,
                                        Real gamma_eps) const {
  SymMatrixField Wf = W(h);
  const int bad = gamma_violation(Wf, k, gamma_eps);
  if (bad >= 0) {
    std::ostringstream msg;
    msg << "ellipticity-lost: spectrum of W leaves Gamma_" << k << " at node " << bad << " (rho="
        << grid_->rho_of(bad) << ", phi=" << grid_->phi_of(bad) << ", spectrum:";
    Vector lam = Wf.node_eigenvalues(bad);
    for (int i = 0; i < lam.size(); ++i) msg << " " << lam(i);
    msg << ")";
    throw EllipticityLostError(msg.str(), bad);
  }

  const int N = grid_->num_nodes();
  const int m = static_cast<int>(kernels_.size());
  SparseMatrix jac = jacobian(Wf, k, form);

  LinearSystem sys;
  sys.num_nodes = N;
  sys.num_multipliers = m;
  sys.matrix.resize(N + m, N + m);
  std::vector<Triplet> trips;
  trips.reserve(jac.nonZeros() + 2 * m * N);
  for (int col = 0; col < jac.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(jac, col); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), col, it.value());
  const Vector& w = grid_->weights();
  for (int alpha = 0; alpha < m; ++alpha) {
    const Vector& v = kernels_[alpha].values;
    for (int p = 0; p < N; ++p) {
      trips.emplace_back(p, N + alpha, v(p));        // multiplier column
      trips.emplace_back(N + alpha, p, w(p) * v(p)); // constraint row
    }
  }
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();
  sys.rhs = Vector::Zero(N + m);
  return sys;
}

SymMatrixField build_W(const ScalarField& h, BoundaryClosure closure) {
  if (closure == BoundaryClosure::RobinGhost) return HessianOperator(h.grid).W(h);
  SymMatrixField out = covariant_hessian(h, closure);
  const int nc = static_cast<int>(out.comps.cols());
  CovariantStencils st(h.grid, closure);
  for (int c = 0; c < nc; ++c)
    if (st.is_diagonal_component(c)) out.comps.col(c) += h.values;
  return out;
}

ScalarField residual(const ScalarField& h, const ScalarField& f, int k, ResidualForm form) {
  return HessianOperator(h.grid).residual(h, f, k, form);
}

LinearSystem linearize(const ScalarField& h, int k, ResidualForm form) {
  return HessianOperator(h.grid).linearize(h, k, form);
}

Real robin_defect(const ScalarField& h) {
  const Real cot = std::cos(h.grid->theta()) / std::sin(h.grid->theta());
  Vector val = boundary_values(h);
  Vector der = boundary_normal_derivative(h);
  return (der - cot * val).cwiseAbs().maxCoeff();
}

SupportField make_support(ScalarField h) {
  SupportField s;
  s.robin_defect = robin_defect(h);
  s.h = std::move(h);
  return s;
}

Vector orthogonality_defect(const ScalarField& g) {
  Vector out = Vector::Zero(g.grid->dim());
  auto vs = kernel_fields(g.grid);
  for (int alpha = 0; alpha < static_cast<int>(vs.size()); ++alpha)
    out(alpha) = weighted_inner(g, vs[alpha]);
  return out;
}

} // namespace capcmk
