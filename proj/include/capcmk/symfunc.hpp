#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "capcmk/types.hpp"

// Elementary symmetric functions sigma_k on eigenvalue vectors and symmetric
// matrices, with first and second derivatives in the full-entry convention
// (every A_ij treated as an independent variable), plus Garding cone tests
// and the Newton-MacLaurin inequality.

namespace capcmk {

inline Real binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  Real out = 1.0;
  for (int i = 1; i <= k; ++i) out *= Real(n - k + i) / Real(i);
  return out;
}

/// All sigma_0..sigma_n of an eigenvalue vector by the stable one-pass
/// recurrence e_j += lambda * e_{j-1}.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
sigma_all(const Eigen::MatrixBase<Derived>& lambda) {
  using Scalar = typename Derived::Scalar;
  const int n = static_cast<int>(lambda.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e(n + 1);
  e.setZero();
  e(0) = Scalar(1);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j >= 1; --j) e(j) += lambda(i) * e(j - 1);
  return e;
}

/// sigma_k of an eigenvalue vector; sigma_0 = 1 and sigma_k = 0 for k > n.
template <typename Derived>
typename Derived::Scalar sigma_k(const Eigen::MatrixBase<Derived>& lambda, int k) {
  using Scalar = typename Derived::Scalar;
  if (k < 0) throw std::invalid_argument("sigma_k: negative order");
  const int n = static_cast<int>(lambda.size());
  if (k == 0) return Scalar(1);
  if (k > n) return Scalar(0);
  return sigma_all(lambda)(k);
}

namespace detail {

// Visits all k-subsets of {0..n-1}.
template <typename Fn>
void for_each_subset(int n, int k, Fn&& fn) {
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

} // namespace detail

/// sigma_k of a symmetric matrix: sum of k x k principal minors for n <= 4,
/// eigenvalue route for larger n (the solver itself only needs n <= 4).
template <typename Derived>
typename Derived::Scalar sigma_k_matrix(const Eigen::MatrixBase<Derived>& A, int k) {
  using Scalar = typename Derived::Scalar;
  if (k < 0) throw std::invalid_argument("sigma_k_matrix: negative order");
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n) throw std::invalid_argument("sigma_k_matrix: matrix not square");
  if (k == 0) return Scalar(1);
  if (k > n) return Scalar(0);
  if (n <= 4) {
    Scalar sum(0);
    detail::for_each_subset(n, k, [&](const std::vector<int>& idx) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sub(k, k);
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) sub(r, c) = A(idx[r], idx[c]);
      sum += sub.determinant();
    });
    return sum;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(
      A.template selfadjointView<Eigen::Lower>());
  return sigma_k(es.eigenvalues(), k);
}

/// Gradient matrix sigma_{k-1}^{ij}(A) = d sigma_k / d A_ij at a symmetric A,
/// assembled from the matrix polynomial
///   sum_{p=0}^{k-1} (-1)^p sigma_{k-1-p}(A) A^p
/// which avoids any eigenvalue decomposition.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
sigma_k_gradient(const Eigen::MatrixBase<Derived>& A, int k) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const int n = static_cast<int>(A.rows());
  if (k < 1 || k > n) throw std::invalid_argument("sigma_k_gradient: order out of range");
  Mat grad = Mat::Zero(n, n);
  Mat power = Mat::Identity(n, n);
  Scalar sign(1);
  for (int p = 0; p < k; ++p) {
    grad += sign * sigma_k_matrix(A, k - 1 - p) * power;
    power = (power * A).eval();
    sign = -sign;
  }
  return grad;
}

/// Second derivatives d^2 sigma_k / dA_ij dA_kl, stored as an n^2 x n^2 table
/// indexed by flattened pairs (i*n+j, k*n+l).
template <typename Scalar>
class SigmaHessianT {
public:
  SigmaHessianT(int n, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> flat)
      : n_(n), flat_(std::move(flat)) {}

  Scalar operator()(int i, int j, int k, int l) const { return flat_(i * n_ + j, k * n_ + l); }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& flattened() const { return flat_; }
  int dim() const { return n_; }

private:
  int n_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> flat_;
};

using SigmaHessian = SigmaHessianT<Real>;

template <typename Derived>
SigmaHessianT<typename Derived::Scalar>
sigma_k_hessian(const Eigen::MatrixBase<Derived>& A, int k) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (k < 0) throw std::invalid_argument("sigma_k_hessian: negative order");
  const int n = static_cast<int>(A.rows());
  Mat flat = Mat::Zero(n * n, n * n);
  if (k < 2 || k > n) return SigmaHessianT<Scalar>(n, std::move(flat));

  std::vector<Mat> powers(k);
  powers[0] = Mat::Identity(n, n);
  for (int p = 1; p < k; ++p) powers[p] = powers[p - 1] * A;
  std::vector<Scalar> sig(k);
  for (int q = 0; q < k; ++q) sig[q] = sigma_k_matrix(A, q);
  // grads[q] = gradient of sigma_q; grads[0] = 0.
  std::vector<Mat> grads(k);
  grads[0] = Mat::Zero(n, n);
  for (int q = 1; q < k; ++q) grads[q] = sigma_k_gradient(A, q);

  Scalar sign(1);
  for (int p = 0; p < k; ++p) {
    const Mat& g = grads[k - 1 - p];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            Scalar term = g(a, b) * powers[p](i, j);
            for (int m = 0; m < p; ++m)
              term += sig[k - 1 - p] * powers[m](j, a) * powers[p - 1 - m](b, i);
            flat(i * n + j, a * n + b) += sign * term;
          }
    sign = -sign;
  }
  return SigmaHessianT<Scalar>(n, std::move(flat));
}

/// True iff sigma_i(lambda) > eps * scale^i for all 1 <= i <= k, with
/// scale = max |lambda_j|. The open cone gets the margin eps = 1e-10.
template <typename Derived>
bool gamma_cone_member(const Eigen::MatrixBase<Derived>& lambda, int k, Real eps = 1e-10) {
  const int n = static_cast<int>(lambda.size());
  if (k < 1 || k > n) throw std::invalid_argument("gamma_cone_member: order out of range");
  const Real scale = lambda.cwiseAbs().maxCoeff();
  if (!(scale > 0)) return false;
  auto sig = sigma_all(lambda);
  Real bound = 1.0;
  for (int i = 1; i <= k; ++i) {
    bound *= scale;
    if (!(sig(i) > eps * bound)) return false;
  }
  return true;
}

/// Generalized Newton-MacLaurin inequality
///   (sigma_k/C(n,k) / (sigma_l/C(n,l)))^{1/(k-l)}
///     <= (sigma_r/C(n,r) / (sigma_s/C(n,s)))^{1/(r-s)}
/// for lambda in Gamma_k, k > l >= 0, r > s >= 0, k >= r, l >= s.
/// If equality is non-null it reports the constant-spectrum equality branch
/// (relative gap below 1e-9).
template <typename Derived>
bool newton_maclaurin_check(const Eigen::MatrixBase<Derived>& lambda, int k, int l, int r, int s,
                            bool* equality = nullptr, Real tol = 1e-12) {
  const int n = static_cast<int>(lambda.size());
  if (!(k > l && l >= 0 && r > s && s >= 0 && k >= r && l >= s && k <= n))
    throw std::invalid_argument("newton_maclaurin_check: bad index ranges");
  if (!gamma_cone_member(lambda, k))
    throw std::domain_error("newton_maclaurin_check: lambda not in Gamma_k");
  auto sig = sigma_all(lambda);
  auto normalized = [&](int i) { return sig(i) / binomial(n, i); };
  const Real lhs = std::pow(normalized(k) / normalized(l), 1.0 / Real(k - l));
  const Real rhs = std::pow(normalized(r) / normalized(s), 1.0 / Real(r - s));
  if (equality) *equality = std::abs(lhs - rhs) <= 1e-9 * std::max(std::abs(lhs), std::abs(rhs));
  return lhs <= rhs + tol * std::max(Real(1), std::abs(rhs));
}

/// Sorted eigenvalues of a symmetric matrix (ascending).
inline Vector spectrum(const Eigen::Ref<const Matrix>& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  return es.eigenvalues();
}

} // namespace capcmk
