#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace capcmk {

using Real         = double;
using Vector       = Eigen::VectorXd;
using Matrix       = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<Real>;
using Triplet      = Eigen::Triplet<Real>;

constexpr Real kPi = 3.14159265358979323846;

} // namespace capcmk
