#pragma once

#include <string>

#include "capcmk/cap_grid.hpp"

// ScalarField file format: one sidecar header line
//   # n=<n> theta=<radians> n_rho=<..> n_phi=<..> mode=<full|axisymmetric>
// then a CSV header `rho,phi,value` (axisymmetric: `rho,value`) and rows in
// row-major grid order. Doubles are written with 17 significant digits so
// reloading is bit-exact.

namespace capcmk {

void write_scalar_field(const std::string& path, const ScalarField& field);
ScalarField read_scalar_field(const std::string& path);

} // namespace capcmk
