#pragma once

#include <map>
#include <string>

#include "capcmk/cap_grid.hpp"
#include "capcmk/solver.hpp"

// Run configuration: flat TOML-style `key = value` sections. Angles are
// always radians.
//
//   [problem]
//   n = 2
//   k = 1
//   theta = 1.0471975511965976
//   mode = "full"            # full | axisymmetric
//   n_rho = 128
//   n_phi = 128
//
//   [f]
//   source = "builtin"       # builtin | csv | manufactured_h
//   name = "constant"        # constant | manufactured | radial
//   value = 2.0              # constant
//   eps = 0.05               # manufactured bump amplitude
//   coeffs = "1.0,0.5"       # radial: f = sum_m c_m cos^m(rho)
//   path = "field.csv"       # csv / manufactured_h sources
//
//   [solver]                 # optional overrides, see SolverSettings
//   tol_newton_rel = 1e-10
//   form = "normalized"      # normalized | raw
//
//   [output]
//   dir = "out"
//   write_mesh = true
//   write_vertex_csv = true

namespace capcmk {

struct RunConfig {
  CapDomain domain;
  GridMode mode = GridMode::Full2D;
  int n_rho = 0, n_phi = 0;
  int k = 1;

  std::string f_source;          // builtin | csv | manufactured_h
  std::string f_name;            // constant | manufactured | radial
  Real f_value = 1.0;            // constant
  Real f_eps = 0.05;             // manufactured
  std::vector<Real> f_coeffs;    // radial
  std::string f_path;            // csv / manufactured_h

  SolverSettings settings;

  std::string out_dir = "out";
  bool write_mesh = true;
  bool write_vertex_csv = true;

  // raw sections for the echo written next to the solution
  std::map<std::string, std::map<std::string, std::string>> raw;
};

RunConfig parse_config(const std::string& path);
void write_config(const std::string& path, const RunConfig& config);

GridPtr build_grid(const RunConfig& config);

/// Materializes the f data source on the grid. For `manufactured` the
/// analytic forward data is returned and the reference solution is written
/// to *h_star when requested.
ScalarField build_f(const RunConfig& config, const GridPtr& grid, ScalarField* h_star = nullptr);

} // namespace capcmk
