#include "capcmk/field_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "capcmk/errors.hpp"

namespace capcmk {

namespace {

std::string fmt(Real x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

} // namespace

void write_scalar_field(const std::string& path, const ScalarField& field) {
  const CapGrid& g = *field.grid;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_scalar_field: cannot open " + path);
  const bool full = g.mode() == GridMode::Full2D;
  os << "# n=" << g.dim() << " theta=" << fmt(g.theta()) << " n_rho=" << g.n_rho()
     << " n_phi=" << g.n_phi() << " mode=" << (full ? "full" : "axisymmetric") << "\n";
  os << (full ? "rho,phi,value" : "rho,value") << "\n";
  for (int p = 0; p < g.num_nodes(); ++p) {
    os << fmt(g.rho_of(p));
    if (full) os << "," << fmt(g.phi_of(p));
    os << "," << fmt(field.values(p)) << "\n";
  }
  if (!os) throw std::runtime_error("write_scalar_field: write failed for " + path);
}

ScalarField read_scalar_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidDataError("read_scalar_field: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
    throw InvalidDataError("read_scalar_field: missing sidecar header in " + path);

  int n = 0, n_rho = 0, n_phi = 0;
  Real theta = 0.0;
  std::string mode_str;
  {
    std::istringstream ss(line.substr(2));
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "n") n = std::stoi(val);
      else if (key == "theta") theta = std::stod(val);
      else if (key == "n_rho") n_rho = std::stoi(val);
      else if (key == "n_phi") n_phi = std::stoi(val);
      else if (key == "mode") mode_str = val;
    }
  }
  if (mode_str != "full" && mode_str != "axisymmetric")
    throw InvalidDataError("read_scalar_field: bad mode in sidecar of " + path);
  const GridMode mode = mode_str == "full" ? GridMode::Full2D : GridMode::Axisymmetric;
  auto grid = CapGrid::build({n, theta}, n_rho, n_phi, mode);

  if (!std::getline(is, line)) throw InvalidDataError("read_scalar_field: missing CSV header");
  ScalarField field(grid);
  int p = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (p >= grid->num_nodes())
      throw InvalidDataError("read_scalar_field: too many rows in " + path);
    const auto last = line.rfind(',');
    if (last == std::string::npos) throw InvalidDataError("read_scalar_field: bad row in " + path);
    field.values(p++) = std::stod(line.substr(last + 1));
  }
  if (p != grid->num_nodes())
    throw InvalidDataError("read_scalar_field: row count does not match the grid in " + path);
  return field;
}

} // namespace capcmk
