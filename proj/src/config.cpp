#include "capcmk/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "capcmk/errors.hpp"
#include "capcmk/field_io.hpp"
#include "capcmk/symfunc.hpp"

namespace capcmk {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

class Section {
public:
  Section(const RunConfig& cfg, const std::string& name) : name_(name) {
    auto it = cfg.raw.find(name);
    if (it != cfg.raw.end()) kv_ = &it->second;
  }
  bool has(const std::string& key) const { return kv_ && kv_->count(key); }
  std::string str(const std::string& key, const std::string& fallback = "") const {
    return has(key) ? kv_->at(key) : fallback;
  }
  Real num(const std::string& key, Real fallback) const {
    if (!has(key)) return fallback;
    try {
      return std::stod(kv_->at(key));
    } catch (...) {
      throw InvalidDataError("config: [" + name_ + "] " + key + " is not a number");
    }
  }
  int integer(const std::string& key, int fallback) const {
    return static_cast<int>(num(key, fallback));
  }
  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = kv_->at(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw InvalidDataError("config: [" + name_ + "] " + key + " must be true or false");
  }

private:
  std::string name_;
  const std::map<std::string, std::string>* kv_ = nullptr;
};

} // namespace

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidDataError("config: cannot open " + path);

  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw InvalidDataError("config: malformed section header at line " +
                               std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidDataError("config: expected key = value at line " + std::to_string(lineno));
    cfg.raw[section][trim(line.substr(0, eq))] = unquote(trim(line.substr(eq + 1)));
  }

  Section problem(cfg, "problem");
  cfg.domain.n = problem.integer("n", 2);
  cfg.domain.theta = problem.num("theta", kPi / 3);
  if (!(cfg.domain.theta > 0 && cfg.domain.theta < kPi))
    throw InvalidDataError("config: theta must lie in (0, pi) radians");
  const std::string mode = problem.str("mode", "full");
  if (mode == "full") cfg.mode = GridMode::Full2D;
  else if (mode == "axisymmetric") cfg.mode = GridMode::Axisymmetric;
  else throw InvalidDataError("config: mode must be full or axisymmetric");
  cfg.n_rho = problem.integer("n_rho", 64);
  cfg.n_phi = problem.integer("n_phi", cfg.mode == GridMode::Full2D ? 64 : 1);
  cfg.k = problem.integer("k", 1);

  Section fsec(cfg, "f");
  cfg.f_source = fsec.str("source", "builtin");
  cfg.f_name = fsec.str("name", "constant");
  cfg.f_value = fsec.num("value", 1.0);
  cfg.f_eps = fsec.num("eps", 0.05);
  cfg.f_path = fsec.str("path", "");
  if (fsec.has("coeffs")) {
    std::istringstream ss(fsec.str("coeffs"));
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.f_coeffs.push_back(std::stod(trim(tok)));
  }
  if (cfg.f_source != "builtin" && cfg.f_source != "csv" && cfg.f_source != "manufactured_h")
    throw InvalidDataError("config: f source must be builtin, csv or manufactured_h");
  if (cfg.f_source != "builtin" && cfg.f_path.empty())
    throw InvalidDataError("config: f source '" + cfg.f_source + "' needs a path");

  Section solver(cfg, "solver");
  SolverSettings& s = cfg.settings;
  s.tol_newton_rel = solver.num("tol_newton_rel", s.tol_newton_rel);
  s.max_newton = solver.integer("max_newton", s.max_newton);
  s.max_halvings = solver.integer("max_halvings", s.max_halvings);
  s.t_step0 = solver.num("homotopy_step0", s.t_step0);
  s.t_growth = solver.num("homotopy_growth", s.t_growth);
  s.t_floor = solver.num("homotopy_floor", s.t_floor);
  s.ortho_tol_rel = solver.num("ortho_tol_rel", s.ortho_tol_rel);
  s.convexity_eps_rel = solver.num("convexity_eps_rel", s.convexity_eps_rel);
  const std::string form = solver.str("form", "normalized");
  if (form == "normalized") s.form = ResidualForm::Normalized;
  else if (form == "raw") s.form = ResidualForm::Raw;
  else throw InvalidDataError("config: solver form must be normalized or raw");

  Section output(cfg, "output");
  cfg.out_dir = output.str("dir", "out");
  cfg.write_mesh = output.flag("write_mesh", true);
  cfg.write_vertex_csv = output.flag("write_vertex_csv", true);
  return cfg;
}

void write_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("config: cannot write " + path);
  for (const auto& [section, kv] : cfg.raw) {
    os << "[" << section << "]\n";
    for (const auto& [key, value] : kv) os << key << " = " << value << "\n";
    os << "\n";
  }
}

GridPtr build_grid(const RunConfig& cfg) {
  return CapGrid::build(cfg.domain, cfg.n_rho, cfg.n_phi, cfg.mode);
}

namespace {

ScalarField manufactured_reference(const GridPtr& grid, Real eps) {
  ScalarField h = ell_field(grid);
  const Real theta = grid->theta();
  for (int p = 0; p < grid->num_nodes(); ++p) {
    const Real c = std::cos(kPi * grid->rho_of(p) / (2.0 * theta));
    h.values(p) *= 1.0 + eps * c * c;
  }
  return h;
}

// Forward data for the manufactured reference from closed-form derivatives
// of ell (1 + eps cos^2(pi rho / (2 theta))).
ScalarField manufactured_forward(const GridPtr& grid, Real eps, int k) {
  const Real theta = grid->theta();
  const Real ct = std::cos(theta);
  const int n = grid->dim();
  ScalarField f(grid);
  for (int p = 0; p < grid->num_nodes(); ++p) {
    const Real rho = grid->rho_of(p);
    const Real ell = 1.0 - ct * std::cos(rho);
    const Real dell = ct * std::sin(rho);
    const Real d2ell = ct * std::cos(rho);
    const Real u = 0.5 * (1.0 + std::cos(kPi * rho / theta));
    const Real du = -0.5 * (kPi / theta) * std::sin(kPi * rho / theta);
    const Real d2u = -0.5 * (kPi / theta) * (kPi / theta) * std::cos(kPi * rho / theta);
    const Real h = ell * (1.0 + eps * u);
    const Real dh = dell * (1.0 + eps * u) + ell * eps * du;
    const Real d2h = d2ell * (1.0 + eps * u) + 2.0 * dell * eps * du + ell * eps * d2u;
    const Real w_rr = d2h + h;
    const Real w_tt = (std::cos(rho) / std::sin(rho)) * dh + h;
    // sigma_k of the spectrum (w_rr, w_tt, ..., w_tt)
    f.values(p) = binomial(n - 1, k) * std::pow(w_tt, k) +
                  w_rr * binomial(n - 1, k - 1) * std::pow(w_tt, k - 1);
  }
  return f;
}

} // namespace

ScalarField build_f(const RunConfig& cfg, const GridPtr& grid, ScalarField* h_star) {
  if (cfg.f_source == "csv") {
    ScalarField f = read_scalar_field(cfg.f_path);
    if (!f.grid->same_grid(*grid))
      throw InvalidDataError("config: f field in " + cfg.f_path + " lives on a different grid");
    f.grid = grid;
    return f;
  }
  if (cfg.f_source == "manufactured_h") {
    ScalarField h = read_scalar_field(cfg.f_path);
    if (!h.grid->same_grid(*grid))
      throw InvalidDataError("config: h field in " + cfg.f_path + " lives on a different grid");
    h.grid = grid;
    if (h_star) *h_star = h;
    HessianOperator op(grid);
    return op.sigma_of_W(op.W(h), cfg.k);
  }
  // builtin generators
  if (cfg.f_name == "constant") {
    ScalarField f(grid);
    f.values.setConstant(cfg.f_value);
    return f;
  }
  if (cfg.f_name == "manufactured") {
    if (h_star) *h_star = manufactured_reference(grid, cfg.f_eps);
    return manufactured_forward(grid, cfg.f_eps, cfg.k);
  }
  if (cfg.f_name == "radial") {
    if (cfg.f_coeffs.empty())
      throw InvalidDataError("config: radial f needs coeffs");
    ScalarField f(grid);
    for (int p = 0; p < grid->num_nodes(); ++p) {
      const Real c = std::cos(grid->rho_of(p));
      Real v = 0.0, cm = 1.0;
      for (Real coeff : cfg.f_coeffs) {
        v += coeff * cm;
        cm *= c;
      }
      f.values(p) = v;
    }
    return f;
  }
  throw InvalidDataError("config: unknown builtin f generator '" + cfg.f_name + "'");
}

} // namespace capcmk
