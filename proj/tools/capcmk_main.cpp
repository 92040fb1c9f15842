// capcmk: solve the prescribed capillary area-measure problem on a spherical
// cap, audit the solution against its integral identities, and export the
// reconstructed hypersurface.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <json.hpp>

#include "capcmk/body.hpp"
#include "capcmk/config.hpp"
#include "capcmk/field_io.hpp"
#include "capcmk/solver.hpp"
#include "capcmk/symfunc.hpp"

namespace fs = std::filesystem;
using namespace capcmk;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitWarnings = 2;
constexpr int kExitSolverFailure = 3;
constexpr int kExitInvalidData = 4;

bool g_quiet = false;

void info(const std::string& msg) {
  if (!g_quiet) std::cout << msg << "\n";
}

void fail(const std::string& msg) { std::cerr << "error: " << msg << "\n"; }

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

std::string fmt17(Real x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct Solution {
  RunConfig config;
  GridPtr grid;
  ScalarField h;
  ScalarField f;
  bool has_f = false;
};

Solution load_solution(const fs::path& dir) {
  const fs::path cfgpath = dir / "config.toml";
  const fs::path hpath = dir / "h.csv";
  if (!fs::exists(cfgpath) || !fs::exists(hpath))
    throw InvalidDataError("solution directory " + dir.string() +
                           " must contain config.toml and h.csv");
  Solution sol;
  sol.config = parse_config(cfgpath.string());
  sol.h = read_scalar_field(hpath.string());
  sol.grid = sol.h.grid;
  const fs::path fpath = dir / "f.csv";
  if (fs::exists(fpath)) {
    sol.f = read_scalar_field(fpath.string());
    if (!sol.f.grid->same_grid(*sol.grid))
      throw InvalidDataError("f.csv and h.csv live on different grids");
    sol.f.grid = sol.grid;
    sol.has_f = true;
  } else if (sol.config.f_source == "builtin") {
    sol.f = build_f(sol.config, sol.grid);
    sol.has_f = true;
  }
  return sol;
}

ordered_json check_entry(const std::string& name, Real value, Real tol) {
  return {{"name", name}, {"value", value}, {"tolerance", tol}, {"pass", value <= tol}};
}

int cmd_solve(const std::string& config_path, const std::string& out_override) {
  RunConfig cfg = parse_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  GridPtr grid = build_grid(cfg);

  ScalarField h_star;
  ScalarField f = build_f(cfg, grid, &h_star);

  ProblemSpec spec;
  spec.grid = grid;
  spec.k = cfg.k;
  spec.f = f;
  spec.settings = cfg.settings;

  SolveResult result = solve(spec); // throws InvalidDataError on bad data
  SolveReport& rep = result.report;

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_scalar_field((out / "h.csv").string(), result.h.h);
  write_scalar_field((out / "f.csv").string(), f);
  write_config((out / "config.toml").string(), cfg);

  ordered_json jrep = report_to_json(rep);
  if (h_star.grid) {
    write_scalar_field((out / "h_star.csv").string(), h_star);
    jrep["recovery_error_linf"] =
        (result.h.h.values - h_star.values).cwiseAbs().maxCoeff();
  }
  write_json(out / "report.json", jrep);

  if (grid->mode() == GridMode::Full2D && cfg.write_mesh)
    export_obj(result.body, (out / "body.obj").string());
  if (cfg.write_vertex_csv) export_vertex_csv(result.body, (out / "vertex_data.csv").string());

  for (const auto& w : rep.warnings) info("warning: " + w);
  if (!rep.converged) {
    fail(rep.failure.empty() ? "solver did not converge" : rep.failure);
    return kExitSolverFailure;
  }
  info("converged: residual " + fmt17(rep.final_residual) + ", min eigenvalue " +
       fmt17(rep.min_eigenvalue_W) + ", outputs in " + out.string());
  if (!rep.warnings.empty()) return kExitWarnings;
  if (!rep.certificate.strict) return kExitWarnings;
  return kExitOk;
}

int cmd_forward(const std::string& config_path, const std::string& h_path,
                const std::string& out_override) {
  RunConfig cfg = parse_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  ScalarField h = read_scalar_field(h_path);
  GridPtr grid = build_grid(cfg);
  if (!h.grid->same_grid(*grid))
    throw InvalidDataError("forward: h field grid does not match the configured grid");
  h.grid = grid;

  HessianOperator op(grid);
  SymMatrixField W = op.W(h);
  ScalarField f = op.sigma_of_W(W, cfg.k);

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_scalar_field((out / "f.csv").string(), f);

  {
    std::ofstream os(out / "W_diag.csv");
    const bool full = grid->mode() == GridMode::Full2D;
    os << (full ? "rho,phi,W_rr,W_rp,W_pp" : "rho,W_rr,W_tt") << "\n";
    for (int p = 0; p < grid->num_nodes(); ++p) {
      os << fmt17(grid->rho_of(p));
      if (full) os << "," << fmt17(grid->phi_of(p));
      for (int c = 0; c < W.comps.cols(); ++c) os << "," << fmt17(W.comps(p, c));
      os << "\n";
    }
  }

  ordered_json rep;
  const Real defect = robin_defect(h);
  const Real rim_tol = 10.0 * grid->d_rho() * grid->d_rho() * h.values.cwiseAbs().maxCoeff();
  rep["robin_defect"] = defect;
  rep["robin_tolerance"] = rim_tol;
  rep["min_sigma_k"] = f.values.minCoeff();
  std::vector<std::string> warnings;
  if (defect > rim_tol)
    warnings.push_back("input h violates the Robin boundary condition (defect " +
                       fmt17(defect) + ")");
  if (f.values.minCoeff() <= 0.0)
    warnings.push_back("forward data is not positive; the body is not convex");
  rep["warnings"] = warnings;
  write_json(out / "forward_report.json", rep);

  for (const auto& w : warnings) info("warning: " + w);
  info("forward data written to " + (out / "f.csv").string());
  return warnings.empty() ? kExitOk : kExitWarnings;
}

int cmd_verify(const std::string& dir) {
  Solution sol = load_solution(dir);
  if (!sol.has_f)
    throw InvalidDataError("verify needs f.csv next to h.csv (or a builtin f in config.toml)");
  const CapGrid& g = *sol.grid;
  const int k = sol.config.k;
  const Real fmax = sol.f.values.maxCoeff();
  const Real hmax = sol.h.values.cwiseAbs().maxCoeff();
  const Real area = g.weights().sum();
  const Real dr2 = g.d_rho() * g.d_rho();
  const Real dphi2 = g.mode() == GridMode::Full2D ? g.d_phi() * g.d_phi() : 0.0;
  const Real mesh2 = dr2 + dphi2;

  HessianOperator op(sol.grid);
  ordered_json checks = ordered_json::array();

  // the audit is translation invariant: kernel components carry no
  // information and the discrete identities hold for the normalized field
  ScalarField h = normalize_translation(sol.h);

  // the equation itself
  const Real resid = op.residual(h, sol.f, k, ResidualForm::Raw).values.cwiseAbs().maxCoeff();
  checks.push_back(check_entry("residual_linf", resid, 1e-6 * fmax));

  checks.push_back(check_entry("robin_defect", robin_defect(h), 10.0 * dr2 * hmax));
  checks.push_back(check_entry("ortho_defect_h",
                               orthogonality_defect(h).cwiseAbs().maxCoeff(),
                               1e-8 * hmax * area));
  checks.push_back(
      check_entry("ortho_defect_f", orthogonality_defect(sol.f).cwiseAbs().maxCoeff(),
                  1e-8 * fmax * area));

  SymMatrixField W = op.W(h);
  SparseMatrix jac = op.jacobian(W, k, ResidualForm::Raw);
  Real kernel_defect = 0.0;
  Real integral_identity = 0.0;
  ScalarField sig = op.sigma_of_W(W, k);
  for (const auto& v : op.kernels()) {
    kernel_defect = std::max(kernel_defect, (jac * v.values).cwiseAbs().maxCoeff());
    integral_identity = std::max(integral_identity, std::abs(weighted_inner(v, sig)));
  }
  if (!op.kernels().empty()) {
    checks.push_back(check_entry("kernel_annihilation", kernel_defect, 2.0 * mesh2 * fmax));
    checks.push_back(check_entry("integral_identity", integral_identity, 1e-7 * fmax * area));
  }

  // weighted self-adjointness with seeded Robin-compatible probes
  {
    std::mt19937_64 rng(20240901);
    std::uniform_real_distribution<Real> amp(-1.0, 1.0);
    ScalarField v = ell_field(sol.grid), w = ell_field(sol.grid);
    const Real theta = g.theta();
    for (int p = 0; p < g.num_nodes(); ++p) {
      const Real rho = g.rho_of(p), phi = g.phi_of(p);
      const Real prof = std::cos(kPi * rho / (2 * theta)) * std::cos(kPi * rho / (2 * theta));
      v.values(p) *= prof * (1.0 + 0.5 * std::sin(rho) * std::cos(phi));
      w.values(p) *= prof * (1.0 - 0.4 * std::sin(rho) * std::sin(phi));
    }
    (void)amp;
    const Vector& qw = g.weights();
    const Real lhs = (qw.array() * w.values.array() * (jac * v.values).array()).sum();
    const Real rhs = (qw.array() * v.values.array() * (jac * w.values).array()).sum();
    const Real nv = std::sqrt((qw.array() * v.values.array().square()).sum());
    const Real nw = std::sqrt((qw.array() * w.values.array().square()).sum());
    checks.push_back(check_entry("self_adjointness", std::abs(lhs - rhs) / (nv * nw),
                                 2.0 * mesh2 * fmax));
  }

  const Real mink = minkowski_identity_residuals(h).maxCoeff();
  const Real ref128 = std::pow(128.0 / g.n_rho(), 2);
  checks.push_back(check_entry("minkowski_max_residual", mink, 1e-3 * std::max(1.0, ref128)));

  ConvexityCertificate cert = convexity_certificate(h, k);
  checks.push_back(
      check_entry("convexity_margin", cert.strict ? 0.0 : 1.0, 0.5)); // strict flag as 0/1
  if (cert.strict) {
    SteinerCheck steiner = steiner_volume_check(h, {0.25, 0.5, 1.0});
    checks.push_back(
        check_entry("steiner_max_rel", steiner.max_rel, 1e-4 * std::max(1.0, ref128)));
  }

  CapillaryBody body = reconstruct_surface(h, sol.has_f ? &sol.f : nullptr, k);
  ContactAngleCheck angle = contact_angle_check(body);
  checks.push_back(check_entry("contact_angle_defect", angle.angle_defect,
                               0.5 * (dphi2 + 10.0 * dr2)));
  checks.push_back(check_entry("boundary_height", angle.boundary_height, 50.0 * dr2 * hmax));

  bool all_pass = true;
  for (const auto& c : checks) all_pass = all_pass && c["pass"].get<bool>();

  ordered_json out;
  out["all_pass"] = all_pass;
  out["checks"] = checks;
  out["certificate"] = {{"min_eigenvalue", cert.min_eigenvalue},
                        {"max_eigenvalue", cert.max_eigenvalue},
                        {"strict", cert.strict}};
  write_json(fs::path(dir) / "verify.json", out);

  for (const auto& c : checks)
    info((c["pass"].get<bool>() ? "pass " : "FAIL ") + c["name"].get<std::string>() + " = " +
         fmt17(c["value"].get<Real>()) + " (tol " + fmt17(c["tolerance"].get<Real>()) + ")");
  return all_pass ? kExitOk : kExitVerifyFailed;
}

int cmd_measures(const std::string& dir, std::vector<int> klist, const std::string& mask_path) {
  Solution sol = load_solution(dir);
  const int n = sol.grid->dim();
  if (klist.empty())
    for (int k = 0; k <= n; ++k) klist.push_back(k);
  for (int k : klist)
    if (k < 0 || k > n) throw InvalidDataError("measures: k out of range in k list");

  std::vector<int> mask;
  const std::vector<int>* mask_ptr = nullptr;
  if (!mask_path.empty()) {
    std::ifstream is(mask_path);
    if (!is) throw InvalidDataError("measures: cannot open mask file " + mask_path);
    int idx;
    while (is >> idx) {
      if (idx < 0 || idx >= sol.grid->num_nodes())
        throw InvalidDataError("measures: mask index " + std::to_string(idx) + " out of range");
      mask.push_back(idx);
    }
    mask_ptr = &mask;
  }

  CapillaryBody body = reconstruct_surface(sol.h, sol.has_f ? &sol.f : nullptr, sol.config.k);
  ordered_json out;
  ordered_json values = ordered_json::object();
  for (int k : klist)
    values["S_" + std::to_string(k)] = capillary_area_measure(body, k, mask_ptr);
  out["capillary_area_measures"] = values;

  Vector quermass(n + 1);
  for (int k = 0; k <= n; ++k) quermass(k) = capillary_area_measure(body, k);
  out["quermassintegrals"] = std::vector<Real>(quermass.data(), quermass.data() + n + 1);

  Vector mink = minkowski_identity_residuals(sol.h);
  out["minkowski_residuals"] = std::vector<Real>(mink.data(), mink.data() + mink.size());

  Matrix radii = principal_radii(sol.h);
  if (radii.col(0).minCoeff() > 0.0) {
    SteinerCheck steiner = steiner_volume_check(sol.h, {0.25, 0.5, 1.0});
    out["steiner"] = {{"s", steiner.s},
                      {"direct", steiner.direct},
                      {"polynomial", steiner.polynomial},
                      {"max_rel_residual", steiner.max_rel}};
  }
  out["volume"] = body_volume(sol.h);

  write_json(fs::path(dir) / "measures.json", out);
  info("measures written to " + (fs::path(dir) / "measures.json").string());
  return kExitOk;
}

int cmd_export(const std::string& dir, const std::string& format) {
  if (format != "obj" && format != "csv") {
    fail("unknown export format '" + format + "' (supported: obj, csv)");
    return kExitInvalidData;
  }
  Solution sol = load_solution(dir);
  CapillaryBody body = reconstruct_surface(sol.h, sol.has_f ? &sol.f : nullptr, sol.config.k);
  if (format == "obj") {
    export_obj(body, (fs::path(dir) / "body.obj").string());
    info("mesh written to " + (fs::path(dir) / "body.obj").string());
  } else {
    export_vertex_csv(body, (fs::path(dir) / "vertex_data.csv").string());
    info("vertex data written to " + (fs::path(dir) / "vertex_data.csv").string());
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"capillary area-measure solver on the spherical cap"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path = "capcmk.toml";
  std::string out_dir;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--out", out_dir, "output directory override");
  app.add_flag("--quiet", g_quiet, "suppress progress output");

  auto* solve_cmd = app.add_subcommand("solve", "solve for the support function");

  auto* forward_cmd = app.add_subcommand("forward", "evaluate sigma_k(W(h)) for a given h");
  std::string h_path;
  forward_cmd->add_option("h_csv", h_path, "support function CSV")->required();

  std::string dir;
  auto* verify_cmd = app.add_subcommand("verify", "audit a solved directory");
  verify_cmd->add_option("dir", dir, "solution directory")->required();
  auto* measures_cmd = app.add_subcommand("measures", "capillary area measures and identities");
  measures_cmd->add_option("dir", dir, "solution directory")->required();
  std::vector<int> klist;
  measures_cmd->add_option("--k", klist, "orders to report (default 0..n)");
  std::string mask_path;
  measures_cmd->add_option("--mask", mask_path, "node index mask file");
  auto* export_cmd = app.add_subcommand("export", "export the reconstructed surface");
  export_cmd->add_option("dir", dir, "solution directory")->required();
  std::string format = "obj";
  export_cmd->add_option("--format", format, "obj or csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(solve_cmd)) return cmd_solve(config_path, out_dir);
    if (app.got_subcommand(forward_cmd)) return cmd_forward(config_path, h_path, out_dir);
    if (app.got_subcommand(verify_cmd)) return cmd_verify(dir);
    if (app.got_subcommand(measures_cmd)) return cmd_measures(dir, klist, mask_path);
    if (app.got_subcommand(export_cmd)) return cmd_export(dir, format);
  } catch (const InvalidDataError& e) {
    fail(e.what());
    return kExitInvalidData;
  } catch (const EllipticityLostError& e) {
    fail(e.what());
    return kExitSolverFailure;
  } catch (const std::invalid_argument& e) {
    fail(e.what());
    return kExitInvalidData;
  } catch (const std::exception& e) {
    fail(e.what());
    return kExitSolverFailure;
  }
  return kExitOk;
}
