#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "capcmk/field_io.hpp"
#include "capcmk/solver.hpp"

// End-to-end checks of the command-line front end (subprocess level).

#ifndef CAPCMK_BIN
#define CAPCMK_BIN "capcmk"
#endif

using namespace capcmk;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CAPCMK_BIN) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// report.json comparison must ignore the wall-time field
std::string scrub_wall_time(std::string s) {
  const auto pos = s.find("\"wall_time_seconds\"");
  if (pos == std::string::npos) return s;
  const auto end = s.find('\n', pos);
  return s.erase(pos, end - pos);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / "capcmk_cli_test";
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_basic_config(const fs::path& p, const std::string& extra_f = "", int n_rho = 48) {
  std::ofstream os(p);
  os << "[problem]\nn = 2\nk = 1\ntheta = 1.0471975511965976\nmode = \"full\"\n"
     << "n_rho = " << n_rho << "\nn_phi = " << n_rho << "\n\n"
     << "[f]\n"
     << (extra_f.empty() ? "source = \"builtin\"\nname = \"constant\"\nvalue = 2.0\n" : extra_f)
     << "\n[output]\ndir = \"out\"\n";
}

} // namespace

TEST_CASE("cli: solve, determinism, verify, measures, export") {
  TempDir tmp;
  const auto cwd = fs::current_path();
  fs::current_path(tmp.path);

  write_basic_config("run.toml");
  CHECK(run("solve --config run.toml --quiet") == 0);
  for (const char* f : {"h.csv", "f.csv", "report.json", "body.obj", "vertex_data.csv",
                        "config.toml"})
    CHECK(fs::exists(fs::path("out") / f));

  ScalarField h = read_scalar_field("out/h.csv");
  CHECK((h.values - ell_field(h.grid).values).cwiseAbs().maxCoeff() <= 1e-4);

  // byte-identical rerun (wall time excluded)
  CHECK(run("solve --config run.toml --out out2 --quiet") == 0);
  CHECK(slurp("out/h.csv") == slurp("out2/h.csv"));
  CHECK(scrub_wall_time(slurp("out/report.json")) == scrub_wall_time(slurp("out2/report.json")));

  const std::string report = slurp("out/report.json");
  for (const char* key : {"final_residual", "min_eigenvalue_W", "homotopy_steps", "newton_total",
                          "ortho_defect", "robin_defect", "t_reached", "warnings"})
    CHECK(report.find(key) != std::string::npos);

  CHECK(run("verify out") == 0);
  CHECK(fs::exists("out/verify.json"));

  // translated solution still verifies (the audit is translation invariant)
  {
    ScalarField ht = h;
    ht.values += 0.1 * kernel_fields(h.grid)[0].values;
    write_scalar_field("out2/h.csv", ht);
    CHECK(run("verify out2") == 0);
  }

  // a hand-edited node breaks the residual audit
  {
    ScalarField hbad = h;
    hbad.values(h.grid->num_nodes() / 2) *= 1.1;
    write_scalar_field("out2/h.csv", hbad);
    CHECK(run("verify out2") == 1);
    CHECK(slurp("out2/verify.json").find("\"all_pass\": false") != std::string::npos);
  }

  CHECK(run("measures out --k 0 1 2") == 0);
  const std::string measures = slurp("out/measures.json");
  CHECK(measures.find("quermassintegrals") != std::string::npos);
  CHECK(measures.find("minkowski_residuals") != std::string::npos);

  // half-cap mask: S_1 halves by symmetry
  {
    std::ofstream mask("half.txt");
    for (int p = 0; p < h.grid->num_nodes(); ++p)
      if (h.grid->phi_of(p) < kPi) mask << p << "\n";
  }
  CHECK(run("measures out --k 1 --mask half.txt") == 0);
  CHECK(run("measures out --mask bad_mask_does_not_exist.txt") == 4);

  CHECK(run("export out --format csv") == 0);
  CHECK(run("export out --format step") == 4);
  CHECK(slurp("cli_stderr.txt").find("supported") != std::string::npos);

  fs::current_path(cwd);
}

TEST_CASE("cli: forward evaluation and Robin warnings") {
  TempDir tmp;
  const auto cwd = fs::current_path();
  fs::current_path(tmp.path);

  write_basic_config("run.toml");
  auto g = CapGrid::build({2, 1.0471975511965976}, 48, 48, GridMode::Full2D);
  write_scalar_field("ell.csv", ell_field(g));

  CHECK(run("forward ell.csv --config run.toml --out fwd") == 0);
  ScalarField f = read_scalar_field("fwd/f.csv");
  CHECK((f.values.array() - 2.0).abs().maxCoeff() <= 1e-3);
  CHECK(fs::exists("fwd/W_diag.csv"));

  ScalarField doubled = ell_field(g);
  doubled.values *= 2.0;
  write_scalar_field("double.csv", doubled);
  CHECK(run("forward double.csv --config run.toml --out fwd2") == 0);
  ScalarField f2 = read_scalar_field("fwd2/f.csv");
  CHECK((f2.values.array() - 4.0).abs().maxCoeff() <= 2e-3);

  // ell^2 violates the Robin condition: warning, defect recorded
  ScalarField sq = ell_field(g);
  sq.values = sq.values.cwiseProduct(sq.values);
  write_scalar_field("sq.csv", sq);
  CHECK(run("forward sq.csv --config run.toml --out fwd3") == 2);
  CHECK(slurp("fwd3/forward_report.json").find("robin_defect") != std::string::npos);
  CHECK(slurp("fwd3/forward_report.json").find("Robin") != std::string::npos);

  fs::current_path(cwd);
}

TEST_CASE("cli: invalid data paths produce exit 4") {
  TempDir tmp;
  const auto cwd = fs::current_path();
  fs::current_path(tmp.path);

  // data violating the necessary orthogonality condition
  auto g = CapGrid::build({2, 1.0471975511965976}, 48, 48, GridMode::Full2D);
  ScalarField f(g);
  for (int p = 0; p < g->num_nodes(); ++p)
    f.values(p) = 1.0 + 0.5 * std::sin(g->rho_of(p)) * std::cos(g->phi_of(p));
  write_scalar_field("f_bad.csv", f);
  write_basic_config("run.toml", "source = \"csv\"\npath = \"f_bad.csv\"\n");
  CHECK(run("solve --config run.toml") == 4);
  CHECK(slurp("cli_stderr.txt").find("inconsistent-data") != std::string::npos);

  // malformed config
  std::ofstream("broken.toml") << "[problem\nn = 2\n";
  CHECK(run("solve --config broken.toml") == 4);

  // missing solution directory artifacts
  CHECK(run("verify nowhere") == 4);

  fs::current_path(cwd);
}

TEST_CASE("cli: manufactured run reports the recovery error") {
  TempDir tmp;
  const auto cwd = fs::current_path();
  fs::current_path(tmp.path);

  write_basic_config("run.toml", "source = \"builtin\"\nname = \"manufactured\"\neps = 0.05\n");
  CHECK(run("solve --config run.toml --quiet") == 0);
  const std::string report = slurp("out/report.json");
  CHECK(report.find("recovery_error_linf") != std::string::npos);
  CHECK(fs::exists("out/h_star.csv"));

  ScalarField h = read_scalar_field("out/h.csv");
  ScalarField hs = read_scalar_field("out/h_star.csv");
  CHECK((h.values - hs.values).cwiseAbs().maxCoeff() <= 1e-3);

  fs::current_path(cwd);
}
