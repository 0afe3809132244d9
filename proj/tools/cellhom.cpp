// Command-line front end: single runs, convergence sweeps and reference tensors.

#include <cellhom/harness.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace cellhom;

/// Accepts plain decimals and fractions such as "1/32".
double parse_number(const std::string& text) {
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    const std::string num = text.substr(0, slash);
    const std::string den = text.substr(slash + 1);
    const double a = std::stod(num, &used);
    if (used != num.size()) throw std::invalid_argument(text);
    const double b = std::stod(den, &used);
    if (used != den.size() || b == 0.0) throw std::invalid_argument(text);
    return a / b;
  } catch (const std::exception&) {
    throw ConfigError("cannot read number '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(parse_number(item));
  return out;
}

/// Flags shared by all subcommands, collected as text and resolved afterwards.
struct Flags {
  std::string field = "paper-2d";
  int dim = 0;
  std::string method = "elliptic";
  std::string bc = "dirichlet";
  std::string R = "4.5";
  std::string h = "1/32";
  double k_o = 0.5;
  int q = 1;
  double T = 0.0;
  int N = 0;
  double c_N = 0.0;
  double tol_time = 1e-5;
  double cg_tol = 1e-10;
  double eig_tol = 1e-8;
  std::uint64_t seed = 42;
  std::string linear_solver = "direct";
  std::string eigen_method = "auto";
  int quad = 2;
  bool symmetrize = false;
  bool reproducible = false;
  std::string csv;
  std::string json;
  // sweep only
  std::string R_list;
  std::string preset = "ci";
  int jobs = 1;
  double error_floor = 1e-6;
  bool strict = false;
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--field", f.field, "coefficient: constant:<v>, paper-2d, checkerboard:<a1>:<a2>, "
                                     "sinusoidal:<mean>:<amp>")
      ->capture_default_str();
  cmd.add_option("--dim", f.dim, "space dimension (default: implied by the field, else 2)");
  cmd.add_option("--h", f.h, "target mesh size per unit length, e.g. 1/32")->capture_default_str();
  cmd.add_option("--quad", f.quad, "Gauss points per axis and cell")->capture_default_str();
  cmd.add_option("--cg-tol,--cg_tol", f.cg_tol, "CG relative tolerance")->capture_default_str();
  cmd.add_option("--eig-tol,--eig_tol", f.eig_tol, "eigenpair residual tolerance")
      ->capture_default_str();
  cmd.add_option("--seed", f.seed, "Lanczos start seed")->capture_default_str();
  cmd.add_option("--linear-solver", f.linear_solver, "direct | cg")->capture_default_str();
  cmd.add_option("--eigen-method", f.eigen_method, "auto | lanczos | dense")->capture_default_str();
  cmd.add_flag("--reproducible", f.reproducible, "zero wall times so outputs are bitwise stable");
  cmd.add_option("--csv", f.csv, "write records as CSV");
  cmd.add_option("--json", f.json, "write records as JSON");
}

void add_method(CLI::App& cmd, Flags& f) {
  cmd.add_option("--method", f.method, "periodic | elliptic | parabolic | modified-elliptic")
      ->capture_default_str();
  cmd.add_option("--bc", f.bc, "dirichlet | periodic")->capture_default_str();
  cmd.add_option("--k-o,--k_o", f.k_o, "oversampling fraction in (0, 1)")->capture_default_str();
  cmd.add_option("--q,--filter-q", f.q, "filter order")->capture_default_str();
  cmd.add_option("--T", f.T, "override the horizon T");
  cmd.add_option("--N", f.N, "override the number of eigenmodes");
  cmd.add_option("--c-N,--c_N", f.c_N, "use N = ceil(c_N R^d) instead of a fixed N");
  cmd.add_option("--tol-time,--tol_time", f.tol_time, "time-step tolerance")->capture_default_str();
  cmd.add_flag("--symmetrize", f.symmetrize, "average the modified elliptic tensor with its transpose");
}

RunConfig to_config(const Flags& f) {
  RunConfig c;
  c.field = f.field;
  c.dim = f.dim;
  c.method = parse_method(f.method);
  c.bc = parse_boundary(f.bc);
  c.R = parse_number(f.R);
  c.h = parse_number(f.h);
  c.k_o = f.k_o;
  c.q = f.q;
  if (f.T > 0.0) c.T = f.T;
  if (f.N > 0) c.N = f.N;
  c.n_rule.c_N = f.c_N;
  c.solve.assembly.quad_points = f.quad;
  c.solve.linear.kind = parse_linear_solver(f.linear_solver);
  c.solve.linear.cg_tol = f.cg_tol;
  c.solve.eigen.tol = f.eig_tol;
  c.solve.eigen.seed = f.seed;
  c.solve.eigen.method = parse_eigen_method(f.eigen_method);
  c.solve.eigen.inner = c.solve.linear;
  c.solve.time.tol = f.tol_time;
  c.solve.time.solver = c.solve.linear;
  c.solve.symmetrize = f.symmetrize;
  c.reproducible = f.reproducible;
  return c;
}

void print_tensor(const std::vector<double>& v, int dim, const char* label) {
  std::printf("%s\n", label);
  for (int i = 0; i < dim; ++i) {
    std::printf("  ");
    for (int j = 0; j < dim; ++j) std::printf(" %.17g", v[i * dim + j]);
    std::printf("\n");
  }
}

void write_outputs(const Flags& f, const std::vector<RunRecord>& records,
                   const SweepResult* sweep = nullptr) {
  if (!f.csv.empty()) emit_results(records, OutputFormat::csv, f.csv, sweep);
  if (!f.json.empty()) emit_results(records, OutputFormat::json, f.json, sweep);
}

int cmd_homogenize(const Flags& f) {
  const RunConfig c = to_config(f);
  ReferenceCache cache;
  const RunRecord rec = run_once(c, cache);
  std::printf("method %s  field %s  d = %d  R = %.17g\n", to_string(c.method).c_str(),
              c.field.c_str(), rec.dim, c.R);
  std::printf("L = %.17g  T = %.17g  N = %d  q = %d\n", rec.params.L, rec.params.T, rec.params.N,
              rec.params.q);
  print_tensor(rec.values, rec.dim, "tensor:");
  print_tensor(rec.reference, rec.dim, "reference:");
  std::printf("frobenius error %.6e  asymmetry %.3e  spectrum [%.6g, %.6g]\n", rec.err_frobenius,
              rec.diagnostics.asymmetry, rec.diagnostics.spectral_min,
              rec.diagnostics.spectral_max);
  for (const auto& w : rec.diagnostics.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  write_outputs(f, {rec});
  return 0;
}

int cmd_sweep(const Flags& f) {
  SweepConfig s;
  s.base = to_config(f);
  if (!f.R_list.empty())
    s.R_values = parse_list(f.R_list);
  else if (f.preset == "ci")
    s.R_values = ci_R_grid();
  else if (f.preset == "full")
    s.R_values = full_R_grid();
  else
    throw ConfigError("unknown preset '" + f.preset + "' (ci | full)");
  s.jobs = f.jobs;
  s.error_floor = f.error_floor;
  if (s.base.reproducible) s.jobs = 1;
  ReferenceCache cache;
  const SweepResult result = run_sweep(s, cache);
  std::printf("%10s %14s %12s\n", "R", "error", "asymmetry");
  for (const auto& r : result.records) {
    if (r.ok)
      std::printf("%10.4f %14.6e %12.3e\n", r.config.R, r.err_frobenius, r.diagnostics.asymmetry);
    else
      std::printf("%10.4f %14s  failed: %s\n", r.config.R, "-", r.error.c_str());
  }
  std::printf("log-log slope %.4f  (residual %.3e, %d points)", result.fit.slope,
              result.fit.residual, result.fit.points);
  if (result.reference_slope) std::printf("  reference slope %.1f", *result.reference_slope);
  std::printf("\n");
  write_outputs(f, result.records, &result);
  if (f.strict && result.failures > 0) {
    std::fprintf(stderr, "%d point(s) failed\n", result.failures);
    return 3;
  }
  return 0;
}

int cmd_reference(const Flags& f) {
  RunConfig c = to_config(f);
  c.method = Method::periodic;
  c.R = 1.0;
  ReferenceCache cache;
  const RunRecord rec = run_once(c, cache);
  print_tensor(rec.reference, rec.dim, "reference tensor:");
  if (const auto dir = ReferenceCache::env_directory())
    std::printf("cached under %s\n", dir->c_str());
  write_outputs(f, {rec});
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellhom: effective coefficients from cell problems"};
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  // "-h" would clash with the mesh-size flag "--h".
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);
  Flags f;

  auto* homogenize = app.add_subcommand("homogenize", "run one method at one cell size");
  add_common(*homogenize, f);
  add_method(*homogenize, f);
  homogenize->add_option("--R", f.R, "cell side")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "error against the reference over many cell sizes");
  add_common(*sweep, f);
  add_method(*sweep, f);
  sweep->add_option("--R-list,--R_list", f.R_list, "comma-separated cell sides");
  sweep->add_option("--preset", f.preset, "ci (6 sides in [2, 8]) | full (60 sides up to 12.7)")
      ->capture_default_str();
  sweep->add_option("--jobs", f.jobs, "worker threads")->capture_default_str();
  sweep->add_option("--error-floor", f.error_floor, "errors at or below are left out of the fit")
      ->capture_default_str();
  sweep->add_flag("--strict", f.strict, "nonzero exit if any point failed");

  auto* reference = app.add_subcommand("reference", "periodic unit-cell tensor (cached)");
  add_common(*reference, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*homogenize) return cmd_homogenize(f);
    if (*sweep) return cmd_sweep(f);
    return cmd_reference(f);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
