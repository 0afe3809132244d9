#pragma once

#include <cellhom/errors.hpp>
#include <cellhom/homogenize.hpp>
#include <cellhom/tensor_field.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace cellhom {

/// Everything needed to reproduce one homogenization run.
struct RunConfig {
  std::string field = "paper-2d";
  int dim = 0; // 0: implied by the field, else 2
  Method method = Method::elliptic;
  Boundary bc = Boundary::dirichlet;
  double R = 4.5;
  double h = 1.0 / 32.0;
  double k_o = 0.5;
  int q = 1;
  std::optional<double> T; // overrides the rule
  std::optional<int> N;    // overrides the rule
  NRule n_rule;
  SolveOptions solve;
  bool reproducible = false;
};

/// Result of one run in dimension-free form (row-major d x d tensors).
struct RunRecord {
  RunConfig config;
  int dim = 0;
  bool ok = false;
  std::string error;
  std::vector<double> values;
  std::vector<double> reference;
  MethodParams params;
  Diagnostics diagnostics;
  double err_frobenius = std::numeric_limits<double>::quiet_NaN();
  /// CG iterations + accepted time steps + Lanczos basis vectors.
  long iters = 0;
};

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN(); // RMS in log space
  int points = 0;
};

struct SweepConfig {
  RunConfig base;
  std::vector<double> R_values;
  int jobs = 1;
  /// Points with error at or below the floor are left out of the fit (plateau).
  double error_floor = 1e-6;
};

struct SweepResult {
  std::vector<RunRecord> records; // ascending R
  SlopeFit fit;
  std::optional<double> reference_slope;
  int failures = 0;
};

// ---------------------------------------------------------------------------

/// Desk-scale preset of six non-integer cell sides in [2, 8].
inline std::vector<double> ci_R_grid() { return {2.5, 3.5, 4.5, 5.5, 6.5, 7.5}; }

/// `count` geometrically spaced sides in [lo, hi], moved at least `gap` away
/// from integers.
inline std::vector<double> geometric_R_grid(double lo, double hi, int count, double gap = 0.05) {
  if (!(lo > 1.0) || !(hi > lo) || count < 2) throw InvalidInput("bad geometric R grid");
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    double r = lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
    const double nearest = std::round(r);
    if (std::abs(r - nearest) < gap) r = nearest + (r >= nearest ? gap : -gap);
    out.push_back(r);
  }
  return out;
}

/// Full study grid: 60 non-integer sides between 1.1 and 12.7.
inline std::vector<double> full_R_grid() { return geometric_R_grid(1.1, 12.7, 60); }

/// Least-squares line through (log R, log err).
inline SlopeFit fit_loglog(const std::vector<double>& R, const std::vector<double>& err) {
  if (R.size() != err.size()) throw InvalidInput("fit_loglog: size mismatch");
  SlopeFit fit;
  fit.points = static_cast<int>(R.size());
  if (R.size() < 2) return fit;
  Eigen::MatrixXd a(R.size(), 2);
  Eigen::VectorXd b(R.size());
  for (std::size_t i = 0; i < R.size(); ++i) {
    if (!(R[i] > 0.0) || !(err[i] > 0.0)) throw InvalidInput("fit_loglog: values must be > 0");
    a(i, 0) = std::log(R[i]);
    a(i, 1) = 1.0;
    b(i) = std::log(err[i]);
  }
  const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(b);
  fit.slope = coef(0);
  fit.intercept = coef(1);
  fit.residual = std::sqrt((a * coef - b).squaredNorm() / static_cast<double>(R.size()));
  return fit;
}

// ---------------------------------------------------------------------------
// Reference cache

/// a0 per (field, h, quadrature), kept in memory and, when CELLHOM_CACHE_DIR
/// is set, in one JSON file per key. Values are stored in a form that reads
/// back bitwise.
class ReferenceCache {
public:
  explicit ReferenceCache(std::optional<std::string> directory = env_directory())
      : directory_(std::move(directory)) {}

  static std::optional<std::string> env_directory() {
    const char* dir = std::getenv("CELLHOM_CACHE_DIR");
    if (dir && *dir) return std::string(dir);
    return std::nullopt;
  }

  static std::string key(const std::string& field, int dim, double h, int quad) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", h);
    return field + "|d" + std::to_string(dim) + "|h" + buf + "|q" + std::to_string(quad);
  }

  template <int Dim>
  std::vector<double> get(const TensorField<Dim>& field, double h, const SolveOptions& options,
                          bool* hit = nullptr) {
    const std::string k = key(field.name(), Dim, h, options.assembly.quad_points);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (auto it = memory_.find(k); it != memory_.end()) {
        if (hit) *hit = true;
        return it->second;
      }
      if (auto stored = load(k)) {
        memory_[k] = *stored;
        if (hit) *hit = true;
        return *stored;
      }
    }
    if (hit) *hit = false;
    const auto ref = solve_periodic_reference(field, h, options);
    std::vector<double> values(ref.values.data(), ref.values.data() + Dim * Dim);
    // Column-major storage of a symmetric matrix equals row-major.
    std::lock_guard<std::mutex> lock(mutex_);
    memory_[k] = values;
    store(k, values);
    return values;
  }

  void clear_memory() {
    std::lock_guard<std::mutex> lock(mutex_);
    memory_.clear();
  }

private:
  std::filesystem::path path_for(const std::string& k) const {
    std::string name;
    for (char c : k) name += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return std::filesystem::path(*directory_) / ("reference_" + name + ".json");
  }

  std::optional<std::vector<double>> load(const std::string& k) const {
    if (!directory_) return std::nullopt;
    std::ifstream in(path_for(k));
    if (!in) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.at("key").get<std::string>() != k) return std::nullopt;
      return j.at("values").get<std::vector<double>>();
    } catch (const std::exception&) {
      return std::nullopt; // unreadable entries are recomputed
    }
  }

  void store(const std::string& k, const std::vector<double>& values) const {
    if (!directory_) return;
    std::error_code ec;
    std::filesystem::create_directories(*directory_, ec);
    std::ofstream out(path_for(k));
    if (!out) throw IoError("cannot write reference cache in '" + *directory_ + "'");
    out << nlohmann::json{{"key", k}, {"values", values}}.dump(2) << '\n';
  }

  std::optional<std::string> directory_;
  std::mutex mutex_;
  std::map<std::string, std::vector<double>> memory_;
};

// ---------------------------------------------------------------------------
// Single runs

inline int resolve_dim(const RunConfig& config) {
  const int implied = field_dimension(config.field, 0);
  if (implied != 0 && config.dim != 0 && implied != config.dim)
    throw ConfigError("field '" + config.field + "' is " + std::to_string(implied) +
                      "-dimensional, but d = " + std::to_string(config.dim) + " was requested");
  const int dim = implied != 0 ? implied : (config.dim != 0 ? config.dim : 2);
  if (dim < 1 || dim > 3) throw ConfigError("dimension must be 1, 2 or 3");
  return dim;
}

namespace detail {

template <int Dim> MethodParams run_params(const RunConfig& c, const TensorField<Dim>& field) {
  MethodParams p;
  if (c.method == Method::periodic) {
    p.R = c.R;
    p.L = c.R;
    return p;
  }
  if (c.method == Method::elliptic) {
    if (!(c.R > 0.0)) throw InvalidInput("cell side R must be > 0");
    p.R = c.R;
    p.L = c.R;
    return p;
  }
  p = optimal_params(c.method, c.R, c.q, c.k_o, field.alpha(), field.beta(), c.n_rule, Dim);
  if (c.T) {
    if (!(*c.T > 0.0)) throw InvalidInput("T override must be > 0");
    p.T = *c.T;
    p.k_T = p.T / p.R;
  }
  if (c.N) {
    if (*c.N < 1) throw InvalidInput("N override must be >= 1");
    p.N = *c.N;
  }
  return p;
}

template <int Dim> HomogenizedTensor<Dim> run_method(const RunConfig& c, const TensorField<Dim>& field) {
  const MethodParams p = run_params(c, field);
  const bool periodic_bc = c.bc == Boundary::periodic;
  switch (c.method) {
  case Method::periodic: return solve_periodic_cell(field, c.R, c.h, c.solve);
  case Method::elliptic:
    if (periodic_bc) return solve_periodic_cell(field, c.R, c.h, c.solve);
    return solve_elliptic_dirichlet(field, c.R, c.h, c.solve);
  case Method::parabolic:
    if (periodic_bc) throw ConfigError("the parabolic method needs --bc dirichlet");
    return solve_parabolic(field, p, c.h, c.solve);
  case Method::modified_elliptic:
    if (periodic_bc) throw ConfigError("the modified elliptic method needs --bc dirichlet");
    return solve_modified_elliptic(field, p, c.h, c.solve);
  }
  throw ConfigError("unknown method");
}

template <int Dim> RunRecord run_dim(const RunConfig& c, ReferenceCache& cache) {
  const TensorField<Dim> field = make_field<Dim>(c.field);
  RunRecord rec;
  rec.config = c;
  rec.dim = Dim;
  HomogenizedTensor<Dim> out;
  try {
    out = run_method(c, field);
  } catch (const SolverFailure& e) {
    std::ostringstream msg;
    msg << to_string(c.method) << " at R = " << c.R << ": " << e.what();
    throw SolverFailure(msg.str(), e.residual());
  } catch (const IntegratorFailure& e) {
    std::ostringstream msg;
    msg << to_string(c.method) << " at R = " << c.R << ": " << e.what();
    throw IntegratorFailure(msg.str());
  }
  rec.reference = cache.get(field, c.h, c.solve);
  rec.values.resize(Dim * Dim);
  double err = 0.0;
  for (int i = 0; i < Dim; ++i)
    for (int j = 0; j < Dim; ++j) {
      rec.values[i * Dim + j] = out.values(i, j);
      const double d = out.values(i, j) - rec.reference[i * Dim + j];
      err += d * d;
    }
  rec.err_frobenius = std::sqrt(err);
  rec.params = out.params;
  if (c.method == Method::periodic || c.method == Method::elliptic) rec.params.R = c.R;
  rec.diagnostics = out.diagnostics;
  if (c.reproducible) rec.diagnostics.wall_ms = 0.0;
  rec.iters = out.diagnostics.solver_iterations + out.diagnostics.time_steps;
  rec.ok = true;
  return rec;
}

} // namespace detail

/// Runs the configured method and measures it against the periodic reference
/// (computed once per field and h, then cached).
inline RunRecord run_once(const RunConfig& config, ReferenceCache& cache) {
  switch (resolve_dim(config)) {
  case 1: return detail::run_dim<1>(config, cache);
  case 2: return detail::run_dim<2>(config, cache);
  default: return detail::run_dim<3>(config, cache);
  }
}

inline RunRecord run_once(const RunConfig& config) {
  ReferenceCache cache;
  return run_once(config, cache);
}

/// Reference slope of the error curve: -1 for the classical method, -(q + 1)
/// for the filtered methods.
inline std::optional<double> reference_slope(Method method, int q) {
  if (method == Method::elliptic) return -1.0;
  if (method == Method::parabolic || method == Method::modified_elliptic)
    return -static_cast<double>(q + 1);
  return std::nullopt;
}

/// Runs every R of the sweep on `jobs` workers. Failed points are kept as
/// rows with `ok == false`; the fit uses successful points above the floor.
inline SweepResult run_sweep(const SweepConfig& sweep, ReferenceCache& cache) {
  if (sweep.R_values.size() < 4)
    throw InvalidInput("a sweep needs at least 4 values of R for the slope fit");
  std::vector<double> Rs = sweep.R_values;
  for (double r : Rs)
    if (!(r > 1.0) || !std::isfinite(r)) throw InvalidInput("sweep values of R must be > 1");
  std::sort(Rs.begin(), Rs.end());
  if (std::adjacent_find(Rs.begin(), Rs.end()) != Rs.end())
    throw InvalidInput("sweep values of R must be distinct");
  // Validate names and warm the reference before any worker starts.
  resolve_dim(sweep.base);
  {
    RunConfig probe = sweep.base;
    probe.method = Method::periodic;
    probe.R = 1.0;
    (void)run_once(probe, cache);
  }

  SweepResult result;
  result.records.resize(Rs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < Rs.size(); i = next++) {
      RunConfig c = sweep.base;
      c.R = Rs[i];
      try {
        result.records[i] = run_once(c, cache);
      } catch (const std::exception& e) {
        RunRecord rec;
        rec.config = c;
        rec.params.R = c.R;
        rec.error = e.what();
        result.records[i] = std::move(rec);
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(sweep.jobs, static_cast<int>(Rs.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<double> fit_R;
  std::vector<double> fit_err;
  for (const auto& rec : result.records) {
    if (!rec.ok) {
      ++result.failures;
      continue;
    }
    if (rec.err_frobenius > sweep.error_floor) {
      fit_R.push_back(rec.config.R);
      fit_err.push_back(rec.err_frobenius);
    }
  }
  if (result.failures == static_cast<int>(result.records.size()))
    throw SolverFailure("every point of the sweep failed; first error: " +
                        result.records.front().error);
  result.fit = fit_loglog(fit_R, fit_err);
  result.reference_slope = reference_slope(sweep.base.method, sweep.base.q);
  return result;
}

inline SweepResult run_sweep(const SweepConfig& sweep) {
  ReferenceCache cache;
  return run_sweep(sweep, cache);
}

// ---------------------------------------------------------------------------
// Output

enum class OutputFormat { csv, json };

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_text(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "R,L,T,N,q,method,err_frobenius,asymmetry,wall_ms,iters\n";
  for (const auto& r : records) {
    out << format_double(r.config.R) << ',' << format_double(r.params.L) << ','
        << format_double(r.params.T) << ',' << r.params.N << ',' << r.params.q << ','
        << to_string(r.config.method) << ',' << format_double(r.err_frobenius) << ','
        << format_double(r.diagnostics.asymmetry) << ',' << format_double(r.diagnostics.wall_ms)
        << ',' << r.iters << '\n';
  }
  return out.str();
}

/// Non-finite numbers have no JSON spelling; they are written as null.
inline nlohmann::ordered_json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline nlohmann::ordered_json record_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["config"] = {{"field", r.config.field},
                 {"dim", r.dim},
                 {"method", to_string(r.config.method)},
                 {"bc", to_string(r.config.bc)},
                 {"R", r.config.R},
                 {"h", r.config.h},
                 {"k_o", r.config.k_o},
                 {"q", r.config.q},
                 {"tol_time", r.config.solve.time.tol},
                 {"cg_tol", r.config.solve.linear.cg_tol},
                 {"eig_tol", r.config.solve.eigen.tol},
                 {"seed", r.config.solve.eigen.seed}};
  j["ok"] = r.ok;
  if (!r.ok) j["error"] = r.error;
  j["params"] = {{"R", r.params.R},          {"L", r.params.L},
                 {"T", json_number(r.params.T)}, {"N", r.params.N},
                 {"q", r.params.q},          {"k_o", r.params.k_o},
                 {"k_T", r.params.k_T}};
  j["values"] = r.values;
  j["reference"] = r.reference;
  j["err_frobenius"] = json_number(r.err_frobenius);
  const auto& d = r.diagnostics;
  j["diagnostics"] = {{"asymmetry", d.asymmetry},
                      {"spectral_min", d.spectral_min},
                      {"spectral_max", d.spectral_max},
                      {"solver_iterations", d.solver_iterations},
                      {"time_steps", d.time_steps},
                      {"rejected_steps", d.rejected_steps},
                      {"factorizations", d.factorizations},
                      {"energy_increases", d.energy_increases},
                      {"eigen_residual", d.eigen_residual},
                      {"wall_ms", d.wall_ms},
                      {"warnings", d.warnings}};
  j["iters"] = r.iters;
  return j;
}

inline std::string json_text(const std::vector<RunRecord>& records,
                             const SweepResult* sweep = nullptr) {
  nlohmann::ordered_json j;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) j["records"].push_back(record_json(r));
  if (sweep) {
    j["fit"] = {{"slope", json_number(sweep->fit.slope)},
                {"intercept", json_number(sweep->fit.intercept)},
                {"residual", json_number(sweep->fit.residual)},
                {"points", sweep->fit.points},
                {"reference_slope",
                 sweep->reference_slope ? nlohmann::ordered_json(*sweep->reference_slope)
                                         : nlohmann::ordered_json(nullptr)},
                {"failures", sweep->failures}};
  }
  return j.dump(2) + "\n";
}

inline void emit_results(const std::vector<RunRecord>& records, OutputFormat format,
                         const std::string& path, const SweepResult* sweep = nullptr) {
  if (records.empty()) throw InvalidInput("emit_results: no records");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << (format == OutputFormat::csv ? csv_text(records) : json_text(records, sweep));
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

} // namespace cellhom
