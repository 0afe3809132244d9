#pragma once

#include <cellhom/assembly.hpp>
#include <cellhom/eigensolver.hpp>
#include <cellhom/errors.hpp>
#include <cellhom/filters.hpp>
#include <cellhom/grid.hpp>
#include <cellhom/sparse.hpp>
#include <cellhom/tensor_field.hpp>
#include <cellhom/time_stepping.hpp>

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cellhom {

enum class Method { periodic, elliptic, parabolic, modified_elliptic };

inline std::string to_string(Method m) {
  switch (m) {
  case Method::periodic: return "periodic";
  case Method::elliptic: return "elliptic";
  case Method::parabolic: return "parabolic";
  case Method::modified_elliptic: return "modified-elliptic";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  if (s == "periodic") return Method::periodic;
  if (s == "elliptic") return Method::elliptic;
  if (s == "parabolic") return Method::parabolic;
  if (s == "modified-elliptic") return Method::modified_elliptic;
  throw ConfigError("unknown method '" + s + "'");
}

/// Cell side R, averaging side L, horizon T, spectral modes N, filter order q,
/// and the two rule constants that produced them (zero when set by hand).
struct MethodParams {
  double R = 1.0;
  double L = 1.0;
  double T = std::numeric_limits<double>::infinity();
  int N = 0;
  int q = 0;
  double k_o = 0.0;
  double k_T = 0.0;
  std::vector<std::string> warnings;
};

/// How the number of eigenmodes grows with R: a fixed count, or ceil(c_N R^d)
/// when c_N > 0.
struct NRule {
  int fixed = 60;
  double c_N = 0.0;

  int count(double R, int dim) const {
    if (c_N > 0.0) return static_cast<int>(std::ceil(c_N * std::pow(R, dim) - 1e-9));
    return fixed;
  }
};

/// Time scaling T = k_T R: the parabolic rule uses sqrt(4 alpha beta), the
/// modified elliptic rule sqrt(2 alpha beta).
inline double time_scaling(Method method, double k_o, double alpha, double beta) {
  const double c = method == Method::parabolic ? 4.0 : 2.0;
  return k_o / (std::numbers::pi * std::sqrt(c * beta * alpha));
}

inline MethodParams optimal_params(Method method, double R, int q, double k_o, double alpha,
                                   double beta, const NRule& rule = {}, int dim = 2) {
  if (!(R > 1.0) || !std::isfinite(R)) throw InvalidInput("cell side R must be > 1");
  if (!(k_o > 0.0 && k_o < 1.0)) throw InvalidInput("oversampling fraction k_o must lie in (0, 1)");
  if (q < 0) throw InvalidInput("filter order q must be >= 0");
  if (!(alpha > 0.0) || !(beta >= alpha)) throw InvalidInput("need 0 < alpha <= beta");
  MethodParams p;
  p.R = R;
  p.q = q;
  p.k_o = k_o;
  if (method == Method::periodic || method == Method::elliptic) {
    p.L = R;
    p.q = 0;
    p.k_o = 0.0;
    return p;
  }
  p.L = (1.0 - k_o) * R;
  p.k_T = time_scaling(method, k_o, alpha, beta);
  p.T = p.k_T * R;
  if (method == Method::modified_elliptic) {
    p.N = rule.count(R, dim);
    if (p.N < 1) throw InvalidInput("the eigenmode rule must give N >= 1");
  }
  if (p.L >= std::floor(R)) {
    std::ostringstream msg;
    msg << "L = " << p.L << " is not below floor(R) = " << std::floor(R)
        << "; the rate estimate does not cover this case";
    p.warnings.push_back(msg.str());
  }
  return p;
}

struct Diagnostics {
  double asymmetry = 0.0; // ||A - A'||_F
  double spectral_min = 0.0;
  double spectral_max = 0.0;
  long solver_iterations = 0;
  double wall_ms = 0.0;
  long time_steps = 0;
  long rejected_steps = 0;
  long factorizations = 0;
  long energy_increases = 0;
  double eigen_residual = 0.0;
  std::vector<std::string> warnings;
};

template <int Dim> struct HomogenizedTensor {
  Tensor<Dim> values = Tensor<Dim>::Zero();
  Method method = Method::periodic;
  MethodParams params;
  Diagnostics diagnostics;
  /// Nodal corrector coefficients, one column per direction (empty for the
  /// parabolic method, whose correctors live in the trajectory).
  Matrix correctors;
};

struct SolveOptions {
  AssemblyOptions assembly;
  LinearSolverOptions linear;
  EigenOptions eigen;
  TimeControl time;
  bool symmetrize = false;
  bool keep_states = false;
};

/// Running filtered products for one averaging window.
template <int Dim> struct FilterWindow {
  BoxFilter<Dim> filter;
  SparseSym weight;                       // u' W v = filtered_bilinear(u, v)
  Tensor<Dim> accumulated = Tensor<Dim>::Zero(); // int_0^t u^i' W u^j dt
  std::vector<Tensor<Dim>> history;       // accumulated after every accepted step
};

template <int Dim> struct ParabolicTrajectory {
  Grid<Dim> grid;
  std::string field_name;
  int quad_points = 2;
  double final_time = 0.0;
  std::vector<double> times;                  // 0 = t_0 < ... < t_M = T
  std::vector<std::array<double, Dim>> l2_norms; // ||u^i(t_m)||, one entry per time
  std::vector<Matrix> states;                 // only with keep_states
  Matrix initial;
  Matrix final_state;
  Matrix time_integral; // trapezoidal int_0^T u dt
  Tensor<Dim> mass_integral = Tensor<Dim>::Zero(); // int_0^T u^i' M u^j dt
  std::vector<FilterWindow<Dim>> windows;
  IntegrationStats stats;
  double wall_ms = 0.0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <int Dim> Tensor<Dim> symmetric_part(const Tensor<Dim>& a) {
  return 0.5 * (a + a.transpose());
}

template <int Dim> void fill_spectrum(const Tensor<Dim>& values, Diagnostics& d) {
  d.asymmetry = (values - values.transpose()).norm();
  Eigen::SelfAdjointEigenSolver<Tensor<Dim>> es(symmetric_part<Dim>(values),
                                                Eigen::EigenvaluesOnly);
  d.spectral_min = es.eigenvalues()(0);
  d.spectral_max = es.eigenvalues()(Dim - 1);
}

/// Representative with zero mean in the mass inner product.
inline void remove_mean(const SparseSym& mass, Matrix& x) {
  const Vector ones = Vector::Ones(mass.size());
  const Vector m1 = mass.apply(ones);
  const double total = ones.dot(m1);
  for (long c = 0; c < x.cols(); ++c) x.col(c).array() -= m1.dot(x.col(c)) / total;
}

inline void check_params(const MethodParams& p, double grid_side) {
  if (!(p.R > 0.0)) throw InvalidInput("cell side R must be > 0");
  if (std::abs(grid_side - p.R) > 1e-12 * p.R)
    throw InvalidInput("grid side does not match parameter R");
  if (!(p.L > 0.0) || p.L > p.R * (1.0 + 1e-12))
    throw InvalidInput("averaging side L must lie in (0, R]");
  if (!(p.T > 0.0)) throw InvalidInput("time T must be > 0");
  if (p.q < 0) throw InvalidInput("filter order q must be >= 0");
}

} // namespace detail

template <int Dim>
FemSystem<Dim> assemble_cell(const TensorField<Dim>& field, double R, double h, Boundary bc,
                             const AssemblyOptions& options = {}) {
  return assemble(field, grid_for_mesh_size<Dim>(R, h, bc), options);
}

/// Periodic corrector problems on K_R (R a whole number of periods) and the
/// energy form (1/|K_R|) int (e_i + grad chi^i) . a (e_j + grad chi^j).
template <int Dim>
HomogenizedTensor<Dim> solve_periodic_cell(const TensorField<Dim>& field, double R, double h,
                                           const SolveOptions& options = {}) {
  const auto start = detail::Clock::now();
  if (!field.period())
    throw InvalidInput("periodic cell problem needs a periodic field ('" + field.name() + "')");
  const double periods = R / *field.period();
  if (!(periods >= 1.0 - 1e-12) || std::abs(periods - std::round(periods)) > 1e-9)
    throw InvalidInput("periodic cell side must be a whole number of field periods");
  const FemSystem<Dim> sys = assemble_cell(field, R, h, Boundary::periodic, options.assembly);
  const SpdSolver solver(sys.stiffness, options.linear, true);
  Matrix chis = solver.solve(sys.loads);
  detail::remove_mean(sys.mass, chis);

  HomogenizedTensor<Dim> out;
  out.method = Method::periodic;
  out.params.R = R;
  out.params.L = R;
  out.values = detail::symmetric_part<Dim>(energy_matrix(sys.grid, field, chis, sys.quad_points));
  out.correctors = std::move(chis);
  out.diagnostics.solver_iterations = solver.iterations();
  detail::fill_spectrum<Dim>(out.values, out.diagnostics);
  out.diagnostics.wall_ms = detail::elapsed_ms(start);
  return out;
}

/// Reference tensor a0 from the periodic corrector problems on the unit cell
/// K = [-1/2, 1/2]^d.
template <int Dim>
HomogenizedTensor<Dim> solve_periodic_reference(const TensorField<Dim>& field, double h,
                                                const SolveOptions& options = {}) {
  if (!field.period() || std::abs(*field.period() - 1.0) > 1e-12)
    throw InvalidInput("periodic reference needs a field of period 1 ('" + field.name() + "')");
  return solve_periodic_cell(field, 1.0, h, options);
}

/// Dirichlet cell problems K psi^i = b^i on K_R and
/// a^{0,R} = |K_R|^{-1} [int a - psi' K psi].
template <int Dim>
HomogenizedTensor<Dim> solve_elliptic_dirichlet(const FemSystem<Dim>& sys,
                                                const TensorField<Dim>& field,
                                                const SolveOptions& options = {}) {
  const auto start = detail::Clock::now();
  if (sys.grid.bc() != Boundary::dirichlet)
    throw InvalidInput("elliptic method needs a Dirichlet system");
  const SpdSolver solver(sys.stiffness, options.linear);
  Matrix psi = solver.solve(sys.loads);
  const double R = sys.grid.side();
  const BoxFilter<Dim> whole(make_filter(0), R);
  const Tensor<Dim> average =
      filtered_flux_matrix(sys.grid, field, whole, Matrix::Zero(sys.dofs(), Dim), sys.quad_points);
  const Matrix energy = psi.transpose() * sys.stiffness.apply(psi);

  HomogenizedTensor<Dim> out;
  out.method = Method::elliptic;
  out.params.R = R;
  out.params.L = R;
  out.values = detail::symmetric_part<Dim>(average - Tensor<Dim>(energy) / sys.grid.volume());
  out.correctors = std::move(psi);
  out.diagnostics.solver_iterations = solver.iterations();
  detail::fill_spectrum<Dim>(out.values, out.diagnostics);
  out.diagnostics.wall_ms = detail::elapsed_ms(start);
  return out;
}

template <int Dim>
HomogenizedTensor<Dim> solve_elliptic_dirichlet(const TensorField<Dim>& field, double R, double h,
                                                const SolveOptions& options = {}) {
  const auto start = detail::Clock::now();
  const auto sys = assemble_cell(field, R, h, Boundary::dirichlet, options.assembly);
  auto out = solve_elliptic_dirichlet(sys, field, options);
  out.diagnostics.wall_ms = detail::elapsed_ms(start);
  return out;
}

/// Initial condition of the heat-type cell problem: the L2 projection of the
/// weak divergence, M u0 = b^i.
template <int Dim>
Matrix initial_condition(const FemSystem<Dim>& sys, const LinearSolverOptions& linear = {}) {
  return SpdSolver(sys.mass, linear).solve(sys.loads);
}

/// Integrates M u' = -K u, u(0) = M^{-1} b^i, for all directions up to T and
/// accumulates, per averaging window, int_0^T u^i' W u^j dt by the trapezoidal
/// rule on accepted steps.
template <int Dim>
ParabolicTrajectory<Dim> evolve_parabolic(const FemSystem<Dim>& sys,
                                          const TensorField<Dim>& field, double T,
                                          const std::vector<BoxFilter<Dim>>& filters,
                                          const SolveOptions& options = {}) {
  const auto start = detail::Clock::now();
  if (sys.grid.bc() != Boundary::dirichlet)
    throw InvalidInput("parabolic method needs a Dirichlet system");
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInput("horizon T must be positive and finite");

  ParabolicTrajectory<Dim> traj{sys.grid, field.name(), sys.quad_points};
  traj.final_time = T;
  for (const auto& f : filters)
    traj.windows.push_back(
        FilterWindow<Dim>{f, weighted_mass(sys.grid, f, sys.quad_points), Tensor<Dim>::Zero(), {}});

  traj.initial = initial_condition(sys, options.linear);
  const long n = sys.dofs();
  traj.time_integral = Matrix::Zero(n, Dim);

  auto gram = [](const SparseSym& w, const Matrix& u) {
    const Matrix g = u.transpose() * w.apply(u);
    return detail::symmetric_part<Dim>(Tensor<Dim>(g));
  };
  auto record = [&](double t, const Matrix& u, const Tensor<Dim>& mass_gram) {
    traj.times.push_back(t);
    std::array<double, Dim> norms{};
    for (int i = 0; i < Dim; ++i) norms[i] = std::sqrt(std::max(0.0, mass_gram(i, i)));
    traj.l2_norms.push_back(norms);
    if (options.keep_states) traj.states.push_back(u);
  };

  Tensor<Dim> prev_mass = gram(sys.mass, traj.initial);
  std::vector<Tensor<Dim>> prev(traj.windows.size());
  for (std::size_t k = 0; k < traj.windows.size(); ++k)
    prev[k] = gram(traj.windows[k].weight, traj.initial);
  record(0.0, traj.initial, prev_mass);

  Sdirk2 stepper(sys.stiffness, sys.mass, options.time);
  traj.final_state = stepper.integrate(
      traj.initial, T, [&](double t0, const Matrix& u0, double t1, const Matrix& u1) {
        const double dt = t1 - t0;
        traj.time_integral.noalias() += (0.5 * dt) * (u0 + u1);
        const Tensor<Dim> next_mass = gram(sys.mass, u1);
        traj.mass_integral += (0.5 * dt) * (prev_mass + next_mass);
        prev_mass = next_mass;
        for (std::size_t k = 0; k < traj.windows.size(); ++k) {
          auto& w = traj.windows[k];
          const Tensor<Dim> next = gram(w.weight, u1);
          w.accumulated += (0.5 * dt) * (prev[k] + next);
          w.history.push_back(w.accumulated);
          prev[k] = next;
        }
        record(t1, u1, next_mass);
      });
  traj.stats = stepper.stats();
  traj.wall_ms = detail::elapsed_ms(start);
  return traj;
}

template <int Dim>
ParabolicTrajectory<Dim> evolve_parabolic(const TensorField<Dim>& field, double R, double h,
                                          double T, const std::vector<BoxFilter<Dim>>& filters,
                                          const SolveOptions& options = {}) {
  const auto sys = assemble_cell(field, R, h, Boundary::dirichlet, options.assembly);
  return evolve_parabolic(sys, field, T, filters, options);
}

/// a^{0,R,L,T} = int_{K_L} a mu_L - 2 int_0^T (u^i, u^j)_{mu_L} dt from a
/// finished trajectory whose windows include (L, q).
template <int Dim>
HomogenizedTensor<Dim> upscale_parabolic(const TensorField<Dim>& field, const MethodParams& params,
                                         const ParabolicTrajectory<Dim>& traj) {
  const auto start = detail::Clock::now();
  detail::check_params(params, traj.grid.side());
  if (field.name() != traj.field_name)
    throw InvalidInput("trajectory was computed for field '" + traj.field_name + "'");
  if (std::abs(traj.final_time - params.T) > 1e-12 * params.T)
    throw InvalidInput("trajectory horizon does not match parameter T");
  const FilterWindow<Dim>* window = nullptr;
  for (const auto& w : traj.windows)
    if (w.filter.q() == params.q && std::abs(w.filter.side() - params.L) <= 1e-12 * params.R)
      window = &w;
  if (!window) {
    std::ostringstream msg;
    msg << "trajectory has no filtered products for L = " << params.L << ", q = " << params.q;
    throw InvalidInput(msg.str());
  }
  const Tensor<Dim> average = filtered_flux_matrix(
      traj.grid, field, window->filter, Matrix::Zero(traj.grid.dof_count(), Dim), traj.quad_points);

  HomogenizedTensor<Dim> out;
  out.method = Method::parabolic;
  out.params = params;
  out.values = detail::symmetric_part<Dim>(average - 2.0 * window->accumulated);
  out.diagnostics.time_steps = traj.stats.accepted;
  out.diagnostics.rejected_steps = traj.stats.rejected;
  out.diagnostics.factorizations = traj.stats.factorizations;
  out.diagnostics.energy_increases = traj.stats.energy_increases;
  out.diagnostics.solver_iterations = traj.stats.solver_iterations;
  out.diagnostics.warnings = params.warnings;
  detail::fill_spectrum<Dim>(out.values, out.diagnostics);
  out.diagnostics.wall_ms = traj.wall_ms + detail::elapsed_ms(start);
  return out;
}

template <int Dim>
HomogenizedTensor<Dim> solve_parabolic(const TensorField<Dim>& field, const MethodParams& params,
                                       double h, const SolveOptions& options = {}) {
  detail::check_params(params, params.R);
  const auto traj = evolve_parabolic(field, params.R, h, params.T,
                                     {BoxFilter<Dim>(make_filter(params.q), params.L)}, options);
  return upscale_parabolic(field, params, traj);
}

/// Modified elliptic cell problems K chi^i = b^i - sum_k e^{-lambda_k T}
/// (phi_k . b^i) M phi_k and the one-sided filtered flux average.
template <int Dim>
HomogenizedTensor<Dim> solve_modified_elliptic(const FemSystem<Dim>& sys,
                                               const TensorField<Dim>& field,
                                               const MethodParams& params, const EigPairs& modes,
                                               const SolveOptions& options = {}) {
  const auto start = detail::Clock::now();
  if (sys.grid.bc() != Boundary::dirichlet)
    throw InvalidInput("modified elliptic method needs a Dirichlet system");
  detail::check_params(params, sys.grid.side());
  if (params.N < 1) throw InvalidInput("modified elliptic method needs N >= 1");
  if (params.N > modes.count())
    throw InvalidInput("eigen bundle holds fewer than N modes");
  if (modes.vectors.rows() != sys.dofs())
    throw InvalidInput("eigen bundle does not match the system size");

  const Matrix phi = modes.vectors.leftCols(params.N);
  Matrix g = phi.transpose() * sys.loads; // N x d
  for (int k = 0; k < params.N; ++k) g.row(k) *= std::exp(-modes.lambdas[k] * params.T);
  const Matrix rhs = sys.loads - sys.mass.apply(Matrix(phi * g));
  const SpdSolver solver(sys.stiffness, options.linear);
  Matrix chis = solver.solve(rhs);

  const BoxFilter<Dim> filter(make_filter(params.q), params.L);
  HomogenizedTensor<Dim> out;
  out.method = Method::modified_elliptic;
  out.params = params;
  out.values = filtered_flux_matrix(sys.grid, field, filter, chis, sys.quad_points);
  out.correctors = std::move(chis);
  out.diagnostics.solver_iterations = solver.iterations() + modes.inner_iterations;
  out.diagnostics.warnings = params.warnings;
  detail::fill_spectrum<Dim>(out.values, out.diagnostics);
  if (options.symmetrize) {
    out.values = detail::symmetric_part<Dim>(out.values);
    out.diagnostics.warnings.push_back("output symmetrized; asymmetry refers to the raw tensor");
  }
  out.diagnostics.wall_ms = detail::elapsed_ms(start);
  return out;
}

template <int Dim>
HomogenizedTensor<Dim> solve_modified_elliptic(const TensorField<Dim>& field,
                                               const MethodParams& params, double h,
                                               const SolveOptions& options = {}) {
  const auto start = detail::Clock::now();
  detail::check_params(params, params.R);
  const auto sys = assemble_cell(field, params.R, h, Boundary::dirichlet, options.assembly);
  if (params.N > sys.dofs())
    throw InvalidInput("N = " + std::to_string(params.N) + " exceeds the " +
                       std::to_string(sys.dofs()) + " unknowns of the cell problem");
  const EigPairs modes = smallest_eigpairs(sys.stiffness, sys.mass, params.N, options.eigen);
  auto out = solve_modified_elliptic(sys, field, params, modes, options);
  out.diagnostics.eigen_residual =
      check_eigpairs(sys.stiffness, sys.mass, modes).max_relative_residual;
  out.diagnostics.wall_ms = detail::elapsed_ms(start);
  return out;
}

} // namespace cellhom
