#pragma once

#include <cellhom/errors.hpp>
#include <cellhom/filters.hpp>
#include <cellhom/grid.hpp>
#include <cellhom/quadrature.hpp>
#include <cellhom/sparse.hpp>
#include <cellhom/tensor_field.hpp>

#include <array>
#include <cmath>
#include <vector>

namespace cellhom {

/// Tensor-product Gauss rule on the reference cell [0,1]^d with Q1 shape
/// functions and their reference gradients tabulated at every point.
template <int Dim> struct CellQuadrature {
  static constexpr int corners = 1 << Dim;

  std::vector<Point<Dim>> points;
  std::vector<double> weights;
  std::vector<std::array<double, corners>> shape;
  std::vector<std::array<Point<Dim>, corners>> grad; // d/dxi, divide by h

  explicit CellQuadrature(int per_axis) {
    if (per_axis < 2) throw InvalidInput("cell quadrature needs >= 2 points per axis");
    const GaussRule rule = gauss_legendre(per_axis);
    long total = 1;
    for (int k = 0; k < Dim; ++k) total *= per_axis;
    for (long idx = 0; idx < total; ++idx) {
      Point<Dim> xi;
      double w = 1.0;
      long rest = idx;
      for (int k = 0; k < Dim; ++k) {
        const int q = static_cast<int>(rest % per_axis);
        rest /= per_axis;
        xi[k] = rule.nodes[q];
        w *= rule.weights[q];
      }
      std::array<double, corners> n{};
      std::array<Point<Dim>, corners> g{};
      for (int b = 0; b < corners; ++b) {
        double value = 1.0;
        Point<Dim> dv = Point<Dim>::Ones();
        for (int k = 0; k < Dim; ++k) {
          const bool upper = (b >> k) & 1;
          const double f = upper ? xi[k] : 1.0 - xi[k];
          const double df = upper ? 1.0 : -1.0;
          value *= f;
          for (int l = 0; l < Dim; ++l) dv[l] *= (l == k) ? df : f;
        }
        n[b] = value;
        g[b] = dv;
      }
      points.push_back(xi);
      weights.push_back(w);
      shape.push_back(n);
      grad.push_back(g);
    }
  }

  int size() const { return static_cast<int>(points.size()); }
};

struct AssemblyOptions {
  int quad_points = 2;
};

/// Discrete cell problem on a grid: stiffness (a grad phi_u . grad phi_v),
/// mass (phi_u phi_v) and the weak-divergence loads
/// b^i_v = -int a e_i . grad phi_v, one column per direction.
template <int Dim> struct FemSystem {
  Grid<Dim> grid;
  SparseSym stiffness;
  SparseSym mass;
  Matrix loads;
  int quad_points = 2;

  long dofs() const { return grid.dof_count(); }
};

namespace detail {

/// Visit every quadrature point of the cells in the index box [lo, hi)^d.
/// `visit(dofs, q, y, weight)` receives the cell unknowns, the point index in
/// the rule, the physical point and the physical weight.
template <int Dim, typename Visitor>
void for_each_point(const Grid<Dim>& grid, const CellQuadrature<Dim>& rule,
                    const typename Grid<Dim>::Index& lo, const typename Grid<Dim>::Index& hi,
                    Visitor&& visit) {
  const double h = grid.h();
  const double volume = std::pow(h, Dim);
  typename Grid<Dim>::Index c = lo;
  for (int k = 0; k < Dim; ++k)
    if (lo[k] >= hi[k]) return;
  while (true) {
    const auto dofs = grid.cell_dofs(c);
    const Point<Dim> origin = grid.cell_origin(c);
    for (int q = 0; q < rule.size(); ++q) {
      const Point<Dim> y = origin + h * rule.points[q];
      visit(dofs, q, y, rule.weights[q] * volume);
    }
    int k = 0;
    while (k < Dim) {
      if (++c[k] < hi[k]) break;
      c[k] = lo[k];
      ++k;
    }
    if (k == Dim) break;
  }
}

template <int Dim>
void all_cells(const Grid<Dim>& grid, typename Grid<Dim>::Index& lo,
               typename Grid<Dim>::Index& hi) {
  lo.fill(0);
  hi.fill(grid.cells_per_axis());
}

/// Cells meeting the interior of K_L.
template <int Dim>
void cells_in_box(const Grid<Dim>& grid, double side, typename Grid<Dim>::Index& lo,
                  typename Grid<Dim>::Index& hi) {
  const double h = grid.h();
  const double left = -0.5 * side;
  const double right = 0.5 * side;
  const int n = grid.cells_per_axis();
  // Cell c spans [coordinate(c), coordinate(c+1)].
  int first = static_cast<int>(std::floor((left + 0.5 * grid.side()) / h - 1e-9));
  int last = static_cast<int>(std::ceil((right + 0.5 * grid.side()) / h + 1e-9));
  first = std::max(0, first);
  last = std::min(n, last);
  lo.fill(first);
  hi.fill(last);
}

template <int Dim> void check_filter_fits(const Grid<Dim>& grid, double side) {
  if (side > grid.side() * (1.0 + 1e-12))
    throw InvalidInput("averaging box side L exceeds the cell side R");
}

template <int Dim>
double interpolate_at(const std::array<long, (1 << Dim)>& dofs,
                      const std::array<double, (1 << Dim)>& shape, const Vector& u) {
  double v = 0.0;
  for (int b = 0; b < (1 << Dim); ++b)
    if (dofs[b] >= 0) v += shape[b] * u[dofs[b]];
  return v;
}

} // namespace detail

template <int Dim>
FemSystem<Dim> assemble(const TensorField<Dim>& field, const Grid<Dim>& grid,
                        const AssemblyOptions& options = {}) {
  constexpr int corners = 1 << Dim;
  const CellQuadrature<Dim> rule(options.quad_points);
  const long n = grid.dof_count();
  const double h = grid.h();

  std::vector<Triplet> k_entries;
  std::vector<Triplet> m_entries;
  k_entries.reserve(static_cast<std::size_t>(grid.cell_count()) * corners * corners);
  m_entries.reserve(static_cast<std::size_t>(grid.cell_count()) * corners * corners);
  Matrix loads = Matrix::Zero(n, Dim);

  std::array<int, Dim> lo{};
  std::array<int, Dim> hi{};
  detail::all_cells(grid, lo, hi);

  // Accumulate one cell at a time; the visitor sees the cell's points in order.
  Eigen::Matrix<double, corners, corners> kloc = Eigen::Matrix<double, corners, corners>::Zero();
  Eigen::Matrix<double, corners, corners> mloc = Eigen::Matrix<double, corners, corners>::Zero();
  Eigen::Matrix<double, corners, Dim> bloc = Eigen::Matrix<double, corners, Dim>::Zero();
  detail::for_each_point(grid, rule, lo, hi, [&](const auto& dofs, int q, const Point<Dim>& y,
                                                 double w) {
    const Tensor<Dim> a = field(y);
    Eigen::Matrix<double, corners, Dim> g;
    for (int b = 0; b < corners; ++b) g.row(b) = rule.grad[q][b].transpose() / h;
    const Eigen::Matrix<double, corners, Dim> ga = g * a;
    kloc.noalias() += w * ga * g.transpose();
    for (int b = 0; b < corners; ++b)
      for (int c = 0; c < corners; ++c) mloc(b, c) += w * rule.shape[q][b] * rule.shape[q][c];
    // -(a e_i) . grad phi_b = -(g a)_(b, i) since a is symmetric.
    bloc.noalias() -= w * ga;
    if (q + 1 < rule.size()) return;
    for (int b = 0; b < corners; ++b) {
      if (dofs[b] < 0) continue;
      loads.row(dofs[b]) += bloc.row(b);
      for (int c = 0; c < corners; ++c) {
        if (dofs[c] < 0) continue;
        // Averaging with the transpose makes the stored matrices bitwise symmetric.
        k_entries.emplace_back(dofs[b], dofs[c], 0.5 * (kloc(b, c) + kloc(c, b)));
        m_entries.emplace_back(dofs[b], dofs[c], 0.5 * (mloc(b, c) + mloc(c, b)));
      }
    }
    kloc.setZero();
    mloc.setZero();
    bloc.setZero();
  });

  FemSystem<Dim> sys{grid, SparseSym::from_triplets(n, k_entries),
                     SparseSym::from_triplets(n, m_entries), std::move(loads),
                     options.quad_points};
  return sys;
}

/// Discrete mass sum_q w_q mu_L(y_q) of a filter on the grid's quadrature.
/// Filtered functionals divide by it so that constants average exactly for
/// every filter order.
template <int Dim>
double filter_mass(const Grid<Dim>& grid, const BoxFilter<Dim>& filter, int quad_points = 2) {
  detail::check_filter_fits(grid, filter.side());
  const CellQuadrature<Dim> rule(quad_points);
  std::array<int, Dim> lo{};
  std::array<int, Dim> hi{};
  detail::cells_in_box(grid, filter.side(), lo, hi);
  double mass = 0.0;
  detail::for_each_point(grid, rule, lo, hi,
                         [&](const auto&, int, const Point<Dim>& y, double w) {
                           mass += w * filter(y);
                         });
  if (!(mass > 0.0)) throw InvalidInput("averaging box contains no quadrature points");
  return mass;
}

/// int_{K_L} u_h v_h mu_L dy with mu_L sampled at the quadrature points and
/// normalized to unit discrete mass.
template <int Dim>
double filtered_bilinear(const Grid<Dim>& grid, const BoxFilter<Dim>& filter, const Vector& u,
                         const Vector& v, int quad_points = 2) {
  detail::check_filter_fits(grid, filter.side());
  if (u.size() != grid.dof_count() || v.size() != grid.dof_count())
    throw InvalidInput("filtered_bilinear: vector size does not match the grid");
  const CellQuadrature<Dim> rule(quad_points);
  std::array<int, Dim> lo{};
  std::array<int, Dim> hi{};
  detail::cells_in_box(grid, filter.side(), lo, hi);
  double sum = 0.0;
  double mass = 0.0;
  detail::for_each_point(grid, rule, lo, hi, [&](const auto& dofs, int q, const Point<Dim>& y,
                                                 double w) {
    const double mu = filter(y);
    if (mu == 0.0) return;
    mass += w * mu;
    sum += w * mu * detail::interpolate_at<Dim>(dofs, rule.shape[q], u) *
           detail::interpolate_at<Dim>(dofs, rule.shape[q], v);
  });
  if (!(mass > 0.0)) throw InvalidInput("averaging box contains no quadrature points");
  return sum / mass;
}

/// Sparse matrix W with u' W v == filtered_bilinear(grid, filter, u, v).
template <int Dim>
SparseSym weighted_mass(const Grid<Dim>& grid, const BoxFilter<Dim>& filter,
                        int quad_points = 2) {
  constexpr int corners = 1 << Dim;
  detail::check_filter_fits(grid, filter.side());
  const CellQuadrature<Dim> rule(quad_points);
  std::array<int, Dim> lo{};
  std::array<int, Dim> hi{};
  detail::cells_in_box(grid, filter.side(), lo, hi);
  std::vector<Triplet> entries;
  double mass = 0.0;
  Eigen::Matrix<double, corners, corners> loc = Eigen::Matrix<double, corners, corners>::Zero();
  detail::for_each_point(grid, rule, lo, hi, [&](const auto& dofs, int q, const Point<Dim>& y,
                                                 double w) {
    const double mu = filter(y);
    mass += w * mu;
    if (mu != 0.0)
      for (int b = 0; b < corners; ++b)
        for (int c = 0; c < corners; ++c)
          loc(b, c) += w * mu * rule.shape[q][b] * rule.shape[q][c];
    if (q + 1 < rule.size()) return;
    for (int b = 0; b < corners; ++b)
      for (int c = 0; c < corners; ++c)
        if (dofs[b] >= 0 && dofs[c] >= 0 && loc(b, c) != 0.0)
          entries.emplace_back(dofs[b], dofs[c], 0.5 * (loc(b, c) + loc(c, b)));
    loc.setZero();
  });
  if (!(mass > 0.0)) throw InvalidInput("averaging box contains no quadrature points");
  for (auto& e : entries) e = Triplet(e.row(), e.col(), e.value() / mass);
  return SparseSym::from_triplets(grid.dof_count(), entries);
}

/// Matrix F with F_ij = int_{K_L} (a_ij + sum_k a_ik d_k chi^j) mu_L dy, where
/// column j of `chis` holds chi^j. A zero-column `chis` gives the filtered
/// average of a itself.
template <int Dim>
Tensor<Dim> filtered_flux_matrix(const Grid<Dim>& grid, const TensorField<Dim>& field,
                                 const BoxFilter<Dim>& filter, const Matrix& chis,
                                 int quad_points = 2) {
  constexpr int corners = 1 << Dim;
  detail::check_filter_fits(grid, filter.side());
  if (chis.rows() != grid.dof_count() || chis.cols() != Dim)
    throw InvalidInput("filtered_flux_matrix: need one corrector column per direction");
  const CellQuadrature<Dim> rule(quad_points);
  const double h = grid.h();
  std::array<int, Dim> lo{};
  std::array<int, Dim> hi{};
  detail::cells_in_box(grid, filter.side(), lo, hi);
  Tensor<Dim> sum = Tensor<Dim>::Zero();
  double mass = 0.0;
  detail::for_each_point(grid, rule, lo, hi, [&](const auto& dofs, int q, const Point<Dim>& y,
                                                 double w) {
    const double mu = filter(y);
    if (mu == 0.0) return;
    mass += w * mu;
    // grad chi^j as column j
    Tensor<Dim> grad = Tensor<Dim>::Zero();
    for (int b = 0; b < corners; ++b) {
      if (dofs[b] < 0) continue;
      const Point<Dim> g = rule.grad[q][b] / h;
      for (int j = 0; j < Dim; ++j) grad.col(j) += chis(dofs[b], j) * g;
    }
    const Tensor<Dim> a = field(y);
    sum.noalias() += (w * mu) * (a + a * grad);
  });
  if (!(mass > 0.0)) throw InvalidInput("averaging box contains no quadrature points");
  return sum / mass;
}

/// Single entry (i, j) of filtered_flux_matrix for corrector chi = chi^j.
template <int Dim>
double filtered_flux_average(const Grid<Dim>& grid, const TensorField<Dim>& field,
                             const BoxFilter<Dim>& filter, const Vector& chi, int j, int i,
                             int quad_points = 2) {
  if (i < 0 || i >= Dim || j < 0 || j >= Dim) throw InvalidInput("direction index out of range");
  Matrix chis = Matrix::Zero(grid.dof_count(), Dim);
  if (chi.size() != grid.dof_count())
    throw InvalidInput("filtered_flux_average: vector size does not match the grid");
  chis.col(j) = chi;
  return filtered_flux_matrix(grid, field, filter, chis, quad_points)(i, j);
}

/// (1/|K|) int_K (e_i + grad chi^i) . a (e_j + grad chi^j) dy over the whole grid.
template <int Dim>
Tensor<Dim> energy_matrix(const Grid<Dim>& grid, const TensorField<Dim>& field,
                          const Matrix& chis, int quad_points = 2) {
  constexpr int corners = 1 << Dim;
  if (chis.rows() != grid.dof_count() || chis.cols() != Dim)
    throw InvalidInput("energy_matrix: need one corrector column per direction");
  const CellQuadrature<Dim> rule(quad_points);
  const double h = grid.h();
  std::array<int, Dim> lo{};
  std::array<int, Dim> hi{};
  detail::all_cells(grid, lo, hi);
  Tensor<Dim> sum = Tensor<Dim>::Zero();
  detail::for_each_point(grid, rule, lo, hi, [&](const auto& dofs, int q, const Point<Dim>& y,
                                                 double w) {
    Tensor<Dim> grad = Tensor<Dim>::Identity(); // column i: e_i + grad chi^i
    for (int b = 0; b < corners; ++b) {
      if (dofs[b] < 0) continue;
      const Point<Dim> g = rule.grad[q][b] / h;
      for (int i = 0; i < Dim; ++i) grad.col(i) += chis(dofs[b], i) * g;
    }
    sum.noalias() += w * grad.transpose() * field(y) * grad;
  });
  return sum / grid.volume();
}

/// Nodal interpolant of f on the grid unknowns.
template <int Dim, typename F> Vector interpolate(const Grid<Dim>& grid, F&& f) {
  Vector u(grid.dof_count());
  for (long i = 0; i < u.size(); ++i) u[i] = f(grid.dof_point(i));
  return u;
}

} // namespace cellhom
