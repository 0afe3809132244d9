#pragma once

#include <cellhom/errors.hpp>
#include <cellhom/tensor_field.hpp>

#include <array>
#include <cmath>
#include <string>

namespace cellhom {

enum class Boundary { dirichlet, periodic };

inline std::string to_string(Boundary bc) {
  return bc == Boundary::dirichlet ? "dirichlet" : "periodic";
}

inline Boundary parse_boundary(const std::string& s) {
  if (s == "dirichlet") return Boundary::dirichlet;
  if (s == "periodic") return Boundary::periodic;
  throw ConfigError("unknown boundary condition '" + s + "'");
}

/// Uniform tensor-product Q1 grid on K_R = [-R/2, R/2]^d.
///
/// Nodes carry multi-indices k in {0..n}^d. With Dirichlet conditions the
/// boundary nodes are eliminated and the unknowns are the (n-1)^d interior
/// nodes; with periodic conditions node n is identified with node 0, leaving
/// n^d unknowns. Cells and unknowns are numbered with axis 0 fastest.
template <int Dim> class Grid {
public:
  static constexpr int dim = Dim;
  static constexpr int corners = 1 << Dim;
  using Index = std::array<int, Dim>;

  Grid(double side, int cells, Boundary bc) : side_(side), cells_(cells), bc_(bc) {
    if (!(side > 0.0) || !std::isfinite(side)) throw InvalidInput("grid side R must be > 0");
    if (cells < 2) throw InvalidInput("grid needs at least 2 cells per axis");
    const long per_axis = bc == Boundary::dirichlet ? cells - 1 : cells;
    dofs_ = ipow(per_axis);
    cell_count_ = ipow(cells);
  }

  double side() const noexcept { return side_; }
  int cells_per_axis() const noexcept { return cells_; }
  double h() const noexcept { return side_ / cells_; }
  Boundary bc() const noexcept { return bc_; }
  long cell_count() const noexcept { return cell_count_; }
  long dof_count() const noexcept { return dofs_; }
  long node_count() const noexcept {
    return bc_ == Boundary::dirichlet ? ipow(cells_ + 1L) : ipow(cells_);
  }
  double volume() const noexcept { return std::pow(side_, Dim); }

  /// Coordinate of grid line k along any axis.
  double coordinate(int k) const noexcept { return -0.5 * side_ + side_ * k / cells_; }

  Index cell_index(long cell) const noexcept {
    Index c{};
    for (int k = 0; k < Dim; ++k) {
      c[k] = static_cast<int>(cell % cells_);
      cell /= cells_;
    }
    return c;
  }

  /// Unknown attached to node multi-index `node`, or -1 if eliminated.
  long dof_of(const Index& node) const noexcept {
    long id = 0;
    long stride = 1;
    if (bc_ == Boundary::dirichlet) {
      for (int k = 0; k < Dim; ++k) {
        if (node[k] <= 0 || node[k] >= cells_) return -1;
        id += (node[k] - 1) * stride;
        stride *= cells_ - 1;
      }
    } else {
      for (int k = 0; k < Dim; ++k) {
        id += (node[k] % cells_) * stride;
        stride *= cells_;
      }
    }
    return id;
  }

  /// Unknowns of the 2^d cell corners; corner bit k selects the upper node on axis k.
  std::array<long, corners> cell_dofs(const Index& c) const noexcept {
    std::array<long, corners> dofs{};
    for (int b = 0; b < corners; ++b) {
      Index node = c;
      for (int k = 0; k < Dim; ++k) node[k] += (b >> k) & 1;
      dofs[b] = dof_of(node);
    }
    return dofs;
  }

  Point<Dim> cell_origin(const Index& c) const noexcept {
    Point<Dim> y;
    for (int k = 0; k < Dim; ++k) y[k] = coordinate(c[k]);
    return y;
  }

  /// Position of an unknown (wrap nodes report the lower copy).
  Point<Dim> dof_point(long dof) const noexcept {
    const int per_axis = bc_ == Boundary::dirichlet ? cells_ - 1 : cells_;
    const int offset = bc_ == Boundary::dirichlet ? 1 : 0;
    Point<Dim> y;
    for (int k = 0; k < Dim; ++k) {
      y[k] = coordinate(static_cast<int>(dof % per_axis) + offset);
      dof /= per_axis;
    }
    return y;
  }

private:
  long ipow(long base) const noexcept {
    long r = 1;
    for (int k = 0; k < Dim; ++k) r *= base;
    return r;
  }

  double side_;
  int cells_;
  Boundary bc_;
  long dofs_ = 0;
  long cell_count_ = 0;
};

template <int Dim> Grid<Dim> build_grid(double side, int cells, Boundary bc) {
  return Grid<Dim>(side, cells, bc);
}

/// Grid whose spacing is as close as possible to `target_h` while covering
/// exactly [-R/2, R/2]^d (the side length is never snapped).
template <int Dim> Grid<Dim> grid_for_mesh_size(double side, double target_h, Boundary bc) {
  if (!(target_h > 0.0)) throw InvalidInput("mesh size h must be > 0");
  if (!(side > 0.0)) throw InvalidInput("grid side R must be > 0");
  const long n = std::max(2L, std::lround(side / target_h));
  return Grid<Dim>(side, static_cast<int>(n), bc);
}

} // namespace cellhom
