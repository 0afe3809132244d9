#pragma once

#include <cellhom/errors.hpp>
#include <cellhom/tensor_field.hpp>

#include <cmath>

namespace cellhom {

/// Averaging kernel on [-1/2, 1/2] of smoothness order q:
///   q = 0:  the indicator of [-1/2, 1/2],
///   q >= 1: c_q (1/4 - y^2)^q, whose derivatives of order < q vanish at +-1/2.
/// c_q = (2q+1)! / (q!)^2 gives unit mass.
class Filter {
public:
  explicit Filter(int q) : q_(q) {
    if (q < 0) throw InvalidInput("filter order q must be >= 0");
    if (q > 0) {
      // log of (2q+1)! / (q!)^2
      normalization_ = std::exp(std::lgamma(2.0 * q + 2.0) - 2.0 * std::lgamma(q + 1.0));
    }
  }

  int q() const noexcept { return q_; }
  double normalization() const noexcept { return normalization_; }

  double operator()(double y) const {
    if (std::abs(y) > 0.5) return 0.0;
    if (q_ == 0) return 1.0;
    return normalization_ * std::pow(0.25 - y * y, q_);
  }

private:
  int q_;
  double normalization_ = 1.0;
};

inline Filter make_filter(int q) { return Filter(q); }

/// Tensor-product extension mu_L(y) = L^{-d} prod_i mu(y_i / L), supported on
/// K_L = [-L/2, L/2]^d.
template <int Dim> class BoxFilter {
public:
  BoxFilter(Filter base, double side) : base_(base), side_(side) {
    if (!(side > 0.0) || !std::isfinite(side)) throw InvalidInput("filter side L must be > 0");
    scale_ = std::pow(side, -Dim);
  }

  const Filter& base() const noexcept { return base_; }
  double side() const noexcept { return side_; }
  int q() const noexcept { return base_.q(); }

  double operator()(const Point<Dim>& y) const {
    double v = scale_;
    for (int k = 0; k < Dim; ++k) {
      v *= base_(y[k] / side_);
      if (v == 0.0) return 0.0;
    }
    return v;
  }

  /// True if y lies in the closed box K_L.
  bool contains(const Point<Dim>& y) const {
    for (int k = 0; k < Dim; ++k)
      if (std::abs(y[k]) > 0.5 * side_) return false;
    return true;
  }

private:
  Filter base_;
  double side_;
  double scale_ = 1.0;
};

template <int Dim> double eval_box_filter(const BoxFilter<Dim>& filter, const Point<Dim>& y) {
  return filter(y);
}

} // namespace cellhom
