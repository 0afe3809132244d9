#pragma once

#include <cellhom/errors.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace cellhom {

template <int Dim> using Point = Eigen::Matrix<double, Dim, 1>;
template <int Dim> using Tensor = Eigen::Matrix<double, Dim, Dim>;

/// Symmetric, uniformly elliptic coefficient a(y) with bounds
/// alpha |z|^2 <= z.a(y)z <= beta |z|^2. Immutable once built, so a single
/// instance can be evaluated from several threads.
template <int Dim> class TensorField {
  static_assert(Dim >= 1 && Dim <= 3, "only d = 1, 2, 3 are supported");

public:
  using Eval = std::function<Tensor<Dim>(const Point<Dim>&)>;
  static constexpr int dim = Dim;

  TensorField(std::string name, Eval eval, double alpha, double beta,
              std::optional<double> period = std::nullopt)
      : name_(std::move(name)), eval_(std::move(eval)), alpha_(alpha), beta_(beta),
        period_(period) {
    if (!eval_) throw InvalidInput("TensorField: empty evaluation callable");
    if (!(alpha > 0.0) || !(beta >= alpha))
      throw InvalidInput("TensorField: need 0 < alpha <= beta");
    if (period && !(*period > 0.0)) throw InvalidInput("TensorField: period must be positive");
  }

  const std::string& name() const noexcept { return name_; }
  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }
  const std::optional<double>& period() const noexcept { return period_; }

  /// Unchecked evaluation, used in assembly inner loops.
  Tensor<Dim> operator()(const Point<Dim>& y) const { return eval_(y); }

private:
  std::string name_;
  Eval eval_;
  double alpha_;
  double beta_;
  std::optional<double> period_;
};

template <int Dim> Tensor<Dim> eval_tensor(const TensorField<Dim>& field, const Point<Dim>& y) {
  if (!y.allFinite()) throw InvalidInput("eval_tensor: non-finite evaluation point");
  return field(y);
}

// ---------------------------------------------------------------------------
// Built-in coefficients

template <int Dim> TensorField<Dim> constant_field(double value) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw InvalidInput("constant field needs a positive finite value");
  const Tensor<Dim> a = value * Tensor<Dim>::Identity();
  std::ostringstream name;
  name << "constant:" << value;
  // Any period is valid for a constant; 1 lets it feed the periodic reference.
  return TensorField<Dim>(name.str(), [a](const Point<Dim>&) { return a; }, value, value, 1.0);
}

namespace detail {
inline double benchmark_a11(double y1) {
  const double s17 = std::sqrt(17.0);
  return 1.0 / (3.0 + 2.0 * s17 / (8.0 * std::sin(2.0 * std::numbers::pi * y1) + 9.0));
}
inline double benchmark_a22(double y2) {
  const double s17 = std::sqrt(17.0);
  return 1.0 / (0.05 + 2.0 * s17 / (8.0 * std::cos(2.0 * std::numbers::pi * y2) + 9.0));
}
} // namespace detail

/// Diagonal 2x2 laminate-type benchmark: a11 depends on y1 only, a22 on y2 only.
/// Its homogenized tensor is diag(1/5, 20/41).
inline TensorField<2> benchmark_tensor_2d() {
  const double s17 = std::sqrt(17.0);
  // Each entry is monotone in 8 sin + 9 (resp. 8 cos + 9), which ranges over [1, 17].
  const double a11_min = 1.0 / (3.0 + 2.0 * s17);
  const double a11_max = 1.0 / (3.0 + 2.0 * s17 / 17.0);
  const double a22_min = 1.0 / (0.05 + 2.0 * s17);
  const double a22_max = 1.0 / (0.05 + 2.0 * s17 / 17.0);
  auto eval = [](const Point<2>& y) {
    Tensor<2> a = Tensor<2>::Zero();
    a(0, 0) = detail::benchmark_a11(y[0]);
    a(1, 1) = detail::benchmark_a22(y[1]);
    return a;
  };
  return TensorField<2>("paper-2d", eval, std::min(a11_min, a22_min),
                        std::max(a11_max, a22_max), 1.0);
}

/// Two-phase checkerboard on cells of side 1/2 (period 1). In 1D this is a
/// laminate with harmonic-mean homogenized value.
template <int Dim> TensorField<Dim> checkerboard_field(double a1, double a2) {
  if (!(a1 > 0.0) || !(a2 > 0.0)) throw InvalidInput("checkerboard phases must be positive");
  auto eval = [a1, a2](const Point<Dim>& y) {
    long parity = 0;
    for (int k = 0; k < Dim; ++k) parity += static_cast<long>(std::floor(2.0 * y[k]));
    const double v = (parity % 2 == 0) ? a1 : a2;
    return Tensor<Dim>(v * Tensor<Dim>::Identity());
  };
  std::ostringstream name;
  name << "checkerboard:" << a1 << ":" << a2;
  return TensorField<Dim>(name.str(), eval, std::min(a1, a2), std::max(a1, a2), 1.0);
}

/// Isotropic a(y) = (mean + amplitude * prod_k sin(2 pi y_k)) I.
template <int Dim> TensorField<Dim> sinusoidal_field(double mean, double amplitude) {
  if (!(mean > std::abs(amplitude))) throw InvalidInput("sinusoidal field must stay positive");
  auto eval = [mean, amplitude](const Point<Dim>& y) {
    double s = 1.0;
    for (int k = 0; k < Dim; ++k) s *= std::sin(2.0 * std::numbers::pi * y[k]);
    return Tensor<Dim>((mean + amplitude * s) * Tensor<Dim>::Identity());
  };
  std::ostringstream name;
  name << "sinusoidal:" << mean << ":" << amplitude;
  return TensorField<Dim>(name.str(), eval, mean - std::abs(amplitude),
                          mean + std::abs(amplitude), 1.0);
}

// ---------------------------------------------------------------------------
// Catalog

/// Name-addressable factories. Specs look like `name` or `name:arg1:arg2`.
template <int Dim> class FieldCatalog {
public:
  using Factory = std::function<TensorField<Dim>(const std::vector<double>&)>;

  static FieldCatalog& instance() {
    static FieldCatalog catalog;
    return catalog;
  }

  void add(const std::string& name, Factory factory) { factories_[name] = std::move(factory); }

  bool contains(const std::string& name) const { return factories_.count(name) != 0; }

  TensorField<Dim> make(const std::string& descriptor) const {
    auto [name, args] = parse(descriptor);
    auto it = factories_.find(name);
    if (it == factories_.end())
      throw ConfigError("unknown field '" + name + "' for d = " + std::to_string(Dim));
    return it->second(args);
  }

  static std::pair<std::string, std::vector<double>> parse(const std::string& descriptor) {
    std::vector<std::string> parts;
    std::string token;
    std::istringstream in(descriptor);
    while (std::getline(in, token, ':')) parts.push_back(token);
    if (parts.empty() || parts.front().empty()) throw ConfigError("empty field descriptor");
    std::vector<double> args;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      try {
        std::size_t used = 0;
        args.push_back(std::stod(parts[i], &used));
        if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
      } catch (const std::exception&) {
        throw ConfigError("field descriptor '" + descriptor + "': bad numeric argument '" +
                          parts[i] + "'");
      }
    }
    return {parts.front(), args};
  }

private:
  FieldCatalog() {
    add("constant", [](const std::vector<double>& args) {
      expect_args("constant", args, 1);
      return constant_field<Dim>(args[0]);
    });
    add("checkerboard", [](const std::vector<double>& args) {
      expect_args("checkerboard", args, 2);
      return checkerboard_field<Dim>(args[0], args[1]);
    });
    add("sinusoidal", [](const std::vector<double>& args) {
      expect_args("sinusoidal", args, 2);
      return sinusoidal_field<Dim>(args[0], args[1]);
    });
    if constexpr (Dim == 2) {
      add("paper-2d", [](const std::vector<double>& args) {
        expect_args("paper-2d", args, 0);
        return benchmark_tensor_2d();
      });
    }
  }

  static void expect_args(const char* name, const std::vector<double>& args, std::size_t n) {
    if (args.size() != n)
      throw ConfigError(std::string("field '") + name + "' takes " + std::to_string(n) +
                        " argument(s)");
  }

  std::map<std::string, Factory> factories_;
};

template <int Dim> TensorField<Dim> make_field(const std::string& descriptor) {
  return FieldCatalog<Dim>::instance().make(descriptor);
}

/// Dimension implied by a field descriptor, or `fallback` when the field works in any d.
inline int field_dimension(const std::string& descriptor, int fallback) {
  const auto name = FieldCatalog<1>::parse(descriptor).first;
  if (name == "paper-2d") return 2;
  return fallback;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct SpectralRange {
  double min = 0.0;
  double max = 0.0;
};

/// Min/max eigenvalue of a(y) over a uniform grid of `per_axis`^d points
/// covering [0, extent)^d. Diagnostic only: sampling cannot certify bounds.
template <int Dim>
SpectralRange estimate_bounds(const TensorField<Dim>& field, int per_axis = 64,
                              double extent = 1.0) {
  if (per_axis < 1) throw InvalidInput("estimate_bounds: need at least one sample per axis");
  SpectralRange range{std::numeric_limits<double>::infinity(),
                      -std::numeric_limits<double>::infinity()};
  long total = 1;
  for (int k = 0; k < Dim; ++k) total *= per_axis;
  for (long idx = 0; idx < total; ++idx) {
    Point<Dim> y;
    long rest = idx;
    for (int k = 0; k < Dim; ++k) {
      y[k] = extent * (static_cast<double>(rest % per_axis) + 0.5) / per_axis;
      rest /= per_axis;
    }
    Eigen::SelfAdjointEigenSolver<Tensor<Dim>> es(field(y), Eigen::EigenvaluesOnly);
    range.min = std::min(range.min, es.eigenvalues()(0));
    range.max = std::max(range.max, es.eigenvalues()(Dim - 1));
  }
  return range;
}

struct FieldCheck {
  double max_asymmetry = 0.0;
  long bound_violations = 0;
  double max_period_defect = 0.0;
};

/// Random spot check of symmetry, ellipticity bounds and (if set) periodicity.
template <int Dim>
FieldCheck check_field(const TensorField<Dim>& field, int samples, std::uint64_t seed = 42,
                       double box = 4.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-box / 2, box / 2);
  std::normal_distribution<double> gauss;
  FieldCheck out;
  for (int s = 0; s < samples; ++s) {
    Point<Dim> y;
    Point<Dim> z;
    for (int k = 0; k < Dim; ++k) {
      y[k] = coord(rng);
      z[k] = gauss(rng);
    }
    const Tensor<Dim> a = eval_tensor(field, y);
    out.max_asymmetry = std::max(out.max_asymmetry, (a - a.transpose()).cwiseAbs().maxCoeff());
    const double q = z.dot(a * z);
    const double zz = z.squaredNorm();
    const double slack = 1e-12 * field.beta() * zz;
    if (q < field.alpha() * zz - slack || q > field.beta() * zz + slack) ++out.bound_violations;
    if (field.period()) {
      for (int k = 0; k < Dim; ++k) {
        Point<Dim> shifted = y;
        shifted[k] += *field.period();
        out.max_period_defect =
            std::max(out.max_period_defect, (eval_tensor(field, shifted) - a).cwiseAbs().maxCoeff());
      }
    }
  }
  return out;
}

} // namespace cellhom
