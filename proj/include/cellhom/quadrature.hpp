#pragma once

#include <cellhom/errors.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace cellhom {

/// Gauss-Legendre rule mapped to [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int size() const { return static_cast<int>(nodes.size()); }
};

inline GaussRule gauss_legendre(int points) {
  if (points < 1 || points > 64) throw InvalidInput("gauss_legendre: 1..64 points supported");
  GaussRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  const int half = (points + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Newton on P_n starting from the Chebyshev-like guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= points; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = points * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.weights[i] = 0.5 * w;
    rule.nodes[points - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[points - 1 - i] = 0.5 * w;
  }
  return rule;
}

/// Composite Gauss-Legendre integral of f over [a, b] with `panels` equal panels.
template <typename F>
double integrate_1d(F&& f, double a, double b, int panels = 64, int points = 20) {
  static thread_local GaussRule cached;
  if (cached.size() != points) cached = gauss_legendre(points);
  const double width = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double left = a + p * width;
    double panel = 0.0;
    for (int q = 0; q < points; ++q) panel += cached.weights[q] * f(left + width * cached.nodes[q]);
    sum += panel * width;
  }
  return sum;
}

} // namespace cellhom
