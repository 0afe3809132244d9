#pragma once

#include <cellhom/errors.hpp>
#include <cellhom/sparse.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace cellhom {

/// Step-size control for the heat-type system M u' = -K u.
struct TimeControl {
  double tol = 1e-5;
  double dt_initial = 0.0; // 0 picks a step from the stiffness Rayleigh quotient
  double dt_min = 1e-13;
  long max_steps = 2'000'000;
  double safety = 0.9;
  double grow_max = 4.0;
  double shrink_min = 0.2;
  /// Steps are rounded down to T * 2^(k / levels) so direct factorizations of
  /// M + gamma dt K can be reused; 0 disables rounding.
  int levels_per_octave = 4;
  int cached_factorizations = 3;
  LinearSolverOptions solver;
};

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long factorizations = 0;
  long solver_iterations = 0;
  long energy_increases = 0;
};

/// Two-stage, stiffly accurate SDIRK of order 2 (gamma = 1 - 1/sqrt 2), L-stable,
/// for M u' = -K u with several right-hand sides integrated together (one column
/// per direction). The embedded first-order solution u_n + dt f(Y1) drives the
/// controller; its difference is filtered through (M + gamma dt K)^{-1} M so
/// stiff components do not inflate the estimate.
class Sdirk2 {
public:
  static constexpr double gamma = 1.0 - 0.70710678118654752440;

  /// Called after every accepted step with (t_old, u_old, t_new, u_new).
  using Observer = std::function<void(double, const Matrix&, double, const Matrix&)>;

  Sdirk2(const SparseSym& stiffness, const SparseSym& mass, TimeControl control)
      : k_(stiffness), m_(mass), control_(control) {
    if (!(control_.tol > 0.0)) throw InvalidInput("time tolerance must be > 0");
  }

  const IntegrationStats& stats() const noexcept { return stats_; }

  Matrix integrate(const Matrix& initial, double final_time, const Observer& observe) {
    if (!(final_time > 0.0) || !std::isfinite(final_time))
      throw InvalidInput("final time T must be positive and finite");
    Matrix u = initial;
    const long cols = u.cols();
    std::vector<double> atol(cols);
    for (long c = 0; c < cols; ++c) atol[c] = control_.tol * u.col(c).cwiseAbs().maxCoeff();
    const Matrix mu0 = m_.apply(u);
    std::vector<double> energy(cols);
    for (long c = 0; c < cols; ++c) energy[c] = u.col(c).dot(mu0.col(c));

    double dt = control_.dt_initial;
    if (!(dt > 0.0)) {
      double rayleigh = 0.0;
      const Matrix ku = k_.apply(u);
      for (long c = 0; c < cols; ++c)
        if (energy[c] > 0.0) rayleigh = std::max(rayleigh, u.col(c).dot(ku.col(c)) / energy[c]);
      dt = rayleigh > 0.0 ? 0.5 * std::sqrt(control_.tol) / rayleigh : final_time;
    }
    dt = std::min(dt, final_time);

    double t = 0.0;
    while (t < final_time) {
      if (stats_.accepted + stats_.rejected >= control_.max_steps)
        throw IntegratorFailure("time integration exceeded " +
                                std::to_string(control_.max_steps) + " steps");
      // Land on T exactly; stretch the last step rather than leave a sliver.
      bool last = false;
      int level = quantize(dt, final_time);
      // Hysteresis: grow only when the controller allows two levels or more,
      // so a factorization is reused over many steps.
      if (level != no_level && current_ != no_level && level == current_ + 1) level = current_;
      double step = level == no_level ? dt : level_step(level, final_time);
      if (t + 1.05 * step >= final_time) {
        step = final_time - t;
        level = no_level;
        last = true;
      }
      if (step < control_.dt_min)
        throw IntegratorFailure("time step underflow (dt = " + std::to_string(step) +
                                " at t = " + std::to_string(t) + ")");

      const SpdSolver& solver = solver_for(level, step);
      if (level != no_level) current_ = level;
      const Matrix mu = m_.apply(u);
      const Matrix y1 = solver.solve(mu);
      const Matrix f1 = (y1 - u) / (gamma * step);
      const Matrix base = u + (1.0 - gamma) * step * f1;
      const Matrix y2 = solver.solve(Matrix(m_.apply(base)));
      const Matrix f2 = (y2 - base) / (gamma * step);
      const Matrix raw = gamma * step * (f2 - f1);
      const Matrix est = solver.solve(Matrix(m_.apply(raw)));

      double err = 0.0;
      for (long c = 0; c < cols; ++c) {
        if (atol[c] == 0.0) continue;
        const auto scale =
            (atol[c] + control_.tol * u.col(c).cwiseAbs().cwiseMax(y2.col(c).cwiseAbs()).array());
        err = std::max(err, std::sqrt((est.col(c).array() / scale).square().mean()));
      }
      if (!std::isfinite(err)) throw IntegratorFailure("non-finite error estimate");

      const double factor =
          err == 0.0 ? control_.grow_max
                     : std::clamp(control_.safety / std::sqrt(err), control_.shrink_min,
                                  control_.grow_max);
      if (err <= 1.0) {
        const double t_new = last ? final_time : t + step;
        const Matrix mu_new = m_.apply(y2);
        for (long c = 0; c < cols; ++c) {
          const double e = y2.col(c).dot(mu_new.col(c));
          if (e > energy[c] * (1.0 + 1e-10) + std::numeric_limits<double>::min())
            ++stats_.energy_increases;
          energy[c] = e;
        }
        if (observe) observe(t, u, t_new, y2);
        u = y2;
        t = t_new;
        ++stats_.accepted;
        dt = step * factor;
      } else {
        ++stats_.rejected;
        dt = step * factor;
      }
    }
    return u;
  }

private:
  static constexpr int no_level = std::numeric_limits<int>::min();

  int quantize(double dt, double final_time) const {
    if (control_.levels_per_octave <= 0 || control_.solver.kind != LinearSolverKind::direct)
      return no_level;
    return static_cast<int>(
        std::floor(std::log2(dt / final_time) * control_.levels_per_octave + 1e-9));
  }

  double level_step(int level, double final_time) const {
    return final_time * std::exp2(static_cast<double>(level) / control_.levels_per_octave);
  }

  const SpdSolver& solver_for(int level, double step) {
    if (level != no_level) {
      auto it = cache_.find(level);
      if (it != cache_.end()) {
        it->second.last_used = ++clock_;
        return *it->second.solver;
      }
    }
    auto solver = std::make_unique<SpdSolver>(m_.combined(1.0, k_, gamma * step), control_.solver);
    ++stats_.factorizations;
    if (level == no_level) {
      scratch_ = std::move(solver);
      return *scratch_;
    }
    if (static_cast<int>(cache_.size()) >= std::max(1, control_.cached_factorizations)) {
      auto oldest = cache_.begin();
      for (auto it = cache_.begin(); it != cache_.end(); ++it)
        if (it->second.last_used < oldest->second.last_used) oldest = it;
      stats_.solver_iterations += oldest->second.solver->iterations();
      cache_.erase(oldest);
    }
    auto& slot = cache_[level];
    slot.solver = std::move(solver);
    slot.last_used = ++clock_;
    return *slot.solver;
  }

  struct Slot {
    std::unique_ptr<SpdSolver> solver;
    long last_used = 0;
  };

  const SparseSym& k_;
  const SparseSym& m_;
  TimeControl control_;
  IntegrationStats stats_;
  std::map<int, Slot> cache_;
  std::unique_ptr<SpdSolver> scratch_;
  long clock_ = 0;
  int current_ = no_level;
};

} // namespace cellhom
