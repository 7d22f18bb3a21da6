#pragma once

// Classical RK4 with step doubling: each step is taken once with h and twice
// with h/2; the difference estimates the local error and the two half steps
// are Richardson-extrapolated.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cavcool/types.hpp"

namespace cavcool {

struct IntegratorOptions {
  double tol = 1e-8;          // max-abs local error per step
  double initial_step = 1e-2;
  double max_step = 1.0;
  double min_step = 1e-12;    // relative to the grid span
};

struct IntegratorStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evaluations = 0;
  double last_step = 0.0;
};

namespace detail {

template <class State>
double max_abs(const State& s) {
  return s.cwiseAbs().maxCoeff();
}

template <class State, class Rhs>
State rk4_step(Rhs& f, double t, const State& y, double h, std::size_t& evals) {
  const State k1 = f(t, y);
  const State k2 = f(t + 0.5 * h, State(y + (0.5 * h) * k1));
  const State k3 = f(t + 0.5 * h, State(y + (0.5 * h) * k2));
  const State k4 = f(t + h, State(y + h * k3));
  evals += 4;
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Integrates dy/dt = f(t, y) through every point of `grid` (strictly
/// increasing, y given at grid[0]). `observe(i, t, y)` is called at each grid
/// point, including the first; `after_step(y)` after every accepted step.
template <class State, class Rhs, class Observer, class AfterStep>
IntegratorStats integrate_adaptive(Rhs&& f, State& y, std::span<const double> grid,
                                   const IntegratorOptions& opt, Observer&& observe,
                                   AfterStep&& after_step) {
  IntegratorStats stats;
  require(!grid.empty(), "empty time grid");
  for (std::size_t i = 1; i < grid.size(); ++i) require(grid[i] > grid[i - 1], "time grid must be strictly increasing");
  observe(std::size_t{0}, grid[0], y);
  const double span = grid.back() - grid.front();
  double h = std::min(opt.initial_step, opt.max_step);
  double t = grid[0];
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double target = grid[i];
    while (t < target) {
      const bool last = t + h >= target;
      const double step = last ? target - t : h;
      State full = detail::rk4_step(f, t, y, step, stats.rhs_evaluations);
      State half = detail::rk4_step(f, t, y, 0.5 * step, stats.rhs_evaluations);
      half = detail::rk4_step(f, t + 0.5 * step, half, 0.5 * step, stats.rhs_evaluations);
      const double err = detail::max_abs(State(half - full)) / 15.0;
      if (!std::isfinite(err)) throw Error("non-finite state during integration at t=" + std::to_string(t));
      if (err <= opt.tol) {
        y = half + (half - full) / 15.0;
        t = last ? target : t + step;
        after_step(y);
        ++stats.accepted;
        stats.last_step = step;
      } else {
        ++stats.rejected;
      }
      const double factor = err == 0.0 ? 4.0 : std::clamp(0.9 * std::pow(opt.tol / err, 0.2), 0.1, 4.0);
      // A step clipped to hit a grid point does not shrink the nominal step.
      const double base = (err <= opt.tol && last) ? std::max(h, step) : step;
      h = std::min(base * factor, opt.max_step);
      if (h < opt.min_step * std::max(1.0, span))
        throw Error("step-size underflow at t=" + std::to_string(t) + " (h=" + std::to_string(h) + ")");
    }
    observe(i, t, y);
  }
  return stats;
}

template <class State, class Rhs, class Observer>
IntegratorStats integrate_adaptive(Rhs&& f, State& y, std::span<const double> grid,
                                   const IntegratorOptions& opt, Observer&& observe) {
  return integrate_adaptive(std::forward<Rhs>(f), y, grid, opt, std::forward<Observer>(observe),
                            [](State&) {});
}

/// Uniform grid t0, t0+dt, ..., including t1 (the last spacing may be short).
inline std::vector<double> uniform_grid(double t0, double t1, double dt) {
  require(dt > 0.0 && t1 >= t0, "invalid grid parameters");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) g.push_back(t0 + static_cast<double>(k) * dt);
  if (t1 - g.back() > 1e-9 * dt) g.push_back(t1);
  return g;
}

}  // namespace cavcool
