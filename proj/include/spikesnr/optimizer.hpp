#pragma once

// Maximization of the analytic SNR over (τ, Δt), and the graded-weight
// generalization for a single unjittered pattern.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "spikesnr/analytic.hpp"
#include "spikesnr/core.hpp"
#include "spikesnr/parallel.hpp"

namespace spikesnr::optimizer {

// ---------------------------------------------------------------------------
// Nelder-Mead simplex (maximization)

template <std::size_t D>
struct SimplexResult {
  std::array<double, D> x{};
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

template <std::size_t D, typename F>
SimplexResult<D> nelder_mead_max(F&& objective, std::array<double, D> start,
                                 std::array<double, D> step, double x_tol = 1e-10,
                                 int max_iterations = 10000) {
  using Point = std::array<double, D>;
  std::array<Point, D + 1> pts;
  std::array<double, D + 1> val;
  pts[0] = start;
  for (std::size_t i = 0; i < D; ++i) {
    pts[i + 1] = start;
    pts[i + 1][i] += step[i];
  }
  for (std::size_t i = 0; i <= D; ++i) val[i] = objective(pts[i]);

  auto lerp = [](const Point& a, const Point& b, double t) {
    Point p;
    for (std::size_t k = 0; k < D; ++k) p[k] = a[k] + t * (b[k] - a[k]);
    return p;
  };

  int it = 0;
  for (; it < max_iterations; ++it) {
    std::array<std::size_t, D + 1> order;
    for (std::size_t i = 0; i <= D; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return val[a] > val[b]; });
    const std::size_t best = order[0], worst = order[D], second = order[D - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i <= D; ++i)
      for (std::size_t k = 0; k < D; ++k) spread = std::max(spread, std::abs(pts[i][k] - pts[best][k]));
    if (spread < x_tol) break;

    Point centroid{};
    for (std::size_t i = 0; i <= D; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < D; ++k) centroid[k] += pts[i][k] / static_cast<double>(D);
    }

    const Point reflected = lerp(centroid, pts[worst], -1.0);
    const double fr = objective(reflected);
    if (fr > val[best]) {
      const Point expanded = lerp(centroid, pts[worst], -2.0);
      const double fe = objective(expanded);
      if (fe > fr) {
        pts[worst] = expanded, val[worst] = fe;
      } else {
        pts[worst] = reflected, val[worst] = fr;
      }
      continue;
    }
    if (fr > val[second]) {
      pts[worst] = reflected, val[worst] = fr;
      continue;
    }
    const bool outside = fr > val[worst];
    const Point contracted = lerp(centroid, outside ? reflected : pts[worst], 0.5);
    const double fc = objective(contracted);
    if (fc > (outside ? fr : val[worst])) {
      pts[worst] = contracted, val[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= D; ++i) {
      if (i == best) continue;
      pts[i] = lerp(pts[best], pts[i], 0.5);
      val[i] = objective(pts[i]);
    }
  }

  const auto best = static_cast<std::size_t>(std::max_element(val.begin(), val.end()) - val.begin());
  return {pts[best], val[best], it};
}

// ---------------------------------------------------------------------------
// Binary-weight optimum over (τ, Δt)

// Below this τ·f·M the potential distribution is too skewed for the SNR to
// predict false alarms.
inline constexpr double kMinSynapticLoad = 10.0;

struct OptimalDetector {
  double tau = 0.0;
  double window = 0.0;
  double snr = 0.0;
  double m = 0.0;
  bool constraint_active = false;
};

struct SearchBox {
  double tau_min = 1e-4;
  double tau_max = 1.0;
  double window_min = 1e-4;
  double window_max = 1.0; // further capped by L
  int grid = 64;
  int starts = 4;
};

namespace detail {

inline double synaptic_load(const ProblemParams& p, double tau, double window) {
  return tau * p.rate * analytic::expected_m(p, window);
}

inline bool better(double s, double tau, double window, double best_s, double best_tau,
                   double best_window) {
  const double tol = 1e-9 * std::max(1.0, std::abs(best_s));
  if (s > best_s + tol) return true;
  if (s < best_s - tol) return false;
  return tau < best_tau || (tau == best_tau && window < best_window);
}

} // namespace detail

inline double log_grid_value(double lo, double hi, int i, int n) {
  if (n <= 1) return lo;
  return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
}

// Global maximizer of the expected SNR subject to τ·f·⟨M⟩ >= 10 and
// Δt <= min(L, box.window_max). A log-spaced grid selects the starting cells;
// each is refined by Nelder-Mead in log coordinates with a smooth quadratic
// penalty on the constraint, then repaired onto the feasible set.
inline OptimalDetector optimize_snr(const ProblemParams& p, const SearchBox& box = {}) {
  validate(p);
  const double wmax = std::min(box.window_max, p.pattern_duration);
  if (wmax < box.window_min) throw InfeasibleError("optimize_snr: pattern shorter than the window search range");

  // exp(log(x)) can overshoot x by an ulp; keep windows inside the box.
  auto evaluate = [&](double tau, double window) {
    return analytic::snr(p, {tau, std::min(window, wmax)}).snr;
  };

  struct Cell {
    double snr, tau, window;
  };
  std::vector<Cell> feasible;
  feasible.reserve(static_cast<std::size_t>(box.grid) * box.grid);
  for (int i = 0; i < box.grid; ++i) {
    const double tau = log_grid_value(box.tau_min, box.tau_max, i, box.grid);
    for (int j = 0; j < box.grid; ++j) {
      const double window = std::min(log_grid_value(box.window_min, wmax, j, box.grid), wmax);
      if (detail::synaptic_load(p, tau, window) < kMinSynapticLoad) continue;
      feasible.push_back({evaluate(tau, window), tau, window});
    }
  }
  if (feasible.empty())
    throw InfeasibleError("optimize_snr: no (tau, dt) in the search box satisfies tau*f*M >= 10");

  Cell grid_best = feasible.front();
  for (const auto& c : feasible)
    if (detail::better(c.snr, c.tau, c.window, grid_best.snr, grid_best.tau, grid_best.window)) grid_best = c;
  std::stable_sort(feasible.begin(), feasible.end(), [](const Cell& a, const Cell& b) { return a.snr > b.snr; });

  const double lt0 = std::log(box.tau_min), lt1 = std::log(box.tau_max);
  const double lw0 = std::log(box.window_min), lw1 = std::log(wmax);
  const double step_t = box.grid > 1 ? (lt1 - lt0) / (box.grid - 1) : 0.1;
  const double step_w = box.grid > 1 && lw1 > lw0 ? (lw1 - lw0) / (box.grid - 1) : 0.0;

  auto penalized = [&](const std::array<double, 2>& x) {
    const double lt = std::clamp(x[0], lt0, lt1);
    const double lw = std::clamp(x[1], lw0, lw1);
    const double out = (x[0] - lt) * (x[0] - lt) + (x[1] - lw) * (x[1] - lw);
    const double tau = std::exp(lt), window = std::min(std::exp(lw), wmax);
    const double deficit = std::max(0.0, kMinSynapticLoad - detail::synaptic_load(p, tau, window));
    return evaluate(tau, window) - 1e4 * deficit * deficit - 1e6 * out;
  };

  Cell best = grid_best;
  const std::size_t starts = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, box.starts)), feasible.size());
  for (std::size_t s = 0; s < starts; ++s) {
    const auto& seed = feasible[s];
    const auto res = nelder_mead_max<2>(penalized, {std::log(seed.tau), std::log(seed.window)},
                                        {step_t, step_w > 0 ? step_w : 1e-3}, 1e-11, 20000);
    double tau = std::exp(std::clamp(res.x[0], lt0, lt1));
    double window = std::min(std::exp(std::clamp(res.x[1], lw0, lw1)), wmax);
    const double load = detail::synaptic_load(p, tau, window);
    if (load < kMinSynapticLoad) tau *= kMinSynapticLoad / load; // onto the boundary
    if (tau > box.tau_max || detail::synaptic_load(p, tau, window) < kMinSynapticLoad) continue;
    const double s_val = evaluate(tau, window);
    if (detail::better(s_val, tau, window, best.snr, best.tau, best.window)) best = {s_val, tau, window};
  }

  OptimalDetector out;
  out.tau = best.tau;
  out.window = best.window;
  out.snr = best.snr;
  out.m = analytic::expected_m(p, best.window);
  out.constraint_active = out.tau * p.rate * out.m <= kMinSynapticLoad * (1.0 + 1e-6);
  return out;
}

struct SweepCell {
  double rate = 0.0;
  double jitter = 0.0;
  std::optional<OptimalDetector> optimum; // empty when infeasible
  std::string error;
};

// One optimum per (f, T) cell, f-major order: index = i_f * t_grid.size() + i_T.
inline std::vector<SweepCell> sweep_optima(std::span<const double> f_grid, std::span<const double> t_grid,
                                           int pattern_count, int afferent_count, unsigned workers = 1,
                                           double pattern_duration = kUnbounded, const SearchBox& box = {}) {
  if (f_grid.empty() || t_grid.empty()) throw ConstraintViolation("grid", "sweep grids must be non-empty");
  std::vector<SweepCell> cells(f_grid.size() * t_grid.size());
  parallel_for(cells.size(), workers, [&](std::size_t k) {
    auto& cell = cells[k];
    cell.rate = f_grid[k / t_grid.size()];
    cell.jitter = t_grid[k % t_grid.size()];
    ProblemParams p{pattern_count, pattern_duration, afferent_count, cell.rate, cell.jitter};
    try {
      cell.optimum = optimize_snr(p, box);
    } catch (const InfeasibleError& e) {
      cell.error = e.what();
    }
  });
  return cells;
}

// ---------------------------------------------------------------------------
// Graded weights (P = 1, T = 0)
//
// The pattern is cut into n windows Δt_1..Δt_n in reverse chronological order
// (window 1 ends at the pattern peak). Afferents whose most recent pattern
// spike falls in window i get weight w_i.

struct GradedProfile {
  std::vector<double> windows;
  std::vector<double> weights;
  double snr = 0.0;
  double binary_snr = 0.0;
  double gain_vs_binary = 0.0; // snr / binary_snr - 1
  int iterations = 0;
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, GradedProfile best) : Error(what), best_so_far(std::move(best)) {}
  GradedProfile best_so_far;
};

namespace detail {

inline void check_graded_inputs(std::span<const double> windows, std::span<const double> weights) {
  if (windows.empty() || windows.size() != weights.size())
    throw ConstraintViolation("weights", "need one weight per window and at least one window");
  for (double d : windows)
    if (!(d > 0.0)) throw ConstraintViolation("dt_windows", "every window must be > 0");
  bool any = false;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConstraintViolation("weights", "weights must lie in [0, 1]");
    any = any || w > 0.0;
  }
  if (!any) throw DegenerateError("graded_snr: all weights are zero");
}

// ⟨M_i⟩ = N(1 - e^{-fΔt_i})·e^{-f Σ_{j<i} Δt_j}
inline std::vector<double> window_counts(std::span<const double> windows, double rate, double n_aff) {
  std::vector<double> m(windows.size());
  double elapsed = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    m[i] = n_aff * -std::expm1(-rate * windows[i]) * std::exp(-rate * elapsed);
    elapsed += windows[i];
  }
  return m;
}

} // namespace detail

// SNR of a graded profile via the window-by-window relaxation: starting from
// the noise level before the oldest window, each window relaxes V toward its
// own steady state V_i^∞ = τf(w_i N + Σ_{j<i}(w_j - w_i)⟨M_j⟩).
inline double graded_snr(std::span<const double> windows, std::span<const double> weights, double tau,
                         double rate, int afferent_count) {
  detail::check_graded_inputs(windows, weights);
  const double n_aff = afferent_count;
  const auto m = detail::window_counts(windows, rate, n_aff);
  const double load = tau * rate;

  double weighted = 0.0, weighted_sq = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    weighted += weights[i] * m[i];
    weighted_sq += weights[i] * weights[i] * m[i];
  }
  const double v_noise = load * weighted;
  const double sigma = std::sqrt(load * weighted_sq / 2.0);

  // prefix[i] = Σ_{j<i} w_j M_j, covered[i] = Σ_{j<i} M_j
  std::vector<double> prefix(m.size() + 1, 0.0), covered(m.size() + 1, 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    prefix[i + 1] = prefix[i] + weights[i] * m[i];
    covered[i + 1] = covered[i] + m[i];
  }

  double v = v_noise;
  for (std::size_t k = m.size(); k-- > 0;) {
    const double v_inf = load * (weights[k] * (n_aff - covered[k]) + prefix[k]);
    v += -std::expm1(-windows[k] / tau) * (v_inf - v);
  }
  return (v - v_noise) / sigma;
}

inline double graded_snr(const GradedProfile& profile, double tau, double rate, int afferent_count) {
  return graded_snr(profile.windows, profile.weights, tau, rate, afferent_count);
}

struct GradedValue {
  double snr = 0.0;
  std::vector<double> gradient;
};

// Value and exact gradient. Unrolling the relaxation gives
// V_1 - V_noise = Σ_k g_k w_k, a linear form in the weights, so
// ∂SNR/∂w_k = g_k/σ - (V_1 - V_noise)·τf·w_k·M_k / (2σ³).
inline GradedValue graded_snr_gradient(std::span<const double> windows, std::span<const double> weights,
                                       double tau, double rate, int afferent_count) {
  detail::check_graded_inputs(windows, weights);
  const std::size_t n = windows.size();
  const double n_aff = afferent_count;
  const auto m = detail::window_counts(windows, rate, n_aff);
  const double load = tau * rate;

  // b_i = a_i Π_{j<i}(1 - a_j), keep = Π_j (1 - a_j)
  std::vector<double> b(n);
  double keep = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = -std::expm1(-windows[i] / tau);
    b[i] = a * keep;
    keep *= 1.0 - a;
  }
  std::vector<double> tail(n + 1, 0.0); // Σ_{i>k} b_i
  for (std::size_t k = n; k-- > 0;) tail[k] = tail[k + 1] + b[k];

  std::vector<double> g(n);
  double covered = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = load * (b[k] * (n_aff - covered) + m[k] * tail[k + 1] - (1.0 - keep) * m[k]);
    covered += m[k];
  }

  double excess = 0.0, weighted_sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    excess += g[k] * weights[k];
    weighted_sq += weights[k] * weights[k] * m[k];
  }
  const double sigma = std::sqrt(load * weighted_sq / 2.0);

  GradedValue out;
  out.snr = excess / sigma;
  out.gradient.resize(n);
  const double s3 = sigma * sigma * sigma;
  for (std::size_t k = 0; k < n; ++k)
    out.gradient[k] = g[k] / sigma - excess * load * weights[k] * m[k] / (2.0 * s3);
  return out;
}

// Best binary SNR with τ fixed, T = 0, P = 1 and Δt free.
inline double best_binary_snr(double tau, double rate, int afferent_count, double* argmax_window = nullptr) {
  auto neg = [&](double log_window) { return -analytic::binary_snr(tau, std::exp(log_window), rate, afferent_count); };
  const auto [x, fx] = boost::math::tools::brent_find_minima(neg, std::log(tau * 1e-3), std::log(tau * 1e3), 50);
  if (argmax_window) *argmax_window = std::exp(x);
  return -fx;
}

struct GradedOptions {
  int max_iterations = 200000;
  double tolerance = 1e-9; // on the projected-gradient step, relative to the SNR
};

// Projected gradient ascent over w_2..w_n ∈ [0, 1] with w_1 = 1, started from
// the best binary step profile. Step length doubles after an improving step
// and halves on a non-improving one.
inline GradedProfile optimize_graded_weights(std::vector<double> windows, double tau, double rate,
                                             int afferent_count, const GradedOptions& opt = {}) {
  const std::size_t n = windows.size();
  if (n == 0) throw ConstraintViolation("n", "need at least one window");

  GradedProfile best;
  best.windows = windows;
  best.binary_snr = best_binary_snr(tau, rate, afferent_count);

  // Best binary step (w = 1 on the k most recent windows).
  std::vector<double> w(n, 0.0);
  double start_snr = -std::numeric_limits<double>::infinity();
  std::size_t start_k = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    std::fill(w.begin(), w.end(), 0.0);
    std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k), 1.0);
    const double s = graded_snr(windows, w, tau, rate, afferent_count);
    if (s > start_snr) start_snr = s, start_k = k;
  }
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(start_k), 1.0);

  auto finish = [&](std::vector<double> weights, double snr, int iterations) {
    best.weights = std::move(weights);
    best.snr = snr;
    best.iterations = iterations;
    best.gain_vs_binary = best.snr / best.binary_snr - 1.0;
    return best;
  };
  if (n == 1) return finish(w, start_snr, 0);

  auto current = graded_snr_gradient(windows, w, tau, rate, afferent_count);
  double step = 1e-3;
  std::vector<double> trial(n);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    // Stationarity: the projected unit-step move vanishes.
    double stationarity = 0.0;
    for (std::size_t k = 1; k < n; ++k)
      stationarity = std::max(stationarity, std::abs(std::clamp(w[k] + current.gradient[k], 0.0, 1.0) - w[k]));
    if (stationarity <= opt.tolerance * std::max(1.0, std::abs(current.snr))) return finish(w, current.snr, it);

    for (;;) {
      trial[0] = 1.0;
      for (std::size_t k = 1; k < n; ++k) trial[k] = std::clamp(w[k] + step * current.gradient[k], 0.0, 1.0);
      auto next = graded_snr_gradient(windows, trial, tau, rate, afferent_count);
      if (next.snr > current.snr) {
        w = trial;
        current = std::move(next);
        step *= 2.0;
        break;
      }
      step *= 0.5;
      if (step < 1e-300) return finish(w, current.snr, it); // no ascent direction left
    }
  }
  best.weights = w;
  best.snr = current.snr;
  best.gain_vs_binary = best.snr / best.binary_snr - 1.0;
  best.iterations = opt.max_iterations;
  throw ConvergenceError("optimize_graded_weights: iteration budget exhausted", best);
}

inline std::vector<double> uniform_windows(int n, double total) {
  if (n < 1) throw ConstraintViolation("n", "window count must be >= 1");
  return std::vector<double>(static_cast<std::size_t>(n), total / n);
}

// Equal windows of 5τ/n each.
inline GradedProfile optimize_graded_weights(int n, double tau, double rate, int afferent_count,
                                             const GradedOptions& opt = {}) {
  return optimize_graded_weights(uniform_windows(n, 5.0 * tau), tau, rate, afferent_count, opt);
}

} // namespace spikesnr::optimizer
