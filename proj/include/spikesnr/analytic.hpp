#pragma once

// Closed-form expected SNR of a threshold-free LIF connected with unitary
// weights to every afferent that fires in the first Δt of any of P patterns.
//
// Potentials are in unitary-synapse units: a spike through weight w raises V
// by w, so the stationary mean under Poisson drive is τ·f·Σw.

#include <algorithm>
#include <cmath>

#include "spikesnr/core.hpp"

namespace spikesnr::analytic {

struct SnrBreakdown {
  double v_max = 0.0;        // reduced peak, in (0, 1]
  double m_expected = 0.0;   // ⟨M⟩
  double r_expected = 0.0;   // ⟨r⟩ (Hz)
  double v_inf = 0.0;        // τ·⟨r⟩, infinite-window steady state
  double v_noise_mean = 0.0; // τ·f·⟨M⟩
  double v_noise_std = 0.0;  // sqrt(τ·f·⟨M⟩/2)
  double snr = 0.0;
};

struct NoiseStats {
  double mean = 0.0;
  double std = 0.0;
};

// Expected number of afferents firing at least once in the first Δt of at
// least one of P independent patterns: N(1 - e^{-P f Δt}).
inline double expected_m(const ProblemParams& p, double window) {
  const double x = static_cast<double>(p.pattern_count) * p.rate * window;
  return static_cast<double>(p.afferent_count) * -std::expm1(-x);
}

inline double expected_r(const ProblemParams& p) {
  return p.rate * static_cast<double>(p.afferent_count);
}

// Peak of the mean potential, normalized so that 0 is the noise level and 1
// the infinite-window steady state, for uniform jitter on [-T, T].
inline double v_max_reduced(double tau, double window, double jitter) {
  if (jitter == 0.0) return -std::expm1(-window / tau);

  const double span = 2.0 * jitter;
  const double hi = std::max(window, span);
  const double lo = std::min(window, span);
  // log(1 - e^{-hi/τ} + e^{-(hi-lo)/τ}) = log1p(e^{-(hi-lo)/τ}·(1 - e^{-lo/τ}))
  const double inner = std::exp(-(hi - lo) / tau) * -std::expm1(-lo / tau);
  return std::min(1.0, window / span) - (tau / span) * std::log1p(inner);
}

inline NoiseStats noise_stats(double tau, double rate, double m, double weight = 1.0) {
  const double load = tau * rate * m;
  return {load * weight, std::sqrt(load * weight * weight / 2.0)};
}

// (r - f·m)/sqrt(m), the realization-dependent factor of the SNR.
inline double reduced_snr(double m, double r, double rate) {
  if (!(m > 0.0)) throw DegenerateError("reduced_snr: m must be > 0");
  return (r - rate * m) / std::sqrt(m);
}

inline SnrBreakdown snr(const ProblemParams& p, const DetectorConfig& c) {
  validate(p, c);
  SnrBreakdown b;
  b.v_max = v_max_reduced(c.tau, c.window, p.jitter);
  b.m_expected = expected_m(p, c.window);
  b.r_expected = expected_r(p);
  if (!(b.m_expected > 0.0)) throw DegenerateError("snr: expected connected count is zero");
  const auto noise = noise_stats(c.tau, p.rate, b.m_expected);
  b.v_inf = c.tau * b.r_expected;
  b.v_noise_mean = noise.mean;
  b.v_noise_std = noise.std;
  // τr - τf⟨M⟩ = τfN·e^{-PfΔt}, written without the cancellation.
  const double unselected = static_cast<double>(p.afferent_count) *
                            std::exp(-static_cast<double>(p.pattern_count) * p.rate * c.window);
  b.snr = b.v_max * c.tau * p.rate * unselected / b.v_noise_std;
  return b;
}

// SNR at T = 0, P = 1 with Δt and τ free: the binary reference for graded
// weight profiles. No constraint on τ·f·M is applied.
inline double binary_snr(double tau, double window, double rate, int afferent_count) {
  ProblemParams p;
  p.pattern_count = 1;
  p.pattern_duration = kUnbounded;
  p.afferent_count = afferent_count;
  p.rate = rate;
  p.jitter = 0.0;
  return snr(p, {tau, window}).snr;
}

} // namespace spikesnr::analytic
