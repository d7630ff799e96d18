#include <gtest/gtest.h>

#include <cmath>

#include "spikesnr/analytic.hpp"
#include "spikesnr/simulator.hpp"

using namespace spikesnr;
using namespace spikesnr::analytic;

namespace {

ProblemParams table1(int patterns) {
  ProblemParams p;
  p.pattern_count = patterns;
  p.pattern_duration = kUnbounded;
  p.afferent_count = 10000;
  p.rate = 3.2;
  p.jitter = 3.2e-3;
  return p;
}

} // namespace

TEST(ExpectedM, Table1Value) {
  EXPECT_NEAR(expected_m(table1(5), 0.011), 1600, 0.05 * 1600);
}

TEST(ExpectedM, ZeroWindow) { EXPECT_EQ(expected_m(table1(7), 0.0), 0.0); }

TEST(ExpectedM, MatchesMonteCarlo) {
  ProblemParams p;
  p.pattern_count = 1;
  p.pattern_duration = 0.02;
  p.rate = 5.0;
  const double m = expected_m(p, 0.02);
  EXPECT_NEAR(m, 951.6, 0.1);

  // 10^5 pattern realizations, each the superposed Poisson stream of all
  // afferents over [0, Δt); M counts distinct afferents.
  RngStream rng(17);
  const int draws = 100000;
  std::vector<int> stamp(static_cast<std::size_t>(p.afferent_count), -1);
  double total = 0;
  for (int i = 0; i < draws; ++i) {
    for (double t = rng.exponential(p.rate * p.afferent_count); t < 0.02; t += rng.exponential(p.rate * p.afferent_count)) {
      auto& s = stamp[rng.below(static_cast<std::uint64_t>(p.afferent_count))];
      if (s != i) s = i, ++total;
    }
  }
  EXPECT_NEAR(total / draws, m, 0.01 * m);
}

TEST(ExpectedM, DependsOnlyOnPTimesWindow) {
  RngStream rng(4);
  for (int i = 0; i < 100; ++i) {
    auto p = table1(1 + static_cast<int>(rng.below(40)));
    p.rate = rng.uniform(0.1, 50);
    const double w = rng.uniform(1e-4, 0.1);
    auto one = p;
    one.pattern_count = 1;
    EXPECT_NEAR(expected_m(p, w), expected_m(one, p.pattern_count * w), 1e-9 * p.afferent_count);
  }
}

TEST(ExpectedM, MonotoneAndBounded) {
  auto p = table1(3);
  double prev = -1;
  for (double w = 0; w < 2.0; w += 0.01) {
    const double m = expected_m(p, w);
    EXPECT_GE(m, prev);
    EXPECT_LE(m, p.afferent_count);
    prev = m;
  }
}

TEST(ExpectedR, Products) {
  auto p = table1(1);
  EXPECT_DOUBLE_EQ(expected_r(p), 32000);
  p.rate = 5;
  EXPECT_DOUBLE_EQ(expected_r(p), 50000);
  p.rate = 1;
  p.afferent_count = 1;
  EXPECT_DOUBLE_EQ(expected_r(p), 1);
}

TEST(VMax, NoJitterLimit) {
  EXPECT_NEAR(v_max_reduced(0.01, 0.02, 0.0), 1 - std::exp(-2.0), 1e-15);
}

TEST(VMax, SmallJitterApproachesLimit) {
  for (double w : {0.001, 0.005, 0.02, 0.1})
    EXPECT_NEAR(v_max_reduced(0.01, w, 1e-9), v_max_reduced(0.01, w, 0.0), 1e-6);
}

TEST(VMax, WindowEqualsJitterSpan) {
  EXPECT_NEAR(v_max_reduced(0.01, 0.01, 0.005), 1 - std::log(2 - std::exp(-1.0)), 1e-14);
}

TEST(VMax, JitteredOracle) { EXPECT_NEAR(v_max_reduced(0.01, 0.02, 0.005), 0.7909, 5e-4); }

TEST(VMax, JitteredMonteCarloPeak) {
  // Mean potential of a unit-rate inflow spread by uniform jitter, integrated
  // exactly; the peak of the expected trace is the reduced v_max.
  const double tau = 0.01, window = 0.02, jit = 0.005;
  const int bins = 20000;
  const double t0 = -jit, t1 = window + jit, h = (t1 - t0) / bins;
  double v = 0, peak = 0;
  for (int i = 0; i < bins; ++i) {
    const double t = t0 + (i + 0.5) * h;
    // Inflow density at t: P(spike time + jitter lands at t), spikes uniform on [0, window].
    const double lo = std::max(0.0, t - jit), hi = std::min(window, t + jit);
    const double density = hi > lo ? (hi - lo) / (2 * jit) : 0.0;
    v = v * std::exp(-h / tau) + density * h / tau * std::exp(-h / (2 * tau));
    peak = std::max(peak, v);
  }
  EXPECT_NEAR(peak, v_max_reduced(tau, window, jit), 1e-4);
}

TEST(VMax, IncreasingInWindowAndBounded) {
  RngStream rng(8);
  for (int i = 0; i < 50; ++i) {
    const double tau = rng.uniform(1e-3, 0.05), jit = rng.uniform(0, 0.02);
    double prev = 0;
    for (double w = 1e-4; w < 10 * tau; w *= 1.1) {
      const double v = v_max_reduced(tau, w, jit);
      EXPECT_GT(v, prev);
      EXPECT_GT(v, 0.0);
      EXPECT_LE(v, 1.0);
      prev = v;
    }
  }
}

TEST(VMax, LongWindowTendsToOne) { EXPECT_NEAR(v_max_reduced(0.01, 1.0, 0.0), 1.0, 1e-12); }

TEST(NoiseStats, Values) {
  auto s = noise_stats(0.01, 5, 1000);
  EXPECT_NEAR(s.mean, 50, 1e-12);
  EXPECT_NEAR(s.std, 5, 1e-12);
  s = noise_stats(0.01, 5, 1000, 0.5);
  EXPECT_NEAR(s.mean, 25, 1e-12);
  EXPECT_NEAR(s.std, 2.5, 1e-12);
  s = noise_stats(0.01, 5, 0);
  EXPECT_EQ(s.mean, 0);
  EXPECT_EQ(s.std, 0);
}

TEST(NoiseStats, StationarySimulation) {
  // 1000 afferents at 5 Hz into an exact LIF, 10^4 τ of samples.
  const double tau = 0.01;
  for (double w : {1.0, 0.5}) {
    simulator::LifIntegrator lif(tau, simulator::Engine::event);
    RngStream rng(21);
    double t = 0;
    const double warm = 10 * tau, end = warm + 1e4 * tau;
    while (t < warm) lif.deliver(t += rng.exponential(5000.0), w);
    lif.set_mode(t, simulator::Observe::noise);
    while ((t += rng.exponential(5000.0)) < end) lif.deliver(t, w);
    lif.advance(end);
    const auto m = lif.noise_moments();
    const auto want = noise_stats(tau, 5, 1000, w);
    EXPECT_NEAR(m.mean, want.mean, 0.02 * want.mean);
    EXPECT_NEAR(m.std, want.std, 0.02 * want.std);
  }
}

TEST(Snr, Table1Rows) {
  EXPECT_NEAR(snr(table1(40), {5.1e-3, 3.7e-3}).snr, 6.7, 0.05 * 6.7);
  EXPECT_NEAR(snr(table1(5), {8.9e-3, 11e-3}).snr, 31, 0.05 * 31);
}

TEST(Snr, BreakdownIsConsistent) {
  const auto b = snr(table1(5), {8.9e-3, 11e-3});
  EXPECT_NEAR(b.snr, b.v_max * (8.9e-3 * b.r_expected - b.v_noise_mean) / b.v_noise_std, 1e-12 * b.snr);
  EXPECT_NEAR(b.v_noise_mean, 8.9e-3 * 3.2 * b.m_expected, 1e-12);
  EXPECT_NEAR(b.v_inf, 8.9e-3 * b.r_expected, 1e-12);
}

TEST(Snr, VanishesWithWindow) {
  double prev = snr(table1(5), {8.9e-3, 1e-3}).snr;
  for (double w = 1e-4; w > 1e-13; w /= 10) {
    const double s = snr(table1(5), {8.9e-3, w}).snr;
    EXPECT_LT(s, prev);
    prev = s;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Snr, DegenerateWhenNoAfferentSelected) {
  auto p = table1(1);
  p.rate = 1e-200;
  EXPECT_THROW(snr(p, {0.01, 1e-200}), DegenerateError);
}

TEST(Snr, ScalesWithSqrtN) {
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    auto p = table1(1 + static_cast<int>(rng.below(20)));
    p.afferent_count = 1000 + static_cast<int>(rng.below(10000));
    const DetectorConfig c{rng.uniform(1e-3, 0.05), rng.uniform(1e-3, 0.05)};
    const double k = 1 + static_cast<double>(rng.below(9));
    auto q = p;
    q.afferent_count = static_cast<int>(p.afferent_count * k);
    const double ratio = snr(q, c).snr / snr(p, c).snr;
    EXPECT_NEAR(ratio, std::sqrt(k), 1e-9 * std::sqrt(k));
  }
}

TEST(Snr, InvariantUnderTimeRescaling) {
  RngStream rng(6);
  for (int i = 0; i < 100; ++i) {
    auto p = table1(1 + static_cast<int>(rng.below(20)));
    p.rate = rng.uniform(0.5, 20);
    p.jitter = rng.uniform(0, 0.01);
    const DetectorConfig c{rng.uniform(1e-3, 0.05), rng.uniform(1e-3, 0.05)};
    const double s = rng.uniform(0.1, 10);
    auto q = p;
    q.rate /= s;
    q.jitter *= s;
    EXPECT_NEAR(snr(q, {c.tau * s, c.window * s}).snr, snr(p, c).snr, 1e-9 * std::abs(snr(p, c).snr));
  }
}

TEST(ReducedSnr, Values) {
  const double m = 10000 * -std::expm1(-1.0 * 0.002);
  EXPECT_NEAR(m, 19.98, 0.01);
  EXPECT_NEAR(reduced_snr(m, 1e4, 1.0), (1e4 - m) / std::sqrt(m), 1e-9);
  EXPECT_EQ(reduced_snr(1, 1, 1), 0.0);
  EXPECT_THROW(reduced_snr(0, 1, 1), DegenerateError);
}
