#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "spikesnr/analytic.hpp"
#include "spikesnr/simulator.hpp"

using namespace spikesnr;
using namespace spikesnr::simulator;

namespace {

ProblemParams fig3(int patterns = 1) {
  ProblemParams p;
  p.pattern_count = patterns;
  p.pattern_duration = 0.02;
  p.afferent_count = 10000;
  p.rate = 5.0;
  p.jitter = 0.005;
  return p;
}

// Upper-tail chi-square critical value approximation (Wilson-Hilferty), p = 0.001.
double chi2_critical(int dof) {
  const double z = 3.09, k = dof;
  return k * std::pow(1 - 2 / (9 * k) + z * std::sqrt(2 / (9 * k)), 3);
}

} // namespace

TEST(GeneratePattern, PoissonCountsPerAfferent) {
  auto p = fig3();
  RngStream rng(1);
  auto pat = generate_pattern(p, rng);
  EXPECT_TRUE(is_well_formed(pat, 10000));
  EXPECT_EQ(pat.duration, 0.02);

  // Pool 10 patterns: 10^5 afferent counts against Poisson(0.1).
  std::vector<int> hist(4, 0);
  double total = 0;
  for (int rep = 0; rep < 10; ++rep) {
    auto r = RngStream(2).substream(Purpose::pattern, static_cast<std::uint64_t>(rep));
    const auto pattern = generate_pattern(p, r);
    total += static_cast<double>(pattern.size());
    std::vector<int> counts(10000, 0);
    for (const auto& e : pattern.events) ++counts[e.afferent];
    for (int c : counts) ++hist[std::min(c, 3)];
  }
  EXPECT_NEAR(total / 10, 1000, 4 * std::sqrt(1000.0 / 10));
  const double lam = 0.1, n = 1e5;
  const double probs[] = {std::exp(-lam), lam * std::exp(-lam), lam * lam / 2 * std::exp(-lam),
                          1 - std::exp(-lam) * (1 + lam + lam * lam / 2)};
  double chi2 = 0;
  for (int k = 0; k < 4; ++k) chi2 += std::pow(hist[k] - n * probs[k], 2) / (n * probs[k]);
  EXPECT_LT(chi2, chi2_critical(3));
}

TEST(GeneratePattern, FractionWithSpikeMatchesExpectedM) {
  auto p = fig3();
  RngStream rng(3);
  double frac = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::vector<Pattern> one{generate_pattern(p, rng)};
    frac += static_cast<double>(popcount(select_afferents(one, p.pattern_duration, p.afferent_count))) / 20;
  }
  EXPECT_NEAR(frac, analytic::expected_m(p, p.pattern_duration), 0.01 * 951.6);
}

TEST(GeneratePattern, VanishingRateGivesEmptyPattern) {
  auto p = fig3();
  p.rate = 1e-12;
  RngStream rng(4);
  EXPECT_TRUE(generate_pattern(p, rng).empty());
}

TEST(Jitter, ZeroIsIdentity) {
  RngStream rng(5);
  const auto pat = generate_pattern(fig3(), rng);
  EXPECT_EQ(jitter(pat, 0.0, rng), pat);
}

TEST(Jitter, DisplacementsUniform) {
  // One afferent per spike so displacements can be matched back.
  Pattern pat;
  pat.duration = 1.0;
  for (std::uint32_t i = 0; i < 100000; ++i) pat.events.push_back({i, 0.5});
  RngStream rng(6);
  const double T = 0.005;
  const auto out = jitter(pat, T, rng);
  ASSERT_EQ(out.size(), pat.size());
  EXPECT_TRUE(std::is_sorted(out.events.begin(), out.events.end(), event_before));

  std::vector<double> d;
  double mean = 0;
  for (const auto& e : out.events) d.push_back(e.time - 0.5), mean += e.time - 0.5;
  mean /= static_cast<double>(d.size());
  EXPECT_NEAR(mean, 0.0, 4 * T / std::sqrt(3.0 * static_cast<double>(d.size())));

  std::sort(d.begin(), d.end());
  double ks = 0;
  const double n = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double cdf = (d[i] + T) / (2 * T);
    ks = std::max({ks, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
  }
  EXPECT_LT(ks, 1.95 / std::sqrt(n)); // p = 0.001
}

TEST(SelectAfferents, Definitions) {
  RngStream rng(7);
  const std::vector<Pattern> pats{generate_pattern(fig3(), rng)};
  EXPECT_EQ(popcount(select_afferents(pats, 0.0, 10000)), 0u);
  const auto all = select_afferents(pats, 0.02, 10000);
  std::vector<bool> want(10000, false);
  for (const auto& e : pats[0].events) want[e.afferent] = true;
  EXPECT_EQ(all, want);
}

TEST(SelectAfferents, MeanPopcountMatchesExpectedM) {
  auto p = fig3(5);
  p.rate = 3.2;
  const double window = 0.011;
  const RngStream root(8);
  double mean = 0;
  const int reps = 400;
  for (int rep = 0; rep < reps; ++rep) {
    auto r = root.substream(Purpose::realization, static_cast<std::uint64_t>(rep));
    std::vector<Pattern> pats;
    auto clip = p;
    clip.pattern_duration = window;
    for (int k = 0; k < p.pattern_count; ++k) pats.push_back(generate_pattern(clip, r));
    mean += static_cast<double>(popcount(select_afferents(pats, window, p.afferent_count))) / reps;
  }
  const double m = analytic::expected_m(p, window);
  EXPECT_NEAR(mean, m, 4 * std::sqrt(m * (1 - m / 1e4) / reps));
}

TEST(Lif, ImpulseResponse) {
  for (auto engine : {Engine::event, Engine::clock}) {
    SpikeStream s{{{0, 0.01}}, 0.1};
    const std::vector<double> w{1.0};
    const auto res = integrate_lif(s, w, 0.01, engine, 1e-5, {}, true);
    ASSERT_FALSE(res.trace.empty());
    const double expect = std::exp(-(0.1 - 0.01) / 0.01);
    EXPECT_NEAR(res.final_potential, expect, engine == Engine::event ? 1e-12 : 1e-3 * expect + 1e-4);
  }
}

TEST(Lif, RejectsBadInputs) {
  SpikeStream s{{{0, 0.01}}, 0.1};
  EXPECT_THROW(integrate_lif(s, std::vector<double>{-0.5}, 0.01, Engine::event), ConstraintViolation);
  EXPECT_THROW(integrate_lif(s, std::vector<double>{1.0}, 0.01, Engine::clock, 0.0), ConstraintViolation);
  EXPECT_THROW(integrate_lif(s, std::vector<double>{}, 0.01, Engine::event), ConstraintViolation);
}

TEST(Lif, StationaryNoiseStatistics) {
  // M = 1000 connected afferents at 5 Hz, τ = 10 ms, clock engine.
  RngStream rng(9);
  std::vector<SpikeEvent> ev;
  background_into(ev, 0.0, 100.0, 1000, 5.0, rng);
  SpikeStream s{ev, 100.0};
  const std::vector<double> w(1000, 1.0);
  LifIntegrator lif(0.01, Engine::clock, 1e-4);
  for (const auto& e : s.events) {
    if (lif.time() < 0.1 && e.time >= 0.1) lif.set_mode(0.1, Observe::noise);
    lif.deliver(e.time, 1.0);
  }
  lif.advance(100.0);
  const auto m = lif.noise_moments();
  EXPECT_NEAR(m.mean, 50, 1.0);
  EXPECT_NEAR(m.std, 5, 0.1);
}

TEST(Lif, EnginesAgreeOnPeaks) {
  RngStream rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const double tau = rng.uniform(1e-3, 0.03);
    std::vector<SpikeEvent> ev;
    background_into(ev, 0.0, 2.0, 2000, 5.0, rng);
    SpikeStream s{ev, 2.0};
    std::vector<double> w(2000);
    for (auto& x : w) x = rng.uniform();
    std::vector<std::pair<double, double>> windows;
    for (double t = 0.1; t < 1.9; t += 0.2) windows.push_back({t, t + 0.05});
    const auto a = integrate_lif(s, w, tau, Engine::clock, 1e-4, windows);
    const auto b = integrate_lif(s, w, tau, Engine::event, 1e-4, windows);
    ASSERT_EQ(a.peaks.size(), windows.size());
    ASSERT_EQ(b.peaks.size(), windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) EXPECT_NEAR(a.peaks[i], b.peaks[i], 0.02 * b.peaks[i]);
  }
}

TEST(Schedule, SegmentsAndOnsets) {
  const Schedule s{0.4, 0.02, 3};
  EXPECT_DOUBLE_EQ(s.segment_start(2), 0.8);
  EXPECT_DOUBLE_EQ(s.onset(0), 0.19);
  EXPECT_EQ(s.pattern_of(4), 1);
}

TEST(SegmentEvents, BackgroundExcludedFromPatternSlot) {
  auto p = fig3(2);
  p.jitter = 0.0;
  const RngStream root(11);
  std::vector<Pattern> pats;
  for (int i = 0; i < 2; ++i) {
    auto r = root.substream(Purpose::pattern, static_cast<std::uint64_t>(i));
    pats.push_back(generate_pattern(p, r));
  }
  const Schedule s{0.4, 0.02, 2};
  const auto ev = segment_events(s, 3, pats, p, root);
  EXPECT_TRUE(std::is_sorted(ev.begin(), ev.end(), event_before));
  const double onset = s.onset(3);
  std::vector<SpikeEvent> inside;
  for (const auto& e : ev)
    if (e.time >= onset && e.time < onset + 0.02) inside.push_back({e.afferent, e.time - onset});
  ASSERT_EQ(inside.size(), pats[1].size());
  for (std::size_t i = 0; i < inside.size(); ++i) {
    EXPECT_EQ(inside[i].afferent, pats[1].events[i].afferent);
    EXPECT_NEAR(inside[i].time, pats[1].events[i].time, 1e-12);
  }
  EXPECT_EQ(ev, segment_events(s, 3, pats, p, root));
}

TEST(EmpiricalSnr, MatchesAnalyticSingleTrial) {
  TrialProtocol proto{fig3(1), 100, 0.4, 1e-4, Engine::event};
  const DetectorConfig cfg{0.01, 0.02};
  const auto e = measure_empirical_snr(proto, cfg, RngStream(12));
  const double a = analytic::snr(proto.params, cfg).snr;
  EXPECT_NEAR(e.snr, a, 0.1 * a);
  EXPECT_DOUBLE_EQ(e.snr, (e.v_max_mean - e.v_noise_mean) / e.v_noise_std);
  EXPECT_EQ(e.n_presentations, 100);
}

TEST(EmpiricalSnr, Deterministic) {
  TrialProtocol proto{fig3(2), 20, 0.4, 1e-4, Engine::clock};
  const DetectorConfig cfg{0.01, 0.02};
  const auto a = measure_empirical_snr(proto, cfg, RngStream(13));
  const auto b = measure_empirical_snr(proto, cfg, RngStream(13));
  EXPECT_EQ(a.snr, b.snr);
  EXPECT_EQ(a.v_noise_std, b.v_noise_std);
}

TEST(EmpiricalSnr, NoConnectedAfferentIsDegenerate) {
  auto p = fig3(1);
  p.afferent_count = 1;
  p.rate = 1e-9;
  TrialProtocol proto{p, 10, 0.4, 1e-4, Engine::event};
  EXPECT_THROW(measure_empirical_snr(proto, {0.01, 0.02}, RngStream(14)), DegenerateError);
}

TEST(EmpiricalSnr, TooLittleNoiseRejected) {
  TrialProtocol proto{fig3(1), 1, 0.4, 1e-4, Engine::event};
  EXPECT_THROW(measure_empirical_snr(proto, {0.05, 0.02}, RngStream(15)), InsufficientNoiseError);
}

TEST(EmpiricalSnr, OverlappingPresentationsRejected) {
  TrialProtocol proto{fig3(1), 10, 0.025, 1e-4, Engine::event};
  EXPECT_THROW(measure_empirical_snr(proto, {0.01, 0.02}, RngStream(16)), ConstraintViolation);
}

TEST(Averaging, ApproximationHolds) {
  ProblemParams p;
  p.pattern_count = 1;
  p.rate = 1.0;
  const auto rep = averaging_validation(p, 0.002, 10000, RngStream(17), 1);
  EXPECT_LT(std::abs(rep.mean_snr - rep.approx_snr) / rep.mean_snr, 0.02);
  EXPECT_GT(rep.correlation_m_r, 0.5);
  EXPECT_NEAR(rep.mean_m, analytic::expected_m(p, 0.002), 0.05 * 19.98);
}

TEST(Averaging, SingleEmptyRealizationWarns) {
  ProblemParams p;
  p.pattern_count = 1;
  p.afferent_count = 1;
  p.rate = 1e-6;
  const auto rep = averaging_validation(p, 1e-3, 1, RngStream(18));
  EXPECT_EQ(rep.excluded, 1u);
  EXPECT_TRUE(rep.samples.empty());
  EXPECT_FALSE(rep.warnings.empty());
}

TEST(Averaging, IndependentOfWorkerCount) {
  ProblemParams p;
  p.pattern_count = 2;
  p.rate = 2.0;
  const auto a = averaging_validation(p, 0.003, 500, RngStream(19), 1);
  const auto b = averaging_validation(p, 0.003, 500, RngStream(19), 3);
  EXPECT_EQ(a.mean_snr, b.mean_snr);
  EXPECT_EQ(a.correlation_m_r, b.correlation_m_r);
}
