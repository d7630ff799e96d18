#pragma once

// Poisson pattern generation, jittered presentations embedded in background
// noise, and a non-plastic LIF with two integration engines:
//   clock - forward Euler on a fixed grid, V <- V(1 - h/τ) + Σ w (spikes in bin)
//   event - exact exponential decay between spikes, V <- V e^{-Δ/τ} + w

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikesnr/analytic.hpp"
#include "spikesnr/core.hpp"
#include "spikesnr/parallel.hpp"

namespace spikesnr::simulator {

enum class Engine { clock, event };

inline const char* to_string(Engine e) { return e == Engine::clock ? "clock" : "event"; }

// ---------------------------------------------------------------------------
// Spike generation

// One homogeneous Poisson process per afferent over [0, L], sampled from
// exponential inter-arrival times.
inline Pattern generate_pattern(const ProblemParams& p, RngStream& rng) {
  validate(p);
  Pattern out;
  out.duration = p.pattern_duration;
  for (int a = 0; a < p.afferent_count; ++a) {
    for (double t = rng.exponential(p.rate); t < p.pattern_duration; t += rng.exponential(p.rate))
      out.events.push_back({static_cast<std::uint32_t>(a), t});
  }
  sort_events(out.events);
  return out;
}

// Shifts every spike by an independent uniform draw on [-T, T]. The result is
// onset-relative and may extend T beyond [0, L].
inline SpikeStream jitter(const Pattern& pattern, double max_jitter, RngStream& rng) {
  if (!(max_jitter >= 0.0)) throw ConstraintViolation("T", "jitter must be >= 0");
  SpikeStream out = pattern;
  if (max_jitter == 0.0) return out;
  for (auto& e : out.events) e.time += rng.uniform(-max_jitter, max_jitter);
  sort_events(out.events);
  return out;
}

using Mask = std::vector<bool>;

// Afferents that fire at least once in [0, Δt) of at least one pattern.
inline Mask select_afferents(std::span<const Pattern> patterns, double window, int afferent_count) {
  Mask mask(static_cast<std::size_t>(afferent_count), false);
  for (const auto& pattern : patterns)
    for (const auto& e : pattern.events) {
      if (e.time >= window) break;
      mask.at(e.afferent) = true;
    }
  return mask;
}

inline std::vector<double> to_weights(const Mask& mask) {
  std::vector<double> w(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? 1.0 : 0.0;
  return w;
}

inline std::size_t popcount(const Mask& mask) { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

// ---------------------------------------------------------------------------
// Presentation schedule
//
// Time is cut into segments of one inter-presentation interval. Segment k
// shows pattern k mod P, starting at onset = k·I + (I - L)/2. Background
// Poisson activity (all afferents, rate f) fills the segment except
// [onset, onset + L), where the jittered pattern replaces it.

struct Schedule {
  double interval = 0.4;
  double pattern_duration = 0.02;
  int pattern_count = 1;

  double segment_start(std::int64_t k) const { return static_cast<double>(k) * interval; }
  double onset(std::int64_t k) const { return segment_start(k) + 0.5 * (interval - pattern_duration); }
  int pattern_of(std::int64_t k) const { return static_cast<int>(k % pattern_count); }
};

inline void background_into(std::vector<SpikeEvent>& out, double from, double to, int afferent_count, double rate,
                            RngStream& rng) {
  const double total_rate = rate * afferent_count;
  for (double t = from + rng.exponential(total_rate); t < to; t += rng.exponential(total_rate))
    out.push_back({static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(afferent_count))), t});
}

// Events of segment k, sorted. Draws come from substreams keyed by k, so any
// segment can be regenerated independently.
inline std::vector<SpikeEvent> segment_events(const Schedule& s, std::int64_t k, std::span<const Pattern> patterns,
                                              const ProblemParams& p, const RngStream& rng) {
  const double start = s.segment_start(k), onset = s.onset(k);
  auto bg_rng = rng.substream(Purpose::background, static_cast<std::uint64_t>(k));
  auto jit_rng = rng.substream(Purpose::presentation, static_cast<std::uint64_t>(k));

  std::vector<SpikeEvent> bg;
  bg.reserve(static_cast<std::size_t>(p.rate * p.afferent_count * s.interval * 1.2) + 16);
  background_into(bg, start, onset, p.afferent_count, p.rate, bg_rng);
  background_into(bg, onset + s.pattern_duration, start + s.interval, p.afferent_count, p.rate, bg_rng);

  auto shown = jitter(patterns[static_cast<std::size_t>(s.pattern_of(k))], p.jitter, jit_rng);
  for (auto& e : shown.events) e.time += onset;

  std::vector<SpikeEvent> out(bg.size() + shown.events.size());
  std::merge(bg.begin(), bg.end(), shown.events.begin(), shown.events.end(), out.begin(), event_before);
  return out;
}

// ---------------------------------------------------------------------------
// LIF integration

// Observation mode between calls to set_mode(): peak tracking inside
// presentation windows, moment accumulation in noise periods.
enum class Observe { none, peak, noise };

class LifIntegrator {
 public:
  using TraceSink = std::function<void(double time, double v)>;

  LifIntegrator(double tau, Engine engine, double step = 1e-4) : tau_(tau), engine_(engine), step_(step) {
    if (!(tau > 0.0)) throw ConstraintViolation("tau", "must be > 0");
    if (engine == Engine::clock && !(step > 0.0)) throw ConstraintViolation("step", "must be > 0");
    decay_per_bin_ = 1.0 - step_ / tau_;
  }

  void set_trace(TraceSink sink) { trace_ = std::move(sink); }

  double potential() const { return v_; }
  double time() const { return engine_ == Engine::clock ? static_cast<double>(bin_) * step_ : t_; }

  // Moves the clock to t (no earlier than the current time).
  void advance(double t) {
    if (engine_ == Engine::clock) {
      const auto target = static_cast<std::int64_t>(std::floor(t / step_));
      while (bin_ < target) {
        v_ = v_ * decay_per_bin_ + pending_;
        pending_ = 0.0;
        ++bin_;
        observe_sample(step_);
      }
      return;
    }
    const double dt = t - t_;
    if (dt <= 0.0) return;
    const double decay = std::exp(-dt / tau_);
    if (mode_ == Observe::noise) {
      noise_v_ += v_ * tau_ * (1.0 - decay);
      noise_v2_ += v_ * v_ * tau_ * 0.5 * (1.0 - decay * decay);
      noise_time_ += dt;
    }
    v_ *= decay;
    t_ = t;
  }

  void deliver(double t, double weight) {
    advance(t);
    if (engine_ == Engine::clock) {
      pending_ += weight;
      return;
    }
    v_ += weight;
    if (mode_ == Observe::peak) peak_ = std::max(peak_, v_);
    if (trace_) trace_(t_, v_);
  }

  void set_mode(double t, Observe mode) {
    advance(t);
    mode_ = mode;
    if (mode == Observe::peak) peak_ = v_;
  }

  double peak() const { return peak_; }

  struct Moments {
    double mean = 0.0;
    double std = 0.0;
    double time = 0.0;
  };

  Moments noise_moments() const {
    if (noise_time_ <= 0.0) return {};
    const double mean = noise_v_ / noise_time_;
    const double var = std::max(0.0, noise_v2_ / noise_time_ - mean * mean);
    return {mean, std::sqrt(var), noise_time_};
  }

 private:
  void observe_sample(double weight) {
    if (mode_ == Observe::peak) {
      peak_ = std::max(peak_, v_);
    } else if (mode_ == Observe::noise) {
      noise_v_ += v_ * weight;
      noise_v2_ += v_ * v_ * weight;
      noise_time_ += weight;
    }
    if (trace_) trace_(static_cast<double>(bin_) * step_, v_);
  }

  double tau_;
  Engine engine_;
  double step_;
  double decay_per_bin_ = 1.0;

  double v_ = 0.0;
  double t_ = 0.0;
  std::int64_t bin_ = 0;
  double pending_ = 0.0;

  Observe mode_ = Observe::none;
  double peak_ = 0.0;
  double noise_v_ = 0.0, noise_v2_ = 0.0, noise_time_ = 0.0;
  TraceSink trace_;
};

inline void check_weights(std::span<const double> weights) {
  for (double w : weights)
    if (!(w >= 0.0 && w <= 1.0)) throw ConstraintViolation("weights", "weights must lie in [0, 1]");
}

struct LifResult {
  std::vector<double> peaks;                       // one per window
  std::vector<std::pair<double, double>> trace;    // (time, V), when requested
  double final_potential = 0.0;
};

// Integrates a whole stream. Peaks are taken over each [begin, end] window;
// windows must be sorted and non-overlapping.
inline LifResult integrate_lif(const SpikeStream& stream, std::span<const double> weights, double tau, Engine engine,
                               double step = 1e-4, std::span<const std::pair<double, double>> windows = {},
                               bool keep_trace = false) {
  check_weights(weights);
  LifIntegrator lif(tau, engine, step);
  LifResult out;
  if (keep_trace) lif.set_trace([&](double t, double v) { out.trace.emplace_back(t, v); });

  std::size_t w = 0;
  bool inside = false;
  auto flush_markers = [&](double upto) {
    while (w < windows.size()) {
      const double edge = inside ? windows[w].second : windows[w].first;
      if (edge > upto) return;
      if (inside) {
        lif.advance(edge + (engine == Engine::clock ? step : 0.0));
        out.peaks.push_back(lif.peak());
        lif.set_mode(lif.time(), Observe::none);
        ++w;
      } else {
        lif.set_mode(edge, Observe::peak);
      }
      inside = !inside;
    }
  };

  for (const auto& e : stream.events) {
    if (e.afferent >= weights.size()) throw ConstraintViolation("afferent_id", "event afferent outside weight vector");
    flush_markers(e.time);
    if (weights[e.afferent] != 0.0) lif.deliver(e.time, weights[e.afferent]);
  }
  flush_markers(std::max(stream.duration, windows.empty() ? 0.0 : windows.back().second) + 1.0);
  lif.advance(std::max(stream.duration, lif.time()));
  out.final_potential = lif.potential();
  return out;
}

// ---------------------------------------------------------------------------
// Empirical SNR

struct TrialProtocol {
  ProblemParams params;
  int presentations_per_pattern = 200;
  double interval = 0.4;
  double step = 1e-4;
  Engine engine = Engine::clock;
};

struct EmpiricalSnr {
  double v_max_mean = 0.0;
  double v_noise_mean = 0.0;
  double v_noise_std = 0.0;
  double snr = 0.0;
  int n_presentations = 0;
  double noise_time = 0.0;
  std::size_t connected = 0;
};

struct InsufficientNoiseError : Error {
  using Error::Error;
};

// Noise samples are taken outside presentation windows, at least 5τ after the
// end of each window and after an initial 10τ warm-up. Peak windows are
// widened by T on both sides.
inline EmpiricalSnr measure_empirical_snr(const TrialProtocol& proto, const DetectorConfig& config, const RngStream& rng,
                                          const LifIntegrator::TraceSink& trace = {}) {
  const auto& p = proto.params;
  validate(p, config);
  if (!(proto.interval > p.pattern_duration + 2.0 * p.jitter))
    throw ConstraintViolation("interval", "presentations must not overlap");
  if (proto.presentations_per_pattern < 1) throw ConstraintViolation("presentations", "must be >= 1");

  std::vector<Pattern> patterns;
  for (int i = 0; i < p.pattern_count; ++i) {
    auto r = rng.substream(Purpose::pattern, static_cast<std::uint64_t>(i));
    patterns.push_back(generate_pattern(p, r));
  }
  const auto mask = select_afferents(patterns, config.window, p.afferent_count);
  const auto weights = to_weights(mask);
  const std::size_t connected = popcount(mask);
  if (connected == 0) throw DegenerateError("measure_empirical_snr: no connected afferent, V is identically 0");

  const Schedule sched{proto.interval, p.pattern_duration, p.pattern_count};
  const std::int64_t total = static_cast<std::int64_t>(proto.presentations_per_pattern) * p.pattern_count;
  const double guard = 5.0 * config.tau;

  LifIntegrator lif(config.tau, proto.engine, proto.step);
  if (trace) lif.set_trace(trace);

  double noise_from = 10.0 * config.tau;
  double peak_sum = 0.0;
  for (std::int64_t k = 0; k < total; ++k) {
    const double onset = sched.onset(k);
    const double peak_begin = onset - p.jitter, peak_end = onset + p.pattern_duration + p.jitter;

    // Markers of this segment in time order.
    struct Marker {
      double t;
      Observe mode;
    };
    std::vector<Marker> markers;
    if (noise_from < peak_begin) markers.push_back({noise_from, Observe::noise});
    markers.push_back({peak_begin, Observe::peak});
    markers.push_back({peak_end, Observe::none});
    noise_from = peak_end + guard;
    if (noise_from < sched.segment_start(k + 1)) markers.push_back({noise_from, Observe::noise});

    std::size_t m = 0;
    auto apply_until = [&](double t) {
      for (; m < markers.size() && markers[m].t <= t; ++m) {
        if (markers[m].mode == Observe::none) {
          // Close the peak window, including the sample of the closing bin.
          lif.advance(markers[m].t + (proto.engine == Engine::clock ? proto.step : 0.0));
          peak_sum += lif.peak();
          lif.set_mode(lif.time(), Observe::none);
        } else {
          lif.set_mode(std::max(markers[m].t, lif.time()), markers[m].mode);
        }
      }
    };

    for (const auto& e : segment_events(sched, k, patterns, p, rng)) {
      apply_until(e.time);
      if (weights[e.afferent] != 0.0) lif.deliver(e.time, weights[e.afferent]);
    }
    apply_until(sched.segment_start(k + 1));
  }
  lif.advance(sched.segment_start(total));

  const auto noise = lif.noise_moments();
  if (noise.time < 100.0 * config.tau)
    throw InsufficientNoiseError("measure_empirical_snr: less than 100 tau of noise samples");
  if (!(noise.std > 0.0)) throw DegenerateError("measure_empirical_snr: zero noise variance");

  EmpiricalSnr out;
  out.n_presentations = static_cast<int>(total);
  out.v_max_mean = peak_sum / static_cast<double>(total);
  out.v_noise_mean = noise.mean;
  out.v_noise_std = noise.std;
  out.noise_time = noise.time;
  out.connected = connected;
  out.snr = (out.v_max_mean - out.v_noise_mean) / out.v_noise_std;
  return out;
}

// ---------------------------------------------------------------------------
// Averaging check: distribution of (M, r, snr) over pattern realizations

struct Realization {
  double m = 0.0;
  double r = 0.0;
  double snr = 0.0;
};

struct AveragingReport {
  std::vector<Realization> samples; // realizations with M > 0
  std::size_t excluded = 0;         // realizations with M = 0
  double mean_snr = 0.0;
  double mean_m = 0.0;
  double mean_r = 0.0;
  double approx_snr = 0.0;          // reduced_snr(⟨M⟩, ⟨r⟩) from the closed forms
  double correlation_m_r = 0.0;
  std::vector<std::string> warnings;
};

// For each realization, P patterns are drawn over [0, Δt); M counts afferents
// with at least one spike, r is the in-window spike count per pattern divided
// by Δt.
inline AveragingReport averaging_validation(const ProblemParams& params, double window, int n_realizations,
                                            const RngStream& rng, unsigned workers = 1) {
  validate(params);
  if (!(window > 0.0)) throw ConstraintViolation("dt_window", "must be > 0");
  if (n_realizations < 1) throw ConstraintViolation("n_realizations", "must be >= 1");

  ProblemParams clip = params;
  clip.pattern_duration = window;
  std::vector<Realization> all(static_cast<std::size_t>(n_realizations));
  parallel_for(all.size(), workers, [&](std::size_t i) {
    auto r = rng.substream(Purpose::realization, i);
    std::vector<Pattern> patterns;
    std::size_t spikes = 0;
    for (int k = 0; k < params.pattern_count; ++k) {
      patterns.push_back(generate_pattern(clip, r));
      spikes += patterns.back().size();
    }
    const double m = static_cast<double>(popcount(select_afferents(patterns, window, params.afferent_count)));
    const double rate = static_cast<double>(spikes) / (window * params.pattern_count);
    all[i] = {m, rate, m > 0 ? analytic::reduced_snr(m, rate, params.rate) : 0.0};
  });

  AveragingReport rep;
  for (const auto& s : all) {
    if (s.m > 0) rep.samples.push_back(s);
    else ++rep.excluded;
  }
  if (rep.excluded > 0)
    rep.warnings.push_back(std::to_string(rep.excluded) + " realization(s) with M = 0 excluded from the mean");
  if (n_realizations < 1000) rep.warnings.push_back("fewer than 1000 realizations");

  const double n = static_cast<double>(rep.samples.size());
  if (n > 0) {
    for (const auto& s : rep.samples) {
      rep.mean_snr += s.snr / n;
      rep.mean_m += s.m / n;
      rep.mean_r += s.r / n;
    }
    double cmr = 0.0, cmm = 0.0, crr = 0.0;
    for (const auto& s : rep.samples) {
      cmr += (s.m - rep.mean_m) * (s.r - rep.mean_r);
      cmm += (s.m - rep.mean_m) * (s.m - rep.mean_m);
      crr += (s.r - rep.mean_r) * (s.r - rep.mean_r);
    }
    rep.correlation_m_r = (cmm > 0 && crr > 0) ? cmr / std::sqrt(cmm * crr) : 0.0;
  }
  rep.approx_snr = analytic::reduced_snr(analytic::expected_m(params, window), analytic::expected_r(params), params.rate);
  return rep;
}

} // namespace spikesnr::simulator
