#pragma once

// Plastic LIF with adaptive threshold, trace-based LTP and homeostatic LTD,
// driven by repeated jittered patterns embedded in Poisson noise.
//
// Assumption: the potential resets to 0 after each postsynaptic spike.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikesnr/analytic.hpp"
#include "spikesnr/core.hpp"
#include "spikesnr/optimizer.hpp"
#include "spikesnr/parallel.hpp"
#include "spikesnr/simulator.hpp"

namespace spikesnr::stdp {

struct StdpConfig {
  double theta0 = 190.0;
  double theta_jump_factor = 1.8; // threshold jump = factor·θ0
  double tau_theta = 0.08;
  double delta_a_pre = 0.1;
  double tau_pre = 0.02;
  double w_out = -6.2e-3;
  std::optional<double> w_init; // computed by initial_weight() when empty
};

inline void validate(const StdpConfig& c) {
  if (!(c.theta0 > 0.0)) throw ConstraintViolation("theta0", "must be > 0");
  if (!(c.w_out < 0.0)) throw ConstraintViolation("w_out", "must be < 0");
  if (!(c.delta_a_pre > 0.0)) throw ConstraintViolation("delta_a_pre", "must be > 0");
  if (!(c.tau_theta > 0.0) || !(c.tau_pre > 0.0)) throw ConstraintViolation("tau", "time constants must be > 0");
  if (!(c.theta_jump_factor >= 0.0)) throw ConstraintViolation("theta_jump_factor", "must be >= 0");
  if (c.w_init && !(*c.w_init >= 0.0 && *c.w_init <= 1.0)) throw ConstraintViolation("w_init", "must lie in [0, 1]");
}

// Soft-bounded combined LTP + LTD for one synapse at a postsynaptic spike.
inline double updated_weight(double w, double trace, double w_out) {
  return std::clamp(w + w * (1.0 - w) * (trace + w_out), 0.0, 1.0);
}

inline void apply_ltp_ltd(std::span<double> weights, std::span<const double> traces, double w_out) {
  if (weights.size() != traces.size()) throw ConstraintViolation("traces", "one trace per synapse");
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = updated_weight(weights[i], traces[i], w_out);
}

struct InfeasibleInitialization : Error {
  using Error::Error;
};

// Uniform weight putting the noise mean one standard deviation above the
// baseline threshold: τfNw = θ0 + sqrt(τfNw²/2).
inline double initial_weight(const ProblemParams& p, const StdpConfig& c, double tau) {
  const double load = tau * p.rate * p.afferent_count;
  const double denom = load - std::sqrt(load / 2.0);
  if (!(denom > 0.0)) throw InfeasibleInitialization("initial_weight: tau*f*N too small for a positive solution");
  const double w = c.theta0 / denom;
  if (!(w >= 0.0 && w <= 1.0)) throw InfeasibleInitialization("initial_weight: solution " + std::to_string(w) + " outside [0, 1]");
  return w;
}

// Mean distance between the weights and their binary quantization.
inline double convergence_index(std::span<const double> weights) {
  if (weights.empty()) return 0.0;
  double sum = 0.0;
  for (double w : weights) sum += w < 0.5 ? w : 1.0 - w;
  return sum / static_cast<double>(weights.size());
}

// ---------------------------------------------------------------------------
// Neuron

// Event-driven: V, θ and the presynaptic traces are decayed lazily to the
// time of the next event that needs them.
class PlasticNeuron {
 public:
  PlasticNeuron(std::size_t afferents, double w_init, double tau, const StdpConfig& config)
      : tau_(tau), cfg_(config), weights_(afferents, w_init), trace_(afferents, 0.0), trace_time_(afferents, 0.0) {
    if (!(tau > 0.0)) throw ConstraintViolation("tau", "must be > 0");
    simulator::check_weights(weights_);
  }

  bool plastic = true;

  // Presynaptic spike of `afferent` at t (non-decreasing). Returns true when
  // it triggers a postsynaptic spike.
  bool receive(std::uint32_t afferent, double t) {
    advance(t);
    if (plastic) {
      trace_[afferent] = trace_[afferent] * std::exp(-(t - trace_time_[afferent]) / cfg_.tau_pre) + cfg_.delta_a_pre;
      trace_time_[afferent] = t;
    }
    v_ += weights_[afferent];
    if (v_ < threshold()) return false;

    v_ = 0.0;
    theta_excess_ += cfg_.theta_jump_factor * cfg_.theta0;
    if (plastic) potentiate(t);
    ++spikes_;
    return true;
  }

  void advance(double t) {
    const double dt = t - t_;
    if (dt <= 0.0) return;
    v_ *= std::exp(-dt / tau_);
    theta_excess_ *= std::exp(-dt / cfg_.tau_theta);
    t_ = t;
  }

  double potential() const { return v_; }
  double threshold() const { return cfg_.theta0 + theta_excess_; }
  double time() const { return t_; }
  std::uint64_t spike_count() const { return spikes_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> weights() { return weights_; }

  double trace(std::uint32_t afferent, double t) const {
    return trace_[afferent] * std::exp(-(t - trace_time_[afferent]) / cfg_.tau_pre);
  }

 private:
  void potentiate(double t) {
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const double a = trace_[i] * std::exp(-(t - trace_time_[i]) / cfg_.tau_pre);
      weights_[i] = updated_weight(weights_[i], a, cfg_.w_out);
    }
  }

  double tau_;
  StdpConfig cfg_;
  double v_ = 0.0;
  double theta_excess_ = 0.0;
  double t_ = 0.0;
  std::uint64_t spikes_ = 0;
  std::vector<double> weights_;
  std::vector<double> trace_;
  std::vector<double> trace_time_;
};

// Feeds a batch of presynaptic spikes; returns the postsynaptic spike times.
inline std::vector<double> step_plastic_lif(PlasticNeuron& neuron, std::span<const SpikeEvent> spikes) {
  std::vector<double> out;
  for (const auto& e : spikes)
    if (neuron.receive(e.afferent, e.time)) out.push_back(e.time);
  return out;
}

// ---------------------------------------------------------------------------
// Learning runs

struct LearningOptions {
  double duration = 12000.0;          // cap on plastic simulated time
  bool adaptive_stop = true;          // stop once converged and stable
  double stable_time = 500.0;
  double convergence_threshold = 0.01;
  double sample_interval = 10.0;      // convergence trace period
  int eval_presentations = 100;       // per pattern, weights frozen
  double interval = 0.4;
  std::optional<double> m_opt;        // theoretical optimum M; computed when empty
};

struct LearningOutcome {
  std::vector<double> final_weights;
  int learned_pattern_count = 0;
  double hit_rate = 0.0;              // over presentations of learned patterns
  double false_alarm_rate = 0.0;      // Hz, outside presentation windows
  std::size_t potentiated_count = 0;  // weights >= 0.5
  bool optimal = false;
  bool converged = false;
  double final_convergence_index = 0.0;
  double learning_time = 0.0;         // plastic simulated seconds
  double m_opt = 0.0;
  std::vector<int> hits_per_pattern;
  std::vector<double> prefix_spans;   // leading all-potentiated span per pattern
  std::vector<std::pair<double, double>> convergence_trace; // (time, index)
  std::vector<Pattern> patterns;
  double w_init = 0.0;
};

struct NotConvergedError : Error {
  using Error::Error;
};

// Time of the first pattern spike whose synapse is not potentiated; the
// pattern duration when every spike is potentiated.
inline double leading_potentiated_span(const Pattern& pattern, std::span<const double> weights) {
  for (const auto& e : pattern.events)
    if (weights[e.afferent] < 0.5) return e.time;
  return pattern.duration;
}

// Window Δt whose expected connected count is m (inverse of expected_m).
inline double window_for_count(const ProblemParams& p, double m) {
  const double frac = m / p.afferent_count;
  if (!(frac > 0.0 && frac < 1.0)) throw ConstraintViolation("m_opt", "must lie in (0, N)");
  return -std::log1p(-frac) / (p.pattern_count * p.rate);
}

// Optimal when the weights have converged, every pattern fires the neuron,
// the potentiated count is within 5% of the theoretical optimum, and every
// pattern starts with an all-potentiated span of at least half the optimal
// window.
inline bool is_optimal(const LearningOutcome& o, const ProblemParams& p, double m_opt) {
  if (o.final_convergence_index >= 0.01)
    throw NotConvergedError("is_optimal: convergence index " + std::to_string(o.final_convergence_index) + " >= 0.01");
  if (o.learned_pattern_count < p.pattern_count) return false;
  if (std::abs(static_cast<double>(o.potentiated_count) - m_opt) > 0.05 * m_opt) return false;
  const double min_span = 0.5 * window_for_count(p, m_opt);
  for (double span : o.prefix_spans)
    if (span < min_span) return false;
  return true;
}

inline double theoretical_m_opt(ProblemParams p) {
  p.pattern_duration = kUnbounded;
  return optimizer::optimize_snr(p).m;
}

// Patterns are presented alternately, one per interval, each jittered anew.
// After the plastic phase the weights are frozen and every pattern is shown
// eval_presentations more times to measure hits and false alarms.
inline LearningOutcome run_learning(const ProblemParams& params, double tau, const StdpConfig& config,
                                    const LearningOptions& opt, const RngStream& rng) {
  spikesnr::validate(params);
  validate(config);
  if (!(opt.interval > params.pattern_duration + 2.0 * params.jitter))
    throw ConstraintViolation("interval", "presentations must not overlap");

  LearningOutcome out;
  out.m_opt = opt.m_opt ? *opt.m_opt : theoretical_m_opt(params);
  out.w_init = config.w_init ? *config.w_init : initial_weight(params, config, tau);

  for (int i = 0; i < params.pattern_count; ++i) {
    auto r = rng.substream(Purpose::pattern, static_cast<std::uint64_t>(i));
    out.patterns.push_back(simulator::generate_pattern(params, r));
  }

  PlasticNeuron neuron(static_cast<std::size_t>(params.afferent_count), out.w_init, tau, config);
  const simulator::Schedule sched{opt.interval, params.pattern_duration, params.pattern_count};

  const auto sample_every = std::max<std::int64_t>(1, std::llround(opt.sample_interval / opt.interval));
  std::int64_t k = 0;
  std::optional<double> converged_since;
  auto sample = [&](double t) {
    const double index = convergence_index(neuron.weights());
    out.convergence_trace.emplace_back(t, index);
    if (index < opt.convergence_threshold) {
      if (!converged_since) converged_since = t;
    } else {
      converged_since.reset();
    }
  };

  sample(0.0);
  while (sched.segment_start(k + 1) <= opt.duration + 1e-9) {
    for (const auto& e : simulator::segment_events(sched, k, out.patterns, params, rng)) neuron.receive(e.afferent, e.time);
    ++k;
    const double now = sched.segment_start(k);
    if (k % sample_every == 0) {
      sample(now);
      if (opt.adaptive_stop && converged_since && now - *converged_since >= opt.stable_time) break;
    }
  }
  out.learning_time = sched.segment_start(k);

  // Frozen-weight evaluation.
  neuron.plastic = false;
  out.hits_per_pattern.assign(static_cast<std::size_t>(params.pattern_count), 0);
  std::uint64_t false_alarms = 0;
  double window_time = 0.0;
  const std::int64_t eval_total = static_cast<std::int64_t>(opt.eval_presentations) * params.pattern_count;
  for (std::int64_t j = 0; j < eval_total; ++j, ++k) {
    const double begin = sched.onset(k) - params.jitter;
    const double end = sched.onset(k) + params.pattern_duration + params.jitter;
    window_time += end - begin;
    bool hit = false;
    for (const auto& e : simulator::segment_events(sched, k, out.patterns, params, rng)) {
      if (!neuron.receive(e.afferent, e.time)) continue;
      if (e.time >= begin && e.time <= end) hit = true;
      else ++false_alarms;
    }
    if (hit) ++out.hits_per_pattern[static_cast<std::size_t>(sched.pattern_of(k))];
  }
  const double eval_time = static_cast<double>(eval_total) * opt.interval;
  out.false_alarm_rate = eval_total > 0 ? static_cast<double>(false_alarms) / (eval_time - window_time) : 0.0;

  int hits_learned = 0;
  for (int h : out.hits_per_pattern)
    if (h > 0) ++out.learned_pattern_count, hits_learned += h;
  out.hit_rate = out.learned_pattern_count > 0
                     ? static_cast<double>(hits_learned) / (static_cast<double>(out.learned_pattern_count) * opt.eval_presentations)
                     : 0.0;

  const auto w = neuron.weights();
  out.final_weights.assign(w.begin(), w.end());
  out.potentiated_count = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double x) { return x >= 0.5; }));
  out.final_convergence_index = convergence_index(w);
  out.converged = out.final_convergence_index < opt.convergence_threshold;
  for (const auto& pattern : out.patterns) out.prefix_spans.push_back(leading_potentiated_span(pattern, w));
  try {
    out.optimal = is_optimal(out, params, out.m_opt);
  } catch (const NotConvergedError&) {
    out.optimal = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter search

// lo, lo·r, lo·r², ... up to hi (inclusive within rounding).
inline std::vector<double> geometric_range(double lo, double hi, double ratio = 1.025) {
  if (!(lo > 0.0) || !(hi >= lo) || !(ratio > 1.0)) throw ConstraintViolation("range", "need 0 < lo <= hi and ratio > 1");
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double v = lo * std::pow(ratio, k);
    if (v > hi * (1.0 + 1e-12)) break;
    out.push_back(v);
  }
  return out;
}

struct GridCell {
  double theta0 = 0.0;
  double w_out = 0.0;
  int trials = 0;
  double p_opt = 0.0;
  double mean_learned = 0.0;
  double mean_hit_rate = 0.0;
  double mean_false_alarm = 0.0;
};

struct GridSearchResult {
  std::vector<GridCell> cells; // θ0-major
  std::size_t best = 0;
};

// Magnitude ranges for w_out are given as positive (|w_out|) bounds.
inline GridSearchResult grid_search(const ProblemParams& params, double tau, std::pair<double, double> theta0_range,
                                    std::pair<double, double> w_out_magnitude_range, int trials_per_cell,
                                    const StdpConfig& base, const LearningOptions& opt, const RngStream& rng,
                                    unsigned workers = 1, double ratio = 1.025) {
  if (trials_per_cell < 1) throw ConstraintViolation("trials_per_cell", "must be >= 1");
  const auto thetas = geometric_range(theta0_range.first, theta0_range.second, ratio);
  const auto magnitudes = geometric_range(w_out_magnitude_range.first, w_out_magnitude_range.second, ratio);

  LearningOptions shared = opt;
  if (!shared.m_opt) shared.m_opt = theoretical_m_opt(params);

  GridSearchResult res;
  for (double th : thetas)
    for (double mag : magnitudes) res.cells.push_back({th, -mag, trials_per_cell});

  const std::size_t trials = static_cast<std::size_t>(trials_per_cell);
  std::vector<LearningOutcome> runs(res.cells.size() * trials);
  parallel_for(runs.size(), workers, [&](std::size_t i) {
    const auto& cell = res.cells[i / trials];
    StdpConfig cfg = base;
    cfg.theta0 = cell.theta0;
    cfg.w_out = cell.w_out;
    cfg.w_init.reset();
    // Same seed for trial j of every cell: paired comparisons.
    auto outcome = run_learning(params, tau, cfg, shared, rng.substream(Purpose::trial, i % trials));
    outcome.final_weights.clear();
    outcome.patterns.clear();
    runs[i] = std::move(outcome);
  });

  for (std::size_t c = 0; c < res.cells.size(); ++c) {
    auto& cell = res.cells[c];
    for (std::size_t j = 0; j < trials; ++j) {
      const auto& r = runs[c * trials + j];
      cell.p_opt += r.optimal ? 1.0 : 0.0;
      cell.mean_learned += r.learned_pattern_count;
      cell.mean_hit_rate += r.hit_rate;
      cell.mean_false_alarm += r.false_alarm_rate;
    }
    const double n = static_cast<double>(trials);
    cell.p_opt /= n, cell.mean_learned /= n, cell.mean_hit_rate /= n, cell.mean_false_alarm /= n;
    const auto& b = res.cells[res.best];
    if (cell.p_opt > b.p_opt || (cell.p_opt == b.p_opt && cell.mean_learned > b.mean_learned)) res.best = c;
  }
  return res;
}

} // namespace spikesnr::stdp
