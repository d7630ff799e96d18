#include <cstdint>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "spikesnr/analytic.hpp"
#include "spikesnr/core.hpp"
#include "spikesnr/experiments.hpp"
#include "spikesnr/io.hpp"
#include "spikesnr/optimizer.hpp"
#include "spikesnr/simulator.hpp"

namespace {

using namespace spikesnr;
using nlohmann::json;

struct Overrides {
  std::optional<double> P, f_hz, T_ms, N, tau_ms, dt_ms, theta0, w_out;

  void add_to(CLI::App* app) {
    app->add_option("--P", P, "Number of patterns");
    app->add_option("--f-hz", f_hz, "Afferent firing rate (Hz)");
    app->add_option("--T-ms", T_ms, "Jitter half-width (ms)");
    app->add_option("--N", N, "Number of afferents");
    app->add_option("--tau-ms", tau_ms, "Membrane time constant (ms)");
    app->add_option("--dt-ms", dt_ms, "Selected window / pattern duration (ms)");
    app->add_option("--theta0", theta0, "Resting threshold");
    app->add_option("--w-out", w_out, "Homeostatic term");
  }

  std::map<std::string, double> to_map() const {
    std::map<std::string, double> m;
    auto put = [&](const char* k, const std::optional<double>& v) {
      if (v) m[k] = *v;
    };
    put("P", P);
    put("f_hz", f_hz);
    put("T_ms", T_ms);
    put("N", N);
    put("tau_ms", tau_ms);
    put("dt_ms", dt_ms);
    put("theta0", theta0);
    put("w_out", w_out);
    return m;
  }
};

ProblemParams problem_from(const Overrides& o, double default_l) {
  ProblemParams p;
  if (o.P) p.pattern_count = static_cast<int>(*o.P);
  if (o.N) p.afferent_count = static_cast<int>(*o.N);
  if (o.f_hz) p.rate = *o.f_hz;
  if (o.T_ms) p.jitter = ms(*o.T_ms);
  p.pattern_duration = default_l;
  return p;
}

int run(int argc, char** argv) {
  CLI::App app{"Analytic and simulated SNR of LIF pattern detectors"};
  app.require_subcommand(1);

  experiments::ExperimentSpec spec;
  Overrides ov;
  std::string scale = "desk";
  for (const auto& name : experiments::experiment_names()) {
    auto* sub = app.add_subcommand(name, "Run the " + name + " experiment");
    sub->add_option("--seed", spec.seed, "Root seed")->capture_default_str();
    sub->add_option("--scale", scale, "Trial counts")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();
    sub->add_option("--out", spec.output_dir, "Output directory")->capture_default_str();
    sub->add_flag("--check", spec.check, "Exit nonzero when a tolerance check fails");
    sub->add_option("--workers", spec.workers, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_flag("--trace", spec.dump_trace, "Dump a membrane potential trace (fig3-validation)");
    ov.add_to(sub);
    sub->callback([&, name] { spec.name = name; });
  }

  // Analytic helpers.
  auto* snr_cmd = app.add_subcommand("snr", "Analytic SNR for one detector");
  Overrides snr_ov;
  double snr_l_ms = std::numeric_limits<double>::infinity();
  snr_ov.add_to(snr_cmd);
  snr_cmd->add_option("--L-ms", snr_l_ms, "Pattern duration (ms), unbounded by default");

  auto* opt_cmd = app.add_subcommand("optimize", "Optimal tau and window for one problem");
  Overrides opt_ov;
  double opt_l_ms = std::numeric_limits<double>::infinity();
  opt_ov.add_to(opt_cmd);
  opt_cmd->add_option("--L-ms", opt_l_ms, "Pattern duration (ms), unbounded by default");

  // Spike stream export / import.
  auto* pat_cmd = app.add_subcommand("pattern", "Export a frozen-noise pattern as a spike CSV");
  Overrides pat_ov;
  double pat_l_ms = 20.0;
  std::uint64_t pat_seed = 1, pat_index = 0;
  std::string pat_file;
  bool pat_jitter = false;
  pat_ov.add_to(pat_cmd);
  pat_cmd->add_option("--L-ms", pat_l_ms, "Pattern duration (ms)")->capture_default_str();
  pat_cmd->add_option("--seed", pat_seed, "Root seed")->capture_default_str();
  pat_cmd->add_option("--index", pat_index, "Pattern index")->capture_default_str();
  pat_cmd->add_flag("--jitter", pat_jitter, "Export one jittered presentation instead of the frozen pattern");
  pat_cmd->add_option("--file", pat_file, "Output CSV")->required();

  auto* int_cmd = app.add_subcommand("integrate", "Integrate a spike CSV through a LIF neuron");
  std::string int_file, int_weights, int_trace, int_engine = "event";
  double int_tau_ms = 10.0;
  int int_n = 10000;
  int_cmd->add_option("--file", int_file, "Input spike CSV")->required()->check(CLI::ExistingFile);
  int_cmd->add_option("--weights", int_weights, "Weights CSV (afferent_id,weight); all ones by default");
  int_cmd->add_option("--N", int_n, "Number of afferents")->capture_default_str();
  int_cmd->add_option("--tau-ms", int_tau_ms, "Membrane time constant (ms)")->capture_default_str();
  int_cmd->add_option("--engine", int_engine, "Integration engine")->check(CLI::IsMember({"clock", "event"}))->capture_default_str();
  int_cmd->add_option("--trace", int_trace, "Write the time_s,V trace to this CSV");

  CLI11_PARSE(app, argc, argv);

  if (snr_cmd->parsed()) {
    auto p = problem_from(snr_ov, ms(snr_l_ms));
    const DetectorConfig c{ms(snr_ov.tau_ms.value_or(10.0)), ms(snr_ov.dt_ms.value_or(20.0))};
    const auto b = analytic::snr(p, c);
    std::cout << json{{"snr", b.snr}, {"v_max", b.v_max}, {"m", b.m_expected}, {"r", b.r_expected},
                      {"v_noise_mean", b.v_noise_mean}, {"v_noise_std", b.v_noise_std}}
                     .dump(2)
              << '\n';
    return 0;
  }
  if (opt_cmd->parsed()) {
    const auto o = optimizer::optimize_snr(problem_from(opt_ov, ms(opt_l_ms)));
    std::cout << json{{"tau_ms", to_ms(o.tau)}, {"dt_ms", to_ms(o.window)}, {"snr", o.snr}, {"m", o.m},
                      {"constraint_active", o.constraint_active}}
                     .dump(2)
              << '\n';
    return 0;
  }
  if (pat_cmd->parsed()) {
    const auto p = problem_from(pat_ov, ms(pat_l_ms));
    validate(p);
    const RngStream root(pat_seed);
    auto r = root.substream(Purpose::pattern, pat_index);
    auto pattern = simulator::generate_pattern(p, r);
    if (pat_jitter) {
      auto jr = root.substream(Purpose::presentation, pat_index);
      pattern = simulator::jitter(pattern, p.jitter, jr);
      // Shift so every time is non-negative.
      for (auto& e : pattern.events) e.time += p.jitter;
      pattern.duration += 2.0 * p.jitter;
    }
    save_csv(pat_file, pattern);
    std::cerr << pattern.size() << " events written to " << pat_file << '\n';
    return 0;
  }
  if (int_cmd->parsed()) {
    const auto stream = load_csv(int_file);
    std::vector<double> w = int_weights.empty() ? std::vector<double>(static_cast<std::size_t>(int_n), 1.0)
                                                : io::read_weights_csv(int_weights, static_cast<std::size_t>(int_n));
    const auto engine = int_engine == "clock" ? simulator::Engine::clock : simulator::Engine::event;
    const std::pair<double, double> whole{0.0, stream.duration};
    const auto res = simulator::integrate_lif(stream, w, ms(int_tau_ms), engine, 1e-4, std::span(&whole, 1), !int_trace.empty());
    if (!int_trace.empty()) io::write_pairs_csv(int_trace, "time_s,V", res.trace);
    std::cout << json{{"events", stream.size()}, {"peak", res.peaks.empty() ? 0.0 : res.peaks.front()},
                      {"final_potential", res.final_potential}}
                     .dump(2)
              << '\n';
    return 0;
  }

  spec.scale = scale == "full" ? experiments::Scale::full : experiments::Scale::desk;
  spec.overrides = ov.to_map();
  const auto result = experiments::run_experiment(spec);
  for (const auto& c : result.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.criterion << ": " << c.detail << '\n';
  std::cout << "results in " << result.directory.string() << '\n';
  return spec.check && !result.passed() ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const spikesnr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
