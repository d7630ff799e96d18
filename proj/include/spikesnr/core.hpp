#pragma once

// Shared data model: problem/detector parameters, spike streams, seeded
// random substreams and the CSV exchange format for spike streams.
//
// All times are double-precision seconds, rates are Hz. Conversion from the
// millisecond values used on the command line happens in tools/.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spikesnr {

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A parameter violates its domain; field() names the offending field.
class ConstraintViolation : public Error {
 public:
  ConstraintViolation(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Quantity undefined (division by a zero count, all-zero weights, ...).
struct DegenerateError : Error {
  using Error::Error;
};

struct InfeasibleError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

constexpr double ms(double v) noexcept { return v * 1e-3; }
constexpr double to_ms(double seconds) noexcept { return seconds * 1e3; }

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Parameters

// Imposed variables of the detection problem.
struct ProblemParams {
  int pattern_count = 1;          // P
  double pattern_duration = 0.02; // L, may be kUnbounded
  int afferent_count = 10000;     // N
  double rate = 5.0;              // f
  double jitter = 0.0;            // T, half-width of the uniform jitter
};

// Free variables: membrane time constant and the selected pattern prefix.
struct DetectorConfig {
  double tau = 0.01;
  double window = 0.02; // Δt
};

inline void validate(const ProblemParams& p) {
  if (p.pattern_count < 1) throw ConstraintViolation("P", "pattern count must be >= 1");
  if (p.afferent_count < 1) throw ConstraintViolation("N", "afferent count must be >= 1");
  if (!(p.rate > 0.0) || !std::isfinite(p.rate))
    throw ConstraintViolation("f", "rate must be finite and > 0");
  if (!(p.pattern_duration > 0.0))
    throw ConstraintViolation("L", "pattern duration must be > 0");
  if (!(p.jitter >= 0.0) || !std::isfinite(p.jitter))
    throw ConstraintViolation("T", "jitter must be finite and >= 0");
}

inline void validate(const ProblemParams& p, const DetectorConfig& c) {
  validate(p);
  if (!(c.tau > 0.0) || !std::isfinite(c.tau))
    throw ConstraintViolation("tau", "membrane time constant must be finite and > 0");
  if (!(c.window > 0.0) || !std::isfinite(c.window))
    throw ConstraintViolation("dt_window", "window must be finite and > 0");
  if (c.window > p.pattern_duration)
    throw ConstraintViolation("dt_window", "window must not exceed the pattern duration L");
}

// ---------------------------------------------------------------------------
// Spike streams

struct SpikeEvent {
  std::uint32_t afferent = 0;
  double time = 0.0;

  friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
};

inline bool event_before(const SpikeEvent& a, const SpikeEvent& b) noexcept {
  return a.time < b.time || (a.time == b.time && a.afferent < b.afferent);
}

// Events sorted by (time, afferent). Streams produced by jitter() are
// onset-relative and may extend T beyond [0, duration].
struct SpikeStream {
  std::vector<SpikeEvent> events;
  double duration = 0.0;

  std::size_t size() const noexcept { return events.size(); }
  bool empty() const noexcept { return events.empty(); }

  friend bool operator==(const SpikeStream&, const SpikeStream&) = default;
};

// A frozen-noise realization, replayed at every presentation.
using Pattern = SpikeStream;

inline void sort_events(std::vector<SpikeEvent>& events) {
  std::sort(events.begin(), events.end(), event_before);
}

inline bool is_well_formed(const SpikeStream& s, std::size_t afferent_count) {
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    if (e.afferent >= afferent_count) return false;
    if (e.time < 0.0 || e.time > s.duration) return false;
    if (i > 0 && e.time < s.events[i - 1].time) return false;
  }
  return true;
}

inline SpikeStream merge(const SpikeStream& a, const SpikeStream& b) {
  SpikeStream out;
  out.duration = std::max(a.duration, b.duration);
  out.events.resize(a.events.size() + b.events.size());
  std::merge(a.events.begin(), a.events.end(), b.events.begin(), b.events.end(),
             out.events.begin(), event_before);
  return out;
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& os, const SpikeStream& s) {
  os << "afferent_id,time_s\r\n";
  for (const auto& e : s.events) os << e.afferent << ',' << format_double(e.time) << "\r\n";
}

// Reads the `afferent_id,time_s` format. The duration becomes the last event
// time unless a larger one is supplied.
inline SpikeStream read_csv(std::istream& is, double duration = 0.0) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("spike csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "afferent_id,time_s") throw IoError("spike csv: unexpected header '" + line + "'");

  SpikeStream s;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("spike csv: row " + std::to_string(row) + " has no comma");
    SpikeEvent e;
    const char* first = line.data();
    const char* last = line.data() + line.size();
    auto r1 = std::from_chars(first, first + comma, e.afferent);
    auto r2 = std::from_chars(first + comma + 1, last, e.time);
    if (r1.ec != std::errc{} || r1.ptr != first + comma || r2.ec != std::errc{} || r2.ptr != last)
      throw IoError("spike csv: malformed row " + std::to_string(row));
    if (!s.events.empty() && e.time < s.events.back().time)
      throw IoError("spike csv: times not ascending at row " + std::to_string(row));
    s.events.push_back(e);
  }
  s.duration = std::max(duration, s.events.empty() ? 0.0 : s.events.back().time);
  return s;
}

inline void save_csv(const std::string& path, const SpikeStream& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_csv(os, s);
}

inline SpikeStream load_csv(const std::string& path, double duration = 0.0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_csv(is, duration);
}

// ---------------------------------------------------------------------------
// Random streams

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream ids used by the simulators. Substreams are keyed by (purpose, index).
enum class Purpose : std::uint64_t {
  pattern = 1,
  presentation = 2,
  background = 3,
  trial = 4,
  realization = 5,
};

// Deterministic random stream identified by (seed, stream_id). Child streams
// are derived by hashing the parent key with a counter, so every logical
// purpose gets its own independent sequence regardless of consumption order
// elsewhere. Distribution transforms are written out here rather than using
// <random> distributions, whose output is implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id),
        key_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))),
        engine_(key_) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  RngStream substream(std::uint64_t id) const { return RngStream(key_, id); }
  RngStream substream(Purpose purpose, std::uint64_t index) const {
    return substream(static_cast<std::uint64_t>(purpose)).substream(index);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Exponential with the given rate (mean 1/rate).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Uniform integer in [0, n), Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

} // namespace spikesnr
