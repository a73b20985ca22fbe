#pragma once

// Deterministic simulated edge device. A transmitter schedule plus baseline
// and interference processes become sensed time-load and frequency-load
// traces. Everything random is a counter-based draw keyed on rng_seed, so a
// run is reproducible byte-for-byte and runs share no state.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"
#include "loadwave/frequency_ratio.hpp"
#include "loadwave/noise.hpp"

namespace loadwave {

enum class Governor {
  ondemand,     // lowest sufficient level, with reaction delay and dwell
  performance,  // pinned at the top level
};

struct DeviceProfile {
  int n_cores = 4;
  std::vector<double> clock_levels_hz{200e6, 400e6, 533e6, 800e6, 998e6, 1094e6, 1152e6, 1200e6};
  double dvfs_reaction_delay_s = 0.05;
  double dvfs_min_dwell_s = 0.1;
  Governor governor = Governor::ondemand;

  double max_clock_hz() const { return clock_levels_hz.back(); }

  void validate() const {
    if (n_cores < 2) fail(ErrorCode::invalid_argument, "device needs at least 2 cores");
    if (clock_levels_hz.empty()) fail(ErrorCode::invalid_argument, "device needs at least one clock level");
    for (std::size_t i = 0; i < clock_levels_hz.size(); ++i) {
      if (!(clock_levels_hz[i] > 0.0)) fail(ErrorCode::invalid_argument, "clock levels must be positive");
      if (i > 0 && !(clock_levels_hz[i] > clock_levels_hz[i - 1])) {
        fail(ErrorCode::invalid_argument, "clock levels must be strictly ascending");
      }
    }
    if (!(dvfs_reaction_delay_s >= 0.0) || !(dvfs_min_dwell_s >= 0.0)) {
      fail(ErrorCode::invalid_argument, "DVFS delays must be nonnegative");
    }
  }

  /// Quad-core phone with eight clock rates between 200 MHz and 1.2 GHz.
  static DeviceProfile phone() { return {}; }

  /// Quad-core board with two clock rates whose governor stays at the top.
  static DeviceProfile pinned_board() {
    DeviceProfile d;
    d.clock_levels_hz = {600e6, 1200e6};
    d.governor = Governor::performance;
    return d;
  }

  /// Phone levels with an instantaneous governor.
  static DeviceProfile ideal() {
    DeviceProfile d;
    d.dvfs_reaction_delay_s = 0.0;
    d.dvfs_min_dwell_s = 0.0;
    return d;
  }
};

enum class InterferenceKind { none, media, compress, custom };

constexpr std::string_view to_string(InterferenceKind k) {
  switch (k) {
    case InterferenceKind::none: return "none";
    case InterferenceKind::media: return "media";
    case InterferenceKind::compress: return "compress";
    case InterferenceKind::custom: return "custom";
  }
  return "none";
}

inline InterferenceKind parse_interference(std::string_view s) {
  if (s == "none") return InterferenceKind::none;
  if (s == "media") return InterferenceKind::media;
  if (s == "compress") return InterferenceKind::compress;
  if (s == "custom") return InterferenceKind::custom;
  fail(ErrorCode::invalid_argument, "unknown interference kind '" + std::string(s) + "'");
}

/// Interfering workload. The numeric defaults are calibration knobs.
struct Interference {
  InterferenceKind kind = InterferenceKind::none;
  double media_min = 0.10;
  double media_max = 0.30;
  double media_slot_s = 0.25;
  double compress_level = 0.60;
  double compress_on_s = 2.0;
  double compress_off_s = 0.5;
  WaveformSchedule custom;  // repeats with its own period when kind == custom
};

struct ChannelConfig {
  double baseline_load = 0.05;
  double baseline_noise_sigma = 0.02;
  double baseline_noise_slot_s = 0.05;
  Interference interference;
  double tx_response_delay_s = 0.0;
  double measurement_noise_sigma = 0.01;
  std::uint64_t rng_seed = 0;
  int ticks_per_sample = 8;

  /// Silent, noiseless, delay-free channel.
  static ChannelConfig ideal() {
    ChannelConfig c;
    c.baseline_load = 0.0;
    c.baseline_noise_sigma = 0.0;
    c.measurement_noise_sigma = 0.0;
    return c;
  }

  void validate() const {
    auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!fraction(baseline_load)) fail(ErrorCode::invalid_argument, "baseline_load must be in [0, 1]");
    if (!(baseline_noise_sigma >= 0.0) || !(measurement_noise_sigma >= 0.0)) {
      fail(ErrorCode::invalid_argument, "noise sigmas must be nonnegative");
    }
    if (!(baseline_noise_slot_s > 0.0)) fail(ErrorCode::invalid_argument, "baseline_noise_slot_s must be positive");
    if (!(tx_response_delay_s >= 0.0)) fail(ErrorCode::invalid_argument, "tx_response_delay_s must be nonnegative");
    if (ticks_per_sample < 1) fail(ErrorCode::invalid_argument, "ticks_per_sample must be >= 1");
    const auto& i = interference;
    if (!fraction(i.media_min) || !fraction(i.media_max) || i.media_min > i.media_max) {
      fail(ErrorCode::invalid_argument, "media interference range must lie in [0, 1]");
    }
    if (!(i.media_slot_s > 0.0)) fail(ErrorCode::invalid_argument, "media_slot_s must be positive");
    if (!fraction(i.compress_level)) fail(ErrorCode::invalid_argument, "compress_level must be in [0, 1]");
    if (!(i.compress_on_s >= 0.0) || !(i.compress_off_s >= 0.0) || !(i.compress_on_s + i.compress_off_s > 0.0)) {
      fail(ErrorCode::invalid_argument, "compress burst durations must be nonnegative with a positive period");
    }
    if (i.kind == InterferenceKind::custom && i.custom.empty()) {
      fail(ErrorCode::invalid_argument, "custom interference needs a schedule");
    }
  }
};

namespace stream {
inline constexpr std::uint64_t baseline = 1;
inline constexpr std::uint64_t media = 2;
inline constexpr std::uint64_t measurement = 3;
}  // namespace stream

inline double interference_signal(const Interference& spec, double t, std::uint64_t seed) {
  switch (spec.kind) {
    case InterferenceKind::none:
      return 0.0;
    case InterferenceKind::media: {
      const double u = noise::uniform(seed, stream::media, noise::slot(t, spec.media_slot_s));
      return spec.media_min + (spec.media_max - spec.media_min) * u;
    }
    case InterferenceKind::compress: {
      const double period = spec.compress_on_s + spec.compress_off_s;
      const double phase = t - std::floor(t / period) * period;
      return phase < spec.compress_on_s ? spec.compress_level : 0.0;
    }
    case InterferenceKind::custom: {
      const double period = spec.custom.total_duration_s();
      return spec.custom.load_at(t - std::floor(t / period) * period);
    }
  }
  return 0.0;
}

/// Default-parameter overload for a bare kind.
inline double interference_signal(InterferenceKind kind, double t, std::uint64_t seed) {
  Interference spec;
  spec.kind = kind;
  return interference_signal(spec, t, seed);
}

/// clamp(baseline(t) + interference(t) + tx(t - delay), 0, 1)
inline double effective_demand(double t, const WaveformSchedule& tx, const ChannelConfig& cfg) {
  double baseline = cfg.baseline_load;
  if (cfg.baseline_noise_sigma > 0.0) {
    baseline += cfg.baseline_noise_sigma *
                noise::gaussian(cfg.rng_seed, stream::baseline, noise::slot(t, cfg.baseline_noise_slot_s));
  }
  const double total =
      baseline + interference_signal(cfg.interference, t, cfg.rng_seed) + tx.load_at(t - cfg.tx_response_delay_s);
  return std::clamp(total, 0.0, 1.0);
}

/// Ondemand-style DVFS governor stepped once per simulation tick.
class GovernorModel {
 public:
  explicit GovernorModel(const DeviceProfile& device) : device_(device) {}

  std::size_t level_for(double demand) const {
    const double max = device_.max_clock_hz();
    for (std::size_t i = 0; i < device_.clock_levels_hz.size(); ++i) {
      if (device_.clock_levels_hz[i] / max >= demand - 1e-12) return i;
    }
    return device_.clock_levels_hz.size() - 1;
  }

  /// Advances to instant t with the given demand; returns the active level index.
  std::size_t step(double t, double demand) {
    const std::size_t top = device_.clock_levels_hz.size() - 1;
    if (device_.governor == Governor::performance) return current_ = top;
    const std::size_t target = level_for(demand);
    if (!started_) {
      started_ = true;
      current_ = target;
      return current_;
    }
    if (target == current_) {
      pending_ = false;
      return current_;
    }
    if (!pending_) {
      pending_ = true;
      pending_since_ = t;
    }
    constexpr double eps = 1e-12;
    if (t - pending_since_ >= device_.dvfs_reaction_delay_s - eps &&
        t - last_switch_ >= device_.dvfs_min_dwell_s - eps) {
      current_ = target;
      last_switch_ = t;
      pending_ = false;
    }
    return current_;
  }

  std::size_t current() const noexcept { return current_; }

  /// Frequency load with every core at the active level.
  double frequency_load() const {
    const std::vector<double> current(static_cast<std::size_t>(device_.n_cores), device_.clock_levels_hz[current_]);
    const std::vector<double> max(static_cast<std::size_t>(device_.n_cores), device_.max_clock_hz());
    return frequency_load_ratio(current, max);
  }

 private:
  const DeviceProfile& device_;
  std::size_t current_ = 0;
  bool started_ = false;
  bool pending_ = false;
  double pending_since_ = 0.0;
  double last_switch_ = -std::numeric_limits<double>::infinity();
};

namespace detail {

inline std::size_t sample_count(double sample_rate_hz, double duration_s) {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    fail(ErrorCode::invalid_argument, "sample rate must be positive");
  }
  if (!std::isfinite(duration_s) || duration_s * sample_rate_hz < 1.0 - 1e-9) {
    fail(ErrorCode::invalid_argument, "duration must cover at least one sample interval");
  }
  return static_cast<std::size_t>(std::ceil(duration_s * sample_rate_hz - 1e-9));
}

}  // namespace detail

/// Each sample is the tick-resolution mean of the effective demand over its
/// interval plus clamped Gaussian measurement noise.
inline WorkloadTrace sample_time_load(const WaveformSchedule& tx, const DeviceProfile& device,
                                      const ChannelConfig& cfg, double sample_rate_hz, double duration_s,
                                      double start_time_s = 0.0) {
  device.validate();
  cfg.validate();
  const std::size_t n = detail::sample_count(sample_rate_hz, duration_s);
  const double dt = 1.0 / sample_rate_hz;
  const int ticks = cfg.ticks_per_sample;
  const double tick = dt / ticks;

  WorkloadTrace trace{Metric::time_load, sample_rate_hz, {}, start_time_s};
  trace.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = start_time_s + static_cast<double>(i) * dt;
    double acc = 0.0;
    for (int j = 0; j < ticks; ++j) acc += effective_demand(a + (j + 0.5) * tick, tx, cfg);
    double v = acc / ticks;
    if (cfg.measurement_noise_sigma > 0.0) {
      v += cfg.measurement_noise_sigma * noise::gaussian(cfg.rng_seed, stream::measurement, i);
    }
    trace.samples.push_back(std::clamp(v, 0.0, 1.0));
  }
  return trace;
}

/// Steps the governor once per tick from the trace start; each sample is
/// the frequency load in force at its interval midpoint, so every value is
/// level / max for some configured level.
inline WorkloadTrace sample_frequency_load(const WaveformSchedule& tx, const DeviceProfile& device,
                                           const ChannelConfig& cfg, double sample_rate_hz, double duration_s,
                                           double start_time_s = 0.0) {
  device.validate();
  cfg.validate();
  const std::size_t n = detail::sample_count(sample_rate_hz, duration_s);
  const double dt = 1.0 / sample_rate_hz;
  const int ticks = cfg.ticks_per_sample;
  const double tick = dt / ticks;
  const int midpoint_tick = (ticks - 1) / 2;

  GovernorModel governor(device);
  WorkloadTrace trace{Metric::frequency_load, sample_rate_hz, {}, start_time_s};
  trace.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = start_time_s + static_cast<double>(i) * dt;
    double value = 0.0;
    for (int j = 0; j < ticks; ++j) {
      const double t = a + (j + 0.5) * tick;
      governor.step(t, effective_demand(t, tx, cfg));
      if (j == midpoint_tick) value = governor.frequency_load();
    }
    trace.samples.push_back(std::clamp(value, 0.0, 1.0));
  }
  return trace;
}

inline WorkloadTrace sample_load(Metric metric, const WaveformSchedule& tx, const DeviceProfile& device,
                                 const ChannelConfig& cfg, double sample_rate_hz, double duration_s,
                                 double start_time_s = 0.0) {
  return metric == Metric::time_load
             ? sample_time_load(tx, device, cfg, sample_rate_hz, duration_s, start_time_s)
             : sample_frequency_load(tx, device, cfg, sample_rate_hz, duration_s, start_time_s);
}

/// Device plus channel, as loaded from a `key = value` profile file.
struct SimProfile {
  DeviceProfile device;
  ChannelConfig channel;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::parse_error, context + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, const std::string& context) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::parse_error, context + ": expected a nonnegative integer, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are rejected.
inline SimProfile parse_sim_profile(std::string_view text, SimProfile profile = {}) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const std::string ctx = "line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::parse_error, ctx + ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    auto num = [&] { return detail::parse_double(value, ctx); };
    auto& dev = profile.device;
    auto& ch = profile.channel;
    auto& itf = ch.interference;

    if (key == "n_cores") dev.n_cores = static_cast<int>(detail::parse_uint(value, ctx));
    else if (key == "clock_levels_hz" || key == "clock_levels_mhz") {
      const double scale = key == "clock_levels_mhz" ? 1e6 : 1.0;
      dev.clock_levels_hz.clear();
      for (auto item : detail::split(value, ',')) dev.clock_levels_hz.push_back(detail::parse_double(item, ctx) * scale);
    } else if (key == "dvfs_reaction_delay_s") dev.dvfs_reaction_delay_s = num();
    else if (key == "dvfs_min_dwell_s") dev.dvfs_min_dwell_s = num();
    else if (key == "governor") {
      if (value == "ondemand") dev.governor = Governor::ondemand;
      else if (value == "performance") dev.governor = Governor::performance;
      else fail(ErrorCode::parse_error, ctx + ": governor must be ondemand or performance");
    } else if (key == "baseline_load") ch.baseline_load = num();
    else if (key == "baseline_noise_sigma") ch.baseline_noise_sigma = num();
    else if (key == "baseline_noise_slot_s") ch.baseline_noise_slot_s = num();
    else if (key == "interference") {
      try {
        itf.kind = parse_interference(value);
      } catch (const Error& e) {
        fail(ErrorCode::parse_error, ctx + ": " + e.what());
      }
    } else if (key == "media_min") itf.media_min = num();
    else if (key == "media_max") itf.media_max = num();
    else if (key == "media_slot_s") itf.media_slot_s = num();
    else if (key == "compress_level") itf.compress_level = num();
    else if (key == "compress_on_s") itf.compress_on_s = num();
    else if (key == "compress_off_s") itf.compress_off_s = num();
    else if (key == "custom_schedule") {
      // duration:load pairs, comma separated
      itf.custom = {};
      for (auto item : detail::split(value, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string_view::npos) fail(ErrorCode::parse_error, ctx + ": custom_schedule expects duration:load");
        try {
          itf.custom.add(detail::parse_double(detail::trim(item.substr(0, colon)), ctx),
                         detail::parse_double(detail::trim(item.substr(colon + 1)), ctx));
        } catch (const Error& e) {
          if (e.code() == ErrorCode::parse_error) throw;
          fail(ErrorCode::parse_error, ctx + ": " + e.what());
        }
      }
    } else if (key == "tx_response_delay_s") ch.tx_response_delay_s = num();
    else if (key == "measurement_noise_sigma") ch.measurement_noise_sigma = num();
    else if (key == "rng_seed") ch.rng_seed = detail::parse_uint(value, ctx);
    else if (key == "ticks_per_sample") ch.ticks_per_sample = static_cast<int>(detail::parse_uint(value, ctx));
    else fail(ErrorCode::parse_error, ctx + ": unknown key '" + std::string(key) + "'");
  }
  profile.device.validate();
  profile.channel.validate();
  return profile;
}

inline SimProfile load_sim_profile(const std::string& path, SimProfile defaults = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open profile '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sim_profile(ss.str(), std::move(defaults));
}

}  // namespace loadwave
