#pragma once

// Signal layer: bits -> ideal workload waveform (ASK or FSK over unipolar
// NRZ) and sampled workload trace -> bits.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loadwave/bits.hpp"
#include "loadwave/error.hpp"

namespace loadwave {

enum class Scheme { ask, fsk };
enum class Metric { time_load, frequency_load };

constexpr std::string_view to_string(Scheme s) { return s == Scheme::ask ? "ask" : "fsk"; }
constexpr std::string_view to_string(Metric m) {
  return m == Metric::time_load ? "time_load" : "frequency_load";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "ask" || s == "ASK") return Scheme::ask;
  if (s == "fsk" || s == "FSK") return Scheme::fsk;
  fail(ErrorCode::invalid_argument, "unknown scheme '" + std::string(s) + "'");
}

inline Metric parse_metric(std::string_view s) {
  if (s == "time_load" || s == "time" || s == "TIME_LOAD") return Metric::time_load;
  if (s == "frequency_load" || s == "freq" || s == "FREQUENCY_LOAD") return Metric::frequency_load;
  fail(ErrorCode::invalid_argument, "unknown metric '" + std::string(s) + "'");
}

struct ModulationConfig {
  Scheme scheme = Scheme::ask;
  double bit_duration_s = 4.0;
  double high_load = 1.0;
  double low_load = 0.0;  // 0 = transmitter adds nothing; the channel baseline shows through
  int fsk_cycle_ratio = 5;

  void validate() const {
    if (!std::isfinite(bit_duration_s) || bit_duration_s <= 0.0) {
      fail(ErrorCode::invalid_argument, "bit duration must be finite and positive");
    }
    if (!(high_load > 0.0 && high_load <= 1.0)) fail(ErrorCode::invalid_argument, "high_load must be in (0, 1]");
    if (!(low_load >= 0.0 && low_load < 1.0)) fail(ErrorCode::invalid_argument, "low_load must be in [0, 1)");
    if (!(high_load > low_load)) fail(ErrorCode::invalid_argument, "high_load must exceed low_load");
    if (fsk_cycle_ratio < 2) fail(ErrorCode::invalid_argument, "fsk_cycle_ratio must be >= 2");
  }
};

struct Segment {
  double duration_s = 0.0;
  double target_load = 0.0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Piecewise-constant target load starting at t = 0.
class WaveformSchedule {
 public:
  WaveformSchedule() = default;

  explicit WaveformSchedule(std::vector<Segment> segments) {
    for (const auto& s : segments) add(s.duration_s, s.target_load);
  }

  void add(double duration_s, double target_load) {
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
      fail(ErrorCode::invalid_argument, "segment duration must be positive");
    }
    if (!(target_load >= 0.0 && target_load <= 1.0)) {
      fail(ErrorCode::invalid_argument, "segment load must be in [0, 1]");
    }
    starts_.push_back(total_);
    segments_.push_back({duration_s, target_load});
    total_ += duration_s;
  }

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t size() const noexcept { return segments_.size(); }
  bool empty() const noexcept { return segments_.empty(); }
  double total_duration_s() const noexcept { return total_; }
  double segment_start(std::size_t i) const { return starts_.at(i); }

  /// Target load at instant t; 0 outside [0, total).
  double load_at(double t) const noexcept {
    if (segments_.empty() || t < 0.0 || t >= total_) return 0.0;
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    return segments_[static_cast<std::size_t>(it - starts_.begin()) - 1].target_load;
  }

  /// Exact integral of the target load over [a, b].
  double integral(double a, double b) const noexcept {
    if (b <= a || segments_.empty()) return 0.0;
    a = std::max(a, 0.0);
    b = std::min(b, total_);
    if (b <= a) return 0.0;
    double acc = 0.0;
    auto first = std::upper_bound(starts_.begin(), starts_.end(), a) - starts_.begin() - 1;
    for (auto i = static_cast<std::size_t>(first); i < segments_.size() && starts_[i] < b; ++i) {
      const double lo = std::max(a, starts_[i]);
      const double hi = std::min(b, starts_[i] + segments_[i].duration_s);
      if (hi > lo) acc += (hi - lo) * segments_[i].target_load;
    }
    return acc;
  }

  friend bool operator==(const WaveformSchedule& a, const WaveformSchedule& b) {
    return a.segments_ == b.segments_;
  }

 private:
  std::vector<Segment> segments_;
  std::vector<double> starts_;
  double total_ = 0.0;
};

/// Uniformly sampled workload observations, fractions in [0, 1].
struct WorkloadTrace {
  Metric metric = Metric::time_load;
  double sample_rate_hz = 1.0;
  std::vector<double> samples;
  double start_time_s = 0.0;  // relative to the rendezvous instant

  double interval_s() const noexcept { return 1.0 / sample_rate_hz; }
  double time_at(std::size_t i) const noexcept {
    return start_time_s + static_cast<double>(i) / sample_rate_hz;
  }
  std::size_t size() const noexcept { return samples.size(); }
};

inline WaveformSchedule modulate(const BitVector& bits, const ModulationConfig& cfg) {
  cfg.validate();
  if (bits.empty()) fail(ErrorCode::invalid_argument, "cannot modulate an empty bit vector");
  WaveformSchedule out;
  const double t = cfg.bit_duration_s;
  for (auto bit : bits) {
    if (cfg.scheme == Scheme::ask) {
      out.add(t, bit ? cfg.high_load : cfg.low_load);
      continue;
    }
    // FSK: one square-wave cycle per bit for 0, fsk_cycle_ratio cycles for 1.
    const int cycles = bit ? cfg.fsk_cycle_ratio : 1;
    const double half = t / (2.0 * cycles);
    for (int c = 0; c < cycles; ++c) {
      out.add(half, cfg.high_load);
      out.add(half, cfg.low_load);
    }
  }
  return out;
}

/// Four times the highest carrier frequency.
inline double required_sample_rate(const ModulationConfig& cfg) {
  cfg.validate();
  const double highest = cfg.scheme == Scheme::ask ? 1.0 : static_cast<double>(cfg.fsk_cycle_ratio);
  return 4.0 * highest / cfg.bit_duration_s;
}

/// Noise-free sampler: each sample is the exact mean of the schedule over
/// its sampling interval.
inline WorkloadTrace sample_ideal(const WaveformSchedule& schedule, double sample_rate_hz, double duration_s,
                                  Metric metric = Metric::time_load, double start_time_s = 0.0) {
  if (!(sample_rate_hz > 0.0)) fail(ErrorCode::invalid_argument, "sample rate must be positive");
  WorkloadTrace trace{metric, sample_rate_hz, {}, start_time_s};
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  trace.samples.reserve(n);
  const double dt = 1.0 / sample_rate_hz;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = start_time_s + static_cast<double>(i) * dt;
    trace.samples.push_back(std::clamp(schedule.integral(a, a + dt) / dt, 0.0, 1.0));
  }
  return trace;
}

struct DemodConfig {
  Scheme scheme = Scheme::ask;
  double bit_duration_s = 4.0;
  double ask_threshold = 0.5;
  double ask_majority = 0.75;
  int fsk_cycle_ratio = 5;
  std::optional<std::size_t> expected_bits;  // unset: decode every full window

  static DemodConfig from(const ModulationConfig& m) {
    DemodConfig d;
    d.scheme = m.scheme;
    d.bit_duration_s = m.bit_duration_s;
    d.fsk_cycle_ratio = m.fsk_cycle_ratio;
    return d;
  }

  /// Midpoint between the two FSK carriers: 3/T for the default 5:1 ratio.
  double fsk_freq_threshold_hz() const noexcept {
    return 0.5 * (1.0 + fsk_cycle_ratio) / bit_duration_s;
  }

  double min_sample_rate() const noexcept {
    return 4.0 * (scheme == Scheme::ask ? 1.0 : fsk_cycle_ratio) / bit_duration_s;
  }

  void validate() const {
    if (!std::isfinite(bit_duration_s) || bit_duration_s <= 0.0) {
      fail(ErrorCode::invalid_argument, "bit duration must be finite and positive");
    }
    if (!(ask_threshold > 0.0 && ask_threshold < 1.0)) fail(ErrorCode::invalid_argument, "ask_threshold must be in (0, 1)");
    if (!(ask_majority > 0.5 && ask_majority <= 1.0)) fail(ErrorCode::invalid_argument, "ask_majority must be in (0.5, 1]");
    if (fsk_cycle_ratio < 2) fail(ErrorCode::invalid_argument, "fsk_cycle_ratio must be >= 2");
  }
};

/// Midpoint between the pre-transmission baseline and the full workload
/// level, where "full" is the in-frame peak but never below `full_floor`
/// (a missing transmitter must not drag the threshold down to baseline).
inline double adaptive_ask_threshold(double baseline_mean, double frame_peak, double full_floor = 0.9) {
  const double full = std::max(frame_peak, full_floor);
  return std::clamp((baseline_mean + full) / 2.0, 1e-6, 1.0 - 1e-6);
}

struct SpectralPeak {
  double frequency_hz = 0.0;
  double power = 0.0;
};

/// Peak of the power spectrum of a mean-removed window over bins
/// m / window_duration_s, m = 1 .. N/2. Ties go to the lower frequency.
inline SpectralPeak spectral_peak(const std::vector<double>& samples, double window_duration_s) {
  const std::size_t n = samples.size();
  if (n < 4) fail(ErrorCode::insufficient_data, "spectral_peak needs at least 4 samples");
  if (!(window_duration_s > 0.0)) fail(ErrorCode::invalid_argument, "window duration must be positive");

  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = samples[i] - mean;
    centered[i] = std::abs(c) < 1e-12 ? 0.0 : c;  // rounding residue of a flat window
  }

  SpectralPeak best{1.0 / window_duration_s, -1.0};
  const double nd = static_cast<double>(n);
  for (std::size_t m = 1; m <= n / 2; ++m) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(m * i % n) / nd;
      acc += centered[i] * std::polar(1.0, phase);
    }
    const double power = std::norm(acc) / (nd * nd);
    if (power > best.power * (1.0 + 1e-9) + 1e-18) {
      best = {static_cast<double>(m) / window_duration_s, power};
    }
  }
  if (best.power < 0.0) best.power = 0.0;
  return best;
}

namespace detail {

struct Windowing {
  std::size_t width;
  std::size_t count;
};

inline Windowing windows_for(const WorkloadTrace& trace, const DemodConfig& cfg) {
  cfg.validate();
  if (!(trace.sample_rate_hz > 0.0)) fail(ErrorCode::invalid_argument, "trace sample rate must be positive");
  if (trace.sample_rate_hz < cfg.min_sample_rate() * (1.0 - 1e-9)) {
    fail(ErrorCode::invalid_argument, "trace sample rate " + std::to_string(trace.sample_rate_hz) +
                                          " Hz is below the required " + std::to_string(cfg.min_sample_rate()) + " Hz");
  }
  const auto w = static_cast<std::size_t>(std::llround(cfg.bit_duration_s * trace.sample_rate_hz));
  const std::size_t full = w == 0 ? 0 : trace.samples.size() / w;
  if (full == 0) fail(ErrorCode::insufficient_data, "trace shorter than one bit window");
  std::size_t count = full;
  if (cfg.expected_bits) {
    if (full < *cfg.expected_bits) {
      fail(ErrorCode::insufficient_data, "trace holds " + std::to_string(full) + " bit windows, expected " +
                                             std::to_string(*cfg.expected_bits));
    }
    count = *cfg.expected_bits;
  }
  return {w, count};
}

}  // namespace detail

/// A window decodes as 1 when at least ceil(majority * w) samples are
/// strictly above the threshold.
inline BitVector demodulate_ask(const WorkloadTrace& trace, const DemodConfig& cfg) {
  const auto [w, count] = detail::windows_for(trace, cfg);
  const auto needed = static_cast<std::size_t>(std::ceil(cfg.ask_majority * static_cast<double>(w) - 1e-9));
  BitVector out;
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t above = 0;
    for (std::size_t i = k * w; i < (k + 1) * w; ++i) above += trace.samples[i] > cfg.ask_threshold;
    out.push_back(above >= needed ? 1 : 0);
  }
  return out;
}

inline BitVector demodulate_fsk(const WorkloadTrace& trace, const DemodConfig& cfg) {
  const auto [w, count] = detail::windows_for(trace, cfg);
  const double window_s = static_cast<double>(w) / trace.sample_rate_hz;
  const double threshold = cfg.fsk_freq_threshold_hz();
  BitVector out;
  std::vector<double> window(w);
  for (std::size_t k = 0; k < count; ++k) {
    std::copy_n(trace.samples.begin() + static_cast<std::ptrdiff_t>(k * w), w, window.begin());
    out.push_back(spectral_peak(window, window_s).frequency_hz > threshold ? 1 : 0);
  }
  return out;
}

inline BitVector demodulate(const WorkloadTrace& trace, const DemodConfig& cfg) {
  return cfg.scheme == Scheme::ask ? demodulate_ask(trace, cfg) : demodulate_fsk(trace, cfg);
}

}  // namespace loadwave
