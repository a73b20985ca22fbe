#pragma once

// BER versus data rate over the simulated channel: per rate, a fixed number
// of trials, each sending a seeded random payload; min/avg/max BER per rate.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "loadwave/bits.hpp"
#include "loadwave/channel_sim.hpp"
#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"
#include "loadwave/noise.hpp"
#include "loadwave/trace_io.hpp"

namespace loadwave::bench {

struct BenchPlan {
  std::vector<double> data_rates_bps{0.1, 0.25, 0.5, 1.0, 2.0, 4.0};
  std::size_t bits_per_trial = 100;
  std::size_t trials_per_rate = 4;
  Scheme scheme = Scheme::ask;
  Metric metric = Metric::time_load;
  InterferenceKind interference = InterferenceKind::none;
  std::uint64_t seed = 1;
  double baseline_window_bits = 2.0;  // receiver pre-listen, in bit durations

  void validate() const {
    if (data_rates_bps.empty()) fail(ErrorCode::invalid_argument, "bench plan needs at least one rate");
    for (std::size_t i = 0; i < data_rates_bps.size(); ++i) {
      if (!(data_rates_bps[i] > 0.0) || !std::isfinite(data_rates_bps[i])) {
        fail(ErrorCode::invalid_argument, "data rates must be positive");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (data_rates_bps[j] == data_rates_bps[i]) fail(ErrorCode::invalid_argument, "data rates must be distinct");
      }
    }
    if (bits_per_trial == 0) fail(ErrorCode::invalid_argument, "bits_per_trial must be positive");
    if (trials_per_rate == 0) fail(ErrorCode::invalid_argument, "trials_per_rate must be positive");
    if (!(baseline_window_bits > 0.0)) fail(ErrorCode::invalid_argument, "baseline window must be positive");
  }
};

struct TrialResult {
  std::size_t bit_errors = 0;
  double ber = 0.0;
  bool insufficient_data = false;
};

struct RateResult {
  double rate_bps = 0.0;
  double ber_min = 0.0;
  double ber_avg = 0.0;
  double ber_max = 0.0;
  std::vector<TrialResult> trials;
};

struct BerReport {
  std::size_t bits_per_trial = 0;
  std::size_t trials_per_rate = 0;
  std::vector<RateResult> rates;  // ascending rate

  const RateResult* at(double rate_bps) const {
    for (const auto& r : rates) {
      if (r.rate_bps == rate_bps) return &r;
    }
    return nullptr;
  }

  bool any_insufficient() const {
    for (const auto& r : rates) {
      for (const auto& t : r.trials) {
        if (t.insufficient_data) return true;
      }
    }
    return false;
  }

  /// Violated report invariants, empty when consistent.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> problems;
    for (const auto& r : rates) {
      const std::string at = "rate " + loadwave::detail::format_double(r.rate_bps);
      if (!(0.0 <= r.ber_min && r.ber_min <= r.ber_avg && r.ber_avg <= r.ber_max && r.ber_max <= 1.0)) {
        problems.push_back(at + ": BER bounds out of order");
      }
      if (r.trials.size() != trials_per_rate) problems.push_back(at + ": wrong trial count");
      for (const auto& t : r.trials) {
        if (t.ber != static_cast<double>(t.bit_errors) / static_cast<double>(bits_per_trial)) {
          problems.push_back(at + ": BER differs from errors / bits");
        }
      }
    }
    for (std::size_t i = 1; i < rates.size(); ++i) {
      if (!(rates[i - 1].rate_bps < rates[i].rate_bps)) problems.push_back("rates not ascending");
    }
    return problems;
  }
};

/// One trial: the payload and everything the receiver saw, exposed so tests
/// and the CLI can inspect a single transmission.
struct TrialRun {
  BitVector sent;
  BitVector received;
  WorkloadTrace trace;  // baseline window followed by the frame
  double ask_threshold = 0.0;
  bool insufficient_data = false;
  std::size_t bit_errors = 0;
};

inline TrialRun run_trial(const BitVector& bits, double rate_bps, Scheme scheme, Metric metric,
                          const DeviceProfile& device, const ChannelConfig& channel, double baseline_window_bits = 2.0) {
  ModulationConfig mod;
  mod.scheme = scheme;
  mod.bit_duration_s = 1.0 / rate_bps;
  const WaveformSchedule tx = modulate(bits, mod);
  const double fs = required_sample_rate(mod);
  const auto nb = static_cast<std::size_t>(std::max<long long>(1, std::llround(baseline_window_bits * mod.bit_duration_s * fs)));
  const double lead = static_cast<double>(nb) / fs;
  const double airtime = static_cast<double>(bits.size()) * mod.bit_duration_s;

  TrialRun run;
  run.sent = bits;
  run.trace = sample_load(metric, tx, device, channel, fs, lead + airtime, -lead);

  double baseline = 0.0;
  for (std::size_t i = 0; i < nb; ++i) baseline += run.trace.samples[i];
  baseline /= static_cast<double>(nb);
  WorkloadTrace frame{run.trace.metric, fs, {run.trace.samples.begin() + static_cast<std::ptrdiff_t>(nb), run.trace.samples.end()}, 0.0};
  const double peak = frame.samples.empty() ? 0.0 : *std::max_element(frame.samples.begin(), frame.samples.end());

  DemodConfig demod = DemodConfig::from(mod);
  demod.expected_bits = bits.size();
  demod.ask_threshold = run.ask_threshold = adaptive_ask_threshold(baseline, peak);
  try {
    run.received = demodulate(frame, demod);
    run.bit_errors = count_bit_errors(bits, run.received);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::insufficient_data) throw;
    run.insufficient_data = true;
    run.bit_errors = bits.size();  // worst case
  }
  return run;
}

namespace detail {

// Trial k draws the same payload and channel seed at every rate (common
// random numbers), so differences between rates come from the rate alone.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial, std::uint64_t purpose) {
  return noise::hash(seed, purpose, trial);
}

}  // namespace detail

/// Fully deterministic per (plan, device, channel). The channel's own
/// interference kind is replaced by the plan's.
inline BerReport run_bench(const BenchPlan& plan, const DeviceProfile& device, const ChannelConfig& channel) {
  plan.validate();
  device.validate();
  channel.validate();

  std::vector<double> rates = plan.data_rates_bps;
  std::sort(rates.begin(), rates.end());

  BerReport report;
  report.bits_per_trial = plan.bits_per_trial;
  report.trials_per_rate = plan.trials_per_rate;
  for (std::size_t ri = 0; ri < rates.size(); ++ri) {
    RateResult rr;
    rr.rate_bps = rates[ri];
    for (std::size_t k = 0; k < plan.trials_per_rate; ++k) {
      std::mt19937_64 payload_rng(detail::trial_seed(plan.seed, k, 0x62697473));
      const BitVector bits = BitVector::random(plan.bits_per_trial, payload_rng);
      ChannelConfig ch = channel;
      ch.interference.kind = plan.interference;
      ch.rng_seed = detail::trial_seed(plan.seed, k, 0x6e6f6973);
      const TrialRun run = run_trial(bits, rates[ri], plan.scheme, plan.metric, device, ch, plan.baseline_window_bits);
      rr.trials.push_back({run.bit_errors, static_cast<double>(run.bit_errors) / static_cast<double>(plan.bits_per_trial),
                           run.insufficient_data});
    }
    double sum = 0.0;
    rr.ber_min = 1.0;
    rr.ber_max = 0.0;
    for (const auto& t : rr.trials) {
      sum += t.ber;
      rr.ber_min = std::min(rr.ber_min, t.ber);
      rr.ber_max = std::max(rr.ber_max, t.ber);
    }
    rr.ber_avg = std::clamp(sum / static_cast<double>(rr.trials.size()), rr.ber_min, rr.ber_max);
    report.rates.push_back(std::move(rr));
  }
  return report;
}

enum class ReportFormat { csv, text, json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "text") return ReportFormat::text;
  if (s == "json") return ReportFormat::json;
  fail(ErrorCode::invalid_argument, "unknown report format '" + std::string(s) + "'");
}

inline std::string emit_report(const BerReport& report, ReportFormat format = ReportFormat::csv) {
  using loadwave::detail::format_double;
  std::ostringstream out;
  switch (format) {
    case ReportFormat::csv:
      out << "rate_bps,ber_min,ber_avg,ber_max,trials,bits_per_trial\n";
      for (const auto& r : report.rates) {
        out << format_double(r.rate_bps) << ',' << format_double(r.ber_min) << ',' << format_double(r.ber_avg) << ','
            << format_double(r.ber_max) << ',' << report.trials_per_rate << ',' << report.bits_per_trial << '\n';
      }
      break;
    case ReportFormat::text:
      out << std::left << std::setw(10) << "rate_bps" << std::right << std::setw(10) << "ber_min" << std::setw(10)
          << "ber_avg" << std::setw(10) << "ber_max" << std::setw(8) << "trials" << std::setw(8) << "bits" << '\n';
      out << std::fixed << std::setprecision(4);
      for (const auto& r : report.rates) {
        out << std::left << std::setw(10) << format_double(r.rate_bps) << std::right << std::setw(10) << r.ber_min
            << std::setw(10) << r.ber_avg << std::setw(10) << r.ber_max << std::setw(8) << report.trials_per_rate
            << std::setw(8) << report.bits_per_trial << '\n';
      }
      break;
    case ReportFormat::json: {
      nlohmann::json j{{"bits_per_trial", report.bits_per_trial}, {"trials_per_rate", report.trials_per_rate}};
      j["rates"] = nlohmann::json::array();
      for (const auto& r : report.rates) {
        nlohmann::json trials = nlohmann::json::array();
        for (const auto& t : r.trials) {
          trials.push_back({{"bit_errors", t.bit_errors}, {"ber", t.ber}, {"insufficient_data", t.insufficient_data}});
        }
        j["rates"].push_back({{"rate_bps", r.rate_bps},
                              {"ber_min", r.ber_min},
                              {"ber_avg", r.ber_avg},
                              {"ber_max", r.ber_max},
                              {"trials", std::move(trials)}});
      }
      out << j.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

}  // namespace loadwave::bench
