#pragma once

// CSV trace format shared by the simulator and the host sampler:
//   time_s,value,metric
//   0,0.05,time_load
//   ...

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"

namespace loadwave {

inline constexpr std::string_view kTraceHeader = "time_s,value,metric";

namespace detail {

// Shortest representation that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

inline void write_trace_csv(std::ostream& out, const WorkloadTrace& trace) {
  out << kTraceHeader << '\n';
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    out << detail::format_double(trace.time_at(i)) << ',' << detail::format_double(trace.samples[i]) << ','
        << to_string(trace.metric) << '\n';
  }
}

inline std::string trace_to_csv(const WorkloadTrace& trace) {
  std::ostringstream ss;
  write_trace_csv(ss, trace);
  return ss.str();
}

/// Sample rate is recovered from the timestamp spacing; a single-row trace
/// falls back to `fallback_rate_hz`.
inline WorkloadTrace parse_trace_csv(std::string_view text, double fallback_rate_hz = 1.0) {
  WorkloadTrace trace;
  std::vector<double> times;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool metric_seen = false;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string ctx = "trace line " + std::to_string(line_no);
    if (!header_seen) {
      if (line != kTraceHeader) fail(ErrorCode::parse_error, ctx + ": expected header '" + std::string(kTraceHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos) fail(ErrorCode::parse_error, ctx + ": expected three columns");
    auto number = [&](std::string_view s) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorCode::parse_error, ctx + ": bad number");
      return v;
    };
    times.push_back(number(line.substr(0, c1)));
    const double value = number(line.substr(c1 + 1, c2 - c1 - 1));
    if (!(value >= 0.0 && value <= 1.0)) fail(ErrorCode::parse_error, ctx + ": value outside [0, 1]");
    trace.samples.push_back(value);
    Metric m;
    try {
      m = parse_metric(line.substr(c2 + 1));
    } catch (const Error&) {
      fail(ErrorCode::parse_error, ctx + ": unknown metric");
    }
    if (metric_seen && m != trace.metric) fail(ErrorCode::parse_error, ctx + ": mixed metrics");
    trace.metric = m;
    metric_seen = true;
  }
  if (!header_seen) fail(ErrorCode::parse_error, "empty trace file");
  if (times.empty()) {
    trace.sample_rate_hz = fallback_rate_hz;
    return trace;
  }
  trace.start_time_s = times.front();
  if (times.size() == 1) {
    trace.sample_rate_hz = fallback_rate_hz;
  } else {
    const double span = times.back() - times.front();
    if (!(span > 0.0)) fail(ErrorCode::parse_error, "trace timestamps are not increasing");
    trace.sample_rate_hz = static_cast<double>(times.size() - 1) / span;
  }
  return trace;
}

inline void save_trace_csv(const std::string& path, const WorkloadTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write trace '" + path + "'");
  write_trace_csv(out, trace);
  if (!out) fail(ErrorCode::io_error, "failed writing trace '" + path + "'");
}

inline WorkloadTrace load_trace_csv(const std::string& path, double fallback_rate_hz = 1.0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open trace '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace_csv(ss.str(), fallback_rate_hz);
}

}  // namespace loadwave
