#pragma once

// Host-mode workload sensing from the kernel's proc/sysfs text files.

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"
#include "loadwave/frequency_ratio.hpp"

namespace loadwave::sysload {

/// Aggregate `cpu` line counters, in USER_HZ ticks (10 ms on common kernels).
struct ProcStatSnapshot {
  std::uint64_t user = 0;
  std::uint64_t nice = 0;
  std::uint64_t system = 0;
  std::uint64_t idle = 0;
  std::uint64_t iowait = 0;
  std::uint64_t irq = 0;
  std::uint64_t softirq = 0;
  std::uint64_t steal = 0;
  // Already counted inside user/nice by the kernel; kept for completeness only.
  std::uint64_t guest = 0;
  std::uint64_t guest_nice = 0;
  double capture_time_s = 0.0;

  std::array<std::uint64_t, 8> categories() const {
    return {user, nice, system, idle, iowait, irq, softirq, steal};
  }

  friend bool operator==(const ProcStatSnapshot&, const ProcStatSnapshot&) = default;
};

inline ProcStatSnapshot parse_proc_stat(std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;

    // The aggregate line is the one whose first token is exactly "cpu".
    if (!line.starts_with("cpu") || line.size() < 4 || (line[3] != ' ' && line[3] != '\t')) continue;

    std::vector<std::uint64_t> fields;
    std::string_view rest = line.substr(3);
    while (true) {
      const auto start = rest.find_first_not_of(" \t\r");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto stop = std::min(rest.find_first_of(" \t\r"), rest.size());
      const std::string_view token = rest.substr(0, stop);
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        fail(ErrorCode::parse_error, "proc stat line " + std::to_string(line_no) + ": non-integer field '" +
                                         std::string(token.substr(0, 32)) + "'");
      }
      fields.push_back(v);
      rest.remove_prefix(stop);
    }
    if (fields.size() < 4) {
      fail(ErrorCode::parse_error, "proc stat line " + std::to_string(line_no) + ": aggregate cpu line has " +
                                       std::to_string(fields.size()) + " fields, need at least 4");
    }
    fields.resize(std::max<std::size_t>(fields.size(), 10), 0);
    ProcStatSnapshot s;
    s.user = fields[0];
    s.nice = fields[1];
    s.system = fields[2];
    s.idle = fields[3];
    s.iowait = fields[4];
    s.irq = fields[5];
    s.softirq = fields[6];
    s.steal = fields[7];
    s.guest = fields[8];
    s.guest_nice = fields[9];
    return s;
  }
  fail(ErrorCode::parse_error, "proc stat text has no aggregate 'cpu' line");
}

/// Busy fraction between two snapshots: (total - idle - iowait) / total.
inline double time_load_between(const ProcStatSnapshot& a, const ProcStatSnapshot& b) {
  const auto ca = a.categories();
  const auto cb = b.categories();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (cb[i] < ca[i]) fail(ErrorCode::counter_wrap, "proc stat counter went backwards");
    total += cb[i] - ca[i];
  }
  if (total == 0) fail(ErrorCode::insufficient_data, "no ticks elapsed between snapshots");
  const std::uint64_t idle = (b.idle - a.idle) + (b.iowait - a.iowait);
  const double busy = static_cast<double>(total - idle) / static_cast<double>(total);
  return std::clamp(busy, 0.0, 1.0);
}

struct CoreFrequency {
  double current_hz = 0.0;
  double max_hz = 0.0;
};

struct CpuFreqReading {
  std::vector<CoreFrequency> cores;
};

inline double frequency_load(const CpuFreqReading& reading) {
  if (reading.cores.empty()) fail(ErrorCode::invalid_argument, "empty frequency reading");
  std::vector<double> current;
  std::vector<double> max;
  for (const auto& c : reading.cores) {
    current.push_back(c.current_hz);
    max.push_back(c.max_hz);
  }
  return frequency_load_ratio(current, max);
}

/// Where to find the kernel files. Tests point these at fixture trees.
struct SourcePaths {
  std::filesystem::path proc_stat = "/proc/stat";
  std::filesystem::path cpu_root = "/sys/devices/system/cpu";
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::permission_error, "cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t read_khz(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::string_view v = text;
  while (!v.empty() && (v.back() == '\n' || v.back() == ' ' || v.back() == '\r')) v.remove_suffix(1);
  std::uint64_t khz = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), khz);
  if (ec != std::errc() || ptr != v.data() + v.size() || khz == 0) {
    fail(ErrorCode::parse_error, "'" + path.string() + "': expected a positive kHz value");
  }
  return khz;
}

}  // namespace detail

inline ProcStatSnapshot read_proc_stat(const SourcePaths& paths = {}) {
  return parse_proc_stat(detail::read_file(paths.proc_stat));
}

/// Reads scaling_cur_freq and scaling_max_freq (cpuinfo_max_freq as
/// fallback) for every cpuN/cpufreq directory, ordered by N. Values are kHz.
inline CpuFreqReading read_cpufreq(const SourcePaths& paths = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(paths.cpu_root, ec)) {
    fail(ErrorCode::permission_error, "cannot read '" + paths.cpu_root.string() + "'");
  }
  std::vector<std::pair<unsigned, fs::path>> dirs;
  for (const auto& entry : fs::directory_iterator(paths.cpu_root, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 4 || !name.starts_with("cpu")) continue;
    unsigned index = 0;
    auto [ptr, err] = std::from_chars(name.data() + 3, name.data() + name.size(), index);
    if (err != std::errc() || ptr != name.data() + name.size()) continue;
    if (fs::is_directory(entry.path() / "cpufreq", ec)) dirs.emplace_back(index, entry.path() / "cpufreq");
  }
  if (dirs.empty()) fail(ErrorCode::permission_error, "no cpufreq directories under '" + paths.cpu_root.string() + "'");
  std::sort(dirs.begin(), dirs.end());

  CpuFreqReading reading;
  for (const auto& [index, dir] : dirs) {
    const double cur = static_cast<double>(detail::read_khz(dir / "scaling_cur_freq")) * 1e3;
    const fs::path max_path = fs::exists(dir / "scaling_max_freq", ec) ? dir / "scaling_max_freq" : dir / "cpuinfo_max_freq";
    const double max = static_cast<double>(detail::read_khz(max_path)) * 1e3;
    if (cur > max) fail(ErrorCode::parse_error, "cpu" + std::to_string(index) + ": current clock above max");
    reading.cores.push_back({cur, max});
  }
  return reading;
}

/// Samples the host at a fixed cadence anchored to the steady clock.
/// TIME_LOAD samples span each interval with back-to-back snapshots;
/// FREQUENCY_LOAD samples read the instantaneous clocks at each tick.
/// `capture_times_s`, when given, receives each sample's actual offset from
/// the sampler start.
inline WorkloadTrace run_sampler(Metric metric, double sample_rate_hz, double duration_s,
                                 const SourcePaths& paths = {}, std::vector<double>* capture_times_s = nullptr) {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    fail(ErrorCode::invalid_argument, "sample rate must be positive");
  }
  if (!(duration_s >= 0.0) || !std::isfinite(duration_s)) fail(ErrorCode::invalid_argument, "duration must be nonnegative");

  WorkloadTrace trace{metric, sample_rate_hz, {}, 0.0};
  const auto n = static_cast<std::size_t>(std::ceil(duration_s * sample_rate_hz - 1e-9));
  if (n == 0) return trace;
  trace.samples.reserve(n);

  using clock = std::chrono::steady_clock;
  const auto interval = std::chrono::duration<double>(1.0 / sample_rate_hz);
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  if (metric == Metric::time_load) {
    ProcStatSnapshot prev = read_proc_stat(paths);
    double last = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(interval * static_cast<double>(i)));
      const ProcStatSnapshot cur = read_proc_stat(paths);
      if (capture_times_s) capture_times_s->push_back(elapsed());
      try {
        last = time_load_between(prev, cur);
      } catch (const Error& e) {
        // Sampling faster than the kernel tick repeats the previous value.
        if (e.code() != ErrorCode::insufficient_data) throw;
      }
      trace.samples.push_back(last);
      prev = cur;
    }
    return trace;
  }

  for (std::size_t i = 0; i < n; ++i) {
    std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(interval * static_cast<double>(i)));
    if (capture_times_s) capture_times_s->push_back(elapsed());
    trace.samples.push_back(std::clamp(frequency_load(read_cpufreq(paths)), 0.0, 1.0));
  }
  return trace;
}

}  // namespace loadwave::sysload
