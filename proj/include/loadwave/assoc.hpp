#pragma once

// Covert device association: installation IDs, scheduled rendezvous,
// framing, and vendor-side matching between colluding installations.
//
// The transmitter modulates its installation ID onto processor workload at
// a pre-agreed instant; a receiver on the same device senses the workload,
// demodulates the ID and reports it together with its own ID to its vendor.
// The vendors then look the detected ID up in the partner's registry.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "loadwave/bits.hpp"
#include "loadwave/channel_sim.hpp"
#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"
#include "loadwave/loadgen.hpp"
#include "loadwave/sysload.hpp"

namespace loadwave::assoc {

inline constexpr std::size_t kDefaultIdWidth = 48;

struct InstallationId {
  std::string app_name;
  BitVector bits;

  std::size_t width() const noexcept { return bits.size(); }
  std::uint64_t value() const { return bits.to_uint(); }
  std::string hex() const { return bits.to_hex(); }

  friend bool operator==(const InstallationId&, const InstallationId&) = default;
};

/// Widths the wire protocol accepts.
inline void validate_protocol_width(std::size_t width) {
  if (width != 32 && width != 48) fail(ErrorCode::invalid_argument, "installation id width must be 32 or 48 bits");
}

// ---------------------------------------------------------------------------
// Vendor registry

struct Record {
  std::string identity;
  std::string created_at;  // ISO-8601 UTC

  friend bool operator==(const Record&, const Record&) = default;
};

/// UTC ISO-8601 with second resolution.
inline std::string iso8601_utc(std::int64_t epoch_s) {
  const std::time_t t = static_cast<std::time_t>(epoch_s);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string now_iso8601() {
  return iso8601_utc(std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count());
}

/// One vendor's installation database. IDs are unique per registry; the
/// same numeric ID may exist in another vendor's registry.
class VendorRegistry {
 public:
  explicit VendorRegistry(std::string vendor, std::size_t width = kDefaultIdWidth)
      : vendor_(std::move(vendor)), width_(width) {
    if (width_ == 0 || width_ > 64) fail(ErrorCode::invalid_argument, "registry width must be in [1, 64]");
  }

  const std::string& vendor() const noexcept { return vendor_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::uint64_t, Record>& entries() const noexcept { return entries_; }

  /// Number of distinct ids at this width, saturated for width 64.
  std::uint64_t capacity() const noexcept {
    return width_ >= 64 ? std::numeric_limits<std::uint64_t>::max() : (std::uint64_t{1} << width_);
  }

  bool contains(std::uint64_t id) const { return entries_.contains(id); }

  const Record* find(const BitVector& bits) const {
    if (bits.size() != width_) return nullptr;
    auto it = entries_.find(bits.to_uint());
    return it == entries_.end() ? nullptr : &it->second;
  }

  void insert(std::uint64_t id, Record record) {
    if (width_ < 64 && id >= capacity()) fail(ErrorCode::invalid_argument, "id does not fit the registry width");
    if (!entries_.emplace(id, std::move(record)).second) {
      fail(ErrorCode::invalid_argument, "duplicate installation id in registry '" + vendor_ + "'");
    }
  }

  InstallationId id_of(std::uint64_t id) const { return {vendor_, BitVector::from_uint(id, width_)}; }

  nlohmann::json to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [id, rec] : entries_) {
      entries.push_back({{"id_hex", hex_of(id)}, {"identity", rec.identity}, {"created_at", rec.created_at}});
    }
    return {{"vendor", vendor_}, {"entries", std::move(entries)}};
  }

  /// Width is taken from the hex digit count of the entries (default width
  /// when the registry is empty).
  static VendorRegistry from_json(const nlohmann::json& doc, std::size_t default_width = kDefaultIdWidth) {
    try {
      const auto& entries = doc.at("entries");
      std::size_t width = default_width;
      if (!entries.empty()) width = entries.front().at("id_hex").get<std::string>().size() * 4;
      VendorRegistry reg(doc.at("vendor").get<std::string>(), width);
      for (const auto& e : entries) {
        const auto hex = e.at("id_hex").get<std::string>();
        if (hex.size() * 4 != width) fail(ErrorCode::parse_error, "registry mixes id widths");
        reg.insert(BitVector::from_hex(hex).to_uint(),
                   {e.at("identity").get<std::string>(), e.at("created_at").get<std::string>()});
      }
      return reg;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse_error, std::string("malformed registry document: ") + e.what());
    }
  }

  /// Whole-file replacement: write a sibling temp file, then rename over.
  void save(const std::filesystem::path& path) const {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) fail(ErrorCode::io_error, "cannot write registry '" + tmp.string() + "'");
      out << to_json().dump(2) << '\n';
      if (!out) fail(ErrorCode::io_error, "failed writing registry '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::io_error, "cannot replace registry '" + path.string() + "': " + ec.message());
  }

  static VendorRegistry load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "cannot open registry '" + path.string() + "'");
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse_error, "registry '" + path.string() + "': " + e.what());
    }
    return from_json(doc);
  }

 private:
  std::string hex_of(std::uint64_t id) const {
    // pad to whole hex digits
    const std::size_t digits = (width_ + 3) / 4;
    return BitVector::from_uint(id, digits * 4).to_hex();
  }

  std::string vendor_;
  std::size_t width_;
  std::map<std::uint64_t, Record> entries_;
};

struct AllocationPolicy {
  enum class Kind { sequential, random } kind = Kind::sequential;
  std::uint64_t seed = 0;

  static AllocationPolicy sequential() { return {}; }
  static AllocationPolicy random(std::uint64_t seed) { return {Kind::random, seed}; }
};

inline InstallationId allocate_id(VendorRegistry& registry, const std::string& identity,
                                  const AllocationPolicy& policy, const std::string& created_at = now_iso8601()) {
  if (registry.width() < 64 && registry.size() >= registry.capacity()) {
    fail(ErrorCode::capacity_error, "id space of registry '" + registry.vendor() + "' is exhausted");
  }
  const std::uint64_t mask = registry.width() >= 64 ? ~std::uint64_t{0} : registry.capacity() - 1;
  std::uint64_t id = 0;
  if (policy.kind == AllocationPolicy::Kind::sequential) {
    id = registry.entries().empty() ? 0 : (registry.entries().rbegin()->first + 1) & mask;
    while (registry.contains(id)) id = (id + 1) & mask;
  } else {
    // The stream depends on the seed and the registry size, so replaying the
    // same allocations with the same seed reproduces the same ids.
    std::mt19937_64 rng(policy.seed ^ (0x9e3779b97f4a7c15ULL * (registry.size() + 1)));
    id = rng() & mask;
    for (int tries = 0; registry.contains(id) && tries < 64; ++tries) id = rng() & mask;
    while (registry.contains(id)) id = (id + 1) & mask;
  }
  registry.insert(id, {identity, created_at});
  return registry.id_of(id);
}

// ---------------------------------------------------------------------------
// Framing

/// CRC-8, polynomial 0x07, init 0x00, no reflection, over the bits MSB first.
inline std::uint8_t crc8(const BitVector& bits) {
  std::uint8_t crc = 0;
  for (auto bit : bits) {
    const bool top = (crc & 0x80) != 0;
    crc = static_cast<std::uint8_t>(crc << 1);
    if (top != (bit != 0)) crc ^= 0x07;
  }
  return crc;
}

struct FrameOptions {
  bool preamble = false;
  BitVector preamble_bits = BitVector::from_string("10101010");
  bool crc = false;

  /// Serialized length for a payload of `width` bits.
  std::size_t frame_bits(std::size_t width) const {
    return (preamble ? preamble_bits.size() : 0) + width + (crc ? 8 : 0);
  }
};

struct Frame {
  BitVector preamble;
  BitVector payload;
  std::optional<std::uint8_t> checksum;

  BitVector serialize() const {
    BitVector out = preamble;
    out.append(payload);
    if (checksum) out.append(BitVector::from_uint(*checksum, 8));
    return out;
  }
};

inline Frame build_frame(const InstallationId& id, const FrameOptions& options = {}) {
  Frame f;
  if (options.preamble) f.preamble = options.preamble_bits;
  f.payload = id.bits;
  if (options.crc) f.checksum = crc8(id.bits);
  return f;
}

inline BitVector serialize(const Frame& frame) { return frame.serialize(); }

struct ParsedFrame {
  BitVector payload;
  bool preamble_ok = true;
  bool crc_ok = true;
  bool valid() const noexcept { return preamble_ok && crc_ok; }
};

inline ParsedFrame parse_frame(const BitVector& bits, std::size_t width, const FrameOptions& options) {
  if (bits.size() != options.frame_bits(width)) {
    fail(ErrorCode::invalid_argument, "frame length does not match the configured layout");
  }
  ParsedFrame out;
  std::size_t offset = 0;
  if (options.preamble) {
    out.preamble_ok = bits.slice(0, options.preamble_bits.size()) == options.preamble_bits;
    offset = options.preamble_bits.size();
  }
  out.payload = bits.slice(offset, width);
  if (options.crc) out.crc_ok = bits.slice(offset + width, 8).to_uint() == crc8(out.payload);
  return out;
}

// ---------------------------------------------------------------------------
// Rendezvous

/// Periodic pre-agreed instants epoch_s + k * period_s (UTC seconds).
struct RendezvousSchedule {
  double epoch_s = 0.0;
  double period_s = 3600.0;
  double baseline_window_s = 8.0;

  void validate(double frame_duration_s) const {
    if (!(period_s > 0.0)) fail(ErrorCode::invalid_argument, "rendezvous period must be positive");
    if (!(baseline_window_s >= 0.0)) fail(ErrorCode::invalid_argument, "baseline window must be nonnegative");
    if (!(period_s > frame_duration_s + baseline_window_s)) {
      fail(ErrorCode::invalid_argument, "rendezvous period must exceed frame airtime plus baseline window");
    }
  }

  /// First rendezvous instant at or after now_s.
  double next_instant(double now_s) const {
    if (now_s <= epoch_s) return epoch_s;
    const double k = std::ceil((now_s - epoch_s) / period_s);
    return epoch_s + k * period_s;
  }
};

// ---------------------------------------------------------------------------
// Simulated device shared by transmitter and receiver tasks

class SimDevice {
 public:
  SimDevice(DeviceProfile device, ChannelConfig channel) : device_(std::move(device)), channel_(std::move(channel)) {
    device_.validate();
    channel_.validate();
  }

  const DeviceProfile& device() const noexcept { return device_; }
  const ChannelConfig& channel() const noexcept { return channel_; }

  void schedule_transmission(double start_abs_s, WaveformSchedule schedule) {
    for (const auto& t : transmissions_) {
      const bool overlap = start_abs_s < t.start_abs_s + t.schedule.total_duration_s() &&
                           t.start_abs_s < start_abs_s + schedule.total_duration_s();
      if (overlap) fail(ErrorCode::scheduling_error, "overlapping transmissions on one simulated device");
    }
    transmissions_.push_back({start_abs_s, std::move(schedule)});
  }

  /// Trace over [reference + start_offset, +duration); timestamps relative
  /// to `reference_abs_s`.
  WorkloadTrace sense(Metric metric, double rate_hz, double reference_abs_s, double start_offset_s,
                      double duration_s) const {
    const double begin = reference_abs_s + start_offset_s;
    const double end = begin + duration_s;
    const Transmission* active = nullptr;
    for (const auto& t : transmissions_) {
      if (begin < t.start_abs_s + t.schedule.total_duration_s() && t.start_abs_s < end) {
        if (active) fail(ErrorCode::scheduling_error, "more than one transmission inside the sensing window");
        active = &t;
      }
    }
    static const WaveformSchedule silence;
    const double origin = active ? active->start_abs_s : reference_abs_s;
    WorkloadTrace trace =
        sample_load(metric, active ? active->schedule : silence, device_, channel_, rate_hz, duration_s, begin - origin);
    trace.start_time_s = start_offset_s;
    return trace;
  }

 private:
  struct Transmission {
    double start_abs_s;
    WaveformSchedule schedule;
  };

  DeviceProfile device_;
  ChannelConfig channel_;
  std::vector<Transmission> transmissions_;
};

/// Sensing source for the receiver: (metric, rate, reference instant,
/// start offset, duration) -> trace with timestamps relative to the reference.
using Sensor = std::function<WorkloadTrace(Metric, double, double, double, double)>;

inline Sensor sim_sensor(const SimDevice& device) {
  return [&device](Metric m, double rate, double ref, double offset, double duration) {
    return device.sense(m, rate, ref, offset, duration);
  };
}

inline double unix_now_s() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Real host: sleeps until the window opens, then samples proc/sysfs.
inline Sensor host_sensor(sysload::SourcePaths paths = {}) {
  return [paths](Metric m, double rate, double ref, double offset, double duration) {
    const double wait = ref + offset - unix_now_s();
    if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    WorkloadTrace trace = sysload::run_sampler(m, rate, duration, paths);
    trace.start_time_s = offset;
    return trace;
  };
}

// ---------------------------------------------------------------------------
// Transmitter

struct TxReport {
  double rendezvous_s = 0.0;
  double airtime_s = 0.0;
  BitVector frame;
  std::optional<loadgen::RunReport> host;
};

namespace detail {

inline TxReport prepare_tx(const InstallationId& id, const ModulationConfig& mod, const RendezvousSchedule& schedule,
                           const FrameOptions& options, double now_s, WaveformSchedule& waveform) {
  TxReport report;
  report.frame = build_frame(id, options).serialize();
  waveform = modulate(report.frame, mod);
  // k bits at T seconds each; the waveform's float sum may differ by an ulp
  report.airtime_s = static_cast<double>(report.frame.size()) * mod.bit_duration_s;
  schedule.validate(report.airtime_s);
  report.rendezvous_s = schedule.next_instant(now_s);
  return report;
}

}  // namespace detail

/// Simulated backend: the frame is placed on the device's virtual timeline
/// at the next rendezvous instant.
inline TxReport run_transmitter(const InstallationId& id, const ModulationConfig& mod,
                                const RendezvousSchedule& schedule, const FrameOptions& options, SimDevice& device,
                                double now_s) {
  WaveformSchedule waveform;
  TxReport report = detail::prepare_tx(id, mod, schedule, options, now_s, waveform);
  device.schedule_transmission(report.rendezvous_s, std::move(waveform));
  return report;
}

/// Host backend: waits for the next rendezvous in wall-clock time and
/// drives real workload through loadgen.
inline TxReport run_transmitter_host(const InstallationId& id, const ModulationConfig& mod,
                                     const RendezvousSchedule& schedule, const FrameOptions& options,
                                     int n_cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))) {
  WaveformSchedule waveform;
  TxReport report = detail::prepare_tx(id, mod, schedule, options, unix_now_s(), waveform);
  const double lead = std::max(0.0, report.rendezvous_s - unix_now_s());
  const auto start_at =
      loadgen::Clock::now() + std::chrono::duration_cast<loadgen::Clock::duration>(std::chrono::duration<double>(lead)) +
      std::chrono::milliseconds(1);
  try {
    report.host = loadgen::execute(loadgen::plan_from_schedule(std::move(waveform), n_cores), start_at);
  } catch (const Error& e) {
    fail(e.code(), std::string("host transmitter: ") + e.what());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Receiver and matching

struct MatchedRecord {
  std::string vendor;
  std::string id_hex;
  Record record;
};

struct AssociationReport {
  InstallationId reporter;
  BitVector detected_bits;
  bool detected_valid = false;
  std::optional<MatchedRecord> matched;

  // diagnostics
  double rendezvous_s = 0.0;
  double airtime_s = 0.0;
  double ask_threshold = 0.0;
  bool carrier_detected = false;
  std::string note;

  nlohmann::json to_json() const {
    nlohmann::json j{{"reporter_app", reporter.app_name},
                     {"reporter_id_hex", reporter.bits.size() % 4 == 0 ? reporter.hex() : reporter.bits.to_string()},
                     {"detected_bits", detected_bits.to_string()},
                     {"detected_valid", detected_valid},
                     {"rendezvous_s", rendezvous_s},
                     {"airtime_s", airtime_s},
                     {"carrier_detected", carrier_detected}};
    if (!detected_bits.empty() && detected_bits.size() % 4 == 0) j["detected_id_hex"] = detected_bits.to_hex();
    if (matched) {
      j["matched"] = {{"vendor", matched->vendor},
                      {"id_hex", matched->id_hex},
                      {"identity", matched->record.identity},
                      {"created_at", matched->record.created_at}};
    } else {
      j["matched"] = nullptr;
    }
    if (!note.empty()) j["note"] = note;
    return j;
  }

  /// One JSON object per line.
  std::string to_json_line() const { return to_json().dump(); }
};

struct ReceiverConfig {
  ModulationConfig modulation;
  Metric metric = Metric::time_load;
  RendezvousSchedule schedule;
  std::size_t expected_width = kDefaultIdWidth;
  FrameOptions frame;
  double full_level_floor = 0.9;  // "full workload" never drops below this
  double min_swing = 0.1;         // below this the trace carries no carrier
};

/// Senses a baseline window before the rendezvous and the frame after it,
/// derives the ASK threshold from them and demodulates.
inline AssociationReport run_receiver(const InstallationId& reporter, const ReceiverConfig& cfg, const Sensor& sensor,
                                      double now_s) {
  const auto& mod = cfg.modulation;
  mod.validate();
  const std::size_t frame_bits = cfg.frame.frame_bits(cfg.expected_width);
  const double airtime = static_cast<double>(frame_bits) * mod.bit_duration_s;
  cfg.schedule.validate(airtime);

  AssociationReport report;
  report.reporter = reporter;
  report.rendezvous_s = cfg.schedule.next_instant(now_s);
  report.airtime_s = airtime;

  const double rate = required_sample_rate(mod);
  const auto baseline_samples = static_cast<std::size_t>(std::llround(cfg.schedule.baseline_window_s * rate));
  if (mod.scheme == Scheme::ask && baseline_samples == 0) {
    fail(ErrorCode::invalid_argument, "ASK reception needs a baseline window of at least one sample");
  }
  const double lead = static_cast<double>(baseline_samples) / rate;
  const WorkloadTrace full = sensor(cfg.metric, rate, report.rendezvous_s, -lead, lead + airtime);

  double baseline_mean = 0.0;
  for (std::size_t i = 0; i < baseline_samples && i < full.samples.size(); ++i) baseline_mean += full.samples[i];
  if (baseline_samples > 0) baseline_mean /= static_cast<double>(baseline_samples);

  WorkloadTrace frame{full.metric, full.sample_rate_hz, {}, 0.0};
  if (full.samples.size() > baseline_samples) {
    frame.samples.assign(full.samples.begin() + static_cast<std::ptrdiff_t>(baseline_samples), full.samples.end());
  }
  if (frame.samples.empty()) {
    report.note = "no samples in frame window";
    return report;
  }
  const auto [lo, hi] = std::minmax_element(frame.samples.begin(), frame.samples.end());
  const double floor_level = baseline_samples > 0 ? std::min(*lo, baseline_mean) : *lo;
  const double swing = *hi - floor_level;

  DemodConfig demod = DemodConfig::from(mod);
  demod.expected_bits = frame_bits;
  report.ask_threshold = adaptive_ask_threshold(baseline_mean, *hi, cfg.full_level_floor);
  demod.ask_threshold = report.ask_threshold;

  report.carrier_detected = swing >= cfg.min_swing;
  if (mod.scheme == Scheme::ask) {
    report.carrier_detected =
        report.carrier_detected && std::any_of(frame.samples.begin(), frame.samples.end(),
                                               [&](double v) { return v > report.ask_threshold; });
  }

  BitVector bits;
  try {
    bits = demodulate(frame, demod);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::insufficient_data) throw;
    report.note = e.what();
    return report;
  }
  const ParsedFrame parsed = parse_frame(bits, cfg.expected_width, cfg.frame);
  report.detected_bits = parsed.payload;
  report.detected_valid = report.carrier_detected && parsed.valid();
  if (!report.carrier_detected) report.note = "no carrier";
  else if (!parsed.preamble_ok) report.note = "preamble mismatch";
  else if (!parsed.crc_ok) report.note = "checksum mismatch";
  return report;
}

/// Completes a report against the partner vendor's registry.
inline AssociationReport match(AssociationReport report, const VendorRegistry& partner) {
  if (!report.detected_valid) fail(ErrorCode::invalid_argument, "cannot match an invalid association report");
  report.matched.reset();
  if (const Record* rec = partner.find(report.detected_bits)) {
    report.matched = MatchedRecord{partner.vendor(), report.detected_bits.to_hex(), *rec};
  }
  return report;
}

}  // namespace loadwave::assoc
