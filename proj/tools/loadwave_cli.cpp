// loadwave: send, receive, trace, benchmark and associate over processor
// workload, on the real host or on the simulated device.
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "loadwave/loadwave.hpp"

namespace {

using namespace loadwave;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Monday 2024-01-01 04:00:00 UTC; the weekly rendezvous used by `associate`.
constexpr double kDefaultEpoch = 1704081600.0;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
  std::string format;
  bool realtime = false;
};

SimProfile load_profile(const Globals& g, const std::string& channel_config) {
  const std::string& path = channel_config.empty() ? g.config : channel_config;
  SimProfile profile;
  profile.channel.rng_seed = g.seed;
  if (!path.empty()) {
    profile = load_sim_profile(path, profile);
  }
  return profile;
}

void write_output(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(g.out, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write '" + g.out + "'");
  out << text;
}

void pace(const Globals& g, double seconds) {
  if (g.realtime && seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> rates;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      rates.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("invalid rate '" + item + "'");
    }
  }
  if (rates.empty()) throw UsageError("--rates needs at least one value");
  return rates;
}

// ---------------------------------------------------------------------------

struct SendArgs {
  std::string bits;
  std::string id_hex;
  std::string scheme = "ask";
  double bit_duration = 4.0;
  std::string mode = "sim";
  std::string metric = "time";
  std::string channel_config;
};

int cmd_send(const Globals& g, const SendArgs& a) {
  const BitVector bits = a.bits.empty() ? BitVector::from_hex(a.id_hex) : BitVector::from_string(a.bits);
  ModulationConfig mod;
  mod.scheme = parse_scheme(a.scheme);
  mod.bit_duration_s = a.bit_duration;
  const WaveformSchedule tx = modulate(bits, mod);

  if (a.mode == "host") {
    const int cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const auto plan = loadgen::plan_from_schedule(tx, cores);
    const auto report = loadgen::execute(plan, loadgen::Clock::now() + std::chrono::milliseconds(100));
    std::ostringstream os;
    os << "sent " << bits.size() << " bits with " << plan.worker_count << " workers over "
       << tx.total_duration_s() << " s; boundary error p95 " << report.percentile_abs_error_s(0.95) << " s\n";
    write_output(g, os.str());
    return kExitOk;
  }

  const SimProfile profile = load_profile(g, a.channel_config);
  const double rate = required_sample_rate(mod);
  const double airtime = static_cast<double>(bits.size()) * mod.bit_duration_s;
  const WorkloadTrace trace = sample_load(parse_metric(a.metric), tx, profile.device, profile.channel, rate, airtime);
  pace(g, airtime);
  write_output(g, trace_to_csv(trace));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RecvArgs {
  std::string from_trace;
  bool live = false;
  std::string scheme = "ask";
  double bit_duration = 4.0;
  std::size_t expect = 0;
  std::optional<double> threshold;
  std::string metric = "time";
  double baseline_window = -1.0;
};

// Baseline for the ASK threshold: samples before t = 0 when the trace has a
// pre-listen window, else the mean of the lowest tenth of the samples.
double estimate_baseline(const WorkloadTrace& trace) {
  std::vector<double> pre;
  for (std::size_t i = 0; i < trace.size() && trace.time_at(i) < -1e-9; ++i) pre.push_back(trace.samples[i]);
  if (pre.empty()) {
    pre = trace.samples;
    std::sort(pre.begin(), pre.end());
    pre.resize(std::max<std::size_t>(1, pre.size() / 10));
  }
  double sum = 0.0;
  for (double v : pre) sum += v;
  return sum / static_cast<double>(pre.size());
}

int cmd_recv(const Globals& g, const RecvArgs& a) {
  ModulationConfig mod;
  mod.scheme = parse_scheme(a.scheme);
  mod.bit_duration_s = a.bit_duration;
  mod.validate();

  WorkloadTrace trace;
  if (a.live) {
    const double lead = a.baseline_window >= 0 ? a.baseline_window : 2.0 * mod.bit_duration_s;
    const double rate = required_sample_rate(mod);
    const double frame = static_cast<double>(a.expect) * mod.bit_duration_s;
    trace = assoc::host_sensor()(parse_metric(a.metric), rate, assoc::unix_now_s() + lead, -lead, lead + frame);
  } else {
    trace = load_trace_csv(a.from_trace, required_sample_rate(mod));
  }

  WorkloadTrace frame{trace.metric, trace.sample_rate_hz, {}, 0.0};
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.time_at(i) > -1e-9) frame.samples.push_back(trace.samples[i]);
  }
  if (frame.samples.empty()) fail(ErrorCode::insufficient_data, "trace has no samples at or after t = 0");

  DemodConfig demod = DemodConfig::from(mod);
  if (a.expect > 0) demod.expected_bits = a.expect;
  const double peak = *std::max_element(frame.samples.begin(), frame.samples.end());
  demod.ask_threshold = a.threshold ? *a.threshold : adaptive_ask_threshold(estimate_baseline(trace), peak);
  const BitVector bits = demodulate(frame, demod);
  write_output(g, bits.to_string() + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TraceArgs {
  std::string mode = "sim";
  std::string metric = "time";
  double rate = 1.0;
  double duration = 10.0;
  std::string bits;
  std::string scheme = "ask";
  double bit_duration = 4.0;
  std::string channel_config;
  std::string proc_stat = "/proc/stat";
  std::string cpu_root = "/sys/devices/system/cpu";
};

int cmd_trace(const Globals& g, const TraceArgs& a) {
  const Metric metric = parse_metric(a.metric);
  WorkloadTrace trace;
  if (a.mode == "host") {
    sysload::SourcePaths paths{a.proc_stat, a.cpu_root};
    trace = sysload::run_sampler(metric, a.rate, a.duration, paths);
  } else {
    const SimProfile profile = load_profile(g, a.channel_config);
    WaveformSchedule tx;
    if (!a.bits.empty()) {
      ModulationConfig mod;
      mod.scheme = parse_scheme(a.scheme);
      mod.bit_duration_s = a.bit_duration;
      tx = modulate(BitVector::from_string(a.bits), mod);
    }
    trace = sample_load(metric, tx, profile.device, profile.channel, a.rate, a.duration);
    pace(g, a.duration);
  }
  if (g.format == "json") {
    nlohmann::json j{{"metric", to_string(trace.metric)},
                     {"sample_rate_hz", trace.sample_rate_hz},
                     {"start_time_s", trace.start_time_s},
                     {"samples", trace.samples}};
    write_output(g, j.dump() + "\n");
  } else {
    write_output(g, trace_to_csv(trace));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string rates = "0.1,0.25,0.5,1,2,4";
  std::size_t bits = 100;
  std::size_t trials = 4;
  std::string scheme = "ask";
  std::string metric = "time";
  std::string interference = "none";
  std::string channel_config;
  double delay = -1.0;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  bench::BenchPlan plan;
  plan.data_rates_bps = parse_rates(a.rates);
  plan.bits_per_trial = a.bits;
  plan.trials_per_rate = a.trials;
  plan.scheme = parse_scheme(a.scheme);
  plan.metric = parse_metric(a.metric);
  plan.interference = parse_interference(a.interference);
  plan.seed = g.seed;
  SimProfile profile = load_profile(g, a.channel_config);
  if (a.delay >= 0) profile.channel.tx_response_delay_s = a.delay;

  const auto report = bench::run_bench(plan, profile.device, profile.channel);
  const auto format = g.format.empty() ? bench::ReportFormat::csv : bench::parse_report_format(g.format);
  write_output(g, bench::emit_report(report, format));

  const auto problems = report.check_invariants();
  for (const auto& p : problems) std::cerr << "invariant violated: " << p << '\n';
  if (report.any_insufficient()) std::cerr << "warning: some trials had insufficient data (counted as all errors)\n";
  return problems.empty() ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------

struct AssociateArgs {
  std::size_t width = 48;
  double rate = 0.25;
  std::string scheme = "ask";
  std::string metric = "time";
  std::string interference = "media";
  bool sim = true;
  bool preamble = false;
  bool crc = false;
  std::size_t population = 16;
  std::string registry_x;
  std::string registry_y;
  std::string channel_config;
  double baseline_window = 8.0;
};

int cmd_associate(const Globals& g, const AssociateArgs& a) {
  assoc::validate_protocol_width(a.width);
  if (!(a.rate > 0)) throw UsageError("--rate must be positive");

  // Two vendors with their own users; the device hosts installation x of
  // app X and installation y of app Y, owned by the same person.
  assoc::VendorRegistry reg_x("X", a.width);
  assoc::VendorRegistry reg_y("Y", a.width);
  const auto created = assoc::iso8601_utc(static_cast<std::int64_t>(kDefaultEpoch) - 86400);
  for (std::size_t i = 0; i < a.population; ++i) {
    assoc::allocate_id(reg_x, "x-user-" + std::to_string(i), assoc::AllocationPolicy::random(g.seed), created);
    assoc::allocate_id(reg_y, "y-user-" + std::to_string(i), assoc::AllocationPolicy::random(g.seed + 1), created);
  }
  const auto x = assoc::allocate_id(reg_x, "alice@example.com", assoc::AllocationPolicy::random(g.seed), created);
  const auto y = assoc::allocate_id(reg_y, "anonymous-7f3e", assoc::AllocationPolicy::random(g.seed + 1), created);
  if (!a.registry_x.empty()) reg_x.save(a.registry_x);
  if (!a.registry_y.empty()) reg_y.save(a.registry_y);

  ModulationConfig mod;
  mod.scheme = parse_scheme(a.scheme);
  mod.bit_duration_s = 1.0 / a.rate;
  assoc::FrameOptions frame;
  frame.preamble = a.preamble;
  frame.crc = a.crc;
  assoc::RendezvousSchedule schedule{kDefaultEpoch, 7 * 86400.0, a.baseline_window};

  SimProfile profile = load_profile(g, a.channel_config);
  profile.channel.interference.kind = parse_interference(a.interference);
  assoc::SimDevice device(profile.device, profile.channel);
  const double now = kDefaultEpoch - 60.0;

  const auto tx = assoc::run_transmitter(x, mod, schedule, frame, device, now);
  assoc::ReceiverConfig rx;
  rx.modulation = mod;
  rx.metric = parse_metric(a.metric);
  rx.schedule = schedule;
  rx.expected_width = a.width;
  rx.frame = frame;
  auto report = assoc::run_receiver(y, rx, assoc::sim_sensor(device), now);
  if (report.detected_valid) report = assoc::match(std::move(report), reg_x);
  pace(g, tx.airtime_s);

  std::ostringstream os;
  if (g.format == "text") {
    os << "transmitted id   " << x.hex() << " (" << x.app_name << ")\n";
    os << "detected id      " << (report.detected_bits.empty() ? "-" : report.detected_bits.to_hex()) << "\n";
    os << "airtime          " << tx.airtime_s << " s simulated\n";
    os << "matched identity " << (report.matched ? report.matched->record.identity : std::string("none")) << "\n";
  } else {
    os << report.to_json_line() << '\n';
  }
  write_output(g, os.str());
  return report.matched ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covert workload channel toolkit: modulate bits onto processor load and read them back"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for simulated runs")->capture_default_str();
  app.add_option("--config", g.config, "Simulated device/channel profile (key = value)");
  app.add_option("--out", g.out, "Write output to this file instead of stdout");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json", "text"}));
  app.add_flag("--realtime", g.realtime, "Pace simulated runs in wall-clock time");

  SendArgs send;
  auto* s = app.add_subcommand("send", "Transmit bits through processor workload");
  auto* s_bits = s->add_option("--bits", send.bits, "Bits to send, e.g. 101010");
  auto* s_hex = s->add_option("--id-hex", send.id_hex, "Installation id to send, hex");
  s_bits->excludes(s_hex);
  s_hex->excludes(s_bits);
  s->add_option("--scheme", send.scheme)->check(CLI::IsMember({"ask", "fsk"}))->capture_default_str();
  s->add_option("--bit-duration", send.bit_duration, "Seconds per bit")->capture_default_str();
  s->add_option("--mode", send.mode)->check(CLI::IsMember({"host", "sim"}))->capture_default_str();
  s->add_option("--metric", send.metric, "Sensed metric for the sim trace")
      ->check(CLI::IsMember({"time", "freq"}))
      ->capture_default_str();
  s->add_option("--channel-config", send.channel_config, "Simulated device/channel profile");

  RecvArgs recv;
  auto* r = app.add_subcommand("recv", "Demodulate bits from a trace file or live sensing");
  auto* r_trace = r->add_option("--from-trace", recv.from_trace, "Trace CSV to demodulate");
  auto* r_live = r->add_flag("--live", recv.live, "Sense the host now");
  r_trace->excludes(r_live);
  r_live->excludes(r_trace);
  r->add_option("--scheme", recv.scheme)->check(CLI::IsMember({"ask", "fsk"}))->capture_default_str();
  r->add_option("--bit-duration", recv.bit_duration, "Seconds per bit")->capture_default_str();
  r->add_option("--expect", recv.expect, "Number of bits to decode");
  r->add_option("--threshold", recv.threshold, "Fixed ASK threshold instead of the adaptive one");
  r->add_option("--metric", recv.metric, "Live sensing metric")->check(CLI::IsMember({"time", "freq"}));
  r->add_option("--baseline-window", recv.baseline_window, "Live pre-listen seconds (default 2 bit durations)");

  TraceArgs trace;
  auto* t = app.add_subcommand("trace", "Dump raw workload samples");
  t->add_option("--mode", trace.mode)->check(CLI::IsMember({"host", "sim"}))->capture_default_str();
  t->add_option("--metric", trace.metric)->check(CLI::IsMember({"time", "freq"}))->capture_default_str();
  t->add_option("--rate", trace.rate, "Samples per second")->capture_default_str();
  t->add_option("--duration", trace.duration, "Seconds")->capture_default_str();
  t->add_option("--bits", trace.bits, "Sim only: transmission to place at t = 0");
  t->add_option("--scheme", trace.scheme)->check(CLI::IsMember({"ask", "fsk"}));
  t->add_option("--bit-duration", trace.bit_duration);
  t->add_option("--channel-config", trace.channel_config);
  t->add_option("--proc-stat", trace.proc_stat, "Host only: proc stat path");
  t->add_option("--cpu-root", trace.cpu_root, "Host only: cpufreq root directory");

  BenchArgs bench_args;
  auto* b = app.add_subcommand("bench", "BER versus data rate on the simulated device");
  b->add_option("--rates", bench_args.rates, "Comma-separated data rates in bps")->capture_default_str();
  b->add_option("--bits-per-trial", bench_args.bits)->capture_default_str();
  b->add_option("--trials", bench_args.trials)->capture_default_str();
  b->add_option("--scheme", bench_args.scheme)->check(CLI::IsMember({"ask", "fsk"}))->capture_default_str();
  b->add_option("--metric", bench_args.metric)->check(CLI::IsMember({"time", "freq"}))->capture_default_str();
  b->add_option("--interference", bench_args.interference)
      ->check(CLI::IsMember({"none", "media", "compress"}))
      ->capture_default_str();
  b->add_option("--channel-config", bench_args.channel_config);
  b->add_option("--delay", bench_args.delay, "Transmitter response delay in seconds");

  AssociateArgs assoc_args;
  auto* as = app.add_subcommand("associate", "Two-party covert device association on the simulated device");
  as->add_option("--width", assoc_args.width, "Installation id width")->check(CLI::IsMember({32, 48}))->capture_default_str();
  as->add_option("--rate", assoc_args.rate, "Data rate in bps")->capture_default_str();
  as->add_option("--scheme", assoc_args.scheme)->check(CLI::IsMember({"ask", "fsk"}))->capture_default_str();
  as->add_option("--metric", assoc_args.metric)->check(CLI::IsMember({"time", "freq"}))->capture_default_str();
  as->add_option("--interference", assoc_args.interference)
      ->check(CLI::IsMember({"none", "media", "compress"}))
      ->capture_default_str();
  as->add_flag("--sim", assoc_args.sim, "Run on the simulated device (the only mode)");
  as->add_flag("--preamble", assoc_args.preamble, "Prefix the frame with 10101010");
  as->add_flag("--crc", assoc_args.crc, "Append a CRC-8 over the id");
  as->add_option("--population", assoc_args.population, "Other installations per vendor")->capture_default_str();
  as->add_option("--registry-x", assoc_args.registry_x, "Save vendor X's registry as JSON");
  as->add_option("--registry-y", assoc_args.registry_y, "Save vendor Y's registry as JSON");
  as->add_option("--channel-config", assoc_args.channel_config);
  as->add_option("--baseline-window", assoc_args.baseline_window, "Receiver pre-listen seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*s) {
      if (send.bits.empty() && send.id_hex.empty()) throw UsageError("send needs --bits or --id-hex");
      return cmd_send(g, send);
    }
    if (*r) {
      if (recv.from_trace.empty() && !recv.live) throw UsageError("recv needs --from-trace or --live");
      if (recv.live && recv.expect == 0) throw UsageError("recv --live needs --expect");
      return cmd_recv(g, recv);
    }
    if (*t) return cmd_trace(g, trace);
    if (*b) return cmd_bench(g, bench_args);
    if (*as) return cmd_associate(g, assoc_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
