#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(LOADWAVE_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string temp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("loadwave_cli_" + name)).string();
}

std::string fixture(const std::string& name) { return std::string(LOADWAVE_FIXTURES) + "/" + name; }

}  // namespace

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(run("--help").exit_code, 0);
  EXPECT_EQ(run("bench --help").exit_code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("send").exit_code, 2);
  EXPECT_EQ(run("send --bits 101 --id-hex ab").exit_code, 2);
  EXPECT_EQ(run("send --bits 101 --scheme psk").exit_code, 2);
  EXPECT_EQ(run("recv").exit_code, 2);
  EXPECT_EQ(run("recv --from-trace x.csv --live").exit_code, 2);
  EXPECT_EQ(run("associate --width 40").exit_code, 2);
  EXPECT_EQ(run("bench --format yaml").exit_code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(run("recv --from-trace /nonexistent/trace.csv").exit_code, 1);
  EXPECT_EQ(run("send --bits 10201").exit_code, 1);
  EXPECT_EQ(run("--config " + fixture("profile_unknown_key.conf") + " send --bits 1").exit_code, 1);
}

TEST(Cli, SendRecvRoundTrips) {
  const std::string bits = "1011001110";
  for (const char* scheme : {"ask", "fsk"}) {
    for (const char* metric : {"time", "freq"}) {
      const auto path = temp(std::string(scheme) + "_" + metric + ".csv");
      const auto sent = run(std::string("--out ") + path + " send --mode sim --bit-duration 1 --scheme " + scheme +
                            " --metric " + metric + " --bits " + bits);
      ASSERT_EQ(sent.exit_code, 0) << scheme << "/" << metric;
      const auto got = run("recv --bit-duration 1 --scheme " + std::string(scheme) + " --from-trace " + path);
      std::filesystem::remove(path);
      EXPECT_EQ(got.exit_code, 0);
      EXPECT_EQ(got.out, bits + "\n") << scheme << "/" << metric;
    }
  }
}

TEST(Cli, SendTraceHasOneRowPerSample) {
  const auto r = run("send --mode sim --bits 101010 --bit-duration 1");
  ASSERT_EQ(r.exit_code, 0);
  std::size_t lines = 0;
  for (char c : r.out) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 24u);
  EXPECT_EQ(r.out.rfind("time_s,value,metric\n", 0), 0u);
}

TEST(Cli, OutputIsByteIdenticalForSameSeed) {
  for (const std::string args : {"bench --rates 0.5,4 --bits-per-trial 20 --trials 2 --interference media",
                                 "trace --mode sim --rate 4 --duration 5 --bits 101",
                                 "associate --width 32 --rate 1"}) {
    const auto a = run("--seed 9 " + args);
    const auto b = run("--seed 9 " + args);
    EXPECT_EQ(a.exit_code, b.exit_code) << args;
    EXPECT_EQ(a.out, b.out) << args;
    EXPECT_FALSE(a.out.empty()) << args;
  }
}

TEST(Cli, BenchCsvAtSlowRate) {
  const auto r = run("bench --rates 0.25");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "rate_bps,ber_min,ber_avg,ber_max,trials,bits_per_trial\n0.25,0,0,0,4,100\n");
}

TEST(Cli, TraceFromHostFixtures) {
  const auto r = run("trace --mode host --metric freq --rate 10 --duration 0.3 --proc-stat " + fixture("proc_stat_basic") +
                     " --cpu-root " + fixture("cpu_quad"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find(",0.75,frequency_load"), std::string::npos);
}

TEST(Cli, AssociateMatchesAndWritesRegistries) {
  const auto x = temp("reg_x.json");
  const auto y = temp("reg_y.json");
  const auto r = run("--format json associate --crc --preamble --registry-x " + x + " --registry-y " + y);
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("\"airtime_s\":"), std::string::npos);
  EXPECT_NE(r.out.find("\"matched\":{"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(x));
  EXPECT_TRUE(std::filesystem::exists(y));
  std::filesystem::remove(x);
  std::filesystem::remove(y);
}

TEST(Cli, HostSendCompletes) {
  const auto r = run("send --mode host --bits 10 --bit-duration 0.2");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("sent 2 bits"), std::string::npos);
}
