#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "loadwave/codec.hpp"

using namespace loadwave;

namespace {

ModulationConfig config(Scheme scheme, double t) {
  ModulationConfig cfg;
  cfg.scheme = scheme;
  cfg.bit_duration_s = t;
  return cfg;
}

DemodConfig demod_for(const ModulationConfig& m, double threshold = 0.5) {
  DemodConfig d = DemodConfig::from(m);
  d.ask_threshold = threshold;
  return d;
}

WorkloadTrace trace_of(std::vector<double> samples, double rate) {
  return {Metric::time_load, rate, std::move(samples), 0.0};
}

// Power at bin m computed from separate real cosine and sine sums over the
// mean-removed window, normalized by N^2.
double oracle_power(const std::vector<double>& x, std::size_t m) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    re += (x[i] - mean) * std::cos(2.0 * std::numbers::pi * static_cast<double>(m * i) / n);
    im -= (x[i] - mean) * std::sin(2.0 * std::numbers::pi * static_cast<double>(m * i) / n);
  }
  return (re * re + im * im) / (n * n);
}

}  // namespace

TEST(Modulate, AskMapsEachBitToOneSegment) {
  const auto s = modulate(BitVector::from_string("101"), config(Scheme::ask, 4.0));
  const std::vector<Segment> expected{{4.0, 1.0}, {4.0, 0.0}, {4.0, 1.0}};
  EXPECT_EQ(s.segments(), expected);
  EXPECT_DOUBLE_EQ(s.total_duration_s(), 12.0);
}

TEST(Modulate, FskZeroIsOneSquareCycle) {
  const auto s = modulate(BitVector::from_string("0"), config(Scheme::fsk, 5.0));
  const std::vector<Segment> expected{{2.5, 1.0}, {2.5, 0.0}};
  EXPECT_EQ(s.segments(), expected);
}

TEST(Modulate, FskOneIsFiveSquareCycles) {
  const auto s = modulate(BitVector::from_string("1"), config(Scheme::fsk, 5.0));
  ASSERT_EQ(s.size(), 10u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_DOUBLE_EQ(s.segments()[i].duration_s, 0.5);
    EXPECT_EQ(s.segments()[i].target_load, i % 2 == 0 ? 1.0 : 0.0);
  }
}

TEST(Modulate, AllZeroAskStaysAtLowLoad) {
  auto cfg = config(Scheme::ask, 2.5);
  cfg.low_load = 0.1;
  const auto s = modulate(BitVector::from_string("0000"), cfg);
  for (const auto& seg : s.segments()) EXPECT_EQ(seg.target_load, 0.1);
  EXPECT_DOUBLE_EQ(s.total_duration_s(), 10.0);
}

TEST(Modulate, RejectsEmptyAndInvalidConfig) {
  EXPECT_THROW(modulate(BitVector{}, config(Scheme::ask, 1.0)), Error);
  EXPECT_THROW(modulate(BitVector::from_string("1"), config(Scheme::ask, std::nan(""))), Error);
  EXPECT_THROW(modulate(BitVector::from_string("1"), config(Scheme::ask, INFINITY)), Error);
  auto bad = config(Scheme::fsk, 1.0);
  bad.fsk_cycle_ratio = 1;
  EXPECT_THROW(modulate(BitVector::from_string("1"), bad), Error);
  bad = config(Scheme::ask, 1.0);
  bad.low_load = 0.8;
  bad.high_load = 0.5;
  EXPECT_THROW(modulate(BitVector::from_string("1"), bad), Error);
  try {
    modulate(BitVector{}, config(Scheme::ask, 1.0));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
}

TEST(RequiredSampleRate, FourTimesTheHighestCarrier) {
  EXPECT_DOUBLE_EQ(required_sample_rate(config(Scheme::ask, 1.0)), 4.0);
  EXPECT_DOUBLE_EQ(required_sample_rate(config(Scheme::fsk, 1.0)), 20.0);
  EXPECT_DOUBLE_EQ(required_sample_rate(config(Scheme::ask, 4.0)), 1.0);
}

TEST(DemodulateAsk, SeventyFivePercentRule) {
  const auto m = config(Scheme::ask, 1.0);
  EXPECT_EQ(demodulate_ask(trace_of({0.9, 0.95, 0.2, 0.88}, 4.0), demod_for(m, 0.6)).to_string(), "1");
  EXPECT_EQ(demodulate_ask(trace_of({0.1, 0.1, 0.1, 0.1}, 4.0), demod_for(m, 0.6)).to_string(), "0");
  // 2 of 4 above is below ceil(0.75 * 4) = 3
  EXPECT_EQ(demodulate_ask(trace_of({0.9, 0.95, 0.2, 0.2}, 4.0), demod_for(m, 0.6)).to_string(), "0");
  // strictly greater than the threshold
  EXPECT_EQ(demodulate_ask(trace_of({0.6, 0.6, 0.6, 0.6}, 4.0), demod_for(m, 0.6)).to_string(), "0");
}

TEST(DemodulateAsk, IdealRoundTrip) {
  const auto m = config(Scheme::ask, 2.0);
  const auto bits = BitVector::from_string("101010");
  const auto tx = modulate(bits, m);
  const auto trace = sample_ideal(tx, required_sample_rate(m), tx.total_duration_s());
  EXPECT_EQ(demodulate_ask(trace, demod_for(m)), bits);
}

TEST(DemodulateAsk, ErrorPaths) {
  const auto m = config(Scheme::ask, 1.0);
  try {
    demodulate_ask(trace_of({0.9, 0.9, 0.9}, 4.0), demod_for(m));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
  }
  try {
    demodulate_ask(trace_of({0.9, 0.9, 0.9, 0.9}, 2.0), demod_for(m));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
  auto d = demod_for(m);
  d.expected_bits = 3;
  try {
    demodulate_ask(trace_of(std::vector<double>(9, 0.9), 4.0), d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
  }
}

TEST(DemodulateAsk, PartialTrailingWindowIsDiscarded) {
  const auto m = config(Scheme::ask, 1.0);
  std::vector<double> s{1, 1, 1, 1, 0, 0, 0, 0, 1, 1};
  EXPECT_EQ(demodulate_ask(trace_of(s, 4.0), demod_for(m)).to_string(), "10");
}

TEST(DemodulateFsk, IdealWindows) {
  const auto m = config(Scheme::fsk, 1.0);
  const auto one = sample_ideal(modulate(BitVector::from_string("1"), m), 20.0, 1.0);
  const auto zero = sample_ideal(modulate(BitVector::from_string("0"), m), 20.0, 1.0);
  EXPECT_EQ(demodulate_fsk(one, demod_for(m)).to_string(), "1");
  EXPECT_EQ(demodulate_fsk(zero, demod_for(m)).to_string(), "0");
  EXPECT_EQ(demodulate_fsk(trace_of(std::vector<double>(20, 0.4), 20.0), demod_for(m)).to_string(), "0");
  EXPECT_DOUBLE_EQ(demod_for(m).fsk_freq_threshold_hz(), 3.0);
}

TEST(SpectralPeak, SampledCosineAtFiveCycles) {
  // x_n = cos(2 pi 5 n / 20): DFT bin 5 has magnitude N/2, so power 1/4.
  std::vector<double> x(20);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * 5.0 * n / 20.0);
  const auto p = spectral_peak(x, 2.0);
  EXPECT_DOUBLE_EQ(p.frequency_hz, 5.0 / 2.0);
  EXPECT_NEAR(p.power, 0.0625, 1e-12);  // amplitude 0.5 -> (0.5 * 20 / 2)^2 / 400
}

TEST(SpectralPeak, FlatWindowGivesZeroAtLowestBin) {
  const auto p = spectral_peak(std::vector<double>(20, 0.1), 4.0);
  EXPECT_DOUBLE_EQ(p.frequency_hz, 0.25);
  EXPECT_EQ(p.power, 0.0);
}

TEST(SpectralPeak, StrongerLowToneWins) {
  std::vector<double> x(20);
  for (std::size_t n = 0; n < x.size(); ++n) {
    x[n] = std::cos(2.0 * std::numbers::pi * n / 20.0) + 0.2 * std::cos(2.0 * std::numbers::pi * 5.0 * n / 20.0);
  }
  const auto p = spectral_peak(x, 1.0);
  EXPECT_DOUBLE_EQ(p.frequency_hz, 1.0);
  EXPECT_NEAR(p.power, oracle_power(x, 1), 1e-12);
  EXPECT_NEAR(p.power, 0.25, 1e-12);
}

TEST(SpectralPeak, SquareWaveFourierOracle) {
  // Bit-1 window: period-4 square wave [1,1,0,0] x5. X_5 = 5(1 - i), so
  // power = 50 / 400.
  std::vector<double> one;
  for (int c = 0; c < 5; ++c) one.insert(one.end(), {1, 1, 0, 0});
  auto p = spectral_peak(one, 1.0);
  EXPECT_DOUBLE_EQ(p.frequency_hz, 5.0);
  EXPECT_NEAR(p.power, 0.125, 1e-12);

  // Bit-0 window: ten ones then ten zeros. |X_1|^2 = 2 / (1 - cos(pi/10)).
  std::vector<double> zero(20, 0.0);
  std::fill(zero.begin(), zero.begin() + 10, 1.0);
  p = spectral_peak(zero, 1.0);
  EXPECT_DOUBLE_EQ(p.frequency_hz, 1.0);
  EXPECT_NEAR(p.power, 2.0 / (1.0 - std::cos(std::numbers::pi / 10.0)) / 400.0, 1e-12);
}

TEST(SpectralPeak, MatchesBruteForceOnRandomWindows) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + rng() % 60;
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    const auto p = spectral_peak(x, 1.0);
    std::size_t best = 1;
    for (std::size_t m = 1; m <= n / 2; ++m) {
      if (oracle_power(x, m) > oracle_power(x, best) * (1 + 1e-9) + 1e-18) best = m;
    }
    EXPECT_DOUBLE_EQ(p.frequency_hz, static_cast<double>(best));
    EXPECT_NEAR(p.power, oracle_power(x, best), 1e-12);
  }
}

TEST(SpectralPeak, NeedsFourSamples) {
  try {
    spectral_peak({1, 0, 1}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
  }
}

// --- properties ------------------------------------------------------------

TEST(CodecProperty, RoundTripIdentityOnIdealSampling) {
  std::mt19937_64 rng(2024);
  for (auto scheme : {Scheme::ask, Scheme::fsk}) {
    for (double t : {0.25, 0.5, 1.0, 3.0, 4.0, 10.0}) {
      for (int trial = 0; trial < 10; ++trial) {
        const auto bits = BitVector::random(1 + rng() % 64, rng);
        const auto m = config(scheme, t);
        const auto tx = modulate(bits, m);
        const auto trace = sample_ideal(tx, required_sample_rate(m), tx.total_duration_s());
        auto d = demod_for(m);
        d.expected_bits = bits.size();
        EXPECT_EQ(demodulate(trace, d), bits) << to_string(scheme) << " T=" << t;
      }
    }
  }
}

TEST(CodecProperty, DurationIsConserved) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dur(0.01, 20.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto scheme = trial % 2 ? Scheme::ask : Scheme::fsk;
    const double t = dur(rng);
    const auto bits = BitVector::random(1 + rng() % 100, rng);
    const auto s = modulate(bits, config(scheme, t));
    const double expected = static_cast<double>(bits.size()) * t;
    const double ulps = static_cast<double>(s.size());
    EXPECT_LE(std::abs(s.total_duration_s() - expected),
              ulps * std::numeric_limits<double>::epsilon() * expected);
  }
}

TEST(CodecProperty, AskDetectedOnesAreAntitoneInThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto m = config(Scheme::ask, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(4 * 16);
    for (auto& v : s) v = u(rng);
    const auto trace = trace_of(s, 4.0);
    BitVector prev = demodulate_ask(trace, demod_for(m, 0.01));
    for (double th = 0.05; th < 1.0; th += 0.05) {
      const BitVector cur = demodulate_ask(trace, demod_for(m, th));
      for (std::size_t i = 0; i < cur.size(); ++i) EXPECT_LE(cur[i], prev[i]);
      prev = cur;
    }
  }
}

TEST(CodecProperty, FskSpectralSeparation) {
  for (double t : {0.5, 1.0, 2.0, 5.0, 7.5}) {
    const auto m = config(Scheme::fsk, t);
    const double rate = required_sample_rate(m);
    const double half_bin = 0.5 / t;
    const auto one = sample_ideal(modulate(BitVector::from_string("1"), m), rate, t);
    const auto zero = sample_ideal(modulate(BitVector::from_string("0"), m), rate, t);
    EXPECT_GE(spectral_peak(one.samples, t).frequency_hz, 5.0 / t - half_bin);
    EXPECT_LE(spectral_peak(zero.samples, t).frequency_hz, 1.0 / t + half_bin);
  }
}

TEST(CodecProperty, DemodulationIsPure) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(200);
  for (auto& v : s) v = u(rng);
  const auto m = config(Scheme::fsk, 1.0);
  const auto trace = trace_of(s, 20.0);
  const auto first = demodulate_fsk(trace, demod_for(m));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(demodulate_fsk(trace, demod_for(m)), first);
}

TEST(AdaptiveThreshold, UsesFloorForFullLevel) {
  EXPECT_DOUBLE_EQ(adaptive_ask_threshold(0.1, 0.5), 0.5);   // (0.1 + 0.9) / 2
  EXPECT_DOUBLE_EQ(adaptive_ask_threshold(0.2, 1.0), 0.6);
  EXPECT_LT(adaptive_ask_threshold(1.0, 1.0), 1.0);
}
