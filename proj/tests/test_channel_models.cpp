#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "sfc/channel_models.hpp"
#include "sfc/random.hpp"

using namespace sfc;

namespace {

double binomial_se(double p, double n) { return std::sqrt(p * (1.0 - p) / n); }

}  // namespace

TEST(CounterRng, DeterministicAndStreamSeparated) {
  CounterRng a(5, 1), b(5, 1), c(5, 2);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
  }
  CounterRng d(5, 1);
  EXPECT_EQ(d.at(3), CounterRng(5, 1).at(3));
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_EQ(d.split(9)(), CounterRng(5, 1).split(9)());
}

TEST(AnalogLink, NoiselessIdentity) {
  AnalogFrame frame{{0.3, -1.2, 2.5}, {0.1, 0.0, -0.5}, {1.0, 1.0, 1.0}};
  FadingRealization fading{{{1.0, 0.0}, {0.3, -0.7}}, 0.0};
  const auto out = analog_roundtrip(frame, fading, 1);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], frame.features[i], 1e-14);
}

TEST(AnalogLink, EqualizationIsExact) {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 1000; ++i) {
    const std::complex<double> h(normal(gen), normal(gen)), s(normal(gen), normal(gen));
    EXPECT_NEAR(std::abs(equalize(h * s, h) - s), 0.0, 1e-12 * std::max(1.0, std::abs(s)));
  }
}

TEST(AnalogLink, EffectiveNoiseVariance) {
  EXPECT_DOUBLE_EQ(analog_effective_noise_var(2.0, 4.0, 8.0), 0.5);
  const std::size_t trials = 1000000;
  AnalogFrame frame{std::vector<double>(2 * trials, 0.0), std::vector<double>(2 * trials, 0.0),
                    std::vector<double>(2 * trials, 1.0)};
  FadingRealization fading{std::vector<std::complex<double>>(trials, {1.0, 0.0}), 2.0};
  const auto out = analog_roundtrip(frame, fading, 32);
  double ss = 0.0, s4 = 0.0;
  for (double e : out) {
    ss += e * e;
    s4 += e * e * e * e;
  }
  const double n = static_cast<double>(out.size());
  const double var = ss / n;
  const double se = std::sqrt((s4 / n - var * var) / n);
  EXPECT_NEAR(var, 1.0, 3.0 * se);
}

TEST(AnalogLink, PadsOddFeatureCountAndRejectsDegenerateLinks) {
  AnalogFrame frame{{1.0}, {0.0}, {2.0}};
  const auto symbols = map_analog_symbols(frame);
  ASSERT_EQ(symbols.size(), 1u);
  EXPECT_DOUBLE_EQ(symbols[0].real(), std::sqrt(2.0));
  EXPECT_EQ(symbols[0].imag(), 0.0);
  EXPECT_THROW(analog_roundtrip({{1.0, 1.0}, {0.0, 0.0}, {1.0, 0.0}}, {{{1.0, 0.0}}, 1.0}, 1),
               DegenerateLinkError);
  EXPECT_THROW(analog_roundtrip({{1.0, 1.0}, {0.0, 0.0}, {1.0, 1.0}}, {{{0.0, 0.0}}, 1.0}, 1),
               DegenerateLinkError);
}

TEST(AwgnSfChannel, IdentityErasureAndVariance) {
  const std::vector<double> z{1.0, -2.0, 3.0};
  const std::vector<NoiseVar> zero(3, NoiseVar::of(0.0));
  const auto same = awgn_sf_channel(z, zero, 1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(*same[i], z[i]);
  const std::vector<NoiseVar> mixed{NoiseVar::of(0.0), NoiseVar::inactive(), NoiseVar::of(0.0)};
  EXPECT_FALSE(awgn_sf_channel(z, mixed, 1)[1].has_value());

  const std::size_t n = 1000000;
  const std::vector<double> zeros(n, 0.0);
  const std::vector<NoiseVar> unit(n, NoiseVar::of(1.0));
  const auto out = awgn_sf_channel(zeros, unit, 33);
  double ss = 0.0;
  for (const auto& x : out) ss += *x * *x;
  // Var of a chi-square(1) sample mean is 2/n.
  EXPECT_NEAR(ss / n, 1.0, 3.0 * std::sqrt(2.0 / n));
}

TEST(RelaxedBsc, LimitsAndSymmetry) {
  EXPECT_NEAR(relaxed_bsc_error(1e-12, 0.5, 1.0), 1.0, 1e-9);
  EXPECT_EQ(relaxed_bsc_error(0.5, 0.5, 1.0), 0.0);
  EXPECT_EQ(soft_bit(1, 0.0), 0.5);
  for (double u : {0.1, 0.3, 0.77}) {
    const double a = relaxed_bsc_error(0.25, u, 0.7), b = relaxed_bsc_error(0.25, 1.0 - u, 0.7);
    const double base = std::log(0.25 / 0.75) / 0.7, shift = std::log(u / (1 - u)) / 0.7;
    EXPECT_NEAR(a, -std::tanh(base + shift), 1e-15);
    EXPECT_NEAR(b, -std::tanh(base - shift), 1e-15);
  }
  BitFrame frame{{0, 1, 1}, {0.0, 0.0, 0.0}, 0.5};
  EXPECT_EQ(relaxed_bsc(frame, 1), (std::vector<double>{0.0, 1.0, 1.0}));
  EXPECT_THROW(relaxed_bsc({{1}, {0.1}, 0.0}, 1), ParameterError);
}

TEST(RelaxedBsc, HardLimitFlipRate) {
  const std::size_t n = 1000000;
  for (double tau : {1e-2, 1e-3}) {
    BitFrame frame{std::vector<std::uint8_t>(n, 1), std::vector<double>(n, 0.2), tau};
    const auto soft = relaxed_bsc(frame, 34);
    std::size_t flips = 0;
    for (double b : soft) flips += b < 0.5;
    EXPECT_NEAR(static_cast<double>(flips) / n, 0.2, 3.0 * binomial_se(0.2, n));
  }
}

TEST(RelaxedBsc, DerivativeShrinksWithTemperature) {
  EXPECT_GT(std::abs(relaxed_bsc_error_dmu(0.25, 0.6, 0.5)),
            std::abs(relaxed_bsc_error_dmu(0.25, 0.6, 50.0)));
}

TEST(HardBsc, FlipRates) {
  const std::vector<std::uint8_t> bits{1, 0, 1};
  EXPECT_EQ(hard_bsc(bits, std::vector<double>{0, 0, 0}, 1), bits);
  const std::size_t frames = 500000;
  std::vector<std::uint8_t> in(2 * frames, 0);
  std::vector<double> mu(2 * frames);
  for (std::size_t i = 0; i < frames; ++i) {
    mu[2 * i] = 0.1;
    mu[2 * i + 1] = 0.3;
  }
  const auto out = hard_bsc(in, mu, 35);
  double f0 = 0, f1 = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    f0 += out[2 * i];
    f1 += out[2 * i + 1];
  }
  EXPECT_NEAR(f0 / frames, 0.1, 3.0 * binomial_se(0.1, frames));
  EXPECT_NEAR(f1 / frames, 0.3, 3.0 * binomial_se(0.3, frames));

  const std::size_t n = 1000000;
  std::vector<std::uint8_t> ones(n, 1);
  const auto coin = hard_bsc(ones, std::vector<double>(n, 0.5), 36);
  double agree = 0;
  for (auto b : coin) agree += b;
  EXPECT_NEAR(agree / n, 0.5, 3.0 * binomial_se(0.5, n));
  EXPECT_THROW(hard_bsc(bits, std::vector<double>{0.6, 0, 0}, 1), ParameterError);
}

TEST(Quantizer, LevelsAndRoundTrip) {
  EXPECT_EQ(quantize8(std::vector<double>{0.0}), std::vector<std::uint8_t>(8, 0));
  EXPECT_EQ(quantize8(std::vector<double>{1.0}), std::vector<std::uint8_t>(8, 1));
  const auto half = quantize8(std::vector<double>{0.5});
  EXPECT_EQ(half, (std::vector<std::uint8_t>{1, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(dequantize8(half)[0], 128.0 / 255.0);
  EXPECT_EQ(quantize8(std::vector<double>{-3.0}), quantize8(std::vector<double>{0.0}));
  EXPECT_EQ(quantize8(std::vector<double>{7.0}), quantize8(std::vector<double>{1.0}));
  for (int i = 0; i <= 10000; ++i) {
    const std::vector<double> z{i / 10000.0};
    EXPECT_LE(std::abs(dequantize8(quantize8(z))[0] - z[0]), 1.0 / 510.0 + 1e-15);
  }
  for (unsigned level = 0; level < 256; ++level) {
    std::vector<std::uint8_t> bits;
    for (int b = 7; b >= 0; --b) bits.push_back((level >> b) & 1u);
    EXPECT_EQ(quantize8(dequantize8(bits)), bits);
  }
  EXPECT_THROW(dequantize8(std::vector<std::uint8_t>(7, 0)), ParameterError);
}

TEST(QamBer, ConstantsAndHandValues) {
  const auto k2 = qam_ber_constants(2);
  EXPECT_NEAR(k2.a, 0.5, 1e-15);
  EXPECT_NEAR(k2.b, 0.0, 1e-15);
  EXPECT_NEAR(k2.c, 0.5, 1e-15);
  const auto k4 = qam_ber_constants(4);
  EXPECT_NEAR(k4.a, 0.375, 1e-15);
  EXPECT_NEAR(k4.b, 0.25, 1e-15);
  EXPECT_NEAR(k4.c, 0.1, 1e-15);
  EXPECT_NEAR(ber_qam(2.0, 2, 1.0), 0.5 * std::erfc(1.0), 1e-15);
  EXPECT_NEAR(ber_qam(2.0, 2, 1.0), 0.07865, 1e-5);
  EXPECT_NEAR(ber_qam(10.0, 4, 1.0), 0.375 * std::erfc(1.0) + 0.25 * std::erfc(3.0), 1e-15);
  EXPECT_NEAR(ber_qam(10.0, 4, 1.0), 0.05899, 1e-5);
  EXPECT_DOUBLE_EQ(ber_qam(0.0, 2, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(ber_qam(0.0, 4, 1.0), 0.625);
  EXPECT_EQ(ber_qam(std::numeric_limits<double>::infinity(), 4, 1.0), 0.0);
  EXPECT_THROW(qam_ber_constants(3), ParameterError);
  EXPECT_THROW(qam_ber_constants(0), ParameterError);
}

TEST(QamBer, StrictlyDecreasingInPower) {
  for (int m : {2, 4, 6, 8}) {
    double prev = ber_qam(0.0, m, 1.0);
    for (double p = 0.01; p < 200.0; p *= 1.1) {
      const double b = ber_qam(p, m, 1.0);
      EXPECT_LT(b, prev);
      prev = b;
    }
  }
}

TEST(QamBer, MonteCarloAgreement) {
  const double n = 1e6;
  const double qpsk = monte_carlo_ber(2.0, 2, 1.0, 1000000, 37);
  EXPECT_NEAR(qpsk, ber_qam(2.0, 2, 1.0), 3.0 * binomial_se(ber_qam(2.0, 2, 1.0), n));
  EXPECT_NEAR(monte_carlo_ber(0.0, 2, 1.0, 1000000, 38), 0.5, 3.0 * binomial_se(0.5, n));
  const double qam16 = monte_carlo_ber(10.0, 4, 1.0, 1000000, 39);
  EXPECT_NEAR(qam16, 0.05899, 0.1 * 0.05899);
  EXPECT_THROW(monte_carlo_ber(1.0, 6, 1.0, 1000000, 1), ParameterError);
  EXPECT_THROW(monte_carlo_ber(1.0, 2, 1.0, 1000, 1), ParameterError);
}
