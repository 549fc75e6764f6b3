#pragma once

// Simulators for the SF channel and the physical link underneath it.
// Every stochastic routine takes an explicit seed and draws from its own
// counter-based stream, so results are reproducible and thread-safe.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfc/errors.hpp"
#include "sfc/gaussian_core.hpp"
#include "sfc/random.hpp"

namespace sfc {

namespace streams {
// Stream ids used by the simulators; distinct operations never share one.
inline constexpr std::uint64_t kAnalogLink = 1;
inline constexpr std::uint64_t kAwgnSf = 2;
inline constexpr std::uint64_t kRelaxedBsc = 3;
inline constexpr std::uint64_t kHardBsc = 4;
inline constexpr std::uint64_t kQamBits = 5;
inline constexpr std::uint64_t kQamNoise = 6;
}  // namespace streams

struct FadingRealization {
  std::vector<std::complex<double>> gains;  // h_t
  double noise_var = 1.0;                   // sigma^2 of the complex AWGN
};

struct AnalogFrame {
  std::vector<double> features;  // z_m
  std::vector<double> means;     // mu_m
  std::vector<double> powers;    // p_m
};

/// sqrt(p_m)(z_m - mu_m) paired into complex symbols, I then Q. An odd
/// trailing feature is padded with a zero-power partner.
inline std::vector<std::complex<double>> map_analog_symbols(const AnalogFrame& frame) {
  const std::size_t m = frame.features.size();
  detail::require(frame.means.size() == m && frame.powers.size() == m,
                  "frame fields differ in length");
  std::vector<std::complex<double>> symbols((m + 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    detail::require(frame.powers[i] >= 0.0, "powers must be non-negative");
    const double scaled = std::sqrt(frame.powers[i]) * (frame.features[i] - frame.means[i]);
    if (i % 2 == 0)
      symbols[i / 2].real(scaled);
    else
      symbols[i / 2].imag(scaled);
  }
  return symbols;
}

/// Zero-forcing equalization h* y / |h|^2.
inline std::complex<double> equalize(std::complex<double> y, std::complex<double> h) {
  return std::conj(h) * y / std::norm(h);
}

/// Maps, transmits over flat fading with complex AWGN, equalizes, de-scales
/// and restores the mean. Feature m rides on symbol m/2 (zero-based).
inline std::vector<double> analog_roundtrip(const AnalogFrame& frame,
                                            const FadingRealization& fading,
                                            std::uint64_t seed) {
  const std::size_t m = frame.features.size();
  const auto symbols = map_analog_symbols(frame);
  detail::require(fading.gains.size() >= symbols.size(), "not enough channel gains");
  detail::require(fading.noise_var >= 0.0, "noise variance must be non-negative");
  for (std::size_t i = 0; i < m; ++i)
    if (!(frame.powers[i] > 0.0))
      throw DegenerateLinkError("zero transmit power on feature " + std::to_string(i));

  CounterRng rng(seed, streams::kAnalogLink);
  std::normal_distribution<double> normal(0.0, std::sqrt(fading.noise_var / 2.0));
  std::vector<double> estimate(m);
  for (std::size_t t = 0; t < symbols.size(); ++t) {
    const auto h = fading.gains[t];
    if (std::norm(h) == 0.0)
      throw DegenerateLinkError("zero channel gain at use " + std::to_string(t));
    std::complex<double> noise{0.0, 0.0};
    if (fading.noise_var > 0.0) noise = {normal(rng), normal(rng)};
    const auto eq = equalize(h * symbols[t] + noise, h);
    const std::size_t re = 2 * t, im = 2 * t + 1;
    estimate[re] = eq.real() / std::sqrt(frame.powers[re]) + frame.means[re];
    if (im < m) estimate[im] = eq.imag() / std::sqrt(frame.powers[im]) + frame.means[im];
  }
  return estimate;
}

/// Variance of z_hat - z for feature m after analog_roundtrip.
inline double analog_effective_noise_var(double power, double gain_sq, double noise_var) {
  detail::require(power > 0.0 && gain_sq > 0.0, "power and gain must be positive");
  return noise_var / (2.0 * gain_sq * power);
}

/// z_hat = z + sigma_w nu. Inactive channels erase the feature (nullopt);
/// the decoder then substitutes the feature mean.
inline std::vector<std::optional<double>> awgn_sf_channel(
    std::span<const double> features, std::span<const NoiseVar> noise_vars,
    std::uint64_t seed) {
  detail::require(features.size() == noise_vars.size(), "length mismatch");
  CounterRng rng(seed, streams::kAwgnSf);
  std::normal_distribution<double> normal;
  std::vector<std::optional<double>> out(features.size());
  for (std::size_t m = 0; m < features.size(); ++m) {
    if (!noise_vars[m].active()) continue;
    const double sd = std::sqrt(noise_vars[m].value());
    out[m] = sd > 0.0 ? features[m] + sd * normal(rng) : features[m];
  }
  return out;
}

// --- binary symmetric channels ------------------------------------------

struct BitFrame {
  std::vector<std::uint8_t> bits;
  std::vector<double> flip_probs;
  double temperature = 1.0;
};

/// Tempered log-odds error variable in [-1, 1]; +1 means "no flip".
inline double relaxed_bsc_error(double mu, double u, double temperature) {
  detail::require(temperature > 0.0, "temperature must be positive");
  detail::require(mu > 0.0 && mu <= 0.5, "flip probability must lie in (0, 0.5]");
  detail::require(u > 0.0 && u < 1.0, "uniform draw must lie in (0, 1)");
  const double logit = std::log(mu / (1.0 - mu)) + std::log(u / (1.0 - u));
  return -std::tanh(logit / temperature);
}

/// d relaxed_bsc_error / d mu at fixed u.
inline double relaxed_bsc_error_dmu(double mu, double u, double temperature) {
  detail::require(temperature > 0.0, "temperature must be positive");
  const double arg = (std::log(mu / (1.0 - mu)) + std::log(u / (1.0 - u))) / temperature;
  const double sech = 1.0 / std::cosh(arg);
  return -sech * sech / (temperature * mu * (1.0 - mu));
}

inline double soft_bit(std::uint8_t bit, double error) {
  return ((2.0 * bit - 1.0) * error + 1.0) / 2.0;
}

/// Differentiable surrogate of a BSC. Bits with mu == 0 pass unchanged.
inline std::vector<double> relaxed_bsc(const BitFrame& frame, std::uint64_t seed) {
  detail::require(frame.temperature > 0.0, "temperature must be positive");
  detail::require(frame.bits.size() == frame.flip_probs.size(), "length mismatch");
  CounterRng rng(seed, streams::kRelaxedBsc);
  std::vector<double> out(frame.bits.size());
  for (std::size_t n = 0; n < frame.bits.size(); ++n) {
    const double u = rng.uniform();
    const double mu = frame.flip_probs[n];
    out[n] = mu == 0.0 ? static_cast<double>(frame.bits[n])
                       : soft_bit(frame.bits[n], relaxed_bsc_error(mu, u, frame.temperature));
  }
  return out;
}

inline std::vector<std::uint8_t> hard_bsc(std::span<const std::uint8_t> bits,
                                          std::span<const double> flip_probs,
                                          std::uint64_t seed) {
  detail::require(bits.size() == flip_probs.size(), "length mismatch");
  CounterRng rng(seed, streams::kHardBsc);
  std::vector<std::uint8_t> out(bits.begin(), bits.end());
  for (std::size_t n = 0; n < bits.size(); ++n) {
    detail::require(flip_probs[n] >= 0.0 && flip_probs[n] <= 0.5,
                    "flip probability must lie in [0, 0.5]");
    if (rng.uniform() < flip_probs[n]) out[n] ^= 1u;
  }
  return out;
}

// --- 8-bit quantizer ----------------------------------------------------

/// round(z * 255), natural binary, most significant bit first. Inputs are
/// clamped to [0, 1].
inline std::vector<std::uint8_t> quantize8(std::span<const double> features) {
  std::vector<std::uint8_t> bits;
  bits.reserve(features.size() * 8);
  for (double z : features) {
    const double clamped = std::isnan(z) ? 0.0 : std::clamp(z, 0.0, 1.0);
    const auto level = static_cast<unsigned>(std::lround(clamped * 255.0));
    for (int b = 7; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((level >> b) & 1u));
  }
  return bits;
}

inline std::vector<double> dequantize8(std::span<const std::uint8_t> bits) {
  detail::require(bits.size() % 8 == 0, "bit count must be a multiple of 8");
  std::vector<double> out(bits.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    unsigned level = 0;
    for (std::size_t b = 0; b < 8; ++b) level = (level << 1) | (bits[8 * i + b] & 1u);
    out[i] = level / 255.0;
  }
  return out;
}

// --- QAM bit error rate -------------------------------------------------

struct QamBerConstants {
  double a = 0.0, b = 0.0, c = 0.0;
};

/// Constants of the square M-QAM approximation for m bits per symbol.
inline QamBerConstants qam_ber_constants(int m) {
  if (m < 2 || m % 2 != 0) throw ParameterError("modulation level must be a positive even number");
  const double root = std::sqrt(std::ldexp(1.0, m));  // sqrt(2^m)
  const double denom = root * std::log2(root);
  return {(root - 1.0) / denom, (root - 2.0) / denom,
          3.0 / (2.0 * (std::ldexp(1.0, m) - 1.0))};
}

/// a erfc(sqrt(c p g)) + b erfc(3 sqrt(c p g)).
inline double ber_qam(double power, int m, double gain_ratio) {
  detail::require(power >= 0.0, "power must be non-negative");
  detail::require(gain_ratio >= 0.0, "gain ratio must be non-negative");
  const auto k = qam_ber_constants(m);
  const double snr = power * gain_ratio;
  if (std::isinf(snr)) return 0.0;
  const double x = std::sqrt(k.c * snr);
  return k.a * std::erfc(x) + k.b * std::erfc(3.0 * x);
}

/// Empirical BER of Gray-mapped QPSK (m = 2) or 16-QAM (m = 4) with symbol
/// energy `power` over complex AWGN of variance 1 / gain_ratio.
inline double monte_carlo_ber(double power, int m, double gain_ratio, std::size_t n_bits,
                              std::uint64_t seed) {
  if (m != 2 && m != 4) throw ParameterError("Monte Carlo BER supports m = 2 or 4 only");
  detail::require(n_bits >= 100000, "Monte Carlo BER needs at least 1e5 bits");
  detail::require(power >= 0.0 && gain_ratio > 0.0, "power >= 0 and gain ratio > 0 required");

  CounterRng bit_rng(seed, streams::kQamBits);
  CounterRng noise_rng(seed, streams::kQamNoise);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5 / gain_ratio));
  const std::size_t per_dim = static_cast<std::size_t>(m / 2);
  const std::size_t symbols = (n_bits + m - 1) / static_cast<std::size_t>(m);

  // Unit spacing d: QPSK levels +-d with 2 d^2 = p; 16-QAM levels +-d, +-3d
  // with 10 d^2 = p.
  const double d = std::sqrt(power / (m == 2 ? 2.0 : 10.0));
  std::size_t errors = 0, counted = 0;
  for (std::size_t s = 0; s < symbols; ++s) {
    for (int dim = 0; dim < 2; ++dim) {
      const std::uint64_t word = bit_rng();
      const unsigned b0 = word & 1u, b1 = (word >> 1) & 1u;
      double level;
      if (per_dim == 1) {
        level = b0 ? d : -d;
      } else {
        // Gray 4-PAM: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
        const double mag = b1 ? 1.0 : 3.0;
        level = (b0 ? 1.0 : -1.0) * mag * d;
      }
      const double r = level + normal(noise_rng);
      if (per_dim == 1) {
        errors += static_cast<unsigned>(r > 0.0) != b0;
        counted += 1;
      } else {
        const unsigned r0 = r > 0.0;
        const unsigned r1 = std::abs(r) < 2.0 * d ? 1u : 0u;
        errors += (r0 != b0) + (r1 != b1);
        counted += 2;
      }
    }
  }
  return static_cast<double>(errors) / static_cast<double>(counted);
}

}  // namespace sfc
