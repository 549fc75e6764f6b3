#pragma once

// Trainable rate-share parameterizations for analog (AWGN) and digital (BSC)
// SF channels. Budgets here are in bits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "sfc/errors.hpp"
#include "sfc/gaussian_core.hpp"

namespace sfc {

/// Binary entropy in bits, defined on [0, 0.5].
inline double h2(double u) {
  detail::require(u >= 0.0 && u <= 0.5, "h2 argument must lie in [0, 0.5]");
  if (u == 0.0) return 0.0;
  return -u * std::log2(u) - (1.0 - u) * std::log2(1.0 - u);
}

/// Capacity of a BSC with flip probability u, i.e. 1 - h2(u). Written in
/// terms of the distance to 1/2 so it stays accurate where h2 is flat.
inline double bsc_capacity(double u) {
  detail::require(u >= 0.0 && u <= 0.5, "flip probability must lie in [0, 0.5]");
  if (u == 0.0) return 1.0;
  const double d = 1.0 - 2.0 * u;  // in [0, 1)
  // 1 - h2(u) = ((1-d) log(1-d) + (1+d) log(1+d)) / (2 ln 2)
  const double lo = d == 1.0 ? 0.0 : (1.0 - d) * std::log1p(-d);
  return (lo + (1.0 + d) * std::log1p(d)) / (2.0 * std::numbers::ln2);
}

/// Flip probability whose BSC capacity equals `rate` (bits), by bisection.
inline double flip_prob_for_rate(double rate) {
  detail::require(rate >= 0.0 && rate <= 1.0, "per-bit rate must lie in [0, 1]");
  if (rate == 0.0) return 0.5;
  if (rate == 1.0) return 0.0;
  double lo = 0.0, hi = 0.5;  // capacity decreases on [0, 0.5]
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (bsc_capacity(mid) > rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Inverse of h2 on [0, 0.5].
inline double h2_inverse_exact(double y) {
  detail::require(y >= 0.0 && y <= 1.0, "h2 inverse argument must lie in [0, 1]");
  return flip_prob_for_rate(1.0 - y);
}

/// Series-reverted Taylor approximation of h2^{-1}(1 - share * c_bits).
inline double flip_prob_approx(double share, double c_bits) {
  detail::require(c_bits > 0.0, "budget must be positive");
  const double x = share * c_bits;
  detail::require(x >= 0.0, "share must be non-negative");
  detail::require(x <= 1.0 + 1e-12, "per-bit rate share * C exceeds 1");
  constexpr double ln2 = std::numbers::ln2;
  constexpr double a = ln2 / 2.0;
  constexpr double b = ln2 * ln2 / 6.0;
  constexpr double c = a - b - 0.25;
  const double xc = std::min(x, 1.0);
  const double radicand = std::max(0.0, a * xc - b * xc * xc - c * xc * xc * xc);
  return std::clamp(0.5 - std::sqrt(radicand), 0.0, 0.5);
}

// --- analog -------------------------------------------------------------

/// rho_m = v_m^2 / sum v_i^2.
inline std::vector<double> analog_shares(std::span<const double> raw) {
  detail::require(!raw.empty(), "raw rate vector must be non-empty");
  double sum = 0.0;
  for (double v : raw) sum += v * v;
  if (!(sum > 0.0)) throw DegenerateParameterError("all raw rate parameters are zero");
  std::vector<double> shares(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) shares[i] = raw[i] * raw[i] / sum;
  return shares;
}

/// feature_var / (2^{2 share c} - 1); inactive when share * c == 0.
inline NoiseVar analog_noise_var(double share, double c_bits, double feature_var) {
  detail::require(share >= 0.0 && c_bits >= 0.0, "share and budget must be non-negative");
  detail::require(feature_var > 0.0, "feature variance must be positive");
  const double rate = share * c_bits;
  if (rate == 0.0) return NoiseVar::inactive();
  return NoiseVar::of(feature_var / std::expm1(2.0 * rate * std::numbers::ln2));
}

/// Unbiased per-feature variances over samples (rows = samples), floored at
/// 1e-12.
inline std::vector<double> empirical_feature_variances(
    std::span<const std::vector<double>> samples) {
  detail::require(samples.size() >= 2, "need at least two samples");
  const std::size_t m = samples.front().size();
  std::vector<double> mean(m, 0.0), var(m, 0.0);
  for (const auto& s : samples) {
    detail::require(s.size() == m, "ragged sample matrix");
    for (std::size_t i = 0; i < m; ++i) mean[i] += s[i];
  }
  const double count = static_cast<double>(samples.size());
  for (auto& x : mean) x /= count;
  for (const auto& s : samples)
    for (std::size_t i = 0; i < m; ++i) var[i] += (s[i] - mean[i]) * (s[i] - mean[i]);
  for (auto& x : var) x = std::max(x / (count - 1.0), 1e-12);
  return var;
}

struct AnalogAllocation {
  std::vector<double> raw;
  std::vector<double> shares;
  double c_bits = 0.0;
  std::vector<double> feature_vars;
  std::vector<NoiseVar> noise_vars;
};

inline AnalogAllocation make_analog_allocation(std::vector<double> raw, double c_bits,
                                               std::vector<double> feature_vars) {
  detail::require(raw.size() == feature_vars.size(),
                  "raw parameters and feature variances differ in length");
  AnalogAllocation out;
  out.shares = analog_shares(raw);
  out.raw = std::move(raw);
  out.c_bits = c_bits;
  out.feature_vars = std::move(feature_vars);
  out.noise_vars.reserve(out.shares.size());
  for (std::size_t m = 0; m < out.shares.size(); ++m)
    out.noise_vars.push_back(analog_noise_var(out.shares[m], c_bits, out.feature_vars[m]));
  return out;
}

/// Sum over SFs of 0.5 log2(1 + var_z / var_w); inactive SFs add nothing.
inline double analog_mutual_information_bits(std::span<const double> feature_vars,
                                             std::span<const NoiseVar> noise_vars) {
  detail::require(feature_vars.size() == noise_vars.size(), "length mismatch");
  double total = 0.0;
  for (std::size_t m = 0; m < feature_vars.size(); ++m)
    if (noise_vars[m].active())
      total += 0.5 * std::log2(1.0 + feature_vars[m] * noise_vars[m].precision());
  return total;
}

// --- digital ------------------------------------------------------------

enum class FlipInverse { kExact, kTaylor };

struct DigitalShares {
  double alpha = 0.0;
  std::vector<double> shares;
};

/// rho_n = (v_n^2 + alpha) / sum (v_i^2 + alpha), with alpha lifting small
/// entries just enough that every share stays at or below 1/c_bits.
inline DigitalShares digital_shares(std::span<const double> raw, double c_bits) {
  const std::size_t bits = raw.size();
  detail::require(bits >= 1, "raw rate vector must be non-empty");
  detail::require(c_bits > 0.0 && std::isfinite(c_bits), "budget must be positive");
  const double b = static_cast<double>(bits);
  if (c_bits > b)
    throw InfeasibleError("budget exceeds one bit of rate per transmitted bit");

  DigitalShares out;
  if (c_bits == b) {
    out.shares.assign(bits, 1.0 / b);
    return out;
  }
  double sum = 0.0, max_sq = 0.0;
  for (double v : raw) {
    sum += v * v;
    max_sq = std::max(max_sq, v * v);
  }
  if (!(sum > 0.0)) throw DegenerateParameterError("all raw rate parameters are zero");
  out.alpha = std::max((c_bits * max_sq - sum) / (b - c_bits), 0.0);
  out.shares.resize(bits);
  double total = 0.0;
  for (std::size_t n = 0; n < bits; ++n) {
    out.shares[n] = raw[n] * raw[n] + out.alpha;
    total += out.shares[n];
  }
  const double cap = 1.0 / c_bits;
  double renorm = 0.0;
  for (auto& s : out.shares) {
    s = std::min(s / total, cap);
    renorm += s;
  }
  for (auto& s : out.shares) s /= renorm;
  return out;
}

struct DigitalAllocation {
  std::vector<double> raw;
  double alpha = 0.0;
  std::vector<double> shares;
  double c_bits = 0.0;
  std::vector<double> flip_probs;
};

inline DigitalAllocation make_digital_allocation(std::vector<double> raw, double c_bits,
                                                 FlipInverse inverse = FlipInverse::kExact) {
  DigitalAllocation out;
  auto ds = digital_shares(raw, c_bits);
  out.raw = std::move(raw);
  out.alpha = ds.alpha;
  out.shares = std::move(ds.shares);
  out.c_bits = c_bits;
  out.flip_probs.reserve(out.shares.size());
  for (double s : out.shares) {
    const double rate = std::clamp(s * c_bits, 0.0, 1.0);
    out.flip_probs.push_back(inverse == FlipInverse::kExact
                                 ? flip_prob_for_rate(rate)
                                 : flip_prob_approx(rate / c_bits, c_bits));
  }
  return out;
}

/// Sum over bits of 1 - h2(mu_n).
inline double digital_mutual_information_bits(std::span<const double> flip_probs) {
  double total = 0.0;
  for (double mu : flip_probs) total += bsc_capacity(mu);
  return total;
}

}  // namespace sfc
