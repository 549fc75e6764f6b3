#pragma once

// Closed-form semantic-feature channel for a diagonal Gaussian source with a
// linear encoder/decoder, plus the rate-distortion and equal-noise baselines.
// Everything in this header works in nats.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfc/errors.hpp"
#include "sfc/random.hpp"

namespace sfc {

/// Noise variance of one SF channel. An inactive channel passes nothing and
/// carries no number at all, so it cannot leak into arithmetic by accident.
class NoiseVar {
 public:
  static NoiseVar inactive() noexcept { return NoiseVar(); }
  static NoiseVar of(double variance) {
    detail::require(variance >= 0.0 && std::isfinite(variance),
                    "noise variance must be finite and non-negative");
    NoiseVar v;
    v.value_ = variance;
    v.active_ = true;
    return v;
  }

  bool active() const noexcept { return active_; }
  double value() const {
    if (!active_) throw ParameterError("inactive noise variance has no value");
    return value_;
  }
  /// 1/variance, zero for an inactive channel.
  double precision() const noexcept { return active_ ? 1.0 / value_ : 0.0; }
  /// Variance as a double with +inf for an inactive channel (I/O only).
  double as_double() const noexcept {
    return active_ ? value_ : std::numeric_limits<double>::infinity();
  }

  friend bool operator==(const NoiseVar&, const NoiseVar&) = default;

 private:
  NoiseVar() = default;
  double value_ = 0.0;
  bool active_ = false;
};

/// Per-source variances of a diagonal Gaussian source, non-increasing.
class SourceSpectrum {
 public:
  explicit SourceSpectrum(std::vector<double> variances)
      : variances_(std::move(variances)) {
    detail::require(!variances_.empty(), "spectrum must be non-empty");
    for (std::size_t i = 0; i < variances_.size(); ++i) {
      detail::require(variances_[i] > 0.0 && std::isfinite(variances_[i]),
                      "source variances must be positive and finite");
      detail::require(i == 0 || variances_[i] <= variances_[i - 1],
                      "source variances must be sorted non-increasing");
    }
  }

  /// Sorts the input into non-increasing order first.
  static SourceSpectrum sorted(std::vector<double> variances) {
    std::sort(variances.begin(), variances.end(), std::greater<>());
    return SourceSpectrum(std::move(variances));
  }

  std::size_t n() const noexcept { return variances_.size(); }
  double operator[](std::size_t i) const { return variances_[i]; }
  std::span<const double> variances() const noexcept { return variances_; }
  double total() const noexcept {
    return std::accumulate(variances_.begin(), variances_.end(), 0.0);
  }

 private:
  std::vector<double> variances_;
};

/// exp(Z) with Z ~ Normal(0, log_variance), sorted descending.
inline SourceSpectrum lognormal_spectrum(std::size_t n, double log_variance,
                                         std::uint64_t seed) {
  detail::require(n >= 1, "spectrum size must be positive");
  detail::require(log_variance >= 0.0, "log-variance must be non-negative");
  CounterRng rng(seed, /*stream=*/0x5eed);
  std::normal_distribution<double> normal(0.0, std::sqrt(log_variance));
  std::vector<double> v(n);
  for (auto& x : v) x = std::exp(normal(rng));
  return SourceSpectrum::sorted(std::move(v));
}

struct GaussianSolution {
  std::size_t m = 0;
  double c_nats = 0.0;
  std::size_t active_count = 0;
  double lambda = 0.0;
  std::vector<NoiseVar> noise_vars;   // length m
  std::vector<double> decoder_gains;  // length m
  double mse = 0.0;
};

struct RdPoint {
  double c_nats = 0.0;
  double distortion = 0.0;
  double water_level = 0.0;
};

struct EnvcSolution {
  double noise_var = std::numeric_limits<double>::infinity();
  double mse = 0.0;
};

struct ActiveSetOracleResult {
  std::vector<std::size_t> best_subset;  // zero-based source indices
  double best_mse = 0.0;
};

namespace detail {

constexpr int kMaxBisectionIters = 200;
constexpr double kBisectionResidual = 1e-12;

// Multiplier of the active set {0..a-1}: 2 (prod var)^(1/a) / e^(2c/a).
inline double prefix_lambda(double log_prefix_sum, std::size_t a, double c) {
  const double ad = static_cast<double>(a);
  return 2.0 * std::exp((log_prefix_sum - 2.0 * c) / ad);
}

}  // namespace detail

/// Optimal noise allocation over the first `m` SFs under a mutual
/// information budget of `c_nats`. The active set is always a prefix; its
/// size is the largest a <= m whose multiplier stays strictly below 2*var[a].
inline GaussianSolution solve_optimal_sfc(const SourceSpectrum& spectrum,
                                          std::size_t m, double c_nats) {
  detail::require(m >= 1 && m <= spectrum.n(), "m must satisfy 1 <= m <= N");
  detail::require(c_nats >= 0.0 && std::isfinite(c_nats),
                  "budget must be finite and non-negative");

  std::vector<double> log_prefix(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k)
    log_prefix[k + 1] = log_prefix[k] + std::log(spectrum[k]);

  GaussianSolution sol;
  sol.m = m;
  sol.c_nats = c_nats;
  // With nothing active the multiplier sits at the first threshold.
  sol.lambda = 2.0 * spectrum[0];
  for (std::size_t a = m; a >= 1; --a) {
    const double lambda = detail::prefix_lambda(log_prefix[a], a, c_nats);
    if (lambda < 2.0 * spectrum[a - 1]) {
      sol.active_count = a;
      sol.lambda = lambda;
      break;
    }
  }

  sol.noise_vars.assign(m, NoiseVar::inactive());
  sol.decoder_gains.assign(m, 0.0);
  const double lambda = sol.lambda;
  for (std::size_t k = 0; k < sol.active_count; ++k) {
    const double var = spectrum[k];
    const double noise = lambda * var / (2.0 * var - lambda);
    sol.noise_vars[k] = NoiseVar::of(noise);
    sol.decoder_gains[k] = var / (var + noise);
  }

  // Inactive sources contribute their variance, active ones lambda/2 each.
  double mse = 0.0;
  for (std::size_t n = spectrum.n(); n-- > sol.active_count;) mse += spectrum[n];
  mse += 0.5 * lambda * static_cast<double>(sol.active_count);
  sol.mse = mse;
  return sol;
}

/// Expected squared error of the linear MMSE decoder when SF k carries
/// source k through noise `noise_vars[k]`; sources past the list are dropped.
inline double evaluate_mse(const SourceSpectrum& spectrum,
                           std::span<const NoiseVar> noise_vars) {
  detail::require(noise_vars.size() <= spectrum.n(),
                  "more noise variances than sources");
  double mse = 0.0;
  for (std::size_t n = 0; n < spectrum.n(); ++n) {
    const double var = spectrum[n];
    if (n < noise_vars.size() && noise_vars[n].active()) {
      const double w = noise_vars[n].value();
      detail::require(w > 0.0, "finite noise variance must be positive");
      mse += var * w / (var + w);
    } else {
      mse += var;
    }
  }
  return mse;
}

/// Reverse water-filling: distortion sum of min(theta, var) at rate c_nats.
inline RdPoint rd_bound(const SourceSpectrum& spectrum, double c_nats) {
  detail::require(c_nats >= 0.0 && std::isfinite(c_nats),
                  "budget must be finite and non-negative");
  const auto vars = spectrum.variances();
  auto rate = [&](double log_theta) {
    double r = 0.0;
    for (double v : vars) r += std::max(0.0, 0.5 * (std::log(v) - log_theta));
    return r;
  };

  double hi = std::log(spectrum[0]);  // rate(hi) == 0
  double log_theta = hi;
  if (c_nats > 0.0) {
    double log_sum = 0.0;
    for (double v : vars) log_sum += std::log(v);
    const double nd = static_cast<double>(vars.size());
    // Below the smallest variance the rate is affine in log theta; one unit
    // further down guarantees rate(lo) > c.
    double lo = std::min((log_sum - 2.0 * c_nats) / nd, std::log(vars.back())) - 1.0;
    for (int it = 0; it < detail::kMaxBisectionIters; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gap = rate(mid) - c_nats;
      log_theta = mid;
      if (std::abs(gap) < detail::kBisectionResidual) break;
      (gap > 0.0 ? lo : hi) = mid;
    }
  }

  RdPoint point;
  point.c_nats = c_nats;
  point.water_level = std::exp(log_theta);
  for (double v : vars) point.distortion += std::min(point.water_level, v);
  return point;
}

/// Equal-noise-variance baseline: top-m sources, one shared noise variance
/// meeting the budget, MMSE decoding.
inline EnvcSolution envc_solution(const SourceSpectrum& spectrum, std::size_t m,
                                  double c_nats) {
  detail::require(m >= 1 && m <= spectrum.n(), "m must satisfy 1 <= m <= N");
  detail::require(c_nats >= 0.0 && std::isfinite(c_nats),
                  "budget must be finite and non-negative");
  EnvcSolution out;
  if (c_nats == 0.0) {
    out.mse = spectrum.total();
    return out;
  }

  const auto top = spectrum.variances().first(m);
  auto rate = [&](double log_noise) {
    const double inv = std::exp(-log_noise);
    double r = 0.0;
    for (double v : top) r += 0.5 * std::log1p(v * inv);
    return r;
  };
  const double md = static_cast<double>(m);
  // rate <= sum(v)/(2 w) and rate >= (m/2) log(v_min / w) give a bracket.
  double hi = std::log(md * top.front() / (2.0 * c_nats)) + 1.0;
  double lo = std::log(top.back()) - 2.0 * c_nats / md - 1.0;
  double log_noise = 0.5 * (lo + hi);
  for (int it = 0; it < detail::kMaxBisectionIters; ++it) {
    log_noise = 0.5 * (lo + hi);
    const double gap = rate(log_noise) - c_nats;
    if (std::abs(gap) < detail::kBisectionResidual) break;
    (gap > 0.0 ? lo : hi) = log_noise;
  }

  out.noise_var = std::exp(log_noise);
  std::vector<NoiseVar> noise(m, NoiseVar::of(out.noise_var));
  out.mse = evaluate_mse(spectrum, noise);
  return out;
}

inline double envc_mse(const SourceSpectrum& spectrum, std::size_t m,
                       double c_nats) {
  return envc_solution(spectrum, m, c_nats).mse;
}

/// Exhaustive search over every active subset of size <= m. Exponential in
/// N; the independent check for prefix optimality of solve_optimal_sfc.
inline ActiveSetOracleResult brute_force_active_oracle(
    const SourceSpectrum& spectrum, std::size_t m, double c_nats) {
  constexpr std::size_t kMaxSources = 12;
  if (spectrum.n() > kMaxSources)
    throw CapacityError("active-set oracle supports at most " +
                        std::to_string(kMaxSources) + " sources");
  detail::require(m >= 1 && m <= spectrum.n(), "m must satisfy 1 <= m <= N");
  detail::require(c_nats >= 0.0, "budget must be non-negative");

  const std::size_t n = spectrum.n();
  const double total = spectrum.total();

  ActiveSetOracleResult best;
  best.best_mse = total;  // empty set
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::size_t> subset;
    double log_sum = 0.0, var_sum = 0.0;
    double min_var = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (!(mask & (1u << k))) continue;
      subset.push_back(k);
      log_sum += std::log(spectrum[k]);
      var_sum += spectrum[k];
      min_var = std::min(min_var, spectrum[k]);
    }
    if (subset.size() > m) continue;
    const double lambda = detail::prefix_lambda(log_sum, subset.size(), c_nats);
    if (lambda >= 2.0 * min_var) continue;
    const double mse =
        total - var_sum + 0.5 * lambda * static_cast<double>(subset.size());
    const bool better = mse < best.best_mse ||
                        (mse == best.best_mse && subset < best.best_subset);
    if (better) {
      best.best_mse = mse;
      best.best_subset = std::move(subset);
    }
  }
  return best;
}

}  // namespace sfc
