#pragma once

// Joint training of a linear encoder and an analog rate allocation on a
// diagonal Gaussian source, plus gradient checks for the relaxed BSC and
// the straight-through quantizer.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfc/channel_models.hpp"
#include "sfc/errors.hpp"
#include "sfc/gaussian_core.hpp"
#include "sfc/random.hpp"

namespace sfc {

/// Logarithm base the rate budget is expressed in.
enum class LogBase { kNats, kBits };

inline double log_base_factor(LogBase base) {
  return base == LogBase::kNats ? 1.0 : std::numbers::ln2;
}

struct LinearTrainState {
  Eigen::MatrixXd encoder;    // M x N, orthonormal rows
  Eigen::VectorXd raw_rates;  // v, length M
  double budget = 0.0;        // in `base` units
  LogBase base = LogBase::kNats;
  std::vector<double> spectrum;  // source variances, non-increasing
  double step_size = 0.0;
  std::size_t iteration = 0;
};

struct AnalogObjective {
  double mse = 0.0;
  Eigen::MatrixXd grad_encoder;
  Eigen::VectorXd grad_raw;
};

/// Gram-Schmidt on the rows, two passes.
inline Eigen::MatrixXd orthonormalize_rows(Eigen::MatrixXd a) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < i; ++j) a.row(i) -= a.row(i).dot(a.row(j)) * a.row(j);
      const double norm = a.row(i).norm();
      if (!(norm > 0.0)) throw ParameterError("encoder rows are linearly dependent");
      a.row(i) /= norm;
    }
  }
  return a;
}

inline double orthonormality_residual(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd gram = a * a.transpose();
  return (gram - Eigen::MatrixXd::Identity(a.rows(), a.rows())).cwiseAbs().maxCoeff();
}

/// Per-SF noise precisions implied by the encoder and raw rates:
/// (e^{2 rho c} - 1) / var_z,m in the chosen log base.
inline Eigen::VectorXd sf_noise_precisions(const Eigen::MatrixXd& encoder,
                                           const Eigen::VectorXd& raw, double budget,
                                           LogBase base, std::span<const double> spectrum) {
  const Eigen::Map<const Eigen::VectorXd> sx(spectrum.data(),
                                             static_cast<Eigen::Index>(spectrum.size()));
  const Eigen::VectorXd feature_vars = encoder.cwiseAbs2() * sx;
  const double raw_sq = raw.squaredNorm();
  if (!(raw_sq > 0.0)) throw DegenerateParameterError("all raw rate parameters are zero");
  const double kappa = log_base_factor(base);
  Eigen::VectorXd d(raw.size());
  for (Eigen::Index m = 0; m < raw.size(); ++m) {
    const double share = raw(m) * raw(m) / raw_sq;
    d(m) = std::expm1(2.0 * share * budget * kappa) / feature_vars(m);
  }
  return d;
}

/// Tr((Sigma_x^{-1} + A^T D A)^{-1}) with D the SF noise precisions and the
/// MMSE decoder eliminated; exact gradients in A and v. Feature variances
/// var_z,m = a_m^T Sigma_x a_m, so A enters through D as well.
inline AnalogObjective analog_objective(const Eigen::MatrixXd& encoder,
                                        const Eigen::VectorXd& raw, double budget, LogBase base,
                                        std::span<const double> spectrum) {
  const auto n = static_cast<Eigen::Index>(spectrum.size());
  detail::require(encoder.cols() == n, "encoder width must equal the source dimension");
  detail::require(encoder.rows() == raw.size(), "one raw rate per encoder row");
  detail::require(budget >= 0.0, "budget must be non-negative");
  const Eigen::Map<const Eigen::VectorXd> sx(spectrum.data(), n);
  const Eigen::VectorXd feature_vars = encoder.cwiseAbs2() * sx;
  const Eigen::VectorXd d = sf_noise_precisions(encoder, raw, budget, base, spectrum);

  Eigen::MatrixXd s = encoder.transpose() * d.asDiagonal() * encoder;
  s.diagonal() += sx.cwiseInverse();
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw Error("objective inner matrix is not positive definite");
  const Eigen::MatrixXd s_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd g = s_inv * s_inv;

  AnalogObjective out;
  out.mse = s_inv.trace();

  // df = -Tr(S^-2 dS), dS = dA^T D A + A^T D dA + A^T dD A.
  const Eigen::MatrixXd ag = encoder * g;
  out.grad_encoder = -2.0 * d.asDiagonal() * ag;
  const Eigen::VectorXd df_dd = -(ag.cwiseProduct(encoder)).rowwise().sum();

  // d_m = q_m / var_z,m with var_z,m = sum_n A_mn^2 sx_n.
  for (Eigen::Index m = 0; m < encoder.rows(); ++m) {
    const double coeff = df_dd(m) * (-d(m) / feature_vars(m)) * 2.0;
    out.grad_encoder.row(m) += coeff * encoder.row(m).cwiseProduct(sx.transpose());
  }

  // q_m = expm1(2 rho_m c kappa), rho_m = v_m^2 / |v|^2.
  const double raw_sq = raw.squaredNorm();
  const double kappa = log_base_factor(base);
  Eigen::VectorXd df_drho(raw.size());
  Eigen::VectorXd share(raw.size());
  for (Eigen::Index m = 0; m < raw.size(); ++m) {
    share(m) = raw(m) * raw(m) / raw_sq;
    const double dq = 2.0 * budget * kappa * std::exp(2.0 * share(m) * budget * kappa);
    df_drho(m) = df_dd(m) * dq / feature_vars(m);
  }
  const double mean_term = df_drho.dot(share);
  out.grad_raw = (2.0 / raw_sq) * (df_drho - Eigen::VectorXd::Constant(raw.size(), mean_term))
                                      .cwiseProduct(raw);
  return out;
}

inline AnalogObjective analog_objective(const LinearTrainState& state) {
  return analog_objective(state.encoder, state.raw_rates, state.budget, state.base,
                          state.spectrum);
}

/// Riemannian gradient on {A : A A^T = I}: G - sym(G A^T) A.
inline Eigen::MatrixXd project_to_stiefel_tangent(const Eigen::MatrixXd& a,
                                                  const Eigen::MatrixXd& grad) {
  const Eigen::MatrixXd ga = grad * a.transpose();
  return grad - 0.5 * (ga + ga.transpose()) * a;
}

/// Norm of the gradient tangent to the orthonormal-row manifold and to the
/// share simplex (the v-gradient is already orthogonal to v).
inline double projected_gradient_norm(const LinearTrainState& state,
                                      const AnalogObjective& obj) {
  const Eigen::MatrixXd ga = project_to_stiefel_tangent(state.encoder, obj.grad_encoder);
  return std::sqrt(ga.squaredNorm() + obj.grad_raw.squaredNorm());
}

/// Closed-form optimum expressed as a trainer state: prefix selector encoder
/// and raw rates whose shares reproduce the optimal per-SF rates.
inline LinearTrainState state_from_solution(const SourceSpectrum& spectrum,
                                            const GaussianSolution& sol) {
  detail::require(sol.c_nats > 0.0, "a zero budget has no rate shares");
  LinearTrainState state;
  const auto n = static_cast<Eigen::Index>(spectrum.n());
  const auto m = static_cast<Eigen::Index>(sol.m);
  state.encoder = Eigen::MatrixXd::Zero(m, n);
  state.raw_rates = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    state.encoder(k, k) = 1.0;
    const auto& w = sol.noise_vars[static_cast<std::size_t>(k)];
    if (w.active()) {
      const double rate = 0.5 * std::log1p(spectrum[static_cast<std::size_t>(k)] * w.precision());
      state.raw_rates(k) = std::sqrt(rate / sol.c_nats);
    }
  }
  state.budget = sol.c_nats;
  state.base = LogBase::kNats;
  state.spectrum.assign(spectrum.variances().begin(), spectrum.variances().end());
  return state;
}

struct TrainOptions {
  std::size_t max_iters = 10000;
  std::uint64_t seed = 0;
  double step_size = 0.05;
  LogBase base = LogBase::kNats;
  double gradient_tolerance = 1e-10;
  std::size_t max_rising_steps = 50;
};

struct TraceRow {
  std::size_t iteration = 0;
  double mse = 0.0;
  double grad_norm = 0.0;
  double constraint_residual = 0.0;
};

struct TrainResult {
  LinearTrainState state;
  std::vector<TraceRow> trace;
  double mse = 0.0;
  bool converged = false;
};

inline std::string format_trace(std::span<const TraceRow> trace) {
  std::string out = "iteration,mse,grad_norm,constraint_residual\n";
  char buf[64];
  auto put = [&](double x, char end) {
    out.append(buf, std::to_chars(buf, buf + sizeof buf, x).ptr);
    out += end;
  };
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + ',';
    put(r.mse, ',');
    put(r.grad_norm, ',');
    put(r.constraint_residual, '\n');
  }
  return out;
}

/// Random orthonormal rows from a Gaussian matrix; v = 1.
inline LinearTrainState initial_state(const SourceSpectrum& spectrum, std::size_t m,
                                      double budget, const TrainOptions& opt) {
  detail::require(m >= 1 && m <= spectrum.n(), "m must satisfy 1 <= m <= N");
  detail::require(budget >= 0.0, "budget must be non-negative");
  CounterRng rng(opt.seed, /*stream=*/0x7a1);
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(spectrum.n());
  const auto rows = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd a(rows, n);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = normal(rng);

  LinearTrainState state;
  state.encoder = orthonormalize_rows(std::move(a));
  state.raw_rates = Eigen::VectorXd::Ones(rows);
  state.budget = budget;
  state.base = opt.base;
  state.spectrum.assign(spectrum.variances().begin(), spectrum.variances().end());
  state.step_size = opt.step_size;
  return state;
}

/// Projected gradient descent: Riemannian step on the encoder followed by
/// row re-orthonormalization, plain step on v. A trial step that raises the
/// objective is rejected and the step halved.
inline TrainResult train_linear_analog(const SourceSpectrum& spectrum, std::size_t m,
                                       double budget, const TrainOptions& opt = {}) {
  TrainResult result;
  auto& state = result.state;
  state = initial_state(spectrum, m, budget, opt);
  auto obj = analog_objective(state);
  double grad_norm = projected_gradient_norm(state, obj);
  const double scale = spectrum.total();

  auto record = [&] {
    result.trace.push_back(
        {state.iteration, obj.mse, grad_norm, orthonormality_residual(state.encoder)});
  };
  record();

  std::size_t rising = 0;
  while (state.iteration < opt.max_iters) {
    if (grad_norm <= opt.gradient_tolerance * scale) {
      result.converged = true;
      break;
    }
    const Eigen::MatrixXd tangent = project_to_stiefel_tangent(state.encoder, obj.grad_encoder);
    Eigen::MatrixXd trial_a = orthonormalize_rows(state.encoder - state.step_size * tangent);
    Eigen::VectorXd trial_v = state.raw_rates - state.step_size * obj.grad_raw;
    AnalogObjective trial;
    bool ok = true;
    try {
      trial = analog_objective(trial_a, trial_v, state.budget, state.base, state.spectrum);
    } catch (const Error&) {
      ok = false;
    }
    if (!ok || !(trial.mse <= obj.mse)) {
      state.step_size *= 0.5;
      if (++rising >= opt.max_rising_steps)
        throw TrainingFailure("objective rose on " + std::to_string(rising) +
                                  " consecutive steps",
                              format_trace(result.trace));
      continue;
    }
    rising = 0;
    // Keep |v| near 1; the shares are scale-invariant.
    const double v_norm = trial_v.norm();
    state.encoder = std::move(trial_a);
    state.raw_rates = trial_v / v_norm * std::sqrt(static_cast<double>(m));
    obj = analog_objective(state);
    grad_norm = projected_gradient_norm(state, obj);
    ++state.iteration;
    // Recover from earlier halvings gradually.
    state.step_size = std::min(state.step_size * 1.25, opt.step_size);
    record();
  }
  result.mse = obj.mse;
  return result;
}

/// Monte Carlo estimate of the same objective: x ~ N(0, Sigma_x), z = A x,
/// z_hat from the AWGN SF channel, x_hat = S^{-1} A^T D z_hat (the MMSE
/// decoder in information form, which ignores erased features).
inline double sampled_analog_mse(const LinearTrainState& state, std::size_t samples,
                                 std::uint64_t seed) {
  detail::require(samples >= 1, "need at least one sample");
  const auto n = static_cast<Eigen::Index>(state.spectrum.size());
  const Eigen::Map<const Eigen::VectorXd> sx(state.spectrum.data(), n);
  const Eigen::VectorXd d =
      sf_noise_precisions(state.encoder, state.raw_rates, state.budget, state.base,
                          state.spectrum);
  Eigen::MatrixXd s = state.encoder.transpose() * d.asDiagonal() * state.encoder;
  s.diagonal() += sx.cwiseInverse();
  const Eigen::MatrixXd decoder =
      s.llt().solve(state.encoder.transpose() * d.asDiagonal());  // N x M

  std::vector<NoiseVar> noise;
  for (Eigen::Index m = 0; m < d.size(); ++m)
    noise.push_back(d(m) > 0.0 ? NoiseVar::of(1.0 / d(m)) : NoiseVar::inactive());

  CounterRng rng(seed, /*stream=*/0x5a3);
  std::normal_distribution<double> normal;
  double total = 0.0;
  Eigen::VectorXd x(n);
  for (std::size_t i = 0; i < samples; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) x(j) = std::sqrt(sx(j)) * normal(rng);
    const Eigen::VectorXd z = state.encoder * x;
    const auto received = awgn_sf_channel(std::span<const double>(z.data(), z.size()), noise,
                                          detail::mix64(seed + i));
    Eigen::VectorXd z_hat(z.size());
    for (Eigen::Index m = 0; m < z.size(); ++m)
      z_hat(m) = received[static_cast<std::size_t>(m)].value_or(0.0);
    total += (x - decoder * z_hat).squaredNorm();
  }
  return total / static_cast<double>(samples);
}

// --- gradient checks ----------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
};

namespace detail {

// Relative error with an absolute floor for gradients that vanish in the
// saturated tails.
inline double grad_rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace detail

/// Derivative of the relaxed soft bit (b = 1) with respect to mu at fixed u,
/// against central differences, over `draws` uniform draws.
inline GradCheckResult relaxed_bsc_grad_check(double mu, double tau, std::uint64_t seed,
                                              std::size_t draws = 1000) {
  detail::require(mu > 0.0 && mu < 0.5, "mu must lie in (0, 0.5)");
  detail::require(tau > 0.0, "temperature must be positive");
  constexpr double kStep = 1e-5;
  constexpr double kFloor = 1e-6;
  const double h = std::min(kStep, 0.5 * std::min(mu, 0.5 - mu));
  CounterRng rng(seed, /*stream=*/0xb5c);
  GradCheckResult out;
  for (std::size_t i = 0; i < draws; ++i) {
    const double u = rng.uniform();
    const double analytic = 0.5 * relaxed_bsc_error_dmu(mu, u, tau);
    const double numeric = (soft_bit(1, relaxed_bsc_error(mu + h, u, tau)) -
                            soft_bit(1, relaxed_bsc_error(mu - h, u, tau))) /
                           (2.0 * h);
    const double err = detail::grad_rel_error(analytic, numeric, kFloor);
    out.max_rel_error = std::max(out.max_rel_error, err);
    out.mean_rel_error += err / static_cast<double>(draws);
  }
  return out;
}

/// Infinity-norm relative error between the analytic gradient of
/// analog_objective and central differences at (encoder, raw).
inline double analog_grad_check(const Eigen::MatrixXd& encoder, const Eigen::VectorXd& raw,
                                double budget, LogBase base, std::span<const double> spectrum,
                                double step = 1e-6) {
  const auto obj = analog_objective(encoder, raw, budget, base, spectrum);
  double max_diff = 0.0, max_mag = 0.0;
  auto probe = [&](double analytic, double numeric) {
    max_diff = std::max(max_diff, std::abs(analytic - numeric));
    max_mag = std::max({max_mag, std::abs(analytic), std::abs(numeric)});
  };
  Eigen::MatrixXd a = encoder;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double saved = a(i, j);
      a(i, j) = saved + step;
      const double up = analog_objective(a, raw, budget, base, spectrum).mse;
      a(i, j) = saved - step;
      const double down = analog_objective(a, raw, budget, base, spectrum).mse;
      a(i, j) = saved;
      probe(obj.grad_encoder(i, j), (up - down) / (2.0 * step));
    }
  }
  Eigen::VectorXd v = raw;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double saved = v(i);
    v(i) = saved + step;
    const double up = analog_objective(encoder, v, budget, base, spectrum).mse;
    v(i) = saved - step;
    const double down = analog_objective(encoder, v, budget, base, spectrum).mse;
    v(i) = saved;
    probe(obj.grad_raw(i), (up - down) / (2.0 * step));
  }
  return max_mag > 0.0 ? max_diff / max_mag : 0.0;
}

/// Squared error through the 8-bit quantizer with a straight-through
/// backward pass: the forward value uses the quantized features, the
/// gradient treats quantize8/dequantize8 as the identity.
struct SteLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

inline SteLoss ste_quantized_loss(std::span<const double> features,
                                  std::span<const double> targets) {
  detail::require(features.size() == targets.size(), "length mismatch");
  const auto restored = dequantize8(quantize8(features));
  SteLoss out;
  out.grad.resize(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double r = restored[i] - targets[i];
    out.loss += r * r;
    out.grad[i] = 2.0 * r;
  }
  return out;
}

}  // namespace sfc
