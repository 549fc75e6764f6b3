#pragma once

// Desk-scale experiment runner behind the sfc command-line tool. Every
// subcommand maps a JSON config and a seed to a list of in-memory
// artifacts; the caller decides where they are written.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "sfc/channel_models.hpp"
#include "sfc/e2e_trainer.hpp"
#include "sfc/errors.hpp"
#include "sfc/gaussian_core.hpp"
#include "sfc/io.hpp"
#include "sfc/phy_calibration.hpp"
#include "sfc/random.hpp"
#include "sfc/rate_allocation.hpp"

namespace sfc::experiment {

using nlohmann::json;

/// Bad command line or config; maps to exit status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Artifact {
  std::string name;
  std::string content;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  unsigned threads = 1;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{
      "gaussian-sweep-c", "gaussian-sweep-m", "train-linear", "calib-analog",
      "calib-digital",    "ber-validate",     "h2inv-check"};
  return names;
}

namespace detail {

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

inline json defaults_for(std::string_view command) {
  const json spectrum_2 = {{"n", 1000}, {"log_variance", 4.0}};
  const json spectrum_small = {{"n", 16}, {"log_variance", 4.0}};
  if (command == "gaussian-sweep-c")
    return {{"spectrum", spectrum_2},
            {"m_values", json::array({392})},
            {"c_values", {{"start", 10.0}, {"stop", 500.0}, {"count", 50}}},
            {"c_unit", "nats"}};
  if (command == "gaussian-sweep-m")
    return {{"spectrum", spectrum_2},
            {"c_values", json::array({100.0})},
            {"m_values", "all"},
            {"c_unit", "nats"}};
  if (command == "train-linear")
    return {{"spectrum", spectrum_small}, {"m", 8},          {"c", 8.0},
            {"base", "nats"},             {"max_iters", 10000}, {"step_size", 0.05}};
  if (command == "calib-analog")
    return {{"spectrum", spectrum_small},
            {"m", 8},
            {"budgets_bits", json::array({32.0, 24.0, 16.0, 8.0})},
            {"candidates", nullptr},
            {"feature_vars", nullptr},
            {"p_tot", 1.0e4},
            {"w0", 1.0e-6},
            {"snr_db", {{"start", -10.0}, {"stop", 20.0}, {"count", 7}}},
            {"trials", 200}};
  if (command == "calib-digital")
    return {{"users", json::array({{{"features", 32}, {"p_tot", 2000.0}, {"weight", 1.0}},
                                   {{"features", 64}, {"p_tot", 4000.0}, {"weight", 1.0}},
                                   {{"features", 128}, {"p_tot", 8000.0}, {"weight", 1.0}}})},
            {"budget_fractions", json::array({0.5, 0.125})},
            {"modulation_levels", json::array({2, 4, 6})},
            {"mu_floor", 1.0e-6},
            {"t_budget", 800},
            {"w0", 1.0e-6},
            {"snr_db", {{"start", -10.0}, {"stop", 30.0}, {"count", 9}}},
            {"trials", 200}};
  if (command == "ber-validate")
    return {{"modulations", json::array({2, 4})},
            {"power_gain", json::array({1.0, 2.0, 4.0, 10.0})},
            {"n_bits", 1000000}};
  if (command == "h2inv-check") return {{"points", 10001}};
  throw UsageError("unknown subcommand '" + std::string(command) + "'");
}

/// Array, {start, stop, count} (inclusive, evenly spaced) or
/// {start, stop, step}.
inline std::vector<double> grid(const json& cfg, const std::string& key) {
  const json& g = cfg.at(key);
  std::vector<double> out;
  if (g.is_array()) {
    for (const auto& v : g) out.push_back(v.get<double>());
  } else if (g.is_object() && g.contains("count")) {
    const double a = g.at("start").get<double>(), b = g.at("stop").get<double>();
    const auto n = g.at("count").get<std::int64_t>();
    for (std::int64_t i = 0; i < n; ++i)
      out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  } else if (g.is_object() && g.contains("step")) {
    const double a = g.at("start").get<double>(), b = g.at("stop").get<double>();
    const double step = g.at("step").get<double>();
    if (!(step > 0.0)) throw UsageError("grid '" + key + "' needs a positive step");
    for (std::int64_t i = 0; a + static_cast<double>(i) * step <= b * (1 + 1e-12); ++i)
      out.push_back(a + static_cast<double>(i) * step);
  } else {
    throw UsageError("grid '" + key + "' must be an array or a {start, stop, count|step} object");
  }
  if (out.empty()) throw UsageError("grid '" + key + "' is empty");
  for (double v : out)
    if (!std::isfinite(v)) throw UsageError("grid '" + key + "' has a non-finite value");
  return out;
}

inline std::vector<std::size_t> index_grid(const json& cfg, const std::string& key,
                                           std::size_t max_value) {
  std::vector<std::size_t> out;
  if (cfg.at(key).is_string()) {
    if (cfg.at(key).get<std::string>() != "all")
      throw UsageError("grid '" + key + "' must be numeric or \"all\"");
    for (std::size_t m = 1; m <= max_value; ++m) out.push_back(m);
    return out;
  }
  for (double v : grid(cfg, key)) {
    if (v < 1.0 || v > static_cast<double>(max_value) || v != std::floor(v))
      throw UsageError("grid '" + key + "' needs integers in [1, " + std::to_string(max_value) +
                       "]");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// stored by index; the first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::string csv_preamble(std::uint64_t seed, const std::string& sha,
                                std::string_view command) {
  return "# seed=" + std::to_string(seed) + " config_sha=" + sha +
         " schema=1 experiment=" + std::string(command) + "\n";
}

inline std::string csv_row(std::initializer_list<std::string> cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out + '\n';
}

using io::format_double;

inline SourceSpectrum spectrum_from(const json& cfg, std::uint64_t seed) {
  const auto& s = cfg.at("spectrum");
  const auto n = s.at("n").get<std::int64_t>();
  if (n < 1) throw UsageError("spectrum.n must be positive");
  return lognormal_spectrum(static_cast<std::size_t>(n), s.at("log_variance").get<double>(),
                            seed);
}

inline double c_unit_factor(const json& cfg) {
  const auto unit = cfg.at("c_unit").get<std::string>();
  if (unit == "nats") return 1.0;
  if (unit == "bits") return std::numbers::ln2;
  throw UsageError("c_unit must be \"nats\" or \"bits\"");
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// Exponential(1) draw: |h|^2 of unit-power Rayleigh fading.
inline double rayleigh_power(CounterRng& rng) { return -std::log(rng.uniform()); }

// --- Gaussian sweeps ----------------------------------------------------

struct SweepRow {
  std::size_t m;
  double c_nats;
  double rd, sfc, envc;
  std::size_t active;
};

inline std::vector<SweepRow> gaussian_rows(const SourceSpectrum& spectrum,
                                           const std::vector<std::pair<std::size_t, double>>& pts,
                                           unsigned threads) {
  std::vector<SweepRow> rows(pts.size());
  parallel_for(pts.size(), threads, [&](std::size_t i) {
    const auto [m, c] = pts[i];
    const auto sol = solve_optimal_sfc(spectrum, m, c);
    rows[i] = {m, c, rd_bound(spectrum, c).distortion, sol.mse, envc_mse(spectrum, m, c),
               sol.active_count};
  });
  return rows;
}

inline std::string gaussian_csv(const std::vector<SweepRow>& rows, bool m_first) {
  std::string out = m_first ? "m,c_nats,rd_mse,sfc_mse,envc_mse,sfc_active\n"
                            : "c_nats,m,rd_mse,sfc_mse,envc_mse,sfc_active\n";
  for (const auto& r : rows) {
    const auto m = std::to_string(r.m), c = format_double(r.c_nats);
    out += csv_row({m_first ? m : c, m_first ? c : m, format_double(r.rd), format_double(r.sfc),
                    format_double(r.envc), std::to_string(r.active)});
  }
  return out;
}

inline std::vector<Artifact> gaussian_sweep(const json& cfg, std::uint64_t seed,
                                            unsigned threads, bool sweep_c,
                                            const std::string& preamble) {
  const auto spectrum = spectrum_from(cfg, seed);
  const double factor = c_unit_factor(cfg);
  const auto ms = index_grid(cfg, "m_values", spectrum.n());
  auto cs = grid(cfg, "c_values");
  for (auto& c : cs) {
    if (c < 0.0) throw UsageError("c_values must be non-negative");
    c *= factor;
  }
  std::vector<std::pair<std::size_t, double>> pts;
  if (sweep_c) {
    for (auto m : ms)
      for (double c : cs) pts.emplace_back(m, c);
  } else {
    for (double c : cs)
      for (auto m : ms) pts.emplace_back(m, c);
  }
  const auto name = sweep_c ? "gaussian-sweep-c.csv" : "gaussian-sweep-m.csv";
  return {{name, preamble + gaussian_csv(gaussian_rows(spectrum, pts, threads), sweep_c)}};
}

// --- linear trainer -----------------------------------------------------

inline std::vector<Artifact> train_linear(const json& cfg, std::uint64_t seed,
                                          const std::string& preamble) {
  const auto spectrum = spectrum_from(cfg, seed);
  const auto m = cfg.at("m").get<std::int64_t>();
  if (m < 1 || static_cast<std::size_t>(m) > spectrum.n())
    throw UsageError("m must satisfy 1 <= m <= spectrum.n");
  const auto base_name = cfg.at("base").get<std::string>();
  if (base_name != "nats" && base_name != "bits")
    throw UsageError("base must be \"nats\" or \"bits\"");
  TrainOptions opt;
  opt.seed = seed;
  opt.base = base_name == "nats" ? LogBase::kNats : LogBase::kBits;
  opt.step_size = cfg.at("step_size").get<double>();
  if (!(opt.step_size > 0.0)) throw UsageError("step_size must be positive");
  const auto iters = cfg.at("max_iters").get<std::int64_t>();
  if (iters < 0) throw UsageError("max_iters must be non-negative");
  opt.max_iters = static_cast<std::size_t>(iters);
  const double budget = cfg.at("c").get<double>();
  if (!(budget > 0.0)) throw UsageError("c must be positive");

  const auto result = train_linear_analog(spectrum, static_cast<std::size_t>(m), budget, opt);
  const double closed =
      solve_optimal_sfc(spectrum, static_cast<std::size_t>(m), budget * log_base_factor(opt.base))
          .mse;
  std::string summary = preamble + "n,m,budget,base,closed_form_mse,trained_mse,ratio,"
                                   "iterations,converged\n";
  summary += csv_row({std::to_string(spectrum.n()), std::to_string(m), format_double(budget),
                      base_name, format_double(closed), format_double(result.mse),
                      format_double(result.mse / closed),
                      std::to_string(result.state.iteration), result.converged ? "1" : "0"});
  return {{"train-linear.csv", std::move(summary)},
          {"train-linear_trace.csv", preamble + format_trace(result.trace)}};
}

// --- calibration sweeps -------------------------------------------------

struct SelectionCounts {
  std::vector<std::size_t> chosen;  // per candidate
  std::size_t infeasible = 0;
  std::vector<double> power_sum;    // per candidate, over trials choosing it
};

inline std::vector<Artifact> calib_analog(const json& cfg, std::uint64_t seed, unsigned threads,
                                          const std::string& preamble) {
  std::vector<AnalogCandidate> candidates;
  std::vector<double> feature_vars;
  if (!cfg.at("candidates").is_null()) {
    for (const auto& c : cfg.at("candidates")) candidates.push_back(io::analog_candidate_from_json(c));
    if (cfg.at("feature_vars").is_null())
      throw UsageError("explicit candidates need feature_vars");
    feature_vars = cfg.at("feature_vars").get<std::vector<double>>();
  } else {
    const auto spectrum = spectrum_from(cfg, seed);
    const auto m = cfg.at("m").get<std::int64_t>();
    if (m < 2 || m % 2 != 0 || static_cast<std::size_t>(m) > spectrum.n())
      throw UsageError("m must be even and at most spectrum.n");
    for (double b : cfg.at("budgets_bits").get<std::vector<double>>()) {
      const auto sol = solve_optimal_sfc(spectrum, static_cast<std::size_t>(m),
                                         b * std::numbers::ln2);
      candidates.push_back({b, sol.mse, sol.noise_vars});
    }
    feature_vars.assign(spectrum.variances().begin(), spectrum.variances().begin() + m);
  }
  ::sfc::detail::require_candidate_order(std::span<const AnalogCandidate>(candidates));
  const double p_tot = cfg.at("p_tot").get<double>();
  const double w0 = cfg.at("w0").get<double>();
  const auto snrs = grid(cfg, "snr_db");
  const auto trials = cfg.at("trials").get<std::int64_t>();
  if (trials < 1) throw UsageError("trials must be positive");
  const std::size_t uses = feature_vars.size() / 2;

  std::vector<SelectionCounts> counts(snrs.size());
  std::vector<json> first_plans(snrs.size());
  parallel_for(snrs.size(), threads, [&](std::size_t i) {
    auto& cnt = counts[i];
    cnt.chosen.assign(candidates.size(), 0);
    cnt.power_sum.assign(candidates.size(), 0.0);
    CounterRng rng(seed, 0xca1000 + i);
    const double snr = db_to_linear(snrs[i]);
    for (std::int64_t t = 0; t < trials; ++t) {
      std::vector<double> gains(uses);
      for (auto& g : gains) g = snr * rayleigh_power(rng);
      json record = {{"snr_db", snrs[i]}, {"gains_over_noise", gains}};
      try {
        const auto plan = analog_calibrate(candidates, feature_vars, gains, p_tot, w0);
        ++cnt.chosen[plan.chosen];
        cnt.power_sum[plan.chosen] += plan.required_power;
        record["plan"] = io::to_json(plan, candidates, w0);
      } catch (const InfeasibleError& e) {
        ++cnt.infeasible;
        record["error"] = e.what();
      }
      if (t == 0) first_plans[i] = std::move(record);
    }
  });

  if (std::all_of(counts.begin(), counts.end(),
                  [&](const SelectionCounts& c) { return c.infeasible == std::size_t(trials); }))
    throw InfeasibleError("no trial at any SNR point admits a feasible analog plan: " +
                          first_plans.front()["error"].get<std::string>());

  std::string csv = preamble + "snr_db,snr_linear,candidate,budget_bits,loss,selected,trials,"
                               "selection_ratio,mean_required_power\n";
  const auto n_trials = static_cast<double>(trials);
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    const auto db = format_double(snrs[i]), lin = format_double(db_to_linear(snrs[i]));
    for (std::size_t u = 0; u < candidates.size(); ++u) {
      const auto k = counts[i].chosen[u];
      csv += csv_row({db, lin, std::to_string(u), format_double(candidates[u].budget_bits),
                      format_double(candidates[u].loss), std::to_string(k),
                      std::to_string(trials), format_double(static_cast<double>(k) / n_trials),
                      k ? format_double(counts[i].power_sum[u] / static_cast<double>(k)) : ""});
    }
    csv += csv_row({db, lin, "-1", "", "", std::to_string(counts[i].infeasible),
                    std::to_string(trials),
                    format_double(static_cast<double>(counts[i].infeasible) / n_trials), ""});
  }
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back(io::to_json(c));
  json doc = {{"schema", io::kSchemaVersion}, {"candidates", cands},
              {"feature_vars", feature_vars}, {"p_tot", p_tot},
              {"w0", w0},                     {"first_trial", first_plans}};
  return {{"calib-analog.csv", std::move(csv)},
          {"calib-analog_plans.json", doc.dump(2) + "\n"}};
}

/// Byte-quantized features: bit j of each byte (MSB first) carries weight
/// 2^(7-j)/255 of the feature range. Raw rate parameters follow that
/// weight; the loss is the sum of flip probability times squared weight.
inline std::vector<DigitalCandidate> byte_candidates(std::size_t features,
                                                     std::span<const double> fractions,
                                                     double mu_floor) {
  const std::size_t bits = 8 * features;
  std::vector<double> raw(bits), weight_sq(bits);
  for (std::size_t n = 0; n < bits; ++n) {
    const double w = std::ldexp(1.0, 7 - static_cast<int>(n % 8)) / 255.0;
    raw[n] = w;
    weight_sq[n] = w * w;
  }
  std::vector<DigitalCandidate> out;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw UsageError("budget fractions must lie in (0, 1]");
    const double c = f * static_cast<double>(bits);
    auto alloc = make_digital_allocation(raw, c, FlipInverse::kExact);
    DigitalCandidate cand{c, 0.0, {}};
    for (std::size_t n = 0; n < bits; ++n) {
      const double mu = std::clamp(alloc.flip_probs[n], mu_floor, 0.5);
      cand.flip_probs.push_back(mu);
      cand.loss += mu * weight_sq[n];
    }
    out.push_back(std::move(cand));
  }
  return out;
}

inline std::vector<Artifact> calib_digital(const json& cfg, std::uint64_t seed, unsigned threads,
                                           const std::string& preamble) {
  const auto fractions = cfg.at("budget_fractions").get<std::vector<double>>();
  const auto levels = cfg.at("modulation_levels").get<std::vector<int>>();
  const double mu_floor = cfg.at("mu_floor").get<double>();
  if (!(mu_floor > 0.0 && mu_floor < 0.5)) throw UsageError("mu_floor must lie in (0, 0.5)");
  const auto t_budget = cfg.at("t_budget").get<std::int64_t>();
  if (t_budget < 1) throw UsageError("t_budget must be positive");
  const double w0 = cfg.at("w0").get<double>();
  const auto snrs = grid(cfg, "snr_db");
  const auto trials = cfg.at("trials").get<std::int64_t>();
  if (trials < 1) throw UsageError("trials must be positive");
  if (!cfg.at("users").is_array() || cfg.at("users").empty())
    throw UsageError("users must be a non-empty array");

  std::vector<DigitalUser> users;
  std::vector<double> offsets;
  for (const auto& u : cfg.at("users")) {
    const auto features = u.at("features").get<std::int64_t>();
    if (features < 1) throw UsageError("user features must be positive");
    DigitalUser user;
    user.candidates = byte_candidates(static_cast<std::size_t>(features), fractions, mu_floor);
    user.modulation_levels = levels;
    user.p_tot = u.at("p_tot").get<double>();
    user.weight = u.value("weight", 1.0);
    offsets.push_back(db_to_linear(u.value("gain_offset_db", 0.0)));
    users.push_back(std::move(user));
  }
  std::vector<UnitGainTable> tables;
  for (const auto& u : users) tables.push_back(unit_gain_table(u.candidates, u.modulation_levels));

  const std::size_t n_users = users.size(), n_cands = fractions.size();
  std::vector<std::vector<SelectionCounts>> counts(snrs.size());
  std::vector<json> first_plans(snrs.size());
  parallel_for(snrs.size(), threads, [&](std::size_t i) {
    auto& per_user = counts[i];
    per_user.assign(n_users, {std::vector<std::size_t>(n_cands, 0), 0,
                              std::vector<double>(n_cands, 0.0)});
    CounterRng rng(seed, 0xd16000 + i);
    const double snr = db_to_linear(snrs[i]);
    auto live = users;
    for (std::int64_t t = 0; t < trials; ++t) {
      std::vector<double> gains(n_users);
      for (std::size_t k = 0; k < n_users; ++k) {
        gains[k] = snr * offsets[k] * rayleigh_power(rng);
        live[k].gain_ratio = gains[k];
      }
      json record = {{"snr_db", snrs[i]}, {"gain_ratios", gains}};
      try {
        const auto plan =
            digital_calibrate(live, tables, w0, static_cast<std::size_t>(t_budget));
        for (std::size_t k = 0; k < n_users; ++k) {
          ++per_user[k].chosen[plan.users[k].candidate];
          per_user[k].power_sum[plan.users[k].candidate] += plan.users[k].required_power;
        }
        record["plan"] = io::to_json(plan);
      } catch (const InfeasibleError& e) {
        for (auto& c : per_user) ++c.infeasible;
        record["error"] = e.what();
      }
      if (t == 0) first_plans[i] = std::move(record);
    }
  });

  if (std::all_of(counts.begin(), counts.end(), [&](const std::vector<SelectionCounts>& c) {
        return c.front().infeasible == std::size_t(trials);
      }))
    throw InfeasibleError("no trial at any SNR point admits a feasible digital plan: " +
                          first_plans.front()["error"].get<std::string>());

  std::string csv = preamble + "snr_db,snr_linear,user,candidate,budget_bits,loss,selected,"
                               "trials,selection_ratio\n";
  const auto n_trials = static_cast<double>(trials);
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    const auto db = format_double(snrs[i]), lin = format_double(db_to_linear(snrs[i]));
    for (std::size_t k = 0; k < n_users; ++k) {
      const auto& c = counts[i][k];
      for (std::size_t u = 0; u < n_cands; ++u)
        csv += csv_row({db, lin, std::to_string(k), std::to_string(u),
                        format_double(users[k].candidates[u].budget_bits),
                        format_double(users[k].candidates[u].loss), std::to_string(c.chosen[u]),
                        std::to_string(trials),
                        format_double(static_cast<double>(c.chosen[u]) / n_trials)});
      csv += csv_row({db, lin, std::to_string(k), "-1", "", "", std::to_string(c.infeasible),
                      std::to_string(trials),
                      format_double(static_cast<double>(c.infeasible) / n_trials)});
    }
  }
  json doc = {{"schema", io::kSchemaVersion}, {"t_budget", t_budget}, {"w0", w0},
              {"first_trial", first_plans}};
  return {{"calib-digital.csv", std::move(csv)},
          {"calib-digital_plans.json", doc.dump(2) + "\n"}};
}

// --- link-level checks --------------------------------------------------

inline std::vector<Artifact> ber_validate(const json& cfg, std::uint64_t seed, unsigned threads,
                                          const std::string& preamble) {
  const auto mods = cfg.at("modulations").get<std::vector<int>>();
  const auto pg = grid(cfg, "power_gain");
  const auto n_bits = cfg.at("n_bits").get<std::int64_t>();
  if (n_bits < 100000) throw UsageError("n_bits must be at least 1e5");
  for (int m : mods)
    if (m != 2 && m != 4) throw UsageError("modulations must be 2 or 4");
  std::vector<std::pair<int, double>> pts;
  for (int m : mods)
    for (double x : pg) {
      if (!(x > 0.0)) throw UsageError("power_gain values must be positive");
      pts.emplace_back(m, x);
    }
  std::vector<std::string> rows(pts.size());
  parallel_for(pts.size(), threads, [&](std::size_t i) {
    const auto [m, x] = pts[i];
    const double analytic = ber_qam(x, m, 1.0);
    const double empirical = monte_carlo_ber(x, m, 1.0, static_cast<std::size_t>(n_bits),
                                             ::sfc::detail::mix64(seed + i));
    const double se = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(n_bits));
    rows[i] = csv_row({std::to_string(m), format_double(x), format_double(analytic),
                       format_double(empirical), format_double(se),
                       format_double(se > 0.0 ? (empirical - analytic) / se : 0.0)});
  });
  std::string csv = preamble + "m,power_gain,analytic_ber,empirical_ber,std_error,z_score\n";
  for (const auto& r : rows) csv += r;
  return {{"ber-validate.csv", std::move(csv)}};
}

inline std::vector<Artifact> h2inv_check(const json& cfg, const std::string& preamble) {
  const auto points = cfg.at("points").get<std::int64_t>();
  if (points < 2) throw UsageError("points must be at least 2");
  std::string csv = preamble + "rate,exact,approx,abs_error\n";
  for (std::int64_t i = 0; i < points; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(points - 1);
    const double exact = flip_prob_for_rate(x);
    const double approx = flip_prob_approx(x, 1.0);
    csv += csv_row({format_double(x), format_double(exact), format_double(approx),
                    format_double(std::abs(exact - approx))});
  }
  return {{"h2inv-check.csv", std::move(csv)}};
}

}  // namespace detail

/// Defaults for `command` overlaid with the user's config. Unknown keys,
/// a foreign experiment name or a schema other than 1 are usage errors.
inline json effective_config(std::string_view command, const json& user) {
  json cfg = detail::defaults_for(command);
  if (user.is_null()) return cfg;
  if (!user.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : user.items()) {
    if (key == "seed") continue;
    if (key == "schema") {
      if (value != 1) throw UsageError("unsupported config schema; expected 1");
      continue;
    }
    if (key == "experiment") {
      if (!value.is_string() || value.get<std::string>() != command)
        throw UsageError("config is for experiment " + value.dump() + ", not " +
                         std::string(command));
      continue;
    }
    if (!cfg.contains(key)) throw UsageError("unknown config key '" + key + "'");
    cfg[key] = value;
  }
  return cfg;
}

/// Runs one subcommand and returns its artifacts. Throws UsageError for bad
/// input, InfeasibleError or TrainingFailure when the experiment fails.
inline std::vector<Artifact> run(std::string_view command, const json& user_config,
                                 const RunOptions& options) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), command) == names.end())
    throw UsageError("unknown subcommand '" + std::string(command) + "'");
  try {
    std::uint64_t seed = 0;
    if (options.seed) {
      seed = *options.seed;
    } else if (user_config.is_object() && user_config.contains("seed")) {
      const auto& s = user_config["seed"];
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
        throw UsageError("seed must be a non-negative 64-bit integer");
      seed = s.get<std::uint64_t>();
    } else {
      throw UsageError("a seed is required (config \"seed\" or --seed)");
    }
    const json cfg = effective_config(command, user_config);
    json hashed = cfg;
    hashed["experiment"] = command;
    hashed["schema"] = 1;
    const auto preamble = detail::csv_preamble(seed, detail::sha256_hex(hashed.dump()), command);
    const unsigned threads = std::max(1u, options.threads);

    if (command == "gaussian-sweep-c") return detail::gaussian_sweep(cfg, seed, threads, true, preamble);
    if (command == "gaussian-sweep-m") return detail::gaussian_sweep(cfg, seed, threads, false, preamble);
    if (command == "train-linear") return detail::train_linear(cfg, seed, preamble);
    if (command == "calib-analog") return detail::calib_analog(cfg, seed, threads, preamble);
    if (command == "calib-digital") return detail::calib_digital(cfg, seed, threads, preamble);
    if (command == "ber-validate") return detail::ber_validate(cfg, seed, threads, preamble);
    return detail::h2inv_check(cfg, preamble);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  } catch (const ParameterError& e) {
    throw UsageError(std::string("invalid parameter: ") + e.what());
  }
}

/// Machine-readable error record for standard error.
inline std::string error_record(std::string_view kind, std::string_view message,
                                std::string_view command) {
  return json{{"schema", 1},
              {"error", kind},
              {"message", message},
              {"experiment", command}}
      .dump();
}

}  // namespace sfc::experiment
