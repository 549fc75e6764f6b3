#pragma once

// JSON forms of candidates and calibration plans (schema 1), and CSV
// number formatting.

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "sfc/errors.hpp"
#include "sfc/gaussian_core.hpp"
#include "sfc/phy_calibration.hpp"

namespace sfc::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Shortest round-trip decimal form; "inf"/"nan" for non-finite values.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Inactive channels serialize as null.
inline json noise_vars_to_json(const std::vector<NoiseVar>& vars) {
  json out = json::array();
  for (const auto& v : vars) out.push_back(v.active() ? json(v.value()) : json(nullptr));
  return out;
}

inline std::vector<NoiseVar> noise_vars_from_json(const json& j) {
  std::vector<NoiseVar> out;
  for (const auto& v : j) out.push_back(v.is_null() ? NoiseVar::inactive() : NoiseVar::of(v.get<double>()));
  return out;
}

inline json to_json(const AnalogCandidate& c) {
  return {{"budget_bits", c.budget_bits}, {"loss", c.loss},
          {"noise_vars", noise_vars_to_json(c.noise_vars)}};
}

inline AnalogCandidate analog_candidate_from_json(const json& j) {
  return {j.at("budget_bits").get<double>(), j.at("loss").get<double>(),
          noise_vars_from_json(j.at("noise_vars"))};
}

inline json to_json(const DigitalCandidate& c) {
  return {{"budget_bits", c.budget_bits}, {"loss", c.loss}, {"flip_probs", c.flip_probs}};
}

inline DigitalCandidate digital_candidate_from_json(const json& j) {
  return {j.at("budget_bits").get<double>(), j.at("loss").get<double>(),
          j.at("flip_probs").get<std::vector<double>>()};
}

inline json to_json(const AnalogPlan& plan, std::span<const AnalogCandidate> candidates,
                    double w0) {
  const auto& chosen = candidates[plan.chosen];
  return {{"schema", kSchemaVersion},
          {"kind", "analog"},
          {"chosen", plan.chosen},
          {"budget_bits", chosen.budget_bits},
          {"powers", plan.powers},
          {"assignment", plan.assignment},
          {"target_snr", plan.target_snr},
          {"required_power", plan.required_power},
          {"candidate_required_power", plan.candidate_required_power},
          {"objective",
           {{"total", plan.objective},
            {"loss_term", (1.0 - w0) * chosen.loss},
            {"power_term", w0 * plan.required_power}}}};
}

inline json to_json(const DigitalPlan& plan) {
  json users = json::array();
  for (const auto& u : plan.users)
    users.push_back({{"candidate", u.candidate},
                     {"modulation", u.modulation},
                     {"channel_uses", u.channel_uses},
                     {"powers", u.powers},
                     {"required_power", u.required_power},
                     {"objective", u.objective}});
  return {{"schema", kSchemaVersion},
          {"kind", "digital"},
          {"objective", plan.objective},
          {"channel_uses", plan.channel_uses},
          {"users", std::move(users)}};
}

}  // namespace sfc::io
