#pragma once

// Physical-layer calibration: choose a trained SF channel and the transmit
// powers (and, for digital links, modulation levels) so that the live link
// reproduces the channel statistics the codec was trained against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sfc/channel_models.hpp"
#include "sfc/errors.hpp"
#include "sfc/gaussian_core.hpp"

namespace sfc {

// --- candidates ---------------------------------------------------------

struct AnalogCandidate {
  double budget_bits = 0.0;
  double loss = 0.0;
  std::vector<NoiseVar> noise_vars;  // trained per-feature noise variances
};

struct DigitalCandidate {
  double budget_bits = 0.0;
  double loss = 0.0;
  std::vector<double> flip_probs;  // trained per-bit flip probabilities
};

namespace detail {

// Candidates must run from the richest channel (largest budget, smallest
// loss) to the poorest.
template <typename Candidate>
void require_candidate_order(std::span<const Candidate> candidates) {
  require(!candidates.empty(), "candidate set must be non-empty");
  for (std::size_t u = 1; u < candidates.size(); ++u) {
    require(candidates[u].budget_bits < candidates[u - 1].budget_bits,
            "candidate budgets must be strictly decreasing");
    require(candidates[u].loss > candidates[u - 1].loss,
            "candidate losses must be strictly increasing");
  }
}

inline std::vector<std::size_t> order_descending(std::span<const double> keys) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
  return idx;
}

}  // namespace detail

// --- single-user analog -------------------------------------------------

/// Powers and feature-to-channel-use assignment realizing one candidate.
struct AnalogPowerPlan {
  std::vector<double> target_snr;         // per feature
  std::vector<double> powers;             // p_m, per feature
  std::vector<std::size_t> assignment;    // feature m -> channel use t
  double required_power = 0.0;            // sum_m p_m var_z,m
};

/// Total transmit power sum_m p_m var_z,m when feature m uses channel use
/// assignment[m] and every feature meets its target SNR exactly.
inline double analog_total_power(std::span<const double> target_snr,
                                 std::span<const double> gains_over_noise,
                                 std::span<const std::size_t> assignment) {
  detail::require(target_snr.size() == assignment.size(), "length mismatch");
  double total = 0.0;
  for (std::size_t m = 0; m < target_snr.size(); ++m)
    total += target_snr[m] / (2.0 * gains_over_noise[assignment[m]]);
  return total;
}

/// The strongest channel uses carry the most demanding features, two per
/// use. Demand is the target SNR; with equal feature variances this is the
/// same order as tau_m = SNR_m / (2 var_z,m).
inline AnalogPowerPlan analog_power_plan(const AnalogCandidate& candidate,
                                         std::span<const double> feature_vars,
                                         std::span<const double> gains_over_noise) {
  const std::size_t m = feature_vars.size();
  detail::require(m % 2 == 0, "feature count must be even");
  detail::require(gains_over_noise.size() == m / 2, "need one gain ratio per feature pair");
  detail::require(candidate.noise_vars.size() == m, "candidate noise variances differ in length");
  for (double g : gains_over_noise)
    detail::require(g > 0.0, "gain-to-noise ratios must be positive");

  AnalogPowerPlan plan;
  plan.target_snr.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    detail::require(feature_vars[i] > 0.0, "feature variances must be positive");
    const auto& w = candidate.noise_vars[i];
    plan.target_snr[i] = w.active() ? feature_vars[i] * w.precision()
                                    : 0.0;
  }

  const auto feature_order = detail::order_descending(plan.target_snr);
  const auto channel_order = detail::order_descending(gains_over_noise);
  plan.assignment.resize(m);
  plan.powers.resize(m);
  for (std::size_t rank = 0; rank < m; ++rank) {
    const std::size_t f = feature_order[rank];
    const std::size_t t = channel_order[rank / 2];
    plan.assignment[f] = t;
    const double tau = plan.target_snr[f] / (2.0 * feature_vars[f]);
    plan.powers[f] = tau / gains_over_noise[t];
    plan.required_power += plan.powers[f] * feature_vars[f];
  }
  return plan;
}

struct AnalogPlan {
  std::size_t chosen = 0;
  std::vector<double> powers;
  std::vector<std::size_t> assignment;
  std::vector<double> target_snr;
  double required_power = 0.0;
  double objective = 0.0;
  std::vector<double> candidate_required_power;  // P_req for every candidate
};

/// Realized SNR 2 g p var_z of every feature under a plan.
inline std::vector<double> analog_realized_snr(const AnalogPlan& plan,
                                               std::span<const double> feature_vars,
                                               std::span<const double> gains_over_noise) {
  std::vector<double> snr(plan.powers.size());
  for (std::size_t m = 0; m < snr.size(); ++m)
    snr[m] = 2.0 * gains_over_noise[plan.assignment[m]] * plan.powers[m] * feature_vars[m];
  return snr;
}

/// Picks the candidate minimizing (1 - w0) L + w0 P_req among those whose
/// required power fits p_tot. Ties go to the smaller index.
inline AnalogPlan analog_calibrate(std::span<const AnalogCandidate> candidates,
                                   std::span<const double> feature_vars,
                                   std::span<const double> gains_over_noise, double p_tot,
                                   double w0) {
  detail::require_candidate_order(candidates);
  detail::require(w0 >= 0.0 && w0 <= 1.0, "w0 must lie in [0, 1]");
  detail::require(p_tot >= 0.0, "power budget must be non-negative");

  AnalogPlan best;
  bool found = false;
  double cheapest = std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < candidates.size(); ++u) {
    auto plan = analog_power_plan(candidates[u], feature_vars, gains_over_noise);
    best.candidate_required_power.push_back(plan.required_power);
    cheapest = std::min(cheapest, plan.required_power);
    if (plan.required_power > p_tot) continue;
    const double objective = (1.0 - w0) * candidates[u].loss + w0 * plan.required_power;
    if (!found || objective < best.objective) {
      found = true;
      best.chosen = u;
      best.objective = objective;
      best.required_power = plan.required_power;
      best.powers = std::move(plan.powers);
      best.assignment = std::move(plan.assignment);
      best.target_snr = std::move(plan.target_snr);
    }
  }
  if (!found) {
    std::ostringstream msg;
    msg << "no analog candidate fits the power budget " << p_tot
        << "; cheapest candidate requires " << cheapest;
    throw InfeasibleError(msg.str());
  }
  return best;
}

// --- multi-user digital -------------------------------------------------

/// Sorts flip probabilities in descending order and returns the minimum of
/// each block of m. When m does not divide B, mu = 0.5 pads lead the list;
/// they need no power and never lower a block minimum.
inline std::vector<double> digital_group_targets(std::span<const double> flip_probs, int m) {
  detail::require(m >= 1, "group size must be positive");
  detail::require(!flip_probs.empty(), "flip probability list must be non-empty");
  const std::size_t group = static_cast<std::size_t>(m);
  std::vector<double> sorted(flip_probs.begin(), flip_probs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t pad = (group - sorted.size() % group) % group;
  sorted.insert(sorted.begin(), pad, 0.5);
  std::vector<double> targets(sorted.size() / group);
  for (std::size_t t = 0; t < targets.size(); ++t)
    targets[t] = *std::min_element(sorted.begin() + t * group, sorted.begin() + (t + 1) * group);
  return targets;
}

/// Smallest unit-gain power whose BER does not exceed `target`. Brackets by
/// doubling from [0, 1] and bisects to relative width `tolerance`.
inline double invert_ber(double target, int m, double tolerance = 1e-10) {
  detail::require(target > 0.0, "target BER must be positive");
  detail::require(tolerance > 0.0 && tolerance < 0.1, "tolerance must lie in (0, 0.1)");
  if (target >= ber_qam(0.0, m, 1.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (ber_qam(hi, m, 1.0) > target) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw InfeasibleError("BER target unreachable at finite power");
  }
  for (int it = 0; it < 200 && hi - lo > tolerance * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ber_qam(mid, m, 1.0) > target ? lo : hi) = mid;
  }
  return hi;
}

struct DigitalUser {
  std::vector<DigitalCandidate> candidates;
  std::vector<int> modulation_levels{2, 4, 6};
  double gain_ratio = 1.0;  // |h|^2 / sigma^2
  double p_tot = 0.0;
  double weight = 1.0;      // w_k
};

/// One feasible (candidate, modulation) pair of a user.
struct DigitalOption {
  std::size_t candidate = 0;
  int modulation = 2;
  std::size_t channel_uses = 0;
  std::vector<double> powers;  // per symbol
  double required_power = 0.0;
  double objective = 0.0;
};

/// Unit-gain symbol powers gamma_t for every (candidate, modulation) pair of
/// a user. They depend only on the trained candidates, so they can be
/// computed once and rescaled by sigma^2/|h|^2 for every channel state.
struct UnitGainTable {
  std::vector<int> levels;                            // sorted, unique
  std::vector<std::vector<std::vector<double>>> gamma;  // [candidate][level][symbol]
};

inline UnitGainTable unit_gain_table(std::span<const DigitalCandidate> candidates,
                                     std::span<const int> modulation_levels) {
  detail::require_candidate_order(candidates);
  detail::require(!modulation_levels.empty(), "need at least one modulation level");
  UnitGainTable table;
  table.levels.assign(modulation_levels.begin(), modulation_levels.end());
  std::sort(table.levels.begin(), table.levels.end());
  table.levels.erase(std::unique(table.levels.begin(), table.levels.end()), table.levels.end());
  for (int m : table.levels) qam_ber_constants(m);  // validates m

  for (const auto& cand : candidates) {
    for (double mu : cand.flip_probs)
      detail::require(mu >= 0.0 && mu <= 0.5, "flip probabilities must lie in [0, 0.5]");
    auto& per_level = table.gamma.emplace_back();
    for (int m : table.levels) {
      auto& gammas = per_level.emplace_back();
      for (double mu : digital_group_targets(cand.flip_probs, m)) {
        // An error-free bit cannot be met at finite power.
        gammas.push_back(mu > 0.0 ? invert_ber(mu, m) : std::numeric_limits<double>::infinity());
      }
    }
  }
  return table;
}

/// Every (candidate, modulation) pair whose required power fits the user's
/// budget, ordered by candidate then modulation level.
inline std::vector<DigitalOption> digital_candidates(const DigitalUser& user, double w0,
                                                     const UnitGainTable& table) {
  detail::require(user.gain_ratio > 0.0, "gain ratio must be positive");
  detail::require(w0 >= 0.0, "w0 must be non-negative");
  detail::require(table.gamma.size() == user.candidates.size(),
                  "unit-gain table does not match the candidate set");
  std::vector<DigitalOption> options;
  for (std::size_t u = 0; u < user.candidates.size(); ++u) {
    for (std::size_t l = 0; l < table.levels.size(); ++l) {
      const auto& gammas = table.gamma[u][l];
      DigitalOption opt;
      opt.candidate = u;
      opt.modulation = table.levels[l];
      opt.channel_uses = gammas.size();
      opt.powers.reserve(gammas.size());
      for (double gamma : gammas) {
        const double p = gamma / user.gain_ratio;
        opt.powers.push_back(p);
        opt.required_power += p;
      }
      if (!(opt.required_power <= user.p_tot)) continue;
      opt.objective = user.weight * user.candidates[u].loss + w0 * opt.required_power;
      options.push_back(std::move(opt));
    }
  }
  if (options.empty())
    throw InfeasibleError("user has no (candidate, modulation) pair within its power budget");
  return options;
}

inline std::vector<DigitalOption> digital_candidates(const DigitalUser& user, double w0) {
  return digital_candidates(user, w0, unit_gain_table(user.candidates, user.modulation_levels));
}

// --- multiple-choice knapsack -------------------------------------------

struct MckpItem {
  std::size_t weight = 1;  // channel uses
  double cost = 0.0;
};

struct MckpSelection {
  std::vector<std::size_t> choice;  // one item index per group
  double cost = 0.0;
  std::size_t weight = 0;
};

namespace detail {

inline void validate_mckp(std::span<const std::vector<MckpItem>> groups, std::size_t capacity) {
  require(!groups.empty(), "knapsack needs at least one group");
  require(capacity >= 1, "capacity must be positive");
  for (const auto& g : groups) {
    require(!g.empty(), "every group needs at least one item");
    for (const auto& item : g)
      require(item.weight >= 1 && std::isfinite(item.cost),
              "items need positive weight and finite cost");
  }
}

}  // namespace detail

/// Exact multiple-choice knapsack by dynamic programming over capacity.
/// best[k][c] is the least cost of groups k.. using at most c units; the
/// reconstruction takes the first optimal item per group, so ties resolve to
/// the lexicographically smallest selection.
inline MckpSelection solve_mckp(std::span<const std::vector<MckpItem>> groups,
                                std::size_t capacity) {
  detail::validate_mckp(groups, capacity);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t k_count = groups.size();
  std::vector<std::vector<double>> best(k_count + 1, std::vector<double>(capacity + 1, kInf));
  std::fill(best[k_count].begin(), best[k_count].end(), 0.0);
  for (std::size_t k = k_count; k-- > 0;) {
    for (std::size_t c = 0; c <= capacity; ++c) {
      double v = kInf;
      for (const auto& item : groups[k])
        if (item.weight <= c) v = std::min(v, item.cost + best[k + 1][c - item.weight]);
      best[k][c] = v;
    }
  }
  if (best[0][capacity] == kInf)
    throw InfeasibleError("no selection fits the channel-use budget");

  MckpSelection sel;
  sel.cost = best[0][capacity];
  std::size_t c = capacity;
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t j = 0; j < groups[k].size(); ++j) {
      const auto& item = groups[k][j];
      if (item.weight <= c && item.cost + best[k + 1][c - item.weight] == best[k][c]) {
        sel.choice.push_back(j);
        sel.weight += item.weight;
        c -= item.weight;
        break;
      }
    }
  }
  return sel;
}

/// Exhaustive enumeration; the independent check for solve_mckp.
inline MckpSelection solve_mckp_full_search(std::span<const std::vector<MckpItem>> groups,
                                            std::size_t capacity,
                                            std::size_t max_combinations = 1u << 20) {
  detail::validate_mckp(groups, capacity);
  double combos = 1.0;
  for (const auto& g : groups) combos *= static_cast<double>(g.size());
  if (combos > static_cast<double>(max_combinations))
    throw CapacityError("full-search knapsack limited to " + std::to_string(max_combinations) +
                        " combinations");

  const std::size_t k_count = groups.size();
  std::vector<std::size_t> idx(k_count, 0);
  MckpSelection best;
  bool found = false;
  while (true) {
    std::size_t weight = 0;
    double cost = 0.0;
    for (std::size_t k = k_count; k-- > 0;) {
      weight += groups[k][idx[k]].weight;
      cost = groups[k][idx[k]].cost + cost;
    }
    if (weight <= capacity && (!found || cost < best.cost)) {
      found = true;
      best.choice = idx;
      best.cost = cost;
      best.weight = weight;
    }
    std::size_t k = k_count;
    while (k-- > 0) {
      if (++idx[k] < groups[k].size()) break;
      idx[k] = 0;
    }
    if (k == static_cast<std::size_t>(-1)) break;
  }
  if (!found) throw InfeasibleError("no selection fits the channel-use budget");
  return best;
}

struct DigitalUserPlan {
  std::size_t candidate = 0;
  int modulation = 2;
  std::size_t channel_uses = 0;
  std::vector<double> powers;
  double required_power = 0.0;
  double objective = 0.0;
};

struct DigitalPlan {
  std::vector<DigitalUserPlan> users;
  double objective = 0.0;
  std::size_t channel_uses = 0;
};

enum class MckpMethod { kDynamicProgramming, kFullSearch };

/// Builds every user's feasible set from precomputed unit-gain tables and
/// solves the channel-use knapsack.
inline DigitalPlan digital_calibrate(std::span<const DigitalUser> users,
                                     std::span<const UnitGainTable> tables, double w0,
                                     std::size_t t_budget,
                                     MckpMethod method = MckpMethod::kDynamicProgramming) {
  detail::require(!users.empty(), "need at least one user");
  detail::require(tables.size() == users.size(), "one unit-gain table per user");
  std::vector<std::vector<DigitalOption>> options;
  std::vector<std::vector<MckpItem>> groups;
  for (std::size_t k = 0; k < users.size(); ++k) {
    try {
      options.push_back(digital_candidates(users[k], w0, tables[k]));
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("user " + std::to_string(k) + ": " + e.what());
    }
    auto& items = groups.emplace_back();
    for (const auto& opt : options.back()) items.push_back({opt.channel_uses, opt.objective});
  }
  const auto sel = method == MckpMethod::kDynamicProgramming
                       ? solve_mckp(groups, t_budget)
                       : solve_mckp_full_search(groups, t_budget);
  DigitalPlan plan;
  plan.objective = sel.cost;
  plan.channel_uses = sel.weight;
  for (std::size_t k = 0; k < users.size(); ++k) {
    auto& opt = options[k][sel.choice[k]];
    plan.users.push_back({opt.candidate, opt.modulation, opt.channel_uses, std::move(opt.powers),
                          opt.required_power, opt.objective});
  }
  return plan;
}

inline DigitalPlan digital_calibrate(std::span<const DigitalUser> users, double w0,
                                     std::size_t t_budget,
                                     MckpMethod method = MckpMethod::kDynamicProgramming) {
  std::vector<UnitGainTable> tables;
  for (const auto& user : users)
    tables.push_back(unit_gain_table(user.candidates, user.modulation_levels));
  return digital_calibrate(users, tables, w0, t_budget, method);
}

}  // namespace sfc
