#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sfc/phy_calibration.hpp"

using namespace sfc;

namespace {

AnalogCandidate snr_candidate(double budget, double loss, const std::vector<double>& vars,
                              const std::vector<double>& snr) {
  AnalogCandidate c{budget, loss, {}};
  for (std::size_t i = 0; i < vars.size(); ++i)
    c.noise_vars.push_back(snr[i] > 0 ? NoiseVar::of(vars[i] / snr[i]) : NoiseVar::inactive());
  return c;
}

std::vector<double> random_positive(std::mt19937_64& gen, std::size_t n, double spread) {
  std::lognormal_distribution<double> d(0.0, spread);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

}  // namespace

TEST(AnalogPowerPlan, SinglePairMeetsTargetExactly) {
  const std::vector<double> vars{1.0, 1.0}, gains{3.0};
  const auto cand = snr_candidate(8, 0.1, vars, {5.0, 5.0});
  const auto plan = analog_power_plan(cand, vars, gains);
  for (double p : plan.powers) EXPECT_DOUBLE_EQ(p, 5.0 / (2.0 * 3.0));
  AnalogPlan full{0, plan.powers, plan.assignment, plan.target_snr, plan.required_power, 0, {}};
  for (double s : analog_realized_snr(full, vars, gains)) EXPECT_NEAR(s, 5.0, 5.0 * 1e-15);
}

TEST(AnalogPowerPlan, SortedBeatsSwapped) {
  // tau = (4, 4, 1, 1) on unit variances over gains (1, 2).
  const std::vector<double> vars(4, 1.0), gains{1.0, 2.0};
  const std::vector<double> snr{8.0, 8.0, 2.0, 2.0};
  const auto plan = analog_power_plan(snr_candidate(8, 0.1, vars, snr), vars, gains);
  EXPECT_EQ(plan.assignment, (std::vector<std::size_t>{1, 1, 0, 0}));
  const std::vector<std::size_t> swapped{0, 0, 1, 1};
  EXPECT_LT(plan.required_power, analog_total_power(snr, gains, swapped));
  EXPECT_DOUBLE_EQ(plan.required_power, analog_total_power(snr, gains, plan.assignment));
}

TEST(AnalogPowerPlan, SortedAssignmentBeatsRandomPermutations) {
  std::mt19937_64 gen(41);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t m = 2 * (1 + gen() % 8);
    const auto vars = random_positive(gen, m, 1.0);
    const auto snr = random_positive(gen, m, 1.5);
    const auto gains = random_positive(gen, m / 2, 1.0);
    const auto plan = analog_power_plan(snr_candidate(8, 0.1, vars, snr), vars, gains);
    std::vector<std::size_t> slots;
    for (std::size_t t = 0; t < m / 2; ++t) slots.insert(slots.end(), {t, t});
    for (int rep = 0; rep < 100; ++rep) {
      std::shuffle(slots.begin(), slots.end(), gen);
      EXPECT_LE(plan.required_power, analog_total_power(snr, gains, slots) * (1 + 1e-12));
    }
  }
}

TEST(AnalogPowerPlan, RejectsBadShapes) {
  const std::vector<double> vars{1.0, 1.0, 1.0};
  EXPECT_THROW(analog_power_plan(snr_candidate(1, 1, vars, {1, 1, 1}), vars, std::vector<double>{1.0}),
               ParameterError);
  const std::vector<double> two{1.0, 1.0};
  EXPECT_THROW(analog_power_plan(snr_candidate(1, 1, two, {1, 1}), two, std::vector<double>{0.0}),
               ParameterError);
}

TEST(AnalogCalibrate, LossDominatedPicksRichestFeasible) {
  const std::vector<double> vars{2.0, 1.0}, gains{1.0};
  const std::vector<AnalogCandidate> cands{snr_candidate(16, 0.1, vars, {20, 10}),
                                           snr_candidate(8, 0.5, vars, {4, 2})};
  auto plan = analog_calibrate(cands, vars, gains, 1e9, 0.0);
  EXPECT_EQ(plan.chosen, 0u);
  // P_req of candidate 0 is (20 + 10) / 2 = 15; a tighter budget forces 1.
  EXPECT_NEAR(plan.candidate_required_power[0], 15.0, 1e-12);
  plan = analog_calibrate(cands, vars, gains, 10.0, 0.0);
  EXPECT_EQ(plan.chosen, 1u);
  EXPECT_NEAR(plan.objective, 0.5, 1e-15);
  // Power-dominated objective prefers the cheaper channel.
  EXPECT_EQ(analog_calibrate(cands, vars, gains, 1e9, 1.0).chosen, 1u);
  try {
    analog_calibrate(cands, vars, gains, 1.0, 0.0);
    FAIL() << "expected infeasibility";
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
  const std::vector<AnalogCandidate> unordered{cands[1], cands[0]};
  EXPECT_THROW(analog_calibrate(unordered, vars, gains, 1e9, 0.0), ParameterError);
}

TEST(AnalogCalibrate, RealizedSnrMatchesTargets) {
  std::mt19937_64 gen(42);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t m = 2 * (1 + gen() % 10);
    const auto vars = random_positive(gen, m, 1.0);
    const auto gains = random_positive(gen, m / 2, 1.0);
    std::vector<AnalogCandidate> cands;
    for (int u = 0; u < 3; ++u) {
      auto snr = random_positive(gen, m, 1.0);
      for (auto& s : snr) s *= std::pow(4.0, 2 - u);
      cands.push_back(snr_candidate(30 - 10 * u, 0.1 * (u + 1), vars, snr));
    }
    const auto plan = analog_calibrate(cands, vars, gains, 1e12, 0.5);
    const auto realized = analog_realized_snr(plan, vars, gains);
    for (std::size_t i = 0; i < m; ++i)
      EXPECT_NEAR(realized[i], plan.target_snr[i], 1e-12 * plan.target_snr[i]);
  }
}

TEST(DigitalGroupTargets, HandValues) {
  const std::vector<double> mu{0.4, 0.3, 0.2, 0.1};
  EXPECT_EQ(digital_group_targets(mu, 1), mu);
  EXPECT_EQ(digital_group_targets(mu, 2), (std::vector<double>{0.3, 0.1}));
  EXPECT_EQ(digital_group_targets(std::vector<double>{0.1, 0.4, 0.2, 0.3}, 2),
            (std::vector<double>{0.3, 0.1}));
  EXPECT_EQ(digital_group_targets(std::vector<double>(6, 0.2), 3), (std::vector<double>{0.2, 0.2}));
  // Padding with 0.5 at the front: (0.5, 0.4 | 0.3, 0.2 | 0.1, ...) for m = 2, B = 5.
  EXPECT_EQ(digital_group_targets(std::vector<double>{0.4, 0.3, 0.2, 0.1, 0.05}, 2),
            (std::vector<double>{0.4, 0.2, 0.05}));
}

TEST(InvertBer, HandValuesAndBracket) {
  EXPECT_EQ(invert_ber(0.5, 2), 0.0);
  EXPECT_EQ(invert_ber(0.7, 4), 0.0);
  EXPECT_NEAR(invert_ber(ber_qam(2.0, 2, 1.0), 2), 2.0, 2.0 * 1e-9);
  const double g = invert_ber(0.01, 4);
  EXPECT_LE(ber_qam(g, 4, 1.0), 0.01);
  EXPECT_GT(ber_qam(g * (1 - 1e-9), 4, 1.0), 0.01);
  EXPECT_THROW(invert_ber(0.0, 2), ParameterError);
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> log_target(-12.0, std::log10(0.49));
  for (int i = 0; i < 500; ++i) {
    const double t = std::pow(10.0, log_target(gen));
    const int m = 2 * (1 + static_cast<int>(gen() % 3));
    const double gamma = invert_ber(t, m);
    EXPECT_LE(ber_qam(gamma, m, 1.0), t);
    EXPECT_GT(ber_qam(gamma * (1 - 1e-9), m, 1.0), t);
  }
}

TEST(DigitalCandidates, HandEvaluation) {
  DigitalUser user;
  user.candidates = {{4, 0.1, {0.01, 0.01, 0.02, 0.02}}, {2, 0.3, {0.1, 0.1, 0.2, 0.2}}};
  user.modulation_levels = {2, 4};
  user.gain_ratio = 2.0;
  user.p_tot = 1e9;
  user.weight = 1.5;
  const double w0 = 0.01;
  const auto opts = digital_candidates(user, w0);
  ASSERT_EQ(opts.size(), 4u);
  // Candidate 0, QPSK: groups (0.02, 0.02) | (0.01, 0.01) -> targets 0.02, 0.01.
  const double p00 = (invert_ber(0.02, 2) + invert_ber(0.01, 2)) / 2.0;
  EXPECT_EQ(opts[0].candidate, 0u);
  EXPECT_EQ(opts[0].modulation, 2);
  EXPECT_EQ(opts[0].channel_uses, 2u);
  EXPECT_NEAR(opts[0].required_power, p00, 1e-12 * p00);
  EXPECT_NEAR(opts[0].objective, 1.5 * 0.1 + w0 * p00, 1e-12);
  // Candidate 1, 16-QAM: one group with target 0.1.
  EXPECT_EQ(opts[3].candidate, 1u);
  EXPECT_EQ(opts[3].modulation, 4);
  EXPECT_EQ(opts[3].channel_uses, 1u);
  EXPECT_NEAR(opts[3].required_power, invert_ber(0.1, 4) / 2.0, 1e-12);

  // Every bit meets its target at the realized gain.
  for (const auto& o : opts) {
    const auto targets = digital_group_targets(user.candidates[o.candidate].flip_probs, o.modulation);
    for (std::size_t t = 0; t < targets.size(); ++t)
      EXPECT_LE(ber_qam(o.powers[t] * user.gain_ratio, o.modulation, 1.0), targets[t] * (1 + 1e-12));
  }

  auto doubled = user;
  doubled.gain_ratio = 1.0;
  const auto opts2 = digital_candidates(doubled, w0);
  for (std::size_t i = 0; i < opts.size(); ++i)
    EXPECT_NEAR(opts2[i].required_power, 2.0 * opts[i].required_power, 1e-12 * opts2[i].required_power);

  auto perfect = user;
  perfect.gain_ratio = 1e15;
  for (const auto& o : digital_candidates(perfect, w0))
    EXPECT_NEAR(o.objective, 1.5 * user.candidates[o.candidate].loss, 1e-9);

  auto starved = user;
  starved.p_tot = 1e-6;
  EXPECT_THROW(digital_candidates(starved, w0), InfeasibleError);
}

TEST(DigitalCandidates, ErrorFreeBitsAreNeverFeasible) {
  DigitalUser user;
  user.candidates = {{2, 0.1, {0.0, 0.1}}, {1, 0.2, {0.2, 0.2}}};
  user.gain_ratio = 1.0;
  user.p_tot = 1e9;
  for (const auto& o : digital_candidates(user, 0.0)) EXPECT_EQ(o.candidate, 1u);
}

TEST(Mckp, SingleGroupAndInfeasible) {
  const std::vector<std::vector<MckpItem>> one{{{5, 1.0}, {2, 3.0}, {1, 0.5}, {1, 0.5}}};
  const auto sel = solve_mckp(one, 4);
  EXPECT_EQ(sel.choice, std::vector<std::size_t>{2});
  EXPECT_EQ(solve_mckp(std::vector<std::vector<MckpItem>>{{{5, 1.0}, {3, 2.0}}}, 4).choice,
            std::vector<std::size_t>{1});
  const std::vector<std::vector<MckpItem>> tight{{{3, 1.0}}, {{2, 1.0}}};
  EXPECT_THROW(solve_mckp(tight, 4), InfeasibleError);
  EXPECT_THROW(solve_mckp_full_search(tight, 4), InfeasibleError);
  EXPECT_THROW(solve_mckp(tight, 0), ParameterError);
}

TEST(Mckp, DynamicProgrammingMatchesFullSearch) {
  std::mt19937_64 gen(44);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t k = 1 + gen() % 4;
    std::vector<std::vector<MckpItem>> groups(k);
    std::size_t min_total = 0;
    for (auto& g : groups) {
      const std::size_t size = 1 + gen() % 6;
      std::size_t lightest = 100;
      for (std::size_t j = 0; j < size; ++j) {
        // Coarse costs make ties common.
        g.push_back({1 + gen() % 8, static_cast<double>(gen() % 5)});
        lightest = std::min(lightest, g.back().weight);
      }
      min_total += lightest;
    }
    const std::size_t cap = min_total + gen() % 10;
    const auto dp = solve_mckp(groups, cap);
    const auto full = solve_mckp_full_search(groups, cap);
    EXPECT_EQ(dp.cost, full.cost);
    EXPECT_EQ(dp.choice, full.choice);
    EXPECT_LE(dp.weight, cap);
  }
}

TEST(DigitalCalibrate, SharedBudgetForcesDenserModulation) {
  DigitalUser a;
  a.candidates = {{8, 0.1, std::vector<double>(8, 0.01)}, {4, 0.2, std::vector<double>(8, 0.1)}};
  a.modulation_levels = {2, 4};
  a.gain_ratio = 100.0;
  a.p_tot = 1e6;
  const std::vector<DigitalUser> users{a, a};
  auto plan = digital_calibrate(users, 1e-6, 100);
  for (const auto& u : plan.users) {
    EXPECT_EQ(u.candidate, 0u);
    EXPECT_EQ(u.modulation, 2);
  }
  plan = digital_calibrate(users, 1e-6, 6);
  EXPECT_LE(plan.channel_uses, 6u);
  EXPECT_EQ(plan.users[0].modulation + plan.users[1].modulation, 6);
  const auto full = digital_calibrate(users, 1e-6, 6, MckpMethod::kFullSearch);
  EXPECT_EQ(full.objective, plan.objective);
  EXPECT_THROW(digital_calibrate(users, 1e-6, 3), InfeasibleError);
}

TEST(DigitalCalibrate, SelectedBudgetGrowsWithGain) {
  DigitalUser user;
  user.candidates = {{12, 0.01, std::vector<double>(16, 1e-4)},
                     {8, 0.05, std::vector<double>(16, 1e-2)},
                     {4, 0.2, std::vector<double>(16, 0.1)}};
  user.p_tot = 200.0;
  const std::vector<UnitGainTable> tables{unit_gain_table(user.candidates, user.modulation_levels)};
  double prev_budget = 0.0;
  for (double db = -10.0; db <= 40.0; db += 2.5) {
    user.gain_ratio = std::pow(10.0, db / 10.0);
    const std::vector<DigitalUser> users{user};
    try {
      const auto plan = digital_calibrate(users, tables, 1e-3, 64);
      const double budget = user.candidates[plan.users[0].candidate].budget_bits;
      EXPECT_GE(budget, prev_budget);
      prev_budget = budget;
    } catch (const InfeasibleError&) {
      EXPECT_EQ(prev_budget, 0.0);
    }
  }
  EXPECT_EQ(prev_budget, 12.0);
}
