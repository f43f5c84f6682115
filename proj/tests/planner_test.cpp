// Copyright 2026 The qkd2way Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qkd2way/planner.hpp"

using namespace qkd2way;

namespace {

PlannerConfig unbounded() { return PlannerConfig{}; }

PlannerConfig budget(std::uint64_t n) {
    PlannerConfig c;
    c.n_sifted = n;
    return c;
}

/// Smallest qualifying odd width by plain linear search: odd parity of w bit
/// flips in closed form, the phase majority by direct binomial summation.
std::optional<std::uint64_t> linear_choose_r(const PauliRates& r, double target, std::uint64_t r_max) {
    const double margin = std::min(target, steane_threshold() - kSteaneMargin);
    for (std::uint64_t w = 3; w <= r_max; w += 2) {
        const long n = static_cast<long>(w);
        const double bit = 0.5 * (1.0 - std::pow(1.0 - 2.0 * r.bit_error(), n));
        const double phase = r.phase_error() == 0.0 ? 0.0 : oracle::binomial_range(n, r.phase_error(), (n + 1) / 2, n);
        if (bit + phase < margin) {
            return w;
        }
    }
    return std::nullopt;
}

}  // namespace

// ep_converges and the closed-form threshold ----------------------------------

TEST(EpConverges, DepolarizingExamples) {
    EXPECT_TRUE(ep_converges(depolarizing(0.25)));
    EXPECT_FALSE(ep_converges(depolarizing(0.28)));
    EXPECT_FALSE(ep_converges(depolarizing(0.30)));
}

TEST(EpConverges, StrictAtTheBoundary) {
    // The exact boundary is not representable; the neighbours straddle it.
    const double b = 0.5 - 0.1 * std::sqrt(5.0);
    EXPECT_TRUE(ep_converges(depolarizing(b - 1e-12)));
    EXPECT_FALSE(ep_converges(depolarizing(b + 1e-12)));
    // A rate vector on the boundary exactly: (p_i - p_z)^2 = (p_i + p_z)(p_x + p_y).
    EXPECT_FALSE(ep_converges(PauliRates{0.5, 0.125, 0.125, 0.25}));
}

TEST(EpConverges, MatchesTheDepolarizingQuadratic) {
    for (int i = 0; i <= 600; ++i) {
        const double b = i * (2.0 / 3.0) / 600;
        const double p = depolarizing(b).p_i;
        const double q = 20 * p * p - 10 * p - 1;
        if (std::abs(q) > 1e-9) {
            EXPECT_EQ(ep_converges(depolarizing(b)), q > 0) << b;
        }
    }
}

TEST(DepolarizingThreshold, ClosedForms) {
    const auto t = depolarizing_threshold();
    EXPECT_NEAR(t.bit_error, 0.5 - 0.1 * std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(t.bit_error, 0.2763932, 1e-7);
    EXPECT_NEAR(t.channel_error, 0.75 - 0.15 * std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(t.channel_error, 0.4145898, 1e-7);
    EXPECT_NEAR(t.p_i_min, 0.25 + 0.15 * std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(20 * t.p_i_min * t.p_i_min - 10 * t.p_i_min - 1, 0.0, 1e-12);
}

// choose_r --------------------------------------------------------------------

TEST(ChooseR, NoiselessIsThree) { EXPECT_EQ(choose_r(PauliRates{1, 0, 0, 0}, 0.05), 3u); }

TEST(ChooseR, AfterTwoRoundsAtTenPercent) {
    const auto after = ep_map_k(depolarizing(0.10), 2);
    const auto r = choose_r(after, 0.05);
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(*r % 2, 1u);
    EXPECT_EQ(r, linear_choose_r(after, 0.05, 1001));
}

TEST(ChooseR, AgreesWithLinearSearch) {
    std::mt19937_64 gen(31);
    int found = 0;
    for (int i = 0; i < 100; ++i) {
        const auto r = oracle::random_rates(gen);
        const auto fast = choose_r(r, 0.05, 1001);
        EXPECT_EQ(fast, linear_choose_r(r, 0.05, 1001));
        found += fast ? 1 : 0;
    }
    // Random rates rarely qualify; the sweep below exercises the other branch.
    for (double b = 0.001; b < 0.05; b += 0.002) {
        const auto r = ep_map_k(depolarizing(b), 1);
        EXPECT_EQ(choose_r(r, 0.05, 1001), linear_choose_r(r, 0.05, 1001)) << b;
        found += choose_r(r, 0.05, 1001) ? 1 : 0;
    }
    EXPECT_GT(found, 10);
}

TEST(ChooseR, NoneWhenBitErrorTooLargeForEveryWidth) {
    // Odd-parity probability of r flips at 10% stays above 5% for r >= 3.
    EXPECT_FALSE(choose_r(PauliRates{0.8, 0.1, 0.0, 0.1}, 0.05, 10001).has_value());
    EXPECT_FALSE(choose_r(depolarizing(0.2), 0.05).has_value());
}

TEST(ChooseR, MarginUsesTheSteaneRootWhenTighter) {
    EXPECT_NEAR(effective_target(0.05), steane_threshold() - kSteaneMargin, 1e-15);
    EXPECT_EQ(effective_target(0.03), 0.03);
}

// steane_levels_needed ---------------------------------------------------------

TEST(SteaneLevelsNeeded, ZeroErrorNeedsNoLevels) { EXPECT_EQ(steane_levels_needed(0.0, 1e-12, 1000), 0u); }

TEST(SteaneLevelsNeeded, FivePercentFinite) {
    const unsigned levels = steane_levels_needed(0.05, 1e-9, 1000);
    double l = 0.05;
    for (unsigned i = 0; i < levels; ++i) {
        l = steane_level_map(l);
    }
    EXPECT_LE(1000 * l, 1e-9);
    ASSERT_GT(levels, 0u);
    double before = 0.05;
    for (unsigned i = 0; i + 1 < levels; ++i) {
        before = steane_level_map(before);
    }
    EXPECT_GT(1000 * before, 1e-9);
}

TEST(SteaneLevelsNeeded, AboveTheRootIsInfeasible) {
    EXPECT_THROW(steane_levels_needed(0.06, 1e-9, 1000), InfeasibleError);
    EXPECT_THROW(steane_levels_needed(steane_threshold(), 1e-9, 1000), InfeasibleError);
}

// plan_schedule ----------------------------------------------------------------

TEST(PlanSchedule, Noiseless) {
    const auto p = plan_schedule(PauliRates{1, 0, 0, 0}, unbounded());
    ASSERT_TRUE(p.feasible);
    EXPECT_EQ(p.k, 0u);
    EXPECT_EQ(p.r, 3u);
    EXPECT_EQ(p.levels, 0u);
    EXPECT_NEAR(p.predicted_yield, 1.0 / 3, 1e-15);
    EXPECT_EQ(p.predicted_final_error, 0.0);
}

TEST(PlanSchedule, AboveThresholdIsInfeasible) {
    for (double b : {0.28, 0.30, 0.5}) {
        const auto p = plan_schedule(depolarizing(b), unbounded());
        EXPECT_FALSE(p.feasible);
        EXPECT_EQ(p.reason, Infeasibility::ep_diverges);
    }
}

TEST(PlanSchedule, TwentyFivePercentIsFeasible) {
    const auto p = plan_schedule(depolarizing(0.25), unbounded());
    ASSERT_TRUE(p.feasible);
    EXPECT_GT(p.k, 0u);
    EXPECT_EQ(p.r % 2, 1u);
    EXPECT_LT(p.predicted_final_error, 0.05);
}

TEST(PlanSchedule, StageRatesAreNormalizedAndReproduceTheFinalError) {
    for (double b : {0.0, 0.02, 0.05, 0.1, 0.15, 0.2}) {
        const auto p = plan_schedule(depolarizing(b), unbounded());
        ASSERT_TRUE(p.feasible) << b;
        ASSERT_EQ(p.stage_rates.size(), p.k + 1u);
        ASSERT_EQ(p.survivals.size(), p.k + 0u);
        for (const auto& r : p.stage_rates) {
            EXPECT_TRUE(r.is_normalized(1e-9));
        }
        if (p.bound_based) {
            continue;
        }
        // Forward through the same maps.
        PauliRates cur = depolarizing(b);
        double yield = 1.0;
        for (unsigned j = 0; j < p.k; ++j) {
            const auto s = ep_map(cur);
            cur = s.rates;
            EXPECT_EQ(cur, p.stage_rates[j]);
            EXPECT_EQ(s.survival, p.survivals[j]);
            yield *= s.survival / 2;
        }
        const auto pec = pec_predict(cur, p.r);
        EXPECT_EQ(pec.bit_error_exact + pec.phase_error_exact, p.predicted_final_error);
        EXPECT_EQ(pec.exact_rates, p.stage_rates.back());
        EXPECT_LT(p.predicted_final_error, effective_target(0.05));
        EXPECT_NEAR(p.predicted_yield, yield / p.r / std::pow(7.0, p.levels), 1e-15 + 1e-12 * p.predicted_yield);
    }
}

TEST(PlanSchedule, FeasibilityIsMonotoneInBitError) {
    bool seen_infeasible = false;
    for (int i = 0; i < 50; ++i) {
        const double b = 0.30 * i / 49;
        const bool ok = plan_schedule(depolarizing(b), unbounded()).feasible;
        if (!ok) {
            seen_infeasible = true;
        }
        EXPECT_FALSE(ok && seen_infeasible) << "feasible again at " << b;
    }
    EXPECT_TRUE(seen_infeasible);
}

TEST(PlanSchedule, FiniteBudgetFeasibilityIsMonotone) {
    bool seen_infeasible = false;
    for (int i = 0; i < 50; ++i) {
        const double b = 0.25 * i / 49;
        const bool ok = plan_schedule(depolarizing(b), budget(10'000'000)).feasible;
        seen_infeasible = seen_infeasible || !ok;
        EXPECT_FALSE(ok && seen_infeasible) << b;
    }
}

TEST(PlanSchedule, FiniteBudgetRespectsTheBits) {
    const auto p = plan_schedule(depolarizing(0.10), budget(10'000'000));
    ASSERT_TRUE(p.feasible);
    EXPECT_GE(p.predicted_yield * 1e7, 1.0);
    EXPECT_FALSE(p.bound_based);
    const auto tiny = plan_schedule(depolarizing(0.10), budget(1000));
    EXPECT_FALSE(tiny.feasible);
    EXPECT_EQ(tiny.reason, Infeasibility::bits_exhausted);
}

TEST(PlanSchedule, FiniteBudgetPicksTheBestYield) {
    // Exhaustive search over k, every odd width and the level count each needs.
    auto cfg = budget(5'000'000);
    cfg.r_max = 301;
    for (double b : {0.02, 0.05, 0.10, 0.15}) {
        const PauliRates rates = depolarizing(b);
        const auto p = plan_schedule(rates, cfg);
        const double target = effective_target(cfg.error_target);
        double best = 0.0;
        PauliRates cur = rates;
        double ep_yield = 1.0;
        for (unsigned k = 0; k <= cfg.max_k; ++k) {
            if (k > 0) {
                const auto e = oracle::ep_enumerated(cur);
                cur = PauliRates{e.out[0], e.out[1], e.out[2], e.out[3]};
                ep_yield *= e.pass / 2;
            }
            const double n_ep = 5e6 * ep_yield;
            for (long r = 3; r <= 301 && r <= n_ep; r += 2) {
                const double bit = 0.5 * (1.0 - std::pow(1.0 - 2.0 * cur.bit_error(), r));
                const double phase = cur.phase_error() == 0.0 ? 0.0 : oracle::binomial_range(r, cur.phase_error(), (r + 1) / 2, r);
                double lambda = bit + phase;
                if (lambda >= target) {
                    continue;
                }
                double blocks = std::floor(n_ep / r);
                for (int levels = 0; blocks >= 1.0; ++levels) {
                    if (blocks * lambda <= cfg.key_fidelity_epsilon) {
                        best = std::max(best, ep_yield / r / std::pow(7.0, levels));
                        break;
                    }
                    lambda = oracle::binomial_range(7, lambda, 2, 7);
                    blocks = std::floor(blocks / 7.0);
                }
            }
        }
        ASSERT_EQ(p.feasible, best > 0.0) << b;
        if (p.feasible) {
            EXPECT_NEAR(p.predicted_yield, best, 1e-9 * best) << b;
        }
    }
}

TEST(PlanSchedule, UnboundedReachesPastTheExactWidthCap) {
    const auto p = plan_schedule(depolarizing(0.27), unbounded());
    ASSERT_TRUE(p.feasible);
    EXPECT_TRUE(p.bound_based);
    EXPECT_GT(p.log_r, std::log(static_cast<double>(kDefaultRMax)));
}

TEST(PlannerConfig, Validation) {
    PlannerConfig c;
    c.error_target = 0.0;
    EXPECT_THROW(c.validate(), std::domain_error);
    c.error_target = 0.06;
    EXPECT_THROW(c.validate(), std::domain_error);
    c = PlannerConfig{};
    c.key_fidelity_epsilon = 1.0;
    EXPECT_THROW(c.validate(), std::domain_error);
}

// threshold_sweep --------------------------------------------------------------

TEST(ThresholdSweep, FindsTheDepolarizingEdge) {
    const auto s = threshold_sweep(0.05, 0.35, 1e-4, unbounded());
    EXPECT_EQ(s.status, SweepStatus::converged);
    EXPECT_NEAR(s.threshold, 0.2764, 1e-4);
    EXPECT_NEAR(s.threshold, depolarizing_threshold().bit_error, 1e-4);
}

TEST(ThresholdSweep, BracketEntirelyAbove) {
    const auto s = threshold_sweep(0.3, 0.4, 1e-4, unbounded());
    EXPECT_EQ(s.status, SweepStatus::lower_infeasible);
}

TEST(ThresholdSweep, BracketEntirelyBelow) {
    EXPECT_EQ(threshold_sweep(0.01, 0.2, 1e-4, unbounded()).status, SweepStatus::upper_feasible);
}

TEST(ThresholdSweep, ConvergesToTheClosedFormAsTolShrinks) {
    const double exact = depolarizing_threshold().bit_error;
    double prev = 1.0;
    for (double tol : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        const double err = std::abs(threshold_sweep(0.05, 0.35, tol, unbounded()).threshold - exact);
        EXPECT_LE(err, std::max(tol, 1e-6));
        EXPECT_LE(err, prev + 1e-6);
        prev = err;
    }
}

TEST(ThresholdSweep, BadArguments) {
    EXPECT_THROW(threshold_sweep(0.3, 0.2, 1e-4, unbounded()), std::domain_error);
    EXPECT_THROW(threshold_sweep(0.1, 0.2, 0.0, unbounded()), std::domain_error);
}
