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
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qkd2way/analytic.hpp"

using namespace qkd2way;

namespace {

void expect_rates_near(const PauliRates& a, const PauliRates& b, double tol) {
    EXPECT_NEAR(a.p_i, b.p_i, tol);
    EXPECT_NEAR(a.p_x, b.p_x, tol);
    EXPECT_NEAR(a.p_y, b.p_y, tol);
    EXPECT_NEAR(a.p_z, b.p_z, tol);
}

void expect_rates_near(const PauliRates& a, const std::array<double, 4>& ixyz, double tol) {
    expect_rates_near(a, PauliRates{ixyz[0], ixyz[1], ixyz[2], ixyz[3]}, tol);
}

double sum(const PauliRates& r) { return r.p_i + r.p_x + r.p_y + r.p_z; }

}  // namespace

// ep_map ----------------------------------------------------------------------

TEST(EpMap, NoiselessFixedPoint) {
    const auto s = ep_map(PauliRates{1, 0, 0, 0});
    EXPECT_EQ(s.rates, (PauliRates{1, 0, 0, 0}));
    EXPECT_EQ(s.survival, 1.0);
}

TEST(EpMap, PureDephasingFixedPoint) {
    const auto s = ep_map(PauliRates{0.5, 0, 0, 0.5});
    EXPECT_EQ(s.rates, (PauliRates{0.5, 0, 0, 0.5}));
    EXPECT_EQ(s.survival, 1.0);
}

TEST(EpMap, SurvivalOfDephasingIsOne) {
    // Phase-only frames never fail the parity comparison.
    EXPECT_EQ(ep_map(PauliRates{0.5, 0, 0, 0.5}).survival, 1.0);
    EXPECT_DOUBLE_EQ(ep_map(PauliRates{0.5, 0.5, 0, 0}).survival, 0.5);
}

TEST(EpMap, TwentyPercentDepolarizing) {
    const auto s = ep_map(PauliRates{0.7, 0.1, 0.1, 0.1});
    EXPECT_NEAR(s.rates.p_i, 0.5 / 0.68, 1e-15);
    EXPECT_NEAR(s.rates.p_x, 0.02 / 0.68, 1e-15);
    EXPECT_NEAR(s.rates.p_y, 0.02 / 0.68, 1e-15);
    EXPECT_NEAR(s.rates.p_z, 0.14 / 0.68, 1e-15);
    EXPECT_NEAR(s.rates.p_i, 0.735294117647, 1e-12);
    EXPECT_NEAR(s.rates.p_z, 0.205882352941, 1e-12);
    EXPECT_NEAR(s.survival, 0.68, 1e-15);
}

TEST(EpMap, MatchesBilateralXorEnumeration) {
    std::mt19937_64 gen(11);
    for (int i = 0; i < 500; ++i) {
        const auto r = oracle::random_rates(gen);
        const auto s = ep_map(r);
        const auto o = oracle::ep_enumerated(r);
        expect_rates_near(s.rates, o.out, 1e-14);
        EXPECT_NEAR(s.survival, o.pass, 1e-14);
    }
}

TEST(EpMap, OutputNormalizedAndIdentityStaysDominant) {
    std::mt19937_64 gen(12);
    for (int i = 0; i < 2000; ++i) {
        const auto r = oracle::random_rates(gen);
        const auto out = ep_map(r).rates;
        EXPECT_NEAR(sum(out), 1.0, 1e-14);
        if (r.p_i > 0.5) {
            EXPECT_GT(out.p_i, 0.5);
            EXPECT_LT(out.p_z, 0.5);
        }
    }
}

TEST(EpMap, RejectsUnnormalized) { EXPECT_THROW(ep_map(PauliRates{0.9, 0.9, 0, 0}), std::domain_error); }

// ep_map_k --------------------------------------------------------------------

TEST(EpMapK, ZeroRoundsIsIdentity) {
    const PauliRates r{0.6, 0.15, 0.05, 0.2};
    EXPECT_EQ(ep_map_k(r, 0), r);
}

TEST(EpMapK, OneRoundIsEpMap) {
    std::mt19937_64 gen(13);
    for (int i = 0; i < 200; ++i) {
        const auto r = oracle::random_rates(gen);
        expect_rates_near(ep_map_k(r, 1), ep_map(r).rates, 1e-14);
    }
}

TEST(EpMapK, TwoRoundsIsEpMapTwice) {
    const PauliRates r{0.7, 0.1, 0.1, 0.1};
    expect_rates_near(ep_map_k(r, 2), ep_map(ep_map(r).rates).rates, 1e-15);
}

TEST(EpMapK, EqualsIteratedMapOnRandomRates) {
    std::mt19937_64 gen(14);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto r = oracle::random_rates(gen);
        PauliRates it = r;
        for (unsigned k = 1; k <= 16; ++k) {
            it = ep_map(it).rates;
            const auto closed = ep_map_k(r, k);
            for (auto [a, b] : {std::pair{closed.p_i, it.p_i}, std::pair{closed.p_x, it.p_x},
                                std::pair{closed.p_y, it.p_y}, std::pair{closed.p_z, it.p_z}}) {
                worst = std::max(worst, std::abs(a - b));
            }
        }
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(EpMapK, NormalizesForEveryK) {
    std::mt19937_64 gen(15);
    for (int i = 0; i < 200; ++i) {
        const auto r = oracle::random_rates(gen);
        for (unsigned k : {1u, 2u, 5u, 10u, 20u, 40u, 64u}) {
            EXPECT_NEAR(sum(ep_map_k(r, k)), 1.0, 1e-13) << "k=" << k;
        }
    }
}

TEST(EpMapK, HighPrecisionReference) {
    // 50-digit iteration of the one-round map on (0.7, 0.1, 0.1, 0.1).
    const auto r5 = ep_map_k(PauliRates{0.7, 0.1, 0.1, 0.1}, 5);
    EXPECT_NEAR(r5.p_i, 0.50005022621286031662, 1e-14);
    EXPECT_NEAR(r5.p_z, 0.49994977378713968333, 1e-14);
    EXPECT_NEAR(r5.p_x / 2.7105054312137610849e-20, 1.0, 1e-10);
    EXPECT_NEAR(r5.p_y / 2.7105054312137610849e-20, 1.0, 1e-10);
}

TEST(EpMapK, BitErrorsVanishAndIdentityAndPhaseSplit) {
    const auto r = ep_map_k(PauliRates{0.7, 0.1, 0.1, 0.1}, 30);
    EXPECT_EQ(r.p_x + r.p_y, 0.0);
    EXPECT_NEAR(r.p_i, 0.5, 1e-15);
    EXPECT_NEAR(r.p_z, 0.5, 1e-15);
}

TEST(EpLogMargins, AgreeWithRatesWhereRepresentable) {
    const PauliRates r{0.6, 0.15, 0.05, 0.2};
    for (unsigned k = 0; k <= 5; ++k) {
        const auto out = ep_map_k(r, k);
        const auto m = ep_log_margins(r, k);
        EXPECT_NEAR(m.log_bit_error, std::log(out.bit_error()), 1e-10) << k;
        EXPECT_NEAR(m.log_phase_gap, std::log(0.5 - out.phase_error()), 1e-9) << k;
    }
}

TEST(EpLogMargins, FiniteWhereRatesUnderflow) {
    // After 12 rounds the bit error is about 1e-2467.
    const auto m = ep_log_margins(PauliRates{0.6, 0.15, 0.05, 0.2}, 12);
    EXPECT_NEAR(m.log_bit_error, std::log(4.5840096688871179141) - 2467 * std::log(10.0) + std::log(2.0), 1e-6);
    EXPECT_TRUE(std::isfinite(m.log_phase_gap));
}

// pec_predict -----------------------------------------------------------------

TEST(PecPredict, Noiseless) {
    const auto p = pec_predict(PauliRates{1, 0, 0, 0}, 3);
    EXPECT_EQ(p.bit_error_exact, 0.0);
    EXPECT_EQ(p.phase_error_exact, 0.0);
    EXPECT_EQ(p.exact_rates, (PauliRates{1, 0, 0, 0}));
}

TEST(PecPredict, TwentyPercentDepolarizingWidthThree) {
    const auto p = pec_predict(depolarizing(0.2), 3);
    EXPECT_NEAR(p.bit_error_exact, (1 - 0.6 * 0.6 * 0.6) / 2, 1e-15);
    EXPECT_NEAR(p.bit_error_exact, 0.392, 1e-15);
    EXPECT_NEAR(p.phase_error_exact, 3 * 0.04 * 0.8 + 0.008, 1e-15);
    EXPECT_NEAR(p.phase_error_exact, 0.104, 1e-15);
    EXPECT_NEAR(p.bit_error_bound, 0.6, 1e-15);
    const auto o = oracle::pec_enumerated(depolarizing(0.2), 3);
    expect_rates_near(p.exact_rates, o, 1e-15);
}

TEST(PecPredict, MatchesEnumerationForSmallWidths) {
    std::mt19937_64 gen(21);
    for (int width : {3, 5, 7}) {
        for (int i = 0; i < 100; ++i) {
            const auto r = oracle::random_rates(gen);
            const auto p = pec_predict(r, static_cast<std::uint64_t>(width));
            const auto o = oracle::pec_enumerated(r, width);
            expect_rates_near(p.exact_rates, o, 1e-12);
            EXPECT_NEAR(p.bit_error_exact, o[1] + o[2], 1e-12);
            EXPECT_NEAR(p.phase_error_exact, o[2] + o[3], 1e-12);
        }
    }
}

TEST(PecPredict, PhaseTailHighPrecisionReference) {
    struct Case {
        std::uint64_t r;
        double q;
        double expected;
    };
    // 50-digit binomial sums.
    for (const auto& c : {Case{101, 0.3, 0.000012942554335154226679}, Case{1001, 0.45, 0.00075539191181722406748},
                          Case{2049, 0.4, 2.9310621479793741708e-20}, Case{4001, 0.47, 0.000072679444401913179087}}) {
        const PauliRates r{1 - c.q, 0, 0, c.q};
        EXPECT_NEAR(pec_predict(r, c.r).phase_error_exact / c.expected, 1.0, 1e-10) << c.r;
    }
}

TEST(PecPredict, DirectSummationOracleForTails) {
    for (std::uint64_t r : {9ull, 51ull, 301ull}) {
        for (double q : {0.05, 0.2, 0.45, 0.6}) {
            const double expected = oracle::binomial_range(static_cast<long>(r), q, static_cast<long>((r + 1) / 2),
                                                           static_cast<long>(r));
            const double got = pec_predict(PauliRates{1 - q, 0, 0, q}, r).phase_error_exact;
            EXPECT_NEAR(got, expected, 1e-12 + 1e-9 * expected) << r << " " << q;
        }
    }
}

TEST(PecPredict, LargeWidthRouteAgreesWithDynamicProgramming) {
    std::mt19937_64 gen(22);
    for (int i = 0; i < 20; ++i) {
        const auto r = oracle::random_rates(gen);
        for (std::uint64_t width : {101ull, 999ull, 2047ull}) {
            const auto dp = detail::pec_joint_dp(r, width);
            const auto mix = detail::pec_joint_mixture(r, width);
            expect_rates_near(mix, dp, 1e-9);
        }
    }
}

TEST(PecPredict, LargeWidthOutputsNormalized) {
    const auto p = pec_predict(PauliRates{0.9, 1e-6, 1e-6, 0.099998}, 20001);
    EXPECT_NEAR(sum(p.exact_rates), 1.0, 1e-12);
    EXPECT_NEAR(p.exact_rates.bit_error(), p.bit_error_exact, 1e-12);
    EXPECT_NEAR(p.exact_rates.phase_error(), p.phase_error_exact, 1e-12);
}

TEST(PecPredict, ExactNeverExceedsBounds) {
    std::mt19937_64 gen(23);
    int checked = 0;
    for (int i = 0; i < 3000; ++i) {
        PauliRates r = oracle::random_rates(gen);
        const std::uint64_t width = 3 + 2 * (gen() % 40);
        const auto p = pec_predict(r, width);
        if (p.bit_error_bound <= 1.0) {
            EXPECT_LE(p.bit_error_exact, p.bit_error_bound + 1e-15);
        }
        checked += r.phase_error() < 0.5 ? 1 : 0;
        EXPECT_LE(p.phase_error_exact, std::min(p.phase_error_bound, p.phase_error_exp_bound) + 1e-15);
    }
    EXPECT_GT(checked, 500);
}

TEST(PecPredict, PhaseBoundsAreTrivialAtHalfOrAbove) {
    const auto p = pec_predict(PauliRates{0.3, 0.1, 0.3, 0.3}, 5);
    EXPECT_EQ(p.phase_error_bound, 1.0);
    EXPECT_EQ(p.phase_error_exp_bound, 1.0);
    EXPECT_GT(p.phase_error_exact, 0.5);
}

TEST(PecPredict, HeuristicWidthGivesAboutOnePercentBitError) {
    // Bit error 1e-4 and a width of about 0.01 / 1e-4.
    const PauliRates r{0.89995, 0.00005, 0.00005, 0.09995};
    const auto p = pec_predict(r, 101);
    EXPECT_NEAR(p.bit_error_bound, 0.0101, 1e-12);
    EXPECT_LT(p.bit_error_exact, 0.0101);
    EXPECT_LT(p.phase_error_exp_bound, 1e-13);
    EXPECT_LT(p.phase_error_exact, p.phase_error_exp_bound);
}

TEST(PecPredict, ExponentialBoundIsTrivialAtHalfPhase) {
    EXPECT_EQ(pec_predict(PauliRates{0.5, 0, 0, 0.5}, 5).phase_error_exp_bound, 1.0);
}

TEST(PecPredict, RejectsEvenOrNarrowWidths) {
    EXPECT_THROW(pec_predict(depolarizing(0.1), 4), std::domain_error);
    EXPECT_THROW(pec_predict(depolarizing(0.1), 1), std::domain_error);
    EXPECT_THROW(pec_predict(depolarizing(0.1), 0), std::domain_error);
}

// binomial_tail_bound ---------------------------------------------------------

TEST(BinomialTailBound, DominatesExactTailTen) {
    const double exact = oracle::binomial_range(10, 0.5, 0, 1);
    EXPECT_NEAR(exact, 0.0107421875, 1e-15);
    EXPECT_GE(binomial_tail_bound(10, 0.1, 0.5), exact);
}

TEST(BinomialTailBound, DominatesExactTailHundred) {
    const double exact = oracle::binomial_range(100, 0.4, 0, 20);
    EXPECT_NEAR(exact / 0.000016411877902122114915, 1.0, 1e-9);
    EXPECT_GE(binomial_tail_bound(100, 0.2, 0.4), exact);
}

TEST(BinomialTailBound, DominatesOnAGrid) {
    for (long n : {5L, 20L, 100L, 1000L}) {
        for (double p : {0.1, 0.3, 0.5, 0.8}) {
            for (double frac : {0.1, 0.5, 0.9}) {
                const double lambda = p * frac;
                const long k = static_cast<long>(std::floor(lambda * n));
                EXPECT_GE(binomial_tail_bound(n, lambda, p) * (1 + 1e-12), oracle::binomial_range(n, p, 0, k))
                    << n << " " << p << " " << lambda;
            }
        }
    }
}

TEST(BinomialTailBound, TendsToOneAsLambdaApproachesP) {
    EXPECT_NEAR(binomial_tail_bound(1000, 0.3 - 1e-9, 0.3), 1.0, 1e-9);
}

TEST(BinomialTailBound, NoUnderflowToNan) {
    const double v = binomial_tail_bound(1'000'000'000ull, 0.01, 0.5);
    EXPECT_FALSE(std::isnan(v));
    EXPECT_EQ(v, 0.0);
}

TEST(BinomialTailBound, ParameterOrdering) {
    EXPECT_THROW(binomial_tail_bound(10, 0.5, 0.4), std::domain_error);
    EXPECT_THROW(binomial_tail_bound(10, 0.0, 0.4), std::domain_error);
    EXPECT_THROW(binomial_tail_bound(10, 0.2, 1.0), std::domain_error);
    EXPECT_THROW(binomial_tail_bound(10, 0.3, 0.3), std::domain_error);
}

// Steane ----------------------------------------------------------------------

TEST(SteaneLevelMap, Endpoints) {
    EXPECT_EQ(steane_level_map(0.0), 0.0);
    EXPECT_DOUBLE_EQ(steane_level_map(1.0), 1.0);
}

TEST(SteaneLevelMap, ClosedForm) {
    for (double l : {0.01, 0.05, 0.2, 0.5, 0.9}) {
        EXPECT_NEAR(steane_level_map(l), 1 - std::pow(1 - l, 7) - 7 * std::pow(1 - l, 6) * l, 1e-15) << l;
    }
}

TEST(SteaneLevelMap, RelativePrecisionForTinyLambda) {
    EXPECT_NEAR(steane_level_map(1e-9) / (21e-18), 1.0, 1e-7);
}

TEST(SteaneLevelMap, NearFixedPointAtFivePointEight) { EXPECT_NEAR(steane_level_map(0.058), 0.058, 5e-4); }

TEST(SteaneLevelMap, MonotoneOnLowerHalf) {
    double prev = -1.0;
    for (int i = 0; i <= 5000; ++i) {
        const double v = steane_level_map(i * 0.5 / 5000);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(SteaneLevelMap, UpperBoundsTheExactPureXFailure) {
    for (double l : {0.001, 0.02, 0.05, 0.2}) {
        EXPECT_LE(oracle::steane_exact_failure(l), steane_level_map(l)) << l;
    }
}

TEST(SteaneLevelMap, Domain) {
    EXPECT_THROW(steane_level_map(-0.1), std::domain_error);
    EXPECT_THROW(steane_level_map(1.1), std::domain_error);
}

TEST(SteaneThreshold, AboutFivePointEightPercent) {
    const double root = steane_threshold();
    EXPECT_NEAR(root, 0.0580, 5e-4);
    // 50-digit root of the fixed-point equation.
    EXPECT_NEAR(root, 0.057850265713676691916, 1e-10);
    EXPECT_NEAR(steane_level_map(root), root, 1e-9);
}

TEST(SteaneThreshold, BelowTheRootIterationDecreasesToZero) {
    double l = 0.03;
    for (int i = 0; i < 10; ++i) {
        const double next = steane_level_map(l);
        EXPECT_LT(next, l);
        l = next;
    }
    EXPECT_LT(l, 1e-100);
}
