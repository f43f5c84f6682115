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

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "qkd2way/analytic.hpp"
#include "qkd2way/pauli.hpp"

namespace qkd2way {

inline constexpr std::uint64_t kDefaultRMax = 100000;
inline constexpr unsigned kDefaultMaxK = 30;
/// Post-PEC error must stay this far below the Steane fixed point.
inline constexpr double kSteaneMargin = 0.008;

/// Raised when the post-PEC error is at or above the Steane fixed point.
class InfeasibleError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

struct PlannerConfig {
    double error_target = 0.05;
    double key_fidelity_epsilon = 1e-6;
    /// Bits available after sifting and testing; nullopt plans for unbounded n.
    std::optional<std::uint64_t> n_sifted;
    unsigned max_k = kDefaultMaxK;
    std::uint64_t r_max = kDefaultRMax;

    void validate() const {
        if (!(error_target > 0.0 && error_target < steane_threshold())) {
            throw std::domain_error("PlannerConfig: error_target must lie in (0, steane_threshold)");
        }
        if (!(key_fidelity_epsilon > 0.0 && key_fidelity_epsilon < 1.0)) {
            throw std::domain_error("PlannerConfig: key_fidelity_epsilon must lie in (0, 1)");
        }
        if (r_max < 3) {
            throw std::domain_error("PlannerConfig: r_max must be at least 3");
        }
    }

    bool operator==(const PlannerConfig&) const = default;
};

enum class Infeasibility : std::uint8_t {
    none = 0,
    ep_diverges = 1,     // EP never drives the phase gap past the bit error
    no_pec_width = 2,    // no admissible r within the search limits
    bits_exhausted = 3,  // r or the Steane blocks exceed the remaining bits
};

inline std::string_view to_string(Infeasibility v) {
    switch (v) {
        case Infeasibility::none: return "none";
        case Infeasibility::ep_diverges: return "ep_diverges";
        case Infeasibility::no_pec_width: return "no_pec_width";
        case Infeasibility::bits_exhausted: return "bits_exhausted";
    }
    return "unknown";
}

/// Chosen (k EP rounds, PEC width r, Steane levels) and its predictions.
struct SchedulePlan {
    bool feasible = false;
    Infeasibility reason = Infeasibility::none;
    unsigned k = 0;
    /// Saturates at UINT64_MAX when only log_r is representable.
    std::uint64_t r = 0;
    double log_r = 0.0;
    unsigned levels = 0;
    /// Rates after each EP round, then after PEC (k + 1 entries when feasible).
    std::vector<PauliRates> stage_rates;
    /// Pair survival probability of each EP round.
    std::vector<double> survivals;
    /// bit_error_exact + phase_error_exact after PEC (bound values when bound_based).
    double predicted_final_error = 1.0;
    /// Fraction of planned-on bits that end up as key bits.
    double predicted_yield = 0.0;
    double log_yield = -std::numeric_limits<double>::infinity();
    /// r lies beyond r_max and the prediction comes from the log-domain bounds.
    bool bound_based = false;

    bool operator==(const SchedulePlan&) const = default;
};

/// min(target, steane_threshold - margin): the error the PEC output must beat.
inline double effective_target(double error_target) {
    return std::min(error_target, steane_threshold() - kSteaneMargin);
}

/// Repeated EP eventually makes one PEC round effective iff
/// (p_i - p_z)^2 > (p_i + p_z)(p_x + p_y).
inline bool ep_converges(const PauliRates& rates) {
    require_normalized(rates);
    const double contrast = rates.p_i - rates.p_z;
    return contrast * contrast > (rates.p_i + rates.p_z) * (rates.p_x + rates.p_y);
}

struct DepolarizingThreshold {
    double bit_error = 0.0;
    double channel_error = 0.0;
    double p_i_min = 0.0;
};

/// Depolarizing boundary of ep_converges: the positive root of
/// 20 p^2 - 10 p - 1 = 0, i.e. p_i = 0.25 + 0.15 sqrt(5).
inline DepolarizingThreshold depolarizing_threshold() {
    constexpr double a = 20.0, b = -10.0, c = -1.0;
    const double root = (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
    DepolarizingThreshold t;
    t.p_i_min = root;
    t.channel_error = 1.0 - root;
    t.bit_error = 2.0 * t.channel_error / 3.0;
    return t;
}

namespace detail {

inline std::uint64_t largest_odd_at_most(std::uint64_t n) { return n % 2 == 1 ? n : n - 1; }

/// Smallest odd r in [3, r_cap] with exact PEC error bit + phase < target.
inline std::optional<std::uint64_t> smallest_pec_width(const PauliRates& rates, double target, std::uint64_t r_cap) {
    if (r_cap < 3) {
        return std::nullopt;
    }
    const double bit_in = rates.bit_error();
    const double phase_in = rates.phase_error();
    const std::uint64_t r_hi = largest_odd_at_most(r_cap);
    // The majority-vote failure probability is non-increasing over odd r when
    // phase_in < 1/2, so phase(r_hi) is a floor for every r in range.
    const double phase_floor = pec_phase_exact(phase_in, r_hi);
    if (phase_floor >= target) {
        return std::nullopt;
    }
    std::uint64_t lo = 1, hi = (r_hi - 1) / 2;  // r = 2m + 1
    while (lo < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (pec_phase_exact(phase_in, 2 * mid + 1) < target) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    for (std::uint64_t r = 2 * lo + 1; r <= r_hi; r += 2) {
        const double bit = pec_bit_exact(bit_in, r);
        if (bit + phase_floor >= target) {
            return std::nullopt;
        }
        if (bit + pec_phase_exact(phase_in, r) < target) {
            return r;
        }
    }
    return std::nullopt;
}

/// Smallest L such that floor(n_bits / 7^L) blocks each fail with at most
/// lambda_L and blocks * lambda_L <= epsilon; nullopt when blocks run out first.
inline std::optional<unsigned> steane_levels_for_bits(double lambda, double epsilon, double n_bits) {
    if (lambda >= steane_threshold()) {
        return std::nullopt;
    }
    double blocks = std::floor(n_bits);
    for (unsigned levels = 0;; ++levels) {
        if (blocks < 1.0) {
            return std::nullopt;
        }
        if (blocks * lambda <= epsilon) {
            return levels;
        }
        lambda = steane_level_map(lambda);
        blocks = std::floor(blocks / 7.0);
    }
}

}  // namespace detail

/// Smallest odd r >= 3 (up to r_max) whose exact PEC output error
/// bit_error_exact + phase_error_exact is below min(error_target, Steane margin).
inline std::optional<std::uint64_t> choose_r(const PauliRates& rates_after_k, double error_target,
                                             std::uint64_t r_max = kDefaultRMax) {
    require_normalized(rates_after_k);
    return detail::smallest_pec_width(rates_after_k, effective_target(error_target), r_max);
}

/// Smallest number of Steane concatenation levels L with n_blocks * lambda_L <= epsilon.
inline unsigned steane_levels_needed(double post_pec_error, double epsilon, std::uint64_t n_blocks) {
    if (!(post_pec_error >= 0.0) || post_pec_error >= steane_threshold()) {
        throw InfeasibleError("steane_levels_needed: error at or above the Steane threshold");
    }
    double lambda = post_pec_error;
    const double blocks = static_cast<double>(n_blocks);
    unsigned levels = 0;
    while (blocks * lambda > epsilon) {
        lambda = steane_level_map(lambda);
        if (++levels > 1000) {
            throw InfeasibleError("steane_levels_needed: no convergence below the Steane threshold");
        }
    }
    return levels;
}

namespace detail {

inline SchedulePlan infeasible_plan(Infeasibility reason) {
    SchedulePlan p;
    p.reason = reason;
    return p;
}

inline SchedulePlan plan_finite(const PauliRates& rates, const PlannerConfig& config, double target) {
    const double n_sifted = static_cast<double>(*config.n_sifted);
    std::vector<PauliRates> stages;
    std::vector<double> survivals;
    PauliRates cur = rates;
    double ep_yield = 1.0;

    struct Best {
        unsigned k = 0;
        std::uint64_t r = 0;
        unsigned levels = 0;
        double yield = 0.0;
    };
    std::optional<Best> best;
    bool width_exists = false;

    for (unsigned k = 0; k <= config.max_k; ++k) {
        if (k > 0) {
            const auto step = ep_map(cur);
            cur = step.rates;
            stages.push_back(cur);
            survivals.push_back(step.survival);
            ep_yield *= step.survival / 2.0;
        }
        const double n_ep = n_sifted * ep_yield;
        if (best && ep_yield / 3.0 <= best->yield) {
            break;  // even r = 3 with no Steane level cannot win any more
        }
        const std::uint64_t r_cap = std::min<std::uint64_t>(config.r_max, static_cast<std::uint64_t>(n_ep));
        const auto r0 = smallest_pec_width(cur, target, r_cap);
        if (!r0) {
            if (!width_exists && smallest_pec_width(cur, target, config.r_max)) {
                width_exists = true;
            }
            if (n_ep < 3.0) {
                break;
            }
            continue;
        }
        width_exists = true;
        const std::uint64_t r_hi = largest_odd_at_most(r_cap);
        const double phase_floor = pec_phase_exact(cur.phase_error(), r_hi);
        for (std::uint64_t r = *r0; r <= r_hi; r += 2) {
            const double rd = static_cast<double>(r);
            if (best && ep_yield / rd <= best->yield) {
                break;
            }
            const double bit = pec_bit_exact(cur.bit_error(), r);
            if (bit + phase_floor >= target) {
                break;
            }
            const double total = bit + pec_phase_exact(cur.phase_error(), r);
            if (total >= target) {
                continue;
            }
            const auto levels = steane_levels_for_bits(total, config.key_fidelity_epsilon, std::floor(n_ep / rd));
            if (!levels) {
                continue;
            }
            const double yield = ep_yield / rd / std::pow(7.0, *levels);
            if (!best || yield > best->yield) {
                best = Best{k, r, *levels, yield};
            }
        }
    }

    if (!best) {
        return infeasible_plan(width_exists ? Infeasibility::bits_exhausted : Infeasibility::no_pec_width);
    }
    SchedulePlan plan;
    plan.feasible = true;
    plan.k = best->k;
    plan.r = best->r;
    plan.log_r = std::log(static_cast<double>(best->r));
    plan.levels = best->levels;
    plan.stage_rates.assign(stages.begin(), stages.begin() + best->k);
    plan.survivals.assign(survivals.begin(), survivals.begin() + best->k);
    const PauliRates before_pec = best->k == 0 ? rates : stages[best->k - 1];
    const auto pec = pec_predict(before_pec, best->r);
    plan.stage_rates.push_back(pec.exact_rates);
    plan.predicted_final_error = pec.bit_error_exact + pec.phase_error_exact;
    plan.predicted_yield = best->yield;
    plan.log_yield = std::log(best->yield);
    return plan;
}

inline SchedulePlan plan_unbounded(const PauliRates& rates, const PlannerConfig& config, double target) {
    constexpr double kLn2 = 0.69314718055994530942;
    std::vector<PauliRates> stages;
    std::vector<double> survivals;
    PauliRates cur = rates;
    double log_ep_yield = 0.0;

    const auto finish = [&](SchedulePlan plan, const PauliRates& post_pec) {
        plan.feasible = true;
        plan.stage_rates = stages;
        plan.stage_rates.push_back(post_pec);
        plan.survivals = survivals;
        plan.levels = steane_levels_needed(plan.predicted_final_error, config.key_fidelity_epsilon, 1);
        plan.log_yield = log_ep_yield - plan.log_r - plan.levels * std::log(7.0);
        plan.predicted_yield = std::exp(plan.log_yield);
        return plan;
    };

    for (unsigned k = 0; k <= config.max_k; ++k) {
        if (k > 0) {
            const auto step = ep_map(cur);
            cur = step.rates;
            stages.push_back(cur);
            survivals.push_back(step.survival);
            log_ep_yield += std::log(step.survival / 2.0);
        }
        if (const auto r = smallest_pec_width(cur, target, config.r_max)) {
            SchedulePlan plan;
            plan.k = k;
            plan.r = *r;
            plan.log_r = std::log(static_cast<double>(*r));
            const auto pec = pec_predict(cur, *r);
            plan.predicted_final_error = pec.bit_error_exact + pec.phase_error_exact;
            return finish(plan, pec.exact_rates);
        }

        // Beyond r_max: minimize r c + exp(-2 r g^2) over real r, in log space.
        // With u = ln(2 g^2 / c) the minimizer is r* = u / (2 g^2) and the
        // minimum is e^-u (1 + u).
        const auto m = ep_log_margins(rates, k);
        if (m.log_phase_gap == -std::numeric_limits<double>::infinity() ||
            m.log_bit_error == -std::numeric_limits<double>::infinity()) {
            continue;  // zero bit error is always solved by the exact route
        }
        const double u = kLn2 + 2.0 * m.log_phase_gap - m.log_bit_error;
        if (u <= 0.0) {
            continue;
        }
        const double log_r_star = std::log(u) - kLn2 - 2.0 * m.log_phase_gap;
        if (log_r_star <= std::log(static_cast<double>(config.r_max))) {
            continue;  // the exact search already covered this range
        }
        SchedulePlan plan;
        plan.k = k;
        plan.bound_based = true;
        double bit = 0.0, phase = 0.0;
        if (log_r_star < std::log(0x1.0p62)) {
            const auto r = static_cast<std::uint64_t>(std::ceil(std::exp(log_r_star))) | 1u;
            plan.r = r;
            plan.log_r = std::log(static_cast<double>(r));
            bit = std::exp(plan.log_r + m.log_bit_error);
            const double gap_sq = std::exp(2.0 * m.log_phase_gap);
            phase = std::exp(0.5 * static_cast<double>(r) * std::log1p(-4.0 * gap_sq));
        } else {
            plan.r = std::numeric_limits<std::uint64_t>::max();
            plan.log_r = log_r_star;
            bit = u * std::exp(-u);
            phase = std::exp(-u);
        }
        plan.predicted_final_error = bit + phase;
        if (plan.predicted_final_error < target) {
            return finish(plan, PauliRates{1.0 - bit - phase, bit, 0.0, phase});
        }
    }
    return infeasible_plan(Infeasibility::no_pec_width);
}

}  // namespace detail

/// Chooses k EP rounds, the PEC width r, and the Steane depth.
///
/// With a finite bit budget, every (k, r) whose exact PEC error beats the
/// margin target is costed (EP pair halving and survival, 1/r, 7^-L) and the
/// highest-yield schedule wins. With an unbounded budget the first k admitting
/// a width is taken, extending past r_max through the log-domain bounds.
inline SchedulePlan plan_schedule(const PauliRates& rates, const PlannerConfig& config) {
    require_normalized(rates);
    config.validate();
    if (!ep_converges(rates)) {
        return detail::infeasible_plan(Infeasibility::ep_diverges);
    }
    const double target = effective_target(config.error_target);
    return config.n_sifted ? detail::plan_finite(rates, config, target) : detail::plan_unbounded(rates, config, target);
}

enum class SweepStatus : std::uint8_t { converged, lower_infeasible, upper_feasible };

struct ThresholdSweep {
    SweepStatus status = SweepStatus::converged;
    double threshold = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    unsigned evaluations = 0;
};

/// Bisection on the depolarizing bit error for the feasibility edge of
/// plan_schedule with an unbounded bit budget.
inline ThresholdSweep threshold_sweep(double lo, double hi, double tol, PlannerConfig config) {
    if (!(lo < hi) || !(tol > 0.0)) {
        throw std::domain_error("threshold_sweep: requires lo < hi and tol > 0");
    }
    config.n_sifted.reset();
    ThresholdSweep out;
    const auto feasible = [&](double b) {
        ++out.evaluations;
        return plan_schedule(depolarizing(b), config).feasible;
    };
    out.lo = lo;
    out.hi = hi;
    if (!feasible(lo)) {
        out.status = SweepStatus::lower_infeasible;
        out.threshold = lo;
        return out;
    }
    if (feasible(hi)) {
        out.status = SweepStatus::upper_feasible;
        out.threshold = hi;
        return out;
    }
    while (out.hi - out.lo > tol) {
        const double mid = 0.5 * (out.lo + out.hi);
        (feasible(mid) ? out.lo : out.hi) = mid;
    }
    out.threshold = 0.5 * (out.lo + out.hi);
    return out;
}

}  // namespace qkd2way
