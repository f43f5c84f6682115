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

// Closed-form error-rate dynamics of the two-way distillation steps:
// one and k rounds of parity-check entanglement purification (EP),
// one round of [r,1,r] majority-vote phase error correction (PEC), the
// Chernoff-type binomial tail bound used to bound PEC, and the
// concatenated Steane [[7,1,3]] level map.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "qkd2way/pauli.hpp"

namespace qkd2way {

struct EpStep {
    PauliRates rates;
    /// Probability that a random pair passes the parity comparison.
    double survival = 1.0;
};

/// One round of random pairing + bilateral XOR + parity comparison.
inline EpStep ep_map(const PauliRates& in) {
    require_normalized(in);
    const double same = in.p_i + in.p_z;   // no x part
    const double flip = in.p_x + in.p_y;   // x part set
    const double d = same * same + flip * flip;
    if (!(d > 0.0)) {
        throw std::logic_error("ep_map: zero survival for normalized rates");
    }
    EpStep out;
    out.rates.p_i = (in.p_i * in.p_i + in.p_z * in.p_z) / d;
    out.rates.p_x = (in.p_x * in.p_x + in.p_y * in.p_y) / d;
    out.rates.p_y = 2.0 * in.p_x * in.p_y / d;
    out.rates.p_z = 2.0 * in.p_i * in.p_z / d;
    out.survival = d;
    return out;
}

namespace detail {

// log(|u - v| / (u + v)) for u, v >= 0, u + v > 0, without cancellation.
inline double log_contrast(double u, double v) {
    const double s = u + v;
    return std::log1p(-2.0 * std::min(u, v) / s);
}

// Shared pieces of the k-round closed form, all scaled by the larger of
// (p_i + p_z)^N and (p_x + p_y)^N so that nothing underflows. N = 2^k.
struct EpPowers {
    double same_scaled = 0.0;   // (p_i + p_z)^N / M
    double flip_scaled = 0.0;   // (p_x + p_y)^N / M
    double log_same_scaled = 0.0;
    double log_flip_scaled = 0.0;
    double same_log_contrast_n = 0.0;   // N log(|p_i - p_z| / (p_i + p_z))
    double flip_log_contrast_n = 0.0;   // N log(|p_x - p_y| / (p_x + p_y))
    double log_scale = 0.0;     // log M
    double n = 1.0;
};

inline EpPowers ep_powers(const PauliRates& in, unsigned k) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    EpPowers w;
    w.n = std::ldexp(1.0, static_cast<int>(std::min(k, 1000u)));
    const double same = in.p_i + in.p_z;
    const double flip = in.p_x + in.p_y;
    const double log_same = same > 0 ? std::log(same) : kNegInf;
    const double log_flip = flip > 0 ? std::log(flip) : kNegInf;
    const double log_max = std::max(log_same, log_flip);
    w.log_scale = w.n * log_max;
    w.log_same_scaled = same > 0 ? w.n * (log_same - log_max) : kNegInf;
    w.log_flip_scaled = flip > 0 ? w.n * (log_flip - log_max) : kNegInf;
    w.same_scaled = std::exp(w.log_same_scaled);
    w.flip_scaled = std::exp(w.log_flip_scaled);
    w.same_log_contrast_n = same > 0 ? w.n * log_contrast(in.p_i, in.p_z) : 0.0;
    w.flip_log_contrast_n = flip > 0 ? w.n * log_contrast(in.p_x, in.p_y) : 0.0;
    return w;
}

}  // namespace detail

/// k rounds of EP in closed form. The normalizer is
/// (p_i + p_z)^(2^k) + (p_x + p_y)^(2^k); with it the four outputs sum to one.
/// Rounds beyond 1000 are treated as 1000 (the map has converged long before).
inline PauliRates ep_map_k(const PauliRates& in, unsigned k) {
    require_normalized(in);
    if (k == 0) {
        return in;
    }
    const auto w = detail::ep_powers(in, k);
    const double den = w.same_scaled + w.flip_scaled;
    const double same_even = std::exp(w.same_log_contrast_n);
    const double flip_even = std::exp(w.flip_log_contrast_n);
    PauliRates out;
    out.p_i = w.same_scaled * (1.0 + same_even) / (2.0 * den);
    out.p_z = w.same_scaled * -std::expm1(w.same_log_contrast_n) / (2.0 * den);
    out.p_x = w.flip_scaled * (1.0 + flip_even) / (2.0 * den);
    out.p_y = w.flip_scaled * -std::expm1(w.flip_log_contrast_n) / (2.0 * den);
    return out;
}

/// Log-domain margins after k EP rounds, valid where the rates themselves
/// underflow: log(p_x + p_y) and log(1/2 - p_y - p_z) of the k-round output.
struct EpLogMargins {
    double log_bit_error = 0.0;
    /// -inf when the phase error is at or above 1/2.
    double log_phase_gap = 0.0;
};

inline EpLogMargins ep_log_margins(const PauliRates& in, unsigned k) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    require_normalized(in);
    EpLogMargins m;
    if (k == 0) {
        m.log_bit_error = in.bit_error() > 0 ? std::log(in.bit_error()) : kNegInf;
        const double gap = 0.5 - in.phase_error();
        m.log_phase_gap = gap > 0 ? std::log(gap) : kNegInf;
        return m;
    }
    // Output bit error  = F / (S + F), output phase gap = (S c_s + F c_f) / (2 (S + F)),
    // with S, F the scaled powers and c_s, c_f the N-th powers of the contrasts.
    const auto w = detail::ep_powers(in, k);
    const double log_den = std::log(w.same_scaled + w.flip_scaled);
    m.log_bit_error = w.log_flip_scaled - log_den;

    const double a = w.log_same_scaled + w.same_log_contrast_n;
    const double b = w.log_flip_scaled + w.flip_log_contrast_n;
    const double hi = std::max(a, b);
    if (hi == kNegInf) {
        m.log_phase_gap = kNegInf;
        return m;
    }
    const double lo = std::min(a, b);
    const double lse = hi + (lo == kNegInf ? 0.0 : std::log1p(std::exp(lo - hi)));
    m.log_phase_gap = lse - std::log(2.0) - log_den;
    return m;
}

/// Prediction for one round of [r,1,r] PEC: Alice and Bob replace each group
/// of r bits by its parity, so the x part of the output is the XOR of the
/// group's x parts and the output has a phase error iff a strict majority of
/// the group has one.
struct PecPrediction {
    double bit_error_bound = 0.0;
    double phase_error_bound = 0.0;
    double phase_error_exp_bound = 1.0;
    double bit_error_exact = 0.0;
    double phase_error_exact = 0.0;
    PauliRates exact_rates;
};

namespace detail {

inline void require_pec_width(std::uint64_t r) {
    if (r < 3 || r % 2 == 0) {
        throw std::domain_error("PEC width r must be odd and at least 3");
    }
}

/// P[odd number of x errors among r].
inline double pec_bit_exact(double bit_error, std::uint64_t r) {
    const double rd = static_cast<double>(r);
    if (bit_error <= 0.5) {
        return -std::expm1(rd * std::log1p(-2.0 * bit_error)) / 2.0;
    }
    return (1.0 - std::pow(1.0 - 2.0 * bit_error, rd)) / 2.0;
}

/// P[Bin(r, q) >= (r + 1) / 2].
inline double pec_phase_exact(double phase_error, std::uint64_t r) {
    if (phase_error <= 0.0) {
        return 0.0;
    }
    if (phase_error >= 1.0) {
        return 1.0;
    }
    const double t = static_cast<double>((r + 1) / 2);
    return boost::math::ibeta(t, static_cast<double>(r) - t + 1.0, phase_error);
}

/// Chernoff bound on the phase majority; only a bound for phase error < 1/2,
/// so it degrades to the trivial 1 beyond that.
inline double pec_phase_bound(const PauliRates& in, std::uint64_t r) {
    if (in.phase_error() >= 0.5) {
        return 1.0;
    }
    const double prod = 4.0 * (in.p_i + in.p_x) * (in.p_y + in.p_z);
    if (prod <= 0.0) {
        return 0.0;
    }
    return std::exp(0.5 * static_cast<double>(r) * std::log(prod));
}

inline double pec_phase_exp_bound(const PauliRates& in, std::uint64_t r) {
    const double gap = 0.5 - in.phase_error();
    if (gap <= 0.0) {
        return 1.0;
    }
    return std::exp(-2.0 * static_cast<double>(r) * gap * gap);
}

inline constexpr std::uint64_t kPecDpLimit = 2047;

/// Joint output distribution by dynamic programming over
/// (running x parity, running phase count capped at the majority mark).
inline PauliRates pec_joint_dp(const PauliRates& in, std::uint64_t r) {
    const std::size_t majority = static_cast<std::size_t>((r + 1) / 2);
    // state[parity * (majority + 1) + count]
    std::vector<double> cur(2 * (majority + 1), 0.0), next(cur.size());
    cur[0] = 1.0;
    const auto idx = [majority](std::size_t parity, std::size_t count) {
        return parity * (majority + 1) + std::min(count, majority);
    };
    for (std::uint64_t step = 0; step < r; ++step) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t parity = 0; parity < 2; ++parity) {
            for (std::size_t count = 0; count <= majority; ++count) {
                const double p = cur[idx(parity, count)];
                if (p == 0.0) {
                    continue;
                }
                next[idx(parity, count)] += p * in.p_i;
                next[idx(parity ^ 1, count)] += p * in.p_x;
                next[idx(parity ^ 1, count + 1)] += p * in.p_y;
                next[idx(parity, count + 1)] += p * in.p_z;
            }
        }
        cur.swap(next);
    }
    PauliRates out{0, 0, 0, 0};
    for (std::size_t count = 0; count < majority; ++count) {
        out.p_i += cur[idx(0, count)];
        out.p_x += cur[idx(1, count)];
    }
    out.p_z = cur[idx(0, majority)];
    out.p_y = cur[idx(1, majority)];
    return out;
}

/// Same distribution in O(r). Conditioned on j phase-afflicted positions, the
/// x parity is odd with probability (1 - s^j u^(r-j)) / 2 where
/// q s = p_z - p_y and (1 - q) u = p_i - p_x, which gives
///   P[odd x, majority] = (T - S) / 2,
///   S = sum_{j >= t} C(r, j) (p_z - p_y)^j (p_i - p_x)^(r - j).
inline PauliRates pec_joint_mixture(const PauliRates& in, std::uint64_t r) {
    const std::uint64_t t = (r + 1) / 2;
    const double tail = pec_phase_exact(in.phase_error(), r);
    const double bit = pec_bit_exact(in.bit_error(), r);

    const double u = in.p_z - in.p_y;
    const double v = in.p_i - in.p_x;
    double signed_tail = 0.0;
    if (u != 0.0) {
        const double log_u = std::log(std::abs(u));
        const double log_v = v != 0.0 ? std::log(std::abs(v)) : -std::numeric_limits<double>::infinity();
        const double rd = static_cast<double>(r);
        for (std::uint64_t j = t; j <= r; ++j) {
            if (v == 0.0 && j != r) {
                continue;
            }
            const double jd = static_cast<double>(j);
            const double log_choose = std::lgamma(rd + 1) - std::lgamma(jd + 1) - std::lgamma(rd - jd + 1);
            const double log_mag = log_choose + jd * log_u + (j == r ? 0.0 : (rd - jd) * log_v);
            const bool negative = ((u < 0) && (j % 2 == 1)) != ((v < 0) && ((r - j) % 2 == 1));
            const double term = std::exp(log_mag);
            signed_tail += negative ? -term : term;
        }
    }
    PauliRates out;
    out.p_y = std::max(0.0, (tail - signed_tail) / 2.0);
    out.p_z = std::max(0.0, tail - out.p_y);
    out.p_x = std::max(0.0, bit - out.p_y);
    out.p_i = std::max(0.0, 1.0 - out.p_x - out.p_y - out.p_z);
    return out;
}

}  // namespace detail

/// Bounds and exact values for one round of [r,1,r] PEC on i.i.d. input.
inline PecPrediction pec_predict(const PauliRates& in, std::uint64_t r) {
    require_normalized(in);
    detail::require_pec_width(r);
    PecPrediction p;
    p.bit_error_bound = static_cast<double>(r) * in.bit_error();
    p.phase_error_bound = detail::pec_phase_bound(in, r);
    p.phase_error_exp_bound = detail::pec_phase_exp_bound(in, r);
    p.bit_error_exact = detail::pec_bit_exact(in.bit_error(), r);
    p.phase_error_exact = detail::pec_phase_exact(in.phase_error(), r);
    p.exact_rates = r <= detail::kPecDpLimit ? detail::pec_joint_dp(in, r) : detail::pec_joint_mixture(in, r);
    return p;
}

/// Chernoff-type bound on the lower binomial tail P[Bin(n, p) <= lambda n],
/// evaluated in log space. Requires 0 < lambda < p < 1.
inline double binomial_tail_bound(std::uint64_t n, double lambda, double p) {
    if (!(lambda > 0.0 && lambda < p && p < 1.0)) {
        throw std::domain_error("binomial_tail_bound: requires 0 < lambda < p < 1");
    }
    const double nd = static_cast<double>(n);
    const double log_bound = nd * (-lambda * std::log(lambda) - (1.0 - lambda) * std::log1p(-lambda) +
                                   lambda * std::log(p) + (1.0 - lambda) * std::log1p(-p));
    return std::exp(log_bound);
}

/// Probability that a 7-qubit Steane block sees two or more errors when each
/// position fails independently with probability lambda; the per-level error
/// recursion of the concatenated code.
inline double steane_level_map(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::domain_error("steane_level_map: lambda must lie in [0, 1]");
    }
    // Direct sum over j >= 2 keeps full relative precision for tiny lambda.
    static constexpr double kChoose7[] = {1, 7, 21, 35, 35, 21, 7, 1};
    const double keep = 1.0 - lambda;
    double sum = 0.0;
    for (int j = 2; j <= 7; ++j) {
        sum += kChoose7[j] * std::pow(lambda, j) * std::pow(keep, 7 - j);
    }
    return sum;
}

/// Smallest positive fixed point of steane_level_map, by bisection to 1e-12.
inline double steane_threshold() {
    static const double root = [] {
        // map(lambda) - lambda is negative just above 0 (map ~ 21 lambda^2) and
        // positive at 1/2 (map = 15/16); there is a single crossing between.
        double lo = 1e-3;
        double hi = 0.5;
        while (hi - lo > 1e-12) {
            const double mid = 0.5 * (lo + hi);
            if (steane_level_map(mid) < mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }();
    return root;
}

}  // namespace qkd2way
