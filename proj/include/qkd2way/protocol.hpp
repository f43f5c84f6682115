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

// Monte Carlo simulation of the six-state scheme on Pauli frames: sifting,
// test-bit tomography, EP rounds, one PEC round, and concatenated Steane
// decoding of the Shor-Preskill step.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <span>
#include <stdexcept>
#include <string_view>
#include <thread>
#include <vector>

#include "qkd2way/analytic.hpp"
#include "qkd2way/pauli.hpp"
#include "qkd2way/planner.hpp"
#include "qkd2way/rng.hpp"

namespace qkd2way {

enum class Party : std::uint8_t { alice = 0, bob = 1 };

/// Stages that consume shared public randomness.
enum class Stage : std::uint8_t {
    test_selection = 1,
    ep_pairing = 2,
    pec_grouping = 3,
    steane_permutation = 4,
};

namespace tags {
inline constexpr std::uint64_t kParty = 0x7061727479ULL;
inline constexpr std::uint64_t kBases = 0x6261736573ULL;
inline constexpr std::uint64_t kKeyBits = 0x6b657962ULL;
inline constexpr std::uint64_t kCodeword = 0x636f6465ULL;
inline constexpr std::uint64_t kChannel = 0x6368616eULL;
inline constexpr std::uint64_t kContribution = 0x636f6e74ULL;
inline constexpr std::uint64_t kTrial = 0x747269616cULL;
}  // namespace tags

inline std::uint64_t party_seed(std::uint64_t seed, Party party) {
    return derive_seed(seed, tags::kParty, static_cast<std::uint64_t>(party));
}

/// One party's share of the public randomness for a stage.
inline std::uint64_t seed_contribution(std::uint64_t seed, Party party, Stage stage, std::uint32_t index) {
    return derive_seed(party_seed(seed, party), tags::kContribution,
                       (static_cast<std::uint64_t>(stage) << 32) | index);
}

/// The stage seed both parties agree on: XOR of their contributions.
inline std::uint64_t joint_seed(std::uint64_t seed, Stage stage, std::uint32_t index) {
    return seed_contribution(seed, Party::alice, stage, index) ^ seed_contribution(seed, Party::bob, stage, index);
}

enum class Basis : std::uint8_t { z = 0, x = 1, y = 2 };

/// A test in this basis reports a mismatch iff the error anticommutes with it.
constexpr bool flips_in_basis(PauliLabel p, Basis b) {
    switch (b) {
        case Basis::z: return p.x();
        case Basis::x: return p.z();
        case Basis::y: return p.x() != p.z();
    }
    return false;
}

inline std::vector<std::uint8_t> draw_bases(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint8_t> bases(n);
    Rng rng(seed);
    for (auto& b : bases) {
        b = static_cast<std::uint8_t>(rng.below(3));
    }
    return bases;
}

/// Preparation, transmission and basis sifting. A sent position is kept iff
/// Alice's and Bob's independently uniform bases agree; kept positions carry
/// i.i.d. labels drawn from `rates` in order of arrival.
inline ErrorFrame sift(std::size_t n_sent, const PauliRates& rates, std::uint64_t seed) {
    require_normalized(rates);
    if (n_sent == 0) {
        throw std::domain_error("sift: n_sent must be positive");
    }
    Rng alice(derive_seed(party_seed(seed, Party::alice), tags::kBases));
    Rng bob(derive_seed(party_seed(seed, Party::bob), tags::kBases));
    Rng channel(derive_seed(seed, tags::kChannel));
    ErrorFrame frame;
    frame.origin_seed = seed;
    frame.reserve(n_sent / 3 + 64);
    for (std::size_t i = 0; i < n_sent; ++i) {
        if (alice.below(3) == bob.below(3)) {
            frame.push_back(sample_label(rates, channel.uniform01()));
        }
    }
    return frame;
}

struct BasisStats {
    std::array<std::uint64_t, 3> tested{};
    std::array<std::uint64_t, 3> mismatched{};

    double error_rate(Basis b) const {
        const auto i = static_cast<std::size_t>(b);
        return tested[i] == 0 ? 0.0 : static_cast<double>(mismatched[i]) / static_cast<double>(tested[i]);
    }
    bool operator==(const BasisStats&) const = default;
};

enum class EstimateMode : std::uint8_t { raw, symmetrized };

/// Inverts e_Z = p_x + p_y, e_X = p_y + p_z, e_Y = p_x + p_z, clamping to a
/// valid distribution. `symmetrized` forces p_x = p_y = p_z.
inline PauliRates rates_from_basis_errors(double e_z, double e_x, double e_y, EstimateMode mode = EstimateMode::raw) {
    double px, py, pz;
    if (mode == EstimateMode::symmetrized) {
        px = py = pz = (e_z + e_x + e_y) / 6.0;
    } else {
        px = std::clamp((e_z + e_y - e_x) / 2.0, 0.0, 1.0);
        py = std::clamp((e_z + e_x - e_y) / 2.0, 0.0, 1.0);
        pz = std::clamp((e_x + e_y - e_z) / 2.0, 0.0, 1.0);
    }
    const double err = px + py + pz;
    if (err > 1.0) {
        return PauliRates{0.0, px / err, py / err, pz / err};
    }
    return PauliRates{1.0 - err, px, py, pz};
}

inline PauliRates rates_from_stats(const BasisStats& stats, EstimateMode mode = EstimateMode::raw) {
    return rates_from_basis_errors(stats.error_rate(Basis::z), stats.error_rate(Basis::x), stats.error_rate(Basis::y),
                                   mode);
}

struct RateEstimate {
    PauliRates rates;
    BasisStats stats;
    ErrorFrame remaining;
};

/// Positions sacrificed for testing: a uniform ordered sample of 3m positions;
/// entries [0, m) are tested in Z, [m, 2m) in X, [2m, 3m) in Y.
inline std::vector<std::uint32_t> test_positions(std::size_t frame_size, std::size_t m_per_basis, std::uint64_t seed) {
    if (3 * m_per_basis > frame_size) {
        throw std::domain_error("estimate_rates: 3 * m_per_basis exceeds the frame length");
    }
    return random_sample(frame_size, 3 * m_per_basis, seed);
}

inline Basis test_basis(std::size_t sample_index, std::size_t m_per_basis) {
    return static_cast<Basis>(sample_index / m_per_basis);
}

/// Removes `positions` from the frame, keeping the remaining order.
template <typename Seq>
Seq remove_positions(const Seq& seq, std::span<const std::uint32_t> positions) {
    std::vector<bool> drop(seq.size(), false);
    for (auto p : positions) {
        drop[p] = true;
    }
    Seq out;
    out.reserve(seq.size() - positions.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (!drop[i]) {
            out.push_back(seq[i]);
        }
    }
    return out;
}

/// Sacrifices m positions per basis, compares outcomes and inverts the three
/// basis error rates into a rate estimate.
inline RateEstimate estimate_rates(const ErrorFrame& frame, std::size_t m_per_basis, std::uint64_t seed,
                                   EstimateMode mode = EstimateMode::raw) {
    if (m_per_basis == 0) {
        throw std::domain_error("estimate_rates: m_per_basis must be positive");
    }
    const auto sample = test_positions(frame.size(), m_per_basis, seed);
    RateEstimate est;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const Basis b = test_basis(i, m_per_basis);
        const auto bi = static_cast<std::size_t>(b);
        ++est.stats.tested[bi];
        if (flips_in_basis(frame[sample[i]], b)) {
            ++est.stats.mismatched[bi];
        }
    }
    est.rates = rates_from_stats(est.stats, mode);
    est.remaining = remove_positions(frame, sample);
    est.remaining.origin_seed = frame.origin_seed;
    est.remaining.generation = frame.generation;
    return est;
}

/// Outcome of comparing the parities of a (control, target) pair.
constexpr bool ep_pair_kept(PauliLabel control, PauliLabel target) { return control.x() == target.x(); }

/// The surviving control's label: x is unchanged, z picks up the target's z.
constexpr PauliLabel ep_pair_result(PauliLabel control, PauliLabel target) {
    return PauliLabel{control.x(), control.z() != target.z()};
}

struct EpRoundResult {
    ErrorFrame frame;
    std::size_t survivors = 0;
    std::size_t pairs = 0;
};

/// One EP round: positions perm[2i], perm[2i+1] of a random permutation form
/// (control, target); an odd leftover is discarded.
inline EpRoundResult ep_round(const ErrorFrame& frame, std::uint64_t seed) {
    const auto perm = random_permutation(frame.size(), seed);
    EpRoundResult out;
    out.pairs = frame.size() / 2;
    out.frame.reserve(out.pairs);
    out.frame.origin_seed = frame.origin_seed;
    out.frame.generation = frame.generation + 1;
    for (std::size_t i = 0; i < out.pairs; ++i) {
        const PauliLabel c = frame[perm[2 * i]];
        const PauliLabel t = frame[perm[2 * i + 1]];
        if (ep_pair_kept(c, t)) {
            out.frame.push_back(ep_pair_result(c, t));
        }
    }
    out.survivors = out.frame.size();
    return out;
}

/// One [r,1,r] PEC round over random groups of r; a partial group is discarded.
inline ErrorFrame pec_round(const ErrorFrame& frame, std::uint64_t r, std::uint64_t seed) {
    detail::require_pec_width(r);
    const auto perm = random_permutation(frame.size(), seed);
    const std::size_t groups = frame.size() / r;
    ErrorFrame out;
    out.reserve(groups);
    out.origin_seed = frame.origin_seed;
    out.generation = frame.generation + 1;
    for (std::size_t g = 0; g < groups; ++g) {
        bool x = false;
        std::uint64_t phase = 0;
        for (std::size_t j = 0; j < r; ++j) {
            const PauliLabel p = frame[perm[g * r + j]];
            x = x != p.x();
            phase += p.z() ? 1 : 0;
        }
        out.push_back(PauliLabel{x, 2 * phase > r});
    }
    return out;
}

inline ErrorFrame permute(const ErrorFrame& frame, std::uint64_t seed) {
    const auto perm = random_permutation(frame.size(), seed);
    ErrorFrame out;
    out.reserve(frame.size());
    out.origin_seed = frame.origin_seed;
    out.generation = frame.generation;
    for (auto i : perm) {
        out.push_back(frame[i]);
    }
    return out;
}

namespace detail {

/// Hamming [7,4] hard decision on a 7-bit word (bit i = position i + 1):
/// flip the position named by the syndrome, then report the corrected word's
/// weight parity. Even-weight codewords form the dual code, odd-weight ones
/// its nontrivial coset, so the parity is the logical value.
constexpr std::array<std::uint8_t, 128> make_hamming_logical_table() {
    std::array<std::uint8_t, 128> table{};
    for (unsigned w = 0; w < 128; ++w) {
        unsigned syndrome = 0;
        for (unsigned i = 0; i < 7; ++i) {
            if ((w >> i) & 1u) {
                syndrome ^= i + 1;
            }
        }
        unsigned corrected = syndrome == 0 ? w : (w ^ (1u << (syndrome - 1)));
        unsigned parity = 0;
        for (unsigned i = 0; i < 7; ++i) {
            parity ^= (corrected >> i) & 1u;
        }
        table[w] = static_cast<std::uint8_t>(parity);
    }
    return table;
}

inline constexpr auto kHammingLogical = make_hamming_logical_table();

}  // namespace detail

/// Logical value of a 7-bit Steane block after single-error correction.
constexpr bool hamming_logical(std::uint8_t word7) { return detail::kHammingLogical[word7 & 0x7f] != 0; }

/// Decodes the x and z parts of a Steane block independently.
inline PauliLabel steane_decode_block(std::span<const PauliLabel, 7> block) {
    std::uint8_t xs = 0, zs = 0;
    for (unsigned i = 0; i < 7; ++i) {
        xs |= static_cast<std::uint8_t>((block[i].x() ? 1u : 0u) << i);
        zs |= static_cast<std::uint8_t>((block[i].z() ? 1u : 0u) << i);
    }
    return PauliLabel{hamming_logical(xs), hamming_logical(zs)};
}

/// L levels of block decoding over consecutive 7-blocks; excess is discarded.
inline ErrorFrame steane_concat_decode(const ErrorFrame& frame, unsigned levels) {
    ErrorFrame cur = frame;
    for (unsigned level = 0; level < levels; ++level) {
        ErrorFrame next;
        const std::size_t blocks = cur.size() / 7;
        next.reserve(blocks);
        next.origin_seed = cur.origin_seed;
        next.generation = cur.generation + 1;
        std::array<PauliLabel, 7> block;
        for (std::size_t b = 0; b < blocks; ++b) {
            for (unsigned i = 0; i < 7; ++i) {
                block[i] = cur[7 * b + i];
            }
            next.push_back(steane_decode_block(block));
        }
        cur = std::move(next);
    }
    return cur;
}

struct KeyResult {
    std::size_t key_length = 0;
    /// Key bits where Bob's decoded coset differs from Alice's (logical x).
    std::size_t mismatches = 0;
    /// Fraction of key bits carrying a logical phase error.
    double residual_phase_rate = 0.0;

    bool operator==(const KeyResult&) const = default;
};

/// Random permutation, L-level Steane decoding, then one key bit per block.
inline KeyResult finalize_key(const ErrorFrame& frame, unsigned levels, std::uint64_t seed) {
    const auto logical = steane_concat_decode(permute(frame, seed), levels);
    KeyResult key;
    key.key_length = logical.size();
    std::size_t phase = 0;
    for (std::size_t i = 0; i < logical.size(); ++i) {
        key.mismatches += logical[i].x() ? 1 : 0;
        phase += logical[i].z() ? 1 : 0;
    }
    key.residual_phase_rate = key.key_length == 0 ? 0.0 : static_cast<double>(phase) / key.key_length;
    return key;
}

struct SimConfig {
    std::uint64_t n_sent = 3'000'000;
    PauliRates rates = depolarizing(0.10);
    std::uint64_t test_bits_per_basis = 10'000;
    PlannerConfig planner;
    std::uint64_t seed = 1;
    std::uint32_t trials = 1;
    /// Plan on the true channel instead of the test-bit estimate.
    bool plan_with_true_rates = false;
    EstimateMode estimate_mode = EstimateMode::raw;

    void validate() const {
        require_normalized(rates);
        planner.validate();
        if (n_sent == 0) {
            throw std::domain_error("SimConfig: n_sent must be positive");
        }
        if (n_sent > 0xFFFFFFFFull * 3) {
            throw std::domain_error("SimConfig: n_sent too large for 32-bit frame indices");
        }
    }
};

enum class AbortReason : std::uint8_t {
    none = 0,
    threshold = 1,        // estimated error too high to distill
    r_exceeds_bits = 2,   // no admissible PEC width within the remaining bits
    bits_exhausted = 3,   // bits ran out before a key block could form
};

inline std::string_view to_string(AbortReason r) {
    switch (r) {
        case AbortReason::none: return "none";
        case AbortReason::threshold: return "threshold";
        case AbortReason::r_exceeds_bits: return "r_exceeds_bits";
        case AbortReason::bits_exhausted: return "bits_exhausted";
    }
    return "unknown";
}

struct SimReport {
    std::uint64_t sifted_count = 0;
    std::uint64_t tested_count = 0;
    std::vector<std::uint64_t> post_ep_counts;
    std::uint64_t post_pec_count = 0;
    std::uint64_t final_key_length = 0;
    PauliRates estimated_rates;
    BasisStats basis_stats;
    SchedulePlan plan;
    std::uint64_t key_mismatch_count = 0;
    double residual_phase_error_rate = 0.0;
    bool aborted = false;
    AbortReason abort_reason = AbortReason::none;

    bool operator==(const SimReport&) const = default;
};

/// Test-stage abort rule: the estimated bit error must sit more than two
/// standard errors below the depolarizing threshold, and EP must converge.
inline bool estimate_too_high(const PauliRates& estimate, std::uint64_t tested_in_z) {
    if (!ep_converges(estimate)) {
        return true;
    }
    if (tested_in_z == 0) {
        return false;
    }
    const double b = estimate.bit_error();
    const double se = std::sqrt(b * (1.0 - b) / static_cast<double>(tested_in_z));
    return b >= depolarizing_threshold().bit_error - 2.0 * se;
}

inline AbortReason abort_reason_for(Infeasibility why) {
    switch (why) {
        case Infeasibility::none: return AbortReason::none;
        case Infeasibility::ep_diverges: return AbortReason::threshold;
        case Infeasibility::no_pec_width: return AbortReason::r_exceeds_bits;
        case Infeasibility::bits_exhausted: return AbortReason::bits_exhausted;
    }
    return AbortReason::bits_exhausted;
}

/// Planner input for a run: the bit budget is the post-test frame length.
inline PlannerConfig run_planner_config(const SimConfig& config, std::size_t bits_after_test) {
    PlannerConfig pc = config.planner;
    pc.n_sifted = bits_after_test;
    return pc;
}

/// Full pipeline for one trial: sift, estimate, plan, k EP rounds, PEC,
/// permutation and Steane decoding. Aborts are reported, not thrown.
inline SimReport run_protocol(const SimConfig& config) {
    config.validate();
    SimReport rep;
    ErrorFrame frame = sift(config.n_sent, config.rates, config.seed);
    rep.sifted_count = frame.size();

    PauliRates planning = config.rates;
    if (config.test_bits_per_basis > 0) {
        if (3 * config.test_bits_per_basis > frame.size()) {
            rep.aborted = true;
            rep.abort_reason = AbortReason::bits_exhausted;
            return rep;
        }
        auto est = estimate_rates(frame, config.test_bits_per_basis, joint_seed(config.seed, Stage::test_selection, 0),
                                  config.estimate_mode);
        rep.tested_count = 3 * config.test_bits_per_basis;
        rep.estimated_rates = est.rates;
        rep.basis_stats = est.stats;
        frame = std::move(est.remaining);
        if (!config.plan_with_true_rates) {
            planning = est.rates;
        }
        if (estimate_too_high(est.rates, est.stats.tested[0])) {
            rep.aborted = true;
            rep.abort_reason = AbortReason::threshold;
            return rep;
        }
    } else {
        rep.estimated_rates = config.rates;
    }

    rep.plan = plan_schedule(planning, run_planner_config(config, frame.size()));
    if (!rep.plan.feasible) {
        rep.aborted = true;
        rep.abort_reason = abort_reason_for(rep.plan.reason);
        return rep;
    }
    for (unsigned j = 0; j < rep.plan.k; ++j) {
        frame = ep_round(frame, joint_seed(config.seed, Stage::ep_pairing, j)).frame;
        rep.post_ep_counts.push_back(frame.size());
    }
    frame = pec_round(frame, rep.plan.r, joint_seed(config.seed, Stage::pec_grouping, 0));
    rep.post_pec_count = frame.size();

    const auto key = finalize_key(frame, rep.plan.levels, joint_seed(config.seed, Stage::steane_permutation, 0));
    rep.final_key_length = key.key_length;
    rep.key_mismatch_count = key.mismatches;
    rep.residual_phase_error_rate = key.residual_phase_rate;
    if (key.key_length == 0) {
        rep.aborted = true;
        rep.abort_reason = AbortReason::bits_exhausted;
    }
    return rep;
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::uint32_t trial) { return derive_seed(seed, tags::kTrial, trial); }

namespace detail {

/// Calls fn(i) for i in [0, n) on up to `workers` threads (0 = all cores).
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = workers != 0 ? workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next++; i < n; i = next++) {
                fn(i);
            }
        }));
    }
    for (auto& f : pool) {
        f.get();
    }
}

}  // namespace detail

/// Runs config.trials independent trials on derived seeds, in parallel;
/// results are ordered by trial index.
inline std::vector<SimReport> run_trials(const SimConfig& config, unsigned max_threads = 0) {
    config.validate();
    const std::uint32_t n = std::max<std::uint32_t>(config.trials, 1);
    std::vector<SimReport> reports(n);
    detail::parallel_for(n, max_threads, [&](std::size_t i) {
        SimConfig trial = config;
        trial.seed = trial_seed(config.seed, static_cast<std::uint32_t>(i));
        trial.trials = 1;
        reports[i] = run_protocol(trial);
    });
    return reports;
}

}  // namespace qkd2way
