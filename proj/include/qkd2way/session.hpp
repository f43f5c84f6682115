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

// Alice and Bob as two sequential programs that only share a Link.
//
// Message flow (A = Alice, B = Bob). Alice makes every abort call; Bob
// recomputes each decision and insists on the same one.
//
//   A BASIS_ANNOUNCE, B BASIS_ANNOUNCE
//   A PAIRING_SEED, B PAIRING_SEED          test selection (if testing)
//   A TEST_REVEAL, B TEST_VERDICT
//   per EP round: A PAIRING_SEED, B PAIRING_SEED, A PAIR_PARITY, B KEEP_MASK
//   A PAIRING_SEED, B PAIRING_SEED, A PEC_GROUPING
//   A PAIRING_SEED, B PAIRING_SEED, A CODEWORD_MASK
//   B DONE, A DONE
//
// ABORT from Alice may replace any of her messages after the bases.
//
// The quantum transmission is injected: Bob receives measurement outcomes
// consistent with Alice's preparations and the sampled error frame. He keeps
// the frame alongside his bits so his report can state, in-frame, how many key
// bits disagree and how many carry a phase error.

#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <future>
#include <span>
#include <utility>
#include <vector>

#include "qkd2way/message.hpp"
#include "qkd2way/protocol.hpp"
#include "qkd2way/transport.hpp"

namespace qkd2way {

enum class TransportKind : std::uint8_t { in_process, stream };

/// What a party ends up with: its report and its key.
struct PartyOutcome {
    SimReport report;
    std::vector<std::uint8_t> key;
};

struct SessionResult {
    SimReport report;
    SessionTranscript transcript;
    PartyOutcome alice;
    PartyOutcome bob;
};

/// The report fields both parties can compute; Bob's key comparison is cleared.
inline SimReport shared_view(SimReport r) {
    r.key_mismatch_count = 0;
    r.residual_phase_error_rate = 0.0;
    return r;
}

namespace detail {

struct HammingCodewords {
    std::array<std::uint8_t, 8> even{};
    std::array<std::uint8_t, 8> odd{};
};

constexpr HammingCodewords make_hamming_codewords() {
    HammingCodewords c;
    std::size_t ne = 0, no = 0;
    for (unsigned w = 0; w < 128; ++w) {
        unsigned syndrome = 0, weight = 0;
        for (unsigned i = 0; i < 7; ++i) {
            if ((w >> i) & 1u) {
                syndrome ^= i + 1;
                ++weight;
            }
        }
        if (syndrome == 0) {
            if (weight % 2 == 0) {
                c.even[ne++] = static_cast<std::uint8_t>(w);
            } else {
                c.odd[no++] = static_cast<std::uint8_t>(w);
            }
        }
    }
    return c;
}

inline constexpr HammingCodewords kHammingCodewords = make_hamming_codewords();

inline std::size_t steane_block_size(unsigned levels, std::size_t available) {
    std::size_t size = 1;
    for (unsigned i = 0; i < levels; ++i) {
        if (size > available / 7) {
            return available + 1;
        }
        size *= 7;
    }
    return size;
}

/// Random codeword of the L-level concatenated code for each key bit.
inline std::vector<std::uint8_t> encode_concatenated(std::span<const std::uint8_t> key, unsigned levels, Rng& rng) {
    std::vector<std::uint8_t> cur(key.begin(), key.end());
    for (unsigned level = 0; level < levels; ++level) {
        std::vector<std::uint8_t> next;
        next.reserve(cur.size() * 7);
        for (auto b : cur) {
            const auto& pool = b ? kHammingCodewords.odd : kHammingCodewords.even;
            const std::uint8_t w = pool[rng.below(pool.size())];
            for (unsigned i = 0; i < 7; ++i) {
                next.push_back((w >> i) & 1u);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

inline std::vector<std::uint8_t> decode_concatenated(std::vector<std::uint8_t> word, unsigned levels) {
    for (unsigned level = 0; level < levels; ++level) {
        std::vector<std::uint8_t> next(word.size() / 7);
        for (std::size_t b = 0; b < next.size(); ++b) {
            std::uint8_t w = 0;
            for (unsigned i = 0; i < 7; ++i) {
                w |= static_cast<std::uint8_t>(word[7 * b + i] << i);
            }
            next[b] = hamming_logical(w) ? 1 : 0;
        }
        word = std::move(next);
    }
    return word;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, std::span<const std::uint32_t> idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        out.push_back(v[i]);
    }
    return out;
}

inline Message make_message(MessageKind kind, PayloadWriter& w) { return Message{kind, w.take()}; }

inline Message expect(Link& link, MessageKind kind) {
    Message m = link.recv();
    if (m.kind != kind) {
        throw ValidationError("expected " + std::string(to_string(kind)) + ", received " +
                              std::string(to_string(m.kind)));
    }
    return m;
}

inline Message abort_message(AbortReason reason) {
    PayloadWriter w;
    w.u8(static_cast<std::uint8_t>(reason));
    return make_message(MessageKind::abort, w);
}

inline void expect_abort(Link& link, AbortReason reason) {
    const Message m = expect(link, MessageKind::abort);
    PayloadReader r(m.payload);
    const std::uint8_t got = r.u8();
    r.finish();
    if (got != static_cast<std::uint8_t>(reason)) {
        throw ValidationError("ABORT reason " + std::to_string(got) + " differs from the expected " +
                              std::string(to_string(reason)));
    }
}

inline Message seed_message(Stage stage, std::uint32_t index, std::uint64_t contribution) {
    PayloadWriter w;
    w.u8(static_cast<std::uint8_t>(stage)).u32(index).u64(contribution);
    return make_message(MessageKind::pairing_seed, w);
}

inline std::uint64_t read_seed(const Message& m, Stage stage, std::uint32_t index) {
    PayloadReader r(m.payload);
    const std::uint8_t s = r.u8();
    const std::uint32_t i = r.u32();
    const std::uint64_t c = r.u64();
    r.finish();
    if (s != static_cast<std::uint8_t>(stage) || i != index) {
        throw ValidationError("PAIRING_SEED for the wrong stage or index");
    }
    return c;
}

/// Swaps seed contributions; Alice speaks first. Returns the joint seed.
inline std::uint64_t exchange_seed(Link& link, Party me, std::uint64_t seed, Stage stage, std::uint32_t index) {
    const std::uint64_t mine = seed_contribution(seed, me, stage, index);
    if (me == Party::alice) {
        link.send(seed_message(stage, index, mine));
        return mine ^ read_seed(expect(link, MessageKind::pairing_seed), stage, index);
    }
    const std::uint64_t theirs = read_seed(expect(link, MessageKind::pairing_seed), stage, index);
    link.send(seed_message(stage, index, mine));
    return mine ^ theirs;
}

inline Message bits_message(MessageKind kind, std::uint32_t tag, std::span<const std::uint8_t> bits) {
    PayloadWriter w;
    w.u32(tag).bits(bits);
    return make_message(kind, w);
}

inline std::vector<std::uint8_t> read_bits(const Message& m, std::uint32_t tag, std::size_t count) {
    PayloadReader r(m.payload);
    if (r.u32() != tag) {
        throw ValidationError(std::string(to_string(m.kind)) + " carries the wrong round tag");
    }
    auto bits = r.bits();
    r.finish();
    if (bits.size() != count) {
        throw ValidationError(std::string(to_string(m.kind)) + " has " + std::to_string(bits.size()) +
                              " bits, expected " + std::to_string(count));
    }
    return bits;
}

inline Message bases_message(std::span<const std::uint8_t> bases) {
    PayloadWriter w;
    w.symbols2(bases);
    return make_message(MessageKind::basis_announce, w);
}

inline std::vector<std::uint8_t> read_bases(const Message& m, std::size_t n) {
    PayloadReader r(m.payload);
    auto bases = r.symbols2();
    r.finish();
    if (bases.size() != n || std::any_of(bases.begin(), bases.end(), [](std::uint8_t b) { return b > 2; })) {
        throw ValidationError("malformed BASIS_ANNOUNCE");
    }
    return bases;
}

inline Message verdict_message(const BasisStats& s) {
    PayloadWriter w;
    for (auto v : s.tested) {
        w.u64(v);
    }
    for (auto v : s.mismatched) {
        w.u64(v);
    }
    return make_message(MessageKind::test_verdict, w);
}

inline BasisStats read_verdict(const Message& m, std::uint64_t m_per_basis) {
    PayloadReader r(m.payload);
    BasisStats s;
    for (auto& v : s.tested) {
        v = r.u64();
    }
    for (auto& v : s.mismatched) {
        v = r.u64();
    }
    r.finish();
    for (std::size_t b = 0; b < 3; ++b) {
        if (s.tested[b] != m_per_basis || s.mismatched[b] > s.tested[b]) {
            throw ValidationError("inconsistent TEST_VERDICT");
        }
    }
    return s;
}

inline Message pec_message(std::uint64_t r, std::uint64_t groups) {
    PayloadWriter w;
    w.u64(r).u64(groups);
    return make_message(MessageKind::pec_grouping, w);
}

inline Message done_message(std::uint64_t key_length) {
    PayloadWriter w;
    w.u64(key_length);
    return make_message(MessageKind::done, w);
}

inline void expect_done(Link& link, std::uint64_t key_length) {
    const Message m = expect(link, MessageKind::done);
    PayloadReader r(m.payload);
    const std::uint64_t n = r.u64();
    r.finish();
    if (n != key_length) {
        throw ValidationError("DONE key length disagrees");
    }
}

inline std::vector<std::uint32_t> sifted_positions(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    std::vector<std::uint32_t> kept;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) {
            kept.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return kept;
}

inline std::vector<std::uint8_t> own_bases(const SimConfig& c, Party p) {
    return draw_bases(c.n_sent, derive_seed(party_seed(c.seed, p), tags::kBases));
}

inline std::vector<std::uint8_t> alice_prepared_bits(const SimConfig& c) {
    Rng rng(derive_seed(party_seed(c.seed, Party::alice), tags::kKeyBits));
    std::vector<std::uint8_t> bits(c.n_sent);
    for (auto& b : bits) {
        b = rng.bit() ? 1 : 0;
    }
    return bits;
}

}  // namespace detail

/// What the quantum channel hands Bob: one outcome per sent qubit, and the
/// error labels of the positions that will survive sifting, in order.
struct BobDelivery {
    std::vector<std::uint8_t> outcomes;
    ErrorFrame frame;
};

/// Injected transmission. Where bases agree, Bob's outcome is Alice's bit
/// flipped by the label's x part; elsewhere it is a fair coin.
inline BobDelivery deliver_to_bob(const SimConfig& c) {
    const auto a = detail::own_bases(c, Party::alice);
    const auto b = detail::own_bases(c, Party::bob);
    const auto prepared = detail::alice_prepared_bits(c);
    Rng channel(derive_seed(c.seed, tags::kChannel));
    Rng coin(derive_seed(c.seed, tags::kChannel, 1));
    BobDelivery d;
    d.outcomes.resize(c.n_sent);
    d.frame.origin_seed = c.seed;
    for (std::size_t i = 0; i < c.n_sent; ++i) {
        if (a[i] == b[i]) {
            const PauliLabel p = sample_label(c.rates, channel.uniform01());
            d.frame.push_back(p);
            d.outcomes[i] = prepared[i] ^ (p.x() ? 1 : 0);
        } else {
            d.outcomes[i] = coin.bit() ? 1 : 0;
        }
    }
    return d;
}

/// Alice's side of the session.
inline PartyOutcome run_alice(Link& link, const SimConfig& config) {
    using namespace detail;
    config.validate();
    const std::uint64_t seed = config.seed;
    const std::uint64_t m = config.test_bits_per_basis;
    PartyOutcome out;
    SimReport& rep = out.report;

    const auto bases = own_bases(config, Party::alice);
    link.send(bases_message(bases));
    const auto bob_bases = read_bases(expect(link, MessageKind::basis_announce), config.n_sent);
    std::vector<std::uint8_t> bits = gather(alice_prepared_bits(config), sifted_positions(bases, bob_bases));
    rep.sifted_count = bits.size();

    const auto abort = [&](AbortReason reason) {
        link.send(abort_message(reason));
        rep.aborted = true;
        rep.abort_reason = reason;
        return out;
    };

    PauliRates planning = config.rates;
    if (m > 0) {
        if (3 * m > bits.size()) {
            return abort(AbortReason::bits_exhausted);
        }
        const auto sample = test_positions(bits.size(), m, exchange_seed(link, Party::alice, seed, Stage::test_selection, 0));
        link.send(bits_message(MessageKind::test_reveal, 0, gather(bits, sample)));
        rep.basis_stats = read_verdict(expect(link, MessageKind::test_verdict), m);
        rep.tested_count = 3 * m;
        rep.estimated_rates = rates_from_stats(rep.basis_stats, config.estimate_mode);
        bits = remove_positions(bits, sample);
        if (!config.plan_with_true_rates) {
            planning = rep.estimated_rates;
        }
        if (estimate_too_high(rep.estimated_rates, rep.basis_stats.tested[0])) {
            return abort(AbortReason::threshold);
        }
    } else {
        rep.estimated_rates = config.rates;
    }

    rep.plan = plan_schedule(planning, run_planner_config(config, bits.size()));
    if (!rep.plan.feasible) {
        return abort(abort_reason_for(rep.plan.reason));
    }

    for (std::uint32_t j = 0; j < rep.plan.k; ++j) {
        const auto perm = random_permutation(bits.size(), exchange_seed(link, Party::alice, seed, Stage::ep_pairing, j));
        const std::size_t pairs = bits.size() / 2;
        std::vector<std::uint8_t> parity(pairs);
        for (std::size_t i = 0; i < pairs; ++i) {
            parity[i] = bits[perm[2 * i]] ^ bits[perm[2 * i + 1]];
        }
        link.send(bits_message(MessageKind::pair_parity, j, parity));
        const auto keep = read_bits(expect(link, MessageKind::keep_mask), j, pairs);
        std::vector<std::uint8_t> next;
        for (std::size_t i = 0; i < pairs; ++i) {
            if (keep[i]) {
                next.push_back(bits[perm[2 * i]]);
            }
        }
        bits = std::move(next);
        rep.post_ep_counts.push_back(bits.size());
    }

    {
        const std::uint64_t r = rep.plan.r;
        const auto perm = random_permutation(bits.size(), exchange_seed(link, Party::alice, seed, Stage::pec_grouping, 0));
        const std::size_t groups = bits.size() / r;
        link.send(pec_message(r, groups));
        std::vector<std::uint8_t> next(groups, 0);
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t i = 0; i < r; ++i) {
                next[g] ^= bits[perm[g * r + i]];
            }
        }
        bits = std::move(next);
        rep.post_pec_count = bits.size();
    }

    const auto perm =
        random_permutation(bits.size(), exchange_seed(link, Party::alice, seed, Stage::steane_permutation, 0));
    const std::size_t block = steane_block_size(rep.plan.levels, bits.size());
    const std::size_t n_key = bits.size() / block;
    if (n_key == 0) {
        return abort(AbortReason::bits_exhausted);
    }
    Rng coset(derive_seed(party_seed(seed, Party::alice), tags::kCodeword));
    out.key.resize(n_key);
    for (auto& b : out.key) {
        b = coset.bit() ? 1 : 0;
    }
    const auto u = encode_concatenated(out.key, rep.plan.levels, coset);
    std::vector<std::uint8_t> mask(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        mask[i] = bits[perm[i]] ^ u[i];
    }
    link.send(bits_message(MessageKind::codeword_mask, rep.plan.levels, mask));
    expect_done(link, n_key);
    link.send(done_message(n_key));
    rep.final_key_length = n_key;
    return out;
}

/// Bob's side of the session. Bob's report includes the in-frame key check.
inline PartyOutcome run_bob(Link& link, const SimConfig& config) {
    using namespace detail;
    config.validate();
    const std::uint64_t seed = config.seed;
    const std::uint64_t m = config.test_bits_per_basis;
    PartyOutcome out;
    SimReport& rep = out.report;

    BobDelivery delivery = deliver_to_bob(config);
    const auto bases = own_bases(config, Party::bob);
    const auto alice_bases = read_bases(expect(link, MessageKind::basis_announce), config.n_sent);
    link.send(bases_message(bases));
    const auto kept = sifted_positions(alice_bases, bases);
    if (kept.size() != delivery.frame.size()) {
        throw ValidationError("announced bases disagree with the delivered qubits");
    }
    std::vector<std::uint8_t> bits = gather(delivery.outcomes, kept);
    ErrorFrame frame = std::move(delivery.frame);
    rep.sifted_count = bits.size();

    const auto abort = [&](AbortReason reason) {
        expect_abort(link, reason);
        rep.aborted = true;
        rep.abort_reason = reason;
        return out;
    };

    PauliRates planning = config.rates;
    if (m > 0) {
        if (3 * m > bits.size()) {
            return abort(AbortReason::bits_exhausted);
        }
        const auto sample = test_positions(bits.size(), m, exchange_seed(link, Party::bob, seed, Stage::test_selection, 0));
        const auto revealed = read_bits(expect(link, MessageKind::test_reveal), 0, sample.size());
        BasisStats& stats = rep.basis_stats;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const Basis b = test_basis(i, m);
            const std::uint8_t outcome =
                b == Basis::z ? bits[sample[i]] : revealed[i] ^ (flips_in_basis(frame[sample[i]], b) ? 1 : 0);
            ++stats.tested[static_cast<std::size_t>(b)];
            stats.mismatched[static_cast<std::size_t>(b)] += outcome != revealed[i] ? 1 : 0;
        }
        link.send(verdict_message(stats));
        rep.tested_count = 3 * m;
        rep.estimated_rates = rates_from_stats(stats, config.estimate_mode);
        bits = remove_positions(bits, sample);
        frame = remove_positions(frame, sample);
        if (!config.plan_with_true_rates) {
            planning = rep.estimated_rates;
        }
        if (estimate_too_high(rep.estimated_rates, stats.tested[0])) {
            return abort(AbortReason::threshold);
        }
    } else {
        rep.estimated_rates = config.rates;
    }

    rep.plan = plan_schedule(planning, run_planner_config(config, bits.size()));
    if (!rep.plan.feasible) {
        return abort(abort_reason_for(rep.plan.reason));
    }

    for (std::uint32_t j = 0; j < rep.plan.k; ++j) {
        const auto perm = random_permutation(bits.size(), exchange_seed(link, Party::bob, seed, Stage::ep_pairing, j));
        const std::size_t pairs = bits.size() / 2;
        const auto parity = read_bits(expect(link, MessageKind::pair_parity), j, pairs);
        std::vector<std::uint8_t> keep(pairs), next;
        ErrorFrame next_frame;
        for (std::size_t i = 0; i < pairs; ++i) {
            const auto c = perm[2 * i], t = perm[2 * i + 1];
            keep[i] = (bits[c] ^ bits[t]) == parity[i] ? 1 : 0;
            if (keep[i]) {
                next.push_back(bits[c]);
                next_frame.push_back(ep_pair_result(frame[c], frame[t]));
            }
        }
        link.send(bits_message(MessageKind::keep_mask, j, keep));
        bits = std::move(next);
        frame = std::move(next_frame);
        rep.post_ep_counts.push_back(bits.size());
    }

    {
        const std::uint64_t r = rep.plan.r;
        const std::uint64_t joint = exchange_seed(link, Party::bob, seed, Stage::pec_grouping, 0);
        const auto perm = random_permutation(bits.size(), joint);
        const std::size_t groups = bits.size() / r;
        const Message grouping = expect(link, MessageKind::pec_grouping);
        if (!(grouping == pec_message(r, groups))) {
            throw ValidationError("PEC_GROUPING disagrees with the local plan");
        }
        std::vector<std::uint8_t> next(groups, 0);
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t i = 0; i < r; ++i) {
                next[g] ^= bits[perm[g * r + i]];
            }
        }
        bits = std::move(next);
        frame = pec_round(frame, r, joint);
        rep.post_pec_count = bits.size();
    }

    const std::uint64_t joint = exchange_seed(link, Party::bob, seed, Stage::steane_permutation, 0);
    const auto perm = random_permutation(bits.size(), joint);
    const std::size_t block = steane_block_size(rep.plan.levels, bits.size());
    const std::size_t n_key = bits.size() / block;
    if (n_key == 0) {
        return abort(AbortReason::bits_exhausted);
    }
    const auto mask = read_bits(expect(link, MessageKind::codeword_mask), rep.plan.levels, n_key * block);
    std::vector<std::uint8_t> word(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        word[i] = bits[perm[i]] ^ mask[i];
    }
    out.key = decode_concatenated(std::move(word), rep.plan.levels);

    const auto check = finalize_key(frame, rep.plan.levels, joint);
    rep.final_key_length = n_key;
    rep.key_mismatch_count = check.mismatches;
    rep.residual_phase_error_rate = check.residual_phase_rate;
    link.send(done_message(n_key));
    expect_done(link, n_key);
    return out;
}

inline PartyOutcome run_party(Party p, Link& link, const SimConfig& config) {
    return p == Party::alice ? run_alice(link, config) : run_bob(link, config);
}

/// Runs both parties concurrently over the chosen transport. A failure on
/// either side closes the link and is rethrown; a protocol ABORT is a value.
inline SessionResult run_session(const SimConfig& config, TransportKind transport = TransportKind::in_process) {
    config.validate();
    TranscriptRecorder recorder;
    auto [alice_link, bob_link] = transport == TransportKind::stream ? make_stream_links(&recorder)
                                                                     : make_in_process_links(&recorder);
    const auto launch = [&config](Party p, Link& link) {
        return std::async(std::launch::async, [p, &link, &config] {
            try {
                return run_party(p, link, config);
            } catch (...) {
                link.close();
                throw;
            }
        });
    };
    auto fa = launch(Party::alice, *alice_link);
    auto fb = launch(Party::bob, *bob_link);

    SessionResult result;
    std::exception_ptr ea, eb;
    try {
        result.alice = fa.get();
    } catch (...) {
        ea = std::current_exception();
    }
    try {
        result.bob = fb.get();
    } catch (...) {
        eb = std::current_exception();
    }
    // The side that failed first is the cause; its peer then sees a TransportError.
    const auto is_transport = [](std::exception_ptr e) {
        try {
            std::rethrow_exception(e);
        } catch (const TransportError&) {
            return true;
        } catch (...) {
            return false;
        }
    };
    if (ea && eb) {
        std::rethrow_exception(is_transport(ea) && !is_transport(eb) ? eb : ea);
    }
    if (ea || eb) {
        std::rethrow_exception(ea ? ea : eb);
    }
    if (!(shared_view(result.alice.report) == shared_view(result.bob.report))) {
        throw ValidationError("Alice's and Bob's reports disagree");
    }
    result.report = result.bob.report;
    result.transcript = recorder.take();
    return result;
}

/// Re-runs one party against a recorded transcript. Each message the party
/// would send must match the record; returns that party's report.
inline SimReport replay(const SessionTranscript& transcript, Party party, const SimConfig& config) {
    ReplayLink link(transcript, party == Party::alice ? Direction::alice_to_bob : Direction::bob_to_alice);
    PartyOutcome out = run_party(party, link, config);
    link.finish();
    return out.report;
}

}  // namespace qkd2way
