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

// Runs Alice and Bob over a socket pair, lists the messages they exchange and
// replays Bob against the recorded transcript.

#include <cstdio>
#include <cstdlib>

#include "qkd2way/session.hpp"

int main(int argc, char** argv) {
    using namespace qkd2way;
    SimConfig config;
    config.n_sent = 1'000'000;
    config.test_bits_per_basis = 3000;
    config.rates = depolarizing(argc > 1 ? std::atof(argv[1]) : 0.08);

    const auto s = run_session(config, TransportKind::stream);
    std::size_t bytes = 0;
    for (const auto& e : s.transcript.entries) {
        bytes += e.message.payload.size();
        std::printf("%s %-15s %8zu bytes\n", e.direction == Direction::alice_to_bob ? "A->B" : "B->A",
                    std::string(to_string(e.message.kind)).c_str(), e.message.payload.size());
    }
    std::printf("messages=%zu payload_bytes=%zu\n", s.transcript.entries.size(), bytes);
    if (s.report.aborted) {
        std::printf("aborted: %s\n", std::string(to_string(s.report.abort_reason)).c_str());
        return 0;
    }
    std::printf("k=%u r=%llu L=%u key_bits=%zu keys_equal=%s\n", s.report.plan.k,
                static_cast<unsigned long long>(s.report.plan.r), s.report.plan.levels, s.alice.key.size(),
                s.alice.key == s.bob.key ? "yes" : "no");
    const bool same = replay(s.transcript, Party::bob, config) == s.report;
    std::printf("replay(bob) reproduces the report: %s\n", same ? "yes" : "no");
    return same ? 0 : 1;
}
