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

// Prints the planned schedule for a range of depolarizing bit errors, with
// and without a finite bit budget.

#include <cstdio>

#include "qkd2way/planner.hpp"

int main() {
    using namespace qkd2way;
    PlannerConfig finite;
    finite.n_sifted = 10'000'000;
    std::printf("%-6s  %-28s  %s\n", "b", "unbounded (k, r, L, yield)", "1e7 bits (k, r, L, yield)");
    for (int i = 0; i <= 28; i += 2) {
        const double b = i / 100.0;
        const auto u = plan_schedule(depolarizing(b), PlannerConfig{});
        const auto f = plan_schedule(depolarizing(b), finite);
        char left[64] = "infeasible", right[64] = "infeasible";
        if (u.feasible) {
            std::snprintf(left, sizeof left, "%u, %llu, %u, %.3g", u.k, static_cast<unsigned long long>(u.r), u.levels,
                          u.predicted_yield);
        }
        if (f.feasible) {
            std::snprintf(right, sizeof right, "%u, %llu, %u, %.3g", f.k, static_cast<unsigned long long>(f.r),
                          f.levels, f.predicted_yield);
        }
        std::printf("%-6.2f  %-28s  %s\n", b, left, right);
    }
    std::printf("closed-form threshold: %.7f\n", depolarizing_threshold().bit_error);
}
