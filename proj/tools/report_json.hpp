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

// JSON views of library values and the flat key=value rendering.

#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include "json.hpp"
#include "qkd2way/protocol.hpp"

namespace qkd2way::cli {

using Json = nlohmann::ordered_json;

inline Json to_json(const PauliRates& r) {
    return Json{{"p_i", r.p_i}, {"p_x", r.p_x}, {"p_y", r.p_y}, {"p_z", r.p_z}};
}

inline Json to_json(const SchedulePlan& p) {
    Json j;
    j["feasible"] = p.feasible;
    j["reason"] = std::string(to_string(p.reason));
    j["k"] = p.k;
    j["r"] = p.r;
    j["log_r"] = p.log_r;
    j["L"] = p.levels;
    j["predicted_final_error"] = p.predicted_final_error;
    j["predicted_yield"] = p.predicted_yield;
    j["log_yield"] = p.feasible ? Json(p.log_yield) : Json(nullptr);
    j["bound_based"] = p.bound_based;
    j["survivals"] = p.survivals;
    j["stage_rates"] = Json::array();
    for (const auto& r : p.stage_rates) {
        j["stage_rates"].push_back(to_json(r));
    }
    return j;
}

inline Json to_json(const BasisStats& s) {
    Json j;
    const char* names[] = {"z", "x", "y"};
    for (std::size_t b = 0; b < 3; ++b) {
        j[names[b]] = Json{{"tested", s.tested[b]}, {"mismatched", s.mismatched[b]}};
    }
    return j;
}

inline Json to_json(const SimReport& r) {
    Json j;
    j["aborted"] = r.aborted;
    j["abort_reason"] = std::string(to_string(r.abort_reason));
    j["sifted_count"] = r.sifted_count;
    j["tested_count"] = r.tested_count;
    j["post_ep_counts"] = r.post_ep_counts;
    j["post_pec_count"] = r.post_pec_count;
    j["final_key_length"] = r.final_key_length;
    j["key_mismatch_count"] = r.key_mismatch_count;
    j["residual_phase_error_rate"] = r.residual_phase_error_rate;
    j["estimated_rates"] = to_json(r.estimated_rates);
    j["basis_stats"] = to_json(r.basis_stats);
    j["plan"] = to_json(r.plan);
    return j;
}

inline Json to_json(const PlannerConfig& c) {
    Json j;
    j["error_target"] = c.error_target;
    j["key_fidelity_epsilon"] = c.key_fidelity_epsilon;
    j["n_sifted"] = c.n_sifted ? Json(*c.n_sifted) : Json("unbounded");
    j["max_k"] = c.max_k;
    j["r_max"] = c.r_max;
    return j;
}

inline std::string scalar_text(const Json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_null()) {
        return "";
    }
    return v.dump();
}

/// One `a.b.0.c=value` line per leaf; empty arrays and objects print as `key=`.
inline void write_flat(std::ostream& out, const Json& j, const std::string& prefix = "") {
    if (j.is_object() && !j.empty()) {
        for (const auto& [k, v] : j.items()) {
            write_flat(out, v, prefix.empty() ? k : prefix + "." + k);
        }
    } else if (j.is_array() && !j.empty()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            write_flat(out, j[i], prefix + "." + std::to_string(i));
        }
    } else {
        out << prefix << "=" << (j.is_structured() ? "" : scalar_text(j)) << "\n";
    }
}

/// Shortest decimal that round-trips, as in the JSON output.
inline std::string num(double x) { return Json(x).dump(); }

}  // namespace qkd2way::cli
