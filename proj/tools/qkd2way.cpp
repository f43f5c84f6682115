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

// qkd2way: threshold, evolve, plan, simulate, sweep, replay.
//
// Exit codes: 0 success (an infeasible plan or an aborted run is a success),
// 1 replay divergence or file I/O failure, 2 usage, 3 internal error.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qkd2way/analytic.hpp"
#include "qkd2way/planner.hpp"
#include "qkd2way/protocol.hpp"
#include "qkd2way/session.hpp"
#include "report_json.hpp"

#ifndef QKD2WAY_VERSION
#define QKD2WAY_VERSION "0.0.0"
#endif
#ifndef QKD2WAY_GIT_DESCRIBE
#define QKD2WAY_GIT_DESCRIBE "unknown"
#endif

namespace {

using namespace qkd2way;
using cli::Json;
using cli::num;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

/// Bad user input discovered after flag parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string version_string() { return std::string("qkd2way ") + QKD2WAY_VERSION + " (" + QKD2WAY_GIT_DESCRIBE + ")"; }

std::uint64_t default_seed() {
    const char* env = std::getenv("QKD2WAY_SEED");
    if (env == nullptr || *env == '\0') {
        return 1;
    }
    try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used, 0);
        if (used == std::string(env).size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("QKD2WAY_SEED is not an unsigned integer: ") + env);
}

PauliRates parse_rates(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw UsageError("--rates: not a number: '" + item + "'");
        }
    }
    if (v.size() != 4) {
        throw UsageError("--rates expects four comma-separated values p_i,p_x,p_y,p_z");
    }
    try {
        return PauliRates::checked(v[0], v[1], v[2], v[3]);
    } catch (const std::domain_error&) {
        throw UsageError("--rates must be non-negative and sum to 1 within 1e-12");
    }
}

/// Lets counts be written as 3e7; anything not a whole number is left for the
/// integer conversion to reject.
const CLI::Validator kCount(
    [](std::string& text) {
        if (text.find_first_of("eE.") == std::string::npos) {
            return std::string();
        }
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used == text.size() && v >= 0 && v < 0x1p63 && v == std::floor(v)) {
                text = std::to_string(static_cast<std::uint64_t>(v));
            }
        } catch (const std::exception&) {
        }
        return std::string();
    },
    "", "count");

std::string rates_arg(const PauliRates& r) { return num(r.p_i) + "," + num(r.p_x) + "," + num(r.p_y) + "," + num(r.p_z); }

struct ChannelOpts {
    std::optional<double> bit_error;
    std::string rates;

    void add(CLI::App& app) {
        auto* b = app.add_option("--bit-error", bit_error, "depolarizing channel with this p_x + p_y");
        auto* r = app.add_option("--rates", rates, "explicit channel p_i,p_x,p_y,p_z");
        b->excludes(r);
    }
    PauliRates resolve(double fallback) const {
        if (!rates.empty()) {
            return parse_rates(rates);
        }
        const double b = bit_error.value_or(fallback);
        try {
            return depolarizing(b);
        } catch (const std::domain_error& e) {
            throw UsageError(std::string("--bit-error: ") + e.what());
        }
    }
};

struct PlannerOpts {
    PlannerConfig config;
    std::optional<std::uint64_t> n_sifted;

    void add(CLI::App& app) {
        app.add_option("--target", config.error_target, "post-PEC error target")->capture_default_str();
        app.add_option("--epsilon", config.key_fidelity_epsilon, "allowed expected logical errors in the key")
            ->capture_default_str();
        app.add_option("--max-k", config.max_k, "largest number of EP rounds")->capture_default_str();
        app.add_option("--r-max", config.r_max, "largest PEC width searched exactly")
            ->transform(kCount)
            ->capture_default_str();
    }
    void add_budget(CLI::App& app) {
        app.add_option("--n-sifted", n_sifted, "bit budget for planning (default: unbounded)")->transform(kCount);
    }
    PlannerConfig resolve() const {
        PlannerConfig c = config;
        c.n_sifted = n_sifted;
        try {
            c.validate();
        } catch (const std::domain_error& e) {
            throw UsageError(e.what());
        }
        return c;
    }
    std::string args() const {
        return " --target " + num(config.error_target) + " --epsilon " + num(config.key_fidelity_epsilon) +
               " --max-k " + std::to_string(config.max_k) + " --r-max " + std::to_string(config.r_max);
    }
};

struct SimOpts {
    ChannelOpts channel;
    PlannerOpts planner;
    std::uint64_t n_sent = 3'000'000;
    std::uint64_t test_bits = 10'000;
    std::uint32_t trials = 1;
    std::optional<std::uint64_t> seed;
    bool true_rates = false;
    std::string estimate = "raw";

    void add(CLI::App& app) {
        channel.add(app);
        planner.add(app);
        app.add_option("--n-sent", n_sent, "qubits Alice sends per trial")->transform(kCount)->capture_default_str();
        app.add_option("--test-bits", test_bits, "test positions per basis")->transform(kCount)->capture_default_str();
        app.add_option("--seed", seed, "base seed (default: $QKD2WAY_SEED or 1)");
        app.add_flag("--true-rates", true_rates, "plan on the true channel instead of the estimate");
        app.add_option("--estimate", estimate, "test-bit inversion")
            ->check(CLI::IsMember({"raw", "symmetrized"}))
            ->capture_default_str();
    }
    SimConfig resolve() const {
        SimConfig c;
        c.rates = channel.resolve(0.10);
        c.planner = planner.resolve();
        c.n_sent = n_sent;
        c.test_bits_per_basis = test_bits;
        c.trials = trials;
        c.seed = seed ? *seed : default_seed();
        c.plan_with_true_rates = true_rates;
        c.estimate_mode = estimate == "symmetrized" ? EstimateMode::symmetrized : EstimateMode::raw;
        try {
            c.validate();
        } catch (const std::domain_error& e) {
            throw UsageError(e.what());
        }
        return c;
    }
};

Json sim_config_json(const SimConfig& c) {
    Json j;
    j["rates"] = cli::to_json(c.rates);
    j["n_sent"] = c.n_sent;
    j["test_bits_per_basis"] = c.test_bits_per_basis;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["plan_with_true_rates"] = c.plan_with_true_rates;
    j["estimate"] = c.estimate_mode == EstimateMode::symmetrized ? "symmetrized" : "raw";
    j["planner"] = cli::to_json(c.planner);
    return j;
}

std::string sim_args(const SimConfig& c, const PlannerOpts& p) {
    std::string s = "--rates " + rates_arg(c.rates) + " --n-sent " + std::to_string(c.n_sent) + " --test-bits " +
                    std::to_string(c.test_bits_per_basis) + " --seed " + std::to_string(c.seed) + p.args();
    if (c.plan_with_true_rates) {
        s += " --true-rates";
    }
    if (c.estimate_mode == EstimateMode::symmetrized) {
        s += " --estimate symmetrized";
    }
    return s;
}

Json artifact_header(const std::string& command) {
    Json j;
    j["tool"] = "qkd2way";
    j["version"] = version_string();
    j["command"] = command;
    return j;
}

void emit(const Json& j, bool json, std::ostream& out) {
    if (json) {
        out << j.dump(2) << "\n";
    } else {
        cli::write_flat(out, j);
    }
}

/// Writes to --output when given, else stdout.
void emit_to(const Json& j, bool json, const std::string& path) {
    if (path.empty()) {
        emit(j, json, std::cout);
        return;
    }
    std::ofstream out(path);
    emit(j, json, out);
    if (!out) {
        throw std::ios_base::failure("cannot write " + path);
    }
}

// threshold ------------------------------------------------------------------

struct ThresholdCmd {
    bool numeric = false;
    double tol = 1e-4;
    bool steane = false;
    bool json = false;
    PlannerOpts planner;

    int run() const {
        const auto t = depolarizing_threshold();
        Json j;
        j["bit_error"] = t.bit_error;
        j["channel_error"] = t.channel_error;
        j["p_i_min"] = t.p_i_min;
        if (numeric) {
            if (!(tol > 0.0)) {
                throw UsageError("--tol must be positive");
            }
            const auto s = threshold_sweep(0.01, 0.4, tol, planner.resolve());
            j["numeric_bit_error"] = s.threshold;
            j["numeric_tol"] = tol;
            j["numeric_difference"] = s.threshold - t.bit_error;
            j["numeric_evaluations"] = s.evaluations;
        }
        if (steane) {
            j["steane_threshold"] = steane_threshold();
        }
        emit(j, json, std::cout);
        return 0;
    }
};

// evolve ---------------------------------------------------------------------

struct EvolveCmd {
    std::string rates;
    unsigned k = 0;
    std::optional<std::uint64_t> pec_r;
    bool json = false;

    int run() const {
        const PauliRates in = parse_rates(rates);
        if (pec_r && (*pec_r < 3 || *pec_r % 2 == 0)) {
            throw UsageError("--pec-r must be odd and at least 3");
        }
        struct Row {
            std::string round;
            PauliRates rates;
            double survival;
        };
        std::vector<Row> rows{{"0", in, 1.0}};
        PauliRates cur = in;
        for (unsigned j = 1; j <= k; ++j) {
            const auto step = ep_map(cur);
            cur = step.rates;
            rows.push_back({std::to_string(j), cur, step.survival});
        }
        std::optional<PecPrediction> pec;
        if (pec_r) {
            pec = pec_predict(cur, *pec_r);
            rows.push_back({"pec", pec->exact_rates, 1.0 / static_cast<double>(*pec_r)});
        }
        if (json) {
            Json j;
            j["rows"] = Json::array();
            for (const auto& r : rows) {
                Json row{{"round", r.round}};
                for (const auto& [key, v] : cli::to_json(r.rates).items()) {
                    row[key] = v;
                }
                row["survival"] = r.survival;
                j["rows"].push_back(row);
            }
            if (pec) {
                j["pec"] = Json{{"r", *pec_r},
                                {"bit_error_exact", pec->bit_error_exact},
                                {"phase_error_exact", pec->phase_error_exact},
                                {"bit_error_bound", pec->bit_error_bound},
                                {"phase_error_bound", pec->phase_error_bound},
                                {"phase_error_exp_bound", pec->phase_error_exp_bound}};
            }
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        std::cout << "round,p_i,p_x,p_y,p_z,survival\n";
        for (const auto& r : rows) {
            std::cout << r.round << "," << num(r.rates.p_i) << "," << num(r.rates.p_x) << "," << num(r.rates.p_y)
                      << "," << num(r.rates.p_z) << "," << num(r.survival) << "\n";
        }
        return 0;
    }
};

// plan -----------------------------------------------------------------------

struct PlanCmd {
    ChannelOpts channel;
    PlannerOpts planner;
    bool json = false;

    int run() const {
        if (!channel.bit_error && channel.rates.empty()) {
            throw UsageError("plan needs --bit-error or --rates");
        }
        const PauliRates rates = channel.resolve(0.0);
        const PlannerConfig config = planner.resolve();
        Json j = artifact_header("plan");
        j["rates"] = cli::to_json(rates);
        j["planner"] = cli::to_json(config);
        j["ep_converges"] = ep_converges(rates);
        j["plan"] = cli::to_json(plan_schedule(rates, config));
        emit(j, json, std::cout);
        return 0;
    }
};

// simulate -------------------------------------------------------------------

struct SimulateCmd {
    SimOpts sim;
    std::string session;
    std::string transcript;
    std::string output;
    bool json = false;

    int run() const {
        const SimConfig config = sim.resolve();
        if (!transcript.empty() && session.empty()) {
            throw UsageError("--transcript requires --session");
        }
        if (!session.empty() && config.trials != 1) {
            throw UsageError("--session runs a single trial; drop --trials");
        }
        std::vector<SimReport> reports;
        if (!session.empty()) {
            const auto result =
                run_session(config, session == "stream" ? TransportKind::stream : TransportKind::in_process);
            if (!transcript.empty()) {
                write_transcript_file(transcript, result.transcript);
            }
            reports.push_back(result.report);
        } else if (config.trials == 1) {
            reports.push_back(run_protocol(config));
        } else {
            reports = run_trials(config);
        }

        Json j = artifact_header("simulate");
        j["seed"] = config.seed;
        j["config"] = sim_config_json(config);
        j["rerun"] = "qkd2way simulate " + sim_args(config, sim.planner) +
                     (config.trials != 1 ? " --trials " + std::to_string(config.trials) : "") +
                     (session.empty() ? "" : " --session " + session);
        if (!session.empty()) {
            j["session"] = session;
        }
        std::uint64_t completed = 0, clean = 0, key_bits = 0;
        j["trials"] = Json::array();
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& r = reports[i];
            Json t = cli::to_json(r);
            t["trial_seed"] = config.trials == 1 ? config.seed : trial_seed(config.seed, static_cast<std::uint32_t>(i));
            j["trials"].push_back(std::move(t));
            if (!r.aborted) {
                ++completed;
                clean += r.key_mismatch_count == 0 ? 1 : 0;
                key_bits += r.final_key_length;
            }
        }
        j["summary"] = Json{{"trials", reports.size()},
                            {"completed", completed},
                            {"aborted", reports.size() - completed},
                            {"mismatch_free", clean},
                            {"key_bits", key_bits}};
        emit_to(j, json, output);
        return 0;
    }
};

// sweep ----------------------------------------------------------------------

struct SweepCmd {
    double from = 0.05;
    double to = 0.30;
    double step = 0.01;
    SimOpts sim;
    std::string output;

    int run() {
        if (!(step > 0.0) || !(to >= from) || from < 0.0 || to > 2.0 / 3.0) {
            throw UsageError("sweep needs 0 <= --from <= --to <= 2/3 and --step > 0");
        }
        if (sim.channel.bit_error || !sim.channel.rates.empty()) {
            throw UsageError("sweep sets the channel itself; drop --bit-error and --rates");
        }
        const bool mc = sim.n_sent > 0;
        const auto points = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
        const std::uint64_t base_seed = sim.seed ? *sim.seed : default_seed();
        const PlannerConfig planner = sim.planner.resolve();

        struct Row {
            double bit_error;
            SchedulePlan plan;
            double key_rate = 0.0;
            double mismatch_rate = 0.0;
        };
        const auto evaluate = [&](std::size_t i) {
            Row row;
            // Round away the accumulated binary error of from + i * step.
            row.bit_error = std::round((from + static_cast<double>(i) * step) * 1e12) / 1e12;
            row.plan = plan_schedule(depolarizing(row.bit_error), planner);
            if (mc) {
                SimConfig c;
                c.rates = depolarizing(row.bit_error);
                c.planner = sim.planner.config;
                c.n_sent = sim.n_sent;
                c.test_bits_per_basis = sim.test_bits;
                c.trials = sim.trials;
                c.seed = derive_seed(base_seed, 0x7377656570ULL, i);
                c.plan_with_true_rates = sim.true_rates;
                c.estimate_mode = sim.estimate == "symmetrized" ? EstimateMode::symmetrized : EstimateMode::raw;
                std::uint64_t key = 0, bad = 0;
                for (std::uint32_t t = 0; t < std::max<std::uint32_t>(c.trials, 1); ++t) {
                    SimConfig one = c;
                    one.seed = trial_seed(c.seed, t);
                    const auto r = run_protocol(one);
                    key += r.final_key_length;
                    bad += r.key_mismatch_count;
                }
                row.key_rate = static_cast<double>(key) / (static_cast<double>(c.n_sent) * std::max(c.trials, 1u));
                row.mismatch_rate = key == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(key);
            }
            return row;
        };
        std::vector<Row> rows(points);
        detail::parallel_for(points, 0, [&](std::size_t i) { rows[i] = evaluate(i); });

        std::ofstream file;
        if (!output.empty()) {
            file.open(output);
        }
        std::ostream& out = output.empty() ? std::cout : file;
        out << "bit_error,feasible,k,r,L,yield,mc_key_rate,mc_mismatch_rate\n";
        for (const Row& row : rows) {
            const auto& p = row.plan;
            out << num(row.bit_error) << "," << (p.feasible ? 1 : 0) << ",";
            if (p.feasible) {
                out << p.k << "," << p.r << "," << p.levels << "," << num(p.predicted_yield);
            } else {
                out << ",,,";
            }
            out << ",";
            if (mc) {
                out << num(row.key_rate) << "," << num(row.mismatch_rate);
            } else {
                out << ",";
            }
            out << "\n";
        }
        if (!out) {
            throw std::ios_base::failure("cannot write " + output);
        }
        return 0;
    }
};

// replay ---------------------------------------------------------------------

struct ReplayCmd {
    SimOpts sim;
    std::string transcript;
    std::string party = "bob";
    bool json = false;

    int run() const {
        const SimConfig config = sim.resolve();
        SessionTranscript t;
        try {
            t = read_transcript_file(transcript);
        } catch (const ValidationError& e) {
            std::cerr << "replay: " << e.what() << "\n";
            return kExitFailure;
        }
        Json j = artifact_header("replay");
        j["party"] = party;
        j["transcript"] = transcript;
        j["entries"] = t.entries.size();
        try {
            j["report"] = cli::to_json(replay(t, party == "alice" ? Party::alice : Party::bob, config));
        } catch (const ValidationError& e) {
            std::cerr << "replay: divergence: " << e.what() << "\n";
            return kExitFailure;
        }
        j["valid"] = true;
        emit(j, json, std::cout);
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive two-way distillation for six-state QKD: analytics, planning and simulation."};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    ThresholdCmd threshold;
    auto* c_threshold = app.add_subcommand("threshold", "depolarizing and Steane thresholds");
    c_threshold->add_flag("--numeric", threshold.numeric, "also locate the edge by bisection on the planner");
    c_threshold->add_option("--tol", threshold.tol, "bisection tolerance")->capture_default_str();
    c_threshold->add_flag("--steane", threshold.steane, "print the concatenated Steane threshold");
    c_threshold->add_flag("--json", threshold.json, "emit JSON");
    threshold.planner.add(*c_threshold);

    EvolveCmd evolve;
    auto* c_evolve = app.add_subcommand("evolve", "EP rate evolution as CSV");
    c_evolve->add_option("--rates", evolve.rates, "p_i,p_x,p_y,p_z")->required();
    c_evolve->add_option("--k", evolve.k, "EP rounds")->required();
    c_evolve->add_option("--pec-r", evolve.pec_r, "append the PEC prediction at this width");
    c_evolve->add_flag("--json", evolve.json, "emit JSON");

    PlanCmd plan;
    auto* c_plan = app.add_subcommand("plan", "choose (k, r, L)");
    plan.channel.add(*c_plan);
    plan.planner.add(*c_plan);
    plan.planner.add_budget(*c_plan);
    c_plan->add_flag("--json", plan.json, "emit JSON");

    SimulateCmd simulate;
    auto* c_sim = app.add_subcommand("simulate", "Monte Carlo runs of the full scheme");
    simulate.sim.add(*c_sim);
    c_sim->add_option("--trials", simulate.sim.trials, "independent trials")->capture_default_str();
    c_sim->add_option("--session", simulate.session, "run as a two-party session over this transport")
        ->check(CLI::IsMember({"in-process", "stream"}));
    c_sim->add_option("--transcript", simulate.transcript, "write the session transcript here");
    c_sim->add_option("--output", simulate.output, "write the report here instead of stdout");
    c_sim->add_flag("--json", simulate.json, "emit JSON");

    SweepCmd sweep;
    sweep.sim.n_sent = 0;
    auto* c_sweep = app.add_subcommand("sweep", "feasibility and Monte Carlo sweep over depolarizing bit error");
    c_sweep->add_option("--from", sweep.from)->capture_default_str();
    c_sweep->add_option("--to", sweep.to)->capture_default_str();
    c_sweep->add_option("--step", sweep.step)->capture_default_str();
    sweep.sim.add(*c_sweep);
    c_sweep->add_option("--trials", sweep.sim.trials, "Monte Carlo trials per point")->capture_default_str();
    c_sweep->add_option("--output", sweep.output, "write the CSV here instead of stdout");

    ReplayCmd replay_cmd;
    auto* c_replay = app.add_subcommand("replay", "check one party against a recorded transcript");
    replay_cmd.sim.add(*c_replay);
    c_replay->add_option("--transcript", replay_cmd.transcript, "transcript file")->required();
    c_replay->add_option("--party", replay_cmd.party, "party to replay")
        ->check(CLI::IsMember({"alice", "bob"}))
        ->capture_default_str();
    c_replay->add_flag("--json", replay_cmd.json, "emit JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*c_threshold) return threshold.run();
        if (*c_evolve) return evolve.run();
        if (*c_plan) return plan.run();
        if (*c_sim) return simulate.run();
        if (*c_sweep) return sweep.run();
        if (*c_replay) return replay_cmd.run();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
