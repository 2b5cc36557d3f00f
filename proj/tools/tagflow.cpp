// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// tagflow: run the integrated stack, the pipeline simulator, or offline
// replay of a control event log.
//
// Settings resolve as flag > environment > file:
//   --config    TAGFLOW_CONFIG
//   --seed      TAGFLOW_SEED
//   --out-dir   TAGFLOW_OUT_DIR
//
// Exit status: 0 success, 1 failed assertion or replay divergence,
// 2 invalid input (config, scenario, log, usage).

#include "tagflow/config.hpp"
#include "tagflow/error.hpp"
#include "tagflow/rollout_manager.hpp"
#include "tagflow/simulator.hpp"
#include "tagflow/stack.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace tagflow;

namespace {

constexpr int kOk = 0;
constexpr int kAssertFailed = 1;
constexpr int kBadInput = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct Options {
    std::optional<std::string> config;
    std::optional<std::string> scenario;
    std::optional<std::string> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> snapshot;
    std::string log;
    bool assert_dominance = false;
    bool wait = false;
};

std::optional<std::uint64_t> resolved_seed(const Options& o) {
    auto s = resolve_option(o.seed, "TAGFLOW_SEED");
    if (!s) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(*s, &used);
        if (used != s->size()) throw std::invalid_argument(*s);
        return v;
    } catch (const std::exception&) {
        throw ConfigInvalid("seed", "not an unsigned integer: '" + *s + "'");
    }
}

std::optional<fs::path> resolved_out_dir(const Options& o) {
    auto d = resolve_option(o.out_dir, "TAGFLOW_OUT_DIR");
    if (!d) return std::nullopt;
    fs::create_directories(*d);
    return fs::path(*d);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

StackConfig stack_config(const Options& o) {
    const auto path = resolve_option(o.config, "TAGFLOW_CONFIG");
    if (!path) throw ConfigInvalid("config", "no config given (--config or TAGFLOW_CONFIG)");
    auto cfg = load_config(*path);
    if (auto seed = resolved_seed(o)) cfg.seed = *seed;
    return cfg;
}

int run_stack(const Options& o, bool serve) {
    auto cfg = stack_config(o);
    const auto out = resolved_out_dir(o);
    if (out && cfg.event_log.empty()) cfg.event_log = (*out / "events.jsonl").string();
    if (!serve) cfg.server.enabled = false;

    Stack stack(cfg);
    stack.start();
    for (const auto& [name, ready] : stack.readiness())
        std::cout << "ready " << name << (ready ? "" : " (not ready)") << '\n';
    if (stack.http_port() > 0)
        std::cout << "listening on " << cfg.server.host << ':' << stack.http_port() << '\n';
    std::cout.flush();

    const auto summary = stack.run_until_drained();
    std::cout << "tasks_completed " << summary.tasks_completed << '\n'
              << "trajectories " << summary.trajectories << '\n'
              << "updates " << summary.updates << '\n'
              << "turn_retries " << summary.turn_retries << '\n'
              << "final_version " << summary.final_version.value << '\n';

    if (out) {
        std::ostringstream records;
        for (const auto& batch : stack.trained()) write_records(records, batch.trajectories);
        write_file(*out / "trajectories.jsonl", records.str());
        write_file(*out / "state.json", state_to_json(stack.rollout().state()) + "\n");
        std::cout << "wrote " << (*out / "trajectories.jsonl").string() << '\n';
    }

    if (serve && o.wait && stack.http_port() > 0) {
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "serving until interrupted" << std::endl;
        while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    stack.stop();
    return kOk;
}

Scenario scenario_for(const Options& o) {
    if (!o.scenario) throw ConfigInvalid("scenario", "--scenario is required");
    auto s = load_scenario(*o.scenario);
    if (auto seed = resolved_seed(o)) s.seeds = {*seed};
    return s;
}

int cmd_simulate(const Options& o) {
    const auto sc = scenario_for(o);
    const auto out = resolved_out_dir(o);
    std::vector<SimMetrics> rows;
    std::string metrics;
    for (auto seed : sc.seeds) {
        SimResult r;
        try {
            r = simulate(sc.cluster, sc.workload, sc.strategy, seed, sc.failure);
        } catch (const IncompatibleTagging& e) {
            throw IncompatibleTagging(std::string(to_string(sc.strategy)) + ": " + e.what());
        }
        metrics += metrics_to_json(r.metrics) + "\n";
        if (out) {
            const auto name = "trace-" + std::string(to_string(sc.strategy)) + "-" +
                              std::to_string(seed) + ".jsonl";
            write_file(*out / name, trace_to_jsonl(r.trace));
        }
        rows.push_back(std::move(r.metrics));
    }
    std::cout << format_report(rows);
    if (out) write_file(*out / "metrics.jsonl", metrics);
    return kOk;
}

int cmd_compare(const Options& o) {
    const auto sc = scenario_for(o);
    const auto out = resolved_out_dir(o);
    const auto report = compare(sc.cluster, sc.workload, sc.seeds);
    std::cout << format_report(report.rows);
    std::cout << "dominance " << (report.dominance ? "holds" : "violated") << '\n';
    for (const auto& v : report.violations) std::cout << "  " << v << '\n';
    if (out) {
        std::string lines;
        for (const auto& m : report.rows) lines += metrics_to_json(m) + "\n";
        write_file(*out / "compare.jsonl", lines);
        write_file(*out / "compare.txt", format_report(report.rows));
    }
    return (o.assert_dominance && !report.dominance) ? kAssertFailed : kOk;
}

int cmd_replay(const Options& o) {
    std::ifstream in(o.log, std::ios::binary);
    if (!in) throw Error("cannot open event log '" + o.log + "'");
    const auto events = read_event_log(in);
    const auto state = replay_events(events);
    std::cout << "events " << events.size() << '\n' << state_to_json(state) << '\n';
    if (o.snapshot) {
        std::ifstream snap(*o.snapshot);
        if (!snap) throw Error("cannot open snapshot '" + *o.snapshot + "'");
        std::stringstream buf;
        buf << snap.rdbuf();
        const auto recorded = state_from_json(buf.str());
        if (!(recorded == state)) {
            std::cout << "divergence: replayed state differs from snapshot\n"
                      << "snapshot " << state_to_json(recorded) << '\n';
            return kAssertFailed;
        }
        std::cout << "snapshot matches\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tagflow: rollout/training orchestration stack and pipeline simulator"};
    app.require_subcommand(1);
    Options o;

    auto* serve = app.add_subcommand("serve", "Start every service and run the task file");
    serve->add_option("--config", o.config, "Stack config (env TAGFLOW_CONFIG)");
    serve->add_option("--seed", o.seed, "Seed override (env TAGFLOW_SEED)");
    serve->add_option("--out-dir", o.out_dir, "Output directory (env TAGFLOW_OUT_DIR)");
    serve->add_flag("--wait", o.wait, "Keep serving HTTP after the task file drains");

    auto* exp = app.add_subcommand("export-traj", "Run the task file and export trajectories");
    exp->add_option("--config", o.config, "Stack config (env TAGFLOW_CONFIG)");
    exp->add_option("--seed", o.seed, "Seed override (env TAGFLOW_SEED)");
    exp->add_option("--out-dir", o.out_dir, "Output directory (env TAGFLOW_OUT_DIR)");

    auto* sim = app.add_subcommand("simulate", "Simulate one strategy");
    sim->add_option("--scenario", o.scenario, "Scenario file")->required();
    sim->add_option("--seed", o.seed, "Seed override (env TAGFLOW_SEED)");
    sim->add_option("--out-dir", o.out_dir, "Output directory (env TAGFLOW_OUT_DIR)");

    auto* cmp = app.add_subcommand("compare", "Simulate every strategy and rank bubbles");
    cmp->add_option("--scenario", o.scenario, "Scenario file")->required();
    cmp->add_option("--seed", o.seed, "Seed override (env TAGFLOW_SEED)");
    cmp->add_option("--out-dir", o.out_dir, "Output directory (env TAGFLOW_OUT_DIR)");
    cmp->add_flag("--assert-dominance", o.assert_dominance,
                  "Exit 1 unless spatiotemporal has the lowest bubble on every seed");

    auto* rep = app.add_subcommand("replay", "Replay a control event log offline");
    rep->add_option("log", o.log, "Event log (JSONL)")->required();
    rep->add_option("--snapshot", o.snapshot, "Recorded state.json to compare against");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return run_stack(o, true);
        if (*exp) {
            if (!resolve_option(o.out_dir, "TAGFLOW_OUT_DIR"))
                throw ConfigInvalid("out-dir", "export-traj needs --out-dir or TAGFLOW_OUT_DIR");
            return run_stack(o, false);
        }
        if (*sim) return cmd_simulate(o);
        if (*cmp) return cmd_compare(o);
        if (*rep) return cmd_replay(o);
    } catch (const LogCorrupt& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    }
    return kBadInput;
}
