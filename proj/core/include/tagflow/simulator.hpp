// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic discrete-event model of an RL pipeline: per-sample rollouts
// feed fixed-size batches, batches are trained on train-capable resources,
// and four pipelining strategies decide who does what and when.
//
// Metrics are derived from the event trace alone (metrics_from_trace), so
// the numbers reported and the trace written to disk cannot disagree.

#pragma once

#include "tagflow/scheduler.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tagflow {

enum class Strategy { naive, micro_batch, off_policy_fill, spatiotemporal };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();

struct Workload {
    std::uint32_t num_steps = 50;
    std::uint32_t batch_size = 64;
    double rollout_mean = 0.25;    ///< per-sample virtual duration
    double rollout_jitter = 0.2;   ///< uniform +- fraction of the mean, in [0, 1)
    double train_duration = 1.0;   ///< per batch, >= 0
    std::uint32_t staleness_limit = 1;  ///< off_policy_fill window
    std::uint32_t micro_batches = 4;    ///< micro_batch split, divides batch_size
    double transition_cost = 0.0;       ///< per retag, spatiotemporal only

    /// Throws InvalidParams naming the offending field.
    void validate() const;
};

struct FailureInjection {
    std::string resource;
    double at = 0.0;
};

enum class TraceKind {
    rollout_start,
    rollout_resume,
    rollout_preempt,
    rollout_stop,
    train_start,
    train_stop,
    train_abort,
    transition_start,
    transition_stop,
    resource_failed,
};

std::string_view to_string(TraceKind kind);

struct TraceEvent {
    double t = 0.0;
    std::string resource;
    TraceKind kind = TraceKind::rollout_start;
    std::int64_t sample = -1;
    std::int64_t batch = -1;
    std::int32_t micro = -1;
    std::uint64_t version = 0;  ///< model version when the event happened
};

/// How a resource participates under a strategy; drives bubble accounting.
struct ResourceRole {
    std::string id;
    bool rolls_out = false;
    bool trains = false;
};

struct ResourceMetrics {
    std::string id;
    bool rolls_out = false;
    bool trains = false;
    double busy = 0.0;
    double idle = 0.0;
    double down = 0.0;    ///< after a failure
    double bubble = 0.0;  ///< idle while work it could do was outstanding
};

struct SimMetrics {
    Strategy strategy = Strategy::naive;
    std::uint64_t seed = 0;
    double makespan = 0.0;
    /// Sum of bubbles over all resources / (resources * makespan).
    double bubble_fraction = 0.0;
    /// Same ratio restricted to train-capable resources.
    double train_node_bubble = 0.0;
    double busy_total = 0.0;
    std::map<std::uint64_t, std::uint64_t> staleness;  ///< version lag -> trained samples
    double mean_staleness = 0.0;
    std::uint64_t max_staleness = 0;
    std::uint64_t samples_trained = 0;
    std::vector<ResourceMetrics> resources;
};

struct SimResult {
    SimMetrics metrics;
    std::vector<TraceEvent> trace;
    std::vector<ResourceRole> roles;
    std::vector<PhaseSample> phases;  ///< spatiotemporal only
    std::vector<double> durations;    ///< per-sample rollout work
};

/// Runs one strategy. Throws IncompatibleTagging when the cluster tagging
/// does not support the strategy.
SimResult simulate(const std::vector<ResourceDescriptor>& cluster, const Workload& workload,
                   Strategy strategy, std::uint64_t seed,
                   const std::optional<FailureInjection>& failure = std::nullopt);

SimMetrics metrics_from_trace(const std::vector<TraceEvent>& trace,
                              const std::vector<ResourceRole>& roles, const Workload& workload,
                              Strategy strategy, std::uint64_t seed);

/// Per-sample virtual durations for a seed; identical across strategies.
std::vector<double> draw_durations(const Workload& workload, std::uint64_t seed);

struct CompareReport {
    std::vector<SimMetrics> rows;  ///< one per (strategy, seed)
    /// spatiotemporal bubble strictly below every baseline on every seed.
    bool dominance = false;
    std::vector<std::string> violations;
};

CompareReport compare(const std::vector<ResourceDescriptor>& cluster, const Workload& workload,
                      const std::vector<std::uint64_t>& seeds,
                      const std::vector<Strategy>& strategies = all_strategies());

struct Scenario {
    std::vector<ResourceDescriptor> cluster;
    Workload workload;
    Strategy strategy = Strategy::spatiotemporal;
    std::vector<std::uint64_t> seeds{0};
    std::optional<FailureInjection> failure;
};

/// Throws ParseError for malformed JSON and ConfigInvalid for schema errors.
Scenario scenario_from_json(std::string_view text);
Scenario load_scenario(const std::string& path);

std::string metrics_to_json(const SimMetrics& metrics);
std::string trace_to_jsonl(const std::vector<TraceEvent>& trace);
/// Fixed-width human-readable table.
std::string format_report(const std::vector<SimMetrics>& rows);

}  // namespace tagflow
