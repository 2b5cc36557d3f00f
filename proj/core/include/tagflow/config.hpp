// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned stack configuration. Schema (all sections but cluster optional):
//
//   {
//     "schema_version": 1,
//     "seed": 0,
//     "cluster":    [{"id": "n0", "tags": ["rollout", "train"],
//                     "peak_flops": 1e15, "hbm_bandwidth": 3e12}],
//     "engine":     {"vocab_size": 32000, "retry_after_ms": 20},
//     "thresholds": {"batch_size": 4, "timeout_ms": 0},
//     "dataloader": {"source": "tasks.jsonl"},
//     "server":     {"enabled": false, "host": "127.0.0.1", "port": 0},
//     "agents":     {"workers": 4, "turns": 2, "max_new_tokens": 16},
//     "trainer":    {"train_duration_ms": 5},
//     "rollout":    {"resume_capacity": 0, "expected_switch_ms": 200,
//                    "pending_timeout_ms": 0},
//     "event_log":  "events.jsonl"
//   }
//
// Relative paths are resolved against the config file's directory.

#pragma once

#include "tagflow/engine.hpp"
#include "tagflow/scheduler.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tagflow {

inline constexpr int kSchemaVersion = 1;

struct StackConfig {
    int schema_version = kSchemaVersion;
    std::uint64_t seed = 0;
    std::vector<ResourceDescriptor> cluster;
    EngineOptions engine;

    struct Thresholds {
        std::size_t batch_size = 4;
        std::chrono::milliseconds timeout{0};  ///< 0 disables the timeout trigger
    } thresholds;

    struct Dataloader {
        std::string source;
    } dataloader;

    struct Server {
        bool enabled = false;
        std::string host = "127.0.0.1";
        int port = 0;  ///< 0 picks a free port
    } server;

    struct Agents {
        std::size_t workers = 4;
        std::uint32_t turns = 2;
        std::uint32_t max_new_tokens = 16;
    } agents;

    struct Trainer {
        std::chrono::milliseconds train_duration{5};
    } trainer;

    struct Rollout {
        std::size_t resume_capacity = 0;
        std::chrono::milliseconds expected_switch{200};
        std::chrono::milliseconds pending_timeout{0};
    } rollout;

    std::string event_log;
};

/// Throws ParseError on malformed JSON and ConfigInvalid naming the field
/// path on schema violations.
StackConfig parse_config(std::string_view text, const std::string& base_dir = ".");
StackConfig load_config(const std::string& path);

/// Flag value if given, else the environment variable, else nullopt.
std::optional<std::string> resolve_option(const std::optional<std::string>& flag,
                                          const char* env_name);

}  // namespace tagflow
