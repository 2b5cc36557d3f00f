// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Control events, commands and the pure planning function that maps one to
// the other. Planning has no side effects so an event log can be replayed
// offline and compared with a live controller.

#pragma once

#include "tagflow/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tagflow {

enum class CapabilityTag : std::uint8_t { rollout, train, critic, reference, reward };

std::string_view to_string(CapabilityTag tag);
/// Throws Error on an unknown name.
CapabilityTag parse_capability(std::string_view name);

enum class EventKind : std::uint8_t {
    threshold_reached,
    timeout,
    weight_sync,
    tag_transition,
    resource_restored,
    resource_failed,
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view name);

struct ControlEvent {
    EventKind kind = EventKind::threshold_reached;
    std::optional<ModelVersion> version;       ///< weight_sync target
    std::vector<std::string> resources;        ///< affected resources (threshold: train-capable)
    std::optional<CapabilityTag> to_tag;       ///< tag_transition: new active tag, none = idle
    std::vector<std::uint64_t> tasks;          ///< resource_failed: in-flight request ids
    double at = 0.0;                           ///< virtual timestamp

    bool operator==(const ControlEvent&) const = default;
};

enum class CommandKind : std::uint8_t {
    pause_rollouts,
    resume_rollouts,
    begin_engine_switch,
    complete_engine_switch,
    request_train_dispatch,
    requeue_tasks,
};

std::string_view to_string(CommandKind kind);

struct Command {
    CommandKind kind = CommandKind::pause_rollouts;
    bool all = false;  ///< pause/resume every resource
    std::vector<std::string> resources;
    std::vector<std::uint64_t> tasks;
    std::optional<ModelVersion> version;

    bool operator==(const Command&) const = default;
};

/// Planning-relevant controller state. The live rollout manager and offline
/// replay both advance it with apply_plan.
struct ControlState {
    ModelVersion version;
    bool global_pause = false;
    std::set<std::string> paused_resources;
    std::map<std::string, std::uint64_t> command_counts;
    std::uint64_t events = 0;

    bool operator==(const ControlState&) const = default;
};

/// Maps an event to an ordered command plan. Throws StaleVersion for a
/// weight_sync that does not advance the version.
std::vector<Command> plan_event(const ControlEvent& event, const ControlState& state);

/// Applies a plan's bookkeeping effect (pause sets, version, counters).
void apply_plan(ControlState& state, const ControlEvent& event, const std::vector<Command>& plan);

/// Every begin_engine_switch must follow a pause_rollouts and be followed by
/// complete_engine_switch and then resume_rollouts.
bool plan_is_valid(const std::vector<Command>& plan);

std::string event_to_json(const ControlEvent& event);
ControlEvent event_from_json(std::string_view line);
std::string state_to_json(const ControlState& state);
ControlState state_from_json(std::string_view text);

}  // namespace tagflow
