// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/control.hpp"

#include "tagflow/error.hpp"

#include <array>

#include <json.hpp>

namespace tagflow {

using json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 5> kTagNames{"rollout", "train", "critic", "reference",
                                                    "reward"};
constexpr std::array<std::string_view, 6> kEventNames{
    "threshold_reached", "timeout",           "weight_sync",
    "tag_transition",    "resource_restored", "resource_failed"};
constexpr std::array<std::string_view, 6> kCommandNames{
    "pause_rollouts",         "resume_rollouts",        "begin_engine_switch",
    "complete_engine_switch", "request_train_dispatch", "requeue_tasks"};

}  // namespace

std::string_view to_string(CapabilityTag tag) { return kTagNames.at(static_cast<std::size_t>(tag)); }

CapabilityTag parse_capability(std::string_view name) {
    for (std::size_t i = 0; i < kTagNames.size(); ++i)
        if (kTagNames[i] == name) return static_cast<CapabilityTag>(i);
    throw Error("unknown capability tag '" + std::string(name) + "'");
}

std::string_view to_string(EventKind kind) { return kEventNames.at(static_cast<std::size_t>(kind)); }

EventKind parse_event_kind(std::string_view name) {
    for (std::size_t i = 0; i < kEventNames.size(); ++i)
        if (kEventNames[i] == name) return static_cast<EventKind>(i);
    throw Error("unknown event kind '" + std::string(name) + "'");
}

std::string_view to_string(CommandKind kind) {
    return kCommandNames.at(static_cast<std::size_t>(kind));
}

std::vector<Command> plan_event(const ControlEvent& event, const ControlState& state) {
    std::vector<Command> plan;
    switch (event.kind) {
        case EventKind::threshold_reached:
        case EventKind::timeout:
            plan.push_back({CommandKind::pause_rollouts, false, event.resources, {}, {}});
            plan.push_back({CommandKind::request_train_dispatch, false, {}, {}, {}});
            break;
        case EventKind::weight_sync: {
            if (!event.version || *event.version <= state.version)
                throw StaleVersion("weight_sync version must exceed current version " +
                                   std::to_string(state.version.value));
            plan.push_back({CommandKind::pause_rollouts, true, {}, {}, {}});
            plan.push_back({CommandKind::begin_engine_switch, false, {}, {}, {}});
            plan.push_back({CommandKind::complete_engine_switch, false, {}, {}, event.version});
            plan.push_back({CommandKind::resume_rollouts, true, {}, {}, {}});
            break;
        }
        case EventKind::tag_transition:
            if (event.to_tag == CapabilityTag::rollout)
                plan.push_back({CommandKind::resume_rollouts, false, event.resources, {}, {}});
            else
                plan.push_back({CommandKind::pause_rollouts, false, event.resources, {}, {}});
            break;
        case EventKind::resource_restored:
            plan.push_back({CommandKind::resume_rollouts, false, event.resources, {}, {}});
            break;
        case EventKind::resource_failed:
            plan.push_back({CommandKind::requeue_tasks, false, event.resources, event.tasks, {}});
            break;
    }
    return plan;
}

void apply_plan(ControlState& state, const ControlEvent& event, const std::vector<Command>& plan) {
    ++state.events;
    (void)event;
    for (const auto& cmd : plan) {
        ++state.command_counts[std::string(to_string(cmd.kind))];
        switch (cmd.kind) {
            case CommandKind::pause_rollouts:
                if (cmd.all) state.global_pause = true;
                state.paused_resources.insert(cmd.resources.begin(), cmd.resources.end());
                break;
            case CommandKind::resume_rollouts:
                if (cmd.all) {
                    state.global_pause = false;
                    state.paused_resources.clear();
                }
                for (const auto& r : cmd.resources) state.paused_resources.erase(r);
                break;
            case CommandKind::complete_engine_switch:
                if (cmd.version) state.version = *cmd.version;
                break;
            case CommandKind::requeue_tasks:
                for (const auto& r : cmd.resources) state.paused_resources.erase(r);
                break;
            case CommandKind::begin_engine_switch:
            case CommandKind::request_train_dispatch:
                break;
        }
    }
}

bool plan_is_valid(const std::vector<Command>& plan) {
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (plan[i].kind != CommandKind::begin_engine_switch) continue;
        bool paused_before = false;
        for (std::size_t j = 0; j < i; ++j)
            if (plan[j].kind == CommandKind::pause_rollouts) paused_before = true;
        std::size_t complete_at = plan.size();
        for (std::size_t j = i + 1; j < plan.size(); ++j)
            if (plan[j].kind == CommandKind::complete_engine_switch) {
                complete_at = j;
                break;
            }
        bool resumed_after = false;
        for (std::size_t j = complete_at + 1; j < plan.size(); ++j)
            if (plan[j].kind == CommandKind::resume_rollouts) resumed_after = true;
        if (!paused_before || complete_at == plan.size() || !resumed_after) return false;
    }
    return true;
}

std::string event_to_json(const ControlEvent& event) {
    json j;
    j["kind"] = std::string(to_string(event.kind));
    j["version"] = event.version ? json(event.version->value) : json(nullptr);
    j["resources"] = event.resources;
    j["to_tag"] = event.to_tag ? json(std::string(to_string(*event.to_tag))) : json(nullptr);
    j["tasks"] = event.tasks;
    j["at"] = event.at;
    return j.dump();
}

ControlEvent event_from_json(std::string_view line) {
    const auto j = json::parse(line);
    if (!j.is_object()) throw Error("event record is not an object");
    ControlEvent e;
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    if (j.contains("version") && !j["version"].is_null())
        e.version = ModelVersion{j["version"].get<std::uint64_t>()};
    if (j.contains("resources")) e.resources = j["resources"].get<std::vector<std::string>>();
    if (j.contains("to_tag") && !j["to_tag"].is_null())
        e.to_tag = parse_capability(j["to_tag"].get<std::string>());
    if (j.contains("tasks")) e.tasks = j["tasks"].get<std::vector<std::uint64_t>>();
    if (j.contains("at")) e.at = j["at"].get<double>();
    return e;
}

std::string state_to_json(const ControlState& state) {
    json j;
    j["version"] = state.version.value;
    j["global_pause"] = state.global_pause;
    j["paused_resources"] = std::vector<std::string>(state.paused_resources.begin(),
                                                     state.paused_resources.end());
    json counts = json::object();
    for (const auto& [k, v] : state.command_counts) counts[k] = v;
    j["command_counts"] = std::move(counts);
    j["events"] = state.events;
    return j.dump();
}

ControlState state_from_json(std::string_view text) {
    const auto j = json::parse(text);
    ControlState s;
    s.version = ModelVersion{j.at("version").get<std::uint64_t>()};
    s.global_pause = j.at("global_pause").get<bool>();
    for (const auto& r : j.at("paused_resources")) s.paused_resources.insert(r.get<std::string>());
    for (const auto& [k, v] : j.at("command_counts").items())
        s.command_counts[k] = v.get<std::uint64_t>();
    s.events = j.at("events").get<std::uint64_t>();
    return s;
}

}  // namespace tagflow
