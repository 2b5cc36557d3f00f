// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/rollout_manager.hpp"

#include "tagflow/error.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace tagflow {

RolloutManager::RolloutManager(MockEngine& engine, RolloutManagerOptions options)
    : engine_(engine), options_(std::move(options)) {
    if (!options_.clock) {
        const auto start = std::chrono::steady_clock::now();
        options_.clock = [start] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };
    }
    control_.version = engine_.state().current_version;
}

double RolloutManager::now() const { return options_.clock(); }

void RolloutManager::set_rollout_resources(std::vector<std::string> resources) {
    std::lock_guard lock(mu_);
    rollout_resources_ = std::move(resources);
    round_robin_ = 0;
}

void RolloutManager::set_train_capable(std::vector<std::string> resources) {
    std::lock_guard lock(control_mu_);
    train_capable_ = std::move(resources);
}

void RolloutManager::set_train_dispatcher(std::function<void()> dispatch) {
    std::lock_guard lock(control_mu_);
    train_dispatch_ = std::move(dispatch);
}

void RolloutManager::set_placement_listener(
    std::function<void(RequestId, const std::string&, bool)> fn) {
    std::lock_guard lock(mu_);
    placement_listener_ = std::move(fn);
}

void RolloutManager::set_event_sink(std::ostream* sink) {
    std::lock_guard lock(control_mu_);
    sink_ = sink;
}

void RolloutManager::notify_placements(
    const std::vector<std::tuple<RequestId, std::string, bool>>& changes) {
    std::function<void(RequestId, const std::string&, bool)> fn;
    {
        std::lock_guard lock(mu_);
        fn = placement_listener_;
    }
    if (!fn) return;
    for (const auto& [id, resource, attached] : changes)
        if (!resource.empty()) fn(id, resource, attached);
}

bool RolloutManager::is_paused_locked(const std::string& resource) const {
    return global_pause_ || paused_resources_.count(resource) > 0;
}

std::string RolloutManager::pick_resource_locked(const std::vector<std::string>& exclude) {
    const auto n = rollout_resources_.size();
    auto excluded = [&](const std::string& r) {
        return std::find(exclude.begin(), exclude.end(), r) != exclude.end();
    };
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = rollout_resources_[(round_robin_ + i) % n];
            if (excluded(r) || (pass == 0 && is_paused_locked(r))) continue;
            round_robin_ = (round_robin_ + i + 1) % n;
            return r;
        }
    }
    return {};
}

void RolloutManager::upsert_locked(RequestId id, const std::vector<TokenId>& input,
                                   const std::vector<TokenId>& generated,
                                   const GenParams& params) {
    auto [it, inserted] = buffers_.try_emplace(id);
    auto& e = it->second;
    if (inserted) e.seq = seq_++;
    auto& b = e.buffer;
    b.task_id = id;
    if (auto p = placement_.find(id); p != placement_.end()) {
        b.resource = p->second.resource;
        b.session_id = p->second.session_id;
    }
    b.input = input;
    if (generated.size() >= b.generated.size()) b.generated = generated;
    b.max_new_tokens = params.max_new_tokens;
    const auto used = static_cast<std::uint32_t>(b.generated.size());
    b.budget_remaining = params.max_new_tokens > used ? params.max_new_tokens - used : 0;
}

std::vector<RequestId> RolloutManager::grant_locked() {
    std::vector<RequestId> granted;
    if (global_pause_) return granted;
    std::vector<Entry*> order;
    for (auto& [id, e] : buffers_)
        if (e.state == BufferState::paused) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
    for (auto* e : order) {
        const auto id = e->buffer.task_id;
        if (is_paused_locked(e->buffer.resource)) continue;
        const bool counted = resumed_.count(id) > 0;
        if (!counted && options_.resume_capacity > 0 &&
            resumed_.size() >= options_.resume_capacity)
            break;
        e->state = BufferState::granted;
        resumed_.insert(id);
        granted.push_back(id);
    }
    return granted;
}

void RolloutManager::on_dispatch(const PendingRequest& request) {
    std::string resource;
    {
        std::lock_guard lock(mu_);
        resource = pick_resource_locked({});
        placement_[request.request_id] = Placement{resource, request.session_id};
    }
    notify_placements({{request.request_id, resource, true}});
}

bool RolloutManager::await_resume(const PendingRequest& request,
                                  std::chrono::milliseconds timeout) {
    const auto id = request.request_id;
    std::unique_lock lock(mu_);
    upsert_locked(id, request.input, request.output, request.params);
    if (!grant_locked().empty()) cv_.notify_all();
    const bool ok = cv_.wait_for(lock, timeout, [&] {
        auto it = buffers_.find(id);
        return it == buffers_.end() || it->second.state == BufferState::granted;
    });
    buffers_.erase(id);
    return ok;
}

void RolloutManager::on_complete(const PendingRequest& request) {
    std::string resource;
    {
        std::lock_guard lock(mu_);
        resumed_.erase(request.request_id);
        buffers_.erase(request.request_id);
        if (auto it = placement_.find(request.request_id); it != placement_.end()) {
            resource = it->second.resource;
            placement_.erase(it);
        }
        if (!grant_locked().empty()) cv_.notify_all();
    }
    notify_placements({{request.request_id, resource, false}});
}

std::vector<PartialBuffer> RolloutManager::pause_rollouts(
    const std::optional<std::vector<std::string>>& targets) {
    std::function<bool(RequestId)> filter;
    {
        std::lock_guard lock(mu_);
        if (!targets) {
            global_pause_ = true;
        } else {
            paused_resources_.insert(targets->begin(), targets->end());
            std::set<RequestId> ids;
            for (const auto& [id, p] : placement_)
                if (std::find(targets->begin(), targets->end(), p.resource) != targets->end())
                    ids.insert(id);
            filter = [ids = std::move(ids)](RequestId id) { return ids.count(id) > 0; };
        }
    }
    const auto partials = engine_.interrupt(filter);

    std::vector<PartialBuffer> out;
    std::lock_guard lock(mu_);
    for (const auto& p : partials) {
        std::vector<TokenId> generated = p.prefix;
        generated.insert(generated.end(), p.produced.begin(), p.produced.end());
        upsert_locked(p.request_id, p.input, generated, p.params);
        auto& e = buffers_.at(p.request_id);
        e.state = BufferState::paused;
        out.push_back(e.buffer);
    }
    return out;
}

std::vector<RequestId> RolloutManager::resume_rollouts(
    const std::optional<std::vector<std::string>>& targets) {
    std::lock_guard lock(mu_);
    if (!targets) {
        global_pause_ = false;
        paused_resources_.clear();
    } else {
        for (const auto& r : *targets) paused_resources_.erase(r);
    }
    auto granted = grant_locked();
    cv_.notify_all();
    return granted;
}

std::vector<RequestId> RolloutManager::requeue_tasks(const std::vector<RequestId>& tasks,
                                                     const std::vector<std::string>& failed) {
    std::vector<std::tuple<RequestId, std::string, bool>> changes;
    std::set<RequestId> ids(tasks.begin(), tasks.end());
    {
        std::lock_guard lock(mu_);
        std::erase_if(rollout_resources_, [&](const std::string& r) {
            return std::find(failed.begin(), failed.end(), r) != failed.end();
        });
        if (!rollout_resources_.empty()) round_robin_ %= rollout_resources_.size();
        for (const auto& r : failed) paused_resources_.erase(r);
        for (auto id : ids) {
            auto& p = placement_[id];
            changes.emplace_back(id, p.resource, false);
            p.resource = pick_resource_locked(failed);
            changes.emplace_back(id, p.resource, true);
        }
    }
    notify_placements(changes);

    const auto partials = engine_.interrupt([&](RequestId id) { return ids.count(id) > 0; });

    std::vector<RequestId> moved;
    std::lock_guard lock(mu_);
    for (const auto& p : partials) {
        std::vector<TokenId> generated = p.prefix;
        generated.insert(generated.end(), p.produced.begin(), p.produced.end());
        upsert_locked(p.request_id, p.input, generated, p.params);
    }
    // Requeued work skips the capacity queue.
    for (auto id : ids) {
        auto it = buffers_.find(id);
        if (it == buffers_.end()) continue;
        it->second.buffer.resource = placement_[id].resource;
        it->second.state = BufferState::granted;
        resumed_.insert(id);
        moved.push_back(id);
    }
    cv_.notify_all();
    return moved;
}

std::vector<Command> RolloutManager::plan(const ControlEvent& event) const {
    std::lock_guard lock(control_mu_);
    ControlEvent e = event;
    if ((e.kind == EventKind::threshold_reached || e.kind == EventKind::timeout) &&
        e.resources.empty())
        e.resources = train_capable_;
    return plan_event(e, control_);
}

std::vector<Command> RolloutManager::on_event(ControlEvent event) {
    return handle(std::move(event), nullptr);
}

std::vector<Command> RolloutManager::handle(ControlEvent event, UpdateReport* report) {
    std::lock_guard lock(control_mu_);
    if ((event.kind == EventKind::threshold_reached || event.kind == EventKind::timeout) &&
        event.resources.empty())
        event.resources = train_capable_;
    if (event.at == 0.0) event.at = now();

    const auto commands = plan_event(event, control_);
    if (!plan_is_valid(commands)) throw IllegalState("invalid command plan");

    // Logged before execution so nested events (raised by the train
    // dispatcher) land after their cause.
    apply_plan(control_, event, commands);
    log_.push_back(event);
    if (sink_) *sink_ << event_to_json(event) << '\n' << std::flush;

    double switch_started = 0.0;
    for (const auto& cmd : commands) {
        const auto targets = cmd.all ? std::nullopt : std::optional(cmd.resources);
        switch (cmd.kind) {
            case CommandKind::pause_rollouts: {
                const auto paused = pause_rollouts(targets);
                if (report) report->paused += paused.size();
                break;
            }
            case CommandKind::resume_rollouts: {
                const auto resumed = resume_rollouts(targets);
                if (report) report->resumed += resumed.size();
                break;
            }
            case CommandKind::begin_engine_switch:
                switch_started = now();
                engine_.begin_switch();
                break;
            case CommandKind::complete_engine_switch:
                engine_.complete_switch(*cmd.version);
                if (report) report->switch_duration = now() - switch_started;
                break;
            case CommandKind::request_train_dispatch:
                if (train_dispatch_) train_dispatch_();
                break;
            case CommandKind::requeue_tasks:
                requeue_tasks(cmd.tasks, cmd.resources);
                break;
        }
    }
    return commands;
}

UpdateReport RolloutManager::coordinate_update(ModelVersion new_version) {
    std::lock_guard lock(control_mu_);
    UpdateReport report;
    report.from_version = control_.version;
    report.to_version = new_version;
    ControlEvent event;
    event.kind = EventKind::weight_sync;
    event.version = new_version;
    handle(std::move(event), &report);
    return report;
}

ControlState RolloutManager::state() const {
    std::lock_guard lock(control_mu_);
    return control_;
}

std::vector<ControlEvent> RolloutManager::event_log() const {
    std::lock_guard lock(control_mu_);
    return log_;
}

std::vector<PartialBuffer> RolloutManager::paused_buffers() const {
    std::lock_guard lock(mu_);
    std::vector<PartialBuffer> out;
    for (const auto& [id, e] : buffers_)
        if (e.state == BufferState::paused) out.push_back(e.buffer);
    return out;
}

std::size_t RolloutManager::resumed_in_flight() const {
    std::lock_guard lock(mu_);
    return resumed_.size();
}

std::optional<std::string> RolloutManager::placement(RequestId id) const {
    std::lock_guard lock(mu_);
    auto it = placement_.find(id);
    if (it == placement_.end()) return std::nullopt;
    return it->second.resource;
}

void RolloutManager::place(RequestId id, const std::string& resource) {
    std::lock_guard lock(mu_);
    placement_[id].resource = resource;
}

ControlState replay_events(const std::vector<ControlEvent>& events) {
    ControlState state;
    for (const auto& e : events) apply_plan(state, e, plan_event(e, state));
    return state;
}

std::vector<ControlEvent> read_event_log(std::istream& in) {
    std::vector<ControlEvent> events;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const auto start = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            events.push_back(event_from_json(line));
        } catch (const std::exception& e) {
            throw LogCorrupt(start, e.what());
        }
    }
    return events;
}

}  // namespace tagflow
