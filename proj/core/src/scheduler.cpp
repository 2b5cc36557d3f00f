// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/scheduler.hpp"

#include "tagflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tagflow {

TrainPriority compute_train_priority(double peak_flops, double hbm_bandwidth) {
    if (!(peak_flops > 0.0) || !(hbm_bandwidth > 0.0) || !std::isfinite(peak_flops) ||
        !std::isfinite(hbm_bandwidth))
        throw std::domain_error("peak_flops and hbm_bandwidth must be positive and finite");
    return TrainPriority{peak_flops, peak_flops / hbm_bandwidth};
}

std::optional<TrainPriority> ResourceDescriptor::train_priority() const {
    if (!has(CapabilityTag::train)) return std::nullopt;
    return compute_train_priority(peak_flops, hbm_bandwidth);
}

void TagScheduler::set_event_sink(EventSink sink) {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
}

void TagScheduler::set_clock(std::function<double()> clock) {
    std::lock_guard lock(mu_);
    clock_ = std::move(clock);
}

double TagScheduler::now() const { return clock_ ? clock_() : 0.0; }

void TagScheduler::register_resource(ResourceDescriptor d) {
    if (d.id.empty()) throw InvalidParams("resource id must be non-empty");
    if (d.capabilities.empty()) throw InvalidParams("capability set of '" + d.id + "' is empty");
    if (d.active && !d.has(*d.active))
        throw InvalidParams("active tag of '" + d.id + "' is not a held capability");
    if (d.has(CapabilityTag::train)) compute_train_priority(d.peak_flops, d.hbm_bandwidth);
    std::lock_guard lock(mu_);
    if (pool_.count(d.id)) throw InvalidParams("resource '" + d.id + "' already registered");
    pool_.emplace(d.id, std::move(d));
}

void TagScheduler::retag(const std::string& id, std::set<CapabilityTag> capabilities) {
    if (capabilities.empty()) throw InvalidParams("capability set of '" + id + "' is empty");
    std::lock_guard lock(mu_);
    auto it = pool_.find(id);
    if (it == pool_.end()) throw UnknownResource("unknown resource '" + id + "'");
    auto& r = it->second;
    if (capabilities.count(CapabilityTag::train))
        compute_train_priority(r.peak_flops, r.hbm_bandwidth);
    const bool lost_active = r.active && !capabilities.count(*r.active);
    r.capabilities = std::move(capabilities);
    if (lost_active) {
        std::optional<CapabilityTag> next;
        if (r.has(CapabilityTag::rollout)) next = CapabilityTag::rollout;
        activate_locked({id}, next);
    }
}

std::vector<std::string> TagScheduler::query_locked(CapabilityTag tag) const {
    std::vector<const ResourceDescriptor*> hits;
    for (const auto& [id, r] : pool_)
        if (r.has(tag)) hits.push_back(&r);
    if (tag == CapabilityTag::train) {
        std::stable_sort(hits.begin(), hits.end(), [](const auto* a, const auto* b) {
            return *a->train_priority() > *b->train_priority();
        });
    }
    std::vector<std::string> out;
    out.reserve(hits.size());
    for (const auto* r : hits) out.push_back(r->id);
    return out;
}

std::vector<std::string> TagScheduler::query(CapabilityTag tag) const {
    std::lock_guard lock(mu_);
    return query_locked(tag);
}

void TagScheduler::activate_locked(const std::vector<std::string>& ids,
                                   std::optional<CapabilityTag> tag) {
    std::vector<std::string> changing;
    for (const auto& id : ids) {
        auto it = pool_.find(id);
        if (it == pool_.end()) throw UnknownResource("unknown resource '" + id + "'");
        if (tag && !it->second.has(*tag))
            throw InsufficientCapability("resource '" + id + "' does not hold tag " +
                                         std::string(to_string(*tag)));
        if (it->second.active != tag) changing.push_back(id);
    }
    if (changing.empty()) return;

    // The controller sees the transition before the pool does, so pauses
    // always precede the new activation.
    ControlEvent event;
    event.kind = EventKind::tag_transition;
    event.resources = changing;
    event.to_tag = tag;
    event.at = now();
    if (sink_) sink_(event);

    for (const auto& id : changing) {
        auto& r = pool_.at(id);
        transitions_.push_back(TagTransition{event.at, id, r.active, tag});
        r.active = tag;
    }
}

void TagScheduler::activate(const std::vector<std::string>& ids,
                            std::optional<CapabilityTag> tag) {
    std::lock_guard lock(mu_);
    activate_locked(ids, tag);
}

Assignment TagScheduler::dispatch(CapabilityTag kind, std::size_t count) {
    if (count == 0) throw InvalidParams("dispatch count must be >= 1");
    std::lock_guard lock(mu_);
    const auto holders = query_locked(kind);
    if (holders.empty())
        throw InsufficientCapability("no resource holds tag " + std::string(to_string(kind)));

    std::vector<std::string> idle, same, occupied;
    for (const auto& id : holders) {
        const auto& active = pool_.at(id).active;
        if (!active)
            idle.push_back(id);
        else if (*active == kind)
            same.push_back(id);
        else
            occupied.push_back(id);
    }
    Assignment a;
    a.kind = kind;
    for (auto* group : {&idle, &same, &occupied})
        for (const auto& id : *group) {
            if (a.resources.size() == count) break;
            a.resources.push_back(id);
            if (group == &occupied) a.preempted.push_back(id);
        }
    activate_locked(a.resources, kind);
    return a;
}

FailureReport TagScheduler::handle_failure(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = pool_.find(id);
    if (it == pool_.end()) throw UnknownResource("unknown resource '" + id + "'");
    FailureReport report;
    report.resource = id;
    report.was_active = it->second.active;
    {
        std::lock_guard tlock(tasks_mu_);
        if (auto t = tasks_.find(id); t != tasks_.end()) {
            report.tasks.assign(t->second.begin(), t->second.end());
            tasks_.erase(t);
        }
    }
    pool_.erase(it);
    transitions_.push_back(TagTransition{now(), id, report.was_active, std::nullopt});

    ControlEvent event;
    event.kind = EventKind::resource_failed;
    event.resources = {id};
    event.tasks = report.tasks;
    event.at = now();
    if (sink_) sink_(event);
    return report;
}

void TagScheduler::attach_task(const std::string& resource, std::uint64_t task) {
    std::lock_guard lock(tasks_mu_);
    tasks_[resource].insert(task);
}

void TagScheduler::detach_task(const std::string& resource, std::uint64_t task) {
    std::lock_guard lock(tasks_mu_);
    auto it = tasks_.find(resource);
    if (it == tasks_.end()) return;
    it->second.erase(task);
    if (it->second.empty()) tasks_.erase(it);
}

std::vector<std::uint64_t> TagScheduler::tasks(const std::string& resource) const {
    std::lock_guard lock(tasks_mu_);
    auto it = tasks_.find(resource);
    if (it == tasks_.end()) return {};
    return {it->second.begin(), it->second.end()};
}

std::optional<ResourceDescriptor> TagScheduler::resource(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = pool_.find(id);
    if (it == pool_.end()) return std::nullopt;
    return it->second;
}

std::vector<ResourceDescriptor> TagScheduler::pool() const {
    std::lock_guard lock(mu_);
    std::vector<ResourceDescriptor> out;
    out.reserve(pool_.size());
    for (const auto& [id, r] : pool_) out.push_back(r);
    return out;
}

std::vector<TagTransition> TagScheduler::transitions() const {
    std::lock_guard lock(mu_);
    return transitions_;
}

bool TagScheduler::check_invariants() const {
    std::lock_guard lock(mu_);
    return std::all_of(pool_.begin(), pool_.end(), [](const auto& kv) {
        const auto& r = kv.second;
        return !r.capabilities.empty() && (!r.active || r.has(*r.active));
    });
}

std::string_view to_string(Phase phase) {
    switch (phase) {
        case Phase::idle: return "idle";
        case Phase::rollout: return "R";
        case Phase::train: return "T";
        case Phase::overlap: return "RT";
    }
    return "unknown";
}

Phase phase_of(const std::vector<ResourceDescriptor>& pool) {
    bool rollout = false;
    bool train = false;
    for (const auto& r : pool) {
        if (r.active == CapabilityTag::rollout) rollout = true;
        if (r.active == CapabilityTag::train) train = true;
    }
    if (rollout && train) return Phase::overlap;
    if (train) return Phase::train;
    if (rollout) return Phase::rollout;
    return Phase::idle;
}

void MultiplexingController::sample() {
    const Phase p = phase_of(scheduler_.pool());
    if (trace_.empty() || trace_.back().phase != p) trace_.push_back({scheduler_.now(), p});
}

void MultiplexingController::start() {
    std::lock_guard lock(mu_);
    std::vector<std::string> idle;
    for (const auto& r : scheduler_.pool())
        if (r.has(CapabilityTag::rollout) && !r.active) idle.push_back(r.id);
    scheduler_.activate(idle, CapabilityTag::rollout);
    sample();
}

Assignment MultiplexingController::on_threshold_reached() {
    std::lock_guard lock(mu_);
    const auto capable = scheduler_.query(CapabilityTag::train);
    if (capable.empty()) throw InsufficientCapability("no train-capable resource in the pool");
    auto a = scheduler_.dispatch(CapabilityTag::train, capable.size());
    training_ = true;
    sample();
    return a;
}

void MultiplexingController::on_train_complete() {
    std::lock_guard lock(mu_);
    training_ = false;
    std::vector<std::string> to_rollout, to_idle;
    for (const auto& r : scheduler_.pool()) {
        if (r.has(CapabilityTag::rollout) && r.active != CapabilityTag::rollout)
            to_rollout.push_back(r.id);
        else if (!r.has(CapabilityTag::rollout) && r.active == CapabilityTag::train)
            to_idle.push_back(r.id);
    }
    scheduler_.activate(to_idle, std::nullopt);
    scheduler_.activate(to_rollout, CapabilityTag::rollout);
    sample();
}

FailureReport MultiplexingController::on_failure(const std::string& id) {
    std::lock_guard lock(mu_);
    auto report = scheduler_.handle_failure(id);
    if (training_ && report.was_active == CapabilityTag::train) {
        const auto capable = scheduler_.query(CapabilityTag::train);
        if (capable.empty()) throw InsufficientCapability("no train-capable resource left");
        scheduler_.dispatch(CapabilityTag::train, capable.size());
    }
    sample();
    return report;
}

bool MultiplexingController::training() const {
    std::lock_guard lock(mu_);
    return training_;
}

Phase MultiplexingController::phase() const { return phase_of(scheduler_.pool()); }

std::vector<PhaseSample> MultiplexingController::phase_trace() const {
    std::lock_guard lock(mu_);
    return trace_;
}

}  // namespace tagflow
