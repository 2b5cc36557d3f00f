// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tag-driven resource pool, preemptive dispatcher and the multiplexing loop
// that overlaps rollout with training on dual-tagged resources.

#pragma once

#include "tagflow/control.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tagflow {

/// Ordering key for training placement; larger is better.
struct TrainPriority {
    double peak_flops = 0.0;
    double ridge_point = 0.0;  ///< flops per byte of HBM bandwidth

    auto operator<=>(const TrainPriority&) const = default;
};

/// Throws std::domain_error unless both inputs are positive and finite.
TrainPriority compute_train_priority(double peak_flops, double hbm_bandwidth);

struct ResourceDescriptor {
    std::string id;
    std::set<CapabilityTag> capabilities;
    std::optional<CapabilityTag> active;  ///< none = idle
    double peak_flops = 1.0;
    double hbm_bandwidth = 1.0;

    bool has(CapabilityTag tag) const { return capabilities.count(tag) > 0; }
    std::optional<TrainPriority> train_priority() const;
};

struct Assignment {
    CapabilityTag kind = CapabilityTag::rollout;
    std::vector<std::string> resources;
    std::vector<std::string> preempted;  ///< subset of resources
};

struct TagTransition {
    double at = 0.0;
    std::string resource;
    std::optional<CapabilityTag> from;
    std::optional<CapabilityTag> to;
};

struct FailureReport {
    std::string resource;
    std::optional<CapabilityTag> was_active;
    std::vector<std::uint64_t> tasks;
};

class TagScheduler {
public:
    using EventSink = std::function<void(const ControlEvent&)>;

    TagScheduler() = default;

    /// Receives tag_transition and resource_failed events. Called before the
    /// pool reflects the change, on the mutating thread.
    void set_event_sink(EventSink sink);
    void set_clock(std::function<double()> clock);
    double now() const;

    /// Throws InvalidParams on an empty capability set, a duplicate id or an
    /// active tag outside the capability set.
    void register_resource(ResourceDescriptor descriptor);
    /// Replaces the capability set. A resource whose active tag is dropped
    /// moves to rollout if it still holds it, otherwise to idle.
    void retag(const std::string& id, std::set<CapabilityTag> capabilities);

    std::vector<std::string> query(CapabilityTag tag) const;
    Assignment dispatch(CapabilityTag kind, std::size_t count);
    /// Sets the active tag of each listed resource, emitting one event per
    /// target tag for resources that actually change.
    void activate(const std::vector<std::string>& ids, std::optional<CapabilityTag> tag);
    FailureReport handle_failure(const std::string& id);

    void attach_task(const std::string& resource, std::uint64_t task);
    void detach_task(const std::string& resource, std::uint64_t task);
    std::vector<std::uint64_t> tasks(const std::string& resource) const;

    std::optional<ResourceDescriptor> resource(const std::string& id) const;
    /// Snapshot ordered by id.
    std::vector<ResourceDescriptor> pool() const;
    std::vector<TagTransition> transitions() const;
    /// Capability safety: every active tag is held.
    bool check_invariants() const;

private:
    std::vector<std::string> query_locked(CapabilityTag tag) const;
    void activate_locked(const std::vector<std::string>& ids, std::optional<CapabilityTag> tag);

    mutable std::recursive_mutex mu_;
    std::map<std::string, ResourceDescriptor> pool_;
    std::vector<TagTransition> transitions_;
    EventSink sink_;
    std::function<double()> clock_;

    mutable std::mutex tasks_mu_;
    std::map<std::string, std::set<std::uint64_t>> tasks_;
};

enum class Phase { idle, rollout, train, overlap };

std::string_view to_string(Phase phase);

struct PhaseSample {
    double at = 0.0;
    Phase phase = Phase::idle;
};

/// Drives the rollout/train cycle over a TagScheduler.
class MultiplexingController {
public:
    explicit MultiplexingController(TagScheduler& scheduler) : scheduler_(scheduler) {}

    /// Every idle rollout-capable resource starts rolling out.
    void start();
    /// Preempts every train-capable resource for the update.
    Assignment on_threshold_reached();
    /// Returns every rollout-capable resource to rollout.
    void on_train_complete();
    /// Removes the resource; retries the train dispatch if training lost a node.
    FailureReport on_failure(const std::string& id);

    bool training() const;
    Phase phase() const;
    /// Version lag attached to data produced now: 1 while rollout overlaps an
    /// in-flight update, else 0.
    std::uint64_t new_data_lag() const { return phase() == Phase::overlap ? 1 : 0; }
    std::vector<PhaseSample> phase_trace() const;

private:
    void sample();

    TagScheduler& scheduler_;
    mutable std::recursive_mutex mu_;
    bool training_ = false;
    std::vector<PhaseSample> trace_;
};

/// Phase implied by a set of active tags.
Phase phase_of(const std::vector<ResourceDescriptor>& pool);

}  // namespace tagflow
