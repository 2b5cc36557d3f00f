// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Control loop that pauses and resumes rollouts and orchestrates model
// updates. Events are planned with plan_event and executed in plan order by a
// single logical controller; paused generations are kept as partial buffers
// and re-dispatched exactly once.

#pragma once

#include "tagflow/control.hpp"
#include "tagflow/engine.hpp"
#include "tagflow/trajectory_manager.hpp"

#include <chrono>
#include <condition_variable>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace tagflow {

struct PartialBuffer {
    RequestId task_id = 0;
    std::string session_id;
    std::string resource;
    std::vector<TokenId> input;
    std::vector<TokenId> generated;  ///< output produced before the pause
    std::uint32_t max_new_tokens = 0;
    std::uint32_t budget_remaining = 0;
};

struct UpdateReport {
    ModelVersion from_version;
    ModelVersion to_version;
    std::size_t paused = 0;
    std::size_t resumed = 0;
    double switch_duration = 0.0;  ///< controller clock units
};

struct RolloutManagerOptions {
    /// Maximum number of resumed buffers running at once; 0 = unlimited.
    std::size_t resume_capacity = 0;
    /// Controller clock; defaults to steady-clock seconds.
    std::function<double()> clock;
};

class RolloutManager : public RolloutGate {
public:
    RolloutManager(MockEngine& engine, RolloutManagerOptions options = {});

    // Wiring ----------------------------------------------------------------

    /// Resources new requests may be placed on (round robin, skipping paused).
    void set_rollout_resources(std::vector<std::string> resources);
    /// Targets paused by threshold/timeout events.
    void set_train_capable(std::vector<std::string> resources);
    void set_train_dispatcher(std::function<void()> dispatch);
    /// Notified whenever a request is attached to (true) or detached from
    /// (false) a resource.
    void set_placement_listener(std::function<void(RequestId, const std::string&, bool)> fn);
    /// Every handled event is appended to this stream as one JSON line.
    void set_event_sink(std::ostream* sink);

    // RolloutGate -----------------------------------------------------------

    void on_dispatch(const PendingRequest& request) override;
    bool await_resume(const PendingRequest& request, std::chrono::milliseconds timeout) override;
    void on_complete(const PendingRequest& request) override;

    // Control ---------------------------------------------------------------

    /// Plans, executes and logs one event. Returns the executed plan.
    std::vector<Command> on_event(ControlEvent event);
    /// The plan on_event would execute, without side effects.
    std::vector<Command> plan(const ControlEvent& event) const;

    /// Interrupts in-flight work on `targets` (all when nullopt) and buffers it.
    std::vector<PartialBuffer> pause_rollouts(const std::optional<std::vector<std::string>>& targets);
    /// Lifts pauses on `targets` (all when nullopt; none when empty) and
    /// re-dispatches paused buffers up to capacity. Returns resumed task ids.
    std::vector<RequestId> resume_rollouts(const std::optional<std::vector<std::string>>& targets);
    /// Moves the given tasks off `failed` resources and resumes them elsewhere.
    std::vector<RequestId> requeue_tasks(const std::vector<RequestId>& tasks,
                                         const std::vector<std::string>& failed);

    UpdateReport coordinate_update(ModelVersion new_version);

    /// Runs `fn` under the controller lock. Scheduler and multiplexing
    /// mutations feed events back into this manager, so callers outside the
    /// event path go through here to keep a single lock order.
    template <typename Fn>
    decltype(auto) exclusive(Fn&& fn) {
        std::lock_guard lock(control_mu_);
        return std::forward<Fn>(fn)();
    }

    // Introspection ---------------------------------------------------------

    ControlState state() const;
    std::vector<ControlEvent> event_log() const;
    std::vector<PartialBuffer> paused_buffers() const;
    std::size_t resumed_in_flight() const;
    std::optional<std::string> placement(RequestId id) const;
    void place(RequestId id, const std::string& resource);

private:
    enum class BufferState { paused, granted };
    struct Placement {
        std::string resource;
        std::string session_id;
    };
    struct Entry {
        PartialBuffer buffer;
        BufferState state = BufferState::paused;
        std::uint64_t seq = 0;
    };

    std::vector<Command> handle(ControlEvent event, UpdateReport* report);
    void upsert_locked(RequestId id, const std::vector<TokenId>& input,
                       const std::vector<TokenId>& generated, const GenParams& params);
    bool is_paused_locked(const std::string& resource) const;
    std::vector<RequestId> grant_locked();
    std::string pick_resource_locked(const std::vector<std::string>& exclude);
    double now() const;
    void notify_placements(const std::vector<std::tuple<RequestId, std::string, bool>>& changes);

    MockEngine& engine_;
    RolloutManagerOptions options_;

    // Serializes event handling and updates.
    mutable std::recursive_mutex control_mu_;
    ControlState control_;
    std::vector<ControlEvent> log_;
    std::ostream* sink_ = nullptr;
    std::function<void()> train_dispatch_;
    std::vector<std::string> train_capable_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool global_pause_ = false;
    std::set<std::string> paused_resources_;
    std::map<RequestId, Entry> buffers_;
    std::map<RequestId, Placement> placement_;
    std::set<RequestId> resumed_;
    std::uint64_t seq_ = 0;
    std::vector<std::string> rollout_resources_;
    std::size_t round_robin_ = 0;
    std::function<void(RequestId, const std::string&, bool)> placement_listener_;
};

/// Re-drives planning over an event log without touching any engine.
ControlState replay_events(const std::vector<ControlEvent>& events);
/// Reads a line-delimited event log. Throws LogCorrupt with the byte offset
/// of the first bad record.
std::vector<ControlEvent> read_event_log(std::istream& in);

}  // namespace tagflow
