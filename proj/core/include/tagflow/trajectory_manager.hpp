// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Proxy between agents and the serving engine. Every exchange is recorded into
// a per-session prefix tree before the response is released, model switches
// are absorbed (the agent always receives one contiguous response), and
// completed trajectories are handed to the trainer exactly once.

#pragma once

#include "tagflow/engine.hpp"
#include "tagflow/session_trie.hpp"
#include "tagflow/types.hpp"

#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tagflow {

enum class PendingState { forwarded, waiting_switch, resuming, done };

std::string_view to_string(PendingState state);

/// A logical agent request as tracked by the proxy.
struct PendingRequest {
    RequestId request_id = 0;
    std::string session_id;
    std::vector<TokenId> input;
    GenParams params;
    std::vector<TokenId> output;  ///< buffered partial output
    std::vector<ModelVersion> output_versions;
    PendingState state = PendingState::forwarded;
};

/// Hook through which the rollout controller gates resumption of paused
/// requests. Without a gate the proxy resumes as soon as the engine serves.
class RolloutGate {
public:
    virtual ~RolloutGate() = default;
    /// A new logical request is about to be forwarded.
    virtual void on_dispatch(const PendingRequest& request) = 0;
    /// The request was interrupted mid-turn. Blocks until the controller
    /// grants the resume; false on timeout.
    virtual bool await_resume(const PendingRequest& request, std::chrono::milliseconds timeout) = 0;
    /// The agent has received its full response.
    virtual void on_complete(const PendingRequest& request) = 0;
};

struct TrajectoryManagerOptions {
    std::chrono::milliseconds expected_switch_duration{200};
    /// Maximum time a request may stay pending across switches. Zero means
    /// 10x expected_switch_duration.
    std::chrono::milliseconds pending_timeout{0};

    std::chrono::milliseconds effective_timeout() const {
        return pending_timeout.count() > 0 ? pending_timeout : expected_switch_duration * 10;
    }
};

struct ExtractOptions {
    std::optional<ModelVersion> min_version;  ///< keep only if every trainable token is >= this
    bool include_partials = false;
};

struct ProxyResponse {
    RequestId request_id = 0;
    std::string session_id;
    std::vector<TokenId> tokens;
    std::vector<ModelVersion> versions;
    std::size_t interruptions = 0;
};

class TrajectoryManager {
public:
    explicit TrajectoryManager(MockEngine& engine, TrajectoryManagerOptions options = {});

    void set_gate(RolloutGate* gate) { gate_ = gate; }

    /// Forwards one agent turn. An empty session id makes the request its
    /// own session.
    ProxyResponse proxy_generate(const std::string& session_id, std::span<const TokenId> input,
                                 const GenParams& params);

    std::vector<Trajectory> extract_trajectories(const std::string& session_id,
                                                 const ExtractOptions& options = {}) const;

    /// Returns every complete, undelivered trajectory once at least
    /// min_samples are available; nullopt otherwise.
    std::optional<std::vector<Trajectory>> drain_batch(std::size_t min_samples);
    std::size_t ready_count() const;

    StorageStats storage_stats(const std::string& session_id) const;
    /// Runs the trie self-check for one session.
    std::vector<std::string> check_session(const std::string& session_id) const;

    std::vector<std::string> session_ids() const;
    std::size_t active_requests() const;
    std::vector<PendingRequest> pending_requests() const;

    /// Records a sequence directly (used when replaying captured traffic).
    InsertResult record(const std::string& session_id, std::span<const TokenSpan> sequence,
                        MarkId mark, bool complete);

private:
    struct Session {
        explicit Session(std::string id) : trie(std::move(id)) {}
        mutable std::mutex mu;
        SessionTrie trie;
    };

    Session& session(const std::string& id);
    const Session* find_session(const std::string& id) const;
    void record_request(const PendingRequest& request, ModelVersion request_version, bool complete);
    void set_state(RequestId id, PendingState state);
    Trajectory build(const std::string& session_id, MarkId mark,
                     std::vector<TokenSpan> spans) const;

    MockEngine& engine_;
    TrajectoryManagerOptions options_;
    RolloutGate* gate_ = nullptr;

    mutable std::mutex sessions_mu_;
    std::unordered_map<std::string, std::unique_ptr<Session>> sessions_;

    mutable std::mutex pending_mu_;
    std::unordered_map<RequestId, PendingRequest> pending_;

    mutable std::mutex ready_mu_;
    std::deque<std::pair<std::string, MarkId>> ready_;
};

}  // namespace tagflow
