// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/trajectory_manager.hpp"

#include "tagflow/error.hpp"

#include <algorithm>

namespace tagflow {

std::string_view to_string(PendingState state) {
    switch (state) {
        case PendingState::forwarded: return "forwarded";
        case PendingState::waiting_switch: return "waiting_switch";
        case PendingState::resuming: return "resuming";
        case PendingState::done: return "done";
    }
    return "unknown";
}

TrajectoryManager::TrajectoryManager(MockEngine& engine, TrajectoryManagerOptions options)
    : engine_(engine), options_(options) {}

TrajectoryManager::Session& TrajectoryManager::session(const std::string& id) {
    std::lock_guard lock(sessions_mu_);
    auto& slot = sessions_[id];
    if (!slot) slot = std::make_unique<Session>(id);
    return *slot;
}

const TrajectoryManager::Session* TrajectoryManager::find_session(const std::string& id) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

void TrajectoryManager::set_state(RequestId id, PendingState state) {
    std::lock_guard lock(pending_mu_);
    auto it = pending_.find(id);
    if (it != pending_.end()) it->second.state = state;
}

void TrajectoryManager::record_request(const PendingRequest& request, ModelVersion request_version,
                                       bool complete) {
    std::vector<TokenSpan> spans;
    spans.push_back(TokenSpan{request.input, Origin::agent_input, request_version});
    for (std::size_t i = 0; i < request.output.size(); ++i) {
        const auto v = request.output_versions[i];
        if (spans.back().origin != Origin::model_output || spans.back().version != v)
            spans.push_back(TokenSpan{{}, Origin::model_output, v});
        spans.back().tokens.push_back(request.output[i]);
    }
    record(request.session_id, spans, request.request_id, complete);
}

InsertResult TrajectoryManager::record(const std::string& session_id,
                                       std::span<const TokenSpan> sequence, MarkId mark,
                                       bool complete) {
    auto& s = session(session_id);
    InsertResult result;
    {
        std::lock_guard lock(s.mu);
        result = s.trie.lpm_insert(sequence, mark, complete);
    }
    if (complete) {
        std::lock_guard lock(ready_mu_);
        ready_.emplace_back(session_id, mark);
    }
    return result;
}

ProxyResponse TrajectoryManager::proxy_generate(const std::string& session_id,
                                                std::span<const TokenId> input,
                                                const GenParams& params) {
    if (input.empty()) throw InvalidParams("input must be non-empty");
    if (params.max_new_tokens == 0) throw InvalidParams("max_new_tokens must be >= 1");

    PendingRequest req;
    req.request_id = engine_.next_request_id();
    req.session_id = session_id.empty() ? "req-" + std::to_string(req.request_id) : session_id;
    req.input.assign(input.begin(), input.end());
    req.params = params;

    const ModelVersion request_version = engine_.state().current_version;
    {
        std::lock_guard lock(pending_mu_);
        pending_[req.request_id] = req;
    }
    auto forget = [&] {
        std::lock_guard lock(pending_mu_);
        pending_.erase(req.request_id);
    };
    if (gate_) gate_->on_dispatch(req);

    const auto deadline = std::chrono::steady_clock::now() + options_.effective_timeout();
    auto remaining = [&] {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        return std::max(left, std::chrono::milliseconds(0));
    };
    auto park = [&] {
        std::lock_guard lock(pending_mu_);
        auto& p = pending_[req.request_id];
        p.output = req.output;
        p.output_versions = req.output_versions;
        p.state = PendingState::waiting_switch;
    };
    auto give_up = [&](const char* why) {
        forget();
        throw ProxyRetryable(std::string("request ") + std::to_string(req.request_id) + ": " + why);
    };

    std::size_t interruptions = 0;
    while (true) {
        try {
            GenerationResult r =
                req.output.empty()
                    ? engine_.generate(req.input, params, req.request_id)
                    : engine_.resume_from(req.output, req.input, params, req.request_id);
            req.output.insert(req.output.end(), r.output_tokens.begin(), r.output_tokens.end());
            req.output_versions.insert(req.output_versions.end(), r.version_per_token.begin(),
                                       r.version_per_token.end());
            if (r.finished) break;

            ++interruptions;
            park();
            record_request(req, request_version, false);
            const bool granted = gate_ ? gate_->await_resume(req, remaining())
                                       : engine_.await_serving(remaining());
            if (!granted) give_up("timed out waiting for the model switch");
            set_state(req.request_id, PendingState::resuming);
        } catch (const WaitSignal&) {
            park();
            if (!req.output.empty()) record_request(req, request_version, false);
            if (!engine_.await_serving(remaining()))
                give_up("timed out waiting for the model switch");
            if (gate_ && !req.output.empty() && !gate_->await_resume(req, remaining()))
                give_up("timed out waiting for resume");
            set_state(req.request_id, PendingState::resuming);
        } catch (const ProxyRetryable&) {
            throw;
        } catch (const InvalidParams&) {
            forget();
            throw;
        } catch (const BudgetExhausted&) {
            break;
        }
    }

    record_request(req, request_version, true);
    req.state = PendingState::done;
    if (gate_) gate_->on_complete(req);
    forget();

    ProxyResponse response;
    response.request_id = req.request_id;
    response.session_id = req.session_id;
    response.tokens = std::move(req.output);
    response.versions = std::move(req.output_versions);
    response.interruptions = interruptions;
    return response;
}

Trajectory TrajectoryManager::build(const std::string& session_id, MarkId mark,
                                    std::vector<TokenSpan> spans) const {
    return Trajectory::from_spans(session_id, mark, std::move(spans));
}

std::vector<Trajectory> TrajectoryManager::extract_trajectories(
    const std::string& session_id, const ExtractOptions& options) const {
    const Session* s = find_session(session_id);
    if (!s) throw UnknownSession("unknown session '" + session_id + "'");

    std::vector<Trajectory> out;
    std::lock_guard lock(s->mu);
    for (const auto& mark : s->trie.marks()) {
        if (!mark.complete && !options.include_partials) continue;
        auto t = build(session_id, mark.id, *s->trie.path(mark.id));
        if (options.min_version) {
            bool keep = true;
            for (std::size_t i = 0; i < t.loss_mask.size(); ++i)
                if (t.loss_mask[i] && t.version_tags[i] < *options.min_version) keep = false;
            if (!keep) continue;
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::optional<std::vector<Trajectory>> TrajectoryManager::drain_batch(std::size_t min_samples) {
    std::deque<std::pair<std::string, MarkId>> taken;
    {
        std::lock_guard lock(ready_mu_);
        if (min_samples == 0 || ready_.size() < min_samples) return std::nullopt;
        taken.swap(ready_);
    }
    std::vector<Trajectory> out;
    out.reserve(taken.size());
    for (const auto& [sid, mark] : taken) {
        const Session* s = find_session(sid);
        std::lock_guard lock(s->mu);
        out.push_back(build(sid, mark, *s->trie.path(mark)));
    }
    return out;
}

std::size_t TrajectoryManager::ready_count() const {
    std::lock_guard lock(ready_mu_);
    return ready_.size();
}

StorageStats TrajectoryManager::storage_stats(const std::string& session_id) const {
    const Session* s = find_session(session_id);
    if (!s) throw UnknownSession("unknown session '" + session_id + "'");
    std::lock_guard lock(s->mu);
    return s->trie.stats();
}

std::vector<std::string> TrajectoryManager::check_session(const std::string& session_id) const {
    const Session* s = find_session(session_id);
    if (!s) throw UnknownSession("unknown session '" + session_id + "'");
    std::lock_guard lock(s->mu);
    return s->trie.check_invariants();
}

std::vector<std::string> TrajectoryManager::session_ids() const {
    std::lock_guard lock(sessions_mu_);
    std::vector<std::string> ids;
    ids.reserve(sessions_.size());
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::size_t TrajectoryManager::active_requests() const {
    std::lock_guard lock(pending_mu_);
    return pending_.size();
}

std::vector<PendingRequest> TrajectoryManager::pending_requests() const {
    std::lock_guard lock(pending_mu_);
    std::vector<PendingRequest> out;
    for (const auto& [id, p] : pending_) out.push_back(p);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.request_id < b.request_id; });
    return out;
}

}  // namespace tagflow
