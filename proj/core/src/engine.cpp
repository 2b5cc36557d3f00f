// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/engine.hpp"

#include "tagflow/error.hpp"

#include <algorithm>

namespace tagflow {

TokenId oracle_next_token(std::uint64_t context_state, std::uint64_t seed, ModelVersion version,
                          std::uint32_t vocab_size) {
    // splitmix64 finalizer over the context hash keyed by seed and version
    std::uint64_t z = context_state ^ (seed * 0x9E3779B97F4A7C15ULL) ^
                      ((version.value + 1) * 0xC2B2AE3D27D4EB4FULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<TokenId>(z % vocab_size);
}

std::vector<TokenId> oracle_generate(std::span<const TokenId> context, std::size_t count,
                                     std::uint64_t seed, ModelVersion version,
                                     std::uint32_t vocab_size, std::optional<TokenId> stop_token) {
    ContextHasher hasher;
    hasher.absorb(context);
    std::vector<TokenId> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const TokenId t = oracle_next_token(hasher.state(), seed, version, vocab_size);
        out.push_back(t);
        hasher.absorb(t);
        if (stop_token && t == *stop_token) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// StepClock

void StepClock::advance(std::size_t ticks) {
    {
        std::lock_guard lock(mu_);
        granted_ += ticks;
    }
    cv_.notify_all();
}

bool StepClock::acquire(const std::function<bool()>& cancelled) {
    std::unique_lock lock(mu_);
    ++waiters_;
    cv_.notify_all();
    cv_.wait(lock, [&] { return granted_ > consumed_ || cancelled(); });
    --waiters_;
    if (granted_ > consumed_ && !cancelled()) {
        ++consumed_;
        return true;
    }
    return false;
}

void StepClock::wake_all() {
    // Taking the lock orders the wakeup after any predicate update.
    { std::lock_guard lock(mu_); }
    cv_.notify_all();
}

void StepClock::wait_for_waiters(std::size_t n) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return waiters_ >= n; });
}

std::size_t StepClock::consumed() const {
    std::lock_guard lock(mu_);
    return consumed_;
}

// ---------------------------------------------------------------------------
// MockEngine

MockEngine::MockEngine(EngineOptions options) : options_(options) {
    if (options_.vocab_size == 0) throw InvalidParams("vocab_size must be positive");
}

void MockEngine::check_tokens(std::span<const TokenId> tokens) const {
    for (auto t : tokens) {
        if (t >= options_.vocab_size)
            throw InvalidParams("token id " + std::to_string(t) + " outside vocabulary");
    }
}

GenerationResult MockEngine::generate(std::span<const TokenId> input, const GenParams& params,
                                      RequestId id) {
    if (params.max_new_tokens == 0) throw InvalidParams("max_new_tokens must be >= 1");
    return run({}, input, params, id);
}

GenerationResult MockEngine::resume_from(std::span<const TokenId> prefix,
                                         std::span<const TokenId> input, const GenParams& params,
                                         RequestId id) {
    if (params.max_new_tokens == 0) throw InvalidParams("max_new_tokens must be >= 1");
    if (prefix.size() >= params.max_new_tokens)
        throw BudgetExhausted("prefix of " + std::to_string(prefix.size()) +
                              " tokens exhausts max_new_tokens " +
                              std::to_string(params.max_new_tokens));
    return run({prefix.begin(), prefix.end()}, input, params, id);
}

GenerationResult MockEngine::run(std::vector<TokenId> prefix, std::span<const TokenId> input,
                                 const GenParams& params, RequestId id) {
    check_tokens(input);
    check_tokens(prefix);
    if (id == 0) id = next_request_id();

    auto job = std::make_shared<InFlight>();
    job->id = id;
    job->input.assign(input.begin(), input.end());
    job->prefix = std::move(prefix);
    job->params = params;
    {
        std::lock_guard lock(mu_);
        if (state_.phase == EnginePhase::switching)
            throw WaitSignal(state_.switch_id, options_.retry_after);
        job->version = state_.current_version;
        in_flight_[id] = job;
    }

    TokenHook hook;
    std::shared_ptr<StepClock> clock;
    {
        std::lock_guard lock(hook_mu_);
        hook = hook_;
        clock = clock_;
    }

    ContextHasher hasher;
    hasher.absorb(job->input);
    hasher.absorb(job->prefix);

    const std::size_t budget = params.max_new_tokens - job->prefix.size();
    bool finished = true;
    for (std::size_t i = 0; i < budget; ++i) {
        if (clock) {
            const bool got = clock->acquire([&] {
                std::lock_guard lock(job->mu);
                return job->interrupted;
            });
            if (!got) {
                finished = false;
                break;
            }
        }
        if (hook) hook(id, job->prefix.size() + i);

        std::lock_guard lock(job->mu);
        if (job->interrupted) {
            finished = false;
            break;
        }
        const TokenId t =
            oracle_next_token(hasher.state(), params.seed, job->version, options_.vocab_size);
        job->produced.push_back(t);
        hasher.absorb(t);
        if ((params.stop_token && t == *params.stop_token) || i + 1 == budget) {
            job->done = true;
            break;
        }
    }

    GenerationResult result;
    result.request_id = id;
    result.input_tokens = job->input;
    {
        std::lock_guard lock(job->mu);
        result.output_tokens = job->produced;
    }
    result.version_per_token.assign(result.output_tokens.size(), job->version);
    result.finished = finished;

    {
        std::lock_guard lock(mu_);
        auto it = in_flight_.find(id);
        if (it != in_flight_.end() && it->second == job) in_flight_.erase(it);
    }
    if (options_.record_oracle_log) {
        std::lock_guard lock(log_mu_);
        log_.push_back(OracleEntry{id, job->input, job->prefix, result.output_tokens,
                                   result.version_per_token, finished});
    }
    return result;
}

std::vector<PartialGeneration> MockEngine::interrupt_locked(
    const std::function<bool(RequestId)>& filter) {
    std::vector<PartialGeneration> partials;
    for (auto& [id, job] : in_flight_) {
        if (filter && !filter(id)) continue;
        std::lock_guard job_lock(job->mu);
        if (job->interrupted || job->done) continue;
        job->interrupted = true;
        partials.push_back(PartialGeneration{
            id, job->input, job->prefix, job->produced,
            std::vector<ModelVersion>(job->produced.size(), job->version), job->params});
    }
    return partials;
}

std::vector<PartialGeneration> MockEngine::interrupt(const std::function<bool(RequestId)>& filter) {
    std::vector<PartialGeneration> partials;
    {
        std::lock_guard lock(mu_);
        partials = interrupt_locked(filter);
    }
    std::shared_ptr<StepClock> clock;
    {
        std::lock_guard lock(hook_mu_);
        clock = clock_;
    }
    if (clock) clock->wake_all();
    return partials;
}

EngineState MockEngine::begin_switch() {
    EngineState snapshot;
    {
        std::lock_guard lock(mu_);
        if (state_.phase != EnginePhase::serving)
            throw IllegalPhase("begin_switch requires the serving phase");
        state_.phase = EnginePhase::switching;
        ++state_.switch_id;
        // Requests started before the switch are interrupted, not drained.
        interrupt_locked(nullptr);
        snapshot = state_;
    }
    std::shared_ptr<StepClock> clock;
    {
        std::lock_guard lock(hook_mu_);
        clock = clock_;
    }
    if (clock) clock->wake_all();
    return snapshot;
}

EngineState MockEngine::complete_switch(ModelVersion new_version) {
    EngineState snapshot;
    {
        std::lock_guard lock(mu_);
        if (new_version <= state_.current_version)
            throw VersionRegression("new version " + std::to_string(new_version.value) +
                                    " does not exceed current version " +
                                    std::to_string(state_.current_version.value));
        if (state_.phase != EnginePhase::switching)
            throw IllegalPhase("complete_switch requires the switching phase");
        state_.current_version = new_version;
        state_.phase = EnginePhase::serving;
        snapshot = state_;
    }
    serving_cv_.notify_all();
    return snapshot;
}

EngineState MockEngine::state() const {
    std::lock_guard lock(mu_);
    return state_;
}

bool MockEngine::await_serving(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return serving_cv_.wait_for(lock, timeout,
                                [&] { return state_.phase == EnginePhase::serving; });
}

std::size_t MockEngine::in_flight() const {
    std::lock_guard lock(mu_);
    return in_flight_.size();
}

void MockEngine::set_token_hook(TokenHook hook) {
    std::lock_guard lock(hook_mu_);
    hook_ = std::move(hook);
}

void MockEngine::set_step_clock(std::shared_ptr<StepClock> clock) {
    std::lock_guard lock(hook_mu_);
    clock_ = std::move(clock);
}

std::vector<OracleEntry> MockEngine::oracle_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
}

std::optional<OracleEntry> MockEngine::oracle_request(RequestId id) const {
    std::lock_guard lock(log_mu_);
    std::optional<OracleEntry> merged;
    for (const auto& entry : log_) {
        if (entry.request_id != id) continue;
        if (!merged) {
            merged = OracleEntry{id, entry.input, {}, entry.prefix, {}, entry.finished};
            merged->versions.assign(entry.prefix.size(), ModelVersion{});
        }
        // Each resume restates the output so far as its prefix; keep what the
        // earlier calls actually produced and append the new tokens.
        merged->output.resize(std::min(merged->output.size(), entry.prefix.size()));
        merged->versions.resize(merged->output.size());
        merged->output.insert(merged->output.end(), entry.output.begin(), entry.output.end());
        merged->versions.insert(merged->versions.end(), entry.versions.begin(),
                                entry.versions.end());
        merged->finished = entry.finished;
    }
    return merged;
}

}  // namespace tagflow
