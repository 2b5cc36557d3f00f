// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-in for an LLM serving engine.
//
// The "model" is a public hash: the i-th generated token is
//
//   token_i = mix(fnv1a64(context), seed, version) mod vocab_size
//
// where context = input ++ prefix ++ output_<i, fnv1a64 consumes each token as
// four little-endian bytes, and mix is defined in oracle_next_token. Changing
// the version changes every subsequent token, which makes model switches
// observable in the output stream without real weights.

#pragma once

#include "tagflow/types.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace tagflow {

using RequestId = std::uint64_t;

/// Streaming FNV-1a over token ids.
class ContextHasher {
public:
    static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

    void absorb(TokenId token) {
        for (int b = 0; b < 4; ++b) {
            state_ ^= (token >> (8 * b)) & 0xffU;
            state_ *= kPrime;
        }
    }
    void absorb(std::span<const TokenId> tokens) {
        for (auto t : tokens) absorb(t);
    }
    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_ = kOffset;
};

/// Next token given the hashed context.
TokenId oracle_next_token(std::uint64_t context_state, std::uint64_t seed, ModelVersion version,
                          std::uint32_t vocab_size);

/// Reference generation used by tests and the oracle log: `count` tokens
/// continuing `context` at a fixed version, honoring an optional stop token.
std::vector<TokenId> oracle_generate(std::span<const TokenId> context, std::size_t count,
                                     std::uint64_t seed, ModelVersion version,
                                     std::uint32_t vocab_size,
                                     std::optional<TokenId> stop_token = std::nullopt);

enum class EnginePhase { serving, switching };

struct EngineState {
    EnginePhase phase = EnginePhase::serving;
    ModelVersion current_version;
    std::uint64_t switch_id = 0;  ///< id of the latest begin_switch
};

struct GenerationResult {
    RequestId request_id = 0;
    std::vector<TokenId> input_tokens;
    std::vector<TokenId> output_tokens;  ///< tokens produced by this call only
    std::vector<ModelVersion> version_per_token;
    bool finished = true;  ///< false when interrupted mid-turn
};

/// Snapshot of an in-flight generation taken by interrupt().
struct PartialGeneration {
    RequestId request_id = 0;
    std::vector<TokenId> input;
    std::vector<TokenId> prefix;  ///< output carried over from earlier calls
    std::vector<TokenId> produced;
    std::vector<ModelVersion> produced_versions;
    GenParams params;
};

/// One engine call as seen by the adapter: what went in and what came out.
struct OracleEntry {
    RequestId request_id = 0;
    std::vector<TokenId> input;
    std::vector<TokenId> prefix;
    std::vector<TokenId> output;
    std::vector<ModelVersion> versions;
    bool finished = true;
};

/// Virtual step clock for tests. Every generated token consumes one tick;
/// generations park until ticks are granted, which makes interrupt positions
/// exactly controllable from another thread.
class StepClock {
public:
    void advance(std::size_t ticks);
    /// Blocks until a tick is available or cancelled() turns true.
    /// Returns false when cancelled.
    bool acquire(const std::function<bool()>& cancelled);
    void wake_all();
    /// Blocks until at least `n` generations are parked waiting for a tick.
    void wait_for_waiters(std::size_t n);
    std::size_t consumed() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t granted_ = 0;
    std::size_t consumed_ = 0;
    std::size_t waiters_ = 0;
};

struct EngineOptions {
    std::uint32_t vocab_size = 32000;
    std::chrono::milliseconds retry_after{20};
    bool record_oracle_log = true;
};

class MockEngine {
public:
    /// Called in the generating thread before each token, with no engine
    /// locks held. May call interrupt()/begin_switch()/complete_switch().
    using TokenHook = std::function<void(RequestId, std::size_t produced_so_far)>;

    explicit MockEngine(EngineOptions options = {});

    MockEngine(const MockEngine&) = delete;
    MockEngine& operator=(const MockEngine&) = delete;

    GenerationResult generate(std::span<const TokenId> input, const GenParams& params,
                              RequestId id = 0);

    /// Continues a generation after `prefix` with the current model. Only the
    /// new tokens are returned; at most max_new_tokens - |prefix| of them.
    GenerationResult resume_from(std::span<const TokenId> prefix, std::span<const TokenId> input,
                                 const GenParams& params, RequestId id = 0);

    /// Stops every in-flight generation (or those matching `filter`) at the
    /// next token boundary and returns what each produced so far.
    std::vector<PartialGeneration> interrupt(
        const std::function<bool(RequestId)>& filter = nullptr);

    /// Enters the switching phase. In-flight generations are interrupted.
    EngineState begin_switch();
    EngineState complete_switch(ModelVersion new_version);

    EngineState state() const;
    /// Blocks until the engine is serving or the timeout elapses.
    bool await_serving(std::chrono::milliseconds timeout) const;

    RequestId next_request_id() { return next_id_.fetch_add(1); }
    std::size_t in_flight() const;

    void set_token_hook(TokenHook hook);
    void set_step_clock(std::shared_ptr<StepClock> clock);

    std::vector<OracleEntry> oracle_log() const;
    /// Full output of a logical request assembled across interrupts and
    /// resumes, from the oracle log.
    std::optional<OracleEntry> oracle_request(RequestId id) const;

    const EngineOptions& options() const { return options_; }

private:
    struct InFlight {
        RequestId id = 0;
        std::vector<TokenId> input;
        std::vector<TokenId> prefix;
        GenParams params;
        ModelVersion version;
        std::mutex mu;
        bool interrupted = false;
        bool done = false;
        std::vector<TokenId> produced;
    };

    GenerationResult run(std::vector<TokenId> prefix, std::span<const TokenId> input,
                         const GenParams& params, RequestId id);
    std::vector<PartialGeneration> interrupt_locked(const std::function<bool(RequestId)>& filter);
    void check_tokens(std::span<const TokenId> tokens) const;

    EngineOptions options_;
    std::atomic<RequestId> next_id_{1};

    mutable std::mutex mu_;
    mutable std::condition_variable serving_cv_;
    EngineState state_;
    std::map<RequestId, std::shared_ptr<InFlight>> in_flight_;

    mutable std::mutex hook_mu_;
    TokenHook hook_;
    std::shared_ptr<StepClock> clock_;

    mutable std::mutex log_mu_;
    std::vector<OracleEntry> log_;
};

}  // namespace tagflow
