// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tagflow/engine.hpp"

#include <condition_variable>
#include <mutex>
#include <set>

namespace support {

/// Token hook that parks every request once, just before its k-th token,
/// until released.
class HoldAt {
public:
    explicit HoldAt(std::size_t k) : k_(k) {}

    tagflow::MockEngine::TokenHook hook() {
        return [this](tagflow::RequestId id, std::size_t produced) {
            std::unique_lock lock(mu_);
            if (produced != k_ || !held_.insert(id).second) return;
            cv_.notify_all();
            cv_.wait(lock, [&] { return released_; });
        };
    }
    void wait_held(std::size_t n) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return held_.size() >= n; });
    }
    void release() {
        std::lock_guard lock(mu_);
        released_ = true;
        cv_.notify_all();
    }

private:
    std::size_t k_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::set<tagflow::RequestId> held_;
    bool released_ = false;
};

}  // namespace support
