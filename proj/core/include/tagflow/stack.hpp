// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// In-process assembly of every service: engine, trajectory manager,
// scheduler and multiplexing controller, rollout manager, dataloader and an
// optional HTTP front end, plus embedded mock agents and a stub trainer that
// bumps the model version once per drained batch.

#pragma once

#include "tagflow/config.hpp"
#include "tagflow/dataloader.hpp"
#include "tagflow/engine.hpp"
#include "tagflow/http.hpp"
#include "tagflow/rollout_manager.hpp"
#include "tagflow/scheduler.hpp"
#include "tagflow/trajectory_manager.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace tagflow {

struct TrainedBatch {
    ModelVersion trained_at;  ///< version the update was computed against
    bool overlapped = false;  ///< rollout was running on other resources
    std::vector<Trajectory> trajectories;
};

struct RunSummary {
    std::size_t tasks_completed = 0;
    std::size_t trajectories = 0;
    std::size_t updates = 0;
    std::size_t turn_retries = 0;
    ModelVersion final_version;
};

class Stack {
public:
    explicit Stack(StackConfig config);
    ~Stack();

    Stack(const Stack&) = delete;
    Stack& operator=(const Stack&) = delete;

    /// Brings services up in dependency order. Throws PortConflict or
    /// ConfigInvalid; on failure everything already started is torn down.
    void start();
    /// Reverse-order teardown; idempotent.
    void stop();

    /// Runs the agents over every loaded task and the trainer until all
    /// trajectories have been trained.
    RunSummary run_until_drained();

    /// Removes a resource mid-run; its in-flight tasks move elsewhere.
    void fail_resource(const std::string& id);

    /// (service, ready) in start order.
    std::vector<std::pair<std::string, bool>> readiness() const;
    int http_port() const;

    MockEngine& engine() { return *engine_; }
    TrajectoryManager& trajectories() { return *trajectories_; }
    RolloutManager& rollout() { return *rollout_; }
    TagScheduler& scheduler() { return scheduler_; }
    MultiplexingController& controller() { return *controller_; }
    StreamingDataloader& dataloader() { return data_; }
    std::vector<TrainedBatch> trained() const;
    const StackConfig& config() const { return config_; }

    /// Deterministic tool-result tokens appended between turns.
    static std::vector<TokenId> tool_tokens(std::uint64_t task_id, std::uint32_t turn,
                                            std::uint32_t vocab);

private:
    void agent_loop();
    void run_task(const TaskRecord& task);
    void trainer_loop();
    void mark_ready(const std::string& name);

    StackConfig config_;
    std::unique_ptr<MockEngine> engine_;
    std::unique_ptr<TrajectoryManager> trajectories_;
    TagScheduler scheduler_;
    std::unique_ptr<MultiplexingController> controller_;
    std::unique_ptr<RolloutManager> rollout_;
    StreamingDataloader data_;
    std::unique_ptr<HttpServer> http_;
    std::ofstream event_log_;

    mutable std::mutex mu_;
    std::vector<std::pair<std::string, bool>> readiness_;
    std::vector<TrainedBatch> trained_;
    bool started_ = false;

    std::atomic<std::size_t> agents_running_{0};
    std::atomic<std::size_t> tasks_completed_{0};
    std::atomic<std::size_t> turn_retries_{0};
    std::atomic<std::size_t> updates_{0};
};

}  // namespace tagflow
