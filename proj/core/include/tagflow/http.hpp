// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON-over-HTTP front end for the services. All token payloads are integer
// arrays. Status mapping:
//
//   400 invalid params / malformed body     404 unknown session or resource
//   409 illegal state, phase or version     422 insufficient capability
//   503 wait signal or retryable proxy error, with a Retry-After header
//
// Engine:  POST /engine/generate, /engine/resume, /engine/control/interrupt,
//          /engine/control/begin_switch, /engine/control/complete_switch;
//          GET /engine/state
// Agents:  POST /v1/generate (session from body or X-Session-Id)
// Trainer: POST /traj/drain; GET /traj/session/{id}, /traj/stats/{id}
// Control: POST /ctl/event, /ctl/update; GET /ctl/state
// Pool:    POST /sched/register, /sched/retag, /sched/dispatch, /sched/fail;
//          GET /sched/pool
// Data:    GET /data/next?capacity=N; POST /data/complete, /data/requeue
//
// Routes whose service is not wired answer 404.

#pragma once

#include <memory>
#include <string>

namespace tagflow {

class MockEngine;
class TrajectoryManager;
class RolloutManager;
class TagScheduler;
class MultiplexingController;
class StreamingDataloader;

struct Services {
    MockEngine* engine = nullptr;
    TrajectoryManager* trajectories = nullptr;
    RolloutManager* rollout = nullptr;
    TagScheduler* scheduler = nullptr;
    MultiplexingController* controller = nullptr;
    StreamingDataloader* data = nullptr;
};

class HttpServer {
public:
    explicit HttpServer(Services services);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and serves on a background thread; returns once accepting.
    /// Port 0 picks a free port. Throws PortConflict if the port is taken.
    int start(const std::string& host, int port);
    void stop();
    int port() const;
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tagflow
