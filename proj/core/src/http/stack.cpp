// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/stack.hpp"

#include "tagflow/error.hpp"

namespace tagflow {

Stack::Stack(StackConfig config) : config_(std::move(config)) {}

Stack::~Stack() { stop(); }

std::vector<TokenId> Stack::tool_tokens(std::uint64_t task_id, std::uint32_t turn,
                                        std::uint32_t vocab) {
    std::vector<TokenId> out;
    for (std::uint64_t k = 0; k < 2; ++k)
        out.push_back(static_cast<TokenId>((task_id * 2654435761ULL + turn * 40503ULL + k * 97ULL) %
                                           vocab));
    return out;
}

void Stack::mark_ready(const std::string& name) {
    std::lock_guard lock(mu_);
    readiness_.emplace_back(name, true);
}

void Stack::start() {
    if (started_) throw IllegalState("stack already started");
    started_ = true;
    try {
        engine_ = std::make_unique<MockEngine>(config_.engine);
        mark_ready("engine");

        TrajectoryManagerOptions topts;
        topts.expected_switch_duration = config_.rollout.expected_switch;
        topts.pending_timeout = config_.rollout.pending_timeout;
        trajectories_ = std::make_unique<TrajectoryManager>(*engine_, topts);
        mark_ready("trajectory_manager");

        for (const auto& r : config_.cluster) {
            auto d = r;
            d.active.reset();
            scheduler_.register_resource(std::move(d));
        }
        controller_ = std::make_unique<MultiplexingController>(scheduler_);
        mark_ready("scheduler");

        RolloutManagerOptions ropts;
        ropts.resume_capacity = config_.rollout.resume_capacity;
        rollout_ = std::make_unique<RolloutManager>(*engine_, ropts);
        rollout_->set_rollout_resources(scheduler_.query(CapabilityTag::rollout));
        rollout_->set_train_capable(scheduler_.query(CapabilityTag::train));
        rollout_->set_train_dispatcher([this] { controller_->on_threshold_reached(); });
        rollout_->set_placement_listener(
            [this](RequestId id, const std::string& resource, bool attached) {
                if (attached)
                    scheduler_.attach_task(resource, id);
                else
                    scheduler_.detach_task(resource, id);
            });
        scheduler_.set_event_sink([this](const ControlEvent& e) { rollout_->on_event(e); });
        if (!config_.event_log.empty()) {
            event_log_.open(config_.event_log, std::ios::out | std::ios::trunc);
            if (!event_log_) throw ConfigInvalid("event_log", "cannot open " + config_.event_log);
            rollout_->set_event_sink(&event_log_);
        }
        trajectories_->set_gate(rollout_.get());
        rollout_->exclusive([this] { controller_->start(); });
        mark_ready("rollout_manager");

        if (!config_.dataloader.source.empty()) data_.load_file(config_.dataloader.source);
        mark_ready("dataloader");

        if (config_.server.enabled) {
            http_ = std::make_unique<HttpServer>(Services{engine_.get(), trajectories_.get(),
                                                          rollout_.get(), &scheduler_,
                                                          controller_.get(), &data_});
            http_->start(config_.server.host, config_.server.port);
            mark_ready("http");
        }
    } catch (...) {
        stop();
        throw;
    }
}

void Stack::stop() {
    if (http_) {
        http_->stop();
        http_.reset();
    }
    if (event_log_.is_open()) event_log_.close();
    std::lock_guard lock(mu_);
    for (auto it = readiness_.rbegin(); it != readiness_.rend(); ++it) it->second = false;
}

std::vector<std::pair<std::string, bool>> Stack::readiness() const {
    std::lock_guard lock(mu_);
    return readiness_;
}

int Stack::http_port() const { return http_ ? http_->port() : 0; }

std::vector<TrainedBatch> Stack::trained() const {
    std::lock_guard lock(mu_);
    return trained_;
}

void Stack::run_task(const TaskRecord& task) {
    const std::string session = "task-" + std::to_string(task.task_id);
    std::vector<TokenId> input = task.prompt_tokens;
    GenParams params;
    params.max_new_tokens = config_.agents.max_new_tokens;
    params.seed = config_.seed * 1000003ULL + task.task_id;
    constexpr int kAttempts = 5;

    for (std::uint32_t turn = 0; turn < config_.agents.turns; ++turn) {
        ProxyResponse r;
        for (int attempt = 1;; ++attempt) {
            try {
                r = trajectories_->proxy_generate(session, input, params);
                break;
            } catch (const ProxyRetryable&) {
                if (attempt == kAttempts) throw;
                ++turn_retries_;
            }
        }
        if (turn + 1 == config_.agents.turns) break;
        input.insert(input.end(), r.tokens.begin(), r.tokens.end());
        const auto tool = tool_tokens(task.task_id, turn, config_.engine.vocab_size);
        input.insert(input.end(), tool.begin(), tool.end());
    }
}

void Stack::agent_loop() {
    while (true) {
        auto tasks = data_.next(1);
        if (tasks.empty()) {
            if (data_.pending() == 0 && data_.in_flight() == 0) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
            continue;
        }
        const auto id = tasks.front().task_id;
        try {
            run_task(tasks.front());
            data_.complete(id);
            ++tasks_completed_;
        } catch (const ProxyRetryable&) {
            data_.requeue(id);
        }
    }
    --agents_running_;
}

void Stack::trainer_loop() {
    const auto batch_size = config_.thresholds.batch_size;
    const auto timeout = config_.thresholds.timeout;
    auto last = std::chrono::steady_clock::now();
    while (true) {
        const bool agents_done = agents_running_.load() == 0;
        auto batch = trajectories_->drain_batch(batch_size);
        EventKind kind = EventKind::threshold_reached;
        if (!batch) {
            const auto ready = trajectories_->ready_count();
            const bool timed_out =
                timeout.count() > 0 && std::chrono::steady_clock::now() - last >= timeout;
            if (ready > 0 && (agents_done || timed_out)) {
                batch = trajectories_->drain_batch(1);
                kind = EventKind::timeout;
            }
        }
        if (!batch) {
            if (agents_done && trajectories_->ready_count() == 0) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
            continue;
        }

        const auto version = engine_->state().current_version;
        ControlEvent e;
        e.kind = kind;
        rollout_->on_event(e);
        const bool overlapped = controller_->phase() == Phase::overlap;
        std::this_thread::sleep_for(config_.trainer.train_duration);
        rollout_->exclusive([this] { controller_->on_train_complete(); });
        rollout_->coordinate_update(version.next());
        {
            std::lock_guard lock(mu_);
            trained_.push_back(TrainedBatch{version, overlapped, std::move(*batch)});
        }
        ++updates_;
        last = std::chrono::steady_clock::now();
    }
}

RunSummary Stack::run_until_drained() {
    if (!started_ || !engine_) throw IllegalState("stack is not started");
    const std::size_t workers = std::max<std::size_t>(1, config_.agents.workers);
    agents_running_ = workers;
    std::vector<std::thread> threads;
    threads.reserve(workers + 1);
    for (std::size_t i = 0; i < workers; ++i) threads.emplace_back([this] { agent_loop(); });
    threads.emplace_back([this] { trainer_loop(); });
    for (auto& t : threads) t.join();

    RunSummary s;
    s.tasks_completed = tasks_completed_;
    s.updates = updates_;
    s.turn_retries = turn_retries_;
    s.final_version = engine_->state().current_version;
    std::lock_guard lock(mu_);
    for (const auto& b : trained_) s.trajectories += b.trajectories.size();
    return s;
}

void Stack::fail_resource(const std::string& id) {
    if (!controller_) throw IllegalState("stack is not started");
    rollout_->exclusive([&] {
        controller_->on_failure(id);
        rollout_->set_train_capable(scheduler_.query(CapabilityTag::train));
    });
}

}  // namespace tagflow
