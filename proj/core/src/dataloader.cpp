// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/dataloader.hpp"

#include "tagflow/error.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace tagflow {

std::string_view to_string(TaskState state) {
    switch (state) {
        case TaskState::pending: return "pending";
        case TaskState::dispatched: return "dispatched";
        case TaskState::complete: return "complete";
        case TaskState::requeued: return "requeued";
    }
    return "unknown";
}

std::size_t StreamingDataloader::load(std::istream& in) {
    std::vector<TaskRecord> parsed;
    std::set<std::uint64_t> seen;
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, t] : tasks_) seen.insert(id);
    }
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        TaskRecord t;
        try {
            const auto j = nlohmann::json::parse(line);
            t.task_id = j.at("task_id").get<std::uint64_t>();
            t.prompt_tokens = j.at("prompt_tokens").get<std::vector<TokenId>>();
            t.meta = j.contains("meta") ? j["meta"].dump() : "{}";
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
        if (t.prompt_tokens.empty()) throw ParseError(lineno, "prompt_tokens is empty");
        if (!seen.insert(t.task_id).second)
            throw ParseError(lineno, "duplicate task_id " + std::to_string(t.task_id));
        t.source_line = lineno;
        parsed.push_back(std::move(t));
    }

    std::lock_guard lock(mu_);
    for (auto& t : parsed) {
        fresh_.push_back(t.task_id);
        tasks_.emplace(t.task_id, std::move(t));
    }
    return parsed.size();
}

std::size_t StreamingDataloader::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open task file '" + path + "'");
    return load(in);
}

std::vector<TaskRecord> StreamingDataloader::next(std::size_t capacity) {
    std::lock_guard lock(mu_);
    std::vector<TaskRecord> out;
    for (auto* queue : {&requeued_, &fresh_}) {
        while (out.size() < capacity && !queue->empty()) {
            auto& t = tasks_.at(queue->front());
            queue->pop_front();
            t.state = TaskState::dispatched;
            ++in_flight_;
            out.push_back(t);
        }
    }
    return out;
}

TaskRecord& StreamingDataloader::find_locked(std::uint64_t task_id) {
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw IllegalState("unknown task " + std::to_string(task_id));
    if (it->second.state != TaskState::dispatched)
        throw IllegalState("task " + std::to_string(task_id) + " is " +
                           std::string(to_string(it->second.state)) + ", not dispatched");
    return it->second;
}

void StreamingDataloader::complete(std::uint64_t task_id) {
    std::lock_guard lock(mu_);
    find_locked(task_id).state = TaskState::complete;
    --in_flight_;
    ++completed_;
}

void StreamingDataloader::requeue(std::uint64_t task_id) {
    std::lock_guard lock(mu_);
    find_locked(task_id).state = TaskState::requeued;
    --in_flight_;
    requeued_.push_back(task_id);
}

std::size_t StreamingDataloader::pending() const {
    std::lock_guard lock(mu_);
    return fresh_.size() + requeued_.size();
}

std::size_t StreamingDataloader::in_flight() const {
    std::lock_guard lock(mu_);
    return in_flight_;
}

std::size_t StreamingDataloader::completed() const {
    std::lock_guard lock(mu_);
    return completed_;
}

std::size_t StreamingDataloader::total() const {
    std::lock_guard lock(mu_);
    return tasks_.size();
}

TaskState StreamingDataloader::state(std::uint64_t task_id) const {
    std::lock_guard lock(mu_);
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw IllegalState("unknown task " + std::to_string(task_id));
    return it->second.state;
}

std::vector<TaskRecord> StreamingDataloader::tasks() const {
    std::lock_guard lock(mu_);
    std::vector<TaskRecord> out;
    for (const auto& [id, t] : tasks_) out.push_back(t);
    return out;
}

}  // namespace tagflow
