// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flow-based task feeder: hands out tasks as rollout slots free up instead of
// in fixed-size batches.

#pragma once

#include "tagflow/types.hpp"

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace tagflow {

enum class TaskState { pending, dispatched, complete, requeued };

std::string_view to_string(TaskState state);

struct TaskRecord {
    std::uint64_t task_id = 0;
    std::vector<TokenId> prompt_tokens;
    std::string meta;             ///< opaque JSON text, "{}" when absent
    std::uint64_t source_line = 0;  ///< 1-based line in the loaded file
    TaskState state = TaskState::pending;
};

class StreamingDataloader {
public:
    /// Parses line-delimited records {task_id, prompt_tokens, meta?}. All or
    /// nothing: on error nothing is enqueued and ParseError names the line.
    std::size_t load(std::istream& in);
    std::size_t load_file(const std::string& path);

    /// Up to `capacity` tasks, requeued ones first, each FIFO.
    std::vector<TaskRecord> next(std::size_t capacity);

    /// Both require the task to be dispatched; IllegalState otherwise.
    void complete(std::uint64_t task_id);
    void requeue(std::uint64_t task_id);

    std::size_t pending() const;
    std::size_t in_flight() const;
    std::size_t completed() const;
    std::size_t total() const;
    TaskState state(std::uint64_t task_id) const;
    std::vector<TaskRecord> tasks() const;

private:
    TaskRecord& find_locked(std::uint64_t task_id);

    mutable std::mutex mu_;
    std::map<std::uint64_t, TaskRecord> tasks_;
    std::deque<std::uint64_t> fresh_;
    std::deque<std::uint64_t> requeued_;
    std::size_t in_flight_ = 0;
    std::size_t completed_ = 0;
};

}  // namespace tagflow
