// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every tagflow service.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tagflow {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by the engine while a model switch is in progress. The caller is
/// expected to hold the request and retry once the switch completes.
class WaitSignal : public Error {
public:
    WaitSignal(std::uint64_t switch_id, std::chrono::milliseconds retry_after)
        : Error("engine is switching models (switch " + std::to_string(switch_id) + ")"),
          switch_id_(switch_id), retry_after_(retry_after) {}

    std::uint64_t switch_id() const noexcept { return switch_id_; }
    std::chrono::milliseconds retry_after() const noexcept { return retry_after_; }

private:
    std::uint64_t switch_id_;
    std::chrono::milliseconds retry_after_;
};

class InvalidParams : public Error { using Error::Error; };
class VersionRegression : public Error { using Error::Error; };
class IllegalPhase : public Error { using Error::Error; };
class BudgetExhausted : public Error { using Error::Error; };
class UnknownSession : public Error { using Error::Error; };
class UnknownResource : public Error { using Error::Error; };
class InsufficientCapability : public Error { using Error::Error; };
class IllegalState : public Error { using Error::Error; };
class StaleVersion : public Error { using Error::Error; };
class IncompatibleTagging : public Error { using Error::Error; };

/// Retryable failure surfaced to agents by the trajectory proxy (engine
/// unreachable, pending-switch timeout).
class ProxyRetryable : public Error { using Error::Error; };

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigInvalid : public Error {
public:
    ConfigInvalid(std::string field, const std::string& what)
        : Error("config invalid at '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class LogCorrupt : public Error {
public:
    LogCorrupt(std::size_t byte_offset, const std::string& what)
        : Error("event log corrupt at byte " + std::to_string(byte_offset) + ": " + what),
          offset_(byte_offset) {}
    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class PortConflict : public Error {
public:
    PortConflict(const std::string& host, int port)
        : Error("cannot bind " + host + ":" + std::to_string(port) + " (address in use)"),
          port_(port) {}
    int port() const noexcept { return port_; }

private:
    int port_;
};

}  // namespace tagflow
