// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain value types shared by every module: token ids, model versions,
// token spans, trajectories and generation parameters.

#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tagflow {

/// Vocabulary index. Range checking against a vocabulary size happens in
/// validate_trajectory and at the engine boundary.
using TokenId = std::uint32_t;

/// Policy weight version. 0 is the initial policy; versions only grow.
struct ModelVersion {
    std::uint64_t value = 0;

    constexpr auto operator<=>(const ModelVersion&) const = default;
    constexpr ModelVersion next() const { return ModelVersion{value + 1}; }
};

enum class Origin : std::uint8_t { agent_input, model_output };

std::string_view to_string(Origin origin);

/// A run of tokens with a single origin and version.
///
/// agent_input spans carry the version current when the request was made.
/// That version is bookkeeping for staleness statistics only; agent input is
/// never trainable.
struct TokenSpan {
    std::vector<TokenId> tokens;
    Origin origin = Origin::agent_input;
    ModelVersion version;

    bool operator==(const TokenSpan&) const = default;
};

struct Trajectory {
    std::string session_id;
    /// Completion id of the logical request that produced this trajectory.
    /// In-memory bookkeeping only; not part of the exported record.
    std::uint64_t id = 0;
    std::vector<TokenSpan> spans;
    std::vector<std::uint8_t> loss_mask;       ///< 1 = model generated, trainable
    std::vector<ModelVersion> version_tags;    ///< one per token

    /// Builds a trajectory whose mask and version tags are derived from spans.
    static Trajectory from_spans(std::string session_id, std::uint64_t id,
                                 std::vector<TokenSpan> spans);

    std::vector<TokenId> tokens() const;
    std::size_t size() const;

    /// Largest (trained_at - version) over trainable tokens; 0 when every
    /// trainable token is at or above trained_at.
    std::uint64_t max_version_lag(ModelVersion trained_at) const;

    bool operator==(const Trajectory&) const = default;
};

struct GenParams {
    std::uint32_t max_new_tokens = 16;
    std::uint64_t seed = 0;
    std::optional<TokenId> stop_token;
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

/// Checks every trajectory invariant and lists each one that is violated.
/// When vocab_size is given, token ids are range checked as well.
ValidationReport validate_trajectory(const Trajectory& t,
                                     std::optional<std::uint32_t> vocab_size = std::nullopt);

// Line-delimited export format. Each record is
//   {"session_id":...,"tokens":[...],"loss_mask":[...],"versions":[...]}
// with fields always emitted in that order.

std::string to_record(const Trajectory& t);
Trajectory from_record(std::string_view line);

void write_records(std::ostream& out, std::span<const Trajectory> trajectories);
/// Throws ParseError naming the 1-based line on malformed input.
std::vector<Trajectory> read_records(std::istream& in);

}  // namespace tagflow
