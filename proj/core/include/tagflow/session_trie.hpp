// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-session radix tree over token ids. Recorded sequences are merged by
// longest-prefix matching: the stored prefix is consumed, a node whose span
// diverges from the new sequence is split at the divergence point, and only
// the unmatched suffix is stored. Every token is held exactly once.
//
// Each node carries run-length encoded (origin, version) metadata, so a
// version boundary inside a node does not force a split. Metadata of an
// already stored prefix is kept as first recorded.

#pragma once

#include "tagflow/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tagflow {

using NodeId = std::uint32_t;
using MarkId = std::uint64_t;

struct MetaRun {
    std::uint32_t length = 0;
    Origin origin = Origin::agent_input;
    ModelVersion version;

    bool operator==(const MetaRun&) const = default;
};

struct TrieNode {
    NodeId parent = 0;
    std::vector<TokenId> tokens;
    std::vector<MetaRun> runs;
    std::map<TokenId, NodeId> children;  ///< keyed by first token of the child span
    std::vector<MarkId> leaf_marks;      ///< recordings ending at this node
};

struct InsertResult {
    std::size_t matched_prefix_length = 0;
    NodeId leaf = 0;
};

struct StorageStats {
    std::size_t stored_tokens = 0;
    std::size_t naive_tokens = 0;
    double dedup_ratio = 1.0;  ///< stored / naive; 1.0 for an empty session
};

class SessionTrie {
public:
    static constexpr NodeId kRoot = 0;

    explicit SessionTrie(std::string session_id = {});

    const std::string& session_id() const { return session_id_; }

    /// Inserts a recorded sequence and places `mark` at its end. Re-using a
    /// mark replaces the earlier recording under that id, which must be a
    /// prefix of the new one (a paused request being completed).
    InsertResult lpm_insert(std::span<const TokenSpan> sequence, MarkId mark,
                            bool complete = true);

    /// Convenience overload: a single-origin, single-version sequence.
    InsertResult lpm_insert(std::span<const TokenId> tokens, MarkId mark,
                            Origin origin = Origin::model_output, ModelVersion version = {});

    /// Reconstructs the recorded spans ending at `mark`.
    std::optional<std::vector<TokenSpan>> path(MarkId mark) const;

    struct MarkInfo {
        MarkId id = 0;
        NodeId node = 0;
        std::size_t length = 0;
        bool complete = false;
    };
    std::vector<MarkInfo> marks() const;
    bool has_mark(MarkId mark) const { return marks_.count(mark) != 0; }

    std::size_t stored_tokens() const { return stored_tokens_; }
    std::size_t naive_tokens() const { return naive_tokens_; }
    StorageStats stats() const;

    std::size_t node_count() const { return nodes_.size(); }
    const TrieNode& node(NodeId id) const { return nodes_.at(id); }

    /// Structural self-check: child first-token uniqueness, non-empty spans,
    /// run lengths, mark path lengths and the stored-token identity.
    std::vector<std::string> check_invariants() const;

private:
    struct Mark {
        NodeId node = 0;
        std::size_t length = 0;
        bool complete = false;
    };

    NodeId split(NodeId node, std::size_t offset);
    NodeId add_child(NodeId parent, std::span<const TokenId> tokens,
                     std::span<const MetaRun> runs);
    void detach_mark(MarkId mark);

    std::string session_id_;
    std::vector<TrieNode> nodes_;
    std::map<MarkId, Mark> marks_;
    std::size_t stored_tokens_ = 0;
    std::size_t naive_tokens_ = 0;
};

/// Splits a run-length metadata vector at token offset `at`.
std::pair<std::vector<MetaRun>, std::vector<MetaRun>> split_runs(std::span<const MetaRun> runs,
                                                                 std::size_t at);

}  // namespace tagflow
