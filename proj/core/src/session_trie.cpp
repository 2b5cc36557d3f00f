// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/session_trie.hpp"

#include <algorithm>

namespace tagflow {

namespace {

ModelVersion version_at(const TrieNode& node, std::size_t offset) {
    std::size_t seen = 0;
    for (const auto& run : node.runs) {
        seen += run.length;
        if (offset < seen) return run.version;
    }
    return node.runs.empty() ? ModelVersion{} : node.runs.back().version;
}

void append_run(std::vector<MetaRun>& runs, Origin origin, ModelVersion version,
                std::uint32_t length) {
    if (length == 0) return;
    if (!runs.empty() && runs.back().origin == origin && runs.back().version == version)
        runs.back().length += length;
    else
        runs.push_back(MetaRun{length, origin, version});
}

}  // namespace

std::pair<std::vector<MetaRun>, std::vector<MetaRun>> split_runs(std::span<const MetaRun> runs,
                                                                 std::size_t at) {
    std::vector<MetaRun> head;
    std::vector<MetaRun> tail;
    std::size_t pos = 0;
    for (const auto& run : runs) {
        const std::size_t end = pos + run.length;
        if (end <= at) {
            head.push_back(run);
        } else if (pos >= at) {
            tail.push_back(run);
        } else {
            head.push_back(MetaRun{static_cast<std::uint32_t>(at - pos), run.origin, run.version});
            tail.push_back(MetaRun{static_cast<std::uint32_t>(end - at), run.origin, run.version});
        }
        pos = end;
    }
    return {std::move(head), std::move(tail)};
}

SessionTrie::SessionTrie(std::string session_id) : session_id_(std::move(session_id)) {
    nodes_.emplace_back();  // root, empty span
}

NodeId SessionTrie::add_child(NodeId parent, std::span<const TokenId> tokens,
                              std::span<const MetaRun> runs) {
    const auto id = static_cast<NodeId>(nodes_.size());
    TrieNode child;
    child.parent = parent;
    child.tokens.assign(tokens.begin(), tokens.end());
    child.runs.assign(runs.begin(), runs.end());
    nodes_.push_back(std::move(child));
    nodes_[parent].children.emplace(tokens.front(), id);
    stored_tokens_ += tokens.size();
    return id;
}

// Splits `node` so that it keeps tokens [0, offset) and a new child holds the
// rest together with the original children and marks. Returns the child.
NodeId SessionTrie::split(NodeId node, std::size_t offset) {
    const auto tail_id = static_cast<NodeId>(nodes_.size());
    nodes_.emplace_back();
    TrieNode& head = nodes_[node];
    TrieNode& tail = nodes_[tail_id];

    auto [head_runs, tail_runs] = split_runs(head.runs, offset);
    tail.parent = node;
    tail.tokens.assign(head.tokens.begin() + static_cast<std::ptrdiff_t>(offset), head.tokens.end());
    tail.runs = std::move(tail_runs);
    tail.children = std::move(head.children);
    tail.leaf_marks = std::move(head.leaf_marks);

    head.tokens.resize(offset);
    head.runs = std::move(head_runs);
    head.children.clear();
    head.leaf_marks.clear();
    head.children.emplace(tail.tokens.front(), tail_id);

    for (auto& [first, child] : nodes_[tail_id].children) nodes_[child].parent = tail_id;
    for (auto mark : nodes_[tail_id].leaf_marks) marks_[mark].node = tail_id;
    return tail_id;
}

void SessionTrie::detach_mark(MarkId mark) {
    auto it = marks_.find(mark);
    if (it == marks_.end()) return;
    auto& leaf = nodes_[it->second.node].leaf_marks;
    leaf.erase(std::remove(leaf.begin(), leaf.end(), mark), leaf.end());
    naive_tokens_ -= it->second.length;
    marks_.erase(it);
}

InsertResult SessionTrie::lpm_insert(std::span<const TokenSpan> sequence, MarkId mark,
                                     bool complete) {
    std::vector<TokenId> tokens;
    std::vector<Origin> origins;
    std::vector<ModelVersion> versions;
    for (const auto& span : sequence) {
        tokens.insert(tokens.end(), span.tokens.begin(), span.tokens.end());
        origins.insert(origins.end(), span.tokens.size(), span.origin);
        versions.insert(versions.end(), span.tokens.size(), span.version);
    }
    const std::size_t n = tokens.size();

    detach_mark(mark);

    NodeId node = kRoot;
    std::size_t pos = 0;
    ModelVersion last_version{};
    NodeId leaf = kRoot;
    bool placed = false;

    auto suffix_runs = [&](std::size_t from) {
        // Agent input never reports a version older than the context before it.
        std::vector<MetaRun> runs;
        ModelVersion floor = last_version;
        for (std::size_t i = from; i < n; ++i) {
            ModelVersion v = versions[i];
            if (origins[i] == Origin::agent_input) v = std::max(v, floor);
            floor = std::max(floor, v);
            append_run(runs, origins[i], v, 1);
        }
        return runs;
    };

    while (!placed) {
        if (pos == n) {
            leaf = node;
            placed = true;
            break;
        }
        auto child_it = nodes_[node].children.find(tokens[pos]);
        if (child_it == nodes_[node].children.end()) {
            auto runs = suffix_runs(pos);
            leaf = add_child(node, std::span(tokens).subspan(pos), runs);
            placed = true;
            break;
        }
        const NodeId child = child_it->second;
        const auto& span = nodes_[child].tokens;
        std::size_t common = 0;
        while (common < span.size() && pos + common < n && span[common] == tokens[pos + common])
            ++common;
        last_version = version_at(nodes_[child], common - 1);

        if (common == span.size()) {
            pos += common;
            node = child;
            continue;
        }
        split(child, common);
        pos += common;
        if (pos == n) {
            leaf = child;
        } else {
            auto runs = suffix_runs(pos);
            leaf = add_child(child, std::span(tokens).subspan(pos), runs);
        }
        placed = true;
    }

    nodes_[leaf].leaf_marks.push_back(mark);
    marks_[mark] = Mark{leaf, n, complete};
    naive_tokens_ += n;
    return InsertResult{pos, leaf};
}

InsertResult SessionTrie::lpm_insert(std::span<const TokenId> tokens, MarkId mark, Origin origin,
                                     ModelVersion version) {
    TokenSpan span{{tokens.begin(), tokens.end()}, origin, version};
    return lpm_insert(std::span<const TokenSpan>(&span, 1), mark, true);
}

std::optional<std::vector<TokenSpan>> SessionTrie::path(MarkId mark) const {
    auto it = marks_.find(mark);
    if (it == marks_.end()) return std::nullopt;

    std::vector<NodeId> chain;
    for (NodeId n = it->second.node; n != kRoot; n = nodes_[n].parent) chain.push_back(n);
    std::reverse(chain.begin(), chain.end());

    std::vector<TokenSpan> spans;
    for (NodeId id : chain) {
        const auto& node = nodes_[id];
        std::size_t offset = 0;
        for (const auto& run : node.runs) {
            if (spans.empty() || spans.back().origin != run.origin ||
                spans.back().version != run.version) {
                spans.push_back(TokenSpan{{}, run.origin, run.version});
            }
            auto first = node.tokens.begin() + static_cast<std::ptrdiff_t>(offset);
            spans.back().tokens.insert(spans.back().tokens.end(), first, first + run.length);
            offset += run.length;
        }
    }
    return spans;
}

std::vector<SessionTrie::MarkInfo> SessionTrie::marks() const {
    std::vector<MarkInfo> out;
    out.reserve(marks_.size());
    for (const auto& [id, m] : marks_) out.push_back(MarkInfo{id, m.node, m.length, m.complete});
    return out;
}

StorageStats SessionTrie::stats() const {
    StorageStats s;
    s.stored_tokens = stored_tokens_;
    s.naive_tokens = naive_tokens_;
    s.dedup_ratio = naive_tokens_ == 0 ? 1.0
                                       : static_cast<double>(stored_tokens_) /
                                             static_cast<double>(naive_tokens_);
    return s;
}

std::vector<std::string> SessionTrie::check_invariants() const {
    std::vector<std::string> problems;
    std::size_t held = 0;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        const auto& node = nodes_[id];
        held += node.tokens.size();
        if (id != kRoot && node.tokens.empty())
            problems.push_back("node " + std::to_string(id) + " has an empty span");
        std::size_t run_total = 0;
        for (const auto& r : node.runs) run_total += r.length;
        if (run_total != node.tokens.size())
            problems.push_back("node " + std::to_string(id) + " metadata runs do not cover span");
        for (const auto& [first, child] : node.children) {
            if (nodes_[child].tokens.empty() || nodes_[child].tokens.front() != first)
                problems.push_back("child key mismatch under node " + std::to_string(id));
            if (nodes_[child].parent != id)
                problems.push_back("parent link broken at node " + std::to_string(child));
        }
    }
    if (held != stored_tokens_) problems.push_back("stored-token accounting mismatch");
    if (stored_tokens_ > naive_tokens_) problems.push_back("stored tokens exceed naive tokens");
    for (const auto& [id, m] : marks_) {
        std::size_t len = 0;
        for (NodeId n = m.node; n != kRoot; n = nodes_[n].parent) len += nodes_[n].tokens.size();
        if (len != m.length)
            problems.push_back("mark " + std::to_string(id) + " path length mismatch");
    }
    return problems;
}

}  // namespace tagflow
