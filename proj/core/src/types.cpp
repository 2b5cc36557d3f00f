// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/types.hpp"

#include "tagflow/error.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace tagflow {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Origin origin) {
    return origin == Origin::model_output ? "model_output" : "agent_input";
}

Trajectory Trajectory::from_spans(std::string session_id, std::uint64_t id,
                                  std::vector<TokenSpan> spans) {
    Trajectory t;
    t.session_id = std::move(session_id);
    t.id = id;
    t.spans = std::move(spans);
    for (const auto& span : t.spans) {
        t.loss_mask.insert(t.loss_mask.end(), span.tokens.size(),
                           span.origin == Origin::model_output ? 1 : 0);
        t.version_tags.insert(t.version_tags.end(), span.tokens.size(), span.version);
    }
    return t;
}

std::vector<TokenId> Trajectory::tokens() const {
    std::vector<TokenId> out;
    out.reserve(size());
    for (const auto& span : spans) out.insert(out.end(), span.tokens.begin(), span.tokens.end());
    return out;
}

std::size_t Trajectory::size() const {
    std::size_t n = 0;
    for (const auto& span : spans) n += span.tokens.size();
    return n;
}

std::uint64_t Trajectory::max_version_lag(ModelVersion trained_at) const {
    std::uint64_t lag = 0;
    for (std::size_t i = 0; i < version_tags.size() && i < loss_mask.size(); ++i) {
        if (loss_mask[i] && version_tags[i] < trained_at)
            lag = std::max(lag, trained_at.value - version_tags[i].value);
    }
    return lag;
}

ValidationReport validate_trajectory(const Trajectory& t, std::optional<std::uint32_t> vocab_size) {
    ValidationReport report;
    auto fail = [&](std::string what) { report.violations.push_back(std::move(what)); };

    const std::size_t total = t.size();
    if (t.loss_mask.size() != total) fail("loss_mask length equals token count");
    if (t.version_tags.size() != total) fail("version_tags length equals token count");

    std::size_t pos = 0;
    bool mask_ok = true;
    bool span_versions_ok = true;
    for (const auto& span : t.spans) {
        if (span.tokens.empty()) fail("spans non-empty");
        for (std::size_t k = 0; k < span.tokens.size(); ++k, ++pos) {
            if (vocab_size && span.tokens[k] >= *vocab_size) {
                fail("token id " + std::to_string(span.tokens[k]) + " below vocabulary size");
            }
            const bool trainable = span.origin == Origin::model_output;
            if (pos < t.loss_mask.size() && (t.loss_mask[pos] != 0) != trainable) mask_ok = false;
            if (pos < t.version_tags.size() && t.version_tags[pos] != span.version)
                span_versions_ok = false;
        }
    }
    if (!mask_ok) fail("loss_mask true exactly on model_output tokens");
    if (!span_versions_ok) fail("version_tags agree with span versions");

    for (std::size_t i = 1; i < t.version_tags.size(); ++i) {
        if (t.version_tags[i] < t.version_tags[i - 1]) {
            fail("version_tags non-decreasing");
            break;
        }
    }
    return report;
}

std::string to_record(const Trajectory& t) {
    ordered_json j;
    j["session_id"] = t.session_id;
    j["tokens"] = t.tokens();
    j["loss_mask"] = t.loss_mask;
    auto versions = ordered_json::array();
    for (auto v : t.version_tags) versions.push_back(v.value);
    j["versions"] = std::move(versions);
    return j.dump();
}

Trajectory from_record(std::string_view line) {
    const auto j = ordered_json::parse(line);
    if (!j.is_object()) throw Error("trajectory record is not an object");
    auto tokens = j.at("tokens").get<std::vector<TokenId>>();
    auto mask = j.at("loss_mask").get<std::vector<std::uint8_t>>();
    auto versions = j.at("versions").get<std::vector<std::uint64_t>>();
    if (mask.size() != tokens.size() || versions.size() != tokens.size())
        throw Error("tokens, loss_mask and versions differ in length");

    std::vector<TokenSpan> spans;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Origin origin = mask[i] ? Origin::model_output : Origin::agent_input;
        const ModelVersion version{versions[i]};
        if (spans.empty() || spans.back().origin != origin || spans.back().version != version)
            spans.push_back(TokenSpan{{}, origin, version});
        spans.back().tokens.push_back(tokens[i]);
    }
    auto t = Trajectory::from_spans(j.at("session_id").get<std::string>(), 0, std::move(spans));
    t.loss_mask = std::move(mask);
    return t;
}

void write_records(std::ostream& out, std::span<const Trajectory> trajectories) {
    for (const auto& t : trajectories) out << to_record(t) << '\n';
}

std::vector<Trajectory> read_records(std::istream& in) {
    std::vector<Trajectory> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(from_record(line));
        } catch (const std::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return out;
}

}  // namespace tagflow
