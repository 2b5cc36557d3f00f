// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/error.hpp"
#include "tagflow/types.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

namespace tagflow {
namespace {

bool has(const ValidationReport& r, const std::string& what) {
    return std::find(r.violations.begin(), r.violations.end(), what) != r.violations.end();
}

TEST(Trajectory, MinimalWellFormed) {
    const auto t =
        Trajectory::from_spans("s", 1, {TokenSpan{{4, 5, 6}, Origin::model_output, {}}});
    EXPECT_TRUE(validate_trajectory(t).ok());
    EXPECT_EQ(t.loss_mask, (std::vector<std::uint8_t>{1, 1, 1}));
    EXPECT_EQ(t.size(), 3u);
}

TEST(Trajectory, DecreasingVersionsViolate) {
    auto t = Trajectory::from_spans("s", 1, {TokenSpan{{1, 2}, Origin::model_output, {}}});
    t.version_tags = {ModelVersion{1}, ModelVersion{0}};
    const auto r = validate_trajectory(t);
    EXPECT_TRUE(has(r, "version_tags non-decreasing"));
}

TEST(Trajectory, MaskMustMatchOrigin) {
    auto t = Trajectory::from_spans("s", 1,
                                    {TokenSpan{{1, 2}, Origin::agent_input, {}},
                                     TokenSpan{{3}, Origin::model_output, {}}});
    EXPECT_EQ(t.loss_mask, (std::vector<std::uint8_t>{0, 0, 1}));
    t.loss_mask[0] = 1;
    EXPECT_TRUE(has(validate_trajectory(t), "loss_mask true exactly on model_output tokens"));
    t.loss_mask.pop_back();
    EXPECT_TRUE(has(validate_trajectory(t), "loss_mask length equals token count"));
}

TEST(Trajectory, VocabularyRange) {
    const auto t = Trajectory::from_spans("s", 1, {TokenSpan{{7, 10}, Origin::model_output, {}}});
    EXPECT_TRUE(validate_trajectory(t, 11).ok());
    EXPECT_FALSE(validate_trajectory(t, 10).ok());
}

TEST(Trajectory, MaxVersionLagCountsTrainableTokensOnly) {
    const auto t = Trajectory::from_spans("s", 1,
                                          {TokenSpan{{1}, Origin::agent_input, ModelVersion{0}},
                                           TokenSpan{{2}, Origin::model_output, ModelVersion{2}},
                                           TokenSpan{{3}, Origin::model_output, ModelVersion{3}}});
    EXPECT_EQ(t.max_version_lag(ModelVersion{4}), 2u);
    EXPECT_EQ(t.max_version_lag(ModelVersion{3}), 1u);
    EXPECT_EQ(t.max_version_lag(ModelVersion{1}), 0u);
}

TEST(Records, RoundTripKeepsFieldOrder) {
    const auto t = Trajectory::from_spans("sess", 9,
                                          {TokenSpan{{1, 2}, Origin::agent_input, ModelVersion{0}},
                                           TokenSpan{{3}, Origin::model_output, ModelVersion{1}}});
    const auto line = to_record(t);
    EXPECT_EQ(line,
              R"({"session_id":"sess","tokens":[1,2,3],"loss_mask":[0,0,1],"versions":[0,0,1]})");
    auto back = from_record(line);
    EXPECT_EQ(back.tokens(), t.tokens());
    EXPECT_EQ(back.loss_mask, t.loss_mask);
    EXPECT_EQ(back.version_tags, t.version_tags);
    EXPECT_EQ(back.session_id, "sess");
}

TEST(Records, ParseErrorNamesLine) {
    std::istringstream in(
        R"({"session_id":"a","tokens":[1],"loss_mask":[1],"versions":[0]})"
        "\n\n"
        R"({"session_id":"b","tokens":[1,2],"loss_mask":[1],"versions":[0]})"
        "\n");
    try {
        read_records(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Records, StreamRoundTrip) {
    std::vector<Trajectory> ts;
    for (std::uint32_t i = 0; i < 5; ++i)
        ts.push_back(Trajectory::from_spans(
            "s" + std::to_string(i), i,
            {TokenSpan{{i, i + 1}, Origin::agent_input, {}},
             TokenSpan{{i + 2}, Origin::model_output, ModelVersion{i}}}));
    std::stringstream buf;
    write_records(buf, ts);
    const auto back = read_records(buf);
    ASSERT_EQ(back.size(), ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(to_record(back[i]), to_record(ts[i]));
}

}  // namespace
}  // namespace tagflow
