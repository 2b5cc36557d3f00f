// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/config.hpp"
#include "tagflow/error.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

namespace tagflow {
namespace {

std::string field_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigInvalid& e) {
        return e.field();
    }
    return "<accepted>";
}

TEST(Config, MinimalFileLoadsWithResolvedPaths) {
    const std::string path = std::string(TAGFLOW_SOURCE_DIR) + "/configs/minimal.json";
    const auto c = load_config(path);
    EXPECT_EQ(c.seed, 7u);
    ASSERT_EQ(c.cluster.size(), 4u);
    EXPECT_EQ(c.cluster[0].id, "node-0");
    EXPECT_TRUE(c.cluster[0].capabilities.count(CapabilityTag::train));
    EXPECT_FALSE(c.cluster[2].capabilities.count(CapabilityTag::train));
    EXPECT_EQ(c.engine.retry_after, std::chrono::milliseconds(5));
    EXPECT_EQ(c.thresholds.timeout, std::chrono::milliseconds(200));
    EXPECT_TRUE(std::filesystem::exists(c.dataloader.source)) << c.dataloader.source;
    EXPECT_EQ(std::filesystem::canonical(c.dataloader.source),
              std::filesystem::canonical(std::string(TAGFLOW_SOURCE_DIR) + "/data/tasks20.jsonl"));
}

TEST(Config, DefaultsForOptionalSections) {
    const auto c = parse_config(R"({"schema_version":1,"cluster":[{"id":"a","tags":["rollout"]}]})");
    EXPECT_EQ(c.agents.workers, 4u);
    EXPECT_EQ(c.thresholds.batch_size, 4u);
    EXPECT_FALSE(c.server.enabled);
    EXPECT_TRUE(c.event_log.empty());
}

TEST(Config, ReportsFieldPaths) {
    EXPECT_EQ(field_of(R"({"schema_version":1})"), "cluster");
    EXPECT_EQ(field_of(R"({"cluster":[{"id":"a","tags":["rollout"]}]})"), "schema_version");
    EXPECT_EQ(field_of(R"({"schema_version":2,"cluster":[{"id":"a","tags":["rollout"]}]})"),
              "schema_version");
    EXPECT_EQ(field_of(R"({"schema_version":1,"cluster":[{"id":"a","tags":["rollout"]}],
                           "engine":{"vocab":3}})"),
              "engine.vocab");
    EXPECT_EQ(field_of(R"({"schema_version":1,"cluster":[{"id":"a","tags":["gpu"]}]})"),
              "cluster[0].tags");
    EXPECT_EQ(field_of(R"({"schema_version":1,"cluster":[{"id":"a","tags":["rollout"]},
                                                          {"id":"a","tags":["train"]}]})"),
              "cluster[1].id");
    EXPECT_EQ(field_of(R"({"schema_version":1,"cluster":[{"id":"a","tags":["rollout"]}],
                           "server":{"port":70000}})"),
              "server.port");
    EXPECT_EQ(field_of(R"({"schema_version":1,"cluster":[{"id":"a","tags":["rollout"]}],
                           "thresholds":{"batch_size":"four"}})"),
              "thresholds.batch_size");
}

TEST(Config, MalformedJsonIsParseError) {
    EXPECT_THROW(parse_config("{\"schema_version\": 1,"), ParseError);
}

TEST(Config, MissingFileIsError) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
}

TEST(Config, FlagBeatsEnvironment) {
    ::setenv("TAGFLOW_TEST_OPT", "from-env", 1);
    EXPECT_EQ(resolve_option(std::string("from-flag"), "TAGFLOW_TEST_OPT"), "from-flag");
    EXPECT_EQ(resolve_option(std::nullopt, "TAGFLOW_TEST_OPT"), "from-env");
    ::unsetenv("TAGFLOW_TEST_OPT");
    EXPECT_EQ(resolve_option(std::nullopt, "TAGFLOW_TEST_OPT"), std::nullopt);
}

}  // namespace
}  // namespace tagflow
