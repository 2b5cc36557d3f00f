// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/dataloader.hpp"
#include "tagflow/error.hpp"
#include "tagflow/http.hpp"
#include "tagflow/rollout_manager.hpp"
#include "tagflow/scheduler.hpp"
#include "tagflow/trajectory_manager.hpp"

#include "support/oracle.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <sstream>

namespace tagflow {
namespace {

using json = nlohmann::json;

struct Server {
    Server() {
        tm.set_gate(&rollout);
        rollout.set_rollout_resources({"n0"});
        std::istringstream in(R"({"task_id":1,"prompt_tokens":[5,6]})");
        data.load(in);
        Services s;
        s.engine = &engine;
        s.trajectories = &tm;
        s.rollout = &rollout;
        s.scheduler = &scheduler;
        s.data = &data;
        http = std::make_unique<HttpServer>(s);
        port = http->start("127.0.0.1", 0);
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }

    httplib::Result post(const std::string& path, const json& body) {
        return client->Post(path, body.dump(), "application/json");
    }

    MockEngine engine;
    RolloutManager rollout{engine};
    TrajectoryManager tm{engine};
    TagScheduler scheduler;
    StreamingDataloader data;
    std::unique_ptr<HttpServer> http;
    int port = 0;
    std::unique_ptr<httplib::Client> client;
};

TEST(Http, EngineGenerateMatchesDirectCall) {
    Server s;
    const auto res = s.post("/engine/generate",
                            {{"tokens", {1, 2, 3}}, {"params", {{"max_new_tokens", 8}, {"seed", 4}}}});
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto j = json::parse(res->body);
    EXPECT_EQ(j["output_tokens"].get<std::vector<TokenId>>(), oracle::generate({1, 2, 3}, 8, 4, 0));
    EXPECT_EQ(j["finished"], true);
}

TEST(Http, SwitchingEngineAnswers503WithRetryAfter) {
    Server s;
    ASSERT_EQ(s.client->Post("/engine/control/begin_switch")->status, 200);
    const auto res = s.post("/engine/generate", {{"tokens", {1}}});
    ASSERT_EQ(res->status, 503);
    EXPECT_TRUE(res->has_header("Retry-After"));
    EXPECT_GE(std::stoi(res->get_header_value("Retry-After")), 1);
    EXPECT_EQ(json::parse(res->body)["error"], "wait");
    ASSERT_EQ(s.post("/engine/control/complete_switch", {{"version", 1}})->status, 200);
    EXPECT_EQ(json::parse(s.client->Get("/engine/state")->body)["current_version"], 1);
}

TEST(Http, AgentGenerateRecordsTrajectory) {
    Server s;
    httplib::Headers h{{"X-Session-Id", "agent-1"}};
    const auto res = s.client->Post("/v1/generate", h,
                                    json{{"tokens", {7, 8}}, {"params", {{"max_new_tokens", 5}}}}.dump(),
                                    "application/json");
    ASSERT_EQ(res->status, 200) << res->body;
    const auto j = json::parse(res->body);
    EXPECT_EQ(j["session_id"], "agent-1");
    EXPECT_EQ(j["tokens"].get<std::vector<TokenId>>(), oracle::generate({7, 8}, 5, 0, 0));

    const auto traj = json::parse(s.client->Get("/traj/session/agent-1")->body);
    ASSERT_EQ(traj["trajectories"].size(), 1u);
    EXPECT_EQ(traj["trajectories"][0]["tokens"].size(), 7u);
    const auto stats = json::parse(s.client->Get("/traj/stats/agent-1")->body);
    EXPECT_EQ(stats["stored_tokens"], 7);

    const auto drained = json::parse(s.post("/traj/drain", {{"min_samples", 1}})->body);
    EXPECT_EQ(drained["ready"], true);
}

TEST(Http, StatusMapping) {
    Server s;
    EXPECT_EQ(s.post("/v1/generate", {{"session_id", "x"}, {"tokens", json::array()}})->status, 400);
    EXPECT_EQ(s.client->Post("/v1/generate", "{not json", "application/json")->status, 400);
    EXPECT_EQ(s.post("/engine/generate", {{"tokens", {1}}, {"params", {{"max_new_tokens", 0}}}})->status,
              400);
    EXPECT_EQ(s.client->Get("/traj/session/nobody")->status, 404);
    EXPECT_EQ(s.post("/ctl/update", {{"version", 0}})->status, 409);
    EXPECT_EQ(s.post("/sched/register", {{"id", "a"}, {"tags", {"rollout"}}})->status, 201);
    EXPECT_EQ(s.post("/sched/dispatch", {{"kind", "train"}, {"count", 1}})->status, 422);
    EXPECT_EQ(s.post("/sched/dispatch", {{"kind", "bogus"}})->status, 400);
    EXPECT_EQ(s.post("/sched/fail", {{"id", "zz"}})->status, 404);
    EXPECT_EQ(s.client->Get("/data/next?capacity=x")->status, 400);
    EXPECT_EQ(s.post("/data/complete", {{"task_id", 1}})->status, 409);
}

TEST(Http, DataRoutes) {
    Server s;
    const auto next = json::parse(s.client->Get("/data/next?capacity=3")->body);
    ASSERT_EQ(next["tasks"].size(), 1u);
    EXPECT_EQ(next["tasks"][0]["prompt_tokens"].get<std::vector<TokenId>>(), (std::vector<TokenId>{5, 6}));
    EXPECT_EQ(s.post("/data/requeue", {{"task_id", 1}})->status, 200);
    EXPECT_EQ(json::parse(s.client->Get("/data/next")->body)["tasks"].size(), 1u);
    EXPECT_EQ(s.post("/data/complete", {{"task_id", 1}})->status, 200);
}

TEST(Http, ControlRoutes) {
    Server s;
    const auto up = s.post("/ctl/update", {{"version", 1}});
    ASSERT_EQ(up->status, 200) << up->body;
    EXPECT_EQ(json::parse(up->body)["to_version"], 1);
    const auto state = json::parse(s.client->Get("/ctl/state")->body);
    EXPECT_EQ(state["version"], 1);
    const auto ev = s.client->Post("/ctl/event", R"({"kind":"threshold_reached"})", "application/json");
    ASSERT_EQ(ev->status, 200) << ev->body;
    EXPECT_EQ(json::parse(ev->body)["commands"][0]["kind"], "pause_rollouts");
}

TEST(Http, UnwiredServiceIs404) {
    Services none;
    HttpServer http(none);
    const int port = http.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);
    EXPECT_EQ(c.Get("/engine/state")->status, 404);
    EXPECT_EQ(c.Get("/sched/pool")->status, 404);
}

TEST(Http, PortConflict) {
    Services none;
    HttpServer first(none);
    const int port = first.start("127.0.0.1", 0);
    HttpServer second(none);
    EXPECT_THROW(second.start("127.0.0.1", port), PortConflict);
    first.stop();
    EXPECT_FALSE(first.running());
}

}  // namespace
}  // namespace tagflow
