// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/config.hpp"

#include "tagflow/error.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tagflow {

using json = nlohmann::json;

namespace {

class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigInvalid(path_, "must be an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : obj_.items())
            if (!ok.count(k)) throw ConfigInvalid(join(k), "unknown field");
    }

    template <typename T>
    T get(const char* key, T fallback) const {
        if (!obj_.contains(key)) return fallback;
        try {
            return obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigInvalid(join(key), "has the wrong type");
        }
    }

    std::string join(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json& obj_;
    std::string path_;
};

std::chrono::milliseconds ms(std::int64_t v, const std::string& field) {
    if (v < 0) throw ConfigInvalid(field, "must be >= 0");
    return std::chrono::milliseconds(v);
}

}  // namespace

StackConfig parse_config(std::string_view text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + upto, '\n');
        throw ParseError(static_cast<std::size_t>(line), e.what());
    }
    Reader top(j, "");
    top.allow({"schema_version", "seed", "cluster", "engine", "thresholds", "dataloader",
               "server", "agents", "trainer", "rollout", "event_log"});

    StackConfig c;
    if (!j.contains("schema_version")) throw ConfigInvalid("schema_version", "is required");
    c.schema_version = top.get<int>("schema_version", 0);
    if (c.schema_version != kSchemaVersion)
        throw ConfigInvalid("schema_version",
                            "unsupported version " + std::to_string(c.schema_version));
    c.seed = top.get<std::uint64_t>("seed", 0);

    if (!j.contains("cluster")) throw ConfigInvalid("cluster", "is required");
    if (!j["cluster"].is_array() || j["cluster"].empty())
        throw ConfigInvalid("cluster", "must be a non-empty array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < j["cluster"].size(); ++i) {
        const std::string path = "cluster[" + std::to_string(i) + "]";
        Reader r(j["cluster"][i], path);
        r.allow({"id", "tags", "peak_flops", "hbm_bandwidth"});
        ResourceDescriptor d;
        d.id = r.get<std::string>("id", "");
        if (d.id.empty()) throw ConfigInvalid(path + ".id", "is required");
        if (!ids.insert(d.id).second) throw ConfigInvalid(path + ".id", "duplicate id " + d.id);
        const auto tags = r.get<std::vector<std::string>>("tags", {});
        if (tags.empty()) throw ConfigInvalid(path + ".tags", "must be a non-empty array");
        for (const auto& t : tags) {
            try {
                d.capabilities.insert(parse_capability(t));
            } catch (const Error& e) {
                throw ConfigInvalid(path + ".tags", e.what());
            }
        }
        d.peak_flops = r.get<double>("peak_flops", 1.0);
        d.hbm_bandwidth = r.get<double>("hbm_bandwidth", 1.0);
        if (!(d.peak_flops > 0.0)) throw ConfigInvalid(path + ".peak_flops", "must be > 0");
        if (!(d.hbm_bandwidth > 0.0)) throw ConfigInvalid(path + ".hbm_bandwidth", "must be > 0");
        c.cluster.push_back(std::move(d));
    }

    auto section = [&](const char* name) -> const json* {
        return j.contains(name) ? &j[name] : nullptr;
    };

    if (const auto* s = section("engine")) {
        Reader r(*s, "engine");
        r.allow({"vocab_size", "retry_after_ms"});
        c.engine.vocab_size = r.get<std::uint32_t>("vocab_size", c.engine.vocab_size);
        if (c.engine.vocab_size < 2) throw ConfigInvalid("engine.vocab_size", "must be >= 2");
        c.engine.retry_after =
            ms(r.get<std::int64_t>("retry_after_ms", c.engine.retry_after.count()),
               "engine.retry_after_ms");
    }
    if (const auto* s = section("thresholds")) {
        Reader r(*s, "thresholds");
        r.allow({"batch_size", "timeout_ms"});
        c.thresholds.batch_size = r.get<std::size_t>("batch_size", c.thresholds.batch_size);
        if (c.thresholds.batch_size == 0)
            throw ConfigInvalid("thresholds.batch_size", "must be >= 1");
        c.thresholds.timeout = ms(r.get<std::int64_t>("timeout_ms", 0), "thresholds.timeout_ms");
    }
    if (const auto* s = section("dataloader")) {
        Reader r(*s, "dataloader");
        r.allow({"source"});
        c.dataloader.source = r.get<std::string>("source", "");
    }
    if (const auto* s = section("server")) {
        Reader r(*s, "server");
        r.allow({"enabled", "host", "port"});
        c.server.enabled = r.get<bool>("enabled", c.server.enabled);
        c.server.host = r.get<std::string>("host", c.server.host);
        c.server.port = r.get<int>("port", c.server.port);
        if (c.server.port < 0 || c.server.port > 65535)
            throw ConfigInvalid("server.port", "must be in [0, 65535]");
    }
    if (const auto* s = section("agents")) {
        Reader r(*s, "agents");
        r.allow({"workers", "turns", "max_new_tokens"});
        c.agents.workers = r.get<std::size_t>("workers", c.agents.workers);
        c.agents.turns = r.get<std::uint32_t>("turns", c.agents.turns);
        c.agents.max_new_tokens = r.get<std::uint32_t>("max_new_tokens", c.agents.max_new_tokens);
        if (c.agents.turns == 0) throw ConfigInvalid("agents.turns", "must be >= 1");
        if (c.agents.max_new_tokens == 0)
            throw ConfigInvalid("agents.max_new_tokens", "must be >= 1");
    }
    if (const auto* s = section("trainer")) {
        Reader r(*s, "trainer");
        r.allow({"train_duration_ms"});
        c.trainer.train_duration = ms(r.get<std::int64_t>("train_duration_ms", 5),
                                      "trainer.train_duration_ms");
    }
    if (const auto* s = section("rollout")) {
        Reader r(*s, "rollout");
        r.allow({"resume_capacity", "expected_switch_ms", "pending_timeout_ms"});
        c.rollout.resume_capacity = r.get<std::size_t>("resume_capacity", 0);
        c.rollout.expected_switch = ms(r.get<std::int64_t>("expected_switch_ms", 200),
                                       "rollout.expected_switch_ms");
        c.rollout.pending_timeout = ms(r.get<std::int64_t>("pending_timeout_ms", 0),
                                       "rollout.pending_timeout_ms");
    }
    c.event_log = top.get<std::string>("event_log", "");

    namespace fs = std::filesystem;
    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (fs::path(base_dir) / p).string();
    };
    resolve(c.dataloader.source);
    resolve(c.event_log);
    return c;
}

StackConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(buf.str(), dir.empty() ? "." : dir.string());
}

std::optional<std::string> resolve_option(const std::optional<std::string>& flag,
                                          const char* env_name) {
    if (flag) return flag;
    if (const char* v = std::getenv(env_name); v && *v) return std::string(v);
    return std::nullopt;
}

}  // namespace tagflow
