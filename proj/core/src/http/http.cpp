// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/http.hpp"

#include "tagflow/dataloader.hpp"
#include "tagflow/engine.hpp"
#include "tagflow/error.hpp"
#include "tagflow/rollout_manager.hpp"
#include "tagflow/scheduler.hpp"
#include "tagflow/trajectory_manager.hpp"

#include <sys/socket.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace tagflow {

using json = nlohmann::ordered_json;

namespace {

class HttpError : public Error {
public:
    HttpError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

void reply(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, std::string_view code, const std::string& msg) {
    reply(res, json{{"error", code}, {"message", msg}}, status);
}

void retry_after(httplib::Response& res, std::chrono::milliseconds ms) {
    const auto secs = std::max<long long>(1, (ms.count() + 999) / 1000);
    res.set_header("Retry-After", std::to_string(secs));
}

/// Runs a handler and maps library errors onto status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const WaitSignal& e) {
        retry_after(res, e.retry_after());
        reply(res,
              json{{"error", "wait"},
                   {"switch_id", e.switch_id()},
                   {"retry_after_ms", e.retry_after().count()}},
              503);
    } catch (const ProxyRetryable& e) {
        retry_after(res, std::chrono::milliseconds(1000));
        fail(res, 503, "retryable", e.what());
    } catch (const HttpError& e) {
        fail(res, e.status(), "bad_request", e.what());
    } catch (const InvalidParams& e) {
        fail(res, 400, "invalid_params", e.what());
    } catch (const BudgetExhausted& e) {
        fail(res, 400, "budget_exhausted", e.what());
    } catch (const ParseError& e) {
        fail(res, 400, "parse_error", e.what());
    } catch (const json::exception& e) {
        fail(res, 400, "malformed", e.what());
    } catch (const UnknownSession& e) {
        fail(res, 404, "unknown_session", e.what());
    } catch (const UnknownResource& e) {
        fail(res, 404, "unknown_resource", e.what());
    } catch (const StaleVersion& e) {
        fail(res, 409, "stale_version", e.what());
    } catch (const VersionRegression& e) {
        fail(res, 409, "version_regression", e.what());
    } catch (const IllegalPhase& e) {
        fail(res, 409, "illegal_phase", e.what());
    } catch (const IllegalState& e) {
        fail(res, 409, "illegal_state", e.what());
    } catch (const InsufficientCapability& e) {
        fail(res, 422, "insufficient_capability", e.what());
    } catch (const std::exception& e) {
        fail(res, 500, "internal", e.what());
    }
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body);
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
}

std::vector<TokenId> tokens_of(const json& j, const char* key) {
    if (!j.contains(key)) throw HttpError(400, std::string("missing field '") + key + "'");
    return j.at(key).get<std::vector<TokenId>>();
}

GenParams params_of(const json& j) {
    GenParams p;
    if (!j.contains("params")) return p;
    const auto& q = j["params"];
    if (q.contains("max_new_tokens")) p.max_new_tokens = q["max_new_tokens"].get<std::uint32_t>();
    if (q.contains("seed")) p.seed = q["seed"].get<std::uint64_t>();
    if (q.contains("stop_token") && !q["stop_token"].is_null())
        p.stop_token = q["stop_token"].get<TokenId>();
    return p;
}

json versions_json(const std::vector<ModelVersion>& vs) {
    json a = json::array();
    for (auto v : vs) a.push_back(v.value);
    return a;
}

json generation_json(const GenerationResult& r) {
    return json{{"request_id", r.request_id},
                {"input_tokens", r.input_tokens},
                {"output_tokens", r.output_tokens},
                {"versions", versions_json(r.version_per_token)},
                {"finished", r.finished}};
}

json engine_state_json(const EngineState& s) {
    return json{{"phase", s.phase == EnginePhase::serving ? "serving" : "switching"},
                {"current_version", s.current_version.value},
                {"switch_id", s.switch_id}};
}

json trajectory_json(const Trajectory& t) { return json::parse(to_record(t)); }

json trajectories_json(const std::vector<Trajectory>& ts) {
    json a = json::array();
    for (const auto& t : ts) a.push_back(trajectory_json(t));
    return a;
}

json resource_json(const ResourceDescriptor& r) {
    json tags = json::array();
    for (auto t : r.capabilities) tags.push_back(std::string(to_string(t)));
    json j{{"id", r.id},
           {"tags", tags},
           {"active", r.active ? json(std::string(to_string(*r.active))) : json(nullptr)},
           {"peak_flops", r.peak_flops},
           {"hbm_bandwidth", r.hbm_bandwidth}};
    return j;
}

std::set<CapabilityTag> tags_of(const json& j) {
    std::set<CapabilityTag> out;
    for (const auto& t : j.at("tags")) {
        try {
            out.insert(parse_capability(t.get<std::string>()));
        } catch (const Error& e) {
            throw HttpError(400, e.what());
        }
    }
    return out;
}

json command_json(const Command& c) {
    return json{{"kind", std::string(to_string(c.kind))},
                {"all", c.all},
                {"resources", c.resources},
                {"tasks", c.tasks},
                {"version", c.version ? json(c.version->value) : json(nullptr)}};
}

json task_json(const TaskRecord& t) {
    return json{{"task_id", t.task_id},
                {"prompt_tokens", t.prompt_tokens},
                {"meta", json::parse(t.meta)}};
}

template <typename T>
T& need(T* service, const char* name) {
    if (!service) throw HttpError(404, std::string(name) + " service is not available");
    return *service;
}

}  // namespace

struct HttpServer::Impl {
    Services s;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    /// Scheduler mutations run under the controller lock when one exists.
    template <typename Fn>
    decltype(auto) serialized(Fn&& fn) {
        if (s.rollout) return s.rollout->exclusive(std::forward<Fn>(fn));
        return std::forward<Fn>(fn)();
    }

    void routes();
};

void HttpServer::Impl::routes() {
    auto& svr = server;

    // Engine ----------------------------------------------------------------
    svr.Post("/engine/generate", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            auto& e = need(s.engine, "engine");
            reply(res, generation_json(e.generate(tokens_of(j, "tokens"), params_of(j),
                                                  j.value("request_id", RequestId{0}))));
        });
    });
    svr.Post("/engine/resume", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            auto& e = need(s.engine, "engine");
            reply(res, generation_json(e.resume_from(tokens_of(j, "prefix"),
                                                     tokens_of(j, "tokens"), params_of(j),
                                                     j.value("request_id", RequestId{0}))));
        });
    });
    svr.Post("/engine/control/interrupt",
             [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                     const auto j = body_of(req);
                     auto& e = need(s.engine, "engine");
                     std::function<bool(RequestId)> filter;
                     if (j.contains("request_ids")) {
                         auto ids = j["request_ids"].get<std::set<RequestId>>();
                         filter = [ids = std::move(ids)](RequestId id) { return ids.count(id) > 0; };
                     }
                     json partials = json::array();
                     for (const auto& p : e.interrupt(filter))
                         partials.push_back({{"request_id", p.request_id},
                                             {"input", p.input},
                                             {"prefix", p.prefix},
                                             {"produced", p.produced},
                                             {"versions", versions_json(p.produced_versions)}});
                     reply(res, json{{"partials", partials}});
                 });
             });
    svr.Post("/engine/control/begin_switch",
             [this](const httplib::Request&, httplib::Response& res) {
                 guarded(res, [&] { reply(res, engine_state_json(need(s.engine, "engine").begin_switch())); });
             });
    svr.Post("/engine/control/complete_switch",
             [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                     const auto j = body_of(req);
                     const ModelVersion v{j.at("version").get<std::uint64_t>()};
                     reply(res, engine_state_json(need(s.engine, "engine").complete_switch(v)));
                 });
             });
    svr.Get("/engine/state", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { reply(res, engine_state_json(need(s.engine, "engine").state())); });
    });

    // Agent-facing ----------------------------------------------------------
    svr.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            auto& t = need(s.trajectories, "trajectory");
            std::string session = j.value("session_id", std::string());
            if (session.empty() && req.has_header("X-Session-Id"))
                session = req.get_header_value("X-Session-Id");
            const auto r = t.proxy_generate(session, tokens_of(j, "tokens"), params_of(j));
            reply(res, json{{"session_id", r.session_id},
                            {"request_id", r.request_id},
                            {"tokens", r.tokens},
                            {"versions", versions_json(r.versions)}});
        });
    });

    // Trainer-facing --------------------------------------------------------
    svr.Post("/traj/drain", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            const auto min = j.value("min_samples", std::size_t{1});
            if (min == 0) throw InvalidParams("min_samples must be >= 1");
            auto batch = need(s.trajectories, "trajectory").drain_batch(min);
            reply(res, json{{"ready", batch.has_value()},
                            {"trajectories", batch ? trajectories_json(*batch) : json::array()}});
        });
    });
    svr.Get(R"(/traj/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            ExtractOptions o;
            o.include_partials = req.get_param_value("include_partials") == "1";
            if (req.has_param("min_version"))
                o.min_version = ModelVersion{std::stoull(req.get_param_value("min_version"))};
            const auto ts = need(s.trajectories, "trajectory").extract_trajectories(req.matches[1], o);
            reply(res, json{{"session_id", req.matches[1]}, {"trajectories", trajectories_json(ts)}});
        });
    });
    svr.Get(R"(/traj/stats/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto st = need(s.trajectories, "trajectory").storage_stats(req.matches[1]);
            reply(res, json{{"stored_tokens", st.stored_tokens},
                            {"naive_tokens", st.naive_tokens},
                            {"dedup_ratio", st.dedup_ratio}});
        });
    });

    // Control ---------------------------------------------------------------
    svr.Post("/ctl/event", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (req.body.empty()) throw HttpError(400, "missing event body");
            ControlEvent e;
            try {
                e = event_from_json(req.body);
            } catch (const json::exception&) {
                throw;
            } catch (const Error& err) {
                throw HttpError(400, err.what());
            }
            json cmds = json::array();
            for (const auto& c : need(s.rollout, "rollout").on_event(e)) cmds.push_back(command_json(c));
            reply(res, json{{"commands", cmds}});
        });
    });
    svr.Post("/ctl/update", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            const auto r = need(s.rollout, "rollout")
                               .coordinate_update(ModelVersion{j.at("version").get<std::uint64_t>()});
            reply(res, json{{"from_version", r.from_version.value},
                            {"to_version", r.to_version.value},
                            {"paused", r.paused},
                            {"resumed", r.resumed},
                            {"switch_duration", r.switch_duration}});
        });
    });
    svr.Get("/ctl/state", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            reply(res, json::parse(state_to_json(need(s.rollout, "rollout").state())));
        });
    });

    // Resource pool ---------------------------------------------------------
    svr.Post("/sched/register", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            auto& sch = need(s.scheduler, "scheduler");
            ResourceDescriptor d;
            d.id = j.at("id").get<std::string>();
            d.capabilities = tags_of(j);
            d.peak_flops = j.value("peak_flops", 1.0);
            d.hbm_bandwidth = j.value("hbm_bandwidth", 1.0);
            serialized([&] { sch.register_resource(d); });
            reply(res, resource_json(*sch.resource(d.id)), 201);
        });
    });
    svr.Post("/sched/retag", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            auto& sch = need(s.scheduler, "scheduler");
            const auto id = j.at("id").get<std::string>();
            const auto before = sch.transitions().size();
            serialized([&] { sch.retag(id, tags_of(j)); });
            reply(res, json{{"resource", resource_json(*sch.resource(id))},
                            {"transitioned", sch.transitions().size() > before}});
        });
    });
    svr.Get("/sched/pool", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json a = json::array();
            for (const auto& r : need(s.scheduler, "scheduler").pool()) a.push_back(resource_json(r));
            reply(res, json{{"resources", a}});
        });
    });
    svr.Post("/sched/dispatch", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            auto& sch = need(s.scheduler, "scheduler");
            CapabilityTag kind;
            try {
                kind = parse_capability(j.at("kind").get<std::string>());
            } catch (const Error& e) {
                throw HttpError(400, e.what());
            }
            const auto count = j.value("count", std::size_t{1});
            const auto a = serialized([&] { return sch.dispatch(kind, count); });
            reply(res, json{{"kind", std::string(to_string(a.kind))},
                            {"resources", a.resources},
                            {"preempted", a.preempted}});
        });
    });
    svr.Post("/sched/fail", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = body_of(req);
            const auto id = j.at("id").get<std::string>();
            auto& sch = need(s.scheduler, "scheduler");
            const auto r = serialized([&] {
                return s.controller ? s.controller->on_failure(id) : sch.handle_failure(id);
            });
            reply(res, json{{"resource", r.resource},
                            {"was_active", r.was_active ? json(std::string(to_string(*r.was_active)))
                                                        : json(nullptr)},
                            {"tasks", r.tasks}});
        });
    });

    // Data ------------------------------------------------------------------
    svr.Get("/data/next", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::size_t capacity = 1;
            if (req.has_param("capacity")) {
                const auto v = req.get_param_value("capacity");
                if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
                    throw InvalidParams("capacity must be a non-negative integer");
                capacity = std::stoull(v);
            }
            json a = json::array();
            for (const auto& t : need(s.data, "dataloader").next(capacity)) a.push_back(task_json(t));
            reply(res, json{{"tasks", a}});
        });
    });
    svr.Post("/data/complete", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = body_of(req).at("task_id").get<std::uint64_t>();
            need(s.data, "dataloader").complete(id);
            reply(res, json{{"task_id", id}, {"state", "complete"}});
        });
    });
    svr.Post("/data/requeue", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = body_of(req).at("task_id").get<std::uint64_t>();
            need(s.data, "dataloader").requeue(id);
            reply(res, json{{"task_id", id}, {"state", "requeued"}});
        });
    });
}

HttpServer::HttpServer(Services services) : impl_(std::make_unique<Impl>()) {
    impl_->s = services;
    // Exclusive binding so a second stack on the same port is refused.
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    if (impl_->thread.joinable()) throw IllegalState("server already started");
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
        if (impl_->port < 0) throw PortConflict(host, 0);
    } else {
        if (!impl_->server.bind_to_port(host, port)) throw PortConflict(host, port);
        impl_->port = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void HttpServer::stop() {
    if (!impl_ || !impl_->thread.joinable()) return;
    impl_->server.stop();
    impl_->thread.join();
}

int HttpServer::port() const { return impl_->port; }

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace tagflow
