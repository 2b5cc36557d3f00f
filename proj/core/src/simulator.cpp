// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/simulator.hpp"

#include "tagflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tagflow {

using json = nlohmann::ordered_json;

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::naive: return "naive";
        case Strategy::micro_batch: return "micro_batch";
        case Strategy::off_policy_fill: return "off_policy_fill";
        case Strategy::spatiotemporal: return "spatiotemporal";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : all_strategies())
        if (to_string(s) == name) return s;
    throw InvalidParams("unknown strategy '" + std::string(name) + "'");
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> all{Strategy::naive, Strategy::micro_batch,
                                           Strategy::off_policy_fill, Strategy::spatiotemporal};
    return all;
}

std::string_view to_string(TraceKind kind) {
    switch (kind) {
        case TraceKind::rollout_start: return "rollout_start";
        case TraceKind::rollout_resume: return "rollout_resume";
        case TraceKind::rollout_preempt: return "rollout_preempt";
        case TraceKind::rollout_stop: return "rollout_stop";
        case TraceKind::train_start: return "train_start";
        case TraceKind::train_stop: return "train_stop";
        case TraceKind::train_abort: return "train_abort";
        case TraceKind::transition_start: return "transition_start";
        case TraceKind::transition_stop: return "transition_stop";
        case TraceKind::resource_failed: return "resource_failed";
    }
    return "unknown";
}

void Workload::validate() const {
    if (num_steps == 0) throw InvalidParams("workload.num_steps must be >= 1");
    if (batch_size == 0) throw InvalidParams("workload.batch_size must be >= 1");
    if (!(rollout_mean > 0.0) || !std::isfinite(rollout_mean))
        throw InvalidParams("workload.rollout_mean must be > 0");
    if (!(rollout_jitter >= 0.0 && rollout_jitter < 1.0))
        throw InvalidParams("workload.rollout_jitter must be in [0, 1)");
    if (!(train_duration >= 0.0) || !std::isfinite(train_duration))
        throw InvalidParams("workload.train_duration must be >= 0");
    if (micro_batches == 0 || batch_size % micro_batches != 0)
        throw InvalidParams("workload.micro_batches must divide batch_size");
    if (!(transition_cost >= 0.0)) throw InvalidParams("workload.transition_cost must be >= 0");
}

std::vector<double> draw_durations(const Workload& w, std::uint64_t seed) {
    const std::size_t n = std::size_t{w.num_steps} * w.batch_size;
    std::vector<double> out(n, w.rollout_mean);
    if (w.rollout_jitter == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(w.rollout_mean * (1.0 - w.rollout_jitter),
                                                w.rollout_mean * (1.0 + w.rollout_jitter));
    for (auto& d : out) d = dist(rng);
    return out;
}

namespace {

struct StrategyParams {
    std::uint32_t lag = 0;    ///< batch b may start once b <= version + lag
    std::uint32_t micro = 1;  ///< train units per batch
    bool multiplexed = false;
};

StrategyParams params_for(Strategy s, const Workload& w) {
    switch (s) {
        case Strategy::naive: return {0, 1, false};
        case Strategy::micro_batch: return {0, w.micro_batches, false};
        case Strategy::off_policy_fill: return {w.staleness_limit, 1, false};
        case Strategy::spatiotemporal: return {1, 1, true};
    }
    return {};
}

enum class NodeState { idle, rollout, train, transition, down };

struct Node {
    std::string id;
    bool rolls_out = false;
    bool trains = false;
    NodeState state = NodeState::idle;
    std::size_t sample = 0;
    double seg_start = 0.0;
    std::uint64_t epoch = 0;
    std::optional<CapabilityTag> active;  ///< multiplexed runs only
};

struct Sample {
    std::uint32_t batch = 0;
    std::uint32_t micro = 0;
    double remaining = 0.0;
};

enum class EvType { sample_done, train_done, train_begin, transition_done, failure };

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0;
    EvType type = EvType::sample_done;
    std::size_t node = 0;
    std::uint64_t epoch = 0;

    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

class Simulation {
public:
    Simulation(const std::vector<ResourceDescriptor>& cluster, const Workload& w, Strategy s,
               std::uint64_t seed, const std::optional<FailureInjection>& failure)
        : w_(w), strategy_(s), seed_(seed), p_(params_for(s, w)), failure_(failure) {
        w_.validate();
        if (cluster.empty()) throw InvalidParams("cluster is empty");
        std::size_t trainers = 0, rollers = 0;
        for (const auto& r : cluster) {
            Node n;
            n.id = r.id;
            if (p_.multiplexed) {
                n.rolls_out = r.has(CapabilityTag::rollout);
                n.trains = r.has(CapabilityTag::train);
            } else {
                n.trains = r.has(CapabilityTag::train);
                n.rolls_out = !n.trains && r.has(CapabilityTag::rollout);
            }
            trainers += n.trains;
            rollers += n.rolls_out;
            nodes_.push_back(std::move(n));
        }
        if (trainers == 0 || rollers == 0) {
            const char* need = p_.multiplexed
                                   ? "at least one train-capable and one rollout-capable resource"
                                   : "at least one train-capable and one rollout-only resource";
            throw IncompatibleTagging("strategy " + std::string(to_string(s)) + " requires " +
                                      need);
        }

        durations_ = draw_durations(w_, seed_);
        samples_.resize(durations_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const std::uint32_t pos = static_cast<std::uint32_t>(i % w_.batch_size);
            samples_[i].batch = static_cast<std::uint32_t>(i / w_.batch_size);
            samples_[i].micro = pos * p_.micro / w_.batch_size;
            samples_[i].remaining = durations_[i];
        }
        outstanding_.assign(std::size_t{w_.num_steps} * p_.micro, w_.batch_size / p_.micro);

        if (p_.multiplexed) {
            for (const auto& r : cluster) {
                auto d = r;
                d.active.reset();
                scheduler_.register_resource(std::move(d));
            }
            scheduler_.set_clock([this] { return t_; });
            controller_.emplace(scheduler_);
        }
        if (failure_) {
            auto it = std::find_if(nodes_.begin(), nodes_.end(),
                                   [&](const Node& n) { return n.id == failure_->resource; });
            if (it == nodes_.end())
                throw InvalidParams("failure injection names unknown resource '" +
                                    failure_->resource + "'");
            push(failure_->at, EvType::failure, static_cast<std::size_t>(it - nodes_.begin()), 0);
        }
    }

    SimResult run() {
        if (controller_) {
            controller_->start();
            sync_tags();
        }
        step();
        while (next_unit_ < outstanding_.size()) {
            if (queue_.empty()) throw Error("simulation stalled at t=" + std::to_string(t_));
            const Event ev = queue_.top();
            queue_.pop();
            t_ = ev.t;
            switch (ev.type) {
                case EvType::sample_done: on_sample_done(ev); break;
                case EvType::train_done: on_train_done(ev); break;
                case EvType::train_begin: on_train_begin(ev); break;
                case EvType::transition_done: on_transition_done(ev); break;
                case EvType::failure: on_failure(ev); break;
            }
            step();
        }

        SimResult r;
        for (const auto& n : nodes_) r.roles.push_back({n.id, n.rolls_out, n.trains});
        r.metrics = metrics_from_trace(trace_, r.roles, w_, strategy_, seed_);
        r.trace = std::move(trace_);
        if (controller_) r.phases = controller_->phase_trace();
        r.durations = std::move(durations_);
        return r;
    }

private:
    void push(double t, EvType type, std::size_t node, std::uint64_t epoch) {
        queue_.push(Event{t, seq_++, type, node, epoch});
    }

    void emit(TraceKind kind, const Node& n, std::int64_t sample = -1, std::int64_t batch = -1,
              std::int32_t micro = -1) {
        trace_.push_back(TraceEvent{t_, n.id, kind, sample, batch, micro, version_});
    }

    void emit_sample(TraceKind kind, const Node& n, std::size_t s) {
        emit(kind, n, static_cast<std::int64_t>(s), samples_[s].batch,
             static_cast<std::int32_t>(samples_[s].micro));
    }

    void sync_tags() {
        for (auto& n : nodes_) {
            if (n.state == NodeState::down) continue;
            auto d = scheduler_.resource(n.id);
            n.active = d ? d->active : std::nullopt;
            // Anything no longer tagged for rollout gives up its sample.
            if (n.state == NodeState::rollout && n.active != CapabilityTag::rollout) preempt(n);
        }
    }

    void preempt(Node& n) {
        auto& s = samples_[n.sample];
        s.remaining = std::max(0.0, s.remaining - (t_ - n.seg_start));
        emit_sample(TraceKind::rollout_preempt, n, n.sample);
        paused_.push_back(n.sample);
        n.state = NodeState::idle;
        ++n.epoch;
    }

    bool unit_ready() const {
        return !training_ && next_unit_ < outstanding_.size() && outstanding_[next_unit_] == 0;
    }

    void step() {
        if (unit_ready()) start_training();
        dispatch_rollouts();
    }

    void start_training() {
        train_nodes_.clear();
        if (!controller_) {
            for (std::size_t i = 0; i < nodes_.size(); ++i)
                if (nodes_[i].trains && nodes_[i].state != NodeState::down) train_nodes_.push_back(i);
            if (train_nodes_.empty()) throw Error("no train-capable resource left");
            begin_train();
            return;
        }
        if (!holding_train_) {
            controller_->on_threshold_reached();
            sync_tags();
            holding_train_ = true;
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].state != NodeState::down && nodes_[i].active == CapabilityTag::train)
                train_nodes_.push_back(i);
        training_ = true;
        if (w_.transition_cost > 0.0 && !continuing_) {
            for (auto i : train_nodes_) {
                nodes_[i].state = NodeState::transition;
                ++nodes_[i].epoch;
                emit(TraceKind::transition_start, nodes_[i]);
            }
            push(t_ + w_.transition_cost, EvType::train_begin, 0, ++train_epoch_);
            return;
        }
        begin_train();
    }

    void begin_train() {
        const auto unit = next_unit_;
        const auto batch = static_cast<std::int64_t>(unit / p_.micro);
        const auto micro = static_cast<std::int32_t>(unit % p_.micro);
        for (auto i : train_nodes_) {
            nodes_[i].state = NodeState::train;
            emit(TraceKind::train_start, nodes_[i], -1, batch, micro);
        }
        training_ = true;
        push(t_ + w_.train_duration / p_.micro, EvType::train_done, 0, ++train_epoch_);
    }

    void on_train_begin(const Event& ev) {
        if (ev.epoch != train_epoch_) return;
        for (auto i : train_nodes_) emit(TraceKind::transition_stop, nodes_[i]);
        begin_train();
    }

    void on_train_done(const Event& ev) {
        if (ev.epoch != train_epoch_) return;
        const auto unit = next_unit_;
        const auto batch = static_cast<std::int64_t>(unit / p_.micro);
        const auto micro = static_cast<std::int32_t>(unit % p_.micro);
        if (static_cast<std::uint32_t>(micro) + 1 == p_.micro) ++version_;
        for (auto i : train_nodes_) {
            nodes_[i].state = NodeState::idle;
            emit(TraceKind::train_stop, nodes_[i], -1, batch, micro);
        }
        ++next_unit_;
        training_ = false;
        continuing_ = false;
        if (!controller_ || next_unit_ == outstanding_.size()) return;

        if (unit_ready()) {
            // The next batch is already complete: keep the train assignment.
            continuing_ = true;
            return;
        }
        controller_->on_train_complete();
        holding_train_ = false;
        sync_tags();
        if (w_.transition_cost > 0.0) {
            for (auto i : train_nodes_) {
                auto& n = nodes_[i];
                if (n.active != CapabilityTag::rollout) continue;
                n.state = NodeState::transition;
                ++n.epoch;
                emit(TraceKind::transition_start, n);
                push(t_ + w_.transition_cost, EvType::transition_done, i, n.epoch);
            }
        }
    }

    void on_transition_done(const Event& ev) {
        auto& n = nodes_[ev.node];
        if (n.epoch != ev.epoch || n.state != NodeState::transition) return;
        emit(TraceKind::transition_stop, n);
        n.state = NodeState::idle;
    }

    void on_sample_done(const Event& ev) {
        auto& n = nodes_[ev.node];
        if (n.epoch != ev.epoch || n.state != NodeState::rollout) return;
        auto& s = samples_[n.sample];
        s.remaining = 0.0;
        emit_sample(TraceKind::rollout_stop, n, n.sample);
        n.state = NodeState::idle;
        --outstanding_[std::size_t{s.batch} * p_.micro + s.micro];
    }

    void on_failure(const Event& ev) {
        auto& n = nodes_[ev.node];
        if (n.state == NodeState::down) return;
        const bool was_training =
            training_ && std::find(train_nodes_.begin(), train_nodes_.end(), ev.node) !=
                             train_nodes_.end();
        if (n.state == NodeState::rollout) preempt(n);
        if (n.state == NodeState::transition) emit(TraceKind::transition_stop, n);
        if (was_training) {
            for (auto i : train_nodes_)
                if (nodes_[i].state == NodeState::train) {
                    emit(TraceKind::train_abort, nodes_[i]);
                    nodes_[i].state = NodeState::idle;
                }
        }
        emit(TraceKind::resource_failed, n);
        n.state = NodeState::down;
        ++n.epoch;

        if (controller_) {
            controller_->on_failure(n.id);
            sync_tags();
        }
        if (!was_training) return;
        ++train_epoch_;  // drops a pending train_begin or train_done
        training_ = false;
        continuing_ = true;  // retries skip the transition cost
        start_training();
    }

    bool may_roll_out(const Node& n) const {
        if (n.state != NodeState::idle) return false;
        return controller_ ? n.active == CapabilityTag::rollout : n.rolls_out;
    }

    void dispatch_rollouts() {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            auto& n = nodes_[i];
            if (!may_roll_out(n)) continue;
            std::size_t s = 0;
            if (!paused_.empty()) {
                s = paused_.front();
                paused_.pop_front();
                n.sample = s;
                emit_sample(TraceKind::rollout_resume, n, s);
            } else if (next_sample_ < samples_.size() &&
                       samples_[next_sample_].batch <= version_ + p_.lag) {
                s = next_sample_++;
                n.sample = s;
                emit_sample(TraceKind::rollout_start, n, s);
            } else {
                return;
            }
            n.state = NodeState::rollout;
            n.seg_start = t_;
            ++n.epoch;
            push(t_ + samples_[s].remaining, EvType::sample_done, i, n.epoch);
        }
    }

    Workload w_;
    Strategy strategy_;
    std::uint64_t seed_;
    StrategyParams p_;
    std::optional<FailureInjection> failure_;

    std::vector<Node> nodes_;
    std::vector<double> durations_;
    std::vector<Sample> samples_;
    std::vector<std::uint32_t> outstanding_;  ///< unfinished samples per train unit
    std::deque<std::size_t> paused_;
    std::size_t next_sample_ = 0;
    std::size_t next_unit_ = 0;
    std::uint64_t version_ = 0;

    bool training_ = false;
    bool holding_train_ = false;
    bool continuing_ = false;
    std::vector<std::size_t> train_nodes_;
    std::uint64_t train_epoch_ = 0;

    double t_ = 0.0;
    std::uint64_t seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::vector<TraceEvent> trace_;

    TagScheduler scheduler_;
    std::optional<MultiplexingController> controller_;
};

}  // namespace

SimResult simulate(const std::vector<ResourceDescriptor>& cluster, const Workload& workload,
                   Strategy strategy, std::uint64_t seed,
                   const std::optional<FailureInjection>& failure) {
    return Simulation(cluster, workload, strategy, seed, failure).run();
}

SimMetrics metrics_from_trace(const std::vector<TraceEvent>& trace,
                              const std::vector<ResourceRole>& roles, const Workload& w,
                              Strategy strategy, std::uint64_t seed) {
    const auto p = params_for(strategy, w);
    SimMetrics m;
    m.strategy = strategy;
    m.seed = seed;

    std::map<std::string, std::size_t> index;
    struct Live {
        bool busy = false;
        bool down = false;
    };
    std::vector<Live> live(roles.size());
    for (std::size_t i = 0; i < roles.size(); ++i) {
        index[roles[i].id] = i;
        m.resources.push_back(ResourceMetrics{roles[i].id, roles[i].rolls_out, roles[i].trains});
    }

    std::uint64_t unstarted = std::uint64_t{w.num_steps} * w.batch_size;
    std::uint64_t paused = 0;
    std::uint64_t untrained = std::uint64_t{w.num_steps} * p.micro;
    std::map<std::int64_t, std::uint64_t> lag_of;  // sample -> version lag
    std::map<std::pair<std::int64_t, std::int32_t>, std::vector<std::int64_t>> members;
    std::set<std::pair<std::int64_t, std::int32_t>> trained;

    double prev = 0.0;
    auto accumulate = [&](double until) {
        const double dt = until - prev;
        if (dt <= 0.0) return;
        const bool rollout_work = unstarted + paused > 0;
        const bool train_work = w.train_duration > 0.0 && untrained > 0;
        for (std::size_t i = 0; i < roles.size(); ++i) {
            auto& r = m.resources[i];
            if (live[i].down) {
                r.down += dt;
            } else if (live[i].busy) {
                r.busy += dt;
            } else {
                r.idle += dt;
                if ((r.rolls_out && rollout_work) || (r.trains && train_work)) r.bubble += dt;
            }
        }
        prev = until;
    };

    for (const auto& ev : trace) {
        accumulate(ev.t);
        auto it = index.find(ev.resource);
        if (it == index.end()) continue;
        auto& node = live[it->second];
        switch (ev.kind) {
            case TraceKind::rollout_start:
                --unstarted;
                node.busy = true;
                lag_of[ev.sample] = static_cast<std::uint64_t>(ev.batch) - ev.version;
                members[{ev.batch, ev.micro}].push_back(ev.sample);
                break;
            case TraceKind::rollout_resume:
                --paused;
                node.busy = true;
                break;
            case TraceKind::rollout_preempt:
                ++paused;
                node.busy = false;
                break;
            case TraceKind::train_start:
                node.busy = true;
                break;
            case TraceKind::train_stop:
                node.busy = false;
                if (trained.insert({ev.batch, ev.micro}).second) {
                    --untrained;
                    for (auto s : members[{ev.batch, ev.micro}]) {
                        const auto lag = lag_of[s];
                        ++m.staleness[lag];
                        ++m.samples_trained;
                        m.max_staleness = std::max(m.max_staleness, lag);
                    }
                }
                break;
            case TraceKind::rollout_stop:
            case TraceKind::train_abort:
                node.busy = false;
                break;
            case TraceKind::resource_failed:
                node.busy = false;
                node.down = true;
                break;
            case TraceKind::transition_start:
            case TraceKind::transition_stop:
                break;
        }
    }
    m.makespan = prev;

    double bubble = 0.0, train_bubble = 0.0;
    std::size_t train_nodes = 0;
    for (const auto& r : m.resources) {
        bubble += r.bubble;
        m.busy_total += r.busy;
        if (r.trains) {
            train_bubble += r.bubble;
            ++train_nodes;
        }
    }
    if (m.makespan > 0.0 && !m.resources.empty())
        m.bubble_fraction = bubble / (static_cast<double>(m.resources.size()) * m.makespan);
    if (m.makespan > 0.0 && train_nodes > 0)
        m.train_node_bubble = train_bubble / (static_cast<double>(train_nodes) * m.makespan);
    double lag_sum = 0.0;
    for (const auto& [lag, count] : m.staleness) lag_sum += static_cast<double>(lag * count);
    if (m.samples_trained > 0) m.mean_staleness = lag_sum / static_cast<double>(m.samples_trained);
    return m;
}

CompareReport compare(const std::vector<ResourceDescriptor>& cluster, const Workload& workload,
                      const std::vector<std::uint64_t>& seeds,
                      const std::vector<Strategy>& strategies) {
    CompareReport report;
    const bool has_ours = std::find(strategies.begin(), strategies.end(),
                                    Strategy::spatiotemporal) != strategies.end();
    for (auto s : strategies)
        for (auto seed : seeds) report.rows.push_back(simulate(cluster, workload, s, seed).metrics);

    if (!has_ours) report.violations.push_back("spatiotemporal not among compared strategies");
    for (auto seed : seeds) {
        const SimMetrics* ours = nullptr;
        for (const auto& r : report.rows)
            if (r.seed == seed && r.strategy == Strategy::spatiotemporal) ours = &r;
        if (!ours) continue;
        for (const auto& r : report.rows) {
            if (r.seed != seed || r.strategy == Strategy::spatiotemporal) continue;
            if (!(ours->bubble_fraction < r.bubble_fraction))
                report.violations.push_back("seed " + std::to_string(seed) + ": spatiotemporal " +
                                            std::to_string(ours->bubble_fraction) +
                                            " not below " + std::string(to_string(r.strategy)) +
                                            " " + std::to_string(r.bubble_fraction));
        }
    }
    report.dominance = report.violations.empty();
    return report;
}

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
    throw ConfigInvalid(field, what);
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        invalid(path + "." + key, e.what());
    }
}

}  // namespace

Scenario scenario_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + upto, '\n');
        throw ParseError(static_cast<std::size_t>(line), e.what());
    }
    if (!j.is_object()) invalid("scenario", "must be an object");

    Scenario s;
    if (!j.contains("cluster") || !j["cluster"].is_array() || j["cluster"].empty())
        invalid("cluster", "must be a non-empty array");
    for (std::size_t i = 0; i < j["cluster"].size(); ++i) {
        const auto& r = j["cluster"][i];
        const std::string path = "cluster[" + std::to_string(i) + "]";
        if (!r.is_object()) invalid(path, "must be an object");
        ResourceDescriptor d;
        d.id = get_field<std::string>(r, "id", path, "");
        if (d.id.empty()) invalid(path + ".id", "is required");
        if (!r.contains("tags") || !r["tags"].is_array() || r["tags"].empty())
            invalid(path + ".tags", "must be a non-empty array");
        for (const auto& t : r["tags"]) {
            try {
                d.capabilities.insert(parse_capability(t.get<std::string>()));
            } catch (const std::exception& e) {
                invalid(path + ".tags", e.what());
            }
        }
        d.peak_flops = get_field<double>(r, "peak_flops", path, 1.0);
        d.hbm_bandwidth = get_field<double>(r, "hbm_bandwidth", path, 1.0);
        if (!(d.peak_flops > 0.0)) invalid(path + ".peak_flops", "must be > 0");
        if (!(d.hbm_bandwidth > 0.0)) invalid(path + ".hbm_bandwidth", "must be > 0");
        s.cluster.push_back(std::move(d));
    }

    if (j.contains("workload")) {
        const auto& w = j["workload"];
        if (!w.is_object()) invalid("workload", "must be an object");
        auto& o = s.workload;
        o.num_steps = get_field(w, "num_steps", "workload", o.num_steps);
        o.batch_size = get_field(w, "batch_size", "workload", o.batch_size);
        o.rollout_mean = get_field(w, "rollout_mean", "workload", o.rollout_mean);
        o.rollout_jitter = get_field(w, "rollout_jitter", "workload", o.rollout_jitter);
        o.train_duration = get_field(w, "train_duration", "workload", o.train_duration);
        o.staleness_limit = get_field(w, "staleness_limit", "workload", o.staleness_limit);
        o.micro_batches = get_field(w, "micro_batches", "workload", o.micro_batches);
        o.transition_cost = get_field(w, "transition_cost", "workload", o.transition_cost);
        try {
            o.validate();
        } catch (const InvalidParams& e) {
            invalid("workload", e.what());
        }
    }

    if (j.contains("strategy")) {
        try {
            s.strategy = parse_strategy(get_field<std::string>(j, "strategy", "scenario", ""));
        } catch (const InvalidParams& e) {
            invalid("strategy", e.what());
        }
    }
    if (j.contains("seeds")) {
        s.seeds = get_field<std::vector<std::uint64_t>>(j, "seeds", "scenario", {});
        if (s.seeds.empty()) invalid("seeds", "must be non-empty");
    } else if (j.contains("seed")) {
        s.seeds = {get_field<std::uint64_t>(j, "seed", "scenario", 0)};
    }
    if (j.contains("failure") && !j["failure"].is_null()) {
        const auto& f = j["failure"];
        FailureInjection fi;
        fi.resource = get_field<std::string>(f, "resource", "failure", "");
        fi.at = get_field<double>(f, "at", "failure", 0.0);
        if (fi.resource.empty()) invalid("failure.resource", "is required");
        s.failure = fi;
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return scenario_from_json(buf.str());
}

std::string metrics_to_json(const SimMetrics& m) {
    json j;
    j["strategy"] = std::string(to_string(m.strategy));
    j["seed"] = m.seed;
    j["makespan"] = m.makespan;
    j["bubble_fraction"] = m.bubble_fraction;
    j["train_node_bubble"] = m.train_node_bubble;
    j["mean_staleness"] = m.mean_staleness;
    j["max_staleness"] = m.max_staleness;
    j["samples_trained"] = m.samples_trained;
    json hist = json::object();
    for (const auto& [lag, count] : m.staleness) hist[std::to_string(lag)] = count;
    j["staleness"] = std::move(hist);
    json res = json::array();
    for (const auto& r : m.resources)
        res.push_back({{"id", r.id},
                       {"busy", r.busy},
                       {"idle", r.idle},
                       {"down", r.down},
                       {"bubble", r.bubble}});
    j["resources"] = std::move(res);
    return j.dump();
}

std::string trace_to_jsonl(const std::vector<TraceEvent>& trace) {
    std::string out;
    for (const auto& e : trace) {
        json j;
        j["t"] = e.t;
        j["resource"] = e.resource;
        j["kind"] = std::string(to_string(e.kind));
        if (e.sample >= 0) j["sample"] = e.sample;
        if (e.batch >= 0) j["batch"] = e.batch;
        if (e.micro >= 0) j["micro"] = e.micro;
        j["version"] = e.version;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string format_report(const std::vector<SimMetrics>& rows) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %6s %10s %12s %10s %10s %5s\n", "strategy", "seed",
                  "bubble", "train_bubble", "makespan", "staleness", "max");
    out += line;
    for (const auto& m : rows) {
        std::snprintf(line, sizeof line, "%-16s %6llu %10.4f %12.4f %10.3f %10.3f %5llu\n",
                      std::string(to_string(m.strategy)).c_str(),
                      static_cast<unsigned long long>(m.seed), m.bubble_fraction,
                      m.train_node_bubble, m.makespan, m.mean_staleness,
                      static_cast<unsigned long long>(m.max_staleness));
        out += line;
    }
    return out;
}

}  // namespace tagflow
