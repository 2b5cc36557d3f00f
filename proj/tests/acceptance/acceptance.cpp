// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are the constants below.

#include "tagflow/config.hpp"
#include "tagflow/dataloader.hpp"
#include "tagflow/error.hpp"
#include "tagflow/rollout_manager.hpp"
#include "tagflow/simulator.hpp"
#include "tagflow/stack.hpp"
#include "tagflow/trajectory_manager.hpp"

#include "support/check.hpp"
#include "support/hold.hpp"
#include "support/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace tagflow;
using Clock = std::chrono::steady_clock;
using Seq = std::vector<TokenId>;

constexpr double kC1BudgetSeconds = 120.0;
constexpr double kC5BudgetSeconds = 30.0;
constexpr double kSpatioBubbleMax = 0.02;
constexpr double kNaiveTrainBubble = 0.80;
constexpr double kNaiveTrainBubbleTol = 0.01;
constexpr double kIntervalTol = 1e-9;

const std::string kSource = TAGFLOW_SOURCE_DIR;

struct Outcome {
    bool ok = true;
    std::string detail;
};

/// Collects the first failure message; later ones are counted.
class Verdict {
public:
    void require(bool cond, const std::string& what) {
        if (cond) return;
        if (failures_++ == 0) first_ = what;
    }
    Outcome outcome(const std::string& summary) const {
        if (failures_ == 0) return {true, summary};
        return {false, first_ + (failures_ > 1 ? " (+" + std::to_string(failures_ - 1) + " more)" : "")};
    }

private:
    std::size_t failures_ = 0;
    std::string first_;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::uint64_t> values(const std::vector<ModelVersion>& vs) {
    std::vector<std::uint64_t> out;
    for (auto v : vs) out.push_back(v.value);
    return out;
}

GenParams params(std::uint32_t n, std::uint64_t seed) {
    GenParams p;
    p.max_new_tokens = n;
    p.seed = seed;
    return p;
}

ResourceDescriptor node(std::string id, std::set<CapabilityTag> caps) {
    ResourceDescriptor d;
    d.id = std::move(id);
    d.capabilities = std::move(caps);
    return d;
}

const std::set<CapabilityTag> kDual{CapabilityTag::rollout, CapabilityTag::train};
const std::set<CapabilityTag> kRolloutOnly{CapabilityTag::rollout};
const std::set<CapabilityTag> kTrainOnly{CapabilityTag::train};

/// Engine, proxy and rollout manager wired as in the stack.
struct Rig {
    Rig() {
        tm.set_gate(&rollout);
        rollout.set_rollout_resources({"n0", "n1"});
        rollout.set_train_capable({"n0"});
    }
    MockEngine engine;
    RolloutManager rollout{engine};
    TrajectoryManager tm{engine};
};

// 1 -------------------------------------------------------------------------

struct Tok {
    TokenId token;
    bool model;
    std::uint64_t version;
};
using Annotated = std::vector<Tok>;

struct TurnRecord {
    RequestId id = 0;
    Seq input;
    Annotated expected;  ///< input and output with tracked annotations
    ProxyResponse response;
};

struct SessionRecord {
    std::string id;
    std::uint64_t seed = 0;
    std::vector<TurnRecord> turns;
    std::string error;
};

Seq tokens_of(const Annotated& a) {
    Seq out;
    for (const auto& t : a) out.push_back(t.token);
    return out;
}

void run_session(TrajectoryManager& tm, std::size_t index, SessionRecord& rec) {
    std::mt19937_64 rng(1000 + index);
    rec.id = "accept-" + std::to_string(index);
    rec.seed = index;
    Annotated prompt;
    const std::size_t plen = 2 + rng() % 11;
    for (std::size_t i = 0; i < plen; ++i)
        prompt.push_back({static_cast<TokenId>(rng() % 29000), false, 0});

    const int turns = 1 + static_cast<int>(rng() % 6);
    std::vector<Annotated> contexts;
    for (int turn = 0; turn < turns; ++turn) {
        Annotated input;
        if (contexts.empty()) {
            input = prompt;
        } else {
            // Branch from an earlier context a third of the time.
            const bool branch = contexts.size() > 1 && rng() % 3 == 0;
            input = branch ? contexts[rng() % contexts.size()] : contexts.back();
            // Fresh first tool token per turn keeps sibling branches distinct.
            input.push_back({static_cast<TokenId>(30000 + turn), false, 0});
            input.push_back({static_cast<TokenId>(rng() % 29000), false, 0});
        }
        const auto n = static_cast<std::uint32_t>(4 + rng() % 21);
        TurnRecord t;
        t.input = tokens_of(input);
        t.response = tm.proxy_generate(rec.id, t.input, params(n, rec.seed));
        t.id = t.response.request_id;
        t.expected = input;
        for (std::size_t i = 0; i < t.response.tokens.size(); ++i)
            t.expected.push_back(
                {t.response.tokens[i], true,
                 i < t.response.versions.size() ? t.response.versions[i].value : ~0ULL});
        contexts.push_back(t.expected);
        rec.turns.push_back(std::move(t));
    }
}

Outcome criterion1() {
    constexpr std::size_t kSessions = 1000;
    constexpr std::size_t kAgents = 8;
    const auto t0 = Clock::now();

    StackConfig c;
    c.cluster = {node("d0", kDual), node("d1", kDual), node("r0", kRolloutOnly),
                 node("r1", kRolloutOnly)};
    Stack stack(c);
    stack.start();
    auto& engine = stack.engine();
    engine.set_token_hook([](RequestId, std::size_t) {
        std::this_thread::sleep_for(std::chrono::microseconds(10));
    });

    std::vector<SessionRecord> sessions(kSessions);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> done{false};
    std::atomic<std::size_t> switches{0};
    std::thread switcher([&] {
        std::mt19937_64 rng(77);
        while (!done) {
            std::this_thread::sleep_for(std::chrono::microseconds(200 + rng() % 1800));
            stack.rollout().coordinate_update(engine.state().current_version.next());
            ++switches;
        }
    });
    std::vector<std::thread> agents;
    for (std::size_t a = 0; a < kAgents; ++a)
        agents.emplace_back([&] {
            for (std::size_t i = next++; i < kSessions; i = next++) {
                try {
                    run_session(stack.trajectories(), i, sessions[i]);
                } catch (const std::exception& e) {
                    sessions[i].error = e.what();
                }
            }
        });
    for (auto& a : agents) a.join();
    done = true;
    switcher.join();

    Verdict v;
    std::size_t turns = 0, interrupted = 0, mixed = 0, trajectories = 0;
    for (const auto& s : sessions) {
        v.require(s.error.empty(), s.id + ": " + s.error);
        const auto extracted = stack.trajectories().extract_trajectories(s.id);
        std::map<std::uint64_t, const Trajectory*> by_id;
        for (const auto& t : extracted) by_id[t.id] = &t;
        trajectories += extracted.size();
        v.require(extracted.size() == s.turns.size(), s.id + ": trajectory count");
        for (const auto& turn : s.turns) {
            ++turns;
            const auto& r = turn.response;
            const auto vs = values(r.versions);
            if (r.interruptions > 0) ++interrupted;
            if (!vs.empty() && vs.front() != vs.back()) ++mixed;
            v.require(r.versions.size() == r.tokens.size(), s.id + ": version count");
            v.require(std::is_sorted(vs.begin(), vs.end()), s.id + ": versions decrease");
            v.require(r.tokens == oracle::generate(turn.input, vs, s.seed),
                      s.id + ": response differs from reference");

            const auto entry = engine.oracle_request(turn.id);
            v.require(entry && entry->input == turn.input && entry->output == r.tokens &&
                          entry->versions == r.versions,
                      s.id + ": response differs from engine oracle log");

            const auto it = by_id.find(turn.id);
            if (it == by_id.end()) {
                v.require(false, s.id + ": missing trajectory for request " +
                                     std::to_string(turn.id));
                continue;
            }
            const auto& t = *it->second;
            const auto tokens = t.tokens();
            Seq want = turn.input;
            if (entry) want.insert(want.end(), entry->output.begin(), entry->output.end());
            v.require(tokens == want, s.id + ": trajectory tokens differ from oracle log");
            bool annotations = tokens.size() == turn.expected.size();
            for (std::size_t i = 0; annotations && i < tokens.size(); ++i) {
                const auto& e = turn.expected[i];
                annotations = (t.loss_mask[i] != 0) == e.model &&
                              (!e.model || t.version_tags[i].value == e.version);
            }
            v.require(annotations, s.id + ": mask or version tags differ");
            v.require(check::trajectory_matches_oracle(t, s.seed).empty(),
                      s.id + ": " + check::trajectory_matches_oracle(t, s.seed));
        }
    }
    const double secs = seconds_since(t0);
    v.require(secs < kC1BudgetSeconds, "runtime " + std::to_string(secs) + "s over budget");
    v.require(switches > 0 && mixed > 0, "no switch landed mid-generation");
    std::ostringstream os;
    os << kSessions << " sessions, " << turns << " turns, " << trajectories
       << " trajectories, " << switches << " switches, " << mixed
       << " responses spanning versions, " << interrupted << " interrupted, " << secs << "s";
    return v.outcome(os.str());
}

// 2 -------------------------------------------------------------------------

Outcome criterion2() {
    Verdict v;
    std::size_t cases = 0;
    for (std::size_t k : {2, 4, 8})
        for (std::size_t p : {16, 256})
            for (std::size_t s : {16, 64}) {
                ++cases;
                MockEngine engine;
                TrajectoryManager tm(engine);
                const std::string sid = "lpm-" + std::to_string(k) + "-" + std::to_string(p) +
                                        "-" + std::to_string(s);
                Seq prompt;
                for (std::size_t i = 0; i < p; ++i) prompt.push_back(static_cast<TokenId>((i * 7919 + p) % 32000));
                // Seeds whose first reference token differs, so branches split right after P.
                std::set<TokenId> firsts;
                oracle::NaiveStore naive;
                std::uint64_t seed = 0;
                for (std::size_t b = 0; b < k; ++b) {
                    while (!firsts.insert(oracle::next_token(prompt, seed, 0, 32000)).second) ++seed;
                    const auto r = tm.proxy_generate(sid, prompt, params(static_cast<std::uint32_t>(s), seed++));
                    Seq full = prompt;
                    full.insert(full.end(), r.tokens.begin(), r.tokens.end());
                    naive.insert(full);
                }
                const auto st = tm.storage_stats(sid);
                const auto tag = sid + ": ";
                v.require(st.stored_tokens == p + k * s,
                          tag + "stored " + std::to_string(st.stored_tokens));
                v.require(naive.distinct_prefixes() == p + k * s, tag + "naive prefix count");
                v.require(st.naive_tokens == k * (p + s) && naive.naive_tokens() == k * (p + s),
                          tag + "naive tokens " + std::to_string(st.naive_tokens));
            }
    return v.outcome(std::to_string(cases) + " (K,P,S) cases exact");
}

// 3 -------------------------------------------------------------------------

Outcome criterion3() {
    constexpr std::uint32_t kLen = 32;
    constexpr std::uint64_t kBase = 2;
    const Seq input{11, 22, 33};
    constexpr std::uint64_t kSeed = 5;
    Verdict v;
    for (std::size_t k = 0; k < kLen; ++k) {
        Rig rig;
        for (std::uint64_t u = 1; u <= kBase; ++u) rig.rollout.coordinate_update(ModelVersion{u});
        support::HoldAt hold(k);
        rig.engine.set_token_hook(hold.hook());
        ProxyResponse r;
        std::thread agent([&] { r = rig.tm.proxy_generate("s", input, params(kLen, kSeed)); });
        hold.wait_held(1);
        rig.rollout.coordinate_update(ModelVersion{kBase + 1});
        hold.release();
        agent.join();

        const auto tag = "k=" + std::to_string(k) + ": ";
        std::vector<std::uint64_t> want_versions(k, kBase);
        want_versions.resize(kLen, kBase + 1);
        auto want = oracle::generate(input, k, kSeed, kBase);
        Seq context = input;
        context.insert(context.end(), want.begin(), want.end());
        const auto after = oracle::generate(context, kLen - k, kSeed, kBase + 1);
        want.insert(want.end(), after.begin(), after.end());
        v.require(r.tokens.size() == kLen, tag + "received " + std::to_string(r.tokens.size()));
        v.require(values(r.versions) == want_versions, tag + "version tags");
        v.require(r.tokens == want, tag + "tokens differ from reference");
        v.require(r.interruptions == 1, tag + "interruptions");
        const auto ts = rig.tm.extract_trajectories("s");
        v.require(ts.size() == 1 && values(std::vector<ModelVersion>(
                                        ts[0].version_tags.begin() + static_cast<std::ptrdiff_t>(input.size()),
                                        ts[0].version_tags.end())) == want_versions,
                  tag + "trajectory version tags");
    }
    return v.outcome("all 32 interrupt positions contiguous and reference-exact");
}

// 4 -------------------------------------------------------------------------

Outcome criterion4() {
    constexpr int kPairs = 200;
    Rig rig;
    std::mutex mu;
    std::set<std::size_t> schedule;
    std::set<std::size_t> fired;
    rig.engine.set_token_hook([&](RequestId, std::size_t produced) {
        {
            std::lock_guard lock(mu);
            if (!schedule.count(produced) || !fired.insert(produced).second) return;
        }
        rig.rollout.pause_rollouts(std::nullopt);
        rig.rollout.resume_rollouts(std::nullopt);
    });

    std::mt19937_64 rng(4);
    Verdict v;
    std::size_t pauses = 0;
    for (int pair = 0; pair < kPairs; ++pair) {
        Seq input;
        const std::size_t len = 1 + rng() % 16;
        for (std::size_t i = 0; i < len; ++i) input.push_back(static_cast<TokenId>(rng() % 32000));
        const auto n = static_cast<std::uint32_t>(2 + rng() % 63);
        const auto seed = rng();
        {
            std::lock_guard lock(mu);
            schedule.clear();
            fired.clear();
            const std::size_t count = 1 + rng() % 4;
            while (schedule.size() < std::min<std::size_t>(count, n - 1))
                schedule.insert(1 + rng() % (n - 1));
            pauses += schedule.size();
        }
        const auto sid = "pair-" + std::to_string(pair);
        const auto r = rig.tm.proxy_generate(sid, input, params(n, seed));
        const auto tag = sid + ": ";
        v.require(r.tokens == oracle::generate(input, n, seed, 0), tag + "tokens differ");
        v.require(r.interruptions == schedule.size(),
                  tag + "interruptions " + std::to_string(r.interruptions));
        const auto ts = rig.tm.extract_trajectories(sid);
        Seq want = input;
        want.insert(want.end(), r.tokens.begin(), r.tokens.end());
        v.require(ts.size() == 1 && ts[0].tokens() == want, tag + "trajectory differs");
    }
    return v.outcome(std::to_string(kPairs) + " schedules, " + std::to_string(pauses) +
                     " pauses, all bit-exact");
}

// 5 -------------------------------------------------------------------------

Outcome criterion5() {
    const auto t0 = Clock::now();
    const auto sc = load_scenario(kSource + "/scenarios/canonical.json");
    const auto report = compare(sc.cluster, sc.workload, sc.seeds);
    const double secs = seconds_since(t0);
    Verdict v;
    std::map<std::uint64_t, std::map<Strategy, SimMetrics>> by_seed;
    for (const auto& m : report.rows) by_seed[m.seed][m.strategy] = m;
    v.require(sc.seeds.size() == 5, "expected 5 seeds");
    v.require(sc.workload.num_steps == 50, "expected 50 steps");
    v.require(sc.cluster.size() == 8, "expected 8 nodes");
    double worst_spatio = 0.0, naive_lo = 1.0, naive_hi = 0.0;
    for (const auto& [seed, row] : by_seed) {
        const auto tag = "seed " + std::to_string(seed) + ": ";
        v.require(row.size() == 4, tag + "missing strategies");
        const double ours = row.at(Strategy::spatiotemporal).bubble_fraction;
        worst_spatio = std::max(worst_spatio, ours);
        v.require(ours <= kSpatioBubbleMax, tag + "spatiotemporal bubble " + std::to_string(ours));
        for (auto s : {Strategy::naive, Strategy::micro_batch, Strategy::off_policy_fill})
            v.require(ours < row.at(s).bubble_fraction,
                      tag + "not below " + std::string(to_string(s)));
        const double naive = row.at(Strategy::naive).train_node_bubble;
        naive_lo = std::min(naive_lo, naive);
        naive_hi = std::max(naive_hi, naive);
        v.require(std::abs(naive - kNaiveTrainBubble) <= kNaiveTrainBubbleTol,
                  tag + "naive train-node bubble " + std::to_string(naive));
    }
    v.require(report.dominance, "compare reports no dominance");
    v.require(secs < kC5BudgetSeconds, "runtime " + std::to_string(secs) + "s over budget");
    std::ostringstream os;
    os << "spatiotemporal bubble max " << worst_spatio << ", naive train-node bubble in ["
       << naive_lo << ", " << naive_hi << "], " << secs << "s";
    return v.outcome(os.str());
}

// 6 -------------------------------------------------------------------------

using Interval = std::pair<double, double>;

/// Busy intervals per resource, keyed by kind (rollout or train).
std::map<std::string, std::vector<Interval>> busy_intervals(const std::vector<TraceEvent>& trace,
                                                            bool train) {
    std::map<std::string, std::vector<Interval>> out;
    std::map<std::string, double> open;
    for (const auto& e : trace) {
        const bool starts = train ? e.kind == TraceKind::train_start
                                  : (e.kind == TraceKind::rollout_start ||
                                     e.kind == TraceKind::rollout_resume);
        const bool stops = train ? (e.kind == TraceKind::train_stop || e.kind == TraceKind::train_abort)
                                 : (e.kind == TraceKind::rollout_stop ||
                                    e.kind == TraceKind::rollout_preempt);
        if (starts) open[e.resource] = e.t;
        if (stops || e.kind == TraceKind::resource_failed) {
            if (auto it = open.find(e.resource); it != open.end()) {
                out[e.resource].emplace_back(it->second, e.t);
                open.erase(it);
            }
        }
    }
    return out;
}

/// Sorted union with zero-length intervals dropped.
std::vector<Interval> merge(std::vector<Interval> xs) {
    std::sort(xs.begin(), xs.end());
    std::vector<Interval> out;
    for (const auto& x : xs) {
        if (x.second - x.first <= kIntervalTol) continue;
        if (!out.empty() && x.first <= out.back().second + kIntervalTol)
            out.back().second = std::max(out.back().second, x.second);
        else
            out.push_back(x);
    }
    return out;
}

std::vector<Interval> complement(const std::vector<Interval>& busy, double end) {
    std::vector<Interval> out;
    double t = 0.0;
    for (const auto& b : merge(busy)) {
        if (b.first > t) out.emplace_back(t, b.first);
        t = std::max(t, b.second);
    }
    if (end > t) out.emplace_back(t, end);
    return merge(out);
}

bool same_intervals(const std::vector<Interval>& a, const std::vector<Interval>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i].first - b[i].first) > 1e-6 || std::abs(a[i].second - b[i].second) > 1e-6)
            return false;
    return true;
}

std::vector<Interval> phase_intervals(const std::vector<PhaseSample>& phases, Phase want,
                                      double end) {
    std::vector<Interval> out;
    for (std::size_t i = 0; i < phases.size(); ++i) {
        if (phases[i].phase != want) continue;
        const double stop = i + 1 < phases.size() ? phases[i + 1].at : end;
        out.emplace_back(phases[i].at, stop);
    }
    return merge(out);
}

Outcome criterion6() {
    Verdict v;
    Workload w;
    w.num_steps = 20;
    w.batch_size = 32;

    // Colocated: every node carries both tags.
    std::vector<ResourceDescriptor> duals;
    for (int i = 0; i < 4; ++i) duals.push_back(node("d" + std::to_string(i), kDual));
    const auto col = simulate(duals, w, Strategy::spatiotemporal, 0);
    std::vector<Phase> seq;
    for (const auto& p : col.phases) seq.push_back(p.phase);
    bool alternating = !seq.empty() && seq.front() == Phase::rollout;
    for (std::size_t i = 0; alternating && i < seq.size(); ++i)
        alternating = seq[i] == (i % 2 == 0 ? Phase::rollout : Phase::train);
    v.require(alternating, "colocated phase trace is not strict R/T alternation");

    std::vector<Interval> rollout_all, train_all;
    for (const auto& [id, xs] : busy_intervals(col.trace, false))
        rollout_all.insert(rollout_all.end(), xs.begin(), xs.end());
    for (const auto& [id, xs] : busy_intervals(col.trace, true))
        train_all.insert(train_all.end(), xs.begin(), xs.end());
    const auto r_union = merge(rollout_all);
    const auto t_union = merge(train_all);
    for (const auto& r : r_union)
        for (const auto& t : t_union)
            v.require(std::min(r.second, t.second) - std::max(r.first, t.first) <= kIntervalTol,
                      "colocated rollout overlaps training in the event trace");
    v.require(t_union.size() == w.num_steps,
              "colocated train phases " + std::to_string(t_union.size()));
    // Event-trace phases alternate: every gap between training holds rollout work.
    for (std::size_t i = 0; i < t_union.size(); ++i) {
        const double from = i == 0 ? 0.0 : t_union[i - 1].second;
        const bool rollout_before = std::any_of(r_union.begin(), r_union.end(), [&](const Interval& r) {
            return r.first >= from - kIntervalTol && r.second <= t_union[i].first + kIntervalTol;
        });
        v.require(rollout_before, "two train phases without rollout between them");
    }

    // Disaggregated: every node carries one tag.
    const std::vector<ResourceDescriptor> singles{node("t0", kTrainOnly), node("t1", kTrainOnly),
                                                  node("r0", kRolloutOnly), node("r1", kRolloutOnly),
                                                  node("r2", kRolloutOnly), node("r3", kRolloutOnly)};
    const auto dis = simulate(singles, w, Strategy::spatiotemporal, 0);
    const double end = dis.metrics.makespan;
    const auto rollout_only = phase_intervals(dis.phases, Phase::rollout, end);
    const auto train_busy = busy_intervals(dis.trace, true);
    v.require(!rollout_only.empty(), "no rollout-only phase in disaggregated trace");
    for (const auto& id : {"t0", "t1"}) {
        const auto it = train_busy.find(id);
        const auto idle = complement(it == train_busy.end() ? std::vector<Interval>{} : it->second, end);
        v.require(same_intervals(idle, rollout_only),
                  std::string(id) + " idle intervals differ from rollout-only phases (" +
                      std::to_string(idle.size()) + " vs " + std::to_string(rollout_only.size()) + ")");
    }
    std::ostringstream os;
    os << "colocated " << seq.size() << " alternating phases; disaggregated " << rollout_only.size()
       << " rollout-only phases equal train-node idleness";
    return v.outcome(os.str());
}

// 7 -------------------------------------------------------------------------

Outcome criterion7() {
    const auto sc = load_scenario(kSource + "/scenarios/canonical.json");
    Verdict v;
    std::size_t overlapped = 0, total = 0;
    for (auto seed : sc.seeds) {
        const auto r = simulate(sc.cluster, sc.workload, Strategy::spatiotemporal, seed);
        const auto tag = "seed " + std::to_string(seed) + ": ";
        std::map<std::int64_t, Interval> train;  // batch -> [first start, last stop)
        for (const auto& e : r.trace) {
            if (e.kind == TraceKind::train_start) {
                auto [it, fresh] = train.try_emplace(e.batch, Interval{e.t, e.t});
                if (!fresh) it->second.first = std::min(it->second.first, e.t);
            } else if (e.kind == TraceKind::train_stop || e.kind == TraceKind::train_abort) {
                auto& iv = train[e.batch];
                iv.second = std::max(iv.second, e.t);
            }
        }
        std::set<std::int64_t> seen;
        std::map<std::uint64_t, std::uint64_t> histogram;
        for (const auto& e : r.trace) {
            if (e.kind != TraceKind::rollout_start || !seen.insert(e.sample).second) continue;
            ++total;
            const auto lag = static_cast<std::uint64_t>(e.batch) - e.version;
            ++histogram[lag];
            v.require(e.batch >= static_cast<std::int64_t>(e.version) && lag <= 1,
                      tag + "sample " + std::to_string(e.sample) + " lag " + std::to_string(lag));
            const bool during_train = std::any_of(train.begin(), train.end(), [&](const auto& kv) {
                return e.t >= kv.second.first && e.t < kv.second.second;
            });
            if (during_train) {
                ++overlapped;
                v.require(lag == 1, tag + "sample " + std::to_string(e.sample) +
                                        " started during training with lag " + std::to_string(lag));
            }
        }
        v.require(histogram == r.metrics.staleness, tag + "metrics staleness histogram differs");
        v.require(r.metrics.max_staleness <= 1, tag + "max staleness");
    }
    v.require(overlapped > 0, "no sample started during training");
    return v.outcome(std::to_string(total) + " samples, " + std::to_string(overlapped) +
                     " started during training, all with lag 1; none above 1");
}

// 8 -------------------------------------------------------------------------

Outcome criterion8() {
    constexpr int kTraces = 100;
    constexpr int kTicks = 200;
    constexpr std::size_t kTasks = 3000;
    std::string text;
    for (std::size_t i = 0; i < kTasks; ++i)
        text += R"({"task_id":)" + std::to_string(i) + R"(,"prompt_tokens":[1]})" + "\n";

    Verdict v;
    std::size_t requeues = 0;
    for (int trace = 0; trace < kTraces; ++trace) {
        std::mt19937_64 rng(800 + trace);
        StreamingDataloader d;
        std::istringstream in(text);
        d.load(in);
        std::vector<std::uint64_t> inflight;
        std::multiset<std::uint64_t> dispatched_ever, completed;
        const auto tag = "trace " + std::to_string(trace) + ": ";
        for (int tick = 0; tick < kTicks; ++tick) {
            for (auto it = inflight.begin(); it != inflight.end();) {
                if (rng() % 5 == 0) {
                    d.complete(*it);
                    completed.insert(*it);
                    it = inflight.erase(it);
                } else {
                    ++it;
                }
            }
            const std::size_t cap = rng() % 17;
            while (inflight.size() > cap) {
                const auto at = rng() % inflight.size();
                d.requeue(inflight[at]);
                inflight.erase(inflight.begin() + static_cast<std::ptrdiff_t>(at));
                ++requeues;
            }
            for (const auto& t : d.next(cap - inflight.size())) {
                inflight.push_back(t.task_id);
                dispatched_ever.insert(t.task_id);
            }
            v.require(d.pending() > 0, tag + "backlog exhausted");
            v.require(d.in_flight() == cap && inflight.size() == cap,
                      tag + "tick " + std::to_string(tick) + " in flight " +
                          std::to_string(d.in_flight()) + " vs capacity " + std::to_string(cap));
        }
        // Drain and check every id completes exactly once.
        for (auto id : inflight) {
            d.complete(id);
            completed.insert(id);
        }
        for (auto batch = d.next(64); !batch.empty(); batch = d.next(64))
            for (const auto& t : batch) {
                d.complete(t.task_id);
                completed.insert(t.task_id);
            }
        std::multiset<std::uint64_t> all;
        for (std::size_t i = 0; i < kTasks; ++i) all.insert(i);
        v.require(completed == all, tag + "completed multiset differs from loaded ids");
        v.require(d.completed() == kTasks && d.in_flight() == 0 && d.pending() == 0,
                  tag + "final counters");
    }
    return v.outcome(std::to_string(kTraces) + " traces x " + std::to_string(kTicks) +
                     " ticks at capacity, " + std::to_string(requeues) + " requeues, ids conserved");
}

// 9 -------------------------------------------------------------------------

struct StackFailure {
    bool reached = false;
    RunSummary summary;
    std::size_t completed = 0;
    std::string oracle_error;
    std::size_t trajectories = 0;
};

StackFailure fail_stack_node(const std::string& victim, bool while_training) {
    auto c = load_config(kSource + "/configs/minimal.json");
    c.trainer.train_duration = std::chrono::milliseconds(60);
    Stack stack(c);
    stack.start();
    stack.engine().set_token_hook(
        [](RequestId, std::size_t) { std::this_thread::sleep_for(std::chrono::microseconds(300)); });
    StackFailure out;
    std::thread runner([&] { out.summary = stack.run_until_drained(); });
    const auto deadline = Clock::now() + std::chrono::seconds(30);
    while (Clock::now() < deadline) {
        const auto active =
            stack.rollout().exclusive([&] { return stack.scheduler().resource(victim)->active; });
        out.reached = while_training ? active == CapabilityTag::train
                                     : active == CapabilityTag::rollout && !stack.trained().empty();
        if (out.reached) break;
        std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    stack.fail_resource(victim);
    runner.join();
    out.completed = stack.dataloader().completed();
    for (const auto& b : stack.trained())
        for (const auto& t : b.trajectories) {
            ++out.trajectories;
            const auto seed = c.seed * 1000003ULL + std::stoull(t.session_id.substr(5));
            const auto err = check::trajectory_matches_oracle(t, seed, c.engine.vocab_size);
            if (!err.empty() && out.oracle_error.empty()) out.oracle_error = t.session_id + ": " + err;
        }
    return out;
}

Outcome criterion9() {
    Verdict v;
    const auto sc = load_scenario(kSource + "/scenarios/canonical.json");
    const auto expected = std::uint64_t{sc.workload.num_steps} * sc.workload.batch_size;
    std::size_t sim_runs = 0;
    for (const auto& n : sc.cluster)
        for (double at : {3.1, 17.3, 41.9}) {
            ++sim_runs;
            const auto r = simulate(sc.cluster, sc.workload, Strategy::spatiotemporal, 0,
                                    FailureInjection{n.id, at});
            const bool failed = std::any_of(r.trace.begin(), r.trace.end(), [&](const TraceEvent& e) {
                return e.kind == TraceKind::resource_failed && e.resource == n.id;
            });
            const auto tag = "simulated failure of " + n.id + " at " + std::to_string(at) + ": ";
            v.require(failed, tag + "not injected");
            v.require(r.metrics.samples_trained == expected,
                      tag + "trained " + std::to_string(r.metrics.samples_trained));
        }

    for (const auto& [victim, training] :
         std::vector<std::pair<std::string, bool>>{{"node-2", false}, {"node-0", true}}) {
        const auto f = fail_stack_node(victim, training);
        const auto tag = std::string("stack failure of ") + victim + (training ? " (train-active)" : " (rollout-active)") + ": ";
        v.require(f.reached, tag + "node never reached the target state");
        v.require(f.summary.tasks_completed == 20 && f.completed == 20,
                  tag + "completed " + std::to_string(f.completed));
        v.require(f.trajectories == 40, tag + "trajectories " + std::to_string(f.trajectories));
        v.require(f.oracle_error.empty(), tag + f.oracle_error);
    }
    return v.outcome(std::to_string(sim_runs) +
                     " simulated failures trained every sample; stack survived rollout- and "
                     "train-active failures with oracle-identical trajectories");
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"1 trajectory consistency", criterion1}, {"2 prefix dedup", criterion2},
        {"3 transparent switch", criterion3},     {"4 preemption safety", criterion4},
        {"5 pipeline dominance", criterion5},     {"6 special-case equivalence", criterion6},
        {"7 staleness bound", criterion7},        {"8 dataloader saturation", criterion8},
        {"9 failure tolerance", criterion9},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.ok) ++failed;
        std::printf("criterion %s: %s - %s\n", name, o.ok ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
