// Copyright (c) 2026, The Tagflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "tagflow/session_trie.hpp"
#include "tagflow/simulator.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace tagflow;

// Multi-turn sessions: each turn extends the previous turn's full sequence.
void BM_TrieInsertMultiTurn(benchmark::State& state) {
    const auto turns = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<TokenId> tok(0, 31999);
    for (auto _ : state) {
        SessionTrie trie("bench");
        std::vector<TokenId> seq;
        for (std::size_t t = 0; t < turns; ++t) {
            for (int k = 0; k < 64; ++k) seq.push_back(tok(rng));
            trie.lpm_insert(std::span<const TokenId>(seq), t);
        }
        benchmark::DoNotOptimize(trie.stored_tokens());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(turns));
}
BENCHMARK(BM_TrieInsertMultiTurn)->Arg(4)->Arg(16)->Arg(64);

// Branching: many samples sharing one long prompt.
void BM_TrieInsertSharedPrompt(benchmark::State& state) {
    const auto branches = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<TokenId> tok(0, 31999);
    std::vector<TokenId> prompt(512);
    for (auto& t : prompt) t = tok(rng);
    for (auto _ : state) {
        SessionTrie trie("bench");
        for (std::size_t b = 0; b < branches; ++b) {
            auto seq = prompt;
            for (int k = 0; k < 128; ++k) seq.push_back(tok(rng));
            trie.lpm_insert(std::span<const TokenId>(seq), b);
        }
        benchmark::DoNotOptimize(trie.node_count());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(branches));
}
BENCHMARK(BM_TrieInsertSharedPrompt)->Arg(8)->Arg(64);

std::vector<ResourceDescriptor> bench_cluster() {
    std::vector<ResourceDescriptor> out;
    for (int i = 0; i < 8; ++i) {
        ResourceDescriptor d;
        d.id = (i < 4 ? "dual-" : "roll-") + std::to_string(i % 4);
        d.capabilities = {CapabilityTag::rollout};
        if (i < 4) d.capabilities.insert(CapabilityTag::train);
        out.push_back(std::move(d));
    }
    return out;
}

void BM_Simulate(benchmark::State& state) {
    const auto strategy = all_strategies().at(static_cast<std::size_t>(state.range(0)));
    const auto cluster = bench_cluster();
    Workload w;
    for (auto _ : state) {
        auto r = simulate(cluster, w, strategy, 0);
        benchmark::DoNotOptimize(r.metrics.bubble_fraction);
    }
    state.SetLabel(std::string(to_string(strategy)));
}
BENCHMARK(BM_Simulate)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
