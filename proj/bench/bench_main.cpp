#include "kppo/candidate_filter.hpp"
#include "kppo/knowledge_tree.hpp"
#include "kppo/task_eval.hpp"

#include "scripted.hpp"
#include "test_support.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace kppo;
using namespace kppo::testing;

namespace {

// Target with a fixed per-call latency, standing in for a remote model.
struct EvalRig {
    std::vector<Instance> instances = make_instances(64);
    LlmGateway gateway;
    EvalCache cache;
    std::shared_ptr<CountingAdapter> adapter;
    std::unique_ptr<Evaluator> evaluator;

    EvalRig(std::chrono::microseconds latency, std::size_t parallelism) {
        auto target = target_by(instances, [](const Instance& inst, const std::string&) { return inst.gold; });
        adapter = std::make_shared<CountingAdapter>(target, latency);
        gateway.set_adapter(ModelRole::target, adapter, parallelism);
        evaluator = std::make_unique<Evaluator>(gateway, default_task_instruction(), cache, TargetSettings{},
                                                parallelism);
    }
};

// Each iteration uses a fresh prompt so no result comes from a cache.
PromptDocument fresh_prompt(std::size_t i) { return parse_prompt("# Notes\n- iteration " + std::to_string(i) + "\n"); }

void BM_EvaluateSerial(benchmark::State& state) {
    EvalRig rig(std::chrono::microseconds(state.range(0)), 1);
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(rig.evaluator->evaluate_serial(fresh_prompt(i++), rig.instances));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rig.instances.size()));
}
BENCHMARK(BM_EvaluateSerial)->Arg(0)->Arg(2000)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_EvaluateParallel(benchmark::State& state) {
    EvalRig rig(std::chrono::microseconds(state.range(0)), static_cast<std::size_t>(state.range(1)));
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(rig.evaluator->evaluate(fresh_prompt(i++), rig.instances));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rig.instances.size()));
}
BENCHMARK(BM_EvaluateParallel)
    ->Args({0, 4})
    ->Args({2000, 4})
    ->Args({2000, 16})
    ->UseRealTime()
    ->Unit(benchmark::kMillisecond);

KnowledgeTree wide_tree(std::size_t nodes) {
    std::mt19937_64 rng(9);
    KnowledgeTree t;
    std::vector<NodeId> topics{t.root()};
    while (t.size() < nodes) {
        auto parent = topics[rng() % topics.size()];
        if (rng() % 3 == 0 && t.node(parent).depth < 6) {
            topics.push_back(t.add_topic(parent, "topic"));
        } else {
            t.add_note(parent, "note");
        }
    }
    return t;
}

void BM_DetectViolations(benchmark::State& state) {
    auto t = wide_tree(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(detect_violations(t, 16, 8.0));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DetectViolations)->RangeMultiplier(8)->Range(64, 1 << 18)->Complexity(benchmark::oN);

void BM_RenderParse(benchmark::State& state) {
    auto text = render_prompt({{"Intro."}, wide_tree(static_cast<std::size_t>(state.range(0))), {}});
    for (auto _ : state) benchmark::DoNotOptimize(render_prompt(parse_prompt(text)));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_RenderParse)->Arg(1000)->Arg(20000);

void BM_FilterCandidates(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::vector<ScoredCandidate> c;
    for (int i = 0; i < state.range(0); ++i) {
        c.push_back({"c" + std::to_string(i), static_cast<int>(rng() % 11) - 5, static_cast<int>(rng() % 10), i < 2});
    }
    for (auto _ : state) benchmark::DoNotOptimize(filter_candidates(c, 2));
}
BENCHMARK(BM_FilterCandidates)->Arg(10)->Arg(1000);

} // namespace

BENCHMARK_MAIN();
