/*
 * Copyright 2026 The sdfmap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <benchmark/benchmark.h>

#include <random>

#include "sdfmap/arch.hpp"
#include "sdfmap/dsp.hpp"
#include "sdfmap/rach.hpp"
#include "sdfmap/rt.hpp"
#include "sdfmap/sched.hpp"
#include "sdfmap/sdf.hpp"
#include "sdfmap/sim.hpp"

using namespace sdfmap;

namespace {

// Shared fixtures, built once. The detection graph expands to 1357 firings.
const sdf::SdfGraph& detection_graph() {
    static const sdf::SdfGraph g = rach::build_detection_graph(rach::desk_config());
    return g;
}

const sdf::SdfGraph& flat_graph() {
    static const sdf::SdfGraph g = sdf::flatten(detection_graph());
    return g;
}

const sdf::FiringDag& firing_dag() {
    static const sdf::FiringDag dag = sdf::expand(flat_graph());
    return dag;
}

const sched::TimingTable& timings() {
    static const sched::TimingTable t = rach::reference_timings();
    return t;
}

const sched::TimedSchedule& tri_schedule() {
    static const sched::TimedSchedule s =
        sched::list_schedule(firing_dag(), arch::preset("tri_sym"), timings());
    return s;
}

dsp::cvec random_signal(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    dsp::cvec v(n);
    for (auto& x : v) x = {gauss(rng), gauss(rng)};
    return v;
}

void BM_Flatten(benchmark::State& state) {
    const auto& g = detection_graph();
    for (auto _ : state) {
        auto flat = sdf::flatten(g);
        benchmark::DoNotOptimize(flat.actors.size());
    }
}
BENCHMARK(BM_Flatten);

void BM_RepetitionVector(benchmark::State& state) {
    const auto& g = flat_graph();
    for (auto _ : state) {
        auto reps = sdf::repetition_vector(g);
        benchmark::DoNotOptimize(reps.size());
    }
}
BENCHMARK(BM_RepetitionVector);

void BM_Expand(benchmark::State& state) {
    const auto& g = flat_graph();
    for (auto _ : state) {
        auto dag = sdf::expand(g);
        benchmark::DoNotOptimize(dag.nodes.size());
    }
    state.counters["firings"] = double(sdf::expand(g).nodes.size());
}
BENCHMARK(BM_Expand);

void BM_ScheduleExpression(benchmark::State& state) {
    const auto& g = detection_graph();
    for (auto _ : state) {
        auto expr = sdf::schedule_expression(g);
        benchmark::DoNotOptimize(expr.size());
    }
}
BENCHMARK(BM_ScheduleExpression);

void BM_ListSchedule(benchmark::State& state) {
    const auto& dag = firing_dag();
    const auto a = arch::preset("tri_sym");
    const auto& t = timings();
    for (auto _ : state) {
        auto s = sched::list_schedule(dag, a, t);
        benchmark::DoNotOptimize(s.makespan_cycles);
    }
}
BENCHMARK(BM_ListSchedule);

void BM_ReduceSyncs(benchmark::State& state) {
    const auto& dag = firing_dag();
    const auto a = arch::preset("tri_sym");
    const auto& s = tri_schedule();
    for (auto _ : state) {
        auto reduced = sched::reduce_syncs(s, dag, a);
        benchmark::DoNotOptimize(reduced.sync_count());
    }
}
BENCHMARK(BM_ReduceSyncs);

void BM_Simulate(benchmark::State& state) {
    const auto& dag = firing_dag();
    const auto a = arch::preset("tri_sym");
    const auto& s = tri_schedule();
    for (auto _ : state) {
        auto timeline = sim::simulate(dag, s, a);
        benchmark::DoNotOptimize(timeline.makespan_cycles);
    }
}
BENCHMARK(BM_Simulate);

void BM_TransferCycles(benchmark::State& state) {
    const auto a = arch::preset("tri_sym");
    const auto* dma = a.find_medium("dma");
    std::int64_t bytes = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(arch::transfer_cycles(*dma, bytes));
        bytes = (bytes + 4800) & 0xfffff;
    }
}
BENCHMARK(BM_TransferCycles);

// Power-of-two sizes run radix-2; any other size goes through Bluestein.
void BM_Fft(benchmark::State& state) {
    auto signal = random_signal(std::size_t(state.range(0)), 7);
    for (auto _ : state) {
        auto spectrum = dsp::fft(signal);
        benchmark::DoNotOptimize(spectrum.data());
    }
}
BENCHMARK(BM_Fft)->Arg(139)->Arg(1024)->Arg(1112);

void BM_CircularCorrelate(benchmark::State& state) {
    const auto n = std::size_t(state.range(0));
    auto a = random_signal(n, 11);
    auto b = random_signal(n, 13);
    for (auto _ : state) {
        auto c = dsp::circular_correlate(a, b);
        benchmark::DoNotOptimize(c.data());
    }
}
BENCHMARK(BM_CircularCorrelate)->Arg(139)->Arg(839);

void BM_DetectSlot(benchmark::State& state) {
    const auto cfg = rach::desk_config();
    std::mt19937_64 rng(3);
    const auto streams =
        rach::synth_slot(cfg, {{17, 40, 1.0}, {52, 120, 1.0}}, 0.1, rng);
    for (auto _ : state) {
        auto report = rach::detect(streams, cfg);
        benchmark::DoNotOptimize(report.detections.size());
    }
}
BENCHMARK(BM_DetectSlot);

void BM_ReferenceExecute(benchmark::State& state) {
    const auto cfg = rach::desk_config();
    rt::KernelRegistry registry;
    rach::register_kernels(registry, cfg);
    std::mt19937_64 rng(5);
    const auto streams = rach::synth_slot(cfg, {{9, 56, 1.0}}, 0.1, rng);
    const auto bindings = rach::make_input_bindings(streams, cfg);
    const auto& dag = firing_dag();
    for (auto _ : state) {
        auto outputs = rt::execute_reference(dag, registry, bindings);
        benchmark::DoNotOptimize(outputs.size());
    }
}
BENCHMARK(BM_ReferenceExecute);

// Full six-thread execution of the 1357-firing application over the fabric.
void BM_ThreadedExecute(benchmark::State& state) {
    const auto cfg = rach::desk_config();
    rt::KernelRegistry registry;
    rach::register_kernels(registry, cfg);
    std::mt19937_64 rng(5);
    const auto streams = rach::synth_slot(cfg, {{9, 56, 1.0}}, 0.1, rng);
    const auto bindings = rach::make_input_bindings(streams, cfg);
    const auto a = arch::preset("tri_sym");
    const auto programs =
        rt::generate_programs(firing_dag(), tri_schedule(), a, registry);
    for (auto _ : state) {
        auto result = rt::execute(programs, registry, bindings);
        benchmark::DoNotOptimize(result.transfer_count);
    }
}
BENCHMARK(BM_ThreadedExecute)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
