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

#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "sdfmap/arch.hpp"
#include "sdfmap/errors.hpp"
#include "sdfmap/sched.hpp"
#include "sdfmap/sdf.hpp"
#include "sdfmap/sim.hpp"

using namespace sdfmap;
using namespace sdfmap::sim;

namespace {

sdf::Actor atomic(std::string id) {
    sdf::Actor a;
    a.id = std::move(id);
    a.kind = sdf::ActorKind::Atomic;
    return a;
}

sdf::SdfEdge edge(std::string src, std::string dst, std::int64_t prod, std::int64_t cons,
                  std::int64_t token_bytes = 1) {
    auto split = [](const std::string& s) {
        auto dot = s.find('.');
        return sdf::Endpoint{s.substr(0, dot), s.substr(dot + 1)};
    };
    sdf::SdfEdge e;
    e.src = split(src);
    e.dst = split(dst);
    e.prod = prod;
    e.cons = cons;
    e.token_bytes = token_bytes;
    return e;
}

sched::TimingTable flat_cost(
    std::initializer_list<std::pair<const char*, std::int64_t>> rows) {
    sched::TimingTable t;
    for (const auto& [actor, cycles] : rows) t.add(actor, "*", cycles);
    return t;
}

// A -> {B, C}: the scheduler offloads C to core1 behind one 27-byte
// transfer (135 + 27/3.375 = 143 cycles).
struct ForkFixture {
    sdf::SdfGraph g;
    sdf::FiringDag dag;
    arch::ArchGraph arch;
    sched::TimedSchedule schedule;

    ForkFixture() {
        g.actors = {atomic("A"), atomic("B"), atomic("C")};
        g.edges = {edge("A.x", "B.i", 1, 1, 27), edge("A.y", "C.i", 1, 1, 27)};
        dag = sdf::expand(g);
        arch = arch::preset("dual");
        schedule = sched::list_schedule(
            dag, arch, flat_cost({{"A", 1000}, {"B", 1000}, {"C", 1000}}));
    }
};

const Event* find_event(const Timeline& t, const std::string& resource,
                        const std::string& label) {
    for (const auto& e : t.events)
        if (e.resource == resource && e.label == label) return &e;
    return nullptr;
}

int count_kind(const Timeline& t, EventKind k) {
    int n = 0;
    for (const auto& e : t.events) n += e.kind == k ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("replay reproduces a scheduler-produced timeline exactly") {
    ForkFixture f;
    Timeline t = simulate(f.dag, f.schedule, f.arch);

    CHECK(t.makespan_cycles == doctest::Approx(f.schedule.makespan_cycles).epsilon(1e-9));
    for (const auto& [op, slots] : f.schedule.compute_slots) {
        for (const auto& slot : slots) {
            const Event* e = find_event(t, op, f.dag.nodes[slot.node].str());
            REQUIRE(e != nullptr);
            CHECK(e->start_cycles == doctest::Approx(slot.start).epsilon(1e-6));
            CHECK(e->end_cycles == doctest::Approx(slot.end).epsilon(1e-6));
            CHECK(e->kind == EventKind::Compute);
        }
    }
    for (const auto& tr : f.schedule.transfers) {
        bool found = false;
        for (const auto& e : t.events) {
            if (e.kind != EventKind::Transfer || e.resource != tr.medium) continue;
            if (std::abs(e.start_cycles - tr.start) < 1e-6 &&
                std::abs(e.end_cycles - tr.end) < 1e-6)
                found = true;
        }
        CHECK(found);
    }
}

TEST_CASE("busy cycles and loads follow the busy/makespan identity") {
    ForkFixture f;
    Timeline t = simulate(f.dag, f.schedule, f.arch);

    CHECK(t.busy_cycles.at("core0") == doctest::Approx(2000.0));
    CHECK(t.busy_cycles.at("core1") == doctest::Approx(1000.0));
    CHECK(t.busy_cycles.at("dma") == doctest::Approx(143.0));
    for (const auto& [res, busy] : t.busy_cycles)
        CHECK(t.load.at(res) == doctest::Approx(busy / t.makespan_cycles));
}

TEST_CASE("idle operator time is reported as hollow wait events") {
    ForkFixture f;
    Timeline t = simulate(f.dag, f.schedule, f.arch);

    // core1 sits idle until the offloaded firing's data arrives at 1143.
    const Event* w = find_event(t, "core1", "wait");
    REQUIRE(w != nullptr);
    CHECK(w->kind == EventKind::Wait);
    CHECK(w->start_cycles == doctest::Approx(0.0));
    CHECK(w->end_cycles == doctest::Approx(1143.0));

    // Waits never count toward busy time.
    double core1_events = 0.0;
    for (const auto& e : t.events)
        if (e.resource == "core1" && e.kind != EventKind::Wait)
            core1_events += e.duration();
    CHECK(t.busy_cycles.at("core1") == doctest::Approx(core1_events));
}

TEST_CASE("deadline checks use inclusive pass semantics") {
    ForkFixture f;
    Timeline t = simulate(f.dag, f.schedule, f.arch);
    double m = t.makespan_cycles;

    auto exact = check_deadline(t, m);
    CHECK(exact.pass);
    CHECK(exact.slack_cycles == doctest::Approx(0.0));

    auto loose = check_deadline(t, m + 10.0);
    CHECK(loose.pass);
    CHECK(loose.slack_cycles == doctest::Approx(10.0));

    auto tight = check_deadline(t, m - 1.0);
    CHECK_FALSE(tight.pass);
    CHECK(tight.slack_cycles == doctest::Approx(-1.0));
}

TEST_CASE("single-channel contention serializes transfers on a medium") {
    // Two opposite-direction transfers are scheduled to overlap on the
    // non-blocking medium; single-channel mode forces them back to back.
    sdf::SdfGraph g;
    g.actors = {atomic("A"), atomic("B"), atomic("C"), atomic("D")};
    g.edges = {edge("A.o", "C.i", 1, 1, 100), edge("B.o", "D.i", 1, 1, 100)};
    auto dag = sdf::expand(g);
    auto arch = arch::preset("dual");

    sched::TimedSchedule s;
    s.mapping.assign(4, "");
    auto node = [&](const char* name) { return dag.node_index(name, 0); };
    s.mapping[node("A")] = "core0";
    s.mapping[node("B")] = "core1";
    s.mapping[node("C")] = "core1";
    s.mapping[node("D")] = "core0";
    const double dur = 135.0 + 100.0 / 3.375;
    s.compute_slots["core0"] = {{node("A"), 0.0, 100.0},
                                {node("D"), 100.0 + dur, 150.0 + dur}};
    s.compute_slots["core1"] = {{node("B"), 0.0, 100.0},
                                {node("C"), 100.0 + dur, 150.0 + dur}};
    sched::Transfer t1;
    t1.arcs = {0};
    t1.medium = "dma";
    t1.src_op = "core0";
    t1.dst_op = "core1";
    t1.start = 100.0;
    t1.end = 100.0 + dur;
    t1.bytes = 100;
    sched::Transfer t2 = t1;
    t2.arcs = {1};
    t2.src_op = "core1";
    t2.dst_op = "core0";
    s.transfers = {t1, t2};
    s.makespan_cycles = 150.0 + dur;
    sched::validate_schedule(s, dag, arch);

    Timeline free_run = simulate(dag, s, arch, ContentionMode::None);
    CHECK(free_run.makespan_cycles == doctest::Approx(150.0 + dur));

    Timeline serialized = simulate(dag, s, arch, ContentionMode::SingleChannel);
    CHECK(serialized.makespan_cycles == doctest::Approx(150.0 + 2.0 * dur));
    // The second transfer starts exactly when the first releases the medium.
    std::vector<const Event*> dma;
    for (const auto& e : serialized.events)
        if (e.resource == "dma") dma.push_back(&e);
    REQUIRE(dma.size() == 2);
    CHECK(dma[1]->start_cycles == doctest::Approx(dma[0]->end_cycles));
}

TEST_CASE("two-stage pipeline reaches a one-stage period") {
    sdf::SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 1, 1, 1)};
    auto dag = sdf::expand(g);

    // Near-free link so stage timing dominates.
    arch::ArchGraph arch = arch::preset("dual");
    arch.media[0].latency_cycles = 0.0;
    arch.media[0].bytes_per_cycle = 1e9;

    sched::ConstraintSet pin;
    pin.add("A", {"core0"});
    pin.add("B", {"core1"});
    auto s = sched::list_schedule(dag, arch, flat_cost({{"A", 100}, {"B", 100}}),
                                  pin);

    auto r = simulate_pipelined(dag, s, arch, 4);
    CHECK(r.latency_cycles == doctest::Approx(200.0).epsilon(1e-4));
    CHECK(r.period_cycles == doctest::Approx(100.0).epsilon(1e-4));
    CHECK(r.stages.at("core0") == std::vector<std::string>{"A"});
    CHECK(r.stages.at("core1") == std::vector<std::string>{"B"});

    // Period can never beat the busiest stage.
    Timeline single = simulate(dag, s, arch);
    double max_busy = 0.0;
    for (const auto& [op, slots] : s.compute_slots) {
        (void)slots;
        max_busy = std::max(max_busy, single.busy_cycles.at(op));
    }
    CHECK(r.period_cycles >= max_busy - 1e-6);
}

TEST_CASE("a lone actor pipelines with period equal to latency") {
    sdf::SdfGraph g;
    g.actors = {atomic("A")};
    auto dag = sdf::expand(g);
    auto arch = arch::preset("mono");
    auto s = sched::list_schedule(dag, arch, flat_cost({{"A", 100}}));

    auto r = simulate_pipelined(dag, s, arch, 3);
    CHECK(r.latency_cycles == doctest::Approx(100.0));
    CHECK(r.period_cycles == doctest::Approx(100.0));
    CHECK(r.stages.at("core0") == std::vector<std::string>{"A"});
}

TEST_CASE("gantt exports are deterministic and carry the same numbers") {
    ForkFixture f;
    Timeline t = simulate(f.dag, f.schedule, f.arch);

    std::string svg1 = export_gantt_svg(t);
    std::string svg2 = export_gantt_svg(t);
    CHECK(svg1 == svg2);
    CHECK(svg1.find("<svg") != std::string::npos);
    CHECK(svg1.find("class=\"w\"") != std::string::npos);   // hollow wait bar
    CHECK(svg1.find("class=\"t\"") != std::string::npos);   // transfer bar

    std::string json1 = export_gantt_json(t);
    CHECK(json1 == export_gantt_json(t));
    auto doc = nlohmann::json::parse(json1);
    CHECK(std::abs(doc["makespan_cycles"].get<double>() - t.makespan_cycles) <
          0.001);
    int events = 0;
    for (const auto& res : doc["resources"]) {
        events += static_cast<int>(res["events"].size());
        double busy = t.busy_cycles.count(res["id"].get<std::string>()) != 0U
                          ? t.busy_cycles.at(res["id"].get<std::string>())
                          : 0.0;
        CHECK(std::abs(res["busy_cycles"].get<double>() - busy) < 0.001);
    }
    CHECK(events == static_cast<int>(t.events.size()));
}

TEST_CASE("empty schedules simulate to an empty timeline") {
    sdf::SdfGraph g;
    auto dag = sdf::expand(g);
    auto arch = arch::preset("mono");
    auto s = sched::list_schedule(dag, arch, sched::TimingTable{});

    Timeline t = simulate(dag, s, arch);
    CHECK(t.makespan_cycles == doctest::Approx(0.0));
    CHECK(t.events.empty());
    CHECK(count_kind(t, EventKind::Wait) == 0);
    CHECK(check_deadline(t, 0.0).pass);
    CHECK(export_gantt_svg(t).find("<svg") != std::string::npos);
    CHECK(nlohmann::json::parse(export_gantt_json(t)).contains("resources"));
}
