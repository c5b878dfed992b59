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

#include <atomic>
#include <chrono>
#include <cstring>
#include <set>
#include <thread>

#include "sdfmap/arch.hpp"
#include "sdfmap/errors.hpp"
#include "sdfmap/rt.hpp"
#include "sdfmap/sched.hpp"
#include "sdfmap/sdf.hpp"

using namespace sdfmap;
using namespace sdfmap::rt;

namespace {

sdf::Actor atomic_actor(std::string id) {
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

void pass_barrier(Fabric& f, int cores) {
    std::vector<std::thread> threads;
    for (int c = 0; c < cores; ++c) {
        threads.emplace_back([&f, c] { f.barrier(c); });
    }
    for (auto& t : threads) t.join();
}

std::vector<std::byte> iota_bytes(std::size_t n, int seed = 0) {
    std::vector<std::byte> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = static_cast<std::byte>((seed + static_cast<int>(i) * 37) & 0xff);
    }
    return v;
}

// Producer/consumer pair split across two cores: one 64-byte transfer.
struct CrossFixture {
    sdf::SdfGraph g;
    sdf::FiringDag dag;
    arch::ArchGraph arch;
    sched::TimedSchedule schedule;
    KernelRegistry registry;

    CrossFixture() {
        g.actors = {atomic_actor("A"), atomic_actor("B")};
        g.edges = {edge("A.o", "B.i", 16, 16, 4)};
        dag = sdf::expand(g);
        arch = arch::preset("dual");
        sched::ConstraintSet pins;
        pins.add("A", {"core0"});
        pins.add("B", {"core1"});
        schedule = sched::list_schedule(dag, arch,
                                        flat_cost({{"A", 100}, {"B", 100}}), pins);
        registry.add("A", [](KernelContext& ctx) {
            auto out = ctx.out("o");
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = static_cast<std::byte>(i & 0xff);
            }
        });
        registry.add("B", [](KernelContext& ctx) {
            const auto& in = ctx.in("i");
            ctx.external_output->assign(in.begin(), in.end());
        });
    }
};

int count_ops(const std::vector<ProgramOp>& seq, OpKind kind) {
    int n = 0;
    for (const ProgramOp& op : seq) n += op.kind == kind ? 1 : 0;
    return n;
}

std::vector<OpKind> kinds(const std::vector<ProgramOp>& seq) {
    std::vector<OpKind> v;
    for (const ProgramOp& op : seq) v.push_back(op.kind);
    return v;
}

}  // namespace

TEST_CASE("channel ids form a dense invertible map") {
    CHECK(channel_count(1) == 0);
    CHECK(channel_count(2) == 4);
    CHECK(channel_count(3) == 12);
    CHECK(channel_count(8) == 112);
    CHECK_THROWS_AS(channel_count(0), Error);
    CHECK_THROWS_AS(channel_count(9), Error);

    for (int cores = 2; cores <= 8; ++cores) {
        std::set<int> seen;
        for (int s = 0; s < cores; ++s) {
            for (int r = 0; r < cores; ++r) {
                if (s == r) continue;
                for (int kind = 0; kind < 2; ++kind) {
                    int id = encode_channel(cores, s, r, kind);
                    CHECK(id >= 0);
                    CHECK(id < channel_count(cores));
                    CHECK(id < 128);  // fits the 7-bit notification payload
                    CHECK(seen.insert(id).second);
                    ChannelRef ref = decode_channel(cores, id);
                    CHECK(ref.src_core == s);
                    CHECK(ref.dst_core == r);
                    CHECK(ref.kind == kind);
                }
            }
        }
        CHECK(static_cast<int>(seen.size()) == channel_count(cores));
    }

    CHECK_THROWS_AS(encode_channel(3, 1, 1, 0), Error);
    CHECK_THROWS_AS(encode_channel(3, 0, 3, 0), Error);
    CHECK_THROWS_AS(encode_channel(3, 0, 1, 2), Error);
    CHECK_THROWS_AS(decode_channel(3, 12), Error);
    CHECK_THROWS_AS(decode_channel(3, -1), Error);
}

TEST_CASE("channel map pairs frame and remainder channels") {
    auto map = channel_map(3);
    CHECK(map.size() == 6);
    std::set<int> ids;
    for (const auto& [pair, chans] : map) {
        CHECK(pair.first != pair.second);
        CHECK(chans.remainder == chans.frames + 1);
        ids.insert(chans.frames);
        ids.insert(chans.remainder);
    }
    CHECK(ids.size() == 12);
}

TEST_CASE("startup barrier gates notifications") {
    SUBCASE("single core passes immediately") {
        Fabric f(FabricOptions{.cores = 1});
        CHECK_FALSE(f.barrier_passed());
        f.barrier(0);
        CHECK(f.barrier_passed());
    }

    SUBCASE("notification before the barrier throws") {
        Fabric f(FabricOptions{.cores = 3});
        int buf = f.add_buffer(1, 16, "landing");
        CHECK_THROWS_AS(f.receive_publish(0, 1, buf), BarrierNotReachedError);
        CHECK_THROWS_AS(f.send(0, 1, {}, false), BarrierNotReachedError);
    }

    SUBCASE("three cores with staggered arrival") {
        Fabric f(FabricOptions{.cores = 3});
        int buf = f.add_buffer(1, 16, "landing");
        std::atomic<int> arrived{0};
        std::thread t1([&] {
            std::this_thread::sleep_for(std::chrono::milliseconds(40));
            arrived.fetch_add(1);
            f.barrier(1);
        });
        std::thread t2([&] {
            std::this_thread::sleep_for(std::chrono::milliseconds(80));
            arrived.fetch_add(1);
            f.barrier(2);
        });
        CHECK_THROWS_AS(f.receive_publish(0, 1, buf), BarrierNotReachedError);
        f.barrier(0);
        CHECK(arrived.load() == 2);  // barrier(0) returned only after everyone
        CHECK(f.barrier_passed());
        t1.join();
        t2.join();
        f.receive_publish(0, 1, buf);  // allowed now
    }
}

TEST_CASE("memory-pull transfer moves bytes and chains a remainder") {
    FabricOptions opts;
    opts.cores = 2;
    opts.frame_bytes = 30;
    Fabric f(opts);
    pass_barrier(f, 2);

    int src = f.add_buffer(0, 100, "src");
    int dst = f.add_buffer(1, 100, "dst");
    auto payload = iota_bytes(100, 7);
    std::memcpy(f.cached_data(src), payload.data(), payload.size());
    f.kernel_write(src);
    f.writeback(src);

    SUBCASE("send before publication throws in strict mode") {
        CHECK_THROWS_AS(f.send(0, 1, {{src, 0, 100}}, false), AddressNotPublishedError);
    }

    SUBCASE("publication then send delivers an exact copy") {
        f.receive_publish(0, 1, dst);
        SendReport rep = f.send(0, 1, {{src, 0, 100}}, false);
        CHECK(rep.frames == 3);
        CHECK(rep.remainder_bytes == 10);
        CHECK(rep.completion_channel == encode_channel(2, 0, 1, kRemainderKind));
        int chan = f.receive_wait(0, 1);
        CHECK(chan == rep.completion_channel);
        CHECK(std::memcmp(f.backing_data(dst), payload.data(), 100) == 0);
        f.invalidate(dst);
        f.kernel_read(dst);
        CHECK(std::memcmp(f.cached_data(dst), payload.data(), 100) == 0);
        CHECK(f.violations().empty());
    }

    SUBCASE("zero-byte message still completes on the remainder channel") {
        f.receive_publish(0, 1, dst);
        SendReport rep = f.send(0, 1, {}, false);
        CHECK(rep.frames == 0);
        CHECK(rep.remainder_bytes == 0);
        auto chan = f.try_receive_wait(0, 1, 200);
        REQUIRE(chan.has_value());
        CHECK(*chan == encode_channel(2, 0, 1, kRemainderKind));
    }
}

TEST_CASE("completions do not cross between pairs") {
    Fabric f(FabricOptions{.cores = 3});
    pass_barrier(f, 3);
    int a = f.add_buffer(1, 8, "a");
    int b = f.add_buffer(1, 8, "b");
    int src = f.add_buffer(2, 8, "src");
    f.writeback(src);

    f.receive_publish(0, 1, a);
    f.receive_publish(2, 1, b);
    f.send(2, 1, {{src, 0, 8}}, false);

    CHECK_FALSE(f.try_receive_wait(0, 1, 60).has_value());
    auto got = f.try_receive_wait(2, 1, 60);
    REQUIRE(got.has_value());
    ChannelRef ref = decode_channel(3, *got);
    CHECK(ref.src_core == 2);
    CHECK(ref.dst_core == 1);
    CHECK(ref.kind == kRemainderKind);
}

TEST_CASE("transfer cost model is logged, not slept") {
    FabricOptions opts;
    opts.cores = 2;
    opts.cost_latency_cycles = 2700.0;
    opts.cost_bytes_per_cycle = 1.6;
    Fabric f(opts);
    pass_barrier(f, 2);
    int src = f.add_buffer(0, 4800, "src");
    int dst = f.add_buffer(1, 4800, "dst");
    f.writeback(src);

    f.receive_publish(0, 1, dst);
    auto t0 = std::chrono::steady_clock::now();
    SendReport rep = f.send(0, 1, {{src, 0, 4800}}, false);
    auto wall = std::chrono::steady_clock::now() - t0;
    CHECK(rep.modeled_cycles == doctest::Approx(5700.0).epsilon(1e-12));
    CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(wall).count() < 200);
    REQUIRE(f.send_log().size() == 1);
    CHECK(f.send_log()[0].modeled_cycles == doctest::Approx(5700.0));
}

TEST_CASE("coherency auditor flags skipped maintenance") {
    auto fresh = [] {
        auto f = std::make_unique<Fabric>(FabricOptions{.cores = 2});
        pass_barrier(*f, 2);
        return f;
    };

    SUBCASE("full discipline runs clean") {
        auto f = fresh();
        int src = f->add_buffer(0, 32, "src");
        int dst = f->add_buffer(1, 32, "dst");
        auto bytes = iota_bytes(32);
        std::memcpy(f->cached_data(src), bytes.data(), 32);
        f->kernel_write(src);
        f->writeback(src);
        f->invalidate(dst);
        f->receive_publish(0, 1, dst);
        f->send(0, 1, {{src, 0, 32}}, false);
        f->receive_wait(0, 1);
        f->kernel_read(dst);
        CHECK(std::memcmp(f->cached_data(dst), bytes.data(), 32) == 0);
        CHECK(f->violations().empty());
    }

    SUBCASE("missing writeback is a stale send") {
        auto f = fresh();
        int src = f->add_buffer(0, 32, "src");
        int dst = f->add_buffer(1, 32, "dst");
        f->kernel_write(src);  // dirty, never written back
        f->receive_publish(0, 1, dst);
        f->send(0, 1, {{src, 0, 32}}, false);
        auto v = f->violations();
        REQUIRE(v.size() == 1);
        CHECK(v[0].kind == "stale-send");
        CHECK(v[0].buffer == "src");
    }

    SUBCASE("missing invalidate is a stale read") {
        auto f = fresh();
        int src = f->add_buffer(0, 32, "src");
        int dst = f->add_buffer(1, 32, "dst");
        f->writeback(src);
        f->receive_publish(0, 1, dst);
        f->send(0, 1, {{src, 0, 32}}, false);
        f->kernel_read(dst);  // no invalidate after the remote write
        auto v = f->violations();
        REQUIRE(v.size() == 1);
        CHECK(v[0].kind == "stale-read");
        CHECK(v[0].buffer == "dst");
    }

    SUBCASE("invalidate after arrival also satisfies the protocol") {
        auto f = fresh();
        int src = f->add_buffer(0, 32, "src");
        int dst = f->add_buffer(1, 32, "dst");
        f->writeback(src);
        f->receive_publish(0, 1, dst);
        f->send(0, 1, {{src, 0, 32}}, false);
        f->invalidate(dst);
        f->kernel_read(dst);
        CHECK(f->violations().empty());
    }

    SUBCASE("writeback is idempotent") {
        auto f = fresh();
        int src = f->add_buffer(0, 16, "src");
        f->kernel_write(src);
        f->writeback(src);
        f->writeback(src);
        int dst = f->add_buffer(1, 16, "dst");
        f->receive_publish(0, 1, dst);
        f->send(0, 1, {{src, 0, 16}}, false);
        CHECK(f->violations().empty());
    }
}

TEST_CASE("single cross-core arc generates the two-thread handshake") {
    CrossFixture fx;
    ProgramSet set = generate_programs(fx.dag, fx.schedule, fx.arch, fx.registry);

    REQUIRE(set.transfers.size() == 1);
    CHECK(set.semaphore_count() == 4);  // four per transfer, two per core
    int core0_sems = 0;
    int core1_sems = 0;
    for (const SemaphorePlan& s : set.semaphores) {
        (s.core == 0 ? core0_sems : core1_sems) += 1;
    }
    CHECK(core0_sems == 2);
    CHECK(core1_sems == 2);

    const TransferPlan& t = set.transfers[0];
    CHECK(t.src_core == 0);
    CHECK(t.dst_core == 1);
    CHECK(t.bytes == 64);
    ChannelRef ref = decode_channel(set.cores, t.remainder_channel);
    CHECK(ref.src_core == 0);
    CHECK(ref.dst_core == 1);
    CHECK(ref.kind == kRemainderKind);

    const CoreProgram& p0 = set.programs[0];
    const CoreProgram& p1 = set.programs[1];
    CHECK(kinds(p0.compute_seq) ==
          std::vector<OpKind>{OpKind::Barrier, OpKind::Pend, OpKind::Call, OpKind::Post});
    CHECK(kinds(p0.comm_seq) ==
          std::vector<OpKind>{OpKind::Barrier, OpKind::Pend, OpKind::Writeback,
                              OpKind::Send, OpKind::Post});
    CHECK(kinds(p1.comm_seq) ==
          std::vector<OpKind>{OpKind::Barrier, OpKind::Pend, OpKind::Invalidate,
                              OpKind::Receive, OpKind::Post});
    CHECK(kinds(p1.compute_seq) ==
          std::vector<OpKind>{OpKind::Barrier, OpKind::Pend, OpKind::Call, OpKind::Post});

    // Every semaphore is posted exactly once and pended exactly once.
    std::map<int, int> posts;
    std::map<int, int> pends;
    std::map<int, int> home;  // ops touch semaphores on their own core only
    for (const CoreProgram& p : set.programs) {
        for (const auto* seq : {&p.compute_seq, &p.comm_seq}) {
            for (const ProgramOp& op : *seq) {
                if (op.kind == OpKind::Post) {
                    posts[op.sem] += 1;
                    home[op.sem] = p.core;
                }
                if (op.kind == OpKind::Pend) {
                    pends[op.sem] += 1;
                    home[op.sem] = p.core;
                }
            }
        }
    }
    for (const auto& [sem, n] : posts) CHECK(n == 1);
    for (const auto& [sem, n] : pends) CHECK(n == 1);
    CHECK(posts.size() == 4);
    CHECK(pends.size() == 4);
    for (const auto& [sem, core] : home) {
        CHECK(core == set.semaphores[static_cast<std::size_t>(sem)].core);
    }
}

TEST_CASE("single-core mapping needs no communication thread work") {
    CrossFixture fx;
    arch::ArchGraph mono = arch::preset("mono");
    sched::TimedSchedule s =
        sched::list_schedule(fx.dag, mono, flat_cost({{"A", 100}, {"B", 100}}));
    ProgramSet set = generate_programs(fx.dag, s, mono, fx.registry);
    CHECK(set.transfers.empty());
    CHECK(set.semaphores.empty());
    REQUIRE(set.programs.size() == 1);
    CHECK(set.programs[0].comm_seq.empty());
    CHECK(count_ops(set.programs[0].compute_seq, OpKind::Call) == 2);
}

TEST_CASE("missing kernels are reported before execution") {
    CrossFixture fx;
    KernelRegistry partial;
    partial.add("A", [](KernelContext&) {});
    try {
        generate_programs(fx.dag, fx.schedule, fx.arch, partial);
        FAIL("expected UnregisteredKernelError");
    } catch (const UnregisteredKernelError& e) {
        CHECK(std::string(e.what()).find("B") != std::string::npos);
    }
}

TEST_CASE("threaded execution matches the sequential reference") {
    // Src -> Work (4 firings, split across cores) -> Sink, with int32 payloads.
    sdf::SdfGraph g;
    g.actors = {atomic_actor("Src"), atomic_actor("Work"), atomic_actor("Sink")};
    g.edges = {edge("Src.o", "Work.i", 8, 2, 4), edge("Work.o", "Sink.i", 1, 4, 4)};
    sdf::FiringDag dag = sdf::expand(g);
    REQUIRE(dag.nodes.size() == 6);

    KernelRegistry reg;
    reg.add("Src", [](KernelContext& ctx) {
        REQUIRE(ctx.external_input != nullptr);
        auto out = ctx.out("o");
        REQUIRE(ctx.external_input->size() == out.size());
        std::memcpy(out.data(), ctx.external_input->data(), out.size());
    });
    reg.add("Work", [](KernelContext& ctx) {
        const auto& in = ctx.in("i");
        std::int32_t a = 0;
        std::int32_t b = 0;
        std::memcpy(&a, in.data(), 4);
        std::memcpy(&b, in.data() + 4, 4);
        std::int32_t r = a * 3 + b + static_cast<std::int32_t>(ctx.firing);
        auto out = ctx.out("o");
        std::memcpy(out.data(), &r, 4);
    });
    reg.add("Sink", [](KernelContext& ctx) {
        const auto& in = ctx.in("i");
        ctx.external_output->assign(in.begin(), in.end());
    });

    InputBindings inputs;
    inputs["Src#0"] = iota_bytes(32, 3);

    arch::ArchGraph arch = arch::preset("dual");
    sched::ConstraintSet pins;
    pins.add("Src", {"core0"});
    pins.add("Sink", {"core1"});
    sched::TimedSchedule s = sched::list_schedule(
        dag, arch, flat_cost({{"Src", 50}, {"Work", 400}, {"Sink", 50}}), pins);

    ProgramSet set = generate_programs(dag, s, arch, reg);
    REQUIRE(!set.transfers.empty());

    auto expected = execute_reference(dag, reg, inputs);
    REQUIRE(expected.count("Sink#0") == 1);

    ExecutionResult run = execute(set, reg, inputs);
    CHECK(run.violations.empty());
    CHECK(run.transfer_count == static_cast<std::int64_t>(set.transfers.size()));
    CHECK(run.modeled_transfer_cycles > 0.0);
    CHECK(!run.trace.empty());
    REQUIRE(run.outputs.count("Sink#0") == 1);
    CHECK(run.outputs.at("Sink#0") == expected.at("Sink#0"));

    // The trace is totally ordered and covers both contexts of both cores.
    std::set<std::pair<int, char>> seen;
    for (const TraceRecord& rec : run.trace) seen.insert({rec.core, rec.context});
    CHECK(seen.size() == 4);
}

TEST_CASE("jittered executions stay byte-identical") {
    CrossFixture fx;
    ProgramSet set = generate_programs(fx.dag, fx.schedule, fx.arch, fx.registry);
    ExecOptions base;
    ExecutionResult first = execute(set, fx.registry, {}, base);
    REQUIRE(first.outputs.count("B#0") == 1);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        ExecOptions opts;
        opts.jitter = true;
        opts.seed = seed;
        ExecutionResult run = execute(set, fx.registry, {}, opts);
        CHECK(run.outputs.at("B#0") == first.outputs.at("B#0"));
        CHECK(run.violations.empty());
    }
}

TEST_CASE("quiescence watchdog reports the blocked op") {
    ProgramSet set;
    set.cores = 1;
    set.core_ids = {"core0"};
    set.semaphores.push_back(SemaphorePlan{0, "never", 0});
    CoreProgram prog;
    prog.core = 0;
    prog.op_id = "core0";
    prog.compute_seq.push_back(ProgramOp{OpKind::Barrier, -1, -1, -1, -1, "startup"});
    ProgramOp pend;
    pend.kind = OpKind::Pend;
    pend.sem = 0;
    pend.label = "never";
    prog.compute_seq.push_back(pend);
    set.programs.push_back(prog);

    KernelRegistry empty;
    ExecOptions opts;
    opts.watchdog_ms = 250;
    try {
        execute(set, empty, {}, opts);
        FAIL("expected DeadlockError");
    } catch (const DeadlockError& e) {
        std::string what = e.what();
        CHECK(what.find("core0.compute") != std::string::npos);
        CHECK(what.find("PEND") != std::string::npos);
        CHECK(what.find("never") != std::string::npos);
    }
}

TEST_CASE("kernel registry resolves exact paths before leaf names") {
    KernelRegistry reg;
    int hits_leaf = 0;
    int hits_exact = 0;
    reg.add("PowAcc", [&](KernelContext&) { hits_leaf += 1; });
    reg.add("Outer/PowAcc", [&](KernelContext&) { hits_exact += 1; });

    KernelContext ctx;
    (*reg.find("Outer/PowAcc"))(ctx);
    (*reg.find("Inner/Deep/PowAcc"))(ctx);
    (*reg.find("PowAcc"))(ctx);
    CHECK(hits_exact == 1);
    CHECK(hits_leaf == 2);
    CHECK(reg.find("Nowhere/Missing") == nullptr);
    CHECK(reg.has("Any/Path/PowAcc"));
}
