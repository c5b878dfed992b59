// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdfmap/rt.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <semaphore>
#include <set>
#include <sstream>
#include <thread>

#include "sdfmap/errors.hpp"

namespace sdfmap::rt {

namespace {

std::string pair_str(int s, int r) {
    return "(" + std::to_string(s) + " -> " + std::to_string(r) + ")";
}

void check_core_count(int cores) {
    if (cores < 1 || cores > kMaxCores) {
        throw Error("core count must be in [1, " + std::to_string(kMaxCores) +
                    "], got " + std::to_string(cores));
    }
}

void check_pair(int cores, int src, int dst) {
    check_core_count(cores);
    if (src < 0 || src >= cores || dst < 0 || dst >= cores) {
        throw Error("channel endpoint out of range for " + std::to_string(cores) +
                    " cores: " + pair_str(src, dst));
    }
    if (src == dst) {
        throw Error("channel endpoints must differ: " + pair_str(src, dst));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Channel map
// ---------------------------------------------------------------------------

int channel_count(int cores) {
    check_core_count(cores);
    return 2 * cores * (cores - 1);
}

int encode_channel(int cores, int src_core, int dst_core, int kind) {
    check_pair(cores, src_core, dst_core);
    if (kind != kFramesKind && kind != kRemainderKind) {
        throw Error("channel kind must be 0 (frames) or 1 (remainder), got " +
                    std::to_string(kind));
    }
    int rank = dst_core < src_core ? dst_core : dst_core - 1;
    return 2 * (src_core * (cores - 1) + rank) + kind;
}

ChannelRef decode_channel(int cores, int id) {
    check_core_count(cores);
    if (id < 0 || id >= channel_count(cores)) {
        throw Error("channel id out of range: " + std::to_string(id));
    }
    ChannelRef ref;
    ref.kind = id & 1;
    int pair = id >> 1;
    ref.src_core = pair / (cores - 1);
    int rank = pair % (cores - 1);
    ref.dst_core = rank < ref.src_core ? rank : rank + 1;
    return ref;
}

std::map<std::pair<int, int>, ChannelPair> channel_map(int cores) {
    check_core_count(cores);
    std::map<std::pair<int, int>, ChannelPair> out;
    for (int s = 0; s < cores; ++s) {
        for (int r = 0; r < cores; ++r) {
            if (s == r) continue;
            out[{s, r}] = ChannelPair{encode_channel(cores, s, r, kFramesKind),
                                      encode_channel(cores, s, r, kRemainderKind)};
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

std::int64_t KernelContext::param(const std::string& key, std::int64_t fallback) const {
    if (!params) return fallback;
    auto it = params->find(key);
    return it == params->end() ? fallback : it->second;
}

const std::vector<std::byte>& KernelContext::in(const std::string& port) const {
    auto it = inputs.find(port);
    if (it == inputs.end()) {
        throw SemanticError("kernel input port not bound: " + actor + "." + port);
    }
    return it->second;
}

std::span<std::byte> KernelContext::out(const std::string& port) {
    auto it = outputs.find(port);
    if (it == outputs.end()) {
        throw SemanticError("kernel output port not bound: " + actor + "." + port);
    }
    return it->second;
}

void KernelRegistry::add(const std::string& name, Kernel kernel) {
    kernels_[name] = std::move(kernel);
}

const Kernel* KernelRegistry::find(const std::string& actor_path) const {
    auto it = kernels_.find(actor_path);
    if (it != kernels_.end()) return &it->second;
    it = kernels_.find(sdf::leaf_name(actor_path));
    if (it != kernels_.end()) return &it->second;
    return nullptr;
}

bool KernelRegistry::has(const std::string& actor_path) const {
    return find(actor_path) != nullptr;
}

// ---------------------------------------------------------------------------
// Fabric
// ---------------------------------------------------------------------------

namespace {

struct BufferState {
    std::vector<std::byte> cached;
    std::vector<std::byte> backing;
    std::string label;
    int owner = -1;
    bool dirty = false;             // cached modified since last writeback
    bool needs_invalidate = false;  // backing newer, invalidate not yet issued
    bool refresh_armed = false;     // invalidate issued, refresh on next read
    bool stale_read_reported = false;
};

struct PairState {
    int published = -1;  // depth-1 scratch slot holding the landing buffer
    std::deque<int> completions;
};

}  // namespace

struct Fabric::Impl {
    mutable std::mutex mu;
    mutable std::condition_variable cv;
    std::deque<BufferState> buffers;
    std::map<std::pair<int, int>, PairState> pairs;
    int barrier_count = 0;
    bool barrier_done = false;
    bool abort = false;
    std::vector<Violation> violations;
    std::vector<SendReport> sends;

    void check_abort_locked() const {
        if (abort) throw Error("fabric aborted");
    }
    void check_barrier_locked() const {
        if (!barrier_done) {
            throw BarrierNotReachedError(
                "notification raised before the startup barrier completed");
        }
    }
    BufferState& buffer_locked(int id) {
        if (id < 0 || static_cast<std::size_t>(id) >= buffers.size()) {
            throw Error("unknown buffer id: " + std::to_string(id));
        }
        return buffers[static_cast<std::size_t>(id)];
    }
};

Fabric::Fabric(FabricOptions options) : options_(options), impl_(new Impl) {
    check_core_count(options_.cores);
    if (options_.frame_bytes < 1) {
        throw Error("frame size must be >= 1 byte");
    }
}

Fabric::~Fabric() = default;

void Fabric::barrier(int core) {
    if (core < 0 || core >= options_.cores) {
        throw Error("barrier core out of range: " + std::to_string(core));
    }
    std::unique_lock lk(impl_->mu);
    impl_->check_abort_locked();
    impl_->barrier_count += 1;
    if (impl_->barrier_count >= options_.cores) {
        impl_->barrier_done = true;
        impl_->cv.notify_all();
        return;
    }
    impl_->cv.wait(lk, [&] { return impl_->barrier_done || impl_->abort; });
    impl_->check_abort_locked();
}

void Fabric::wait_barrier() const {
    std::unique_lock lk(impl_->mu);
    impl_->cv.wait(lk, [&] { return impl_->barrier_done || impl_->abort; });
    impl_->check_abort_locked();
}

bool Fabric::barrier_passed() const {
    std::lock_guard lk(impl_->mu);
    return impl_->barrier_done;
}

int Fabric::add_buffer(int owner_core, std::int64_t bytes, std::string label) {
    if (bytes < 0) throw Error("buffer size must be >= 0");
    std::lock_guard lk(impl_->mu);
    BufferState b;
    b.cached.resize(static_cast<std::size_t>(bytes));
    b.backing.resize(static_cast<std::size_t>(bytes));
    b.label = std::move(label);
    b.owner = owner_core;
    impl_->buffers.push_back(std::move(b));
    return static_cast<int>(impl_->buffers.size()) - 1;
}

std::int64_t Fabric::buffer_bytes(int buffer) const {
    std::lock_guard lk(impl_->mu);
    return static_cast<std::int64_t>(impl_->buffer_locked(buffer).cached.size());
}

const std::string& Fabric::buffer_label(int buffer) const {
    std::lock_guard lk(impl_->mu);
    return impl_->buffer_locked(buffer).label;
}

std::byte* Fabric::cached_data(int buffer) {
    std::lock_guard lk(impl_->mu);
    return impl_->buffer_locked(buffer).cached.data();
}

const std::byte* Fabric::backing_data(int buffer) const {
    std::lock_guard lk(impl_->mu);
    return impl_->buffer_locked(buffer).backing.data();
}

void Fabric::kernel_write(int buffer) {
    std::lock_guard lk(impl_->mu);
    impl_->buffer_locked(buffer).dirty = true;
}

void Fabric::kernel_read(int buffer) {
    std::lock_guard lk(impl_->mu);
    BufferState& b = impl_->buffer_locked(buffer);
    if (b.needs_invalidate) {
        if (options_.audit && !b.stale_read_reported) {
            impl_->violations.push_back(
                {"stale-read", b.label,
                 "kernel read after a remote write with no invalidate"});
            b.stale_read_reported = true;
        }
    }
    if (b.refresh_armed) {
        b.cached = b.backing;
        b.refresh_armed = false;
    }
}

void Fabric::writeback(int buffer) {
    std::lock_guard lk(impl_->mu);
    BufferState& b = impl_->buffer_locked(buffer);
    b.backing = b.cached;
    b.dirty = false;
}

void Fabric::invalidate(int buffer) {
    std::lock_guard lk(impl_->mu);
    BufferState& b = impl_->buffer_locked(buffer);
    b.refresh_armed = true;
    b.needs_invalidate = false;
}

void Fabric::receive_publish(int src_core, int dst_core, int dst_buffer) {
    check_pair(options_.cores, src_core, dst_core);
    std::lock_guard lk(impl_->mu);
    impl_->check_abort_locked();
    impl_->check_barrier_locked();
    impl_->buffer_locked(dst_buffer);
    PairState& p = impl_->pairs[{src_core, dst_core}];
    if (p.published != -1) {
        throw Error("landing address already published for pair " +
                    pair_str(src_core, dst_core));
    }
    p.published = dst_buffer;
    impl_->cv.notify_all();
}

int Fabric::receive_wait(int src_core, int dst_core) {
    check_pair(options_.cores, src_core, dst_core);
    std::unique_lock lk(impl_->mu);
    PairState& p = impl_->pairs[{src_core, dst_core}];
    impl_->cv.wait(lk, [&] { return !p.completions.empty() || impl_->abort; });
    impl_->check_abort_locked();
    int channel = p.completions.front();
    p.completions.pop_front();
    return channel;
}

std::optional<int> Fabric::try_receive_wait(int src_core, int dst_core,
                                            int timeout_ms) {
    check_pair(options_.cores, src_core, dst_core);
    std::unique_lock lk(impl_->mu);
    PairState& p = impl_->pairs[{src_core, dst_core}];
    bool ok = impl_->cv.wait_for(lk, std::chrono::milliseconds(timeout_ms), [&] {
        return !p.completions.empty() || impl_->abort;
    });
    impl_->check_abort_locked();
    if (!ok || p.completions.empty()) return std::nullopt;
    int channel = p.completions.front();
    p.completions.pop_front();
    return channel;
}

SendReport Fabric::send(int src_core, int dst_core,
                        const std::vector<Slice>& slices,
                        bool wait_for_publication, double modeled_cycles) {
    check_pair(options_.cores, src_core, dst_core);
    std::unique_lock lk(impl_->mu);
    impl_->check_abort_locked();
    impl_->check_barrier_locked();
    PairState& p = impl_->pairs[{src_core, dst_core}];
    if (p.published == -1) {
        if (!wait_for_publication) {
            throw AddressNotPublishedError(
                "send on pair " + pair_str(src_core, dst_core) +
                " before the receiver published a landing address");
        }
        impl_->cv.wait(lk, [&] { return p.published != -1 || impl_->abort; });
        impl_->check_abort_locked();
    }
    int dst_buffer = p.published;
    p.published = -1;

    BufferState& dst = impl_->buffer_locked(dst_buffer);
    std::int64_t total = 0;
    for (const Slice& s : slices) total += s.bytes;
    if (total > static_cast<std::int64_t>(dst.backing.size())) {
        throw Error("send of " + std::to_string(total) +
                    " bytes overflows landing buffer '" + dst.label + "'");
    }
    std::int64_t cursor = 0;
    for (const Slice& s : slices) {
        if (s.bytes == 0) continue;
        BufferState& src = impl_->buffer_locked(s.src_buffer);
        if (s.src_offset < 0 ||
            s.src_offset + s.bytes > static_cast<std::int64_t>(src.backing.size())) {
            throw Error("send slice out of range in buffer '" + src.label + "'");
        }
        if (options_.audit && src.dirty) {
            impl_->violations.push_back(
                {"stale-send", src.label,
                 "send while the cached copy is dirty (missing writeback)"});
        }
        std::memcpy(dst.backing.data() + cursor, src.backing.data() + s.src_offset,
                    static_cast<std::size_t>(s.bytes));
        cursor += s.bytes;
    }
    if (total > 0) {
        dst.needs_invalidate = !dst.refresh_armed;
        dst.stale_read_reported = false;
    }

    SendReport rep;
    rep.frames = total / options_.frame_bytes;
    rep.remainder_bytes = total % options_.frame_bytes;
    rep.completion_channel =
        encode_channel(options_.cores, src_core, dst_core, kRemainderKind);
    if (modeled_cycles < 0.0) {
        modeled_cycles = options_.cost_bytes_per_cycle > 0.0
                             ? options_.cost_latency_cycles +
                                   static_cast<double>(total) / options_.cost_bytes_per_cycle
                             : 0.0;
    }
    rep.modeled_cycles = modeled_cycles;
    impl_->sends.push_back(rep);

    if (options_.throttle_ns_per_cycle > 0.0 && modeled_cycles > 0.0) {
        lk.unlock();
        auto ns = static_cast<std::int64_t>(modeled_cycles * options_.throttle_ns_per_cycle);
        std::this_thread::sleep_for(std::chrono::nanoseconds(ns));
        lk.lock();
        impl_->check_abort_locked();
    }
    impl_->pairs[{src_core, dst_core}].completions.push_back(rep.completion_channel);
    impl_->cv.notify_all();
    return rep;
}

void Fabric::request_abort() {
    std::lock_guard lk(impl_->mu);
    impl_->abort = true;
    impl_->cv.notify_all();
}

bool Fabric::aborted() const {
    std::lock_guard lk(impl_->mu);
    return impl_->abort;
}

std::vector<Violation> Fabric::violations() const {
    std::lock_guard lk(impl_->mu);
    return impl_->violations;
}

std::vector<SendReport> Fabric::send_log() const {
    std::lock_guard lk(impl_->mu);
    return impl_->sends;
}

// ---------------------------------------------------------------------------
// Program generation
// ---------------------------------------------------------------------------

namespace {

struct ArcCoords {
    std::int64_t src_offset = 0;  // into the producer's staging buffer
    std::int64_t dst_offset = 0;  // into the consumer's assembled port
    std::int64_t bytes = 0;
    std::string src_port;
    std::string dst_port;
};

ArcCoords arc_coords(const sdf::FiringDag& dag, const sdf::DagArc& arc) {
    const sdf::SdfEdge& e = dag.graph.edges[static_cast<std::size_t>(arc.edge)];
    ArcCoords c;
    std::int64_t src_firing = dag.nodes[static_cast<std::size_t>(arc.src)].index;
    std::int64_t dst_firing = dag.nodes[static_cast<std::size_t>(arc.dst)].index;
    c.src_offset = (arc.first_token - src_firing * e.prod) * e.token_bytes;
    c.dst_offset = (e.delay + arc.first_token - dst_firing * e.cons) * e.token_bytes;
    c.bytes = arc.token_count * e.token_bytes;
    c.src_port = e.src.port;
    c.dst_port = e.dst.port;
    return c;
}

// Staging buffers and per-node port plans, before any copies are attached.
struct NodeLayout {
    std::vector<NodePlan> nodes;
    std::vector<BufferPlan> buffers;
    // (node, out port) -> staging buffer index
    std::map<std::pair<std::int32_t, std::string>, int> staging;
};

NodeLayout build_node_layout(const sdf::FiringDag& dag,
                             const std::vector<int>& node_core) {
    NodeLayout lay;
    lay.nodes.resize(dag.nodes.size());
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
        const sdf::Firing& f = dag.nodes[i];
        NodePlan& plan = lay.nodes[i];
        plan.actor = f.actor;
        plan.firing = f.index;
        const sdf::Actor* actor = dag.graph.find_actor(f.actor);
        if (actor) plan.params = actor->params;

        std::map<std::string, std::int64_t> out_bytes;
        std::map<std::string, std::int64_t> in_bytes;
        for (const sdf::SdfEdge& e : dag.graph.edges) {
            if (e.src.actor == f.actor) {
                std::int64_t n = e.prod * e.token_bytes;
                auto [it, fresh] = out_bytes.try_emplace(e.src.port, n);
                if (!fresh) it->second = std::max(it->second, n);
            }
            if (e.dst.actor == f.actor) {
                std::int64_t n = e.cons * e.token_bytes;
                auto [it, fresh] = in_bytes.try_emplace(e.dst.port, n);
                if (!fresh) it->second = std::max(it->second, n);
            }
        }
        for (const auto& [port, bytes] : in_bytes) {
            plan.inputs.push_back(InputPortPlan{port, bytes, {}});
        }
        for (const auto& [port, bytes] : out_bytes) {
            BufferPlan buf;
            buf.role = BufferRole::Staging;
            buf.label = f.str() + "." + port;
            buf.owner_core = node_core[i];
            buf.bytes = bytes;
            int id = static_cast<int>(lay.buffers.size());
            lay.buffers.push_back(std::move(buf));
            lay.staging[{static_cast<std::int32_t>(i), port}] = id;
            plan.outputs.push_back(OutputPortPlan{port, bytes, id});
        }
    }
    return lay;
}

InputPortPlan* find_input(NodePlan& plan, const std::string& port) {
    for (InputPortPlan& p : plan.inputs) {
        if (p.port == port) return &p;
    }
    return nullptr;
}

void check_kernels(const sdf::FiringDag& dag, const KernelRegistry& registry) {
    std::set<std::string> missing;
    for (const sdf::Firing& f : dag.nodes) {
        if (!registry.has(f.actor)) missing.insert(f.actor);
    }
    if (!missing.empty()) {
        std::string list;
        for (const std::string& m : missing) {
            if (!list.empty()) list += ", ";
            list += m;
        }
        throw UnregisteredKernelError("no kernel registered for: " + list);
    }
}

}  // namespace

ProgramSet generate_programs(const sdf::FiringDag& dag,
                             const sched::TimedSchedule& schedule,
                             const arch::ArchGraph& arch,
                             const KernelRegistry& registry,
                             const sched::BufferPlacement* placement) {
    sched::validate_schedule(schedule, dag, arch);
    check_kernels(dag, registry);

    ProgramSet set;
    set.cores = static_cast<int>(arch.operators.size());
    check_core_count(set.cores);
    for (const arch::Operator& op : arch.operators) set.core_ids.push_back(op.id);

    std::vector<int> node_core(dag.nodes.size(), 0);
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
        node_core[i] = arch.operator_index(schedule.mapping[i]);
    }

    NodeLayout lay = build_node_layout(dag, node_core);
    set.nodes = std::move(lay.nodes);
    set.buffers = std::move(lay.buffers);

    // Slot order per core and a global position for each node.
    std::vector<std::vector<std::int32_t>> core_slots(
        static_cast<std::size_t>(set.cores));
    std::vector<std::int64_t> node_pos(dag.nodes.size(), 0);
    {
        std::int64_t pos = 0;
        struct SlotRef {
            double start;
            std::int32_t node;
        };
        std::vector<SlotRef> all;
        for (const auto& [op, slots] : schedule.compute_slots) {
            for (const sched::ComputeSlot& s : slots) all.push_back({s.start, s.node});
        }
        std::sort(all.begin(), all.end(), [](const SlotRef& a, const SlotRef& b) {
            return a.start != b.start ? a.start < b.start : a.node < b.node;
        });
        for (const SlotRef& s : all) {
            node_pos[static_cast<std::size_t>(s.node)] = pos++;
            core_slots[static_cast<std::size_t>(node_core[static_cast<std::size_t>(s.node)])]
                .push_back(s.node);
        }
    }

    // Transfers in start order; arcs keep the schedule's per-transfer order.
    std::vector<int> transfer_order(schedule.transfers.size());
    for (std::size_t i = 0; i < transfer_order.size(); ++i) {
        transfer_order[i] = static_cast<int>(i);
    }
    std::sort(transfer_order.begin(), transfer_order.end(), [&](int a, int b) {
        double sa = schedule.transfers[static_cast<std::size_t>(a)].start;
        double sb = schedule.transfers[static_cast<std::size_t>(b)].start;
        return sa != sb ? sa < sb : a < b;
    });

    struct TransferMeta {
        int first_producer = -1;  // node that posts data-ready last / first
        int last_producer = -1;
        int first_consumer = -1;
        int last_consumer = -1;
        int sem_ready = -1;
        int sem_space = -1;
        int sem_arrived = -1;
        int sem_avail = -1;
    };
    std::vector<TransferMeta> meta(schedule.transfers.size());

    for (int tk : transfer_order) {
        const sched::Transfer& tr = schedule.transfers[static_cast<std::size_t>(tk)];
        int src_core = arch.operator_index(tr.src_op);
        int dst_core = arch.operator_index(tr.dst_op);
        int index = static_cast<int>(set.transfers.size());

        TransferPlan plan;
        plan.src_core = src_core;
        plan.dst_core = dst_core;
        plan.frames_channel = encode_channel(set.cores, src_core, dst_core, kFramesKind);
        plan.remainder_channel =
            encode_channel(set.cores, src_core, dst_core, kRemainderKind);
        plan.bytes = tr.bytes;
        if (const arch::Medium* m = arch.find_medium(tr.medium)) {
            plan.cost_latency_cycles = m->latency_cycles;
            plan.cost_bytes_per_cycle = m->bytes_per_cycle;
        }
        plan.label = "t" + std::to_string(index) + " " + tr.src_op + ">" + tr.dst_op;

        BufferPlan landing;
        landing.role = BufferRole::Landing;
        landing.label = "t" + std::to_string(index) + ".landing";
        landing.owner_core = dst_core;
        landing.bytes = tr.bytes;
        plan.landing_buffer = static_cast<int>(set.buffers.size());
        set.buffers.push_back(std::move(landing));

        TransferMeta& tm = meta[static_cast<std::size_t>(tk)];
        std::int64_t cursor = 0;
        for (std::int32_t arc_id : tr.arcs) {
            const sdf::DagArc& arc = dag.arcs[static_cast<std::size_t>(arc_id)];
            ArcCoords c = arc_coords(dag, arc);
            int staging = lay.staging.at({arc.src, c.src_port});
            plan.slices.push_back(SlicePlan{staging, c.src_offset, c.bytes});

            // Consumer assembles from the landing buffer.
            NodePlan& consumer = set.nodes[static_cast<std::size_t>(arc.dst)];
            InputPortPlan* in = find_input(consumer, c.dst_port);
            in->copies.push_back(
                CopyPlan{plan.landing_buffer, cursor, c.dst_offset, c.bytes});
            cursor += c.bytes;

            auto upd = [&](int& slot, int node, bool latest) {
                if (slot < 0 ||
                    (latest ? node_pos[static_cast<std::size_t>(node)] >
                                  node_pos[static_cast<std::size_t>(slot)]
                            : node_pos[static_cast<std::size_t>(node)] <
                                  node_pos[static_cast<std::size_t>(slot)])) {
                    slot = node;
                }
            };
            upd(tm.first_producer, arc.src, false);
            upd(tm.last_producer, arc.src, true);
            upd(tm.first_consumer, arc.dst, false);
            upd(tm.last_consumer, arc.dst, true);
        }

        auto add_sem = [&](int core, const char* name, int initial) {
            int id = static_cast<int>(set.semaphores.size());
            set.semaphores.push_back(SemaphorePlan{
                core, "t" + std::to_string(index) + "." + name, initial});
            return id;
        };
        tm.sem_ready = add_sem(src_core, "ready", 0);
        tm.sem_space = add_sem(src_core, "space", 1);
        tm.sem_arrived = add_sem(dst_core, "arrived", 0);
        tm.sem_avail = add_sem(dst_core, "avail", 1);

        set.transfers.push_back(std::move(plan));
    }

    // Same-core arcs copy straight from the producer's staging buffer. Track
    // which arcs the transfers covered.
    {
        std::vector<char> cross(dag.arcs.size(), 0);
        for (const sched::Transfer& tr : schedule.transfers) {
            for (std::int32_t a : tr.arcs) cross[static_cast<std::size_t>(a)] = 1;
        }
        for (std::size_t a = 0; a < dag.arcs.size(); ++a) {
            if (cross[a]) continue;
            const sdf::DagArc& arc = dag.arcs[a];
            ArcCoords c = arc_coords(dag, arc);
            int staging = lay.staging.at({arc.src, c.src_port});
            NodePlan& consumer = set.nodes[static_cast<std::size_t>(arc.dst)];
            find_input(consumer, c.dst_port)
                ->copies.push_back(CopyPlan{staging, c.src_offset, c.dst_offset, c.bytes});
        }
    }

    // Initial-token reads stay zero-filled; nothing to copy.

    // Optional placement provenance on the staging buffers.
    if (placement) {
        for (const sched::Placement& p : placement->placements) {
            if (p.arc < 0 || static_cast<std::size_t>(p.arc) >= dag.arcs.size()) continue;
            const sdf::DagArc& arc = dag.arcs[static_cast<std::size_t>(p.arc)];
            const sdf::SdfEdge& e = dag.graph.edges[static_cast<std::size_t>(arc.edge)];
            auto it = lay.staging.find({arc.src, e.src.port});
            if (it == lay.staging.end()) continue;
            BufferPlan& buf = set.buffers[static_cast<std::size_t>(it->second)];
            if (buf.region.empty()) {
                buf.region = p.region;
                buf.region_offset = p.offset;
            }
        }
    }

    // Per-core programs.
    std::map<int, std::vector<int>> pend_arrived;  // node -> transfer ids
    std::map<int, std::vector<int>> pend_space;
    std::map<int, std::vector<int>> post_ready;
    std::map<int, std::vector<int>> post_avail;
    std::vector<int> plan_index(schedule.transfers.size(), -1);
    for (std::size_t s = 0; s < transfer_order.size(); ++s) {
        plan_index[static_cast<std::size_t>(transfer_order[s])] = static_cast<int>(s);
    }
    for (std::size_t tk = 0; tk < schedule.transfers.size(); ++tk) {
        int index = plan_index[tk];
        const TransferMeta& tm = meta[tk];
        pend_arrived[tm.first_consumer].push_back(index);
        pend_space[tm.first_producer].push_back(index);
        post_ready[tm.last_producer].push_back(index);
        post_avail[tm.last_consumer].push_back(index);
    }

    // meta by plan index for comm sequences.
    std::vector<const TransferMeta*> plan_meta(set.transfers.size());
    for (std::size_t s = 0; s < transfer_order.size(); ++s) {
        plan_meta[s] = &meta[static_cast<std::size_t>(transfer_order[s])];
    }

    for (int core = 0; core < set.cores; ++core) {
        CoreProgram prog;
        prog.core = core;
        prog.op_id = set.core_ids[static_cast<std::size_t>(core)];

        prog.compute_seq.push_back(
            ProgramOp{OpKind::Barrier, -1, -1, -1, -1, "startup"});
        for (std::int32_t node : core_slots[static_cast<std::size_t>(core)]) {
            auto emit_sem = [&](OpKind kind, int plan_index, int sem) {
                ProgramOp op;
                op.kind = kind;
                op.sem = sem;
                op.transfer = plan_index;
                op.label = set.semaphores[static_cast<std::size_t>(sem)].name;
                prog.compute_seq.push_back(std::move(op));
            };
            if (auto it = pend_arrived.find(node); it != pend_arrived.end()) {
                for (int t : it->second) {
                    emit_sem(OpKind::Pend, t,
                             plan_meta[static_cast<std::size_t>(t)]->sem_arrived);
                }
            }
            if (auto it = pend_space.find(node); it != pend_space.end()) {
                for (int t : it->second) {
                    emit_sem(OpKind::Pend, t,
                             plan_meta[static_cast<std::size_t>(t)]->sem_space);
                }
            }
            ProgramOp call;
            call.kind = OpKind::Call;
            call.node = node;
            call.label = dag.nodes[static_cast<std::size_t>(node)].str();
            prog.compute_seq.push_back(std::move(call));
            if (auto it = post_ready.find(node); it != post_ready.end()) {
                for (int t : it->second) {
                    emit_sem(OpKind::Post, t,
                             plan_meta[static_cast<std::size_t>(t)]->sem_ready);
                }
            }
            if (auto it = post_avail.find(node); it != post_avail.end()) {
                for (int t : it->second) {
                    emit_sem(OpKind::Post, t,
                             plan_meta[static_cast<std::size_t>(t)]->sem_avail);
                }
            }
        }

        bool has_comm = false;
        for (const TransferPlan& t : set.transfers) {
            if (t.src_core == core || t.dst_core == core) {
                has_comm = true;
                break;
            }
        }
        if (has_comm) {
            prog.comm_seq.push_back(
                ProgramOp{OpKind::Barrier, -1, -1, -1, -1, "startup"});
            // Staging buffers are written by exactly one firing, which the
            // first send's ready handshake already orders before this
            // context. Later sends of the same buffer reuse that flush, so
            // every emitted writeback is load-bearing.
            std::set<int> flushed;
            for (std::size_t s = 0; s < set.transfers.size(); ++s) {
                const TransferPlan& t = set.transfers[s];
                const TransferMeta& tm = *plan_meta[s];
                int index = static_cast<int>(s);
                if (t.src_core == core) {
                    ProgramOp pend{OpKind::Pend, -1, tm.sem_ready, index, -1,
                                   set.semaphores[static_cast<std::size_t>(tm.sem_ready)].name};
                    prog.comm_seq.push_back(std::move(pend));
                    for (const SlicePlan& sl : t.slices) {
                        if (!flushed.insert(sl.src_buffer).second) continue;
                        ProgramOp wb{OpKind::Writeback, -1, -1, index, sl.src_buffer,
                                     set.buffers[static_cast<std::size_t>(sl.src_buffer)].label};
                        prog.comm_seq.push_back(std::move(wb));
                    }
                    ProgramOp send{OpKind::Send, -1, -1, index, -1, t.label};
                    prog.comm_seq.push_back(std::move(send));
                    ProgramOp post{OpKind::Post, -1, tm.sem_space, index, -1,
                                   set.semaphores[static_cast<std::size_t>(tm.sem_space)].name};
                    prog.comm_seq.push_back(std::move(post));
                }
                if (t.dst_core == core) {
                    ProgramOp pend{OpKind::Pend, -1, tm.sem_avail, index, -1,
                                   set.semaphores[static_cast<std::size_t>(tm.sem_avail)].name};
                    prog.comm_seq.push_back(std::move(pend));
                    ProgramOp inv{OpKind::Invalidate, -1, -1, index, t.landing_buffer,
                                  set.buffers[static_cast<std::size_t>(t.landing_buffer)].label};
                    prog.comm_seq.push_back(std::move(inv));
                    ProgramOp recv{OpKind::Receive, -1, -1, index, -1, t.label};
                    prog.comm_seq.push_back(std::move(recv));
                    ProgramOp post{OpKind::Post, -1, tm.sem_arrived, index, -1,
                                   set.semaphores[static_cast<std::size_t>(tm.sem_arrived)].name};
                    prog.comm_seq.push_back(std::move(post));
                }
            }
        }
        set.programs.push_back(std::move(prog));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

namespace {

constexpr std::ptrdiff_t kSemCeiling = 1 << 20;

struct AbortableSem {
    std::counting_semaphore<kSemCeiling> sem;
    explicit AbortableSem(int initial) : sem(initial) {}

    bool acquire(const std::atomic<bool>& abort) {
        while (!sem.try_acquire_for(std::chrono::milliseconds(20))) {
            if (abort.load(std::memory_order_relaxed)) return false;
        }
        return true;
    }
    void release() { sem.release(); }
};

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Barrier: return "BARRIER";
        case OpKind::Call: return "CALL";
        case OpKind::Post: return "POST";
        case OpKind::Pend: return "PEND";
        case OpKind::Send: return "SEND";
        case OpKind::Receive: return "RECEIVE";
        case OpKind::Writeback: return "WRITEBACK";
        case OpKind::Invalidate: return "INVALIDATE";
    }
    return "?";
}

std::string firing_key(const std::string& actor, std::int64_t firing) {
    return actor + "#" + std::to_string(firing);
}

void run_kernel(const Kernel& kernel, const NodePlan& plan,
                const std::function<void(const CopyPlan&, std::byte*)>& assemble,
                const std::function<std::span<std::byte>(const OutputPortPlan&)>& stage,
                const InputBindings& inputs,
                std::map<std::string, std::vector<std::byte>>& outputs,
                std::mutex* outputs_mu) {
    KernelContext ctx;
    ctx.actor = plan.actor;
    ctx.firing = plan.firing;
    ctx.params = &plan.params;
    for (const InputPortPlan& in : plan.inputs) {
        std::vector<std::byte> data(static_cast<std::size_t>(in.bytes));
        for (const CopyPlan& c : in.copies) assemble(c, data.data());
        ctx.inputs.emplace(in.port, std::move(data));
    }
    for (const OutputPortPlan& out : plan.outputs) {
        std::span<std::byte> span = stage(out);
        std::fill(span.begin(), span.end(), std::byte{0});
        ctx.outputs.emplace(out.port, span);
    }
    std::string key = firing_key(plan.actor, plan.firing);
    auto ext = inputs.find(key);
    ctx.external_input = ext == inputs.end() ? nullptr : &ext->second;
    std::vector<std::byte> ext_out;
    ctx.external_output = &ext_out;

    kernel(ctx);

    if (!ext_out.empty()) {
        if (outputs_mu) {
            std::lock_guard lk(*outputs_mu);
            outputs[key] = std::move(ext_out);
        } else {
            outputs[key] = std::move(ext_out);
        }
    }
}

}  // namespace

ExecutionResult execute(const ProgramSet& programs, const KernelRegistry& registry,
                        const InputBindings& inputs, const ExecOptions& options) {
    FabricOptions fopts;
    fopts.cores = programs.cores;
    fopts.frame_bytes = options.frame_bytes;
    fopts.audit = options.audit;
    fopts.throttle_ns_per_cycle = options.throttle_ns_per_cycle;
    Fabric fabric(fopts);

    for (const BufferPlan& b : programs.buffers) {
        fabric.add_buffer(b.owner_core, b.bytes, b.label);
    }
    std::deque<AbortableSem> sems;
    for (const SemaphorePlan& s : programs.semaphores) sems.emplace_back(s.initial);

    // Resolve kernels up front; plans index this table by node.
    std::vector<const Kernel*> kernels(programs.nodes.size(), nullptr);
    for (std::size_t i = 0; i < programs.nodes.size(); ++i) {
        kernels[i] = registry.find(programs.nodes[i].actor);
        if (!kernels[i]) {
            throw UnregisteredKernelError("no kernel registered for: " +
                                          programs.nodes[i].actor);
        }
    }

    ExecutionResult result;
    std::mutex outputs_mu;
    std::atomic<bool> abort{false};
    std::atomic<std::uint64_t> progress{0};
    std::atomic<std::uint64_t> stamp{0};

    int contexts = 2 * programs.cores;
    std::vector<std::vector<TraceRecord>> traces(static_cast<std::size_t>(contexts));
    std::vector<double> modeled(static_cast<std::size_t>(contexts), 0.0);
    std::vector<std::int64_t> sent(static_cast<std::size_t>(contexts), 0);
    struct ContextState {
        std::atomic<std::int64_t> pos{-1};
        std::atomic<bool> done{false};
    };
    std::vector<ContextState> states(static_cast<std::size_t>(contexts));

    std::exception_ptr first_error;
    std::mutex error_mu;
    auto fail = [&](std::exception_ptr e) {
        {
            std::lock_guard lk(error_mu);
            if (!first_error) first_error = e;
        }
        abort.store(true);
        fabric.request_abort();
    };

    auto worker = [&](int core, bool comm) {
        int ctx_id = 2 * core + (comm ? 1 : 0);
        ContextState& state = states[static_cast<std::size_t>(ctx_id)];
        const CoreProgram& prog = programs.programs[static_cast<std::size_t>(core)];
        const std::vector<ProgramOp>& seq = comm ? prog.comm_seq : prog.compute_seq;
        std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ULL +
                            static_cast<std::uint64_t>(ctx_id) + 1);
        try {
            for (std::size_t k = 0; k < seq.size(); ++k) {
                const ProgramOp& op = seq[k];
                state.pos.store(static_cast<std::int64_t>(k));
                if (options.jitter) {
                    switch (rng() & 15u) {
                        case 12u:
                        case 13u:
                            std::this_thread::yield();
                            break;
                        case 14u:
                            std::this_thread::sleep_for(
                                std::chrono::nanoseconds(rng() % 2000));
                            break;
                        case 15u:
                            std::this_thread::sleep_for(
                                std::chrono::nanoseconds(rng() % 20000));
                            break;
                        default:
                            break;
                    }
                }
                if (abort.load(std::memory_order_relaxed)) {
                    throw Error("fabric aborted");
                }
                switch (op.kind) {
                    case OpKind::Barrier:
                        if (comm) {
                            fabric.wait_barrier();
                        } else {
                            fabric.barrier(core);
                        }
                        break;
                    case OpKind::Call: {
                        const NodePlan& plan =
                            programs.nodes[static_cast<std::size_t>(op.node)];
                        std::set<int> read;
                        run_kernel(
                            *kernels[static_cast<std::size_t>(op.node)], plan,
                            [&](const CopyPlan& c, std::byte* dst) {
                                if (read.insert(c.src_buffer).second) {
                                    fabric.kernel_read(c.src_buffer);
                                }
                                std::memcpy(dst + c.dst_offset,
                                            fabric.cached_data(c.src_buffer) + c.src_offset,
                                            static_cast<std::size_t>(c.bytes));
                            },
                            [&](const OutputPortPlan& out) {
                                return std::span<std::byte>(
                                    fabric.cached_data(out.buffer),
                                    static_cast<std::size_t>(out.bytes));
                            },
                            inputs, result.outputs, &outputs_mu);
                        for (const OutputPortPlan& out : plan.outputs) {
                            fabric.kernel_write(out.buffer);
                        }
                        break;
                    }
                    case OpKind::Post:
                        sems[static_cast<std::size_t>(op.sem)].release();
                        break;
                    case OpKind::Pend:
                        if (!sems[static_cast<std::size_t>(op.sem)].acquire(abort)) {
                            throw Error("fabric aborted");
                        }
                        break;
                    case OpKind::Send: {
                        const TransferPlan& t =
                            programs.transfers[static_cast<std::size_t>(op.transfer)];
                        std::vector<Fabric::Slice> slices;
                        for (const SlicePlan& sl : t.slices) {
                            slices.push_back(
                                Fabric::Slice{sl.src_buffer, sl.src_offset, sl.bytes});
                        }
                        double cycles =
                            t.cost_bytes_per_cycle > 0.0
                                ? t.cost_latency_cycles +
                                      static_cast<double>(t.bytes) / t.cost_bytes_per_cycle
                                : t.cost_latency_cycles;
                        fabric.send(core, t.dst_core, slices, true, cycles);
                        modeled[static_cast<std::size_t>(ctx_id)] += cycles;
                        sent[static_cast<std::size_t>(ctx_id)] += 1;
                        break;
                    }
                    case OpKind::Receive: {
                        const TransferPlan& t =
                            programs.transfers[static_cast<std::size_t>(op.transfer)];
                        fabric.receive_publish(t.src_core, core, t.landing_buffer);
                        fabric.receive_wait(t.src_core, core);
                        break;
                    }
                    case OpKind::Writeback:
                        fabric.writeback(op.buffer);
                        break;
                    case OpKind::Invalidate:
                        fabric.invalidate(op.buffer);
                        break;
                }
                progress.fetch_add(1, std::memory_order_relaxed);
                TraceRecord rec;
                rec.core = core;
                rec.context = comm ? 'c' : 'p';
                rec.op = op_name(op.kind);
                rec.detail = op.label;
                rec.stamp = stamp.fetch_add(1, std::memory_order_relaxed);
                traces[static_cast<std::size_t>(ctx_id)].push_back(std::move(rec));
            }
            state.done.store(true);
            progress.fetch_add(1, std::memory_order_relaxed);
        } catch (...) {
            state.done.store(true);
            progress.fetch_add(1, std::memory_order_relaxed);
            if (!abort.load()) {
                fail(std::current_exception());
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(contexts));
    for (int core = 0; core < programs.cores; ++core) {
        threads.emplace_back(worker, core, false);
        threads.emplace_back(worker, core, true);
    }

    // Quiescence watchdog: no progress anywhere for the full window while
    // contexts are still live means the program is deadlocked.
    bool deadlocked = false;
    {
        using clock = std::chrono::steady_clock;
        std::uint64_t last = progress.load();
        auto last_change = clock::now();
        for (;;) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            bool all_done = true;
            for (const ContextState& s : states) {
                if (!s.done.load()) {
                    all_done = false;
                    break;
                }
            }
            if (all_done) break;
            std::uint64_t now_progress = progress.load();
            if (now_progress != last) {
                last = now_progress;
                last_change = clock::now();
                continue;
            }
            if (clock::now() - last_change >
                std::chrono::milliseconds(options.watchdog_ms)) {
                deadlocked = true;
                break;
            }
        }
    }

    std::string deadlock_report;
    if (deadlocked) {
        std::ostringstream os;
        os << "no context made progress for " << options.watchdog_ms << " ms;";
        for (int core = 0; core < programs.cores; ++core) {
            for (int c = 0; c < 2; ++c) {
                int ctx_id = 2 * core + c;
                const ContextState& s = states[static_cast<std::size_t>(ctx_id)];
                if (s.done.load()) continue;
                const CoreProgram& prog = programs.programs[static_cast<std::size_t>(core)];
                const auto& seq = c ? prog.comm_seq : prog.compute_seq;
                std::int64_t pos = s.pos.load();
                os << " core" << core << (c ? ".comm" : ".compute") << " blocked at ";
                if (pos >= 0 && pos < static_cast<std::int64_t>(seq.size())) {
                    const ProgramOp& op = seq[static_cast<std::size_t>(pos)];
                    os << op_name(op.kind) << " " << op.label;
                } else {
                    os << "start";
                }
                os << ";";
            }
        }
        deadlock_report = os.str();
        abort.store(true);
        fabric.request_abort();
    }

    for (std::thread& t : threads) t.join();

    if (deadlocked) {
        throw DeadlockError("deadlock: " + deadlock_report);
    }
    if (first_error) std::rethrow_exception(first_error);

    for (int i = 0; i < contexts; ++i) {
        result.modeled_transfer_cycles += modeled[static_cast<std::size_t>(i)];
        result.transfer_count += sent[static_cast<std::size_t>(i)];
        for (TraceRecord& rec : traces[static_cast<std::size_t>(i)]) {
            result.trace.push_back(std::move(rec));
        }
    }
    std::sort(result.trace.begin(), result.trace.end(),
              [](const TraceRecord& a, const TraceRecord& b) { return a.stamp < b.stamp; });
    result.violations = fabric.violations();
    return result;
}

std::map<std::string, std::vector<std::byte>> execute_reference(
    const sdf::FiringDag& dag, const KernelRegistry& registry,
    const InputBindings& inputs) {
    check_kernels(dag, registry);
    std::vector<int> node_core(dag.nodes.size(), 0);
    NodeLayout lay = build_node_layout(dag, node_core);

    // Attach every arc as a local copy.
    for (const sdf::DagArc& arc : dag.arcs) {
        ArcCoords c = arc_coords(dag, arc);
        int staging = lay.staging.at({arc.src, c.src_port});
        NodePlan& consumer = lay.nodes[static_cast<std::size_t>(arc.dst)];
        find_input(consumer, c.dst_port)
            ->copies.push_back(CopyPlan{staging, c.src_offset, c.dst_offset, c.bytes});
    }

    std::vector<std::vector<std::byte>> storage(lay.buffers.size());
    for (std::size_t i = 0; i < lay.buffers.size(); ++i) {
        storage[i].resize(static_cast<std::size_t>(lay.buffers[i].bytes));
    }

    std::map<std::string, std::vector<std::byte>> outputs;
    for (std::int32_t node : dag.topological_order()) {
        const NodePlan& plan = lay.nodes[static_cast<std::size_t>(node)];
        run_kernel(
            *registry.find(plan.actor), plan,
            [&](const CopyPlan& c, std::byte* dst) {
                std::memcpy(dst + c.dst_offset,
                            storage[static_cast<std::size_t>(c.src_buffer)].data() +
                                c.src_offset,
                            static_cast<std::size_t>(c.bytes));
            },
            [&](const OutputPortPlan& out) {
                return std::span<std::byte>(
                    storage[static_cast<std::size_t>(out.buffer)].data(),
                    static_cast<std::size_t>(out.bytes));
            },
            inputs, outputs, nullptr);
    }
    return outputs;
}

void save_trace(const std::vector<TraceRecord>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open trace file for writing: " + path);
    auto escape = [](const std::string& s) {
        std::string r;
        for (char ch : s) {
            if (ch == '"' || ch == '\\') {
                r += '\\';
                r += ch;
            } else if (static_cast<unsigned char>(ch) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", ch);
                r += buf;
            } else {
                r += ch;
            }
        }
        return r;
    };
    for (const TraceRecord& rec : trace) {
        out << "{\"stamp\":" << rec.stamp << ",\"core\":" << rec.core
            << ",\"context\":\"" << rec.context << "\",\"op\":\"" << escape(rec.op)
            << "\",\"detail\":\"" << escape(rec.detail) << "\"}\n";
    }
    if (!out.good()) throw Error("failed while writing trace file: " + path);
}

}  // namespace sdfmap::rt
