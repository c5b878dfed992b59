// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Host-threaded runtime: turns a timed schedule into per-core two-thread
// programs (one processing sequence, one communication sequence), then
// executes them over an in-process fabric that models a DMA memory-pull
// protocol with chained frame/remainder channels, a startup barrier and a
// cache-coherency audit. Actor behaviour comes from registered kernels, so
// execution produces real data.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdfmap/arch.hpp"
#include "sdfmap/sched.hpp"
#include "sdfmap/sdf.hpp"

namespace sdfmap::rt {

// ---------------------------------------------------------------------------
// Channel map. Every ordered core pair (s, r) owns two chained channels:
// one for full frames and one for the remainder. Ids pack into 7 bits, which
// caps the core count at 8.
// ---------------------------------------------------------------------------

constexpr int kFramesKind = 0;
constexpr int kRemainderKind = 1;
constexpr int kMaxCores = 8;

struct ChannelRef {
  int src_core = 0;
  int dst_core = 0;
  int kind = kFramesKind;
};

int channel_count(int cores);  // 2 * P * (P - 1)
int encode_channel(int cores, int src_core, int dst_core, int kind);
ChannelRef decode_channel(int cores, int id);

struct ChannelPair {
  int frames = 0;
  int remainder = 0;
};

// Deterministic full map for P >= 2 cores.
std::map<std::pair<int, int>, ChannelPair> channel_map(int cores);

// ---------------------------------------------------------------------------
// Actor kernels.
// ---------------------------------------------------------------------------

struct KernelContext {
  std::string actor;  // full flat-graph id, e.g. "PreambleProcess/Rep0/Proc"
  std::int64_t firing = 0;
  const std::map<std::string, std::int64_t>* params = nullptr;

  std::map<std::string, std::vector<std::byte>> inputs;  // port -> token bytes
  std::map<std::string, std::span<std::byte>> outputs;   // port -> staging

  // Side-channel data for source/sink actors, keyed "actor#firing" by the
  // caller. external_output starts empty; a kernel that fills it produces an
  // execution output.
  const std::vector<std::byte>* external_input = nullptr;
  std::vector<std::byte>* external_output = nullptr;

  std::int64_t param(const std::string& key, std::int64_t fallback = 0) const;
  const std::vector<std::byte>& in(const std::string& port) const;
  std::span<std::byte> out(const std::string& port);
};

using Kernel = std::function<void(KernelContext&)>;

// Lookup tries the full actor path first, then the path's leaf name.
class KernelRegistry {
 public:
  void add(const std::string& name, Kernel kernel);
  const Kernel* find(const std::string& actor_path) const;
  bool has(const std::string& actor_path) const;

 private:
  std::map<std::string, Kernel> kernels_;
};

// ---------------------------------------------------------------------------
// Fabric: buffers with cached/backing copies, the memory-pull protocol and
// the startup barrier. All state is internally synchronized; waits suspend
// passively.
// ---------------------------------------------------------------------------

struct FabricOptions {
  int cores = 1;
  std::int64_t frame_bytes = 32768;
  bool audit = true;
  // Optional transfer cost model (cycles = latency + bytes / rate). Applies
  // when send() is not given explicit modeled cycles.
  double cost_latency_cycles = 0.0;
  double cost_bytes_per_cycle = 0.0;
  // Sleep this long per modeled cycle inside send (0 = no wall-clock delay).
  double throttle_ns_per_cycle = 0.0;
};

struct SendReport {
  std::int64_t frames = 0;
  std::int64_t remainder_bytes = 0;
  int completion_channel = 0;  // remainder channel id, decodable to (s, r)
  double modeled_cycles = 0.0;
};

struct Violation {
  std::string kind;  // "stale-send" or "stale-read"
  std::string buffer;
  std::string detail;
};

class Fabric {
 public:
  explicit Fabric(FabricOptions options);
  ~Fabric();
  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  int cores() const { return options_.cores; }

  // Startup barrier: one call per core; returns when all cores arrived.
  // Raising any notification before the barrier completes throws
  // BarrierNotReachedError.
  void barrier(int core);
  void wait_barrier() const;  // passive wait without counting, for helpers
  bool barrier_passed() const;

  int add_buffer(int owner_core, std::int64_t bytes, std::string label);
  std::int64_t buffer_bytes(int buffer) const;
  const std::string& buffer_label(int buffer) const;

  // Kernel-side access works on the cached copy.
  std::byte* cached_data(int buffer);
  void kernel_write(int buffer);  // marks the cached copy dirty
  void kernel_read(int buffer);   // audits staleness, applies invalidations
  // Transfer-side (backing store) view, for tests and the auditor.
  const std::byte* backing_data(int buffer) const;

  void writeback(int buffer);   // cached -> backing, clears dirty; idempotent
  void invalidate(int buffer);  // next kernel_read refreshes from backing

  // Memory-pull protocol. The receiver publishes its landing buffer for the
  // (src, dst) pair and raises the notify interrupt; the sender then moves
  // bytes into that buffer's backing store as floor(n/F) frames plus a
  // remainder, and posts a completion carrying the remainder channel id.
  struct Slice {
    int src_buffer = -1;
    std::int64_t src_offset = 0;
    std::int64_t bytes = 0;
  };

  void receive_publish(int src_core, int dst_core, int dst_buffer);
  // Blocks until a completion for the pair arrives; returns the channel id.
  int receive_wait(int src_core, int dst_core);
  std::optional<int> try_receive_wait(int src_core, int dst_core,
                                      int timeout_ms);

  // wait_for_publication=false enforces the memory-pull precondition
  // strictly and throws AddressNotPublishedError when the receiver has not
  // published; true suspends until the publication arrives.
  SendReport send(int src_core, int dst_core, const std::vector<Slice>& slices,
                  bool wait_for_publication = false,
                  double modeled_cycles = -1.0);

  // Watchdog support: wakes every blocked wait; subsequent fabric calls fail.
  void request_abort();
  bool aborted() const;

  std::vector<Violation> violations() const;
  std::vector<SendReport> send_log() const;

 private:
  struct Impl;
  FabricOptions options_;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Programs.
// ---------------------------------------------------------------------------

enum class OpKind {
  Barrier,     // compute: enter barrier; comm: wait for it
  Call,        // invoke a node's kernel
  Post,        // release a local semaphore
  Pend,        // acquire a local semaphore
  Send,        // producer comm: run a transfer
  Receive,     // consumer comm: publish landing address, await completion
  Writeback,   // flush a buffer's cached copy
  Invalidate,  // mark a buffer's cached copy stale
};

struct ProgramOp {
  OpKind kind = OpKind::Call;
  int node = -1;      // Call
  int sem = -1;       // Post / Pend
  int transfer = -1;  // Send / Receive
  int buffer = -1;    // Writeback / Invalidate
  std::string label;
};

struct CoreProgram {
  int core = -1;
  std::string op_id;
  std::vector<ProgramOp> compute_seq;
  std::vector<ProgramOp> comm_seq;
};

struct SemaphorePlan {
  int core = -1;
  std::string name;
  int initial = 0;
};

enum class BufferRole { Staging, Landing };

struct BufferPlan {
  BufferRole role = BufferRole::Staging;
  std::string label;
  int owner_core = -1;
  std::int64_t bytes = 0;
  // Memory placement provenance when generated with a BufferPlacement.
  std::string region;
  std::int64_t region_offset = -1;
};

struct CopyPlan {
  int src_buffer = -1;
  std::int64_t src_offset = 0;
  std::int64_t dst_offset = 0;
  std::int64_t bytes = 0;
};

struct InputPortPlan {
  std::string port;
  std::int64_t bytes = 0;          // cons * token_bytes, zero-filled first
  std::vector<CopyPlan> copies;    // arc data; initial tokens stay zero
};

struct OutputPortPlan {
  std::string port;
  std::int64_t bytes = 0;  // prod * token_bytes
  int buffer = -1;         // staging buffer
};

struct NodePlan {
  std::string actor;
  std::int64_t firing = 0;
  std::map<std::string, std::int64_t> params;
  std::vector<InputPortPlan> inputs;
  std::vector<OutputPortPlan> outputs;
};

struct SlicePlan {
  int src_buffer = -1;
  std::int64_t src_offset = 0;
  std::int64_t bytes = 0;
};

struct TransferPlan {
  int src_core = -1;
  int dst_core = -1;
  int frames_channel = -1;
  int remainder_channel = -1;
  int landing_buffer = -1;  // slices land here back to back
  std::int64_t bytes = 0;
  double cost_latency_cycles = 0.0;
  double cost_bytes_per_cycle = 0.0;
  std::vector<SlicePlan> slices;
  std::string label;
};

struct ProgramSet {
  int cores = 0;
  std::vector<std::string> core_ids;  // core index -> operator id
  std::vector<CoreProgram> programs;
  std::vector<SemaphorePlan> semaphores;
  std::vector<BufferPlan> buffers;
  std::vector<TransferPlan> transfers;
  std::vector<NodePlan> nodes;  // index-aligned with the dag's nodes

  std::int64_t semaphore_count() const {
    return static_cast<std::int64_t>(semaphores.size());
  }
};

// Builds per-core programs in schedule order. Every cross-core transfer gets
// the four-semaphore handshake (data-ready and staging-free on the producer
// core, data-arrived and landing-free on the consumer core), a writeback
// before the first send of each staging buffer and an invalidate before its
// receive, so every coherency call in the program is load-bearing. Throws
// UnregisteredKernelError when a firing's actor has no kernel.
ProgramSet generate_programs(const sdf::FiringDag& dag,
                             const sched::TimedSchedule& schedule,
                             const arch::ArchGraph& arch,
                             const KernelRegistry& registry,
                             const sched::BufferPlacement* placement = nullptr);

// ---------------------------------------------------------------------------
// Execution.
// ---------------------------------------------------------------------------

struct TraceRecord {
  int core = -1;
  char context = 'p';  // 'p' processing, 'c' communication
  std::string op;
  std::string detail;
  std::uint64_t stamp = 0;  // logical, totally ordered
};

struct ExecOptions {
  std::int64_t frame_bytes = 32768;
  bool audit = true;
  std::uint64_t seed = 0;
  bool jitter = false;  // seeded scheduling noise at every program op
  double throttle_ns_per_cycle = 0.0;
  int watchdog_ms = 4000;  // quiescence window before declaring deadlock
};

struct ExecutionResult {
  std::map<std::string, std::vector<std::byte>> outputs;  // "actor#firing"
  std::vector<TraceRecord> trace;
  std::vector<Violation> violations;
  double modeled_transfer_cycles = 0.0;
  std::int64_t transfer_count = 0;
};

using InputBindings = std::map<std::string, std::vector<std::byte>>;

// Runs 2 * cores host threads (one processing and one communication context
// per core). Outputs are byte-identical to execute_reference on the same
// inputs. Throws DeadlockError when the watchdog finds all contexts blocked
// with no progress.
ExecutionResult execute(const ProgramSet& programs, const KernelRegistry& registry,
                        const InputBindings& inputs, const ExecOptions& options = {});

// Sequential single-threaded oracle: executes the dag in topological order
// with plain host buffers and no fabric.
std::map<std::string, std::vector<std::byte>> execute_reference(
    const sdf::FiringDag& dag, const KernelRegistry& registry,
    const InputBindings& inputs);

// Trace file: one JSON object per line, ordered by logical timestamp.
void save_trace(const std::vector<TraceRecord>& trace, const std::string& path);

}  // namespace sdfmap::rt
