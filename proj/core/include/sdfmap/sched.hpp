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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdfmap/arch.hpp"
#include "sdfmap/sdf.hpp"

namespace sdfmap::sched {

// Per-firing compute cost lookup. Records map an actor pattern and an
// operator pattern to a cycle count; "*" matches anything and patterns may
// use shell-style wildcards. Resolution prefers, in order: exact actor id
// with exact operator, exact actor id with wildcard operator, plain leaf
// name, then wildcard actor patterns, and finally the timing map embedded
// in the graph actor itself.
class TimingTable {
public:
    struct Record {
        std::string actor;
        std::string op;
        std::int64_t cycles;
    };

    void add(const std::string& actor, const std::string& op, std::int64_t cycles);
    std::int64_t cycles(const sdf::SdfGraph& graph, const std::string& actor_id,
                        const std::string& op_id) const;
    bool has(const sdf::SdfGraph& graph, const std::string& actor_id,
             const std::string& op_id) const;

    const std::vector<Record>& records() const { return records_; }
    std::map<std::string, std::string>& metadata() { return metadata_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

private:
    std::vector<Record> records_;
    std::map<std::string, std::string> metadata_;
};

TimingTable parse_timings(const std::string& text);
TimingTable load_timings(const std::string& path);
std::string serialize_timings(const TimingTable& t);
void save_timings(const TimingTable& t, const std::string& path);

// Restricts actors (by id pattern) to subsets of operators.
struct Constraint {
    std::string pattern;
    std::vector<std::string> allowed;
};

class ConstraintSet {
public:
    void add(const std::string& pattern, std::vector<std::string> allowed);
    // Operators actor_id may run on, in arch order. Unconstrained actors may
    // use every operator. Throws UnschedulableConstraint when an applicable
    // constraint empties the set.
    std::vector<std::string> allowed_for(const std::string& actor_id,
                                         const arch::ArchGraph& arch) const;
    void check_patterns_match(const sdf::SdfGraph& graph) const;
    const std::vector<Constraint>& items() const { return items_; }

private:
    std::vector<Constraint> items_;
};

ConstraintSet parse_constraints(const std::string& text);
ConstraintSet load_constraints(const std::string& path);
std::string serialize_constraints(const ConstraintSet& c);

struct ComputeSlot {
    std::int32_t node = -1;
    double start = 0.0;
    double end = 0.0;
};

// One DMA transaction. Starts as a single arc; reduce_syncs may merge
// several arcs with the same endpoints into one transaction.
struct Transfer {
    std::vector<std::int32_t> arcs;
    std::string medium;
    std::string src_op;
    std::string dst_op;
    double start = 0.0;
    double end = 0.0;
    std::int64_t bytes = 0;
};

struct TimedSchedule {
    std::vector<std::string> mapping;  // node index -> operator id
    std::map<std::string, std::vector<ComputeSlot>> compute_slots;
    std::vector<Transfer> transfers;
    double makespan_cycles = 0.0;

    // Two synchronization objects guard each transaction: data-ready on the
    // producer side and data-arrived on the consumer side.
    std::int64_t sync_count() const {
        return 2 * static_cast<std::int64_t>(transfers.size());
    }
    const ComputeSlot* slot_of(std::int32_t node) const;
};

TimedSchedule list_schedule(const sdf::FiringDag& dag, const arch::ArchGraph& arch,
                            const TimingTable& timings,
                            const ConstraintSet& constraints = {});

// Checks every schedule invariant: one slot per firing, no overlap on an
// operator, precedence through same-core reads and cross-core transfers,
// exactly one transfer per cross-core arc, makespan consistency.
void validate_schedule(const TimedSchedule& s, const sdf::FiringDag& dag,
                       const arch::ArchGraph& arch);

TimedSchedule reduce_syncs(const TimedSchedule& s, const sdf::FiringDag& dag,
                           const arch::ArchGraph& arch);

struct Lifetime {
    double first_write = 0.0;
    double last_read = 0.0;
};

std::map<std::int32_t, Lifetime> arc_lifetimes(const TimedSchedule& s,
                                               const sdf::FiringDag& dag);

struct Placement {
    std::int32_t arc = -1;
    std::string op;
    std::string region;
    std::int64_t offset = 0;
    std::int64_t size = 0;
    Lifetime lifetime;
};

struct BufferPlacement {
    std::vector<Placement> placements;
    // peak concurrent demand per operator/region pair
    std::map<std::string, std::map<std::string, std::int64_t>> demand;
    std::int64_t external_spill_bytes = 0;
};

BufferPlacement allocate_buffers(const TimedSchedule& s, const sdf::FiringDag& dag,
                                 const arch::ArchGraph& arch,
                                 const std::map<std::int32_t, Lifetime>& lifetimes);

struct MemoryModeChoice {
    std::string best;
    std::map<std::string, std::int64_t> spill_bytes;
};

// Pairs sorted demands with sorted capacities per mode and totals the
// overflow; the mode with the least overflow wins (ties to the first name).
MemoryModeChoice recommend_memory_mode(
    const std::vector<std::int64_t>& demands,
    const std::map<std::string, std::vector<std::int64_t>>& modes);

std::map<std::string, double> load_report(const TimedSchedule& s);

std::string serialize_schedule(const TimedSchedule& s, const sdf::FiringDag& dag);
TimedSchedule parse_schedule(const std::string& text, const sdf::FiringDag& dag);
void save_schedule(const TimedSchedule& s, const sdf::FiringDag& dag,
                   const std::string& path);
TimedSchedule load_schedule(const std::string& path, const sdf::FiringDag& dag);

}  // namespace sdfmap::sched
