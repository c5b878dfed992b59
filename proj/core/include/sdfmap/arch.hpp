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
#include <string>
#include <vector>

namespace sdfmap::arch {

enum class MemoryLevel { Local, External };

struct MemoryRegion {
    std::string name;
    std::int64_t capacity_bytes = 0;
    MemoryLevel level = MemoryLevel::Local;
};

// A processing element. Clock only matters when converting cycle counts to
// wall time; all cost arithmetic stays in cycles.
struct Operator {
    std::string id;
    std::int64_t clock_hz = 0;
    std::vector<MemoryRegion> memories;

    const MemoryRegion* region(MemoryLevel level) const;
};

// DMA-style transfer medium with an affine cost: moving n bytes costs
// latency_cycles + n / bytes_per_cycle. A non-blocking medium overlaps any
// number of transfers with compute; a blocking one occupies the source
// operator for the duration.
struct Medium {
    std::string id;
    double latency_cycles = 0.0;
    double bytes_per_cycle = 1.0;
    bool blocking = false;
    std::vector<std::string> endpoints;

    bool connects(const std::string& a, const std::string& b) const;
};

struct ArchGraph {
    std::string name;
    std::vector<Operator> operators;
    std::vector<Medium> media;

    const Operator* find_operator(const std::string& id) const;
    int operator_index(const std::string& id) const;
    const Medium* find_medium(const std::string& id) const;
    // Cheapest medium connecting a and b for an n-byte transfer; null when
    // the operators share no medium.
    const Medium* best_medium(const std::string& a, const std::string& b,
                              std::int64_t n_bytes) const;
};

double transfer_cycles(const Medium& m, std::int64_t n_bytes);

void validate(const ArchGraph& g);

// Built-in architectures:
//   mono, dual, tri_sym, tri_asym, quad — 1 GHz cores, one shared
//     non-blocking medium (latency 135 cycles, 3.375 bytes/cycle); per-core
//     local memory 1 MiB except tri_asym {1.5 MiB, 1 MiB, 0.5 MiB}; every
//     core also sees a 2 GiB external region.
//   tri_measured — tri_sym topology with measured medium parameters
//     (latency 2700 cycles, 1.6 bytes/cycle).
ArchGraph preset(const std::string& name);
std::vector<std::string> preset_names();

ArchGraph parse_arch(const std::string& text);
ArchGraph load_arch(const std::string& path);
std::string serialize_arch(const ArchGraph& g);
void save_arch(const ArchGraph& g, const std::string& path);

}  // namespace sdfmap::arch
