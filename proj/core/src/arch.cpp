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

#include "sdfmap/arch.hpp"

#include <algorithm>
#include <set>

#include "sdfmap/errors.hpp"
#include "internal/jsonio.hpp"

namespace sdfmap::arch {

namespace {
using internal::ordered_json;
}

const MemoryRegion* Operator::region(MemoryLevel level) const {
    for (const auto& m : memories)
        if (m.level == level) return &m;
    return nullptr;
}

bool Medium::connects(const std::string& a, const std::string& b) const {
    bool has_a = false, has_b = false;
    for (const auto& e : endpoints) {
        if (e == a) has_a = true;
        if (e == b) has_b = true;
    }
    return has_a && has_b && a != b;
}

const Operator* ArchGraph::find_operator(const std::string& id) const {
    for (const auto& op : operators)
        if (op.id == id) return &op;
    return nullptr;
}

int ArchGraph::operator_index(const std::string& id) const {
    for (std::size_t i = 0; i < operators.size(); ++i)
        if (operators[i].id == id) return static_cast<int>(i);
    return -1;
}

const Medium* ArchGraph::find_medium(const std::string& id) const {
    for (const auto& m : media)
        if (m.id == id) return &m;
    return nullptr;
}

const Medium* ArchGraph::best_medium(const std::string& a, const std::string& b,
                                     std::int64_t n_bytes) const {
    const Medium* best = nullptr;
    double best_cost = 0.0;
    for (const auto& m : media) {
        if (!m.connects(a, b)) continue;
        double cost = transfer_cycles(m, n_bytes);
        if (!best || cost < best_cost) {
            best = &m;
            best_cost = cost;
        }
    }
    return best;
}

double transfer_cycles(const Medium& m, std::int64_t n_bytes) {
    return m.latency_cycles + static_cast<double>(n_bytes) / m.bytes_per_cycle;
}

void validate(const ArchGraph& g) {
    std::set<std::string> ids;
    for (const auto& op : g.operators) {
        if (op.id.empty()) throw SemanticError("operator with empty id");
        if (!ids.insert(op.id).second)
            throw SemanticError("duplicate operator id \"" + op.id + "\"");
        if (op.clock_hz <= 0)
            throw SemanticError("operator \"" + op.id + "\" has nonpositive clock");
        std::set<std::string> rnames;
        for (const auto& r : op.memories) {
            if (r.capacity_bytes <= 0)
                throw SemanticError("memory region \"" + r.name + "\" of \"" + op.id +
                                    "\" has nonpositive capacity");
            if (!rnames.insert(r.name).second)
                throw SemanticError("duplicate memory region \"" + r.name + "\" on \"" +
                                    op.id + "\"");
        }
    }
    std::set<std::string> mids;
    for (const auto& m : g.media) {
        if (!mids.insert(m.id).second)
            throw SemanticError("duplicate medium id \"" + m.id + "\"");
        if (m.bytes_per_cycle <= 0.0)
            throw SemanticError("medium \"" + m.id + "\" has nonpositive rate");
        if (m.latency_cycles < 0.0)
            throw SemanticError("medium \"" + m.id + "\" has negative latency");
        if (m.endpoints.size() < 2)
            throw SemanticError("medium \"" + m.id + "\" needs at least two endpoints");
        for (const auto& e : m.endpoints)
            if (!ids.count(e))
                throw SemanticError("medium \"" + m.id + "\" references unknown operator \"" +
                                    e + "\"");
    }
}

namespace {

constexpr std::int64_t kMiB = 1048576;
constexpr std::int64_t kExternalBytes = std::int64_t{1} << 31;
constexpr std::int64_t kClockHz = 1000000000;
constexpr double kLinkLatency = 135.0;
constexpr double kLinkRate = 3.375;
constexpr double kMeasuredLatency = 2700.0;
constexpr double kMeasuredRate = 1.6;

ArchGraph cores(const std::string& name, const std::vector<std::int64_t>& locals,
                double latency, double rate) {
    ArchGraph g;
    g.name = name;
    for (std::size_t i = 0; i < locals.size(); ++i) {
        Operator op;
        op.id = "core" + std::to_string(i);
        op.clock_hz = kClockHz;
        op.memories.push_back({"local", locals[i], MemoryLevel::Local});
        op.memories.push_back({"external", kExternalBytes, MemoryLevel::External});
        g.operators.push_back(std::move(op));
    }
    if (locals.size() > 1) {
        Medium m;
        m.id = "dma";
        m.latency_cycles = latency;
        m.bytes_per_cycle = rate;
        m.blocking = false;
        for (const auto& op : g.operators) m.endpoints.push_back(op.id);
        g.media.push_back(std::move(m));
    }
    return g;
}

}  // namespace

ArchGraph preset(const std::string& name) {
    if (name == "mono") return cores(name, {kMiB}, kLinkLatency, kLinkRate);
    if (name == "dual") return cores(name, {kMiB, kMiB}, kLinkLatency, kLinkRate);
    if (name == "tri_sym") return cores(name, {kMiB, kMiB, kMiB}, kLinkLatency, kLinkRate);
    if (name == "tri_asym")
        return cores(name, {3 * kMiB / 2, kMiB, kMiB / 2}, kLinkLatency, kLinkRate);
    if (name == "quad")
        return cores(name, {kMiB, kMiB, kMiB, kMiB}, kLinkLatency, kLinkRate);
    if (name == "tri_measured")
        return cores(name, {kMiB, kMiB, kMiB}, kMeasuredLatency, kMeasuredRate);
    throw UnknownPresetError("unknown architecture preset \"" + name + "\"");
}

std::vector<std::string> preset_names() {
    return {"mono", "dual", "tri_sym", "tri_asym", "quad", "tri_measured"};
}

namespace {

ArchGraph arch_from_json(const ordered_json& j) {
    ArchGraph g;
    g.name = internal::get_field_or<std::string>(j, "name", "", "architecture");
    if (j.contains("operators")) {
        if (!j.at("operators").is_array())
            throw SemanticError("\"operators\" must be an array");
        for (const auto& jo : j.at("operators")) {
            Operator op;
            op.id = internal::get_field<std::string>(jo, "id", "operator");
            op.clock_hz = internal::get_field<std::int64_t>(jo, "clock_hz", op.id);
            if (jo.contains("memories")) {
                if (!jo.at("memories").is_array())
                    throw SemanticError("\"memories\" of \"" + op.id + "\" must be an array");
                for (const auto& jm : jo.at("memories")) {
                    MemoryRegion r;
                    r.name = internal::get_field<std::string>(jm, "name", "memory region");
                    r.capacity_bytes =
                        internal::get_field<std::int64_t>(jm, "capacity_bytes", r.name);
                    std::string level = internal::get_field<std::string>(jm, "level", r.name);
                    if (level == "local") {
                        r.level = MemoryLevel::Local;
                    } else if (level == "external") {
                        r.level = MemoryLevel::External;
                    } else {
                        throw SemanticError("memory region \"" + r.name +
                                            "\": unknown level \"" + level + "\"");
                    }
                    op.memories.push_back(std::move(r));
                }
            }
            g.operators.push_back(std::move(op));
        }
    }
    if (j.contains("media")) {
        if (!j.at("media").is_array()) throw SemanticError("\"media\" must be an array");
        for (const auto& jm : j.at("media")) {
            Medium m;
            m.id = internal::get_field<std::string>(jm, "id", "medium");
            m.latency_cycles = internal::get_field<double>(jm, "latency_cycles", m.id);
            m.bytes_per_cycle = internal::get_field<double>(jm, "bytes_per_cycle", m.id);
            m.blocking = internal::get_field_or<bool>(jm, "blocking", false, m.id);
            if (!jm.contains("endpoints") || !jm.at("endpoints").is_array())
                throw SemanticError("medium \"" + m.id + "\" needs an endpoints array");
            for (const auto& e : jm.at("endpoints")) {
                if (!e.is_string())
                    throw SemanticError("medium \"" + m.id + "\": endpoints must be strings");
                m.endpoints.push_back(e.get<std::string>());
            }
            g.media.push_back(std::move(m));
        }
    }
    return g;
}

ordered_json arch_to_json(const ArchGraph& g) {
    ordered_json j;
    j["name"] = g.name;
    j["operators"] = ordered_json::array();
    for (const auto& op : g.operators) {
        ordered_json jo;
        jo["id"] = op.id;
        jo["clock_hz"] = op.clock_hz;
        jo["memories"] = ordered_json::array();
        for (const auto& r : op.memories) {
            ordered_json jm;
            jm["name"] = r.name;
            jm["capacity_bytes"] = r.capacity_bytes;
            jm["level"] = r.level == MemoryLevel::Local ? "local" : "external";
            jo["memories"].push_back(jm);
        }
        j["operators"].push_back(jo);
    }
    j["media"] = ordered_json::array();
    for (const auto& m : g.media) {
        ordered_json jm;
        jm["id"] = m.id;
        jm["latency_cycles"] = m.latency_cycles;
        jm["bytes_per_cycle"] = m.bytes_per_cycle;
        jm["blocking"] = m.blocking;
        jm["endpoints"] = m.endpoints;
        j["media"].push_back(jm);
    }
    return j;
}

}  // namespace

ArchGraph parse_arch(const std::string& text) {
    ArchGraph g = arch_from_json(internal::parse_json(text, "architecture"));
    validate(g);
    return g;
}

ArchGraph load_arch(const std::string& path) {
    return parse_arch(internal::read_file(path));
}

std::string serialize_arch(const ArchGraph& g) {
    return arch_to_json(g).dump(2) + "\n";
}

void save_arch(const ArchGraph& g, const std::string& path) {
    internal::write_file(path, serialize_arch(g));
}

}  // namespace sdfmap::arch
