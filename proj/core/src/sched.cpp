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

#include "sdfmap/sched.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sdfmap/errors.hpp"
#include "internal/jsonio.hpp"

namespace sdfmap::sched {

namespace {

using internal::ordered_json;

constexpr double kEps = 1e-9;

bool glob_match(const std::string& pattern, const std::string& s) {
    // Iterative *, ? matcher with single backtrack point.
    std::size_t p = 0, i = 0, star = std::string::npos, mark = 0;
    while (i < s.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == s[i])) {
            ++p;
            ++i;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = i;
        } else if (star != std::string::npos) {
            p = star + 1;
            i = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

bool has_wildcard(const std::string& p) {
    return p.find_first_of("*?") != std::string::npos;
}

// Lower rank is more specific. Returns -1 when the record does not apply.
int match_rank(const TimingTable::Record& r, const std::string& actor_id,
               const std::string& leaf, const std::string& op_id) {
    int actor_rank;
    if (r.actor == actor_id) {
        actor_rank = 0;
    } else if (r.actor == leaf) {
        actor_rank = 1;
    } else if (has_wildcard(r.actor) && glob_match(r.actor, actor_id)) {
        actor_rank = 2;
    } else {
        return -1;
    }
    int op_rank;
    if (r.op == op_id) {
        op_rank = 0;
    } else if (r.op == "*" || (has_wildcard(r.op) && glob_match(r.op, op_id))) {
        op_rank = 1;
    } else {
        return -1;
    }
    return actor_rank * 2 + op_rank;
}

bool pattern_applies(const std::string& pattern, const std::string& actor_id) {
    return pattern == actor_id || pattern == sdf::leaf_name(actor_id) ||
           (has_wildcard(pattern) && glob_match(pattern, actor_id));
}

}  // namespace

void TimingTable::add(const std::string& actor, const std::string& op,
                      std::int64_t cycles) {
    if (cycles < 0) throw SemanticError("negative cycle count for \"" + actor + "\"");
    records_.push_back({actor, op, cycles});
}

std::int64_t TimingTable::cycles(const sdf::SdfGraph& graph, const std::string& actor_id,
                                 const std::string& op_id) const {
    std::string leaf = sdf::leaf_name(actor_id);
    int best_rank = 99;
    std::int64_t best = -1;
    for (const auto& r : records_) {
        int rank = match_rank(r, actor_id, leaf, op_id);
        if (rank >= 0 && rank < best_rank) {
            best_rank = rank;
            best = r.cycles;
        }
    }
    if (best >= 0) return best;
    if (const sdf::Actor* a = graph.find_actor(actor_id)) {
        if (auto it = a->timing.find(op_id); it != a->timing.end()) return it->second;
        if (auto it = a->timing.find("*"); it != a->timing.end()) return it->second;
    }
    throw MissingTimingError("no timing for actor \"" + actor_id + "\" on operator \"" +
                             op_id + "\"");
}

bool TimingTable::has(const sdf::SdfGraph& graph, const std::string& actor_id,
                      const std::string& op_id) const {
    try {
        cycles(graph, actor_id, op_id);
        return true;
    } catch (const MissingTimingError&) {
        return false;
    }
}

TimingTable parse_timings(const std::string& text) {
    auto j = internal::parse_json(text, "timing table");
    TimingTable t;
    if (j.contains("records")) {
        if (!j.at("records").is_array())
            throw SemanticError("timing table: \"records\" must be an array");
        for (const auto& jr : j.at("records")) {
            t.add(internal::get_field<std::string>(jr, "actor", "timing record"),
                  internal::get_field_or<std::string>(jr, "operator", "*", "timing record"),
                  internal::get_field<std::int64_t>(jr, "cycles", "timing record"));
        }
    }
    if (j.contains("metadata")) {
        for (const auto& [k, v] : j.at("metadata").items()) {
            if (!v.is_string())
                throw SemanticError("timing table: metadata values must be strings");
            t.metadata()[k] = v.get<std::string>();
        }
    }
    return t;
}

TimingTable load_timings(const std::string& path) {
    return parse_timings(internal::read_file(path));
}

std::string serialize_timings(const TimingTable& t) {
    ordered_json j;
    j["records"] = ordered_json::array();
    for (const auto& r : t.records()) {
        ordered_json jr;
        jr["actor"] = r.actor;
        jr["operator"] = r.op;
        jr["cycles"] = r.cycles;
        j["records"].push_back(jr);
    }
    if (!t.metadata().empty()) {
        ordered_json m;
        for (const auto& [k, v] : t.metadata()) m[k] = v;
        j["metadata"] = m;
    }
    return j.dump(2) + "\n";
}

void save_timings(const TimingTable& t, const std::string& path) {
    internal::write_file(path, serialize_timings(t));
}

void ConstraintSet::add(const std::string& pattern, std::vector<std::string> allowed) {
    if (allowed.empty())
        throw UnschedulableConstraintError("constraint \"" + pattern +
                                           "\" allows no operator");
    items_.push_back({pattern, std::move(allowed)});
}

std::vector<std::string> ConstraintSet::allowed_for(const std::string& actor_id,
                                                    const arch::ArchGraph& arch) const {
    std::vector<std::string> allowed;
    for (const auto& op : arch.operators) allowed.push_back(op.id);
    for (const auto& c : items_) {
        if (!pattern_applies(c.pattern, actor_id)) continue;
        std::vector<std::string> next;
        for (const auto& op : allowed)
            if (std::find(c.allowed.begin(), c.allowed.end(), op) != c.allowed.end())
                next.push_back(op);
        allowed = std::move(next);
    }
    if (allowed.empty())
        throw UnschedulableConstraintError("constraints leave no operator for actor \"" +
                                           actor_id + "\"");
    return allowed;
}

void ConstraintSet::check_patterns_match(const sdf::SdfGraph& graph) const {
    for (const auto& c : items_) {
        bool any = false;
        for (const auto& a : graph.actors)
            if (pattern_applies(c.pattern, a.id)) {
                any = true;
                break;
            }
        if (!any)
            throw SemanticError("constraint pattern \"" + c.pattern +
                                "\" matches no actor");
    }
}

ConstraintSet parse_constraints(const std::string& text) {
    auto j = internal::parse_json(text, "constraints");
    ConstraintSet c;
    if (j.contains("constraints")) {
        if (!j.at("constraints").is_array())
            throw SemanticError("\"constraints\" must be an array");
        for (const auto& jc : j.at("constraints")) {
            std::string pattern =
                internal::get_field<std::string>(jc, "pattern", "constraint");
            if (!jc.contains("allowed") || !jc.at("allowed").is_array())
                throw SemanticError("constraint \"" + pattern +
                                    "\" needs an allowed array");
            std::vector<std::string> allowed;
            for (const auto& a : jc.at("allowed")) allowed.push_back(a.get<std::string>());
            c.add(pattern, std::move(allowed));
        }
    }
    return c;
}

ConstraintSet load_constraints(const std::string& path) {
    return parse_constraints(internal::read_file(path));
}

std::string serialize_constraints(const ConstraintSet& c) {
    ordered_json j;
    j["constraints"] = ordered_json::array();
    for (const auto& item : c.items()) {
        ordered_json jc;
        jc["pattern"] = item.pattern;
        jc["allowed"] = item.allowed;
        j["constraints"].push_back(jc);
    }
    return j.dump(2) + "\n";
}

const ComputeSlot* TimedSchedule::slot_of(std::int32_t node) const {
    for (const auto& [op, slots] : compute_slots)
        for (const auto& s : slots)
            if (s.node == node) return &s;
    return nullptr;
}

namespace {

struct DagView {
    std::vector<std::vector<std::int32_t>> in_arcs;
    std::vector<std::vector<std::int32_t>> out_arcs;

    explicit DagView(const sdf::FiringDag& dag) {
        in_arcs.resize(dag.nodes.size());
        out_arcs.resize(dag.nodes.size());
        for (std::int32_t i = 0; i < static_cast<std::int32_t>(dag.arcs.size()); ++i) {
            const auto& a = dag.arcs[static_cast<std::size_t>(i)];
            in_arcs[static_cast<std::size_t>(a.dst)].push_back(i);
            out_arcs[static_cast<std::size_t>(a.src)].push_back(i);
        }
    }
};

}  // namespace

TimedSchedule list_schedule(const sdf::FiringDag& dag, const arch::ArchGraph& arch,
                            const TimingTable& timings,
                            const ConstraintSet& constraints) {
    if (arch.operators.empty()) throw SemanticError("architecture has no operators");
    constraints.check_patterns_match(dag.graph);

    const std::size_t n = dag.nodes.size();
    DagView view(dag);

    // Per-actor data shared by all of its firings.
    std::map<std::string, std::vector<std::string>> allowed_by_actor;
    std::map<std::string, std::map<std::string, std::int64_t>> cost_by_actor;
    std::map<std::string, double> mean_cost_by_actor;
    for (const auto& a : dag.graph.actors) {
        auto allowed = constraints.allowed_for(a.id, arch);
        double sum = 0.0;
        for (const auto& op : allowed) {
            std::int64_t c = timings.cycles(dag.graph, a.id, op);
            cost_by_actor[a.id][op] = c;
            sum += static_cast<double>(c);
        }
        mean_cost_by_actor[a.id] = sum / static_cast<double>(allowed.size());
        allowed_by_actor[a.id] = std::move(allowed);
    }

    // Critical-path priority from mean compute cost, zero transfer cost.
    std::vector<double> blevel(n, 0.0);
    auto topo = dag.topological_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        std::int32_t node = *it;
        double succ = 0.0;
        for (auto ai : view.out_arcs[static_cast<std::size_t>(node)])
            succ = std::max(succ,
                            blevel[static_cast<std::size_t>(dag.arcs[static_cast<std::size_t>(ai)].dst)]);
        blevel[static_cast<std::size_t>(node)] =
            mean_cost_by_actor.at(dag.nodes[static_cast<std::size_t>(node)].actor) + succ;
    }

    std::vector<std::int32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::int32_t>(i);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        double ba = blevel[static_cast<std::size_t>(a)];
        double bb = blevel[static_cast<std::size_t>(b)];
        if (ba != bb) return ba > bb;
        const auto& fa = dag.nodes[static_cast<std::size_t>(a)];
        const auto& fb = dag.nodes[static_cast<std::size_t>(b)];
        return std::tie(fa.actor, fa.index) < std::tie(fb.actor, fb.index);
    });

    TimedSchedule sched;
    sched.mapping.assign(n, "");
    std::vector<double> node_start(n, 0.0), node_end(n, 0.0);
    std::map<std::string, double> ready;
    for (const auto& op : arch.operators) ready[op.id] = 0.0;

    for (std::int32_t node : order) {
        const auto& firing = dag.nodes[static_cast<std::size_t>(node)];
        const auto& allowed = allowed_by_actor.at(firing.actor);

        std::string best_op;
        double best_start = 0.0, best_finish = std::numeric_limits<double>::infinity();
        for (const auto& op : allowed) {
            double data_ready = 0.0;
            std::map<std::string, double> blocking_est;  // src op -> next free
            bool feasible = true;
            for (auto ai : view.in_arcs[static_cast<std::size_t>(node)]) {
                const auto& arc = dag.arcs[static_cast<std::size_t>(ai)];
                const std::string& src_op = sched.mapping[static_cast<std::size_t>(arc.src)];
                double p_end = node_end[static_cast<std::size_t>(arc.src)];
                if (src_op == op) {
                    data_ready = std::max(data_ready, p_end);
                    continue;
                }
                const arch::Medium* m = arch.best_medium(src_op, op, arc.bytes);
                if (!m) {
                    feasible = false;
                    break;
                }
                double cyc = arch::transfer_cycles(*m, arc.bytes);
                double t_end;
                if (m->blocking) {
                    double free_at = std::max(
                        p_end, blocking_est.count(src_op) ? blocking_est[src_op]
                                                          : ready.at(src_op));
                    blocking_est[src_op] = free_at + cyc;
                    t_end = free_at + cyc;
                } else {
                    t_end = p_end + cyc;
                }
                data_ready = std::max(data_ready, t_end);
            }
            if (!feasible) continue;
            double start = std::max(ready.at(op), data_ready);
            double finish =
                start + static_cast<double>(cost_by_actor.at(firing.actor).at(op));
            if (finish < best_finish - kEps) {
                best_finish = finish;
                best_start = start;
                best_op = op;
            }
        }
        if (best_op.empty())
            throw UnschedulableConstraintError(
                "no operator reachable for firing " + firing.str() +
                " (media do not connect it to its producers)");

        sched.mapping[static_cast<std::size_t>(node)] = best_op;
        for (auto ai : view.in_arcs[static_cast<std::size_t>(node)]) {
            const auto& arc = dag.arcs[static_cast<std::size_t>(ai)];
            const std::string& src_op = sched.mapping[static_cast<std::size_t>(arc.src)];
            if (src_op == best_op) continue;
            const arch::Medium* m = arch.best_medium(src_op, best_op, arc.bytes);
            double cyc = arch::transfer_cycles(*m, arc.bytes);
            double p_end = node_end[static_cast<std::size_t>(arc.src)];
            Transfer t;
            t.arcs = {ai};
            t.medium = m->id;
            t.src_op = src_op;
            t.dst_op = best_op;
            t.bytes = arc.bytes;
            if (m->blocking) {
                t.start = std::max(p_end, ready.at(src_op));
                ready[src_op] = t.start + cyc;
            } else {
                t.start = p_end;
            }
            t.end = t.start + cyc;
            sched.transfers.push_back(std::move(t));
        }
        node_start[static_cast<std::size_t>(node)] = best_start;
        node_end[static_cast<std::size_t>(node)] = best_finish;
        ready[best_op] = best_finish;
        sched.compute_slots[best_op].push_back({node, best_start, best_finish});
    }

    double makespan = 0.0;
    for (const auto& [op, slots] : sched.compute_slots)
        for (const auto& s : slots) makespan = std::max(makespan, s.end);
    for (const auto& t : sched.transfers) makespan = std::max(makespan, t.end);
    sched.makespan_cycles = makespan;
    return sched;
}

void validate_schedule(const TimedSchedule& s, const sdf::FiringDag& dag,
                       const arch::ArchGraph& arch) {
    const std::size_t n = dag.nodes.size();
    if (s.mapping.size() != n)
        throw InvalidScheduleError("mapping covers " + std::to_string(s.mapping.size()) +
                                   " firings, dag has " + std::to_string(n));

    std::vector<const ComputeSlot*> slot(n, nullptr);
    for (const auto& [op, slots] : s.compute_slots) {
        if (!arch.find_operator(op))
            throw InvalidScheduleError("slots reference unknown operator \"" + op + "\"");
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const auto& sl = slots[i];
            if (sl.node < 0 || static_cast<std::size_t>(sl.node) >= n)
                throw InvalidScheduleError("slot references unknown firing");
            if (slot[static_cast<std::size_t>(sl.node)])
                throw InvalidScheduleError("firing " +
                                           dag.nodes[static_cast<std::size_t>(sl.node)].str() +
                                           " scheduled twice");
            slot[static_cast<std::size_t>(sl.node)] = &sl;
            if (s.mapping[static_cast<std::size_t>(sl.node)] != op)
                throw InvalidScheduleError(
                    "mapping and slot operator disagree for firing " +
                    dag.nodes[static_cast<std::size_t>(sl.node)].str());
            if (sl.end < sl.start - kEps)
                throw InvalidScheduleError("slot with negative duration");
            if (i > 0 && sl.start < slots[i - 1].end - kEps)
                throw InvalidScheduleError("overlapping slots on operator \"" + op + "\"");
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!slot[i])
            throw InvalidScheduleError("firing " + dag.nodes[i].str() + " has no slot");

    std::vector<int> arc_transfer(dag.arcs.size(), -1);
    for (std::size_t ti = 0; ti < s.transfers.size(); ++ti) {
        const auto& t = s.transfers[ti];
        const arch::Medium* m = nullptr;
        for (const auto& cand : arch.media)
            if (cand.id == t.medium) m = &cand;
        if (!m) throw InvalidScheduleError("transfer uses unknown medium \"" + t.medium + "\"");
        if (!m->connects(t.src_op, t.dst_op))
            throw InvalidScheduleError("medium \"" + t.medium + "\" does not connect " +
                                       t.src_op + " and " + t.dst_op);
        if (t.arcs.empty()) throw InvalidScheduleError("transfer carries no arc");
        std::int64_t bytes = 0;
        for (auto ai : t.arcs) {
            if (ai < 0 || static_cast<std::size_t>(ai) >= dag.arcs.size())
                throw InvalidScheduleError("transfer references unknown arc");
            if (arc_transfer[static_cast<std::size_t>(ai)] != -1)
                throw InvalidScheduleError("arc transferred twice");
            arc_transfer[static_cast<std::size_t>(ai)] = static_cast<int>(ti);
            bytes += dag.arcs[static_cast<std::size_t>(ai)].bytes;
        }
        if (bytes != t.bytes)
            throw InvalidScheduleError("transfer byte count does not match its arcs");
        double cyc = arch::transfer_cycles(*m, t.bytes);
        if (std::abs((t.end - t.start) - cyc) > 1e-6)
            throw InvalidScheduleError("transfer duration does not match the medium cost");
    }

    for (std::size_t ai = 0; ai < dag.arcs.size(); ++ai) {
        const auto& arc = dag.arcs[ai];
        const auto& src_op = s.mapping[static_cast<std::size_t>(arc.src)];
        const auto& dst_op = s.mapping[static_cast<std::size_t>(arc.dst)];
        double p_end = slot[static_cast<std::size_t>(arc.src)]->end;
        double c_start = slot[static_cast<std::size_t>(arc.dst)]->start;
        if (src_op == dst_op) {
            if (arc_transfer[ai] != -1)
                throw InvalidScheduleError("same-operator arc has a transfer");
            if (p_end > c_start + kEps)
                throw InvalidScheduleError(
                    "precedence violated: " +
                    dag.nodes[static_cast<std::size_t>(arc.src)].str() + " ends after " +
                    dag.nodes[static_cast<std::size_t>(arc.dst)].str() + " starts");
        } else {
            if (arc_transfer[ai] == -1)
                throw InvalidScheduleError(
                    "cross-operator arc " +
                    dag.nodes[static_cast<std::size_t>(arc.src)].str() + " -> " +
                    dag.nodes[static_cast<std::size_t>(arc.dst)].str() + " has no transfer");
            const auto& t = s.transfers[static_cast<std::size_t>(arc_transfer[ai])];
            if (t.src_op != src_op || t.dst_op != dst_op)
                throw InvalidScheduleError("transfer endpoints do not match the mapping");
            if (t.start < p_end - kEps)
                throw InvalidScheduleError("transfer starts before its producer ends");
            if (t.end > c_start + kEps)
                throw InvalidScheduleError("transfer ends after its consumer starts");
        }
    }

    double makespan = 0.0;
    for (const auto& [op, slots] : s.compute_slots)
        for (const auto& sl : slots) makespan = std::max(makespan, sl.end);
    for (const auto& t : s.transfers) makespan = std::max(makespan, t.end);
    if (std::abs(makespan - s.makespan_cycles) > 1e-6)
        throw InvalidScheduleError("makespan field does not match the latest event");
}

TimedSchedule reduce_syncs(const TimedSchedule& s, const sdf::FiringDag& dag,
                           const arch::ArchGraph& arch) {
    TimedSchedule out = s;
    if (s.transfers.empty()) return out;

    std::vector<const ComputeSlot*> slot(dag.nodes.size(), nullptr);
    for (const auto& [op, slots] : s.compute_slots)
        for (const auto& sl : slots) slot[static_cast<std::size_t>(sl.node)] = &sl;

    std::vector<std::size_t> idx(s.transfers.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return s.transfers[a].start < s.transfers[b].start;
    });

    auto medium_of = [&](const std::string& id) -> const arch::Medium* {
        for (const auto& m : arch.media)
            if (m.id == id) return &m;
        return nullptr;
    };

    // Greedy: keep extending the current group while the merged transaction
    // still lands before every consumer's scheduled start.
    std::vector<Transfer> merged;
    std::vector<std::size_t> group;
    auto group_fits = [&](const std::vector<std::size_t>& members, Transfer* result) {
        const Transfer& first = s.transfers[members.front()];
        const arch::Medium* m = medium_of(first.medium);
        if (!m || m->blocking) return false;
        Transfer t;
        t.medium = first.medium;
        t.src_op = first.src_op;
        t.dst_op = first.dst_op;
        double src_ready = 0.0;
        double min_consumer = std::numeric_limits<double>::infinity();
        for (auto mi : members) {
            const Transfer& part = s.transfers[mi];
            t.bytes += part.bytes;
            for (auto ai : part.arcs) {
                t.arcs.push_back(ai);
                const auto& arc = dag.arcs[static_cast<std::size_t>(ai)];
                src_ready = std::max(src_ready, slot[static_cast<std::size_t>(arc.src)]->end);
                min_consumer =
                    std::min(min_consumer, slot[static_cast<std::size_t>(arc.dst)]->start);
            }
        }
        t.start = src_ready;
        t.end = src_ready + arch::transfer_cycles(*m, t.bytes);
        if (t.end > min_consumer + kEps) return false;
        if (result) *result = std::move(t);
        return true;
    };
    auto flush = [&]() {
        if (group.empty()) return;
        Transfer t;
        if (group.size() == 1) {
            t = s.transfers[group.front()];
        } else {
            group_fits(group, &t);
        }
        merged.push_back(std::move(t));
        group.clear();
    };

    for (std::size_t i : idx) {
        const Transfer& t = s.transfers[i];
        if (group.empty()) {
            group.push_back(i);
            continue;
        }
        const Transfer& head = s.transfers[group.front()];
        bool same_lane = head.src_op == t.src_op && head.dst_op == t.dst_op &&
                         head.medium == t.medium;
        if (same_lane) {
            std::vector<std::size_t> candidate = group;
            candidate.push_back(i);
            if (group_fits(candidate, nullptr)) {
                group = std::move(candidate);
                continue;
            }
        }
        flush();
        group.push_back(i);
    }
    flush();

    out.transfers = std::move(merged);
    double makespan = 0.0;
    for (const auto& [op, slots] : out.compute_slots)
        for (const auto& sl : slots) makespan = std::max(makespan, sl.end);
    for (const auto& t : out.transfers) makespan = std::max(makespan, t.end);
    out.makespan_cycles = makespan;
    validate_schedule(out, dag, arch);
    return out;
}

std::map<std::int32_t, Lifetime> arc_lifetimes(const TimedSchedule& s,
                                               const sdf::FiringDag& dag) {
    std::vector<const ComputeSlot*> slot(dag.nodes.size(), nullptr);
    for (const auto& [op, slots] : s.compute_slots)
        for (const auto& sl : slots) slot[static_cast<std::size_t>(sl.node)] = &sl;
    std::map<std::int32_t, Lifetime> life;
    for (std::int32_t ai = 0; ai < static_cast<std::int32_t>(dag.arcs.size()); ++ai) {
        const auto& arc = dag.arcs[static_cast<std::size_t>(ai)];
        life[ai] = {slot[static_cast<std::size_t>(arc.src)]->start,
                    slot[static_cast<std::size_t>(arc.dst)]->end};
    }
    return life;
}

BufferPlacement allocate_buffers(const TimedSchedule& s, const sdf::FiringDag& dag,
                                 const arch::ArchGraph& arch,
                                 const std::map<std::int32_t, Lifetime>& lifetimes) {
    BufferPlacement out;

    std::vector<std::int32_t> order;
    for (const auto& [ai, life] : lifetimes) order.push_back(ai);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        std::int64_t sa = dag.arcs[static_cast<std::size_t>(a)].bytes;
        std::int64_t sb = dag.arcs[static_cast<std::size_t>(b)].bytes;
        if (sa != sb) return sa > sb;
        return a < b;
    });

    struct RegionState {
        const arch::MemoryRegion* region;
        std::vector<const Placement*> used;
    };
    std::map<std::string, std::vector<RegionState>> regions;
    for (const auto& op : arch.operators) {
        for (const auto& r : op.memories)
            if (r.level == arch::MemoryLevel::Local)
                regions[op.id].push_back({&r, {}});
        for (const auto& r : op.memories)
            if (r.level == arch::MemoryLevel::External)
                regions[op.id].push_back({&r, {}});
    }

    auto overlaps = [](const Lifetime& a, const Lifetime& b) {
        return a.first_write < b.last_read - kEps && b.first_write < a.last_read - kEps;
    };

    out.placements.reserve(order.size());
    for (auto ai : order) {
        const auto& arc = dag.arcs[static_cast<std::size_t>(ai)];
        const Lifetime& life = lifetimes.at(ai);
        const std::string& op = s.mapping[static_cast<std::size_t>(arc.dst)];
        auto rit = regions.find(op);
        if (rit == regions.end() || rit->second.empty())
            throw CapacityExceededError("operator \"" + op + "\" has no memory regions");

        bool placed = false;
        for (auto& rs : rit->second) {
            // first-fit around lifetime-overlapping neighbors
            std::vector<const Placement*> conflicts;
            for (const auto* p : rs.used)
                if (overlaps(p->lifetime, life)) conflicts.push_back(p);
            std::sort(conflicts.begin(), conflicts.end(),
                      [](const Placement* a, const Placement* b) {
                          return a->offset < b->offset;
                      });
            std::int64_t cursor = 0;
            for (const auto* c : conflicts) {
                if (cursor + arc.bytes <= c->offset) break;
                cursor = std::max(cursor, c->offset + c->size);
            }
            if (cursor + arc.bytes <= rs.region->capacity_bytes) {
                out.placements.push_back(
                    {ai, op, rs.region->name, cursor, arc.bytes, life});
                rs.used.push_back(&out.placements.back());
                auto& peak = out.demand[op][rs.region->name];
                peak = std::max(peak, cursor + arc.bytes);
                if (rs.region->level == arch::MemoryLevel::External)
                    out.external_spill_bytes += arc.bytes;
                placed = true;
                break;
            }
        }
        if (!placed)
            throw CapacityExceededError(
                "buffer of " + std::to_string(arc.bytes) + " bytes for arc " +
                dag.nodes[static_cast<std::size_t>(arc.src)].str() + " -> " +
                dag.nodes[static_cast<std::size_t>(arc.dst)].str() +
                " fits no region on \"" + op + "\"");
    }
    return out;
}

MemoryModeChoice recommend_memory_mode(
    const std::vector<std::int64_t>& demands,
    const std::map<std::string, std::vector<std::int64_t>>& modes) {
    std::vector<std::int64_t> need = demands;
    std::sort(need.rbegin(), need.rend());
    MemoryModeChoice choice;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& [name, caps] : modes) {
        std::vector<std::int64_t> have = caps;
        std::sort(have.rbegin(), have.rend());
        std::int64_t spill = 0;
        for (std::size_t i = 0; i < need.size(); ++i) {
            std::int64_t cap = i < have.size() ? have[i] : 0;
            spill += std::max<std::int64_t>(0, need[i] - cap);
        }
        choice.spill_bytes[name] = spill;
        if (spill < best) {
            best = spill;
            choice.best = name;
        }
    }
    return choice;
}

std::map<std::string, double> load_report(const TimedSchedule& s) {
    std::map<std::string, double> load;
    if (s.makespan_cycles <= 0.0) return load;
    for (const auto& [op, slots] : s.compute_slots) {
        double busy = 0.0;
        for (const auto& sl : slots) busy += sl.end - sl.start;
        load[op] = busy / s.makespan_cycles;
    }
    return load;
}

std::string serialize_schedule(const TimedSchedule& s, const sdf::FiringDag& dag) {
    ordered_json j;
    j["makespan_cycles"] = s.makespan_cycles;
    j["mapping"] = ordered_json::array();
    for (std::size_t i = 0; i < s.mapping.size(); ++i) {
        ordered_json jm;
        jm["firing"] = dag.nodes[i].str();
        jm["operator"] = s.mapping[i];
        j["mapping"].push_back(jm);
    }
    j["slots"] = ordered_json::array();
    for (const auto& [op, slots] : s.compute_slots) {
        for (const auto& sl : slots) {
            ordered_json js;
            js["operator"] = op;
            js["firing"] = dag.nodes[static_cast<std::size_t>(sl.node)].str();
            js["start"] = sl.start;
            js["end"] = sl.end;
            j["slots"].push_back(js);
        }
    }
    j["transfers"] = ordered_json::array();
    for (const auto& t : s.transfers) {
        ordered_json jt;
        jt["arcs"] = t.arcs;
        jt["medium"] = t.medium;
        jt["src"] = t.src_op;
        jt["dst"] = t.dst_op;
        jt["start"] = t.start;
        jt["end"] = t.end;
        jt["bytes"] = t.bytes;
        j["transfers"].push_back(jt);
    }
    return j.dump(2) + "\n";
}

namespace {

std::int32_t node_of(const sdf::FiringDag& dag, const std::string& name) {
    auto hash = name.rfind('#');
    if (hash == std::string::npos)
        throw SemanticError("firing name \"" + name + "\" lacks an index");
    return dag.node_index(name.substr(0, hash),
                          std::stoll(name.substr(hash + 1)));
}

}  // namespace

TimedSchedule parse_schedule(const std::string& text, const sdf::FiringDag& dag) {
    auto j = internal::parse_json(text, "schedule");
    TimedSchedule s;
    s.makespan_cycles = internal::get_field<double>(j, "makespan_cycles", "schedule");
    s.mapping.assign(dag.nodes.size(), "");
    if (!j.contains("mapping") || !j.at("mapping").is_array())
        throw SemanticError("schedule: missing mapping array");
    for (const auto& jm : j.at("mapping")) {
        std::int32_t node =
            node_of(dag, internal::get_field<std::string>(jm, "firing", "mapping"));
        s.mapping[static_cast<std::size_t>(node)] =
            internal::get_field<std::string>(jm, "operator", "mapping");
    }
    if (j.contains("slots")) {
        for (const auto& js : j.at("slots")) {
            ComputeSlot sl;
            sl.node = node_of(dag, internal::get_field<std::string>(js, "firing", "slot"));
            sl.start = internal::get_field<double>(js, "start", "slot");
            sl.end = internal::get_field<double>(js, "end", "slot");
            s.compute_slots[internal::get_field<std::string>(js, "operator", "slot")]
                .push_back(sl);
        }
        for (auto& [op, slots] : s.compute_slots)
            std::sort(slots.begin(), slots.end(),
                      [](const ComputeSlot& a, const ComputeSlot& b) {
                          return a.start < b.start;
                      });
    }
    if (j.contains("transfers")) {
        for (const auto& jt : j.at("transfers")) {
            Transfer t;
            if (!jt.contains("arcs") || !jt.at("arcs").is_array())
                throw SemanticError("transfer: missing arcs array");
            for (const auto& a : jt.at("arcs")) t.arcs.push_back(a.get<std::int32_t>());
            t.medium = internal::get_field<std::string>(jt, "medium", "transfer");
            t.src_op = internal::get_field<std::string>(jt, "src", "transfer");
            t.dst_op = internal::get_field<std::string>(jt, "dst", "transfer");
            t.start = internal::get_field<double>(jt, "start", "transfer");
            t.end = internal::get_field<double>(jt, "end", "transfer");
            t.bytes = internal::get_field<std::int64_t>(jt, "bytes", "transfer");
            s.transfers.push_back(std::move(t));
        }
    }
    return s;
}

void save_schedule(const TimedSchedule& s, const sdf::FiringDag& dag,
                   const std::string& path) {
    internal::write_file(path, serialize_schedule(s, dag));
}

TimedSchedule load_schedule(const std::string& path, const sdf::FiringDag& dag) {
    return parse_schedule(internal::read_file(path), dag);
}

}  // namespace sdfmap::sched
