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

#ifndef SDFMAP_SDF_HPP
#define SDFMAP_SDF_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sdfmap::sdf {

// Synchronous dataflow: every actor produces/consumes a fixed token count
// per firing. Hierarchy is structural only; rates induce all repetition
// counts through the balance equations.

enum class ActorKind { Atomic, Hierarchical };

struct SdfGraph;

struct Actor {
    std::string id;  // unique within its graph level; must not contain '.' or '/'
    ActorKind kind = ActorKind::Atomic;
    // Cycle cost per operator id, "*" = any operator. Consulted as a
    // fallback when no timing table entry matches.
    std::map<std::string, std::int64_t> timing;
    std::map<std::string, std::int64_t> params;
    std::shared_ptr<SdfGraph> subgraph;  // set iff kind == Hierarchical
};

struct Endpoint {
    // "this" names an interface port of the enclosing hierarchical actor.
    std::string actor;
    std::string port;

    bool is_interface() const { return actor == "this"; }
    std::string str() const { return actor + "." + port; }
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct SdfEdge {
    Endpoint src;
    Endpoint dst;
    std::int64_t prod = 1;        // tokens per source firing, > 0
    std::int64_t cons = 1;        // tokens per destination firing, > 0
    std::int64_t token_bytes = 1; // >= 1
    std::int64_t delay = 0;       // initial tokens, >= 0
};

struct SdfGraph {
    std::string name;
    std::vector<Actor> actors;
    std::vector<SdfEdge> edges;

    const Actor* find_actor(const std::string& id) const;
};

// Verifies ids, rates, endpoint references and interface consistency.
// Throws SemanticError / InterfaceRateMismatchError / RecursiveHierarchyError.
void validate(const SdfGraph& g);

// Minimal positive repetition vector per weakly connected component
// (gcd of each component's counts is 1). Throws InconsistentGraphError
// with a witness edge if the balance equations only admit the zero vector.
std::map<std::string, std::int64_t> repetition_vector(const SdfGraph& g);

// Substitutes every hierarchical actor by its contents, splicing parent
// edges onto interface edges. Inner actor ids become "parent/child". The
// result is single-level; rates induce the scaled repetition counts.
SdfGraph flatten(const SdfGraph& g);

// One node per (actor, firing) of a single graph iteration.
struct Firing {
    std::string actor;
    std::int64_t index = 0;  // 0-based, < q(actor)

    std::string str() const;
    friend bool operator==(const Firing&, const Firing&) = default;
    friend auto operator<=>(const Firing&, const Firing&) = default;
};

struct DagArc {
    std::int32_t src = 0;  // node indices into FiringDag::nodes
    std::int32_t dst = 0;
    std::int32_t edge = 0;          // originating edge index in the flat graph
    std::int64_t first_token = 0;   // first token (producer numbering) carried
    std::int64_t token_count = 0;
    std::int64_t bytes = 0;         // token_count * token_bytes
};

// Tokens consumed from an edge's initial (delay) population; they have no
// producer node and are materialized by whoever executes the dag.
struct InitialTokenRead {
    std::int32_t dst = 0;
    std::int32_t edge = 0;
    std::int64_t first_token = 0;  // position within the initial tokens
    std::int64_t token_count = 0;
};

struct FiringDag {
    SdfGraph graph;  // the flat graph the dag was derived from
    std::map<std::string, std::int64_t> repetitions;
    std::vector<Firing> nodes;          // grouped by actor (actors sorted by id)
    std::vector<DagArc> arcs;           // deterministic order
    std::vector<InitialTokenRead> initial_reads;

    std::int32_t node_index(const std::string& actor, std::int64_t firing) const;
    std::vector<std::int32_t> topological_order() const;  // throws CyclicDependencyError
};

// Expands one iteration of a flat graph into its firing dag. Token k of a
// source firing lands at channel position delay + k and is consumed by
// destination firing floor(position / cons); positions beyond one
// iteration's consumption belong to the next iteration and produce no arc.
FiringDag expand(const SdfGraph& flat_graph);

// Single-appearance looped schedule in "(n X)" notation, derived from the
// hierarchy and a deterministic topological order per level. Hierarchical
// actors print as anonymous loops over their contents; atomic actors print
// their leaf name. Throws NoSingleAppearanceScheduleError (carrying the
// partial expression) when a level cannot be topologically ordered.
std::string schedule_expression(const SdfGraph& g);

// Parses "(n X)" notation into leaf-name -> total firing count. Accepts
// both this library's output and hand-written variants such as
// "(8Proc)(4(64(A(2(B)))C))D".
std::map<std::string, std::int64_t> parse_expression_counts(const std::string& expr);

// Total firings of an expansion, grouped by the actor's leaf name
// (the path segment after the last '/').
std::map<std::string, std::int64_t> leaf_firing_counts(
    const std::map<std::string, std::int64_t>& repetitions);

std::string leaf_name(const std::string& actor_id);

// File format: JSON object with "name", "actors" (id, kind, timing, params,
// optional "subgraph") and "edges" (src, dst, prod, cons, token_bytes,
// delay). parse(serialize(g)) is the identity after normalization.
SdfGraph parse_graph(const std::string& text);
SdfGraph load_graph(const std::string& path);
std::string serialize_graph(const SdfGraph& g);
void save_graph(const SdfGraph& g, const std::string& path);

}  // namespace sdfmap::sdf

#endif
