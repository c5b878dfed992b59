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

#include "sdfmap/sdf.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <unordered_set>

#include "sdfmap/errors.hpp"
#include "internal/jsonio.hpp"

namespace sdfmap::sdf {

namespace {

using internal::ordered_json;

bool valid_ident(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '/')
            return false;
    }
    return true;
}

bool valid_port(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    }
    return true;
}

// Exact rational arithmetic for the balance equations. Counts stay tiny in
// practice; __int128 intermediates make overflow a non-issue.
struct Frac {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Frac make(std::int64_t n, std::int64_t d) {
        __int128 nn = n, dd = d;
        if (dd < 0) {
            nn = -nn;
            dd = -dd;
        }
        __int128 g = std::gcd(static_cast<std::int64_t>(nn < 0 ? -nn : nn),
                              static_cast<std::int64_t>(dd));
        if (g == 0) g = 1;
        return Frac{static_cast<std::int64_t>(nn / g), static_cast<std::int64_t>(dd / g)};
    }
    Frac mul(std::int64_t n, std::int64_t d) const {
        // Cross-reduce before multiplying so intermediates stay in range.
        std::int64_t g1 = std::gcd(num, d);
        std::int64_t g2 = std::gcd(n, den);
        return make((num / g1) * (n / g2), (den / g2) * (d / g1));
    }
    bool equals(const Frac& o) const {
        return static_cast<__int128>(num) * o.den == static_cast<__int128>(o.num) * den;
    }
};

std::int64_t lcm64(std::int64_t a, std::int64_t b) {
    return a / std::gcd(a, b) * b;
}

std::map<std::string, Frac> solve_balance(const SdfGraph& g, bool* has_interface);
std::map<std::string, std::int64_t> normalize_balance(
    const SdfGraph& g, const std::map<std::string, Frac>& raw);

void validate_level(const SdfGraph& g, const std::string& path, int depth,
                    std::unordered_set<const SdfGraph*>& on_path) {
    if (depth > 64 || on_path.count(&g))
        throw RecursiveHierarchyError("hierarchy nesting exceeds limit at \"" + path +
                                      "\"; an actor must not contain itself");
    on_path.insert(&g);

    std::set<std::string> ids;
    for (const auto& a : g.actors) {
        if (!valid_ident(a.id) || a.id == "this" ||
            a.id.find('.') != std::string::npos)
            throw SemanticError("invalid actor id \"" + a.id + "\" in " + path);
        if (!ids.insert(a.id).second)
            throw SemanticError("duplicate actor id \"" + a.id + "\" in " + path);
        if (a.kind == ActorKind::Hierarchical && !a.subgraph)
            throw SemanticError("hierarchical actor \"" + a.id + "\" has no subgraph");
        if (a.kind == ActorKind::Atomic && a.subgraph)
            throw SemanticError("atomic actor \"" + a.id + "\" carries a subgraph");
        for (const auto& [op, cycles] : a.timing)
            if (cycles < 0)
                throw SemanticError("negative timing on actor \"" + a.id + "\"");
    }

    std::set<std::pair<std::string, std::string>> written_ports;
    for (const auto& e : g.edges) {
        for (const Endpoint* ep : {&e.src, &e.dst}) {
            if (!valid_port(ep->port))
                throw SemanticError("invalid port name \"" + ep->port + "\" in " + path);
            if (!ep->is_interface() && !ids.count(ep->actor))
                throw SemanticError("edge references unknown actor \"" + ep->actor +
                                    "\" in " + path);
        }
        if (e.prod <= 0 || e.cons <= 0)
            throw SemanticError("nonpositive rate on edge " + e.src.str() + " -> " +
                                e.dst.str());
        if (e.token_bytes <= 0)
            throw SemanticError("nonpositive token_bytes on edge " + e.src.str() +
                                " -> " + e.dst.str());
        if (e.delay < 0)
            throw SemanticError("negative delay on edge " + e.src.str() + " -> " +
                                e.dst.str());
        // One writer per input port; output ports may fan out (each edge
        // receives a copy of every produced token).
        auto key = std::make_pair(e.dst.actor, e.dst.port);
        if (!written_ports.insert(key).second)
            throw SemanticError("port " + e.dst.str() + " has two incoming edges in " +
                                path);
    }

    // Balance must be solvable at this level and the interface, if present,
    // must fire exactly once per parent firing.
    {
        auto raw = solve_balance(g, nullptr);
        auto q = normalize_balance(g, raw);
        if (auto it = q.find("this"); it != q.end() && it->second != 1)
            throw InterfaceRateMismatchError(
                "subgraph \"" + path + "\" rates require the interface to fire " +
                std::to_string(it->second) + " times per parent firing");
    }

    for (const auto& a : g.actors) {
        if (a.kind != ActorKind::Hierarchical) continue;
        const SdfGraph& sub = *a.subgraph;
        validate_level(sub, path + "/" + a.id, depth + 1, on_path);

        // Interface consistency: for each port of the hierarchical actor,
        // the parent-side rate must equal the inner "this"-side rate.
        for (const auto& pe : g.edges) {
            if (pe.dst.actor == a.id) {
                bool found = false;
                for (const auto& ie : sub.edges) {
                    if (ie.src.is_interface() && ie.src.port == pe.dst.port) {
                        found = true;
                        if (ie.prod != pe.cons)
                            throw InterfaceRateMismatchError(
                                "interface " + a.id + "." + pe.dst.port + ": parent consumes " +
                                std::to_string(pe.cons) + " tokens/firing but subgraph declares " +
                                std::to_string(ie.prod));
                        if (ie.token_bytes != pe.token_bytes)
                            throw InterfaceRateMismatchError(
                                "interface " + a.id + "." + pe.dst.port +
                                ": token_bytes differ between parent and subgraph");
                    }
                }
                if (!found)
                    throw SemanticError("input interface " + a.id + "." + pe.dst.port +
                                        " is not used inside the subgraph");
            }
            if (pe.src.actor == a.id) {
                int writers = 0;
                for (const auto& ie : sub.edges) {
                    if (ie.dst.is_interface() && ie.dst.port == pe.src.port) {
                        ++writers;
                        if (ie.cons != pe.prod)
                            throw InterfaceRateMismatchError(
                                "interface " + a.id + "." + pe.src.port + ": parent produces " +
                                std::to_string(pe.prod) + " tokens/firing but subgraph delivers " +
                                std::to_string(ie.cons));
                        if (ie.token_bytes != pe.token_bytes)
                            throw InterfaceRateMismatchError(
                                "interface " + a.id + "." + pe.src.port +
                                ": token_bytes differ between parent and subgraph");
                    }
                }
                if (writers != 1)
                    throw SemanticError("output interface " + a.id + "." + pe.src.port +
                                        " needs exactly one inner producer, found " +
                                        std::to_string(writers));
            }
        }
    }
    on_path.erase(&g);
}

// Repetition vector over one level. Interface endpoints count as a virtual
// actor firing exactly once per parent iteration.
std::map<std::string, Frac> solve_balance(const SdfGraph& g, bool* has_interface) {
    std::map<std::string, std::vector<std::pair<int, bool>>> adj;  // actor -> (edge, is_src)
    std::set<std::string> names;
    for (const auto& a : g.actors) names.insert(a.id);
    bool iface = false;
    for (int i = 0; i < static_cast<int>(g.edges.size()); ++i) {
        const auto& e = g.edges[i];
        if (e.src.is_interface() || e.dst.is_interface()) iface = true;
        names.insert(e.src.actor);
        names.insert(e.dst.actor);
        adj[e.src.actor].push_back({i, true});
        adj[e.dst.actor].push_back({i, false});
    }
    if (has_interface) *has_interface = iface;

    std::map<std::string, Frac> q;
    for (const auto& root : names) {
        if (q.count(root)) continue;
        q[root] = Frac{1, 1};
        std::vector<std::string> stack{root};
        while (!stack.empty()) {
            std::string a = stack.back();
            stack.pop_back();
            Frac qa = q[a];
            for (auto [ei, is_src] : adj[a]) {
                const auto& e = g.edges[ei];
                const std::string& other = is_src ? e.dst.actor : e.src.actor;
                // balance: q(src) * prod == q(dst) * cons
                Frac qo = is_src ? qa.mul(e.prod, e.cons) : qa.mul(e.cons, e.prod);
                auto it = q.find(other);
                if (it == q.end()) {
                    q[other] = qo;
                    stack.push_back(other);
                } else if (!it->second.equals(qo)) {
                    throw InconsistentGraphError(
                        "balance equations are inconsistent at edge " + e.src.str() +
                        " -> " + e.dst.str() + " (prod " + std::to_string(e.prod) +
                        ", cons " + std::to_string(e.cons) + ")");
                }
            }
        }
    }
    return q;
}

std::map<std::string, std::int64_t> normalize_balance(
    const SdfGraph& g, const std::map<std::string, Frac>& raw) {
    // Scale each weakly connected component independently to the smallest
    // positive integer vector.
    std::map<std::string, int> comp;
    std::map<std::string, std::vector<std::string>> nbr;
    for (const auto& e : g.edges) {
        nbr[e.src.actor].push_back(e.dst.actor);
        nbr[e.dst.actor].push_back(e.src.actor);
    }
    int ncomp = 0;
    for (const auto& [name, f] : raw) {
        if (comp.count(name)) continue;
        int c = ncomp++;
        std::vector<std::string> stack{name};
        comp[name] = c;
        while (!stack.empty()) {
            auto a = stack.back();
            stack.pop_back();
            for (const auto& b : nbr[a]) {
                if (!comp.count(b)) {
                    comp[b] = c;
                    stack.push_back(b);
                }
            }
        }
    }
    std::vector<std::int64_t> scale(ncomp, 1);
    for (const auto& [name, f] : raw)
        scale[comp[name]] = lcm64(scale[comp[name]], f.den);
    std::map<std::string, std::int64_t> q;
    std::vector<std::int64_t> g0(ncomp, 0);
    for (const auto& [name, f] : raw) {
        std::int64_t v = f.num * (scale[comp[name]] / f.den);
        q[name] = v;
        g0[comp[name]] = std::gcd(g0[comp[name]], v);
    }
    for (auto& [name, v] : q) v /= g0[comp[name]];
    return q;
}

}  // namespace

const Actor* SdfGraph::find_actor(const std::string& id) const {
    for (const auto& a : actors)
        if (a.id == id) return &a;
    return nullptr;
}

void validate(const SdfGraph& g) {
    std::unordered_set<const SdfGraph*> on_path;
    validate_level(g, g.name.empty() ? std::string("graph") : g.name, 0, on_path);
    for (const auto& e : g.edges)
        if (e.src.is_interface() || e.dst.is_interface())
            throw SemanticError("top level graph must not reference interface port " +
                                (e.src.is_interface() ? e.src.str() : e.dst.str()));
}

std::map<std::string, std::int64_t> repetition_vector(const SdfGraph& g) {
    auto raw = solve_balance(g, nullptr);
    // Actors with no edges fire once per iteration.
    for (const auto& a : g.actors)
        if (!raw.count(a.id)) raw[a.id] = Frac{1, 1};
    auto q = normalize_balance(g, raw);
    if (auto it = q.find("this"); it != q.end()) {
        if (it->second != 1)
            throw InterfaceRateMismatchError(
                "subgraph rates require the interface to fire " +
                std::to_string(it->second) + " times per parent firing");
        q.erase(it);
    }
    return q;
}

namespace {

// Substitute one hierarchical actor into its parent level.
void splice_actor(SdfGraph& g, std::size_t actor_idx) {
    Actor h = std::move(g.actors[actor_idx]);
    g.actors.erase(g.actors.begin() + static_cast<std::ptrdiff_t>(actor_idx));
    const SdfGraph& sub = *h.subgraph;

    auto qualify = [&h](const Endpoint& ep) {
        return Endpoint{h.id + "/" + ep.actor, ep.port};
    };

    for (const auto& a : sub.actors) {
        Actor copy = a;
        copy.id = h.id + "/" + a.id;
        for (const auto& existing : g.actors)
            if (existing.id == copy.id)
                throw SemanticError("flatten would duplicate actor id \"" + copy.id + "\"");
        g.actors.push_back(std::move(copy));
    }

    // Inner edge on each side of every interface port.
    struct InnerOut {
        Endpoint src;
        std::int64_t delay;
    };
    std::map<std::string, std::vector<SdfEdge>> iface_in;  // port -> inner consumer edges
    std::map<std::string, InnerOut> iface_out;             // port -> inner producer

    std::vector<SdfEdge> kept;
    for (const auto& ie : sub.edges) {
        if (ie.src.is_interface() && ie.dst.is_interface())
            throw SemanticError("edge connects two interface ports inside \"" + h.id + "\"");
        if (ie.src.is_interface()) {
            iface_in[ie.src.port].push_back(ie);
        } else if (ie.dst.is_interface()) {
            iface_out[ie.dst.port] = InnerOut{qualify(ie.src), ie.delay};
        } else {
            SdfEdge copy = ie;
            copy.src = qualify(ie.src);
            copy.dst = qualify(ie.dst);
            kept.push_back(copy);
        }
    }

    std::vector<SdfEdge> rewritten;
    for (const auto& pe : g.edges) {
        bool src_here = pe.src.actor == h.id;
        bool dst_here = pe.dst.actor == h.id;
        if (!src_here && !dst_here) {
            rewritten.push_back(pe);
            continue;
        }
        // Resolve the producer side first, then fan out per inner consumer.
        Endpoint src = pe.src;
        std::int64_t prod = pe.prod;
        std::int64_t delay = pe.delay;
        if (src_here) {
            auto it = iface_out.find(pe.src.port);
            if (it == iface_out.end())
                throw SemanticError("no inner producer for interface " + pe.src.str());
            src = it->second.src;
            delay += it->second.delay;
            // validated: inner cons == parent prod, so the inner producer's
            // own rate carries over
            for (const auto& ie : sub.edges)
                if (ie.dst.is_interface() && ie.dst.port == pe.src.port) prod = ie.prod;
        }
        if (dst_here) {
            auto it = iface_in.find(pe.dst.port);
            if (it == iface_in.end())
                throw SemanticError("no inner consumer for interface " + pe.dst.str());
            for (const auto& ie : it->second) {
                SdfEdge spliced;
                spliced.src = src;
                spliced.dst = qualify(ie.dst);
                spliced.prod = prod;
                spliced.cons = ie.cons;
                spliced.token_bytes = pe.token_bytes;
                spliced.delay = delay + ie.delay;
                rewritten.push_back(spliced);
            }
        } else {
            SdfEdge spliced = pe;
            spliced.src = src;
            spliced.prod = prod;
            spliced.delay = delay;
            rewritten.push_back(spliced);
        }
    }
    for (auto& e : kept) rewritten.push_back(e);
    g.edges = std::move(rewritten);
}

}  // namespace

SdfGraph flatten(const SdfGraph& g) {
    validate(g);
    SdfGraph flat = g;
    bool again = true;
    while (again) {
        again = false;
        for (std::size_t i = 0; i < flat.actors.size(); ++i) {
            if (flat.actors[i].kind == ActorKind::Hierarchical) {
                splice_actor(flat, i);
                again = true;
                break;
            }
        }
    }
    std::stable_sort(flat.actors.begin(), flat.actors.end(),
                     [](const Actor& a, const Actor& b) { return a.id < b.id; });
    return flat;
}

std::string Firing::str() const {
    return actor + "#" + std::to_string(index);
}

std::int32_t FiringDag::node_index(const std::string& actor, std::int64_t firing) const {
    Firing key{actor, firing};
    auto it = std::lower_bound(nodes.begin(), nodes.end(), key);
    if (it == nodes.end() || !(*it == key))
        throw Error("unknown firing " + key.str());
    return static_cast<std::int32_t>(it - nodes.begin());
}

std::vector<std::int32_t> FiringDag::topological_order() const {
    std::vector<int> indeg(nodes.size(), 0);
    std::vector<std::vector<std::int32_t>> out(nodes.size());
    for (const auto& a : arcs) {
        ++indeg[static_cast<std::size_t>(a.dst)];
        out[static_cast<std::size_t>(a.src)].push_back(a.dst);
    }
    std::set<std::int32_t> ready;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (indeg[i] == 0) ready.insert(static_cast<std::int32_t>(i));
    std::vector<std::int32_t> order;
    order.reserve(nodes.size());
    while (!ready.empty()) {
        std::int32_t n = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(n);
        for (auto m : out[static_cast<std::size_t>(n)])
            if (--indeg[static_cast<std::size_t>(m)] == 0) ready.insert(m);
    }
    if (order.size() != nodes.size()) {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (indeg[i] > 0)
                throw CyclicDependencyError(
                    "expansion is not acyclic; a zero-delay cycle passes through " +
                    nodes[i].str());
    }
    return order;
}

FiringDag expand(const SdfGraph& flat_graph) {
    for (const auto& a : flat_graph.actors)
        if (a.kind == ActorKind::Hierarchical)
            throw SemanticError("expand requires a flat graph; actor \"" + a.id +
                                "\" is hierarchical (run flatten first)");
    validate(flat_graph);

    FiringDag dag;
    dag.graph = flat_graph;
    std::stable_sort(dag.graph.actors.begin(), dag.graph.actors.end(),
                     [](const Actor& a, const Actor& b) { return a.id < b.id; });
    dag.repetitions = repetition_vector(dag.graph);

    std::map<std::string, std::int32_t> base;
    for (const auto& a : dag.graph.actors) {
        base[a.id] = static_cast<std::int32_t>(dag.nodes.size());
        std::int64_t q = dag.repetitions.at(a.id);
        for (std::int64_t i = 0; i < q; ++i) dag.nodes.push_back(Firing{a.id, i});
    }

    for (std::int32_t ei = 0; ei < static_cast<std::int32_t>(dag.graph.edges.size()); ++ei) {
        const SdfEdge& e = dag.graph.edges[ei];
        std::int64_t qs = dag.repetitions.at(e.src.actor);
        std::int64_t qd = dag.repetitions.at(e.dst.actor);
        std::int64_t p = e.prod, c = e.cons, d = e.delay;

        // Initial tokens occupy channel positions [0, d).
        for (std::int64_t j = 0; j < qd; ++j) {
            std::int64_t lo = j * c;
            std::int64_t hi = std::min((j + 1) * c, d);
            if (lo >= hi) break;
            dag.initial_reads.push_back(
                InitialTokenRead{base[e.dst.actor] + static_cast<std::int32_t>(j), ei, lo,
                                 hi - lo});
        }
        for (std::int64_t i = 0; i < qs; ++i) {
            // Tokens [i*p, (i+1)*p) land at positions d + token.
            std::int64_t jfirst = (d + i * p) / c;
            std::int64_t jlast = (d + (i + 1) * p - 1) / c;
            for (std::int64_t j = jfirst; j <= jlast; ++j) {
                if (j >= qd) break;  // consumed by the next iteration
                std::int64_t tok_lo = std::max(i * p, j * c - d);
                std::int64_t tok_hi = std::min((i + 1) * p, (j + 1) * c - d);
                if (tok_lo >= tok_hi) continue;
                DagArc arc;
                arc.src = base[e.src.actor] + static_cast<std::int32_t>(i);
                arc.dst = base[e.dst.actor] + static_cast<std::int32_t>(j);
                arc.edge = ei;
                arc.first_token = tok_lo;
                arc.token_count = tok_hi - tok_lo;
                arc.bytes = arc.token_count * e.token_bytes;
                dag.arcs.push_back(arc);
            }
        }
    }
    dag.topological_order();  // rejects zero-delay cycles
    return dag;
}

std::string leaf_name(const std::string& actor_id) {
    auto pos = actor_id.rfind('/');
    return pos == std::string::npos ? actor_id : actor_id.substr(pos + 1);
}

std::map<std::string, std::int64_t> leaf_firing_counts(
    const std::map<std::string, std::int64_t>& repetitions) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& [actor, q] : repetitions) counts[leaf_name(actor)] += q;
    return counts;
}

namespace {

// Topological order of one hierarchy level in "(n X)" printing. Edges whose
// delay covers a full iteration's consumption impose no intra-iteration
// order and are ignored.
std::vector<const Actor*> level_order(const SdfGraph& g,
                                      const std::map<std::string, std::int64_t>& q,
                                      std::string* partial) {
    std::map<std::string, int> indeg;
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& a : g.actors) indeg[a.id] = 0;
    for (const auto& e : g.edges) {
        if (e.src.is_interface() || e.dst.is_interface()) continue;
        std::int64_t consumed = e.cons * q.at(e.dst.actor);
        if (e.delay >= consumed) continue;  // fully decoupled by initial tokens
        out[e.src.actor].push_back(e.dst.actor);
        ++indeg[e.dst.actor];
    }
    std::set<std::string> ready;
    for (const auto& [id, deg] : indeg)
        if (deg == 0) ready.insert(id);
    std::vector<const Actor*> order;
    while (!ready.empty()) {
        std::string id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(g.find_actor(id));
        for (const auto& m : out[id])
            if (--indeg[m] == 0) ready.insert(m);
    }
    if (order.size() != g.actors.size()) {
        std::string expr;
        for (const auto* a : order) expr += "(" + a->id + ")";
        *partial = expr;
        return {};
    }
    return order;
}

std::string expression_for(const SdfGraph& g);

std::string actor_term(const Actor& a, std::int64_t q) {
    std::string body = a.kind == ActorKind::Hierarchical ? expression_for(*a.subgraph)
                                                         : a.id;
    if (a.kind == ActorKind::Hierarchical) {
        if (q == 1) return body;
        return "(" + std::to_string(q) + body + ")";
    }
    if (q == 1) return "(" + body + ")";
    return "(" + std::to_string(q) + body + ")";
}

std::string expression_for(const SdfGraph& g) {
    auto q = repetition_vector(g);
    std::string partial;
    auto order = level_order(g, q, &partial);
    if (order.empty() && !g.actors.empty())
        throw NoSingleAppearanceScheduleError(
            "level \"" + g.name + "\" has a cycle not broken by delays; no "
            "single appearance schedule exists",
            partial);
    std::string expr;
    for (const Actor* a : order) expr += actor_term(*a, q.at(a->id));
    return expr;
}

}  // namespace

std::string schedule_expression(const SdfGraph& g) {
    validate(g);
    return expression_for(g);
}

namespace {

struct ExprParser {
    const std::string& s;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool at_name() {
        return pos < s.size() &&
               (std::isalpha(static_cast<unsigned char>(s[pos])) || s[pos] == '_');
    }
    std::string name() {
        std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) ||
                                  s[pos] == '_' || s[pos] == '/'))
            ++pos;
        return s.substr(start, pos - start);
    }
    std::int64_t number() {
        std::int64_t v = 0;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            v = v * 10 + (s[pos] - '0');
            ++pos;
        }
        return v;
    }
    void sequence(std::int64_t mult, std::map<std::string, std::int64_t>& counts) {
        skip_ws();
        while (pos < s.size() && s[pos] != ')') {
            if (s[pos] == '(') {
                ++pos;
                skip_ws();
                std::int64_t n = 1;
                if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])))
                    n = number();
                sequence(mult * n, counts);
                skip_ws();
                if (pos >= s.size() || s[pos] != ')')
                    throw SyntaxError("unbalanced parenthesis in schedule expression");
                ++pos;
            } else if (at_name()) {
                counts[leaf_name(name())] += mult;
            } else {
                throw SyntaxError("unexpected character '" + std::string(1, s[pos]) +
                                  "' in schedule expression");
            }
            skip_ws();
        }
    }
};

}  // namespace

std::map<std::string, std::int64_t> parse_expression_counts(const std::string& expr) {
    ExprParser p{expr};
    std::map<std::string, std::int64_t> counts;
    p.sequence(1, counts);
    if (p.pos != expr.size())
        throw SyntaxError("trailing characters in schedule expression");
    return counts;
}

// ---------------------------------------------------------------------------
// File format

namespace {

Endpoint parse_endpoint(const std::string& text, const std::string& ctx) {
    auto dot = text.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= text.size())
        throw SemanticError(ctx + ": endpoint \"" + text + "\" must be \"actor.port\"");
    return Endpoint{text.substr(0, dot), text.substr(dot + 1)};
}

Actor actor_from_json(const ordered_json& j);

SdfGraph graph_from_json(const ordered_json& j, const std::string& ctx) {
    if (!j.is_object()) throw SemanticError(ctx + ": graph must be an object");
    SdfGraph g;
    g.name = internal::get_field_or<std::string>(j, "name", "", ctx);
    if (j.contains("actors")) {
        if (!j.at("actors").is_array())
            throw SemanticError(ctx + ": \"actors\" must be an array");
        for (const auto& ja : j.at("actors")) g.actors.push_back(actor_from_json(ja));
    }
    if (j.contains("edges")) {
        if (!j.at("edges").is_array())
            throw SemanticError(ctx + ": \"edges\" must be an array");
        for (const auto& je : j.at("edges")) {
            SdfEdge e;
            std::string ectx = ctx + " edge";
            e.src = parse_endpoint(internal::get_field<std::string>(je, "src", ectx), ectx);
            e.dst = parse_endpoint(internal::get_field<std::string>(je, "dst", ectx), ectx);
            e.prod = internal::get_field<std::int64_t>(je, "prod", ectx);
            e.cons = internal::get_field<std::int64_t>(je, "cons", ectx);
            e.token_bytes = internal::get_field<std::int64_t>(je, "token_bytes", ectx);
            e.delay = internal::get_field_or<std::int64_t>(je, "delay", 0, ectx);
            g.edges.push_back(e);
        }
    }
    return g;
}

Actor actor_from_json(const ordered_json& j) {
    Actor a;
    a.id = internal::get_field<std::string>(j, "id", "actor");
    std::string kind = internal::get_field_or<std::string>(j, "kind", "atomic", a.id);
    if (kind == "atomic") {
        a.kind = ActorKind::Atomic;
    } else if (kind == "hierarchical") {
        a.kind = ActorKind::Hierarchical;
    } else {
        throw SemanticError("actor \"" + a.id + "\": unknown kind \"" + kind + "\"");
    }
    if (j.contains("timing")) {
        if (!j.at("timing").is_object())
            throw SemanticError("actor \"" + a.id + "\": \"timing\" must be an object");
        for (const auto& [k, v] : j.at("timing").items()) {
            if (!v.is_number_integer())
                throw SemanticError("actor \"" + a.id + "\": timing values must be integers");
            a.timing[k] = v.get<std::int64_t>();
        }
    }
    if (j.contains("params")) {
        if (!j.at("params").is_object())
            throw SemanticError("actor \"" + a.id + "\": \"params\" must be an object");
        for (const auto& [k, v] : j.at("params").items()) {
            if (!v.is_number_integer())
                throw SemanticError("actor \"" + a.id + "\": param values must be integers");
            a.params[k] = v.get<std::int64_t>();
        }
    }
    if (j.contains("subgraph")) {
        a.subgraph = std::make_shared<SdfGraph>(
            graph_from_json(j.at("subgraph"), "subgraph of " + a.id));
        if (a.kind != ActorKind::Hierarchical)
            throw SemanticError("actor \"" + a.id + "\" has a subgraph but kind \"atomic\"");
    }
    return a;
}

ordered_json graph_to_json(const SdfGraph& g) {
    ordered_json j;
    j["name"] = g.name;
    std::vector<const Actor*> actors;
    for (const auto& a : g.actors) actors.push_back(&a);
    std::sort(actors.begin(), actors.end(),
              [](const Actor* a, const Actor* b) { return a->id < b->id; });
    j["actors"] = ordered_json::array();
    for (const Actor* a : actors) {
        ordered_json ja;
        ja["id"] = a->id;
        ja["kind"] = a->kind == ActorKind::Hierarchical ? "hierarchical" : "atomic";
        if (!a->timing.empty()) {
            ordered_json t;
            for (const auto& [k, v] : a->timing) t[k] = v;
            ja["timing"] = t;
        }
        if (!a->params.empty()) {
            ordered_json p;
            for (const auto& [k, v] : a->params) p[k] = v;
            ja["params"] = p;
        }
        if (a->subgraph) ja["subgraph"] = graph_to_json(*a->subgraph);
        j["actors"].push_back(ja);
    }
    std::vector<const SdfEdge*> edges;
    for (const auto& e : g.edges) edges.push_back(&e);
    std::sort(edges.begin(), edges.end(), [](const SdfEdge* a, const SdfEdge* b) {
        return std::tie(a->src, a->dst, a->delay, a->prod, a->cons) <
               std::tie(b->src, b->dst, b->delay, b->prod, b->cons);
    });
    j["edges"] = ordered_json::array();
    for (const SdfEdge* e : edges) {
        ordered_json je;
        je["src"] = e->src.str();
        je["dst"] = e->dst.str();
        je["prod"] = e->prod;
        je["cons"] = e->cons;
        je["token_bytes"] = e->token_bytes;
        je["delay"] = e->delay;
        j["edges"].push_back(je);
    }
    return j;
}

}  // namespace

SdfGraph parse_graph(const std::string& text) {
    auto j = internal::parse_json(text, "graph");
    SdfGraph g = graph_from_json(j, "graph");
    validate(g);
    return g;
}

SdfGraph load_graph(const std::string& path) {
    return parse_graph(internal::read_file(path));
}

std::string serialize_graph(const SdfGraph& g) {
    return graph_to_json(g).dump(2) + "\n";
}

void save_graph(const SdfGraph& g, const std::string& path) {
    internal::write_file(path, serialize_graph(g));
}

}  // namespace sdfmap::sdf
