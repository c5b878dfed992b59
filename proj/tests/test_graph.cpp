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

#include <algorithm>
#include <set>
#include <tuple>

#include "sdfmap/errors.hpp"
#include "sdfmap/sdf.hpp"

using namespace sdfmap;
using namespace sdfmap::sdf;

namespace {

Actor atomic(std::string id) {
    Actor a;
    a.id = std::move(id);
    a.kind = ActorKind::Atomic;
    return a;
}

Actor hier(std::string id, SdfGraph sub) {
    Actor a;
    a.id = std::move(id);
    a.kind = ActorKind::Hierarchical;
    a.subgraph = std::make_shared<SdfGraph>(std::move(sub));
    return a;
}

SdfEdge edge(std::string src, std::string dst, std::int64_t prod, std::int64_t cons,
             std::int64_t token_bytes = 1, std::int64_t delay = 0) {
    auto split = [](const std::string& s) {
        auto dot = s.find('.');
        return Endpoint{s.substr(0, dot), s.substr(dot + 1)};
    };
    SdfEdge e;
    e.src = split(src);
    e.dst = split(dst);
    e.prod = prod;
    e.cons = cons;
    e.token_bytes = token_bytes;
    e.delay = delay;
    return e;
}

using ArcTuple = std::tuple<std::string, std::string, std::int64_t, std::int64_t, std::int64_t>;

std::multiset<ArcTuple> arc_set(const FiringDag& dag) {
    std::multiset<ArcTuple> s;
    for (const auto& a : dag.arcs)
        s.insert({dag.nodes[static_cast<std::size_t>(a.src)].str(),
                  dag.nodes[static_cast<std::size_t>(a.dst)].str(), a.first_token,
                  a.token_count, a.bytes});
    return s;
}

}  // namespace

TEST_CASE("repetition vector solves the balance equations minimally") {
    // prod(src) * q(src) == cons(dst) * q(dst) on every edge; components
    // scaled to the smallest positive integers.
    SdfGraph g;
    g.name = "chain";
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 2, 3)};
    auto q = repetition_vector(g);
    CHECK(q.at("A") == 3);
    CHECK(q.at("B") == 2);

    SdfGraph g3;
    g3.actors = {atomic("A"), atomic("B"), atomic("C")};
    g3.edges = {edge("A.o", "B.i", 3, 2), edge("B.o", "C.i", 4, 6)};
    auto q3 = repetition_vector(g3);
    CHECK(q3.at("A") == 2);
    CHECK(q3.at("B") == 3);
    CHECK(q3.at("C") == 2);
}

TEST_CASE("repetition vector is gcd-normalized per component") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B"), atomic("C")};
    g.edges = {edge("A.o", "B.i", 2, 2)};
    auto q = repetition_vector(g);
    CHECK(q.at("A") == 1);
    CHECK(q.at("B") == 1);
    CHECK(q.at("C") == 1);  // isolated actor fires once
}

TEST_CASE("inconsistent balance equations are rejected with a witness edge") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o1", "B.i1", 1, 1), edge("A.o2", "B.i2", 2, 1)};
    CHECK_THROWS_AS(repetition_vector(g), InconsistentGraphError);
}

TEST_CASE("validation rejects malformed graphs") {
    SdfGraph dup;
    dup.actors = {atomic("A"), atomic("A")};
    CHECK_THROWS_AS(validate(dup), SemanticError);

    SdfGraph unknown;
    unknown.actors = {atomic("A")};
    unknown.edges = {edge("A.o", "B.i", 1, 1)};
    CHECK_THROWS_AS(validate(unknown), SemanticError);

    SdfGraph badrate;
    badrate.actors = {atomic("A"), atomic("B")};
    badrate.edges = {edge("A.o", "B.i", 0, 1)};
    CHECK_THROWS_AS(validate(badrate), SemanticError);

    SdfGraph two_writers;
    two_writers.actors = {atomic("A"), atomic("B"), atomic("C")};
    two_writers.edges = {edge("A.o", "C.i", 1, 1), edge("B.o", "C.i", 1, 1)};
    CHECK_THROWS_AS(validate(two_writers), SemanticError);

    SdfGraph no_sub;
    Actor h;
    h.id = "H";
    h.kind = ActorKind::Hierarchical;
    no_sub.actors = {h};
    CHECK_THROWS_AS(validate(no_sub), SemanticError);

    SdfGraph top_iface;
    top_iface.actors = {atomic("A")};
    top_iface.edges = {edge("this.i", "A.i", 1, 1)};
    CHECK_THROWS_AS(validate(top_iface), SemanticError);
}

TEST_CASE("hierarchy validation checks interface rates") {
    SdfGraph sub;
    sub.name = "inner";
    sub.actors = {atomic("X")};
    sub.edges = {edge("this.in", "X.a", 1, 1), edge("X.b", "this.out", 1, 1)};

    SdfGraph top;
    top.actors = {atomic("S"), hier("H", sub), atomic("T")};
    top.edges = {edge("S.o", "H.in", 2, 1), edge("H.out", "T.i", 1, 3)};
    // parent cons(H.in) = 1 == subgraph interface prod 1: fine
    CHECK_NOTHROW(validate(top));

    SdfGraph bad = top;
    bad.edges[0].cons = 4;  // parent now consumes 4/firing, subgraph still delivers 1
    CHECK_THROWS_AS(validate(bad), InterfaceRateMismatchError);
}

TEST_CASE("recursion guard rejects self-containing hierarchies") {
    auto sub = std::make_shared<SdfGraph>();
    sub->name = "loop";
    Actor h;
    h.id = "H";
    h.kind = ActorKind::Hierarchical;
    h.subgraph = sub;
    sub->actors = {h};  // H contains itself

    SdfGraph top;
    top.actors = {h};
    CHECK_THROWS_AS(validate(top), RecursiveHierarchyError);
}

TEST_CASE("flatten splices subgraphs with path-qualified ids") {
    SdfGraph sub;
    sub.name = "inner";
    sub.actors = {atomic("X")};
    sub.edges = {edge("this.in", "X.a", 1, 1, 8), edge("X.b", "this.out", 1, 1, 8, 2)};

    SdfGraph top;
    top.name = "outer";
    top.actors = {atomic("S"), hier("H", sub), atomic("T")};
    top.edges = {edge("S.o", "H.in", 2, 1, 8), edge("H.out", "T.i", 1, 3, 8, 1)};

    SdfGraph flat = flatten(top);
    REQUIRE(flat.actors.size() == 3);
    CHECK(flat.find_actor("H/X") != nullptr);
    CHECK(flat.find_actor("S") != nullptr);
    CHECK(flat.find_actor("T") != nullptr);

    REQUIRE(flat.edges.size() == 2);
    std::multiset<std::string> eds;
    for (const auto& e : flat.edges)
        eds.insert(e.src.str() + ">" + e.dst.str() + ":" + std::to_string(e.prod) + "," +
                   std::to_string(e.cons) + ",d" + std::to_string(e.delay));
    // Inner delays add to the spliced parent edge delay.
    CHECK(eds.count("S.o>H/X.a:2,1,d0") == 1);
    CHECK(eds.count("H/X.b>T.i:1,3,d3") == 1);

    // Repetition vector is preserved through flattening: 2q(S)=q(X), q(X)=3q(T).
    auto q = repetition_vector(flat);
    CHECK(q.at("S") == 3);
    CHECK(q.at("H/X") == 6);
    CHECK(q.at("T") == 2);
}

TEST_CASE("flatten duplicates leaf names under distinct paths") {
    SdfGraph rep;
    rep.actors = {atomic("K")};
    rep.edges = {edge("this.i", "K.i", 1, 1), edge("K.o", "this.o", 1, 1)};

    SdfGraph top;
    top.actors = {atomic("S"), hier("R0", rep), hier("R1", rep), atomic("T")};
    top.edges = {edge("S.a", "R0.i", 1, 1), edge("S.b", "R1.i", 1, 1),
                 edge("R0.o", "T.a", 1, 1), edge("R1.o", "T.b", 1, 1)};

    SdfGraph flat = flatten(top);
    CHECK(flat.find_actor("R0/K") != nullptr);
    CHECK(flat.find_actor("R1/K") != nullptr);
    CHECK(leaf_name("R0/K") == "K");

    auto counts = leaf_firing_counts(repetition_vector(flat));
    CHECK(counts.at("K") == 2);
}

TEST_CASE("expansion follows fifo token positions") {
    // A produces 2/firing, B consumes 3/firing, q = (3, 2). Token k of firing
    // i sits at channel position i*2+k and feeds consumer floor(pos/3).
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 2, 3, 4)};
    FiringDag dag = expand(g);

    REQUIRE(dag.nodes.size() == 5);
    CHECK(dag.initial_reads.empty());
    std::multiset<ArcTuple> expect = {
        {"A#0", "B#0", 0, 2, 8},
        {"A#1", "B#0", 2, 1, 4},
        {"A#1", "B#1", 3, 1, 4},
        {"A#2", "B#1", 4, 2, 8},
    };
    CHECK(arc_set(dag) == expect);
}

TEST_CASE("initial tokens shift positions and drop inter-iteration arcs") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 2, 3, 1, 1)};
    FiringDag dag = expand(g);

    REQUIRE(dag.initial_reads.size() == 1);
    CHECK(dag.nodes[static_cast<std::size_t>(dag.initial_reads[0].dst)].str() == "B#0");
    CHECK(dag.initial_reads[0].first_token == 0);
    CHECK(dag.initial_reads[0].token_count == 1);

    // Token 5 of A lands beyond B's iteration demand and carries over.
    std::multiset<ArcTuple> expect = {
        {"A#0", "B#0", 0, 2, 2},
        {"A#1", "B#1", 2, 2, 2},
        {"A#2", "B#1", 4, 1, 1},
    };
    CHECK(arc_set(dag) == expect);
}

TEST_CASE("a delay covering the whole iteration decouples the edge") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 1, 1, 1, 2)};
    FiringDag dag = expand(g);
    CHECK(dag.arcs.empty());
    REQUIRE(dag.initial_reads.size() == 1);
    CHECK(dag.initial_reads[0].token_count == 1);
}

TEST_CASE("self-loop with unit delay chains consecutive firings") {
    SdfGraph g;
    g.actors = {atomic("S"), atomic("A")};
    g.edges = {edge("S.o", "A.i", 2, 1, 1), edge("A.s", "A.t", 1, 1, 1, 1)};
    FiringDag dag = expand(g);
    std::multiset<ArcTuple> expect = {
        {"S#0", "A#0", 0, 1, 1},
        {"S#0", "A#1", 1, 1, 1},
        {"A#0", "A#1", 0, 1, 1},
    };
    CHECK(arc_set(dag) == expect);
    REQUIRE(dag.initial_reads.size() == 1);
    CHECK(dag.nodes[static_cast<std::size_t>(dag.initial_reads[0].dst)].str() == "A#0");
}

TEST_CASE("zero-delay cycles are rejected") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 1, 1), edge("B.o", "A.i", 1, 1)};
    CHECK_THROWS_AS(expand(g), CyclicDependencyError);

    SdfGraph ok = g;
    ok.edges[1].delay = 1;
    CHECK_NOTHROW(expand(ok));
}

TEST_CASE("expand requires a flat graph") {
    SdfGraph sub;
    sub.actors = {atomic("X")};
    sub.edges = {edge("this.in", "X.a", 1, 1), edge("X.b", "this.out", 1, 1)};
    SdfGraph top;
    top.actors = {atomic("S"), hier("H", sub), atomic("T")};
    top.edges = {edge("S.o", "H.in", 1, 1), edge("H.out", "T.i", 1, 1)};
    CHECK_THROWS_AS(expand(top), SemanticError);
    CHECK_NOTHROW(expand(flatten(top)));
}

TEST_CASE("multicast output ports copy every token to each edge") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B"), atomic("C")};
    g.edges = {edge("A.o", "B.i", 1, 1, 4), edge("A.o", "C.i", 1, 2, 4)};
    FiringDag dag = expand(g);
    // q = (2, 2, 1): both edges see both produced tokens.
    auto q = dag.repetitions;
    CHECK(q.at("A") == 2);
    CHECK(q.at("B") == 2);
    CHECK(q.at("C") == 1);
    std::multiset<ArcTuple> expect = {
        {"A#0", "B#0", 0, 1, 4},
        {"A#1", "B#1", 1, 1, 4},
        {"A#0", "C#0", 0, 1, 4},
        {"A#1", "C#0", 1, 1, 4},
    };
    CHECK(arc_set(dag) == expect);
}

TEST_CASE("topological order visits every firing once") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 2, 3)};
    FiringDag dag = expand(g);
    auto order = dag.topological_order();
    CHECK(order.size() == dag.nodes.size());
    std::set<std::int32_t> seen(order.begin(), order.end());
    CHECK(seen.size() == order.size());
    // every arc goes forward
    std::vector<std::size_t> pos(dag.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        pos[static_cast<std::size_t>(order[i])] = i;
    for (const auto& a : dag.arcs)
        CHECK(pos[static_cast<std::size_t>(a.src)] < pos[static_cast<std::size_t>(a.dst)]);
}

TEST_CASE("schedule expression prints loop counts in topological order") {
    SdfGraph g;
    g.actors = {atomic("B"), atomic("A")};
    g.edges = {edge("A.o", "B.i", 2, 3)};
    CHECK(schedule_expression(g) == "(3A)(2B)");

    SdfGraph single;
    single.actors = {atomic("X")};
    CHECK(schedule_expression(single) == "(X)");
}

TEST_CASE("schedule expression inlines once-firing hierarchies") {
    // One H firing runs X once and Y twice; Y emits 2 tokens each time and
    // the interface hands all 4 to the parent level.
    SdfGraph sub;
    sub.actors = {atomic("X"), atomic("Y")};
    sub.edges = {edge("this.in", "X.a", 1, 1), edge("X.b", "Y.a", 2, 1),
                 edge("Y.b", "this.out", 2, 4)};

    SdfGraph top;
    top.actors = {atomic("S"), hier("H", sub), atomic("T")};
    top.edges = {edge("S.o", "H.in", 1, 1), edge("H.out", "T.i", 4, 1)};
    // q(H) = 1 so its children print inline; inner q are relative to one H firing.
    CHECK(schedule_expression(top) == "(S)(X)(2Y)(4T)");

    SdfGraph top2;
    top2.actors = {atomic("S"), hier("H", sub), atomic("T")};
    top2.edges = {edge("S.o", "H.in", 3, 1), edge("H.out", "T.i", 4, 6)};
    CHECK(schedule_expression(top2) == "(S)(3(X)(2Y))(2T)");
}

TEST_CASE("decoupled back edges do not constrain the printed order") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B")};
    g.edges = {edge("A.o", "B.i", 1, 1), edge("B.o", "A.i", 1, 1, 1, 1)};
    // The B->A edge carries one initial token and q(A)*cons == 1, so it is
    // satisfied for the whole iteration and A may lead.
    CHECK(schedule_expression(g) == "(A)(B)");
}

TEST_CASE("unbreakable cycles have no single appearance schedule") {
    SdfGraph g;
    g.actors = {atomic("A"), atomic("B"), atomic("C")};
    g.edges = {edge("C.o", "A.x", 1, 1), edge("A.o", "B.i", 2, 1),
               edge("B.o", "A.i", 1, 2)};
    // q = (C:1, A:1, B:2); neither cycle edge carries enough delay.
    try {
        schedule_expression(g);
        FAIL("expected NoSingleAppearanceScheduleError");
    } catch (const NoSingleAppearanceScheduleError& e) {
        CHECK(e.partial_expression() == "(C)");
    }
}

TEST_CASE("expression counts multiply nested loop factors") {
    auto c = parse_expression_counts("(3A)(2B)");
    CHECK(c.at("A") == 3);
    CHECK(c.at("B") == 2);

    auto n = parse_expression_counts("(2(3X)Y)Z");
    CHECK(n.at("X") == 6);
    CHECK(n.at("Y") == 2);
    CHECK(n.at("Z") == 1);

    CHECK_THROWS_AS(parse_expression_counts("(2(X)"), SyntaxError);
    CHECK_THROWS_AS(parse_expression_counts("A)"), SyntaxError);
}

TEST_CASE("expression counts strip hierarchy paths to leaf names") {
    auto c = parse_expression_counts("(4R0/K)(2R1/K)");
    CHECK(c.at("K") == 6);
}

TEST_CASE("reference detector expression parses to the published counts") {
    const char* expr =
        "(8Proc)(4(64(InitPower(2(SingleZCProc PowAcc))))PowAcc)"
        "(64NoiseFloorThreshold)(PeakSearch)";
    auto c = parse_expression_counts(expr);
    CHECK(c.at("Proc") == 8);
    CHECK(c.at("InitPower") == 256);
    CHECK(c.at("SingleZCProc") == 512);
    CHECK(c.at("PowAcc") == 516);
    CHECK(c.at("NoiseFloorThreshold") == 64);
    CHECK(c.at("PeakSearch") == 1);
    std::int64_t total = 0;
    for (const auto& [name, n] : c) total += n;
    CHECK(total == 1357);
}

TEST_CASE("expression counts agree with the repetition vector") {
    SdfGraph sub;
    sub.actors = {atomic("X"), atomic("Y")};
    sub.edges = {edge("this.in", "X.a", 1, 1), edge("X.b", "Y.a", 2, 1),
                 edge("Y.b", "this.out", 2, 4)};
    SdfGraph top;
    top.actors = {atomic("S"), hier("H", sub), atomic("T")};
    top.edges = {edge("S.o", "H.in", 3, 1), edge("H.out", "T.i", 4, 6)};

    auto printed = parse_expression_counts(schedule_expression(top));
    auto expanded = leaf_firing_counts(repetition_vector(flatten(top)));
    CHECK(printed == expanded);
}

TEST_CASE("graph json round-trips through a normal form") {
    const char* text = R"({
      "name": "demo",
      "actors": [
        {"id": "B", "kind": "atomic", "timing": {"core": 5}},
        {"id": "A", "kind": "atomic", "params": {"n": 4}}
      ],
      "edges": [
        {"src": "A.o", "dst": "B.i", "prod": 2, "cons": 3, "token_bytes": 8}
      ]
    })";
    SdfGraph g = parse_graph(text);
    CHECK(g.name == "demo");
    CHECK(g.find_actor("A")->params.at("n") == 4);
    CHECK(g.find_actor("B")->timing.at("core") == 5);

    std::string once = serialize_graph(g);
    std::string twice = serialize_graph(parse_graph(once));
    CHECK(once == twice);
    // actors sorted by id in the normal form
    CHECK(once.find("\"A\"") < once.find("\"B\""));
}

TEST_CASE("graph json reports syntax errors with line and column") {
    try {
        parse_graph("{\n  \"name\": \"x\",\n  broken\n}");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line() == 3);
        CHECK(e.column() >= 1);
    }
    CHECK_THROWS_AS(parse_graph(R"({"actors": [{"kind": "atomic"}]})"), SemanticError);
    CHECK_THROWS_AS(parse_graph(R"({"edges": [{"src": "Ao", "dst": "B.i",
        "prod": 1, "cons": 1, "token_bytes": 1}]})"),
                    SemanticError);
}
