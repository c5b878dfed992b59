// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdfmap/sim.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include "sdfmap/errors.hpp"

namespace sdfmap::sim {

namespace {

constexpr double kEps = 1e-9;

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return std::string(buf);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (static_cast<unsigned char>(c) < 0x20) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\u%04x", c);
      out += buf;
    } else {
      out += c;
    }
  }
  return out;
}

// One schedulable unit of the replay: a compute slot or a transfer,
// replicated per pipeline iteration.
struct Item {
  bool is_transfer = false;
  int base = 0;       // node index or transfer index
  int iteration = 0;
  std::string resource;
  std::string label;
  double sched_start = 0.0;
  double duration = 0.0;
  std::vector<int> succs;
  int indeg = 0;
  double ready = 0.0;
  double start = 0.0;
  double end = 0.0;
  bool blocking_src_charge = false;  // blocking medium also occupies src op
  std::string src_op;
};

struct Replay {
  std::vector<Item> items;
  double makespan = 0.0;
  std::vector<double> iteration_completion;
};

void add_edge(std::vector<Item>& items, int from, int to) {
  items[from].succs.push_back(to);
  items[to].indeg++;
}

Replay replay_schedule(const sdf::FiringDag& dag, const sched::TimedSchedule& s,
                       const arch::ArchGraph& arch, ContentionMode mode,
                       int iterations) {
  sched::validate_schedule(s, dag, arch);
  if (iterations < 1) throw Error("iteration count must be at least 1");

  // Base items: one per compute slot (== one per node) plus one per transfer.
  struct BaseRef {
    bool is_transfer;
    int index;
  };
  std::vector<BaseRef> base;
  std::vector<int> node_item(dag.nodes.size(), -1);
  for (const auto& [op, slots] : s.compute_slots) {
    (void)op;
    for (const auto& slot : slots) {
      node_item[slot.node] = static_cast<int>(base.size());
      base.push_back({false, slot.node});
    }
  }
  std::vector<int> transfer_item(s.transfers.size(), -1);
  for (std::size_t t = 0; t < s.transfers.size(); ++t) {
    transfer_item[t] = static_cast<int>(base.size());
    base.push_back({true, static_cast<int>(t)});
  }
  const int nbase = static_cast<int>(base.size());

  // Which transfer carries each arc, if any.
  std::vector<int> arc_transfer(dag.arcs.size(), -1);
  for (std::size_t t = 0; t < s.transfers.size(); ++t)
    for (int a : s.transfers[t].arcs) arc_transfer[a] = static_cast<int>(t);

  std::vector<Item> items(static_cast<std::size_t>(nbase) * iterations);
  auto item_id = [&](int b, int it) { return it * nbase + b; };

  for (int it = 0; it < iterations; ++it) {
    for (int b = 0; b < nbase; ++b) {
      Item& item = items[item_id(b, it)];
      item.base = b;
      item.iteration = it;
      item.is_transfer = base[b].is_transfer;
      std::string suffix = iterations > 1 ? "@" + std::to_string(it) : "";
      if (!item.is_transfer) {
        int node = base[b].index;
        const auto& slot = *s.slot_of(node);
        item.resource = s.mapping[node];
        item.label = dag.nodes[node].str() + suffix;
        item.sched_start = slot.start;
        item.duration = slot.end - slot.start;
      } else {
        const auto& tr = s.transfers[base[b].index];
        item.resource = tr.medium;
        const auto& arc = dag.arcs[tr.arcs.front()];
        item.label = dag.nodes[arc.src].str() + ">" + dag.nodes[arc.dst].str() + suffix;
        if (tr.arcs.size() > 1)
          item.label += "(+" + std::to_string(tr.arcs.size() - 1) + ")";
        item.sched_start = tr.start;
        item.duration = tr.end - tr.start;
        const arch::Medium* m = arch.find_medium(tr.medium);
        if (m != nullptr && m->blocking) {
          item.blocking_src_charge = true;
          item.src_op = tr.src_op;
        }
      }
    }
  }

  // Precedence edges, per iteration: producer node -> transfer -> consumer
  // node for cross-operator arcs; producer -> consumer directly otherwise.
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t a = 0; a < dag.arcs.size(); ++a) {
      const auto& arc = dag.arcs[a];
      int src = arc.src;
      int dst = arc.dst;
      int t = arc_transfer[a];
      if (t < 0) {
        add_edge(items, item_id(node_item[src], it), item_id(node_item[dst], it));
      } else {
        add_edge(items, item_id(node_item[src], it), item_id(transfer_item[t], it));
        add_edge(items, item_id(transfer_item[t], it), item_id(node_item[dst], it));
      }
    }
  }

  // Resource sequencing: each operator runs its slots (and blocking
  // transfers it sources) in scheduled order, iteration after iteration.
  std::map<std::string, std::vector<std::pair<double, int>>> op_seq;
  for (int b = 0; b < nbase; ++b) {
    const Item& proto = items[b];
    if (!proto.is_transfer)
      op_seq[proto.resource].push_back({proto.sched_start, b});
    else if (proto.blocking_src_charge)
      op_seq[proto.src_op].push_back({proto.sched_start, b});
  }
  for (auto& [op, seq] : op_seq) {
    (void)op;
    std::sort(seq.begin(), seq.end());
    int prev = -1;
    for (int it = 0; it < iterations; ++it) {
      for (const auto& [start, b] : seq) {
        (void)start;
        int id = item_id(b, it);
        if (prev >= 0) add_edge(items, prev, id);
        prev = id;
      }
    }
  }

  // Optional medium serialization.
  if (mode == ContentionMode::SingleChannel) {
    std::map<std::string, std::vector<std::pair<double, int>>> med_seq;
    for (int b = 0; b < nbase; ++b)
      if (items[b].is_transfer)
        med_seq[items[b].resource].push_back({items[b].sched_start, b});
    for (auto& [medium, seq] : med_seq) {
      (void)medium;
      std::sort(seq.begin(), seq.end());
      int prev = -1;
      for (int it = 0; it < iterations; ++it) {
        for (const auto& [start, b] : seq) {
          (void)start;
          int id = item_id(b, it);
          if (prev >= 0) add_edge(items, prev, id);
          prev = id;
        }
      }
    }
  }

  // Earliest-ready replay. Ready items are processed in scheduled-start
  // order (computes before transfers on ties) so the replay is deterministic.
  std::set<std::tuple<double, int, int, int>> ready;
  auto key = [&](int id) {
    const Item& item = items[id];
    return std::make_tuple(item.sched_start, item.is_transfer ? 1 : 0,
                           item.iteration, id);
  };
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].indeg == 0) ready.insert(key(static_cast<int>(i)));

  Replay out;
  out.iteration_completion.assign(iterations, 0.0);
  std::size_t done = 0;
  while (!ready.empty()) {
    int id = std::get<3>(*ready.begin());
    ready.erase(ready.begin());
    Item& item = items[id];
    item.start = item.ready;
    item.end = item.start + item.duration;
    out.makespan = std::max(out.makespan, item.end);
    out.iteration_completion[item.iteration] =
        std::max(out.iteration_completion[item.iteration], item.end);
    ++done;
    for (int succ : item.succs) {
      Item& next = items[succ];
      next.ready = std::max(next.ready, item.end);
      if (--next.indeg == 0) ready.insert(key(succ));
    }
  }
  if (done != items.size())
    throw InvalidScheduleError("schedule precedence graph has a cycle");

  out.items = std::move(items);
  return out;
}

Timeline timeline_from_replay(const Replay& replay) {
  Timeline t;
  t.makespan_cycles = replay.makespan;
  for (const Item& item : replay.items) {
    Event e;
    e.kind = item.is_transfer ? EventKind::Transfer : EventKind::Compute;
    e.resource = item.resource;
    e.label = item.label;
    e.start_cycles = item.start;
    e.end_cycles = item.end;
    t.busy_cycles[e.resource] += e.duration();
    t.events.push_back(std::move(e));
  }
  std::sort(t.events.begin(), t.events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.resource, a.start_cycles, a.end_cycles, a.label) <
           std::tie(b.resource, b.start_cycles, b.end_cycles, b.label);
  });

  // Fill operator idle gaps with Wait events so stalls are visible.
  std::vector<Event> waits;
  std::string cur;
  double cursor = 0.0;
  bool cur_is_compute_lane = false;
  for (const Event& e : t.events) {
    if (e.resource != cur) {
      cur = e.resource;
      cursor = 0.0;
      cur_is_compute_lane = e.kind == EventKind::Compute;
    }
    if (cur_is_compute_lane && e.start_cycles > cursor + 1e-6) {
      Event w;
      w.kind = EventKind::Wait;
      w.resource = e.resource;
      w.label = "wait";
      w.start_cycles = cursor;
      w.end_cycles = e.start_cycles;
      waits.push_back(std::move(w));
    }
    cursor = std::max(cursor, e.end_cycles);
  }
  t.events.insert(t.events.end(), waits.begin(), waits.end());
  std::sort(t.events.begin(), t.events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.resource, a.start_cycles, a.end_cycles, a.label) <
           std::tie(b.resource, b.start_cycles, b.end_cycles, b.label);
  });

  if (t.makespan_cycles > kEps)
    for (const auto& [res, busy] : t.busy_cycles)
      t.load[res] = busy / t.makespan_cycles;
  return t;
}

}  // namespace

Timeline simulate(const sdf::FiringDag& dag, const sched::TimedSchedule& schedule,
                  const arch::ArchGraph& arch, ContentionMode mode) {
  return timeline_from_replay(replay_schedule(dag, schedule, arch, mode, 1));
}

DeadlineReport check_deadline(const Timeline& timeline, double deadline_cycles) {
  DeadlineReport r;
  r.makespan_cycles = timeline.makespan_cycles;
  r.deadline_cycles = deadline_cycles;
  r.slack_cycles = deadline_cycles - timeline.makespan_cycles;
  r.pass = timeline.makespan_cycles <= deadline_cycles;
  return r;
}

PipelineReport simulate_pipelined(const sdf::FiringDag& dag,
                                  const sched::TimedSchedule& schedule,
                                  const arch::ArchGraph& arch, int iterations) {
  Replay replay =
      replay_schedule(dag, schedule, arch, ContentionMode::None, iterations);
  PipelineReport r;
  r.iterations = iterations;
  r.latency_cycles = replay.iteration_completion.empty()
                         ? 0.0
                         : replay.iteration_completion.front();
  if (iterations >= 2) {
    r.period_cycles = replay.iteration_completion[iterations - 1] -
                      replay.iteration_completion[iterations - 2];
  } else {
    r.period_cycles = r.latency_cycles;
  }
  for (std::size_t n = 0; n < dag.nodes.size(); ++n) {
    auto& names = r.stages[schedule.mapping[n]];
    std::string leaf = sdf::leaf_name(dag.nodes[n].actor);
    if (std::find(names.begin(), names.end(), leaf) == names.end())
      names.push_back(leaf);
  }
  for (auto& [op, names] : r.stages) {
    (void)op;
    std::sort(names.begin(), names.end());
  }
  r.timeline = timeline_from_replay(replay);
  return r;
}

std::string export_gantt_svg(const Timeline& t) {
  const double lane_h = 26.0;
  const double lane_gap = 10.0;
  const double left = 130.0;
  const double top = 34.0;
  const double plot_w = 1040.0;
  const double scale =
      t.makespan_cycles > kEps ? plot_w / t.makespan_cycles : 1.0;

  std::vector<std::string> lanes;
  for (const Event& e : t.events)
    if (lanes.empty() || lanes.back() != e.resource) lanes.push_back(e.resource);
  std::sort(lanes.begin(), lanes.end());
  lanes.erase(std::unique(lanes.begin(), lanes.end()), lanes.end());

  const double height = top + lanes.size() * (lane_h + lane_gap) + 20.0;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         fmt3(left + plot_w + 20.0) + "\" height=\"" + fmt3(height) +
         "\" font-family=\"monospace\" font-size=\"11\">\n";
  svg += "<text x=\"8\" y=\"18\">makespan " + fmt3(t.makespan_cycles) +
         " cycles</text>\n";

  for (std::size_t lane = 0; lane < lanes.size(); ++lane) {
    const std::string& res = lanes[lane];
    double y = top + lane * (lane_h + lane_gap);
    svg += "<text x=\"8\" y=\"" + fmt3(y + lane_h * 0.7) + "\">" +
           xml_escape(res) + "</text>\n";
    svg += "<line x1=\"" + fmt3(left) + "\" y1=\"" + fmt3(y + lane_h) +
           "\" x2=\"" + fmt3(left + plot_w) + "\" y2=\"" + fmt3(y + lane_h) +
           "\" stroke=\"#cccccc\"/>\n";
    for (const Event& e : t.events) {
      if (e.resource != res) continue;
      double x = left + e.start_cycles * scale;
      double w = std::max(e.duration() * scale, 0.5);
      std::string body;
      if (e.kind == EventKind::Wait) {
        body = "fill=\"none\" stroke=\"#9aa0a6\" stroke-dasharray=\"3,2\"";
      } else if (e.kind == EventKind::Transfer) {
        body = "fill=\"#f28e2b\" stroke=\"#8a5a12\"";
      } else {
        body = "fill=\"#4e79a7\" stroke=\"#2f4b6e\"";
      }
      svg += "<rect class=\"" +
             std::string(e.kind == EventKind::Wait
                             ? "w"
                             : (e.kind == EventKind::Transfer ? "t" : "c")) +
             "\" x=\"" + fmt3(x) + "\" y=\"" + fmt3(y + 3.0) + "\" width=\"" +
             fmt3(w) + "\" height=\"" + fmt3(lane_h - 6.0) + "\" " + body +
             "><title>" + xml_escape(e.label) + " [" + fmt3(e.start_cycles) +
             ", " + fmt3(e.end_cycles) + ")</title></rect>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

std::string export_gantt_json(const Timeline& t) {
  std::vector<std::string> lanes;
  for (const auto& [res, busy] : t.busy_cycles) {
    (void)busy;
    lanes.push_back(res);
  }
  for (const Event& e : t.events)
    if (std::find(lanes.begin(), lanes.end(), e.resource) == lanes.end())
      lanes.push_back(e.resource);
  std::sort(lanes.begin(), lanes.end());
  lanes.erase(std::unique(lanes.begin(), lanes.end()), lanes.end());

  std::string json = "{\n  \"makespan_cycles\": " + fmt3(t.makespan_cycles) +
                     ",\n  \"resources\": [\n";
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string& res = lanes[i];
    double busy = 0.0;
    if (auto it = t.busy_cycles.find(res); it != t.busy_cycles.end())
      busy = it->second;
    double load = 0.0;
    if (auto it = t.load.find(res); it != t.load.end()) load = it->second;
    json += "    {\"id\": \"" + json_escape(res) +
            "\", \"busy_cycles\": " + fmt3(busy) + ", \"load\": " + fmt3(load) +
            ", \"events\": [";
    bool first = true;
    for (const Event& e : t.events) {
      if (e.resource != res) continue;
      if (!first) json += ", ";
      first = false;
      const char* kind = e.kind == EventKind::Wait
                             ? "wait"
                             : (e.kind == EventKind::Transfer ? "transfer"
                                                              : "compute");
      json += "{\"kind\": \"" + std::string(kind) + "\", \"label\": \"" +
              json_escape(e.label) + "\", \"start\": " + fmt3(e.start_cycles) +
              ", \"end\": " + fmt3(e.end_cycles) + "}";
    }
    json += "]}";
    json += i + 1 < lanes.size() ? ",\n" : "\n";
  }
  json += "  ]\n}\n";
  return json;
}

void save_gantt(const Timeline& t, const std::filesystem::path& svg_path,
                const std::filesystem::path& json_path) {
  std::ofstream svg(svg_path, std::ios::binary);
  if (!svg) throw Error("cannot write " + svg_path.string());
  svg << export_gantt_svg(t);
  std::ofstream json(json_path, std::ios::binary);
  if (!json) throw Error("cannot write " + json_path.string());
  json << export_gantt_json(t);
}

}  // namespace sdfmap::sim
