// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Timeline simulation of timed schedules: event replay, deadline checks,
// pipelined (overlapped-iteration) analysis, and Gantt export.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sdfmap/arch.hpp"
#include "sdfmap/sched.hpp"
#include "sdfmap/sdf.hpp"

namespace sdfmap::sim {

enum class EventKind { Compute, Transfer, Wait };

struct Event {
  EventKind kind = EventKind::Compute;
  std::string resource;  // operator id or medium id
  std::string label;
  double start_cycles = 0.0;
  double end_cycles = 0.0;

  double duration() const { return end_cycles - start_cycles; }
};

// A simulated execution trace. Events are sorted by (resource, start).
// busy_cycles excludes Wait events; load = busy / makespan.
struct Timeline {
  std::vector<Event> events;
  double makespan_cycles = 0.0;
  std::map<std::string, double> busy_cycles;
  std::map<std::string, double> load;
};

enum class ContentionMode {
  None,           // transfers on a medium may overlap freely
  SingleChannel,  // one transfer at a time per medium, scheduled-start order
};

// Replays a schedule event by event, recomputing start times from precedence
// and resource availability instead of trusting the recorded times. With
// non-blocking media and ContentionMode::None the result reproduces the
// schedule's slot times.
Timeline simulate(const sdf::FiringDag& dag, const sched::TimedSchedule& schedule,
                  const arch::ArchGraph& arch,
                  ContentionMode mode = ContentionMode::None);

struct DeadlineReport {
  bool pass = false;
  double makespan_cycles = 0.0;
  double deadline_cycles = 0.0;
  double slack_cycles = 0.0;  // deadline - makespan; negative on a miss
};

DeadlineReport check_deadline(const Timeline& timeline, double deadline_cycles);

// Steady-state behaviour when successive graph iterations overlap. Each
// operator runs its assigned firings once per iteration; iterations pipeline
// through the operator stages.
struct PipelineReport {
  int iterations = 0;
  double latency_cycles = 0.0;  // completion of iteration 0
  double period_cycles = 0.0;   // asymptotic gap between iteration completions
  std::map<std::string, std::vector<std::string>> stages;  // operator -> leaf actors
  Timeline timeline;
};

PipelineReport simulate_pipelined(const sdf::FiringDag& dag,
                                  const sched::TimedSchedule& schedule,
                                  const arch::ArchGraph& arch, int iterations);

// Deterministic exports: byte-identical for identical timelines. The SVG
// draws one lane per resource; Wait events render as hollow bars. The JSON
// twin carries the same numbers at the same precision.
std::string export_gantt_svg(const Timeline& timeline);
std::string export_gantt_json(const Timeline& timeline);
void save_gantt(const Timeline& timeline, const std::filesystem::path& svg_path,
                const std::filesystem::path& json_path);

}  // namespace sdfmap::sim
