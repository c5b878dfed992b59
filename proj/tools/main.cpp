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

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "sdfmap/arch.hpp"
#include "sdfmap/dsp.hpp"
#include "sdfmap/errors.hpp"
#include "sdfmap/rach.hpp"
#include "sdfmap/rt.hpp"
#include "sdfmap/sched.hpp"
#include "sdfmap/sdf.hpp"
#include "sdfmap/sim.hpp"

using namespace sdfmap;

namespace {

// Usage problems exit 2, domain failures exit 1, success and passed checks 0.
constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct UsageError : Error {
    using Error::Error;
};

arch::ArchGraph resolve_arch(const std::string& name_or_path) {
    const auto names = arch::preset_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end())
        return arch::preset(name_or_path);
    return arch::load_arch(name_or_path);
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string item =
            text.substr(pos, comma == std::string::npos ? comma : comma - pos);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

sched::TimingTable inflate_timings(const sched::TimingTable& t, double k) {
    if (k == 1.0) return t;
    sched::TimingTable out;
    for (const auto& r : t.records())
        out.add(r.actor, r.op, std::llround(double(r.cycles) * k));
    out.metadata() = t.metadata();
    return out;
}

struct Scenario {
    sdf::SdfGraph graph;
    sdf::SdfGraph flat;
    sdf::FiringDag dag;
};

Scenario load_scenario(const std::string& graph_path) {
    Scenario s;
    s.graph = sdf::load_graph(graph_path);
    s.flat = sdf::flatten(s.graph);
    s.dag = sdf::expand(s.flat);
    return s;
}

sched::ConstraintSet load_constraints_arg(const std::string& path) {
    if (path.empty()) return {};
    return sched::load_constraints(path);
}

// All randomness of one invocation flows from this single generator.
std::vector<rach::UserSignal> draw_users(const rach::RachConfig& cfg, int count,
                                         std::mt19937_64& rng) {
    const int bins = rach::max_delay_samples(cfg) / cfg.downsample;
    std::vector<rach::UserSignal> users;
    for (int i = 0; i < count; ++i) {
        rach::UserSignal u;
        u.root_index = int(rng() % std::uint64_t(cfg.roots));
        u.delay_samples = int(rng() % std::uint64_t(bins + 1)) * cfg.downsample;
        u.amplitude = 1.0;
        users.push_back(u);
    }
    return users;
}

void print_users(const std::vector<rach::UserSignal>& users) {
    for (const auto& u : users)
        std::printf("user: root %d delay %d amplitude %g\n", u.root_index,
                    u.delay_samples, u.amplitude);
}

// ---------------------------------------------------------------------------
// expand
// ---------------------------------------------------------------------------

int cmd_expand(const std::string& graph_path) {
    const Scenario s = load_scenario(graph_path);
    const auto reps = sdf::repetition_vector(s.flat);
    std::printf("graph: %s\n", s.graph.name.c_str());
    std::printf("repetition vector:\n");
    for (const auto& [actor, count] : reps)
        std::printf("  %-40s %lld\n", actor.c_str(), (long long)count);
    std::printf("firings: %zu\n", s.dag.nodes.size());
    std::printf("expression: %s\n", sdf::schedule_expression(s.graph).c_str());
    return kOk;
}

// ---------------------------------------------------------------------------
// explore
// ---------------------------------------------------------------------------

int cmd_explore(const std::string& graph_path, const std::string& timings_path,
                const std::string& presets_csv, const std::string& constraints_path,
                const std::string& csv_path, bool contention, double deadline,
                double inflate) {
    const auto presets = split_csv(presets_csv);
    if (presets.empty()) throw UsageError("explore: preset list is empty");
    const Scenario s = load_scenario(graph_path);
    const auto timings = inflate_timings(sched::load_timings(timings_path), inflate);
    const auto constraints = load_constraints_arg(constraints_path);

    struct Row {
        std::string preset;
        std::size_t cores;
        double makespan;
        double speedup;
        std::size_t transfers;
        long long syncs;
        double max_load;
        bool meets = true;
    };
    std::vector<Row> rows;
    for (const auto& name : presets) {
        const auto a = resolve_arch(name);
        const auto sched_result = sched::list_schedule(s.dag, a, timings, constraints);
        const auto timeline =
            sim::simulate(s.dag, sched_result, a,
                          contention ? sim::ContentionMode::SingleChannel
                                     : sim::ContentionMode::None);
        Row r;
        r.preset = name;
        r.cores = a.operators.size();
        r.makespan = timeline.makespan_cycles;
        r.speedup = rows.empty() ? 1.0 : rows.front().makespan / timeline.makespan_cycles;
        r.transfers = sched_result.transfers.size();
        r.syncs = sched_result.sync_count();
        r.max_load = 0.0;
        for (const auto& [res, load] : timeline.load) r.max_load = std::max(r.max_load, load);
        if (deadline > 0) r.meets = timeline.makespan_cycles <= deadline;
        rows.push_back(r);
    }

    std::printf("%-12s %5s %14s %8s %9s %6s %8s", "preset", "cores", "makespan",
                "speedup", "transfers", "syncs", "max_load");
    if (deadline > 0) std::printf(" %8s", "deadline");
    std::printf("\n");
    for (const auto& r : rows) {
        std::printf("%-12s %5zu %14.1f %8.2f %9zu %6lld %8.3f", r.preset.c_str(),
                    r.cores, r.makespan, r.speedup, r.transfers, r.syncs, r.max_load);
        if (deadline > 0) std::printf(" %8s", r.meets ? "meets" : "misses");
        std::printf("\n");
    }

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw Error("cannot write file: " + csv_path);
        csv << "preset,cores,makespan_cycles,speedup,transfers,syncs,max_load";
        if (deadline > 0) csv << ",meets_deadline";
        csv << "\n";
        char line[256];
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%s,%zu,%.1f,%.4f,%zu,%lld,%.4f",
                          r.preset.c_str(), r.cores, r.makespan, r.speedup, r.transfers,
                          r.syncs, r.max_load);
            csv << line;
            if (deadline > 0) csv << (r.meets ? ",1" : ",0");
            csv << "\n";
        }
        std::printf("csv: %s\n", csv_path.c_str());
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

int cmd_schedule(const std::string& graph_path, const std::string& arch_arg,
                 const std::string& timings_path, const std::string& constraints_path,
                 bool do_reduce, const std::string& out_path, bool buffers,
                 double inflate) {
    const Scenario s = load_scenario(graph_path);
    const auto a = resolve_arch(arch_arg);
    const auto timings = inflate_timings(sched::load_timings(timings_path), inflate);
    const auto constraints = load_constraints_arg(constraints_path);

    auto schedule = sched::list_schedule(s.dag, a, timings, constraints);
    sched::validate_schedule(schedule, s.dag, a);
    std::printf("makespan: %.1f cycles\n", schedule.makespan_cycles);
    std::printf("transfers: %zu  syncs: %lld\n", schedule.transfers.size(),
                (long long)schedule.sync_count());
    for (const auto& [op, load] : sched::load_report(schedule))
        std::printf("  %-10s load %.3f\n", op.c_str(), load);

    if (do_reduce) {
        const auto before = schedule.sync_count();
        schedule = sched::reduce_syncs(schedule, s.dag, a);
        sched::validate_schedule(schedule, s.dag, a);
        std::printf("sync reduction: %lld -> %lld  makespan: %.1f\n", (long long)before,
                    (long long)schedule.sync_count(), schedule.makespan_cycles);
    }

    if (buffers) {
        const auto lifetimes = sched::arc_lifetimes(schedule, s.dag);
        const auto placement = sched::allocate_buffers(schedule, s.dag, a, lifetimes);
        for (const auto& [op, regions] : placement.demand)
            for (const auto& [region, bytes] : regions)
                std::printf("demand: %s/%s %lld bytes\n", op.c_str(), region.c_str(),
                            (long long)bytes);
        std::printf("external spill: %lld bytes\n",
                    (long long)placement.external_spill_bytes);
    }

    if (!out_path.empty()) {
        sched::save_schedule(schedule, s.dag, out_path);
        std::printf("schedule: %s\n", out_path.c_str());
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& graph_path, const std::string& arch_arg,
                 const std::string& timings_path, const std::string& constraints_path,
                 const std::string& schedule_path, bool contention, double deadline,
                 int pipelined, double inflate) {
    const Scenario s = load_scenario(graph_path);
    const auto a = resolve_arch(arch_arg);
    const auto timings = inflate_timings(sched::load_timings(timings_path), inflate);
    const auto schedule =
        schedule_path.empty()
            ? sched::list_schedule(s.dag, a, timings,
                                   load_constraints_arg(constraints_path))
            : sched::load_schedule(schedule_path, s.dag);

    if (pipelined > 0) {
        const auto report = sim::simulate_pipelined(s.dag, schedule, a, pipelined);
        std::printf("iterations: %d\n", report.iterations);
        std::printf("latency: %.1f cycles\n", report.latency_cycles);
        std::printf("period: %.1f cycles\n", report.period_cycles);
        for (const auto& [op, actors] : report.stages) {
            std::printf("stage %s:", op.c_str());
            for (const auto& actor : actors) std::printf(" %s", actor.c_str());
            std::printf("\n");
        }
        return kOk;
    }

    const auto timeline =
        sim::simulate(s.dag, schedule, a,
                      contention ? sim::ContentionMode::SingleChannel
                                 : sim::ContentionMode::None);
    std::printf("makespan: %.1f cycles\n", timeline.makespan_cycles);
    for (const auto& [res, load] : timeline.load)
        std::printf("  %-10s busy %12.1f load %.3f\n", res.c_str(),
                    timeline.busy_cycles.at(res), load);
    if (deadline > 0) {
        const auto verdict = sim::check_deadline(timeline, deadline);
        std::printf("deadline: %s  slack %.1f cycles\n", verdict.pass ? "PASS" : "MISS",
                    verdict.slack_cycles);
        return verdict.pass ? kOk : kFail;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// gantt
// ---------------------------------------------------------------------------

int cmd_gantt(const std::string& graph_path, const std::string& arch_arg,
              const std::string& timings_path, const std::string& constraints_path,
              const std::string& schedule_path, bool contention,
              const std::string& svg_path, std::string json_path, double inflate) {
    const Scenario s = load_scenario(graph_path);
    const auto a = resolve_arch(arch_arg);
    const auto timings = inflate_timings(sched::load_timings(timings_path), inflate);
    const auto schedule =
        schedule_path.empty()
            ? sched::list_schedule(s.dag, a, timings,
                                   load_constraints_arg(constraints_path))
            : sched::load_schedule(schedule_path, s.dag);
    const auto timeline =
        sim::simulate(s.dag, schedule, a,
                      contention ? sim::ContentionMode::SingleChannel
                                 : sim::ContentionMode::None);
    if (json_path.empty()) {
        json_path = svg_path;
        const auto dot = json_path.rfind('.');
        if (dot != std::string::npos) json_path.erase(dot);
        json_path += ".json";
    }
    sim::save_gantt(timeline, svg_path, json_path);
    std::printf("gantt: %s %s\n", svg_path.c_str(), json_path.c_str());
    return kOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const std::string& graph_path, const std::string& arch_arg,
            const std::string& timings_path, const std::string& constraints_path,
            const std::string& config_path, const std::string& streams_csv, int users,
            double snr_db, bool noiseless, std::uint64_t seed, bool verify, bool jitter,
            double throttle, const std::string& trace_path,
            const std::string& report_path) {
    const Scenario s = load_scenario(graph_path);
    const auto a = resolve_arch(arch_arg);
    const auto timings = sched::load_timings(timings_path);
    const auto cfg =
        config_path.empty() ? rach::desk_config() : rach::load_config(config_path);

    std::vector<dsp::cvec> streams;
    if (!streams_csv.empty()) {
        for (const auto& path : split_csv(streams_csv))
            streams.push_back(rach::load_stream(path));
    } else {
        std::mt19937_64 rng(seed);
        const auto drawn = draw_users(cfg, users, rng);
        print_users(drawn);
        const double sigma =
            noiseless ? 0.0 : (drawn.empty() ? 1.0 : std::pow(10.0, -snr_db / 20.0));
        streams = rach::synth_slot(cfg, drawn, sigma, rng);
    }
    const auto bindings = rach::make_input_bindings(streams, cfg);

    rt::KernelRegistry registry;
    rach::register_kernels(registry, cfg);

    const auto schedule =
        sched::list_schedule(s.dag, a, timings, load_constraints_arg(constraints_path));
    const auto programs = rt::generate_programs(s.dag, schedule, a, registry);

    rt::ExecOptions options;
    options.seed = seed;
    options.jitter = jitter;
    options.throttle_ns_per_cycle = throttle;

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = rt::execute(programs, registry, bindings, options);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    std::printf("cores: %zu  transfers: %lld  modeled transfer cycles: %.1f\n",
                a.operators.size(), (long long)result.transfer_count,
                result.modeled_transfer_cycles);
    std::printf("wall_ms: %.1f\n", wall_ms);
    for (const auto& v : result.violations)
        std::printf("violation: %s %s %s\n", v.kind.c_str(), v.buffer.c_str(),
                    v.detail.c_str());
    std::printf("violations: %zu\n", result.violations.size());

    const auto it = result.outputs.find(rach::report_key());
    if (it == result.outputs.end()) throw Error("execution produced no report output");
    const auto report = rach::decode_report(it->second, cfg);
    std::fputs(rach::render_report(report, cfg).c_str(), stdout);

    if (!trace_path.empty()) {
        rt::save_trace(result.trace, trace_path);
        std::printf("trace: %s\n", trace_path.c_str());
    }
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        if (!out) throw Error("cannot write file: " + report_path);
        out.write(reinterpret_cast<const char*>(it->second.data()),
                  std::streamsize(it->second.size()));
        std::printf("report: %s\n", report_path.c_str());
    }

    if (verify) {
        const auto reference = rt::execute_reference(s.dag, registry, bindings);
        const bool same = reference == result.outputs;
        std::printf("verify: %s\n", same ? "PASS" : "FAIL");
        if (!same) return kFail;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// bench-transfer
// ---------------------------------------------------------------------------

int cmd_bench_transfer(const std::string& arch_arg, const std::string& medium_id,
                       const std::string& sizes_csv) {
    const auto a = resolve_arch(arch_arg);
    if (a.media.empty()) throw Error("architecture has no transfer media");
    const arch::Medium* medium = nullptr;
    if (medium_id.empty()) {
        medium = &a.media.front();
    } else {
        medium = a.find_medium(medium_id);
        if (!medium) throw Error("no medium named \"" + medium_id + "\"");
    }

    std::vector<std::int64_t> sizes;
    for (const auto& item : split_csv(sizes_csv)) sizes.push_back(std::stoll(item));
    if (sizes.empty()) throw UsageError("bench-transfer: size list is empty");

    std::printf("medium: %s  latency %.2f cycles  %.3f bytes/cycle\n",
                medium->id.c_str(), medium->latency_cycles, medium->bytes_per_cycle);
    std::printf("%12s %14s %12s\n", "bytes", "cycles", "GB/s@1GHz");
    double sum_n = 0, sum_c = 0, sum_nn = 0, sum_nc = 0;
    for (const auto n : sizes) {
        const double cycles = arch::transfer_cycles(*medium, n);
        const double bandwidth = n == 0 ? 0.0 : double(n) / cycles;
        std::printf("%12lld %14.2f %12.3f\n", (long long)n, cycles, bandwidth);
        sum_n += double(n);
        sum_c += cycles;
        sum_nn += double(n) * double(n);
        sum_nc += double(n) * cycles;
    }
    const double count = double(sizes.size());
    const double denom = count * sum_nn - sum_n * sum_n;
    if (denom > 0) {
        const double slope = (count * sum_nc - sum_n * sum_c) / denom;
        const double intercept = (sum_c - slope * sum_n) / count;
        double residual = 0.0;
        for (const auto n : sizes)
            residual = std::max(residual, std::abs(arch::transfer_cycles(*medium, n) -
                                                   (intercept + slope * double(n))));
        std::printf("affine fit: latency %.2f cycles, %.3f bytes/cycle, max residual "
                    "%.6f\n",
                    intercept, slope > 0 ? 1.0 / slope : 0.0, residual);
        std::printf("asymptotic bandwidth: %.3f GB/s at 1 GHz\n",
                    slope > 0 ? 1.0 / slope : 0.0);
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// rachpd-demo
// ---------------------------------------------------------------------------

int cmd_rachpd_demo(const std::string& config_path, bool paper_geometry, int users,
                    double snr_db, bool noiseless, const std::string& roots_csv,
                    const std::string& delays_csv, double noise_scale,
                    std::uint64_t seed, bool calibrate_flag, int slots,
                    const std::string& profiles_path,
                    const std::string& streams_prefix) {
    rach::RachConfig cfg;
    if (!config_path.empty())
        cfg = rach::load_config(config_path);
    else if (paper_geometry)
        cfg = rach::paper_geometry_config();
    else
        cfg = rach::desk_config();
    if (noise_scale > 0) cfg.noise_scale = noise_scale;

    if (calibrate_flag) {
        const auto cal = rach::calibrate(cfg, slots, seed);
        std::printf("noise-only worst ratio:   %.3f\n", cal.max_noise_ratio);
        std::printf("noiseless ghost ratio:    %.3f\n", cal.max_ghost_ratio);
        std::printf("unit-SNR signal ratio:    %.3f\n", cal.min_signal_ratio);
        std::printf("recommended noise scale:  %.3f\n", cal.recommended_scale);
        std::printf("configured noise scale:   %.3f\n", cfg.noise_scale);
        return kOk;
    }

    std::mt19937_64 rng(seed);
    std::vector<rach::UserSignal> drawn;
    if (!roots_csv.empty()) {
        const auto roots = split_csv(roots_csv);
        const auto delays = split_csv(delays_csv);
        if (!delays.empty() && delays.size() != roots.size())
            throw UsageError("rachpd-demo: --delays must match --roots");
        for (std::size_t i = 0; i < roots.size(); ++i) {
            rach::UserSignal u;
            u.root_index = std::stoi(roots[i]);
            u.delay_samples = delays.empty() ? 0 : std::stoi(delays[i]);
            u.amplitude = 1.0;
            drawn.push_back(u);
        }
    } else {
        drawn = draw_users(cfg, users, rng);
    }
    print_users(drawn);
    const double sigma =
        noiseless ? 0.0 : (drawn.empty() ? 1.0 : std::pow(10.0, -snr_db / 20.0));
    std::printf("noise sigma: %g  noise scale: %g\n", sigma, cfg.noise_scale);

    const auto streams = rach::synth_slot(cfg, drawn, sigma, rng);
    std::printf("antennas: %d  slot samples: %lld\n", cfg.antennas,
                (long long)rach::slot_samples(cfg));

    if (!streams_prefix.empty())
        for (int a = 0; a < cfg.antennas; ++a)
            rach::save_stream(streams[std::size_t(a)],
                              streams_prefix + "a" + std::to_string(a) + ".smp");

    const auto result = rach::run_pipeline(streams, cfg);
    std::fputs(rach::render_report(result.report, cfg).c_str(), stdout);
    for (const auto& d : result.report.detections) {
        std::printf("profile root %d:", d.root_index);
        for (const double e : result.profiles[std::size_t(d.root_index)])
            std::printf(" %.6g", e);
        std::printf("\n");
    }

    if (!profiles_path.empty()) {
        std::ofstream csv(profiles_path);
        if (!csv) throw Error("cannot write file: " + profiles_path);
        csv << "root,bin,energy,threshold\n";
        char line[128];
        for (int z = 0; z < cfg.roots; ++z)
            for (int i = 0; i < cfg.n_zc; ++i) {
                std::snprintf(line, sizeof line, "%d,%d,%.9g,%.9g\n", z, i,
                              result.profiles[std::size_t(z)][std::size_t(i)],
                              result.thresholds[std::size_t(z)]);
                csv << line;
            }
        std::printf("profiles: %s\n", profiles_path.c_str());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"map synchronous-dataflow applications onto modeled multicores"};
    app.name("sdfmap");
    app.require_subcommand(1);

    std::string graph_path, arch_arg, timings_path, constraints_path, schedule_path;
    std::string presets_csv = "mono,dual,tri_sym,tri_asym,quad";
    std::string csv_path, svg_path, json_path, out_path;
    std::string config_path, streams_csv, roots_csv, delays_csv;
    std::string medium_id, sizes_csv = "0,64,256,1024,4096,4800,16384,65536";
    std::string trace_path, report_path, profiles_path, streams_prefix;
    bool contention = false, reduce = false, buffers = false, verify = false;
    bool jitter = false, paper_geometry = false, noiseless = false;
    bool calibrate_flag = false;
    double deadline = 0.0, inflate = 1.0, snr_db = 20.0, throttle = 0.0;
    double noise_scale = 0.0;
    int pipelined = 0, users = 1, slots = 12;
    std::uint64_t seed = 0;

    auto* expand = app.add_subcommand("expand", "repetition vector, firing count and "
                                                "looped-schedule expression");
    expand->add_option("--graph", graph_path, "dataflow graph json")->required();

    auto* explore = app.add_subcommand("explore", "compare one application across "
                                                  "architecture presets");
    explore->add_option("--graph", graph_path)->required();
    explore->add_option("--timings", timings_path)->required();
    explore->add_option("--presets", presets_csv, "comma-separated preset names");
    explore->add_option("--constraints", constraints_path);
    explore->add_option("--csv", csv_path, "write the table as csv");
    explore->add_option("--deadline", deadline, "cycles");
    explore->add_option("--inflate", inflate, "scale all firing costs");
    explore->add_flag("--contention", contention, "single transfer at a time per medium");

    auto* schedule = app.add_subcommand("schedule", "list-schedule one graph onto one "
                                                    "architecture");
    schedule->add_option("--graph", graph_path)->required();
    schedule->add_option("--arch", arch_arg, "preset name or architecture json")
        ->required();
    schedule->add_option("--timings", timings_path)->required();
    schedule->add_option("--constraints", constraints_path);
    schedule->add_option("--out", out_path, "save the schedule json");
    schedule->add_option("--inflate", inflate);
    schedule->add_flag("--reduce-syncs", reduce, "merge synchronization objects");
    schedule->add_flag("--buffers", buffers, "report memory demand");

    auto* simulate = app.add_subcommand("simulate", "replay a schedule cycle-accurately");
    simulate->add_option("--graph", graph_path)->required();
    simulate->add_option("--arch", arch_arg)->required();
    simulate->add_option("--timings", timings_path)->required();
    simulate->add_option("--constraints", constraints_path);
    simulate->add_option("--schedule", schedule_path, "replay a saved schedule");
    simulate->add_option("--deadline", deadline, "cycles; exit 1 on a miss");
    simulate->add_option("--pipelined", pipelined, "overlap this many iterations");
    simulate->add_option("--inflate", inflate);
    simulate->add_flag("--contention", contention);

    auto* gantt = app.add_subcommand("gantt", "export a timeline as svg + json");
    gantt->add_option("--graph", graph_path)->required();
    gantt->add_option("--arch", arch_arg)->required();
    gantt->add_option("--timings", timings_path)->required();
    gantt->add_option("--constraints", constraints_path);
    gantt->add_option("--schedule", schedule_path);
    gantt->add_option("--svg", svg_path)->required();
    gantt->add_option("--json", json_path);
    gantt->add_option("--inflate", inflate);
    gantt->add_flag("--contention", contention);

    auto* run = app.add_subcommand("run", "execute the mapped application on host "
                                          "threads over the fabric model");
    run->add_option("--graph", graph_path)->required();
    run->add_option("--arch", arch_arg)->required();
    run->add_option("--timings", timings_path)->required();
    run->add_option("--constraints", constraints_path);
    run->add_option("--config", config_path, "detector config json");
    run->add_option("--streams", streams_csv, "comma-separated antenna stream files");
    run->add_option("--users", users, "synthesized arrivals when no streams given");
    run->add_option("--snr-db", snr_db);
    run->add_option("--seed", seed);
    run->add_option("--throttle", throttle, "nanoseconds per modeled transfer cycle");
    run->add_option("--trace", trace_path, "write the execution trace jsonl");
    run->add_option("--report", report_path, "write the binary detection report");
    run->add_flag("--noiseless", noiseless);
    run->add_flag("--jitter", jitter, "randomize thread interleaving");
    run->add_flag("--verify", verify, "compare against the sequential reference");

    auto* bench = app.add_subcommand("bench-transfer", "tabulate the transfer cost "
                                                       "model of a medium");
    bench->add_option("--arch", arch_arg)->required();
    bench->add_option("--medium", medium_id, "medium id, default the first");
    bench->add_option("--sizes", sizes_csv, "comma-separated byte counts");

    auto* demo = app.add_subcommand("rachpd-demo", "synthesize a slot and run the "
                                                   "preamble detector in process");
    demo->add_option("--config", config_path, "detector config json");
    demo->add_flag("--paper-geometry", paper_geometry, "full-scale slot geometry");
    demo->add_option("--users", users);
    demo->add_option("--snr-db", snr_db);
    demo->add_option("--roots", roots_csv, "explicit user root indices");
    demo->add_option("--delays", delays_csv, "explicit user delays in samples");
    demo->add_option("--noise-scale", noise_scale, "override the threshold multiplier");
    demo->add_option("--seed", seed);
    demo->add_option("--slots", slots, "calibration slot count");
    demo->add_option("--profiles", profiles_path, "write per-root energies as csv");
    demo->add_option("--save-streams", streams_prefix, "write antenna streams");
    demo->add_flag("--noiseless", noiseless);
    demo->add_flag("--calibrate", calibrate_flag, "re-derive the threshold multiplier");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (app.got_subcommand(expand)) return cmd_expand(graph_path);
        if (app.got_subcommand(explore))
            return cmd_explore(graph_path, timings_path, presets_csv, constraints_path,
                               csv_path, contention, deadline, inflate);
        if (app.got_subcommand(schedule))
            return cmd_schedule(graph_path, arch_arg, timings_path, constraints_path,
                                reduce, out_path, buffers, inflate);
        if (app.got_subcommand(simulate))
            return cmd_simulate(graph_path, arch_arg, timings_path, constraints_path,
                                schedule_path, contention, deadline, pipelined, inflate);
        if (app.got_subcommand(gantt))
            return cmd_gantt(graph_path, arch_arg, timings_path, constraints_path,
                             schedule_path, contention, svg_path, json_path, inflate);
        if (app.got_subcommand(run))
            return cmd_run(graph_path, arch_arg, timings_path, constraints_path,
                           config_path, streams_csv, users, snr_db, noiseless, seed,
                           verify, jitter, throttle, trace_path, report_path);
        if (app.got_subcommand(bench))
            return cmd_bench_transfer(arch_arg, medium_id, sizes_csv);
        if (app.got_subcommand(demo))
            return cmd_rachpd_demo(config_path, paper_geometry, users, snr_db, noiseless,
                                   roots_csv, delays_csv, noise_scale, seed,
                                   calibrate_flag, slots, profiles_path, streams_prefix);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "sdfmap: %s\n", e.what());
        return kUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "sdfmap: %s\n", e.what());
        return kFail;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sdfmap: %s\n", e.what());
        return kFail;
    }
    return kUsage;
}
