// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdfmap/rach.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>

#include "internal/jsonio.hpp"
#include "sdfmap/errors.hpp"

namespace sdfmap::rach {

namespace {

using complexd = std::complex<double>;
using cf32 = std::complex<float>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kSpeedOfLight = 299792458.0;

// Front-end decimation filter. 63 taps keep the transition band inside the
// unoccupied spectrum for every bundled geometry.
constexpr int kFirTaps = 63;
constexpr int kFirHalf = (kFirTaps - 1) / 2;

bool is_prime(int n) {
    if (n < 2) return false;
    for (int d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

std::int64_t spectrum_bytes(const RachConfig& cfg) { return std::int64_t(cfg.n_zc) * 8; }
std::int64_t profile_bytes(const RachConfig& cfg) { return std::int64_t(cfg.n_zc) * 4; }

// ---------------------------------------------------------------------------
// Demap plan: decimation taps, bin map and equalizer gains, cached per
// geometry. The occupied bin m sits at physical frequency k_phys/seq, lands
// on DFT bin k_phys mod W after decimation, and is scaled by the filter's
// real response H there; gain undoes both H and the W/n_zc transform ratio.
// ---------------------------------------------------------------------------

struct DemapPlan {
    std::vector<double> taps;
    std::vector<int> bins;
    std::vector<double> gain;
};

const DemapPlan& demap_plan(const RachConfig& cfg) {
    static std::mutex mu;
    static std::map<std::tuple<int, int, int>, std::unique_ptr<DemapPlan>> cache;
    std::scoped_lock lock(mu);
    auto& slot = cache[std::tuple(cfg.n_zc, cfg.seq_samples, cfg.downsample)];
    if (!slot) {
        auto plan = std::make_unique<DemapPlan>();
        plan->taps = dsp::design_lowpass(kFirTaps, 0.5 / cfg.downsample);
        const int n = cfg.n_zc;
        const int seq = cfg.seq_samples;
        const int w = seq / cfg.downsample;
        const int half = (n + 1) / 2;
        plan->bins.resize(n);
        plan->gain.resize(n);
        for (int m = 0; m < n; ++m) {
            const int k_phys = m < half ? m : seq - (n - m);
            plan->bins[m] = m < half ? m : w - (n - m);
            const double theta = 2.0 * kPi * k_phys / seq;
            // Symmetric taps give a real response.
            double resp = plan->taps[kFirHalf];
            for (int t = 1; t <= kFirHalf; ++t)
                resp += 2.0 * plan->taps[kFirHalf + t] * std::cos(theta * t);
            if (std::abs(resp) < 1e-6)
                throw Error("decimation filter nulls occupied bin " + std::to_string(m));
            plan->gain[m] = (double(n) / w) * (1.0 / resp);
        }
        slot = std::move(plan);
    }
    return *slot;
}

// Filter + decimate + transform + demap one sequence window (seq samples).
cvec demap_window(const RachConfig& cfg, const complexd* w) {
    const DemapPlan& plan = demap_plan(cfg);
    const int seq = cfg.seq_samples;
    const int down = cfg.downsample;
    const int win = seq / down;
    cvec y(win);
    for (int k = 0; k < win; ++k) {
        complexd acc = 0.0;
        for (int t = -kFirHalf; t <= kFirHalf; ++t) {
            int idx = (down * k + t) % seq;
            if (idx < 0) idx += seq;
            acc += plan.taps[kFirHalf + t] * w[idx];
        }
        y[k] = acc;
    }
    dsp::fft_inplace(y);
    cvec spec(cfg.n_zc);
    for (int m = 0; m < cfg.n_zc; ++m) spec[m] = y[plan.bins[m]] * plan.gain[m];
    return spec;
}

// ---------------------------------------------------------------------------
// Single-precision staging. These are the exact value paths of the dataflow
// kernels; run_pipeline calls the same functions so both reports match bit
// for bit.
// ---------------------------------------------------------------------------

std::int64_t preamble_samples(const RachConfig& cfg) {
    return cfg.cp_samples + std::int64_t(cfg.repetitions) * cfg.seq_samples;
}

std::vector<cf32> to_f32_slot(const cvec& stream, const RachConfig& cfg) {
    if (std::int64_t(stream.size()) < preamble_samples(cfg))
        throw StreamTooShortError("stream has " + std::to_string(stream.size()) +
                                  " samples, preamble needs " +
                                  std::to_string(preamble_samples(cfg)));
    std::vector<cf32> slot(std::size_t(slot_samples(cfg)), cf32(0.0f, 0.0f));
    const std::size_t m = std::min(stream.size(), slot.size());
    for (std::size_t i = 0; i < m; ++i) slot[i] = cf32(stream[i]);
    return slot;
}

std::vector<cf32> stage_demap(const std::vector<cf32>& slot, const RachConfig& cfg,
                              int rep) {
    const int seq = cfg.seq_samples;
    cvec w(seq);
    const cf32* base = slot.data() + cfg.cp_samples + std::size_t(rep) * seq;
    for (int i = 0; i < seq; ++i) w[i] = complexd(base[i]);
    cvec spec = demap_window(cfg, w.data());
    std::vector<cf32> out(cfg.n_zc);
    for (int m = 0; m < cfg.n_zc; ++m) out[m] = cf32(spec[m]);
    return out;
}

std::vector<cf32> stage_correlate(const std::vector<cf32>& spec, const cvec& conj_spec) {
    const std::size_t n = conj_spec.size();
    cvec x(n);
    for (std::size_t m = 0; m < n; ++m) x[m] = complexd(spec[m]) * conj_spec[m];
    dsp::ifft_inplace(x);
    std::vector<cf32> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = cf32(x[i]);
    return out;
}

void stage_accumulate(const cf32* corr, const float* acc_in, float* acc_out, int n) {
    for (int i = 0; i < n; ++i) {
        const double re = corr[i].real();
        const double im = corr[i].imag();
        acc_out[i] = float(double(acc_in[i]) + (re * re + im * im));
    }
}

double trimmed_mean(std::vector<double> v) {
    const int n = int(v.size());
    const int keep = n - (n + 7) / 8;
    if (keep <= 0) return 0.0;
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (int i = 0; i < keep; ++i) sum += v[i];
    return sum / keep;
}

float stage_noise_estimate(const float* profile, const RachConfig& cfg) {
    std::vector<double> v(profile, profile + cfg.n_zc);
    return float(trimmed_mean(std::move(v)));
}

bool is_local_peak(const std::vector<double>& p, int i) {
    const int n = int(p.size());
    auto at = [&](int k) { return p[std::size_t(((k % n) + n) % n)]; };
    const double e = p[std::size_t(i)];
    return e > at(i + 1) && e > at(i + 2) && e >= at(i - 1) && e >= at(i - 2);
}

void sort_detections(std::vector<Detection>& d) {
    std::sort(d.begin(), d.end(), [](const Detection& a, const Detection& b) {
        if (a.energy != b.energy) return a.energy > b.energy;
        if (a.root_index != b.root_index) return a.root_index < b.root_index;
        return a.delay_index < b.delay_index;
    });
}

std::vector<Detection> scan_detections(const std::vector<std::vector<double>>& profiles,
                                       const std::vector<double>& thresholds,
                                       const RachConfig& cfg) {
    std::vector<Detection> out;
    for (int z = 0; z < cfg.roots; ++z) {
        const auto& p = profiles[std::size_t(z)];
        for (int i = 0; i < cfg.n_zc; ++i) {
            const double e = p[std::size_t(i)];
            if (e > thresholds[std::size_t(z)] && is_local_peak(p, i))
                out.push_back({z, i, i * cfg.downsample, e, thresholds[std::size_t(z)]});
        }
    }
    sort_detections(out);
    return out;
}

// Fold per-(antenna, root) profiles and noise estimates into the final
// report. Index layout is antenna-major: block a*roots + z.
struct Assembled {
    DetectionReport report;
    std::vector<std::vector<double>> profiles;
    std::vector<double> thresholds;
};

Assembled assemble_report(const RachConfig& cfg,
                          const std::vector<std::vector<float>>& prof32,
                          const std::vector<float>& est32) {
    const int a_count = cfg.antennas;
    const int z_count = cfg.roots;
    const int n = cfg.n_zc;
    Assembled out;
    out.profiles.assign(std::size_t(z_count), std::vector<double>(std::size_t(n), 0.0));
    out.thresholds.assign(std::size_t(z_count), 0.0);
    std::vector<double> sum_est(std::size_t(z_count), 0.0);
    for (int a = 0; a < a_count; ++a) {
        for (int z = 0; z < z_count; ++z) {
            const std::size_t blk = std::size_t(a) * std::size_t(z_count) + std::size_t(z);
            const auto& p = prof32[blk];
            auto& dst = out.profiles[std::size_t(z)];
            for (int i = 0; i < n; ++i) dst[std::size_t(i)] += double(p[std::size_t(i)]);
            sum_est[std::size_t(z)] += double(est32[blk]);
        }
    }
    for (int z = 0; z < z_count; ++z)
        out.thresholds[std::size_t(z)] = cfg.noise_scale * sum_est[std::size_t(z)];
    out.report.detections = scan_detections(out.profiles, out.thresholds, cfg);
    out.report.noise_estimates = std::move(sum_est);
    return out;
}

// Conjugated root spectra shared by the kernels and the in-process pipeline.
struct RootBank {
    RachConfig cfg;
    std::vector<cvec> conj;
};

std::shared_ptr<const RootBank> make_bank(const RachConfig& cfg) {
    auto bank = std::make_shared<RootBank>();
    bank->cfg = cfg;
    bank->conj.resize(std::size_t(cfg.roots));
    for (int z = 0; z < cfg.roots; ++z) {
        cvec s = root_spectrum(cfg, z);
        for (auto& v : s) v = std::conj(v);
        bank->conj[std::size_t(z)] = std::move(s);
    }
    return bank;
}

// ---------------------------------------------------------------------------
// Graph construction helpers
// ---------------------------------------------------------------------------

sdf::Actor atomic_actor(std::string id) {
    sdf::Actor a;
    a.id = std::move(id);
    return a;
}

sdf::Actor hier_actor(std::string id, sdf::SdfGraph sub) {
    sdf::Actor a;
    a.id = std::move(id);
    a.kind = sdf::ActorKind::Hierarchical;
    a.subgraph = std::make_shared<sdf::SdfGraph>(std::move(sub));
    return a;
}

sdf::Endpoint endpoint(const std::string& text) {
    const auto dot = text.find('.');
    return {text.substr(0, dot), text.substr(dot + 1)};
}

sdf::SdfEdge make_edge(const std::string& src, const std::string& dst, std::int64_t prod,
                       std::int64_t cons, std::int64_t token_bytes) {
    sdf::SdfEdge e;
    e.src = endpoint(src);
    e.dst = endpoint(dst);
    e.prod = prod;
    e.cons = cons;
    e.token_bytes = token_bytes;
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

RachConfig desk_config() { return RachConfig{}; }

RachConfig paper_geometry_config() {
    RachConfig cfg;
    cfg.n_zc = 839;
    cfg.downsample = 24;
    cfg.cp_samples = 21012;
    cfg.seq_samples = 24576;
    cfg.gp_samples = 21996;
    cfg.sample_rate_hz = 30.72e6;
    return cfg;
}

void validate(const RachConfig& cfg) {
    if (cfg.antennas < 1) throw SemanticError("antennas must be >= 1");
    if (cfg.roots < 1) throw SemanticError("roots must be >= 1");
    if (cfg.repetitions < 1) throw SemanticError("repetitions must be >= 1");
    if (cfg.n_zc < 5 || !is_prime(cfg.n_zc))
        throw SemanticError("n_zc must be an odd prime >= 5, got " +
                            std::to_string(cfg.n_zc));
    if (cfg.downsample < 1) throw SemanticError("downsample must be >= 1");
    if (cfg.cp_samples < 0 || cfg.gp_samples < 0)
        throw SemanticError("cyclic prefix and guard period must be >= 0");
    if (cfg.seq_samples < 1 || cfg.seq_samples % cfg.downsample != 0)
        throw SemanticError("seq_samples must be a positive multiple of downsample");
    if (cfg.seq_samples / cfg.downsample < cfg.n_zc)
        throw SemanticError("decimated window " +
                            std::to_string(cfg.seq_samples / cfg.downsample) +
                            " cannot hold " + std::to_string(cfg.n_zc) + " bins");
    if (cfg.seq_samples < 2 * cfg.n_zc)
        throw SemanticError("seq_samples must be at least 2 * n_zc");
    if (!(cfg.sample_rate_hz > 0)) throw SemanticError("sample_rate_hz must be > 0");
    if (!(cfg.noise_scale > 0)) throw SemanticError("noise_scale must be > 0");
}

std::int64_t slot_samples(const RachConfig& cfg) {
    return cfg.cp_samples + std::int64_t(cfg.repetitions) * cfg.seq_samples +
           cfg.gp_samples;
}

int decimated_window(const RachConfig& cfg) { return cfg.seq_samples / cfg.downsample; }

int root_for(const RachConfig& cfg, int root_index) {
    if (root_index < 0) throw Error("root index must be >= 0");
    return 1 + root_index % (cfg.n_zc - 1);
}

int max_delay_samples(const RachConfig& cfg) {
    return std::min(cfg.cp_samples, cfg.gp_samples);
}

RachConfig load_config(const std::string& path) {
    const auto j = internal::parse_json(internal::read_file(path), path);
    RachConfig cfg;
    cfg.antennas = internal::get_field<int>(j, "antennas", path);
    cfg.roots = internal::get_field<int>(j, "roots", path);
    cfg.repetitions = internal::get_field<int>(j, "repetitions", path);
    cfg.n_zc = internal::get_field<int>(j, "n_zc", path);
    cfg.downsample = internal::get_field<int>(j, "downsample", path);
    cfg.cp_samples = internal::get_field<int>(j, "cp_samples", path);
    cfg.seq_samples = internal::get_field<int>(j, "seq_samples", path);
    cfg.gp_samples = internal::get_field<int>(j, "gp_samples", path);
    cfg.sample_rate_hz = internal::get_field<double>(j, "sample_rate_hz", path);
    cfg.noise_scale = internal::get_field<double>(j, "noise_scale", path);
    validate(cfg);
    return cfg;
}

void save_config(const RachConfig& cfg, const std::string& path) {
    internal::ordered_json j;
    j["antennas"] = cfg.antennas;
    j["roots"] = cfg.roots;
    j["repetitions"] = cfg.repetitions;
    j["n_zc"] = cfg.n_zc;
    j["downsample"] = cfg.downsample;
    j["cp_samples"] = cfg.cp_samples;
    j["seq_samples"] = cfg.seq_samples;
    j["gp_samples"] = cfg.gp_samples;
    j["sample_rate_hz"] = cfg.sample_rate_hz;
    j["noise_scale"] = cfg.noise_scale;
    internal::write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Slot synthesis
// ---------------------------------------------------------------------------

cvec preamble_waveform(const RachConfig& cfg, int root_index) {
    validate(cfg);
    if (root_index < 0 || root_index >= cfg.roots)
        throw Error("root index " + std::to_string(root_index) + " outside [0, " +
                    std::to_string(cfg.roots) + ")");
    const int n = cfg.n_zc;
    const int seq = cfg.seq_samples;
    const int half = (n + 1) / 2;
    const cvec z = dsp::fft(dsp::zc_sequence(root_for(cfg, root_index), n));
    cvec s(std::size_t(seq), complexd(0.0, 0.0));
    for (int m = 0; m < n; ++m) {
        const int k_phys = m < half ? m : seq - (n - m);
        s[std::size_t(k_phys)] = z[std::size_t(m)];
    }
    cvec p = dsp::ifft(std::move(s));
    // Parseval: this scale gives the period exactly unit RMS.
    const double scale = double(seq) / n;
    for (auto& v : p) v *= scale;
    return p;
}

std::vector<cvec> synth_slot(const RachConfig& cfg, const std::vector<UserSignal>& users,
                             double noise_sigma, std::mt19937_64& rng) {
    validate(cfg);
    if (!(noise_sigma >= 0)) throw Error("noise sigma must be >= 0");
    const int max_delay = max_delay_samples(cfg);
    std::map<int, cvec> waveforms;
    for (const auto& u : users) {
        if (u.root_index < 0 || u.root_index >= cfg.roots)
            throw Error("user root index " + std::to_string(u.root_index) +
                        " outside [0, " + std::to_string(cfg.roots) + ")");
        if (u.delay_samples < 0 || u.delay_samples > max_delay)
            throw DelayOutOfRangeError("user delay " + std::to_string(u.delay_samples) +
                                       " outside [0, " + std::to_string(max_delay) + "]");
        if (!std::isfinite(u.amplitude) || u.amplitude < 0)
            throw Error("user amplitude must be finite and >= 0");
        if (!waveforms.count(u.root_index))
            waveforms.emplace(u.root_index, preamble_waveform(cfg, u.root_index));
    }
    const std::int64_t slot = slot_samples(cfg);
    const std::int64_t extent = preamble_samples(cfg);
    const int seq = cfg.seq_samples;
    const int cp = cfg.cp_samples;
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::normal_distribution<double> gauss(0.0, noise_sigma / std::sqrt(2.0));
    std::vector<cvec> out;
    out.reserve(std::size_t(cfg.antennas));
    for (int a = 0; a < cfg.antennas; ++a) {
        cvec s(std::size_t(slot), complexd(0.0, 0.0));
        for (const auto& u : users) {
            const double phi = phase(rng);
            const complexd gain = u.amplitude * complexd(std::cos(phi), std::sin(phi));
            const cvec& p = waveforms.at(u.root_index);
            for (std::int64_t m = 0; m < extent; ++m) {
                std::int64_t idx = (m - cp) % seq;
                if (idx < 0) idx += seq;
                s[std::size_t(u.delay_samples + m)] += gain * p[std::size_t(idx)];
            }
        }
        if (noise_sigma > 0)
            for (auto& v : s) v += complexd(gauss(rng), gauss(rng));
        out.push_back(std::move(s));
    }
    return out;
}

void save_stream(const cvec& stream, const std::string& path) {
    std::vector<char> buf(8 + stream.size() * 8);
    std::memcpy(buf.data(), "SMP1", 4);
    const std::uint32_t count = std::uint32_t(stream.size());
    std::memcpy(buf.data() + 4, &count, 4);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const float re = float(stream[i].real());
        const float im = float(stream[i].imag());
        std::memcpy(buf.data() + 8 + i * 8, &re, 4);
        std::memcpy(buf.data() + 12 + i * 8, &im, 4);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw Error("short write: " + path);
}

cvec load_stream(const std::string& path) {
    const std::string text = internal::read_file(path);
    if (text.size() < 8 || text.compare(0, 4, "SMP1") != 0)
        throw SyntaxError("not a sample stream (bad magic): " + path, 1, 1);
    std::uint32_t count = 0;
    std::memcpy(&count, text.data() + 4, 4);
    if (text.size() != 8 + std::size_t(count) * 8)
        throw Error("truncated sample stream: " + path + " holds " +
                    std::to_string(text.size()) + " bytes, header promises " +
                    std::to_string(8 + std::size_t(count) * 8));
    cvec out(count);
    for (std::size_t i = 0; i < count; ++i) {
        float re = 0.0f;
        float im = 0.0f;
        std::memcpy(&re, text.data() + 8 + i * 8, 4);
        std::memcpy(&im, text.data() + 12 + i * 8, 4);
        out[i] = complexd(re, im);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Receiver stages
// ---------------------------------------------------------------------------

std::vector<cvec> preprocess(const cvec& stream, const RachConfig& cfg) {
    validate(cfg);
    if (std::int64_t(stream.size()) < preamble_samples(cfg))
        throw StreamTooShortError("stream has " + std::to_string(stream.size()) +
                                  " samples, preamble needs " +
                                  std::to_string(preamble_samples(cfg)));
    std::vector<cvec> out;
    out.reserve(std::size_t(cfg.repetitions));
    for (int r = 0; r < cfg.repetitions; ++r)
        out.push_back(demap_window(
            cfg, stream.data() + cfg.cp_samples + std::size_t(r) * cfg.seq_samples));
    return out;
}

cvec root_spectrum(const RachConfig& cfg, int root_index) {
    validate(cfg);
    return dsp::fft(dsp::zc_sequence(root_for(cfg, root_index), cfg.n_zc));
}

cvec circ_correlate(const cvec& freq_vec, const cvec& root_spectrum_conj) {
    if (freq_vec.size() != root_spectrum_conj.size())
        throw LengthMismatchError("spectrum lengths differ: " +
                                  std::to_string(freq_vec.size()) + " vs " +
                                  std::to_string(root_spectrum_conj.size()));
    cvec x(freq_vec.size());
    for (std::size_t m = 0; m < x.size(); ++m) x[m] = freq_vec[m] * root_spectrum_conj[m];
    dsp::ifft_inplace(x);
    return x;
}

void power_accumulate(std::vector<double>& acc, const cvec& corr) {
    if (acc.size() != corr.size())
        throw LengthMismatchError("accumulator holds " + std::to_string(acc.size()) +
                                  " bins, correlation " + std::to_string(corr.size()));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::norm(corr[i]);
}

NoiseEstimate noise_floor_threshold(const std::vector<double>& profile,
                                    const RachConfig& cfg) {
    validate(cfg);
    if (int(profile.size()) != cfg.n_zc)
        throw LengthMismatchError("profile holds " + std::to_string(profile.size()) +
                                  " bins, expected " + std::to_string(cfg.n_zc));
    const double est = trimmed_mean(profile);
    return {est, cfg.noise_scale * est};
}

DetectionReport peak_search(const std::vector<std::vector<double>>& profiles,
                            const std::vector<double>& thresholds,
                            const RachConfig& cfg) {
    validate(cfg);
    if (int(profiles.size()) != cfg.roots || thresholds.size() != profiles.size())
        throw LengthMismatchError("need one profile and threshold per root");
    for (const auto& p : profiles)
        if (int(p.size()) != cfg.n_zc)
            throw LengthMismatchError("profile holds " + std::to_string(p.size()) +
                                      " bins, expected " + std::to_string(cfg.n_zc));
    DetectionReport report;
    report.detections = scan_detections(profiles, thresholds, cfg);
    report.noise_estimates.resize(std::size_t(cfg.roots));
    for (int z = 0; z < cfg.roots; ++z)
        report.noise_estimates[std::size_t(z)] =
            thresholds[std::size_t(z)] / cfg.noise_scale;
    return report;
}

double distance_m(const RachConfig& cfg, int ta_samples) {
    return kSpeedOfLight * (double(ta_samples) / cfg.sample_rate_hz) / 2.0;
}

// ---------------------------------------------------------------------------
// Whole pipeline
// ---------------------------------------------------------------------------

PipelineResult run_pipeline(const std::vector<cvec>& streams, const RachConfig& cfg) {
    validate(cfg);
    if (int(streams.size()) != cfg.antennas)
        throw LengthMismatchError("expected " + std::to_string(cfg.antennas) +
                                  " antenna streams, got " +
                                  std::to_string(streams.size()));
    const auto bank = make_bank(cfg);
    const int n = cfg.n_zc;
    const std::size_t blocks = std::size_t(cfg.antennas) * std::size_t(cfg.roots);
    std::vector<std::vector<float>> prof32(blocks);
    std::vector<float> est32(blocks);
    for (int a = 0; a < cfg.antennas; ++a) {
        const std::vector<cf32> slot = to_f32_slot(streams[std::size_t(a)], cfg);
        std::vector<std::vector<cf32>> spec(std::size_t(cfg.repetitions));
        for (int r = 0; r < cfg.repetitions; ++r) spec[std::size_t(r)] = stage_demap(slot, cfg, r);
        for (int z = 0; z < cfg.roots; ++z) {
            std::vector<float> acc(std::size_t(n), 0.0f);
            for (int r = 0; r < cfg.repetitions; ++r) {
                const auto corr =
                    stage_correlate(spec[std::size_t(r)], bank->conj[std::size_t(z)]);
                std::vector<float> next(static_cast<std::size_t>(n));
                stage_accumulate(corr.data(), acc.data(), next.data(), n);
                acc = std::move(next);
            }
            const std::size_t blk = std::size_t(a) * std::size_t(cfg.roots) + std::size_t(z);
            est32[blk] = stage_noise_estimate(acc.data(), cfg);
            prof32[blk] = std::move(acc);
        }
    }
    Assembled folded = assemble_report(cfg, prof32, est32);
    PipelineResult result;
    result.report = std::move(folded.report);
    result.profiles = std::move(folded.profiles);
    result.thresholds = std::move(folded.thresholds);
    return result;
}

DetectionReport detect(const std::vector<cvec>& streams, const RachConfig& cfg) {
    return run_pipeline(streams, cfg).report;
}

std::vector<std::byte> encode_report(const DetectionReport& report,
                                     const RachConfig& cfg) {
    validate(cfg);
    if (int(report.noise_estimates.size()) != cfg.roots)
        throw LengthMismatchError("report carries " +
                                  std::to_string(report.noise_estimates.size()) +
                                  " noise estimates, expected " +
                                  std::to_string(cfg.roots));
    std::vector<std::byte> out(4 + std::size_t(kReportMaxDetections) * 20 +
                               std::size_t(cfg.roots) * 4);
    auto put_u32 = [&](std::size_t off, std::uint32_t v) {
        std::memcpy(out.data() + off, &v, 4);
    };
    auto put_f32 = [&](std::size_t off, float v) { std::memcpy(out.data() + off, &v, 4); };
    const auto count =
        std::uint32_t(std::min<std::size_t>(report.detections.size(), kReportMaxDetections));
    put_u32(0, count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const Detection& d = report.detections[i];
        const std::size_t off = 4 + std::size_t(i) * 20;
        put_u32(off, std::uint32_t(d.root_index));
        put_u32(off + 4, std::uint32_t(d.delay_index));
        put_u32(off + 8, std::uint32_t(d.ta_samples));
        put_f32(off + 12, float(d.energy));
        put_f32(off + 16, float(d.threshold));
    }
    const std::size_t est_off = 4 + std::size_t(kReportMaxDetections) * 20;
    for (int z = 0; z < cfg.roots; ++z)
        put_f32(est_off + std::size_t(z) * 4, float(report.noise_estimates[std::size_t(z)]));
    return out;
}

DetectionReport decode_report(const std::vector<std::byte>& bytes,
                              const RachConfig& cfg) {
    validate(cfg);
    const std::size_t want =
        4 + std::size_t(kReportMaxDetections) * 20 + std::size_t(cfg.roots) * 4;
    if (bytes.size() != want)
        throw LengthMismatchError("report blob holds " + std::to_string(bytes.size()) +
                                  " bytes, expected " + std::to_string(want));
    auto get_u32 = [&](std::size_t off) {
        std::uint32_t v = 0;
        std::memcpy(&v, bytes.data() + off, 4);
        return v;
    };
    auto get_f32 = [&](std::size_t off) {
        float v = 0.0f;
        std::memcpy(&v, bytes.data() + off, 4);
        return v;
    };
    const std::uint32_t count = get_u32(0);
    if (count > std::uint32_t(kReportMaxDetections))
        throw Error("report blob claims " + std::to_string(count) + " detections");
    DetectionReport report;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t off = 4 + std::size_t(i) * 20;
        Detection d;
        d.root_index = int(get_u32(off));
        d.delay_index = int(get_u32(off + 4));
        d.ta_samples = int(get_u32(off + 8));
        d.energy = get_f32(off + 12);
        d.threshold = get_f32(off + 16);
        report.detections.push_back(d);
    }
    const std::size_t est_off = 4 + std::size_t(kReportMaxDetections) * 20;
    report.noise_estimates.resize(std::size_t(cfg.roots));
    for (int z = 0; z < cfg.roots; ++z)
        report.noise_estimates[std::size_t(z)] = get_f32(est_off + std::size_t(z) * 4);
    return report;
}

std::string render_report(const DetectionReport& report, const RachConfig& cfg) {
    char line[192];
    std::string out;
    std::snprintf(line, sizeof line, "detections: %zu\n", report.detections.size());
    out += line;
    for (const auto& d : report.detections) {
        std::snprintf(line, sizeof line,
                      "  root %3d (u=%3d)  delay %4d  ta %6d  dist %9.1f m  energy %.6g"
                      "  threshold %.6g\n",
                      d.root_index, root_for(cfg, d.root_index), d.delay_index,
                      d.ta_samples, distance_m(cfg, d.ta_samples), d.energy, d.threshold);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataflow fixture
// ---------------------------------------------------------------------------

sdf::SdfGraph build_detection_graph(const RachConfig& cfg) {
    validate(cfg);
    if (cfg.repetitions != 2)
        throw SemanticError("detection graph is wired for 2 repetitions, config has " +
                            std::to_string(cfg.repetitions));
    if ((std::int64_t(cfg.antennas) * cfg.roots) % 4 != 0)
        throw SemanticError("antennas * roots must be divisible by the noise-floor "
                            "group of 4");
    const std::int64_t spec_b = spectrum_bytes(cfg);
    const std::int64_t prof_b = profile_bytes(cfg);
    const std::int64_t nft_b = prof_b + 4;
    const std::int64_t z_count = cfg.roots;

    // Correlate one repetition against one root, folding into the running
    // power profile.
    sdf::SdfGraph rep_corr;
    rep_corr.name = "rep_corr";
    rep_corr.actors = {atomic_actor("SingleZCProc"), atomic_actor("PowAcc")};
    rep_corr.edges = {
        make_edge("this.in", "SingleZCProc.spec", 1, 1, spec_b),
        make_edge("SingleZCProc.corr", "PowAcc.corr", 1, 1, spec_b),
        make_edge("this.acc_in", "PowAcc.acc_in", 1, 1, prof_b),
        make_edge("PowAcc.acc_out", "this.acc_out", 1, 1, prof_b),
    };

    // Per (antenna, root): zero accumulator, then both repetitions chained.
    sdf::SdfGraph circ;
    circ.name = "circ_corr";
    circ.actors = {atomic_actor("InitPower"), hier_actor("Rep0", rep_corr),
                   hier_actor("Rep1", rep_corr)};
    circ.edges = {
        make_edge("this.spec0", "Rep0.in", 1, 1, spec_b),
        make_edge("this.spec1", "Rep1.in", 1, 1, spec_b),
        make_edge("InitPower.base", "Rep0.acc_in", 1, 1, prof_b),
        make_edge("Rep0.acc_out", "Rep1.acc_in", 1, 1, prof_b),
        make_edge("Rep1.acc_out", "this.prof", 1, 1, prof_b),
    };

    // Front end of one repetition; the demapped spectrum fans out to every
    // root's correlator.
    auto front = [&](int rep) {
        sdf::SdfGraph g;
        g.name = "front_end";
        sdf::Actor proc = atomic_actor("Proc");
        proc.params["rep"] = rep;
        g.actors = {std::move(proc)};
        g.edges = {make_edge("Proc.spec", "this.spec", z_count, z_count, spec_b)};
        return g;
    };

    sdf::SdfGraph pp;
    pp.name = "preamble_process";
    pp.actors = {hier_actor("Rep0", front(0)), hier_actor("Rep1", front(1)),
                 hier_actor("CircCorr", circ), atomic_actor("PowAcc")};
    pp.edges = {
        make_edge("Rep0.spec", "CircCorr.spec0", z_count, 1, spec_b),
        make_edge("Rep1.spec", "CircCorr.spec1", z_count, 1, spec_b),
        make_edge("CircCorr.prof", "PowAcc.in", 1, z_count, prof_b),
        make_edge("PowAcc.out", "this.profiles", z_count, z_count, prof_b),
    };

    sdf::SdfGraph top;
    top.name = "rach_detect";
    top.actors = {hier_actor("PreambleProcess", pp),
                  atomic_actor("NoiseFloorThreshold"), atomic_actor("PeakSearch")};
    top.edges = {
        make_edge("PreambleProcess.profiles", "NoiseFloorThreshold.in", z_count, 4,
                  prof_b),
        make_edge("NoiseFloorThreshold.out", "PeakSearch.in", 4,
                  std::int64_t(cfg.antennas) * z_count, nft_b),
    };
    sdf::validate(top);
    return top;
}

sched::TimingTable reference_timings() {
    sched::TimingTable t;
    t.add("Proc", "*", 120000);
    t.add("SingleZCProc", "*", 7000);
    t.add("PowAcc", "*", 600);
    t.add("PreambleProcess/PowAcc", "*", 20000);
    t.add("InitPower", "*", 150);
    t.add("NoiseFloorThreshold", "*", 2500);
    t.add("PeakSearch", "*", 30000);
    t.metadata()["deadline_demo_inflation"] = "1.9";
    return t;
}

void register_kernels(rt::KernelRegistry& registry, const RachConfig& cfg) {
    validate(cfg);
    const auto bank = make_bank(cfg);

    registry.add("Proc", [bank](rt::KernelContext& ctx) {
        const RachConfig& c = bank->cfg;
        const std::int64_t rep = ctx.param("rep", -1);
        if (rep < 0 || rep >= c.repetitions)
            throw Error("front end actor " + ctx.actor + " lacks a valid rep parameter");
        if (!ctx.external_input || ctx.external_input->empty())
            throw Error("no antenna stream bound for " + ctx.actor + "#" +
                        std::to_string(ctx.firing));
        const std::size_t want = std::size_t(slot_samples(c)) * 8;
        if (ctx.external_input->size() != want)
            throw LengthMismatchError("antenna stream for " + ctx.actor + "#" +
                                      std::to_string(ctx.firing) + " holds " +
                                      std::to_string(ctx.external_input->size()) +
                                      " bytes, expected " + std::to_string(want));
        std::vector<cf32> slot(std::size_t(slot_samples(c)));
        std::memcpy(slot.data(), ctx.external_input->data(), want);
        const std::vector<cf32> spec = stage_demap(slot, c, int(rep));
        auto out = ctx.out("spec");
        const std::size_t spec_b = std::size_t(spectrum_bytes(c));
        for (int z = 0; z < c.roots; ++z)
            std::memcpy(out.data() + std::size_t(z) * spec_b, spec.data(), spec_b);
    });

    registry.add("SingleZCProc", [bank](rt::KernelContext& ctx) {
        const RachConfig& c = bank->cfg;
        const int z = int(ctx.firing % c.roots);
        const auto& in = ctx.in("spec");
        std::vector<cf32> spec(std::size_t(c.n_zc));
        std::memcpy(spec.data(), in.data(), in.size());
        const auto corr = stage_correlate(spec, bank->conj[std::size_t(z)]);
        std::memcpy(ctx.out("corr").data(), corr.data(), corr.size() * 8);
    });

    registry.add("PowAcc", [bank](rt::KernelContext& ctx) {
        const RachConfig& c = bank->cfg;
        const int n = c.n_zc;
        std::vector<cf32> corr(static_cast<std::size_t>(n));
        std::vector<float> acc(static_cast<std::size_t>(n));
        std::vector<float> next(static_cast<std::size_t>(n));
        std::memcpy(corr.data(), ctx.in("corr").data(), std::size_t(n) * 8);
        std::memcpy(acc.data(), ctx.in("acc_in").data(), std::size_t(n) * 4);
        stage_accumulate(corr.data(), acc.data(), next.data(), n);
        std::memcpy(ctx.out("acc_out").data(), next.data(), std::size_t(n) * 4);
    });

    // Farm gather point: forwards the per-root profiles positionally.
    registry.add("PreambleProcess/PowAcc", [](rt::KernelContext& ctx) {
        const auto& in = ctx.in("in");
        auto out = ctx.out("out");
        std::memcpy(out.data(), in.data(), std::min(in.size(), out.size()));
    });

    registry.add("InitPower", [](rt::KernelContext& ctx) {
        auto out = ctx.out("base");
        std::fill(out.begin(), out.end(), std::byte{0});
    });

    registry.add("NoiseFloorThreshold", [bank](rt::KernelContext& ctx) {
        const RachConfig& c = bank->cfg;
        const std::size_t prof_b = std::size_t(profile_bytes(c));
        const auto& in = ctx.in("in");
        auto out = ctx.out("out");
        for (int s = 0; s < 4; ++s) {
            std::vector<float> p(std::size_t(c.n_zc));
            std::memcpy(p.data(), in.data() + std::size_t(s) * prof_b, prof_b);
            const float est = stage_noise_estimate(p.data(), c);
            std::memcpy(out.data() + std::size_t(s) * (prof_b + 4),
                        in.data() + std::size_t(s) * prof_b, prof_b);
            std::memcpy(out.data() + std::size_t(s) * (prof_b + 4) + prof_b, &est, 4);
        }
    });

    registry.add("PeakSearch", [bank](rt::KernelContext& ctx) {
        const RachConfig& c = bank->cfg;
        const std::size_t tok_b = std::size_t(profile_bytes(c)) + 4;
        const std::size_t blocks = std::size_t(c.antennas) * std::size_t(c.roots);
        const auto& in = ctx.in("in");
        std::vector<std::vector<float>> prof32(blocks,
                                               std::vector<float>(std::size_t(c.n_zc)));
        std::vector<float> est32(blocks);
        for (std::size_t j = 0; j < blocks; ++j) {
            std::memcpy(prof32[j].data(), in.data() + j * tok_b,
                        std::size_t(profile_bytes(c)));
            std::memcpy(&est32[j], in.data() + j * tok_b + std::size_t(profile_bytes(c)),
                        4);
        }
        const Assembled folded = assemble_report(c, prof32, est32);
        if (ctx.external_output) *ctx.external_output = encode_report(folded.report, c);
    });
}

rt::InputBindings make_input_bindings(const std::vector<cvec>& streams,
                                      const RachConfig& cfg) {
    validate(cfg);
    if (int(streams.size()) != cfg.antennas)
        throw LengthMismatchError("expected " + std::to_string(cfg.antennas) +
                                  " antenna streams, got " +
                                  std::to_string(streams.size()));
    rt::InputBindings bindings;
    for (int a = 0; a < cfg.antennas; ++a) {
        const std::vector<cf32> slot = to_f32_slot(streams[std::size_t(a)], cfg);
        std::vector<std::byte> bytes(slot.size() * 8);
        std::memcpy(bytes.data(), slot.data(), bytes.size());
        bindings["PreambleProcess/Rep0/Proc#" + std::to_string(a)] = bytes;
        bindings["PreambleProcess/Rep1/Proc#" + std::to_string(a)] = std::move(bytes);
    }
    return bindings;
}

std::string report_key() { return "PeakSearch#0"; }

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

Calibration calibrate(const RachConfig& cfg, int slots, std::uint64_t seed) {
    validate(cfg);
    if (slots < 1) throw Error("slot count must be >= 1");
    std::mt19937_64 rng(seed);
    Calibration cal;
    cal.min_signal_ratio = std::numeric_limits<double>::infinity();

    // Noise-only slots: the largest local maximum relative to the summed
    // noise estimate bounds the scale from below.
    for (int s = 0; s < slots; ++s) {
        const auto streams = synth_slot(cfg, {}, 1.0, rng);
        const PipelineResult r = run_pipeline(streams, cfg);
        for (int z = 0; z < cfg.roots; ++z) {
            const double base = r.report.noise_estimates[std::size_t(z)];
            if (!(base > 0)) continue;
            for (int i = 0; i < cfg.n_zc; ++i)
                if (is_local_peak(r.profiles[std::size_t(z)], i))
                    cal.max_noise_ratio = std::max(
                        cal.max_noise_ratio, r.profiles[std::size_t(z)][std::size_t(i)] / base);
        }
    }

    const int delay_bins = max_delay_samples(cfg) / cfg.downsample;
    auto survey = [&](double sigma, bool ghosts) {
        for (int s = 0; s < slots; ++s) {
            UserSignal u;
            u.root_index = int(rng() % std::uint64_t(cfg.roots));
            u.delay_samples = int(rng() % std::uint64_t(delay_bins + 1)) * cfg.downsample;
            const auto streams = synth_slot(cfg, {u}, sigma, rng);
            const PipelineResult r = run_pipeline(streams, cfg);
            const int z0 = u.root_index;
            const int l0 = u.delay_samples / cfg.downsample;
            for (int z = 0; z < cfg.roots; ++z) {
                const double base = r.report.noise_estimates[std::size_t(z)];
                if (!(base > 0)) continue;
                for (int i = 0; i < cfg.n_zc; ++i) {
                    const double ratio = r.profiles[std::size_t(z)][std::size_t(i)] / base;
                    const bool true_peak = z == z0 && std::abs(i - l0) <= 1;
                    if (z == z0 && i == l0 && !ghosts)
                        cal.min_signal_ratio = std::min(cal.min_signal_ratio, ratio);
                    if (ghosts && !true_peak && is_local_peak(r.profiles[std::size_t(z)], i))
                        cal.max_ghost_ratio = std::max(cal.max_ghost_ratio, ratio);
                }
            }
        }
    };
    // Noiseless slots bound spurious correlation residue; unit-SNR slots
    // bound the usable signal margin.
    survey(0.0, true);
    survey(1.0, false);

    const double lower = std::max(cal.max_noise_ratio, cal.max_ghost_ratio);
    if (lower > 0 && std::isfinite(cal.min_signal_ratio) && cal.min_signal_ratio > lower)
        cal.recommended_scale = std::sqrt(lower * cal.min_signal_ratio);
    return cal;
}

}  // namespace sdfmap::rach
