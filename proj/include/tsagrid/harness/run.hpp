#ifndef TSAGRID_HARNESS_RUN_HPP
#define TSAGRID_HARNESS_RUN_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsagrid/harness/config.hpp"
#include "tsagrid/version.hpp"

namespace tsagrid::harness {

using json = nlohmann::ordered_json;

/// Shortest decimal text that is stable across runs (%.17g).
inline std::string num(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string flag(bool b) { return b ? "1" : "0"; }

/// Runs fn(0..n-1) on at most `workers` threads (0 = hardware concurrency).
/// The first exception by index is rethrown after all tasks finish.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers = 0)
{
    if (workers == 0) {
        workers = std::max(1u, std::thread::hardware_concurrency());
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

/// Rows of one CSV table; `header` is written first.
struct Table {
    std::string name;
    std::string header;
    std::vector<std::string> rows;
};

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

/// Fully resolved configuration, defaults included.
inline json to_json(const ScenarioConfig& c)
{
    json j;
    j["kind"] = to_string(c.kind);
    j["seed"] = c.seed;
    j["sweep"] = c.sweep;
    if (c.output_dir) {
        j["output_dir"] = *c.output_dir;
    }
    switch (c.kind) {
    case ScenarioKind::fault: {
        const auto& s = c.fault.scenario;
        json b;
        b["model"] = to_string(s.model);
        b["length"] = s.line.length;
        b["z1"] = complex_json(s.line.z1);
        b["y1"] = complex_json(s.line.y1);
        b["d_true"] = s.d_true;
        b["zf"] = s.zf ? complex_json(*s.zf) : json(nullptr);
        b["z_ground"] = s.z_ground ? complex_json(*s.z_ground) : json(nullptr);
        b["es"] = c.fault.es_polar;
        b["er"] = c.fault.er_polar;
        b["zs_s"] = complex_json(s.zs_s);
        b["zs_r"] = complex_json(s.zs_r);
        b["fault_type"] = to_string(s.fault_type);
        b["t_fault"] = s.t_fault;
        b["duration"] = s.t_end;
        b["frame_rate"] = s.frame_rate;
        b["f0"] = c.fault.options.f0;
        b["threshold_ratio"] = c.fault.options.threshold_ratio;
        b["window_length"] = c.fault.options.window_length;
        b["dtheta_sending_deg"] = c.fault.options.dtheta_sending_deg;
        j["fault"] = b;
        break;
    }
    case ScenarioKind::voltage: {
        const auto& s = c.voltage.scenario;
        json b;
        b["e_rms"] = s.e_rms;
        b["modulation_depth"] = s.modulation_depth;
        b["modulation_freq"] = s.modulation_freq;
        b["z_source"] = complex_json(s.z_source);
        json lines = json::array();
        for (const auto& l : s.lines) {
            lines.push_back({{"z1", complex_json(l.z1)}, {"length", l.length}});
        }
        b["lines"] = lines;
        b["load_p"] = s.load_p;
        b["power_factor"] = s.power_factor;
        b["load_fluctuation"] = s.load_fluctuation;
        b["fault_start"] = s.fault_start;
        b["fault_end"] = s.fault_end;
        b["fault_position"] = s.fault_position;
        b["z_fault"] = complex_json(s.z_fault);
        b["trip_line1"] = s.trip_line1;
        b["trip_line2"] = s.trip_line2;
        b["frame_rate"] = s.frame_rate;
        b["duration"] = s.duration;
        b["window"] = c.voltage.options.window;
        b["condition_threshold"] = c.voltage.options.condition_threshold;
        b["f0"] = c.voltage.options.f0;
        j["voltage"] = b;
        break;
    }
    case ScenarioKind::event: {
        const auto& e = c.event;
        json b;
        if (!e.mmrs.empty()) {
            json list = json::array();
            for (const auto& m : e.mmrs) {
                list.push_back({{"id", m.id}, {"x", m.x}, {"y", m.y}});
            }
            b["mmrs"] = list;
        }
        if (!e.records.empty()) {
            json list = json::array();
            for (const auto& r : e.records) {
                list.push_back({{"id", r.id}, {"x", r.x}, {"y", r.y}, {"t", r.t_arrival}});
            }
            b["records"] = list;
        }
        if (e.event) {
            b["event"] = {{"x", e.event->x}, {"y", e.event->y}, {"t", e.event->t}};
        }
        b["v_e"] = e.v_e;
        b["noise_sigma"] = e.noise_sigma;
        b["victim"] = e.victim;
        j["event"] = b;
        break;
    }
    case ScenarioKind::gps: {
        const auto& g = c.gps;
        json b;
        json sats = json::array();
        for (const auto& s : g.satellites) {
            sats.push_back({{"prn", s.prn}, {"code_phase", s.code_phase}, {"doppler", s.doppler}});
        }
        b["satellites"] = sats;
        b["authentic_power"] = g.authentic_power;
        b["noise_sigma"] = g.noise_sigma;
        b["jam_sigma"] = g.jam_sigma;
        b["spoof_shift_chips"] = g.spoof_shift_chips;
        b["sample_rate"] = g.sample_rate;
        b["trials"] = g.trials;
        b["dump_grid"] = g.dump_grid;
        j["gps"] = b;
        break;
    }
    }
    return j;
}

// ---------------------------------------------------------------------------

inline std::vector<Table> run_fault(const ScenarioConfig& c, unsigned workers)
{
    const FaultScenario& s = c.fault.scenario;
    const std::string model = to_string(s.model);
    const std::string type = to_string(s.fault_type);
    std::vector<FaultSweepPoint> points(c.sweep.size());
    parallel_for(
        c.sweep.size(),
        [&](std::size_t i) { points[i] = sweep_tsa_fault(s, {c.sweep[i]}, c.fault.options).front(); }, workers);

    const auto names = indicator_names(s.model);
    Table frames{"fault_frames.csv",
                 "t,model,fault_type,D_true,dtheta_deg,indicator1,indicator2,D_est,error,clamped_flag", {}};
    Table summary{"fault_summary.csv",
                  "model,fault_type,D_true,dtheta_deg,indicator1_name,indicator2_name,D_est,error,clamped_flag,"
                  "detection_time",
                  {}};
    for (const auto& pt : points) {
        for (const auto& f : pt.frames) {
            const double err = std::abs(f.location.d_est - s.d_true);
            frames.rows.push_back(num(f.t) + "," + model + "," + type + "," + num(s.d_true) + "," +
                                  num(pt.dtheta_deg) + "," + num(f.indicators.first) + "," +
                                  num(f.indicators.second) + "," + num(f.location.d_est) + "," + num(err) + "," +
                                  flag(f.location.clamped));
        }
        summary.rows.push_back(model + "," + type + "," + num(s.d_true) + "," + num(pt.dtheta_deg) + "," +
                               names.first + "," + names.second + "," + num(pt.estimate.d_est) + "," +
                               num(pt.estimate.error) + "," + flag(pt.estimate.clamped) + "," +
                               (pt.detection_time ? num(*pt.detection_time) : std::string("nan")));
    }
    return {frames, summary};
}

inline std::vector<Table> run_voltage(const ScenarioConfig& c, unsigned workers)
{
    const auto& opt = c.voltage.options;
    const std::vector<VoltageFrame> frames = run_voltage_scenario(c.voltage.scenario, c.seed);
    const std::vector<VoltageMarginFrame> clean = track_margins(frames, 0.0, opt);
    std::vector<double> clean_p;
    for (const auto& f : clean) {
        clean_p.push_back(f.margin_p);
    }
    std::vector<VoltageSweepPoint> points(c.sweep.size());
    parallel_for(
        c.sweep.size(),
        [&](std::size_t i) {
            VoltageSweepPoint& pt = points[i];
            pt.dtheta_deg = c.sweep[i];
            pt.frames = pt.dtheta_deg == 0.0 ? clean : track_margins(frames, pt.dtheta_deg, opt);
            pt.metric = margin_error_metric(clean_p, pt.margin_p_trace());
        },
        workers);

    Table t{"voltage_frames.csv",
            "t,v_mag,v_angle_deg,i_mag,i_angle_deg,e_th_mag,z_th_mag,k_crit,margin_z,margin_p,dtheta_deg,"
            "stale_flag,collapse_flag",
            {}};
    Table summary{"voltage_summary.csv", "dtheta_deg,margin_error_metric", {}};
    for (const auto& pt : points) {
        for (const auto& f : pt.frames) {
            t.rows.push_back(num(f.t) + "," + num(f.v.magnitude()) + "," + num(f.v.angle_deg()) + "," +
                             num(f.i.magnitude()) + "," + num(f.i.angle_deg()) + "," + num(f.e_th_mag) + "," +
                             num(f.z_th_mag) + "," + num(f.k_crit) + "," + num(f.margin_z) + "," +
                             num(f.margin_p) + "," + num(pt.dtheta_deg) + "," + flag(f.stale) + "," +
                             flag(f.collapse));
        }
        summary.rows.push_back(num(pt.dtheta_deg) + "," + num(pt.metric));
    }
    return {t, summary};
}

/// Displacement is measured from the configured true event, or from the
/// unattacked estimate when only measured records are given.
inline std::vector<Table> run_event(const ScenarioConfig& c, unsigned workers)
{
    const EventConfig& e = c.event;
    const std::vector<MmrRecord> records =
        e.records.empty() ? synthesize_arrivals(*e.event, e.mmrs, e.v_e, e.noise_sigma, c.seed) : e.records;

    std::vector<EventSolution> sols(c.sweep.size());
    parallel_for(
        c.sweep.size(),
        [&](std::size_t i) {
            const double delta = c.sweep[i];
            const auto attacked = e.victim.empty() ? records : apply_timestamp_attack(records, e.victim, delta);
            sols[i] = locate_event(attacked, e.v_e);
        },
        workers);

    double ref_x = 0.0;
    double ref_y = 0.0;
    if (e.event) {
        ref_x = e.event->x;
        ref_y = e.event->y;
    } else {
        const EventSolution base = locate_event(records, e.v_e);
        ref_x = base.x_e;
        ref_y = base.y_e;
    }

    Table t{"event_solutions.csv",
            "x_e,y_e,t_e,residual,iterations,converged,victim_id,delta,displacement,ill_conditioned", {}};
    for (std::size_t i = 0; i < sols.size(); ++i) {
        const auto& s = sols[i];
        t.rows.push_back(num(s.x_e) + "," + num(s.y_e) + "," + num(s.t_e) + "," + num(s.residual_norm) + "," +
                         std::to_string(s.iterations) + "," + flag(s.converged) + "," + e.victim + "," +
                         num(c.sweep[i]) + "," + num(std::hypot(s.x_e - ref_x, s.y_e - ref_y)) + "," +
                         flag(s.ill_conditioned));
    }
    Table arrivals{"event_arrivals.csv", "id,x,y,t_arrival", {}};
    for (const auto& r : records) {
        arrivals.rows.push_back(r.id + "," + num(r.x) + "," + num(r.y) + "," + num(r.t_arrival));
    }
    return {t, arrivals};
}

inline std::vector<Table> run_gps(const ScenarioConfig& c, unsigned workers)
{
    const GpsConfig& g = c.gps;
    gps::GpsScene authentic;
    authentic.noise_sigma = g.noise_sigma;
    authentic.sample_rate = g.sample_rate;
    for (const auto& s : g.satellites) {
        authentic.satellites.push_back({s.prn, g.authentic_power, s.code_phase, s.doppler, {1}});
    }

    const auto trials = static_cast<std::size_t>(g.trials);
    const std::size_t jobs = c.sweep.size() * trials;
    std::vector<std::vector<gps::SpoofOutcome>> results(jobs);
    parallel_for(
        jobs,
        [&](std::size_t job) {
            const double ratio = c.sweep[job / trials];
            gps::GpsScene spoof = authentic;
            for (auto& s : spoof.satellites) {
                s.power = ratio * g.authentic_power;
                s.code_phase = std::fmod(s.code_phase + g.spoof_shift_chips, static_cast<double>(gps::code_length));
                if (s.code_phase < 0.0) {
                    s.code_phase += gps::code_length;
                }
            }
            results[job] = gps::run_spoof_scenario(authentic, spoof, g.jam_sigma, c.seed + 2 * job);
        },
        workers);

    Table t{"gps_acquisition.csv",
            "power_ratio,trial,prn,authentic_phase,spoof_phase,before_code_phase,before_doppler,"
            "before_peak_to_floor,after_code_phase,after_doppler,after_peak_to_floor,peak_authentic,peak_spoof,"
            "captured,ambiguous,timing_error_s",
            {}};
    for (std::size_t job = 0; job < jobs; ++job) {
        for (const auto& o : results[job]) {
            const double shift = gps::code_phase_difference(o.after.code_phase_est, o.authentic_phase);
            t.rows.push_back(num(c.sweep[job / trials]) + "," + std::to_string(job % trials) + "," +
                             std::to_string(o.prn) + "," + num(o.authentic_phase) + "," + num(o.spoof_phase) + "," +
                             num(o.before.code_phase_est) + "," + num(o.before.doppler_est) + "," +
                             num(o.before.peak_to_floor) + "," + num(o.after.code_phase_est) + "," +
                             num(o.after.doppler_est) + "," + num(o.after.peak_to_floor) + "," +
                             num(o.peak_authentic) + "," + num(o.peak_spoof) + "," + flag(o.captured) + "," +
                             flag(o.ambiguous) + "," + num(gps::spoof_phase_to_timing_error(shift)));
        }
    }
    std::vector<Table> out{t};
    if (g.dump_grid) {
        // Post-attack grid of the first satellite at the first sweep point.
        gps::GpsScene attacked = authentic;
        attacked.noise_sigma = g.jam_sigma;
        gps::SatelliteSignal s = authentic.satellites.front();
        s.power = c.sweep.front() * g.authentic_power;
        s.code_phase = std::fmod(s.code_phase + g.spoof_shift_chips, static_cast<double>(gps::code_length));
        if (s.code_phase < 0.0) {
            s.code_phase += gps::code_length;
        }
        attacked.satellites.push_back(s);
        const auto samples = gps::synthesize_baseband(attacked, c.seed + 1);
        const auto grid =
            gps::acquisition_grid(samples, s.prn, gps::default_doppler_bins(), authentic.sample_rate);
        Table dump{"gps_grid.csv", "code_phase,doppler,magnitude", {}};
        for (std::size_t b = 0; b < grid.doppler_bins.size(); ++b) {
            for (std::size_t k = 0; k < grid.magnitude[b].size(); ++k) {
                dump.rows.push_back(num(static_cast<double>(k) / grid.samples_per_chip) + "," +
                                    num(grid.doppler_bins[b]) + "," + num(grid.magnitude[b][k]));
            }
        }
        out.push_back(std::move(dump));
    }
    return out;
}

struct RunOptions {
    std::filesystem::path output_dir = "out";
    unsigned workers = 0;
    /// Original scenario text, echoed into the manifest.
    std::string config_text;
};

struct RunResult {
    std::vector<std::filesystem::path> files;
    std::filesystem::path manifest;
    double wall_time = 0.0;
};

inline void write_table(const std::filesystem::path& path, const Table& t)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    os << t.header << '\n';
    for (const auto& r : t.rows) {
        os << r << '\n';
    }
    if (!os) {
        throw Error("failed writing " + path.string());
    }
}

/// Executes the scenario and writes its CSV tables plus manifest.json.
inline RunResult run(const ScenarioConfig& c, const RunOptions& opt = {})
{
    const auto start = std::chrono::steady_clock::now();
    std::vector<Table> tables;
    switch (c.kind) {
    case ScenarioKind::fault:
        tables = run_fault(c, opt.workers);
        break;
    case ScenarioKind::voltage:
        tables = run_voltage(c, opt.workers);
        break;
    case ScenarioKind::event:
        tables = run_event(c, opt.workers);
        break;
    case ScenarioKind::gps:
        tables = run_gps(c, opt.workers);
        break;
    }

    std::filesystem::create_directories(opt.output_dir);
    RunResult res;
    json outputs = json::array();
    for (const auto& t : tables) {
        const auto path = opt.output_dir / t.name;
        write_table(path, t);
        res.files.push_back(path);
        outputs.push_back({{"file", t.name}, {"rows", t.rows.size()}});
    }
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json manifest;
    manifest["tool"] = "tsa-grid-sim";
    manifest["version"] = TSAGRID_VERSION;
    manifest["kind"] = to_string(c.kind);
    manifest["seed"] = c.seed;
    manifest["wall_time_s"] = res.wall_time;
    manifest["outputs"] = outputs;
    manifest["config"] = to_json(c);
    manifest["config_text"] = opt.config_text;
    res.manifest = opt.output_dir / "manifest.json";
    std::ofstream os(res.manifest);
    os << manifest.dump(2) << '\n';
    if (!os) {
        throw Error("failed writing " + res.manifest.string());
    }
    return res;
}

} // namespace tsagrid::harness

#endif // TSAGRID_HARNESS_RUN_HPP
