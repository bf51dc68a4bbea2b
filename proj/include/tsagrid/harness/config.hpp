#ifndef TSAGRID_HARNESS_CONFIG_HPP
#define TSAGRID_HARNESS_CONFIG_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "tsagrid/error.hpp"
#include "tsagrid/event_location.hpp"
#include "tsagrid/gps.hpp"
#include "tsagrid/line_fault.hpp"
#include "tsagrid/voltage_stability.hpp"

namespace tsagrid::harness {

/// Invalid scenario file. `line` and `column` are 1-based, 0 when unknown.
class ConfigError : public Error {
public:
    ConfigError(const std::string& message, int line = 0, int column = 0, std::string key = {})
        : Error(format(message, line, column)), line_(line), column_(column), key_(std::move(key))
    {
    }

    int line() const { return line_; }
    int column() const { return column_; }
    const std::string& key() const { return key_; }

private:
    static std::string format(const std::string& message, int line, int column)
    {
        if (line <= 0) {
            return message;
        }
        return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
    }

    int line_;
    int column_;
    std::string key_;
};

enum class ScenarioKind { fault, voltage, event, gps };

inline std::string to_string(ScenarioKind k)
{
    switch (k) {
    case ScenarioKind::fault:
        return "fault";
    case ScenarioKind::voltage:
        return "voltage";
    case ScenarioKind::event:
        return "event";
    case ScenarioKind::gps:
        return "gps";
    }
    return "?";
}

inline std::string to_string(LineModel m)
{
    switch (m) {
    case LineModel::short_line:
        return "short";
    case LineModel::medium:
        return "medium";
    case LineModel::long_line:
        return "long";
    }
    return "?";
}

inline std::string to_string(FaultType t)
{
    switch (t) {
    case FaultType::ABC:
        return "ABC";
    case FaultType::AB:
        return "AB";
    case FaultType::A:
        return "A";
    }
    return "?";
}

struct FaultConfig {
    FaultScenario scenario = default_fault_scenario(LineModel::long_line);
    FaultSweepOptions options;
    /// Source phasors as configured, [magnitude, angle_deg].
    std::array<double, 2> es_polar{scenario.es.magnitude(), scenario.es.angle_deg()};
    std::array<double, 2> er_polar{scenario.er.magnitude(), scenario.er.angle_deg()};
};

struct VoltageConfig {
    VoltageScenario scenario;
    VoltageSweepOptions options;
};

struct EventConfig {
    std::vector<MmrPosition> mmrs;
    std::optional<EventPoint> event;
    /// Measured arrivals. When present they replace synthesized ones.
    std::vector<MmrRecord> records;
    double v_e = default_wave_speed;
    double noise_sigma = 0.0;
    std::string victim;
};

struct GpsSatelliteConfig {
    int prn = 1;
    double code_phase = 0.0;
    double doppler = 0.0;
};

struct GpsConfig {
    std::vector<GpsSatelliteConfig> satellites{
        {1, 100.25, 1500.0}, {7, 350.5, -2500.0}, {13, 600.75, 3000.0}, {22, 850.0, -500.0}};
    double authentic_power = 1.0;
    double noise_sigma = 2.0;
    double jam_sigma = 4.0;
    double spoof_shift_chips = 200.0;
    double sample_rate = gps::default_sample_rate;
    int trials = 1;
    bool dump_grid = false;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::fault;
    std::uint64_t seed = 0;
    /// Degrees (fault, voltage), seconds (event) or spoof/authentic power ratios (gps).
    std::vector<double> sweep;
    std::optional<std::string> output_dir;
    FaultConfig fault;
    VoltageConfig voltage;
    EventConfig event;
    GpsConfig gps;
};

namespace detail {

inline ConfigError error_at(const YAML::Node& n, const std::string& message, const std::string& key = {})
{
    const YAML::Mark m = n.Mark();
    if (m.line < 0) {
        return ConfigError(message, 0, 0, key);
    }
    return ConfigError(message, m.line + 1, m.column + 1, key);
}

inline void reject_unknown(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where)
{
    if (!map.IsMap()) {
        throw error_at(map, where + " must be a mapping");
    }
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.contains(key)) {
            throw error_at(kv.first, "unknown key '" + key + "' in " + where, key);
        }
    }
}

template <class T>
T scalar(const YAML::Node& n, const std::string& key)
{
    if (!n.IsScalar()) {
        throw error_at(n, "'" + key + "' must be a scalar", key);
    }
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw error_at(n, "'" + key + "' has the wrong type", key);
    }
}

template <class T>
void read(const YAML::Node& map, const std::string& key, T& out)
{
    if (const YAML::Node n = map[key]) {
        out = scalar<T>(n, key);
    }
}

inline double read_positive(const YAML::Node& map, const std::string& key, double fallback)
{
    double v = fallback;
    read(map, key, v);
    if (!(v > 0.0)) {
        throw error_at(map[key], "'" + key + "' must be positive", key);
    }
    return v;
}

inline cplx complex_value(const YAML::Node& n, const std::string& key)
{
    if (n.IsScalar()) {
        return {scalar<double>(n, key), 0.0};
    }
    if (!n.IsSequence() || n.size() != 2) {
        throw error_at(n, "'" + key + "' must be a number or [re, im]", key);
    }
    return {scalar<double>(n[0], key), scalar<double>(n[1], key)};
}

inline void read_complex(const YAML::Node& map, const std::string& key, cplx& out)
{
    if (const YAML::Node n = map[key]) {
        out = complex_value(n, key);
    }
}

/// Phasor as [magnitude, angle_deg].
inline void read_phasor(const YAML::Node& map, const std::string& key, std::array<double, 2>& out)
{
    if (const YAML::Node n = map[key]) {
        if (!n.IsSequence() || n.size() != 2) {
            throw error_at(n, "'" + key + "' must be [magnitude, angle_deg]", key);
        }
        out = {scalar<double>(n[0], key), scalar<double>(n[1], key)};
    }
}

inline std::vector<double> number_list(const YAML::Node& n, const std::string& key)
{
    if (!n.IsSequence()) {
        throw error_at(n, "'" + key + "' must be a list", key);
    }
    std::vector<double> out;
    for (const auto& e : n) {
        out.push_back(scalar<double>(e, key));
    }
    return out;
}

inline LineModel parse_model(const YAML::Node& n)
{
    const auto s = scalar<std::string>(n, "model");
    if (s == "short") {
        return LineModel::short_line;
    }
    if (s == "medium") {
        return LineModel::medium;
    }
    if (s == "long") {
        return LineModel::long_line;
    }
    throw error_at(n, "model must be short, medium or long", "model");
}

inline FaultType parse_fault_type(const YAML::Node& n)
{
    const auto s = scalar<std::string>(n, "fault_type");
    if (s == "ABC") {
        return FaultType::ABC;
    }
    if (s == "AB") {
        return FaultType::AB;
    }
    if (s == "A") {
        return FaultType::A;
    }
    throw error_at(n, "fault_type must be ABC, AB or A", "fault_type");
}

inline FaultConfig parse_fault(const YAML::Node& b)
{
    FaultConfig c;
    if (!b) {
        return c;
    }
    reject_unknown(b,
                   {"model", "length", "z1", "y1", "d_true", "zf", "z_ground", "es", "er", "zs_s", "zs_r",
                    "fault_type", "t_fault", "duration", "frame_rate", "f0", "threshold_ratio", "window_length",
                    "dtheta_sending_deg"},
                   "fault");
    LineModel model = LineModel::long_line;
    if (b["model"]) {
        model = parse_model(b["model"]);
    }
    FaultScenario& s = c.scenario;
    s = default_fault_scenario(model);
    c.es_polar = {s.es.magnitude(), 0.0};
    c.er_polar = {s.er.magnitude(), -10.0};

    cplx z1 = s.line.z1;
    cplx y1 = s.line.y1;
    double length = s.line.length;
    read_complex(b, "z1", z1);
    read_complex(b, "y1", y1);
    length = read_positive(b, "length", length);
    try {
        s.line = derive_line_constants(z1, y1, length, model);
    } catch (const InvalidArgument& e) {
        throw error_at(b, std::string("fault line: ") + e.what());
    }

    read(b, "d_true", s.d_true);
    if (const YAML::Node n = b["zf"]) {
        if (n.IsNull()) {
            s.zf.reset();
        } else {
            s.zf = complex_value(n, "zf");
        }
    }
    if (const YAML::Node n = b["z_ground"]) {
        if (n.IsNull()) {
            s.z_ground.reset();
        } else {
            s.z_ground = complex_value(n, "z_ground");
        }
    }
    read_phasor(b, "es", c.es_polar);
    read_phasor(b, "er", c.er_polar);
    s.es = Phasor::from_polar_deg(c.es_polar[0], c.es_polar[1]);
    s.er = Phasor::from_polar_deg(c.er_polar[0], c.er_polar[1]);
    read_complex(b, "zs_s", s.zs_s);
    read_complex(b, "zs_r", s.zs_r);
    if (b["fault_type"]) {
        s.fault_type = parse_fault_type(b["fault_type"]);
    }
    read(b, "t_fault", s.t_fault);
    s.t_end = read_positive(b, "duration", s.t_end);
    s.frame_rate = read_positive(b, "frame_rate", s.frame_rate);
    c.options.f0 = read_positive(b, "f0", c.options.f0);
    read(b, "threshold_ratio", c.options.threshold_ratio);
    c.options.window_length = read_positive(b, "window_length", c.options.window_length);
    read(b, "dtheta_sending_deg", c.options.dtheta_sending_deg);
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw error_at(b, std::string("fault: ") + e.what());
    }
    return c;
}

inline VoltageConfig parse_voltage(const YAML::Node& b)
{
    VoltageConfig c;
    if (!b) {
        return c;
    }
    reject_unknown(b,
                   {"e_rms", "modulation_depth", "modulation_freq", "z_source", "lines", "load_p", "power_factor",
                    "load_fluctuation", "fault_start", "fault_end", "fault_position", "z_fault", "trip_line1",
                    "trip_line2", "frame_rate", "duration", "window", "condition_threshold", "f0"},
                   "voltage");
    VoltageScenario& s = c.scenario;
    s.e_rms = read_positive(b, "e_rms", s.e_rms);
    read(b, "modulation_depth", s.modulation_depth);
    read(b, "modulation_freq", s.modulation_freq);
    read_complex(b, "z_source", s.z_source);
    if (const YAML::Node lines = b["lines"]) {
        if (!lines.IsSequence() || lines.size() != 3) {
            throw error_at(lines, "'lines' must list exactly 3 lines", "lines");
        }
        for (std::size_t i = 0; i < 3; ++i) {
            const YAML::Node l = lines[i];
            reject_unknown(l, {"z1", "length"}, "voltage.lines");
            read_complex(l, "z1", s.lines[i].z1);
            s.lines[i].length = read_positive(l, "length", s.lines[i].length);
        }
    }
    s.load_p = read_positive(b, "load_p", s.load_p);
    read(b, "power_factor", s.power_factor);
    read(b, "load_fluctuation", s.load_fluctuation);
    read(b, "fault_start", s.fault_start);
    read(b, "fault_end", s.fault_end);
    read(b, "fault_position", s.fault_position);
    read_complex(b, "z_fault", s.z_fault);
    read(b, "trip_line1", s.trip_line1);
    read(b, "trip_line2", s.trip_line2);
    s.frame_rate = read_positive(b, "frame_rate", s.frame_rate);
    s.duration = read_positive(b, "duration", s.duration);
    if (const YAML::Node n = b["window"]) {
        const auto w = scalar<int>(n, "window");
        if (w < 4) {
            throw error_at(n, "'window' must be at least 4", "window");
        }
        c.options.window = static_cast<std::size_t>(w);
    }
    c.options.condition_threshold = read_positive(b, "condition_threshold", c.options.condition_threshold);
    c.options.f0 = read_positive(b, "f0", c.options.f0);
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw error_at(b, std::string("voltage: ") + e.what());
    }
    return c;
}

inline EventConfig parse_event(const YAML::Node& b)
{
    EventConfig c;
    if (!b) {
        throw ConfigError("missing required key 'event'", 0, 0, "event");
    }
    reject_unknown(b, {"mmrs", "event", "records", "v_e", "noise_sigma", "victim"}, "event");
    c.v_e = read_positive(b, "v_e", c.v_e);
    read(b, "noise_sigma", c.noise_sigma);
    if (c.noise_sigma < 0.0) {
        throw error_at(b["noise_sigma"], "'noise_sigma' must be non-negative", "noise_sigma");
    }
    read(b, "victim", c.victim);

    if (const YAML::Node list = b["mmrs"]) {
        if (!list.IsSequence()) {
            throw error_at(list, "'mmrs' must be a list", "mmrs");
        }
        for (const auto& e : list) {
            reject_unknown(e, {"id", "x", "y"}, "event.mmrs");
            MmrPosition p;
            if (!e["id"] || !e["x"] || !e["y"]) {
                throw error_at(e, "each MMR needs id, x and y");
            }
            read(e, "id", p.id);
            read(e, "x", p.x);
            read(e, "y", p.y);
            c.mmrs.push_back(p);
        }
    }
    if (const YAML::Node list = b["records"]) {
        if (!list.IsSequence()) {
            throw error_at(list, "'records' must be a list", "records");
        }
        for (const auto& e : list) {
            reject_unknown(e, {"id", "x", "y", "t"}, "event.records");
            MmrRecord r;
            if (!e["id"] || !e["x"] || !e["y"] || !e["t"]) {
                throw error_at(e, "each record needs id, x, y and t");
            }
            read(e, "id", r.id);
            read(e, "x", r.x);
            read(e, "y", r.y);
            read(e, "t", r.t_arrival);
            c.records.push_back(r);
        }
    }
    if (const YAML::Node ev = b["event"]) {
        reject_unknown(ev, {"x", "y", "t"}, "event.event");
        EventPoint p;
        read(ev, "x", p.x);
        read(ev, "y", p.y);
        read(ev, "t", p.t);
        c.event = p;
    }

    if (c.records.empty()) {
        if (c.mmrs.empty() || !c.event) {
            throw error_at(b, "event needs either 'records' or both 'mmrs' and 'event'");
        }
    } else if (!c.mmrs.empty()) {
        throw error_at(b["mmrs"], "'mmrs' and 'records' are mutually exclusive", "mmrs");
    }
    const std::size_t count = c.records.empty() ? c.mmrs.size() : c.records.size();
    if (count < 4) {
        throw error_at(b, "at least 4 MMRs are required");
    }
    if (!c.victim.empty()) {
        bool found = false;
        for (const auto& m : c.mmrs) {
            found = found || m.id == c.victim;
        }
        for (const auto& r : c.records) {
            found = found || r.id == c.victim;
        }
        if (!found) {
            throw error_at(b["victim"], "victim '" + c.victim + "' is not a listed MMR", "victim");
        }
    }
    return c;
}

inline GpsConfig parse_gps(const YAML::Node& b)
{
    GpsConfig c;
    if (!b) {
        return c;
    }
    reject_unknown(b,
                   {"satellites", "authentic_power", "noise_sigma", "jam_sigma", "spoof_shift_chips", "sample_rate",
                    "trials", "dump_grid"},
                   "gps");
    if (const YAML::Node list = b["satellites"]) {
        if (!list.IsSequence() || list.size() == 0) {
            throw error_at(list, "'satellites' must be a non-empty list", "satellites");
        }
        c.satellites.clear();
        for (const auto& e : list) {
            reject_unknown(e, {"prn", "code_phase", "doppler"}, "gps.satellites");
            GpsSatelliteConfig s;
            read(e, "prn", s.prn);
            read(e, "code_phase", s.code_phase);
            read(e, "doppler", s.doppler);
            if (s.prn < 1 || s.prn > 32) {
                throw error_at(e, "PRN must lie in 1..32", "prn");
            }
            if (s.code_phase < 0.0 || s.code_phase >= gps::code_length) {
                throw error_at(e, "code_phase must lie in [0, 1023)", "code_phase");
            }
            c.satellites.push_back(s);
        }
    }
    c.authentic_power = read_positive(b, "authentic_power", c.authentic_power);
    read(b, "noise_sigma", c.noise_sigma);
    read(b, "jam_sigma", c.jam_sigma);
    if (c.noise_sigma < 0.0 || c.jam_sigma < 0.0) {
        throw error_at(b, "noise levels must be non-negative");
    }
    read(b, "spoof_shift_chips", c.spoof_shift_chips);
    c.sample_rate = read_positive(b, "sample_rate", c.sample_rate);
    read(b, "trials", c.trials);
    if (c.trials < 1) {
        throw error_at(b["trials"], "'trials' must be at least 1", "trials");
    }
    read(b, "dump_grid", c.dump_grid);
    return c;
}

} // namespace detail

/// Parses and validates a YAML scenario. Missing optional blocks take defaults.
inline ScenarioConfig parse_config(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("malformed YAML: " + e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    if (!root || root.IsNull()) {
        throw ConfigError("missing required key 'kind'", 0, 0, "kind");
    }
    detail::reject_unknown(root, {"kind", "seed", "sweep", "output_dir", "fault", "voltage", "event", "gps"},
                           "top level");

    ScenarioConfig c;
    const YAML::Node kind = root["kind"];
    if (!kind) {
        throw ConfigError("missing required key 'kind'", 0, 0, "kind");
    }
    const auto k = detail::scalar<std::string>(kind, "kind");
    if (k == "fault") {
        c.kind = ScenarioKind::fault;
    } else if (k == "voltage") {
        c.kind = ScenarioKind::voltage;
    } else if (k == "event") {
        c.kind = ScenarioKind::event;
    } else if (k == "gps") {
        c.kind = ScenarioKind::gps;
    } else {
        throw detail::error_at(kind, "kind must be fault, voltage, event or gps", "kind");
    }

    const YAML::Node seed = root["seed"];
    if (!seed) {
        throw ConfigError("missing required key 'seed'", 0, 0, "seed");
    }
    c.seed = detail::scalar<std::uint64_t>(seed, "seed");

    const YAML::Node sweep = root["sweep"];
    if (!sweep) {
        throw ConfigError("missing required key 'sweep'", 0, 0, "sweep");
    }
    c.sweep = detail::number_list(sweep, "sweep");
    if (c.sweep.empty()) {
        throw detail::error_at(sweep, "'sweep' must not be empty", "sweep");
    }
    if (const YAML::Node out = root["output_dir"]) {
        c.output_dir = detail::scalar<std::string>(out, "output_dir");
    }

    const std::string block = to_string(c.kind);
    for (const char* other : {"fault", "voltage", "event", "gps"}) {
        if (block != other && root[other]) {
            throw detail::error_at(root[other], "block '" + std::string(other) + "' does not match kind " + block,
                                   other);
        }
    }
    switch (c.kind) {
    case ScenarioKind::fault:
        c.fault = detail::parse_fault(root["fault"]);
        break;
    case ScenarioKind::voltage:
        c.voltage = detail::parse_voltage(root["voltage"]);
        break;
    case ScenarioKind::event:
        c.event = detail::parse_event(root["event"]);
        for (double d : c.sweep) {
            if (d != 0.0 && c.event.victim.empty()) {
                throw detail::error_at(sweep, "a non-zero delta needs 'event.victim'", "victim");
            }
        }
        break;
    case ScenarioKind::gps:
        c.gps = detail::parse_gps(root["gps"]);
        for (double r : c.sweep) {
            if (!(r >= 0.0)) {
                throw detail::error_at(sweep, "gps sweep entries are power ratios and must be non-negative",
                                       "sweep");
            }
        }
        break;
    }
    return c;
}

} // namespace tsagrid::harness

#endif // TSAGRID_HARNESS_CONFIG_HPP
