#ifndef TSAGRID_LINE_FAULT_HPP
#define TSAGRID_LINE_FAULT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsagrid/error.hpp"
#include "tsagrid/network.hpp"
#include "tsagrid/phasor.hpp"

namespace tsagrid {

enum class FaultType { ABC, AB, A };

inline std::vector<int> faulted_phases(FaultType type)
{
    switch (type) {
    case FaultType::ABC:
        return {0, 1, 2};
    case FaultType::AB:
        return {0, 1};
    case FaultType::A:
        return {0};
    }
    return {};
}

/// Two-source line with an optional shunt fault. `d_true` is the fraction of
/// the line length from the fault to the receiving end. The faulted phases are
/// tied through `zf` each to a common fault point, which returns to ground
/// through `z_ground` (absent = ungrounded). Sources are balanced three-phase,
/// phase A given.
struct FaultScenario {
    LineParameters line;
    LineModel model = LineModel::long_line;
    double d_true = 0.5;
    std::optional<cplx> zf;
    std::optional<cplx> z_ground;
    Phasor es;
    Phasor er;
    cplx zs_s;
    cplx zs_r;
    FaultType fault_type = FaultType::ABC;
    double t_fault = 5.0;
    double t_end = 10.0;
    double frame_rate = 30.0;

    void validate() const
    {
        detail::require(line.length > 0.0, "line length must be positive");
        if (zf) {
            detail::require(d_true > 0.0 && d_true < 1.0, "fault location index must lie in (0, 1)");
        }
        detail::require(t_fault < t_end, "t_fault must precede t_end");
        detail::require(frame_rate > 0.0, "frame rate must be positive");
        if (model == LineModel::long_line) {
            detail::require(line.gamma && line.zc, "long-line model requires gamma and Zc");
        }
    }
};

/// Reference 345 kV scenario used by the harness defaults and the test suites.
/// Lengths follow the usual long/medium/short classes (400/50/25 miles); the
/// fault resistance is larger on the long line so that the fault signal is of
/// comparable strength relative to the line impedance.
inline FaultScenario default_fault_scenario(LineModel model)
{
    FaultScenario s;
    double length = 400.0;
    double zf = 100.0;
    if (model == LineModel::medium) {
        length = 50.0;
        zf = 12.0;
    } else if (model == LineModel::short_line) {
        length = 25.0;
        zf = 5.0;
    }
    s.line = derive_line_constants({0.05, 0.6}, {0.0, 7.0e-6}, length);
    s.model = model;
    s.d_true = 0.5;
    s.zf = cplx(zf, 0.0);
    s.z_ground = cplx(20.0, 0.0);
    const double v_phase = 345.0e3 / std::sqrt(3.0);
    s.es = Phasor::from_polar_deg(v_phase, 0.0);
    s.er = Phasor::from_polar_deg(v_phase, -10.0);
    s.zs_s = {0.0, 10.0};
    s.zs_r = {0.0, 10.0};
    return s;
}

/// One reporting instant of the forward solve, all three phases.
struct FaultFrame {
    double t = 0.0;
    bool faulted = false;
    std::array<TwoEndMeasurements, 3> phases;
    std::array<Phasor, 3> v_fault;
};

struct FaultSolution {
    std::vector<FaultFrame> frames;
    std::vector<int> phases_of_interest;
};

namespace detail {

struct NetworkState {
    std::array<TwoEndMeasurements, 3> phases;
    std::array<Phasor, 3> v_fault;
};

inline NetworkState solve_three_phase(const FaultScenario& s, bool faulted)
{
    const LineParameters& p = s.line;
    const double len = p.length;
    const PiSection whole = segment_pi(p, s.model, len);
    const PiSection sf = segment_pi(p, s.model, (1.0 - s.d_true) * len);
    const PiSection fr = segment_pi(p, s.model, s.d_true * len);

    std::array<bool, 3> is_faulted{false, false, false};
    if (faulted) {
        for (int ph : faulted_phases(s.fault_type)) {
            is_faulted[static_cast<std::size_t>(ph)] = true;
        }
    }

    Network net;
    std::array<int, 3> ns{};
    std::array<int, 3> nf{};
    std::array<int, 3> nr{};
    const int common = faulted ? net.add_node() : Network::ground;
    for (std::size_t ph = 0; ph < 3; ++ph) {
        const cplx shift = rotor_deg(-120.0 * static_cast<double>(ph));
        ns[ph] = net.add_node();
        nr[ph] = net.add_node();
        net.add_source(ns[ph], s.es.value() * shift, s.zs_s);
        net.add_source(nr[ph], s.er.value() * shift, s.zs_r);
        if (is_faulted[ph]) {
            nf[ph] = net.add_node();
            net.add_pi(ns[ph], nf[ph], sf);
            net.add_pi(nf[ph], nr[ph], fr);
            net.add_impedance(nf[ph], common, *s.zf);
        } else {
            net.add_pi(ns[ph], nr[ph], whole);
        }
    }
    if (faulted && s.z_ground) {
        net.add_impedance(common, Network::ground, *s.z_ground);
    }

    const std::vector<cplx> v = net.solve();
    NetworkState out;
    for (std::size_t ph = 0; ph < 3; ++ph) {
        const cplx vs = v[static_cast<std::size_t>(ns[ph])];
        const cplx vr = v[static_cast<std::size_t>(nr[ph])];
        cplx is;
        cplx ir;
        cplx vf;
        if (is_faulted[ph]) {
            vf = v[static_cast<std::size_t>(nf[ph])];
            is = pi_current(sf, vs, vf);
            ir = pi_current(fr, vr, vf);
        } else {
            is = pi_current(whole, vs, vr);
            ir = pi_current(whole, vr, vs);
            // Voltage at the would-be fault point, propagated from the sending end.
            vf = vs - sf.series * (is - vs * sf.half_shunt);
        }
        out.phases[ph] = {Phasor(vs), Phasor(is), Phasor(vr), Phasor(ir), 0.0};
        out.v_fault[ph] = Phasor(vf);
    }
    return out;
}

inline double median(std::vector<double> values)
{
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    double m = *mid;
    if (values.size() % 2 == 0) {
        m = (m + *std::max_element(values.begin(), mid)) / 2.0;
    }
    return m;
}

} // namespace detail

/// Quasi-static forward solve of the faulted two-source network, one frame per
/// 1/frame_rate seconds on [0, t_end).
inline FaultSolution solve_fault_network(const FaultScenario& s)
{
    s.validate();
    const detail::NetworkState pre = detail::solve_three_phase(s, false);
    std::optional<detail::NetworkState> post;
    if (s.zf) {
        post = detail::solve_three_phase(s, true);
    }

    FaultSolution sol;
    sol.phases_of_interest = faulted_phases(s.fault_type);
    const auto frames = static_cast<std::size_t>(std::floor(s.t_end * s.frame_rate - 1e-9)) + 1;
    sol.frames.reserve(frames);
    for (std::size_t k = 0; k < frames; ++k) {
        const double t = static_cast<double>(k) / s.frame_rate;
        const bool faulted = post && t >= s.t_fault;
        const detail::NetworkState& st = faulted ? *post : pre;
        FaultFrame f;
        f.t = t;
        f.faulted = faulted;
        f.phases = st.phases;
        f.v_fault = st.v_fault;
        for (auto& m : f.phases) {
            m.timestamp = t;
        }
        sol.frames.push_back(f);
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Indicators and locators

struct IndicatorPair {
    double first = 0.0;
    double second = 0.0;
};

/// Output of a single-frame locator.
struct LocatorOutput {
    double d_est = std::numeric_limits<double>::quiet_NaN();
    double imag_residual = 0.0;
    bool clamped = false;
    bool degenerate = false;
    bool unreliable = false;
};

struct LocationEstimate {
    double d_est = std::numeric_limits<double>::quiet_NaN();
    double error = std::numeric_limits<double>::quiet_NaN();
    double dtheta_deg = 0.0;
    bool clamped = false;
};

/// Complex values inside the magnitudes of the long-line indicators.
struct LongLineTerms {
    cplx n;
    cplx m;
};

/// The long-line formulas take the receiving current in the direction of line
/// flow (sending to receiving), i.e. the negative of the stored into-line value.
inline LongLineTerms long_line_terms(const TwoEndMeasurements& m, const LineParameters& p)
{
    detail::require(p.gamma && p.zc, "long-line indicators require gamma and Zc");
    const cplx zc = *p.zc;
    const cplx gl = *p.gamma * p.length;
    const cplx vs = m.vs.value();
    const cplx is = m.is.value();
    const cplx vr = m.vr.value();
    const cplx ir_flow = -m.ir.value();
    const cplx n = (vr - zc * ir_flow) / 2.0 - (vs - zc * is) / 2.0 * std::exp(gl);
    const cplx mm = (vs + zc * is) / 2.0 * std::exp(-gl) - (vr + zc * ir_flow) / 2.0;
    return {n, mm};
}

/// Long-line indicators (N, M).
inline IndicatorPair indicators_long(const TwoEndMeasurements& m, const LineParameters& p)
{
    const LongLineTerms t = long_line_terms(m, p);
    return {std::abs(t.n), std::abs(t.m)};
}

/// D = Re{ ln(N/M) / (2 gamma L) }, clamped to [0, 1].
inline LocatorOutput locate_long(const TwoEndMeasurements& m, const LineParameters& p)
{
    const LongLineTerms t = long_line_terms(m, p);
    const double scale = std::abs(m.vs.value()) + std::abs(*p.zc * m.is.value()) + std::abs(m.vr.value()) +
                         std::abs(*p.zc * m.ir.value());
    LocatorOutput out;
    if (std::abs(t.m) <= 1e-12 * scale || std::abs(t.n) <= 1e-12 * scale) {
        out.degenerate = true;
        return out;
    }
    const cplx d = std::log(t.n / t.m) / (2.0 * *p.gamma * p.length);
    out.d_est = d.real();
    out.imag_residual = d.imag();
    if (out.d_est < 0.0 || out.d_est > 1.0) {
        out.d_est = std::clamp(out.d_est, 0.0, 1.0);
        out.clamped = true;
    }
    return out;
}

/// Short-line indicators (A, B): A = |V_S - V_R - zL I_S|, B = |I_S + I_R|.
inline IndicatorPair indicators_short(const TwoEndMeasurements& m, const LineParameters& p)
{
    const cplx zl = p.series_total();
    return {std::abs(m.vs.value() - m.vr.value() - zl * m.is.value()), std::abs(m.is.value() + m.ir.value())};
}

inline LocatorOutput locate_short(const TwoEndMeasurements& m, const LineParameters& p)
{
    const cplx zl = p.series_total();
    const cplx i_fault = m.is.value() + m.ir.value();
    LocatorOutput out;
    if (std::abs(i_fault) <= 1e-9 * (std::abs(m.is.value()) + std::abs(m.ir.value())) ||
        std::abs(i_fault) == 0.0) {
        out.degenerate = true;
        return out;
    }
    const cplx d = (m.vr.value() - m.vs.value() + zl * m.is.value()) / (zl * i_fault);
    out.d_est = d.real();
    out.imag_residual = d.imag();
    if (out.d_est < 0.0 || out.d_est > 1.0) {
        out.d_est = std::clamp(out.d_est, 0.0, 1.0);
        out.clamped = true;
    }
    return out;
}

namespace detail {

inline std::pair<cplx, cplx> shunt_corrected_currents(const TwoEndMeasurements& m, const LineParameters& p)
{
    const cplx half = p.shunt_total() / 2.0;
    return {m.is.value() - m.vs.value() * half, m.ir.value() - m.vr.value() * half};
}

/// |V_F from the sending side - V_F from the receiving side| for a fault at
/// index d, each side modelled as one nominal-pi segment.
inline double medium_mismatch(const TwoEndMeasurements& m, const LineParameters& p, double d)
{
    const double ls = (1.0 - d) * p.length;
    const double lr = d * p.length;
    const cplx vs = m.vs.value();
    const cplx vr = m.vr.value();
    const cplx vf_s = vs - p.z1 * ls * (m.is.value() - vs * p.y1 * ls / 2.0);
    const cplx vf_r = vr - p.z1 * lr * (m.ir.value() - vr * p.y1 * lr / 2.0);
    return std::abs(vf_s - vf_r);
}

} // namespace detail

/// Medium-line indicators (B, C) on shunt-corrected currents.
inline IndicatorPair indicators_medium(const TwoEndMeasurements& m, const LineParameters& p)
{
    const auto [is, ir] = detail::shunt_corrected_currents(m, p);
    return {std::abs(is + ir), std::abs(m.vs.value() - m.vr.value() - p.series_total() * is)};
}

/// Minimizes the two-sided fault-voltage mismatch over [0, 1]: a coarse scan
/// brackets the minimum, golden-section search refines it.
inline LocatorOutput locate_medium(const TwoEndMeasurements& m, const LineParameters& p, double tolerance = 1e-10)
{
    constexpr int coarse = 200;
    auto f = [&](double d) { return detail::medium_mismatch(m, p, d); };

    int best = 0;
    double best_val = f(0.0);
    for (int k = 1; k <= coarse; ++k) {
        const double v = f(static_cast<double>(k) / coarse);
        if (v < best_val) {
            best_val = v;
            best = k;
        }
    }
    double lo = static_cast<double>(std::max(best - 1, 0)) / coarse;
    double hi = static_cast<double>(std::min(best + 1, coarse)) / coarse;

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > tolerance) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }

    LocatorOutput out;
    out.d_est = (lo + hi) / 2.0;
    out.imag_residual = f(out.d_est);
    const double edge = 1e-6;
    if (out.d_est < edge || out.d_est > 1.0 - edge) {
        const double at = out.d_est < 0.5 ? 0.0 : 1.0;
        const double h = 1e-4;
        const double slope = std::abs(f(at) - f(std::abs(at - h))) / h;
        const double scale = std::abs(m.vs.value()) + std::abs(m.vr.value());
        out.unreliable = slope > 1e-9 * scale;
        out.d_est = at;
    }
    return out;
}

inline std::pair<std::string, std::string> indicator_names(LineModel model)
{
    switch (model) {
    case LineModel::short_line:
        return {"A", "B"};
    case LineModel::medium:
        return {"B", "C"};
    case LineModel::long_line:
        return {"N", "M"};
    }
    return {"", ""};
}

inline IndicatorPair indicators(LineModel model, const TwoEndMeasurements& m, const LineParameters& p)
{
    switch (model) {
    case LineModel::short_line:
        return indicators_short(m, p);
    case LineModel::medium:
        return indicators_medium(m, p);
    case LineModel::long_line:
        return indicators_long(m, p);
    }
    throw InvalidArgument("unknown line model");
}

inline LocatorOutput locate(LineModel model, const TwoEndMeasurements& m, const LineParameters& p)
{
    switch (model) {
    case LineModel::short_line:
        return locate_short(m, p);
    case LineModel::medium:
        return locate_medium(m, p);
    case LineModel::long_line:
        return locate_long(m, p);
    }
    throw InvalidArgument("unknown line model");
}

// ---------------------------------------------------------------------------
// Detection

struct IndicatorTrace {
    std::vector<double> t;
    std::vector<double> first;
    std::vector<double> second;
    std::pair<std::string, std::string> names;
};

/// First frame at or after `window_end` where both indicators exceed
/// threshold_ratio times their median over [window_begin, window_end).
/// Medians below `floor` are raised to it.
inline std::optional<double> detect_fault(const IndicatorTrace& trace, double threshold_ratio, double window_begin,
                                          double window_end, double floor = 1e-6)
{
    detail::require(threshold_ratio > 1.0, "threshold ratio must exceed 1");
    std::vector<double> w1;
    std::vector<double> w2;
    for (std::size_t k = 0; k < trace.t.size(); ++k) {
        if (trace.t[k] >= window_begin && trace.t[k] < window_end) {
            w1.push_back(trace.first[k]);
            w2.push_back(trace.second[k]);
        }
    }
    detail::require(w1.size() >= 10, "detection window must contain at least 10 frames");
    const double th1 = threshold_ratio * std::max(detail::median(w1), floor);
    const double th2 = threshold_ratio * std::max(detail::median(w2), floor);
    for (std::size_t k = 0; k < trace.t.size(); ++k) {
        if (trace.t[k] >= window_end && trace.first[k] > th1 && trace.second[k] > th2) {
            return trace.t[k];
        }
    }
    return std::nullopt;
}

/// Absolute per-indicator alarm levels, calibrated on an attack-free trace as
/// `fraction` of the post-fault median level.
struct IndicatorThresholds {
    double first = 0.0;
    double second = 0.0;
};

inline IndicatorThresholds calibrate_thresholds(const IndicatorTrace& clean, double t_fault, double fraction = 0.5)
{
    detail::require(fraction > 0.0 && fraction < 1.0, "calibration fraction must lie in (0, 1)");
    std::vector<double> p1;
    std::vector<double> p2;
    for (std::size_t k = 0; k < clean.t.size(); ++k) {
        if (clean.t[k] >= t_fault) {
            p1.push_back(clean.first[k]);
            p2.push_back(clean.second[k]);
        }
    }
    detail::require(!p1.empty(), "calibration trace has no post-fault frames");
    return {fraction * detail::median(p1), fraction * detail::median(p2)};
}

struct AlarmTimes {
    std::optional<double> first;
    std::optional<double> second;
};

inline AlarmTimes first_alarms(const IndicatorTrace& trace, const IndicatorThresholds& th)
{
    AlarmTimes out;
    for (std::size_t k = 0; k < trace.t.size(); ++k) {
        if (!out.first && trace.first[k] > th.first) {
            out.first = trace.t[k];
        }
        if (!out.second && trace.second[k] > th.second) {
            out.second = trace.t[k];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// TSA sweep

struct FaultFrameResult {
    double t = 0.0;
    IndicatorPair indicators;
    LocatorOutput location;
};

struct FaultSweepPoint {
    double dtheta_deg = 0.0;
    IndicatorTrace trace;
    std::vector<FaultFrameResult> frames;
    std::optional<double> detection_time;
    LocationEstimate estimate;
};

struct FaultSweepOptions {
    double threshold_ratio = 5.0;
    double window_length = 1.0;
    /// Phase error at the sending PMU; the receiving PMU gets this plus dtheta.
    double dtheta_sending_deg = 0.0;
    double f0 = 60.0;
};

/// Indicators and locator averaged over the phases of interest, with the
/// receiving PMU rotated by `dtheta` relative to the sending PMU.
inline FaultFrameResult evaluate_frame(const FaultScenario& s, const FaultFrame& frame,
                                       const std::vector<int>& phases, double dtheta_s, double dtheta_r,
                                       double f0, bool run_locator)
{
    FaultFrameResult r;
    r.t = frame.t;
    const TsaOffset off_s = TsaOffset::from_phase_deg(dtheta_s, f0);
    const TsaOffset off_r = TsaOffset::from_phase_deg(dtheta_r, f0);
    double d_sum = 0.0;
    double im_sum = 0.0;
    int d_count = 0;
    for (int ph : phases) {
        TwoEndMeasurements m = frame.phases[static_cast<std::size_t>(ph)];
        m = apply_tsa(m, LineEnd::sending, off_s);
        m = apply_tsa(m, LineEnd::receiving, off_r);
        const IndicatorPair ind = indicators(s.model, m, s.line);
        r.indicators.first += ind.first;
        r.indicators.second += ind.second;
        if (run_locator) {
            const LocatorOutput loc = locate(s.model, m, s.line);
            r.location.clamped = r.location.clamped || loc.clamped;
            r.location.degenerate = r.location.degenerate || loc.degenerate;
            r.location.unreliable = r.location.unreliable || loc.unreliable;
            if (!loc.degenerate) {
                d_sum += loc.d_est;
                im_sum += loc.imag_residual;
                ++d_count;
            }
        }
    }
    const auto n = static_cast<double>(phases.size());
    r.indicators.first /= n;
    r.indicators.second /= n;
    if (d_count > 0 && !r.location.degenerate) {
        r.location.d_est = d_sum / d_count;
        r.location.imag_residual = im_sum / d_count;
    }
    return r;
}

/// Runs detection and location for every asynchronism in `dthetas` (degrees,
/// receiving minus sending). One point per entry, in input order.
inline std::vector<FaultSweepPoint> sweep_tsa_fault(const FaultScenario& s, const std::vector<double>& dthetas,
                                                    const FaultSweepOptions& opt = {})
{
    const FaultSolution sol = solve_fault_network(s);
    std::vector<FaultSweepPoint> out;
    out.reserve(dthetas.size());
    for (double dtheta : dthetas) {
        FaultSweepPoint pt;
        pt.dtheta_deg = dtheta;
        pt.trace.names = indicator_names(s.model);
        const double ds = opt.dtheta_sending_deg;
        const double dr = opt.dtheta_sending_deg + dtheta;

        for (const FaultFrame& f : sol.frames) {
            FaultFrameResult r = evaluate_frame(s, f, sol.phases_of_interest, ds, dr, opt.f0, false);
            pt.trace.t.push_back(r.t);
            pt.trace.first.push_back(r.indicators.first);
            pt.trace.second.push_back(r.indicators.second);
            pt.frames.push_back(r);
        }
        if (s.zf) {
            pt.detection_time =
                detect_fault(pt.trace, opt.threshold_ratio, s.t_fault - opt.window_length, s.t_fault);
        }

        // Locator accuracy is scored on every faulted frame, independent of
        // whether the detector fired under attack.
        pt.estimate.dtheta_deg = dtheta;
        if (s.zf) {
            double sum = 0.0;
            int count = 0;
            for (std::size_t k = 0; k < sol.frames.size(); ++k) {
                if (!sol.frames[k].faulted) {
                    continue;
                }
                pt.frames[k] = evaluate_frame(s, sol.frames[k], sol.phases_of_interest, ds, dr, opt.f0, true);
                const LocatorOutput& loc = pt.frames[k].location;
                if (!loc.degenerate) {
                    sum += loc.d_est;
                    ++count;
                    pt.estimate.clamped = pt.estimate.clamped || loc.clamped;
                }
            }
            if (count > 0) {
                pt.estimate.d_est = sum / count;
                pt.estimate.error = std::abs(pt.estimate.d_est - s.d_true);
            }
        }
        out.push_back(std::move(pt));
    }
    return out;
}

} // namespace tsagrid

#endif // TSAGRID_LINE_FAULT_HPP
