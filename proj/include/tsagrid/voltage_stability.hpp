#ifndef TSAGRID_VOLTAGE_STABILITY_HPP
#define TSAGRID_VOLTAGE_STABILITY_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tsagrid/error.hpp"
#include "tsagrid/network.hpp"
#include "tsagrid/phasor.hpp"

namespace tsagrid {

/// Thevenin equivalent of the remote system seen from the load bus.
struct ThevEstimate {
    Phasor e_th;
    cplx z_th;
    double condition = 0.0;
    std::size_t window = 0;
    double residual = 0.0;

    bool nonphysical() const { return z_th.real() < 0.0; }
};

struct MarginIndices {
    double margin_z = 0.0;
    double k_crit = 0.0;
    double margin_p = 0.0;
    double p_lmax = 0.0;
    double p_l = 0.0;
    cplx z_l;
    bool clamped = false;
};

/// One synchronized voltage/current pair used by the estimator.
struct VoltageCurrent {
    cplx v;
    cplx i;
};

/// Least-squares fit of V_k = E_th - Z_th I_k. `condition` is the 2-norm
/// condition number of the column-normalized system.
inline ThevEstimate estimate_thevenin(std::span<const VoltageCurrent> window)
{
    detail::require(window.size() >= 4, "Thevenin window needs at least 4 frames");
    const auto n = static_cast<Eigen::Index>(window.size());
    Eigen::MatrixXcd a(n, 2);
    Eigen::VectorXcd b(n);
    double i_rms = 0.0;
    for (const auto& w : window) {
        i_rms += std::norm(w.i);
    }
    i_rms = std::sqrt(i_rms / static_cast<double>(n));
    if (!(i_rms > 0.0)) {
        throw SingularSystem("Thevenin window carries no current");
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& w = window[static_cast<std::size_t>(k)];
        a(k, 0) = 1.0;
        a(k, 1) = -w.i / i_rms;
        b(k) = w.v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (!(smin > 1e-12 * smax)) {
        throw SingularSystem("Thevenin window is rank deficient (no load variation)");
    }
    const Eigen::VectorXcd x = svd.solve(b);

    ThevEstimate est;
    est.e_th = Phasor(x(0));
    est.z_th = x(1) / i_rms;
    est.condition = smax / smin;
    est.window = window.size();
    est.residual = (a * x - b).norm();
    return est;
}

/// Impedance-ratio index: k_crit = |Z_th / Z_L|, MARGIN_Z = 100 (1 - k_crit).
inline MarginIndices margin_z(cplx z_th, cplx z_l)
{
    detail::require(std::abs(z_l) > 0.0, "load impedance must be non-zero");
    MarginIndices m;
    m.z_l = z_l;
    m.k_crit = std::abs(z_th / z_l);
    m.margin_z = 100.0 * (1.0 - m.k_crit);
    return m;
}

/// Maximum active power deliverable through Z_th from |E_th| to a load of
/// constant power-factor angle `phi` (radians).
inline double max_loadability(double e_mag, cplx z_th, double phi)
{
    return e_mag * e_mag * std::cos(phi) / (2.0 * std::abs(z_th) * (1.0 + std::cos(std::arg(z_th) - phi)));
}

/// Active-power margin p_Lmax - P_L when |Z_L| > |Z_th|, else 0. The load
/// power-factor angle is the angle of Z_L. Negative values are clamped to 0.
inline MarginIndices margin_p(const ThevEstimate& est, cplx z_l, double p_load)
{
    MarginIndices m = margin_z(est.z_th, z_l);
    m.p_l = p_load;
    if (std::abs(z_l) > std::abs(est.z_th)) {
        m.p_lmax = max_loadability(est.e_th.magnitude(), est.z_th, std::arg(z_l));
        m.margin_p = m.p_lmax - p_load;
        if (!(m.margin_p >= 0.0)) {
            m.margin_p = 0.0;
            m.clamped = true;
        }
    }
    return m;
}

/// Mean absolute difference of two MARGIN_P traces over frames where both are defined.
inline double margin_error_metric(std::span<const double> clean, std::span<const double> attacked)
{
    detail::require(clean.size() == attacked.size(), "margin traces must have equal length");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < clean.size(); ++k) {
        if (std::isfinite(clean[k]) && std::isfinite(attacked[k])) {
            sum += std::abs(attacked[k] - clean[k]);
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Scenario

/// Source behind three parallel lines feeding a constant-power load, with a
/// three-phase fault on line 1 and staged trips of lines 1 and 2. Quantities
/// in per unit; the lines use the series (short-line) model.
struct VoltageScenario {
    double e_rms = 1.0;
    double modulation_depth = 0.002;
    double modulation_freq = 1.0;
    cplx z_source{0.0, 0.05};
    std::array<LineParameters, 3> lines{
        LineParameters{{1.0e-4, 1.0e-3}, {}, 300.0, std::nullopt, std::nullopt},
        LineParameters{{1.0e-4, 1.0e-3}, {}, 300.0, std::nullopt, std::nullopt},
        LineParameters{{1.0e-4, 1.0e-3}, {}, 300.0, std::nullopt, std::nullopt},
    };
    double load_p = 0.7;
    double power_factor = 0.95;
    /// Relative standard deviation of the per-frame load power draw.
    double load_fluctuation = 0.08;
    double fault_start = 2.0;
    double fault_end = 2.5;
    double fault_position = 0.5;
    cplx z_fault{0.25, 0.0};
    double trip_line1 = 4.0;
    double trip_line2 = 6.0;
    double frame_rate = 30.0;
    double duration = 10.0;

    void validate() const
    {
        detail::require(frame_rate > 0.0 && duration > 0.0, "frame rate and duration must be positive");
        detail::require(fault_start < fault_end && fault_end < trip_line1 && trip_line1 < trip_line2 &&
                            trip_line2 < duration,
                        "event times must be strictly increasing within the duration");
        detail::require(fault_start >= 0.0, "event times must be non-negative");
        detail::require(power_factor > 0.0 && power_factor <= 1.0, "power factor must lie in (0, 1]");
        detail::require(load_p > 0.0, "load power must be positive");
        detail::require(fault_position > 0.0 && fault_position < 1.0, "fault position must lie in (0, 1)");
        detail::require(load_fluctuation >= 0.0 && modulation_depth >= 0.0, "variations must be non-negative");
        for (const auto& l : lines) {
            detail::require(l.length > 0.0 && l.z1 != cplx{}, "lines need positive length and non-zero z1");
        }
    }
};

/// Per-frame phasors at the sending (source) bus and the load bus. `is` is the
/// total current leaving the sending bus into the lines; `ir` is the load current.
struct VoltageFrame {
    double t = 0.0;
    Phasor vs;
    Phasor is;
    Phasor vr;
    Phasor ir;
    cplx s_load;
    int iterations = 0;
    bool collapse = false;
};

namespace detail {

struct VoltageTopology {
    bool fault = false;
    std::array<bool, 3> in_service{true, true, true};
};

struct VoltageNetwork {
    Network net;
    int bus_s = 0;
    int bus_r = 0;
    int fault_node = -1;
};

inline VoltageNetwork build_voltage_network(const VoltageScenario& sc, const VoltageTopology& topo, cplx e_source)
{
    VoltageNetwork vn;
    vn.bus_s = vn.net.add_node();
    vn.bus_r = vn.net.add_node();
    vn.net.add_source(vn.bus_s, e_source, sc.z_source);
    for (std::size_t i = 0; i < 3; ++i) {
        if (!topo.in_service[i]) {
            continue;
        }
        const cplx z = sc.lines[i].series_total();
        if (i == 0 && topo.fault) {
            vn.fault_node = vn.net.add_node();
            vn.net.add_impedance(vn.bus_s, vn.fault_node, z * sc.fault_position);
            vn.net.add_impedance(vn.fault_node, vn.bus_r, z * (1.0 - sc.fault_position));
            vn.net.add_impedance(vn.fault_node, Network::ground, sc.z_fault);
        } else {
            vn.net.add_impedance(vn.bus_s, vn.bus_r, z);
        }
    }
    return vn;
}

inline cplx sending_current(const VoltageScenario& sc, const VoltageTopology& topo, const VoltageNetwork& vn,
                            const std::vector<cplx>& v)
{
    const cplx vs = v[static_cast<std::size_t>(vn.bus_s)];
    const cplx vr = v[static_cast<std::size_t>(vn.bus_r)];
    cplx total{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!topo.in_service[i]) {
            continue;
        }
        const cplx z = sc.lines[i].series_total();
        if (i == 0 && topo.fault) {
            total += (vs - v[static_cast<std::size_t>(vn.fault_node)]) / (z * sc.fault_position);
        } else {
            total += (vs - vr) / z;
        }
    }
    return total;
}

} // namespace detail

/// Quasi-static solve of every frame. The constant-power load is met by
/// fixed-point iteration on the load-bus Thevenin equivalent; frames that do
/// not converge within 100 iterations are flagged as voltage collapse.
inline std::vector<VoltageFrame> run_voltage_scenario(const VoltageScenario& sc, std::uint64_t seed)
{
    sc.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double tan_phi = std::tan(std::acos(sc.power_factor));

    const auto count = static_cast<std::size_t>(std::floor(sc.duration * sc.frame_rate - 1e-9)) + 1;
    std::vector<VoltageFrame> frames;
    frames.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) / sc.frame_rate;
        detail::VoltageTopology topo;
        topo.fault = t >= sc.fault_start && t < sc.fault_end;
        topo.in_service[0] = t < sc.trip_line1;
        topo.in_service[1] = t < sc.trip_line2;
        if (!topo.in_service[0]) {
            topo.fault = false;
        }

        const double e_mag =
            sc.e_rms * (1.0 + sc.modulation_depth * std::sin(2.0 * std::numbers::pi * sc.modulation_freq * t));
        const double w = gauss(rng);
        const double p = sc.load_p * (1.0 + sc.load_fluctuation * w);
        const cplx s_load{p, p * tan_phi};

        // Thevenin equivalent at the load bus: open-circuit voltage and driving-point impedance.
        detail::VoltageNetwork vn = detail::build_voltage_network(sc, topo, cplx(e_mag, 0.0));
        const cplx e_eq = vn.net.solve()[static_cast<std::size_t>(vn.bus_r)];
        detail::VoltageNetwork zn = detail::build_voltage_network(sc, topo, cplx{});
        zn.net.add_injection(zn.bus_r, 1.0);
        const cplx z_eq = zn.net.solve()[static_cast<std::size_t>(zn.bus_r)];

        VoltageFrame f;
        f.t = t;
        f.s_load = s_load;
        cplx v = e_eq;
        bool converged = false;
        for (int it = 1; it <= 100; ++it) {
            // The network delivers v * conj(i) at the updated voltage.
            const cplx i = std::conj(s_load / v);
            v = e_eq - z_eq * i;
            f.iterations = it;
            if (!std::isfinite(std::abs(v))) {
                break;
            }
            if (std::abs(v * std::conj(i) - s_load) < 1e-9 * std::abs(s_load)) {
                converged = true;
                break;
            }
        }
        f.collapse = !converged;
        const cplx i_load = std::conj(s_load / v);
        vn.net.add_injection(vn.bus_r, -i_load);
        const std::vector<cplx> volts = vn.net.solve();
        f.vs = Phasor(volts[static_cast<std::size_t>(vn.bus_s)]);
        f.vr = Phasor(volts[static_cast<std::size_t>(vn.bus_r)]);
        f.is = Phasor(detail::sending_current(sc, topo, vn, volts));
        f.ir = Phasor(i_load);
        frames.push_back(f);
    }
    return frames;
}

struct VoltageMarginFrame {
    double t = 0.0;
    Phasor v;
    Phasor i;
    double e_th_mag = std::numeric_limits<double>::quiet_NaN();
    double z_th_mag = std::numeric_limits<double>::quiet_NaN();
    double k_crit = std::numeric_limits<double>::quiet_NaN();
    double margin_z = std::numeric_limits<double>::quiet_NaN();
    double margin_p = std::numeric_limits<double>::quiet_NaN();
    bool stale = false;
    bool collapse = false;
};

struct VoltageSweepPoint {
    double dtheta_deg = 0.0;
    std::vector<VoltageMarginFrame> frames;
    double metric = 0.0;

    std::vector<double> margin_p_trace() const
    {
        std::vector<double> out;
        out.reserve(frames.size());
        for (const auto& f : frames) {
            out.push_back(f.margin_p);
        }
        return out;
    }
};

struct VoltageSweepOptions {
    std::size_t window = 20;
    double condition_threshold = 1e6;
    double f0 = 60.0;
};

/// Sliding-window Thevenin tracking with the load-bus PMU rotated by
/// `dtheta_r`. The estimator pairs the load-bus voltage with the line current
/// reported by the sending-end PMU; load impedance and power come from the
/// load-bus PMU alone.
inline std::vector<VoltageMarginFrame> track_margins(const std::vector<VoltageFrame>& frames, double dtheta_r,
                                                     const VoltageSweepOptions& opt = {})
{
    const TsaOffset off = TsaOffset::from_phase_deg(dtheta_r, opt.f0);
    std::vector<VoltageMarginFrame> out;
    out.reserve(frames.size());
    std::vector<VoltageCurrent> pairs;
    pairs.reserve(frames.size());
    for (const auto& f : frames) {
        const Phasor vr = f.vr.rotated_deg(off.dtheta_deg());
        pairs.push_back({vr.value(), f.is.value()});
    }

    std::optional<ThevEstimate> last;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        VoltageMarginFrame m;
        m.t = frames[k].t;
        m.v = frames[k].vr.rotated_deg(off.dtheta_deg());
        m.i = frames[k].ir.rotated_deg(off.dtheta_deg());
        m.collapse = frames[k].collapse;
        if (k + 1 >= opt.window) {
            std::optional<ThevEstimate> est;
            try {
                est = estimate_thevenin(std::span(pairs).subspan(k + 1 - opt.window, opt.window));
                if (est->condition > opt.condition_threshold) {
                    est.reset();
                }
            } catch (const SingularSystem&) {
                est.reset();
            }
            if (est) {
                last = est;
            } else {
                m.stale = true;
            }
        }
        if (last) {
            const cplx z_l = m.v.value() / m.i.value();
            const double p_l = (m.v.value() * std::conj(m.i.value())).real();
            const MarginIndices mi = margin_p(*last, z_l, p_l);
            m.e_th_mag = last->e_th.magnitude();
            m.z_th_mag = std::abs(last->z_th);
            m.k_crit = mi.k_crit;
            m.margin_z = mi.margin_z;
            m.margin_p = mi.margin_p;
        }
        out.push_back(m);
    }
    return out;
}

/// One point per receiving-PMU phase error in `dthetas` (sending PMU held at 0).
/// `metric` is the mean absolute MARGIN_P deviation from the attack-free trace.
inline std::vector<VoltageSweepPoint> sweep_tsa_voltage(const VoltageScenario& sc, const std::vector<double>& dthetas,
                                                        std::uint64_t seed, const VoltageSweepOptions& opt = {})
{
    const std::vector<VoltageFrame> frames = run_voltage_scenario(sc, seed);
    const std::vector<VoltageMarginFrame> clean = track_margins(frames, 0.0, opt);
    std::vector<double> clean_p;
    for (const auto& f : clean) {
        clean_p.push_back(f.margin_p);
    }

    std::vector<VoltageSweepPoint> out;
    out.reserve(dthetas.size());
    for (double dtheta : dthetas) {
        VoltageSweepPoint pt;
        pt.dtheta_deg = dtheta;
        pt.frames = dtheta == 0.0 ? clean : track_margins(frames, dtheta, opt);
        pt.metric = margin_error_metric(clean_p, pt.margin_p_trace());
        out.push_back(std::move(pt));
    }
    return out;
}

} // namespace tsagrid

#endif // TSAGRID_VOLTAGE_STABILITY_HPP
