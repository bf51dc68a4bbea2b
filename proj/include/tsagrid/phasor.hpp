#ifndef TSAGRID_PHASOR_HPP
#define TSAGRID_PHASOR_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>

#include "tsagrid/error.hpp"

namespace tsagrid {

using cplx = std::complex<double>;

inline constexpr double deg_per_rad = 180.0 / std::numbers::pi;
inline constexpr double rad_per_deg = std::numbers::pi / 180.0;

/// Principal complex square root: non-negative real part, and non-negative
/// imaginary part when the real part is zero.
inline cplx principal_sqrt(cplx z)
{
    cplx r = std::sqrt(z);
    if (r.real() < 0.0 || (r.real() == 0.0 && r.imag() < 0.0)) {
        r = -r;
    }
    return r;
}

/// Unit rotor exp(j * angle) for an angle given in degrees.
inline cplx rotor_deg(double angle_deg)
{
    return std::polar(1.0, angle_deg * rad_per_deg);
}

/// Complex RMS quantity. Angles are radians internally and degrees at the interface.
class Phasor {
public:
    constexpr Phasor() = default;
    constexpr Phasor(double re, double im) : value_(re, im) {}
    constexpr explicit Phasor(cplx value) : value_(value) {}

    static Phasor from_polar_deg(double magnitude, double angle_deg)
    {
        return Phasor(std::polar(magnitude, angle_deg * rad_per_deg));
    }

    constexpr cplx value() const { return value_; }
    constexpr double re() const { return value_.real(); }
    constexpr double im() const { return value_.imag(); }

    double magnitude() const { return std::abs(value_); }

    /// Angle in degrees, in (-180, 180].
    double angle_deg() const
    {
        double a = std::arg(value_) * deg_per_rad;
        if (a <= -180.0) {
            a += 360.0;
        }
        return a;
    }

    Phasor rotated_deg(double angle_deg) const
    {
        if (angle_deg == 0.0) {
            return *this;
        }
        return Phasor(value_ * rotor_deg(angle_deg));
    }

    friend constexpr bool operator==(const Phasor&, const Phasor&) = default;

private:
    cplx value_{};
};

/// Segment model used for a line (or a line section).
enum class LineModel { short_line, medium, long_line };

/// Per-unit-length line constants plus the derived propagation constant and
/// characteristic impedance. Units: ohm/mile, S/mile, miles.
struct LineParameters {
    cplx z1;
    cplx y1;
    double length = 0.0;
    std::optional<cplx> gamma;
    std::optional<cplx> zc;

    cplx series_total() const { return z1 * length; }
    cplx shunt_total() const { return y1 * length; }
};

/// Derives gamma = sqrt(z1 y1) and Zc = sqrt(z1 / y1) on the principal branch.
/// A zero shunt admittance is accepted for the short-line model only, and then
/// gamma and Zc are left empty.
inline LineParameters derive_line_constants(cplx z1, cplx y1, double length,
                                            LineModel model = LineModel::long_line)
{
    detail::require(std::isfinite(length) && length > 0.0, "line length must be positive");
    detail::require(z1 != cplx{}, "series impedance z1 must be non-zero");
    detail::require(z1.real() >= 0.0, "series resistance must be non-negative");

    LineParameters p{z1, y1, length, std::nullopt, std::nullopt};
    if (y1 == cplx{}) {
        detail::require(model == LineModel::short_line,
                        "shunt admittance y1 = 0 is only valid for the short-line model");
        return p;
    }
    p.gamma = principal_sqrt(z1 * y1);
    p.zc = principal_sqrt(z1 / y1);
    return p;
}

/// PMU clock error and its phase-angle equivalent at the nominal frequency.
class TsaOffset {
public:
    static TsaOffset from_time(double dt, double f0)
    {
        detail::require(f0 > 0.0, "nominal frequency must be positive");
        return TsaOffset(dt, 360.0 * f0 * dt, f0);
    }

    static TsaOffset from_phase_deg(double dtheta_deg, double f0)
    {
        detail::require(f0 > 0.0, "nominal frequency must be positive");
        return TsaOffset(dtheta_deg / (360.0 * f0), dtheta_deg, f0);
    }

    double dt() const { return dt_; }
    double dtheta_deg() const { return dtheta_; }
    double f0() const { return f0_; }

private:
    TsaOffset(double dt, double dtheta, double f0) : dt_(dt), dtheta_(dtheta), f0_(f0) {}

    double dt_;
    double dtheta_;
    double f0_;
};

/// Phase error (degrees) produced by a clock error dt at nominal frequency f0.
inline double time_offset_to_phase(double dt, double f0)
{
    detail::require(f0 > 0.0, "nominal frequency must be positive");
    return 360.0 * f0 * dt;
}

/// Synchronized phasors at both terminals of a line. Both currents are
/// measured flowing into the line.
struct TwoEndMeasurements {
    Phasor vs;
    Phasor is;
    Phasor vr;
    Phasor ir;
    double timestamp = 0.0;
};

enum class LineEnd { sending, receiving };

/// Rotates every phasor reported by the PMU at `end` by the offset's phase error.
inline TwoEndMeasurements apply_tsa(const TwoEndMeasurements& m, LineEnd end, const TsaOffset& off)
{
    TwoEndMeasurements out = m;
    const double angle = off.dtheta_deg();
    if (end == LineEnd::sending) {
        out.vs = m.vs.rotated_deg(angle);
        out.is = m.is.rotated_deg(angle);
    } else {
        out.vr = m.vr.rotated_deg(angle);
        out.ir = m.ir.rotated_deg(angle);
    }
    return out;
}

} // namespace tsagrid

#endif // TSAGRID_PHASOR_HPP
