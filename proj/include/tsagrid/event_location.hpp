#ifndef TSAGRID_EVENT_LOCATION_HPP
#define TSAGRID_EVENT_LOCATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsagrid/error.hpp"

namespace tsagrid {

/// Arrival record of a disturbance at one recorder. Planar miles, seconds.
struct MmrRecord {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    double t_arrival = 0.0;
};

struct MmrPosition {
    std::string id;
    double x = 0.0;
    double y = 0.0;
};

struct EventPoint {
    double x = 0.0;
    double y = 0.0;
    double t = 0.0;
};

struct EventSolution {
    double x_e = 0.0;
    double y_e = 0.0;
    double t_e = 0.0;
    /// 2-norm of the residual vector, miles^2.
    double residual_norm = 0.0;
    /// Gradient norm of the scaled objective at the returned iterate.
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool ill_conditioned = false;
};

inline constexpr double default_wave_speed = 500.0;

inline std::vector<MmrRecord> synthesize_arrivals(const EventPoint& event, std::span<const MmrPosition> mmrs,
                                                  double v_e, double noise_sigma, std::uint64_t seed)
{
    detail::require(v_e > 0.0 && std::isfinite(v_e), "propagation speed must be positive");
    detail::require(mmrs.size() >= 4, "at least 4 recorders are required");
    detail::require(noise_sigma >= 0.0, "noise sigma must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<MmrRecord> out;
    out.reserve(mmrs.size());
    for (const auto& m : mmrs) {
        detail::require(std::isfinite(m.x) && std::isfinite(m.y), "recorder coordinates must be finite");
        double t = event.t + std::hypot(m.x - event.x, m.y - event.y) / v_e;
        if (noise_sigma > 0.0) {
            t += noise_sigma * noise(rng);
        }
        out.push_back({m.id, m.x, m.y, t});
    }
    return out;
}

inline std::vector<MmrRecord> apply_timestamp_attack(std::span<const MmrRecord> records, const std::string& victim_id,
                                                     double delta)
{
    std::vector<MmrRecord> out(records.begin(), records.end());
    auto it = std::find_if(out.begin(), out.end(), [&](const MmrRecord& r) { return r.id == victim_id; });
    if (it == out.end()) {
        throw InvalidArgument("unknown recorder id: " + victim_id);
    }
    it->t_arrival += delta;
    return out;
}

/// Residuals r_i = (x_i - x)^2 + (y_i - y)^2 - v^2 (t_i - t)^2 in scaled
/// variables. Positions are divided by the bounding-box diagonal, times are
/// referenced to the earliest arrival and divided by diagonal / v_e.
class TdoaProblem {
public:
    TdoaProblem(std::span<const MmrRecord> records, double v_e) : v_e_(v_e)
    {
        detail::require(v_e > 0.0 && std::isfinite(v_e), "propagation speed must be positive");
        detail::require(records.size() >= 4, "at least 4 recorders are required");
        double xmin = std::numeric_limits<double>::infinity();
        double xmax = -xmin;
        double ymin = xmin;
        double ymax = -xmin;
        t0_ = xmin;
        for (const auto& r : records) {
            detail::require(std::isfinite(r.x) && std::isfinite(r.y) && std::isfinite(r.t_arrival),
                            "recorder " + r.id + " has non-finite fields");
            xmin = std::min(xmin, r.x);
            xmax = std::max(xmax, r.x);
            ymin = std::min(ymin, r.y);
            ymax = std::max(ymax, r.y);
            t0_ = std::min(t0_, r.t_arrival);
        }
        scale_ = std::hypot(xmax - xmin, ymax - ymin);
        detail::require(scale_ > 0.0, "recorders must not all coincide");
        x0_ = xmin;
        y0_ = ymin;
        const auto n = static_cast<Eigen::Index>(records.size());
        p_.resize(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = records[static_cast<std::size_t>(i)];
            p_(i, 0) = (r.x - x0_) / scale_;
            p_(i, 1) = (r.y - y0_) / scale_;
            p_(i, 2) = (r.t_arrival - t0_) * v_e_ / scale_;
        }
    }

    Eigen::Index size() const { return p_.rows(); }
    double scale() const { return scale_; }

    Eigen::Vector3d to_scaled(const EventPoint& e) const
    {
        return {(e.x - x0_) / scale_, (e.y - y0_) / scale_, (e.t - t0_) * v_e_ / scale_};
    }

    EventPoint from_scaled(const Eigen::Vector3d& u) const
    {
        return {x0_ + u(0) * scale_, y0_ + u(1) * scale_, t0_ + u(2) * scale_ / v_e_};
    }

    Eigen::VectorXd residuals(const Eigen::Vector3d& u) const
    {
        Eigen::VectorXd r(size());
        for (Eigen::Index i = 0; i < size(); ++i) {
            const double dx = p_(i, 0) - u(0);
            const double dy = p_(i, 1) - u(1);
            const double dt = p_(i, 2) - u(2);
            r(i) = dx * dx + dy * dy - dt * dt;
        }
        return r;
    }

    Eigen::MatrixXd jacobian(const Eigen::Vector3d& u) const
    {
        Eigen::MatrixXd j(size(), 3);
        for (Eigen::Index i = 0; i < size(); ++i) {
            j(i, 0) = -2.0 * (p_(i, 0) - u(0));
            j(i, 1) = -2.0 * (p_(i, 1) - u(1));
            j(i, 2) = 2.0 * (p_(i, 2) - u(2));
        }
        return j;
    }

    /// Residual norm in miles^2.
    double physical_residual_norm(const Eigen::Vector3d& u) const
    {
        return residuals(u).norm() * scale_ * scale_;
    }

    /// Least-squares solution of the residual differences r_i - r_0, which are
    /// linear in (x, y, t). Empty when that system is rank deficient.
    std::optional<Eigen::Vector3d> linear_estimate() const
    {
        const Eigen::Index n = size() - 1;
        Eigen::MatrixXd a(n, 3);
        Eigen::VectorXd b(n);
        const auto q = [&](Eigen::Index i) {
            return p_(i, 0) * p_(i, 0) + p_(i, 1) * p_(i, 1) - p_(i, 2) * p_(i, 2);
        };
        for (Eigen::Index i = 1; i <= n; ++i) {
            a(i - 1, 0) = 2.0 * (p_(i, 0) - p_(0, 0));
            a(i - 1, 1) = 2.0 * (p_(i, 1) - p_(0, 1));
            a(i - 1, 2) = -2.0 * (p_(i, 2) - p_(0, 2));
            b(i - 1) = q(i) - q(0);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        qr.setThreshold(1e-10);
        if (qr.rank() < 3) {
            return std::nullopt;
        }
        Eigen::Vector3d u = qr.solve(b);
        if (!u.allFinite()) {
            return std::nullopt;
        }
        return u;
    }

    /// Ratio of smallest to largest singular value of the centered positions.
    double geometry_conditioning() const
    {
        Eigen::MatrixXd c = p_.leftCols(2);
        c.rowwise() -= c.colwise().mean();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(c);
        const auto& s = svd.singularValues();
        return s(0) > 0.0 ? s(1) / s(0) : 0.0;
    }

private:
    double v_e_;
    double scale_ = 1.0;
    double x0_ = 0.0;
    double y0_ = 0.0;
    double t0_ = 0.0;
    Eigen::MatrixXd p_;
};

struct LocateOptions {
    std::optional<EventPoint> init;
    /// Also start from every recorder position and from the linearized
    /// solution, keeping the lowest-cost result.
    bool multi_start = true;
    int max_iterations = 50;
    double step_tolerance = 1e-9;
    double gradient_tolerance = 1e-10;
    double collinear_threshold = 1e-6;
};

namespace detail {

struct LmResult {
    Eigen::Vector3d u;
    double cost = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Gradient with the time component dropped while the causality bound is
/// active and the objective decreases past it.
inline Eigen::Vector3d projected_gradient(const Eigen::Vector3d& u, const Eigen::Vector3d& g)
{
    Eigen::Vector3d pg = g;
    if (u(2) >= 0.0 && g(2) < 0.0) {
        pg(2) = 0.0;
    }
    return pg;
}

/// Levenberg iteration on the scaled problem with t_e bounded by the earliest arrival.
inline LmResult levenberg(const TdoaProblem& prob, Eigen::Vector3d u, const LocateOptions& opt)
{
    u(2) = std::min(u(2), 0.0);
    Eigen::VectorXd r = prob.residuals(u);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    Eigen::Vector3d g = prob.jacobian(u).transpose() * r;

    LmResult out;
    int it = 0;
    while (it < opt.max_iterations) {
        ++it;
        if (projected_gradient(u, g).norm() <= opt.gradient_tolerance * std::max(1.0, std::sqrt(cost))) {
            out.converged = true;
            break;
        }
        const Eigen::MatrixXd j = prob.jacobian(u);
        const Eigen::Matrix3d h = j.transpose() * j;
        const Eigen::Vector3d step = (h + lambda * Eigen::Matrix3d::Identity()).ldlt().solve(-g);
        if (!step.allFinite()) {
            break;
        }
        Eigen::Vector3d trial = u + step;
        trial(2) = std::min(trial(2), 0.0);
        const Eigen::VectorXd r_trial = prob.residuals(trial);
        const double cost_trial = r_trial.squaredNorm();
        if (cost_trial <= cost) {
            const double moved = (trial - u).norm();
            u = trial;
            r = r_trial;
            cost = cost_trial;
            g = prob.jacobian(u).transpose() * r;
            lambda = std::max(lambda / 10.0, 1e-15);
            if (moved < opt.step_tolerance) {
                out.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e15) {
                break;
            }
        }
    }
    out.u = u;
    out.cost = cost;
    out.gradient_norm = projected_gradient(u, g).norm();
    out.iterations = it;
    return out;
}

} // namespace detail

/// Damped Gauss-Newton (Levenberg) solution of the squared-range TDOA system,
/// restricted to event times no later than the earliest arrival.
inline EventSolution locate_event(std::span<const MmrRecord> records, double v_e, const LocateOptions& opt = {})
{
    const TdoaProblem prob(records, v_e);

    EventSolution sol;
    sol.ill_conditioned = prob.geometry_conditioning() < opt.collinear_threshold;

    auto by_time = [](const MmrRecord& a, const MmrRecord& b) { return a.t_arrival < b.t_arrival; };
    const auto first = std::min_element(records.begin(), records.end(), by_time);
    const auto last = std::max_element(records.begin(), records.end(), by_time);
    // Strictly before the earliest arrival: at t = min t_i the time gradient vanishes when all stamps agree.
    const double t_init =
        first->t_arrival - 0.1 * (last->t_arrival - first->t_arrival) - 0.25 * prob.scale() / v_e;

    std::vector<EventPoint> starts;
    starts.push_back(opt.init ? *opt.init : EventPoint{first->x, first->y, t_init});
    if (opt.multi_start) {
        for (const auto& r : records) {
            starts.push_back({r.x, r.y, t_init});
        }
    }

    std::vector<Eigen::Vector3d> scaled;
    for (const auto& s : starts) {
        scaled.push_back(prob.to_scaled(s));
    }
    if (opt.multi_start) {
        if (auto lin = prob.linear_estimate()) {
            scaled.push_back(*lin);
        }
    }

    detail::LmResult best;
    best.u.setZero();
    best.cost = std::numeric_limits<double>::infinity();
    for (const auto& u0 : scaled) {
        detail::LmResult res = detail::levenberg(prob, u0, opt);
        if (res.cost < best.cost) {
            best = res;
        }
    }

    const EventPoint e = prob.from_scaled(best.u);
    sol.x_e = e.x;
    sol.y_e = e.y;
    sol.t_e = e.t;
    sol.iterations = best.iterations;
    sol.converged = best.converged;
    sol.residual_norm = prob.physical_residual_norm(best.u);
    sol.gradient_norm = best.gradient_norm;
    return sol;
}

} // namespace tsagrid

#endif // TSAGRID_EVENT_LOCATION_HPP
