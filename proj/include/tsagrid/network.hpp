#ifndef TSAGRID_NETWORK_HPP
#define TSAGRID_NETWORK_HPP

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsagrid/error.hpp"
#include "tsagrid/phasor.hpp"

namespace tsagrid {

/// Equivalent pi section of a line segment: series impedance between the
/// terminals and half of the shunt admittance at each terminal.
struct PiSection {
    cplx series;
    cplx half_shunt;
};

/// Pi equivalent of a segment of `length` miles for the requested model.
/// The long model uses the exact distributed-line equivalent.
inline PiSection segment_pi(const LineParameters& p, LineModel model, double length)
{
    switch (model) {
    case LineModel::short_line:
        return {p.z1 * length, cplx{}};
    case LineModel::medium:
        return {p.z1 * length, p.y1 * length / 2.0};
    case LineModel::long_line: {
        detail::require(p.gamma && p.zc, "long-line model requires gamma and Zc");
        const cplx gl = *p.gamma * length;
        return {*p.zc * std::sinh(gl), std::tanh(gl / 2.0) / *p.zc};
    }
    }
    throw InvalidArgument("unknown line model");
}

/// Sending-end current of a pi section given both terminal voltages.
inline cplx pi_current(const PiSection& pi, cplx v_from, cplx v_to)
{
    return v_from * pi.half_shunt + (v_from - v_to) / pi.series;
}

/// Phasor-domain modified nodal analysis for small networks. Node indices are
/// returned by add_node(); `ground` is the reference.
class Network {
public:
    static constexpr int ground = -1;

    int add_node()
    {
        return static_cast<int>(node_count_++);
    }

    void add_admittance(int a, int b, cplx y)
    {
        admittances_.push_back({a, b, y});
    }

    /// Impedance branch. A zero impedance becomes an ideal short.
    void add_impedance(int a, int b, cplx z)
    {
        if (z == cplx{}) {
            constraints_.push_back({a, b, cplx{}});
        } else {
            add_admittance(a, b, 1.0 / z);
        }
    }

    void add_pi(int a, int b, const PiSection& pi)
    {
        add_impedance(a, b, pi.series);
        if (pi.half_shunt != cplx{}) {
            add_admittance(a, ground, pi.half_shunt);
            add_admittance(b, ground, pi.half_shunt);
        }
    }

    /// Voltage source `e` behind impedance `z` from ground to node `a`.
    /// A zero impedance makes it an ideal source.
    void add_source(int a, cplx e, cplx z)
    {
        if (z == cplx{}) {
            constraints_.push_back({a, ground, e});
        } else {
            const cplx y = 1.0 / z;
            add_admittance(a, ground, y);
            injections_.push_back({a, e * y});
        }
    }

    /// Constant current injected into node `a`.
    void add_injection(int a, cplx current)
    {
        injections_.push_back({a, current});
    }

    std::size_t node_count() const { return node_count_; }

    /// Solves for all node voltages. Throws SingularSystem when the network
    /// has no unique solution.
    std::vector<cplx> solve() const
    {
        const auto n = static_cast<Eigen::Index>(node_count_);
        const auto m = static_cast<Eigen::Index>(constraints_.size());
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n + m, n + m);
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n + m);

        for (const auto& br : admittances_) {
            if (br.a != ground) {
                a(br.a, br.a) += br.y;
            }
            if (br.b != ground) {
                a(br.b, br.b) += br.y;
            }
            if (br.a != ground && br.b != ground) {
                a(br.a, br.b) -= br.y;
                a(br.b, br.a) -= br.y;
            }
        }
        for (const auto& inj : injections_) {
            if (inj.node != ground) {
                rhs(inj.node) += inj.current;
            }
        }
        // Each constraint adds a branch-current unknown and the row V_a - V_b = e.
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto& c = constraints_[static_cast<std::size_t>(k)];
            const Eigen::Index row = n + k;
            if (c.a != ground) {
                a(c.a, row) += 1.0;
                a(row, c.a) += 1.0;
            }
            if (c.b != ground) {
                a(c.b, row) -= 1.0;
                a(row, c.b) -= 1.0;
            }
            rhs(row) = c.e;
        }

        Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
        if (!lu.isInvertible()) {
            throw SingularSystem("network matrix is singular (rank " + std::to_string(lu.rank()) +
                                 " of " + std::to_string(n + m) + ")");
        }
        const Eigen::VectorXcd x = lu.solve(rhs);
        return std::vector<cplx>(x.data(), x.data() + n);
    }

private:
    struct Admittance {
        int a;
        int b;
        cplx y;
    };
    struct Constraint {
        int a;
        int b;
        cplx e;
    };
    struct Injection {
        int node;
        cplx current;
    };

    std::size_t node_count_ = 0;
    std::vector<Admittance> admittances_;
    std::vector<Constraint> constraints_;
    std::vector<Injection> injections_;
};

} // namespace tsagrid

#endif // TSAGRID_NETWORK_HPP
