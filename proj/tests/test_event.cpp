#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tsagrid/event_location.hpp"

using namespace tsagrid;

namespace {

const std::vector<MmrPosition> square{{"a", 0, 0}, {"b", 400, 0}, {"c", 0, 400}, {"d", 400, 400}};
const EventPoint demo_event{120.0, 160.0, 1.0};

double displacement(const EventSolution& s, const EventPoint& e) { return std::hypot(s.x_e - e.x, s.y_e - e.y); }

} // namespace

TEST(Arrivals, CollocatedEvent)
{
    const auto r = synthesize_arrivals({400.0, 0.0, 2.5}, square, 500.0, 0.0, 1);
    EXPECT_DOUBLE_EQ(r[1].t_arrival, 2.5);
}

TEST(Arrivals, CenterIsSymmetric)
{
    const auto r = synthesize_arrivals({200.0, 200.0, 0.0}, square, 500.0, 0.0, 1);
    for (const auto& x : r) {
        EXPECT_DOUBLE_EQ(x.t_arrival, r[0].t_arrival);
    }
}

TEST(Arrivals, SpeedScaling)
{
    const auto slow = synthesize_arrivals(demo_event, square, 500.0, 0.0, 1);
    const auto fast = synthesize_arrivals(demo_event, square, 1000.0, 0.0, 1);
    for (std::size_t i = 0; i < slow.size(); ++i) {
        EXPECT_NEAR(fast[i].t_arrival - 1.0, (slow[i].t_arrival - 1.0) / 2.0, 1e-15);
    }
}

TEST(Arrivals, SeededNoise)
{
    const auto a = synthesize_arrivals(demo_event, square, 500.0, 1e-3, 42);
    const auto b = synthesize_arrivals(demo_event, square, 500.0, 1e-3, 42);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].t_arrival, b[i].t_arrival);
    }
    EXPECT_THROW(synthesize_arrivals(demo_event, std::span(square).first(3), 500.0, 0.0, 1), InvalidArgument);
    EXPECT_THROW(synthesize_arrivals(demo_event, square, 0.0, 0.0, 1), InvalidArgument);
}

TEST(Attack, IdentityAndInverse)
{
    const auto r = synthesize_arrivals(demo_event, square, 500.0, 0.0, 1);
    const auto same = apply_timestamp_attack(r, "b", 0.0);
    const auto round = apply_timestamp_attack(apply_timestamp_attack(r, "b", 0.1), "b", -0.1);
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_EQ(same[i].t_arrival, r[i].t_arrival);
        EXPECT_NEAR(round[i].t_arrival, r[i].t_arrival, 1e-15);
    }
    const auto shifted = apply_timestamp_attack(r, "c", 0.2);
    EXPECT_NEAR(shifted[2].t_arrival - r[2].t_arrival, 0.2, 1e-15);
    EXPECT_EQ(shifted[0].t_arrival, r[0].t_arrival);
    EXPECT_THROW(apply_timestamp_attack(r, "zz", 0.1), InvalidArgument);
}

TEST(Locate, NoiselessRecovery)
{
    const auto r = synthesize_arrivals(demo_event, square, 500.0, 0.0, 1);
    const auto s = locate_event(r, 500.0);
    EXPECT_TRUE(s.converged);
    EXPECT_LT(displacement(s, demo_event), 1e-6);
    EXPECT_NEAR(s.t_e, 1.0, 1e-9);
}

TEST(Locate, EqualArrivalsGiveCenter)
{
    std::vector<MmrRecord> r;
    for (const auto& m : square) {
        r.push_back({m.id, m.x, m.y, 3.0});
    }
    const auto s = locate_event(r, 500.0);
    EXPECT_NEAR(s.x_e, 200.0, 1e-6);
    EXPECT_NEAR(s.y_e, 200.0, 1e-6);
}

TEST(Locate, EventOutsideHull)
{
    const std::vector<MmrPosition> m{{"a", -17.3426, 56.2534}, {"b", -316.936, 250.491}, {"c", 376.425, 488.15},
                                     {"d", -217.65, 120.59}};
    const EventPoint e{-89.4346, -66.2223, 0.5};
    const auto s = locate_event(synthesize_arrivals(e, m, 500.0, 0.0, 1), 500.0);
    EXPECT_LT(displacement(s, e), 1e-6);
    EXPECT_NEAR(s.t_e, 0.5, 1e-9);
}

TEST(Locate, RandomGeometries)
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-500.0, 500.0);
    int checked = 0;
    while (checked < 100) {
        std::vector<MmrPosition> m;
        const int n = 4 + checked % 3;
        for (int i = 0; i < n; ++i) {
            m.push_back({"m" + std::to_string(i), u(rng), u(rng)});
        }
        const EventPoint e{0.5 * u(rng), 0.5 * u(rng), 0.3};
        const auto r = synthesize_arrivals(e, m, 500.0, 0.0, 1);
        TdoaProblem prob(r, 500.0);
        if (prob.geometry_conditioning() < 0.05) {
            continue;
        }
        const auto s = locate_event(r, 500.0);
        EXPECT_LT(displacement(s, e), 1e-6);
        EXPECT_LT(s.residual_norm, 1e-12 * prob.scale() * prob.scale() * 1e3);
        EXPECT_TRUE(s.converged);
        EXPECT_LE(s.t_e, r[0].t_arrival + 1e-9);
        ++checked;
    }
}

TEST(Locate, TranslationEquivariance)
{
    const auto r = apply_timestamp_attack(synthesize_arrivals(demo_event, square, 500.0, 0.0, 1), "b", 0.07);
    auto moved = r;
    for (auto& x : moved) {
        x.x += 123.0;
        x.y -= 45.0;
        x.t_arrival += 2.0;
    }
    const auto a = locate_event(r, 500.0);
    const auto b = locate_event(moved, 500.0);
    EXPECT_NEAR(b.x_e - a.x_e, 123.0, 1e-6);
    EXPECT_NEAR(b.y_e - a.y_e, -45.0, 1e-6);
    EXPECT_NEAR(b.t_e - a.t_e, 2.0, 1e-9);
}

TEST(Locate, JacobianMatchesFiniteDifferences)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto r = synthesize_arrivals(demo_event, square, 500.0, 0.0, 1);
    const TdoaProblem prob(r, 500.0);
    for (int k = 0; k < 20; ++k) {
        const Eigen::Vector3d x(u(rng), u(rng), u(rng));
        const Eigen::MatrixXd j = prob.jacobian(x);
        const double h = 1e-6;
        for (int c = 0; c < 3; ++c) {
            Eigen::Vector3d xp = x;
            Eigen::Vector3d xm = x;
            xp(c) += h;
            xm(c) -= h;
            const Eigen::VectorXd fd = (prob.residuals(xp) - prob.residuals(xm)) / (2.0 * h);
            EXPECT_LT((fd - j.col(c)).norm(), 1e-5 * std::max(1.0, j.col(c).norm()));
        }
    }
}

TEST(Locate, CollinearFlagged)
{
    std::vector<MmrRecord> r;
    for (int i = 0; i < 5; ++i) {
        r.push_back({"m" + std::to_string(i), 100.0 * i, 0.0, 1.0 + 0.1 * i});
    }
    EXPECT_TRUE(locate_event(r, 500.0).ill_conditioned);
    EXPECT_FALSE(locate_event(synthesize_arrivals(demo_event, square, 500.0, 0.0, 1), 500.0).ill_conditioned);
}

TEST(Locate, Preconditions)
{
    const auto r = synthesize_arrivals(demo_event, square, 500.0, 0.0, 1);
    EXPECT_THROW(locate_event(std::span(r).first(3), 500.0), InvalidArgument);
    EXPECT_THROW(locate_event(r, -1.0), InvalidArgument);
}

TEST(Locate, StampAttackMatchesOracle)
{
    const auto r = synthesize_arrivals(demo_event, square, 500.0, 0.0, 1);
    for (const char* victim : {"a", "d"}) {
        const auto attacked = apply_timestamp_attack(r, victim, 0.2);
        const auto s = locate_event(attacked, 500.0);
        const auto g = oracle::grid_search(attacked, 500.0, -200.0, 600.0, -200.0, 600.0);
        EXPECT_LE(std::hypot(s.x_e - g.x, s.y_e - g.y), g.cell) << victim;
        EXPECT_GT(displacement(s, demo_event), 0.0);
    }
    const auto far = locate_event(apply_timestamp_attack(r, "d", 0.2), 500.0);
    EXPECT_GT(displacement(far, demo_event), 50.0);
    const auto near = locate_event(apply_timestamp_attack(r, "a", 0.2), 500.0);
    EXPECT_GT(std::abs(displacement(far, demo_event) - displacement(near, demo_event)), 1.0);
}

TEST(Locate, MislocationMonotoneInDelta)
{
    const auto r = synthesize_arrivals(demo_event, square, 500.0, 0.0, 7);
    for (const char* victim : {"a", "b", "c", "d"}) {
        double last = -1.0;
        for (double delta : {0.0, 0.05, 0.1, 0.2, 0.4}) {
            const double d = displacement(locate_event(apply_timestamp_attack(r, victim, delta), 500.0), demo_event);
            EXPECT_GT(d, last) << victim << " " << delta;
            last = d;
        }
    }
}
