#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nbcoll/nbody.hpp"
#include "nbcoll/odeint.hpp"
#include "test_util.hpp"

using namespace nbcoll;
using testutil::rel_err;

namespace {

State circular_pair() {
    State s;
    s.q = {{-1.0, 0.0}, {1.0, 0.0}};
    s.qdot = {{0.0, -0.5}, {0.0, 0.5}};
    return s;
}

State resting_pair() {
    State s;
    s.q = {{-1.0, 0.0}, {1.0, 0.0}};
    s.qdot.assign(2, Vec2{});
    return s;
}

double energy(const State& s, const MassSystem& m) { return kinetic_energy(s, m) - potential_energy(s, m); }

}  // namespace

TEST_CASE("exponential decay") {
    Rhs<double> rhs = [](const DoubleDouble&, const Vec<double>& y, Vec<double>& d) { d = {-y[0]}; };
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-13;
    auto tr = integrate<double>(rhs, 0.0, {1.0}, 1.0, cfg);
    CHECK(tr.reason == StopReason::reached_end);
    CHECK(std::abs(tr.y.back()[0] - std::exp(-1.0)) < 1e-12);
    CHECK(tr.t.back() == DoubleDouble(1.0));

    // backward
    auto back = integrate<double>(rhs, 1.0, {std::exp(-1.0)}, 0.0, cfg);
    CHECK(std::abs(back.y.back()[0] - 1.0) < 1e-12);

    Rhs<DoubleDouble> rdd = [](const DoubleDouble&, const Vec<DoubleDouble>& y, Vec<DoubleDouble>& d) { d = {-y[0]}; };
    cfg.rel_tol = 1e-20;
    auto dd = integrate<DoubleDouble>(rdd, 0.0, {DoubleDouble(1.0)}, 1.0, cfg);
    // e^{-1} to ~32 digits
    DoubleDouble e1(0.36787944117144233, -1.2428753672788363e-17);
    CHECK(std::abs(to_double(dd.y.back()[0] - e1)) < 1e-19);
}

TEST_CASE("config validation") {
    IntegratorConfig c;
    c.rel_tol = 0.5;
    CHECK_THROWS(c.validate());
    c = {};
    c.abs_tol = 0.0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("dense output: reproduces samples, fifth order, refinement oracle") {
    // harmonic oscillator with known solution
    Rhs<double> rhs = [](const DoubleDouble&, const Vec<double>& y, Vec<double>& d) { d = {y[1], -y[0]}; };
    auto run = [&](double h) {
        IntegratorConfig cfg;
        cfg.rel_tol = 1e-2;
        cfg.abs_tol = 1e-2;
        cfg.initial_step = h;
        cfg.max_step = h;
        return integrate<double>(rhs, 0.0, {1.0, 0.0}, 2.0, cfg);
    };
    double errs[2];
    int idx = 0;
    for (double h : {0.2, 0.1}) {
        auto tr = run(h);
        REQUIRE(tr.has_dense());
        double worst = 0.0;
        for (size_t i = 0; i + 1 < tr.size(); ++i) {
            for (double th : {0.17, 0.5, 0.83}) {
                double t = to_double(tr.t[i]) + th * to_double(tr.t[i + 1] - tr.t[i]);
                auto y = tr.eval(t);
                // compare against the step-local exact flow from the left sample
                double dt = t - to_double(tr.t[i]);
                double ex = tr.y[i][0] * std::cos(dt) + tr.y[i][1] * std::sin(dt);
                worst = std::max(worst, std::abs(y[0] - ex));
            }
            auto ys = tr.eval(tr.t[i]);
            CHECK(std::abs(ys[0] - tr.y[i][0]) < 1e-15);
        }
        errs[idx++] = worst;
    }
    double order = std::log2(errs[0] / errs[1]);
    CHECK(order > 5.5);  // local dense error O(h^6)

    // refinement oracle: adaptive run at 1e-10 vs tiny-step reference
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-10;
    cfg.abs_tol = 1e-10;
    auto tr = integrate<double>(rhs, 0.0, {1.0, 0.0}, 5.0, cfg);
    double worst = 0.0;
    for (double t = 0.013; t < 5.0; t += 0.0371) {
        auto y = tr.eval(t);
        auto dy = tr.eval_derivative(t);
        size_t i = tr.locate(t);
        IntegratorConfig fine;
        fine.rel_tol = 1e-14;
        fine.abs_tol = 1e-14;
        auto ref = integrate<double>(rhs, tr.t[i], tr.y[i], t, fine);
        worst = std::max(worst, std::abs(y[0] - ref.y.back()[0]));
        CHECK(std::abs(dy[0] - ref.y.back()[1]) < 1e-8);
    }
    CHECK(worst < 10 * 1e-10);
}

TEST_CASE("event callback and step underflow") {
    Rhs<double> rhs = [](const DoubleDouble&, const Vec<double>& y, Vec<double>& d) { d = {1.0 + 0 * y[0]}; };
    IntegratorConfig cfg;
    auto tr = integrate<double>(rhs, 0.0, {0.0}, 10.0, cfg, [](Trajectory<double>& t) {
        if (t.y.back()[0] > 2.0) {
            t.events.push_back({t.t.back(), "crossed"});
            return true;
        }
        return false;
    });
    CHECK(tr.reason == StopReason::event);
    CHECK(tr.events.size() == 1);

    // finite-time blow-up y' = y^2 from y(0)=1 at t=1
    Rhs<double> blow = [](const DoubleDouble&, const Vec<double>& y, Vec<double>& d) { d = {y[0] * y[0]}; };
    auto bt = integrate<double>(blow, 0.0, {1.0}, 2.0, cfg);
    CHECK(bt.reason != StopReason::reached_end);
    CHECK(to_double(bt.t.back()) < 1.0);
    CHECK(to_double(bt.t.back()) > 0.999);
}

TEST_CASE("circular Kepler pair: 100 periods") {
    MassSystem m({1.0, 1.0});
    auto part = ClusterPartition::with_focus(2, {0, 1});
    NBodyConfig cfg;
    cfg.integrator.rel_tol = 1e-12;
    cfg.integrator.dense = false;
    double period = 4.0 * std::numbers::pi;
    auto s0 = circular_pair();
    auto tr = integrate_nbody(s0, m, part, 100 * period, cfg);
    REQUIRE(tr.raw().reason == StopReason::reached_end);
    State end = tr.state(tr.size() - 1);
    double E0 = energy(s0, m), E1 = energy(end, m);
    CHECK(rel_err(E0, E1) < 1e-9);
    CHECK(rel_err(total_angular_momentum(s0, m), total_angular_momentum(end, m)) < 1e-9);
    CHECK(norm(end.position(0) - s0.position(0)) < 1e-6);
}

TEST_CASE("reversibility") {
    MassSystem m({1.0, 0.5, 0.8});
    State s0;
    s0.q = {{0.0, 0.0}, {1.0, 0.2}, {-0.4, 1.1}};
    s0.qdot = {{0.1, -0.2}, {0.0, 0.6}, {-0.3, 0.1}};
    auto part = ClusterPartition::with_focus(3, {0, 1});
    NBodyConfig cfg;
    cfg.integrator.rel_tol = 1e-12;
    cfg.integrator.dense = false;
    auto fw = integrate_nbody(s0, m, part, 3.0, cfg);
    State mid = fw.state(fw.size() - 1);
    State rev = mid.rebased(s0.origin);
    for (auto& v : rev.qdot) v = -v;
    rev.t = 0.0;
    auto bw = integrate_nbody(rev, m, part, 3.0, cfg);
    State back = bw.state(bw.size() - 1).rebased(s0.origin);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, norm(back.q[i] - s0.q[i]));
    CHECK(worst < 100 * 1e-12 * 10);  // positions O(1); 100x the tolerance over the accumulated run
}

TEST_CASE("double-double runs agree with double runs") {
    MassSystem m({1.0, 0.5, 0.8});
    State s0;
    s0.q = {{0.0, 0.0}, {1.0, 0.2}, {-0.4, 1.1}};
    s0.qdot = {{0.1, -0.2}, {0.0, 0.6}, {-0.3, 0.1}};
    auto part = ClusterPartition::with_focus(3, {0, 1});
    NBodyConfig a, b;
    a.integrator.rel_tol = 1e-12;
    b = a;
    b.precision = Precision::DoubleDouble;
    auto ta = integrate_nbody(s0, m, part, 1.0, a);
    auto tb = integrate_nbody(s0, m, part, 1.0, b);
    State ea = ta.state(ta.size() - 1), eb = tb.state(tb.size() - 1);
    for (int i = 0; i < 3; ++i) CHECK(norm(ea.position(i) - eb.position(i)) < 1e-9);
    // dense kinematics reproduce the force law mid-step
    auto ks = tb.kinematic_at(0.537);
    auto acc = accelerations(ks.state, m);
    for (int i = 0; i < 3; ++i) CHECK(norm(ks.qddot[i] - acc[i]) < 1e-8 * (1 + norm(acc[i])));
}

TEST_CASE("Kepler collapse from rest") {
    MassSystem m({1.0, 1.0});
    auto part = ClusterPartition::with_focus(2, {0, 1});
    CollisionConfig cfg;
    cfg.run.integrator.rel_tol = 1e-13;
    cfg.stop_fraction = 1e-8;
    auto run = integrate_to_collision(resting_pair(), m, part, cfg);
    CHECK(run.outcome == CollisionOutcome::collision);
    CHECK(run.terminal_ratio < 1e-8);
    // free fall of the relative coordinate from rest at separation 2 with total mass 2
    double T = std::numbers::pi / std::sqrt(2.0);
    double t_end = to_double(run.traj.time(run.traj.size() - 1));
    CHECK(std::abs(t_end - T) < 1e-10);

    // accepted steps shrink like (T - t) over the last four decades
    const auto& tt = run.traj.raw().t;
    double lo = 1e300, hi = 0;
    for (size_t i = 1; i < tt.size(); ++i) {
        double rem = to_double(DoubleDouble(T) - tt[i - 1]);
        double h = to_double(tt[i] - tt[i - 1]);
        if (rem < 1e-4 * T && rem > 1e-8 * T * 0 + 1e-11) {
            lo = std::min(lo, h / rem);
            hi = std::max(hi, h / rem);
        }
    }
    CHECK(hi / lo < 10.0);
}

TEST_CASE("transverse velocity prevents collision") {
    MassSystem m({1.0, 1.0});
    auto part = ClusterPartition::with_focus(2, {0, 1});
    State s = resting_pair();
    s.qdot = {{0.0, -1e-3}, {0.0, 1e-3}};
    CollisionConfig cfg;
    cfg.t_max = 5.0;
    auto run = integrate_to_collision(s, m, part, cfg);
    CHECK(run.outcome == CollisionOutcome::no_collision);
    CHECK(run.terminal_ratio > 1e-8);
}

TEST_CASE("Lagrange homothetic collapse plateaus") {
    MassSystem m({1.0, 1.0, 1.0});
    auto part = ClusterPartition::with_focus(3, {0, 1, 2});
    State s;
    double h = std::sqrt(3.0) / 2.0;
    s.q = {{-0.5, -h / 3}, {0.5, -h / 3}, {0.0, 2 * h / 3}};
    s.qdot.assign(3, Vec2{});
    CollisionConfig cfg;
    cfg.run.integrator.rel_tol = 1e-13;
    auto run = integrate_to_collision(s, m, part, cfg);
    REQUIRE(run.outcome == CollisionOutcome::collision);
    // distance to the center obeys rho'' = -1/(sqrt(3) rho^2); free fall from rho0 = 1/sqrt(3)
    double T = std::numbers::pi / 2.0 * std::sqrt(1.0 / 6.0);
    size_t n = run.traj.size();
    std::vector<double> plateau;
    for (size_t i = 0; i < n; ++i) {
        double rem = to_double(DoubleDouble(T) - run.traj.time(i));
        if (rem < 1e-7 && rem > 1e-10) plateau.push_back(run.traj.r_G(i) / std::pow(rem, 2.0 / 3.0));
    }
    REQUIRE(plateau.size() > 20);
    auto [mn, mx] = std::minmax_element(plateau.begin(), plateau.end());
    CHECK((*mx - *mn) / *mx < 1e-4);
}

TEST_CASE("shooting: symmetric family has parameter zero; bracket contract") {
    // binary on the x axis falling together, third body on the bisector;
    // the parameter is a transverse relative velocity
    MassSystem m({1.0, 1.0, 0.5});
    auto part = ClusterPartition::with_focus(3, {0, 1});
    LinearFamily fam;
    fam.base.q = {{-0.5, 0.0}, {0.5, 0.0}, {0.0, 2.5}};
    fam.base.qdot = {{0.2, 0.0}, {-0.2, 0.0}, {0.0, 0.0}};
    fam.direction.q.assign(3, Vec2{});
    fam.direction.qdot = {{0.0, -0.5}, {0.0, 0.5}, {0.0, 0.0}};
    ShootConfig cfg;
    cfg.run.run.precision = Precision::DoubleDouble;
    cfg.run.run.integrator.rel_tol = 1e-13;
    cfg.param_tol = 1e-20;
    auto res = shoot_to_collision(fam, -0.1, 0.13, m, part, cfg);
    CHECK(std::abs(to_double(res.param)) < 1e-18);
    CHECK(res.run.outcome == CollisionOutcome::collision);
    CHECK(res.run.terminal_ratio < 1e-10);

    CHECK_THROWS_AS(shoot_to_collision(fam, 0.05, 0.1, m, part, cfg), std::runtime_error);
}
