#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nbcoll/asymptotics.hpp"
#include "nbcoll/nbody.hpp"
#include "nbcoll/presets.hpp"

using namespace nbcoll;

namespace {

std::vector<double> logspace(double lo, double hi, int n) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = lo * std::pow(hi / lo, double(i) / (n - 1));
    return x;
}

CollisionRun preset_run(const std::string& name, double stop = 1e-10) {
    Scenario sc = make_preset(name);
    CollisionConfig cfg;
    cfg.run.precision = Precision::DoubleDouble;
    cfg.run.integrator.rel_tol = 1e-16;
    cfg.run.with_tau = true;
    cfg.stop_fraction = stop;
    return integrate_family_to_collision(sc.family, sc.param, sc.masses, sc.partition, cfg);
}

}  // namespace

TEST_CASE("fit_power: exact, constant, noisy, too few points") {
    auto x = logspace(1e-8, 1e-4, 60);
    std::vector<double> y(x.size()), c(x.size(), 7.0);
    for (size_t i = 0; i < x.size(); ++i) y[i] = 3.0 * std::pow(x[i], 4.0 / 3.0);
    auto f = fit_power_x(x, y, 1e-8, 1e-4);
    CHECK(f.exponent == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(f.constant == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.n_points == 60);

    auto fc = fit_power_x(x, c, 1e-8, 1e-4);
    CHECK(std::abs(fc.exponent) < 1e-12);
    CHECK(fc.constant == doctest::Approx(7.0).epsilon(1e-12));

    // the time-based overload
    std::vector<DoubleDouble> t;
    for (double xi : x) t.push_back(DoubleDouble(5.0) - DoubleDouble(xi));
    auto ft = fit_power(t, y, DoubleDouble(5.0), 1e-8, 1e-4);
    CHECK(ft.exponent == doctest::Approx(4.0 / 3.0).epsilon(1e-9));

    double worst = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 0.01);
        std::vector<double> yn(x.size());
        for (size_t i = 0; i < x.size(); ++i) yn[i] = y[i] * (1.0 + nd(rng));
        worst = std::max(worst, std::abs(fit_power_x(x, yn, 1e-8, 1e-4).exponent - 4.0 / 3.0));
    }
    CHECK(worst < 0.02);

    CHECK_THROWS_AS(fit_power_x(x, y, 1e-5, 1.5e-5), InsufficientWindow);
}

TEST_CASE("fit_exponential: synthetic decay and exact zero") {
    std::vector<double> tau, y, z;
    for (int i = 0; i <= 200; ++i) {
        tau.push_back(0.1 * i);
        y.push_back(0.7 * std::exp(-2.0 * tau.back()));
        z.push_back(0.0);
    }
    auto f = fit_exponential(tau, y);
    CHECK(std::abs(f.E - 2.0) < 1e-6);
    CHECK(f.C == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(fit_exponential(tau, z).exact_zero);
}

TEST_CASE("estimate_T_series: exact model") {
    std::vector<DoubleDouble> t;
    std::vector<double> r;
    for (double x : logspace(1.0, 1e-12, 400)) {
        t.push_back(DoubleDouble(5.0) - DoubleDouble(x));
        r.push_back(2.0 * std::pow(x, 2.0 / 3.0));
    }
    auto e = estimate_T_series(t, r);
    CHECK(std::abs(to_double(e.T - DoubleDouble(5.0))) < 1e-10);
    CHECK(std::abs(to_double(e.T_linear - DoubleDouble(5.0))) < 1e-10);
    CHECK(e.rate == doctest::Approx(std::pow(2.0, 1.5)).epsilon(1e-8));

    // growing series is not a collapse
    std::vector<double> up(r.rbegin(), r.rend());
    CHECK_THROWS_AS(estimate_T_series(t, up), InsufficientWindow);
}

TEST_CASE("Kepler collapse: T, L and rate limits") {
    auto run = preset_run("kepler_pair");
    REQUIRE(run.outcome == CollisionOutcome::collision);
    const auto& m = run.traj.masses();
    const auto& part = run.traj.partition();
    auto series = collapse_series(run.traj);
    auto est = estimate_T_L(series.states, m, part);
    const double T_exact = std::numbers::pi / std::sqrt(2.0);
    CHECK(std::abs(to_double(est.T) - T_exact) < 1e-8);
    CHECK(norm(est.L) < 1e-12);

    // a shallower window gives the same collision time
    auto shifted = estimate_T_L(series.states, m, part, 3.0, 1.0);
    CHECK(std::abs(to_double(shifted.T - est.T)) / T_exact < 1e-6);

    RateOptions opt;
    opt.window_lo = 1e-8;
    opt.window_hi = 1e-5;
    auto rep = verify_collision_rates(series, m, part, est.T, est.L, opt);
    const double A = std::pow(9.0, 2.0 / 3.0) / 2.0;
    CHECK(std::abs(rep.A_hat / A - 1.0) < 1e-3);
    REQUIRE(rep.ratio_checks.size() == 5);
    for (const auto& c : rep.ratio_checks) {
        INFO(c.name);
        CHECK(c.max_deviation < 5e-3);
        CHECK(std::abs(c.limit / c.target - 1.0) < 5e-3);
    }
    CHECK(rep.J_fit.exponent == doctest::Approx(4.0 / 3.0).epsilon(1e-3));
    CHECK(rep.U_fit.exponent == doctest::Approx(-2.0 / 3.0).epsilon(1e-3));
    CHECK(rep.K_fit.exponent == doctest::Approx(-2.0 / 3.0).epsilon(1e-3));
    // I0 and J coincide when the limit point is the center of mass
    CHECK(rep.I0_fit.constant == doctest::Approx(rep.J_fit.constant).epsilon(1e-6));
    // circular energy of the relative orbit from rest at separation 2: -1/2
    CHECK(rep.H_G_limit == doctest::Approx(-0.5).epsilon(1e-8));
    CHECK(rep.H_G_tail_oscillation < 1e-8);
    CHECK(rep.mu_bound < 1e-12);
    CHECK(rep.mudot_bound == 0.0);
    CHECK(rep.spin_total == 0.0);
    CHECK(rep.r_tau_slope < 0.0);
    CHECK(rep.E1 <= -rep.r_tau_slope + 1e-12);
    CHECK(rep.E2 >= -rep.r_tau_slope - 1e-12);
    CHECK(std::abs(rep.v_tail / rep.v_target - 1.0) < 1e-2);

    CHECK_THROWS_AS(verify_collision_rates(series, m, part, est.T, est.L, RateOptions{1e-5, 2e-5}),
                    InsufficientWindow);
}

TEST_CASE("Lagrange homothetic: rates, v limit, spin, shape residual") {
    auto run = preset_run("lagrange_homothetic");
    REQUIRE(run.outcome == CollisionOutcome::collision);
    const auto& m = run.traj.masses();
    const auto& part = run.traj.partition();
    auto series = collapse_series(run.traj);
    auto est = estimate_T_L(series.states, m, part);
    const double T_exact = std::numbers::pi / 2.0 * std::sqrt(1.0 / 6.0);
    CHECK(std::abs(to_double(est.T) - T_exact) < 1e-8);

    auto rep = verify_collision_rates(series, m, part, est.T, est.L);
    const double A = 3.0 * std::pow(9.0 / (2.0 * std::sqrt(3.0)), 2.0 / 3.0);
    CHECK(std::abs(rep.A_hat / A - 1.0) < 5e-3);
    CHECK(std::abs(rep.v_tail / rep.v_target - 1.0) < 1e-2);
    CHECK(rep.v_tail_deviation < 1e-2);
    CHECK(rep.spin_total < 1e-10);
    CHECK(rep.cc_residual_tail < 1e-8);
    CHECK(rep.cc_residual_decreasing);

    auto bs = mcgehee_observables(series.states, m, part, est.L, est.T, series.taus, series.mu0);
    auto decay = verify_perturbation_decay(bs);
    CHECK(decay.isolated);
    CHECK(decay.decaying);
    CHECK(decay.r_slope < 0.0);
}

TEST_CASE("shooting binary in a 3-body system: bounds, energy limit, decay chains") {
    Scenario sc = make_preset("binary_in_3body");
    ShootConfig cfg;
    cfg.run.run.precision = Precision::DoubleDouble;
    cfg.run.run.integrator.rel_tol = 1e-16;
    cfg.run.run.with_tau = true;
    cfg.run.stop_fraction = 1e-11;
    auto res = shoot_to_collision(sc.family, sc.bracket_lo, sc.bracket_hi, sc.masses, sc.partition, cfg);
    REQUIRE(res.run.outcome == CollisionOutcome::collision);
    auto series = collapse_series(res.run.traj);
    auto est = estimate_T_L(series.states, sc.masses, sc.partition);
    auto shifted = estimate_T_L(series.states, sc.masses, sc.partition, 3.0, 1.0);
    CHECK(std::abs(to_double(shifted.T - est.T)) / to_double(est.T) < 1e-6);

    auto rep = verify_collision_rates(series, sc.masses, sc.partition, est.T, est.L);
    CHECK(std::abs(rep.J_fit.exponent - 4.0 / 3.0) < 0.01);
    CHECK(std::abs(rep.U_fit.exponent + 2.0 / 3.0) < 0.01);
    CHECK(std::abs(rep.K_fit.exponent + 2.0 / 3.0) < 0.01);
    CHECK(std::isfinite(rep.mu_bound));
    CHECK(rep.mu_slope < 0.01);
    CHECK(std::isfinite(rep.mudot_bound));
    CHECK(rep.mudot_slope < 0.01);
    CHECK(rep.mu_points > 100);
    CHECK(rep.H_G_tail_oscillation < 1e-4);
    CHECK(rep.E1 <= rep.E2);
    CHECK(rep.spin_doubling[0] * 2 <= rep.spin_doubling[1]);
    CHECK(rep.spin_doubling[1] * 2 <= rep.spin_doubling[2]);
    CHECK(rep.cc_residual_decreasing);

    auto bs = mcgehee_observables(series.states, sc.masses, sc.partition, est.L, est.T, series.taus, series.mu0);
    double tau_lo = 0.0;
    for (size_t i = 0; i < series.states.size(); ++i)
        if (to_double(est.T - series.states[i].t) <= 1e-2) {
            tau_lo = bs.states[i].tau;
            break;
        }
    auto decay = verify_perturbation_decay(bs, tau_lo, bs.states.back().tau);
    CHECK(decay.tau_span >= 10.0);
    CHECK(decay.decaying);
    CHECK_FALSE(decay.isolated);
    CHECK(std::abs(decay.spin_chain / 6.0 - 1.0) < 0.15);
    CHECK(std::abs(decay.mu_chain / 3.0 - 1.0) < 0.15);
    CHECK(decay.tidal_chain >= 0.85 * 2.0);
}
