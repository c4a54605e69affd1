#include <cmath>

#include "doctest.h"
#include "nbcoll/cc_solver.hpp"
#include "nbcoll/nbody.hpp"
#include "nbcoll/presets.hpp"

using namespace nbcoll;

namespace {

Eigen::VectorXd chart_point(const Vec2List& q, const std::vector<double>& m) {
    return to_real(shape_forward(jacobi_forward(q, m)).s);
}

const CCResult* find_lambda(const std::vector<CCResult>& cat, double lambda, double tol) {
    for (const auto& c : cat)
        if (std::abs(c.lambda - lambda) < tol) return &c;
    return nullptr;
}

}  // namespace

TEST_CASE("solve_cc: Lagrange and Euler for three equal masses") {
    std::vector<double> m{1.0, 1.0, 1.0};
    // perturbed equilateral triangle
    Vec2List tri{{0.0, 0.0}, {1.0, 0.05}, {0.45, 0.9}};
    auto lag = solve_cc(chart_point(tri, m), m);
    CHECK(std::abs(lag.lambda - 3.0) < 1e-10);
    CHECK(lag.residual < 1e-12);
    CHECK(lag.cartesian_residual < 1e-10);
    CHECK_FALSE(lag.degenerate);
    const auto& q = lag.normalized_q;
    for (int i = 0; i < 3; ++i) CHECK(norm(q[i] - q[(i + 1) % 3]) == doctest::Approx(1.0).epsilon(1e-12));

    // perturbed collinear, end body last in the chart
    Vec2List line{{-1.0, 0.02}, {0.1, 0.0}, {1.0, -0.03}};
    auto eul = solve_cc(chart_point(line, m), m);
    CHECK(std::abs(eul.lambda - 5.0 * std::sqrt(2.0) / 2.0) < 1e-10);
    CHECK(eul.residual < 1e-12);
    CHECK(eul.cartesian_residual < 1e-10);
    CHECK_FALSE(eul.degenerate);

    // U = lambda for the normalized representative
    State s;
    s.q = lag.normalized_q;
    s.qdot.assign(3, Vec2{});
    CHECK(std::abs(potential_energy(s, MassSystem(m)) - lag.lambda) < 1e-10);

    // a converged point is a fixed point
    auto again = solve_cc(lag.s_star, m);
    CHECK(again.iterations == 0);
    CHECK((again.s_star - lag.s_star).norm() == 0.0);

    // degenerate flag is stable under a tenfold change of tolerance
    CCOptions tight, loose;
    tight.degeneracy_tol = 1e-9;
    loose.degeneracy_tol = 1e-7;
    CHECK_FALSE(solve_cc(lag.s_star, m, {}, tight).degenerate);
    CHECK_FALSE(solve_cc(lag.s_star, m, {}, loose).degenerate);
}

TEST_CASE("solve_cc: errors") {
    std::vector<double> m{1.0, 1.0, 1.0};
    Eigen::VectorXd bad(4);
    bad.setZero();
    CHECK_THROWS_AS(solve_cc(bad, m), std::invalid_argument);
    // bodies 0 and 1 on top of each other
    Vec2List coll{{0.0, 0.0}, {1e-9, 0.0}, {0.3, 1.0}};
    CHECK_THROWS_AS(solve_cc(chart_point(coll, m), m), CCSingular);
}

TEST_CASE("enumerate_cc: three equal masses") {
    std::vector<double> m{1.0, 1.0, 1.0};
    auto cat = enumerate_cc(m, 40);
    REQUIRE(cat.size() == 5);
    CHECK(count_label_classes(cat) == 2);
    int lag = 0, eul = 0;
    for (const auto& c : cat) {
        CHECK(c.lambda > 0);
        CHECK(c.residual < 1e-12);
        CHECK(c.isolated);
        if (std::abs(c.lambda - 3.0) < 1e-10) ++lag;
        if (std::abs(c.lambda - 5.0 * std::sqrt(2.0) / 2.0) < 1e-10) ++eul;
    }
    CHECK(lag == 2);
    CHECK(eul == 3);

    auto again = enumerate_cc(m, 40);
    CHECK(catalog_to_json(again) == catalog_to_json(cat));

    auto back = catalog_from_json(catalog_to_json(cat));
    REQUIRE(back.size() == cat.size());
    for (size_t i = 0; i < cat.size(); ++i) {
        CHECK(back[i].lambda == cat[i].lambda);
        CHECK(cc_distance(back[i].normalized_q, cat) < 1e-12);
    }
}

TEST_CASE("enumerate_cc: four equal masses include the classical catalog") {
    std::vector<double> m{1.0, 1.0, 1.0, 1.0};
    auto cat = enumerate_cc(m, 150);
    const CCResult* square = find_lambda(cat, 2.0 + 4.0 * std::sqrt(2.0), 1e-10);
    REQUIRE(square != nullptr);
    CHECK(square->residual < 1e-10);
    CHECK(square->cartesian_residual < 1e-10);
    const CCResult* centred = find_lambda(cat, 3.0 + 3.0 * std::sqrt(3.0), 1e-10);
    CHECK(centred != nullptr);
    // symmetric collinear chain, independent 1-D solve
    CHECK(find_lambda(cat, 9.679004152386865, 1e-9) != nullptr);
    for (const auto& c : cat) CHECK(c.lambda > 0);
}

TEST_CASE("cc_distance: zero on the catalog, rotation invariant, zero along the homothetic orbit") {
    std::vector<double> m{1.0, 1.0, 1.0};
    auto cat = enumerate_cc(m, 20);
    for (const auto& c : cat) CHECK(cc_distance(c.normalized_q, cat) < 1e-12);

    Vec2List q{{0.0, 0.0}, {1.0, 0.2}, {0.3, 0.7}};
    Vec2List rq;
    double a = 0.83;
    for (const auto& v : q) rq.push_back({std::cos(a) * v.x - std::sin(a) * v.y, std::sin(a) * v.x + std::cos(a) * v.y});
    CHECK(cc_distance(q, cat) > 1e-3);
    CHECK(std::abs(cc_distance(q, cat) - cc_distance(rq, cat)) < 1e-12);
    CHECK(std::abs(cc_distance(chart_point(q, m), m, {0, 1, 2}, cat) - cc_distance(q, cat)) < 1e-12);

    Scenario sc = make_preset("lagrange_homothetic");
    CollisionConfig cfg;
    cfg.run.precision = Precision::DoubleDouble;
    cfg.run.integrator.rel_tol = 1e-16;
    cfg.stop_fraction = 1e-8;
    auto run = integrate_family_to_collision(sc.family, sc.param, sc.masses, sc.partition, cfg);
    double worst = 0.0;
    for (size_t i = 0; i < run.traj.size(); i += 7) worst = std::max(worst, cc_distance(run.traj.state(i).q, cat));
    CHECK(worst < 1e-10);
}
