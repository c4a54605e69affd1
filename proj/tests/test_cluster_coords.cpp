#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "nbcoll/cluster_coords.hpp"
#include "nbcoll/core.hpp"
#include "test_util.hpp"

using namespace nbcoll;
using testutil::rel_err;

namespace {

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = u(rng);
    return x;
}

double central_diff(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, int i, double h) {
    double x0 = x(i);
    x(i) = x0 + h;
    double fp = f(x);
    x(i) = x0 - h;
    double fm = f(x);
    return (fp - fm) / (2 * h);
}

Vec2List cluster_q(const State& s, int k) { return Vec2List(s.q.begin(), s.q.begin() + k); }

}  // namespace

TEST_CASE("jacobi frame: two-body example") {
    auto f = jacobi_forward({{-1.0, 0.0}, {1.0, 0.0}}, {1.0, 1.0});
    CHECK(f.frak_z[0].x == 2.0);
    CHECK(f.frak_z[0].y == 0.0);
    CHECK(norm(f.z_k) == 0.0);
    CHECK(f.Mtilde(0, 0) == 0.5);
    CHECK(f.Mtilde(1, 1) == 0.5);
    ClusterGeometry geo({1.0, 1.0});
    double I0 = std::pow(geo.mass_norm(frame_complex(f)), 2);
    CHECK(I0 == doctest::Approx(2.0).epsilon(1e-15));
    auto q = jacobi_inverse(f);
    CHECK(q[0].x == -1.0);
    CHECK(q[1].x == 1.0);

    auto sh = shape_forward(f);
    CHECK(sh.r == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(sh.theta == 0.0);
    CHECK(sh.s.empty());
}

TEST_CASE("jacobi frame: inertia identity, P consistency, round trip, rotation") {
    std::mt19937_64 rng(21);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto m = testutil::random_masses(4, rng);
        auto s = testutil::random_state(4, rng);
        auto f = jacobi_forward(s.q, m);
        ClusterGeometry geo(m);
        double M = 0.0;
        Vec2 c{};
        for (int i = 0; i < 4; ++i) {
            M += m[i];
            c += m[i] * s.q[i];
        }
        c = c / M;
        CHECK(rel_err(f.z_k.x, c.x) < 1e-13);
        double I0 = 0.0;
        for (int i = 0; i < 4; ++i) I0 += m[i] * norm2(s.q[i] - c);
        Eigen::VectorXd z = to_real(f.frak_z);
        CHECK(rel_err(z.dot(f.Mtilde * z), I0) < 1e-13);
        Eigen::LLT<Eigen::MatrixXd> llt(f.Mtilde);
        CHECK(llt.info() == Eigen::Success);

        Eigen::VectorXd zfull(8);
        zfull << z, f.z_k.x, f.z_k.y;
        Eigen::VectorXd qv = f.P * zfull;
        for (int i = 0; i < 4; ++i) CHECK(std::hypot(qv(2 * i) - s.q[i].x, qv(2 * i + 1) - s.q[i].y) < 1e-13);

        auto back = jacobi_inverse(f);
        double scale = 0.0, err = 0.0;
        for (int i = 0; i < 4; ++i) {
            scale = std::max(scale, norm(s.q[i]));
            err = std::max(err, norm(back[i] - s.q[i]));
        }
        worst = std::max(worst, err / scale);

        // U_G(q) = U(frak_z)
        double U = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) U += m[i] * m[j] / norm(s.q[i] - s.q[j]);
        CHECK(rel_err(U, geo.potential(frame_complex(f))) < 1e-13);

        double alpha = 0.7 * trial;
        Vec2List rq;
        for (auto& q : s.q) rq.push_back(rotate(q, alpha));
        auto fr = jacobi_forward(rq, m);
        for (int j = 0; j < 3; ++j) CHECK(norm(fr.frak_z[j] - rotate(f.frak_z[j], alpha)) < 1e-13);
    }
    CHECK(worst < 1e-12);

    JacobiFrame zero = jacobi_forward({{0, 0}, {1, 0}, {0, 1}}, {1, 2, 3});
    for (auto& z : zero.frak_z) z = {};
    zero.z_k = {0.5, 0.25};
    for (auto& q : jacobi_inverse(zero)) CHECK(norm(q - zero.z_k) == 0.0);
}

TEST_CASE("shape chart: reconstruction, equivariance, chart violation") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        int k = 3 + trial % 3;
        auto m = testutil::random_masses(k, rng);
        auto s = testutil::random_state(k, rng);
        auto f = jacobi_forward(s.q, m);
        ClusterGeometry geo(m);
        auto sh = shape_forward(f);
        CHECK(sh.theta >= 0.0);
        CHECK(sh.theta < 2 * std::numbers::pi);
        CVec z = shape_reconstruct(geo, sh.r, sh.theta, sh.s);
        CHECK(rel_err(geo.mass_norm(z), sh.r) < 1e-13);
        CVec z0 = frame_complex(f);
        for (int j = 0; j < k - 1; ++j) CHECK(std::abs(z[j] - z0[j]) < 1e-12 * sh.r);

        // U = V(s)/r
        Eigen::VectorXd sv = to_real(sh.s);
        CHECK(rel_err(geo.potential(z0), shape_V(sv, geo) / sh.r) < 1e-12);

        double alpha = 0.37 + trial;
        JacobiFrame fr = f;
        for (auto& zj : fr.frak_z) zj = rotate(zj, alpha);
        auto shr = shape_forward(fr);
        CHECK(shr.r == doctest::Approx(sh.r).epsilon(1e-14));
        double dth = std::remainder(shr.theta - sh.theta - alpha, 2 * std::numbers::pi);
        CHECK(std::abs(dth) < 1e-12);
        for (int j = 0; j < k - 2; ++j) CHECK(norm(shr.s[j] - sh.s[j]) < 1e-12 * (1 + norm(sh.s[j])));
    }
    // last Jacobi vector vanishing: third body at the center of mass of the first two
    auto bad = jacobi_forward({{-1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}}, {1.0, 1.0, 1.0});
    CHECK_THROWS_AS(shape_forward(bad), ChartViolation);
}

TEST_CASE("shape velocities: mu three ways, zero velocity, energy") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        int k = 2 + trial % 4;
        auto m = testutil::random_masses(k, rng);
        auto s = testutil::random_state(k, rng);
        MassSystem ms(m);
        std::vector<int> all(k);
        for (int i = 0; i < k; ++i) all[i] = i;
        auto part = ClusterPartition::with_focus(k, all);
        auto ob = cluster_observables(s, ms, part);
        auto f = jacobi_forward(s.q, m), fd = jacobi_forward(s.qdot, m);
        auto sh = shape_velocity(f, fd);
        double scale = std::max(ob.mu_scale, ob.mu0_scale);
        CHECK(std::abs(sh.mu - ob.mu) < 1e-10 * scale);
        CHECK(std::abs(sh.mu - ob.mu0_G) < 1e-10 * scale);

        ClusterGeometry geo(m);
        Eigen::VectorXd sv = to_real(sh.s), wv = to_real(sh.omega);
        double H = energy_shape(sh, shape_V(sv, geo), fubini_F_direct(sv, wv, geo), ob.cdot_G, ob.M_G);
        CHECK(rel_err(H, ob.H_G) < 1e-10);
    }
    auto f = jacobi_forward({{0, 0}, {1, 0}, {0.3, 0.8}}, {1, 1, 1});
    auto fd = jacobi_forward({{0, 0}, {0, 0}, {0, 0}}, {1, 1, 1});
    auto sh = shape_velocity(f, fd);
    CHECK(sh.mu == 0.0);
    CHECK(sh.rho == 0.0);
    ClusterGeometry geo({1, 1, 1});
    Eigen::VectorXd sv = to_real(sh.s);
    CHECK(energy_shape(sh, shape_V(sv, geo), 0.0, {}, 3.0) == doctest::Approx(-shape_V(sv, geo) / sh.r));
}

TEST_CASE("circular two-body energy from the shape chart") {
    // unit masses at separation 2 on a circular orbit: relative speed sqrt(M/d) = 1
    MassSystem m({1.0, 1.0});
    State s;
    s.q = {{-1.0, 0.0}, {1.0, 0.0}};
    s.qdot = {{0.0, -0.5}, {0.0, 0.5}};
    auto ob = cluster_observables(s, m, ClusterPartition::with_focus(2, {0, 1}));
    auto sh = shape_velocity(jacobi_forward(s.q, {1, 1}), jacobi_forward(s.qdot, {1, 1}));
    ClusterGeometry geo({1.0, 1.0});
    double H = energy_shape(sh, shape_V(Eigen::VectorXd(0), geo), 0.0, ob.cdot_G, 2.0);
    CHECK(H == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(ob.H_G == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("fubini quantities") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        int k = 3 + trial % 3;
        ClusterGeometry geo(testutil::random_masses(k, rng));
        int n = geo.shape_dim();
        Eigen::VectorXd s = random_vec(n, rng, 1.5), w = random_vec(n, rng);
        auto fe = fubini_eval(s, w, geo);

        CHECK(std::abs(fe.F_val - w.dot(fe.A * w)) < 1e-13 * (1 + std::abs(fe.F_val)));
        CHECK((fe.A - fubini_A_closed(s, geo)).norm() < 1e-13 * fe.A.norm());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fe.A);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK(std::abs(fe.Omega_val - fe.B.dot(w)) < 1e-13 * (1 + std::abs(fe.Omega_val)));

        auto zero = fubini_eval(s, Eigen::VectorXd::Zero(n), geo);
        CHECK(zero.F_val == 0.0);
        CHECK(zero.G_val == 0.0);
        CHECK(zero.Omega_val == 0.0);

        // V = ||(s,1)|| U(s,1)
        CHECK(rel_err(fe.V_val, std::sqrt(fe.norm2_s1) * geo.potential(shape_point(s))) < 1e-14);

        auto Vf = [&](const Eigen::VectorXd& x) { return shape_V(x, geo); };
        auto Ff = [&](const Eigen::VectorXd& x) { return fubini_F_direct(x, w, geo); };
        Eigen::MatrixXd H = shape_hessV(s, geo);
        for (int i = 0; i < n; ++i) {
            double h = 1e-5;
            CHECK(std::abs(fe.gradV(i) - central_diff(Vf, s, i, h)) < 1e-6 * (1 + fe.gradV.norm()));
            CHECK(std::abs(fe.gradF_s(i) - central_diff(Ff, s, i, h)) < 1e-6 * (1 + fe.gradF_s.norm()));
            Eigen::VectorXd sp = s, sm = s;
            sp(i) += h;
            sm(i) -= h;
            Eigen::VectorXd col = (shape_gradV(sp, geo) - shape_gradV(sm, geo)) / (2 * h);
            CHECK((H.col(i) - col).norm() < 1e-6 * (1 + H.norm()));
            // dA along e_i and d(B/N)/ds_i
            Eigen::VectorXd e = Eigen::VectorXd::Unit(n, i);
            Eigen::MatrixXd dA = (fubini_A_closed(sp, geo) - fubini_A_closed(sm, geo)) / (2 * h);
            CHECK((fubini_dA(s, e, geo) - dA).norm() < 1e-6 * (1 + dA.norm()));
            Eigen::VectorXd dBN = (fubini_B(sp, geo) / shape_norm2(sp, geo) - fubini_B(sm, geo) / shape_norm2(sm, geo)) / (2 * h);
            CHECK((fubini_dBN(s, geo).col(i) - dBN).norm() < 1e-6 * (1 + dBN.norm()));
        }
        CHECK((H - H.transpose()).norm() < 1e-12 * H.norm());
    }
}

TEST_CASE("two-body degenerate chart") {
    ClusterGeometry geo({1.0, 3.0});
    Eigen::VectorXd empty(0);
    auto fe = fubini_eval(empty, empty, geo);
    CHECK(fe.A.size() == 0);
    CHECK(fe.B.size() == 0);
    CHECK(fe.F_val == 0.0);
    // V = sqrt(reduced) * m1 m2
    CHECK(fe.V_val == doctest::Approx(std::sqrt(0.75) * 3.0).epsilon(1e-15));
}

TEST_CASE("best jacobi order keeps the chart away from its boundary") {
    Vec2List q{{-1.0, 0.0}, {1.0, 0.0}, {0.0, 1e-14}};
    auto order = best_jacobi_order(q, {1, 1, 1});
    Vec2List qo;
    for (int i : order) qo.push_back(q[i]);
    CHECK_NOTHROW(shape_forward(jacobi_forward(qo, {1, 1, 1})));
    CHECK(order.back() != 2);
}
