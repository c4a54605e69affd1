#include "nbcoll/blowup.hpp"

#include <cmath>
#include <numbers>

namespace nbcoll {

Eigen::VectorXd pack_autonomous(const BlowupState& b) {
    int n = 2 * static_cast<int>(b.s.size());
    Eigen::VectorXd x(2 + 2 * n);
    x(0) = b.r;
    x(1) = b.v;
    x.segment(2, n) = to_real(b.s);
    x.segment(2 + n, n) = to_real(b.w);
    return x;
}

void unpack_autonomous(const Eigen::VectorXd& x, BlowupState& b) {
    int n = (static_cast<int>(x.size()) - 2) / 2;
    b.r = x(0);
    b.v = x(1);
    b.s = to_vec2(x.segment(2, n));
    b.w = to_vec2(x.segment(2 + n, n));
}

namespace {

struct ShapeTerms {
    double F = 0.0, V = 0.0, N = 0.0, Omega = 0.0;
    Eigen::VectorXd w_auto;  // autonomous w' without the -v w/2 term
    Eigen::LDLT<Eigen::MatrixXd> Ainv;
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
};

ShapeTerms shape_terms(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    ShapeTerms t;
    int n = geo.shape_dim();
    t.N = shape_norm2(s, geo);
    t.V = shape_V(s, geo);
    if (n == 0) return t;
    t.F = fubini_F_direct(s, w, geo);
    t.A = fubini_A_closed(s, geo);
    t.B = fubini_B(s, geo);
    t.Omega = t.B.dot(w);
    t.Ainv.compute(t.A);
    Eigen::VectorXd rhs = shape_gradV(s, geo) + 0.5 * fubini_gradF(s, w, geo) - fubini_dA(s, w, geo) * w;
    t.w_auto = t.Ainv.solve(rhs);
    return t;
}

}  // namespace

Eigen::VectorXd field_autonomous(const Eigen::VectorXd& x, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (x.size() != 2 + 2 * n) throw std::invalid_argument("field_autonomous: dimension mismatch");
    double r = x(0), v = x(1);
    Eigen::VectorXd s = x.segment(2, n), w = x.segment(2 + n, n);
    if (n > 0) {
        // chart condition on the unnormalized point (s, 1) is automatic; guard blow-ups of s
        if (!std::isfinite(s.squaredNorm())) throw ChartViolation("shape coordinate not finite");
    }
    ShapeTerms t = shape_terms(s, w, geo);
    Eigen::VectorXd d(x.size());
    d(0) = v * r;
    d(1) = 0.5 * v * v + t.F - t.V;
    if (n > 0) {
        d.segment(2, n) = w;
        d.segment(2 + n, n) = -0.5 * v * w + t.w_auto;
    }
    return d;
}

namespace {

Vec2List cluster_positions(double r, double theta, const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    return geo.positions(shape_reconstruct(geo, r, theta, to_vec2(s)));
}

}  // namespace

Vec2List blowup_positions(const BlowupState& b, const ClusterGeometry& geo) {
    return geo.positions(shape_reconstruct(geo, b.r, b.theta, b.s));
}

double PerturbationEval::norm() const {
    double w2 = delta_w.size() ? delta_w.squaredNorm() : 0.0;
    return std::sqrt(delta_v * delta_v + w2);
}

PerturbationEval perturbation_eval(const BlowupState& b, const ExternalContext& ext, const ClusterGeometry& geo) {
    if (!(b.r > 0.0)) throw std::invalid_argument("perturbation_eval requires r > 0");
    int n = geo.shape_dim();
    int k = geo.k;
    Eigen::VectorXd s = to_real(b.s), w = to_real(b.w);
    Vec2List rel = cluster_positions(b.r, b.theta, s, geo);

    // force on each cluster body from the external bodies
    Vec2List F(k);
    for (int i = 0; i < k; ++i)
        for (size_t j = 0; j < ext.rel_positions.size(); ++j) {
            Vec2 d = ext.rel_positions[j] - rel[i];
            double dist = nbcoll::norm(d);
            if (!(dist >= kSingularDistance)) throw SingularConfiguration("external body meets the cluster");
            F[i] += (geo.m[i] * ext.masses[j] / (dist * dist * dist)) * d;
        }

    PerturbationEval pe;
    for (int i = 0; i < k; ++i) {
        pe.dU_dr += dot(F[i], rel[i]) / b.r;
        pe.mudot += dot(F[i], perp(rel[i]));
    }
    pe.dv_spin = b.mu * b.mu / b.r;
    pe.dv_tidal = b.r * b.r * pe.dU_dr;
    pe.delta_v = pe.dv_spin + pe.dv_tidal;
    pe.delta_theta = b.mu / std::sqrt(b.r);

    pe.dU_ds = Eigen::VectorXd::Zero(n);
    pe.delta_w = Eigen::VectorXd::Zero(n);
    pe.dw_tidal = pe.dw_torque = pe.dw_gyro = Eigen::VectorXd::Zero(n);
    if (n == 0) return pe;

    double N = shape_norm2(s, geo);
    cplx phase = std::polar(b.r / std::sqrt(N), b.theta);
    CVec Z = shape_point(s);
    for (int a = 0; a < n; ++a) {
        int j = a / 2;
        double ga = geo.reduced[j] * s(a);
        // d frak_z / d s_a = r e^{i theta} (E_a / sqrt N - Z g_a / N^{3/2})
        CVec dz(k - 1);
        for (int l = 0; l < k - 1; ++l) dz[l] = -Z[l] * (ga / N);
        dz[j] += (a % 2 == 0) ? cplx(1.0, 0.0) : cplx(0.0, 1.0);
        for (auto& c : dz) c *= phase;
        Vec2List dq = geo.positions(dz);
        for (int i = 0; i < k; ++i) pe.dU_ds(a) += dot(F[i], dq[i]);
    }

    Eigen::MatrixXd A = fubini_A_closed(s, geo);
    Eigen::LDLT<Eigen::MatrixXd> Ainv(A);
    Eigen::VectorXd B = fubini_B(s, geo);
    Eigen::MatrixXd C = fubini_dBN(s, geo);
    pe.dw_tidal = b.r * Ainv.solve(pe.dU_ds);
    pe.dw_torque = -b.r * pe.mudot * Ainv.solve(B) / N;
    pe.dw_gyro = (b.mu / std::sqrt(b.r)) * Ainv.solve((C.transpose() - C) * w);
    pe.delta_w = pe.dw_tidal + pe.dw_torque + pe.dw_gyro;
    return pe;
}

Eigen::VectorXd field_full(const BlowupState& b, const ExternalContext& ext, const ClusterGeometry& geo) {
    if (!(b.r > 0.0)) throw std::invalid_argument("field_full requires r > 0");
    int n = geo.shape_dim();
    Eigen::VectorXd x = pack_autonomous(b);
    Eigen::VectorXd fa = field_autonomous(x, geo);
    PerturbationEval pe = perturbation_eval(b, ext, geo);
    Eigen::VectorXd d(x.size() + 3);
    d.head(x.size()) = fa;
    d(1) += pe.delta_v;
    if (n > 0) d.segment(2 + n, n) += pe.delta_w;
    double Omega = 0.0;
    if (n > 0) Omega = fubini_B(to_real(b.s), geo).dot(to_real(b.w));
    double N = shape_norm2(to_real(b.s), geo);
    double r32 = b.r * std::sqrt(b.r);
    d(x.size()) = b.mu / std::sqrt(b.r) - Omega / N;
    d(x.size() + 1) = r32 * pe.mudot;
    d(x.size() + 2) = r32;
    return d;
}

BlowupState blowup_from_state(const State& st, const MassSystem& m, const ClusterPartition& part,
                              const std::vector<int>& order, ExternalContext* ext) {
    const auto& g = part.focus_members();
    double M = m.subtotal(g);
    Vec2 c{}, cd{};
    for (int i : g) {
        c += m[i] * st.q[i];
        cd += m[i] * st.qdot[i];
    }
    c = c / M;
    cd = cd / M;
    Vec2List q, qd;
    std::vector<double> mm;
    for (int a : order) {
        int i = g[a];
        q.push_back(st.q[i] - c);
        qd.push_back(st.qdot[i] - cd);
        mm.push_back(m[i]);
    }
    auto f = jacobi_forward(q, mm);
    auto fd = jacobi_forward(qd, mm);
    ShapeState sh = shape_velocity(f, fd);
    BlowupState b;
    b.r = sh.r;
    b.v = std::sqrt(sh.r) * sh.rho;
    b.s = sh.s;
    double r32 = sh.r * std::sqrt(sh.r);
    b.w = sh.omega;
    for (auto& x : b.w) x *= r32;
    b.theta = sh.theta;
    b.mu = sh.mu;
    b.t_phys = st.t;
    if (ext) {
        ext->rel_positions.clear();
        ext->masses.clear();
        for (int j : part.outside_focus(st.size())) {
            ext->rel_positions.push_back(st.q[j] - c);
            ext->masses.push_back(m[j]);
        }
    }
    return b;
}

BlowupSeries mcgehee_observables(const std::vector<State>& states, const MassSystem& m,
                                 const ClusterPartition& part, const Vec2& /*L*/, const DoubleDouble& T_est,
                                 const std::vector<double>& tau_values, const std::vector<double>& mu_values) {
    BlowupSeries out;
    if (!mu_values.empty() && mu_values.size() != states.size())
        throw std::invalid_argument("mu_values must match the number of states");
    if (!tau_values.empty() && tau_values.size() != states.size())
        throw std::invalid_argument("tau_values must match the number of states");
    if (states.empty()) return out;
    const auto& g = part.focus_members();
    // chart order chosen at the deepest sample, where the shape has settled
    {
        const State& last = states.back();
        Vec2List q;
        std::vector<double> mm;
        for (int i : g) {
            q.push_back(last.q[i]);
            mm.push_back(m[i]);
        }
        out.jacobi_order = best_jacobi_order(q, mm);
    }
    std::vector<double> mo;
    for (int a : out.jacobi_order) mo.push_back(m[g[a]]);
    ClusterGeometry geo(mo);

    const double pi = std::numbers::pi;
    double tau = 0.0;
    for (size_t i = 0; i < states.size(); ++i) {
        ExternalContext ext;
        BlowupState b = blowup_from_state(states[i], m, part, out.jacobi_order, &ext);
        if (i > 0) {
            const BlowupState& prev = out.states.back();
            double d = b.theta - std::fmod(prev.theta, 2 * pi);
            d = std::remainder(d, 2 * pi);
            b.theta = prev.theta + d;
            if (tau_values.empty()) {
                double T_prev = to_double(T_est - prev.t_phys), T_cur = to_double(T_est - b.t_phys);
                if (T_prev > 0 && T_cur > 0) {
                    double f0 = std::pow(prev.r, -1.5) * T_prev, f1 = std::pow(b.r, -1.5) * T_cur;
                    tau += 0.5 * (f0 + f1) * std::log(T_prev / T_cur);
                } else {
                    double dt = to_double(b.t_phys - prev.t_phys);
                    tau += 0.5 * (std::pow(prev.r, -1.5) + std::pow(b.r, -1.5)) * dt;
                }
            }
        }
        b.tau = tau_values.empty() ? tau : tau_values[i] - tau_values[0];
        if (!mu_values.empty()) b.mu = mu_values[i];
        out.perturbations.push_back(perturbation_eval(b, ext, geo));
        out.states.push_back(std::move(b));
    }
    // r should be decreasing over the final stretch
    size_t n = out.states.size();
    size_t tail = std::max<size_t>(2, n / 10);
    for (size_t i = n - std::min(n, tail) + 1; i < n; ++i)
        if (out.states[i].r > out.states[i - 1].r) {
            out.warnings.push_back("r not monotone near the end of the series; collision not yet dominant");
            break;
        }
    return out;
}

}  // namespace nbcoll
