#include "nbcoll/cluster_coords.hpp"

#include <cmath>
#include <numbers>

namespace nbcoll {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a;
}

// diag(reduced_j, reduced_j) over the s components
Eigen::VectorXd shape_weights(const ClusterGeometry& geo) {
    Eigen::VectorXd d(geo.shape_dim());
    for (int j = 0; j < geo.k - 2; ++j) d(2 * j) = d(2 * j + 1) = geo.reduced[j];
    return d;
}

// blockwise quarter turn (x, y) -> (-y, x)
Eigen::VectorXd quarter(const Eigen::VectorXd& v) {
    Eigen::VectorXd out(v.size());
    for (int j = 0; 2 * j < v.size(); ++j) {
        out(2 * j) = -v(2 * j + 1);
        out(2 * j + 1) = v(2 * j);
    }
    return out;
}

Eigen::MatrixXd quarter_matrix(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; 2 * j < n; ++j) {
        J(2 * j, 2 * j + 1) = -1.0;
        J(2 * j + 1, 2 * j) = 1.0;
    }
    return J;
}

// gradient of U with respect to each relative position
Vec2List potential_gradient(const Vec2List& pos, const std::vector<double>& m) {
    int k = static_cast<int>(pos.size());
    Vec2List g(k);
    for (int i = 0; i < k; ++i)
        for (int l = i + 1; l < k; ++l) {
            Vec2 d = pos[l] - pos[i];
            double r = norm(d);
            double c = m[i] * m[l] / (r * r * r);
            g[i] += c * d;
            g[l] -= c * d;
        }
    return g;
}

}  // namespace

ClusterGeometry::ClusterGeometry(std::vector<double> masses) : k(static_cast<int>(masses.size())), m(std::move(masses)) {
    if (k < 2) throw std::invalid_argument("cluster needs at least two bodies");
    reduced.resize(k - 1);
    std::vector<double> partial(k);
    double acc = 0.0;
    for (int i = 0; i < k; ++i) partial[i] = (acc += m[i]);
    M = acc;
    for (int j = 0; j < k - 1; ++j) reduced[j] = m[j + 1] * partial[j] / partial[j + 1];

    // C_j = c - sum_{l >= j} (m_{l+1}/M_{l+1}) z_l ; q_0 = C_0 ; q_{j+1} = C_j + z_j
    coeff = Eigen::MatrixXd::Zero(k, k - 1);
    for (int i = 0; i < k; ++i) {
        int j0 = i == 0 ? 0 : i - 1;
        for (int l = j0; l < k - 1; ++l) coeff(i, l) -= m[l + 1] / partial[l + 1];
        if (i > 0) coeff(i, i - 1) += 1.0;
    }
}

cplx ClusterGeometry::inner(const CVec& u, const CVec& v) const {
    cplx s = 0.0;
    for (int j = 0; j < k - 1; ++j) s += reduced[j] * std::conj(u[j]) * v[j];
    return s;
}

Vec2List ClusterGeometry::positions(const CVec& z) const {
    Vec2List p(k);
    for (int i = 0; i < k; ++i) {
        cplx acc = 0.0;
        for (int j = 0; j < k - 1; ++j) acc += coeff(i, j) * z[j];
        p[i] = to_v(acc);
    }
    return p;
}

double ClusterGeometry::potential(const CVec& z) const {
    auto p = positions(z);
    double u = 0.0;
    for (int i = 0; i < k; ++i)
        for (int l = i + 1; l < k; ++l) u += m[i] * m[l] / norm(p[i] - p[l]);
    return u;
}

JacobiFrame jacobi_forward(const Vec2List& q, const std::vector<double>& m) {
    int k = static_cast<int>(q.size());
    if (k < 2 || m.size() != q.size()) throw std::invalid_argument("jacobi_forward: need k >= 2 matching masses");
    ClusterGeometry geo(m);
    JacobiFrame f;
    f.k = k;
    f.m = m;
    f.reduced = geo.reduced;
    f.frak_z.resize(k - 1);
    Vec2 com = q[0];
    double Mp = m[0];
    for (int j = 0; j < k - 1; ++j) {
        f.frak_z[j] = q[j + 1] - com;
        com = (Mp * com + m[j + 1] * q[j + 1]) / (Mp + m[j + 1]);
        Mp += m[j + 1];
    }
    f.z_k = com;

    f.P = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k - 1; ++j) {
            f.P(2 * i, 2 * j) = geo.coeff(i, j);
            f.P(2 * i + 1, 2 * j + 1) = geo.coeff(i, j);
        }
        f.P(2 * i, 2 * (k - 1)) = 1.0;
        f.P(2 * i + 1, 2 * (k - 1) + 1) = 1.0;
    }
    f.Mtilde = Eigen::MatrixXd::Zero(2 * k - 2, 2 * k - 2);
    for (int j = 0; j < k - 1; ++j) f.Mtilde(2 * j, 2 * j) = f.Mtilde(2 * j + 1, 2 * j + 1) = geo.reduced[j];
    return f;
}

Vec2List jacobi_inverse(const JacobiFrame& f) {
    int k = f.k;
    // walk the partial centers of mass back from C_{k-1} = c_G
    std::vector<double> partial(k);
    double acc = 0.0;
    for (int i = 0; i < k; ++i) partial[i] = (acc += f.m[i]);
    Vec2List q(k);
    Vec2 C = f.z_k;
    for (int j = k - 2; j >= 0; --j) {
        C = C - (f.m[j + 1] / partial[j + 1]) * f.frak_z[j];
        q[j + 1] = C + f.frak_z[j];
    }
    q[0] = C;
    return q;
}

CVec frame_complex(const JacobiFrame& f) {
    CVec z(f.k - 1);
    for (int j = 0; j < f.k - 1; ++j) z[j] = to_c(f.frak_z[j]);
    return z;
}

Eigen::VectorXd to_real(const Vec2List& v) {
    Eigen::VectorXd x(2 * v.size());
    for (size_t j = 0; j < v.size(); ++j) {
        x(2 * j) = v[j].x;
        x(2 * j + 1) = v[j].y;
    }
    return x;
}

Vec2List to_vec2(const Eigen::VectorXd& x) {
    Vec2List v(x.size() / 2);
    for (size_t j = 0; j < v.size(); ++j) v[j] = {x(2 * j), x(2 * j + 1)};
    return v;
}

CVec shape_point(const Eigen::VectorXd& s) {
    CVec Z(s.size() / 2 + 1);
    for (int j = 0; 2 * j < s.size(); ++j) Z[j] = {s(2 * j), s(2 * j + 1)};
    Z.back() = 1.0;
    return Z;
}

namespace {

ShapeState shape_positions(const JacobiFrame& f, const CVec& z, double& r) {
    ClusterGeometry geo(f.m);
    ShapeState st;
    r = geo.mass_norm(z);
    st.r = r;
    const cplx last = z.back();
    if (!(std::abs(last) >= kChartEps * r) || r == 0.0)
        throw ChartViolation("last Jacobi vector vanishes; re-index the cluster");
    st.theta = wrap_angle(std::arg(last));
    st.s.resize(f.k - 2);
    for (int j = 0; j < f.k - 2; ++j) st.s[j] = to_v(z[j] / last);
    return st;
}

}  // namespace

ShapeState shape_forward(const JacobiFrame& f) {
    double r;
    return shape_positions(f, frame_complex(f), r);
}

ShapeState shape_velocity(const JacobiFrame& f, const JacobiFrame& fd) {
    CVec z = frame_complex(f), zd = frame_complex(fd);
    double r;
    ShapeState st = shape_positions(f, z, r);
    ClusterGeometry geo(f.m);
    st.rho = geo.inner(z, zd).real() / r;
    const cplx last = z.back(), dlast = zd.back();
    st.thetadot = (dlast / last).imag();
    st.omega.resize(f.k - 2);
    for (int j = 0; j < f.k - 2; ++j) st.omega[j] = to_v((zd[j] * last - z[j] * dlast) / (last * last));
    double N = geo.reduced.back();
    double Omega = 0.0;
    for (int j = 0; j < f.k - 2; ++j) {
        cplx sj = to_c(st.s[j]);
        N += geo.reduced[j] * std::norm(sj);
        Omega += geo.reduced[j] * (std::conj(sj) * to_c(st.omega[j])).imag();
    }
    st.mu = r * r * st.thetadot + r * r * Omega / N;
    return st;
}

CVec shape_reconstruct(const ClusterGeometry& geo, double r, double theta, const Vec2List& s) {
    CVec Z(geo.k - 1);
    for (int j = 0; j < geo.k - 2; ++j) Z[j] = to_c(s[j]);
    Z.back() = 1.0;
    double n = geo.mass_norm(Z);
    cplx f = std::polar(r / n, theta);
    for (auto& z : Z) z *= f;
    return Z;
}

double shape_norm2(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    double N = geo.reduced.back();
    for (int j = 0; j < geo.k - 2; ++j) N += geo.reduced[j] * (s(2 * j) * s(2 * j) + s(2 * j + 1) * s(2 * j + 1));
    return N;
}

namespace {

// G + i Omega = <<(s,1), (omega,0)>>
cplx gomega(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    cplx acc = 0.0;
    for (int j = 0; j < geo.k - 2; ++j) {
        cplx sj(s(2 * j), s(2 * j + 1)), wj(w(2 * j), w(2 * j + 1));
        acc += geo.reduced[j] * std::conj(sj) * wj;
    }
    return acc;
}

double omega_norm2(const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    double acc = 0.0;
    for (int j = 0; j < geo.k - 2; ++j) acc += geo.reduced[j] * (w(2 * j) * w(2 * j) + w(2 * j + 1) * w(2 * j + 1));
    return acc;
}

}  // namespace

double fubini_F_direct(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    if (geo.k == 2) return 0.0;
    double N = shape_norm2(s, geo);
    cplx go = gomega(s, w, geo);
    return omega_norm2(w, geo) / N - std::norm(go) / (N * N);
}

Eigen::MatrixXd fubini_A_closed(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (n == 0) return Eigen::MatrixXd(0, 0);
    double N = shape_norm2(s, geo);
    Eigen::VectorXd d = shape_weights(geo);
    Eigen::VectorXd g = d.cwiseProduct(s);
    Eigen::VectorXd b = d.cwiseProduct(quarter(s));
    Eigen::MatrixXd A = Eigen::MatrixXd(d.asDiagonal()) / N;
    A -= (g * g.transpose() + b * b.transpose()) / (N * N);
    return A;
}

Eigen::VectorXd fubini_B(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    Eigen::VectorXd B(n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        e(i) = 1.0;
        B(i) = gomega(s, e, geo).imag();
        e(i) = 0.0;
    }
    return B;
}

Eigen::VectorXd fubini_gradF(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (n == 0) return Eigen::VectorXd(0);
    double N = shape_norm2(s, geo);
    Eigen::VectorXd d = shape_weights(geo);
    Eigen::VectorXd g = d.cwiseProduct(s);
    Eigen::VectorXd dw = d.cwiseProduct(w);
    cplx go = gomega(s, w, geo);
    double G = go.real(), Om = go.imag();
    double w2 = omega_norm2(w, geo);
    // d/ds of ||w||^2/N - (G^2 + Omega^2)/N^2 with dG/ds = D w, dOmega/ds = -J D w
    Eigen::VectorXd grad = -2.0 * w2 * g / (N * N);
    grad -= 2.0 * (G * dw - Om * quarter(dw)) / (N * N);
    grad += 4.0 * (G * G + Om * Om) * g / (N * N * N);
    return grad;
}

Eigen::MatrixXd fubini_dA(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (n == 0) return Eigen::MatrixXd(0, 0);
    double N = shape_norm2(s, geo);
    Eigen::VectorXd d = shape_weights(geo);
    Eigen::VectorXd g = d.cwiseProduct(s), b = d.cwiseProduct(quarter(s));
    Eigen::VectorXd dg = d.cwiseProduct(w), db = d.cwiseProduct(quarter(w));
    double dN = 2.0 * g.dot(w);
    Eigen::MatrixXd ggbb = g * g.transpose() + b * b.transpose();
    Eigen::MatrixXd out = -Eigen::MatrixXd(d.asDiagonal()) * (dN / (N * N));
    out -= (dg * g.transpose() + g * dg.transpose() + db * b.transpose() + b * db.transpose()) / (N * N);
    out += 2.0 * ggbb * dN / (N * N * N);
    return out;
}

Eigen::MatrixXd fubini_dBN(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (n == 0) return Eigen::MatrixXd(0, 0);
    double N = shape_norm2(s, geo);
    Eigen::VectorXd d = shape_weights(geo);
    Eigen::MatrixXd DJ = Eigen::MatrixXd(d.asDiagonal()) * quarter_matrix(n);
    Eigen::VectorXd B = d.cwiseProduct(quarter(s));
    Eigen::VectorXd dN = 2.0 * d.cwiseProduct(s);
    return DJ / N - B * dN.transpose() / (N * N);
}

double shape_V(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    return std::sqrt(shape_norm2(s, geo)) * geo.potential(shape_point(s));
}

namespace {

// gradient of u(s) = U(s,1) with respect to the real shape coordinates
Eigen::VectorXd u_gradient(const Eigen::VectorXd& s, const ClusterGeometry& geo, double* u_out) {
    CVec Z = shape_point(s);
    auto pos = geo.positions(Z);
    auto gq = potential_gradient(pos, geo.m);
    if (u_out) *u_out = geo.potential(Z);
    int n = geo.shape_dim();
    Eigen::VectorXd gu = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < geo.k - 2; ++j)
        for (int i = 0; i < geo.k; ++i) {
            gu(2 * j) += geo.coeff(i, j) * gq[i].x;
            gu(2 * j + 1) += geo.coeff(i, j) * gq[i].y;
        }
    return gu;
}

}  // namespace

Eigen::VectorXd shape_gradV(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (n == 0) return Eigen::VectorXd(0);
    double N = shape_norm2(s, geo), u;
    Eigen::VectorXd gu = u_gradient(s, geo, &u);
    Eigen::VectorXd d = shape_weights(geo);
    double rN = std::sqrt(N);
    return u * d.cwiseProduct(s) / rN + rN * gu;
}

Eigen::MatrixXd shape_hessV(const Eigen::VectorXd& s, const ClusterGeometry& geo) {
    int n = geo.shape_dim();
    if (n == 0) return Eigen::MatrixXd(0, 0);
    int k = geo.k;
    CVec Z = shape_point(s);
    auto pos = geo.positions(Z);
    // Hessian of U in the relative positions, 2k x 2k
    Eigen::MatrixXd HU = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    for (int i = 0; i < k; ++i)
        for (int l = i + 1; l < k; ++l) {
            Vec2 dv = pos[i] - pos[l];
            double r = norm(dv);
            Eigen::Vector2d dd(dv.x, dv.y);
            Eigen::Matrix2d Hp = geo.m[i] * geo.m[l] *
                                 (3.0 * dd * dd.transpose() / std::pow(r, 5) - Eigen::Matrix2d::Identity() / (r * r * r));
            HU.block<2, 2>(2 * i, 2 * i) += Hp;
            HU.block<2, 2>(2 * l, 2 * l) += Hp;
            HU.block<2, 2>(2 * i, 2 * l) -= Hp;
            HU.block<2, 2>(2 * l, 2 * i) -= Hp;
        }
    // d(positions)/ds
    Eigen::MatrixXd Lm = Eigen::MatrixXd::Zero(2 * k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k - 2; ++j) {
            Lm(2 * i, 2 * j) = geo.coeff(i, j);
            Lm(2 * i + 1, 2 * j + 1) = geo.coeff(i, j);
        }
    Eigen::MatrixXd Hu = Lm.transpose() * HU * Lm;
    double u;
    Eigen::VectorXd gu = u_gradient(s, geo, &u);
    double N = shape_norm2(s, geo), rN = std::sqrt(N);
    Eigen::VectorXd d = shape_weights(geo);
    Eigen::VectorXd ds = d.cwiseProduct(s);
    Eigen::VectorXd gn = ds / rN;
    Eigen::MatrixXd Hn = Eigen::MatrixXd(d.asDiagonal()) / rN - ds * ds.transpose() / (N * rN);
    return u * Hn + gn * gu.transpose() + gu * gn.transpose() + rN * Hu;
}

FubiniEval fubini_eval(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo) {
    FubiniEval fe;
    int n = geo.shape_dim();
    if (s.size() != n || w.size() != n) throw std::invalid_argument("fubini_eval: dimension mismatch");
    fe.norm2_s1 = shape_norm2(s, geo);
    fe.V_val = shape_V(s, geo);
    fe.gradV = shape_gradV(s, geo);
    if (n == 0) {
        fe.A = Eigen::MatrixXd(0, 0);
        fe.B = Eigen::VectorXd(0);
        fe.gradF_s = Eigen::VectorXd(0);
        return fe;
    }
    cplx go = gomega(s, w, geo);
    fe.G_val = go.real();
    fe.Omega_val = go.imag();
    fe.F_val = fubini_F_direct(s, w, geo);
    // polarization of the quadratic form F(s, .)
    fe.A.resize(n, n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n), f = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        e.setZero();
        e(i) = 1.0;
        fe.A(i, i) = fubini_F_direct(s, e, geo);
        for (int j = i + 1; j < n; ++j) {
            f.setZero();
            f(i) = 1.0;
            f(j) = 1.0;
            double plus = fubini_F_direct(s, f, geo);
            f(j) = -1.0;
            double minus = fubini_F_direct(s, f, geo);
            fe.A(i, j) = fe.A(j, i) = 0.25 * (plus - minus);
        }
    }
    fe.B = fubini_B(s, geo);
    fe.gradF_s = fubini_gradF(s, w, geo);
    return fe;
}

double energy_shape(const ShapeState& st, double V, double F, const Vec2& cdot, double M) {
    double r = st.r;
    return 0.5 * st.rho * st.rho + st.mu * st.mu / (2 * r * r) + 0.5 * r * r * F - V / r + 0.5 * M * norm2(cdot);
}

std::vector<int> best_jacobi_order(const Vec2List& q, const std::vector<double>& m) {
    int k = static_cast<int>(q.size());
    std::vector<int> best;
    double best_ratio = -1.0;
    for (int last = k - 1; last >= 0; --last) {
        std::vector<int> order;
        for (int i = 0; i < k; ++i)
            if (i != last) order.push_back(i);
        order.push_back(last);
        Vec2List qo;
        std::vector<double> mo;
        for (int i : order) {
            qo.push_back(q[i]);
            mo.push_back(m[i]);
        }
        auto f = jacobi_forward(qo, mo);
        ClusterGeometry geo(mo);
        double r = geo.mass_norm(frame_complex(f));
        double ratio = r > 0 ? norm(f.frak_z.back()) / r : 0.0;
        if (ratio > best_ratio * (1.0 + 1e-12)) {
            best_ratio = ratio;
            best = order;
        }
    }
    return best;
}

}  // namespace nbcoll
