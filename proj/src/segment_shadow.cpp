#include "nbcoll/segment_shadow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "halton.hpp"
#include "nbcoll/blowup.hpp"
#include "nbcoll/odeint.hpp"

namespace nbcoll {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double op_norm(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
}

Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& B) {
    if (B.cols() == 0) return B;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
    return qr.householderQ() * Eigen::MatrixXd::Identity(B.rows(), B.cols());
}

// Point of [-1, 1]^n from the Halton sequence.
Eigen::VectorXd halton_cube(std::uint64_t i, int n, int offset = 0) {
    Eigen::VectorXd h(n);
    for (int c = 0; c < n; ++c) h[c] = 2.0 * detail::halton(i, offset + c) - 1.0;
    return h;
}

Eigen::VectorXd unit_or_axis(Eigen::VectorXd v) {
    double n = v.norm();
    if (n == 0.0) {
        v.setZero();
        v[0] = 1.0;
        return v;
    }
    return v / n;
}

double linear_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

Eigen::VectorXd interpolate(const std::vector<double>& t, const std::vector<Eigen::VectorXd>& z, double when) {
    if (when <= t.front()) return z.front();
    if (when >= t.back()) return z.back();
    size_t j = std::upper_bound(t.begin(), t.end(), when) - t.begin();
    if (t[j - 1] == when) return z[j - 1];
    double w = (when - t[j - 1]) / (t[j] - t[j - 1]);
    return (1.0 - w) * z[j - 1] + w * z[j];
}

}  // namespace

double logarithmic_norm(const Eigen::MatrixXd& M) {
    Eigen::MatrixXd S = 0.5 * (M + M.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

double lower_log_norm(const Eigen::MatrixXd& M) {
    Eigen::MatrixXd S = 0.5 * (M + M.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

Eigen::MatrixXd jacobian_fd(const Field& f, const Eigen::VectorXd& z, double h) {
    const int n = static_cast<int>(z.size());
    Eigen::MatrixXd J(n, n);
    for (int j = 0; j < n; ++j) {
        double step = h * std::max(1.0, std::abs(z[j]));
        Eigen::VectorXd a = z, b = z;
        a[j] += step;
        b[j] -= step;
        J.col(j) = (f(a) - f(b)) / (a[j] - b[j]);
    }
    return J;
}

SplitBasis hyperbolic_split(const Eigen::MatrixXd& J, double tol) {
    const int n = static_cast<int>(J.rows());
    Eigen::EigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success) throw SplitMismatch("eigendecomposition failed");
    const Eigen::VectorXcd& ev = es.eigenvalues();
    const Eigen::MatrixXcd& V = es.eigenvectors();
    std::vector<Eigen::VectorXd> cu, st;
    for (int i = 0; i < n; ++i) {
        auto& dest = ev[i].real() >= -tol ? cu : st;
        if (ev[i].imag() == 0.0) {
            dest.push_back(V.col(i).real());
        } else if (ev[i].imag() > 0.0) {
            dest.push_back(V.col(i).real());
            dest.push_back(V.col(i).imag());
        }
    }
    auto stack = [n](const std::vector<Eigen::VectorXd>& cols) {
        Eigen::MatrixXd B(n, static_cast<int>(cols.size()));
        for (size_t c = 0; c < cols.size(); ++c) B.col(static_cast<int>(c)) = cols[c];
        return orthonormal_columns(B);
    };
    SplitBasis sb;
    sb.dim_u = static_cast<int>(cu.size());
    sb.dim_s = static_cast<int>(st.size());
    if (sb.dim_u + sb.dim_s != n) throw SplitMismatch("complex eigenvalues without conjugate partners");
    sb.P.resize(n, n);
    sb.P.leftCols(sb.dim_u) = stack(cu);
    sb.P.rightCols(sb.dim_s) = stack(st);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sb.P);
    if (!lu.isInvertible()) throw SplitMismatch("eigenvectors do not span the space (defective Jacobian)");
    sb.P_inv = lu.inverse();
    sb.spectrum = ev;
    return sb;
}

ConeConstants cone_constants(const Field& f, const Eigen::VectorXd& center, double R,
                             std::optional<std::pair<int, int>> split, int sample_count) {
    if (!(R > 0.0)) throw std::invalid_argument("region radius must be positive");
    if (sample_count < 1) throw std::invalid_argument("sample_count must be positive");
    const int n = static_cast<int>(center.size());
    if (n > detail::kHaltonMaxDim) throw std::invalid_argument("dimension too large for the sampling sequence");
    ConeConstants cc;
    cc.center = center;
    cc.R = R;
    cc.split = hyperbolic_split(jacobian_fd(f, center));
    if (split && (split->first != cc.split.dim_u || split->second != cc.split.dim_s))
        throw SplitMismatch("requested split (" + std::to_string(split->first) + ", " +
                            std::to_string(split->second) + ") but the spectrum gives (" +
                            std::to_string(cc.split.dim_u) + ", " + std::to_string(cc.split.dim_s) + ")");
    const int u = cc.split.dim_u, s = cc.split.dim_s;
    const double radius = 1.1 * R;

    double mu = -kInf, inf_ml = kInf, sup_B = 0.0;
    std::uint64_t i = 0;
    for (int taken = 0; taken < sample_count; ++i) {
        Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
        if (i > 0) {
            xi = halton_cube(i, n);
            if (xi.squaredNorm() > 1.0) continue;
            xi *= radius;
        }
        ++taken;
        Eigen::MatrixXd Jl = cc.split.P_inv * jacobian_fd(f, cc.from_local(xi)) * cc.split.P;
        if (s > 0)
            mu = std::max(mu, logarithmic_norm(Jl.bottomRightCorner(s, s)) + op_norm(Jl.bottomLeftCorner(s, u)));
        if (u > 0) {
            inf_ml = std::min(inf_ml, lower_log_norm(Jl.topLeftCorner(u, u)));
            sup_B = std::max(sup_B, op_norm(Jl.topRightCorner(u, s)));
        }
    }
    cc.sample_count = sample_count;
    cc.mu_arrow = mu;
    cc.xi_arrow = u > 0 ? inf_ml - sup_B : kInf;
    cc.cone_condition = cc.mu_arrow < 0.0 && cc.mu_arrow < cc.xi_arrow;
    return cc;
}

SegmentReport verify_segment(const SegmentSpec& spec, const Field& f, const ConeConstants& cone) {
    const double g = spec.gamma;
    if (!(spec.r > 0.0)) throw std::invalid_argument("tube radius must be positive");
    if (!(g < 0.0) || !(cone.mu_arrow < g) || !(g < cone.xi_arrow))
        throw std::invalid_argument("gamma must satisfy mu_arrow < gamma < min(0, xi_arrow)");
    if (!(spec.alpha < g)) throw std::invalid_argument("alpha must be below gamma");
    if (!(spec.t_end > spec.t_begin) || spec.time_slices < 2 || spec.sphere_points < 1)
        throw std::invalid_argument("empty segment grid");
    const int u = cone.split.dim_u, s = cone.split.dim_s, n = u + s;

    SegmentReport rep;
    rep.t_exit = -kInf;
    rep.t_entry = -kInf;
    if (spec.a > 0.0) {
        if (u > 0) rep.t_exit = std::log(spec.a / (spec.r * (cone.xi_arrow - g))) / (g - spec.alpha);
        if (s > 0) rep.t_entry = std::log(spec.a / (spec.r * (g - cone.mu_arrow))) / (g - spec.alpha);
    }
    rep.t_start = std::max({spec.t_begin, rep.t_exit, rep.t_entry});

    auto f_local = [&](const Eigen::VectorXd& xi) { return Eigen::VectorXd(cone.split.P_inv * f(cone.from_local(xi))); };

    for (int j = 0; j < spec.time_slices; ++j) {
        SegmentSlice sl;
        sl.t = spec.t_begin + (spec.t_end - spec.t_begin) * j / (spec.time_slices - 1);
        sl.radius = spec.r * std::exp(g * sl.t);
        const double rho = sl.radius;
        Eigen::VectorXd zp = spec.z_p(sl.t);
        Eigen::VectorXd xp = cone.to_local(zp);
        if (xp.norm() + std::sqrt(2.0) * rho > cone.R)
            throw TubeOutsideRegion("tube leaves the cone region at t = " + std::to_string(sl.t));
        Eigen::VectorXd fp = cone.split.P_inv * f(zp);
        Eigen::VectorXd d = cone.split.P_inv * spec.delta(sl.t);
        const double shrink = 2.0 * g * rho * rho;

        sl.exit_direct = kInf;
        sl.entry_direct = -kInf;
        for (int i = 1; i <= spec.sphere_points; ++i) {
            if (u > 0) {
                Eigen::VectorXd off(n);
                off.head(u) = rho * unit_or_axis(halton_cube(i, u));
                Eigen::VectorXd hy = s > 0 ? halton_cube(i, s, u) : Eigen::VectorXd();
                if (s > 0 && hy.norm() > 1.0) hy.normalize();
                if (s > 0) off.tail(s) = rho * hy;
                Eigen::VectorXd df = f_local(xp + off) - fp - d;
                sl.exit_direct = std::min(sl.exit_direct, 2.0 * off.head(u).dot(df.head(u)) - shrink);
                ++rep.sample_count;
            }
            if (s > 0) {
                Eigen::VectorXd off(n);
                off.tail(s) = rho * unit_or_axis(halton_cube(i, s));
                Eigen::VectorXd hx = u > 0 ? halton_cube(i, u, s) : Eigen::VectorXd();
                if (u > 0 && hx.norm() > 1.0) hx.normalize();
                if (u > 0) off.head(u) = rho * hx;
                Eigen::VectorXd df = f_local(xp + off) - fp - d;
                sl.entry_direct = std::max(sl.entry_direct, 2.0 * off.tail(s).dot(df.tail(s)) - shrink);
                ++rep.sample_count;
            }
        }
        const double forcing = spec.a * std::exp(spec.alpha * sl.t);
        sl.exit_sufficient = u > 0 ? 2.0 * rho * (rho * (cone.xi_arrow - g) - forcing) : kInf;
        sl.entry_sufficient = s > 0 ? -2.0 * rho * (rho * (g - cone.mu_arrow) - forcing) : -kInf;
        if (sl.exit_sufficient > 0.0 && sl.entry_sufficient < 0.0 && !(sl.exit_direct > 0.0 && sl.entry_direct < 0.0))
            rep.sufficient_implies_direct = false;
        rep.slices.push_back(sl);
    }

    rep.t_direct = kInf;
    for (int j = spec.time_slices - 1; j >= 0; --j) {
        const auto& sl = rep.slices[j];
        if (!(sl.exit_direct > 0.0 && sl.entry_direct < 0.0)) break;
        rep.t_direct = sl.t;
    }
    rep.min_exit_margin = kInf;
    rep.max_entry_margin = -kInf;
    int counted = 0;
    for (const auto& sl : rep.slices) {
        if (sl.t < rep.t_start) continue;
        ++counted;
        rep.min_exit_margin = std::min(rep.min_exit_margin, sl.exit_direct);
        rep.max_entry_margin = std::max(rep.max_entry_margin, sl.entry_direct);
    }
    rep.verified = counted > 0 && rep.min_exit_margin > 0.0 && rep.max_entry_margin < 0.0;
    return rep;
}

double delta_amplitude(const std::vector<double>& t, const std::vector<double>& delta_norm, double alpha) {
    if (t.size() != delta_norm.size()) throw std::invalid_argument("delta_amplitude: size mismatch");
    double a = 0.0;
    for (size_t i = 0; i < t.size(); ++i) a = std::max(a, delta_norm[i] * std::exp(-alpha * t[i]));
    return a;
}

TimeCurve sampled_curve(std::vector<double> t, std::vector<Eigen::VectorXd> z) {
    if (t.empty() || t.size() != z.size()) throw std::invalid_argument("sampled_curve: bad samples");
    return [t = std::move(t), z = std::move(z)](double when) { return interpolate(t, z, when); };
}

ShadowReport shadow_distance(const std::vector<double>& tau_p, const std::vector<Eigen::VectorXd>& z_p,
                             const std::vector<double>& tau_ref, const std::vector<Eigen::VectorXd>& z_ref,
                             double gamma, double tau_lo, double tau_hi, double floor) {
    if (tau_p.size() != z_p.size() || tau_ref.size() != z_ref.size() || tau_p.empty() || tau_ref.empty())
        throw std::invalid_argument("shadow_distance: bad samples");
    const double lo = std::max(tau_p.front(), tau_ref.front());
    const double hi = std::min(tau_p.back(), tau_ref.back());
    if (!(lo <= hi)) throw std::invalid_argument("shadow_distance: the two grids do not overlap");
    if (tau_hi <= tau_lo) {
        tau_lo = lo;
        tau_hi = hi;
    }
    ShadowReport rep;
    std::vector<double> fx, fy;
    for (size_t i = 0; i < tau_p.size(); ++i) {
        const double tau = tau_p[i];
        if (tau < lo || tau > hi) continue;
        double d = (z_p[i] - interpolate(tau_ref, z_ref, tau)).norm();
        double ratio = d * std::exp(-gamma * tau);
        rep.tau.push_back(tau);
        rep.distance.push_back(d);
        rep.ratio.push_back(ratio);
        rep.sup_ratio = std::max(rep.sup_ratio, ratio);
        if (tau >= tau_lo && tau <= tau_hi && d > floor && d > 0.0) {
            fx.push_back(tau);
            fy.push_back(std::log(d));
        }
    }
    rep.slope_points = static_cast<int>(fx.size());
    rep.log_slope = fx.size() >= 3 ? linear_slope(fx, fy) : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> rx, ry;
    for (size_t i = rep.tau.size() / 2; i < rep.tau.size(); ++i)
        if (rep.ratio[i] > 0.0 && rep.distance[i] > floor) {
            rx.push_back(rep.tau[i]);
            ry.push_back(std::log(rep.ratio[i]));
        }
    rep.ratio_tail_slope = rx.size() >= 3 ? linear_slope(rx, ry) : 0.0;
    return rep;
}

std::vector<Eigen::VectorXd> reversed_ejection_reference(const ClusterGeometry& geo, const Eigen::VectorXd& z_end,
                                                         double tau_end, const std::vector<double>& taus,
                                                         double rel_tol) {
    const int n = static_cast<int>(z_end.size());
    const int half = (n - 2) / 2;
    if (n != 2 + 2 * geo.shape_dim()) throw std::invalid_argument("state does not match the cluster");
    auto flip = [&](Eigen::VectorXd z) {
        z[1] = -z[1];
        z.tail(half) = -z.tail(half);
        return z;
    };
    double span = 0.0;
    for (double t : taus) {
        if (t > tau_end) throw std::invalid_argument("reference times must not exceed tau_end");
        span = std::max(span, tau_end - t);
    }
    Eigen::VectorXd start = flip(z_end);
    Vec<double> y0(start.data(), start.data() + n);
    Rhs<double> rhs = [&](const DoubleDouble&, const Vec<double>& y, Vec<double>& dy) {
        Eigen::VectorXd d = field_autonomous(Eigen::Map<const Eigen::VectorXd>(y.data(), n), geo);
        dy.assign(d.data(), d.data() + n);
    };
    std::vector<Eigen::VectorXd> out;
    out.reserve(taus.size());
    if (span == 0.0) {
        for (size_t i = 0; i < taus.size(); ++i) out.push_back(z_end);
        return out;
    }
    IntegratorConfig cfg;
    cfg.rel_tol = rel_tol;
    cfg.abs_tol = 1e-300;
    auto traj = integrate<double>(rhs, DoubleDouble(0.0), y0, DoubleDouble(span), cfg);
    if (traj.reason != StopReason::reached_end)
        throw std::runtime_error("ejection orbit integration stopped: " + to_string(traj.reason));
    for (double t : taus) {
        Vec<double> y = traj.eval(DoubleDouble(tau_end) - DoubleDouble(t));
        out.push_back(flip(Eigen::Map<Eigen::VectorXd>(y.data(), n)));
    }
    return out;
}

}  // namespace nbcoll
