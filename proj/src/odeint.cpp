#include "nbcoll/odeint.hpp"

#include <Eigen/Dense>

namespace nbcoll {

void IntegratorConfig::validate() const {
    if (!(rel_tol > 0.0 && rel_tol <= 1e-2)) throw std::invalid_argument("rel_tol must lie in (0, 1e-2]");
    if (!(abs_tol > 0.0 && abs_tol <= 1e-2)) throw std::invalid_argument("abs_tol must lie in (0, 1e-2]");
    if (!(max_step > 0.0)) throw std::invalid_argument("max_step must be positive");
    if (initial_step < 0.0) throw std::invalid_argument("initial_step must be non-negative");
    if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::reached_end: return "reached_end";
        case StopReason::event: return "event";
        case StopReason::step_underflow: return "step_underflow";
        case StopReason::max_steps: return "max_steps";
        case StopReason::nonfinite: return "nonfinite";
    }
    return "unknown";
}

namespace dp {

namespace {

// p'(s) = sum c_j s^j, j = 0..4, fixed by p'(0), p'(1/3), p'(2/3), p'(1) and
// the integral of p' over [0,1]. Row k of the inverse maps the data
// (f0, fa, fb, f1, delta) to c_k.
const Eigen::Matrix<double, 5, 5>& hb_inverse() {
    static const Eigen::Matrix<double, 5, 5> inv = [] {
        Eigen::Matrix<double, 5, 5> A;
        const double nodes[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
        for (int r = 0; r < 4; ++r)
            for (int j = 0; j < 5; ++j) A(r, j) = std::pow(nodes[r], j);
        for (int j = 0; j < 5; ++j) A(4, j) = 1.0 / (j + 1);
        return Eigen::Matrix<double, 5, 5>(A.inverse());
    }();
    return inv;
}

}  // namespace

DenseWeights dense_weights(double th) {
    const auto& inv = hb_inverse();
    double w[5] = {0, 0, 0, 0, 0};
    double pw = th;
    for (int j = 0; j < 5; ++j) {
        double basis = pw / (j + 1);  // integral of s^j over [0, theta]
        for (int d = 0; d < 5; ++d) w[d] += basis * inv(j, d);
        pw *= th;
    }
    return {w[0], w[1], w[2], w[3], w[4]};
}

DenseWeights dense_derivative_weights(double th) {
    const auto& inv = hb_inverse();
    double w[5] = {0, 0, 0, 0, 0};
    double pw = 1.0;
    for (int j = 0; j < 5; ++j) {
        for (int d = 0; d < 5; ++d) w[d] += pw * inv(j, d);
        pw *= th;
    }
    return {w[0], w[1], w[2], w[3], w[4]};
}

}  // namespace dp

namespace {

// Dormand-Prince coefficients, rounded once in the state precision
template <class T>
struct Tableau {
    static T q(double num, double den) { return T(num) / T(den); }
    const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    const T a21 = q(1, 5);
    const T a31 = q(3, 40), a32 = q(9, 40);
    const T a41 = q(44, 45), a42 = q(-56, 15), a43 = q(32, 9);
    const T a51 = q(19372, 6561), a52 = q(-25360, 2187), a53 = q(64448, 6561), a54 = q(-212, 729);
    const T a61 = q(9017, 3168), a62 = q(-355, 33), a63 = q(46732, 5247), a64 = q(49, 176), a65 = q(-5103, 18656);
    const T b1 = q(35, 384), b3 = q(500, 1113), b4 = q(125, 192), b5 = q(-2187, 6784), b6 = q(11, 84);
    const T e1 = q(71, 57600), e3 = q(-71, 16695), e4 = q(71, 1920), e5 = q(-17253, 339200), e6 = q(22, 525),
            e7 = q(-1, 40);
};

// continuous extension of order 4
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

using std::abs;
using nbcoll::abs;

template <class T>
double err_norm(const Vec<T>& err, const Vec<T>& y0, const Vec<T>& y1, const IntegratorConfig& cfg) {
    const size_t n = err.size(), g = static_cast<size_t>(cfg.group_size);
    double acc = 0.0;
    size_t groups = 0;
    for (size_t start = 0; start < n; start += g) {
        size_t end = std::min(n, start + g);
        double e2 = 0.0, a2 = 0.0, b2 = 0.0;
        for (size_t i = start; i < end; ++i) {
            double e = to_double(err[i]), a = to_double(y0[i]), b = to_double(y1[i]);
            e2 += e * e;
            a2 += a * a;
            b2 += b * b;
        }
        double atol = cfg.abs_tol;
        if (groups < cfg.group_abs_tol.size()) atol = std::max(atol, cfg.group_abs_tol[groups]);
        ++groups;
        if (e2 == 0.0) continue;
        double ratio = std::sqrt(e2) / (atol + cfg.rel_tol * std::sqrt(std::max(a2, b2)));
        acc += ratio * ratio;
    }
    return groups ? std::sqrt(acc / groups) : 0.0;
}

template <class T>
bool all_finite(const Vec<T>& v) {
    for (const auto& x : v)
        if (!std::isfinite(to_double(x))) return false;
    return true;
}

}  // namespace

template <class T>
size_t Trajectory<T>::locate(const DoubleDouble& when) const {
    if (t.size() < 2) throw std::out_of_range("trajectory has no steps");
    bool forward = t.back() >= t.front();
    auto before = [&](const DoubleDouble& a, const DoubleDouble& b) { return forward ? a < b : b < a; };
    if (before(when, t.front()) || before(t.back(), when)) throw std::out_of_range("time outside trajectory");
    // first sample strictly after `when`
    auto it = std::upper_bound(t.begin(), t.end(), when, before);
    size_t i = static_cast<size_t>(it - t.begin());
    if (i == 0) return 0;
    return std::min(i - 1, t.size() - 2);
}

template <class T>
Vec<T> Trajectory<T>::eval(const DoubleDouble& when) const {
    if (!has_dense()) throw std::logic_error("trajectory was integrated without dense output");
    size_t i = locate(when);
    DoubleDouble h = t[i + 1] - t[i];
    double hd = to_double(h);
    double th = to_double((when - t[i]) / h);
    auto w = dp::dense_weights(th);
    const auto &y0 = y[i], &y1 = y[i + 1], &f0 = f[i], &f1 = f[i + 1], &fa = f_mid[2 * i], &fb = f_mid[2 * i + 1];
    Vec<T> out(y0.size());
    for (size_t k = 0; k < y0.size(); ++k)
        out[k] = y0[k] + hd * (w.w0 * f0[k] + w.wa * fa[k] + w.wb * fb[k] + w.w1 * f1[k]) + w.wd * (y1[k] - y0[k]);
    return out;
}

template <class T>
Vec<T> Trajectory<T>::eval_derivative(const DoubleDouble& when) const {
    if (!has_dense()) throw std::logic_error("trajectory was integrated without dense output");
    size_t i = locate(when);
    DoubleDouble h = t[i + 1] - t[i];
    double hd = to_double(h);
    double th = to_double((when - t[i]) / h);
    auto w = dp::dense_derivative_weights(th);
    const auto &y0 = y[i], &y1 = y[i + 1], &f0 = f[i], &f1 = f[i + 1], &fa = f_mid[2 * i], &fb = f_mid[2 * i + 1];
    Vec<T> out(y0.size());
    for (size_t k = 0; k < y0.size(); ++k)
        out[k] = w.w0 * f0[k] + w.wa * fa[k] + w.wb * fb[k] + w.w1 * f1[k] + (w.wd / hd) * (y1[k] - y0[k]);
    return out;
}

template <class T>
Trajectory<T> integrate(const Rhs<T>& rhs, const DoubleDouble& t0, Vec<T> y0, const DoubleDouble& t_end,
                        const IntegratorConfig& cfg, const StepCallback<T>& on_step) {
    cfg.validate();
    static const Tableau<T> tb;
    const auto &a21 = tb.a21, &a31 = tb.a31, &a32 = tb.a32, &a41 = tb.a41, &a42 = tb.a42, &a43 = tb.a43;
    const auto &a51 = tb.a51, &a52 = tb.a52, &a53 = tb.a53, &a54 = tb.a54;
    const auto &a61 = tb.a61, &a62 = tb.a62, &a63 = tb.a63, &a64 = tb.a64, &a65 = tb.a65;
    const auto &b1 = tb.b1, &b3 = tb.b3, &b4 = tb.b4, &b5 = tb.b5, &b6 = tb.b6;
    const auto &e1 = tb.e1, &e3 = tb.e3, &e4 = tb.e4, &e5 = tb.e5, &e6 = tb.e6, &e7 = tb.e7;
    const double c2 = tb.c2, c3 = tb.c3, c4 = tb.c4, c5 = tb.c5;
    Trajectory<T> tr;
    const size_t n = y0.size();
    const double dir = t_end >= t0 ? 1.0 : -1.0;
    Vec<T> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y1(n), err(n);

    auto call = [&](const DoubleDouble& t, const Vec<T>& y, Vec<T>& out) {
        rhs(t, y, out);
        ++tr.rhs_evals;
    };

    DoubleDouble t = t0;
    call(t, y0, k1);
    tr.t.push_back(t);
    tr.y.push_back(y0);
    tr.f.push_back(k1);
    if (!all_finite(y0) || !all_finite(k1)) {
        tr.reason = StopReason::nonfinite;
        tr.message = "initial state or derivative not finite";
        return tr;
    }
    if (t0 == t_end) return tr;

    // initial step (Hairer-Norsett-Wanner heuristic)
    double h = cfg.initial_step;
    if (h == 0.0) {
        double span = std::abs(to_double(t_end - t0));
        double d0 = err_norm(y0, y0, y0, cfg), d1v = err_norm(k1, y0, y0, cfg);
        bool ok = std::isfinite(d0) && std::isfinite(d1v) && d0 >= 1e-5 && d1v >= 1e-5;
        double h0 = ok ? 0.01 * d0 / d1v : 1e-6 * span;
        h0 = std::min(h0, cfg.max_step);
        for (size_t i = 0; i < n; ++i) tmp[i] = y0[i] + dir * h0 * k1[i];
        call(t + dir * h0, tmp, k2);
        for (size_t i = 0; i < n; ++i) err[i] = k2[i] - k1[i];
        double d2 = err_norm(err, y0, y0, cfg) / h0;
        double dm = std::max(d1v, d2);
        double h1 = (std::isfinite(dm) && dm > 1e-15) ? std::pow(0.01 / dm, 0.2) : std::max(1e-6 * span, h0 * 1e-3);
        h = std::min({100 * h0, h1, cfg.max_step});
        if (!(h > 0.0) || !std::isfinite(h)) h = 1e-6 * span;
    }
    h = std::min(h, std::abs(to_double(t_end - t0)));

    const double safety = 0.9, beta = 0.04, expo = 0.2 - 0.75 * beta, facmin = 0.2;
    double err_old = 1e-4;
    bool last_rejected = false;
    Vec<T> y = y0;

    for (long step = 0;; ++step) {
        if (step >= cfg.max_steps) {
            tr.reason = StopReason::max_steps;
            tr.message = "maximum number of steps reached";
            return tr;
        }
        double remaining = std::abs(to_double(t_end - t));
        bool final_step = false;
        if (h >= remaining) {
            h = remaining;
            final_step = true;
        }
        // underflow: step no longer changes t, or is negligible next to t
        double tscale = std::max(std::abs(to_double(t)), 1e-300);
        if (h <= 1e-28 * tscale || h < 1e-300) {
            tr.reason = StopReason::step_underflow;
            tr.message = "step size underflow";
            return tr;
        }
        const double hs = dir * h;
        for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a21 * k1[i]);
        call(t + hs * c2, tmp, k2);
        for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
        call(t + hs * c3, tmp, k3);
        for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        call(t + hs * c4, tmp, k4);
        for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        call(t + hs * c5, tmp, k5);
        for (size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        DoubleDouble t_new = final_step ? t_end : t + hs;
        call(t + hs, tmp, k6);
        for (size_t i = 0; i < n; ++i)
            y1[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        call(t_new, y1, k7);
        for (size_t i = 0; i < n; ++i)
            err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);

        double en = all_finite(y1) && all_finite(k7) ? err_norm(err, y, y1, cfg) : std::numeric_limits<double>::infinity();
        if (!std::isfinite(en)) {
            ++tr.rejected;
            h *= facmin;
            last_rejected = true;
            if (h < 1e-300) {
                tr.reason = StopReason::nonfinite;
                tr.message = "non-finite derivative";
                return tr;
            }
            continue;
        }
        if (en > 1.0) {
            ++tr.rejected;
            h *= std::max(facmin, safety * std::pow(en, -expo));
            last_rejected = true;
            continue;
        }

        if (cfg.dense) {
            // 4th order continuous extension at 1/3 and 2/3, then derivatives there
            Vec<T> fa(n), fb(n);
            for (int which = 0; which < 2; ++which) {
                double th = which == 0 ? 1.0 / 3.0 : 2.0 / 3.0;
                double th1 = 1.0 - th;
                for (size_t i = 0; i < n; ++i) {
                    T r2 = y1[i] - y[i];
                    T r3 = hs * k1[i] - r2;
                    T r4 = r2 - hs * k7[i] - r3;
                    T r5 = hs * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
                    tmp[i] = y[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
                }
                call(t + hs * th, tmp, which == 0 ? fa : fb);
            }
            tr.f_mid.push_back(std::move(fa));
            tr.f_mid.push_back(std::move(fb));
        }

        t = t_new;
        y = y1;
        k1 = k7;
        tr.t.push_back(t);
        tr.y.push_back(y);
        tr.f.push_back(k1);

        double fac = en == 0.0 ? 10.0 : safety * std::pow(en, -expo) * std::pow(err_old, beta);
        fac = std::clamp(fac, facmin, last_rejected ? 1.0 : 10.0);
        err_old = std::max(en, 1e-4);
        last_rejected = false;
        h = std::min(h * fac, cfg.max_step);

        if (on_step && on_step(tr)) {
            tr.reason = StopReason::event;
            return tr;
        }
        if (final_step) {
            tr.reason = StopReason::reached_end;
            return tr;
        }
    }
}

template struct Trajectory<double>;
template struct Trajectory<DoubleDouble>;
template Trajectory<double> integrate(const Rhs<double>&, const DoubleDouble&, Vec<double>, const DoubleDouble&,
                                      const IntegratorConfig&, const StepCallback<double>&);
template Trajectory<DoubleDouble> integrate(const Rhs<DoubleDouble>&, const DoubleDouble&, Vec<DoubleDouble>,
                                            const DoubleDouble&, const IntegratorConfig&,
                                            const StepCallback<DoubleDouble>&);

}  // namespace nbcoll
