#include "nbcoll/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nbcoll {

namespace {

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r_squared = 0.0;
};

// Weighted least squares y = a + b x.
LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>* w = nullptr) {
    double sw = 0, sx = 0, sy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double wi = w ? (*w)[i] : 1.0;
        sw += wi;
        sx += wi * x[i];
        sy += wi * y[i];
    }
    double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double wi = w ? (*w)[i] : 1.0;
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += wi * dx * dx;
        sxy += wi * dx * dy;
        syy += wi * dy * dy;
    }
    LineFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    if (syy <= 0)
        f.r_squared = 1.0;
    else
        f.r_squared = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    return f;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    size_t k = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + k, v.end());
    double hi = v[k];
    if (v.size() % 2) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + k);
    return 0.5 * (lo + hi);
}

// Focus size and its time derivative about the focus center of mass.
std::pair<double, double> size_and_rate(const State& s, const MassSystem& m, const ClusterPartition& part) {
    const auto& g = part.focus_members();
    double M = m.subtotal(g);
    Vec2 c{}, cd{};
    for (int i : g) {
        c += m[i] * s.q[i];
        cd += m[i] * s.qdot[i];
    }
    c = c / M;
    cd = cd / M;
    double I0 = 0, half_dI0 = 0;
    for (int i : g) {
        Vec2 d = s.q[i] - c, dv = s.qdot[i] - cd;
        I0 += m[i] * norm2(d);
        half_dI0 += m[i] * dot(d, dv);
    }
    double r = std::sqrt(I0);
    return {r, half_dI0 / r};
}

// Cumulative total variation of theta, interpolated linearly in tau.
double cumulative_at(const std::vector<double>& tau, const std::vector<double>& S, double at) {
    if (at <= tau.front()) return S.front();
    if (at >= tau.back()) return S.back();
    auto it = std::upper_bound(tau.begin(), tau.end(), at);
    size_t i = static_cast<size_t>(it - tau.begin());
    double f = (at - tau[i - 1]) / (tau[i] - tau[i - 1]);
    return S[i - 1] + f * (S[i] - S[i - 1]);
}

}  // namespace

CollapseSeries collapse_series(const NBodyTrajectory& traj) {
    CollapseSeries out;
    out.states = traj.states();
    out.taus = traj.taus();
    out.mu0.reserve(traj.size());
    for (size_t i = 0; i < traj.size(); ++i) out.mu0.push_back(to_double(traj.mu0(i)));
    return out;
}

PowerLawFit fit_power_x(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_power: size mismatch");
    std::vector<double> lx, ly;
    PowerLawFit out;
    out.x_min = std::numeric_limits<double>::infinity();
    out.x_max = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= lo && x[i] <= hi)) continue;
        if (!(y[i] > 0) || !std::isfinite(y[i])) throw std::invalid_argument("fit_power: y must be positive in the window");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
        out.x_min = std::min(out.x_min, x[i]);
        out.x_max = std::max(out.x_max, x[i]);
    }
    out.n_points = lx.size();
    if (out.n_points < 10)
        throw InsufficientWindow("fit window holds " + std::to_string(out.n_points) + " points, need 10");
    LineFit f = line_fit(lx, ly);
    out.exponent = f.slope;
    out.constant = std::exp(f.intercept);
    out.r_squared = f.r_squared;
    return out;
}

PowerLawFit fit_power(const std::vector<DoubleDouble>& t, const std::vector<double>& y, const DoubleDouble& T,
                      double lo, double hi) {
    std::vector<double> x(t.size());
    for (size_t i = 0; i < t.size(); ++i) x[i] = to_double(T - t[i]);
    return fit_power_x(x, y, lo, hi);
}

ExpFit fit_exponential(const std::vector<double>& tau, const std::vector<double>& y) {
    if (tau.size() != y.size()) throw std::invalid_argument("fit_exponential: size mismatch");
    if (y.empty()) throw InsufficientWindow("exponential fit on an empty series");
    std::vector<double> xs, ls;
    bool all_zero = true;
    for (size_t i = 0; i < y.size(); ++i) {
        double a = std::abs(y[i]);
        if (a != 0.0) all_zero = false;
        if (a > 0 && std::isfinite(a)) {
            xs.push_back(tau[i]);
            ls.push_back(std::log(a));
        }
    }
    ExpFit out;
    out.n_points = xs.size();
    if (all_zero) {
        out.exact_zero = true;
        out.n_points = y.size();
        return out;
    }
    if (xs.size() < 3) throw InsufficientWindow("exponential fit needs at least 3 nonzero samples");
    LineFit f = line_fit(xs, ls);
    out.slope = f.slope;
    out.E = -f.slope;
    out.C = std::exp(f.intercept);
    out.r_squared = f.r_squared;
    return out;
}

TLEstimate estimate_T_series(const std::vector<DoubleDouble>& t, const std::vector<double>& r, double decades,
                             double skip_decades) {
    if (t.size() != r.size() || t.size() < 3) throw InsufficientWindow("collapse series too short");
    // terminal stretch over which r decreases
    size_t end = t.size() - 1;
    size_t begin = end;
    while (begin > 0 && r[begin - 1] > r[begin]) --begin;
    double r_deep = r[end];
    if (!(r_deep > 0)) throw InsufficientWindow("non-collapsing segment: r vanished or is invalid");
    double r_lo = r_deep * std::pow(10.0, skip_decades);
    double r_hi = r_deep * std::pow(10.0, skip_decades + decades);
    if (r[begin] < r_hi * (1 - 1e-12))
        throw InsufficientWindow("non-collapsing segment: r decreases over only " +
                                 std::to_string(std::log10(r[begin] / r_deep)) + " decades");
    std::vector<size_t> idx;
    for (size_t i = begin; i <= end; ++i)
        if (r[i] >= r_lo * (1 - 1e-12) && r[i] <= r_hi) idx.push_back(i);
    if (idx.size() < 3) throw InsufficientWindow("collapse window holds fewer than 3 samples");

    size_t deep = idx.back();
    const DoubleDouble& t_ref = t[deep];
    std::vector<double> dt, y, w;
    for (size_t i : idx) {
        double yi = r[i] * std::sqrt(r[i]);
        dt.push_back(to_double(t[i] - t_ref));
        y.push_back(yi);
        w.push_back(1.0 / (yi * yi));
    }
    LineFit f = line_fit(dt, y, &w);
    TLEstimate out;
    out.n_points = idx.size();
    out.rate = -f.slope;
    if (!(out.rate > 0)) throw InsufficientWindow("non-collapsing segment: r^{3/2} not decreasing in t");
    out.T_linear = t_ref + DoubleDouble(f.intercept / out.rate);
    // local refinement on the two deepest samples
    size_t prev = idx[idx.size() - 2];
    double y1 = r[deep] * std::sqrt(r[deep]), y0 = r[prev] * std::sqrt(r[prev]);
    double h = to_double(t[deep] - t[prev]);
    out.T = t_ref + DoubleDouble(y1 * h / (y0 - y1));
    out.uncertainty = std::abs(to_double(out.T - out.T_linear));
    return out;
}

TLEstimate estimate_T_L(const std::vector<State>& states, const MassSystem& m, const ClusterPartition& part,
                        double decades, double skip_decades) {
    std::vector<DoubleDouble> t;
    std::vector<double> r;
    t.reserve(states.size());
    r.reserve(states.size());
    for (const auto& s : states) {
        t.push_back(s.t);
        r.push_back(size_and_rate(s, m, part).first);
    }
    TLEstimate out = estimate_T_series(t, r, decades, skip_decades);

    // deepest sample actually used by the series fit
    double r_lo = r.back() * std::pow(10.0, skip_decades);
    size_t deep = states.size() - 1;
    while (deep > 0 && r[deep] < r_lo * (1 - 1e-12)) --deep;
    const State& s = states[deep];
    auto [rd, rdot] = size_and_rate(s, m, part);
    if (rdot < 0) {
        DoubleDouble T_local = s.t + DoubleDouble((2.0 / 3.0) * rd / (-rdot));
        out.T = T_local;
        out.uncertainty = std::abs(to_double(out.T - out.T_linear));
    }

    auto obs = cluster_observables(s, m, part);
    Vec2 acc{};
    for (const auto& f : external_forces(s, m, part)) acc += f;
    acc = acc / obs.M_G;
    double d = to_double(out.T - s.t);
    out.L = obs.c_G + d * obs.cdot_G + (0.5 * d * d) * acc;
    return out;
}

double cc_residual(const State& s, const MassSystem& m, const ClusterPartition& part, const Vec2& L, double x) {
    const auto& g = part.focus_members();
    double scale = std::pow(x, 2.0 / 3.0);
    Vec2 shift = s.origin - L;
    Vec2List xi;
    for (int i : g) xi.push_back((s.q[i] + shift) / scale);
    double sum = 0.0;
    for (size_t a = 0; a < g.size(); ++a) {
        Vec2 res = (2.0 / 9.0) * m[g[a]] * xi[a];
        for (size_t b = 0; b < g.size(); ++b) {
            if (a == b) continue;
            Vec2 d = xi[b] - xi[a];
            double rr = norm(d);
            res += (m[g[a]] * m[g[b]] / (rr * rr * rr)) * d;
        }
        sum += norm2(res);
    }
    return std::sqrt(sum);
}

RateReport verify_collision_rates(const CollapseSeries& series, const MassSystem& m, const ClusterPartition& part,
                                  const DoubleDouble& T, const Vec2& L, const RateOptions& opt) {
    const auto& states = series.states;
    RateReport rep;
    rep.window_lo = opt.window_lo;
    rep.window_hi = opt.window_hi;
    if (!(opt.window_lo > 0 && opt.window_hi > opt.window_lo))
        throw std::invalid_argument("rate window must satisfy 0 < lo < hi");

    std::vector<double> x_all(states.size());
    for (size_t i = 0; i < states.size(); ++i) x_all[i] = to_double(T - states[i].t);

    std::vector<size_t> win;
    for (size_t i = 0; i < states.size(); ++i)
        if (x_all[i] >= opt.window_lo && x_all[i] <= opt.window_hi) win.push_back(i);
    rep.n_points = win.size();
    if (win.size() < 10) throw InsufficientWindow("rate window holds " + std::to_string(win.size()) + " samples");
    double xmin = x_all[win.front()], xmax = xmin;
    for (size_t i : win) {
        xmin = std::min(xmin, x_all[i]);
        xmax = std::max(xmax, x_all[i]);
    }
    if (xmax / xmin < 100.0) throw InsufficientWindow("rate window covers less than two decades of T - t");

    std::vector<double> xs, J, Jd, Jdd, U, K, I0, H, mu, mudot;
    for (size_t i : win) {
        const State& s = states[i];
        double x = x_all[i];
        JMoments jm = cluster_j_moments(s, m, part, L);
        auto obs = cluster_observables(s, m, part);
        xs.push_back(x);
        J.push_back(jm.J);
        Jd.push_back(jm.Jdot);
        Jdd.push_back(jm.Jddot);
        U.push_back(jm.U);
        K.push_back(jm.K);
        I0.push_back(obs.I0_G);
        H.push_back(obs.H_G);
        mu.push_back(series.mu0.empty() ? obs.mu0_G : series.mu0[i]);
        double md = 0.0;
        const auto& g = part.focus_members();
        auto fext = external_forces(s, m, part);
        Vec2 c = (obs.c_G - s.origin);
        for (size_t a = 0; a < g.size(); ++a) md += cross(s.q[g[a]] - c, fext[a]);
        mudot.push_back(md);
    }
    size_t n = xs.size();
    size_t k_deep = 0;
    for (size_t k = 1; k < n; ++k)
        if (xs[k] < xs[k_deep]) k_deep = k;

    double log_sum = 0.0;
    for (size_t k = 0; k < n; ++k) log_sum += std::log(J[k] / std::pow(xs[k], 4.0 / 3.0));
    rep.A_hat = std::exp(log_sum / n);
    const double A = rep.A_hat;

    auto check = [&](const std::string& name, const std::vector<double>& v, double power, double target) {
        RatioCheck c;
        c.name = name;
        c.target = target;
        for (size_t k = 0; k < n; ++k) {
            double ratio = v[k] * std::pow(xs[k], power);
            c.max_deviation = std::max(c.max_deviation, std::abs(ratio / target - 1.0));
            if (k == k_deep) c.limit = ratio;
        }
        rep.ratio_checks.push_back(c);
    };
    check("J", J, -4.0 / 3.0, A);
    check("Jdot", Jd, -1.0 / 3.0, -4.0 * A / 3.0);
    check("Jddot", Jdd, 2.0 / 3.0, 4.0 * A / 9.0);
    check("U", U, 2.0 / 3.0, 2.0 * A / 9.0);
    check("K", K, 2.0 / 3.0, 2.0 * A / 9.0);

    rep.J_fit = fit_power_x(xs, J, opt.window_lo, opt.window_hi);
    rep.I0_fit = fit_power_x(xs, I0, opt.window_lo, opt.window_hi);
    rep.U_fit = fit_power_x(xs, U, opt.window_lo, opt.window_hi);
    rep.K_fit = fit_power_x(xs, K, opt.window_lo, opt.window_hi);

    // energy limit over the last decade of the window
    double last_decade = xmin * 10.0;
    double hmin = std::numeric_limits<double>::infinity(), hmax = -hmin;
    for (size_t k = 0; k < n; ++k)
        if (xs[k] <= last_decade) {
            hmin = std::min(hmin, H[k]);
            hmax = std::max(hmax, H[k]);
        }
    rep.H_G_limit = H[k_deep];
    rep.H_G_tail_oscillation = hmax - hmin;

    // upper-bound checks: sup ratio plus the trend of the ratio toward the collision
    rep.mu_floor = std::abs(series.mu0.empty() ? cluster_observables(states.back(), m, part).mu0_G : series.mu0.back());
    auto bound = [&](const std::vector<double>& v, double power, double floor, double& sup, double& slope) {
        std::vector<double> lx, lr;
        sup = 0.0;
        size_t used = 0;
        for (size_t k = 0; k < n; ++k) {
            if (floor > 0 && std::abs(v[k]) <= kMuFloorFactor * floor) continue;
            ++used;
            double ratio = std::abs(v[k]) / std::pow(xs[k], power);
            sup = std::max(sup, ratio);
            if (ratio > 0) {
                lx.push_back(-std::log(xs[k]));
                lr.push_back(std::log(ratio));
            }
        }
        slope = lx.size() >= 3 ? line_fit(lx, lr).slope : 0.0;
        return used;
    };
    rep.mu_points = bound(mu, 7.0 / 3.0, rep.mu_floor, rep.mu_bound, rep.mu_slope);
    if (rep.mu_floor > 0 && rep.mu_points < n)
        rep.notes.push_back("mu fits use " + std::to_string(rep.mu_points) + " of " + std::to_string(n) +
                            " window samples (residual floor)");
    bound(mudot, 4.0 / 3.0, 0.0, rep.mudot_bound, rep.mudot_slope);

    // blow-up side: r against tau, v, spin, over the whole series
    BlowupSeries bs = mcgehee_observables(states, m, part, L, T, series.taus, series.mu0);
    for (const auto& w : bs.warnings) rep.notes.push_back(w);
    std::vector<double> tw, lr;
    for (size_t i : win) {
        tw.push_back(bs.states[i].tau);
        lr.push_back(std::log(bs.states[i].r));
    }
    rep.r_tau_slope = line_fit(tw, lr).slope;
    {
        const size_t chunks = 8;
        size_t per = std::max<size_t>(3, tw.size() / chunks);
        rep.E1 = std::numeric_limits<double>::infinity();
        rep.E2 = -rep.E1;
        for (size_t b = 0; b + per <= tw.size(); b += per) {
            std::vector<double> a(tw.begin() + b, tw.begin() + b + per), c(lr.begin() + b, lr.begin() + b + per);
            double e = -line_fit(a, c).slope;
            rep.E1 = std::min(rep.E1, e);
            rep.E2 = std::max(rep.E2, e);
        }
    }
    rep.v_target = -(2.0 / 3.0) * std::pow(A, 0.75);
    {
        double sum = 0.0;
        int cnt = 0;
        for (size_t k = 0; k < n; ++k)
            if (xs[k] <= last_decade) {
                double v = bs.states[win[k]].v;
                sum += v;
                ++cnt;
                rep.v_tail_deviation = std::max(rep.v_tail_deviation, std::abs(v / rep.v_target - 1.0));
            }
        rep.v_tail = cnt ? sum / cnt : 0.0;
    }

    std::vector<double> tau_all, S(bs.states.size(), 0.0);
    for (size_t i = 0; i < bs.states.size(); ++i) {
        tau_all.push_back(bs.states[i].tau);
        if (i > 0) S[i] = S[i - 1] + std::abs(bs.states[i].theta - bs.states[i - 1].theta);
    }
    rep.spin_total = S.back();
    {
        double x_last = x_all.back();
        double s_start = S.back();
        for (size_t i = 0; i < states.size(); ++i)
            if (x_all[i] <= 10.0 * x_last) {
                s_start = S[i];
                break;
            }
        rep.spin_tail = S.back() - s_start;
        for (const auto& row : spin_tail_table(bs, 3)) rep.spin_doubling.push_back(row.variation);
    }

    // shape residual, per decade from the window top down to the deepest sample
    std::vector<std::pair<double, double>> res;
    for (size_t i = 0; i < states.size(); ++i)
        if (x_all[i] > 0 && x_all[i] <= opt.window_hi) res.push_back({x_all[i], cc_residual(states[i], m, part, L, x_all[i])});
    if (!res.empty()) {
        auto deep_it = std::min_element(res.begin(), res.end());
        rep.cc_residual_tail = deep_it->second;
        int top = static_cast<int>(std::floor(std::log10(opt.window_hi)));
        int bottom = static_cast<int>(std::floor(std::log10(deep_it->first)));
        for (int d = top; d >= bottom; --d) {
            std::vector<double> v;
            for (auto& [x, val] : res)
                if (static_cast<int>(std::floor(std::log10(x))) == d) v.push_back(val);
            if (v.size() >= 3) rep.cc_residual_medians.push_back(median(v));
        }
        rep.cc_residual_decreasing = rep.cc_residual_medians.size() >= 2;
        for (size_t k = 1; k < rep.cc_residual_medians.size(); ++k)
            if (!(rep.cc_residual_medians[k] < rep.cc_residual_medians[k - 1])) rep.cc_residual_decreasing = false;
    }
    return rep;
}

PerturbationDecay verify_perturbation_decay(const BlowupSeries& series, double tau_lo, double tau_hi) {
    bool all = tau_lo == 0.0 && tau_hi == 0.0;
    PerturbationDecay out;
    if (series.states.empty()) throw InsufficientWindow("empty blow-up series");
    out.mu_floor = std::abs(series.states.back().mu);
    std::vector<double> tau, lr, dv, dw, tidal, tau_mu, mur, spin;
    for (size_t i = 0; i < series.states.size(); ++i) {
        const auto& b = series.states[i];
        if (!all && (b.tau < tau_lo || b.tau > tau_hi)) continue;
        const auto& p = series.perturbations[i];
        tau.push_back(b.tau);
        lr.push_back(std::log(b.r));
        dv.push_back(p.delta_v);
        dw.push_back(p.delta_w.size() ? p.delta_w.norm() : 0.0);
        tidal.push_back(p.dv_tidal);
        if (out.mu_floor > 0 && std::abs(b.mu) <= kMuFloorFactor * out.mu_floor) continue;
        tau_mu.push_back(b.tau);
        mur.push_back(p.delta_theta);
        spin.push_back(p.dv_spin);
    }
    out.mu_points = tau_mu.size();
    if (tau.size() < 3) throw InsufficientWindow("perturbation fit needs at least 3 samples");
    out.tau_span = tau.back() - tau.front();
    bool all_zero = true;
    for (size_t k = 0; k < tau.size() && all_zero; ++k)
        all_zero = dv[k] == 0.0 && dw[k] == 0.0 && tidal[k] == 0.0;
    // an isolated cluster is an exact-zero case and needs no decay window
    if (!all_zero && out.tau_span < 10.0) throw InsufficientWindow("tau series spans less than 10 units");
    out.r_slope = line_fit(tau, lr).slope;
    out.terms = {{"delta_v", fit_exponential(tau, dv)}, {"delta_w", fit_exponential(tau, dw)}};
    // mu terms are dropped when every sample sits on the residual floor
    if (tau_mu.size() >= 3) {
        out.terms.push_back({"mu_over_sqrt_r", fit_exponential(tau_mu, mur)});
        out.terms.push_back({"spin_v", fit_exponential(tau_mu, spin)});
    }
    out.terms.push_back({"tidal_v", fit_exponential(tau, tidal)});
    out.isolated = true;
    out.decaying = true;
    for (const auto& t : out.terms) {
        if (t.fit.exact_zero) continue;
        out.isolated = false;
        if (!(t.fit.E > 0)) out.decaying = false;
    }
    auto chain = [&](const char* name) {
        for (const auto& t : out.terms)
            if (t.name == name && !t.fit.exact_zero && out.r_slope != 0.0) return t.fit.slope / out.r_slope;
        return 0.0;
    };
    out.spin_chain = chain("spin_v");
    out.mu_chain = chain("mu_over_sqrt_r");
    out.tidal_chain = chain("tidal_v");
    return out;
}

std::vector<SpinTailRow> spin_tail_table(const BlowupSeries& series, int halvings) {
    if (series.states.size() < 2) throw InsufficientWindow("spin table needs at least two samples");
    std::vector<double> tau, S(series.states.size(), 0.0);
    for (size_t i = 0; i < series.states.size(); ++i) {
        tau.push_back(series.states[i].tau);
        if (i > 0) S[i] = S[i - 1] + std::abs(series.states[i].theta - series.states[i - 1].theta);
    }
    std::vector<SpinTailRow> rows;
    double t0 = tau.front(), span = tau.back() - t0;
    for (int k = 0; k < halvings; ++k) {
        SpinTailRow row;
        row.tau_hi = t0 + span / std::pow(2.0, k);
        row.tau_lo = t0 + span / std::pow(2.0, k + 1);
        row.variation = cumulative_at(tau, S, row.tau_hi) - cumulative_at(tau, S, row.tau_lo);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace nbcoll
