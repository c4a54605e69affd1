#include "nbcoll/nbody.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nbcoll {

Precision parse_precision(const std::string& s) {
    if (s == "double") return Precision::Double;
    if (s == "dd") return Precision::DoubleDouble;
    throw std::invalid_argument("precision must be 'double' or 'dd', got '" + s + "'");
}

std::string to_string(Precision p) { return p == Precision::Double ? "double" : "dd"; }

std::string to_string(CollisionOutcome o) {
    switch (o) {
        case CollisionOutcome::collision: return "collision";
        case CollisionOutcome::no_collision: return "no_collision";
        case CollisionOutcome::closest_approach: return "closest_approach";
        case CollisionOutcome::step_underflow: return "step_underflow";
        case CollisionOutcome::failed: return "failed";
    }
    return "unknown";
}

AnchoredLayout make_layout(const State& s, const ClusterPartition& part, bool with_tau) {
    part.validate(s.size());
    AnchoredLayout L;
    L.n = s.size();
    L.focus = part.focus_members();
    L.in_focus.assign(L.n, 0);
    for (int i : L.focus) L.in_focus[i] = 1;
    L.with_tau = with_tau;
    L.frame_origin = s.origin;
    double ext = 0.0, vel = 0.0;
    for (int i = 0; i < L.n; ++i) {
        ext = std::max(ext, norm(s.q[i] - s.q[0]));
        vel = std::max(vel, norm(s.qdot[i]));
    }
    if (ext > 0.0) L.length_scale = ext;
    L.velocity_scale = vel > 0.0 ? vel : L.length_scale;
    return L;
}

namespace {

using std::sqrt;

template <class T>
struct Planar {
    T x, y;
};

// Pack positions/velocities given relative to the frame origin.
template <class T>
Vec<T> pack(const AnchoredLayout& L, const MassSystem& m, const std::vector<Planar<T>>& q,
            const std::vector<Planar<T>>& v) {
    Vec<T> y(L.dim(), T(0.0));
    T M(0.0), cx(0.0), cy(0.0), vx(0.0), vy(0.0);
    for (int i : L.focus) {
        M += T(m[i]);
        cx += T(m[i]) * q[i].x;
        cy += T(m[i]) * q[i].y;
        vx += T(m[i]) * v[i].x;
        vy += T(m[i]) * v[i].y;
    }
    cx /= M;
    cy /= M;
    vx /= M;
    vy /= M;
    y[0] = cx;
    y[1] = cy;
    y[2] = vx;
    y[3] = vy;
    for (int i = 0; i < L.n; ++i) {
        int o = L.body_offset(i);
        if (L.in_focus[i]) {
            y[o] = q[i].x - cx;
            y[o + 1] = q[i].y - cy;
            y[o + 2] = v[i].x - vx;
            y[o + 3] = v[i].y - vy;
        } else {
            y[o] = q[i].x;
            y[o + 1] = q[i].y;
            y[o + 2] = v[i].x;
            y[o + 3] = v[i].y;
        }
    }
    return y;
}

template <class T>
Vec<T> pack_family(const AnchoredLayout& L, const MassSystem& m, const LinearFamily& fam, const T& p) {
    std::vector<Planar<T>> q(L.n), v(L.n);
    for (int i = 0; i < L.n; ++i) {
        q[i] = {T(fam.base.q[i].x) + p * T(fam.direction.q[i].x), T(fam.base.q[i].y) + p * T(fam.direction.q[i].y)};
        v[i] = {T(fam.base.qdot[i].x) + p * T(fam.direction.qdot[i].x),
                T(fam.base.qdot[i].y) + p * T(fam.direction.qdot[i].y)};
    }
    return pack(L, m, q, v);
}

template <class T>
Vec<T> pack_state(const AnchoredLayout& L, const MassSystem& m, const State& s) {
    std::vector<Planar<T>> q(L.n), v(L.n);
    for (int i = 0; i < L.n; ++i) {
        q[i] = {T(s.q[i].x), T(s.q[i].y)};
        v[i] = {T(s.qdot[i].x), T(s.qdot[i].y)};
    }
    return pack(L, m, q, v);
}

template <class T>
void anchored_rhs(const AnchoredLayout& L, const MassSystem& m, const Vec<T>& y, Vec<T>& dy) {
    const int n = L.n;
    dy.assign(y.size(), T(0.0));
    const T cx = y[0], cy = y[1];
    std::vector<T> ix(n, T(0.0)), iy(n, T(0.0)), ex(n, T(0.0)), ey(n, T(0.0));
    for (int i = 0; i < n; ++i) {
        const int oi = L.body_offset(i);
        for (int j = i + 1; j < n; ++j) {
            const int oj = L.body_offset(j);
            T dx = y[oj] - y[oi], dyy = y[oj + 1] - y[oi + 1];
            bool mixed = L.in_focus[i] != L.in_focus[j];
            if (mixed) {
                // focus bodies are stored relative to c
                if (L.in_focus[i]) {
                    dx -= cx;
                    dyy -= cy;
                } else {
                    dx += cx;
                    dyy += cy;
                }
            }
            T r2 = dx * dx + dyy * dyy;
            T r = sqrt(r2);
            if (!(to_double(r) >= kSingularDistance)) {
                // a trial stage hit a collision; non-finite output makes the integrator reject the step
                dy.assign(y.size(), T(std::numeric_limits<double>::quiet_NaN()));
                return;
            }
            T inv3 = T(1.0) / (r2 * r);
            T fx = dx * inv3, fy = dyy * inv3;
            auto& axi = mixed ? ex : ix;
            auto& ayi = mixed ? ey : iy;
            axi[i] += T(m[j]) * fx;
            ayi[i] += T(m[j]) * fy;
            axi[j] -= T(m[i]) * fx;
            ayi[j] -= T(m[i]) * fy;
        }
    }
    T M(0.0), ccx(0.0), ccy(0.0);
    for (int i : L.focus) {
        M += T(m[i]);
        ccx += T(m[i]) * ex[i];
        ccy += T(m[i]) * ey[i];
    }
    ccx /= M;
    ccy /= M;
    dy[0] = y[2];
    dy[1] = y[3];
    dy[2] = ccx;
    dy[3] = ccy;
    T rg2(0.0);
    for (int i = 0; i < n; ++i) {
        const int o = L.body_offset(i);
        dy[o] = y[o + 2];
        dy[o + 1] = y[o + 3];
        if (L.in_focus[i]) {
            dy[o + 2] = ix[i] + (ex[i] - ccx);
            dy[o + 3] = iy[i] + (ey[i] - ccy);
            rg2 += T(m[i]) * (y[o] * y[o] + y[o + 1] * y[o + 1]);
        } else {
            dy[o + 2] = ix[i] + ex[i];
            dy[o + 3] = iy[i] + ey[i];
        }
    }
    if (L.with_tau) {
        T rg = sqrt(rg2);
        dy[L.tau_index()] = T(1.0) / (rg * sqrt(rg));
    }
}

Trajectory<DoubleDouble> widen(Trajectory<double>&& t) {
    Trajectory<DoubleDouble> out;
    auto conv = [](const std::vector<Vec<double>>& src) {
        std::vector<Vec<DoubleDouble>> dst(src.size());
        for (size_t i = 0; i < src.size(); ++i) dst[i].assign(src[i].begin(), src[i].end());
        return dst;
    };
    out.t = std::move(t.t);
    out.y = conv(t.y);
    out.f = conv(t.f);
    out.f_mid = conv(t.f_mid);
    out.events = std::move(t.events);
    out.reason = t.reason;
    out.message = std::move(t.message);
    out.rejected = t.rejected;
    out.rhs_evals = t.rhs_evals;
    return out;
}

Trajectory<DoubleDouble> widen(Trajectory<DoubleDouble>&& t) { return std::move(t); }

IntegratorConfig planar_config(IntegratorConfig c, const AnchoredLayout& L) {
    c.group_size = 2;
    // groups 0 and 1 are the anchor position and velocity
    c.group_abs_tol = {c.rel_tol * L.length_scale, c.rel_tol * L.velocity_scale};
    return c;
}

// Closest focus pair and the cluster's dI0/dt from a raw vector.
template <class T>
void focus_metrics(const AnchoredLayout& L, const MassSystem& m, const Vec<T>& y, double& min_pair, double& i0dot,
                   double& u_g) {
    min_pair = std::numeric_limits<double>::infinity();
    i0dot = 0.0;
    u_g = 0.0;
    for (size_t a = 0; a < L.focus.size(); ++a) {
        int i = L.focus[a], oi = L.body_offset(i);
        i0dot += 2.0 * m[i] * to_double(y[oi] * y[oi + 2] + y[oi + 1] * y[oi + 3]);
        for (size_t b = a + 1; b < L.focus.size(); ++b) {
            int j = L.focus[b], oj = L.body_offset(j);
            double dx = to_double(y[oj] - y[oi]), dyy = to_double(y[oj + 1] - y[oi + 1]);
            double d = std::hypot(dx, dyy);
            min_pair = std::min(min_pair, d);
            u_g += m[i] * m[j] / d;
        }
    }
}

template <class T>
Trajectory<DoubleDouble> run_with(const AnchoredLayout& L, const MassSystem& m, Vec<T> y0, const DoubleDouble& t0,
                                  const DoubleDouble& t_end, const IntegratorConfig& icfg,
                                  const StepCallback<T>& cb) {
    Rhs<T> rhs = [&](const DoubleDouble&, const Vec<T>& y, Vec<T>& dy) { anchored_rhs(L, m, y, dy); };
    return widen(integrate<T>(rhs, t0, std::move(y0), t_end, planar_config(icfg, L), cb));
}

struct StopTracker {
    double stop_distance = 0.0;
    std::optional<double> u_threshold;
    bool closest = false;
    double prev_i0dot = 0.0;
    bool have_prev = false;
};

template <class T>
StepCallback<T> collision_callback(const AnchoredLayout& L, const MassSystem& m, StopTracker& st) {
    return [&L, &m, &st](Trajectory<T>& tr) {
        double dmin, i0dot, ug;
        focus_metrics(L, m, tr.y.back(), dmin, i0dot, ug);
        if (dmin < st.stop_distance) {
            tr.events.push_back({tr.t.back(), "collision"});
            return true;
        }
        if (st.u_threshold && ug > *st.u_threshold) {
            tr.events.push_back({tr.t.back(), "u_threshold"});
            return true;
        }
        if (st.closest && st.have_prev && st.prev_i0dot < 0.0 && i0dot >= 0.0) {
            tr.events.push_back({tr.t.back(), "closest_approach"});
            return true;
        }
        st.prev_i0dot = i0dot;
        st.have_prev = true;
        return false;
    };
}

template <class T>
CollisionRun collide_impl(Vec<T> y0, const State& s0, const AnchoredLayout& L, const MassSystem& m,
                          const ClusterPartition& part, const CollisionConfig& cfg) {
    if (!(cfg.stop_fraction > 0.0 && cfg.stop_fraction < 1.0)) throw std::invalid_argument("stop_fraction must lie in (0,1)");
    if (!(cfg.t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
    double dmin0, i0dot0, ug0;
    focus_metrics(L, m, y0, dmin0, i0dot0, ug0);
    double dmax0 = 0.0;
    for (size_t a = 0; a < L.focus.size(); ++a)
        for (size_t b = a + 1; b < L.focus.size(); ++b) {
            int i = L.focus[a], j = L.focus[b];
            int oi = L.body_offset(i), oj = L.body_offset(j);
            dmax0 = std::max(dmax0, std::hypot(to_double(y0[oj] - y0[oi]), to_double(y0[oj + 1] - y0[oi + 1])));
        }
    StopTracker st;
    st.stop_distance = cfg.stop_fraction * dmax0;
    st.u_threshold = cfg.u_threshold;
    st.closest = cfg.stop_at_closest_approach;
    CollisionRun out;
    Trajectory<DoubleDouble> raw;
    DoubleDouble t_end = s0.t + DoubleDouble(cfg.t_max);
    auto cb = collision_callback<T>(L, m, st);
    raw = run_with<T>(L, m, std::move(y0), s0.t, t_end, cfg.run.integrator, cb);
    out.traj = NBodyTrajectory(m, part, L, std::move(raw));
    const auto& r = out.traj.raw();
    double dmin, i0dot, ug;
    focus_metrics(L, m, r.y.back(), dmin, i0dot, ug);
    out.terminal_ratio = dmin / dmax0;
    out.terminal_r_G = out.traj.r_G(out.traj.size() - 1);
    out.initial_r_G = out.traj.r_G(0);
    switch (r.reason) {
        case StopReason::event: {
            const std::string& kind = r.events.back().kind;
            out.outcome = kind == "closest_approach" ? CollisionOutcome::closest_approach : CollisionOutcome::collision;
            out.message = kind;
            break;
        }
        case StopReason::reached_end:
            out.outcome = CollisionOutcome::no_collision;
            out.message = "no collision within the time bound";
            break;
        case StopReason::step_underflow:
            out.outcome = CollisionOutcome::step_underflow;
            out.message = r.message;
            break;
        default:
            out.outcome = CollisionOutcome::failed;
            out.message = r.message;
    }
    return out;
}

}  // namespace

NBodyTrajectory::NBodyTrajectory(MassSystem m, ClusterPartition part, AnchoredLayout layout,
                                 Trajectory<DoubleDouble> raw)
    : m_(std::move(m)), part_(std::move(part)), layout_(std::move(layout)), raw_(std::move(raw)) {}

State NBodyTrajectory::decode(const DoubleDouble& t, const Vec<DoubleDouble>& y, const Vec<DoubleDouble>* dy,
                              Vec2List* acc) const {
    const auto& L = layout_;
    State s;
    s.t = t;
    s.origin = L.frame_origin + Vec2{to_double(y[0]), to_double(y[1])};
    s.q.resize(L.n);
    s.qdot.resize(L.n);
    if (acc) acc->resize(L.n);
    for (int i = 0; i < L.n; ++i) {
        int o = L.body_offset(i);
        if (L.in_focus[i]) {
            s.q[i] = {to_double(y[o]), to_double(y[o + 1])};
            s.qdot[i] = {to_double(y[o + 2] + y[2]), to_double(y[o + 3] + y[3])};
            if (acc) (*acc)[i] = {to_double((*dy)[o + 2] + (*dy)[2]), to_double((*dy)[o + 3] + (*dy)[3])};
        } else {
            s.q[i] = {to_double(y[o] - y[0]), to_double(y[o + 1] - y[1])};
            s.qdot[i] = {to_double(y[o + 2]), to_double(y[o + 3])};
            if (acc) (*acc)[i] = {to_double((*dy)[o + 2]), to_double((*dy)[o + 3])};
        }
    }
    return s;
}

State NBodyTrajectory::state(size_t i) const { return decode(raw_.t[i], raw_.y[i], nullptr, nullptr); }

std::vector<State> NBodyTrajectory::states() const {
    std::vector<State> out;
    out.reserve(size());
    for (size_t i = 0; i < size(); ++i) out.push_back(state(i));
    return out;
}

std::optional<double> NBodyTrajectory::tau(size_t i) const {
    if (!layout_.with_tau) return std::nullopt;
    return to_double(raw_.y[i][layout_.tau_index()]);
}

std::vector<double> NBodyTrajectory::taus() const {
    std::vector<double> out;
    if (!layout_.with_tau) return out;
    for (size_t i = 0; i < size(); ++i) out.push_back(*tau(i));
    return out;
}

double NBodyTrajectory::r_G(size_t i) const {
    DoubleDouble acc(0.0);
    for (int b : layout_.focus) {
        int o = layout_.body_offset(b);
        const auto& y = raw_.y[i];
        acc += DoubleDouble(m_[b]) * (y[o] * y[o] + y[o + 1] * y[o + 1]);
    }
    return std::sqrt(to_double(acc));
}

DoubleDouble NBodyTrajectory::mu0(size_t i) const {
    DoubleDouble acc(0.0);
    for (int b : layout_.focus) {
        int o = layout_.body_offset(b);
        const auto& y = raw_.y[i];
        acc += DoubleDouble(m_[b]) * (y[o] * y[o + 3] - y[o + 1] * y[o + 2]);
    }
    return acc;
}

State NBodyTrajectory::state_at(const DoubleDouble& t) const { return decode(t, raw_.eval(t), nullptr, nullptr); }

KinematicSample NBodyTrajectory::kinematic_at(const DoubleDouble& t) const {
    auto y = raw_.eval(t);
    auto dy = raw_.eval_derivative(t);
    KinematicSample ks;
    ks.state = decode(t, y, &dy, &ks.qddot);
    return ks;
}

NBodyTrajectory integrate_nbody(const State& s0, const MassSystem& m, const ClusterPartition& part,
                                const DoubleDouble& t_end, const NBodyConfig& cfg) {
    check_nonsingular(s0);
    AnchoredLayout L = make_layout(s0, part, cfg.with_tau);
    Trajectory<DoubleDouble> raw;
    if (cfg.precision == Precision::Double)
        raw = run_with<double>(L, m, pack_state<double>(L, m, s0), s0.t, t_end, cfg.integrator, {});
    else
        raw = run_with<DoubleDouble>(L, m, pack_state<DoubleDouble>(L, m, s0), s0.t, t_end, cfg.integrator, {});
    return NBodyTrajectory(m, part, L, std::move(raw));
}

CollisionRun integrate_to_collision(const State& s0, const MassSystem& m, const ClusterPartition& part,
                                    const CollisionConfig& cfg) {
    check_nonsingular(s0);
    AnchoredLayout L = make_layout(s0, part, cfg.run.with_tau);
    if (cfg.run.precision == Precision::Double)
        return collide_impl<double>(pack_state<double>(L, m, s0), s0, L, m, part, cfg);
    return collide_impl<DoubleDouble>(pack_state<DoubleDouble>(L, m, s0), s0, L, m, part, cfg);
}

State LinearFamily::at(double p) const {
    State s = base;
    for (int i = 0; i < s.size(); ++i) {
        s.q[i] += p * direction.q[i];
        s.qdot[i] += p * direction.qdot[i];
    }
    return s;
}

CollisionRun integrate_family_to_collision(const LinearFamily& fam, const DoubleDouble& p, const MassSystem& m,
                                          const ClusterPartition& part, const CollisionConfig& cfg) {
    State s0 = fam.at(to_double(p));
    check_nonsingular(s0);
    AnchoredLayout L = make_layout(fam.base, part, cfg.run.with_tau);
    if (cfg.run.precision == Precision::Double)
        return collide_impl<double>(pack_family<double>(L, m, fam, to_double(p)), s0, L, m, part, cfg);
    return collide_impl<DoubleDouble>(pack_family<DoubleDouble>(L, m, fam, p), s0, L, m, part, cfg);
}

ShootResult shoot_to_collision(const LinearFamily& family, double lo, double hi, const MassSystem& m,
                               const ClusterPartition& part, const ShootConfig& cfg) {
    if (!(lo < hi)) throw std::invalid_argument("shooting bracket must satisfy lo < hi");
    if (family.base.size() != m.size() || family.direction.size() != m.size())
        throw std::invalid_argument("family does not match the mass system");
    CollisionConfig probe = cfg.run;
    probe.stop_fraction = cfg.depth_fraction;
    probe.stop_at_closest_approach = true;
    probe.run.integrator.dense = false;
    probe.run.with_tau = false;

    ShootResult res;
    auto miss = [&](const DoubleDouble& p) {
        CollisionRun r = integrate_family_to_collision(family, p, m, part, probe);
        double v = to_double(r.traj.mu0(r.traj.size() - 1));
        res.history.push_back({p, v});
        return v;
    };
    DoubleDouble a(lo), b(hi);
    double fa = miss(a), fb = miss(b);
    if (fa == 0.0) b = a;
    else if (fb == 0.0) a = b;
    else if ((fa > 0) == (fb > 0))
        throw std::runtime_error("shooting bracket shows no sign change of the miss function");
    const double width0 = hi - lo;
    while (to_double(b - a) > cfg.param_tol * width0 && res.iterations < cfg.max_iter) {
        DoubleDouble mid = (a + b) * DoubleDouble(0.5);
        if (mid == a || mid == b) break;
        double fm = miss(mid);
        ++res.iterations;
        if (fm == 0.0) {
            a = b = mid;
            break;
        }
        if ((fm > 0) == (fa > 0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    res.lo = a;
    res.hi = b;
    res.param = (a + b) * DoubleDouble(0.5);
    CollisionConfig final_cfg = cfg.run;
    final_cfg.stop_fraction = std::min(cfg.run.stop_fraction, cfg.depth_fraction);
    res.run = integrate_family_to_collision(family, res.param, m, part, final_cfg);
    return res;
}

}  // namespace nbcoll
