#include "nbcoll/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

namespace nbcoll {

MassSystem::MassSystem(std::vector<double> masses) : m_(std::move(masses)) {
    if (m_.size() < 2) throw std::invalid_argument("mass system needs at least two bodies");
    for (double x : m_)
        if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("masses must be positive and finite");
}

double MassSystem::total() const { return std::accumulate(m_.begin(), m_.end(), 0.0); }

double MassSystem::subtotal(const std::vector<int>& idx) const {
    double s = 0.0;
    for (int i : idx) s += m_[i];
    return s;
}

State State::rebased(const Vec2& new_origin) const {
    State out = *this;
    Vec2 shift = origin - new_origin;
    for (auto& p : out.q) p += shift;
    out.origin = new_origin;
    return out;
}

ClusterPartition ClusterPartition::with_focus(int n, const std::vector<int>& members) {
    ClusterPartition p;
    p.clusters.push_back(members);
    std::set<int> in(members.begin(), members.end());
    for (int i = 0; i < n; ++i)
        if (!in.count(i)) p.clusters.push_back({i});
    p.focus = 0;
    p.validate(n);
    return p;
}

bool ClusterPartition::in_focus(int i) const {
    const auto& f = focus_members();
    return std::find(f.begin(), f.end(), i) != f.end();
}

std::vector<int> ClusterPartition::outside_focus(int n) const {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (!in_focus(i)) out.push_back(i);
    return out;
}

void ClusterPartition::validate(int n) const {
    if (focus < 0 || focus >= static_cast<int>(clusters.size()))
        throw std::invalid_argument("focus cluster index out of range");
    if (clusters[focus].size() < 2) throw std::invalid_argument("focus cluster needs at least two bodies");
    std::vector<int> seen(n, 0);
    for (const auto& c : clusters)
        for (int i : c) {
            if (i < 0 || i >= n) throw std::invalid_argument("cluster index out of range");
            if (seen[i]++) throw std::invalid_argument("clusters overlap at body " + std::to_string(i));
        }
    for (int i = 0; i < n; ++i)
        if (!seen[i]) throw std::invalid_argument("body " + std::to_string(i) + " not in any cluster");
}

namespace {

double pair_distance(const State& s, int i, int j) {
    double d = norm(s.q[i] - s.q[j]);
    if (!(d >= kSingularDistance))
        throw SingularConfiguration("bodies " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
    return d;
}

int cluster_of(const ClusterPartition& part, int i) {
    for (size_t c = 0; c < part.clusters.size(); ++c)
        for (int j : part.clusters[c])
            if (j == i) return static_cast<int>(c);
    return -1;
}

}  // namespace

void check_nonsingular(const State& s) {
    for (int i = 0; i < s.size(); ++i)
        for (int j = i + 1; j < s.size(); ++j) pair_distance(s, i, j);
}

PotentialTerms potential_terms(const State& s, const MassSystem& m, const ClusterPartition& part) {
    PotentialTerms out;
    int n = s.size();
    std::vector<char> f(n, 0);
    for (int i : part.focus_members()) f[i] = 1;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double u = m[i] * m[j] / pair_distance(s, i, j);
            out.total += u;
            if (f[i] && f[j]) out.cluster += u;
            else if (f[i] != f[j]) out.external += u;
        }
    return out;
}

double potential_energy(const State& s, const MassSystem& m) {
    double u = 0.0;
    for (int i = 0; i < s.size(); ++i)
        for (int j = i + 1; j < s.size(); ++j) u += m[i] * m[j] / pair_distance(s, i, j);
    return u;
}

double kinetic_energy(const State& s, const MassSystem& m) {
    double k = 0.0;
    for (int i = 0; i < s.size(); ++i) k += 0.5 * m[i] * norm2(s.qdot[i]);
    return k;
}

double total_angular_momentum(const State& s, const MassSystem& m) {
    double l = 0.0;
    for (int i = 0; i < s.size(); ++i) l += m[i] * cross(s.position(i), s.qdot[i]);
    return l;
}

Vec2List accelerations(const State& s, const MassSystem& m) {
    int n = s.size();
    Vec2List a(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Vec2 d = s.q[j] - s.q[i];
            double r = pair_distance(s, i, j);
            double inv3 = 1.0 / (r * r * r);
            a[i] += (m[j] * inv3) * d;
            a[j] -= (m[i] * inv3) * d;
        }
    return a;
}

Vec2List external_forces(const State& s, const MassSystem& m, const ClusterPartition& part) {
    const auto& g = part.focus_members();
    auto out_idx = part.outside_focus(s.size());
    Vec2List f(g.size());
    for (size_t a = 0; a < g.size(); ++a) {
        int i = g[a];
        for (int j : out_idx) {
            Vec2 d = s.q[j] - s.q[i];
            double r = pair_distance(s, i, j);
            f[a] += (m[i] * m[j] / (r * r * r)) * d;
        }
    }
    return f;
}

ClusterObservables cluster_observables(const State& s, const MassSystem& m, const ClusterPartition& part,
                                       std::optional<Vec2> L) {
    ClusterObservables o;
    const auto& g = part.focus_members();
    o.M_G = m.subtotal(g);
    Vec2 c_rel{}, cdot{};
    for (int i : g) {
        c_rel += m[i] * s.q[i];
        cdot += m[i] * s.qdot[i];
    }
    c_rel = c_rel / o.M_G;
    cdot = cdot / o.M_G;
    o.c_G = s.origin + c_rel;
    o.cdot_G = cdot;

    double mu_abs_scale = 0.0;
    for (int i : g) {
        Vec2 d = s.q[i] - c_rel;
        Vec2 dv = s.qdot[i] - cdot;
        o.I0_G += m[i] * norm2(d);
        o.K_G += 0.5 * m[i] * norm2(s.qdot[i]);
        Vec2 qa = s.position(i);
        o.mu_G += m[i] * cross(qa, s.qdot[i]);
        mu_abs_scale += m[i] * norm(qa) * norm(s.qdot[i]);
        o.mu0_G += m[i] * cross(d, dv);
        o.mu0_scale += m[i] * norm(d) * norm(dv);
    }
    o.r_G = std::sqrt(o.I0_G);
    o.I_G = o.I0_G + o.M_G * norm2(o.c_G);
    o.mu = o.mu_G - o.M_G * cross(o.c_G, o.cdot_G);
    o.mu_scale = mu_abs_scale + o.M_G * norm(o.c_G) * norm(o.cdot_G);

    auto pt = potential_terms(s, m, part);
    o.U_G = pt.cluster;
    o.U_ext = pt.external;
    o.H_G = o.K_G - o.U_G;

    if (L) {
        Vec2 shift = s.origin - *L;
        double J = 0.0;
        for (int i : g) J += m[i] * norm2(s.q[i] + shift);
        o.J_G = J;
    }
    return o;
}

JMoments cluster_j_moments(const State& s, const MassSystem& m, const ClusterPartition& part, const Vec2& L) {
    JMoments out;
    const auto& g = part.focus_members();
    Vec2 shift = s.origin - L;
    auto fext = external_forces(s, m, part);
    double v2 = 0.0;
    for (size_t a = 0; a < g.size(); ++a) {
        int i = g[a];
        Vec2 d = s.q[i] + shift;
        out.J += m[i] * norm2(d);
        out.Jdot += 2.0 * m[i] * dot(s.qdot[i], d);
        v2 += m[i] * norm2(s.qdot[i]);
        out.g += 2.0 * dot(fext[a], d);
    }
    out.K = 0.5 * v2;
    out.U = potential_terms(s, m, part).cluster;
    out.Jddot = 4.0 * out.K - 2.0 * out.U + out.g;
    return out;
}

JMoments global_j_moments(const State& s, const MassSystem& m, const ClusterPartition& part,
                          const std::vector<Vec2>& L_per_cluster) {
    if (L_per_cluster.size() != part.clusters.size())
        throw std::invalid_argument("one limit point per cluster required");
    JMoments out;
    int n = s.size();
    for (size_t c = 0; c < part.clusters.size(); ++c) {
        Vec2 shift = s.origin - L_per_cluster[c];
        Vec2 fsum{};
        for (int i : part.clusters[c]) {
            Vec2 d = s.q[i] + shift;
            out.J += m[i] * norm2(d);
            out.Jdot += 2.0 * m[i] * dot(s.qdot[i], d);
            out.K += 0.5 * m[i] * norm2(s.qdot[i]);
            for (int j = 0; j < n; ++j) {
                if (cluster_of(part, j) == static_cast<int>(c)) continue;
                Vec2 dj = s.q[j] - s.q[i];
                double r = pair_distance(s, i, j);
                fsum += (m[i] * m[j] / (r * r * r)) * dj;
            }
        }
        out.g += -2.0 * dot(L_per_cluster[c], fsum);
    }
    out.U = potential_energy(s, m);
    out.Jddot = 4.0 * out.K - 2.0 * out.U + out.g;
    return out;
}

double sundman_constant(const MassSystem& m, const std::vector<int>& bodies) {
    double M = m.subtotal(bodies);
    double sum = 0.0;
    for (size_t a = 0; a < bodies.size(); ++a)
        for (size_t b = a + 1; b < bodies.size(); ++b) sum += std::pow(m[bodies[a]] * m[bodies[b]], 1.5);
    return sum / std::sqrt(M);
}

namespace {

LagrangeJacobiResult lj_accumulate(const std::vector<KinematicSample>& window, const MassSystem& m,
                                   const std::vector<int>& bodies, const std::vector<Vec2>& L_body,
                                   const std::function<JMoments(const State&)>& moments,
                                   const std::function<double(const State&)>& fext_sup) {
    if (window.size() < 3) throw std::invalid_argument("window too short for Lagrange-Jacobi check");
    LagrangeJacobiResult r;
    double sup_f = 0.0, sup_d = 0.0;
    for (const auto& ks : window) {
        const State& s = ks.state;
        double jdd = 0.0;
        for (size_t a = 0; a < bodies.size(); ++a) {
            int i = bodies[a];
            Vec2 d = s.q[i] + (s.origin - L_body[a]);
            jdd += 2.0 * m[i] * (norm2(s.qdot[i]) + dot(d, ks.qddot[i]));
            sup_d = std::max(sup_d, norm(d));
        }
        JMoments jm = moments(s);
        r.residual = std::max(r.residual, std::abs(jdd - 4.0 * jm.K + 2.0 * jm.U - jm.g));
        r.jddot_scale = std::max(r.jddot_scale, std::abs(jdd));
        sup_f = std::max(sup_f, fext_sup(s));
    }
    r.g_bound = 2.0 * sup_f * sup_d;
    return r;
}

}  // namespace

LagrangeJacobiResult lagrange_jacobi_residual(const std::vector<KinematicSample>& window, const MassSystem& m,
                                              const ClusterPartition& part, const Vec2& L) {
    const auto& g = part.focus_members();
    std::vector<Vec2> Lb(g.size(), L);
    return lj_accumulate(
        window, m, g, Lb, [&](const State& s) { return cluster_j_moments(s, m, part, L); },
        [&](const State& s) {
            double f = 0.0;
            for (const auto& v : external_forces(s, m, part)) f += norm(v);
            return f;
        });
}

LagrangeJacobiResult lagrange_jacobi_residual_global(const std::vector<KinematicSample>& window,
                                                     const MassSystem& m, const ClusterPartition& part,
                                                     const std::vector<Vec2>& L_per_cluster) {
    std::vector<int> bodies;
    std::vector<Vec2> Lb;
    for (size_t c = 0; c < part.clusters.size(); ++c)
        for (int i : part.clusters[c]) {
            bodies.push_back(i);
            Lb.push_back(L_per_cluster[c]);
        }
    return lj_accumulate(
        window, m, bodies, Lb, [&](const State& s) { return global_j_moments(s, m, part, L_per_cluster); },
        [&](const State& s) {
            double f = 0.0;
            auto a = accelerations(s, m);
            for (int i = 0; i < s.size(); ++i) f = std::max(f, m[i] * norm(a[i]));
            return f;
        });
}

}  // namespace nbcoll
