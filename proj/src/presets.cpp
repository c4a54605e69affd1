#include "nbcoll/presets.hpp"

#include <stdexcept>

namespace nbcoll {

namespace {

State zero_like(const State& s) {
    State z = s;
    z.q.assign(s.q.size(), Vec2{});
    z.qdot.assign(s.qdot.size(), Vec2{});
    z.origin = {};
    z.t = 0.0;
    return z;
}

double low_part(const DoubleDouble& x) { return (x - DoubleDouble(to_double(x))).hi; }

Scenario binary_family(const std::string& name, std::vector<double> masses, Vec2List extra_q, Vec2List extra_v,
                       double lo, double hi) {
    // binary falling together along x; the parameter is its transverse relative velocity
    Scenario sc;
    sc.name = name;
    int n = 2 + static_cast<int>(extra_q.size());
    sc.masses = MassSystem(std::move(masses));
    sc.partition = ClusterPartition::with_focus(n, {0, 1});
    State& b = sc.family.base;
    b.q = {{-0.5, 0.0}, {0.5, 0.0}};
    b.qdot = {{0.2, 0.0}, {-0.2, 0.0}};
    for (size_t k = 0; k < extra_q.size(); ++k) {
        b.q.push_back(extra_q[k]);
        b.qdot.push_back(extra_v[k]);
    }
    sc.family.direction = zero_like(b);
    sc.family.direction.qdot[0] = {0.0, -0.5};
    sc.family.direction.qdot[1] = {0.0, 0.5};
    sc.shoot = true;
    sc.param = 0.0;
    sc.bracket_lo = lo;
    sc.bracket_hi = hi;
    return sc;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"kepler_pair",     "lagrange_homothetic",       "lagrange_in_ring", "euler_homothetic",
            "binary_in_3body", "binary_in_3body_symmetric", "binary_in_4body"};
}

Scenario explicit_scenario(const std::string& name, const MassSystem& m, const ClusterPartition& part,
                           const State& s) {
    Scenario sc;
    sc.name = name;
    sc.masses = m;
    sc.partition = part;
    sc.family.base = s;
    sc.family.direction = zero_like(s);
    sc.param = 1.0;
    return sc;
}

Scenario make_preset(const std::string& name) {
    if (name == "kepler_pair") {
        State s;
        s.q = {{-1.0, 0.0}, {1.0, 0.0}};
        s.qdot.assign(2, Vec2{});
        return explicit_scenario(name, MassSystem({1.0, 1.0}), ClusterPartition::with_focus(2, {0, 1}), s);
    }
    if (name == "lagrange_homothetic") {
        // unit equilateral triangle centred at the origin, at rest; the
        // vertical coordinates carry double-double accuracy so the shape is
        // not perturbed by rounding (it is unstable along the collapse)
        DoubleDouble h = sqrt(DoubleDouble(3.0)) / DoubleDouble(2.0);
        DoubleDouble ya = -h / DoubleDouble(3.0), yb = DoubleDouble(2.0) * h / DoubleDouble(3.0);
        State s;
        s.q = {{-0.5, to_double(ya)}, {0.5, to_double(ya)}, {0.0, to_double(yb)}};
        s.qdot.assign(3, Vec2{});
        Scenario sc = explicit_scenario(name, MassSystem({1.0, 1.0, 1.0}), ClusterPartition::with_focus(3, {0, 1, 2}), s);
        sc.family.direction.q[0].y = sc.family.direction.q[1].y = low_part(ya);
        sc.family.direction.q[2].y = low_part(yb);
        return sc;
    }
    if (name == "lagrange_in_ring") {
        // the unit triangle above plus three light bodies on the opposite
        // rays at three times the vertex radius; the D3 symmetry keeps the
        // inner triangle equilateral while the ring perturbs its collapse
        DoubleDouble h = sqrt(DoubleDouble(3.0)) / DoubleDouble(2.0);
        DoubleDouble ya = -h / DoubleDouble(3.0), yb = DoubleDouble(2.0) * h / DoubleDouble(3.0);
        DoubleDouble k = -DoubleDouble(3.0) * sqrt(DoubleDouble(3.0));
        std::vector<std::pair<DoubleDouble, DoubleDouble>> inner{
            {DoubleDouble(-0.5), ya}, {DoubleDouble(0.5), ya}, {DoubleDouble(0.0), yb}};
        State s;
        s.qdot.assign(6, Vec2{});
        State low = zero_like(s);
        low.q.assign(6, Vec2{});
        s.q.assign(6, Vec2{});
        for (int i = 0; i < 3; ++i) {
            for (int c = 0; c < 2; ++c) {
                DoubleDouble in = c == 0 ? inner[i].first : inner[i].second;
                DoubleDouble out = k * in;
                (c == 0 ? s.q[i].x : s.q[i].y) = to_double(in);
                (c == 0 ? low.q[i].x : low.q[i].y) = low_part(in);
                (c == 0 ? s.q[i + 3].x : s.q[i + 3].y) = to_double(out);
                (c == 0 ? low.q[i + 3].x : low.q[i + 3].y) = low_part(out);
            }
        }
        Scenario sc = explicit_scenario(name, MassSystem({1.0, 1.0, 1.0, 0.2, 0.2, 0.2}),
                                        ClusterPartition::with_focus(6, {0, 1, 2}), s);
        sc.family.direction = low;
        return sc;
    }
    if (name == "euler_homothetic") {
        // equal masses equally spaced on a line is a central configuration
        State s;
        s.q = {{-1.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}};
        s.qdot.assign(3, Vec2{});
        return explicit_scenario(name, MassSystem({1.0, 1.0, 1.0}), ClusterPartition::with_focus(3, {0, 1, 2}), s);
    }
    if (name == "binary_in_3body")
        return binary_family(name, {1.0, 1.0, 0.5}, {{0.8, 2.2}}, {{-0.1, 0.0}}, -0.3, 0.3);
    if (name == "binary_in_3body_symmetric")
        return binary_family(name, {1.0, 1.0, 0.5}, {{0.0, 2.5}}, {{0.0, 0.0}}, -0.1, 0.13);
    if (name == "binary_in_4body")
        return binary_family(name, {1.0, 1.0, 0.5, 0.7}, {{0.8, 2.2}, {-1.8, -1.5}}, {{-0.1, 0.0}, {0.05, 0.1}},
                             -0.3, 0.3);
    throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace nbcoll
