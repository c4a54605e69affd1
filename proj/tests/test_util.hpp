#pragma once

#include <random>

#include "nbcoll/core.hpp"

namespace testutil {

using namespace nbcoll;

// Random well-separated state: bodies on a jittered grid so no pair is closer than ~0.3.
inline State random_state(int n, std::mt19937_64& rng, double vel = 0.5) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    State s;
    for (int i = 0; i < n; ++i) {
        double gx = (i % 3) * 1.0, gy = (i / 3) * 1.0;
        s.q.push_back({gx + 0.3 * u(rng), gy + 0.3 * u(rng)});
        s.qdot.push_back({vel * u(rng), vel * u(rng)});
    }
    return s;
}

inline std::vector<double> random_masses(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.3, 2.0);
    std::vector<double> m(n);
    for (auto& x : m) x = u(rng);
    return m;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace testutil
