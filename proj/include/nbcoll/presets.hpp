#pragma once
// Named initial-value scenarios.

#include <string>
#include <vector>

#include "nbcoll/nbody.hpp"

namespace nbcoll {

struct Scenario {
    std::string name;
    MassSystem masses;
    ClusterPartition partition;
    // Initial state is family.at(param). Fixed scenarios use param = 1 with the
    // direction holding the low-order parts of coordinates doubles cannot hold.
    LinearFamily family;
    DoubleDouble param = 1.0;
    bool shoot = false;  // param found by bisection over [bracket_lo, bracket_hi]
    double bracket_lo = 0.0, bracket_hi = 0.0;

    State initial() const { return family.at(to_double(param)); }
};

std::vector<std::string> preset_names();
// Throws std::invalid_argument for an unknown name.
Scenario make_preset(const std::string& name);

// Fixed scenario from a double state (direction zero).
Scenario explicit_scenario(const std::string& name, const MassSystem& m, const ClusterPartition& part,
                           const State& s);

}  // namespace nbcoll
