#pragma once
// Newtonian n-body integration in coordinates anchored on the focus cluster.
//
// Integration vector: [c(2), cdot(2), then per body p(2), u(2), optionally tau]
// where focus bodies carry p = q - c, u = qdot - cdot and other bodies carry
// q, qdot relative to a fixed frame origin. Relative cluster geometry is then
// resolved to full relative precision however small it gets.

#include <optional>
#include <string>
#include <vector>

#include "nbcoll/core.hpp"
#include "nbcoll/odeint.hpp"

namespace nbcoll {

enum class Precision { Double, DoubleDouble };

Precision parse_precision(const std::string& s);
std::string to_string(Precision p);

struct AnchoredLayout {
    int n = 0;
    std::vector<int> focus;
    std::vector<char> in_focus;
    bool with_tau = false;
    Vec2 frame_origin{};
    // initial extent of the system, used as the error scale of the anchor
    double length_scale = 1.0;
    double velocity_scale = 1.0;

    int dim() const { return 4 + 4 * n + (with_tau ? 1 : 0); }
    int body_offset(int i) const { return 4 + 4 * i; }
    int tau_index() const { return 4 + 4 * n; }
};

AnchoredLayout make_layout(const State& s, const ClusterPartition& part, bool with_tau);

// One integration run decoded back into Cartesian states. Storage is
// double-double regardless of the precision used for the run.
class NBodyTrajectory {
public:
    NBodyTrajectory() = default;
    NBodyTrajectory(MassSystem m, ClusterPartition part, AnchoredLayout layout, Trajectory<DoubleDouble> raw);

    size_t size() const { return raw_.size(); }
    const DoubleDouble& time(size_t i) const { return raw_.t[i]; }
    // Sample i with origin at the focus center of mass.
    State state(size_t i) const;
    std::vector<State> states() const;
    std::optional<double> tau(size_t i) const;
    std::vector<double> taus() const;  // empty when tau was not co-integrated
    // Focus size measure sqrt(sum m |q - c|^2) at sample i, computed from the raw vector.
    double r_G(size_t i) const;
    // Intrinsic angular momentum of the focus cluster at sample i in full precision.
    DoubleDouble mu0(size_t i) const;

    bool has_dense() const { return raw_.has_dense(); }
    State state_at(const DoubleDouble& t) const;
    // Dense-output state plus accelerations from the derivative of the
    // interpolant (not from the force law).
    KinematicSample kinematic_at(const DoubleDouble& t) const;

    const MassSystem& masses() const { return m_; }
    const ClusterPartition& partition() const { return part_; }
    const AnchoredLayout& layout() const { return layout_; }
    const Trajectory<DoubleDouble>& raw() const { return raw_; }

private:
    State decode(const DoubleDouble& t, const Vec<DoubleDouble>& y, const Vec<DoubleDouble>* dy, Vec2List* acc) const;

    MassSystem m_;
    ClusterPartition part_;
    AnchoredLayout layout_;
    Trajectory<DoubleDouble> raw_;
};

struct NBodyConfig {
    IntegratorConfig integrator;
    Precision precision = Precision::Double;
    bool with_tau = false;
};

// Plain integration from s0 to t_end.
NBodyTrajectory integrate_nbody(const State& s0, const MassSystem& m, const ClusterPartition& part,
                                const DoubleDouble& t_end, const NBodyConfig& cfg);

enum class CollisionOutcome { collision, no_collision, closest_approach, step_underflow, failed };
std::string to_string(CollisionOutcome o);

struct CollisionConfig {
    NBodyConfig run;
    // stop once the closest focus pair is below stop_fraction times the
    // initial largest focus pair distance
    double stop_fraction = 1e-8;
    double t_max = 100.0;                  // time bound, relative to the start
    std::optional<double> u_threshold;     // optional stop when U_G exceeds this
    bool stop_at_closest_approach = false; // dI0/dt turning from negative to positive
};

struct CollisionRun {
    CollisionOutcome outcome = CollisionOutcome::failed;
    std::string message;
    NBodyTrajectory traj;
    double terminal_ratio = 0.0;  // closest focus pair / initial largest focus pair
    double terminal_r_G = 0.0;
    double initial_r_G = 0.0;
};

CollisionRun integrate_to_collision(const State& s0, const MassSystem& m, const ClusterPartition& part,
                                    const CollisionConfig& cfg);

// Initial states base + p * direction (positions and velocities), evaluated in
// the run precision so that parameter changes below double resolution count.
struct LinearFamily {
    State base;
    State direction;
    State at(double p) const;
};

// Collision run from family.at(p) with the initial vector formed in the run
// precision. With p = 1 and the direction holding low-order parts this starts
// a double-double run from a state that doubles cannot represent.
CollisionRun integrate_family_to_collision(const LinearFamily& family, const DoubleDouble& p, const MassSystem& m,
                                          const ClusterPartition& part, const CollisionConfig& cfg);

struct ShootConfig {
    CollisionConfig run;          // used for the final run
    double depth_fraction = 1e-10;  // collision depth required of the returned orbit
    double param_tol = 1e-28;     // bracket width relative to the initial bracket
    int max_iter = 200;
};

struct ShootResult {
    DoubleDouble param;
    DoubleDouble lo, hi;  // final bracket
    int iterations = 0;
    CollisionRun run;
    std::vector<std::pair<DoubleDouble, double>> history;  // (parameter, miss)
};

// Bisection on the signed intrinsic angular momentum of the focus cluster at
// the end of each run (closest approach or the depth threshold). Throws
// std::runtime_error when the bracket shows no sign change.
ShootResult shoot_to_collision(const LinearFamily& family, double lo, double hi, const MassSystem& m,
                               const ClusterPartition& part, const ShootConfig& cfg);

}  // namespace nbcoll
