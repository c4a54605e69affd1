#pragma once
// Cartesian n-body ground truth, G = 1.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbcoll/dd.hpp"
#include "nbcoll/vec2.hpp"

namespace nbcoll {

class SingularConfiguration : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Pairs closer than this are treated as a collision.
inline constexpr double kSingularDistance = 1e-300;

class MassSystem {
public:
    MassSystem() = default;
    explicit MassSystem(std::vector<double> masses);

    int size() const { return static_cast<int>(m_.size()); }
    double operator[](int i) const { return m_[i]; }
    const std::vector<double>& masses() const { return m_; }
    double total() const;
    double subtotal(const std::vector<int>& idx) const;

private:
    std::vector<double> m_;
};

// Absolute position of body i is origin + q[i]. Keeping the origin on the
// colliding cluster keeps relative coordinates exact deep into a collapse.
struct State {
    DoubleDouble t;
    Vec2List q;
    Vec2List qdot;
    Vec2 origin{};

    int size() const { return static_cast<int>(q.size()); }
    Vec2 position(int i) const { return origin + q[i]; }
    // Same physical state with origin moved to new_origin.
    State rebased(const Vec2& new_origin) const;
};

struct ClusterPartition {
    std::vector<std::vector<int>> clusters;
    int focus = 0;

    // focus cluster plus singletons for every other body
    static ClusterPartition with_focus(int n, const std::vector<int>& members);

    const std::vector<int>& focus_members() const { return clusters.at(focus); }
    bool in_focus(int i) const;
    std::vector<int> outside_focus(int n) const;
    void validate(int n) const;
};

struct PotentialTerms {
    double total = 0.0;
    double cluster = 0.0;   // pairs inside the focus cluster
    double external = 0.0;  // pairs with exactly one index in the focus cluster
};

struct ClusterObservables {
    double M_G = 0.0;
    Vec2 c_G{};      // absolute
    Vec2 cdot_G{};
    double I0_G = 0.0;
    double I_G = 0.0;
    double r_G = 0.0;
    std::optional<double> J_G;
    double U_G = 0.0;
    double U_ext = 0.0;
    double K_G = 0.0;
    double H_G = 0.0;
    double mu_G = 0.0;   // about the absolute origin
    double mu0_G = 0.0;  // about the moving center of mass
    double mu = 0.0;     // mu_G - M_G c_G x cdot_G
    double mu_scale = 0.0;   // magnitude of the terms cancelling inside mu
    double mu0_scale = 0.0;  // same for mu0_G
};

void check_nonsingular(const State& s);

PotentialTerms potential_terms(const State& s, const MassSystem& m, const ClusterPartition& part);
double potential_energy(const State& s, const MassSystem& m);
double kinetic_energy(const State& s, const MassSystem& m);
double total_angular_momentum(const State& s, const MassSystem& m);

// a_i = sum_j m_j (q_j - q_i) / |q_j - q_i|^3
Vec2List accelerations(const State& s, const MassSystem& m);

// Gradient of U_ext with respect to q_i (the force exerted on i by bodies
// outside the focus cluster), for i in the focus cluster in member order.
Vec2List external_forces(const State& s, const MassSystem& m, const ClusterPartition& part);

ClusterObservables cluster_observables(const State& s, const MassSystem& m, const ClusterPartition& part,
                                       std::optional<Vec2> L = std::nullopt);

// Moment of inertia about limit points and its analytic time derivatives.
struct JMoments {
    double J = 0.0;
    double Jdot = 0.0;   // 2 sum m (qdot, q - L)
    double Jddot = 0.0;  // 4K - 2U + g
    double K = 0.0;
    double U = 0.0;
    double g = 0.0;
};
// Focus cluster about a common point L: g = 2 sum (F_ext,i, q_i - L).
JMoments cluster_j_moments(const State& s, const MassSystem& m, const ClusterPartition& part, const Vec2& L);
// All bodies, body i measured from the limit point of its cluster:
// g = -2 sum_c (L_c, sum_{i in c} F_ext(c),i).
JMoments global_j_moments(const State& s, const MassSystem& m, const ClusterPartition& part,
                          const std::vector<Vec2>& L_per_cluster);

// Sundman-type constant D = M^{-1/2} sum_{j<k} (m_j m_k)^{3/2}
double sundman_constant(const MassSystem& m, const std::vector<int>& bodies);

// Sample for the Lagrange-Jacobi check: qddot is taken from an independent
// source (differentiated dense output), not from the force law.
struct KinematicSample {
    State state;
    Vec2List qddot;
};

// sup over samples of |Jddot - 4K + 2U - g| for the body set with limits L,
// together with the sup of |Jddot| for scaling.
struct LagrangeJacobiResult {
    double residual = 0.0;
    double jddot_scale = 0.0;
    double g_bound = 0.0;  // 2 sup|F_ext| sup|q - L| over the window
};
LagrangeJacobiResult lagrange_jacobi_residual(const std::vector<KinematicSample>& window, const MassSystem& m,
                                              const ClusterPartition& part, const Vec2& L);
LagrangeJacobiResult lagrange_jacobi_residual_global(const std::vector<KinematicSample>& window,
                                                     const MassSystem& m, const ClusterPartition& part,
                                                     const std::vector<Vec2>& L_per_cluster);

}  // namespace nbcoll
