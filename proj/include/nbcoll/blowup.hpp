#pragma once
// McGehee blow-up of a colliding cluster: v = sqrt(r) rho, w = r^{3/2} omega,
// d tau = r^{-3/2} dt.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbcoll/cluster_coords.hpp"
#include "nbcoll/core.hpp"

namespace nbcoll {

struct BlowupState {
    double tau = 0.0;
    double r = 0.0;
    double v = 0.0;
    Vec2List s;
    Vec2List w;
    double theta = 0.0;
    double mu = 0.0;
    DoubleDouble t_phys;
};

// Autonomous part acts on x = (r, v, s, w), length 2 + 2*(2k-4).
Eigen::VectorXd pack_autonomous(const BlowupState& b);
void unpack_autonomous(const Eigen::VectorXd& x, BlowupState& b);

Eigen::VectorXd field_autonomous(const Eigen::VectorXd& x, const ClusterGeometry& geo);

// Bodies outside the cluster, positions relative to the cluster center of mass.
struct ExternalContext {
    Vec2List rel_positions;
    std::vector<double> masses;
};

struct PerturbationEval {
    double delta_v = 0.0;            // mu^2/r + r^2 dU_ext/dr
    Eigen::VectorXd delta_w;         // sum of the three pieces below
    double delta_theta = 0.0;        // mu / sqrt(r)
    double mudot = 0.0;              // dU_ext/dtheta
    // pieces
    double dv_spin = 0.0;            // mu^2 / r
    double dv_tidal = 0.0;           // r^2 dU_ext/dr
    Eigen::VectorXd dw_tidal;        // r A^{-1} dU_ext/ds
    Eigen::VectorXd dw_torque;       // -r mudot A^{-1} B / N
    Eigen::VectorXd dw_gyro;         // (mu/sqrt r) A^{-1} (C^T - C) w, C = d(B/N)/ds
    double dU_dr = 0.0;
    Eigen::VectorXd dU_ds;
    double norm() const;
};

PerturbationEval perturbation_eval(const BlowupState& b, const ExternalContext& ext, const ClusterGeometry& geo);

// Derivative of (r, v, s, w, theta, mu, t) with respect to tau.
Eigen::VectorXd field_full(const BlowupState& b, const ExternalContext& ext, const ClusterGeometry& geo);

// Cluster positions relative to c_G reconstructed from a blow-up state.
Vec2List blowup_positions(const BlowupState& b, const ClusterGeometry& geo);

struct BlowupSeries {
    std::vector<BlowupState> states;
    std::vector<PerturbationEval> perturbations;
    std::vector<int> jacobi_order;  // cluster member positions in Jacobi order
    std::vector<std::string> warnings;
};

// Blow-up observables along a Cartesian sample sequence. When tau_values is
// non-empty it supplies tau (co-integrated); otherwise tau is accumulated by
// quadrature in log(T - t). mu_values (optional) replace the intrinsic angular
// momentum recomputed from the double states, which is cancellation-limited.
BlowupSeries mcgehee_observables(const std::vector<State>& states, const MassSystem& m,
                                 const ClusterPartition& part, const Vec2& L, const DoubleDouble& T_est,
                                 const std::vector<double>& tau_values = {},
                                 const std::vector<double>& mu_values = {});

// Blow-up state (and external context) of a single Cartesian state for a given Jacobi order.
BlowupState blowup_from_state(const State& s, const MassSystem& m, const ClusterPartition& part,
                              const std::vector<int>& order, ExternalContext* ext = nullptr);

}  // namespace nbcoll
