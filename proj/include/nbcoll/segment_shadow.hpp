#pragma once
// Sampled cone constants, shrinking isolating segments around a perturbed
// orbit, and shadowing distances.
//
// Everything here is numerical evidence on finite samples, not a proof.

#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nbcoll/cluster_coords.hpp"

namespace nbcoll {

using Field = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using TimeCurve = std::function<Eigen::VectorXd(double)>;

class SplitMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TubeOutsideRegion : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Largest / smallest eigenvalue of the symmetric part.
double logarithmic_norm(const Eigen::MatrixXd& M);
double lower_log_norm(const Eigen::MatrixXd& M);

// Central differences with step h * max(1, |z_j|).
Eigen::MatrixXd jacobian_fd(const Field& f, const Eigen::VectorXd& z, double h = 1e-6);

// Real basis adapted to the center-unstable (Re >= -tol) and stable
// eigenspaces of J; columns [0, dim_u) span the first. Each block is
// orthonormalised, the blocks are not orthogonal to each other.
struct SplitBasis {
    Eigen::MatrixXd P;
    Eigen::MatrixXd P_inv;
    int dim_u = 0;
    int dim_s = 0;
    Eigen::VectorXcd spectrum;
};

SplitBasis hyperbolic_split(const Eigen::MatrixXd& J, double tol = 1e-9);

struct ConeConstants {
    double mu_arrow = 0.0;  // sup of mu_log(df_y/dy) + |df_y/dx|
    double xi_arrow = 0.0;  // inf of m_l(df_x/dx) - |df_x/dy|
    double R = 0.0;
    Eigen::VectorXd center;
    SplitBasis split;
    int sample_count = 0;
    bool cone_condition = false;  // mu_arrow < 0 and mu_arrow < xi_arrow

    // adapted coordinates (x, y) = P^-1 (z - center) and back
    Eigen::VectorXd to_local(const Eigen::VectorXd& z) const { return split.P_inv * (z - center); }
    Eigen::VectorXd from_local(const Eigen::VectorXd& xy) const { return center + split.P * xy; }
};

// Samples the ball of radius 1.1 R (adapted coordinates) around center, which
// should be an equilibrium of f. With an empty unstable block xi_arrow is
// +inf; with an empty stable block mu_arrow is -inf. `split` (dim_u, dim_s),
// when given, must agree with the spectrum.
ConeConstants cone_constants(const Field& f, const Eigen::VectorXd& center, double R,
                             std::optional<std::pair<int, int>> split = std::nullopt, int sample_count = 1024);

struct SegmentSpec {
    TimeCurve z_p;    // perturbed orbit, z_p' = f(z_p) + delta
    TimeCurve delta;  // perturbation along z_p
    double r = 0.0;   // tube radius r e^{gamma t}
    double gamma = 0.0;
    double a = 0.0;  // |delta(t)| <= a e^{alpha t} in adapted coordinates
    double alpha = 0.0;
    double t_begin = 0.0, t_end = 0.0;
    int time_slices = 64;
    int sphere_points = 256;
};

struct SegmentSlice {
    double t = 0.0;
    double radius = 0.0;
    double exit_direct = 0.0;   // min over the exit set
    double entry_direct = 0.0;  // max over the entry set
    double exit_sufficient = 0.0;
    double entry_sufficient = 0.0;
};

struct SegmentReport {
    double min_exit_margin = 0.0;   // over slices t >= t_start
    double max_entry_margin = 0.0;
    double t_exit = 0.0;   // threshold where the sufficient exit margin turns positive
    double t_entry = 0.0;  // same for the entry margin
    double t_start = 0.0;  // max(t_begin, t_exit, t_entry)
    double t_direct = 0.0;  // first slice from which every direct margin has the right sign (+inf if none)
    bool verified = false;
    bool sufficient_implies_direct = true;
    long sample_count = 0;
    std::vector<SegmentSlice> slices;
};

// Exit set: |x - x_p| = rho, |y - y_p| <= rho; entry set with x and y swapped,
// rho = r e^{gamma t}. Throws std::invalid_argument when the ordering
// mu_arrow < gamma < xi_arrow, alpha < gamma or gamma < 0 fails, and
// TubeOutsideRegion when a tube slice leaves the ball of the cone constants.
SegmentReport verify_segment(const SegmentSpec& spec, const Field& f, const ConeConstants& cone);

// Least a with |delta_i| <= a e^{alpha t_i} on the given samples.
double delta_amplitude(const std::vector<double>& t, const std::vector<double>& delta_norm, double alpha);

// Piecewise linear curve through samples (t increasing); clamps outside.
TimeCurve sampled_curve(std::vector<double> t, std::vector<Eigen::VectorXd> z);

struct ShadowReport {
    double sup_ratio = 0.0;  // sup |z_p - z_1| e^{-gamma tau}
    std::vector<double> tau, distance, ratio;
    double log_slope = 0.0;  // fitted d log|z_p - z_1| / d tau
    int slope_points = 0;
    double ratio_tail_slope = 0.0;  // d log ratio / d tau on the last half; > 0 signals divergence
};

// The reference is interpolated linearly onto the perturbed grid where they
// overlap. The slope is fitted on [tau_lo, tau_hi] (all overlap when equal)
// over distances above `floor`.
ShadowReport shadow_distance(const std::vector<double>& tau_p, const std::vector<Eigen::VectorXd>& z_p,
                             const std::vector<double>& tau_ref, const std::vector<Eigen::VectorXd>& z_ref,
                             double gamma, double tau_lo = 0.0, double tau_hi = 0.0, double floor = 0.0);

// Orbit of the autonomous blow-up field through z_end at tau_end, sampled at
// taus (all <= tau_end): integrates the ejection orbit from (r, -v, s, -w)
// forward and maps it back with the time-reversal symmetry.
std::vector<Eigen::VectorXd> reversed_ejection_reference(const ClusterGeometry& geo, const Eigen::VectorXd& z_end,
                                                         double tau_end, const std::vector<double>& taus,
                                                         double rel_tol = 1e-13);

}  // namespace nbcoll
