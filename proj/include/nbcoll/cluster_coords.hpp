#pragma once
// Jacobi reduction of a cluster and the (r, theta, s) shape chart.
//
// Bodies are taken in the order given (callers permute to re-index the chart).
// Complex quantities live in std::complex<double>; real forms of s and omega
// interleave (Re s_1, Im s_1, Re s_2, ...).

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "nbcoll/vec2.hpp"

namespace nbcoll {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

class ChartViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kChartEps = 1e-10;

inline cplx to_c(const Vec2& v) { return {v.x, v.y}; }
inline Vec2 to_v(const cplx& c) { return {c.real(), c.imag()}; }

// Mass data of a cluster in Jacobi order; shared by every chart computation.
struct ClusterGeometry {
    int k = 0;
    std::vector<double> m;        // masses in Jacobi order
    std::vector<double> reduced;  // k-1 reduced masses
    double M = 0.0;
    Eigen::MatrixXd coeff;        // k x (k-1): q_i - c_G = sum_j coeff(i,j) z_j

    explicit ClusterGeometry(std::vector<double> masses);
    ClusterGeometry() = default;

    int shape_dim() const { return 2 * (k - 2); }  // real dimension of s
    // Hermitian metric <<u, v>> = sum_j reduced_j conj(u_j) v_j
    cplx inner(const CVec& u, const CVec& v) const;
    double mass_norm(const CVec& u) const { return std::sqrt(inner(u, u).real()); }
    // positions relative to the center of mass
    Vec2List positions(const CVec& frak_z) const;
    double potential(const CVec& frak_z) const;
};

struct JacobiFrame {
    int k = 0;
    std::vector<double> m;
    std::vector<double> reduced;
    Eigen::MatrixXd P;       // 2k x 2k, q = P z with z = (z_1, ..., z_{k-1}, c_G)
    Eigen::MatrixXd Mtilde;  // (2k-2) x (2k-2)
    Vec2List frak_z;         // k-1 Jacobi vectors
    Vec2 z_k{};              // center of mass
};

JacobiFrame jacobi_forward(const Vec2List& q, const std::vector<double>& m);
Vec2List jacobi_inverse(const JacobiFrame& frame);
CVec frame_complex(const JacobiFrame& frame);

struct ShapeState {
    double r = 0.0;
    double theta = 0.0;   // in [0, 2pi)
    Vec2List s;           // k-2 entries
    double rho = 0.0;
    Vec2List omega;
    double thetadot = 0.0;
    double mu = 0.0;
};

// Positions only; rho, omega, thetadot, mu are zero.
ShapeState shape_forward(const JacobiFrame& frame);
// frame_dot holds the Jacobi transform of the velocities.
ShapeState shape_velocity(const JacobiFrame& frame, const JacobiFrame& frame_dot);
// r e^{i theta} (s,1) / ||(s,1)||
CVec shape_reconstruct(const ClusterGeometry& geo, double r, double theta, const Vec2List& s);

Eigen::VectorXd to_real(const Vec2List& v);
Vec2List to_vec2(const Eigen::VectorXd& x);
CVec shape_point(const Eigen::VectorXd& s);  // (s, 1)

struct FubiniEval {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    double G_val = 0.0;
    double Omega_val = 0.0;
    double F_val = 0.0;
    double V_val = 0.0;
    Eigen::VectorXd gradV;
    Eigen::VectorXd gradF_s;
    double norm2_s1 = 0.0;  // ||(s,1)||^2
};

FubiniEval fubini_eval(const Eigen::VectorXd& s, const Eigen::VectorXd& omega, const ClusterGeometry& geo);

// Individual pieces, all analytic.
double shape_norm2(const Eigen::VectorXd& s, const ClusterGeometry& geo);
double fubini_F_direct(const Eigen::VectorXd& s, const Eigen::VectorXd& omega, const ClusterGeometry& geo);
Eigen::MatrixXd fubini_A_closed(const Eigen::VectorXd& s, const ClusterGeometry& geo);
Eigen::VectorXd fubini_B(const Eigen::VectorXd& s, const ClusterGeometry& geo);
Eigen::VectorXd fubini_gradF(const Eigen::VectorXd& s, const Eigen::VectorXd& omega, const ClusterGeometry& geo);
// derivative of A(s) in direction w
Eigen::MatrixXd fubini_dA(const Eigen::VectorXd& s, const Eigen::VectorXd& w, const ClusterGeometry& geo);
// d(B/N)/ds, used for the gyroscopic coupling (transpose minus itself)
Eigen::MatrixXd fubini_dBN(const Eigen::VectorXd& s, const ClusterGeometry& geo);

double shape_V(const Eigen::VectorXd& s, const ClusterGeometry& geo);
Eigen::VectorXd shape_gradV(const Eigen::VectorXd& s, const ClusterGeometry& geo);
Eigen::MatrixXd shape_hessV(const Eigen::VectorXd& s, const ClusterGeometry& geo);

// H_G = rho^2/2 + mu^2/(2r^2) + (r^2/2) F - V/r + (M/2) |cdot|^2
double energy_shape(const ShapeState& shape, double V, double F, const Vec2& cdot_G, double M_G);

// Pick a Jacobi order (permutation of 0..k-1) whose last Jacobi vector is
// largest relative to r, keeping the chart far from its boundary.
std::vector<int> best_jacobi_order(const Vec2List& q, const std::vector<double>& m);

}  // namespace nbcoll
