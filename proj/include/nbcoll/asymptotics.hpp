#pragma once
// Collision-time estimation, power-law and exponential fits, and the rate
// checks along a collapsing cluster.

#include <string>
#include <vector>

#include "nbcoll/blowup.hpp"
#include "nbcoll/core.hpp"
#include "nbcoll/nbody.hpp"

namespace nbcoll {

class InsufficientWindow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sample sequence used by the analyses. tau and mu0 are optional; when
// present they come from the integration in full precision.
struct CollapseSeries {
    std::vector<State> states;
    std::vector<double> taus;
    std::vector<double> mu0;
};
CollapseSeries collapse_series(const NBodyTrajectory& traj);

struct PowerLawFit {
    double exponent = 0.0;
    double constant = 0.0;
    double x_min = 0.0, x_max = 0.0;  // window in T - t actually covered
    double r_squared = 0.0;
    size_t n_points = 0;
};

// Least squares of log y on log x over x in [lo, hi]; needs 10 points.
PowerLawFit fit_power_x(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi);
// Same with x = T - t.
PowerLawFit fit_power(const std::vector<DoubleDouble>& t, const std::vector<double>& y, const DoubleDouble& T,
                      double lo, double hi);

// log y = log C - E tau over all samples with y > 0.
struct ExpFit {
    double C = 0.0;
    double E = 0.0;
    double slope = 0.0;  // = -E
    double r_squared = 0.0;
    size_t n_points = 0;
    bool exact_zero = false;  // every value was zero
};
ExpFit fit_exponential(const std::vector<double>& tau, const std::vector<double>& y);

struct TLEstimate {
    DoubleDouble T;
    DoubleDouble T_linear;  // first stage (fit of r^{3/2} against t)
    Vec2 L{};
    double uncertainty = 0.0;  // |T - T_linear|
    double rate = 0.0;         // fitted A^{3/4} from r^{3/2} = A^{3/4} (T - t)
    size_t n_points = 0;
};

// r^{3/2} linear in t over the deepest `decades` decades of r (optionally
// skipping the final `skip_decades`).
TLEstimate estimate_T_series(const std::vector<DoubleDouble>& t, const std::vector<double>& r, double decades = 3.0,
                             double skip_decades = 0.0);
// Series fit, then refined once with the local law at the deepest used sample
// (T = t + (2/3) r / (-rdot)); L extrapolated from the cluster center of mass.
TLEstimate estimate_T_L(const std::vector<State>& states, const MassSystem& m, const ClusterPartition& part,
                        double decades = 3.0, double skip_decades = 0.0);

inline constexpr double kMuFloorFactor = 100.0;

struct RatioCheck {
    std::string name;
    double target = 0.0;
    double limit = 0.0;          // value at the deep end of the window
    double max_deviation = 0.0;  // max |value/target - 1| over the window
};

struct RateOptions {
    double window_lo = 1e-8;
    double window_hi = 1e-4;
};

struct RateReport {
    double window_lo = 0.0, window_hi = 0.0;
    size_t n_points = 0;
    double A_hat = 0.0;
    std::vector<RatioCheck> ratio_checks;
    PowerLawFit J_fit, I0_fit, U_fit, K_fit;
    double H_G_limit = 0.0;
    double H_G_tail_oscillation = 0.0;  // max - min over the last decade of the window
    double mu_bound = 0.0, mu_slope = 0.0;        // sup |mu|/x^{7/3}; slope of log ratio vs log(1/x)
    double mudot_bound = 0.0, mudot_slope = 0.0;  // sup |mudot|/x^{4/3}
    // |mu| at the deepest sample: the residual of a near-collision orbit.
    // Samples with |mu| below kMuFloorFactor times this are left out of mu fits.
    double mu_floor = 0.0;
    size_t mu_points = 0;
    double r_tau_slope = 0.0, E1 = 0.0, E2 = 0.0;  // log r vs tau; E1 <= -local slope <= E2
    double v_target = 0.0, v_tail = 0.0, v_tail_deviation = 0.0;  // v -> -(2/3) A^{3/4}
    double spin_total = 0.0;  // total variation of theta over the trajectory
    double spin_tail = 0.0;   // variation over the last decade of T - t
    std::vector<double> spin_doubling;  // S(tau_max/2^k) - S(tau_max/2^{k+1}), k = 0, 1, 2
    double cc_residual_tail = 0.0;
    std::vector<double> cc_residual_medians;  // per decade of T - t, shallow to deep
    bool cc_residual_decreasing = false;
    std::vector<std::string> notes;
};

RateReport verify_collision_rates(const CollapseSeries& series, const MassSystem& m, const ClusterPartition& part,
                                  const DoubleDouble& T, const Vec2& L, const RateOptions& opt = {});

// ||(2/9) m_i xi_i + dU/dxi_i|| with xi = (q - L)/(T - t)^{2/3} over the focus cluster.
double cc_residual(const State& s, const MassSystem& m, const ClusterPartition& part, const Vec2& L, double x);

struct DecayTerm {
    std::string name;
    ExpFit fit;
};

struct PerturbationDecay {
    std::vector<DecayTerm> terms;  // delta_v, delta_w, mu_over_sqrt_r, spin_v, tidal_v
    double r_slope = 0.0;          // d log r / d tau
    double spin_chain = 0.0;       // slope(mu^2/r) / slope(log r), expected 6
    double mu_chain = 0.0;         // slope(mu/sqrt r) / slope(log r), expected 3
    double tidal_chain = 0.0;      // slope(r^2 dU_ext/dr) / slope(log r), expected >= 2
    bool decaying = false;         // every non-zero term has E > 0
    bool isolated = false;         // all perturbations identically zero
    double tau_span = 0.0;
    double mu_floor = 0.0;  // as in RateReport
    size_t mu_points = 0;
};

// Fits over blow-up samples with tau in [tau_lo, tau_hi] (all when both are 0).
PerturbationDecay verify_perturbation_decay(const BlowupSeries& series, double tau_lo = 0.0, double tau_hi = 0.0);

// Total variation of theta over successive halvings of the tau span, deepest
// first: row k covers [t0 + span/2^{k+1}, t0 + span/2^k].
struct SpinTailRow {
    double tau_lo = 0.0, tau_hi = 0.0;
    double variation = 0.0;
};
std::vector<SpinTailRow> spin_tail_table(const BlowupSeries& series, int halvings = 3);

}  // namespace nbcoll
