#pragma once
// Central configurations as critical points of the shape potential V(s).

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbcoll/cluster_coords.hpp"

namespace nbcoll {

class CCDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Newton ran into a collision shape (a pair distance collapsing in the chart).
class CCSingular : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CCOptions {
    int max_iter = 100;
    double grad_tol = 1e-13;        // relative to V
    double degeneracy_tol = 1e-8;   // relative to the largest |Hessian eigenvalue|
    double dedup_tol = 1e-6;        // Fubini-Study distance
    double singular_distance = 1e-6;  // pair distance of the normalized configuration
    double chart_bound = 1e6;       // |s| beyond this counts as leaving the chart
};

struct CCResult {
    std::vector<double> masses;    // original body order
    std::vector<int> jacobi_order;  // chart order used for s_star
    Eigen::VectorXd s_star;
    double lambda = 0.0;           // U/I of the normalized configuration (= V(s*))
    double residual = 0.0;         // |grad V(s*)|
    double cartesian_residual = 0.0;  // max_i |dU/dq_i + lambda m_i q_i|
    std::vector<double> hessian_spectrum;  // ascending
    bool degenerate = false;
    bool isolated = false;         // numerical heuristic, see enumerate_cc
    Vec2List normalized_q;         // original body order, centre of mass 0, I = 1
    int iterations = 0;
    int label_class = -1;          // index of the class modulo relabelling of equal masses
};

// Damped Newton from s0 in the chart of `masses` taken in jacobi_order
// (identity when empty).
CCResult solve_cc(const Eigen::VectorXd& s0, const std::vector<double>& masses, const std::vector<int>& jacobi_order = {},
                  const CCOptions& opt = {});

// Fubini-Study distance between two configurations modulo rotation (same body order).
double fs_distance(const Vec2List& a, const Vec2List& b, const std::vector<double>& masses);
// Same, minimised over relabellings that only exchange equal masses.
double fs_distance_relabel(const Vec2List& a, const Vec2List& b, const std::vector<double>& masses);

// Multistart over quasi-random chart seeds and every choice of last Jacobi
// body; deduplicated modulo rotation. `isolated` is set for nondegenerate
// points, or when a shell search at radius 10 dedup_tol finds no other
// critical point; this is a heuristic, not a proof.
std::vector<CCResult> enumerate_cc(const std::vector<double>& masses, int multistart_count, std::uint64_t seed = 0,
                                   const CCOptions& opt = {});

int count_label_classes(const std::vector<CCResult>& catalog);

// Smallest Fubini-Study distance from a configuration to the catalog.
double cc_distance(const Vec2List& q, const std::vector<CCResult>& catalog);
// Shape point in the chart of (masses, jacobi_order).
double cc_distance(const Eigen::VectorXd& s, const std::vector<double>& masses, const std::vector<int>& jacobi_order,
                   const std::vector<CCResult>& catalog);

// Normalized configuration (centre of mass 0, I = 1) in original body order.
Vec2List normalized_configuration(const Eigen::VectorXd& s, const std::vector<double>& masses,
                                  const std::vector<int>& jacobi_order);

std::string catalog_to_json(const std::vector<CCResult>& catalog);
std::vector<CCResult> catalog_from_json(const std::string& text);

}  // namespace nbcoll
