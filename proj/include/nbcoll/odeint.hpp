#pragma once
// Dormand-Prince 5(4) with PI step control and quintic dense output.
//
// The state scalar is double or DoubleDouble; time is always DoubleDouble so
// that steps of 1e-20 next to t ~ 1 stay representable.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbcoll/dd.hpp"

namespace nbcoll {

template <class T>
using Vec = std::vector<T>;

template <class T>
using Rhs = std::function<void(const DoubleDouble& t, const Vec<T>& y, Vec<T>& dydt)>;

struct IntegratorConfig {
    double rel_tol = 1e-12;
    double abs_tol = 1e-300;
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 0.0;  // 0: automatic
    bool dense = true;
    long max_steps = 5'000'000;
    // Components are measured in groups of this size (planar vectors use 2),
    // so a vector passing through an axis does not force tiny steps.
    int group_size = 1;
    // Optional per-group absolute tolerance (raised to at least abs_tol). Lets
    // a group whose exact value is zero, such as a centre of mass held at the
    // origin by symmetry, be measured on a physical scale instead of its own
    // rounding noise.
    std::vector<double> group_abs_tol;

    void validate() const;
};

enum class StopReason { reached_end, event, step_underflow, max_steps, nonfinite };

std::string to_string(StopReason r);

struct TrajectoryEvent {
    DoubleDouble t;
    std::string kind;
};

template <class T>
struct Trajectory {
    std::vector<DoubleDouble> t;
    std::vector<Vec<T>> y;
    std::vector<Vec<T>> f;      // derivative at each sample
    std::vector<Vec<T>> f_mid;  // per step: derivatives at 1/3 and 2/3 (dense only), 2 entries per step
    std::vector<TrajectoryEvent> events;
    StopReason reason = StopReason::reached_end;
    std::string message;
    long rejected = 0;
    long rhs_evals = 0;

    size_t size() const { return t.size(); }
    bool has_dense() const { return f_mid.size() == 2 * (t.size() ? t.size() - 1 : 0); }
    // Step index i covers [t[i], t[i+1]] (either direction).
    size_t locate(const DoubleDouble& when) const;
    Vec<T> eval(const DoubleDouble& when) const;
    Vec<T> eval_derivative(const DoubleDouble& when) const;
};

// Called after every accepted step; returning true stops the integration
// with reason "event".
template <class T>
using StepCallback = std::function<bool(Trajectory<T>&)>;

template <class T>
Trajectory<T> integrate(const Rhs<T>& rhs, const DoubleDouble& t0, Vec<T> y0, const DoubleDouble& t_end,
                        const IntegratorConfig& cfg, const StepCallback<T>& on_step = {});

namespace dp {

// Quintic Hermite-Birkhoff weights: p(theta) = y0 + h (w0 f0 + wa fa + wb fb + w1 f1) + wd (y1 - y0)
struct DenseWeights {
    double w0, wa, wb, w1, wd;
};
DenseWeights dense_weights(double theta);
DenseWeights dense_derivative_weights(double theta);  // for h p'(theta)

}  // namespace dp

}  // namespace nbcoll
