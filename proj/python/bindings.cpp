#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "nbcoll/asymptotics.hpp"
#include "nbcoll/cc_solver.hpp"
#include "nbcoll/presets.hpp"

namespace py = pybind11;
using namespace nbcoll;

namespace {

py::dict cc_record(const CCResult& c) {
    py::dict d;
    d["lambda"] = c.lambda;
    d["residual"] = c.residual;
    d["cartesian_residual"] = c.cartesian_residual;
    d["s_star"] = c.s_star;
    d["hessian_spectrum"] = c.hessian_spectrum;
    d["degenerate"] = c.degenerate;
    d["label_class"] = c.label_class;
    py::list q;
    for (const auto& p : c.normalized_q) q.append(py::make_tuple(p.x, p.y));
    d["normalized_q"] = q;
    return d;
}

py::dict simulate(const std::string& preset, const std::string& precision, std::optional<double> rel_tol,
                  double stop_fraction) {
    Scenario sc = make_preset(preset);
    CollisionConfig cc;
    cc.run.precision = parse_precision(precision);
    cc.run.integrator.rel_tol = rel_tol.value_or(cc.run.precision == Precision::DoubleDouble ? 1e-16 : 1e-12);
    cc.run.with_tau = true;
    cc.stop_fraction = stop_fraction;
    CollisionRun run;
    {
        py::gil_scoped_release release;
        if (sc.shoot) {
            ShootConfig sh;
            sh.run = cc;
            run = shoot_to_collision(sc.family, sc.bracket_lo, sc.bracket_hi, sc.masses, sc.partition, sh).run;
        } else {
            run = integrate_family_to_collision(sc.family, sc.param, sc.masses, sc.partition, cc);
        }
    }
    const auto& traj = run.traj;
    const py::ssize_t count = traj.size(), n = sc.masses.size();
    py::array_t<double> t(count), r(count), q({count, n, py::ssize_t(2)});
    auto tv = t.mutable_unchecked<1>();
    auto rv = r.mutable_unchecked<1>();
    auto qv = q.mutable_unchecked<3>();
    for (py::ssize_t i = 0; i < count; ++i) {
        tv(i) = to_double(traj.time(i));
        rv(i) = traj.r_G(i);
        State s = traj.state(i);
        for (py::ssize_t b = 0; b < n; ++b) {
            qv(i, b, 0) = s.q[b].x;
            qv(i, b, 1) = s.q[b].y;
        }
    }
    py::dict d;
    d["scenario"] = sc.name;
    d["outcome"] = to_string(run.outcome);
    d["t"] = t;
    d["r_G"] = r;
    d["q"] = q;
    d["taus"] = traj.taus();
    if (run.outcome == CollisionOutcome::collision) {
        auto est = estimate_T_L(traj.states(), sc.masses, sc.partition);
        d["T_est"] = to_double(est.T);
        d["L_G"] = py::make_tuple(est.L.x, est.L.y);
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Collision dynamics of planar point masses";
    m.def("preset_names", &preset_names);
    m.def("simulate", &simulate, py::arg("preset"), py::arg("precision") = "dd", py::arg("rel_tol") = py::none(),
          py::arg("stop_fraction") = 1e-10, "Integrate a preset scenario to collision.");
    m.def(
        "enumerate_cc",
        [](const std::vector<double>& masses, int multistart, std::uint64_t seed) {
            std::vector<CCResult> cat;
            {
                py::gil_scoped_release release;
                cat = enumerate_cc(masses, multistart, seed);
            }
            py::list out;
            for (const auto& c : cat) out.append(cc_record(c));
            return out;
        },
        py::arg("masses"), py::arg("multistart") = 40, py::arg("seed") = 0);
    m.def(
        "solve_cc",
        [](const Eigen::VectorXd& s0, const std::vector<double>& masses) { return cc_record(solve_cc(s0, masses)); },
        py::arg("s0"), py::arg("masses"));
    m.def(
        "cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "nbcoll");
            return cli::run(args);
        },
        py::arg("args"), "Run a command line (without the program name); returns the exit code.");
}
