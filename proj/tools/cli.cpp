#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "nbcoll/asymptotics.hpp"
#include "nbcoll/blowup.hpp"
#include "nbcoll/cc_solver.hpp"
#include "nbcoll/segment_shadow.hpp"

namespace nbcoll::cli {

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!ok) throw ConfigError(join(path, key), "unknown field");
    }
}

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<double>();
}

long get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
    return j.get<long>();
}

bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
    return j.get<bool>();
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> get_numbers(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

Vec2List get_points(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of [x, y] pairs");
    Vec2List out;
    for (size_t i = 0; i < j.size(); ++i) {
        std::string p = path + "[" + std::to_string(i) + "]";
        auto xy = get_numbers(j[i], p);
        if (xy.size() != 2) throw ConfigError(p, "expected [x, y]");
        out.push_back({xy[0], xy[1]});
    }
    return out;
}

Scenario parse_scenario(const json& j) {
    const std::string path = "scenario";
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    if (j.contains("preset")) {
        only_keys(j, path, {"preset"});
        std::string name = get_string(j["preset"], "scenario.preset");
        try {
            return make_preset(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("scenario.preset", e.what());
        }
    }
    only_keys(j, path, {"name", "masses", "positions", "velocities", "focus", "shoot"});
    for (const char* req : {"masses", "positions", "velocities", "focus"})
        if (!j.contains(req)) throw ConfigError(join(path, req), "required when no preset is given");
    auto masses = get_numbers(j["masses"], "scenario.masses");
    for (double mi : masses)
        if (!(mi > 0.0) || !std::isfinite(mi)) throw ConfigError("scenario.masses", "masses must be positive");
    State s;
    s.q = get_points(j["positions"], "scenario.positions");
    s.qdot = get_points(j["velocities"], "scenario.velocities");
    const int n = static_cast<int>(masses.size());
    if (n < 2) throw ConfigError("scenario.masses", "need at least two bodies");
    if (s.size() != n) throw ConfigError("scenario.positions", "one position per mass expected");
    if (static_cast<int>(s.qdot.size()) != n) throw ConfigError("scenario.velocities", "one velocity per mass expected");
    std::vector<int> focus;
    for (double f : get_numbers(j["focus"], "scenario.focus")) {
        if (f != std::floor(f) || f < 0 || f >= n) throw ConfigError("scenario.focus", "body indices expected");
        focus.push_back(static_cast<int>(f));
    }
    try {
        check_nonsingular(s);
    } catch (const std::exception& e) {
        throw ConfigError("scenario.positions", e.what());
    }
    ClusterPartition part;
    try {
        part = ClusterPartition::with_focus(n, focus);
        part.validate(n);
    } catch (const std::exception& e) {
        throw ConfigError("scenario.focus", e.what());
    }
    std::string name = j.contains("name") ? get_string(j["name"], "scenario.name") : "explicit";
    Scenario sc = explicit_scenario(name, MassSystem(masses), part, s);
    if (j.contains("shoot")) {
        const json& sh = j["shoot"];
        only_keys(sh, "scenario.shoot", {"direction_positions", "direction_velocities", "bracket"});
        if (!sh.contains("bracket")) throw ConfigError("scenario.shoot.bracket", "required");
        auto br = get_numbers(sh["bracket"], "scenario.shoot.bracket");
        if (br.size() != 2 || !(br[0] < br[1])) throw ConfigError("scenario.shoot.bracket", "expected [lo, hi] with lo < hi");
        if (sh.contains("direction_positions")) {
            sc.family.direction.q = get_points(sh["direction_positions"], "scenario.shoot.direction_positions");
            if (sc.family.direction.size() != n)
                throw ConfigError("scenario.shoot.direction_positions", "one entry per body expected");
        }
        if (sh.contains("direction_velocities")) {
            sc.family.direction.qdot = get_points(sh["direction_velocities"], "scenario.shoot.direction_velocities");
            if (static_cast<int>(sc.family.direction.qdot.size()) != n)
                throw ConfigError("scenario.shoot.direction_velocities", "one entry per body expected");
        }
        sc.shoot = true;
        sc.param = 0.0;
        sc.bracket_lo = br[0];
        sc.bracket_hi = br[1];
    }
    return sc;
}

double positive(double x, const std::string& path) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(path, "must be positive");
    return x;
}

// ---------------------------------------------------------------- output

void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json fit_json(const PowerLawFit& f) {
    return {{"exponent", num(f.exponent)}, {"constant", num(f.constant)}, {"x_min", num(f.x_min)},
            {"x_max", num(f.x_max)},       {"r_squared", num(f.r_squared)}, {"n_points", f.n_points}};
}

json fit_json(const ExpFit& f) {
    return {{"C", num(f.C)}, {"E", num(f.E)}, {"r_squared", num(f.r_squared)}, {"n_points", f.n_points},
            {"exact_zero", f.exact_zero}};
}

json numbers(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

json header(const std::string& command) {
    return {{"schema", kConfigSchema}, {"command", command}};
}

// simulate writes summary.json, every other command <command>.json
std::string output_stem(const std::string& command) { return command == "simulate" ? "summary" : command; }

struct Failure : std::runtime_error {
    std::string kind;
    Failure(std::string k, const std::string& what) : std::runtime_error(what), kind(std::move(k)) {}
};

// ---------------------------------------------------------------- pipeline

struct Pipeline {
    Scenario scenario;
    CollisionRun run;
    std::optional<ShootResult> shoot;
    bool collided = false;
    CollapseSeries series;
    std::optional<TLEstimate> est;
    std::optional<BlowupSeries> blowup;
    std::string analysis_error;
};

CollisionConfig collision_config(const RunConfig& cfg) {
    CollisionConfig c;
    c.run.precision = cfg.precision;
    c.run.integrator.rel_tol = cfg.effective_rel_tol();
    c.run.integrator.max_steps = cfg.max_steps;
    c.run.with_tau = true;
    c.stop_fraction = cfg.stop_fraction;
    c.t_max = cfg.t_max;
    return c;
}

Pipeline run_pipeline(const RunConfig& cfg) {
    if (!cfg.has_scenario) throw ConfigError("scenario", "required for this command");
    Pipeline p;
    p.scenario = cfg.scenario;
    const Scenario& sc = p.scenario;
    CollisionConfig cc = collision_config(cfg);
    if (sc.shoot) {
        ShootConfig sh;
        sh.run = cc;
        sh.param_tol = cfg.param_tol;
        sh.max_iter = cfg.shoot_max_iter;
        p.shoot = shoot_to_collision(sc.family, sc.bracket_lo, sc.bracket_hi, sc.masses, sc.partition, sh);
        p.run = p.shoot->run;
    } else {
        p.run = integrate_family_to_collision(sc.family, sc.param, sc.masses, sc.partition, cc);
    }
    p.collided = p.run.outcome == CollisionOutcome::collision;
    if (!p.collided) return p;
    p.series = collapse_series(p.run.traj);
    try {
        p.est = estimate_T_L(p.series.states, sc.masses, sc.partition);
        p.blowup = mcgehee_observables(p.series.states, sc.masses, sc.partition, p.est->L, p.est->T, p.series.taus,
                                       p.series.mu0);
    } catch (const std::exception& e) {
        p.analysis_error = e.what();
    }
    return p;
}

std::vector<double> focus_masses(const Scenario& sc) {
    std::vector<double> m;
    for (int i : sc.partition.focus_members()) m.push_back(sc.masses[i]);
    return m;
}

Vec2List focus_positions(const State& s, const Scenario& sc) {
    Vec2List q;
    for (int i : sc.partition.focus_members()) q.push_back(s.q[i]);
    return q;
}

std::string trajectory_csv(const Pipeline& p, int every) {
    const auto& m = p.scenario.masses;
    const auto& part = p.scenario.partition;
    const int n = m.size();
    std::ostringstream os;
    os << "#csv_schema=" << kCsvSchema << "\n";
    os << "t,t_lo,tau,origin_x,origin_y";
    for (int i = 0; i < n; ++i) os << ",q" << i << "_x,q" << i << "_y,v" << i << "_x,v" << i << "_y";
    os << ",r_G,v,theta,mu,U_G,K_G,H_G,J_G\n";
    const auto& traj = p.run.traj;
    const size_t count = traj.size();
    auto taus = traj.taus();
    for (size_t i = 0; i < count; ++i) {
        if (i % static_cast<size_t>(every) != 0 && i + 1 != count) continue;
        State s = traj.state(i);
        DoubleDouble t = traj.time(i);
        os << format_double(t.hi) << ',' << format_double(t.lo) << ',';
        if (!taus.empty()) os << format_double(taus[i]);
        os << ',' << format_double(s.origin.x) << ',' << format_double(s.origin.y);
        for (int b = 0; b < n; ++b)
            os << ',' << format_double(s.q[b].x) << ',' << format_double(s.q[b].y) << ','
               << format_double(s.qdot[b].x) << ',' << format_double(s.qdot[b].y);
        std::optional<Vec2> L;
        if (p.est) L = p.est->L;
        ClusterObservables obs = cluster_observables(s, m, part, L);
        os << ',' << format_double(traj.r_G(i)) << ',';
        if (p.blowup) os << format_double(p.blowup->states[i].v);
        os << ',';
        if (p.blowup) os << format_double(p.blowup->states[i].theta);
        os << ',' << format_double(to_double(traj.mu0(i))) << ',' << format_double(obs.U_G) << ','
           << format_double(obs.K_G) << ',' << format_double(obs.H_G) << ',';
        if (obs.J_G) os << format_double(*obs.J_G);
        os << '\n';
    }
    return os.str();
}

// Rebuild a collapse series from a trajectory CSV written by simulate.
CollapseSeries read_trajectory_csv(const std::string& path, const Scenario& sc) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--trajectory", "cannot open " + path);
    std::string line;
    std::vector<std::string> cols;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        break;
    }
    std::map<std::string, size_t> at;
    for (size_t i = 0; i < cols.size(); ++i) at[cols[i]] = i;
    const int n = sc.masses.size();
    auto need = [&](const std::string& name) {
        auto it = at.find(name);
        if (it == at.end()) throw ConfigError("--trajectory", "missing column " + name);
        return it->second;
    };
    size_t it_ = need("t"), itlo = need("t_lo"), itau = need("tau"), iox = need("origin_x"), ioy = need("origin_y"),
           imu = need("mu");
    need("q" + std::to_string(n - 1) + "_x");
    if (at.count("q" + std::to_string(n) + "_x")) throw ConfigError("--trajectory", "more bodies than the scenario");
    CollapseSeries out;
    bool have_tau = true;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) f.push_back(c);
        if (f.size() < cols.size()) f.resize(cols.size());
        auto val = [&](size_t k) {
            double v = 0.0;
            const std::string& s = f[k];
            auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || r.ec != std::errc()) throw ConfigError("--trajectory", "bad number on line " + std::to_string(row));
            return v;
        };
        State s;
        s.t = DoubleDouble(val(it_)) + DoubleDouble(val(itlo));
        s.origin = {val(iox), val(ioy)};
        for (int b = 0; b < n; ++b) {
            std::string pre = "q" + std::to_string(b);
            std::string vpre = "v" + std::to_string(b);
            s.q.push_back({val(need(pre + "_x")), val(need(pre + "_y"))});
            s.qdot.push_back({val(need(vpre + "_x")), val(need(vpre + "_y"))});
        }
        out.states.push_back(s);
        if (f[itau].empty())
            have_tau = false;
        else
            out.taus.push_back(val(itau));
        out.mu0.push_back(val(imu));
    }
    if (!have_tau) out.taus.clear();
    if (out.states.empty()) throw ConfigError("--trajectory", "no samples");
    return out;
}

// ---------------------------------------------------------------- commands

struct Outcome {
    json doc;
    int code = 0;
    std::vector<std::pair<std::string, std::string>> extra_files;  // name, content
    std::string table;
};

json scenario_summary(const Pipeline& p) {
    json j;
    j["scenario"] = p.scenario.name;
    j["bodies"] = p.scenario.masses.size();
    j["focus"] = p.scenario.partition.focus_members();
    j["outcome"] = to_string(p.run.outcome);
    j["samples"] = p.run.traj.size();
    j["terminal_r_G"] = num(p.run.terminal_r_G);
    if (p.shoot) {
        j["shooting"] = {{"param", num(to_double(p.shoot->param))},
                         {"param_lo_part", num(p.shoot->param.lo)},
                         {"iterations", p.shoot->iterations}};
    }
    return j;
}

Outcome cmd_simulate(const RunConfig& cfg) {
    Outcome out;
    Pipeline p = run_pipeline(cfg);
    out.doc = header("simulate");
    out.doc["status"] = "ok";
    out.doc["precision"] = to_string(cfg.precision);
    out.doc.update(scenario_summary(p));
    out.extra_files.push_back({"trajectory.csv", trajectory_csv(p, cfg.csv_every)});
    out.doc["csv"] = "trajectory.csv";
    std::ostringstream tab;
    tab << "scenario   " << p.scenario.name << "\noutcome    " << to_string(p.run.outcome) << "\nsamples    "
        << p.run.traj.size() << "\nr_G end    " << format_double(p.run.terminal_r_G) << "\n";
    if (!p.collided) {
        out.doc["status"] = "error";
        out.doc["reason"] = "no collision: " + p.run.message;
        out.code = kExitFailure;
    } else if (!p.est) {
        out.doc["status"] = "error";
        out.doc["reason"] = "collision time estimate failed: " + p.analysis_error;
        out.code = kExitFailure;
    } else {
        out.doc["T_est"] = num(to_double(p.est->T));
        out.doc["T_est_lo_part"] = num(p.est->T.lo);
        out.doc["T_uncertainty"] = num(p.est->uncertainty);
        out.doc["L_G"] = {num(p.est->L.x), num(p.est->L.y)};
        tab << "T_est      " << format_double(to_double(p.est->T)) << "\nL_G        (" << format_double(p.est->L.x)
            << ", " << format_double(p.est->L.y) << ")\n";
        auto fm = focus_masses(p.scenario);
        if (cfg.analysis.cc_residual && fm.size() >= 3) {
            auto catalog = enumerate_cc(fm, 20, 0);
            double d = cc_distance(focus_positions(p.run.traj.state(p.run.traj.size() - 1), p.scenario), catalog);
            out.doc["terminal_cc_distance"] = num(d);
            tab << "cc dist    " << format_double(d) << "\n";
        }
    }
    out.table = tab.str();
    return out;
}

Outcome cmd_rates(const RunConfig& cfg, const std::string& trajectory_path) {
    Outcome out;
    out.doc = header("rates");
    if (!cfg.has_scenario) throw ConfigError("scenario", "required for this command");
    const Scenario& sc = cfg.scenario;
    CollapseSeries series;
    if (!trajectory_path.empty()) {
        series = read_trajectory_csv(trajectory_path, sc);
        out.doc["source"] = "trajectory";
    } else {
        Pipeline p = run_pipeline(cfg);
        out.doc.update(scenario_summary(p));
        if (!p.collided) throw Failure("no_collision", "no collision: " + p.run.message);
        series = std::move(p.series);
        out.doc["source"] = "scenario";
    }
    TLEstimate est = estimate_T_L(series.states, sc.masses, sc.partition);
    RateOptions ro;
    ro.window_lo = cfg.analysis.window_lo;
    ro.window_hi = cfg.analysis.window_hi;
    out.doc["T_est"] = num(to_double(est.T));
    out.doc["L_G"] = {num(est.L.x), num(est.L.y)};
    std::ostringstream tab;
    tab << "T_est                " << format_double(to_double(est.T)) << "\n";
    out.doc["status"] = "ok";
    if (cfg.analysis.rates) {
        try {
            RateReport r = verify_collision_rates(series, sc.masses, sc.partition, est.T, est.L, ro);
            json rj;
            rj["window"] = {num(r.window_lo), num(r.window_hi)};
            rj["n_points"] = r.n_points;
            rj["A_hat"] = num(r.A_hat);
            json checks = json::array();
            for (const auto& c : r.ratio_checks)
                checks.push_back({{"name", c.name}, {"target", num(c.target)}, {"limit", num(c.limit)},
                                  {"max_deviation", num(c.max_deviation)}});
            rj["ratio_checks"] = checks;
            rj["J_fit"] = fit_json(r.J_fit);
            rj["I0_fit"] = fit_json(r.I0_fit);
            rj["U_fit"] = fit_json(r.U_fit);
            rj["K_fit"] = fit_json(r.K_fit);
            rj["H_G_limit"] = num(r.H_G_limit);
            rj["H_G_tail_oscillation"] = num(r.H_G_tail_oscillation);
            rj["mu_bound"] = num(r.mu_bound);
            rj["mu_slope"] = num(r.mu_slope);
            rj["mudot_bound"] = num(r.mudot_bound);
            rj["mudot_slope"] = num(r.mudot_slope);
            rj["mu_floor"] = num(r.mu_floor);
            rj["mu_points"] = r.mu_points;
            rj["r_tau_slope"] = num(r.r_tau_slope);
            rj["E1"] = num(r.E1);
            rj["E2"] = num(r.E2);
            rj["v_target"] = num(r.v_target);
            rj["v_tail"] = num(r.v_tail);
            rj["v_tail_deviation"] = num(r.v_tail_deviation);
            if (cfg.analysis.spin) {
                rj["spin_total"] = num(r.spin_total);
                rj["spin_tail"] = num(r.spin_tail);
                rj["spin_doubling"] = numbers(r.spin_doubling);
            }
            if (cfg.analysis.cc_residual) {
                rj["cc_residual_tail"] = num(r.cc_residual_tail);
                rj["cc_residual_medians"] = numbers(r.cc_residual_medians);
                rj["cc_residual_decreasing"] = r.cc_residual_decreasing;
            }
            rj["notes"] = r.notes;
            out.doc["rates"] = rj;

            tab << "A_hat                " << format_double(r.A_hat) << "\n";
            for (const auto& c : r.ratio_checks)
                tab << "  " << c.name << std::string(c.name.size() < 19 ? 19 - c.name.size() : 1, ' ')
                    << format_double(c.limit) << "  target " << format_double(c.target) << "  max dev "
                    << format_double(c.max_deviation) << "\n";
            tab << "J exponent           " << format_double(r.J_fit.exponent) << "\nH_G limit            "
                << format_double(r.H_G_limit) << "\nmu bound             " << format_double(r.mu_bound)
                << "\nv tail               " << format_double(r.v_tail) << "  target " << format_double(r.v_target)
                << "\n";
        } catch (const InsufficientWindow& e) {
            out.doc["rates"] = {{"status", "error"}, {"reason", e.what()}};
            out.doc["status"] = "error";
            out.doc["reason"] = std::string("rates: ") + e.what();
            out.code = kExitFailure;
        }
    }
    if (cfg.analysis.perturbation) {
        try {
            auto bs = mcgehee_observables(series.states, sc.masses, sc.partition, est.L, est.T, series.taus, series.mu0);
            double tau_lo = 0.0;
            for (size_t i = 0; i < series.states.size(); ++i)
                if (to_double(est.T - series.states[i].t) <= cfg.analysis.decay_from) {
                    tau_lo = bs.states[i].tau;
                    break;
                }
            auto d = verify_perturbation_decay(bs, tau_lo, bs.states.back().tau);
            json dj;
            json terms = json::object();
            for (const auto& t : d.terms) terms[t.name] = fit_json(t.fit);
            dj["terms"] = terms;
            dj["r_slope"] = num(d.r_slope);
            dj["spin_chain"] = num(d.spin_chain);
            dj["mu_chain"] = num(d.mu_chain);
            dj["tidal_chain"] = num(d.tidal_chain);
            dj["decaying"] = d.decaying;
            dj["isolated"] = d.isolated;
            dj["tau_span"] = num(d.tau_span);
            out.doc["perturbation"] = dj;
            tab << "decaying             " << (d.decaying ? "yes" : "no") << "\nchains (6, 3, >=2)   "
                << format_double(d.spin_chain) << ", " << format_double(d.mu_chain) << ", "
                << format_double(d.tidal_chain) << "\n";
        } catch (const InsufficientWindow& e) {
            out.doc["perturbation"] = {{"status", "error"}, {"reason", e.what()}};
            out.doc["status"] = "error";
            if (!out.doc.contains("reason")) out.doc["reason"] = std::string("perturbation: ") + e.what();
            out.code = kExitFailure;
        }
    }
    // series for plotting
    std::ostringstream csv;
    csv << "#csv_schema=" << kCsvSchema << "\nx,r_G,J_G,U_G,K_G,H_G,mu\n";
    for (size_t i = 0; i < series.states.size(); ++i) {
        double x = to_double(est.T - series.states[i].t);
        if (!(x > 0.0)) continue;
        auto obs = cluster_observables(series.states[i], sc.masses, sc.partition, est.L);
        csv << format_double(x) << ',' << format_double(obs.r_G) << ',' << (obs.J_G ? format_double(*obs.J_G) : "")
            << ',' << format_double(obs.U_G) << ',' << format_double(obs.K_G) << ',' << format_double(obs.H_G) << ','
            << format_double(series.mu0.empty() ? obs.mu0_G : series.mu0[i]) << '\n';
    }
    out.extra_files.push_back({"rates_series.csv", csv.str()});
    out.table = tab.str();
    return out;
}

Outcome cmd_cc(const RunConfig& cfg, std::uint64_t seed) {
    if (cfg.cc_masses.size() < 3) throw ConfigError("cc.masses", "need at least three masses");
    Outcome out;
    auto catalog = enumerate_cc(cfg.cc_masses, cfg.cc_multistart, seed);
    out.doc = header("cc");
    out.doc["status"] = "ok";
    out.doc["masses"] = cfg.cc_masses;
    out.doc["multistart"] = cfg.cc_multistart;
    out.doc["seed"] = seed;
    out.doc["label_classes"] = count_label_classes(catalog);
    out.doc["catalog"] = json::parse(catalog_to_json(catalog));
    std::ostringstream tab;
    tab << "  #  class  lambda                  residual    degenerate\n";
    for (size_t i = 0; i < catalog.size(); ++i) {
        const auto& c = catalog[i];
        std::string lam = format_double(c.lambda);
        tab << (i < 10 ? "  " : " ") << i << "  " << c.label_class << "      " << lam
            << std::string(lam.size() < 24 ? 24 - lam.size() : 1, ' ') << format_double(c.residual) << "  "
            << (c.degenerate ? "yes" : "no") << "\n";
    }
    out.table = tab.str();
    return out;
}

json segment_json(const ConeConstants& cone, const SegmentSpec& spec, const SegmentReport& rep) {
    json j;
    j["cone"] = {{"R", num(cone.R)},
                 {"mu_arrow", num(cone.mu_arrow)},
                 {"xi_arrow", num(cone.xi_arrow)},
                 {"dim_u", cone.split.dim_u},
                 {"dim_s", cone.split.dim_s},
                 {"cone_condition", cone.cone_condition},
                 {"samples", cone.sample_count}};
    j["tube"] = {{"r", num(spec.r)},
                 {"gamma", num(spec.gamma)},
                 {"a", num(spec.a)},
                 {"alpha", num(spec.alpha)},
                 {"t_begin", num(spec.t_begin)},
                 {"t_end", num(spec.t_end)}};
    j["verified"] = rep.verified;
    j["min_exit_margin"] = num(rep.min_exit_margin);
    j["max_entry_margin"] = num(rep.max_entry_margin);
    j["t_thresholds"] = {num(rep.t_exit), num(rep.t_entry)};
    j["t_start"] = num(rep.t_start);
    j["t_direct"] = num(rep.t_direct);
    j["sufficient_implies_direct"] = rep.sufficient_implies_direct;
    j["sample_count"] = rep.sample_count;
    return j;
}

std::string margins_csv(const SegmentReport& rep) {
    std::ostringstream os;
    os << "#csv_schema=" << kCsvSchema << "\nt,radius,exit_direct,entry_direct,exit_sufficient,entry_sufficient\n";
    for (const auto& s : rep.slices)
        os << format_double(s.t) << ',' << format_double(s.radius) << ',' << format_double(s.exit_direct) << ','
           << format_double(s.entry_direct) << ',' << format_double(s.exit_sufficient) << ','
           << format_double(s.entry_sufficient) << '\n';
    return os.str();
}

Outcome cmd_segment(const RunConfig& cfg, bool self_test) {
    Outcome out;
    out.doc = header("segment");
    const SegmentSettings& st = cfg.segment;
    std::ostringstream tab;
    if (self_test || st.mode == "linear_saddle") {
        Field f = [](const Eigen::VectorXd& z) {
            Eigen::VectorXd d(2);
            d << z[0], -z[1];
            return d;
        };
        auto cone = cone_constants(f, Eigen::VectorXd::Zero(2), 1.0, std::make_pair(1, 1), 256);
        SegmentSpec spec;
        spec.z_p = [](double) { return Eigen::VectorXd::Zero(2).eval(); };
        spec.delta = spec.z_p;
        spec.r = 0.1;
        spec.gamma = -0.5;
        spec.alpha = -2.0;
        spec.t_begin = 0.0;
        spec.t_end = 10.0;
        spec.time_slices = st.time_slices;
        spec.sphere_points = st.sphere_points;
        auto rep = verify_segment(spec, f, cone);
        double worst = 0.0;
        for (const auto& s : rep.slices) {
            double closed = 2.0 * spec.r * spec.r * (1.0 - spec.gamma) * std::exp(2.0 * spec.gamma * s.t);
            worst = std::max(worst, std::abs(s.exit_direct / closed - 1.0));
        }
        out.doc["mode"] = "linear_saddle";
        out.doc.update(segment_json(cone, spec, rep));
        out.doc["closed_form_max_rel_error"] = num(worst);
        out.doc["status"] = rep.verified && worst < 1e-12 ? "ok" : "error";
        if (out.doc["status"] == "error") {
            out.doc["reason"] = "linear saddle self-test failed";
            out.code = kExitFailure;
        }
        out.extra_files.push_back({"segment_margins.csv", margins_csv(rep)});
        tab << "linear saddle self-test: verified " << (rep.verified ? "true" : "false") << ", closed-form error "
            << format_double(worst) << "\n";
        out.table = tab.str();
        return out;
    }

    Pipeline p = run_pipeline(cfg);
    out.doc.update(scenario_summary(p));
    out.doc["mode"] = "scenario";
    if (!p.collided) throw Failure("no_collision", "no collision: " + p.run.message);
    if (!p.blowup) throw Failure("analysis", p.analysis_error);
    const BlowupSeries& bs = *p.blowup;
    std::vector<double> fm;
    for (int a : bs.jacobi_order) fm.push_back(p.scenario.masses[p.scenario.partition.focus_members()[a]]);
    ClusterGeometry geo(fm);
    // restpoint: shape of the nearest central configuration, r = w = 0, v = -sqrt(2 V)
    const int n = 2 + 2 * geo.shape_dim();
    Eigen::VectorXd center = Eigen::VectorXd::Zero(n);
    double V = 0.0;
    if (geo.shape_dim() > 0) {
        std::vector<int> ident(fm.size());
        for (size_t i = 0; i < ident.size(); ++i) ident[i] = static_cast<int>(i);
        auto cc = solve_cc(to_real(bs.states.back().s), fm, ident);
        center.segment(2, geo.shape_dim()) = cc.s_star;
        V = cc.lambda;
    } else {
        V = geo.potential(shape_reconstruct(geo, 1.0, 0.0, {}));
    }
    center[1] = -std::sqrt(2.0 * V);
    Field f = [&geo](const Eigen::VectorXd& z) { return field_autonomous(z, geo); };
    auto cone = cone_constants(f, center, st.R);

    std::vector<double> tau;
    std::vector<Eigen::VectorXd> z, delta;
    for (size_t i = 0; i < bs.states.size(); ++i) {
        tau.push_back(bs.states[i].tau);
        z.push_back(pack_autonomous(bs.states[i]));
        Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
        d[1] = bs.perturbations[i].delta_v;
        if (geo.shape_dim() > 0) d.tail(geo.shape_dim()) = bs.perturbations[i].delta_w;
        delta.push_back(d);
    }
    double radius = st.radius.value_or(st.R / 5.0);
    double tau_begin = 0.0;
    if (st.tau_begin) {
        tau_begin = *st.tau_begin;
    } else {
        bool found = false;
        for (size_t i = 0; i < tau.size() && !found; ++i)
            if (cone.to_local(z[i]).norm() <= st.R / 5.0) {
                tau_begin = tau[i];
                found = true;
            }
        if (!found) throw Failure("region", "the orbit never comes within R/5 of the restpoint");
    }
    SegmentSpec spec;
    spec.gamma = st.gamma.value_or(std::max(cone.mu_arrow, -1e300) / 2.0);
    if (!std::isfinite(spec.gamma)) spec.gamma = -1.0;
    std::vector<double> tail_tau, tail_norm, dn;
    for (size_t i = 0; i < tau.size(); ++i) {
        double v = (cone.split.P_inv * delta[i]).norm();
        dn.push_back(tau[i] >= tau_begin ? v : 0.0);
        if (tau[i] >= tau_begin) {
            tail_tau.push_back(tau[i]);
            tail_norm.push_back(v);
        }
    }
    if (st.alpha) {
        spec.alpha = *st.alpha;
    } else {
        ExpFit fit = fit_exponential(tail_tau, tail_norm);
        // a margin below the fitted rate keeps the amplitude bound finite
        spec.alpha = fit.exact_zero ? 2.0 * spec.gamma - 1.0 : -0.9 * fit.E;
    }
    if (!(spec.alpha < spec.gamma))
        throw Failure("perturbation", "perturbation decays at rate " + format_double(-spec.alpha) +
                                          ", not faster than the tube (gamma " + format_double(spec.gamma) + ")");
    spec.a = delta_amplitude(tau, dn, spec.alpha);
    spec.r = radius * std::exp(-spec.gamma * tau_begin);
    spec.t_begin = tau_begin;
    spec.t_end = tau.back();
    spec.z_p = sampled_curve(tau, z);
    spec.delta = sampled_curve(tau, delta);
    spec.time_slices = st.time_slices;
    spec.sphere_points = st.sphere_points;
    SegmentReport rep;
    try {
        rep = verify_segment(spec, f, cone);
    } catch (const TubeOutsideRegion& e) {
        throw Failure("region", e.what());
    }
    out.doc.update(segment_json(cone, spec, rep));
    out.doc["status"] = rep.verified ? "ok" : "error";
    if (!rep.verified) {
        out.doc["reason"] = "segment conditions fail on some samples";
        out.code = kExitFailure;
    }
    out.extra_files.push_back({"segment_margins.csv", margins_csv(rep)});
    tab << "cone: mu_arrow " << format_double(cone.mu_arrow) << ", xi_arrow " << format_double(cone.xi_arrow)
        << ", condition " << (cone.cone_condition ? "holds" : "fails") << "\ntube: gamma " << format_double(spec.gamma)
        << ", alpha " << format_double(spec.alpha) << ", from tau " << format_double(rep.t_start)
        << "\nverified " << (rep.verified ? "true" : "false") << "\n";
    out.table = tab.str();
    return out;
}

Outcome cmd_spin(const RunConfig& cfg) {
    Outcome out;
    out.doc = header("spin");
    Pipeline p = run_pipeline(cfg);
    out.doc.update(scenario_summary(p));
    if (!p.collided) throw Failure("no_collision", "no collision: " + p.run.message);
    if (!p.blowup) throw Failure("analysis", p.analysis_error);
    const auto& bs = *p.blowup;
    auto rows = spin_tail_table(bs, 6);
    json halv = json::array();
    std::ostringstream tab;
    tab << "tau window                        variation\n";
    for (const auto& r : rows) {
        halv.push_back({{"tau_lo", num(r.tau_lo)}, {"tau_hi", num(r.tau_hi)}, {"variation", num(r.variation)}});
        tab << "[" << format_double(r.tau_lo) << ", " << format_double(r.tau_hi) << "]  "
            << format_double(r.variation) << "\n";
    }
    // per decade of T - t, shallow to deep
    json dec = json::array();
    const auto& states = p.series.states;
    double total = 0.0;
    std::vector<double> per_decade;
    int current = -1;
    double acc = 0.0;
    for (size_t i = 1; i < states.size(); ++i) {
        double x = to_double(p.est->T - states[i].t);
        if (!(x > 0.0)) continue;
        int k = static_cast<int>(std::floor(-std::log10(x)));
        double dth = std::abs(bs.states[i].theta - bs.states[i - 1].theta);
        total += dth;
        if (k != current) {
            if (current >= 0 || !per_decade.empty()) per_decade.push_back(acc);
            dec.push_back({{"decade", k}});
            current = k;
            acc = 0.0;
        }
        acc += dth;
    }
    per_decade.push_back(acc);
    for (size_t i = 0; i < dec.size() && i < per_decade.size(); ++i) dec[i]["variation"] = num(per_decade[i]);
    bool decreasing = true;
    for (size_t i = 1; i + 1 < per_decade.size(); ++i)
        if (per_decade[i] > per_decade[i - 1]) decreasing = false;
    out.doc["status"] = "ok";
    out.doc["spin_total"] = num(total);
    out.doc["halvings"] = halv;
    out.doc["decades"] = dec;
    out.doc["decreasing_per_decade"] = decreasing;
    tab << "total variation " << format_double(total) << ", decreasing per decade " << (decreasing ? "yes" : "no")
        << "\n";
    out.table = tab.str();
    return out;
}

}  // namespace

// ---------------------------------------------------------------- public

double RunConfig::effective_rel_tol() const {
    if (rel_tol) return *rel_tol;
    return precision == Precision::DoubleDouble ? 1e-16 : 1e-12;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    only_keys(j, "", {"schema", "scenario", "integrator", "shooting", "analysis", "cc", "segment", "output"});
    if (!j.contains("schema")) throw ConfigError("schema", "required");
    if (get_int(j["schema"], "schema") != kConfigSchema)
        throw ConfigError("schema", "unsupported version, expected " + std::to_string(kConfigSchema));
    RunConfig cfg;
    if (j.contains("scenario")) {
        cfg.scenario = parse_scenario(j["scenario"]);
        cfg.has_scenario = true;
    }
    if (j.contains("integrator")) {
        const json& i = j["integrator"];
        only_keys(i, "integrator", {"precision", "rel_tol", "stop_fraction", "t_max", "max_steps"});
        if (i.contains("precision")) {
            try {
                cfg.precision = parse_precision(get_string(i["precision"], "integrator.precision"));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("integrator.precision", e.what());
            }
        }
        if (i.contains("rel_tol")) {
            cfg.rel_tol = positive(get_number(i["rel_tol"], "integrator.rel_tol"), "integrator.rel_tol");
            if (*cfg.rel_tol > 1e-2) throw ConfigError("integrator.rel_tol", "must not exceed 1e-2");
        }
        if (i.contains("stop_fraction"))
            cfg.stop_fraction = positive(get_number(i["stop_fraction"], "integrator.stop_fraction"),
                                         "integrator.stop_fraction");
        if (i.contains("t_max")) cfg.t_max = positive(get_number(i["t_max"], "integrator.t_max"), "integrator.t_max");
        if (i.contains("max_steps")) {
            cfg.max_steps = get_int(i["max_steps"], "integrator.max_steps");
            if (cfg.max_steps < 1) throw ConfigError("integrator.max_steps", "must be positive");
        }
    }
    if (j.contains("shooting")) {
        const json& s = j["shooting"];
        only_keys(s, "shooting", {"param_tol", "max_iter"});
        if (s.contains("param_tol"))
            cfg.param_tol = positive(get_number(s["param_tol"], "shooting.param_tol"), "shooting.param_tol");
        if (s.contains("max_iter")) {
            cfg.shoot_max_iter = static_cast<int>(get_int(s["max_iter"], "shooting.max_iter"));
            if (cfg.shoot_max_iter < 1) throw ConfigError("shooting.max_iter", "must be positive");
        }
    }
    if (j.contains("analysis")) {
        const json& a = j["analysis"];
        only_keys(a, "analysis", {"rates", "perturbation", "spin", "cc_residual", "window", "decay_from"});
        auto& t = cfg.analysis;
        if (a.contains("rates")) t.rates = get_bool(a["rates"], "analysis.rates");
        if (a.contains("perturbation")) t.perturbation = get_bool(a["perturbation"], "analysis.perturbation");
        if (a.contains("spin")) t.spin = get_bool(a["spin"], "analysis.spin");
        if (a.contains("cc_residual")) t.cc_residual = get_bool(a["cc_residual"], "analysis.cc_residual");
        if (a.contains("window")) {
            auto w = get_numbers(a["window"], "analysis.window");
            if (w.size() != 2 || !(0.0 < w[0] && w[0] < w[1]))
                throw ConfigError("analysis.window", "expected [lo, hi] with 0 < lo < hi");
            t.window_lo = w[0];
            t.window_hi = w[1];
        }
        if (a.contains("decay_from"))
            t.decay_from = positive(get_number(a["decay_from"], "analysis.decay_from"), "analysis.decay_from");
    }
    if (j.contains("cc")) {
        const json& c = j["cc"];
        only_keys(c, "cc", {"masses", "multistart"});
        if (c.contains("masses")) {
            cfg.cc_masses = get_numbers(c["masses"], "cc.masses");
            for (double m : cfg.cc_masses)
                if (!(m > 0.0)) throw ConfigError("cc.masses", "masses must be positive");
        }
        if (c.contains("multistart")) {
            cfg.cc_multistart = static_cast<int>(get_int(c["multistart"], "cc.multistart"));
            if (cfg.cc_multistart < 1) throw ConfigError("cc.multistart", "must be positive");
        }
    }
    if (j.contains("segment")) {
        const json& s = j["segment"];
        only_keys(s, "segment",
                  {"mode", "R", "gamma", "alpha", "radius", "tau_begin", "time_slices", "sphere_points"});
        auto& g = cfg.segment;
        if (s.contains("mode")) {
            g.mode = get_string(s["mode"], "segment.mode");
            if (g.mode != "scenario" && g.mode != "linear_saddle")
                throw ConfigError("segment.mode", "expected 'scenario' or 'linear_saddle'");
        }
        if (s.contains("R")) g.R = positive(get_number(s["R"], "segment.R"), "segment.R");
        if (s.contains("gamma")) g.gamma = get_number(s["gamma"], "segment.gamma");
        if (s.contains("alpha")) g.alpha = get_number(s["alpha"], "segment.alpha");
        if (s.contains("radius")) g.radius = positive(get_number(s["radius"], "segment.radius"), "segment.radius");
        if (s.contains("tau_begin")) g.tau_begin = get_number(s["tau_begin"], "segment.tau_begin");
        if (s.contains("time_slices")) {
            g.time_slices = static_cast<int>(get_int(s["time_slices"], "segment.time_slices"));
            if (g.time_slices < 2) throw ConfigError("segment.time_slices", "must be at least 2");
        }
        if (s.contains("sphere_points")) {
            g.sphere_points = static_cast<int>(get_int(s["sphere_points"], "segment.sphere_points"));
            if (g.sphere_points < 1) throw ConfigError("segment.sphere_points", "must be positive");
        }
    }
    if (j.contains("output")) {
        const json& o = j["output"];
        only_keys(o, "output", {"csv_every"});
        if (o.contains("csv_every")) {
            cfg.csv_every = static_cast<int>(get_int(o["csv_every"], "output.csv_every"));
            if (cfg.csv_every < 1) throw ConfigError("output.csv_every", "must be positive");
        }
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("--config", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Collision dynamics toolkit"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".", precision, masses_arg, trajectory_path;
    std::uint64_t seed = 0;
    int multistart = 0;
    bool self_test = false;
    auto add_globals = [&](CLI::App* a) {
        a->add_option("--config", config_path, "JSON configuration (schema 1)");
        a->add_option("--out", out_dir, "output directory");
        a->add_option("--precision", precision, "double or dd (overrides the config)");
        a->add_option("--seed", seed, "seed for randomised searches");
    };
    auto* sim = app.add_subcommand("simulate", "integrate a scenario to collision");
    auto* rates = app.add_subcommand("rates", "collision rate and perturbation decay checks");
    auto* cc = app.add_subcommand("cc", "enumerate central configurations");
    auto* seg = app.add_subcommand("segment", "isolating segment verification");
    auto* spin = app.add_subcommand("spin", "spin tail table");
    for (auto* a : {sim, rates, cc, seg, spin}) add_globals(a);
    rates->add_option("--trajectory", trajectory_path, "trajectory CSV written by simulate");
    cc->add_option("--masses", masses_arg, "comma separated masses");
    cc->add_option("--multistart", multistart, "seeds per chart");
    seg->add_flag("--self-test", self_test, "linear saddle check");

    std::string command = "unknown";
    auto fail = [&](const std::string& kind, const std::string& reason, int code) {
        json doc = header(command);
        doc["status"] = "error";
        doc["error_kind"] = kind;
        doc["reason"] = reason;
        std::cerr << doc.dump() << "\n";
        if (command != "unknown") {
            try {
                write_text(std::filesystem::path(out_dir) / (output_stem(command) + ".json"), doc.dump(2) + "\n");
            } catch (const std::exception&) {
            }
        }
        return code;
    };

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), kExitUsage);
    }
    for (auto* a : app.get_subcommands()) command = a->get_name();

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (!precision.empty()) {
            try {
                cfg.precision = parse_precision(precision);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("--precision", e.what());
            }
        }
        Outcome out;
        if (sim->parsed()) {
            out = cmd_simulate(cfg);
        } else if (rates->parsed()) {
            out = cmd_rates(cfg, trajectory_path);
        } else if (cc->parsed()) {
            if (!masses_arg.empty()) {
                cfg.cc_masses.clear();
                std::stringstream ss(masses_arg);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    double v = 0.0;
                    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                    if (tok.empty() || r.ec != std::errc() || r.ptr != tok.data() + tok.size() || !(v > 0.0))
                        throw ConfigError("--masses", "expected positive numbers separated by commas");
                    cfg.cc_masses.push_back(v);
                }
            }
            if (multistart > 0) cfg.cc_multistart = multistart;
            out = cmd_cc(cfg, seed);
        } else if (seg->parsed()) {
            out = cmd_segment(cfg, self_test);
        } else {
            out = cmd_spin(cfg);
        }
        std::filesystem::path dir(out_dir);
        for (const auto& [name, content] : out.extra_files) write_text(dir / name, content);
        write_text(dir / (output_stem(command) + ".json"), out.doc.dump(2) + "\n");
        std::cout << out.table;
        if (out.code != 0) std::cerr << json{{"status", "error"}, {"reason", out.doc.value("reason", "")}}.dump() << "\n";
        return out.code;
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kExitUsage);
    } catch (const Failure& e) {
        return fail(e.kind, e.what(), kExitFailure);
    } catch (const InsufficientWindow& e) {
        return fail("insufficient_window", e.what(), kExitFailure);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), kExitFailure);
    }
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args);
}

}  // namespace nbcoll::cli
