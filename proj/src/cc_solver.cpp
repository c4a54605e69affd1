#include "nbcoll/cc_solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "halton.hpp"

namespace nbcoll {

namespace {

std::vector<int> identity_order(size_t k) {
    std::vector<int> o(k);
    std::iota(o.begin(), o.end(), 0);
    return o;
}

std::vector<double> ordered_masses(const std::vector<double>& masses, const std::vector<int>& order) {
    std::vector<double> m;
    for (int a : order) m.push_back(masses[a]);
    return m;
}

double min_pair_distance(const Vec2List& q) {
    double d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < q.size(); ++i)
        for (size_t j = i + 1; j < q.size(); ++j) d = std::min(d, norm(q[i] - q[j]));
    return d;
}

// Centre of mass removed, scaled to unit moment of inertia.
Vec2List normalize(const Vec2List& q, const std::vector<double>& m) {
    Vec2 c{};
    double M = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
        c += m[i] * q[i];
        M += m[i];
    }
    c = c / M;
    double I = 0.0;
    Vec2List out(q.size());
    for (size_t i = 0; i < q.size(); ++i) {
        out[i] = q[i] - c;
        I += m[i] * norm2(out[i]);
    }
    double s = 1.0 / std::sqrt(I);
    for (auto& v : out) v = s * v;
    return out;
}

constexpr double kChartRepolish = 10.0;


std::vector<std::vector<int>> mass_preserving_permutations(const std::vector<double>& m) {
    std::vector<std::vector<int>> out;
    std::vector<int> p = identity_order(m.size());
    do {
        bool ok = true;
        for (size_t i = 0; i < p.size() && ok; ++i) ok = m[p[i]] == m[i];
        if (ok) out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
}

Eigen::VectorXd chart_coordinates(const Vec2List& q, const std::vector<double>& masses, const std::vector<int>& order) {
    Vec2List oq;
    for (int a : order) oq.push_back(q[a]);
    return to_real(shape_forward(jacobi_forward(oq, ordered_masses(masses, order))).s);
}

void finalize(CCResult& res, const Eigen::VectorXd& s, const ClusterGeometry& geo, const CCOptions& opt) {
    res.s_star = s;
    res.lambda = shape_V(s, geo);
    res.residual = shape_gradV(s, geo).norm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(shape_hessV(s, geo));
    res.hessian_spectrum.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    double maxabs = 0.0;
    for (double e : res.hessian_spectrum) maxabs = std::max(maxabs, std::abs(e));
    res.degenerate = false;
    for (double e : res.hessian_spectrum)
        if (std::abs(e) < opt.degeneracy_tol * maxabs) res.degenerate = true;
    res.normalized_q = normalized_configuration(s, res.masses, res.jacobi_order);
    res.cartesian_residual = 0.0;
    const auto& q = res.normalized_q;
    for (size_t i = 0; i < q.size(); ++i) {
        Vec2 f = res.lambda * res.masses[i] * q[i];
        for (size_t j = 0; j < q.size(); ++j) {
            if (i == j) continue;
            Vec2 d = q[j] - q[i];
            double r = norm(d);
            f += (res.masses[i] * res.masses[j] / (r * r * r)) * d;
        }
        res.cartesian_residual = std::max(res.cartesian_residual, norm(f));
    }
}

}  // namespace

Vec2List normalized_configuration(const Eigen::VectorXd& s, const std::vector<double>& masses,
                                  const std::vector<int>& jacobi_order) {
    std::vector<int> order = jacobi_order.empty() ? identity_order(masses.size()) : jacobi_order;
    ClusterGeometry geo(ordered_masses(masses, order));
    Vec2List pos = geo.positions(shape_reconstruct(geo, 1.0, 0.0, to_vec2(s)));
    Vec2List out(masses.size());
    for (size_t a = 0; a < order.size(); ++a) out[order[a]] = pos[a];
    return out;
}

CCResult solve_cc(const Eigen::VectorXd& s0, const std::vector<double>& masses, const std::vector<int>& jacobi_order,
                  const CCOptions& opt) {
    if (masses.size() < 3) throw std::invalid_argument("central configurations need at least 3 bodies");
    CCResult res;
    res.masses = masses;
    res.jacobi_order = jacobi_order.empty() ? identity_order(masses.size()) : jacobi_order;
    ClusterGeometry geo(ordered_masses(masses, res.jacobi_order));
    if (s0.size() != geo.shape_dim()) throw std::invalid_argument("seed has the wrong shape dimension");

    auto check_point = [&](const Eigen::VectorXd& s) {
        if (!s.allFinite() || s.norm() > opt.chart_bound) return false;
        return min_pair_distance(normalized_configuration(s, masses, res.jacobi_order)) > opt.singular_distance;
    };
    if (!check_point(s0)) throw CCSingular("seed is singular or outside the chart");

    Eigen::VectorXd s = s0;
    Eigen::VectorXd g = shape_gradV(s, geo);
    double V = shape_V(s, geo);
    int polish = 0;
    for (int it = 0; it <= opt.max_iter; ++it) {
        bool converged = g.norm() <= opt.grad_tol * V;
        if (converged && (it == 0 || polish >= 3)) {
            res.iterations = it;
            finalize(res, s, geo, opt);
            return res;
        }
        if (it == opt.max_iter) break;
        Eigen::MatrixXd H = shape_hessV(s, geo);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        const auto& ev = es.eigenvalues();
        double maxabs = ev.cwiseAbs().maxCoeff();
        double minabs = ev.cwiseAbs().minCoeff();
        Eigen::VectorXd proj = es.eigenvectors().transpose() * g;
        Eigen::VectorXd d(g.size());
        if (minabs > 1e-10 * maxabs) {
            for (int i = 0; i < proj.size(); ++i) proj[i] /= ev[i];
        } else {
            // Tikhonov-regularised step near a degenerate Hessian
            double eps = 1e-6 * maxabs;
            for (int i = 0; i < proj.size(); ++i) proj[i] *= ev[i] / (ev[i] * ev[i] + eps * eps);
        }
        d = -(es.eigenvectors() * proj);

        double phi0 = 0.5 * g.squaredNorm();
        double slope = (H * g).dot(d);
        double alpha = 1.0;
        bool accepted = false;
        Eigen::VectorXd s1, g1;
        for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
            s1 = s + alpha * d;
            if (!check_point(s1)) continue;
            g1 = shape_gradV(s1, geo);
            double phi1 = 0.5 * g1.squaredNorm();
            if (std::isfinite(phi1) && phi1 <= phi0 + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (converged) {
                res.iterations = it;
                finalize(res, s, geo, opt);
                return res;
            }
            if (!check_point(s + 1e-3 * d))
                throw CCSingular("Newton path runs into a collision shape or off the chart");
            throw CCDivergence("line search failed at |grad V| = " + std::to_string(g.norm()));
        }
        if (converged) {
            // polishing steps stop as soon as they stop helping
            if (!(g1.norm() < 0.5 * g.norm())) {
                res.iterations = it;
                finalize(res, s, geo, opt);
                return res;
            }
            ++polish;
        }
        s = s1;
        g = g1;
        V = shape_V(s, geo);
    }
    throw CCDivergence("no convergence after " + std::to_string(opt.max_iter) + " iterations");
}

double fs_distance(const Vec2List& a, const Vec2List& b, const std::vector<double>& masses) {
    Vec2List na = normalize(a, masses), nb = normalize(b, masses);
    cplx inner = 0.0;
    for (size_t i = 0; i < na.size(); ++i) inner += masses[i] * std::conj(to_c(na[i])) * to_c(nb[i]);
    cplx phase = std::abs(inner) > 0 ? inner / std::abs(inner) : cplx(1.0);
    double d2 = 0.0;
    for (size_t i = 0; i < na.size(); ++i) d2 += masses[i] * std::norm(phase * to_c(na[i]) - to_c(nb[i]));
    double d = std::sqrt(d2);
    return 2.0 * std::asin(std::min(1.0, 0.5 * d));
}

double fs_distance_relabel(const Vec2List& a, const Vec2List& b, const std::vector<double>& masses) {
    double best = std::numeric_limits<double>::infinity();
    Vec2List pb(b.size());
    for (const auto& p : mass_preserving_permutations(masses)) {
        for (size_t i = 0; i < b.size(); ++i) pb[i] = b[p[i]];
        best = std::min(best, fs_distance(a, pb, masses));
    }
    return best;
}

std::vector<CCResult> enumerate_cc(const std::vector<double>& masses, int multistart_count, std::uint64_t seed,
                                   const CCOptions& opt) {
    const int k = static_cast<int>(masses.size());
    if (k < 3) throw std::invalid_argument("central configurations need at least 3 bodies");
    const int dim = 2 * (k - 2);
    if (dim > detail::kHaltonMaxDim) throw std::invalid_argument("too many bodies for the seed sequence");

    // every choice of last Jacobi body, with the others in increasing order
    std::vector<std::vector<int>> orders;
    for (int last = k - 1; last >= 0; --last) {
        std::vector<int> o;
        for (int i = 0; i < k; ++i)
            if (i != last) o.push_back(i);
        o.push_back(last);
        orders.push_back(o);
    }
    const size_t jobs = orders.size() * static_cast<size_t>(std::max(0, multistart_count));
    std::vector<std::optional<CCResult>> found(jobs);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t j = next++; j < jobs; j = next++) {
            size_t oi = j / multistart_count;
            std::uint64_t idx = 1 + seed * static_cast<std::uint64_t>(multistart_count) + j % multistart_count;
            Eigen::VectorXd s0(dim);
            for (int c = 0; c < dim; ++c) s0[c] = 4.0 * detail::halton(idx, c) - 2.0;
            try {
                CCResult r = solve_cc(s0, masses, orders[oi], opt);
                // far out in a chart the shape is poorly resolved; polish
                // again in the chart where the point sits closest to the origin
                if (r.s_star.norm() > kChartRepolish) {
                    size_t best = oi;
                    Eigen::VectorXd s_best = r.s_star;
                    for (size_t o = 0; o < orders.size(); ++o) {
                        Eigen::VectorXd so = chart_coordinates(r.normalized_q, masses, orders[o]);
                        if (so.allFinite() && so.norm() < s_best.norm()) {
                            best = o;
                            s_best = so;
                        }
                    }
                    if (best != oi) r = solve_cc(s_best, masses, orders[best], opt);
                }
                found[j] = std::move(r);
            } catch (const std::exception&) {
                // failed seeds are expected in a multistart
            }
        }
    };
    unsigned nthreads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<CCResult> catalog;
    for (auto& f : found) {
        if (!f) continue;
        bool dup = false;
        for (const auto& c : catalog)
            if (fs_distance(c.normalized_q, f->normalized_q, masses) < opt.dedup_tol) {
                dup = true;
                break;
            }
        if (!dup) catalog.push_back(std::move(*f));
    }
    std::stable_sort(catalog.begin(), catalog.end(),
                     [](const CCResult& a, const CCResult& b) { return a.lambda < b.lambda - 1e-9 * b.lambda; });

    // label classes
    std::vector<size_t> reps;
    for (size_t i = 0; i < catalog.size(); ++i) {
        int cls = -1;
        for (size_t r = 0; r < reps.size() && cls < 0; ++r)
            if (fs_distance_relabel(catalog[reps[r]].normalized_q, catalog[i].normalized_q, masses) < opt.dedup_tol)
                cls = static_cast<int>(r);
        if (cls < 0) {
            cls = static_cast<int>(reps.size());
            reps.push_back(i);
        }
        catalog[i].label_class = cls;
    }

    // isolation heuristic
    const double shell = 10.0 * opt.dedup_tol;
    for (auto& c : catalog) {
        if (!c.degenerate) {
            c.isolated = true;
            continue;
        }
        ClusterGeometry geo(ordered_masses(c.masses, c.jacobi_order));
        double maxabs = 0.0;
        for (double e : c.hessian_spectrum) maxabs = std::max(maxabs, std::abs(e));
        bool other = false;
        const int samples = 256;
        for (int i = 1; i <= samples && !other; ++i) {
            Eigen::VectorXd u(dim);
            for (int d = 0; d < dim; ++d) u[d] = 2.0 * detail::halton(i, d) - 1.0;
            if (u.norm() == 0.0) continue;
            Eigen::VectorXd p = c.s_star + shell * u.normalized();
            if (shape_gradV(p, geo).norm() < 1e-6 * shell * maxabs) other = true;
            if (!other && i % 32 == 0) {
                try {
                    CCResult n = solve_cc(p, c.masses, c.jacobi_order, opt);
                    double dist = fs_distance(n.normalized_q, c.normalized_q, c.masses);
                    if (dist > 1e-3 * opt.dedup_tol && dist < 100.0 * shell) other = true;
                } catch (const std::exception&) {
                }
            }
        }
        c.isolated = !other;
    }
    return catalog;
}

int count_label_classes(const std::vector<CCResult>& catalog) {
    int n = 0;
    for (const auto& c : catalog) n = std::max(n, c.label_class + 1);
    return n;
}

double cc_distance(const Vec2List& q, const std::vector<CCResult>& catalog) {
    if (catalog.empty()) throw std::invalid_argument("empty catalog");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : catalog) best = std::min(best, fs_distance(q, c.normalized_q, c.masses));
    return best;
}

double cc_distance(const Eigen::VectorXd& s, const std::vector<double>& masses, const std::vector<int>& jacobi_order,
                   const std::vector<CCResult>& catalog) {
    return cc_distance(normalized_configuration(s, masses, jacobi_order), catalog);
}

std::string catalog_to_json(const std::vector<CCResult>& catalog) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : catalog) {
        nlohmann::json q = nlohmann::json::array();
        for (const auto& v : c.normalized_q) q.push_back({v.x, v.y});
        arr.push_back({{"masses", c.masses},
                       {"jacobi_order", c.jacobi_order},
                       {"s_star", std::vector<double>(c.s_star.data(), c.s_star.data() + c.s_star.size())},
                       {"lambda", c.lambda},
                       {"spectrum", c.hessian_spectrum},
                       {"residual", c.residual},
                       {"cartesian_residual", c.cartesian_residual},
                       {"degenerate", c.degenerate},
                       {"isolated", c.isolated},
                       {"isolation_is_heuristic", true},
                       {"label_class", c.label_class},
                       {"normalized_q", q}});
    }
    return arr.dump(2);
}

std::vector<CCResult> catalog_from_json(const std::string& text) {
    auto arr = nlohmann::json::parse(text);
    if (!arr.is_array()) throw std::invalid_argument("catalog JSON must be an array");
    std::vector<CCResult> out;
    for (const auto& e : arr) {
        CCResult c;
        c.masses = e.at("masses").get<std::vector<double>>();
        c.jacobi_order = e.contains("jacobi_order") ? e.at("jacobi_order").get<std::vector<int>>()
                                                    : identity_order(c.masses.size());
        auto s = e.at("s_star").get<std::vector<double>>();
        c.s_star = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
        c.lambda = e.at("lambda").get<double>();
        c.hessian_spectrum = e.at("spectrum").get<std::vector<double>>();
        c.residual = e.at("residual").get<double>();
        c.cartesian_residual = e.value("cartesian_residual", 0.0);
        c.degenerate = e.value("degenerate", false);
        c.isolated = e.value("isolated", false);
        c.label_class = e.value("label_class", -1);
        c.normalized_q = normalized_configuration(c.s_star, c.masses, c.jacobi_order);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace nbcoll
