#pragma once

#include "robustsim/io.hpp"
#include "robustsim/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace robustsim::check {

/**
 * Brute-force min xi'q over the points q = u / K of the simplex lattice that
 * lie in the ball. Prefixes are pruned with the merged-cell bound (Jensen)
 * and with the best value they can still reach; the last two coordinates are
 * resolved exactly, since the divergence is convex along that segment.
 * Returns +inf when no lattice point is feasible. Needs pb > 0.
 */
inline double lattice_ball_min(std::span<const double> xi, const PhiBall& ball, std::size_t K) {
    const auto pb = ball.baseline.probs();
    const std::size_t n = xi.size();
    if (n < 2 || pb.size() != n || K < 1) throw std::invalid_argument("lattice_ball_min: bad dimensions");
    for (double v : pb)
        if (!(v > 0.0)) throw std::invalid_argument("lattice_ball_min: baseline must be positive");
    const auto d = ball.divergence;
    const double eta = ball.eta + 1e-12, h = 1.0 / double(K);
    std::vector<double> tail_p(n + 1, 0.0), tail_min(n + 1, std::numeric_limits<double>::infinity());
    for (std::size_t j = n; j-- > 0;) {
        tail_p[j] = tail_p[j + 1] + pb[j];
        tail_min[j] = std::min(tail_min[j + 1], xi[j]);
    }
    auto term = [&](std::size_t j, double q) { return pb[j] * phi(d, q / pb[j]); };
    double best = std::numeric_limits<double>::infinity();

    // coordinates n-2, n-1 share `rest` units
    auto last_two = [&](std::size_t rest, double div, double val) {
        const std::size_t a = n - 2, b = n - 1;
        auto g = [&](std::size_t c) { return div + term(a, c * h) + term(b, (rest - c) * h); };
        std::size_t lo = 0, hi = rest;  // argmin of the convex g
        while (lo < hi) {
            const std::size_t m = (lo + hi) / 2;
            if (g(m + 1) < g(m)) lo = m + 1;
            else hi = m;
        }
        const std::size_t cm = lo;
        if (g(cm) > eta) return;
        std::size_t l = 0, r = cm;  // smallest feasible c
        while (l < r) {
            const std::size_t m = (l + r) / 2;
            if (g(m) <= eta) r = m;
            else l = m + 1;
        }
        const std::size_t c_lo = l;
        l = cm, r = rest;  // largest feasible c
        while (l < r) {
            const std::size_t m = (l + r + 1) / 2;
            if (g(m) <= eta) l = m;
            else r = m - 1;
        }
        for (std::size_t c : {c_lo, l}) best = std::min(best, val + xi[a] * (c * h) + xi[b] * ((rest - c) * h));
    };

    std::function<void(std::size_t, std::size_t, double, double)> rec = [&](std::size_t j, std::size_t rest, double div, double val) {
        if (j == n - 2) return last_two(rest, div, val);
        for (std::size_t u = 0; u <= rest; ++u) {
            const double dv = div + term(j, u * h), v = val + xi[j] * (u * h);
            const double left = (rest - u) * h;
            if (dv + tail_p[j + 1] * phi(d, left / tail_p[j + 1]) > eta) continue;
            if (v + tail_min[j + 1] * left >= best) continue;
            rec(j + 1, rest - u, dv, v);
        }
    };
    rec(0, K, 0.0, 0.0);
    return best;
}

/// Lattice resolution used by the brute-force ball checks.
inline std::size_t lattice_units(std::size_t n) { return n <= 4 ? 1000 : n == 5 ? 400 : 200; }

/// min xi'q over a moment set by enumerating every basic solution with n active constraints.
inline double vertex_enumeration_min(std::span<const double> xi, const MomentSet& set) {
    const std::size_t n = xi.size();
    // rows a'q = b candidates: bounds of each moment and q_j = 0; the simplex row is always active
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
    for (const auto& c : set.constraints()) {
        if (std::isfinite(c.lower)) rows.push_back(c.values), rhs.push_back(c.lower);
        if (std::isfinite(c.upper)) rows.push_back(c.values), rhs.push_back(c.upper);
    }
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        rows.push_back(std::move(e));
        rhs.push_back(0.0);
    }
    const std::size_t m = rows.size();
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(n - 1);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t from, std::size_t depth) {
        if (depth == n - 1) {
            std::vector<std::vector<double>> M;
            std::vector<double> r;
            M.push_back(std::vector<double>(n, 1.0));
            r.push_back(1.0);
            for (auto i : pick) M.push_back(rows[i]), r.push_back(rhs[i]);
            std::vector<double> q;
            if (!lp::detail::solve_dense(M, r, q)) return;
            for (double v : q)
                if (v < -1e-10) return;
            for (const auto& c : set.constraints()) {
                const double v = dot(c.values, q);
                const double tol = 1e-10 * (1.0 + std::abs(v));
                if (v < c.lower - tol || v > c.upper + tol) return;
            }
            best = std::min(best, dot(xi, q));
            return;
        }
        for (std::size_t i = from; i < m; ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

struct CheckKind {
    std::string name;
    double tolerance;
    double max_discrepancy = 0.0;
    std::size_t trials = 0;
    bool passed() const { return max_discrepancy <= tolerance; }
};

struct CheckReport {
    std::vector<CheckKind> kinds;
    bool passed() const {
        return std::all_of(kinds.begin(), kinds.end(), [](const CheckKind& k) { return k.passed(); });
    }
};

/**
 * Randomized solver-vs-brute-force comparisons on n-point supports:
 * KL balls through the tilt and through the generic dual, modified chi2
 * balls, zero-radius balls against the baseline, and moment LPs against
 * vertex enumeration. Trial t draws from stream/[t].
 */
inline CheckReport subproblem_check(std::size_t n, std::size_t trials, const RandomStream& stream) {
    if (n < 2 || n > 6) throw std::invalid_argument("subproblem_check: grid search needs 2 <= n <= 6");
    CheckReport rep;
    // the mesh tolerance scales with the lattice step, 2e-3 at step 1e-3
    const std::size_t K = lattice_units(n);
    const double mesh_tol = 2.0 / double(K);
    rep.kinds = {{"kl_tilt_vs_mesh", mesh_tol}, {"kl_dual_vs_mesh", mesh_tol}, {"kl_tilt_vs_dual", 1e-6},
                 {"chi2_vs_mesh", mesh_tol}, {"zero_radius", 0.0}, {"moment_lp_vs_vertices", 1e-9}};
    auto bump = [&](std::size_t k, double d) {
        rep.kinds[k].max_discrepancy = std::max(rep.kinds[k].max_discrepancy, d);
        ++rep.kinds[k].trials;
    };
    std::vector<double> ys(n);
    for (std::size_t j = 0; j < n; ++j) ys[j] = double(j + 1);
    const auto grid = make_grid(SupportGrid::scalar(ys));
    for (std::size_t t = 0; t < trials; ++t) {
        auto eng = stream.derive(t).engine();
        std::vector<double> xi(n), w(n);
        for (auto& x : xi) x = uniform_open(eng);
        for (auto& x : w) x = 0.05 + uniform_open(eng);
        const auto pb = DiscreteDistribution::from_weights(grid, w);
        const double eta = 0.01 + 0.5 * uniform_open(eng);

        const PhiBall kl(pb, eta, Divergence::kl), chi(pb, eta, Divergence::modified_chi2);
        const double kl_mesh = lattice_ball_min(xi, kl, K);
        const double v_tilt = solve_subproblem_kl(xi, kl).value;
        const double v_dual = solve_subproblem_phi(xi, kl).value;
        bump(0, std::abs(v_tilt - kl_mesh));
        bump(1, std::abs(v_dual - kl_mesh));
        bump(2, std::abs(v_tilt - v_dual));
        bump(3, std::abs(solve_subproblem_phi(xi, chi).value - lattice_ball_min(xi, chi, K)));
        bump(4, std::abs(solve_subproblem(xi, PhiBall(pb, 0.0, Divergence::kl)).value - dot(xi, pb.probs())));

        // moment set around the baseline so that it is never empty
        MomentSet ms(grid);
        const std::size_t nc = 1 + std::size_t(uniform_open(eng) * 3.0);
        for (std::size_t l = 0; l < nc; ++l) {
            std::vector<double> f(n);
            for (auto& x : f) x = 2.0 * uniform_open(eng) - 1.0;
            const double mid = dot(f, pb.probs());
            ms.add_values(f, mid - 0.3 * uniform_open(eng), mid + 0.3 * uniform_open(eng));
        }
        const double lp_v = solve_subproblem_moment(xi, ms).value;
        bump(5, std::abs(lp_v - vertex_enumeration_min(xi, ms)));
    }
    return rep;
}

inline io::json check_json(const CheckReport& rep, std::size_t n, std::size_t trials, std::uint64_t seed) {
    io::json kinds = io::json::array();
    for (const auto& k : rep.kinds)
        kinds.push_back({{"kind", k.name}, {"trials", k.trials}, {"max_discrepancy", k.max_discrepancy},
                         {"tolerance", k.tolerance}, {"passed", k.passed()}});
    auto doc = io::Provenance{io::hex64(io::fnv1a64("subproblem-check n=" + std::to_string(n) + " trials=" + std::to_string(trials))), seed}.to_json();
    doc["n"] = n;
    doc["trials"] = trials;
    doc["checks"] = kinds;
    doc["passed"] = rep.passed();
    return doc;
}

}  // namespace robustsim::check
