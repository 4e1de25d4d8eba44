#pragma once

#include "robustsim/lp.hpp"
#include "robustsim/probdist.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace robustsim {

using lp::InfeasibleError;

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// phi-divergences

enum class Divergence { kl, modified_chi2 };

inline const char* to_string(Divergence d) { return d == Divergence::kl ? "kl" : "chi2"; }

/// phi(x); KL uses x log x - x + 1, modified chi-square (x-1)^2.
inline double phi(Divergence d, double x) {
    if (d == Divergence::kl) return x > 0.0 ? x * std::log(x) - x + 1.0 : 1.0;
    return (x - 1.0) * (x - 1.0);
}

/// Convex conjugate phi*(t) = sup_{x>=0} { t x - phi(x) }.
inline double phi_conjugate(Divergence d, double t) {
    if (d == Divergence::kl) return std::expm1(t);
    return t < -2.0 ? -1.0 : t + 0.25 * t * t;
}

/// argmax_{r>=0} { t r - phi(r) }, which is also the derivative of phi*.
inline double phi_conjugate_argmax(Divergence d, double t) {
    if (d == Divergence::kl) return std::exp(t);
    return std::max(0.0, 1.0 + 0.5 * t);
}

// ---------------------------------------------------------------------------
// uncertainty sets

struct MomentConstraint {
    std::vector<double> values;  ///< f(y_j) on the bound grid
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    std::string label;
};

/// Default relaxation applied to equality moment constraints.
inline double equality_margin(double mu) { return 1e-9 * (1.0 + std::abs(mu)); }

/// Linear moment and support constraints lower_l <= E_p[f_l] <= upper_l.
class MomentSet {
public:
    explicit MomentSet(GridPtr grid) : grid_(std::move(grid)) {}

    /// Adds lower <= E[f] <= upper. Equal bounds are widened by equality_margin.
    MomentSet& add(const PointFunction& f, double lower, double upper, std::string label = {}) {
        return add_values(grid_->evaluate(f), lower, upper, std::move(label));
    }

    MomentSet& add_values(std::vector<double> values, double lower, double upper, std::string label = {}) {
        if (values.size() != grid_->size()) throw std::invalid_argument("MomentSet: constraint length mismatch");
        if (std::isnan(lower) || std::isnan(upper)) throw std::invalid_argument("MomentSet: NaN bound");
        if (lower > upper) throw std::invalid_argument("MomentSet: lower bound exceeds upper bound");
        if (lower == upper) {
            const double m = equality_margin(lower);
            lower -= m;
            upper += m;
        }
        if (label.empty()) label = "m" + std::to_string(constraints_.size());
        constraints_.push_back({std::move(values), lower, upper, std::move(label)});
        return *this;
    }

    const SupportGrid& grid() const noexcept { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    const std::vector<MomentConstraint>& constraints() const noexcept { return constraints_; }

private:
    GridPtr grid_;
    std::vector<MomentConstraint> constraints_;
};

/**
 * phi-divergence ball { p : sum_j pb_j phi(p_j / pb_j) <= eta }.
 *
 * Baseline entries equal to zero are structural zeros: with the convention
 * 0 phi(s/0) = +inf for s > 0, every member of the ball vanishes there, and
 * the solvers work on the positive support of the baseline.
 */
struct PhiBall {
    DiscreteDistribution baseline;
    double eta = 0.0;
    Divergence divergence = Divergence::kl;

    PhiBall(DiscreteDistribution b, double radius, Divergence d) : baseline(std::move(b)), eta(radius), divergence(d) {
        if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("PhiBall: radius must be finite and >= 0");
    }
};

using UncertaintySet = std::variant<MomentSet, PhiBall>;

inline const SupportGrid& grid_of(const UncertaintySet& s) {
    return std::visit([](const auto& x) -> const SupportGrid& {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, MomentSet>) return x.grid();
        else return x.baseline.grid();
    }, s);
}

inline GridPtr grid_ptr_of(const UncertaintySet& s) {
    if (auto m = std::get_if<MomentSet>(&s)) return m->grid_ptr();
    return std::get<PhiBall>(s).baseline.grid_ptr();
}

inline std::size_t constraint_count(const UncertaintySet& s) {
    if (auto m = std::get_if<MomentSet>(&s)) return m->constraints().size();
    return 1;
}

inline double phi_divergence(std::span<const double> p, std::span<const double> pb, Divergence d) {
    if (p.size() != pb.size()) throw std::invalid_argument("phi_divergence: size mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (pb[j] > 0.0) s += pb[j] * phi(d, p[j] / pb[j]);
        else if (p[j] > 0.0) return std::numeric_limits<double>::infinity();
    }
    return s;
}

inline double phi_divergence(const DiscreteDistribution& p, const PhiBall& ball) {
    if (!p.same_grid(ball.baseline)) throw std::invalid_argument("phi_divergence: grid mismatch");
    return phi_divergence(p.probs(), ball.baseline.probs(), ball.divergence);
}

/// Per-constraint slack (positive means satisfied). For a moment constraint
/// the slack is the distance to the nearer bound.
inline std::vector<double> constraint_slacks(const DiscreteDistribution& p, const UncertaintySet& set) {
    if (auto ball = std::get_if<PhiBall>(&set)) return {ball->eta - phi_divergence(p, *ball)};
    const auto& ms = std::get<MomentSet>(set);
    std::vector<double> out;
    for (const auto& c : ms.constraints()) {
        const double v = dot(p.probs(), c.values);
        out.push_back(std::min(c.upper - v, v - c.lower));
    }
    return out;
}

inline bool is_feasible(const DiscreteDistribution& p, const UncertaintySet& set, double tol) {
    if (!(grid_of(set) == p.grid())) throw std::invalid_argument("is_feasible: grid mismatch");
    for (double v : constraint_slacks(p, set))
        if (!(v >= -tol)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// moment calibration

/// Inverse CDF of Student's t with df degrees of freedom.
inline double student_t_quantile(double prob, double df) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("student_t_quantile: prob outside (0,1)");
    if (!(df > 0.0)) throw std::invalid_argument("student_t_quantile: df must be positive");
    if (prob == 0.5) return 0.0;
    return boost::math::quantile(boost::math::students_t_distribution<double>(df), prob);
}

struct MomentInterval {
    double lower = 0.0, upper = 0.0;
    double mean = 0.0, sd = 0.0;
    bool degenerate = false;  ///< sample sd was zero; the interval has zero width
};

/// Two-sided t interval mean -/+ t_{alpha/2,M-1} sd / sqrt(M) for a moment estimated from samples.
inline MomentInterval calibrate_moment_bounds(std::span<const double> samples, double alpha) {
    const std::size_t M = samples.size();
    if (M < 2) throw std::invalid_argument("calibrate_moment_bounds: need at least 2 samples");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("calibrate_moment_bounds: alpha outside (0,1)");
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= double(M);
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / double(M - 1));
    MomentInterval out{mean, mean, mean, sd, false};
    if (!(sd > 0.0)) {
        out.degenerate = true;
        return out;
    }
    const double t = student_t_quantile(1.0 - alpha / 2.0, double(M - 1));
    const double half = t * sd / std::sqrt(double(M));
    out.lower = mean - half;
    out.upper = mean + half;
    return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov band as a moment set

struct KsAnchor {
    double y;
    double cdf_left;   ///< F_b(y-)
    double cdf_right;  ///< F_b(y+)
};

/**
 * Moment set F_b(y_l+) - eta <= P(Y <= y_l) <= F_b(y_l-) + eta, bounds clipped
 * to [0,1]. The indicator uses the first coordinate of each grid point.
 * Throws InfeasibleError if some band is empty (possible when eta is smaller
 * than half a jump of F_b).
 */
inline MomentSet build_ks_band_momentset(std::span<const KsAnchor> anchors, double eta, GridPtr grid) {
    if (!(eta >= 0.0)) throw std::invalid_argument("build_ks_band_momentset: eta must be >= 0");
    for (std::size_t l = 0; l < anchors.size(); ++l) {
        const auto& a = anchors[l];
        if (!(a.cdf_left <= a.cdf_right) || a.cdf_left < 0.0 || a.cdf_right > 1.0)
            throw std::invalid_argument("build_ks_band_momentset: non-monotone CDF at anchor " + std::to_string(l));
        if (l > 0) {
            const auto& prev = anchors[l - 1];
            if (!(prev.y < a.y) || prev.cdf_right > a.cdf_left)
                throw std::invalid_argument("build_ks_band_momentset: non-monotone CDF at anchor " + std::to_string(l));
        }
    }
    MomentSet set(grid);
    for (std::size_t l = 0; l < anchors.size(); ++l) {
        const double y = anchors[l].y;
        const double lo = std::clamp(anchors[l].cdf_right - eta, 0.0, 1.0);
        const double hi = std::clamp(anchors[l].cdf_left + eta, 0.0, 1.0);
        if (lo > hi) throw InfeasibleError("build_ks_band_momentset: empty band at anchor " + std::to_string(l), lo - hi);
        std::vector<double> ind(grid->size());
        for (std::size_t j = 0; j < ind.size(); ++j) ind[j] = grid->coord(j, 0) <= y ? 1.0 : 0.0;
        set.add_values(std::move(ind), lo, hi, "ks" + std::to_string(l));
    }
    return set;
}

// ---------------------------------------------------------------------------
// linearized subproblems  min_{q in U} xi' q

enum class SolutionCase {
    lp_vertex,        ///< moment set, simplex vertex
    zero_radius,      ///< eta = 0, q = baseline
    argmin_mass,      ///< baseline renormalized on argmin xi (alpha* = 0, or KL case 1)
    dual_interior,    ///< phi ball with alpha* > 0
    exponential_tilt, ///< KL case 2
};

struct SubproblemSolution {
    DiscreteDistribution q;
    double value = 0.0;       ///< xi' q
    SolutionCase which = SolutionCase::lp_vertex;
    double alpha = 0.0;       ///< phi-ball dual multiplier of the radius
    double lambda = 0.0;      ///< phi-ball dual multiplier of the simplex
    double beta = 0.0;        ///< KL tilt parameter
    double dual_value = std::numeric_limits<double>::quiet_NaN();
    double residual = 0.0;    ///< KL root residual or phase-1 value
};

namespace detail {

inline std::vector<bool> argmin_set(std::span<const double> xi, const std::vector<std::size_t>& support) {
    double mn = std::numeric_limits<double>::infinity(), scale = 0.0;
    for (auto j : support) {
        mn = std::min(mn, xi[j]);
        scale = std::max(scale, std::abs(xi[j]));
    }
    const double tol = 1e-12 * scale;
    std::vector<bool> in(xi.size(), false);
    for (auto j : support) in[j] = xi[j] - mn <= tol;
    return in;
}

inline std::vector<std::size_t> positive_support(std::span<const double> pb) {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < pb.size(); ++j)
        if (pb[j] > 0.0) s.push_back(j);
    return s;
}

inline void check_xi(std::span<const double> xi, std::size_t n) {
    if (xi.size() != n) throw std::invalid_argument("subproblem: xi length does not match grid");
    for (double v : xi)
        if (!std::isfinite(v)) throw std::invalid_argument("subproblem: non-finite xi");
}

inline SubproblemSolution baseline_on_mask(const PhiBall& ball, std::span<const double> xi, const std::vector<bool>& mask,
                                           SolutionCase which) {
    const auto pb = ball.baseline.probs();
    std::vector<double> q(pb.size(), 0.0);
    for (std::size_t j = 0; j < q.size(); ++j)
        if (mask[j]) q[j] = pb[j];
    auto dist = DiscreteDistribution::from_weights(ball.baseline.grid_ptr(), std::move(q));
    const double v = dot(xi, dist.probs());
    return {std::move(dist), v, which};
}

}  // namespace detail

/// Solves the LP over a moment set by the dense simplex.
inline SubproblemSolution solve_subproblem_moment(std::span<const double> xi, const MomentSet& set) {
    const std::size_t n = set.grid().size();
    detail::check_xi(xi, n);
    lp::Problem prob;
    prob.cost.assign(xi.begin(), xi.end());
    prob.add_row(std::vector<double>(n, 1.0), lp::RowSense::equal, 1.0);
    for (const auto& c : set.constraints()) {
        if (std::isfinite(c.upper)) prob.add_row(c.values, lp::RowSense::less_equal, c.upper);
        if (std::isfinite(c.lower)) prob.add_row(c.values, lp::RowSense::greater_equal, c.lower);
    }
    auto res = lp::solve(prob);
    if (res.status == lp::Status::infeasible) throw InfeasibleError("moment set is empty", res.phase1_value);
    if (res.status != lp::Status::optimal) throw ConvergenceError("moment LP: simplex did not terminate");
    auto q = DiscreteDistribution::from_weights(set.grid_ptr(), std::move(res.x));
    const double v = dot(xi, q.probs());
    SubproblemSolution out{std::move(q), v, SolutionCase::lp_vertex};
    out.residual = res.phase1_value;
    return out;
}

/**
 * Generic phi-divergence ball via its two-dimensional dual
 *
 *   max_{alpha>=0, lambda}  -alpha sum_j pb_j phi*(-(xi_j+lambda)/alpha) - alpha eta - lambda.
 *
 * For fixed alpha the inner problem in lambda is concave and its stationarity
 * condition is sum_j pb_j (phi*)'(t_j) = 1, solved by bisection on
 * [-max xi, -min xi]. The outer value g(alpha) is concave with
 * g'(alpha) = d_phi(q(alpha), pb) - eta (Fenchel equality), so alpha* is found by
 * bracketing and bisecting the sign of g'. If g'(0+) <= 0 then alpha* = 0 and
 * q is pb renormalized on argmin xi.
 */
inline SubproblemSolution solve_subproblem_phi(std::span<const double> xi, const PhiBall& ball, int max_iter = 200) {
    const auto pb = ball.baseline.probs();
    const std::size_t n = pb.size();
    detail::check_xi(xi, n);
    const Divergence d = ball.divergence;
    const auto support = detail::positive_support(pb);

    if (ball.eta == 0.0) {
        SubproblemSolution s{ball.baseline, dot(xi, pb), SolutionCase::zero_radius};
        s.dual_value = s.value;
        return s;
    }

    const auto in_m = detail::argmin_set(xi, support);
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    for (auto j : support) {
        xmin = std::min(xmin, xi[j]);
        xmax = std::max(xmax, xi[j]);
    }
    {
        auto s = detail::baseline_on_mask(ball, xi, in_m, SolutionCase::argmin_mass);
        if (phi_divergence(s.q.probs(), pb, d) <= ball.eta) {
            s.dual_value = xmin;
            return s;
        }
    }

    // q_j(alpha, lambda) = pb_j (phi*)'(t_j), t_j = -(xi_j + lambda)/alpha
    std::vector<double> r(n, 0.0);
    auto mass = [&](double alpha, double lambda) {
        double s = 0.0;
        for (auto j : support) s += pb[j] * phi_conjugate_argmax(d, -(xi[j] + lambda) / alpha);
        return s;
    };
    auto inner = [&](double alpha) {
        double lo = -xmax, hi = -xmin;  // mass(lo) >= 1 >= mass(hi)
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (mass(alpha, mid) > 1.0) lo = mid;
            else hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    auto q_of = [&](double alpha, double lambda) {
        std::fill(r.begin(), r.end(), 0.0);
        double s = 0.0;
        for (auto j : support) {
            r[j] = pb[j] * phi_conjugate_argmax(d, -(xi[j] + lambda) / alpha);
            s += r[j];
        }
        for (auto& v : r) v /= s;
        return r;
    };
    auto slope = [&](double alpha) {
        const double lambda = inner(alpha);
        return phi_divergence(q_of(alpha, lambda), pb, d) - ball.eta;
    };

    double lo = 0.0, hi = std::max(xmax - xmin, 1e-300);
    int expand = 0;
    while (slope(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++expand > 2000) throw ConvergenceError("solve_subproblem_phi: could not bracket alpha (last alpha " + std::to_string(hi) + ")");
    }
    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (slope(mid) > 0.0) lo = mid;
        else hi = mid;
    }
    // hi is on the feasible side of the radius
    const double alpha = hi;
    const double lambda = inner(alpha);
    auto qv = q_of(alpha, lambda);
    auto q = DiscreteDistribution(ball.baseline.grid_ptr(), qv);
    const double div = phi_divergence(q.probs(), pb, d);
    if (div > ball.eta + 1e-7)
        throw ConvergenceError("solve_subproblem_phi: dual search ended infeasible (alpha " + std::to_string(alpha) +
                               ", lambda " + std::to_string(lambda) + ", divergence " + std::to_string(div) + ")");
    double dual = -alpha * ball.eta - lambda;
    for (auto j : support) dual -= alpha * pb[j] * phi_conjugate(d, -(xi[j] + lambda) / alpha);
    SubproblemSolution out{std::move(q), 0.0, SolutionCase::dual_interior};
    out.value = dot(xi, out.q.probs());
    out.alpha = alpha;
    out.lambda = lambda;
    out.dual_value = dual;
    return out;
}

/**
 * KL ball by exponential tilting. With M = argmin xi, if -log pb(M) <= eta the
 * answer is pb renormalized on M; otherwise q_j ~ pb_j exp(beta xi_j) with
 * beta < 0 solving beta phi'(beta) - phi(beta) = eta, phi the log-MGF of xi under
 * pb. The left side is the KL divergence of the tilt; it increases from 0 at
 * beta = 0 towards -log pb(M), so bisection on [-B, 0] with B doubled until the
 * bracket holds always succeeds for finite xi.
 */
inline SubproblemSolution solve_subproblem_kl(std::span<const double> xi, const PhiBall& ball, int max_iter = 200) {
    if (ball.divergence != Divergence::kl) throw std::invalid_argument("solve_subproblem_kl: ball is not a KL ball");
    const auto pb = ball.baseline.probs();
    const std::size_t n = pb.size();
    detail::check_xi(xi, n);
    const auto support = detail::positive_support(pb);

    if (ball.eta == 0.0) {
        SubproblemSolution s{ball.baseline, dot(xi, pb), SolutionCase::zero_radius};
        return s;
    }
    const auto in_m = detail::argmin_set(xi, support);
    double pm = 0.0, xmin = std::numeric_limits<double>::infinity(), spread = 0.0;
    for (auto j : support) xmin = std::min(xmin, xi[j]);
    for (auto j : support) {
        if (in_m[j]) pm += pb[j];
        spread = std::max(spread, xi[j] - xmin);
    }
    if (-std::log(pm) <= ball.eta) return detail::baseline_on_mask(ball, xi, in_m, SolutionCase::argmin_mass);

    // shifted xi keeps every exponent nonpositive for beta < 0
    std::vector<double> w(n, 0.0);
    auto tilt = [&](double beta, double& logz, double& mean) {
        double z = 0.0, zm = 0.0;
        for (auto j : support) {
            const double s = xi[j] - xmin;
            w[j] = pb[j] * std::exp(beta * s);
            z += w[j];
            zm += w[j] * s;
        }
        logz = std::log(z);
        mean = zm / z;
        return beta * mean - logz;  // KL(q_beta || pb)
    };
    double logz = 0.0, mean = 0.0;
    double hi = 0.0, lo = -1.0 / spread;
    int expand = 0;
    while (tilt(lo, logz, mean) < ball.eta) {
        hi = lo;
        lo *= 2.0;
        if (++expand > 2000) throw ConvergenceError("solve_subproblem_kl: bracket expansion failed at beta " + std::to_string(lo));
    }
    double beta = lo, resid = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        beta = 0.5 * (lo + hi);
        resid = tilt(beta, logz, mean) - ball.eta;
        if (std::abs(resid) <= 1e-13 || beta <= lo || beta >= hi) break;
        if (resid > 0.0) lo = beta;
        else hi = beta;
    }
    resid = tilt(beta, logz, mean) - ball.eta;
    if (std::abs(resid) > 1e-10) throw ConvergenceError("solve_subproblem_kl: root residual " + std::to_string(resid) + " at beta " + std::to_string(beta));
    std::vector<double> q(n, 0.0);
    double z = 0.0;
    for (auto j : support) z += w[j];
    for (auto j : support) q[j] = w[j] / z;
    auto dist = DiscreteDistribution(ball.baseline.grid_ptr(), std::move(q));
    SubproblemSolution out{std::move(dist), 0.0, SolutionCase::exponential_tilt};
    out.value = dot(xi, out.q.probs());
    out.beta = beta;
    out.residual = resid;
    return out;
}

struct SolverOptions {
    bool kl_via_generic_dual = false;
};

inline SubproblemSolution solve_subproblem(std::span<const double> xi, const UncertaintySet& set, const SolverOptions& opt = {}) {
    if (auto m = std::get_if<MomentSet>(&set)) return solve_subproblem_moment(xi, *m);
    const auto& ball = std::get<PhiBall>(set);
    if (ball.divergence == Divergence::kl && !opt.kl_via_generic_dual) return solve_subproblem_kl(xi, ball);
    return solve_subproblem_phi(xi, ball);
}

/**
 * A strictly positive member of a moment set: maximizes t subject to q >= t
 * componentwise. Throws InfeasibleError if the set is empty or has no strictly
 * positive member.
 */
inline DiscreteDistribution feasible_interior_point(const MomentSet& set) {
    const std::size_t n = set.grid().size();
    // variables r_0..r_{n-1}, t with q = r + t
    lp::Problem prob;
    prob.cost.assign(n + 1, 0.0);
    prob.cost[n] = -1.0;
    std::vector<double> row(n + 1, 1.0);
    row[n] = double(n);
    prob.add_row(row, lp::RowSense::equal, 1.0);
    for (const auto& c : set.constraints()) {
        std::vector<double> a(c.values);
        double s = 0.0;
        for (double v : c.values) s += v;
        a.push_back(s);
        if (std::isfinite(c.upper)) prob.add_row(a, lp::RowSense::less_equal, c.upper);
        if (std::isfinite(c.lower)) prob.add_row(a, lp::RowSense::greater_equal, c.lower);
    }
    auto res = lp::solve(prob);
    if (res.status == lp::Status::infeasible) throw InfeasibleError("moment set is empty", res.phase1_value);
    if (res.status != lp::Status::optimal) throw ConvergenceError("feasible_interior_point: simplex did not terminate");
    const double t = res.x[n];
    if (!(t > 0.0)) throw InfeasibleError("moment set has no strictly positive member", 0.0);
    std::vector<double> q(n);
    for (std::size_t j = 0; j < n; ++j) q[j] = res.x[j] + t;
    return DiscreteDistribution::from_weights(set.grid_ptr(), std::move(q));
}

/// Natural center of a set: the baseline of a ball or the max-min point of a moment set.
inline DiscreteDistribution set_center(const UncertaintySet& set) {
    if (auto b = std::get_if<PhiBall>(&set)) return b->baseline;
    return feasible_interior_point(std::get<MomentSet>(set));
}

}  // namespace robustsim
