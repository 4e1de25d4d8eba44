#pragma once

#include "robustsim/gradient.hpp"
#include "robustsim/uncertainty.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace robustsim {

enum class Sense { minimize, maximize };

inline const char* to_string(Sense s) { return s == Sense::minimize ? "min" : "max"; }

enum class StepRule {
    schedule,     ///< eps_k = min(a/k, 0.99)
    line_search,  ///< exact objective only: best eps in [0, 1]
};

/// Values of the term_flag trace column.
enum class Termination : int {
    running = 0,
    budget = 1,
    objective_stalled = 2,
    small_gradient = 3,
    iteration_cap = 4,
    gap_tolerance = 5,
};

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::running: return "running";
        case Termination::budget: return "budget";
        case Termination::objective_stalled: return "objective_stalled";
        case Termination::small_gradient: return "small_gradient";
        case Termination::iteration_cap: return "iteration_cap";
        case Termination::gap_tolerance: return "gap_tolerance";
    }
    return "unknown";
}

enum class InitialKind { center, uniform, random, explicit_points };

struct InitialSpec {
    InitialKind kind = InitialKind::center;
    double random_weight = 0.5;  ///< random: (1 - w) center + w vertex of a random direction
    std::vector<std::vector<double>> explicit_probs;
};

struct FwsaConfig {
    Sense sense = Sense::minimize;
    double a = 1.5;
    double b = 10.0;
    double beta = 2.75;
    std::uint64_t W_max = 5'000'000;
    double rel_obj_tol = 5e-5;  ///< 0 disables
    std::size_t window = 30;
    double grad_norm_tol = 1e-3;  ///< 0 disables
    std::size_t max_iterations = 1'000'000;
    double gap_tol = 0.0;  ///< exact runs only; 0 disables
    StepRule step_rule = StepRule::schedule;
    InitialSpec initial;
    EstimateOptions estimate;
    SolverOptions solver;
};

struct ScheduleCheck {
    std::vector<std::string> warnings;
};

/// Throws std::invalid_argument on a > 0, b >= 1, beta >= 0 violations; returns
/// warnings where the convergence assumptions on the schedule fail.
inline ScheduleCheck validate_schedule(const FwsaConfig& cfg) {
    if (!(cfg.a > 0.0) || !std::isfinite(cfg.a)) throw std::invalid_argument("fwsa: a must be positive");
    if (!(cfg.b >= 1.0) || !std::isfinite(cfg.b)) throw std::invalid_argument("fwsa: b must be >= 1");
    if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) throw std::invalid_argument("fwsa: beta must be >= 0");
    if (cfg.window == 0) throw std::invalid_argument("fwsa: window must be >= 1");
    if (cfg.rel_obj_tol < 0.0 || cfg.grad_norm_tol < 0.0 || cfg.gap_tol < 0.0)
        throw std::invalid_argument("fwsa: tolerances must be >= 0");
    ScheduleCheck out;
    if (cfg.a <= 0.5) out.warnings.push_back("a <= 0.5: step sizes decay too fast for the convergence rate guarantee");
    if (cfg.beta <= 1.0) out.warnings.push_back("beta <= 1: sample sizes grow too slowly for the step-size summability condition");
    return out;
}

inline double step_size(std::size_t k, const FwsaConfig& cfg) {
    if (k < 1) throw std::invalid_argument("step_size: k must be >= 1");
    return std::min(cfg.a / double(k), 0.99);
}

inline std::size_t sample_size(std::size_t k, const FwsaConfig& cfg) {
    if (k < 1) throw std::invalid_argument("sample_size: k must be >= 1");
    // the factor absorbs roundoff in pow so that exact integers are not bumped up
    const double r = cfg.b * std::pow(double(k), cfg.beta);
    return std::size_t(std::ceil(r * (1.0 - 1e-12)));
}

// ---------------------------------------------------------------------------
// Frank-Wolfe gap

struct FwGap {
    double gap = 0.0;  ///< -sum_i min_q psi^i'(q - p^i)
    std::vector<DiscreteDistribution> q;
    std::vector<SubproblemSolution> solutions;
};

inline FwGap fw_gap(const std::vector<std::vector<double>>& psi, std::span<const DiscreteDistribution> p,
                    std::span<const UncertaintySet> sets, const SolverOptions& opt = {}) {
    if (psi.size() != p.size() || p.size() != sets.size()) throw std::invalid_argument("fw_gap: size mismatch");
    FwGap out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (psi[i].size() != p[i].size()) throw std::invalid_argument("fw_gap: gradient length mismatch");
        auto sol = solve_subproblem(psi[i], sets[i], opt);
        out.gap -= sol.value - dot(psi[i], p[i].probs());
        out.q.push_back(sol.q);
        out.solutions.push_back(std::move(sol));
    }
    return out;
}

inline FwGap fw_gap(const GradientEstimate& est, std::span<const DiscreteDistribution> p,
                    std::span<const UncertaintySet> sets, const SolverOptions& opt = {}) {
    return fw_gap(est.psi, p, sets, opt);
}

struct ReportedGap {
    double value = 0.0;
    bool clipped = false;
};

/// Noise-driven negative gaps within 3 standard-error norms are reported as 0.
inline ReportedGap report_gap(double gap, double stderr_norm) {
    if (gap < 0.0 && gap >= -3.0 * stderr_norm) return {0.0, true};
    return {gap, false};
}

// ---------------------------------------------------------------------------
// runs

struct TraceRow {
    std::size_t k = 0;
    std::uint64_t W = 0;
    double Z_est = 0.0;
    double Z_stderr = 0.0;
    double fw_gap = 0.0;       ///< reported (possibly clipped)
    double fw_gap_raw = 0.0;
    bool gap_clipped = false;
    double eps = 0.0;
    std::size_t R = 0;
    Termination term = Termination::running;
    double grad_norm = 0.0;
    std::vector<std::vector<double>> slacks;  ///< per set, per constraint
};

struct RunTrace {
    Sense sense = Sense::minimize;
    std::vector<TraceRow> rows;
    std::vector<DiscreteDistribution> final_p;  ///< the iterate evaluated on the last row
    Termination termination = Termination::running;
    std::vector<std::string> warnings;

    const TraceRow& last() const { return rows.back(); }
    double final_objective() const { return rows.back().Z_est; }
    double final_stderr() const { return rows.back().Z_stderr; }
    std::uint64_t total_replications() const { return rows.back().W; }
};

inline std::vector<DiscreteDistribution> initial_distributions(std::span<const UncertaintySet> sets, const InitialSpec& spec,
                                                               const RandomStream& stream) {
    std::vector<DiscreteDistribution> out;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto grid = grid_ptr_of(sets[i]);
        switch (spec.kind) {
            case InitialKind::center: out.push_back(set_center(sets[i])); break;
            case InitialKind::uniform: {
                auto u = DiscreteDistribution::uniform(grid);
                if (!is_feasible(u, sets[i], 1e-9)) throw std::invalid_argument("initial: uniform distribution is infeasible for set " + std::to_string(i));
                out.push_back(std::move(u));
                break;
            }
            case InitialKind::random: {
                if (!(spec.random_weight >= 0.0 && spec.random_weight < 1.0)) throw std::invalid_argument("initial: random_weight must be in [0, 1)");
                auto eng = stream.derive(i).engine();
                std::vector<double> xi(grid->size());
                for (auto& x : xi) x = standard_normal(eng);
                const auto vertex = solve_subproblem(xi, sets[i]).q;
                out.push_back(mixture_update(set_center(sets[i]), vertex, spec.random_weight));
                break;
            }
            case InitialKind::explicit_points: {
                if (spec.explicit_probs.size() != sets.size()) throw std::invalid_argument("initial: need one explicit distribution per set");
                DiscreteDistribution d(grid, spec.explicit_probs[i]);
                if (!is_feasible(d, sets[i], 1e-9)) throw std::invalid_argument("initial: explicit distribution is infeasible for set " + std::to_string(i));
                out.push_back(std::move(d));
                break;
            }
        }
    }
    return out;
}

namespace detail {

inline void check_start(std::span<const DiscreteDistribution> p, std::span<const UncertaintySet> sets, bool need_positive) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(grid_of(sets[i]) == p[i].grid())) throw std::invalid_argument("fwsa: initial distribution grid differs from set grid");
        if (!is_feasible(p[i], sets[i], 1e-7)) throw std::invalid_argument("fwsa: initial point is infeasible for set " + std::to_string(i));
        if (!need_positive) continue;
        // positivity is required off the structural zeros of a ball
        const auto* ball = std::get_if<PhiBall>(&sets[i]);
        for (std::size_t j = 0; j < p[i].size(); ++j) {
            const bool structural = ball && ball->baseline[j] == 0.0;
            if (!structural && !(p[i][j] > 0.0)) throw std::invalid_argument("fwsa: initial point must be strictly positive");
        }
    }
}

inline std::vector<std::vector<double>> all_slacks(std::span<const DiscreteDistribution> p, std::span<const UncertaintySet> sets) {
    std::vector<std::vector<double>> s;
    for (std::size_t i = 0; i < p.size(); ++i) s.push_back(constraint_slacks(p[i], sets[i]));
    return s;
}

/// Relative change of z against the mean of the previous `window` objective values.
inline bool stalled(const std::vector<TraceRow>& rows, double z, std::size_t window, double tol) {
    if (tol <= 0.0 || rows.size() < window) return false;
    double mean = 0.0;
    for (std::size_t i = rows.size() - window; i < rows.size(); ++i) mean += rows[i].Z_est;
    mean /= double(window);
    return std::abs(z - mean) / std::max(std::abs(mean), 1e-12) < tol;
}

inline double norm(const std::vector<std::vector<double>>& v) {
    double s = 0.0;
    for (const auto& x : v)
        for (double y : x) s += y * y;
    return std::sqrt(s);
}

}  // namespace detail

/**
 * Frank-Wolfe stochastic approximation. Iteration k runs R_k replications at
 * p_k on substream stream/[k], solves the linearized subproblems, and mixes
 * p_{k+1} = (1 - eps_k) p_k + eps_k q_k. Max problems negate the gradient,
 * which is the score estimator of the negated payoff; Z_est is the payoff
 * mean of the same replications and is stored un-negated.
 *
 * The last trace row carries the termination flag; final_p is the iterate
 * evaluated on that row. The last iteration may overshoot W_max.
 */
inline RunTrace fwsa_run(const SimulationModel& model, std::span<const UncertaintySet> sets, const FwsaConfig& cfg,
                         const RandomStream& stream, std::vector<DiscreteDistribution> p) {
    RunTrace trace;
    trace.sense = cfg.sense;
    trace.warnings = validate_schedule(cfg).warnings;
    if (sets.size() != model.input_count()) throw std::invalid_argument("fwsa_run: need one uncertainty set per input model");
    if (p.size() != sets.size()) throw std::invalid_argument("fwsa_run: need one initial distribution per set");
    for (std::size_t i = 0; i < sets.size(); ++i)
        if (!(grid_of(sets[i]) == *model.grid(i))) throw std::invalid_argument("fwsa_run: set grid differs from model grid");
    detail::check_start(p, sets, true);
    const double sign = cfg.sense == Sense::minimize ? 1.0 : -1.0;

    std::uint64_t W = 0;
    for (std::size_t k = 1;; ++k) {
        TraceRow row;
        row.k = k;
        row.R = sample_size(k, cfg);
        row.eps = step_size(k, cfg);
        auto est = estimate_psi(model, p, row.R, stream.derive(k), cfg.estimate);
        W += row.R;
        row.W = W;
        row.Z_est = est.payoff_mean;
        row.Z_stderr = est.payoff_stderr;
        row.grad_norm = est.psi_norm();
        if (sign < 0.0)
            for (auto& v : est.psi)
                for (auto& x : v) x = -x;
        auto g = fw_gap(est.psi, p, sets, cfg.solver);
        row.fw_gap_raw = g.gap;
        const auto rep = report_gap(g.gap, est.std_err_norm());
        row.fw_gap = rep.value;
        row.gap_clipped = rep.clipped;
        row.slacks = detail::all_slacks(p, sets);

        if (W >= cfg.W_max) row.term = Termination::budget;
        else if (detail::stalled(trace.rows, row.Z_est, cfg.window, cfg.rel_obj_tol)) row.term = Termination::objective_stalled;
        else if (cfg.grad_norm_tol > 0.0 && row.grad_norm < cfg.grad_norm_tol) row.term = Termination::small_gradient;
        else if (k >= cfg.max_iterations) row.term = Termination::iteration_cap;

        const bool done = row.term != Termination::running;
        trace.rows.push_back(std::move(row));
        if (done) break;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = mixture_update(p[i], g.q[i], trace.rows.back().eps);
    }
    trace.termination = trace.rows.back().term;
    trace.final_p = std::move(p);
    return trace;
}

inline RunTrace fwsa_run(const SimulationModel& model, std::span<const UncertaintySet> sets, const FwsaConfig& cfg,
                         const RandomStream& stream) {
    return fwsa_run(model, sets, cfg, stream, initial_distributions(sets, cfg.initial, stream.derive(0)));
}

namespace detail {

/// Best eps in [0, 1] for f(eps) by golden-section search, with the full step checked separately.
template <class F>
double line_search(F&& f, int iterations = 80) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = 0.0, hi = 1.0;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iterations && hi - lo > 1e-15; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    double best = 0.5 * (lo + hi), fbest = f(best);
    if (const double f_one = f(1.0); f_one <= fbest) {
        best = 1.0;
        fbest = f_one;
    }
    return best;
}

}  // namespace detail

/**
 * Deterministic Frank-Wolfe with exact value and gradient. Rows record R = 0
 * and W = k. With StepRule::line_search the step minimizes the (sense-signed)
 * objective along the segment to q_k; otherwise the eps_k schedule is used.
 * The gap tolerance, when positive, stops the run once the gap at p_k is at
 * most gap_tol.
 */
inline RunTrace fwsa_run_exact(const ExactGradientModel& model, std::span<const UncertaintySet> sets, const FwsaConfig& cfg,
                               std::vector<DiscreteDistribution> p) {
    RunTrace trace;
    trace.sense = cfg.sense;
    trace.warnings = validate_schedule(cfg).warnings;
    if (sets.size() != model.input_count() || p.size() != sets.size()) throw std::invalid_argument("fwsa_run_exact: size mismatch");
    detail::check_start(p, sets, false);
    const double sign = cfg.sense == Sense::minimize ? 1.0 : -1.0;

    for (std::size_t k = 1;; ++k) {
        TraceRow row;
        row.k = k;
        row.W = k;
        row.R = 0;
        row.Z_est = model.value(p);
        if (!std::isfinite(row.Z_est)) throw std::domain_error("fwsa_run_exact: objective is not finite at the iterate");
        auto grad = model.gradient(p);
        row.grad_norm = detail::norm(grad);
        if (sign < 0.0)
            for (auto& v : grad)
                for (auto& x : v) x = -x;
        auto g = fw_gap(grad, p, sets, cfg.solver);
        row.fw_gap_raw = row.fw_gap = g.gap;
        row.slacks = detail::all_slacks(p, sets);

        if (cfg.step_rule == StepRule::line_search) {
            auto along = [&](double e) {
                std::vector<DiscreteDistribution> x;
                for (std::size_t i = 0; i < p.size(); ++i) x.push_back(mixture_update(p[i], g.q[i], e));
                const double v = sign * model.value(x);
                return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
            };
            row.eps = detail::line_search(along);
        } else {
            row.eps = step_size(k, cfg);
        }

        if (cfg.gap_tol > 0.0 && g.gap <= cfg.gap_tol) row.term = Termination::gap_tolerance;
        else if (k >= cfg.W_max) row.term = Termination::budget;
        else if (detail::stalled(trace.rows, row.Z_est, cfg.window, cfg.rel_obj_tol)) row.term = Termination::objective_stalled;
        else if (cfg.grad_norm_tol > 0.0 && row.grad_norm < cfg.grad_norm_tol) row.term = Termination::small_gradient;
        else if (k >= cfg.max_iterations) row.term = Termination::iteration_cap;

        const bool done = row.term != Termination::running;
        trace.rows.push_back(std::move(row));
        if (done) break;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = mixture_update(p[i], g.q[i], trace.rows.back().eps);
    }
    trace.termination = trace.rows.back().term;
    trace.final_p = std::move(p);
    return trace;
}

inline RunTrace fwsa_run_exact(const ExactGradientModel& model, std::span<const UncertaintySet> sets, const FwsaConfig& cfg) {
    return fwsa_run_exact(model, sets, cfg, initial_distributions(sets, cfg.initial, RandomStream(0)));
}

}  // namespace robustsim
