#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace robustsim::lp {

enum class RowSense { less_equal, greater_equal, equal };

/// min c'x  s.t.  rows (a_r' x {<=,>=,=} rhs_r),  x >= 0.
struct Problem {
    std::vector<double> cost;
    std::vector<std::vector<double>> rows;
    std::vector<RowSense> senses;
    std::vector<double> rhs;

    std::size_t num_vars() const noexcept { return cost.size(); }

    void add_row(std::vector<double> a, RowSense s, double b) {
        if (a.size() != cost.size()) throw std::invalid_argument("lp::Problem: row length mismatch");
        rows.push_back(std::move(a));
        senses.push_back(s);
        rhs.push_back(b);
    }
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Result {
    Status status = Status::iteration_limit;
    std::vector<double> x;      ///< structural variables only
    double objective = 0.0;
    double phase1_value = 0.0;  ///< sum of artificials at the end of phase 1
    std::size_t pivots = 0;
};

class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, double certificate)
        : std::runtime_error(what + " (phase-1 residual " + std::to_string(certificate) + ")"),
          certificate_(certificate) {}
    double certificate() const noexcept { return certificate_; }

private:
    double certificate_;
};

namespace detail {

/// Solves the dense square system M z = r by Gaussian elimination with partial pivoting.
inline bool solve_dense(std::vector<std::vector<double>> M, std::vector<double> r, std::vector<double>& z) {
    const std::size_t n = r.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t i = c + 1; i < n; ++i)
            if (std::abs(M[i][c]) > std::abs(M[piv][c])) piv = i;
        if (std::abs(M[piv][c]) < 1e-14) return false;
        std::swap(M[piv], M[c]);
        std::swap(r[piv], r[c]);
        for (std::size_t i = c + 1; i < n; ++i) {
            const double f = M[i][c] / M[c][c];
            if (f == 0.0) continue;
            for (std::size_t k = c; k < n; ++k) M[i][k] -= f * M[c][k];
            r[i] -= f * r[c];
        }
    }
    z.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = r[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= M[i][k] * z[k];
        z[i] = s / M[i][i];
    }
    return true;
}

}  // namespace detail

/**
 * Dense two-phase simplex with Bland's anti-cycling rule.
 *
 * Inequality rows get slack/surplus columns and every row gets an artificial
 * column for phase 1. Among optimal vertices the one reached by Bland's rule
 * is returned. The final basic solution is recomputed from the original
 * constraint matrix to shed tableau roundoff.
 */
inline Result solve(const Problem& prob, std::size_t max_pivots = 100000) {
    const std::size_t n = prob.num_vars();
    const std::size_t m = prob.rows.size();

    // column layout: [structural n][slack per inequality][artificial m]
    std::size_t n_slack = 0;
    for (auto s : prob.senses)
        if (s != RowSense::equal) ++n_slack;
    const std::size_t n_cols = n + n_slack + m;
    const std::size_t art0 = n + n_slack;

    // standard-form matrix and rhs (rhs made nonnegative)
    std::vector<std::vector<double>> A(m, std::vector<double>(n_cols, 0.0));
    std::vector<double> b(m);
    {
        std::size_t sc = n;
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < n; ++j) A[r][j] = prob.rows[r][j];
            if (prob.senses[r] == RowSense::less_equal) A[r][sc++] = 1.0;
            else if (prob.senses[r] == RowSense::greater_equal) A[r][sc++] = -1.0;
            b[r] = prob.rhs[r];
            if (b[r] < 0.0) {
                for (auto& v : A[r]) v = -v;
                b[r] = -b[r];
            }
            A[r][art0 + r] = 1.0;
        }
    }

    double scale = 1.0;
    for (const auto& row : A)
        for (double v : row) scale = std::max(scale, std::abs(v));
    const double piv_tol = 1e-11 * scale;
    const double rc_tol = 1e-12 * scale;

    // tableau rows 0..m-1 plus objective row m; last column is rhs
    std::vector<std::vector<double>> T(m + 1, std::vector<double>(n_cols + 1, 0.0));
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n_cols; ++j) T[r][j] = A[r][j];
        T[r][n_cols] = b[r];
    }
    std::vector<std::size_t> basis(m);
    for (std::size_t r = 0; r < m; ++r) basis[r] = art0 + r;
    std::vector<bool> allowed(n_cols, true);

    Result res;

    auto pivot = [&](std::size_t pr, std::size_t pc) {
        const double pv = T[pr][pc];
        for (auto& v : T[pr]) v /= pv;
        T[pr][pc] = 1.0;
        for (std::size_t r = 0; r <= m; ++r) {
            if (r == pr) continue;
            const double f = T[r][pc];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= n_cols; ++j) T[r][j] -= f * T[pr][j];
            T[r][pc] = 0.0;
        }
        basis[pr] = pc;
        ++res.pivots;
    };

    auto set_objective = [&](const std::vector<double>& c) {
        auto& z = T[m];
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t j = 0; j < n_cols; ++j) z[j] = c[j];
        for (std::size_t r = 0; r < m; ++r) {
            const double cb = c[basis[r]];
            if (cb == 0.0) continue;
            for (std::size_t j = 0; j <= n_cols; ++j) z[j] -= cb * T[r][j];
        }
    };

    auto run = [&]() -> Status {
        while (true) {
            if (res.pivots >= max_pivots) return Status::iteration_limit;
            std::size_t enter = n_cols;
            for (std::size_t j = 0; j < n_cols; ++j) {
                if (allowed[j] && T[m][j] < -rc_tol) {
                    enter = j;
                    break;
                }
            }
            if (enter == n_cols) return Status::optimal;
            std::size_t leave = m;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < m; ++r) {
                if (T[r][enter] > piv_tol) {
                    const double ratio = T[r][n_cols] / T[r][enter];
                    const double tie = 1e-15 * (1.0 + std::abs(best));
                    if (leave == m || ratio < best - tie || (std::abs(ratio - best) <= tie && basis[r] < basis[leave])) {
                        best = ratio;
                        leave = r;
                    }
                }
            }
            if (leave == m) return Status::unbounded;
            pivot(leave, enter);
        }
    };

    // phase 1
    std::vector<double> c1(n_cols, 0.0);
    for (std::size_t r = 0; r < m; ++r) c1[art0 + r] = 1.0;
    set_objective(c1);
    const Status s1 = run();
    if (s1 == Status::iteration_limit) {
        res.status = s1;
        return res;
    }
    res.phase1_value = -T[m][n_cols];
    double bscale = 1.0;
    for (double v : b) bscale = std::max(bscale, std::abs(v));
    if (res.phase1_value > 1e-9 * bscale) {
        res.status = Status::infeasible;
        return res;
    }

    // drive artificials out of the basis; rows with no usable pivot are redundant
    std::vector<bool> redundant(m, false);
    for (std::size_t r = 0; r < m; ++r) {
        if (basis[r] < art0) continue;
        std::size_t pc = n_cols;
        for (std::size_t j = 0; j < art0; ++j) {
            if (std::abs(T[r][j]) > piv_tol) {
                pc = j;
                break;
            }
        }
        if (pc == n_cols) redundant[r] = true;
        else pivot(r, pc);
    }
    for (std::size_t j = art0; j < n_cols; ++j) allowed[j] = false;

    // phase 2
    std::vector<double> c2(n_cols, 0.0);
    for (std::size_t j = 0; j < n; ++j) c2[j] = prob.cost[j];
    set_objective(c2);
    const Status s2 = run();
    res.status = s2;
    if (s2 != Status::optimal) return res;

    // recompute the basic solution from the original data
    std::vector<double> full(n_cols, 0.0);
    {
        std::vector<std::size_t> rows_kept, cols_kept;
        for (std::size_t r = 0; r < m; ++r) {
            if (redundant[r]) continue;
            rows_kept.push_back(r);
            cols_kept.push_back(basis[r]);
        }
        const std::size_t k = rows_kept.size();
        std::vector<std::vector<double>> B(k, std::vector<double>(k));
        std::vector<double> rb(k), z;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t c = 0; c < k; ++c) B[i][c] = A[rows_kept[i]][cols_kept[c]];
            rb[i] = b[rows_kept[i]];
        }
        if (detail::solve_dense(B, rb, z)) {
            for (std::size_t c = 0; c < k; ++c) full[cols_kept[c]] = std::max(0.0, z[c]);
        } else {
            for (std::size_t r = 0; r < m; ++r)
                if (!redundant[r]) full[basis[r]] = std::max(0.0, T[r][n_cols]);
        }
    }
    res.x.assign(full.begin(), full.begin() + n);
    res.objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) res.objective += prob.cost[j] * res.x[j];
    return res;
}

}  // namespace robustsim::lp
