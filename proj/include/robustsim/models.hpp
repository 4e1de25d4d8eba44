#pragma once

#include "robustsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace robustsim {

/**
 * Average of the first T waiting times of a FCFS single-server queue.
 * W_1 = 0, W_t = max(W_{t-1} + S_{t-1} - A_t, 0); arrivals[t] is the
 * interarrival time preceding customer t (arrivals[0] is unused).
 */
inline double lindley_payoff(std::span<const double> services, std::span<const double> arrivals) {
    const std::size_t T = services.size();
    if (T == 0 || arrivals.size() != T) throw std::invalid_argument("lindley_payoff: need T >= 1 services and T arrivals");
    double w = 0.0, sum = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        w = std::max(w + services[t - 1] - arrivals[t], 0.0);
        sum += w;
    }
    return sum / double(T);
}

// ---------------------------------------------------------------------------
// single-class M/G/1

struct Mg1Config {
    double lambda = 1.0;
    GridPtr service_grid;
    std::size_t T = 500;
};

/**
 * M/G/1 with Poisson(lambda) arrivals and service drawn from the decision
 * distribution. Per customer t the path draws A_t ~ Exp(lambda) (t >= 2) and
 * then the service index, in that order, from the replication engine.
 */
class Mg1Model final : public SimulationModel {
public:
    explicit Mg1Model(Mg1Config cfg) : cfg_(std::move(cfg)) {
        if (!cfg_.service_grid) throw std::invalid_argument("Mg1Model: missing service grid");
        if (cfg_.service_grid->dim() != 1) throw std::invalid_argument("Mg1Model: service grid must be scalar");
        if (!(cfg_.lambda > 0.0)) throw std::invalid_argument("Mg1Model: lambda must be positive");
        if (cfg_.T < 1) throw std::invalid_argument("Mg1Model: T must be >= 1");
        for (double y : cfg_.service_grid->coords())
            if (y < 0.0) throw std::invalid_argument("Mg1Model: negative service time");
        y_ = cfg_.service_grid->coords();
    }

    std::size_t input_count() const override { return 1; }
    const GridPtr& grid(std::size_t) const override { return cfg_.service_grid; }
    std::size_t path_length(std::size_t) const override { return cfg_.T; }
    double payoff_bound() const override { return double(cfg_.T) * *std::max_element(y_.begin(), y_.end()); }
    const Mg1Config& config() const noexcept { return cfg_; }

    void replicate(std::span<const DiscreteSampler> samplers, RandomStream::Engine& eng, ReplicationRecord& rec) const override {
        const auto& sampler = samplers[0];
        double w = 0.0, sum = 0.0, prev_s = 0.0;
        for (std::size_t t = 0; t < cfg_.T; ++t) {
            if (t > 0) {
                const double a = exponential(eng, cfg_.lambda);
                w = std::max(w + prev_s - a, 0.0);
                sum += w;
            }
            const std::size_t j = sampler(eng);
            rec.record(0, j);
            prev_s = y_[j];
        }
        rec.payoff = sum / double(cfg_.T);
    }

private:
    Mg1Config cfg_;
    std::vector<double> y_;
};

/// h(X) = X_1 with a single draw from one scalar input model.
class IdentityPayoffModel final : public SimulationModel {
public:
    explicit IdentityPayoffModel(GridPtr grid) : grid_(std::move(grid)) {
        if (!grid_ || grid_->dim() != 1) throw std::invalid_argument("IdentityPayoffModel: need a scalar grid");
    }
    std::size_t input_count() const override { return 1; }
    const GridPtr& grid(std::size_t) const override { return grid_; }
    std::size_t path_length(std::size_t) const override { return 1; }
    double payoff_bound() const override {
        double m = 0.0;
        for (double y : grid_->coords()) m = std::max(m, std::abs(y));
        return m;
    }
    void replicate(std::span<const DiscreteSampler> samplers, RandomStream::Engine& eng, ReplicationRecord& rec) const override {
        const std::size_t j = samplers[0](eng);
        rec.record(0, j);
        rec.payoff = grid_->coord(j);
    }

private:
    GridPtr grid_;
};

// ---------------------------------------------------------------------------
// multiclass M/G/1, nonpreemptive static priority

/// Class indices sorted by c_i / mean_service_i descending; ties by index.
inline std::vector<std::size_t> cmu_order(std::span<const double> costs, std::span<const double> mean_services) {
    if (costs.size() != mean_services.size()) throw std::invalid_argument("cmu_order: size mismatch");
    std::vector<std::size_t> idx(costs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return costs[a] / mean_services[a] > costs[b] / mean_services[b];
    });
    return idx;
}

struct MulticlassConfig {
    std::vector<GridPtr> grids;      ///< per class, points (interarrival, service)
    std::vector<std::size_t> T;      ///< waits observed per class
    std::vector<double> costs;
    std::vector<std::size_t> priority;  ///< class indices, highest priority first
};

struct MulticlassPath {
    double payoff = 0.0;
    double end_time = 0.0;
    double idle_time = 0.0;
    double busy_time = 0.0;       ///< sum of service times of customers taken into service
    std::vector<double> mean_wait;
};

/**
 * Single server, per-class renewal arrivals whose (interarrival, service) pairs
 * are drawn from the class distribution. Within a class FCFS, across classes
 * the fixed priority list. Runs until every class has T^i recorded waits;
 * later waits of a finished class are not recorded but those customers are
 * still served. Every drawn pair is counted, including the one pending at the
 * end, so the recorded draw count of each class is random.
 */
class MulticlassModel final : public SimulationModel {
public:
    explicit MulticlassModel(MulticlassConfig cfg) : cfg_(std::move(cfg)) {
        const std::size_t m = cfg_.grids.size();
        if (m == 0) throw std::invalid_argument("MulticlassModel: no classes");
        if (cfg_.T.size() != m || cfg_.costs.size() != m) throw std::invalid_argument("MulticlassModel: per-class sizes differ");
        if (cfg_.priority.empty()) {
            cfg_.priority.resize(m);
            std::iota(cfg_.priority.begin(), cfg_.priority.end(), 0);
        }
        auto sorted = cfg_.priority;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < m; ++i) {
            if (sorted.size() != m || sorted[i] != i) throw std::invalid_argument("MulticlassModel: priority is not a permutation");
            const auto& g = cfg_.grids[i];
            if (!g || g->dim() != 2) throw std::invalid_argument("MulticlassModel: class grids must be bivariate");
            if (cfg_.T[i] < 1) throw std::invalid_argument("MulticlassModel: T must be >= 1");
            if (!(cfg_.costs[i] >= 0.0)) throw std::invalid_argument("MulticlassModel: costs must be nonnegative");
            bool any_positive = false;
            for (std::size_t j = 0; j < g->size(); ++j) {
                if (g->coord(j, 0) < 0.0 || g->coord(j, 1) < 0.0) throw std::invalid_argument("MulticlassModel: negative time");
                any_positive = any_positive || g->coord(j, 0) > 0.0;
            }
            if (!any_positive) throw std::invalid_argument("MulticlassModel: all interarrival times are zero");
        }
        rank_.resize(m);
        for (std::size_t r = 0; r < m; ++r) rank_[cfg_.priority[r]] = r;
    }

    /// Fixes the priority list by the c mu rule at the given distributions.
    static MulticlassModel with_cmu_priority(MulticlassConfig cfg, std::span<const DiscreteDistribution> at) {
        std::vector<double> means(cfg.grids.size());
        for (std::size_t i = 0; i < means.size(); ++i)
            means[i] = moments(at[i], [](PointView y) { return y[1]; });
        cfg.priority = cmu_order(cfg.costs, means);
        return MulticlassModel(std::move(cfg));
    }

    std::size_t input_count() const override { return cfg_.grids.size(); }
    const GridPtr& grid(std::size_t i) const override { return cfg_.grids[i]; }
    std::size_t path_length(std::size_t i) const override { return cfg_.T[i]; }
    double payoff_bound() const override { return std::numeric_limits<double>::infinity(); }
    const MulticlassConfig& config() const noexcept { return cfg_; }

    void replicate(std::span<const DiscreteSampler> samplers, RandomStream::Engine& eng, ReplicationRecord& rec) const override {
        rec.payoff = simulate(samplers, eng, &rec).payoff;
    }

    MulticlassPath simulate(std::span<const DiscreteSampler> samplers, RandomStream::Engine& eng, ReplicationRecord* rec = nullptr) const {
        const std::size_t m = cfg_.grids.size();
        struct Job {
            double arrival, service;
        };
        std::vector<std::deque<Job>> queue(m);
        std::vector<double> next_arrival(m), next_service(m);
        std::vector<std::size_t> recorded(m, 0);
        std::vector<double> wait_sum(m, 0.0);

        auto draw = [&](std::size_t c, double from) {
            const std::size_t j = samplers[c](eng);
            if (rec) rec->record(c, j);
            next_arrival[c] = from + cfg_.grids[c]->coord(j, 0);
            next_service[c] = cfg_.grids[c]->coord(j, 1);
        };
        for (std::size_t c = 0; c < m; ++c) draw(c, 0.0);

        MulticlassPath path;
        double clock = 0.0;
        std::size_t unfinished = m;
        auto admit = [&] {
            for (std::size_t c = 0; c < m; ++c) {
                while (next_arrival[c] <= clock) {
                    queue[c].push_back({next_arrival[c], next_service[c]});
                    draw(c, next_arrival[c]);
                }
            }
        };
        while (unfinished > 0) {
            admit();
            std::size_t pick = m;
            for (auto c : cfg_.priority) {
                if (!queue[c].empty()) {
                    pick = c;
                    break;
                }
            }
            if (pick == m) {
                const double t = *std::min_element(next_arrival.begin(), next_arrival.end());
                path.idle_time += t - clock;
                clock = t;
                continue;
            }
            const Job job = queue[pick].front();
            queue[pick].pop_front();
            if (recorded[pick] < cfg_.T[pick]) {
                wait_sum[pick] += clock - job.arrival;
                if (++recorded[pick] == cfg_.T[pick]) --unfinished;
            }
            path.busy_time += job.service;
            clock += job.service;
        }
        path.end_time = clock;
        path.mean_wait.resize(m);
        for (std::size_t c = 0; c < m; ++c) {
            path.mean_wait[c] = wait_sum[c] / double(cfg_.T[c]);
            path.payoff += cfg_.costs[c] * path.mean_wait[c];
        }
        return path;
    }

private:
    MulticlassConfig cfg_;
    std::vector<std::size_t> rank_;
};

// ---------------------------------------------------------------------------
// Pollaczek-Khinchine steady state

struct SteadyStateValue {
    double value = 0.0;
    bool stable = true;
};

/// Mean steady-state wait lambda E[X^2] / (2 (1 - rho)), rho = lambda E[X]; +inf and unstable when rho >= 1.
inline SteadyStateValue pollaczek_khinchine(const DiscreteDistribution& p, double lambda = 1.0) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double y = p.grid().coord(j);
        m1 += p[j] * y;
        m2 += p[j] * y * y;
    }
    const double rho = lambda * m1;
    if (rho >= 1.0) return {std::numeric_limits<double>::infinity(), false};
    return {lambda * m2 / (2.0 * (1.0 - rho)), true};
}

/// dZ/dp_j of the steady-state objective.
inline std::vector<double> pk_gradient(const DiscreteDistribution& p, double lambda = 1.0) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double y = p.grid().coord(j);
        m1 += p[j] * y;
        m2 += p[j] * y * y;
    }
    const double d = 1.0 - lambda * m1;
    if (d <= 0.0) throw std::domain_error("pk_gradient: unstable queue (rho >= 1)");
    std::vector<double> g(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double y = p.grid().coord(j);
        g[j] = lambda * y * y / (2.0 * d) + lambda * lambda * m2 * y / (2.0 * d * d);
    }
    return g;
}

class SteadyStateMg1 final : public ExactGradientModel {
public:
    explicit SteadyStateMg1(double lambda = 1.0) : lambda_(lambda) {}
    std::size_t input_count() const override { return 1; }
    double value(std::span<const DiscreteDistribution> p) const override {
        return pollaczek_khinchine(p[0], lambda_).value;
    }
    std::vector<std::vector<double>> gradient(std::span<const DiscreteDistribution> p) const override {
        return {pk_gradient(p[0], lambda_)};
    }

private:
    double lambda_;
};

/// Z(p) = sum_i c_i' p^i.
class LinearObjective final : public ExactGradientModel {
public:
    explicit LinearObjective(std::vector<std::vector<double>> c) : c_(std::move(c)) {}
    std::size_t input_count() const override { return c_.size(); }
    double value(std::span<const DiscreteDistribution> p) const override {
        double s = 0.0;
        for (std::size_t i = 0; i < c_.size(); ++i) s += dot(c_[i], p[i].probs());
        return s;
    }
    std::vector<std::vector<double>> gradient(std::span<const DiscreteDistribution>) const override { return c_; }

private:
    std::vector<std::vector<double>> c_;
};

}  // namespace robustsim
