#pragma once

#include "robustsim/probdist.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace robustsim {

/// Payoff of one simulated path plus the occurrence counts of every support
/// point among the draws made from each input model.
struct ReplicationRecord {
    double payoff = 0.0;
    std::vector<std::vector<std::uint32_t>> counts;
    std::vector<std::uint32_t> draws;  ///< sum of counts[i]

    ReplicationRecord() = default;
    explicit ReplicationRecord(std::span<const std::size_t> sizes) : counts(sizes.size()), draws(sizes.size(), 0) {
        for (std::size_t i = 0; i < sizes.size(); ++i) counts[i].assign(sizes[i], 0);
    }

    void reset() {
        payoff = 0.0;
        for (auto& c : counts) std::fill(c.begin(), c.end(), 0u);
        std::fill(draws.begin(), draws.end(), 0u);
    }

    void record(std::size_t model, std::size_t j) {
        ++counts[model][j];
        ++draws[model];
    }
};

/// h(X) driven by i.i.d. draws from m discrete input models.
class SimulationModel {
public:
    virtual ~SimulationModel() = default;

    virtual std::size_t input_count() const = 0;
    virtual const GridPtr& grid(std::size_t i) const = 0;
    /// Nominal number of draws T^i per path.
    virtual std::size_t path_length(std::size_t i) const = 0;
    /// M with |h(X)| <= M on every path; infinity when no finite bound exists.
    virtual double payoff_bound() const = 0;
    /// Runs one path. rec is reset by the caller; the model fills counts and payoff.
    virtual void replicate(std::span<const DiscreteSampler> samplers, RandomStream::Engine& eng,
                           ReplicationRecord& rec) const = 0;

    std::vector<std::size_t> grid_sizes() const {
        std::vector<std::size_t> s(input_count());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = grid(i)->size();
        return s;
    }
};

/// Objective with closed-form value and gradient, for deterministic Frank-Wolfe.
class ExactGradientModel {
public:
    virtual ~ExactGradientModel() = default;
    virtual std::size_t input_count() const = 0;
    virtual double value(std::span<const DiscreteDistribution> p) const = 0;
    /// Partial derivatives dZ/dp_j^i, one vector per input model.
    virtual std::vector<std::vector<double>> gradient(std::span<const DiscreteDistribution> p) const = 0;
};

}  // namespace robustsim
