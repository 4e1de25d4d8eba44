#pragma once

#include "robustsim/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace robustsim {

using Point = std::vector<double>;
using PointView = std::span<const double>;
using PointFunction = std::function<double(PointView)>;
using PointSampler = std::function<Point(RandomStream::Engine&)>;

/// Fixed support points y_1..y_n of one input model, each of dimension dim.
/// Duplicate points are allowed and are distinct atoms.
class SupportGrid {
public:
    SupportGrid(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
        if (dim_ == 0) throw std::invalid_argument("SupportGrid: dimension must be positive");
        if (coords_.size() % dim_ != 0)
            throw std::invalid_argument("SupportGrid: coordinate count is not a multiple of dimension");
        if (size() < 2) throw std::invalid_argument("SupportGrid: need at least 2 points");
        for (double c : coords_)
            if (!std::isfinite(c)) throw std::invalid_argument("SupportGrid: non-finite coordinate");
    }

    static SupportGrid scalar(std::vector<double> values) { return SupportGrid(1, std::move(values)); }

    static SupportGrid from_points(const std::vector<Point>& points) {
        if (points.empty()) throw std::invalid_argument("SupportGrid: no points");
        const std::size_t d = points.front().size();
        std::vector<double> flat;
        flat.reserve(points.size() * d);
        for (const auto& pt : points) {
            if (pt.size() != d) throw std::invalid_argument("SupportGrid: ragged points");
            flat.insert(flat.end(), pt.begin(), pt.end());
        }
        return SupportGrid(d, std::move(flat));
    }

    std::size_t size() const noexcept { return coords_.size() / dim_; }
    std::size_t dim() const noexcept { return dim_; }
    PointView point(std::size_t j) const noexcept { return {coords_.data() + j * dim_, dim_}; }
    double coord(std::size_t j, std::size_t c = 0) const noexcept { return coords_[j * dim_ + c]; }
    const std::vector<double>& coords() const noexcept { return coords_; }

    /// Values f(y_j) for all j.
    std::vector<double> evaluate(const PointFunction& f) const {
        std::vector<double> out(size());
        for (std::size_t j = 0; j < size(); ++j) out[j] = f(point(j));
        return out;
    }

    bool operator==(const SupportGrid& o) const noexcept { return dim_ == o.dim_ && coords_ == o.coords_; }

private:
    std::size_t dim_;
    std::vector<double> coords_;
};

using GridPtr = std::shared_ptr<const SupportGrid>;

inline GridPtr make_grid(SupportGrid g) { return std::make_shared<const SupportGrid>(std::move(g)); }

inline constexpr double kSimplexTol = 1e-12;

/// Probability vector on a support grid.
class DiscreteDistribution {
public:
    DiscreteDistribution(GridPtr grid, std::vector<double> p) : grid_(std::move(grid)), p_(std::move(p)) {
        if (!grid_) throw std::invalid_argument("DiscreteDistribution: null grid");
        if (p_.size() != grid_->size()) throw std::invalid_argument("DiscreteDistribution: size mismatch with grid");
        double s = 0.0;
        for (double v : p_) {
            if (!(v >= 0.0)) throw std::invalid_argument("DiscreteDistribution: negative or NaN probability");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("DiscreteDistribution: probabilities sum to " + std::to_string(s));
    }

    static DiscreteDistribution uniform(GridPtr grid) {
        const std::size_t n = grid->size();
        return DiscreteDistribution(std::move(grid), std::vector<double>(n, 1.0 / double(n)));
    }

    static DiscreteDistribution point_mass(GridPtr grid, std::size_t j) {
        std::vector<double> p(grid->size(), 0.0);
        p.at(j) = 1.0;
        return DiscreteDistribution(std::move(grid), std::move(p));
    }

    /// Normalizes nonnegative weights.
    static DiscreteDistribution from_weights(GridPtr grid, std::vector<double> w) {
        double s = 0.0;
        for (double v : w) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("from_weights: weights must be finite and nonnegative");
            s += v;
        }
        if (!(s > 0.0)) throw std::invalid_argument("from_weights: all weights are zero");
        for (double& v : w) v /= s;
        return DiscreteDistribution(std::move(grid), std::move(w));
    }

    const SupportGrid& grid() const noexcept { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    std::span<const double> probs() const noexcept { return p_; }
    double operator[](std::size_t j) const noexcept { return p_[j]; }
    std::size_t size() const noexcept { return p_.size(); }

    bool same_grid(const DiscreteDistribution& o) const noexcept {
        return grid_ == o.grid_ || *grid_ == *o.grid_;
    }
    bool strictly_positive() const noexcept {
        return std::all_of(p_.begin(), p_.end(), [](double v) { return v > 0.0; });
    }
    double min_prob() const noexcept { return *std::min_element(p_.begin(), p_.end()); }

private:
    GridPtr grid_;
    std::vector<double> p_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// (1-eps) p + eps q.
inline DiscreteDistribution mixture_update(const DiscreteDistribution& p, const DiscreteDistribution& q, double eps) {
    if (!p.same_grid(q)) throw std::invalid_argument("mixture_update: grid mismatch");
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("mixture_update: eps outside [0,1]");
    std::vector<double> out(p.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (1.0 - eps) * p[j] + eps * q[j];
    return DiscreteDistribution(p.grid_ptr(), std::move(out));
}

/// Sum_j p_j f(y_j).
inline double moments(const DiscreteDistribution& dist, const PointFunction& f) {
    double s = 0.0;
    for (std::size_t j = 0; j < dist.size(); ++j) s += dist[j] * f(dist.grid().point(j));
    return s;
}

/// p_j proportional to density(y_j).
inline DiscreteDistribution discretize_density(const PointFunction& density, GridPtr grid) {
    auto w = grid->evaluate(density);
    for (double v : w)
        if (v < 0.0) throw std::invalid_argument("discretize_density: negative density on grid");
    if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; }))
        throw std::invalid_argument("discretize_density: density vanishes on the whole grid");
    return DiscreteDistribution::from_weights(std::move(grid), std::move(w));
}

/// Distribution on a sampled grid with mass L(y_j) / sum_r L(y_r), where L is
/// the likelihood ratio of a target law against the law the grid was drawn from.
inline DiscreteDistribution project_truth(const PointFunction& likelihood_ratio, GridPtr grid) {
    auto w = grid->evaluate(likelihood_ratio);
    for (double v : w)
        if (v < 0.0) throw std::invalid_argument("project_truth: negative likelihood ratio");
    if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; }))
        throw std::invalid_argument("project_truth: likelihood ratio vanishes on the whole grid");
    return DiscreteDistribution::from_weights(std::move(grid), std::move(w));
}

enum class GridConvention {
    shifted,        ///< y_j = (j+1)/n, j = 1..n; top point (n+1)/n
    unit_interval,  ///< y_j = j/n, j = 1..n
};

inline SupportGrid uniform_grid(std::size_t n, GridConvention conv = GridConvention::shifted) {
    if (n < 2) throw std::invalid_argument("uniform_grid: n must be at least 2");
    std::vector<double> y(n);
    const double offset = conv == GridConvention::shifted ? 1.0 : 0.0;
    for (std::size_t j = 1; j <= n; ++j) y[j - 1] = (double(j) + offset) / double(n);
    return SupportGrid::scalar(std::move(y));
}

inline SupportGrid sample_support(const PointSampler& proposal, std::size_t n, const RandomStream& stream) {
    if (n < 2) throw std::invalid_argument("sample_support: n must be at least 2");
    auto eng = stream.engine();
    std::vector<Point> pts;
    pts.reserve(n);
    for (std::size_t j = 0; j < n; ++j) pts.push_back(proposal(eng));
    return SupportGrid::from_points(pts);
}

/**
 * Inverse-CDF sampler over a precomputed cumulative array.
 *
 * A guide table of n buckets maps floor(u n) to the first candidate index, so
 * the expected number of comparisons per draw is O(1); the worst case is the
 * binary-search bound. Indices with zero probability are never returned.
 */
class DiscreteSampler {
public:
    DiscreteSampler() = default;

    explicit DiscreteSampler(std::span<const double> p) : cdf_(p.size()), guide_(p.size() + 1) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            s += p[j];
            cdf_[j] = s;
        }
        for (auto& c : cdf_) c /= s;
        // last positive index absorbs roundoff at the top
        std::size_t last = p.size() - 1;
        while (last > 0 && p[last] <= 0.0) --last;
        for (std::size_t j = last; j < p.size(); ++j) cdf_[j] = 1.0;
        last_ = last;
        const std::size_t n = cdf_.size();
        std::size_t j = 0;
        for (std::size_t b = 0; b <= n; ++b) {
            const double lo = double(b) / double(n);
            while (j < last_ && cdf_[j] <= lo) ++j;
            guide_[b] = static_cast<std::uint32_t>(j);
        }
    }

    explicit DiscreteSampler(const DiscreteDistribution& d) : DiscreteSampler(d.probs()) {}

    std::size_t operator()(RandomStream::Engine& eng) const noexcept {
        const double u = uniform_open(eng);
        std::size_t j = guide_[static_cast<std::size_t>(u * double(cdf_.size()))];
        while (cdf_[j] <= u) ++j;
        return j;
    }

    std::size_t size() const noexcept { return cdf_.size(); }

private:
    std::vector<double> cdf_;
    std::vector<std::uint32_t> guide_;
    std::size_t last_ = 0;
};

/// Draws index j with probability p_j.
inline std::size_t sample_index(const DiscreteSampler& sampler, RandomStream::Engine& eng) { return sampler(eng); }

// ---- continuous laws used for proposals, baselines and truths ----

inline double beta_pdf(double x, double a, double b) {
    if (x < 0.0 || x > 1.0) return 0.0;
    if ((x == 0.0 && a > 1.0) || (x == 1.0 && b > 1.0)) return 0.0;
    const double logc = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    return std::exp(logc + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
}

struct BetaComponent {
    double weight, a, b;
};

inline double beta_mixture_pdf(double x, std::span<const BetaComponent> comps) {
    double s = 0.0;
    for (const auto& c : comps) s += c.weight * beta_pdf(x, c.a, c.b);
    return s;
}

/// Underlying normal parameters of a lognormal with the given mean and sd.
struct LognormalParams {
    double mu, sigma;

    static LognormalParams from_moments(double mean, double sd) {
        if (!(mean > 0.0) || !(sd > 0.0)) throw std::invalid_argument("lognormal: mean and sd must be positive");
        const double s2 = std::log1p((sd * sd) / (mean * mean));
        return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
    }
    double mean() const { return std::exp(mu + 0.5 * sigma * sigma); }
    double pdf(double x) const {
        if (x <= 0.0) return 0.0;
        const double z = (std::log(x) - mu) / sigma;
        return std::exp(-0.5 * z * z) / (x * sigma * std::sqrt(2.0 * M_PI));
    }
};

namespace samplers {

inline PointSampler constant(Point c) {
    return [c = std::move(c)](RandomStream::Engine&) { return c; };
}

inline PointSampler exponential(double rate) {
    return [rate](RandomStream::Engine& e) { return Point{robustsim::exponential(e, rate)}; };
}

inline PointSampler lognormal(LognormalParams par) {
    return [par](RandomStream::Engine& e) { return Point{std::exp(par.mu + par.sigma * standard_normal(e))}; };
}

/// Independent marginals concatenated into one point, in order.
inline PointSampler product(std::vector<PointSampler> marginals) {
    return [m = std::move(marginals)](RandomStream::Engine& e) {
        Point out;
        for (const auto& s : m) {
            auto x = s(e);
            out.insert(out.end(), x.begin(), x.end());
        }
        return out;
    };
}

}  // namespace samplers

}  // namespace robustsim
