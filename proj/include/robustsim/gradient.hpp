#pragma once

#include "robustsim/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

namespace robustsim {

/// s_j = counts_j / p_j - T. An unvisited zero-probability point scores -T.
inline std::vector<double> score_vector(std::span<const std::uint32_t> counts, std::span<const double> p, std::size_t T) {
    if (counts.size() != p.size()) throw std::invalid_argument("score_vector: size mismatch");
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total != T) throw std::invalid_argument("score_vector: counts do not sum to T");
    std::vector<double> s(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (counts[j] > 0 && !(p[j] > 0.0)) throw std::domain_error("score_vector: visited point has zero probability");
        s[j] = (counts[j] > 0 ? double(counts[j]) / p[j] : 0.0) - double(T);
    }
    return s;
}

/// Per-sample variance bound M^2 T (1 - p_j) / p_j for h s_j with |h| <= M.
inline double variance_bound(double M, double T, double pj) {
    if (!(pj > 0.0)) throw std::domain_error("variance_bound: p_j must be positive");
    return M * M * T * (1.0 - pj) / pj;
}

struct GradientEstimate {
    std::vector<std::vector<double>> psi;     ///< per input model
    std::vector<std::vector<double>> std_err;  ///< per coordinate, sample sd / sqrt(R)
    std::vector<std::vector<double>> sample_var;  ///< per-sample variance of h s_j
    std::size_t R = 0;
    double payoff_mean = 0.0;
    double payoff_stderr = 0.0;

    std::vector<double> flat_psi() const {
        std::vector<double> out;
        for (const auto& v : psi) out.insert(out.end(), v.begin(), v.end());
        return out;
    }

    double psi_norm() const {
        double s = 0.0;
        for (const auto& v : psi)
            for (double x : v) s += x * x;
        return std::sqrt(s);
    }

    double std_err_norm() const {
        double s = 0.0;
        for (const auto& v : std_err)
            for (double x : v) s += x * x;
        return std::sqrt(s);
    }
};

struct EstimateOptions {
    unsigned threads = 1;
    std::size_t chunk_size = 256;
};

namespace detail {

struct ChunkSums {
    double h = 0.0, h2 = 0.0;
    std::vector<double> x, x2;  // flat over all coordinates
};

}  // namespace detail

/**
 * psi_hat_j^i = (1/R) sum_r h(X_r) s_j^i(X_r^i), all coordinates from the same R paths.
 *
 * Replications are grouped into fixed-size chunks; chunk c draws from the
 * substream stream/[c] and chunk sums are reduced in chunk order, so the
 * result depends only on (stream, R, chunk_size) and not on the thread count.
 * The score uses the actual number of draws of each path, which equals T^i for
 * fixed-length models.
 */
inline GradientEstimate estimate_psi(const SimulationModel& model, std::span<const DiscreteDistribution> p, std::size_t R,
                                     const RandomStream& stream, const EstimateOptions& opt = {}) {
    const std::size_t m = model.input_count();
    if (p.size() != m) throw std::invalid_argument("estimate_psi: wrong number of input distributions");
    if (R == 0) throw std::invalid_argument("estimate_psi: R must be positive");
    if (opt.chunk_size == 0) throw std::invalid_argument("estimate_psi: chunk_size must be positive");
    const auto sizes = model.grid_sizes();
    std::vector<std::size_t> offset(m + 1, 0);
    for (std::size_t i = 0; i < m; ++i) {
        if (p[i].size() != sizes[i]) throw std::invalid_argument("estimate_psi: distribution does not match model grid");
        offset[i + 1] = offset[i] + sizes[i];
    }
    const std::size_t N = offset[m];

    std::vector<DiscreteSampler> samplers;
    std::vector<double> inv_p(N, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        samplers.emplace_back(p[i]);
        for (std::size_t j = 0; j < sizes[i]; ++j) inv_p[offset[i] + j] = p[i][j] > 0.0 ? 1.0 / p[i][j] : 0.0;
    }

    const std::size_t n_chunks = (R + opt.chunk_size - 1) / opt.chunk_size;
    std::vector<detail::ChunkSums> chunks(n_chunks);

    auto run_chunk = [&](std::size_t c, ReplicationRecord& rec) {
        auto& cs = chunks[c];
        cs.x.assign(N, 0.0);
        cs.x2.assign(N, 0.0);
        auto eng = stream.derive(c).engine();
        const std::size_t begin = c * opt.chunk_size, end = std::min(R, begin + opt.chunk_size);
        for (std::size_t r = begin; r < end; ++r) {
            rec.reset();
            model.replicate(samplers, eng, rec);
            const double h = rec.payoff;
            cs.h += h;
            cs.h2 += h * h;
            for (std::size_t i = 0; i < m; ++i) {
                const double hT = h * double(rec.draws[i]);
                const auto& cnt = rec.counts[i];
                for (std::size_t j = 0; j < sizes[i]; ++j) {
                    const std::size_t k = offset[i] + j;
                    if (cnt[j] > 0 && inv_p[k] == 0.0) throw std::domain_error("estimate_psi: visited point has zero probability");
                    const double x = h * double(cnt[j]) * inv_p[k] - hT;
                    cs.x[k] += x;
                    cs.x2[k] += x * x;
                }
            }
        }
    };

    const unsigned nthreads = std::max(1u, std::min<unsigned>(opt.threads, unsigned(n_chunks)));
    if (nthreads == 1) {
        ReplicationRecord rec(sizes);
        for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c, rec);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(nthreads);
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    ReplicationRecord rec(sizes);
                    for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) run_chunk(c, rec);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    double sh = 0.0, sh2 = 0.0;
    std::vector<double> sx(N, 0.0), sx2(N, 0.0);
    for (const auto& cs : chunks) {
        sh += cs.h;
        sh2 += cs.h2;
        for (std::size_t k = 0; k < N; ++k) {
            sx[k] += cs.x[k];
            sx2[k] += cs.x2[k];
        }
    }

    const double Rd = double(R);
    auto variance = [&](double s, double s2) {
        if (R < 2) return 0.0;
        return std::max(0.0, (s2 - s * s / Rd) / (Rd - 1.0));
    };

    GradientEstimate out;
    out.R = R;
    out.payoff_mean = sh / Rd;
    out.payoff_stderr = std::sqrt(variance(sh, sh2) / Rd);
    out.psi.resize(m);
    out.std_err.resize(m);
    out.sample_var.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        out.psi[i].resize(sizes[i]);
        out.std_err[i].resize(sizes[i]);
        out.sample_var[i].resize(sizes[i]);
        for (std::size_t j = 0; j < sizes[i]; ++j) {
            const std::size_t k = offset[i] + j;
            out.psi[i][j] = sx[k] / Rd;
            out.sample_var[i][j] = variance(sx[k], sx2[k]);
            out.std_err[i][j] = std::sqrt(out.sample_var[i][j] / Rd);
        }
    }
    return out;
}

struct PayoffEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::size_t R = 0;
};

/// Plain payoff mean over R replications, chunked and reduced like estimate_psi.
/// Counts are not reset between replications, so large grids stay cheap.
inline PayoffEstimate estimate_payoff(const SimulationModel& model, std::span<const DiscreteDistribution> p, std::size_t R,
                                      const RandomStream& stream, std::size_t chunk_size = 256) {
    if (R == 0 || chunk_size == 0) throw std::invalid_argument("estimate_payoff: R and chunk_size must be positive");
    if (p.size() != model.input_count()) throw std::invalid_argument("estimate_payoff: wrong number of input distributions");
    std::vector<DiscreteSampler> samplers;
    for (const auto& d : p) samplers.emplace_back(d);
    const auto sizes = model.grid_sizes();
    const std::size_t n_chunks = (R + chunk_size - 1) / chunk_size;
    double sh = 0.0, sh2 = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        ReplicationRecord rec(sizes);
        auto eng = stream.derive(c).engine();
        double ch = 0.0, ch2 = 0.0;
        for (std::size_t r = c * chunk_size; r < std::min(R, (c + 1) * chunk_size); ++r) {
            model.replicate(samplers, eng, rec);
            ch += rec.payoff;
            ch2 += rec.payoff * rec.payoff;
        }
        sh += ch;
        sh2 += ch2;
    }
    const double Rd = double(R);
    PayoffEstimate out{sh / Rd, 0.0, R};
    if (R > 1) out.std_err = std::sqrt(std::max(0.0, (sh2 - sh * sh / Rd) / (Rd - 1.0)) / Rd);
    return out;
}

}  // namespace robustsim
