#pragma once

#include "robustsim/fwsa.hpp"
#include "robustsim/random.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#ifndef ROBUSTSIM_VERSION
#define ROBUSTSIM_VERSION "0.1.0"
#endif

namespace robustsim::io {

using json = nlohmann::json;

inline constexpr const char* kToolName = "robustsim";
inline constexpr const char* kToolVersion = ROBUSTSIM_VERSION;

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[std::size_t(i)] = digits[v & 0xf];
    return out;
}

/// Hash of the canonical (key-sorted, compact) config with execution-only keys removed.
inline std::string config_hash(json cfg) {
    if (cfg.is_object()) {
        cfg.erase("output_dir");
        if (cfg.contains("fwsa") && cfg["fwsa"].is_object()) cfg["fwsa"].erase("threads");
    }
    return hex64(fnv1a64(cfg.dump()));
}

struct Provenance {
    std::string config_hash;
    std::uint64_t master_seed = 0;

    json to_json() const {
        return {{"tool", kToolName}, {"version", kToolVersion}, {"config_hash", config_hash},
                {"master_seed", master_seed}, {"prng", kPrngId}};
    }
};

/// Non-finite doubles become null in JSON.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json distribution_json(const DiscreteDistribution& p) {
    const auto& g = p.grid();
    json points = json::array();
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (g.dim() == 1) {
            points.push_back(g.coord(j));
        } else {
            json pt = json::array();
            for (std::size_t c = 0; c < g.dim(); ++c) pt.push_back(g.coord(j, c));
            points.push_back(std::move(pt));
        }
    }
    json probs = json::array();
    for (std::size_t j = 0; j < p.size(); ++j) probs.push_back(p[j]);
    return {{"dim", g.dim()}, {"points", std::move(points)}, {"probs", std::move(probs)}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string trace_header(const RunTrace& trace) {
    std::string h = "k,W_k,Z_est,fw_gap,eps_k,R_k,term_flag";
    if (!trace.rows.empty()) {
        const auto& s = trace.rows.front().slacks;
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t l = 0; l < s[i].size(); ++l) h += ",slack_" + std::to_string(i) + "_" + std::to_string(l);
    }
    return h;
}

/**
 * Trace CSV: "# key=value" metadata lines, then the column header and one row
 * per iteration. Z_est reuses the gradient replications of the same iteration.
 */
inline std::string trace_csv(const RunTrace& trace, const Provenance& prov, const std::string& extra_meta = {}) {
    std::ostringstream os;
    os << "# tool=" << kToolName << " version=" << kToolVersion << "\n";
    os << "# config_hash=" << prov.config_hash << "\n";
    os << "# master_seed=" << prov.master_seed << "\n";
    os << "# prng=" << kPrngId << "\n";
    os << "# sense=" << to_string(trace.sense) << "\n";
    os << "# Z_est=payoff mean of the gradient replications at p_k\n";
    if (!extra_meta.empty()) os << extra_meta;
    os << trace_header(trace) << "\n";
    for (const auto& r : trace.rows) {
        os << r.k << ',' << r.W << ',' << format_double(r.Z_est) << ',' << format_double(r.fw_gap) << ','
           << format_double(r.eps) << ',' << r.R << ',' << int(r.term);
        for (const auto& s : r.slacks)
            for (double v : s) os << ',' << format_double(v);
        os << "\n";
    }
    return os.str();
}

}  // namespace robustsim::io
