#pragma once

#include "robustsim/io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace robustsim::presets {

using io::json;

namespace detail {

inline json exponential(double rate) { return {{"type", "exponential"}, {"rate", rate}}; }
inline json lognormal(double mean, double sd) { return {{"type", "lognormal"}, {"mean", mean}, {"sd", sd}}; }
inline json product(json a, json b) { return {{"type", "product"}, {"marginals", json::array({std::move(a), std::move(b)})}}; }

inline const std::vector<double>& sec71_service_rates() {
    static const std::vector<double> r{2.25, 2.0, 1.75};
    return r;
}

inline json sec71(const std::string& disc, int n, int M) {
    json inputs = json::array(), truth = json::array();
    for (double rate : sec71_service_rates()) {
        const json t = product(exponential(0.5), exponential(rate));
        const json prop = disc == "lognormal" ? product(lognormal(1.0, 1.0), lognormal(1.0, 1.0)) : t;
        inputs.push_back({{"support", {{"type", "sampled"}, {"n", n}, {"proposal", prop}}},
                          {"set", {{"type", "moment"}, {"calibrate", {{"M", M}, {"alpha", 0.05}, {"powers", {1, 2}}}}}}});
        truth.push_back(t);
    }
    const std::string name = "sec71-" + disc + "-n" + std::to_string(n) + "-M" + std::to_string(M);
    return {{"name", name},
            {"description", "three-class M/G/1 under the c-mu rule; moment sets calibrated from M true samples; support of size n sampled from the " +
                                disc + " proposal"},
            {"seed", 7100 + n + M},
            {"model", {{"type", "multiclass"}, {"T", 500}, {"costs", {1.0, 1.0, 1.0}}}},
            {"inputs", inputs},
            {"fwsa", {{"a", 1.5}, {"b", 10}, {"beta", 1.1}, {"W_max", 200000}, {"sense", "both"}, {"initial", {{"type", "center"}}}}},
            {"truth", {{"inputs", truth}, {"replications", 4000}, {"sample_size", 100000}}},
            {"output_dir", "out/" + name}};
}

inline json sec72(const std::string& sense) {
    const json baseline = {{"type", "beta_mixture"},
                           {"components", json::array({{{"weight", 0.3}, {"a", 2.0}, {"b", 6.0}}, {{"weight", 0.7}, {"a", 6.0}, {"b", 2.0}}})}};
    const std::string name = "sec72-" + sense;
    return {{"name", name},
            {"description", "M/G/1 with Exp(1) arrivals, T = 500, KL ball of radius 0.025 around a discretized beta mixture on y_j = (j+1)/n, n = 100"},
            {"seed", 7200},
            {"model", {{"type", "mg1"}, {"lambda", 1.0}, {"T", 500}}},
            {"inputs", json::array({{{"support", {{"type", "grid"}, {"n", 100}, {"convention", "shifted"}}},
                                     {"set", {{"type", "kl"}, {"eta", 0.025}, {"baseline", baseline}}}}})},
            {"fwsa", {{"a", 1.5}, {"b", 10}, {"beta", 2.75}, {"W_max", 5000000}, {"sense", sense}, {"initial", {{"type", "center"}}}}},
            {"oracle", {{"step_rule", "line_search"}, {"gap_tol", 1e-6}, {"max_iterations", 10000}}},
            {"output_dir", "out/" + name}};
}

inline json toy() {
    return {{"name", "toy-gradient-check"},
            {"description", "identity payoff h(X) = X on five points, modified chi2 ball around uniform; the exact bounds are the linear-objective optima"},
            {"seed", 11},
            {"model", {{"type", "toy-analytic"}}},
            {"inputs", json::array({{{"support", {{"type", "points"}, {"points", {0.0, 0.25, 0.5, 0.75, 1.0}}}},
                                     {"set", {{"type", "chi2"}, {"eta", 0.05}, {"baseline", {{"type", "uniform"}}}}}}})},
            {"fwsa", {{"a", 1.5}, {"b", 200}, {"beta", 1.1}, {"W_max", 200000}, {"sense", "both"}, {"initial", {{"type", "center"}}}}},
            {"oracle", {{"step_rule", "line_search"}, {"gap_tol", 1e-9}, {"max_iterations", 1000}}},
            {"output_dir", "out/toy-gradient-check"}};
}

}  // namespace detail

inline std::vector<std::string> names() {
    std::vector<std::string> out;
    for (const char* d : {"lognormal", "exponential"})
        for (int n : {50, 100, 250})
            for (int M : {50, 100, 200, 500}) out.push_back("sec71-" + std::string(d) + "-n" + std::to_string(n) + "-M" + std::to_string(M));
    out.push_back("sec72-min");
    out.push_back("sec72-max");
    out.push_back("toy-gradient-check");
    return out;
}

inline std::optional<json> get(const std::string& name) {
    if (name == "sec72-min") return detail::sec72("min");
    if (name == "sec72-max") return detail::sec72("max");
    if (name == "toy-gradient-check") return detail::toy();
    for (const char* d : {"lognormal", "exponential"})
        for (int n : {50, 100, 250})
            for (int M : {50, 100, 200, 500})
                if (name == "sec71-" + std::string(d) + "-n" + std::to_string(n) + "-M" + std::to_string(M)) return detail::sec71(d, n, M);
    return std::nullopt;
}

}  // namespace robustsim::presets
