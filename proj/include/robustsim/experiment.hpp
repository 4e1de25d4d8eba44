#pragma once

#include "robustsim/fwsa.hpp"
#include "robustsim/io.hpp"
#include "robustsim/models.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace robustsim {

using io::json;

/// Bad config: carries the JSON pointer of the offending field and its line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& msg, int line = 0)
        : std::runtime_error(compose(field, msg, line)), field_(field), line_(line) {}
    const std::string& field() const noexcept { return field_; }
    int line() const noexcept { return line_; }

private:
    static std::string compose(const std::string& field, const std::string& msg, int line) {
        std::string s = "config error";
        if (line > 0) s += " at line " + std::to_string(line);
        if (!field.empty()) s += " (" + field + ")";
        return s + ": " + msg;
    }
    std::string field_;
    int line_;
};

namespace detail {

/// Maps the JSON pointer of every value in a valid JSON text to its 1-based line.
class PointerLines {
public:
    PointerLines() = default;
    explicit PointerLines(const std::string& text) : t_(text) {
        std::size_t i = 0;
        try {
            value(i, "");
        } catch (...) {
            lines_.clear();
        }
    }
    /// Line of the pointer or of its nearest recorded ancestor.
    int line(std::string ptr) const {
        while (true) {
            if (auto it = lines_.find(ptr); it != lines_.end()) return it->second;
            if (ptr.empty()) return 0;
            ptr.erase(ptr.rfind('/'));
        }
    }

private:
    void ws(std::size_t& i) {
        while (i < t_.size() && std::isspace(static_cast<unsigned char>(t_[i]))) {
            if (t_[i] == '\n') ++cur_;
            ++i;
        }
    }
    std::string str(std::size_t& i) {
        std::string out;
        ++i;
        while (i < t_.size() && t_[i] != '"') {
            if (t_[i] == '\\') ++i;
            out += t_[i++];
        }
        ++i;
        return out;
    }
    static std::string escape(const std::string& k) {
        std::string o;
        for (char c : k) {
            if (c == '~') o += "~0";
            else if (c == '/') o += "~1";
            else o += c;
        }
        return o;
    }
    void value(std::size_t& i, const std::string& ptr) {
        ws(i);
        lines_[ptr] = cur_;
        if (i >= t_.size()) return;
        if (t_[i] == '{') {
            ++i;
            for (ws(i); i < t_.size() && t_[i] != '}';) {
                const std::string key = str(i);
                ws(i);
                ++i;  // ':'
                value(i, ptr + "/" + escape(key));
                ws(i);
                if (t_[i] == ',') ++i;
                ws(i);
            }
            ++i;
        } else if (t_[i] == '[') {
            ++i;
            std::size_t idx = 0;
            for (ws(i); i < t_.size() && t_[i] != ']';) {
                value(i, ptr + "/" + std::to_string(idx++));
                ws(i);
                if (t_[i] == ',') ++i;
                ws(i);
            }
            ++i;
        } else if (t_[i] == '"') {
            str(i);
        } else {
            while (i < t_.size() && t_[i] != ',' && t_[i] != '}' && t_[i] != ']' && !std::isspace(static_cast<unsigned char>(t_[i]))) ++i;
        }
    }

    std::string t_;
    int cur_ = 1;
    std::map<std::string, int> lines_;
};

/// Typed access to a JSON config with pointer-tagged diagnostics.
class Reader {
public:
    Reader(const json& j, std::string ptr, const PointerLines* lines) : j_(&j), ptr_(std::move(ptr)), lines_(lines) {}

    const json& raw() const { return *j_; }
    const std::string& ptr() const { return ptr_; }

    [[noreturn]] void fail(const std::string& msg, const std::string& sub = {}) const {
        const std::string p = sub.empty() ? ptr_ : ptr_ + "/" + sub;
        throw ConfigError(p.empty() ? "/" : p, msg, lines_ ? lines_->line(p) : 0);
    }

    bool has(const std::string& k) const { return j_->is_object() && j_->contains(k) && !(*j_)[k].is_null(); }

    Reader at(const std::string& k) const {
        if (!j_->is_object()) fail("expected an object");
        if (!has(k)) fail("missing required field \"" + k + "\"");
        return Reader((*j_)[k], ptr_ + "/" + k, lines_);
    }

    Reader at(std::size_t idx) const { return Reader((*j_)[idx], ptr_ + "/" + std::to_string(idx), lines_); }

    std::size_t size() const {
        if (!j_->is_array()) fail("expected an array");
        return j_->size();
    }

    void allow(std::initializer_list<const char*> keys) const {
        if (!j_->is_object()) fail("expected an object");
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!ok.count(it.key())) fail("unknown field \"" + it.key() + "\"", it.key());
    }

    double num() const {
        if (!j_->is_number()) fail("expected a number");
        return j_->get<double>();
    }
    double num(const std::string& k) const { return at(k).num(); }
    double num(const std::string& k, double dflt) const { return has(k) ? num(k) : dflt; }

    std::uint64_t count() const {
        if (j_->is_number_unsigned()) return j_->get<std::uint64_t>();
        if (j_->is_number_integer()) {
            if (j_->get<std::int64_t>() < 0) fail("expected a nonnegative integer");
            return j_->get<std::uint64_t>();
        }
        if (j_->is_number_float()) {
            const double v = j_->get<double>();
            if (v >= 0.0 && v == std::floor(v) && v < 1.8e19) return std::uint64_t(v);
        }
        fail("expected a nonnegative integer");
    }
    std::uint64_t count(const std::string& k) const { return at(k).count(); }
    std::uint64_t count(const std::string& k, std::uint64_t dflt) const { return has(k) ? count(k) : dflt; }

    std::string str() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }
    std::string str(const std::string& k) const { return at(k).str(); }
    std::string str(const std::string& k, const std::string& dflt) const { return has(k) ? str(k) : dflt; }

    std::vector<double> nums() const {
        std::vector<double> v;
        for (std::size_t i = 0; i < size(); ++i) v.push_back(at(i).num());
        return v;
    }

private:
    const json* j_;
    std::string ptr_;
    const PointerLines* lines_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// specs

/// A continuous law used for supports, calibration data and truth.
struct Law {
    enum class Kind { exponential, lognormal, constant, product };
    Kind kind = Kind::exponential;
    double rate = 1.0;
    double mean = 1.0, sd = 1.0;
    double value = 0.0;
    std::vector<Law> marginals;

    std::size_t dim() const { return kind == Kind::product ? marginals.size() : 1; }

    PointSampler sampler() const {
        switch (kind) {
            case Kind::exponential: return samplers::exponential(rate);
            case Kind::lognormal: return samplers::lognormal(LognormalParams::from_moments(mean, sd));
            case Kind::constant: return samplers::constant({value});
            case Kind::product: {
                std::vector<PointSampler> m;
                for (const auto& l : marginals) m.push_back(l.sampler());
                return samplers::product(std::move(m));
            }
        }
        throw std::logic_error("Law::sampler");
    }

    /// Density at x; products multiply marginal densities. Constants have none.
    bool has_pdf() const {
        if (kind == Kind::constant) return false;
        if (kind == Kind::product)
            return std::all_of(marginals.begin(), marginals.end(), [](const Law& l) { return l.has_pdf(); });
        return true;
    }

    double pdf(PointView x) const {
        switch (kind) {
            case Kind::exponential: return x[0] < 0.0 ? 0.0 : rate * std::exp(-rate * x[0]);
            case Kind::lognormal: return LognormalParams::from_moments(mean, sd).pdf(x[0]);
            case Kind::constant: throw std::logic_error("Law::pdf: constant law has no density");
            case Kind::product: {
                double d = 1.0;
                for (std::size_t c = 0; c < marginals.size(); ++c) d *= marginals[c].pdf(x.subspan(c, 1));
                return d;
            }
        }
        return 0.0;
    }

    /// E[X_coord^power].
    double raw_moment(std::size_t coord, int power) const {
        switch (kind) {
            case Kind::exponential: return std::tgamma(power + 1.0) / std::pow(rate, power);
            case Kind::lognormal: {
                const auto p = LognormalParams::from_moments(mean, sd);
                return std::exp(power * p.mu + 0.5 * power * power * p.sigma * p.sigma);
            }
            case Kind::constant: return std::pow(value, power);
            case Kind::product: return marginals.at(coord).raw_moment(0, power);
        }
        return 0.0;
    }
};

struct SupportSpec {
    enum class Kind { grid, sampled, points };
    Kind kind = Kind::grid;
    std::size_t n = 0;
    GridConvention convention = GridConvention::shifted;
    Law proposal;
    std::vector<Point> points;
};

struct BaselineSpec {
    enum class Kind { uniform, beta_mixture, weights, law };
    Kind kind = Kind::uniform;
    std::vector<BetaComponent> components;
    std::vector<double> weights;
    Law law;
};

struct MomentSpec {
    std::size_t coord = 0;
    int power = 1;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
};

struct CalibrationSpec {
    std::size_t M = 100;
    double alpha = 0.05;
    std::vector<int> powers{1, 2};
    std::optional<Law> source;  ///< defaults to the truth law of the input
};

struct SetSpec {
    enum class Kind { kl, chi2, ks_band, moment };
    Kind kind = Kind::kl;
    double eta = 0.0;
    BaselineSpec baseline;
    std::vector<MomentSpec> moments;
    std::optional<CalibrationSpec> calibrate;
};

struct InputSpec {
    SupportSpec support;
    SetSpec set;
};

struct ModelSpec {
    enum class Kind { mg1, multiclass, toy };
    Kind kind = Kind::mg1;
    double lambda = 1.0;
    std::vector<std::size_t> T{500};
    std::vector<double> costs;
};

struct OracleSpec {
    bool enabled = true;
    StepRule step_rule = StepRule::line_search;
    double gap_tol = 1e-6;
    std::size_t max_iterations = 10000;
};

struct TruthSpec {
    std::vector<Law> inputs;
    std::size_t replications = 20000;
    std::size_t sample_size = 100000;  ///< size of the empirical grid standing in for each true law
};

struct ExperimentConfig {
    json raw;
    std::string name;
    std::uint64_t seed = 0;
    ModelSpec model;
    std::vector<InputSpec> inputs;
    FwsaConfig fwsa;
    std::string sense = "both";
    std::vector<std::uint64_t> multistart_seeds;
    OracleSpec oracle;
    std::optional<TruthSpec> truth;
    std::string output_dir = "out";

    std::string hash() const { return io::config_hash(raw); }
};

namespace detail {

inline Law parse_law(const Reader& r) {
    Law l;
    const auto type = r.str("type");
    if (type == "exponential") {
        r.allow({"type", "rate"});
        l.kind = Law::Kind::exponential;
        l.rate = r.num("rate");
        if (!(l.rate > 0.0)) r.fail("rate must be positive", "rate");
    } else if (type == "lognormal") {
        r.allow({"type", "mean", "sd"});
        l.kind = Law::Kind::lognormal;
        l.mean = r.num("mean");
        l.sd = r.num("sd");
        if (!(l.mean > 0.0) || !(l.sd > 0.0)) r.fail("mean and sd must be positive");
    } else if (type == "constant") {
        r.allow({"type", "value"});
        l.kind = Law::Kind::constant;
        l.value = r.num("value");
    } else if (type == "product") {
        r.allow({"type", "marginals"});
        l.kind = Law::Kind::product;
        const auto m = r.at("marginals");
        if (m.size() < 1) m.fail("need at least one marginal");
        for (std::size_t i = 0; i < m.size(); ++i) {
            l.marginals.push_back(parse_law(m.at(i)));
            if (l.marginals.back().kind == Law::Kind::product) m.at(i).fail("nested products are not supported");
        }
    } else {
        r.fail("unknown law \"" + type + "\" (expected exponential, lognormal, constant or product)", "type");
    }
    return l;
}

inline SupportSpec parse_support(const Reader& r) {
    SupportSpec s;
    const auto type = r.str("type");
    if (type == "grid") {
        r.allow({"type", "n", "convention"});
        s.kind = SupportSpec::Kind::grid;
        s.n = r.count("n");
        const auto conv = r.str("convention", "shifted");
        if (conv == "shifted") s.convention = GridConvention::shifted;
        else if (conv == "unit") s.convention = GridConvention::unit_interval;
        else r.fail("convention must be \"shifted\" or \"unit\"", "convention");
    } else if (type == "sampled") {
        r.allow({"type", "n", "proposal"});
        s.kind = SupportSpec::Kind::sampled;
        s.n = r.count("n");
        s.proposal = parse_law(r.at("proposal"));
    } else if (type == "points") {
        r.allow({"type", "points"});
        s.kind = SupportSpec::Kind::points;
        const auto pts = r.at("points");
        for (std::size_t j = 0; j < pts.size(); ++j) {
            const auto pj = pts.at(j);
            if (pj.raw().is_number()) s.points.push_back({pj.num()});
            else s.points.push_back(pj.nums());
        }
        s.n = s.points.size();
    } else {
        r.fail("unknown support type \"" + type + "\" (expected grid, sampled or points)", "type");
    }
    if (s.n < 2) r.fail("support needs at least 2 points");
    return s;
}

inline BaselineSpec parse_baseline(const Reader& r) {
    BaselineSpec b;
    const auto type = r.str("type");
    if (type == "uniform") {
        r.allow({"type"});
        b.kind = BaselineSpec::Kind::uniform;
    } else if (type == "beta_mixture") {
        r.allow({"type", "components"});
        b.kind = BaselineSpec::Kind::beta_mixture;
        const auto c = r.at("components");
        for (std::size_t i = 0; i < c.size(); ++i) {
            const auto ci = c.at(i);
            ci.allow({"weight", "a", "b"});
            BetaComponent bc{ci.num("weight"), ci.num("a"), ci.num("b")};
            if (!(bc.weight >= 0.0) || !(bc.a > 0.0) || !(bc.b > 0.0)) ci.fail("need weight >= 0 and a, b > 0");
            b.components.push_back(bc);
        }
    } else if (type == "weights") {
        r.allow({"type", "probs"});
        b.kind = BaselineSpec::Kind::weights;
        b.weights = r.at("probs").nums();
    } else if (type == "law") {
        r.allow({"type", "law"});
        b.kind = BaselineSpec::Kind::law;
        b.law = parse_law(r.at("law"));
        if (!b.law.has_pdf()) r.fail("baseline law needs a density", "law");
    } else {
        r.fail("unknown baseline \"" + type + "\" (expected uniform, beta_mixture, weights or law)", "type");
    }
    return b;
}

inline SetSpec parse_set(const Reader& r) {
    SetSpec s;
    const auto type = r.str("type");
    if (type == "kl" || type == "chi2" || type == "ks-band") {
        r.allow({"type", "eta", "baseline"});
        s.kind = type == "kl" ? SetSpec::Kind::kl : type == "chi2" ? SetSpec::Kind::chi2 : SetSpec::Kind::ks_band;
        s.eta = r.num("eta");
        if (!(s.eta >= 0.0) || !std::isfinite(s.eta)) r.fail("eta must be finite and >= 0", "eta");
        s.baseline = r.has("baseline") ? parse_baseline(r.at("baseline")) : BaselineSpec{};
    } else if (type == "moment") {
        r.allow({"type", "constraints", "calibrate"});
        s.kind = SetSpec::Kind::moment;
        if (r.has("constraints")) {
            const auto c = r.at("constraints");
            for (std::size_t i = 0; i < c.size(); ++i) {
                const auto ci = c.at(i);
                ci.allow({"coord", "power", "lower", "upper"});
                MomentSpec m;
                m.coord = ci.count("coord", 0);
                m.power = int(ci.count("power", 1));
                m.lower = ci.num("lower", m.lower);
                m.upper = ci.num("upper", m.upper);
                if (m.power < 1) ci.fail("power must be >= 1", "power");
                if (m.lower > m.upper) ci.fail("lower exceeds upper");
                s.moments.push_back(m);
            }
        }
        if (r.has("calibrate")) {
            const auto c = r.at("calibrate");
            c.allow({"M", "alpha", "powers", "source"});
            CalibrationSpec cal;
            cal.M = c.count("M", cal.M);
            cal.alpha = c.num("alpha", cal.alpha);
            if (cal.M < 2) c.fail("M must be >= 2", "M");
            if (!(cal.alpha > 0.0 && cal.alpha < 1.0)) c.fail("alpha must lie in (0,1)", "alpha");
            if (c.has("powers")) {
                cal.powers.clear();
                const auto pw = c.at("powers");
                for (std::size_t i = 0; i < pw.size(); ++i) {
                    const auto v = pw.at(i).count();
                    if (v < 1) pw.at(i).fail("power must be >= 1");
                    cal.powers.push_back(int(v));
                }
            }
            if (c.has("source")) cal.source = parse_law(c.at("source"));
            s.calibrate = cal;
        }
        if (s.moments.empty() && !s.calibrate) r.fail("moment set needs \"constraints\" or \"calibrate\"");
    } else {
        r.fail("unknown set type \"" + type + "\" (expected kl, chi2, ks-band or moment)", "type");
    }
    return s;
}

inline std::vector<std::size_t> parse_sizes(const Reader& r, std::size_t m) {
    if (r.raw().is_array()) {
        std::vector<std::size_t> v;
        for (std::size_t i = 0; i < r.size(); ++i) v.push_back(r.at(i).count());
        if (v.size() != m) r.fail("need one value per input model");
        return v;
    }
    return std::vector<std::size_t>(m, r.count());
}

}  // namespace detail

/// Parses and validates a config text. Throws ConfigError with field and line on any problem.
inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    try {
        cfg.raw = json::parse(text);
    } catch (const json::parse_error& e) {
        int line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError("", std::string("invalid JSON: ") + e.what(), line);
    }
    const detail::PointerLines lines(text);
    const detail::Reader root(cfg.raw, "", &lines);
    root.allow({"name", "seed", "model", "inputs", "fwsa", "oracle", "truth", "output_dir", "description"});
    cfg.name = root.str("name", "experiment");
    cfg.seed = root.count("seed", 0);
    cfg.output_dir = root.str("output_dir", "out");

    const auto in = root.at("inputs");
    if (in.size() < 1) in.fail("need at least one input model");
    for (std::size_t i = 0; i < in.size(); ++i) {
        const auto r = in.at(i);
        r.allow({"support", "set"});
        cfg.inputs.push_back({detail::parse_support(r.at("support")), detail::parse_set(r.at("set"))});
    }
    const std::size_t m = cfg.inputs.size();

    const auto mr = root.at("model");
    const auto mtype = mr.str("type");
    if (mtype == "mg1") {
        mr.allow({"type", "lambda", "T"});
        cfg.model.kind = ModelSpec::Kind::mg1;
        cfg.model.lambda = mr.num("lambda", 1.0);
        if (!(cfg.model.lambda > 0.0)) mr.fail("lambda must be positive", "lambda");
        cfg.model.T = {std::size_t(mr.count("T", 500))};
        if (m != 1) in.fail("mg1 takes exactly one input model");
    } else if (mtype == "multiclass") {
        mr.allow({"type", "T", "costs"});
        cfg.model.kind = ModelSpec::Kind::multiclass;
        cfg.model.T = mr.has("T") ? detail::parse_sizes(mr.at("T"), m) : std::vector<std::size_t>(m, 500);
        cfg.model.costs = mr.has("costs") ? mr.at("costs").nums() : std::vector<double>(m, 1.0);
        if (cfg.model.costs.size() != m) mr.fail("need one cost per input model", "costs");
        for (double c : cfg.model.costs)
            if (!(c > 0.0)) mr.fail("costs must be positive", "costs");
    } else if (mtype == "toy-analytic") {
        mr.allow({"type"});
        cfg.model.kind = ModelSpec::Kind::toy;
        cfg.model.T = {1};
        if (m != 1) in.fail("toy-analytic takes exactly one input model");
    } else {
        mr.fail("unknown model \"" + mtype + "\" (expected mg1, multiclass or toy-analytic)", "type");
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto& s = cfg.inputs[i].support;
        const std::size_t dim = s.kind == SupportSpec::Kind::grid ? 1
                                : s.kind == SupportSpec::Kind::sampled ? s.proposal.dim()
                                                                       : s.points.front().size();
        const std::size_t want = cfg.model.kind == ModelSpec::Kind::multiclass ? 2 : 1;
        if (dim != want)
            in.at(i).fail("support dimension " + std::to_string(dim) + " does not match the model (" + std::to_string(want) + ")", "support");
        for (const auto& mo : cfg.inputs[i].set.moments)
            if (mo.coord >= dim) in.at(i).fail("moment coord out of range", "set");
    }

    if (root.has("fwsa")) {
        const auto f = root.at("fwsa");
        f.allow({"a", "b", "beta", "W_max", "rel_obj_tol", "window", "grad_norm_tol", "max_iterations", "sense", "initial",
                 "multistart_seeds", "threads", "chunk_size", "kl_solver"});
        auto& c = cfg.fwsa;
        c.a = f.num("a", c.a);
        c.b = f.num("b", c.b);
        c.beta = f.num("beta", c.beta);
        c.W_max = f.count("W_max", c.W_max);
        c.rel_obj_tol = f.num("rel_obj_tol", c.rel_obj_tol);
        c.window = f.count("window", c.window);
        c.grad_norm_tol = f.num("grad_norm_tol", c.grad_norm_tol);
        c.max_iterations = f.count("max_iterations", c.max_iterations);
        c.estimate.threads = unsigned(f.count("threads", 1));
        c.estimate.chunk_size = f.count("chunk_size", c.estimate.chunk_size);
        if (c.estimate.chunk_size == 0) f.fail("chunk_size must be positive", "chunk_size");
        const auto kls = f.str("kl_solver", "tilt");
        if (kls == "tilt") c.solver.kl_via_generic_dual = false;
        else if (kls == "dual") c.solver.kl_via_generic_dual = true;
        else f.fail("kl_solver must be \"tilt\" or \"dual\"", "kl_solver");
        cfg.sense = f.str("sense", "both");
        if (cfg.sense != "min" && cfg.sense != "max" && cfg.sense != "both") f.fail("sense must be min, max or both", "sense");
        if (f.has("initial")) {
            const auto ir = f.at("initial");
            ir.allow({"type", "weight", "probs"});
            const auto t = ir.str("type");
            if (t == "center") c.initial.kind = InitialKind::center;
            else if (t == "uniform") c.initial.kind = InitialKind::uniform;
            else if (t == "random") c.initial.kind = InitialKind::random;
            else if (t == "explicit") c.initial.kind = InitialKind::explicit_points;
            else ir.fail("initial type must be center, uniform, random or explicit", "type");
            c.initial.random_weight = ir.num("weight", c.initial.random_weight);
            if (!(c.initial.random_weight >= 0.0 && c.initial.random_weight < 1.0)) ir.fail("weight must lie in [0,1)", "weight");
            if (c.initial.kind == InitialKind::explicit_points) {
                const auto pr = ir.at("probs");
                if (pr.size() != m) pr.fail("need one distribution per input model");
                for (std::size_t i = 0; i < m; ++i) {
                    c.initial.explicit_probs.push_back(pr.at(i).nums());
                    if (c.initial.explicit_probs.back().size() != cfg.inputs[i].support.n) pr.at(i).fail("length differs from the support size");
                }
            }
        }
        if (f.has("multistart_seeds")) {
            const auto s = f.at("multistart_seeds");
            for (std::size_t i = 0; i < s.size(); ++i) cfg.multistart_seeds.push_back(s.at(i).count());
        }
        try {
            validate_schedule(c);
        } catch (const std::invalid_argument& e) {
            f.fail(e.what());
        }
    }

    if (root.has("oracle")) {
        const auto o = root.at("oracle");
        o.allow({"enabled", "step_rule", "gap_tol", "max_iterations"});
        if (o.has("enabled")) {
            if (!o.at("enabled").raw().is_boolean()) o.fail("expected a boolean", "enabled");
            cfg.oracle.enabled = o.at("enabled").raw().get<bool>();
        }
        const auto sr = o.str("step_rule", "line_search");
        if (sr == "line_search") cfg.oracle.step_rule = StepRule::line_search;
        else if (sr == "schedule") cfg.oracle.step_rule = StepRule::schedule;
        else o.fail("step_rule must be line_search or schedule", "step_rule");
        cfg.oracle.gap_tol = o.num("gap_tol", cfg.oracle.gap_tol);
        cfg.oracle.max_iterations = o.count("max_iterations", cfg.oracle.max_iterations);
        if (!(cfg.oracle.gap_tol >= 0.0)) o.fail("gap_tol must be >= 0", "gap_tol");
    }

    if (root.has("truth")) {
        const auto t = root.at("truth");
        t.allow({"inputs", "replications", "sample_size"});
        TruthSpec ts;
        const auto ti = t.at("inputs");
        if (ti.size() != m) ti.fail("need one true law per input model");
        for (std::size_t i = 0; i < m; ++i) {
            ts.inputs.push_back(detail::parse_law(ti.at(i)));
            if (ts.inputs.back().dim() != (cfg.model.kind == ModelSpec::Kind::multiclass ? 2u : 1u))
                ti.at(i).fail("true law dimension does not match the model");
        }
        ts.replications = t.count("replications", ts.replications);
        ts.sample_size = t.count("sample_size", ts.sample_size);
        if (ts.replications < 2 || ts.sample_size < 2) t.fail("replications and sample_size must be >= 2");
        cfg.truth = std::move(ts);
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto& cal = cfg.inputs[i].set.calibrate;
        if (cal && !cal->source && !cfg.truth)
            in.at(i).at("set").fail("calibration needs a \"source\" law or a top-level \"truth\"", "calibrate");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("", "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// building

struct CalibrationNote {
    std::size_t input = 0, coord = 0;
    int power = 1;
    MomentInterval interval;
    double true_moment = std::numeric_limits<double>::quiet_NaN();
};

struct BuiltInputs {
    std::vector<GridPtr> grids;
    std::vector<UncertaintySet> sets;
    std::vector<CalibrationNote> calibration;
};

/// Stream layout under the master seed: [0, i, 0] support of input i,
/// [0, i, 1] calibration data, [2, i] truth samples, [3] truth replications.
/// FWSA runs use RandomStream(run seed).derive(1 + sense index).
inline BuiltInputs build_inputs(const ExperimentConfig& cfg, std::uint64_t seed) {
    const RandomStream master(seed);
    BuiltInputs out;
    for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
        const auto& in = cfg.inputs[i];
        const std::string where = "/inputs/" + std::to_string(i);
        GridPtr grid;
        try {
            switch (in.support.kind) {
                case SupportSpec::Kind::grid: grid = make_grid(uniform_grid(in.support.n, in.support.convention)); break;
                case SupportSpec::Kind::sampled:
                    grid = make_grid(sample_support(in.support.proposal.sampler(), in.support.n, master.derive({0, i, 0})));
                    break;
                case SupportSpec::Kind::points: grid = make_grid(SupportGrid::from_points(in.support.points)); break;
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(where + "/support", e.what());
        }
        out.grids.push_back(grid);

        auto baseline = [&]() -> DiscreteDistribution {
            const auto& b = in.set.baseline;
            try {
                switch (b.kind) {
                    case BaselineSpec::Kind::uniform: return DiscreteDistribution::uniform(grid);
                    case BaselineSpec::Kind::beta_mixture:
                        return discretize_density([&](PointView y) { return beta_mixture_pdf(y[0], b.components); }, grid);
                    case BaselineSpec::Kind::weights:
                        if (b.weights.size() != grid->size()) throw std::invalid_argument("baseline length differs from the support size");
                        return DiscreteDistribution::from_weights(grid, b.weights);
                    case BaselineSpec::Kind::law:
                        return discretize_density([&](PointView y) { return b.law.pdf(y); }, grid);
                }
            } catch (const std::invalid_argument& e) {
                throw ConfigError(where + "/set/baseline", e.what());
            }
            throw std::logic_error("baseline");
        };

        switch (in.set.kind) {
            case SetSpec::Kind::kl: out.sets.emplace_back(PhiBall(baseline(), in.set.eta, Divergence::kl)); break;
            case SetSpec::Kind::chi2: out.sets.emplace_back(PhiBall(baseline(), in.set.eta, Divergence::modified_chi2)); break;
            case SetSpec::Kind::ks_band: {
                const auto pb = baseline();
                std::vector<std::pair<double, double>> yp;
                for (std::size_t j = 0; j < grid->size(); ++j) yp.emplace_back(grid->coord(j), pb[j]);
                std::sort(yp.begin(), yp.end());
                std::vector<KsAnchor> anchors;
                double cum = 0.0;
                for (std::size_t j = 0; j < yp.size();) {
                    const double y = yp[j].first;
                    const double left = cum;
                    for (; j < yp.size() && yp[j].first == y; ++j) cum += yp[j].second;
                    anchors.push_back({y, left, std::min(cum, 1.0)});
                }
                out.sets.emplace_back(build_ks_band_momentset(anchors, in.set.eta, grid));
                break;
            }
            case SetSpec::Kind::moment: {
                MomentSet ms(grid);
                for (const auto& mo : in.set.moments) {
                    const auto c = mo.coord;
                    const int pw = mo.power;
                    ms.add([c, pw](PointView y) { return std::pow(y[c], pw); }, mo.lower, mo.upper,
                           "E[y" + std::to_string(c) + "^" + std::to_string(pw) + "]");
                }
                if (in.set.calibrate) {
                    const auto& cal = *in.set.calibrate;
                    const Law& src = cal.source ? *cal.source : cfg.truth->inputs[i];
                    auto eng = master.derive({0, i, 1}).engine();
                    auto draw = src.sampler();
                    std::vector<Point> data;
                    for (std::size_t r = 0; r < cal.M; ++r) data.push_back(draw(eng));
                    for (std::size_t c = 0; c < grid->dim(); ++c) {
                        for (int pw : cal.powers) {
                            std::vector<double> v;
                            for (const auto& x : data) v.push_back(std::pow(x[c], pw));
                            const auto iv = calibrate_moment_bounds(v, cal.alpha);
                            ms.add([c, pw](PointView y) { return std::pow(y[c], pw); }, iv.lower, iv.upper,
                                   "E[y" + std::to_string(c) + "^" + std::to_string(pw) + "]");
                            CalibrationNote note{i, c, pw, iv};
                            if (cfg.truth) note.true_moment = cfg.truth->inputs[i].raw_moment(c, pw);
                            out.calibration.push_back(note);
                        }
                    }
                }
                out.sets.emplace_back(std::move(ms));
                break;
            }
        }
    }
    return out;
}

/// The simulation model; a multiclass priority order is fixed by c mu at `initial`.
inline std::unique_ptr<SimulationModel> make_model(const ExperimentConfig& cfg, const std::vector<GridPtr>& grids,
                                                   std::span<const DiscreteDistribution> initial) {
    switch (cfg.model.kind) {
        case ModelSpec::Kind::mg1: return std::make_unique<Mg1Model>(Mg1Config{cfg.model.lambda, grids[0], cfg.model.T[0]});
        case ModelSpec::Kind::toy: return std::make_unique<IdentityPayoffModel>(grids[0]);
        case ModelSpec::Kind::multiclass: {
            MulticlassConfig mc{grids, cfg.model.T, cfg.model.costs, {}};
            return std::make_unique<MulticlassModel>(MulticlassModel::with_cmu_priority(std::move(mc), initial));
        }
    }
    throw std::logic_error("make_model");
}

/// Exact objective used by the oracle: P-K for mg1, the mean for the toy model.
inline std::unique_ptr<ExactGradientModel> make_exact_model(const ExperimentConfig& cfg, const std::vector<GridPtr>& grids) {
    if (cfg.model.kind == ModelSpec::Kind::mg1) return std::make_unique<SteadyStateMg1>(cfg.model.lambda);
    if (cfg.model.kind == ModelSpec::Kind::toy) return std::make_unique<LinearObjective>(std::vector<std::vector<double>>{grids[0]->coords()});
    return nullptr;
}

// ---------------------------------------------------------------------------
// commands

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> sense;
    std::optional<unsigned> threads;
};

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config = 2, exit_solver = 3 };

struct OracleResult {
    Sense sense;
    RunTrace trace;
    double baseline_value = 0.0;
};

inline std::vector<Sense> senses_of(const std::string& s) {
    if (s == "min") return {Sense::minimize};
    if (s == "max") return {Sense::maximize};
    return {Sense::minimize, Sense::maximize};
}

inline OracleResult run_oracle(const ExperimentConfig& cfg, const BuiltInputs& built, Sense sense) {
    auto exact = make_exact_model(cfg, built.grids);
    if (!exact) throw ConfigError("/model/type", "the oracle needs an mg1 or toy-analytic model");
    std::vector<DiscreteDistribution> start;
    for (const auto& s : built.sets) start.push_back(set_center(s));
    OracleResult res{sense, {}, exact->value(start)};
    if (!std::isfinite(res.baseline_value))
        throw ConfigError("/inputs/0/set", "unstable queue at the set center (rho >= 1); the steady-state oracle is undefined");
    FwsaConfig oc = cfg.fwsa;
    oc.sense = sense;
    oc.step_rule = cfg.oracle.step_rule;
    oc.gap_tol = cfg.oracle.gap_tol;
    oc.max_iterations = cfg.oracle.max_iterations;
    oc.W_max = std::numeric_limits<std::uint64_t>::max();
    oc.rel_obj_tol = 0.0;
    oc.grad_norm_tol = 0.0;
    res.trace = fwsa_run_exact(*exact, built.sets, oc, std::move(start));
    return res;
}

inline json oracle_json(const OracleResult& r, const std::vector<UncertaintySet>& sets) {
    json d = json::array();
    json div = json::array();
    for (std::size_t i = 0; i < r.trace.final_p.size(); ++i) {
        d.push_back(io::distribution_json(r.trace.final_p[i]));
        if (auto b = std::get_if<PhiBall>(&sets[i])) div.push_back(io::number(phi_divergence(r.trace.final_p[i], *b)));
        else div.push_back(nullptr);
    }
    return {{"sense", to_string(r.sense)},
            {"Z_star", io::number(r.trace.final_objective())},
            {"baseline_value", io::number(r.baseline_value)},
            {"fw_gap", io::number(r.trace.last().fw_gap)},
            {"iterations", r.trace.rows.size()},
            {"termination", to_string(r.trace.termination)},
            {"divergence", div},
            {"distributions", d}};
}

namespace detail {

inline json calibration_json(const BuiltInputs& b) {
    json a = json::array();
    for (const auto& c : b.calibration)
        a.push_back({{"input", c.input}, {"coord", c.coord}, {"power", c.power}, {"lower", c.interval.lower},
                     {"upper", c.interval.upper}, {"estimate", c.interval.mean}, {"true_moment", io::number(c.true_moment)},
                     {"contains_truth", std::isfinite(c.true_moment) ? json(c.interval.lower <= c.true_moment && c.true_moment <= c.interval.upper) : json(nullptr)}});
    return a;
}

struct TruthEstimate {
    PayoffEstimate estimate;
    std::optional<bool> projected_feasible;
};

inline TruthEstimate estimate_truth(const ExperimentConfig& cfg, const BuiltInputs& built, std::uint64_t seed) {
    const auto& t = *cfg.truth;
    const RandomStream master(seed);
    std::vector<GridPtr> grids;
    std::vector<DiscreteDistribution> p;
    for (std::size_t i = 0; i < t.inputs.size(); ++i) {
        grids.push_back(make_grid(sample_support(t.inputs[i].sampler(), t.sample_size, master.derive({2, i}))));
        p.push_back(DiscreteDistribution::uniform(grids.back()));
    }
    // the c mu order comes from the true mean services
    auto model = make_model(cfg, grids, p);
    TruthEstimate out{estimate_payoff(*model, p, t.replications, master.derive(3)), std::nullopt};

    bool all = true, any = false;
    for (std::size_t i = 0; i < t.inputs.size(); ++i) {
        const auto& sup = cfg.inputs[i].support;
        if (sup.kind != SupportSpec::Kind::sampled || !sup.proposal.has_pdf() || !t.inputs[i].has_pdf()) continue;
        any = true;
        const auto& truth = t.inputs[i];
        const auto& prop = sup.proposal;
        try {
            auto proj = project_truth([&](PointView y) { return truth.pdf(y) / prop.pdf(y); }, built.grids[i]);
            all = all && is_feasible(proj, built.sets[i], 1e-9);
        } catch (const std::invalid_argument&) {
            all = false;
        }
    }
    if (any) out.projected_feasible = all;
    return out;
}

}  // namespace detail

/**
 * Executes the configured min and/or max runs and writes trace_<sense>.csv,
 * final_dist_<sense>_<i>.json (one per input model) and report.json into the
 * output directory. Extra multistart runs get a _start<r> suffix.
 */
inline int run_experiment(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
    const std::uint64_t seed = opt.seed.value_or(cfg.seed);
    const std::filesystem::path out = opt.out.value_or(cfg.output_dir);
    const std::string sense = opt.sense.value_or(cfg.sense);
    const io::Provenance prov{cfg.hash(), seed};
    FwsaConfig fc = cfg.fwsa;
    if (opt.threads) fc.estimate.threads = *opt.threads;

    const auto built = build_inputs(cfg, seed);
    std::vector<std::uint64_t> starts = cfg.multistart_seeds;
    if (starts.empty()) starts.push_back(seed);

    json report = prov.to_json();
    report["name"] = cfg.name;
    report["objective_estimate"] = "payoff mean of the gradient replications at the final iterate";
    report["warnings"] = validate_schedule(fc).warnings;
    report["calibration"] = detail::calibration_json(built);

    std::map<Sense, std::optional<double>> oracle_value;
    const bool want_oracle = cfg.oracle.enabled && make_exact_model(cfg, built.grids) != nullptr;
    if (want_oracle) {
        for (auto s : senses_of(sense)) oracle_value[s] = run_oracle(cfg, built, s).trace.final_objective();
    }

    json runs = json::array();
    std::map<Sense, std::pair<double, double>> first_bound;
    for (auto s : senses_of(sense)) {
        for (std::size_t r = 0; r < starts.size(); ++r) {
            fc.sense = s;
            const RandomStream stream = RandomStream(starts[r]).derive(s == Sense::minimize ? 1 : 2);
            auto p0 = initial_distributions(built.sets, fc.initial, stream.derive(0));
            auto model = make_model(cfg, built.grids, p0);
            auto trace = fwsa_run(*model, built.sets, fc, stream, std::move(p0));

            const std::string suffix = std::string(to_string(s)) + (r == 0 ? "" : "_start" + std::to_string(r));
            io::write_text(out / ("trace_" + suffix + ".csv"), io::trace_csv(trace, prov, "# start_seed=" + std::to_string(starts[r]) + "\n"));
            for (std::size_t i = 0; i < trace.final_p.size(); ++i) {
                json d = prov.to_json();
                d["sense"] = to_string(s);
                d["input_model"] = i;
                d["start_seed"] = starts[r];
                d["distribution"] = io::distribution_json(trace.final_p[i]);
                io::write_json(out / ("final_dist_" + suffix + "_" + std::to_string(i) + ".json"), d);
            }
            json run = {{"sense", to_string(s)},
                        {"start", r},
                        {"start_seed", starts[r]},
                        {"final_objective", io::number(trace.final_objective())},
                        {"stderr", io::number(trace.final_stderr())},
                        {"oracle_value", oracle_value.count(s) && oracle_value[s] ? io::number(*oracle_value[s]) : json(nullptr)},
                        {"termination", to_string(trace.termination)},
                        {"iterations", trace.rows.size()},
                        {"total_replications", trace.total_replications()},
                        {"final_fw_gap", io::number(trace.last().fw_gap)}};
            runs.push_back(run);
            if (r == 0) first_bound[s] = {trace.final_objective(), trace.final_stderr()};
            log << to_string(s) << " start " << r << ": Z = " << io::format_double(trace.final_objective()) << " +/- "
                << io::format_double(trace.final_stderr()) << " after " << trace.rows.size() << " iterations ("
                << to_string(trace.termination) << ")\n";
        }
    }
    report["runs"] = runs;

    json bounds = nullptr;
    if (first_bound.count(Sense::minimize) && first_bound.count(Sense::maximize)) {
        const auto [lo, se_lo] = first_bound[Sense::minimize];
        const auto [hi, se_hi] = first_bound[Sense::maximize];
        const double combined = std::sqrt(se_lo * se_lo + se_hi * se_hi);
        bounds = {{"min", lo}, {"max", hi}, {"combined_stderr", combined}, {"ordering_ok", lo <= hi + 3.0 * combined}};
    }
    report["bounds"] = bounds;

    json truth = nullptr;
    if (cfg.truth) {
        const auto te = detail::estimate_truth(cfg, built, seed);
        truth = {{"estimate", te.estimate.mean}, {"stderr", te.estimate.std_err}, {"replications", te.estimate.R},
                 {"projected_truth_feasible", te.projected_feasible ? json(*te.projected_feasible) : json(nullptr)}};
        if (!bounds.is_null()) {
            const auto [lo, se_lo] = first_bound[Sense::minimize];
            const auto [hi, se_hi] = first_bound[Sense::maximize];
            truth["covered"] = lo - 3.0 * se_lo <= te.estimate.mean && te.estimate.mean <= hi + 3.0 * se_hi;
        } else {
            truth["covered"] = nullptr;
        }
        log << "truth estimate " << io::format_double(te.estimate.mean) << " +/- " << io::format_double(te.estimate.std_err) << "\n";
    }
    report["truth"] = truth;
    io::write_json(out / "report.json", report);
    return exit_ok;
}

/// Writes oracle.json with Z*_inf, the optimal distributions and the final deterministic gap.
inline int run_oracle_command(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
    const std::uint64_t seed = opt.seed.value_or(cfg.seed);
    const std::filesystem::path out = opt.out.value_or(cfg.output_dir);
    const io::Provenance prov{cfg.hash(), seed};
    const auto built = build_inputs(cfg, seed);
    json doc = prov.to_json();
    doc["name"] = cfg.name;
    json runs = json::array();
    for (auto s : senses_of(opt.sense.value_or(cfg.sense))) {
        const auto r = run_oracle(cfg, built, s);
        runs.push_back(oracle_json(r, built.sets));
        log << "oracle " << to_string(s) << ": Z* = " << io::format_double(r.trace.final_objective()) << ", gap "
            << io::format_double(r.trace.last().fw_gap) << " after " << r.trace.rows.size() << " iterations\n";
    }
    doc["runs"] = runs;
    io::write_json(out / "oracle.json", doc);
    return exit_ok;
}

}  // namespace robustsim
