#include "robustsim/robustsim.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace robustsim;
using Catch::Approx;
using nlohmann::json;

namespace {

const std::string kCli = ROBUSTSIM_CLI;
const fs::path kPresets = ROBUSTSIM_PRESETS;

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("robustsim_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

struct Result {
    int code;
    std::string out, err;
};

Result cli(const std::string& args, const fs::path& dir) {
    const auto o = dir / "stdout.txt", e = dir / "stderr.txt";
    const int st = std::system((kCli + " " + args + " > " + o.string() + " 2> " + e.string()).c_str());
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(o), slurp(e)};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

/// Small single-server config; T and budget kept low.
json mg1_config(double eta, const std::string& sense = "both") {
    return {{"name", "cli-mg1"},
            {"seed", 5},
            {"model", {{"type", "mg1"}, {"lambda", 1.0}, {"T", 30}}},
            {"inputs", json::array({{{"support", {{"type", "grid"}, {"n", 10}}},
                                     {"set", {{"type", "kl"}, {"eta", eta}, {"baseline", {{"type", "beta_mixture"}, {"components", json::array({{{"weight", 0.3}, {"a", 2.0}, {"b", 6.0}}, {{"weight", 0.7}, {"a", 6.0}, {"b", 2.0}}})}}}}}}})},
            {"fwsa", {{"a", 1.5}, {"b", 10}, {"beta", 1.1}, {"W_max", 20000}, {"sense", sense}}},
            {"oracle", {{"gap_tol", 1e-8}, {"max_iterations", 2000}}}};
}

std::vector<fs::path> outputs(const fs::path& dir) {
    std::vector<fs::path> v;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv" || e.path().extension() == ".json") v.push_back(e.path());
    std::sort(v.begin(), v.end());
    return v;
}

void check_provenance(const fs::path& p) {
    INFO(p.string());
    const auto text = slurp(p);
    if (p.extension() == ".csv") {
        for (const char* key : {"# tool=robustsim", "version=", "# config_hash=", "# master_seed=", "# prng="}) CHECK(text.find(key) != std::string::npos);
        return;
    }
    const auto j = json::parse(text);
    for (const char* key : {"tool", "version", "config_hash", "master_seed", "prng"}) CHECK(j.contains(key));
}

}  // namespace

TEST_CASE("preset list and shipped preset files") {
    const auto d = scratch("list");
    auto r = cli("preset list", d);
    REQUIRE(r.code == 0);
    std::istringstream is(r.out);
    std::vector<std::string> names;
    for (std::string s; std::getline(is, s);) names.push_back(s);
    CHECK(names == presets::names());
    CHECK(names.size() == 27);
    for (const auto& n : names) {
        INFO(n);
        REQUIRE(fs::exists(kPresets / (n + ".json")));
        CHECK(read_json(kPresets / (n + ".json")) == *presets::get(n));
        CHECK_NOTHROW(load_config(kPresets / (n + ".json")));
    }
    CHECK(cli("preset no-such-preset", d).code == 2);
}

TEST_CASE("toy preset writes a consistent report") {
    const auto d = scratch("toy");
    auto r = cli("preset toy-gradient-check --out " + (d / "out").string(), d);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto rep = read_json(d / "out" / "report.json");
    REQUIRE(rep["runs"].size() == 2);
    for (const auto& run : rep["runs"]) {
        for (const char* key : {"sense", "final_objective", "stderr", "oracle_value", "termination", "iterations", "total_replications"})
            CHECK(run.contains(key));
        CHECK(std::abs(run["final_objective"].get<double>() - run["oracle_value"].get<double>()) <= 0.02);
    }
    // exact bounds: mean -+ sqrt(eta Var) for the identity payoff on an unconstrained chi2 ball
    const double half = std::sqrt(0.05 * 0.125);
    CHECK(rep["runs"][0]["oracle_value"].get<double>() == Approx(0.5 - half).margin(1e-9));
    CHECK(rep["runs"][1]["oracle_value"].get<double>() == Approx(0.5 + half).margin(1e-9));
    CHECK(rep["bounds"]["ordering_ok"].get<bool>());
    CHECK(rep["bounds"]["min"].get<double>() < rep["bounds"]["max"].get<double>());
    // config.json is the input config itself
    for (const auto& p : outputs(d / "out"))
        if (p.filename() != "config.json") check_provenance(p);
    CHECK(read_json(d / "out" / "config.json") == *presets::get("toy-gradient-check"));
    CHECK(fs::exists(d / "out" / "trace_min.csv"));
    CHECK(fs::exists(d / "out" / "trace_max.csv"));
    CHECK(fs::exists(d / "out" / "final_dist_min_0.json"));
    CHECK(fs::exists(d / "out" / "final_dist_max_0.json"));
}

TEST_CASE("trace CSV header") {
    const auto d = scratch("header");
    spit(d / "c.json", mg1_config(0.05, "min").dump(2));
    REQUIRE(cli("run --config " + (d / "c.json").string() + " --out " + (d / "o").string(), d).code == 0);
    std::istringstream is(slurp(d / "o" / "trace_min.csv"));
    std::string line;
    while (std::getline(is, line) && line.rfind("#", 0) == 0) {}
    // one slack per KL ball
    CHECK(line == "k,W_k,Z_est,fw_gap,eps_k,R_k,term_flag,slack_0_0");
    std::getline(is, line);
    CHECK(line.rfind("1,10,", 0) == 0);
}

TEST_CASE("reruns are byte-identical and independent of the thread count") {
    const auto d = scratch("rerun");
    spit(d / "c.json", mg1_config(0.05).dump(2));
    const std::string base = "run --config " + (d / "c.json").string();
    REQUIRE(cli(base + " --out " + (d / "a").string(), d).code == 0);
    REQUIRE(cli(base + " --out " + (d / "b").string(), d).code == 0);
    REQUIRE(cli(base + " --threads 4 --out " + (d / "c").string(), d).code == 0);
    const auto fa = outputs(d / "a");
    REQUIRE(fa.size() == 5);
    for (const auto& p : fa) {
        INFO(p.filename().string());
        CHECK(slurp(p) == slurp(d / "b" / p.filename()));
        CHECK(slurp(p) == slurp(d / "c" / p.filename()));
        check_provenance(p);
    }
    REQUIRE(cli(base + " --seed 6 --out " + (d / "s").string(), d).code == 0);
    CHECK(read_json(d / "s" / "report.json")["master_seed"] == 6);
    CHECK(slurp(d / "s" / "trace_min.csv") != slurp(d / "a" / "trace_min.csv"));
}

TEST_CASE("config errors exit 2 with line and field") {
    const auto d = scratch("cfgerr");
    spit(d / "bad.json", "{\n  \"name\": \"x\",\n  \"inputs\": [\n");
    auto r = cli("run --config " + (d / "bad.json").string(), d);
    CHECK(r.code == 2);
    CHECK(r.err.find("invalid JSON") != std::string::npos);

    auto c = mg1_config(0.05);
    c["fwsa"]["bogus_key"] = 1;
    spit(d / "unknown.json", c.dump(2));
    r = cli("run --config " + (d / "unknown.json").string(), d);
    CHECK(r.code == 2);
    CHECK(r.err.find("bogus_key") != std::string::npos);
    CHECK(r.err.find("line") != std::string::npos);

    c = mg1_config(-1.0);
    const auto text = c.dump(2);
    spit(d / "eta.json", text);
    int line = 1;
    for (std::size_t i = 0; i < text.find("\"eta\""); ++i) line += text[i] == '\n';
    r = cli("run --config " + (d / "eta.json").string(), d);
    CHECK(r.code == 2);
    CHECK(r.err.find("line " + std::to_string(line)) != std::string::npos);
    CHECK(r.err.find("/inputs/0/set/eta") != std::string::npos);

    CHECK(cli("run --config " + (d / "missing.json").string(), d).code == 2);
}

TEST_CASE("infeasible moment set exits 3") {
    const auto d = scratch("solver");
    auto c = mg1_config(0.05);
    c["inputs"][0]["set"] = {{"type", "moment"}, {"constraints", json::array({{{"power", 1}, {"lower", 5.0}, {"upper", 6.0}}})}};
    spit(d / "c.json", c.dump(2));
    auto r = cli("run --config " + (d / "c.json").string() + " --out " + (d / "o").string(), d);
    CHECK(r.code == 3);
    CHECK(r.err.find("solver failure") != std::string::npos);
}

TEST_CASE("zero-radius ball: oracle and both senses sit at the baseline") {
    const auto d = scratch("eta0");
    spit(d / "c.json", mg1_config(0.0).dump(2));
    REQUIRE(cli("oracle --config " + (d / "c.json").string() + " --out " + (d / "o").string(), d).code == 0);
    const auto orc = read_json(d / "o" / "oracle.json");
    check_provenance(d / "o" / "oracle.json");
    const std::vector<BetaComponent> mix{{0.3, 2, 6}, {0.7, 6, 2}};
    const auto pb = discretize_density([&](PointView v) { return beta_mixture_pdf(v[0], mix); }, make_grid(uniform_grid(10)));
    const double pk = oracle::pk(pb.grid().coords(), {pb.probs().begin(), pb.probs().end()}, 1.0);
    for (const auto& run : orc["runs"]) {
        CHECK(run["Z_star"].get<double>() == Approx(pk).epsilon(1e-12));
        CHECK(run["baseline_value"].get<double>() == Approx(pk).epsilon(1e-12));
    }

    REQUIRE(cli("run --config " + (d / "c.json").string() + " --out " + (d / "r").string(), d).code == 0);
    const auto rep = read_json(d / "r" / "report.json");
    const double lo = rep["bounds"]["min"], hi = rep["bounds"]["max"], se = rep["bounds"]["combined_stderr"];
    CHECK(std::abs(hi - lo) <= 3.0 * se);
    for (const char* s : {"min", "max"}) {
        const auto f = read_json(d / "r" / (std::string("final_dist_") + s + "_0.json"));
        const auto probs = f["distribution"]["probs"].get<std::vector<double>>();
        for (std::size_t j = 0; j < probs.size(); ++j) CHECK(probs[j] == Approx(pb[j]).margin(1e-12));
    }
}

TEST_CASE("subproblem-check writes check.json") {
    const auto d = scratch("check");
    auto r = cli("subproblem-check --n 3 --trials 20 --seed 1 --out " + d.string(), d);
    INFO(r.out << r.err);
    CHECK(r.code == 0);
    const auto j = read_json(d / "check.json");
    check_provenance(d / "check.json");
    CHECK(j["passed"].get<bool>());
    for (const auto& k : j["checks"]) {
        CHECK(k["trials"] == 20);
        if (k["kind"] == "zero_radius") {
            CHECK(k["max_discrepancy"].get<double>() == 0.0);
        }
    }
    CHECK(cli("subproblem-check --n 9 --trials 2 --seed 1 --out " + d.string(), d).code == 2);
}
