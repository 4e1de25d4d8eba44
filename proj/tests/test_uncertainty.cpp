#include "robustsim/uncertainty.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace robustsim;
using Catch::Approx;

namespace {

GridPtr line(std::vector<double> y) { return make_grid(SupportGrid::scalar(std::move(y))); }

GridPtr counting(std::size_t n) {
    std::vector<double> y(n);
    for (std::size_t j = 0; j < n; ++j) y[j] = double(j + 1);
    return line(y);
}

struct RandomBall {
    std::vector<double> xi;
    DiscreteDistribution pb;
    double eta;
};

RandomBall random_ball(RandomStream::Engine& eng, std::size_t n) {
    std::vector<double> xi(n), w(n);
    for (auto& x : xi) x = uniform_open(eng);
    for (auto& x : w) x = 0.05 + uniform_open(eng);
    return {xi, DiscreteDistribution::from_weights(counting(n), w), 0.01 + 0.5 * uniform_open(eng)};
}

void require_member(const SubproblemSolution& s, const UncertaintySet& set) {
    double sum = 0.0;
    for (double v : s.q.probs()) {
        REQUIRE(v >= 0.0);
        sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    REQUIRE(is_feasible(s.q, set, 1e-7));
}

oracle::Vec vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("phi_divergence examples") {
    auto g = line({0, 1});
    const PhiBall kl(DiscreteDistribution::uniform(g), 0.1, Divergence::kl);
    const PhiBall chi(DiscreteDistribution::uniform(g), 0.1, Divergence::modified_chi2);
    CHECK(phi_divergence(kl.baseline, kl) == 0.0);
    CHECK(phi_divergence(chi.baseline, chi) == 0.0);
    CHECK(phi_divergence(DiscreteDistribution(g, {1, 0}), kl) == Approx(std::log(2.0)));
    CHECK(phi_divergence(DiscreteDistribution(g, {0.75, 0.25}), chi) == Approx(0.25));
    CHECK_THROWS(phi_divergence(DiscreteDistribution::uniform(line({0, 2})), kl));
}

TEST_CASE("phi_divergence is nonnegative and agrees with direct sums") {
    auto eng = RandomStream(3).engine();
    for (int t = 0; t < 200; ++t) {
        auto a = random_ball(eng, 6);
        std::vector<double> w(6);
        for (auto& x : w) x = uniform_open(eng);
        auto q = DiscreteDistribution::from_weights(a.pb.grid_ptr(), w);
        const double k = phi_divergence(q.probs(), a.pb.probs(), Divergence::kl);
        const double c = phi_divergence(q.probs(), a.pb.probs(), Divergence::modified_chi2);
        REQUIRE(k >= 0.0);
        REQUIRE(c >= 0.0);
        REQUIRE(k == Approx(oracle::kl(vec(q.probs()), vec(a.pb.probs()))).epsilon(1e-10));
        REQUIRE(c == Approx(oracle::chi2(vec(q.probs()), vec(a.pb.probs()))).epsilon(1e-10));
    }
}

TEST_CASE("is_feasible examples") {
    auto g = line({1, 2, 3});
    const PhiBall ball(DiscreteDistribution(g, {0.2, 0.3, 0.5}), 0.0, Divergence::kl);
    CHECK(is_feasible(ball.baseline, ball, 1e-12));
    CHECK(is_feasible(ball.baseline, PhiBall(ball.baseline, 3.0, Divergence::modified_chi2), 0.0));

    MomentSet mean_cap(g);
    mean_cap.add([](PointView y) { return y[0]; }, -INFINITY, 1.5);
    CHECK_FALSE(is_feasible(DiscreteDistribution::uniform(g), mean_cap, 1e-12));

    MomentSet boundary(g);
    boundary.add([](PointView y) { return y[0] * y[0]; }, -INFINITY, 9.0);
    CHECK(is_feasible(DiscreteDistribution::point_mass(g, 2), boundary, 0.0));
}

TEST_CASE("student_t_quantile examples") {
    for (double df : {1.0, 3.0, 30.0, 1e6}) CHECK(student_t_quantile(0.5, df) == 0.0);
    CHECK(std::abs(student_t_quantile(0.975, 1) - std::tan(M_PI * 0.475)) <= 1e-8);
    CHECK(std::abs(student_t_quantile(0.975, 1) - 12.7062) <= 1e-4);
    CHECK(std::abs(student_t_quantile(0.975, 1e6) - 1.95996) <= 1e-4);
    CHECK(student_t_quantile(0.025, 5) == Approx(-student_t_quantile(0.975, 5)));
}

TEST_CASE("calibrate_moment_bounds examples") {
    const std::vector<double> two{0.0, 2.0};
    auto iv = calibrate_moment_bounds(two, 0.05);
    CHECK(iv.mean == Approx(1.0));
    CHECK(iv.sd == Approx(std::sqrt(2.0)));
    CHECK(std::abs(iv.lower - -11.706) <= 1e-3);
    CHECK(std::abs(iv.upper - 13.706) <= 1e-3);
    CHECK_FALSE(iv.degenerate);

    auto wide = calibrate_moment_bounds(two, 1.0 - 1e-9);
    CHECK(wide.upper - wide.lower <= 1e-8);

    std::vector<double> flat(50, 3.0);
    auto z = calibrate_moment_bounds(flat, 0.05);
    CHECK(z.degenerate);
    CHECK(z.lower == 3.0);
    CHECK(z.upper == 3.0);

    auto eng = RandomStream(1).engine();
    std::vector<double> noisy(50);
    for (auto& x : noisy) x = 3.0 + 1e-12 * (uniform_open(eng) - 0.5);
    auto n = calibrate_moment_bounds(noisy, 0.05);
    CHECK(n.upper - n.lower < 1e-11);

    CHECK_THROWS(calibrate_moment_bounds(std::vector<double>{1.0}, 0.05));
}

TEST_CASE("moment subproblem examples") {
    auto g3 = line({0, 1, 2});
    MomentSet none(g3);
    const std::vector<double> xi{3, 1, 2};
    auto s = solve_subproblem_moment(xi, none);
    CHECK(s.value == Approx(1.0));
    CHECK(s.q[1] == Approx(1.0));

    MomentSet ge(g3);
    ge.add([](PointView y) { return y[0]; }, 1.5, INFINITY);
    auto t = solve_subproblem_moment(std::vector<double>{0, 1, 2}, ge);
    CHECK(t.value == Approx(1.5));
    CHECK(moments(t.q, [](PointView y) { return y[0]; }) >= 1.5 - 1e-9);

    MomentSet vac(g3);
    vac.add([](PointView y) { return y[0]; }, -INFINITY, 2.0);
    CHECK(solve_subproblem_moment(xi, vac).value == Approx(s.value));
}

TEST_CASE("moment subproblem: empty set reports the phase-1 certificate") {
    auto g = line({0, 1, 2});
    MomentSet ms(g);
    ms.add([](PointView y) { return y[0]; }, 5.0, 6.0);
    try {
        solve_subproblem_moment(std::vector<double>{0, 1, 2}, ms);
        FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
        CHECK(e.certificate() == Approx(3.0));
    }
    CHECK_THROWS_AS(feasible_interior_point(ms), InfeasibleError);
}

TEST_CASE("moment subproblem: equality constraints are relaxed by a tiny margin") {
    auto g = line({0, 1, 2, 3});
    MomentSet ms(g);
    ms.add([](PointView y) { return y[0]; }, 1.5, 1.5);
    const auto& c = ms.constraints().front();
    CHECK(c.lower == Approx(1.5 - equality_margin(1.5)).epsilon(1e-15));
    CHECK(c.upper > c.lower);
    auto s = solve_subproblem_moment(std::vector<double>{1, 0, 0, 1}, ms);
    CHECK(is_feasible(s.q, ms, 1e-7));
    CHECK(s.value == Approx(0.0).margin(1e-9));
    CHECK_THROWS(ms.add([](PointView y) { return y[0]; }, 2.0, 1.0));
}

TEST_CASE("phi subproblem examples") {
    auto g = line({0, 1, 2});
    const DiscreteDistribution pb(g, {0.2, 0.3, 0.5});
    for (auto d : {Divergence::kl, Divergence::modified_chi2}) {
        auto z = solve_subproblem_phi(std::vector<double>{3, 1, 2}, PhiBall(pb, 0.0, d));
        CHECK(z.which == SolutionCase::zero_radius);
        for (std::size_t j = 0; j < 3; ++j) CHECK(z.q[j] == pb[j]);
        auto c = solve_subproblem_phi(std::vector<double>{0.7, 0.7, 0.7}, PhiBall(pb, 0.3, d));
        for (std::size_t j = 0; j < 3; ++j) CHECK(c.q[j] == Approx(pb[j]).margin(1e-12));
    }
    const double t = oracle::binary_kl_root(0.1);
    CHECK(t == Approx(0.280).margin(5e-4));
    const PhiBall two(DiscreteDistribution::uniform(line({0, 1})), 0.1, Divergence::kl);
    auto p = solve_subproblem_phi(std::vector<double>{0, 1}, two);
    auto k = solve_subproblem_kl(std::vector<double>{0, 1}, two);
    CHECK(p.q[1] == Approx(t).margin(1e-4));
    CHECK(p.value == Approx(t).margin(1e-4));
    CHECK(std::abs(p.value - k.value) <= 1e-4);
}

TEST_CASE("KL tilt examples") {
    auto g3 = line({0, 1, 2});
    const PhiBall big(DiscreteDistribution::uniform(g3), 2.0, Divergence::kl);
    auto a = solve_subproblem_kl(std::vector<double>{0, 1, 2}, big);
    CHECK(a.which == SolutionCase::argmin_mass);
    CHECK(a.q[0] == 1.0);
    CHECK(a.q[1] == 0.0);

    const PhiBall two(DiscreteDistribution::uniform(line({0, 1})), 0.1, Divergence::kl);
    auto b = solve_subproblem_kl(std::vector<double>{0, 1}, two);
    const double t = oracle::binary_kl_root(0.1);
    CHECK(b.which == SolutionCase::exponential_tilt);
    CHECK(b.q[0] == Approx(1.0 - t).margin(1e-9));
    CHECK(b.q[1] == Approx(t).margin(1e-9));
    CHECK(b.beta == Approx(std::log(t / (1.0 - t))).margin(1e-7));
    // quoted value comes from q rounded to three digits
    CHECK(b.beta == Approx(-0.9445).margin(2e-3));
    CHECK(std::abs(b.residual) <= 1e-10);

    auto z = solve_subproblem_kl(std::vector<double>{0, 1, 2}, PhiBall(DiscreteDistribution::uniform(g3), 0.0, Divergence::kl));
    CHECK(z.beta == 0.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(z.q[j] == Approx(1.0 / 3.0));

    CHECK_THROWS_AS(solve_subproblem_kl(std::vector<double>{0, 1}, PhiBall(two.baseline, 0.1, Divergence::modified_chi2)),
                    std::invalid_argument);
}

TEST_CASE("KL case threshold on both sides") {
    // tie set {0, 1} carries baseline mass 0.5, so the threshold is log 2
    auto g = line({0, 1, 2, 3});
    const DiscreteDistribution pb(g, {0.25, 0.25, 0.3, 0.2});
    const std::vector<double> xi{0.0, 0.0, 1.0, 2.0};
    const double thr = std::log(2.0);
    for (double eta : {thr + 1e-6, thr + 0.5}) {
        auto s = solve_subproblem_kl(xi, PhiBall(pb, eta, Divergence::kl));
        CHECK(s.which == SolutionCase::argmin_mass);
        CHECK(s.q[0] == Approx(0.5));
        CHECK(s.q[1] == Approx(0.5));
        CHECK(s.value == 0.0);
        auto d = solve_subproblem_phi(xi, PhiBall(pb, eta, Divergence::kl));
        CHECK(d.value == Approx(0.0).margin(1e-6));
    }
    for (double eta : {thr - 1e-3, 0.3, 0.01}) {
        const PhiBall ball(pb, eta, Divergence::kl);
        auto s = solve_subproblem_kl(xi, ball);
        CHECK(s.which == SolutionCase::exponential_tilt);
        CHECK(s.q[2] > 0.0);
        CHECK(phi_divergence(s.q, ball) == Approx(eta).epsilon(1e-7));
        CHECK(std::abs(s.value - solve_subproblem_phi(xi, ball).value) <= 1e-6);
    }
}

TEST_CASE("structural zeros of the baseline stay at zero") {
    auto g = line({0, 1, 2});
    const DiscreteDistribution pb(g, {0.0, 0.5, 0.5});
    for (auto d : {Divergence::kl, Divergence::modified_chi2}) {
        const PhiBall ball(pb, 0.2, d);
        auto s = solve_subproblem(std::vector<double>{-5, 1, 2}, ball);
        CHECK(s.q[0] == 0.0);
        CHECK(is_feasible(s.q, ball, 1e-7));
    }
}

TEST_CASE("KS band moment sets") {
    auto g = line({1, 2, 3, 4});
    const std::vector<KsAnchor> one{{2.0, 0.5, 0.5}};
    auto ms = build_ks_band_momentset(one, 0.1, g);
    REQUIRE(ms.constraints().size() == 1);
    CHECK(ms.constraints()[0].lower == Approx(0.4));
    CHECK(ms.constraints()[0].upper == Approx(0.6));
    CHECK(ms.constraints()[0].values == std::vector<double>{1, 1, 0, 0});

    std::vector<KsAnchor> steps;
    for (int j = 1; j <= 4; ++j) steps.push_back({double(j), (j - 1) / 4.0, j / 4.0});
    auto vac = build_ks_band_momentset(steps, 1.0, g);
    for (const auto& c : vac.constraints()) {
        CHECK(c.lower == 0.0);
        CHECK(c.upper == 1.0);
    }

    // eta = 0 around the empirical CDF evaluated at the grid pins the distribution
    std::vector<KsAnchor> at;
    for (int j = 1; j <= 4; ++j) at.push_back({double(j), j / 4.0, j / 4.0});
    auto pin = build_ks_band_momentset(at, 0.0, g);
    CHECK(is_feasible(DiscreteDistribution::uniform(g), pin, 1e-7));
    CHECK_FALSE(is_feasible(DiscreteDistribution(g, {0.26, 0.24, 0.25, 0.25}), pin, 1e-7));
    auto s = solve_subproblem_moment(std::vector<double>{4, 3, 2, 1}, pin);
    for (std::size_t j = 0; j < 4; ++j) CHECK(s.q[j] == Approx(0.25).margin(1e-8));

    // with jump anchors a zero radius leaves no room
    CHECK_THROWS_AS(build_ks_band_momentset(steps, 0.0, g), InfeasibleError);
    const std::vector<KsAnchor> bad{{1.0, 0.6, 0.5}};
    CHECK_THROWS_AS(build_ks_band_momentset(bad, 0.1, g), std::invalid_argument);
}

TEST_CASE("random instances: solutions lie on the simplex and in the set") {
    auto eng = RandomStream(10).engine();
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + std::size_t(uniform_open(eng) * 19);
        auto a = random_ball(eng, n);
        for (auto d : {Divergence::kl, Divergence::modified_chi2}) {
            const UncertaintySet set = PhiBall(a.pb, a.eta, d);
            require_member(solve_subproblem(a.xi, set), set);
            require_member(solve_subproblem(a.xi, set, {true}), set);
        }
        MomentSet ms(a.pb.grid_ptr());
        for (int l = 0; l < 3; ++l) {
            std::vector<double> f(n);
            for (auto& x : f) x = 2 * uniform_open(eng) - 1;
            const double mid = dot(f, a.pb.probs());
            ms.add_values(f, mid - 0.1 * uniform_open(eng), mid + 0.1 * uniform_open(eng));
        }
        const UncertaintySet mset = ms;
        require_member(solve_subproblem(a.xi, mset), mset);
        auto c = set_center(mset);
        REQUIRE(c.strictly_positive());
        REQUIRE(is_feasible(c, mset, 1e-9));
    }
}

TEST_CASE("phi-ball solvers match a simplex mesh search for n <= 4") {
    auto eng = RandomStream(11).engine();
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 2 + t % 3;
        auto a = random_ball(eng, n);
        const auto pb = vec(a.pb.probs());
        for (auto d : {Divergence::kl, Divergence::modified_chi2}) {
            const PhiBall ball(a.pb, a.eta, d);
            const double mesh = oracle::mesh_min(a.xi, pb, d == Divergence::kl ? oracle::phi_kl : oracle::phi_chi2, a.eta);
            REQUIRE(std::abs(solve_subproblem_phi(a.xi, ball).value - mesh) <= 2e-3);
            if (d == Divergence::kl) REQUIRE(std::abs(solve_subproblem_kl(a.xi, ball).value - mesh) <= 2e-3);
        }
    }
}

TEST_CASE("moment LP matches vertex enumeration") {
    auto eng = RandomStream(12).engine();
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + t % 4;
        auto a = random_ball(eng, n);
        MomentSet ms(a.pb.grid_ptr());
        std::vector<oracle::Row> rows;
        const int k = 1 + t % 3;
        for (int l = 0; l < k; ++l) {
            std::vector<double> f(n);
            for (auto& x : f) x = 2 * uniform_open(eng) - 1;
            const double mid = dot(f, a.pb.probs());
            const double lo = uniform_open(eng) < 0.2 ? -INFINITY : mid - 0.3 * uniform_open(eng);
            const double hi = mid + 0.3 * uniform_open(eng);
            ms.add_values(f, lo, hi);
            rows.push_back({f, lo, hi});
        }
        REQUIRE(std::abs(solve_subproblem_moment(a.xi, ms).value - oracle::lp_vertices(a.xi, rows)) <= 1e-9);
    }
}

TEST_CASE("KL tilt and generic dual agree") {
    auto eng = RandomStream(13).engine();
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + std::size_t(uniform_open(eng) * 19);
        auto a = random_ball(eng, n);
        for (auto& x : a.xi) x = 4.0 * x - 2.0;
        const PhiBall ball(a.pb, a.eta, Divergence::kl);
        auto k = solve_subproblem_kl(a.xi, ball);
        auto g = solve_subproblem_phi(a.xi, ball);
        REQUIRE(std::abs(k.value - g.value) <= 1e-6);
        REQUIRE(std::abs(k.residual) <= 1e-10);
        if (std::isfinite(g.dual_value)) REQUIRE(std::abs(g.value - g.dual_value) <= 1e-6 * (1.0 + std::abs(g.dual_value)));
    }
}

TEST_CASE("optimal value is nonincreasing in the radius") {
    auto eng = RandomStream(14).engine();
    for (int t = 0; t < 40; ++t) {
        auto a = random_ball(eng, 8);
        for (auto d : {Divergence::kl, Divergence::modified_chi2}) {
            double prev = INFINITY;
            for (double eta : {0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0, 3.0}) {
                const double v = solve_subproblem(a.xi, PhiBall(a.pb, eta, d)).value;
                REQUIRE(v <= prev + 1e-9);
                prev = v;
            }
        }
    }
}

TEST_CASE("KL tilt moves mass toward small xi") {
    auto eng = RandomStream(15).engine();
    for (int t = 0; t < 100; ++t) {
        auto a = random_ball(eng, 10);
        const PhiBall ball(a.pb, 0.05 * a.eta, Divergence::kl);
        auto s = solve_subproblem_kl(a.xi, ball);
        REQUIRE(s.which == SolutionCase::exponential_tilt);
        double xbar = 0.0;
        for (double x : a.xi) xbar += x / 10.0;
        double cov = 0.0;
        for (std::size_t j = 0; j < 10; ++j) cov += (a.xi[j] - xbar) * (s.q[j] - a.pb[j]);
        REQUIRE(cov <= 1e-15);
        REQUIRE(s.beta < 0.0);
    }
}
