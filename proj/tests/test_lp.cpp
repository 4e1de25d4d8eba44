#include "robustsim/lp.hpp"
#include "robustsim/random.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace robustsim;
using Catch::Approx;

TEST_CASE("small LP with known optimum") {
    // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
    lp::Problem p;
    p.cost = {-1, -1};
    p.add_row({1, 2}, lp::RowSense::less_equal, 4);
    p.add_row({3, 1}, lp::RowSense::less_equal, 6);
    auto r = lp::solve(p);
    REQUIRE(r.status == lp::Status::optimal);
    CHECK(r.x[0] == Approx(1.6));
    CHECK(r.x[1] == Approx(1.2));
    CHECK(r.objective == Approx(-2.8));
}

TEST_CASE("equality and >= rows with a negative right-hand side") {
    // min x0 + 2 x1 + 3 x2, sum = 1, x0 - x2 >= -0.5, x0 <= 0.2
    lp::Problem p;
    p.cost = {1, 2, 3};
    p.add_row({1, 1, 1}, lp::RowSense::equal, 1);
    p.add_row({1, 0, -1}, lp::RowSense::greater_equal, -0.5);
    p.add_row({1, 0, 0}, lp::RowSense::less_equal, 0.2);
    auto r = lp::solve(p);
    REQUIRE(r.status == lp::Status::optimal);
    CHECK(r.objective == Approx(0.2 + 2 * 0.8));
}

TEST_CASE("infeasible and unbounded problems") {
    lp::Problem inf;
    inf.cost = {1, 1};
    inf.add_row({1, 1}, lp::RowSense::equal, 1);
    inf.add_row({1, 1}, lp::RowSense::greater_equal, 2);
    auto r = lp::solve(inf);
    CHECK(r.status == lp::Status::infeasible);
    CHECK(r.phase1_value == Approx(1.0));

    lp::Problem unb;
    unb.cost = {-1, 0};
    unb.add_row({1, -1}, lp::RowSense::less_equal, 1);
    CHECK(lp::solve(unb).status == lp::Status::unbounded);
}

TEST_CASE("redundant and degenerate rows") {
    lp::Problem p;
    p.cost = {3, 1, 2};
    p.add_row({1, 1, 1}, lp::RowSense::equal, 1);
    p.add_row({2, 2, 2}, lp::RowSense::equal, 2);
    p.add_row({0, 1, 0}, lp::RowSense::less_equal, 1);
    p.add_row({0, 1, 0}, lp::RowSense::greater_equal, 0);
    auto r = lp::solve(p);
    REQUIRE(r.status == lp::Status::optimal);
    CHECK(r.objective == Approx(1.0));
    CHECK(r.x[1] == Approx(1.0));
}

TEST_CASE("random simplex LPs match vertex enumeration") {
    auto eng = RandomStream(77).engine();
    for (int t = 0; t < 300; ++t) {
        const int n = 2 + int(uniform_open(eng) * 5);
        const int k = int(uniform_open(eng) * 4);
        oracle::Vec xi(n), base(n);
        for (auto& x : xi) x = 2 * uniform_open(eng) - 1;
        for (auto& x : base) x = uniform_open(eng) + 0.05;
        double s = 0;
        for (double x : base) s += x;
        for (auto& x : base) x /= s;
        lp::Problem p;
        p.cost = xi;
        p.add_row(std::vector<double>(n, 1.0), lp::RowSense::equal, 1.0);
        std::vector<oracle::Row> rows;
        for (int l = 0; l < k; ++l) {
            oracle::Vec a(n);
            for (auto& x : a) x = 2 * uniform_open(eng) - 1;
            const double mid = oracle::dot(a, base);
            const double lo = mid - 0.2 * uniform_open(eng), hi = mid + 0.2 * uniform_open(eng);
            p.add_row(a, lp::RowSense::greater_equal, lo);
            p.add_row(a, lp::RowSense::less_equal, hi);
            rows.push_back({a, lo, hi});
        }
        auto r = lp::solve(p);
        REQUIRE(r.status == lp::Status::optimal);
        REQUIRE(std::abs(r.objective - oracle::lp_vertices(xi, rows)) <= 1e-9);
    }
}
