#include "robustsim/random.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace robustsim;

TEST_CASE("derived substreams are deterministic") {
    const RandomStream s(42);
    auto a = s.derive({3, 1}).engine();
    auto b = s.derive(3).derive(1).engine();
    for (int i = 0; i < 1000; ++i) REQUIRE(a() == b());
}

TEST_CASE("distinct paths give distinct keys") {
    std::set<std::uint64_t> keys;
    const RandomStream root(7);
    std::size_t count = 0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        for (std::uint64_t j = 0; j < 200; ++j) {
            keys.insert(root.derive({i, j}).key());
            ++count;
        }
        keys.insert(root.derive(i).key());
        ++count;
    }
    keys.insert(root.key());
    ++count;
    // prefix paths [i] and [i, 0] must differ too
    CHECK(keys.size() == count);
    CHECK(RandomStream(1).key() != RandomStream(2).key());
    CHECK(RandomStream(0, {0}).key() != RandomStream(0).key());
}

TEST_CASE("deriving does not change the parent") {
    RandomStream s(5, {1, 2});
    const auto before = s.key();
    (void)s.derive(9);
    CHECK(s.key() == before);
    CHECK(s.path() == std::vector<std::uint64_t>{1, 2});
}

TEST_CASE("uniform_open stays inside (0,1) and has mean 1/2") {
    auto eng = RandomStream(11).engine();
    double s = 0.0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        const double u = uniform_open(eng);
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        s += u;
    }
    CHECK(std::abs(s / N - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / N));
}

TEST_CASE("exponential and normal moments") {
    auto eng = RandomStream(12).engine();
    const int N = 200000;
    double se = 0.0, sn = 0.0, sn2 = 0.0;
    for (int i = 0; i < N; ++i) {
        se += exponential(eng, 2.0);
        const double z = standard_normal(eng);
        sn += z;
        sn2 += z * z;
    }
    CHECK(std::abs(se / N - 0.5) < 4.0 * 0.5 / std::sqrt(N));
    CHECK(std::abs(sn / N) < 4.0 / std::sqrt(N));
    CHECK(std::abs(sn2 / N - 1.0) < 4.0 * std::sqrt(2.0 / N));
}
