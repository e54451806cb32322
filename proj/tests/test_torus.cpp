#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gk/torus.hpp"

using namespace gk;

TEST_CASE("orbit of 1/2 on T^1") {
    auto pts = orbit(TorusVector({rat(1, 2)}), Int(2));
    REQUIRE(pts.size() == 2);
    REQUIRE(pts[0].coords[0] == 0);
    REQUIRE(pts[1].coords[0] == rat(1, 2));
}

TEST_CASE("orbit of (1/3,2/3) on T^2") {
    auto pts = orbit(TorusVector({rat(1, 3), rat(2, 3)}), Int(3));
    REQUIRE(pts.size() == 3);
    std::set<std::pair<Rat, Rat>> got;
    for (const auto& p : pts) got.emplace(p.coords[0], p.coords[1]);
    REQUIRE(got.count({Rat(0), Rat(0)}) == 1);
    REQUIRE(got.count({rat(1, 3), rat(2, 3)}) == 1);
    REQUIRE(got.count({rat(2, 3), rat(1, 3)}) == 1);
}

TEST_CASE("fixed point orbit collapses") {
    auto pts = orbit(TorusVector({Rat(0)}), Int(5));
    REQUIRE(pts.size() == 1);
}

TEST_CASE("covering radius of equispaced pair on T^1") {
    std::vector<TorusVector> pts{TorusVector({Rat(0)}), TorusVector({rat(1, 2)})};
    Rat r = covering_radius(pts, rat(1, 64));
    REQUIRE(r >= rat(1, 4));
    REQUIRE(r <= rat(1, 4) + rat(1, 128));
}

TEST_CASE("covering radius of a single point is 1/2") {
    std::vector<TorusVector> pts{TorusVector({Rat(0)})};
    Rat r = covering_radius(pts, rat(1, 64));
    REQUIRE(r >= rat(1, 2));
    REQUIRE(r <= rat(1, 2) + rat(1, 128));
}

TEST_CASE("2-d radius agrees with a finer-grid oracle") {
    auto pts = orbit(TorusVector({rat(1, 3), rat(2, 3)}), Int(3));
    Rat coarse = covering_radius(pts, rat(1, 60));
    Rat fine = covering_radius(pts, rat(1, 600));
    // both are upper bounds of the same truth; the oracle is tighter
    REQUIRE(fine <= coarse + rat(1, 1200));
    REQUIRE(coarse <= fine + rat(1, 120) + rat(1, 1200));
    // true radius of this orbit is 1/3 under the sup metric
    REQUIRE(fine >= rat(1, 3));
    REQUIRE(fine <= rat(1, 3) + rat(1, 1200));
}

TEST_CASE("radius is antitone under adding points") {
    std::mt19937 rng(7u);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TorusVector> pts;
        long D = 16;
        int n = 1 + static_cast<int>(rng() % 4);
        for (int k = 0; k < n; ++k)
            pts.push_back(TorusVector({rat(static_cast<long>(rng() % D), D), rat(static_cast<long>(rng() % D), D)}));
        Rat before = covering_radius(pts, rat(1, 32));
        pts.push_back(TorusVector({rat(static_cast<long>(rng() % D), D), rat(static_cast<long>(rng() % D), D)}));
        Rat after = covering_radius(pts, rat(1, 32));
        REQUIRE(after <= before);
    }
}

TEST_CASE("covering radius is independent of worker count") {
    auto pts = orbit(TorusVector({rat(3, 16), rat(5, 16)}), Int(16));
    CoveringOptions one, eight;
    one.threads = 1;
    eight.threads = 8;
    REQUIRE(covering_radius(pts, rat(1, 64), one) == covering_radius(pts, rat(1, 64), eight));
}

TEST_CASE("find_witness on T^1: equispaced orbit certifies easily") {
    auto w = find_witness({Int(1)}, Int(1), rat(1, 8), 3);
    REQUIRE(w.certified);
    REQUIRE(w.certified_diameter <= rat(1, 8));
    REQUIRE(w.e == 0);
    REQUIRE(w.v == std::vector<long>{0});
}

TEST_CASE("find_witness on T^2 meets target 1/4 within bound 3") {
    auto w = find_witness({Int(1), Int(1)}, Int(1), rat(1, 4), 3);
    REQUIRE(w.certified);
    REQUIRE(w.certified_diameter <= rat(1, 4));

    // revalidation at doubled resolution stays within target + resolution
    std::vector<Int> cand(2);
    for (size_t i = 0; i < 2; ++i) cand[i] = Int(1) * w.v[i] + (Int(w.e) * 1 + 1) * 1;
    std::vector<Rat> vec(2);
    for (size_t i = 0; i < 2; ++i) vec[i] = mod1(rat(cand[i], w.probe_q));
    Rat recheck = covering_radius(orbit(TorusVector(vec), w.probe_q), rat(1, 8) / 2);
    REQUIRE(recheck <= rat(1, 4) + rat(1, 8));
}

TEST_CASE("find_witness rejects gcd > 1") {
    REQUIRE_THROWS_AS(find_witness({Int(2), Int(2)}, Int(1), rat(1, 4), 2), std::invalid_argument);
}

TEST_CASE("find_witness reports exhaustion honestly") {
    // target far below what a bound-1 search in T^2 can certify
    REQUIRE_THROWS_AS(find_witness({Int(1), Int(1)}, Int(1), rat(1, 1000000), 1), WitnessError);
}
