#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gk/interval_set.hpp"

using namespace gk;

namespace {

// Brute-force model: membership of every atom j/D + 1/(2D) (atom centers
// never sit on endpoints that are multiples of 1/D).
std::vector<bool> atomize(const IntervalSet& s, long D) {
    std::vector<bool> out(D);
    for (long j = 0; j < D; ++j) out[j] = s.contains(rat(2 * j + 1, 2 * D));
    return out;
}

IntervalSet random_set(std::mt19937& rng, long D) {
    std::uniform_int_distribution<long> pick(0, D);
    std::vector<Interval> raw;
    int pieces = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < pieces; ++k) {
        long a = pick(rng), b = pick(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        raw.push_back({rat(a, D), rat(b, D)});
    }
    return IntervalSet(std::move(raw));
}

}  // namespace

TEST_CASE("interval set normalization merges and sorts") {
    IntervalSet s({{rat(1, 2), rat(3, 4)}, {rat(0, 1), rat(1, 2)}});
    REQUIRE(s.size() == 1);
    REQUIRE(s.measure() == rat(3, 4));
    REQUIRE(s.contains(rat(1, 2)));
    REQUIRE_FALSE(s.contains(rat(3, 4)));  // half-open at the right end
}

TEST_CASE("mod_interval wraps across 1") {
    auto s = IntervalSet::mod_interval(rat(3, 4), rat(1, 2));
    REQUIRE(s.size() == 2);
    REQUIRE(s.measure() == rat(1, 2));
    REQUIRE(s.contains(rat(7, 8)));
    REQUIRE(s.contains(rat(1, 8)));
    REQUIRE_FALSE(s.contains(rat(1, 4)));
}

TEST_CASE("set algebra agrees with the atomic oracle") {
    std::mt19937 rng(20240811u);
    const long D = 24;
    for (int trial = 0; trial < 200; ++trial) {
        IntervalSet A = random_set(rng, D);
        IntervalSet B = random_set(rng, D);
        auto a = atomize(A, D), b = atomize(B, D);

        auto u = atomize(A.unite(B), D);
        auto i = atomize(A.intersect(B), D);
        auto c = atomize(A.complement(), D);
        long measure_atoms = 0;
        for (long j = 0; j < D; ++j) {
            REQUIRE(u[j] == (a[j] || b[j]));
            REQUIRE(i[j] == (a[j] && b[j]));
            REQUIRE(c[j] == !a[j]);
            if (a[j]) ++measure_atoms;
        }
        REQUIRE(A.measure() == rat(measure_atoms, D));

        long shift = static_cast<long>(rng() % D);
        auto t = atomize(A.translate(rat(shift, D)), D);
        for (long j = 0; j < D; ++j) REQUIRE(t[(j + shift) % D] == a[j]);

        REQUIRE(A.symdiff_measure(A) == 0);
        REQUIRE(A.unite(B).measure() + A.intersect(B).measure() == A.measure() + B.measure());
    }
}

TEST_CASE("translate by full turn is identity") {
    IntervalSet s({{rat(1, 3), rat(2, 3)}});
    REQUIRE(s.translate(Rat(1)) == s);
    REQUIRE(s.translate(rat(1, 5)).translate(rat(4, 5)) == s);
}
