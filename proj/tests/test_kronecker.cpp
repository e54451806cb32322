#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gk/kronecker.hpp"

using namespace gk;

namespace {

// stage with t=1, p/q = 1/2, b = (1); n = 1
StageParams tiny_stage() {
    StageParams st;
    st.n = 1;
    st.t = 1;
    st.p = 1;
    st.q = 2;
    st.a = {Int(1)};
    st.b = {Int(1)};
    st.s = {Int(0)};  // shape-invalid s, but level_set only reads p,q,b,n
    return st;
}

// exactly unimodular stage on T^2 whose orbit covers within 1/4:
// b=(1,5), q=16, a=(17,13), s=(1,4), p=1, n=2
StageParams cover_stage() {
    StageParams st;
    st.n = 2;
    st.t = 2;
    st.p = 1;
    st.q = 16;
    st.a = {Int(17), Int(13)};
    st.b = {Int(1), Int(5)};
    st.s = {Int(1), Int(4)};
    return st;
}

}  // namespace

TEST_CASE("level set of the tiny stage is one interval of length 1/2") {
    auto L = level_set(tiny_stage());
    REQUIRE(L.measure() == rat(1, 2));
    REQUIRE(L.contains(rat(1, 2)));
    REQUIRE_FALSE(L.contains(rat(1, 4)));
}

TEST_CASE("level set measure is t/(n q) when intervals are disjoint") {
    auto st = cover_stage();
    auto L = level_set(st);
    REQUIRE(L.measure() == rat(2, 2 * 16));
}

TEST_CASE("kronecker_solve: zero targets give k = 0 with zero error") {
    auto st = cover_stage();
    auto res = kronecker_solve({Rat(0), Rat(0)}, st, Rat(1));
    REQUIRE(res.k == 0);
    REQUIRE(res.err == 0);
}

TEST_CASE("kronecker_solve: identity targets give k = 1") {
    auto st = cover_stage();
    std::vector<Rat> targets = sample_targets(st, [](const Rat& x) { return x; });
    auto res = kronecker_solve(targets, st, Rat(1));
    REQUIRE(res.k == 1);
    REQUIRE(res.err == 0);
    REQUIRE(res.sup_bound <= rat(1, 16));  // err + k/(n q) = 1/32... bounded by interval reach
}

TEST_CASE("kronecker_solve achieves the covering bound on random targets") {
    auto st = cover_stage();
    // certified orbit radius of (p/q) b(n) on T^2 at fine resolution
    std::vector<Rat> base{mod1(st.rotation() * Rat(st.b[0])), mod1(st.rotation() * Rat(st.b[1]))};
    auto pts = orbit(TorusVector(base), st.q);
    Rat radius = covering_radius(pts, rat(1, 256));
    REQUIRE(radius <= rat(1, 2));  // condition-6 style bound at 1/n = 1/2

    std::mt19937 rng(42u);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Rat> targets{rat(static_cast<long>(rng() % 64), 64), rat(static_cast<long>(rng() % 64), 64)};
        auto res = kronecker_solve(targets, st, rat(1, 2));
        // exhaustive oracle over every k
        Rat best = 2;
        Int best_k = 0;
        for (long k = 0; k < 16; ++k) {
            Rat e = 0;
            for (int i = 0; i < 2; ++i) {
                Rat d = dist_t(mod1(Rat(k) * base[i]), targets[i]);
                if (d > e) e = d;
            }
            if (e < best) {
                best = e;
                best_k = k;
            }
        }
        REQUIRE(res.err == best);
        REQUIRE(res.k == best_k);
        REQUIRE(res.err <= radius);  // solver never beats geometry, never exceeds it
        REQUIRE(res.sup_bound <= Rat(1));  // the 2/n bound at n = 2
    }
}

TEST_CASE("kronecker_solve carries the best k on failure") {
    auto st = cover_stage();
    bool threw = false;
    try {
        kronecker_solve({rat(1, 3), rat(2, 3)}, st, Rat(0));
    } catch (const KroneckerError& e) {
        threw = true;
        REQUIRE(e.best.err > 0);
    }
    REQUIRE(threw);
}

TEST_CASE("support containment distinguishes endpoints") {
    auto st = cover_stage();
    auto L = level_set(st);
    auto sigma = AtomicMeasure::from_stage(st);
    REQUIRE(support_contained({L}, sigma));

    // an atom displaced to interval end falls out (half-open exclusion)
    Rat len = rat(Int(1), Int(st.n) * st.q);
    auto bad = AtomicMeasure::from_atoms({{mod1(st.rotation() * Rat(st.b[0]) + len), Rat(1)}});
    REQUIRE_FALSE(support_contained({L}, bad));
}

TEST_CASE("max atom weight") {
    auto uniform = AtomicMeasure::from_atoms({{rat(1, 8), rat(1, 4)}, {rat(2, 8), rat(1, 4)},
                                              {rat(3, 8), rat(1, 4)}, {rat(5, 8), rat(1, 4)}});
    REQUIRE(max_atom_weight(uniform) == rat(1, 4));
    auto single = AtomicMeasure::from_atoms({{rat(1, 3), Rat(1)}});
    REQUIRE(max_atom_weight(single) == 1);
    auto st = cover_stage();
    REQUIRE(max_atom_weight(AtomicMeasure::from_stage(st)) == rat(1, st.t));
}

TEST_CASE("nesting: constructed stage endpoints stay in earlier level sets") {
    // generated pair under the default policy
    GrowthPolicy pol;
    StageParams s0 = init_stage();
    StageParams s1 = next_stage(s0, pol, TranslationWitness::trivial(2));
    StageParams s2 = next_stage(s1, pol, TranslationWitness::trivial(8));

    auto L1 = level_set(s1);
    auto sigma2 = AtomicMeasure::from_stage(s2);
    REQUIRE(support_contained({L1}, sigma2));

    // telescoping: each level-2 endpoint is within 1/(n q_n) of its parent
    long ratio = s2.t / s1.t;
    for (long i = 0; i < s2.t; ++i) {
        long ip = i / ratio;
        Rat child = mod1(s2.rotation() * Rat(s2.b[i]));
        Rat parent = mod1(s1.rotation() * Rat(s1.b[ip]));
        Rat gap = (s2.rotation() - s1.rotation()) * Rat(s2.b[i]);
        if (gap < 0) gap = -gap;
        REQUIRE(mod1(child - parent) == mod1(gap) );
        REQUIRE(gap <= rat(Int(1), Int(s1.n) * s1.q));
    }
}

TEST_CASE("symmetrization halves weights onto reflected atoms") {
    auto m = AtomicMeasure::from_atoms({{rat(1, 8), rat(1, 2)}, {rat(3, 8), rat(1, 2)}});
    auto g = m.symmetrized();
    REQUIRE(g.atoms.size() == 4);
    REQUIRE(max_atom_weight(g) == rat(1, 4));
    Rat total = 0;
    for (auto& [p, w] : g.atoms) total += w;
    REQUIRE(total == 1);
}
