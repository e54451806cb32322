#include <catch2/catch_amalgamated.hpp>

#include "gk/stage.hpp"

using namespace gk;

TEST_CASE("stage 0 matches the base case") {
    StageParams s0 = init_stage();
    REQUIRE(s0.t == 1);
    REQUIRE(s0.p == 1);
    REQUIRE(s0.q == 1);
    REQUIRE(s0.a == std::vector<Int>{Int(2)});
    REQUIRE(s0.b == std::vector<Int>{Int(1)});
    REQUIRE(s0.s == std::vector<Int>{Int(1)});
    REQUIRE(s0.a[0] * s0.b[0] - s0.s[0] * s0.q == 1);
    REQUIRE(gcd_int(s0.p, s0.q) == 1);

    GrowthPolicy pol;
    auto rep = check_stage(s0, nullptr, pol);
    REQUIRE(rep.all());
}

// Independent oracle: the five displayed recursion formulas executed with
// plain machine integers for the trivial-witness step from stage 0.
TEST_CASE("next_stage from stage 0 with trivial witness") {
    GrowthPolicy pol;  // rt exponent n+1 -> t_1 = 2
    StageParams s0 = init_stage();
    StageParams s1 = next_stage(s0, pol, TranslationWitness::trivial(2));

    // oracle, hand-executed: b~ = (1,1); v=0, e=0
    // b1(i) = 1*0 + (0+1)*1 = 1
    // s1(i) = 1 + 2*0 = 1
    // mu(i) = 1 + 1*0 = 1, prod mu = 1
    // conv floor = 2^0 * 1 * prod(b1)=1 * 1 = 1; d = 1 -> q1 = 1*(1+1) = 2
    // c1(i) = 1*1*1 = 1; a1(i) = 2 + 1 = 3
    // p1: base = 1*2 = 2, g=1 upward -> 3, gcd(3,2)=1
    REQUIRE(s1.t == 2);
    REQUIRE(s1.q == 2);
    REQUIRE(s1.p == 3);
    REQUIRE(s1.b == std::vector<Int>{Int(1), Int(1)});
    REQUIRE(s1.s == std::vector<Int>{Int(1), Int(1)});
    REQUIRE(s1.a == std::vector<Int>{Int(3), Int(3)});

    auto rep = check_stage(s1, &s0, GrowthPolicy{});
    REQUIRE(rep.all());
}

TEST_CASE("next_stage with a nontrivial witness keeps the identity chain") {
    GrowthPolicy pol;
    pol.d_floor = 3;
    StageParams s0 = init_stage();
    TranslationWitness w;
    w.v = {1, 0};
    w.e = 1;
    StageParams s1 = next_stage(s0, pol, w);

    // oracle: b1 = (1*1 + 2*1, 1*0 + 2*1) = (3, 2)
    //         s1 = (1 + 2*(1+1), 1 + 2*(0+1)) = (5, 3)
    //         mu = (1 + (1+1), 1 + (0+1)) = (3, 2), prod = 6
    //         d = 3 -> q1 = 1 + 3*6 = 19
    //         c1 = (3*5*2, 3*3*3) = (30, 27) -> a1 = (32, 29)
    //         p1: base 19, +1 = 20 coprime with 19
    REQUIRE(s1.b == std::vector<Int>{Int(3), Int(2)});
    REQUIRE(s1.s == std::vector<Int>{Int(5), Int(3)});
    REQUIRE(s1.q == 19);
    REQUIRE(s1.a == std::vector<Int>{Int(32), Int(29)});
    REQUIRE(s1.p == 20);
    for (long i = 0; i < s1.t; ++i) REQUIRE(s1.a[i] * s1.b[i] == 1 + s1.s[i] * s1.q);

    auto rep = check_stage(s1, &s0, pol);
    REQUIRE(rep.all());
    REQUIRE(mod_int(s1.q, s0.q) == 0);
    Rat gap = s1.rotation() - s0.rotation();
    if (gap < 0) gap = -gap;
    REQUIRE(gap > 0);
}

TEST_CASE("perturbing a breaks unimodularity only") {
    GrowthPolicy pol;
    StageParams s0 = init_stage();
    StageParams s1 = next_stage(s0, pol, TranslationWitness::trivial(2));
    s1.a[0] += 1;
    auto rep = check_stage(s1, &s0, pol);
    REQUIRE_FALSE(rep.c2_unimodular);
    REQUIRE_FALSE(rep.all());
}

TEST_CASE("three default stages satisfy every checkable condition") {
    GrowthPolicy pol;
    std::vector<StageParams> stages{init_stage()};
    for (int n = 0; n < 3; ++n) {
        long t_next = stages.back().t << pol.t_exponent(n);
        stages.push_back(next_stage(stages.back(), pol, TranslationWitness::trivial(t_next)));
    }
    for (size_t k = 0; k < stages.size(); ++k) {
        const StageParams* prev = k ? &stages[k - 1] : nullptr;
        auto rep = check_stage(stages[k], prev, pol);
        INFO("stage " << k << ": " << rep.detail);
        REQUIRE(rep.all());
    }
    // q grows by integer factors and rotation gaps shrink
    for (size_t k = 1; k < stages.size(); ++k) {
        REQUIRE(mod_int(stages[k].q, stages[k - 1].q) == 0);
        REQUIRE(stages[k].q > stages[k - 1].q);
    }
}

TEST_CASE("determinism: identical inputs give identical stages") {
    GrowthPolicy pol;
    pol.d_floor = 2;
    StageParams s0 = init_stage();
    TranslationWitness w;
    w.v = {0, 1};
    w.e = 0;
    StageParams a = next_stage(s0, pol, w);
    StageParams b = next_stage(s0, pol, w);
    REQUIRE(a.q == b.q);
    REQUIRE(a.p == b.p);
    REQUIRE(a.a == b.a);
    REQUIRE(a.b == b.b);
    REQUIRE(a.s == b.s);
}

TEST_CASE("stage index mismatch is rejected") {
    GrowthPolicy pol;
    StageParams s0 = init_stage();
    StageParams bad = s0;
    bad.n = 5;
    REQUIRE_THROWS_AS(check_stage(bad, &s0, pol), std::invalid_argument);
}
