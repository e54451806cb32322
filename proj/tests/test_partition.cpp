#include <catch2/catch_amalgamated.hpp>

#include "gk/partition.hpp"

using namespace gk;

namespace {

// unimodular pair with q_n = 3, t_n = 2 and q' = 15, t' = 4 (trivial
// witness, d = 1 under a unit convergence floor)
StagePair tiny_pair() {
    StagePair pr;
    pr.base.n = 1;
    pr.base.t = 2;
    pr.base.p = 2;
    pr.base.q = 3;
    pr.base.a = {Int(4), Int(2)};
    pr.base.b = {Int(1), Int(2)};
    pr.base.s = {Int(1), Int(1)};
    pr.next.n = 2;
    pr.next.t = 4;
    pr.next.p = 11;
    pr.next.q = 15;
    pr.next.a = {Int(16), Int(16), Int(8), Int(8)};
    pr.next.b = {Int(1), Int(1), Int(2), Int(2)};
    pr.next.s = {Int(1), Int(1), Int(1), Int(1)};
    pr.t_prev = 2;
    return pr;
}

SliceParams tiny_slices() {
    SliceParams sp;
    sp.v = 2;
    sp.y = 2;
    sp.rho = 1;
    sp.w = 2;
    sp.u = 7;
    sp.lambda = 1;
    sp.wp = 1;
    sp.up = 5;
    sp.lambdap = 0;
    return sp;
}

// smallest trivial-witness stage-0 successor whose refinement floors are
// feasible at the given budgets
StagePair feasible_pair(Rat eps0p, Rat eps1p, SliceParams& sp_out) {
    GrowthPolicy pol;
    StageParams s0 = init_stage();
    for (long d = 1; d < 100000; ++d) {
        pol.d_floor = d;
        StageParams s1 = next_stage(s0, pol, TranslationWitness::trivial(2));
        StagePair pr{s0, s1, 1};
        try {
            sp_out = SliceParams::derive(pr, eps0p, eps1p);
            return pr;
        } catch (const InfeasibleError&) {
        }
    }
    throw std::runtime_error("no feasible stage found");
}

}  // namespace

TEST_CASE("h permutation matches the interleaving formula") {
    // t_{n-1} = 2, t_n = 4: h = (0, 2, 1, 3)
    REQUIRE(h_map(2, 4, 0) == 0);
    REQUIRE(h_map(2, 4, 1) == 2);
    REQUIRE(h_map(2, 4, 2) == 1);
    REQUIRE(h_map(2, 4, 3) == 3);
    for (long i = 0; i < 12; ++i) REQUIRE(h_inv(3, 12, h_map(3, 12, i)) == i);
}

TEST_CASE("eta at t=1 q=2 is the two half-circle cells") {
    StageParams st;
    st.n = 1;
    st.t = 1;
    st.p = 1;
    st.q = 2;
    st.a = {Int(1)};
    st.b = {Int(1)};
    st.s = {Int(0)};
    auto part = build_eta(st);
    REQUIRE(part.labels.size() == 2);
    REQUIRE(part.cells[0].measure() == rat(1, 2));
    REQUIRE(part.cells[1].measure() == rat(1, 2));
    REQUIRE(part.total_measure() == 1);
}

TEST_CASE("rotation by 1/q permutes every sub-partition cyclically") {
    auto pr = tiny_pair();
    long q = to_long(pr.base.q);
    for (long i = 0; i < pr.base.t; ++i)
        for (long l = 0; l < q; ++l) {
            GeomSet cell = delta_cell(q, i, l);
            GeomSet moved = cell.translate_z(rat(1, q));
            REQUIRE(moved.equals_mod_null(delta_cell(q, i, l + 1)));
        }
}

TEST_CASE("sub-partitions are exactly independent") {
    auto pr = tiny_pair();
    long q = to_long(pr.base.q);
    for (long l0 = 0; l0 < q; ++l0)
        for (long l1 = 0; l1 < q; ++l1) {
            GeomSet A = delta_cell(q, 0, l0);
            GeomSet B = delta_cell(q, 1, l1);
            REQUIRE(A.intersection_measure(B) == A.measure() * B.measure());
        }
    // joint cells have measure q^-t and sum to 1
    auto part = build_eta(pr.base);
    for (const auto& c : part.cells) REQUIRE(c.measure() == rat(1, q * q));
    REQUIRE(part.total_measure() == 1);
}

TEST_CASE("K maps sectors by modular multiplication") {
    // q = 5, a = 2: l = 1,2,3 -> 2,4,1
    StageParams st;
    st.n = 1;
    st.t = 1;
    st.p = 1;
    st.q = 5;
    st.a = {Int(2)};
    st.b = {Int(3)};
    st.s = {Int(1)};
    auto K = build_K(st, 1);
    REQUIRE(K.apply({1}) == Label{2});
    REQUIRE(K.apply({2}) == Label{4});
    REQUIRE(K.apply({3}) == Label{1});
    REQUIRE(K.is_bijection());
}

TEST_CASE("K is equivariant: multiply after shift equals rotate after multiply") {
    auto pr = tiny_pair();
    auto K = build_K(pr.base, pr.t_prev);
    long q = to_long(pr.base.q);
    long p = to_long(pr.base.p);
    for (const auto& [sym, eta] : K.fwd) {
        Label shifted = sym;
        for (long i = 0; i < pr.base.t; ++i)
            shifted[i] =
                static_cast<int>((shifted[i] + to_long(mod_int(pr.base.p * pr.base.b[i], pr.base.q))) % q);
        Label rotated = eta;
        for (auto& m : rotated) m = static_cast<int>((m + p) % q);
        REQUIRE(K.apply(shifted) == rotated);
    }
}

TEST_CASE("verify_diagram accepts identities and localizes a transposition") {
    auto pr = tiny_pair();
    auto K = build_K(pr.base, pr.t_prev);
    auto idK = identity_map_like(K);
    AlgebraMap idEta;
    for (const auto& [k, v] : K.fwd) idEta.fwd[v] = v;

    REQUIRE(verify_diagram(K, idK, K, idEta).commutes);

    AlgebraMap broken = idEta;
    auto it = broken.fwd.begin();
    auto jt = std::next(it);
    std::swap(it->second, jt->second);
    auto res = verify_diagram(K, idK, K, broken);
    REQUIRE_FALSE(res.commutes);
    REQUIRE((K.apply(res.counterexample) == it->first || K.apply(res.counterexample) == jt->first));
}

TEST_CASE("stacking formulas: b = 1 collapses to one full run") {
    auto pr = tiny_pair();
    auto rep = stacking(pr.next, Int(2));
    // block 0 has b = 1: f = v-1 = 1, m = 0, single run of width 2
    REQUIRE(rep.f[0] == 1);
    REQUIRE(rep.m[0] == 0);
    long lines0 = 0;
    for (const auto& ln : rep.lines)
        if (ln.i == 0) {
            ++lines0;
            REQUIRE(ln.width == 2);
            REQUIRE(ln.k == 0);
            REQUIRE(ln.r == 0);  // l = 0: k = r = 0, run starts at 0
            REQUIRE(ln.start == 0);
        }
    REQUIRE(lines0 == 1);
    // block 2 has b = 2, a = 8: f = 0, m = 1: widths (1, 1)
    std::vector<long> widths2;
    for (const auto& ln : rep.lines)
        if (ln.i == 2) widths2.push_back(to_long(ln.width));
    REQUIRE(widths2 == std::vector<long>{1, 1});
}

TEST_CASE("degenerate window gives a flagged empty report") {
    auto pr = tiny_pair();
    auto rep = stacking(pr.next, Int(0));
    REQUIRE(rep.degenerate);
    REQUIRE(rep.lines.empty());
}

TEST_CASE("stacked closed form equals the brute-force image") {
    auto pr = tiny_pair();
    auto sp = tiny_slices();
    sp.validate(pr);
    auto rep_v = stacking(pr.next, sp.v);
    auto rep_rho = stacking(pr.next, sp.rho);
    long qn = to_long(pr.base.q);
    for (long i = 0; i < pr.next.t; ++i)
        for (long gamma = 0; gamma < qn; ++gamma)
            for (long j = 0; j < sp.n_classes(); ++j) {
                GeomSet brute = gamma_tilde(pr, i, gamma, j, sp);
                const auto& rep = (j < to_long(sp.y)) ? rep_v : rep_rho;
                GeomSet closed = gamma_tilde_stacked(pr, i, gamma, j, sp, rep);
                INFO("i=" << i << " gamma=" << gamma << " j=" << j);
                REQUIRE(brute.measure() == closed.measure());
                REQUIRE(brute.equals_mod_null(closed));
            }
}

TEST_CASE("analytic classification is balanced and equivariant") {
    auto pr = tiny_pair();
    auto sp = tiny_slices();
    auto ec = analytic_e_classification(pr, sp);
    REQUIRE(ec.counts_balanced);
    long qn = to_long(pr.base.q);
    for (long ip = 0; ip < pr.base.t; ++ip) {
        long shift = to_long(mod_int(pr.base.p * pr.base.b[ip], pr.base.q));
        for (const auto& [tuple, l] : ec.parent(ip)) {
            Label moved = tuple;
            for (long c = 0; c < pr.ratio(); ++c)
                moved[2 * c] = static_cast<int>((moved[2 * c] + shift) % qn);
            REQUIRE(ec.parent(ip).at(moved) == (l + shift) % qn);
        }
    }
}

TEST_CASE("refined partitions: equivariance, stability and exact measures") {
    auto pr = tiny_pair();
    auto sp = tiny_slices();
    auto ec = analytic_e_classification(pr, sp);
    auto ref = build_eta_prime(pr, sp, ec);
    REQUIRE(ref.exact_equivariant);
    REQUIRE(ref.approx_stable);
    REQUIRE(ref.max_cell_defect == 0);
    REQUIRE(ref.distance >= 0);
    // both families partition M exactly
    Rat tot_exact = 0, tot_approx = 0;
    long qn = to_long(pr.base.q);
    for (long l = 0; l < qn; ++l) {
        tot_exact += ref.exact[0][l].measure();
        tot_approx += ref.approx[0][l].measure();
    }
    REQUIRE(tot_exact == 1);
    REQUIRE(tot_approx == 1);
}

TEST_CASE("slice floors: feasibility scan finds a smallest stage") {
    SliceParams sp;
    StagePair pr = feasible_pair(rat(1, 2), rat(1, 2), sp);
    sp.validate(pr);
    REQUIRE(sp.v >= 1);
    REQUIRE(sp.w >= 1);
    REQUIRE(sp.wp >= 1);
}

TEST_CASE("P0: certificate, invariance and slice containment at the feasible stage") {
    SliceParams sp;
    StagePair pr = feasible_pair(rat(1, 2), rat(1, 2), sp);
    auto p0 = build_P0(pr, sp, rat(1, 2));
    REQUIRE(p0.certificate_ok());
    REQUIRE(p0.core_measure >= rat(1, 2));
    REQUIRE(p0.rotation_invariant);
    REQUIRE(p0.containment_ok);
    // the family tiles the circle exactly
    Rat total = 0;
    for (const auto& c : p0.cells) total += c.width;
    REQUIRE(total == 1);
}

TEST_CASE("eta-prime distance at the feasible stage is within the budget") {
    SliceParams sp;
    StagePair pr = feasible_pair(rat(1, 2), rat(1, 2), sp);
    auto ec = analytic_e_classification(pr, sp);
    auto ref = build_eta_prime(pr, sp, ec);
    REQUIRE(ref.exact_equivariant);
    REQUIRE(ref.approx_stable);
    // n = 0 budget: distance <= 1/2^0 = 1
    REQUIRE(ref.distance <= 1);
    REQUIRE(ref.distance >= 0);
}

TEST_CASE("infeasible floors report the minimal q") {
    auto pr = tiny_pair();  // q' = 15 is far below the true floors
    try {
        SliceParams::derive(pr, Rat(1), Rat(1));
        FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
        REQUIRE(e.minimal_q > pr.next.q);
    }
}
