#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gk/rational.hpp"
#include "gk/torus.hpp"

namespace gk {

/// One stage of the inductive integer construction: rotation number p/q,
/// block count t (a power of two) and the indexed families a, b, s tied
/// together by a(i)*b(i) - s(i)*q = 1.
struct StageParams {
    int n = 0;
    long t = 1;
    Int p = 1, q = 1;
    std::vector<Int> a, b, s;

    long children_per_block(const StageParams& prev) const { return t / prev.t; }

    /// parent index i' of child index i under the block refinement
    static long parent_index(long i, long t_prev, long t_next) { return i / (t_next / t_prev); }

    Int prod_b() const {
        Int r = 1;
        for (const auto& x : b) r *= x;
        return r;
    }

    Rat rotation() const { return rat(p, q); }

    void validate_shape() const {
        if (t < 1 || !is_pow2(Int(t))) throw std::invalid_argument("stage: t must be a power of 2");
        if (a.size() != static_cast<size_t>(t) || b.size() != static_cast<size_t>(t) ||
            s.size() != static_cast<size_t>(t))
            throw std::invalid_argument("stage: family sizes must equal t");
    }
};

/// The growth maps left unspecified by the underlying construction; fixed
/// here as a monotone parametric family so that runs are reproducible.
/// Defaults: t-exponent n+1, convergence floor 2^n * q * prod(b) * (n+1),
/// witness search bound 3, d floor 1.
struct GrowthPolicy {
    int rt_base = 1;
    int rt_slope = 1;
    Rat conv_scale = Rat(1);  // 0 collapses the convergence floor to 1
    long domain_bound = 3;
    Int d_floor = 1;

    int t_exponent(int n) const {
        long e = rt_base + static_cast<long>(rt_slope) * n;
        return static_cast<int>(std::max(1L, e));
    }

    Int conv_floor(int n, const Int& q, const Int& prod_b_next) const {
        Rat v = conv_scale * Rat(pow2(static_cast<unsigned>(n))) * Rat(q) * Rat(prod_b_next) * Rat(n + 1);
        Int f = ceil_rat(v);
        return f < 1 ? Int(1) : f;
    }

    std::string describe() const {
        return "rt=" + std::to_string(rt_base) + "+" + std::to_string(rt_slope) +
               "*n;conv_scale=" + rat_str(conv_scale) + ";domain_bound=" + std::to_string(domain_bound) +
               ";d_floor=" + int_str(d_floor);
    }
};

/// Per-condition outcome of the stage checks (conditions 1-5; the torus
/// condition 6 is certified separately by the orbit geometry).
struct ConditionReport {
    bool shape_ok = false;        // t power of 2, sizes, positivity, s != 0, gcd(p,q)=1
    bool c1_temporal = false;     // t_{n+1} = 2^{R_t} t_n
    bool c2_unimodular = false;   // a*b - s*q = 1 for all i
    bool c3_q_divides = false;    // q_n | q_{n+1}
    bool c4_a_congruent = false;  // q_n | a_{n+1}(i) - a_n(i')
    bool c5_convergence = false;  // 0 < |p'/q' - p/q| <= 1/R_conv
    bool has_prev = false;
    std::string detail;

    bool all() const {
        bool intra = shape_ok && c2_unimodular;
        if (!has_prev) return intra;
        return intra && c1_temporal && c3_q_divides && c4_a_congruent && c5_convergence;
    }
};

/// Stage 0 of the recursion: t = p = q = 1, a = (2), b = s = (1).
inline StageParams init_stage() {
    StageParams st;
    st.n = 0;
    st.t = 1;
    st.p = 1;
    st.q = 1;
    st.a = {Int(2)};
    st.b = {Int(1)};
    st.s = {Int(1)};
    return st;
}

inline ConditionReport check_stage(const StageParams& st, const StageParams* prev,
                                   const GrowthPolicy& policy) {
    ConditionReport rep;
    rep.has_prev = prev != nullptr;
    if (prev && prev->n != st.n - 1) throw std::invalid_argument("check_stage: stage indices mismatch");

    rep.shape_ok = true;
    std::string why;
    try {
        st.validate_shape();
    } catch (const std::exception& e) {
        rep.shape_ok = false;
        why += std::string(e.what()) + ";";
    }
    if (st.q < 1 || st.p < 1 || gcd_int(st.p, st.q) != 1) {
        rep.shape_ok = false;
        why += "gcd(p,q)!=1;";
    }
    if (rep.shape_ok) {
        for (size_t i = 0; i < st.a.size(); ++i) {
            if (st.a[i] < 1 || st.b[i] < 1 || st.s[i] == 0) {
                rep.shape_ok = false;
                why += "family positivity at i=" + std::to_string(i) + ";";
                break;
            }
        }
    }

    rep.c2_unimodular = rep.shape_ok;
    if (rep.shape_ok) {
        for (size_t i = 0; i < st.a.size(); ++i) {
            if (st.a[i] * st.b[i] - st.s[i] * st.q != 1) {
                rep.c2_unimodular = false;
                why += "unimodularity fails at i=" + std::to_string(i) + ";";
                break;
            }
        }
    }

    if (prev) {
        int e = policy.t_exponent(prev->n);
        rep.c1_temporal = Int(st.t) == pow2(static_cast<unsigned>(e)) * prev->t;
        if (!rep.c1_temporal) why += "t ratio != policy power of 2;";

        rep.c3_q_divides = mod_int(st.q, prev->q) == 0;
        if (!rep.c3_q_divides) why += "q_n does not divide q_{n+1};";

        rep.c4_a_congruent = true;
        long ratio = st.t / prev->t;
        for (long i = 0; i < st.t; ++i) {
            long ip = i / ratio;
            if (mod_int(st.a[i] - prev->a[ip], prev->q) != 0) {
                rep.c4_a_congruent = false;
                why += "a congruence fails at i=" + std::to_string(i) + ";";
                break;
            }
        }

        Rat diff = st.rotation() - prev->rotation();
        if (diff < 0) diff = -diff;
        Int floor = policy.conv_floor(prev->n, prev->q, st.prod_b());
        rep.c5_convergence = diff > 0 && diff * Rat(floor) <= 1;
        if (!rep.c5_convergence) why += "closeness bound fails;";
    }
    rep.detail = why;
    return rep;
}

struct StageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One step of the inductive construction. The witness supplies (v, e); d
/// is the smallest integer >= the policy floor for which a coprime
/// numerator within the closeness bound exists.
inline StageParams next_stage(const StageParams& prev, const GrowthPolicy& policy,
                              const TranslationWitness& witness) {
    prev.validate_shape();
    int texp = policy.t_exponent(prev.n);
    if (texp > 24) throw StageError("next_stage: t exponent too large for materialization");
    long t_next = prev.t << texp;
    long ratio = t_next / prev.t;

    if (witness.v.size() != static_cast<size_t>(t_next))
        throw StageError("next_stage: witness dimension != t_{n+1}");
    if (witness.e < 0 || witness.e > policy.domain_bound)
        throw StageError("next_stage: witness e outside policy bound");
    for (long x : witness.v)
        if (std::abs(x) > policy.domain_bound) throw StageError("next_stage: witness v outside policy bound");

    StageParams st;
    st.n = prev.n + 1;
    st.t = t_next;
    st.a.resize(t_next);
    st.b.resize(t_next);
    st.s.resize(t_next);

    std::vector<Int> mu(t_next);
    Int prod_mu = 1;
    for (long i = 0; i < t_next; ++i) {
        long ip = i / ratio;
        Int w = Int(witness.v[i]) + Int(witness.e) * prev.b[ip];
        st.b[i] = prev.q * witness.v[i] + (Int(witness.e) * prev.q + 1) * prev.b[ip];
        st.s[i] = prev.s[ip] + prev.a[ip] * w;
        mu[i] = prev.b[ip] + prev.q * w;
        if (st.b[i] < 1) throw StageError("next_stage: witness yields b <= 0 at i=" + std::to_string(i));
        if (st.s[i] == 0) throw StageError("next_stage: witness yields s = 0 at i=" + std::to_string(i));
        if (mu[i] < 1) throw StageError("next_stage: witness yields mu <= 0 at i=" + std::to_string(i));
        prod_mu *= mu[i];
    }

    Int prodb = 1;
    for (const auto& x : st.b) prodb *= x;
    Int conv = policy.conv_floor(prev.n, prev.q, prodb);

    Int d = policy.d_floor < 1 ? Int(1) : policy.d_floor;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt, d += 1) {
        Int q_next = prev.q * (1 + d * prod_mu);
        Int quot = q_next / prev.q;
        Int base = prev.p * quot;
        // nearest coprime numerator within the closeness bound, ties upward
        for (Int g = 1; g * conv <= q_next && g <= 4096; g += 1) {
            if (gcd_int(base + g, q_next) == 1) {
                st.p = base + g;
                placed = true;
                break;
            }
            if (base - g >= 1 && gcd_int(base - g, q_next) == 1) {
                st.p = base - g;
                placed = true;
                break;
            }
        }
        if (placed) {
            st.q = q_next;
            for (long i = 0; i < t_next; ++i) {
                long ip = i / ratio;
                Int c = d * st.s[i] * (prod_mu / mu[i]);
                st.a[i] = prev.a[ip] + prev.q * c;
                if (st.a[i] < 1) throw StageError("next_stage: witness yields a <= 0 at i=" + std::to_string(i));
            }
        }
    }
    if (!placed) throw StageError("next_stage: no coprime numerator within the closeness bound");

    // re-verify the identity chain exactly before returning
    for (long i = 0; i < t_next; ++i)
        if (st.a[i] * st.b[i] != 1 + st.s[i] * st.q)
            throw std::logic_error("next_stage: unimodularity chain broken (internal)");
    if (mod_int(st.q, prev.q) != 0) throw std::logic_error("next_stage: q divisibility broken (internal)");
    return st;
}

/// b-tilde: stage-n family with each entry repeated t_{n+1}/t_n times.
inline std::vector<Int> repeat_family(const std::vector<Int>& fam, long ratio) {
    std::vector<Int> out;
    out.reserve(fam.size() * ratio);
    for (const auto& x : fam)
        for (long k = 0; k < ratio; ++k) out.push_back(x);
    return out;
}

}  // namespace gk
