#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gk/interval_set.hpp"
#include "gk/rational.hpp"
#include "gk/stage.hpp"

namespace gk {

/// Purely atomic probability measure on [0,1): sorted positions, positive
/// weights summing to one exactly.
struct AtomicMeasure {
    std::vector<std::pair<Rat, Rat>> atoms;  // (position, weight)

    static AtomicMeasure from_atoms(std::vector<std::pair<Rat, Rat>> raw) {
        std::map<Rat, Rat> merged;
        for (auto& [pos, w] : raw) {
            if (w <= 0) throw std::invalid_argument("AtomicMeasure: weights must be positive");
            merged[mod1(pos)] += w;
        }
        AtomicMeasure m;
        Rat total = 0;
        for (auto& [pos, w] : merged) {
            m.atoms.emplace_back(pos, w);
            total += w;
        }
        if (total != 1) throw std::invalid_argument("AtomicMeasure: weights must sum to 1");
        return m;
    }

    /// sigma_n: uniform mass 1/t_n on the rotation multiples (p/q) b(i).
    static AtomicMeasure from_stage(const StageParams& st) {
        std::vector<std::pair<Rat, Rat>> raw;
        Rat w = rat(1, st.t);
        for (long i = 0; i < st.t; ++i) raw.emplace_back(mod1(st.rotation() * Rat(st.b[i])), w);
        return from_atoms(std::move(raw));
    }

    /// Symmetrized measure: half the mass at x, half at -x (mod 1).
    AtomicMeasure symmetrized() const {
        std::vector<std::pair<Rat, Rat>> raw;
        for (const auto& [pos, w] : atoms) {
            raw.emplace_back(pos, w / 2);
            raw.emplace_back(mod1(-pos), w / 2);
        }
        return from_atoms(std::move(raw));
    }
};

inline Rat max_atom_weight(const AtomicMeasure& m) {
    Rat best = 0;
    for (const auto& [pos, w] : m.atoms)
        if (w > best) best = w;
    return best;
}

/// Level-n interval family: t_n half-open intervals of length 1/(n q_n)
/// with left endpoints (p_n/q_n) b_n(i) mod 1.
inline IntervalSet level_set(const StageParams& st) {
    if (st.n < 1) throw std::invalid_argument("level_set: stage index must be >= 1");
    IntervalSet out;
    Rat len = rat(Int(1), Int(st.n) * st.q);
    for (long i = 0; i < st.t; ++i)
        out = out.unite(IntervalSet::mod_interval(st.rotation() * Rat(st.b[i]), len));
    return out;
}

inline bool support_contained(const std::vector<IntervalSet>& levels, const AtomicMeasure& m) {
    for (const auto& lev : levels)
        for (const auto& [pos, w] : m.atoms)
            if (!lev.contains(pos)) return false;
    return true;
}

struct KroneckerResult {
    Int k = 0;
    Rat err;        // max over blocks of circle distance at interval left endpoints
    Rat sup_bound;  // err + k/(n q): uniform bound over the whole level set
    bool within_tol = true;
};

struct KroneckerError : std::runtime_error {
    KroneckerResult best;
    KroneckerError(const std::string& msg, KroneckerResult b) : std::runtime_error(msg), best(std::move(b)) {}
};

/// Smallest k in {0..q-1} minimizing max_i dist(k (p/q) b(i), z_i) on T,
/// compared exactly. Throws (carrying the best k) if even the best k
/// exceeds tol.
inline KroneckerResult kronecker_solve(const std::vector<Rat>& targets, const StageParams& st,
                                       const Rat& tol, int threads = 1) {
    if (targets.size() != static_cast<size_t>(st.t))
        throw std::invalid_argument("kronecker_solve: one target per block required");
    if (st.n < 1) throw std::invalid_argument("kronecker_solve: stage index must be >= 1");

    std::vector<Rat> base(st.t);
    for (long i = 0; i < st.t; ++i) base[i] = mod1(st.rotation() * Rat(st.b[i]));

    long q = to_long(st.q);
    auto err_at = [&](long k) {
        Rat e = 0;
        for (long i = 0; i < st.t; ++i) {
            Rat d = dist_t(mod1(Rat(k) * base[i]), mod1(targets[i]));
            if (d > e) e = d;
        }
        return e;
    };

    auto scan = [&](long lo, long hi) {
        long best_k = lo;
        Rat best_e = err_at(lo);
        for (long k = lo + 1; k < hi; ++k) {
            Rat e = err_at(k);
            if (e < best_e) {
                best_e = e;
                best_k = k;
            }
        }
        return std::make_pair(best_k, best_e);
    };

    long best_k;
    Rat best_e;
    if (threads <= 1 || q < 64) {
        std::tie(best_k, best_e) = scan(0, q);
    } else {
        int nw = threads;
        std::vector<std::pair<long, Rat>> partial(nw, {0, Rat(2)});
        std::vector<std::thread> pool;
        long chunk = (q + nw - 1) / nw;
        for (int w = 0; w < nw; ++w) {
            long lo = w * chunk, hi = std::min(q, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back([&, w, lo, hi] { partial[w] = scan(lo, hi); });
        }
        for (auto& th : pool) th.join();
        best_k = partial[0].first;
        best_e = partial[0].second;
        for (const auto& [k, e] : partial) {  // chunk order: smallest k wins ties
            if (e < best_e) {
                best_e = e;
                best_k = k;
            }
        }
    }

    KroneckerResult res;
    res.k = best_k;
    res.err = best_e;
    res.sup_bound = best_e + rat(Int(best_k), Int(st.n) * st.q);
    res.within_tol = best_e <= tol;
    if (!res.within_tol)
        throw KroneckerError("kronecker_solve: best error " + rat_str(best_e) + " exceeds tol " + rat_str(tol),
                             res);
    return res;
}

/// Piecewise-constant targets from a continuous map sampled at the level-set
/// left endpoints (the reduction used for general continuous functions).
template <typename F>
std::vector<Rat> sample_targets(const StageParams& st, F&& f) {
    std::vector<Rat> out(st.t);
    for (long i = 0; i < st.t; ++i) out[i] = mod1(f(mod1(st.rotation() * Rat(st.b[i]))));
    return out;
}

}  // namespace gk
