#pragma once

#include <algorithm>
#include <atomic>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gk/rational.hpp"

namespace gk {

/// Point of T^t with exact rational coordinates reduced mod 1.
struct TorusVector {
    std::vector<Rat> coords;

    explicit TorusVector(std::vector<Rat> c) : coords(std::move(c)) {
        for (auto& x : coords) x = mod1(x);
    }
    TorusVector() = default;

    size_t dim() const { return coords.size(); }

    bool operator<(const TorusVector& o) const { return coords < o.coords; }
    bool operator==(const TorusVector& o) const { return coords == o.coords; }
};

/// Perturbation data (v, e) for the next-stage frequency vector, together
/// with the certificate produced by the search.
struct TranslationWitness {
    std::vector<long> v;
    long e = 0;
    Rat certified_diameter = rat(1, 2);  // sup-metric diameter of T^t is 1/2
    Int probe_q = 1;                     // denominator used for the certifying orbit
    bool certified = false;

    static TranslationWitness trivial(size_t t) {
        TranslationWitness w;
        w.v.assign(t, 0);
        return w;
    }
};

/// Cyclic orbit {k * vec mod 1, k = 0..q-1}, duplicates removed.
inline std::vector<TorusVector> orbit(const TorusVector& vec, const Int& q) {
    if (q < 1) throw std::invalid_argument("orbit: q must be >= 1");
    std::set<TorusVector> seen;
    TorusVector cur;
    cur.coords.assign(vec.dim(), Rat(0));
    for (Int k = 0; k < q; k += 1) {
        if (!seen.insert(cur).second) break;  // orbit closed early
        for (size_t i = 0; i < cur.coords.size(); ++i) cur.coords[i] = mod1(cur.coords[i] + vec.coords[i]);
    }
    return std::vector<TorusVector>(seen.begin(), seen.end());
}

struct CoveringOptions {
    int dim_cap = 4;
    long long grid_budget = 400000000;  // grid nodes * points
    int threads = 1;
    bool override_dim_cap = false;
};

namespace detail {

/// Scaled-integer kernel: all coordinates are multiples of 1/den, grid step
/// den/m. Returns max over grid of min over points of the sup-metric
/// distance, scaled by den.
inline long long covering_grid_scan(const std::vector<std::vector<long long>>& pts, long long den,
                                    long long m, int threads) {
    const size_t t = pts[0].size();
    const long long step = den / m;
    std::vector<long long> node(t, 0);
    // flatten grid as mixed-radix counter over m^t nodes
    long long total = 1;
    for (size_t i = 0; i < t; ++i) total *= m;

    auto scan_range = [&](long long lo, long long hi) {
        long long worst = 0;
        std::vector<long long> x(t);
        for (long long idx = lo; idx < hi; ++idx) {
            long long rem = idx;
            for (size_t i = 0; i < t; ++i) {
                x[i] = (rem % m) * step;
                rem /= m;
            }
            long long best = den;  // larger than any sup distance
            for (const auto& p : pts) {
                long long d = 0;
                for (size_t i = 0; i < t; ++i) {
                    long long diff = x[i] - p[i];
                    if (diff < 0) diff = -diff;
                    long long circ = den - diff;
                    if (circ < diff) diff = circ;
                    if (diff > d) d = diff;
                    if (d >= best) break;
                }
                if (d < best) best = d;
                if (best == 0) break;
            }
            if (best > worst) worst = best;
        }
        return worst;
    };

    if (threads <= 1) return scan_range(0, total);
    int nw = threads;
    std::vector<long long> partial(nw, 0);
    std::vector<std::thread> pool;
    long long chunk = (total + nw - 1) / nw;
    for (int w = 0; w < nw; ++w) {
        long long lo = w * chunk, hi = std::min(total, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, w, lo, hi] { partial[w] = scan_range(lo, hi); });
    }
    for (auto& th : pool) th.join();
    long long worst = 0;
    for (long long v : partial) worst = std::max(worst, v);
    return worst;
}

}  // namespace detail

/// Upper bound on sup_{x in T^t} dist(x, points) under the sup-metric,
/// via exhaustive grid search with spacing <= resolution. The returned
/// value R satisfies true <= R <= true + resolution/2.
inline Rat covering_radius(const std::vector<TorusVector>& points, const Rat& resolution,
                           const CoveringOptions& opt = {}) {
    if (points.empty()) throw std::invalid_argument("covering_radius: empty point set");
    if (resolution <= 0) throw std::invalid_argument("covering_radius: resolution must be > 0");
    const size_t t = points[0].dim();
    for (const auto& p : points)
        if (p.dim() != t) throw std::invalid_argument("covering_radius: dimension mismatch");
    if (!opt.override_dim_cap && t > static_cast<size_t>(opt.dim_cap))
        throw std::invalid_argument("covering_radius: dimension " + std::to_string(t) +
                                    " exceeds cap " + std::to_string(opt.dim_cap));

    Int m_big = ceil_rat(1 / resolution);
    long long m = to_long(m_big);

    // common denominator of the grid and all point coordinates
    Int den_big = m_big;
    for (const auto& p : points)
        for (const auto& c : p.coords) den_big = lcm_int(den_big, c.get_den());

    long long nodes = 1;
    for (size_t i = 0; i < t; ++i) {
        if (nodes > opt.grid_budget / m + 1) throw std::runtime_error("covering_radius: grid budget exceeded");
        nodes *= m;
    }
    if (nodes * static_cast<long long>(points.size()) > opt.grid_budget)
        throw std::runtime_error("covering_radius: grid budget exceeded");

    if (den_big.fits_slong_p() && to_long(den_big) <= (1LL << 40)) {
        long long den = to_long(den_big);
        std::vector<std::vector<long long>> pts(points.size(), std::vector<long long>(t));
        for (size_t k = 0; k < points.size(); ++k)
            for (size_t i = 0; i < t; ++i) {
                const Rat& c = points[k].coords[i];
                pts[k][i] = to_long(Int(c.get_num() * (den_big / c.get_den())));
            }
        long long worst = detail::covering_grid_scan(pts, den, m, opt.threads);
        return rat(Int(static_cast<long>(worst)), den_big) + rat(1, 2 * m);
    }

    // exact fallback for huge denominators: rational arithmetic, serial
    Rat worst = 0;
    std::vector<long> idx(t, 0);
    const Rat step = rat(1, m);
    bool done = false;
    while (!done) {
        Rat best = 1;
        for (const auto& p : points) {
            Rat d = 0;
            for (size_t i = 0; i < t; ++i) {
                Rat diff = dist_t(Rat(idx[i]) * step, p.coords[i]);
                if (diff > d) d = diff;
                if (d >= best) break;
            }
            if (d < best) best = d;
        }
        if (best > worst) worst = best;
        size_t pos = 0;
        while (pos < t) {
            if (++idx[pos] < m) break;
            idx[pos] = 0;
            ++pos;
        }
        done = pos == t;
    }
    return worst + rat(1, 2 * m);
}

struct WitnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Deterministic bounded search (lexicographic over e, then v) for a
/// perturbation whose discrete orbit covers T^t within `target`. The
/// candidate denominator is chosen internally so that the orbit samples the
/// translation loop finely enough for the certificate to transfer.
inline TranslationWitness find_witness(const std::vector<Int>& b_tilde, const Int& q_n,
                                       const Rat& target, long bound,
                                       const CoveringOptions& opt = {}) {
    if (b_tilde.empty()) throw std::invalid_argument("find_witness: empty vector");
    if (bound < 1) throw std::invalid_argument("find_witness: bound must be >= 1");
    Int g = b_tilde[0];
    for (const auto& b : b_tilde) g = gcd_int(g, b);
    if (g != 1) throw std::invalid_argument("find_witness: gcd of b_tilde components must be 1");
    if (target <= 0) throw std::invalid_argument("find_witness: target must be > 0");

    const size_t t = b_tilde.size();
    const Rat resolution = target / 4;

    std::vector<long> v(t, -bound);
    for (long e = 0; e <= bound; ++e) {
        std::fill(v.begin(), v.end(), -bound);
        bool done = false;
        while (!done) {
            std::vector<Int> cand(t);
            bool valid = true;
            Int max_abs = 0;
            for (size_t i = 0; i < t; ++i) {
                cand[i] = q_n * v[i] + (e * q_n + 1) * b_tilde[i];
                if (cand[i] < 1) {
                    valid = false;
                    break;
                }
                if (cand[i] > max_abs) max_abs = cand[i];
            }
            if (valid) {
                Int probe_q = std::max(Int(2 * q_n), ceil_rat(Rat(4 * max_abs) / target));
                // prune candidates whose certification would blow the budget
                Rat grid_side = 1 / resolution;
                Rat cost = Rat(probe_q);
                for (size_t i = 0; i < t; ++i) cost *= grid_side;
                bool affordable = probe_q <= 200000 && cost <= Rat(Int(static_cast<long>(opt.grid_budget)));
                bool ok = false;
                Rat radius;
                if (affordable) {
                    std::vector<Rat> vec(t);
                    for (size_t i = 0; i < t; ++i) vec[i] = mod1(rat(cand[i], probe_q));
                    auto pts = orbit(TorusVector(vec), probe_q);
                    try {
                        radius = covering_radius(pts, resolution, opt);
                        ok = radius <= target;
                    } catch (const std::runtime_error&) {
                        ok = false;  // budget blown for this candidate; keep searching
                    }
                }
                if (ok) {
                    TranslationWitness w;
                    w.v = v;
                    w.e = e;
                    w.certified_diameter = radius;
                    w.probe_q = probe_q;
                    w.certified = true;
                    return w;
                }
            }
            // lexicographic increment (last coordinate fastest)
            size_t pos = t;
            while (pos > 0) {
                --pos;
                if (++v[pos] <= bound) break;
                v[pos] = -bound;
                if (pos == 0) done = true;
            }
        }
    }
    throw WitnessError("find_witness: no witness within bound " + std::to_string(bound));
}

}  // namespace gk
