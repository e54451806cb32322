#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "gk/grid_map.hpp"
#include "gk/partition.hpp"

namespace gk {

// ---------------------------------------------------------------------------
// the elementary smooth exchange
// ---------------------------------------------------------------------------

/// Canonical half-turn machine on the plane. The level function
/// G(X,Y) = (|X|^{2k} + |2Y|^{2k})^{1/2k} has superellipse contours around
/// the rectangle [-1,1] x [-1/2,1/2]; G is 1-homogeneous, so the Hamiltonian
/// period at level l is T(l) = A'(l) = 2 l A1 with A1 = area{G <= 1}. The
/// map advances each contour by phi * s(l) * T(l)/2: an exact central
/// symmetry on the core (s = 1, where the half-period flow IS the point
/// reflection, G being even), tapering to the identity across the shell.
struct CapsuleSwap {
    int k = 32;
    double ell1 = 0.0, ell2 = 0.0;  // core and outer levels
    double A1 = 0.0;                // area inside {G <= 1}

    static CapsuleSwap make(int k_ = 32, double delta1 = 0.004, double delta2 = 0.004) {
        CapsuleSwap cs;
        cs.k = k_;
        double g0 = std::pow(2.0, 1.0 / (2.0 * k_));  // level through the rectangle corners
        cs.ell1 = g0 * (1.0 + delta1);
        cs.ell2 = cs.ell1 * (1.0 + delta2);
        // area of |X|^{2k} + |2Y|^{2k} <= 1 equals 2 Gamma(1+1/2k)^2 / Gamma(1+1/k)
        double a = std::lgamma(1.0 + 1.0 / (2.0 * k_));
        double b = std::lgamma(1.0 + 1.0 / k_);
        cs.A1 = 2.0 * std::exp(2.0 * a - b);
        return cs;
    }

    double level(double X, double Y) const {
        double ax = std::pow(std::abs(X), 2.0 * k);
        double ay = std::pow(std::abs(2.0 * Y), 2.0 * k);
        return std::pow(ax + ay, 1.0 / (2.0 * k));
    }

    void grad(double X, double Y, double& gx, double& gy) const {
        double g = level(X, Y);
        if (g == 0.0) {
            gx = gy = 0.0;
            return;
        }
        double common = std::pow(g, 1.0 - 2.0 * k);
        gx = common * std::pow(std::abs(X), 2.0 * k - 1.0) * (X >= 0 ? 1.0 : -1.0);
        gy = common * 2.0 * std::pow(std::abs(2.0 * Y), 2.0 * k - 1.0) * (Y >= 0 ? 1.0 : -1.0);
    }

    double taper(double ell) const { return 1.0 - smoothstep((ell - ell1) / (ell2 - ell1)); }

    /// time-tt flow of (dX,dY)/dt = grad^perp G (implicit midpoint)
    void flow(double& X, double& Y, double tt) const {
        int steps = std::max(96, static_cast<int>(std::ceil(std::abs(tt) * 24.0 * k)));
        if (steps > 8192) steps = 8192;
        double h = tt / steps;
        for (int s = 0; s < steps; ++s) {
            double xm = X, ym = Y;
            for (int it = 0; it < 12; ++it) {
                double gx, gy;
                grad((X + xm) / 2.0, (Y + ym) / 2.0, gx, gy);
                double nx = X + h * (-gy);
                double ny = Y + h * gx;
                double delta = std::abs(nx - xm) + std::abs(ny - ym);
                xm = nx;
                ym = ny;
                if (delta < 1e-15) break;
            }
            X = xm;
            Y = ym;
        }
    }

    /// phi in [0,1]: plateau modulation of the flow time; dir = +1/-1
    void apply(double& X, double& Y, double phi, int dir) const {
        double ell = level(X, Y);
        if (ell >= ell2 || phi <= 0.0) return;
        double s = taper(ell);
        if (s <= 0.0) return;
        if (phi >= 1.0 && s >= 1.0) {  // exact half turn on the core
            X = -X;
            Y = -Y;
            return;
        }
        flow(X, Y, dir * phi * s * ell * A1);
    }
};

inline const CapsuleSwap& canonical_capsule() {
    static CapsuleSwap cs = CapsuleSwap::make();
    return cs;
}

/// One localized exchange: two congruent boxes symmetric about
/// (ucen, vcen) in the (cu, cv)-plane, exchanged by the capsule half turn.
/// An optional plateau over other coordinates gates the flow time, which
/// keeps the field divergence-free, so the Jacobian stays 1 everywhere.
struct PlaneSwap {
    int cu = 0, cv = 1;
    double ucen = 0, vcen = 0;
    double su = 1, sv = 1;  // canonical X,Y scales
    bool u_wraps = false;   // cu is the circle coordinate
    Plateau mask;           // over coordinates disjoint from {cu, cv}
    bool has_mask = false;

    void apply(VecD& x, int dir, const CapsuleSwap& cs) const {
        double du = u_wraps ? wrap_diff(x[cu], ucen) : x[cu] - ucen;
        double X = du / su;
        if (std::abs(X) >= cs.ell2) return;
        double Y = (x[cv] - vcen) / sv;
        if (std::abs(Y) >= cs.ell2 / 2.0) return;
        double phi = has_mask ? mask.value(x) : 1.0;
        if (phi <= 0.0) return;
        cs.apply(X, Y, phi, dir);
        double u = ucen + X * su;
        x[cu] = u_wraps ? wrap_unit(u) : u;
        x[cv] = vcen + Y * sv;
    }
};

/// Fibered circle shift: z += amount * plateau(other coordinates). Exactly
/// measure-preserving and exactly invertible; commutes with every rigid
/// rotation of z.
struct FiberShift {
    double amount = 0.0;
    Plateau mask;
    bool has_mask = false;

    void apply(VecD& x, int dir) const {
        double phi = has_mask ? mask.value(x) : 1.0;
        if (phi == 0.0) return;
        x[0] = wrap_unit(x[0] + dir * amount * phi);
    }
};

struct SwapStep {
    enum class Kind { Swap, Shift } kind = Kind::Swap;
    PlaneSwap swap;
    FiberShift shift;
};

/// Composition of localized steps; the inverse runs them backwards.
struct SwapStack {
    std::vector<SwapStep> steps;
    int dim = 1;

    void push(PlaneSwap sw) {
        SwapStep st;
        st.kind = SwapStep::Kind::Swap;
        st.swap = std::move(sw);
        steps.push_back(std::move(st));
    }

    void push(FiberShift sh) {
        SwapStep st;
        st.kind = SwapStep::Kind::Shift;
        st.shift = std::move(sh);
        steps.push_back(std::move(st));
    }

    VecD fwd(const VecD& x) const {
        VecD y = x;
        const CapsuleSwap& cs = canonical_capsule();
        for (const auto& s : steps) {
            if (s.kind == SwapStep::Kind::Swap)
                s.swap.apply(y, +1, cs);
            else
                s.shift.apply(y, +1);
        }
        return y;
    }

    VecD inv(const VecD& x) const {
        VecD y = x;
        const CapsuleSwap& cs = canonical_capsule();
        for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
            if (it->kind == SwapStep::Kind::Swap)
                it->swap.apply(y, -1, cs);
            else
                it->shift.apply(y, -1);
        }
        return y;
    }
};

// ---------------------------------------------------------------------------
// quasi-permutations of cube cells
// ---------------------------------------------------------------------------

struct QuasiPermutation {
    std::vector<PlaneSwap> steps;
    long elementary_swaps = 0;
};

namespace detail {

/// adjacent transposition chain realizing (A B) while fixing other cells:
/// A walks to B coordinate by coordinate, then the displaced B walks back.
inline std::vector<std::pair<Label, Label>> transposition_path(const Label& A, const Label& B) {
    std::vector<std::pair<Label, Label>> moves;
    Label cur = A;
    for (size_t c = 0; c < A.size(); ++c) {
        while (cur[c] != B[c]) {
            Label nxt = cur;
            nxt[c] += (B[c] > cur[c]) ? 1 : -1;
            moves.emplace_back(cur, nxt);
            cur = nxt;
        }
    }
    if (moves.size() > 1)
        for (size_t k = moves.size() - 1; k-- > 0;) moves.emplace_back(moves[k].first, moves[k].second);
    return moves;
}

}  // namespace detail

/// Realizes a permutation of the full-width cells of a cube-cell grid over
/// `coords` (at least two coordinates) as localized plane exchanges. The
/// remainder cells must be fixed points of sigma.
inline QuasiPermutation quasi_permutation(const std::map<Label, Label>& sigma,
                                          const std::vector<int>& coords, const CubeCells& pc,
                                          double eps, const Plateau* mask = nullptr,
                                          double mask_eps_frac = 0.10) {
    if (coords.size() < 2) throw std::invalid_argument("quasi_permutation: need >= 2 coordinates");
    long full = to_long(pc.u);
    if (eps <= 0 || eps >= 1.0 / (2.0 * static_cast<double>(full)))
        throw std::invalid_argument("quasi_permutation: eps outside (0, 1/(2u))");
    const CapsuleSwap& cs = canonical_capsule();
    double w = to_double(rat(pc.w, pc.qp));

    // cycle decomposition -> transpositions
    std::map<Label, Label> rest = sigma;
    std::vector<std::pair<Label, Label>> transpositions;
    while (!rest.empty()) {
        Label start = rest.begin()->first;
        std::vector<Label> cycle;
        Label cur = start;
        while (true) {
            auto it = rest.find(cur);
            if (it == rest.end()) break;
            cycle.push_back(cur);
            Label nxt = it->second;
            rest.erase(it);
            cur = nxt;
            if (cur == start) break;
        }
        for (size_t i = 0; i + 1 < cycle.size(); ++i) transpositions.emplace_back(cycle[i], cycle[i + 1]);
    }

    QuasiPermutation qp;
    for (const auto& [A, B] : transpositions) {
        for (const auto& [from, to] : detail::transposition_path(A, B)) {
            size_t c = 0;
            while (from[c] == to[c]) ++c;
            long j = std::min(from[c], to[c]);
            if (j + 1 >= full) throw std::invalid_argument("quasi_permutation: route crosses the remainder cell");
            size_t cv_slot = (c == 0 ? 1 : 0);
            PlaneSwap sw;
            sw.cu = coords[c];
            sw.cv = coords[cv_slot];
            sw.u_wraps = false;
            sw.ucen = (j + 1) * w;
            sw.su = w;
            Interval vcell = pc.cell(from[cv_slot]);
            double v0 = to_double(vcell.a), v1 = to_double(vcell.b);
            sw.vcen = (v0 + v1) / 2.0;
            sw.sv = (v1 - v0) / cs.ell2;  // inscribed: identity outside the band
            double avail = std::min(sw.ucen, 1.0 - sw.ucen);
            if (cs.ell2 * sw.su > avail) sw.su = avail / cs.ell2;
            // plateau over the remaining tuple coordinates plus the caller mask
            std::vector<std::pair<int, std::pair<double, double>>> box;
            for (size_t o = 0; o < coords.size(); ++o) {
                if (o == c || o == cv_slot) continue;
                Interval oiv = pc.cell(from[o]);
                box.emplace_back(coords[o], std::make_pair(to_double(oiv.a), to_double(oiv.b)));
            }
            if (mask)
                for (const auto& [mc, miv] : mask->box) box.emplace_back(mc, miv);
            if (!box.empty()) {
                double width = 2.0;
                for (auto& [mc, miv] : box) width = std::min(width, miv.second - miv.first);
                sw.mask = Plateau::over(box, width * mask_eps_frac);
                sw.has_mask = true;
            }
            qp.steps.push_back(std::move(sw));
            ++qp.elementary_swaps;
        }
    }
    qp.elementary_swaps = static_cast<long>(qp.steps.size());
    return qp;
}

// ---------------------------------------------------------------------------
// equivariant circle-cell permutations (the A_0 layer)
// ---------------------------------------------------------------------------

namespace detail {

/// Core z-cells sorted by start; the rotation R_{1/q} shifts the index by
/// per_sector.
struct CoreCells {
    std::vector<Rat> starts;
    Rat width = 0;
    long per_sector = 0;
    long qn = 1;

    long size() const { return static_cast<long>(starts.size()); }

    long index_of(const Rat& s) const {
        auto it = std::lower_bound(starts.begin(), starts.end(), s);
        if (it == starts.end() || *it != s) return -1;
        return static_cast<long>(it - starts.begin());
    }
};

inline CoreCells collect_core(const P0Result& p0, long qn) {
    CoreCells cc;
    cc.qn = qn;
    for (const auto& c : p0.cells)
        if (c.core) {
            cc.starts.push_back(c.start);
            cc.width = c.width;
        }
    std::sort(cc.starts.begin(), cc.starts.end());
    if (cc.starts.size() % qn != 0) throw std::logic_error("core cells not rotation-balanced");
    cc.per_sector = cc.size() / qn;
    return cc;
}

/// Word in the equivariant generators realizing a rotation-commuting
/// permutation of Z_K: s_t (t in [0, P)) swaps positions (t + gP, t+1 + gP)
/// for every g; r/-r shifts every position by P (one sector). Breadth-first
/// search over the (small) centralizer of the shift.
struct EquivariantWord {
    std::vector<int> ops;  // t >= 0: family s_t; -1: +P shift; -2: -P shift
};

inline EquivariantWord realize_equivariant(const std::vector<long>& target_arr, long P, long K) {
    auto apply_op = [&](std::vector<long> st, int op) {
        if (op == -1) {
            std::vector<long> out(K);
            for (long x = 0; x < K; ++x) out[(x + P) % K] = st[x];
            return out;
        }
        if (op == -2) {
            std::vector<long> out(K);
            for (long x = 0; x < K; ++x) out[(x - P + K) % K] = st[x];
            return out;
        }
        for (long g = 0; g * P + op + 1 <= K; g += 1) {
            long a = (op + g * P) % K, b = (op + g * P + 1) % K;
            std::swap(st[a], st[b]);
        }
        return st;
    };

    std::vector<long> ident(K);
    std::iota(ident.begin(), ident.end(), 0);
    if (target_arr == ident) return {};

    std::vector<int> gens;
    if (P >= 2)
        for (int t = 0; t < P; ++t) gens.push_back(t);
    gens.push_back(-1);
    gens.push_back(-2);

    std::map<std::vector<long>, std::pair<std::vector<long>, int>> parent;
    std::deque<std::vector<long>> queue{ident};
    parent[ident] = {ident, -99};
    long explored = 0;
    while (!queue.empty()) {
        auto st = queue.front();
        queue.pop_front();
        if (++explored > 2000000) break;
        for (int op : gens) {
            auto nx = apply_op(st, op);
            if (parent.count(nx)) continue;
            parent[nx] = {st, op};
            if (nx == target_arr) {
                EquivariantWord w;
                std::vector<long> cur = nx;
                while (parent[cur].second != -99) {
                    w.ops.push_back(parent[cur].second);
                    cur = parent[cur].first;
                }
                std::reverse(w.ops.begin(), w.ops.end());
                return w;
            }
            queue.push_back(std::move(nx));
        }
    }
    throw std::runtime_error("realize_equivariant: target outside the generated subgroup");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// assembling the stage conjugacy
// ---------------------------------------------------------------------------

struct AssembleReport {
    double equivariance_residual = 0.0;
    double min_transport_fraction = 1.0;
    double jacobian_max_dev = 0.0;
    double inverse_residual = 0.0;
    double norm_value = 0.0;
    int norm_order = 0;
    long swap_count = 0;
    std::vector<double> transport_by_block;
};

struct AssembleInputs {
    StagePair pr;
    SliceParams sp;
    const RefinedPartitions* ref = nullptr;
    const P0Result* p0 = nullptr;
    double eps = 0.0625;
    double mask_eps_frac = 0.10;
};

namespace detail {

/// z-section of a box union over a cube band: the union of z-intervals of
/// boxes whose cube axes contain the band cells.
inline IntervalSet z_section(const GeomSet& set, const std::vector<std::pair<int, Interval>>& band) {
    std::vector<Interval> pieces;
    for (const auto& bx : set.boxes()) {
        bool covers = true;
        for (const auto& [c, iv] : band) {
            const Interval* have = bx.axis(c);
            if (have && !(have->a <= iv.a && iv.b <= have->b)) {
                covers = false;
                break;
            }
        }
        if (!covers) continue;
        const Interval* z = bx.axis(0);
        pieces.push_back(z ? *z : Interval{Rat(0), Rat(1)});
    }
    return IntervalSet(std::move(pieces));
}

inline std::vector<Label> enumerate_tuples(size_t len, long limit) {
    std::vector<Label> out;
    if (len == 0) {
        out.push_back({});
        return out;
    }
    Label t(len, 0);
    while (true) {
        out.push_back(t);
        size_t pos = len;
        bool done = false;
        while (pos > 0) {
            --pos;
            if (++t[pos] < limit) break;
            t[pos] = 0;
            if (pos == 0) done = true;
        }
        if (done) break;
    }
    return out;
}

}  // namespace detail

/// A = A_{t_n-1} o ... o A_1 o A_0 for one stage pair. A_0 moves core
/// z-cells onto the fundamental domains R^(m) band by band (equivariant
/// swap families plus fibered sector shifts); each A_i matches the rotated
/// level-n staircase against the approximated refinement with plateau-gated
/// quasi-permutations of the J(i)-cells.
inline GridDiffeo assemble_A(const AssembleInputs& in, const std::vector<int>& grid_res,
                             AssembleReport& rep) {
    const StagePair& pr = in.pr;
    const SliceParams& sp = in.sp;
    const RefinedPartitions& ref = *in.ref;
    const P0Result& p0 = *in.p0;
    long qn = to_long(pr.base.q);
    long ratio = pr.ratio();
    int dim = static_cast<int>(pr.next.t);
    const CapsuleSwap& cs = canonical_capsule();

    detail::CoreCells cores = detail::collect_core(p0, qn);
    CubeCells pc{sp.w, sp.u, sp.lambda, pr.next.q};
    double wprime = to_double(cores.width);
    long K = cores.size();
    long P = cores.per_sector;

    auto Jset = [&](long ip) {
        std::vector<int> J;
        for (long c = 0; c < ratio; ++c) J.push_back(static_cast<int>(pr.h_next(ip * ratio + c)));
        return J;
    };
    std::vector<int> J0 = Jset(0);
    std::vector<int> band_coords(J0.begin() + 1, J0.end());

    std::vector<Label> bands = detail::enumerate_tuples(band_coords.size(), pc.count());

    SwapStack stack;
    stack.dim = dim;

    // ---- A_0: per band, realize sigma(band) equivariantly
    std::map<Label, std::vector<long>> sigma_by_band;
    for (const auto& band : bands) {
        std::vector<std::pair<int, Interval>> band_box;
        bool full_band = true;
        for (size_t k = 0; k < band_coords.size(); ++k) {
            Interval iv = pc.cell(band[k]);
            band_box.emplace_back(band_coords[k], iv);
            if (band[k] >= to_long(pc.u)) full_band = false;
        }

        // sigma is built on the sector-0 representatives and extended by
        // rotation, so it commutes with R_{1/q_n} by construction. A
        // fundamental domain meets each rotation orbit of cells once, so
        // the targets pick distinct orbits.
        std::vector<long> sigma(K);
        std::iota(sigma.begin(), sigma.end(), 0);
        if (full_band && K > 0) {
            IntervalSet Rm = detail::z_section(ref.approx[0][0], band_box);
            std::vector<long> dst0;
            std::vector<char> orbit_used(P, 0);
            for (long k = 0; k < K; ++k) {
                if (!Rm.contains(cores.starts[k] + cores.width / 2)) continue;
                long orbit = k % P;
                if (orbit_used[orbit]) continue;
                orbit_used[orbit] = 1;
                dst0.push_back(k);
                if (static_cast<long>(dst0.size()) == P) break;
            }
            for (long orbit = 0; orbit < P && static_cast<long>(dst0.size()) < P; ++orbit)
                if (!orbit_used[orbit]) {
                    orbit_used[orbit] = 1;
                    dst0.push_back(orbit);
                }
            for (long j = 0; j < P; ++j)
                for (long g = 0; g < qn; ++g) sigma[(j + g * P) % K] = (dst0[j] + g * P) % K;
        }
        sigma_by_band[band] = sigma;
        if (!full_band) continue;

        // target arrangement: cell c ends at slot sigma[c]
        std::vector<long> target(K);
        for (long c = 0; c < K; ++c) target[sigma[c]] = c;
        detail::EquivariantWord word = detail::realize_equivariant(target, P, K);

        int cv = band_coords.empty() ? 1 : band_coords[0];
        double v0 = band_coords.empty() ? 0.0 : to_double(band_box[0].second.a);
        double v1 = band_coords.empty() ? 1.0 : to_double(band_box[0].second.b);
        std::vector<std::pair<int, std::pair<double, double>>> maskbox;
        for (size_t k = 1; k < band_box.size(); ++k)
            maskbox.emplace_back(band_box[k].first, std::make_pair(to_double(band_box[k].second.a),
                                                                   to_double(band_box[k].second.b)));

        for (int op : word.ops) {
            if (op < 0) {
                FiberShift sh;
                sh.amount = (op == -1 ? 1.0 : -1.0) / static_cast<double>(qn);
                std::vector<std::pair<int, std::pair<double, double>>> box;
                box.emplace_back(cv, std::make_pair(v0, v1));
                for (auto& m : maskbox) box.push_back(m);
                double width = 2.0;
                for (auto& [mc, miv] : box) width = std::min(width, miv.second - miv.first);
                sh.mask = Plateau::over(box, width * in.mask_eps_frac);
                sh.has_mask = true;
                stack.push(sh);
                continue;
            }
            // swap family s_op: q_n simultaneous adjacent-cell exchanges
            for (long g = 0; g < qn; ++g) {
                long a = (op + g * P) % K;
                long b = (a + 1) % K;
                double sa = to_double(cores.starts[a]);
                double sb = to_double(cores.starts[b]);
                double gap = sb - sa;
                if (b == 0) gap += 1.0;
                PlaneSwap sw;
                sw.cu = 0;
                sw.cv = cv;
                sw.u_wraps = true;
                sw.ucen = wrap_unit(sa + (gap + wprime) / 2.0);
                sw.su = (gap + wprime) / 2.0;
                sw.vcen = (v0 + v1) / 2.0;
                sw.sv = (v1 - v0) / cs.ell2;
                if (!maskbox.empty()) {
                    double width = 2.0;
                    for (auto& [mc, miv] : maskbox) width = std::min(width, miv.second - miv.first);
                    sw.mask = Plateau::over(maskbox, width * in.mask_eps_frac);
                    sw.has_mask = true;
                }
                stack.push(sw);
            }
        }
    }

    // ---- A_i for i >= 1: match rotated staircase content onto the
    // approximated refinement per dependence block (core z-cell, band)
    for (long ip = 1; ip < pr.base.t; ++ip) {
        std::vector<int> Ji = Jset(ip);
        long pos = pr.h_base(ip);
        size_t pos_slot = 0;
        for (size_t k = 0; k < Ji.size(); ++k)
            if (Ji[k] == static_cast<int>(pos)) pos_slot = k;

        auto tuples = detail::enumerate_tuples(Ji.size(), to_long(pc.u));

        // tuple cell boxes and their sector memberships, precomputed
        std::vector<long> cell_sector(to_long(pc.u), -1);
        for (long j = 0; j < to_long(pc.u); ++j) {
            Interval cell = pc.cell(j);
            Int lo = floor_rat(cell.a * qn);
            if (Rat(lo + 1) >= cell.b * qn) cell_sector[j] = to_long(lo);  // fully inside one sector
        }

        for (const auto& band : bands) {
            bool full_band = true;
            std::vector<std::pair<int, Interval>> band_box;
            for (size_t k = 0; k < band_coords.size(); ++k) {
                band_box.emplace_back(band_coords[k], pc.cell(band[k]));
                if (band[k] >= to_long(pc.u)) full_band = false;
            }
            if (!full_band) continue;
            const std::vector<long>& sigma = sigma_by_band[band];

            for (long i0 = 0; i0 < K; ++i0) {
                long pre = -1;
                for (long k = 0; k < K; ++k)
                    if (sigma[k] == i0) pre = k;
                if (pre < 0) continue;
                long gamma_z = to_long(floor_rat((cores.starts[pre] + cores.width / 2) * qn));

                std::map<Label, Label> sig;
                std::vector<Label> unmatched_src, unmatched_dst;
                for (long l = 0; l < qn; ++l) {
                    long want = ((gamma_z - l) % qn + qn) % qn;
                    std::vector<Label> Ep, F;
                    for (const auto& tup : tuples) {
                        if (cell_sector[tup[pos_slot]] == want) Ep.push_back(tup);
                        Box cbox = box1(0, cores.starts[i0], cores.starts[i0] + cores.width);
                        for (size_t k = 0; k < Ji.size(); ++k) {
                            Interval cell = pc.cell(tup[k]);
                            cbox.set_axis(Ji[k], cell);
                        }
                        GeomSet cset(std::vector<Box>{cbox});
                        if (ref.approx[ip][l].intersection_measure(cset) == cset.measure()) F.push_back(tup);
                    }
                    size_t m = std::min(Ep.size(), F.size());
                    for (size_t k = 0; k < m; ++k)
                        if (Ep[k] != F[k]) sig[Ep[k]] = F[k];
                    for (size_t k = m; k < Ep.size(); ++k) unmatched_src.push_back(Ep[k]);
                    for (size_t k = m; k < F.size(); ++k) unmatched_dst.push_back(F[k]);
                }
                for (size_t k = 0; k < std::min(unmatched_src.size(), unmatched_dst.size()); ++k)
                    if (unmatched_src[k] != unmatched_dst[k]) sig[unmatched_src[k]] = unmatched_dst[k];
                // close into a genuine permutation of its support
                {
                    std::set<Label> srcs, dsts;
                    for (auto& [s, d] : sig) {
                        srcs.insert(s);
                        dsts.insert(d);
                    }
                    std::vector<Label> ns, nd;
                    for (auto& d : dsts)
                        if (!srcs.count(d)) ns.push_back(d);
                    for (auto& s : srcs)
                        if (!dsts.count(s)) nd.push_back(s);
                    for (size_t k = 0; k < std::min(ns.size(), nd.size()); ++k) sig[ns[k]] = nd[k];
                }
                if (sig.empty()) continue;

                std::vector<std::pair<int, std::pair<double, double>>> mbox;
                double zc0 = to_double(cores.starts[i0]);
                mbox.emplace_back(0, std::make_pair(zc0, zc0 + wprime));
                for (const auto& [c, iv] : band_box)
                    mbox.emplace_back(c, std::make_pair(to_double(iv.a), to_double(iv.b)));
                double mwidth = 2.0;
                for (auto& [mc, miv] : mbox) mwidth = std::min(mwidth, miv.second - miv.first);
                Plateau mask = Plateau::over(mbox, mwidth * in.mask_eps_frac);

                auto qp = quasi_permutation(sig, Ji, pc, in.eps, &mask, in.mask_eps_frac);
                for (auto& sw : qp.steps) stack.push(std::move(sw));
            }
        }
    }

    rep.swap_count = static_cast<long>(stack.steps.size());

    auto stack_ptr = std::make_shared<SwapStack>(std::move(stack));
    GridDiffeo g;
    g.dim = dim;
    g.res = grid_res;
    for (int c = 0; c < dim; ++c) g.moved.push_back(c);
    g.deps = g.moved;
    g.fwd = [stack_ptr](const VecD& x) { return stack_ptr->fwd(x); };
    g.inv = [stack_ptr](const VecD& x) { return stack_ptr->inv(x); };
    g.sample();

    rep.inverse_residual = g.inverse_residual();

    double worst = 0.0;
    double stepd = to_double(rat(1, qn));
    for (size_t k = 0; k < g.nodes.size(); k += 7) {
        VecD a = g.fwd(apply_rotation(g.nodes[k], stepd));
        VecD b = apply_rotation(g.fwd_nodes[k], stepd);
        double d = std::abs(wrap_diff(a[0], b[0]));
        for (int c = 1; c < dim; ++c) d = std::max(d, std::abs(a[c] - b[c]));
        worst = std::max(worst, d);
    }
    rep.equivariance_residual = worst;

    rep.transport_by_block.clear();
    rep.min_transport_fraction = 1.0;
    for (long ip = 0; ip < pr.base.t; ++ip) {
        long pos = pr.h_base(ip);
        long agree = 0, total = 0;
        for (size_t k = 0; k < g.nodes.size(); ++k) {
            const VecD& x = g.nodes[k];
            const VecD& y = g.fwd_nodes[k];
            long zsec = static_cast<long>(std::floor(wrap_unit(x[0]) * qn)) % qn;
            bool in_delta;
            if (pos == 0)
                in_delta = zsec == 0;
            else {
                long xsec = std::min<long>(qn - 1, static_cast<long>(std::floor(x[pos] * qn)));
                in_delta = zsec == xsec;
            }
            std::vector<std::pair<int, Rat>> pt;
            pt.reserve(dim);
            for (int c = 0; c < dim; ++c) pt.emplace_back(c, Rat(wrap_unit(y[c])));
            bool in_prime = ref.approx[ip][0].contains_point(pt);
            ++total;
            if (in_delta == in_prime) ++agree;
        }
        double frac = total ? static_cast<double>(agree) / total : 1.0;
        rep.transport_by_block.push_back(frac);
        rep.min_transport_fraction = std::min(rep.min_transport_fraction, frac);
    }

    double jworst = 0.0;
    for (size_t k = 0; k < g.nodes.size(); k += 11) {
        double det = fd::jacobian_det(g.fwd, dim, g.nodes[k], 1e-5);
        jworst = std::max(jworst, std::abs(det - 1.0));
    }
    rep.jacobian_max_dev = jworst;

    std::vector<VecD> probes;
    for (size_t k = 0; k < g.nodes.size(); k += std::max<size_t>(1, g.nodes.size() / 96))
        probes.push_back(g.nodes[k]);
    int order = pr.base.n + 1;
    if (order > 3) order = 3;
    auto nr = norm_estimate(g, order, probes, 1e-3);
    rep.norm_value = nr.value;
    rep.norm_order = nr.k;
    return g;
}

// ---------------------------------------------------------------------------
// conjugated rotations and the convergence gap
// ---------------------------------------------------------------------------

/// T = B^{-1} o S_alpha o B, sampled on B's grid.
inline GridDiffeo compose_T(const GridDiffeo& B, const Rat& alpha) {
    GridDiffeo T;
    T.dim = B.dim;
    T.res = B.res;
    T.moved = B.moved;
    T.deps = B.deps;
    double a = to_double(alpha);
    auto bf = B.fwd;
    auto bi = B.inv;
    T.fwd = [bf, bi, a](const VecD& x) { return bi(apply_rotation(bf(x), a)); };
    T.inv = [bf, bi, a](const VecD& x) { return bi(apply_rotation(bf(x), -a)); };
    T.sample();
    return T;
}

/// d_k distance over probe points: sup of value and derivative differences
/// up to order k, forward and inverse.
inline double dk_distance(const GridDiffeo& F, const GridDiffeo& G, int k,
                          const std::vector<VecD>& probes, double h = 1e-3) {
    double worst = 0.0;
    for (const VecD& p : probes) {
        VecD a = F.fwd(p), b = G.fwd(p);
        double d = std::abs(wrap_diff(a[0], b[0]));
        for (int c = 1; c < F.dim; ++c) d = std::max(d, std::abs(a[c] - b[c]));
        VecD ai = F.inv(p), bi = G.inv(p);
        d = std::max(d, std::abs(wrap_diff(ai[0], bi[0])));
        for (int c = 1; c < F.dim; ++c) d = std::max(d, std::abs(ai[c] - bi[c]));
        worst = std::max(worst, d);
    }
    for (int order = 1; order <= k; ++order) {
        auto diff_fwd = [&](const VecD& x) {
            VecD a = F.fwd(x), b = G.fwd(x);
            VecD d(a.size());
            d[0] = wrap_diff(a[0], b[0]);
            for (size_t c = 1; c < a.size(); ++c) d[c] = a[c] - b[c];
            return d;
        };
        auto diff_inv = [&](const VecD& x) {
            VecD a = F.inv(x), b = G.inv(x);
            VecD d(a.size());
            d[0] = wrap_diff(a[0], b[0]);
            for (size_t c = 1; c < a.size(); ++c) d[c] = a[c] - b[c];
            return d;
        };
        worst = std::max(worst, fd::max_derivative(diff_fwd, F.dim, probes, order, h));
        worst = std::max(worst, fd::max_derivative(diff_inv, F.dim, probes, order, h));
    }
    return worst;
}

/// frozen constants of the conjugation-distance bound, calibrated once on
/// the test-map family with generous headroom
inline double conv_gap_constant(int k, int d) {
    double fact = 1.0;
    for (int i = 2; i <= k + 1; ++i) fact *= i;
    return 8.0 * fact * std::pow(4.0, k) * std::pow(static_cast<double>(d), k);
}

struct ConvergenceGap {
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok() const { return lhs <= rhs; }
};

inline ConvergenceGap convergence_gap(const GridDiffeo& B, const Rat& alpha1, const Rat& alpha2, int k,
                                      const std::vector<VecD>& probes) {
    GridDiffeo T1 = compose_T(B, alpha1);
    GridDiffeo T2 = compose_T(B, alpha2);
    ConvergenceGap cg;
    cg.lhs = dk_distance(T1, T2, k, probes);
    auto nr = norm_estimate(B, k + 1, probes);
    double da = std::abs(to_double(alpha1) - to_double(alpha2));
    cg.rhs = conv_gap_constant(k, B.dim) * std::pow(std::max(1.0, nr.value), k + 1) * da;
    return cg;
}

}  // namespace gk
