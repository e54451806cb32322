#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gk/geom_set.hpp"
#include "gk/interval_set.hpp"
#include "gk/rational.hpp"
#include "gk/stage.hpp"

namespace gk {

using Label = std::vector<int>;

/// index permutation h(t/t_prev * j + k) = j + t_prev * k
inline long h_map(long t_prev, long t, long idx) {
    long ratio = t / t_prev;
    long j = idx / ratio, k = idx % ratio;
    return j + t_prev * k;
}

inline long h_inv(long t_prev, long t, long idx) {
    long ratio = t / t_prev;
    long j = idx % t_prev, k = idx / t_prev;
    return ratio * j + k;
}

/// A consecutive stage pair; carries t_{n-1} so the coordinate permutation
/// of the lower level is pinned.
struct StagePair {
    StageParams base, next;
    long t_prev = 1;  // t_{n-1}; equals base.t for standalone pairs (h = id)

    long ratio() const { return next.t / base.t; }
    int k0() const {
        long r = ratio();
        int k = 0;
        while ((1L << k) < r) ++k;
        return k;
    }
    Int Q() const { return next.q / base.q; }
    long h_next(long i) const { return h_map(base.t, next.t, i); }
    long h_base(long ip) const { return h_map(t_prev, base.t, ip); }

    void validate() const {
        if (next.n != base.n + 1) throw std::invalid_argument("StagePair: indices not consecutive");
        if (next.t % base.t != 0 || mod_int(next.q, base.q) != 0)
            throw std::invalid_argument("StagePair: divisibility violated");
    }
};

// ---------------------------------------------------------------------------
// eta partitions
// ---------------------------------------------------------------------------

/// Delta(coord-position, l) at denominator q: the z-sector for position 0,
/// the two-coordinate staircase for positions >= 1.
inline GeomSet delta_cell(long q, long coord, long l) {
    l = ((l % q) + q) % q;
    GeomSet out;
    if (coord == 0) {
        out.add(box1(0, rat(l, q), rat(l + 1, q)));
        return out;
    }
    for (long j = 0; j < q; ++j) {
        Box b = box1(0, rat((l + j) % q, q), rat((l + j) % q + 1, q));
        b.set_axis(static_cast<int>(coord), Interval{rat(j, q), rat(j + 1, q)});
        out.add(std::move(b));
    }
    return out;
}

/// Joint eta cell: intersecting Delta(i, l_i) over i pins the z-sector to
/// l_0 and the i-th cube sector to (l_0 - l_i) mod q; a single box.
inline GeomSet eta_joint_cell(const StageParams& st, const Label& lab) {
    long q = to_long(st.q);
    Box b = box1(0, rat(lab[0], q), rat(lab[0] + 1, q));
    for (long i = 1; i < st.t; ++i) {
        long j = ((lab[0] - lab[i]) % q + q) % q;
        b.set_axis(static_cast<int>(i), Interval{rat(j, q), rat(j + 1, q)});
    }
    GeomSet out;
    out.add(std::move(b));
    return out;
}

struct CellPartition {
    std::vector<Label> labels;
    std::vector<GeomSet> cells;

    size_t find(const Label& lab) const {
        for (size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == lab) return k;
        throw std::out_of_range("CellPartition: unknown label");
    }

    Rat total_measure() const {
        Rat m = 0;
        for (const auto& c : cells) m += c.measure();
        return m;
    }
};

/// Full eta_n materialization (q^t cells); guarded by a cell cap.
inline CellPartition build_eta(const StageParams& st, long cell_cap = 100000) {
    long q = to_long(st.q);
    double approx = std::pow(static_cast<double>(q), static_cast<double>(st.t));
    if (approx > static_cast<double>(cell_cap))
        throw std::runtime_error("build_eta: q^t exceeds the cell cap " + std::to_string(cell_cap));
    CellPartition part;
    Label lab(st.t, 0);
    while (true) {
        part.labels.push_back(lab);
        part.cells.push_back(eta_joint_cell(st, lab));
        long pos = st.t - 1;
        while (pos >= 0) {
            if (++lab[pos] < q) break;
            lab[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return part;
}

// ---------------------------------------------------------------------------
// label bijections and diagrams
// ---------------------------------------------------------------------------

struct AlgebraMap {
    std::map<Label, Label> fwd;

    const Label& apply(const Label& x) const {
        auto it = fwd.find(x);
        if (it == fwd.end()) throw std::out_of_range("AlgebraMap: label outside source");
        return it->second;
    }

    bool is_bijection() const {
        std::set<Label> seen;
        for (const auto& [k, v] : fwd)
            if (!seen.insert(v).second) return false;
        return true;
    }
};

/// K_n as a label bijection: symbol (l_i)_i maps to the eta label with
/// component l_i * a_i mod q at position h(i).
inline AlgebraMap build_K(const StageParams& st, long t_prev) {
    long q = to_long(st.q);
    for (long i = 0; i < st.t; ++i)
        if (gcd_int(st.a[i], st.q) != 1)
            throw std::invalid_argument("build_K: a(i) not coprime with q at i=" + std::to_string(i));
    AlgebraMap K;
    Label lab(st.t, 0);
    while (true) {
        Label out(st.t, 0);
        for (long i = 0; i < st.t; ++i)
            out[h_map(t_prev, st.t, i)] = static_cast<int>(to_long(mod_int(Int(lab[i]) * st.a[i], st.q)));
        K.fwd[lab] = out;
        long pos = st.t - 1;
        while (pos >= 0) {
            if (++lab[pos] < q) break;
            lab[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return K;
}

struct DiagramResult {
    bool commutes = true;
    Label counterexample;
    std::string detail;
};

/// Checks bottom(left(x)) == right(top(x)) for every label of the square's
/// source; reports the first offending label in lexicographic order.
inline DiagramResult verify_diagram(const AlgebraMap& top, const AlgebraMap& left,
                                    const AlgebraMap& bottom, const AlgebraMap& right) {
    DiagramResult res;
    if (top.fwd.size() != left.fwd.size()) {
        res.commutes = false;
        res.detail = "source shape mismatch";
        return res;
    }
    for (const auto& [x, tx] : top.fwd) {
        const Label& via_left = left.apply(x);
        const Label& down = bottom.apply(via_left);
        const Label& across = right.apply(tx);
        if (down != across) {
            res.commutes = false;
            res.counterexample = x;
            res.detail = "square fails";
            return res;
        }
    }
    return res;
}

inline AlgebraMap identity_map_like(const AlgebraMap& shape) {
    AlgebraMap id;
    for (const auto& [k, v] : shape.fwd) id.fwd[k] = k;
    return id;
}

// ---------------------------------------------------------------------------
// refinement slice parameters
// ---------------------------------------------------------------------------

struct InfeasibleError : std::runtime_error {
    Int minimal_q;
    InfeasibleError(const std::string& msg, Int min_q)
        : std::runtime_error(msg), minimal_q(std::move(min_q)) {}
};

/// Derived quantities of one refinement step: the window split
/// q'/q = v y + rho, the horizontal coarsening q' = w u + lambda and the
/// core-cell split q'/q = u' w' + lambda'.
struct SliceParams {
    Int v, y, rho;
    Int w, u, lambda;
    Int wp, up, lambdap;

    long n_classes() const { return to_long(y) + (rho > 0 ? 1 : 0); }
    Int class_width(long j) const { return j < to_long(y) ? v : rho; }

    void validate(const StagePair& pr) const {
        Int Q = pr.Q();
        if (v < 1 || y < 1 || rho < 0 || rho >= v || v * y + rho != Q)
            throw std::invalid_argument("SliceParams: window split inconsistent");
        if (w < 1 || u < 1 || lambda < 0 || lambda >= w || w * u + lambda != pr.next.q)
            throw std::invalid_argument("SliceParams: coarsening split inconsistent");
        if (wp < 1 || up < 1 || lambdap < 0 || lambdap >= wp || wp * up + lambdap != Q)
            throw std::invalid_argument("SliceParams: core split inconsistent");
    }

    /// The floors of the construction, with feasibility errors naming the
    /// minimal q' that would succeed.
    static SliceParams derive(const StagePair& pr, const Rat& eps0p, const Rat& eps1p) {
        pr.validate();
        int n = pr.base.n;
        int k0 = pr.k0();
        const Int& qn = pr.base.q;
        const Int& qp = pr.next.q;
        Int Q = pr.Q();

        Int qn_tn = 1;
        for (long i = 0; i < pr.base.t; ++i) qn_tn *= qn;
        Int qn_k0 = 1;
        for (int i = 0; i < k0; ++i) qn_k0 *= qn;

        SliceParams sp;
        Int v_den = pow2(static_cast<unsigned>(k0)) * pow2(static_cast<unsigned>(2 * n + 1)) *
                    Int(pr.base.t) * qn_tn * qn_k0;
        sp.v = qp / v_den;
        if (sp.v < 1) throw InfeasibleError("SliceParams: v floor < 1", v_den);
        if (sp.v > Q) sp.v = Q;  // window cannot exceed one q_n-sector
        sp.y = Q / sp.v;
        sp.rho = Q % sp.v;

        Int b_max = 0;
        for (const auto& b : pr.next.b)
            if (b > b_max) b_max = b;
        long ratio = pr.ratio();
        Int yq = sp.y * qn;
        Int yq_pow = 1;
        for (long i = 0; i < ratio; ++i) yq_pow *= yq;
        Int w_den = pow2(static_cast<unsigned>(3 * n)) * qn_tn * Int(ratio) * yq_pow * b_max;
        Rat w_val = Rat(qp) * eps1p / Rat(w_den);
        sp.w = floor_rat(w_val);
        if (sp.w < 1) throw InfeasibleError("SliceParams: w floor < 1", ceil_rat(Rat(w_den) / eps1p));
        sp.u = qp / sp.w;
        sp.lambda = qp % sp.w;

        Int wp_den = 3 * sp.u * Int(pr.next.t) * qn * b_max * sp.y;
        Rat wp_val = Rat(qp) * eps0p / Rat(wp_den);
        sp.wp = floor_rat(wp_val);
        if (sp.wp < 1) throw InfeasibleError("SliceParams: w' floor < 1", ceil_rat(Rat(wp_den) / eps0p));
        if (sp.wp > Q) sp.wp = Q;
        sp.up = Q / sp.wp;
        sp.lambdap = Q % sp.wp;
        return sp;
    }
};

// ---------------------------------------------------------------------------
// stacking of refinement slices
// ---------------------------------------------------------------------------

struct StackLine {
    long i = 0;  // child block index
    long l = 0;  // 0..b(i)-1
    Int k, r;    // l*a(i) mod q' = k*v + r with 0 <= r < v
    Int width;   // number of consecutive sectors in the run
    Rat start;   // (l*a(i) mod q') / q'
};

struct StackingReport {
    Int v;
    bool degenerate = false;
    std::vector<Int> f, m;          // per child block
    std::vector<StackLine> lines;   // all (i, l) with positive width
};

/// Lemma-style stacking data for window width v: for each block i the runs
/// {l a(i) + c mod q', c < width_l} with width f+1 (l <= m) or f (l > m),
/// f = floor((v-1)/b(i)), m = v-1-b(i) f. Implements k = floor(l a / v)
/// (the identity-consistent reading), reduced mod q'.
inline StackingReport stacking(const StageParams& next, const Int& v) {
    StackingReport rep;
    rep.v = v;
    if (v == 0) {
        rep.degenerate = true;
        return rep;
    }
    if (v < 0 || v > next.q) throw std::invalid_argument("stacking: need 0 < v <= q");
    for (long i = 0; i < next.t; ++i) {
        Int f = (v - 1) / next.b[i];
        Int m = v - 1 - next.b[i] * f;
        rep.f.push_back(f);
        rep.m.push_back(m);
        for (Int l = 0; l < next.b[i]; l += 1) {
            StackLine line;
            line.i = i;
            line.l = to_long(l);
            Int A = mod_int(l * next.a[i], next.q);
            line.k = A / v;
            line.r = A % v;
            line.width = (l <= m) ? f + 1 : f;
            line.start = rat(A, next.q);
            if (line.width > 0) rep.lines.push_back(line);
        }
    }
    return rep;
}

/// Union of `width` consecutive Delta cells starting at z-offset `shift`:
/// for the z position a single interval, for cube positions one wide
/// z-interval per x-sector.
inline GeomSet delta_run(long qp, long pos, const Rat& shift, const Int& width) {
    Rat len = rat(width, Int(qp));
    if (pos == 0) return z_interval_mod(shift, len);
    GeomSet out;
    for (long j = 0; j < qp; ++j)
        out.add_all(z_interval_mod(shift + rat(j, qp), len,
                                   {{static_cast<int>(pos), Interval{rat(j, qp), rat(j + 1, qp)}}}));
    return out;
}

/// Image under K_{n+1} of the window of sectors [base, base+width) of child
/// block i: union of Delta cells at the multiplied indices (brute force).
inline GeomSet gamma_tilde(const StagePair& pr, long i, long gamma, long jclass,
                           const SliceParams& sp) {
    long qp = to_long(pr.next.q);
    Int base = Int(gamma) * pr.Q() + Int(jclass) * sp.v;
    Int width = sp.class_width(jclass);
    long pos = pr.h_next(i);
    GeomSet out;
    for (Int c = 0; c < width; c += 1) {
        Int idx = mod_int((base + c) * pr.next.a[i], pr.next.q);
        out.add_all(delta_cell(qp, pos, to_long(idx)));
    }
    return out;
}

/// Same set via the stacked closed form: translate by base*a/q' and glue
/// the consecutive runs of the stacking report.
inline GeomSet gamma_tilde_stacked(const StagePair& pr, long i, long gamma, long jclass,
                                   const SliceParams& sp, const StackingReport& rep) {
    long qp = to_long(pr.next.q);
    Int base = Int(gamma) * pr.Q() + Int(jclass) * sp.v;
    Rat shift = rat(mod_int(base * pr.next.a[i], pr.next.q), pr.next.q);
    long pos = pr.h_next(i);
    GeomSet out;
    for (const auto& line : rep.lines) {
        if (line.i != i) continue;
        out.add_all(delta_run(qp, pos, mod1(shift + line.start), line.width));
    }
    return out;
}

// ---------------------------------------------------------------------------
// analytic classification of refined cells
// ---------------------------------------------------------------------------

/// Assignment of each child tuple ((gamma, j) per child) of each parent
/// block to the sector of arg E[B_W 1_tuple], extended equivariantly along
/// rotation orbits. Tuples are encoded (gamma_0, j_0, gamma_1, j_1, ...).
struct EClass {
    std::vector<std::map<Label, int>> assign;  // per parent block
    long flagged = 0;                          // orbits decided by convention (tied direction)
    bool counts_balanced = true;

    const std::map<Label, int>& parent(long ip) const { return assign[ip]; }
};

inline EClass analytic_e_classification(const StagePair& pr, const SliceParams& sp,
                                        long tuple_cap = 2000000) {
    pr.validate();
    long qn = to_long(pr.base.q);
    long ratio = pr.ratio();
    long classes = sp.n_classes();
    double per_child = static_cast<double>(qn) * classes;
    if (std::pow(per_child, static_cast<double>(ratio)) > static_cast<double>(tuple_cap))
        throw std::runtime_error("analytic_e_classification: tuple count exceeds cap");

    const double twopi = 6.283185307179586476925286766559;
    EClass ec;
    ec.assign.resize(pr.base.t);

    std::vector<double> width_d(classes), halfw(classes), off(classes);
    for (long j = 0; j < classes; ++j) {
        Rat wdt = rat(sp.class_width(j), pr.next.q);
        width_d[j] = to_double(wdt);
        halfw[j] = to_double(wdt / 2);
        off[j] = to_double(rat(Int(j) * sp.v, pr.next.q));
    }

    for (long ip = 0; ip < pr.base.t; ++ip) {
        long shift = to_long(mod_int(pr.base.p * pr.base.b[ip], pr.base.q));
        auto& table = ec.assign[ip];

        Label tuple(2 * ratio, 0);
        auto advance = [&]() {
            long pos = 2 * ratio - 1;
            while (pos >= 0) {
                int limit = (pos % 2 == 0) ? static_cast<int>(qn) : static_cast<int>(classes);
                if (++tuple[pos] < limit) return true;
                tuple[pos] = 0;
                --pos;
            }
            return false;
        };

        do {
            if (table.count(tuple)) continue;
            // direction of E[B_W 1_e]: weighted sum of sector mid-directions
            std::complex<double> dir{0.0, 0.0};
            double wprod = 1.0;
            for (long c = 0; c < ratio; ++c) wprod *= width_d[tuple[2 * c + 1]];
            for (long c = 0; c < ratio; ++c) {
                long j = tuple[2 * c + 1];
                double mid = static_cast<double>(tuple[2 * c]) / static_cast<double>(qn) + off[j] + halfw[j];
                double weight = std::sin(3.14159265358979323846 * width_d[j]) * (wprod / width_d[j]);
                dir += weight * std::complex<double>(std::cos(twopi * mid), std::sin(twopi * mid));
            }
            int l0;
            double frac = std::atan2(dir.imag(), dir.real()) / twopi;
            if (frac < 0) frac += 1.0;
            double scaled = frac * static_cast<double>(qn);
            bool tied = std::abs(dir) < 1e-12;
            if (!tied) {
                double dist = std::min(scaled - std::floor(scaled), std::floor(scaled) + 1.0 - scaled);
                if (dist < 1e-9) tied = true;
            }
            if (tied) {
                ++ec.flagged;
                l0 = 0;  // orbit convention
            } else {
                l0 = static_cast<int>(std::floor(scaled));
                if (l0 >= qn) l0 = static_cast<int>(qn - 1);
            }
            // extend along the rotation orbit: gamma += shift, l += shift
            Label cur = tuple;
            for (long step = 0; step < qn; ++step) {
                table[cur] = static_cast<int>((l0 + step * shift) % qn);
                for (long c = 0; c < ratio; ++c) cur[2 * c] = static_cast<int>((cur[2 * c] + shift) % qn);
                if (cur == tuple) break;
            }
        } while (advance());

        std::vector<long> counts(qn, 0);
        for (const auto& [t, l] : table) ++counts[l];
        for (long l = 1; l < qn; ++l)
            if (counts[l] != counts[0]) ec.counts_balanced = false;
    }
    return ec;
}

// ---------------------------------------------------------------------------
// refined partitions on M: exact and horizontally approximated
// ---------------------------------------------------------------------------

/// P_i cells for a cube coordinate: u cells of width w/q' plus a remainder.
struct CubeCells {
    Int w, u, lambda, qp;

    long count() const { return to_long(u) + (lambda > 0 ? 1 : 0); }

    Interval cell(long j) const {
        if (j < to_long(u)) return {rat(Int(j) * w, qp), rat(Int(j + 1) * w, qp)};
        return {rat(u * w, qp), Rat(1)};
    }
};

struct RefinedPartitions {
    // per parent block ip (coordinate position h_base(ip)) and sector l:
    std::vector<std::vector<GeomSet>> exact;   // Delta_n^{n+1}: K-image of the refined cell
    std::vector<std::vector<GeomSet>> approx;  // Delta_n'^{n+1}: horizontal approximation
    Rat distance = 0;                          // exact joined-partition distance
    bool approx_stable = true;                 // S_{p/q}-stability of the approximation
    bool exact_equivariant = true;             // K U = S K at the set level
    Rat max_cell_defect = 0;                   // max |mu(cell) - 1/q_n|
};

namespace detail {

/// Gamma' for one child: horizontal coarsening of gamma_tilde. For the
/// z-position child it is gamma_tilde itself; for cube positions the
/// 1/q'-graded x-sectors are bucketed into P-cells with the z-offset
/// snapped to j' w / q'.
inline GeomSet gamma_prime(const StagePair& pr, long i, long gamma, long jclass,
                           const SliceParams& sp, const StackingReport& rep) {
    long pos = pr.h_next(i);
    if (pos == 0) return gamma_tilde_stacked(pr, i, gamma, jclass, sp, rep);

    Int base = Int(gamma) * pr.Q() + Int(jclass) * sp.v;
    Rat shift = rat(mod_int(base * pr.next.a[i], pr.next.q), pr.next.q);
    CubeCells pc{sp.w, sp.u, sp.lambda, pr.next.q};
    GeomSet out;
    for (long jb = 0; jb < pc.count(); ++jb) {
        Interval xcell = pc.cell(jb);
        Rat zoff = mod1(shift + rat(Int(jb) * sp.w, pr.next.q));
        for (const auto& line : rep.lines) {
            if (line.i != i) continue;
            out.add_all(z_interval_mod(zoff + line.start, rat(line.width, pr.next.q),
                                       {{static_cast<int>(pos), xcell}}));
        }
    }
    return out;
}

}  // namespace detail

/// Builds both refined partitions and the exact distance between them.
inline RefinedPartitions build_eta_prime(const StagePair& pr, const SliceParams& sp,
                                         const EClass& ec, long box_cap = 2000000) {
    pr.validate();
    sp.validate(pr);
    long qn = to_long(pr.base.q);
    long ratio = pr.ratio();
    StackingReport rep_v = stacking(pr.next, sp.v);
    StackingReport rep_rho = stacking(pr.next, sp.rho);

    RefinedPartitions out;
    out.exact.assign(pr.base.t, {});
    out.approx.assign(pr.base.t, {});

    long total_boxes = 0;
    for (long ip = 0; ip < pr.base.t; ++ip) {
        out.exact[ip].assign(qn, GeomSet{});
        out.approx[ip].assign(qn, GeomSet{});
        for (const auto& [tuple, l] : ec.parent(ip)) {
            GeomSet cell_exact, cell_approx;
            bool first = true;
            for (long c = 0; c < ratio; ++c) {
                long i = ip * ratio + c;
                long gamma = tuple[2 * c], jclass = tuple[2 * c + 1];
                const StackingReport& rep = (jclass < to_long(sp.y)) ? rep_v : rep_rho;
                GeomSet ge = gamma_tilde_stacked(pr, i, gamma, jclass, sp, rep);
                GeomSet ga = detail::gamma_prime(pr, i, gamma, jclass, sp, rep);
                if (first) {
                    cell_exact = std::move(ge);
                    cell_approx = std::move(ga);
                    first = false;
                } else {
                    cell_exact = cell_exact.intersect(ge);
                    cell_approx = cell_approx.intersect(ga);
                }
            }
            out.exact[ip][l].add_all(cell_exact);
            out.approx[ip][l].add_all(cell_approx);
            total_boxes += static_cast<long>(cell_exact.size() + cell_approx.size());
            if (total_boxes > box_cap)
                throw std::runtime_error("build_eta_prime: box budget exceeded");
        }
    }

    // cell measures: both partitions should give 1/q_n per cell
    for (long ip = 0; ip < pr.base.t; ++ip)
        for (long l = 0; l < qn; ++l) {
            Rat defect = out.exact[ip][l].measure() - rat(1, qn);
            if (defect < 0) defect = -defect;
            if (defect > out.max_cell_defect) out.max_cell_defect = defect;
        }

    // stability of the approximation and equivariance of the exact sets:
    // in symbol indexing S_{p/q} sends cell (ip, l) to (ip, l + p b(ip))
    Rat step = pr.base.rotation();
    for (long ip = 0; ip < pr.base.t; ++ip) {
        long shift = to_long(mod_int(pr.base.p * pr.base.b[ip], pr.base.q));
        for (long l = 0; l < qn; ++l) {
            long lu = (l + shift) % qn;
            if (!out.approx[ip][l].translate_z(step).equals_mod_null(out.approx[ip][lu]))
                out.approx_stable = false;
            if (!out.exact[ip][l].translate_z(step).equals_mod_null(out.exact[ip][lu]))
                out.exact_equivariant = false;
        }
    }

    // exact joined-partition distance sum_c mu(c xor c')
    Label lab(pr.base.t, 0);
    while (true) {
        GeomSet ce = out.exact[0][lab[0]];
        GeomSet ca = out.approx[0][lab[0]];
        for (long ip = 1; ip < pr.base.t; ++ip) {
            ce = ce.intersect(out.exact[ip][lab[ip]]);
            ca = ca.intersect(out.approx[ip][lab[ip]]);
        }
        out.distance += ce.symdiff_measure(ca);
        long pos = pr.base.t - 1;
        while (pos >= 0) {
            if (++lab[pos] < qn) break;
            lab[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// the core z-partition P_0
// ---------------------------------------------------------------------------

struct P0Cell {
    Rat start;
    Rat width;
    bool core = false;  // member of the full-width family P-bar_0
};

struct P0Result {
    std::vector<P0Cell> cells;  // sorted by start, a partition of [0,1)
    Rat core_measure = 0;
    long core_count = 0;
    bool rotation_invariant = false;
    bool containment_ok = false;
    Rat eps0p;  // the certificate target
    bool certificate_ok() const { return core_measure >= 1 - eps0p; }
};

namespace detail {

/// The partition of T attached to (child block i, bucket jb): translated
/// stacking slices over (gamma, class k, run l).
inline std::vector<Interval> block_partition_cells(const StagePair& pr, const SliceParams& sp,
                                                   const StackingReport& rep_v,
                                                   const StackingReport& rep_rho, long i, long jb) {
    std::vector<Interval> cells;
    long qn = to_long(pr.base.q);
    Rat bucket = rat(Int(jb) * sp.w, pr.next.q);
    for (long gamma = 0; gamma < qn; ++gamma)
        for (long k = 0; k < sp.n_classes(); ++k) {
            Int base = Int(gamma) * pr.Q() + Int(k) * sp.v;
            Rat shift = mod1(bucket + rat(mod_int(base * pr.next.a[i], pr.next.q), pr.next.q));
            const StackingReport& rep = (k < to_long(sp.y)) ? rep_v : rep_rho;
            for (const auto& line : rep.lines) {
                if (line.i != i) continue;
                IntervalSet placed =
                    IntervalSet::mod_interval(mod1(shift + line.start), rat(line.width, pr.next.q));
                for (const auto& piece : placed.pieces()) cells.push_back(piece);
            }
        }
    std::sort(cells.begin(), cells.end(), [](const Interval& x, const Interval& y) { return x.a < y.a; });
    return cells;
}

}  // namespace detail

/// Lemma-style construction of the z-partition: project every block
/// partition onto the w'-grid, keep the grid cells that survive every
/// projection, and certify the surviving mass exactly.
inline P0Result build_P0(const StagePair& pr, const SliceParams& sp, const Rat& eps0p) {
    pr.validate();
    sp.validate(pr);
    long qn = to_long(pr.base.q);
    long up = to_long(sp.up);
    StackingReport rep_v = stacking(pr.next, sp.v);
    StackingReport rep_rho = stacking(pr.next, sp.rho);

    // the w'-grid: per gamma-sector, u' full cells plus an optional remainder
    struct GridCell {
        Rat start;
        Rat width;
        bool full;
    };
    std::vector<GridCell> grid;
    for (long gamma = 0; gamma < qn; ++gamma) {
        Rat g0 = rat(gamma, qn);
        for (long j = 0; j < up; ++j)
            grid.push_back({g0 + rat(Int(j) * sp.wp, pr.next.q), rat(sp.wp, pr.next.q), true});
        if (sp.lambdap > 0)
            grid.push_back({g0 + rat(sp.up * sp.wp, pr.next.q), rat(sp.lambdap, pr.next.q), false});
    }
    std::sort(grid.begin(), grid.end(), [](const GridCell& x, const GridCell& y) { return x.start < y.start; });
    const size_t G = grid.size();

    std::vector<char> alive(G, 1);
    CubeCells pc{sp.w, sp.u, sp.lambda, pr.next.q};

    auto locate = [&](const Rat& x) {
        size_t lo = 0, hi = G;
        while (lo + 1 < hi) {
            size_t mid = (lo + hi) / 2;
            if (grid[mid].start <= x)
                lo = mid;
            else
                hi = mid;
        }
        return lo;
    };

    std::vector<std::vector<Interval>> partitions;
    for (long i = 0; i < pr.next.t; ++i)
        for (long jb = 0; jb < pc.count(); ++jb) {
            auto cells = detail::block_partition_cells(pr, sp, rep_v, rep_rho, i, jb);
            Rat total = 0;
            for (const auto& c : cells) total += c.length();
            if (total != 1)
                throw std::logic_error("build_P0: block family does not tile the circle");
            // survival: grid cells fully inside some block cell
            std::vector<char> hit(G, 0);
            for (const auto& c : cells) {
                size_t idx = locate(c.a);
                if (grid[idx].start < c.a) ++idx;
                while (idx < G && grid[idx].start + grid[idx].width <= c.b) {
                    hit[idx] = 1;
                    ++idx;
                }
            }
            for (size_t g = 0; g < G; ++g)
                if (!hit[g]) alive[g] = 0;
            partitions.push_back(std::move(cells));
        }

    P0Result res;
    res.eps0p = eps0p;
    for (size_t g = 0; g < G; ++g) {
        bool core = alive[g] && grid[g].full;
        res.cells.push_back({grid[g].start, grid[g].width, core});
        if (core) {
            res.core_measure += grid[g].width;
            ++res.core_count;
        }
    }

    // split non-core mass into 1/q'-cells so the family partitions T
    std::vector<P0Cell> final_cells;
    for (const auto& c : res.cells) {
        if (c.core) {
            final_cells.push_back(c);
            continue;
        }
        Int steps = c.width.get_num() * (pr.next.q / c.width.get_den());
        Rat unit = rat(1, pr.next.q);
        for (Int k = 0; k < steps; k += 1) final_cells.push_back({c.start + Rat(k) * unit, unit, false});
    }
    res.cells = std::move(final_cells);

    // rotation invariance of the core family
    std::set<Rat> starts;
    for (const auto& c : res.cells)
        if (c.core) starts.insert(c.start);
    res.rotation_invariant = true;
    Rat step = rat(1, qn);
    for (const auto& s : starts)
        if (!starts.count(mod1(s + step))) res.rotation_invariant = false;

    // containment: every core cell sits inside a single cell of every block family
    res.containment_ok = true;
    for (const auto& family : partitions) {
        for (const auto& c : res.cells) {
            if (!c.core) continue;
            bool inside = false;
            for (const auto& cell : family)
                if (cell.a <= c.start && c.start + c.width <= cell.b) {
                    inside = true;
                    break;
                }
            if (!inside) {
                res.containment_ok = false;
                break;
            }
        }
        if (!res.containment_ok) break;
    }
    return res;
}

}  // namespace gk
