#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gk/interval_set.hpp"
#include "gk/kronecker.hpp"
#include "gk/rational.hpp"
#include "gk/rng.hpp"
#include "gk/stage.hpp"

namespace gk {

using Cplx = std::complex<double>;

/// e^{2 pi i f} for exact rational f, evaluated so that opposite angles give
/// exactly conjugate values.
inline Cplx unit_angle(const Rat& f0) {
    Rat f = mod1(f0);
    if (f == 0) return {1.0, 0.0};
    if (2 * f == 1) return {-1.0, 0.0};
    bool upper = 2 * f < 1;
    Rat g = upper ? f : 1 - f;  // in (0, 1/2)
    double th = 6.283185307179586476925286766559 * to_double(g);
    double c = std::cos(th), s = std::sin(th);
    return {c, upper ? s : -s};
}

/// Cut times and angles of a piecewise rotation: u_0 = 0 < ... < u_t = 1.
struct RotationSpec {
    std::vector<Rat> cut_times;  // size t+1, first 0, last 1
    std::vector<Rat> angles;     // size t, in [0,1)

    static RotationSpec from_measure(const AtomicMeasure& m) {
        RotationSpec rs;
        rs.cut_times.push_back(Rat(0));
        Rat acc = 0;
        for (const auto& [pos, w] : m.atoms) {
            acc += w;
            rs.cut_times.push_back(acc);
            rs.angles.push_back(pos);
        }
        rs.cut_times.back() = Rat(1);
        return rs;
    }

    /// t_n equal pieces rotated by (p/q) b(i): the stage transformation U_n.
    static RotationSpec from_stage(const StageParams& st) {
        RotationSpec rs;
        for (long i = 0; i <= st.t; ++i) rs.cut_times.push_back(rat(i, st.t));
        for (long i = 0; i < st.t; ++i) rs.angles.push_back(mod1(st.rotation() * Rat(st.b[i])));
        return rs;
    }

    size_t pieces() const { return angles.size(); }
};

struct SymbolCell {
    int piece = 0;
    int sector = 0;
};

/// Dyadically sampled planar Brownian trajectories. Raw Gaussian increments
/// are shared between ensembles; rotations act as exact rational angle
/// offsets per step, so applying a rotation and its inverse returns the
/// identical ensemble bit for bit.
class PathEnsemble {
  public:
    int depth = 0;
    long steps = 0;  // 2^depth
    long count = 0;
    std::uint64_t seed = 0;

    std::shared_ptr<const std::vector<Cplx>> base;  // count*steps sampled increments
    std::vector<Rat> step_angle;                    // accumulated rotation per step

    Cplx increment(long path, long j) const {
        Cplx raw = (*base)[path * steps + j];
        const Rat& f = step_angle[j];
        if (f == 0) return raw;
        return raw * unit_angle(f);
    }

    /// Position at cut index j (0..steps): fixed-order prefix sum.
    Cplx position(long path, long j) const {
        Cplx acc{0.0, 0.0};
        for (long k = 0; k < j; ++k) acc += increment(path, k);
        return acc;
    }

    Cplx end_position(long path) const { return position(path, steps); }

    long step_of(const Rat& time) const {
        Rat scaled = time * Rat(Int(static_cast<long>(steps)));
        if (scaled.get_den() != 1) throw std::invalid_argument("time not dyadic at ensemble depth");
        return to_long(Int(scaled.get_num()));
    }
};

/// N independent trajectories with complex Gaussian increments of variance
/// 1/2^K per real coordinate (so E|B_1|^2 = 2, E[(Re B_1)^2] = 1).
inline PathEnsemble sample_paths(int depth, long count, std::uint64_t seed, int threads = 1) {
    if (depth < 1 || depth > 24) throw std::invalid_argument("sample_paths: depth out of range");
    if (count < 1) throw std::invalid_argument("sample_paths: count must be >= 1");
    PathEnsemble e;
    e.depth = depth;
    e.steps = 1L << depth;
    e.count = count;
    e.seed = seed;
    e.step_angle.assign(e.steps, Rat(0));

    auto data = std::make_shared<std::vector<Cplx>>(count * e.steps);
    double sd = std::sqrt(1.0 / static_cast<double>(e.steps));
    auto fill = [&](long lo, long hi) {
        for (long p = lo; p < hi; ++p)
            for (long j = 0; j < e.steps; ++j) {
                double z0, z1;
                rng::normal_pair(seed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(j), z0, z1);
                (*data)[p * e.steps + j] = Cplx(sd * z0, sd * z1);
            }
    };
    if (threads <= 1) {
        fill(0, count);
    } else {
        std::vector<std::thread> pool;
        long chunk = (count + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            long lo = w * chunk, hi = std::min(count, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(fill, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    e.base = std::move(data);
    return e;
}

/// B o U_sigma^p: increments of piece k pick up rotation p * alpha_k. Exact
/// rational bookkeeping makes U^p followed by U^{-p} the identity bit for bit.
inline PathEnsemble cut_rotate(const PathEnsemble& ens, const RotationSpec& spec, long power) {
    PathEnsemble out = ens;
    if (power == 0) return out;
    size_t t = spec.pieces();
    for (size_t k = 0; k < t; ++k) {
        long lo = ens.step_of(spec.cut_times[k]);
        long hi = ens.step_of(spec.cut_times[k + 1]);
        Rat add = mod1(Rat(static_cast<long>(power)) * spec.angles[k]);
        for (long j = lo; j < hi; ++j) out.step_angle[j] = mod1(out.step_angle[j] + add);
    }
    return out;
}

/// Deterministic pairwise reduction (same result for any thread count).
inline double pairwise_sum(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    std::vector<double> buf = xs;
    size_t n = buf.size();
    while (n > 1) {
        size_t half = n / 2;
        for (size_t i = 0; i < half; ++i) buf[i] = buf[2 * i] + buf[2 * i + 1];
        if (n % 2) {
            buf[half] = buf[n - 1];
            n = half + 1;
        } else {
            n = half;
        }
    }
    return buf[0];
}

struct MomentStats {
    double mean = 0, se = 0;
};

inline MomentStats mean_se(const std::vector<double>& xs) {
    MomentStats st;
    double n = static_cast<double>(xs.size());
    st.mean = pairwise_sum(xs) / n;
    std::vector<double> sq(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - st.mean) * (xs[i] - st.mean);
    st.se = std::sqrt(pairwise_sum(sq) / (n - 1)) / std::sqrt(n);
    return st;
}

struct CovarianceCheck {
    double empirical = 0;
    double analytic = 0;
    double se = 0;
    double z_score = 0;
};

/// E[X_p X_0] with X_0 = Re(B_1): empirical product mean against
/// sum_k m_k cos(2 pi p alpha_k) (times E[(Re B_1)^2] = 1).
inline CovarianceCheck covariance_check(const PathEnsemble& ens, const RotationSpec& spec, long p) {
    PathEnsemble rot = cut_rotate(ens, spec, p);
    std::vector<double> prod(ens.count);
    for (long i = 0; i < ens.count; ++i)
        prod[i] = rot.end_position(i).real() * ens.end_position(i).real();
    auto st = mean_se(prod);

    double analytic = 0;
    for (size_t k = 0; k < spec.pieces(); ++k) {
        double w = to_double(spec.cut_times[k + 1] - spec.cut_times[k]);
        analytic += w * std::cos(6.283185307179586 * to_double(mod1(Rat(p) * spec.angles[k])));
    }

    CovarianceCheck cc;
    cc.empirical = st.mean;
    cc.analytic = analytic;
    cc.se = st.se;
    cc.z_score = st.se > 0 ? std::abs(st.mean - analytic) / st.se : 0.0;
    return cc;
}

struct Classification {
    long pieces = 0;
    std::vector<std::uint16_t> sector;  // count x pieces
    std::vector<char> ambiguous;        // within 1e-9 of a sector boundary
    double ambiguous_fraction = 0;

    std::uint16_t at(long path, long piece) const { return sector[path * pieces + piece]; }
    bool is_ambiguous(long path, long piece) const { return ambiguous[path * pieces + piece] != 0; }
};

/// Sector index l = floor(q * frac(arg/2pi)) of each piece increment.
inline Classification classify(const PathEnsemble& ens, const RotationSpec& spec, long q_n,
                               double band = 1e-9) {
    if (q_n < 1) throw std::invalid_argument("classify: q must be >= 1");
    long t = static_cast<long>(spec.pieces());
    Classification cl;
    cl.pieces = t;
    cl.sector.resize(ens.count * t);
    cl.ambiguous.assign(ens.count * t, 0);
    std::vector<long> lo(t), hi(t);
    for (long k = 0; k < t; ++k) {
        lo[k] = ens.step_of(spec.cut_times[k]);
        hi[k] = ens.step_of(spec.cut_times[k + 1]);
    }
    long n_amb = 0;
    const double twopi = 6.283185307179586476925286766559;
    for (long pth = 0; pth < ens.count; ++pth) {
        Cplx pos{0.0, 0.0};
        long step = 0;
        for (long k = 0; k < t; ++k) {
            Cplx start = pos;
            for (; step < hi[k]; ++step) pos += ens.increment(pth, step);
            Cplx inc = pos - start;
            double frac = std::atan2(inc.imag(), inc.real()) / twopi;
            if (frac < 0) frac += 1.0;
            if (frac >= 1.0) frac = 0.0;
            double scaled = frac * static_cast<double>(q_n);
            long l = static_cast<long>(std::floor(scaled));
            if (l >= q_n) l = q_n - 1;
            double d = std::min(scaled - std::floor(scaled), std::floor(scaled) + 1.0 - scaled);
            bool amb = d < band * static_cast<double>(q_n);
            cl.sector[pth * t + k] = static_cast<std::uint16_t>(l);
            cl.ambiguous[pth * t + k] = amb ? 1 : 0;
            if (amb) ++n_amb;
        }
    }
    cl.ambiguous_fraction = static_cast<double>(n_amb) / static_cast<double>(ens.count * t);
    return cl;
}

struct ShiftLawReport {
    double agree_fraction = 0;   // over unambiguous path-pieces
    double excluded_fraction = 0;
    long total = 0;
};

/// classify(U_n w) should equal classify(w) shifted by p_n b_n(i) mod q_n,
/// piece by piece, away from sector boundaries.
inline ShiftLawReport shift_law_check(const PathEnsemble& ens, const StageParams& st) {
    RotationSpec spec = RotationSpec::from_stage(st);
    long q = to_long(st.q);
    Classification before = classify(ens, spec, q);
    Classification after = classify(cut_rotate(ens, spec, 1), spec, q);
    std::vector<long> shift(st.t);
    for (long i = 0; i < st.t; ++i) shift[i] = to_long(mod_int(st.p * st.b[i], st.q));

    ShiftLawReport rep;
    long agree = 0, used = 0;
    rep.total = ens.count * st.t;
    for (long pth = 0; pth < ens.count; ++pth)
        for (long i = 0; i < st.t; ++i) {
            if (before.is_ambiguous(pth, i) || after.is_ambiguous(pth, i)) continue;
            ++used;
            long expect = (before.at(pth, i) + shift[i]) % q;
            if (after.at(pth, i) == expect) ++agree;
        }
    rep.excluded_fraction = 1.0 - static_cast<double>(used) / static_cast<double>(rep.total);
    rep.agree_fraction = used ? static_cast<double>(agree) / static_cast<double>(used) : 1.0;
    return rep;
}

struct CondExpResult {
    struct Cell {
        long count = 0;
        Cplx mean{0.0, 0.0};
    };
    std::map<std::vector<int>, Cell> cells;
    double diag_fraction = 0;   // paths with |arg estimate - arg B_W| <= eta
    double mse = 0;             // mean |B_W - estimate|^2 (variance route)
    long empty_label_paths = 0; // paths that fell outside every supplied cell
};

/// Monte Carlo E[B_W | A_{W,k}(N)]: per-path label from the sector of each
/// of the 2^k sub-increments in the word interval, cell-conditional means,
/// and the argument diagnostic at tolerance eta.
inline CondExpResult cond_exp(const PathEnsemble& ens, const Rat& word_start, const Rat& word_len,
                              int k, const std::vector<IntervalSet>& cells, double eta) {
    if (k < 0) throw std::invalid_argument("cond_exp: negative refinement");
    long parts = 1L << k;
    Rat sub = word_len / Rat(static_cast<long>(parts));
    std::vector<long> lo(parts), hi(parts);
    for (long j = 0; j < parts; ++j) {
        lo[j] = ens.step_of(word_start + Rat(j) * sub);
        hi[j] = ens.step_of(word_start + Rat(j + 1) * sub);
    }
    const double twopi = 6.283185307179586476925286766559;

    std::vector<std::vector<int>> labels(ens.count);
    std::vector<Cplx> bw(ens.count);
    CondExpResult res;
    for (long pth = 0; pth < ens.count; ++pth) {
        std::vector<int> lab(parts, -1);
        Cplx total{0.0, 0.0};
        bool ok = true;
        for (long j = 0; j < parts; ++j) {
            Cplx inc{0.0, 0.0};
            for (long s = lo[j]; s < hi[j]; ++s) inc += ens.increment(pth, s);
            total += inc;
            double frac = std::atan2(inc.imag(), inc.real()) / twopi;
            if (frac < 0) frac += 1.0;
            int found = -1;
            for (size_t c = 0; c < cells.size(); ++c) {
                // exact rational membership of the floating argument fraction
                if (cells[c].contains(Rat(frac))) {
                    found = static_cast<int>(c);
                    break;
                }
            }
            if (found < 0) {
                ok = false;
                break;
            }
            lab[j] = found;
        }
        bw[pth] = total;
        if (!ok) {
            ++res.empty_label_paths;
            labels[pth].clear();
        } else {
            labels[pth] = std::move(lab);
        }
    }

    std::map<std::vector<int>, std::pair<long, Cplx>> acc;
    for (long pth = 0; pth < ens.count; ++pth) {
        if (labels[pth].empty()) continue;
        auto& slot = acc[labels[pth]];
        slot.first += 1;
        slot.second += bw[pth];
    }
    for (auto& [lab, slot] : acc)
        res.cells[lab] = {slot.first, slot.second / static_cast<double>(slot.first)};

    long good = 0, used = 0;
    std::vector<double> sq;
    sq.reserve(ens.count);
    for (long pth = 0; pth < ens.count; ++pth) {
        if (labels[pth].empty()) continue;
        ++used;
        Cplx est = res.cells[labels[pth]].mean;
        Cplx diff = bw[pth] - est;
        sq.push_back(std::norm(diff));
        double da = std::abs(std::arg(est) - std::arg(bw[pth]));
        if (da > 3.141592653589793) da = twopi - da;
        if (da <= eta) ++good;
    }
    res.mse = sq.empty() ? 0.0 : pairwise_sum(sq) / static_cast<double>(sq.size());
    res.diag_fraction = used ? static_cast<double>(good) / static_cast<double>(used) : 0.0;
    return res;
}

inline std::vector<IntervalSet> sector_cells(long q) {
    std::vector<IntervalSet> cells;
    for (long l = 0; l < q; ++l) cells.push_back(IntervalSet({{rat(l, q), rat(l + 1, q)}}));
    return cells;
}

struct SigmaAlgebraProbe {
    double mse_fine = 0;    // E|B_1 - E[B_1 | A_p(q)]|^2
    double mse_joined = 0;  // E|B_1 - E[B_1 | B_p(q)]|^2
    double gap = 0;         // E|E[B_1|B_p] - E[B_1|A_p]|^2
    double gap_se = 0;
};

/// Monte Carlo comparison of conditioning on the finest dyadic level alone
/// versus the join of all levels 0..p. A diagnostic only: the two only
/// provably agree under the flawed sigma-algebra identity, so no invariant
/// is asserted here.
inline SigmaAlgebraProbe sigma_algebra_probe(const PathEnsemble& ens, int p, long q) {
    const double twopi = 6.283185307179586476925286766559;
    std::vector<std::vector<int>> lab_fine(ens.count), lab_join(ens.count);
    std::vector<Cplx> b1(ens.count);
    for (long pth = 0; pth < ens.count; ++pth) {
        std::vector<int> fine, join;
        for (int lvl = 0; lvl <= p; ++lvl) {
            long parts = 1L << lvl;
            long span = ens.steps / parts;
            for (long j = 0; j < parts; ++j) {
                Cplx inc{0.0, 0.0};
                for (long s = j * span; s < (j + 1) * span; ++s) inc += ens.increment(pth, s);
                double frac = std::atan2(inc.imag(), inc.real()) / twopi;
                if (frac < 0) frac += 1.0;
                int l = static_cast<int>(std::floor(frac * static_cast<double>(q)));
                if (l >= q) l = static_cast<int>(q - 1);
                if (lvl == p) fine.push_back(l);
                join.push_back(l);
            }
        }
        lab_fine[pth] = std::move(fine);
        lab_join[pth] = std::move(join);
        b1[pth] = ens.end_position(pth);
    }

    auto estimate = [&](const std::vector<std::vector<int>>& labels) {
        std::map<std::vector<int>, std::pair<long, Cplx>> acc;
        for (long pth = 0; pth < ens.count; ++pth) {
            auto& slot = acc[labels[pth]];
            slot.first += 1;
            slot.second += b1[pth];
        }
        std::vector<Cplx> est(ens.count);
        for (long pth = 0; pth < ens.count; ++pth) {
            auto& slot = acc[labels[pth]];
            est[pth] = slot.second / static_cast<double>(slot.first);
        }
        return est;
    };

    auto est_fine = estimate(lab_fine);
    auto est_join = estimate(lab_join);
    std::vector<double> d_fine(ens.count), d_join(ens.count), d_gap(ens.count);
    for (long pth = 0; pth < ens.count; ++pth) {
        d_fine[pth] = std::norm(b1[pth] - est_fine[pth]);
        d_join[pth] = std::norm(b1[pth] - est_join[pth]);
        d_gap[pth] = std::norm(est_join[pth] - est_fine[pth]);
    }
    SigmaAlgebraProbe pr;
    pr.mse_fine = pairwise_sum(d_fine) / static_cast<double>(ens.count);
    pr.mse_joined = pairwise_sum(d_join) / static_cast<double>(ens.count);
    auto st = mean_se(d_gap);
    pr.gap = st.mean;
    pr.gap_se = st.se;
    return pr;
}

}  // namespace gk
