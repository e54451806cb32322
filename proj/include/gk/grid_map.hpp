#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gk/rational.hpp"

namespace gk {

using VecD = std::vector<double>;

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly increasing between.
inline double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    double f = std::exp(-1.0 / t);
    double g = std::exp(-1.0 / (1.0 - t));
    return f / (f + g);
}

inline double smoothstep_deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    double f = std::exp(-1.0 / t);
    double g = std::exp(-1.0 / (1.0 - t));
    double fp = f / (t * t);
    double gp = -g / ((1.0 - t) * (1.0 - t));
    double s = f + g;
    return (fp * s - f * (fp + gp)) / (s * s);
}

/// Smooth bump over a product box: exactly 1 at inner depth >= eps/2,
/// exactly 0 on the boundary and outside. Transition lives inside the box,
/// so any field modulated by it glues to the identity across cell walls.
struct Plateau {
    std::vector<std::pair<int, std::pair<double, double>>> box;  // coord -> [a, b]
    double eps = 0.0;

    static Plateau over(std::vector<std::pair<int, std::pair<double, double>>> b, double e) {
        Plateau p;
        p.box = std::move(b);
        p.eps = e;
        for (const auto& [c, iv] : p.box)
            if (e >= (iv.second - iv.first) / 2)
                throw std::invalid_argument("Plateau: eps too large for the box");
        return p;
    }

    double value(const VecD& x) const {
        double v = 1.0;
        for (const auto& [c, iv] : box) {
            double depth = std::min(x[c] - iv.first, iv.second - x[c]);
            v *= smoothstep(depth / (eps / 2));
            if (v == 0.0) return 0.0;
        }
        return v;
    }

    VecD gradient(const VecD& x) const {
        VecD g(x.size(), 0.0);
        double v = value(x);
        if (v == 0.0) return g;
        for (const auto& [c, iv] : box) {
            double dlo = x[c] - iv.first, dhi = iv.second - x[c];
            double depth = std::min(dlo, dhi);
            double s = smoothstep(depth / (eps / 2));
            if (s == 0.0) return VecD(x.size(), 0.0);
            double ds = smoothstep_deriv(depth / (eps / 2)) / (eps / 2);
            g[c] = (v / s) * ds * (dlo < dhi ? 1.0 : -1.0);
        }
        return g;
    }
};

inline double wrap_unit(double z) {
    z -= std::floor(z);
    if (z >= 1.0) z = 0.0;
    return z;
}

/// signed difference of circle coordinates, in [-1/2, 1/2)
inline double wrap_diff(double a, double b) {
    double d = a - b;
    d -= std::round(d);
    return d;
}

/// Sampled measure-preserving map of T x [0,1]^{d-1}: analytic evaluators
/// plus node images on a regular grid. res[0] intervals on the circle
/// (nodes j/res0), res[i] intervals on each cube coordinate (nodes j/resi,
/// endpoints included).
struct GridDiffeo {
    int dim = 1;
    std::vector<int> res;
    std::vector<int> moved, deps;  // J-transformation metadata
    std::function<VecD(const VecD&)> fwd, inv;
    std::vector<VecD> nodes;
    std::vector<VecD> fwd_nodes, inv_nodes;

    static GridDiffeo identity(int dim, std::vector<int> res) {
        GridDiffeo g;
        g.dim = dim;
        g.res = std::move(res);
        g.fwd = [](const VecD& x) { return x; };
        g.inv = [](const VecD& x) { return x; };
        return g;
    }

    long node_count() const {
        long n = res[0];
        for (int i = 1; i < dim; ++i) n *= res[i] + 1;
        return n;
    }

    VecD node(long idx) const {
        VecD x(dim);
        long rem = idx;
        x[0] = static_cast<double>(rem % res[0]) / res[0];
        rem /= res[0];
        for (int i = 1; i < dim; ++i) {
            x[i] = static_cast<double>(rem % (res[i] + 1)) / res[i];
            rem /= res[i] + 1;
        }
        return x;
    }

    void sample() {
        long n = node_count();
        nodes.resize(n);
        fwd_nodes.resize(n);
        inv_nodes.resize(n);
        for (long k = 0; k < n; ++k) {
            nodes[k] = node(k);
            fwd_nodes[k] = fwd(nodes[k]);
            inv_nodes[k] = inv(nodes[k]);
        }
    }

    /// max over sampled nodes of |inv(fwd(x)) - x| (circle coord wrapped)
    double inverse_residual() const {
        double worst = 0.0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            VecD back = inv(fwd_nodes[k]);
            double d = std::abs(wrap_diff(back[0], nodes[k][0]));
            for (int i = 1; i < dim; ++i) d = std::max(d, std::abs(back[i] - nodes[k][i]));
            worst = std::max(worst, d);
        }
        return worst;
    }
};

inline VecD apply_rotation(const VecD& x, double alpha) {
    VecD y = x;
    y[0] = wrap_unit(y[0] + alpha);
    return y;
}

namespace fd {

/// pull probe points away from the cube boundary so stencils stay inside
inline VecD clamp_probe(const VecD& x, int dim, double margin) {
    VecD y = x;
    for (int i = 1; i < dim; ++i) y[i] = std::min(std::max(y[i], margin), 1.0 - margin);
    return y;
}

inline VecD eval_diff(const std::function<VecD(const VecD&)>& f, const VecD& a, const VecD& b) {
    VecD fa = f(a), fb = f(b);
    VecD d(fa.size());
    d[0] = wrap_diff(fa[0], fb[0]);
    for (size_t i = 1; i < fa.size(); ++i) d[i] = fa[i] - fb[i];
    return d;
}

/// max |d^k F| over the probe points, central differences with step h;
/// derivative tensors explored one multi-index direction pair at a time.
inline double max_derivative(const std::function<VecD(const VecD&)>& f, int dim,
                             const std::vector<VecD>& probes, int order, double h) {
    double worst = 0.0;
    std::vector<int> dirs(order, 0);
    for (const VecD& p0 : probes) {
        VecD p = clamp_probe(p0, dim, h * (order + 1));
        // iterate over direction multi-indices
        std::fill(dirs.begin(), dirs.end(), 0);
        while (true) {
            // nested central difference along dirs
            std::function<VecD(const VecD&, int)> stencil = [&](const VecD& x, int lvl) -> VecD {
                if (lvl == order) return f(x);
                VecD xp = x, xm = x;
                xp[dirs[lvl]] += h;
                xm[dirs[lvl]] -= h;
                if (dirs[lvl] == 0) {
                    xp[0] = wrap_unit(xp[0]);
                    xm[0] = wrap_unit(xm[0]);
                }
                VecD fp = stencil(xp, lvl + 1), fm = stencil(xm, lvl + 1);
                VecD d(fp.size());
                if (lvl == order - 1) {
                    d[0] = wrap_diff(fp[0], fm[0]) / (2 * h);
                    for (size_t i = 1; i < fp.size(); ++i) d[i] = (fp[i] - fm[i]) / (2 * h);
                } else {
                    for (size_t i = 0; i < fp.size(); ++i) d[i] = (fp[i] - fm[i]) / (2 * h);
                }
                return d;
            };
            VecD d = stencil(p, 0);
            for (double v : d) worst = std::max(worst, std::abs(v));
            int pos = order - 1;
            while (pos >= 0) {
                if (++dirs[pos] < dim) break;
                dirs[pos] = 0;
                --pos;
            }
            if (pos < 0) break;
        }
    }
    return worst;
}

/// Jacobian determinant via first-order central differences at the probe.
inline double jacobian_det(const std::function<VecD(const VecD&)>& f, int dim, const VecD& p0,
                           double h) {
    VecD p = clamp_probe(p0, dim, 2 * h);
    std::vector<std::vector<double>> J(dim, std::vector<double>(dim));
    for (int j = 0; j < dim; ++j) {
        VecD xp = p, xm = p;
        xp[j] += h;
        xm[j] -= h;
        if (j == 0) {
            xp[0] = wrap_unit(xp[0]);
            xm[0] = wrap_unit(xm[0]);
        }
        VecD d = eval_diff(f, xp, xm);
        for (int i = 0; i < dim; ++i) J[i][j] = d[i] / (2 * h);
    }
    // LU with partial pivoting
    double det = 1.0;
    for (int c = 0; c < dim; ++c) {
        int piv = c;
        for (int r = c + 1; r < dim; ++r)
            if (std::abs(J[r][c]) > std::abs(J[piv][c])) piv = r;
        if (piv != c) {
            std::swap(J[piv], J[c]);
            det = -det;
        }
        if (J[c][c] == 0.0) return 0.0;
        det *= J[c][c];
        for (int r = c + 1; r < dim; ++r) {
            double m = J[r][c] / J[c][c];
            for (int k = c; k < dim; ++k) J[r][k] -= m * J[c][k];
        }
    }
    return det;
}

}  // namespace fd

struct NormReport {
    int k = 0;
    double value = 0.0;
};

/// ||B||_k = max over 0 < |j| <= k of sup |D^j B| and |D^j B^{-1}|,
/// estimated by finite differences over the probe set.
inline NormReport norm_estimate(const GridDiffeo& g, int k, const std::vector<VecD>& probes,
                                double h = 1e-4) {
    NormReport rep;
    rep.k = k;
    for (int order = 1; order <= k; ++order) {
        rep.value = std::max(rep.value, fd::max_derivative(g.fwd, g.dim, probes, order, h));
        rep.value = std::max(rep.value, fd::max_derivative(g.inv, g.dim, probes, order, h));
    }
    return rep;
}

}  // namespace gk
