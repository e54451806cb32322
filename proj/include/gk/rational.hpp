#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gk {

using Int = mpz_class;
using Rat = mpq_class;

inline Rat rat(long num, long den) {
    if (den == 0) throw std::invalid_argument("rat: zero denominator");
    Rat r(num, den);
    r.canonicalize();
    return r;
}

inline Rat rat(const Int& num, const Int& den) {
    if (den == 0) throw std::invalid_argument("rat: zero denominator");
    Rat r(num, den);
    r.canonicalize();
    return r;
}

inline Int floor_rat(const Rat& r) {
    Int q;
    mpz_fdiv_q(q.get_mpz_t(), r.get_num_mpz_t(), r.get_den_mpz_t());
    return q;
}

inline Int ceil_rat(const Rat& r) {
    Int q;
    mpz_cdiv_q(q.get_mpz_t(), r.get_num_mpz_t(), r.get_den_mpz_t());
    return q;
}

/// Reduce to the fundamental domain [0,1).
inline Rat mod1(const Rat& r) {
    Rat f = r - Rat(floor_rat(r));
    f.canonicalize();
    return f;
}

/// Distance on the circle T = R/Z, values in [0, 1/2].
inline Rat dist_t(const Rat& a, const Rat& b) {
    Rat d = mod1(a - b);
    Rat e = 1 - d;
    return d <= e ? d : e;
}

inline Int pow2(unsigned k) {
    Int r;
    mpz_ui_pow_ui(r.get_mpz_t(), 2, k);
    return r;
}

inline bool is_pow2(const Int& v) {
    if (v <= 0) return false;
    size_t pop = mpz_popcount(v.get_mpz_t());
    return pop == 1;
}

inline Int gcd_int(const Int& a, const Int& b) {
    Int g;
    mpz_gcd(g.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
    return g;
}

inline Int lcm_int(const Int& a, const Int& b) {
    Int l;
    mpz_lcm(l.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
    return l;
}

inline Int mod_int(const Int& a, const Int& m) {
    Int r;
    mpz_fdiv_r(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t());
    return r;
}

inline long to_long(const Int& v) {
    if (!v.fits_slong_p()) throw std::overflow_error("to_long: value exceeds long");
    return v.get_si();
}

inline double to_double(const Rat& r) { return r.get_d(); }

inline std::string int_str(const Int& v) { return v.get_str(); }

inline std::string rat_str(const Rat& r) {
    if (r.get_den() == 1) return r.get_num().get_str();
    return r.get_num().get_str() + "/" + r.get_den().get_str();
}

inline Rat parse_rat(const std::string& s) {
    Rat r;
    if (r.set_str(s, 10) != 0) throw std::invalid_argument("parse_rat: bad literal '" + s + "'");
    r.canonicalize();
    return r;
}

inline Int parse_int(const std::string& s) {
    Int v;
    if (v.set_str(s, 10) != 0) throw std::invalid_argument("parse_int: bad literal '" + s + "'");
    return v;
}

/// Shortest decimal that round-trips; used for all emitted floats so that
/// reruns produce byte-identical files.
inline std::string fmt_double(double x) {
    char buf[40];
    snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace gk
