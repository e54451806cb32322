#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "gk/rational.hpp"

namespace gk {

/// Half-open interval [a, b) with rational endpoints, 0 <= a < b <= 1.
struct Interval {
    Rat a, b;
    Rat length() const { return b - a; }
};

/// Finite union of half-open intervals on [0,1), kept sorted, disjoint and
/// with adjacent pieces merged. Membership at seams follows the half-open
/// convention, so no point belongs to two pieces.
class IntervalSet {
  public:
    IntervalSet() = default;

    static IntervalSet empty() { return IntervalSet(); }

    static IntervalSet full() { return IntervalSet(std::vector<Interval>{{Rat(0), Rat(1)}}); }

    explicit IntervalSet(std::vector<Interval> raw) {
        for (const auto& iv : raw) {
            if (iv.a < 0 || iv.b > 1 || !(iv.a < iv.b))
                throw std::invalid_argument("IntervalSet: interval out of range");
        }
        std::sort(raw.begin(), raw.end(), [](const Interval& x, const Interval& y) { return x.a < y.a; });
        for (const auto& iv : raw) {
            if (!pieces_.empty() && iv.a <= pieces_.back().b) {
                if (iv.b > pieces_.back().b) pieces_.back().b = iv.b;
            } else {
                pieces_.push_back(iv);
            }
        }
    }

    /// Interval of given length placed at `start` on the circle; wraps and
    /// splits at 1 when needed. length == 1 yields the full circle.
    static IntervalSet mod_interval(const Rat& start, const Rat& length) {
        if (length < 0 || length > 1) throw std::invalid_argument("mod_interval: bad length");
        if (length == 0) return empty();
        if (length == 1) return full();
        Rat s = mod1(start);
        Rat e = s + length;
        if (e <= 1) return IntervalSet({{s, e}});
        return IntervalSet({{s, Rat(1)}, {Rat(0), e - 1}});
    }

    const std::vector<Interval>& pieces() const { return pieces_; }
    bool is_empty() const { return pieces_.empty(); }
    size_t size() const { return pieces_.size(); }

    Rat measure() const {
        Rat m = 0;
        for (const auto& iv : pieces_) m += iv.length();
        return m;
    }

    bool contains(const Rat& x) const {
        for (const auto& iv : pieces_) {
            if (x < iv.a) return false;
            if (x < iv.b) return true;
        }
        return false;
    }

    IntervalSet unite(const IntervalSet& o) const {
        std::vector<Interval> raw = pieces_;
        raw.insert(raw.end(), o.pieces_.begin(), o.pieces_.end());
        return IntervalSet(std::move(raw));
    }

    IntervalSet intersect(const IntervalSet& o) const {
        std::vector<Interval> out;
        size_t i = 0, j = 0;
        while (i < pieces_.size() && j < o.pieces_.size()) {
            const Interval& x = pieces_[i];
            const Interval& y = o.pieces_[j];
            Rat lo = std::max(x.a, y.a);
            Rat hi = std::min(x.b, y.b);
            if (lo < hi) out.push_back({lo, hi});
            if (x.b < y.b)
                ++i;
            else
                ++j;
        }
        IntervalSet r;
        r.pieces_ = std::move(out);
        return r;
    }

    IntervalSet complement() const {
        std::vector<Interval> out;
        Rat cur = 0;
        for (const auto& iv : pieces_) {
            if (cur < iv.a) out.push_back({cur, iv.a});
            cur = iv.b;
        }
        if (cur < 1) out.push_back({cur, Rat(1)});
        IntervalSet r;
        r.pieces_ = std::move(out);
        return r;
    }

    /// Translation on the circle by t (mod 1).
    IntervalSet translate(const Rat& t) const {
        std::vector<Interval> raw;
        for (const auto& iv : pieces_) {
            IntervalSet part = mod_interval(iv.a + t, iv.length());
            raw.insert(raw.end(), part.pieces_.begin(), part.pieces_.end());
        }
        return IntervalSet(std::move(raw));
    }

    bool subset_of(const IntervalSet& o) const { return intersect(o).measure() == measure(); }

    Rat symdiff_measure(const IntervalSet& o) const {
        return measure() + o.measure() - 2 * intersect(o).measure();
    }

    bool operator==(const IntervalSet& o) const { return pieces_ == o.pieces_; }

  private:
    std::vector<Interval> pieces_;
};

inline bool operator==(const Interval& x, const Interval& y) { return x.a == y.a && x.b == y.b; }

}  // namespace gk
