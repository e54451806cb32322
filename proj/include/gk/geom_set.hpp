#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

#include "gk/interval_set.hpp"
#include "gk/rational.hpp"

namespace gk {

/// Axis-aligned product box on T x [0,1]^k with finitely many restricted
/// coordinates; unrestricted coordinates are implicitly the full interval.
/// Coordinate 0 is the circle coordinate z.
struct Box {
    // sorted by coordinate, at most one interval per coordinate
    std::vector<std::pair<int, Interval>> axes;

    Rat measure() const {
        Rat m = 1;
        for (const auto& [c, iv] : axes) m *= iv.length();
        return m;
    }

    const Interval* axis(int coord) const {
        for (const auto& [c, iv] : axes)
            if (c == coord) return &iv;
        return nullptr;
    }

    void set_axis(int coord, const Interval& iv) {
        for (auto& [c, old] : axes)
            if (c == coord) {
                old = iv;
                return;
            }
        axes.emplace_back(coord, iv);
        std::sort(axes.begin(), axes.end(),
                  [](const auto& x, const auto& y) { return x.first < y.first; });
    }

    bool contains(const std::vector<std::pair<int, Rat>>& point) const {
        for (const auto& [c, iv] : axes) {
            bool found = false;
            for (const auto& [pc, x] : point)
                if (pc == c) {
                    if (x < iv.a || x >= iv.b) return false;
                    found = true;
                    break;
                }
            if (!found) throw std::invalid_argument("Box::contains: point misses coordinate");
        }
        return true;
    }
};

inline bool intersect_boxes(const Box& x, const Box& y, Box& out) {
    out.axes.clear();
    size_t i = 0, j = 0;
    while (i < x.axes.size() || j < y.axes.size()) {
        if (j >= y.axes.size() || (i < x.axes.size() && x.axes[i].first < y.axes[j].first)) {
            out.axes.push_back(x.axes[i++]);
        } else if (i >= x.axes.size() || y.axes[j].first < x.axes[i].first) {
            out.axes.push_back(y.axes[j++]);
        } else {
            Rat lo = std::max(x.axes[i].second.a, y.axes[j].second.a);
            Rat hi = std::min(x.axes[i].second.b, y.axes[j].second.b);
            if (!(lo < hi)) return false;
            out.axes.emplace_back(x.axes[i].first, Interval{lo, hi});
            ++i;
            ++j;
        }
    }
    return true;
}

/// Finite union of pairwise-disjoint product boxes. Disjointness is an
/// invariant of the construction sites; verify_disjoint() checks it on
/// demand. All measure arithmetic is exact.
class GeomSet {
  public:
    GeomSet() = default;
    explicit GeomSet(std::vector<Box> boxes) : boxes_(std::move(boxes)) {}

    static GeomSet full() { return GeomSet(std::vector<Box>{Box{}}); }

    const std::vector<Box>& boxes() const { return boxes_; }
    bool is_empty() const { return boxes_.empty(); }
    size_t size() const { return boxes_.size(); }

    void add(Box b) { boxes_.push_back(std::move(b)); }

    void add_all(const GeomSet& o) {
        boxes_.insert(boxes_.end(), o.boxes_.begin(), o.boxes_.end());
    }

    Rat measure() const {
        Rat m = 0;
        for (const auto& b : boxes_) m += b.measure();
        return m;
    }

    GeomSet intersect(const GeomSet& o) const {
        GeomSet out;
        for_each_pair(o, [&](const Box& b) { out.boxes_.push_back(b); });
        return out;
    }

    Rat intersection_measure(const GeomSet& o) const {
        Rat m = 0;
        for_each_pair(o, [&](const Box& b) { m += b.measure(); });
        return m;
    }

    Rat symdiff_measure(const GeomSet& o) const {
        return measure() + o.measure() - 2 * intersection_measure(o);
    }

    bool equals_mod_null(const GeomSet& o) const { return symdiff_measure(o) == 0; }

    bool contains_mod_null(const GeomSet& o) const { return intersection_measure(o) == o.measure(); }

    bool contains_point(const std::vector<std::pair<int, Rat>>& point) const {
        for (const auto& b : boxes_)
            if (b.contains(point)) return true;
        return false;
    }

    /// Translate the circle coordinate by t (mod 1); boxes split at the seam.
    GeomSet translate_z(const Rat& t) const {
        GeomSet out;
        for (const auto& b : boxes_) {
            const Interval* z = b.axis(0);
            if (!z) {
                out.boxes_.push_back(b);
                continue;
            }
            IntervalSet moved = IntervalSet({*z}).translate(t);
            for (const auto& piece : moved.pieces()) {
                Box nb = b;
                nb.set_axis(0, piece);
                out.boxes_.push_back(nb);
            }
        }
        return out;
    }

    bool verify_disjoint() const {
        Box tmp;
        for (size_t i = 0; i < boxes_.size(); ++i)
            for (size_t j = i + 1; j < boxes_.size(); ++j)
                if (intersect_boxes(boxes_[i], boxes_[j], tmp) && tmp.measure() > 0) return false;
        return true;
    }

  private:
    /// Pair enumeration: brute force for small inputs, otherwise a window
    /// join sorted on a coordinate restricted in every box of both sets.
    template <typename Fn>
    void for_each_pair(const GeomSet& o, Fn&& emit) const {
        Box tmp;
        const size_t nA = boxes_.size(), nB = o.boxes_.size();
        if (nA == 0 || nB == 0) return;
        if (nA * nB <= 4096) {
            for (const auto& x : boxes_)
                for (const auto& y : o.boxes_)
                    if (intersect_boxes(x, y, tmp)) emit(tmp);
            return;
        }
        int coord = pick_join_coord(o);
        if (coord < 0) {
            for (const auto& x : boxes_)
                for (const auto& y : o.boxes_)
                    if (intersect_boxes(x, y, tmp)) emit(tmp);
            return;
        }
        std::vector<size_t> order(nB);
        for (size_t i = 0; i < nB; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
            return o.boxes_[i].axis(coord)->a < o.boxes_[j].axis(coord)->a;
        });
        std::vector<Rat> starts(nB);
        Rat maxlen = 0;
        for (size_t i = 0; i < nB; ++i) {
            const Interval* iv = o.boxes_[order[i]].axis(coord);
            starts[i] = iv->a;
            if (iv->length() > maxlen) maxlen = iv->length();
        }
        for (const auto& x : boxes_) {
            const Interval* xi = x.axis(coord);
            Rat lo = xi->a - maxlen;
            size_t begin = std::lower_bound(starts.begin(), starts.end(), lo) - starts.begin();
            for (size_t k = begin; k < nB && starts[k] < xi->b; ++k)
                if (intersect_boxes(x, o.boxes_[order[k]], tmp)) emit(tmp);
        }
    }

    /// Coordinate restricted in every box of both sets with the smallest
    /// interval mass (most discriminating); -1 if none qualifies.
    int pick_join_coord(const GeomSet& o) const {
        std::map<int, std::pair<size_t, Rat>> tally;  // coord -> (count, total length)
        auto scan = [&](const std::vector<Box>& bs) {
            for (const auto& b : bs)
                for (const auto& [c, iv] : b.axes) {
                    auto& t = tally[c];
                    t.first += 1;
                    t.second += iv.length();
                }
        };
        scan(boxes_);
        scan(o.boxes_);
        const size_t need = boxes_.size() + o.boxes_.size();
        int best = -1;
        Rat best_mass;
        for (const auto& [c, t] : tally) {
            if (t.first != need) continue;
            if (best < 0 || t.second < best_mass) {
                best = c;
                best_mass = t.second;
            }
        }
        return best;
    }

    std::vector<Box> boxes_;
};

inline Box box1(int coord, const Rat& a, const Rat& b) {
    Box bx;
    bx.axes.emplace_back(coord, Interval{a, b});
    return bx;
}

/// z-interval placed mod 1 (possibly split), with extra fixed axes attached.
inline GeomSet z_interval_mod(const Rat& start, const Rat& length,
                              const std::vector<std::pair<int, Interval>>& extra = {}) {
    GeomSet out;
    IntervalSet placed = IntervalSet::mod_interval(start, length);
    for (const auto& piece : placed.pieces()) {
        Box b;
        b.axes.emplace_back(0, piece);
        for (const auto& [c, iv] : extra) b.set_axis(c, iv);
        out.add(std::move(b));
    }
    return out;
}

}  // namespace gk
