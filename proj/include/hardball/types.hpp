#ifndef HARDBALL_TYPES_HPP
#define HARDBALL_TYPES_HPP

#include <tuple>

namespace hardball {

/// Unordered pair of ball labels, stored ordered with a < b. Labels are
/// 1-based throughout, matching the text formats and the usual convention
/// for collision sequences.
struct Pair {
    int a = 0;
    int b = 0;

    Pair() = default;
    Pair(int i, int j) : a(i < j ? i : j), b(i < j ? j : i) {}

    bool contains(int label) const { return label == a || label == b; }
    bool shares_ball(const Pair& o) const {
        return contains(o.a) || contains(o.b);
    }
    int other(int label) const { return label == a ? b : a; }

    friend bool operator==(const Pair& x, const Pair& y) {
        return x.a == y.a && x.b == y.b;
    }
    friend bool operator!=(const Pair& x, const Pair& y) { return !(x == y); }
    friend bool operator<(const Pair& x, const Pair& y) {
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    }
};

} // namespace hardball

#endif
