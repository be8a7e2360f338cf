#ifndef HARDBALL_SYMBOLIC_HPP
#define HARDBALL_SYMBOLIC_HPP

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hardball/errors.hpp"
#include "hardball/io.hpp"
#include "hardball/rational.hpp"
#include "hardball/types.hpp"

namespace hardball {

/// Time-ordered list of colliding pairs of a trajectory segment.
struct SymbolicSequence {
    int n_balls = 0;
    std::vector<Pair> labels;

    std::size_t size() const { return labels.size(); }
};

/// Collision graph of a segment: vertices are ball labels, edges the set of
/// pairs that collided (duplicates collapse).
struct CollisionGraph {
    int n_vertices = 0;
    std::set<Pair> edges;
};

class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n), size_(n, 1), components_(n) {
        for (int i = 0; i < n; ++i) parent_[i] = i;
    }

    int find(int x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(int x, int y) {
        x = find(x);
        y = find(y);
        if (x == y) return false;
        if (size_[x] < size_[y]) std::swap(x, y);
        parent_[y] = x;
        size_[x] += size_[y];
        --components_;
        return true;
    }

    bool same(int x, int y) { return find(x) == find(y); }
    int components() const { return components_; }

private:
    std::vector<int> parent_;
    std::vector<int> size_;
    int components_;
};

/// Graph of the subsequence labels[a..b] (1-based, inclusive).
inline CollisionGraph collision_graph(const SymbolicSequence& seq,
                                      std::size_t a, std::size_t b) {
    if (a < 1 || b < a || b > seq.size())
        throw RangeError("collision_graph range [" + std::to_string(a) + "," +
                         std::to_string(b) + "] out of bounds for length " +
                         std::to_string(seq.size()));
    CollisionGraph g;
    g.n_vertices = seq.n_balls;
    for (std::size_t k = a; k <= b; ++k) g.edges.insert(seq.labels[k - 1]);
    return g;
}

inline CollisionGraph collision_graph(const SymbolicSequence& seq) {
    CollisionGraph g;
    g.n_vertices = seq.n_balls;
    for (const Pair& e : seq.labels) g.edges.insert(e);
    return g;
}

/// True iff the graph is connected and touches every one of its N vertices.
inline bool is_connected_spanning(const CollisionGraph& g) {
    if (g.n_vertices <= 0) return false;
    if (g.n_vertices == 1) return true;
    UnionFind uf(g.n_vertices);
    for (const Pair& e : g.edges) uf.unite(e.a - 1, e.b - 1);
    return uf.components() == 1;
}

/// Incremental greedy block scanner: feed collisions in time order; each time
/// the running graph spans all N vertices a block closes and the scan resets.
/// The closed-block count is exactly the greedy richness of the prefix.
class RichnessAccumulator {
public:
    explicit RichnessAccumulator(int n_balls) : n_balls_(n_balls), uf_(n_balls) {}

    void add(const Pair& e) {
        uf_.unite(e.a - 1, e.b - 1);
        if (uf_.components() == 1) {
            ++blocks_;
            uf_ = UnionFind(n_balls_);
        }
    }

    int blocks() const { return blocks_; }

private:
    int n_balls_;
    UnionFind uf_;
    int blocks_ = 0;
};

/// Maximum number of disjoint, consecutive blocks whose collision graphs are
/// connected and span all N vertices. Greedy minimal blocks from the left
/// attain the maximum: shortening the first block never hurts the remainder.
inline int richness(const SymbolicSequence& seq) {
    RichnessAccumulator acc(seq.n_balls);
    for (const Pair& e : seq.labels) acc.add(e);
    return acc.blocks();
}

/// The threshold sequence C(2) = 1, C(N) = (N/2) * (2*C(N-1) + 1), exact.
inline Rational threshold_C(int n_balls) {
    if (n_balls < 2) throw DomainError("threshold_C requires N >= 2");
    Rational c(1);
    for (int n = 3; n <= n_balls; ++n)
        c = Rational(n, 2) * (Rational(2) * c + Rational(1));
    return c;
}

/// Integer richness target for N balls: a sequence is C(N)-rich iff
/// richness >= ceil(C(N)).
inline int richness_target(int n_balls) {
    return static_cast<int>(threshold_C(n_balls).ceil());
}

/// Discard all collisions containing `k0` and relabel the remaining vertex
/// set {1..N} \ {k0} compactly onto {1..N-1}, preserving order.
inline SymbolicSequence derived_sequence(const SymbolicSequence& seq, int k0) {
    if (k0 < 1 || k0 > seq.n_balls)
        throw RangeError("derived_sequence label out of range");
    SymbolicSequence out;
    out.n_balls = seq.n_balls - 1;
    auto relabel = [k0](int v) { return v > k0 ? v - 1 : v; };
    for (const Pair& e : seq.labels) {
        if (e.contains(k0)) continue;
        out.labels.emplace_back(relabel(e.a), relabel(e.b));
    }
    return out;
}

/// A witness triple for the inductive reduction: ball label k0 and 1-based
/// indices p < q into the sequence.
struct Witness {
    int k0 = 0;
    std::size_t p = 0;
    std::size_t q = 0;
};

/// Checks the four witness conditions:
///   (i)  k0 in sigma_p and sigma_q,
///   (ii) k0 absent strictly between p and q,
///   (iii) if sigma_p == sigma_q, some intermediate collision meets sigma_p,
///   (iv) the derived sequence (k0 discarded) has richness >= 2*C(N-1)+1
///        on the reduced vertex set.
inline bool validate_witness(const SymbolicSequence& seq, const Witness& w) {
    if (seq.n_balls < 3) return false;
    const std::size_t n = seq.size();
    if (w.p < 1 || w.q <= w.p || w.q > n) return false;
    if (w.k0 < 1 || w.k0 > seq.n_balls) return false;
    const Pair& sp = seq.labels[w.p - 1];
    const Pair& sq = seq.labels[w.q - 1];
    if (!sp.contains(w.k0) || !sq.contains(w.k0)) return false;
    for (std::size_t j = w.p + 1; j < w.q; ++j)
        if (seq.labels[j - 1].contains(w.k0)) return false;
    if (sp == sq) {
        bool met = false;
        for (std::size_t j = w.p + 1; j < w.q && !met; ++j)
            met = seq.labels[j - 1].shares_ball(sp);
        if (!met) return false;
    }
    const Rational need = Rational(2) * threshold_C(seq.n_balls - 1) + Rational(1);
    return Rational(richness(derived_sequence(seq, w.k0))) >= need;
}

namespace detail {

/// Greedy decomposition into minimal connected-spanning blocks; returns the
/// 1-based [first, last] index range of each block.
inline std::vector<std::pair<std::size_t, std::size_t>>
spanning_blocks(const SymbolicSequence& seq) {
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    UnionFind uf(seq.n_balls);
    std::size_t start = 1;
    for (std::size_t k = 1; k <= seq.size(); ++k) {
        const Pair& e = seq.labels[k - 1];
        uf.unite(e.a - 1, e.b - 1);
        if (uf.components() == 1) {
            blocks.emplace_back(start, k);
            uf = UnionFind(seq.n_balls);
            start = k + 1;
        }
    }
    return blocks;
}

/// Degree-one vertices of a deterministic spanning tree of the block's graph
/// (edges accepted in time order, first spanning tree found).
inline std::vector<int> block_tree_leaves(const SymbolicSequence& seq,
                                          std::size_t first, std::size_t last) {
    const int n = seq.n_balls;
    UnionFind uf(n);
    std::vector<int> degree(n + 1, 0);
    for (std::size_t k = first; k <= last; ++k) {
        const Pair& e = seq.labels[k - 1];
        if (uf.unite(e.a - 1, e.b - 1)) {
            ++degree[e.a];
            ++degree[e.b];
        }
    }
    std::vector<int> leaves;
    for (int v = 1; v <= n; ++v)
        if (degree[v] == 1) leaves.push_back(v);
    return leaves;
}

} // namespace detail

/// Witness construction for rich sequences (N >= 3). Follows the counting
/// argument: decompose into spanning blocks, pick the vertex that is a
/// spanning-tree leaf in the most blocks (ties to the smallest label), then
/// take the closest pair of its occurrences admissible under (ii)-(iii),
/// minimizing q - p and then p. Returns empty when the sequence is not rich
/// enough (no guarantee exists then).
inline std::optional<Witness> find_witness(const SymbolicSequence& seq) {
    const int N = seq.n_balls;
    if (N < 3) return std::nullopt;
    if (Rational(richness(seq)) < threshold_C(N)) return std::nullopt;

    const auto blocks = detail::spanning_blocks(seq);
    std::vector<int> leaf_count(N + 1, 0);
    for (const auto& [first, last] : blocks)
        for (int v : detail::block_tree_leaves(seq, first, last)) ++leaf_count[v];

    // Candidate vertices by descending leaf count, then ascending label;
    // the pigeonhole bound guarantees the top one reaches 2*C(N-1)+1.
    const Rational need = Rational(2) * threshold_C(N - 1) + Rational(1);
    std::vector<int> candidates;
    for (int v = 1; v <= N; ++v)
        if (Rational(leaf_count[v]) >= need) candidates.push_back(v);
    std::sort(candidates.begin(), candidates.end(), [&](int x, int y) {
        if (leaf_count[x] != leaf_count[y]) return leaf_count[x] > leaf_count[y];
        return x < y;
    });

    for (int k0 : candidates) {
        std::vector<std::size_t> occ; // 1-based indices of collisions with k0
        for (std::size_t k = 1; k <= seq.size(); ++k)
            if (seq.labels[k - 1].contains(k0)) occ.push_back(k);

        std::optional<Witness> best;
        for (std::size_t t = 0; t + 1 < occ.size(); ++t) {
            const std::size_t p = occ[t], q = occ[t + 1];
            Witness w{k0, p, q};
            if (!validate_witness(seq, w)) continue;
            if (!best || q - p < best->q - best->p ||
                (q - p == best->q - best->p && p < best->p))
                best = w;
        }
        if (best) return best;
    }
    return std::nullopt;
}

// --- sequence text format: "k i j" per line, 1-based, '#' comments ---------

inline void write_sequence(std::ostream& out, const SymbolicSequence& seq) {
    out << "# collision sequence: k i j\n";
    out << "# n_balls " << seq.n_balls << "\n";
    for (std::size_t k = 1; k <= seq.size(); ++k)
        out << k << " " << seq.labels[k - 1].a << " " << seq.labels[k - 1].b << "\n";
}

inline SymbolicSequence read_sequence(std::istream& in) {
    SymbolicSequence seq;
    std::string line;
    int max_label = 0;
    while (std::getline(in, line)) {
        if (line.rfind("# n_balls", 0) == 0) {
            seq.n_balls = static_cast<int>(parse_int(split_ws(line.substr(9)).at(0)));
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        const auto tok = split_ws(line);
        if (tok.size() != 3)
            throw IoError("sequence line needs 'k i j': '" + line + "'");
        const int i = static_cast<int>(parse_int(tok[1]));
        const int j = static_cast<int>(parse_int(tok[2]));
        if (i == j || i < 1 || j < 1)
            throw IoError("bad pair in sequence line: '" + line + "'");
        seq.labels.emplace_back(i, j);
        max_label = std::max({max_label, i, j});
    }
    if (seq.n_balls == 0) seq.n_balls = max_label; // header absent: infer
    if (max_label > seq.n_balls)
        throw IoError("sequence contains label beyond n_balls");
    return seq;
}

inline void write_sequence_file(const std::string& path, const SymbolicSequence& seq) {
    std::ostringstream ss;
    write_sequence(ss, seq);
    atomic_write(path, ss.str());
}

inline SymbolicSequence read_sequence_file(const std::string& path) {
    std::istringstream in(read_file(path));
    return read_sequence(in);
}

} // namespace hardball

#endif
