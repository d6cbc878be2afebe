#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "gasket/error.hpp"
#include "gasket/word.hpp"

namespace gasket {

inline constexpr int kDefaultMaxLevel = 12;

/// Exact lattice position at level m: the point a*(1,0) + b*(1/2, sqrt3/2), in units of 2^-m.
struct LatticePoint {
    std::int64_t a = 0;
    std::int64_t b = 0;
    friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
};

struct Vertex {
    int id = 0;
    LatticePoint lattice;
    bool is_boundary = false;
    int level = 0;

    /// x = (2a + b) / 2^(m+1)
    std::int64_t x_numerator() const { return 2 * lattice.a + lattice.b; }
    /// y = sqrt3 * b / 2^(m+1)
    std::int64_t y_sqrt3_numerator() const { return lattice.b; }
    std::int64_t denominator() const { return std::int64_t{1} << (level + 1); }

    double x() const { return static_cast<double>(x_numerator()) / static_cast<double>(denominator()); }
    double y() const {
        return std::sqrt(3.0) * static_cast<double>(y_sqrt3_numerator()) / static_cast<double>(denominator());
    }
};

/// The level-m graph approximation V_m of the compact gasket.
///
/// Vertex ids are assigned by scanning words in lexicographic order and the
/// three corners of each cell in corner order; a corner reached again is
/// identified with its first occurrence by exact lattice coordinates.
/// Cells are stored by the lexicographic rank of their word, and every cell
/// contributes its three edges (c0,c1), (c0,c2), (c1,c2) in that order, so
/// edge e belongs to cell e / 3.
class LevelGraph {
public:
    int level() const noexcept { return level_; }
    const std::vector<Vertex>& vertices() const noexcept { return vertices_; }
    const std::vector<std::array<int, 2>>& edges() const noexcept { return edges_; }
    const std::vector<std::array<int, 3>>& cells() const noexcept { return cells_; }

    std::size_t num_vertices() const noexcept { return vertices_.size(); }
    std::size_t num_cells() const noexcept { return cells_.size(); }

    /// Contiguous index of a non-boundary vertex, or -1 for V0.
    int interior_index(int vertex) const { return interior_index_[static_cast<std::size_t>(vertex)]; }
    const std::vector<int>& interior_vertices() const noexcept { return interior_vertices_; }
    const std::vector<int>& boundary_vertices() const noexcept { return boundary_vertices_; }

    /// Cells (by rank) having `vertex` as a corner: one for V0, two otherwise.
    const std::vector<int>& cells_of(int vertex) const { return cells_of_[static_cast<std::size_t>(vertex)]; }
    const std::vector<int>& neighbors(int vertex) const { return neighbors_[static_cast<std::size_t>(vertex)]; }

    const std::array<int, 3>& cell(const Word& w) const {
        if (w.size() != level_)
            throw NotFoundError("word '" + w.str() + "' has length " + std::to_string(w.size()) +
                                ", graph level is " + std::to_string(level_));
        return cells_[static_cast<std::size_t>(w.index())];
    }

    /// Vertex at the given exact lattice position, or -1.
    int find(LatticePoint p) const {
        auto it = by_position_.find(key(p));
        return it == by_position_.end() ? -1 : it->second;
    }

    /// Id of the same point in the graph of another level (requires that the point exists there).
    LatticePoint lattice_at(int vertex, int other_level) const {
        LatticePoint p = vertices_[static_cast<std::size_t>(vertex)].lattice;
        if (other_level >= level_) {
            const std::int64_t s = std::int64_t{1} << (other_level - level_);
            return {p.a * s, p.b * s};
        }
        const std::int64_t s = std::int64_t{1} << (level_ - other_level);
        return {p.a / s, p.b / s};
    }

    friend LevelGraph build_level_graph(int m, int max_level);

private:
    static std::uint64_t key(LatticePoint p) {
        return (static_cast<std::uint64_t>(p.a) << 32) | static_cast<std::uint64_t>(p.b);
    }

    int level_ = 0;
    std::vector<Vertex> vertices_;
    std::vector<std::array<int, 2>> edges_;
    std::vector<std::array<int, 3>> cells_;
    std::vector<int> interior_index_;
    std::vector<int> interior_vertices_;
    std::vector<int> boundary_vertices_;
    std::vector<std::vector<int>> cells_of_;
    std::vector<std::vector<int>> neighbors_;
    std::unordered_map<std::uint64_t, int> by_position_;
};

/// Corner j of V0 in lattice coordinates at level 0.
inline LatticePoint corner_of_v0(int j) {
    switch (j) {
        case 0: return {0, 0};
        case 1: return {1, 0};
        default: return {0, 1};
    }
}

/// Lattice position (level |w| units) of F_w(q_j).
inline LatticePoint cell_corner(const Word& w, int corner) {
    const int m = w.size();
    LatticePoint p{0, 0};
    for (int i = 0; i < m; ++i) {
        const LatticePoint q = corner_of_v0(w[i] - 1);
        const std::int64_t s = std::int64_t{1} << (m - 1 - i);
        p.a += q.a * s;
        p.b += q.b * s;
    }
    const LatticePoint q = corner_of_v0(corner);
    return {p.a + q.a, p.b + q.b};
}

inline LevelGraph build_level_graph(int m, int max_level = kDefaultMaxLevel) {
    if (m < 0) throw DomainError("level must be nonnegative");
    if (m > max_level)
        throw ResourceLimitError("level " + std::to_string(m) + " exceeds the configured maximum " +
                                 std::to_string(max_level));
    LevelGraph g;
    g.level_ = m;
    const std::uint64_t ncells = pow3(m);
    g.cells_.resize(ncells);
    g.vertices_.reserve((3 * ncells + 3) / 2);
    g.by_position_.reserve((3 * ncells + 3) / 2);

    const std::int64_t side = std::int64_t{1} << m;
    // Walk words lexicographically, maintaining the lower-left corner incrementally.
    std::vector<int> digits(static_cast<std::size_t>(m), 0);
    for (std::uint64_t c = 0; c < ncells; ++c) {
        if (c > 0) {
            int i = m - 1;
            while (digits[static_cast<std::size_t>(i)] == 2) digits[static_cast<std::size_t>(i--)] = 0;
            ++digits[static_cast<std::size_t>(i)];
        }
        LatticePoint base{0, 0};
        for (int i = 0; i < m; ++i) {
            const LatticePoint q = corner_of_v0(digits[static_cast<std::size_t>(i)]);
            const std::int64_t s = std::int64_t{1} << (m - 1 - i);
            base.a += q.a * s;
            base.b += q.b * s;
        }
        for (int j = 0; j < 3; ++j) {
            const LatticePoint q = corner_of_v0(j);
            const LatticePoint p{base.a + q.a, base.b + q.b};
            auto [it, inserted] = g.by_position_.try_emplace(LevelGraph::key(p), static_cast<int>(g.vertices_.size()));
            if (inserted) {
                Vertex v;
                v.id = it->second;
                v.lattice = p;
                v.level = m;
                v.is_boundary = (p.a == 0 && p.b == 0) || (p.a == side && p.b == 0) || (p.a == 0 && p.b == side);
                g.vertices_.push_back(v);
            }
            g.cells_[c][static_cast<std::size_t>(j)] = it->second;
        }
    }

    const std::size_t nv = g.vertices_.size();
    g.edges_.reserve(3 * ncells);
    g.cells_of_.assign(nv, {});
    g.neighbors_.assign(nv, {});
    for (std::size_t c = 0; c < ncells; ++c) {
        const auto& t = g.cells_[c];
        g.edges_.push_back({t[0], t[1]});
        g.edges_.push_back({t[0], t[2]});
        g.edges_.push_back({t[1], t[2]});
        for (int j = 0; j < 3; ++j) {
            g.cells_of_[static_cast<std::size_t>(t[j])].push_back(static_cast<int>(c));
            for (int k = 0; k < 3; ++k)
                if (k != j) g.neighbors_[static_cast<std::size_t>(t[j])].push_back(t[k]);
        }
    }

    g.interior_index_.assign(nv, -1);
    for (std::size_t v = 0; v < nv; ++v) {
        if (g.vertices_[v].is_boundary) {
            g.boundary_vertices_.push_back(static_cast<int>(v));
        } else {
            g.interior_index_[v] = static_cast<int>(g.interior_vertices_.size());
            g.interior_vertices_.push_back(static_cast<int>(v));
        }
    }
    return g;
}

/// Process-wide cache of immutable level graphs.
inline std::shared_ptr<const LevelGraph> shared_graph(int m) {
    static std::mutex mutex;
    static std::map<int, std::shared_ptr<const LevelGraph>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[m];
    if (!slot) slot = std::make_shared<const LevelGraph>(build_level_graph(m));
    return slot;
}

/// The images of the three V0 corners under F_w, in corner order.
inline std::array<Vertex, 3> cell_vertices(const LevelGraph& g, const Word& w) {
    const auto& t = g.cell(w);
    return {g.vertices()[static_cast<std::size_t>(t[0])], g.vertices()[static_cast<std::size_t>(t[1])],
            g.vertices()[static_cast<std::size_t>(t[2])]};
}

/// Vertex q0=(0,0), q1=(1,0) or q2=(1/2, sqrt3/2) in a graph of any level.
inline int corner_vertex(const LevelGraph& g, int j) {
    const LatticePoint q = corner_of_v0(j);
    const std::int64_t s = std::int64_t{1} << g.level();
    return g.find({q.a * s, q.b * s});
}

/// Reference interior vertex (1/2, 0), the midpoint of q0 q1; exists for m >= 1.
inline int reference_vertex(const LevelGraph& g) {
    if (g.level() < 1) throw DomainError("reference vertex requires level >= 1");
    return g.find({std::int64_t{1} << (g.level() - 1), 0});
}

/// Image of vertex v under the reflection fixing q0 and swapping q1 and q2.
inline int reflect_q1_q2(const LevelGraph& g, int v) {
    const auto p = g.vertices()[static_cast<std::size_t>(v)].lattice;
    return g.find({p.b, p.a});
}

}  // namespace gasket
