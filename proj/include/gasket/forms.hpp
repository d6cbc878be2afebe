#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "gasket/constants.hpp"
#include "gasket/error.hpp"
#include "gasket/harmonic.hpp"
#include "gasket/kusuoka.hpp"
#include "gasket/level_graph.hpp"

namespace gasket {

/// Real values on the vertices of V_m, indexed by vertex id.
struct DiscreteFunction {
    int level = 0;
    Eigen::VectorXd values;

    static DiscreteFunction zero(const LevelGraph& g) {
        return {g.level(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.num_vertices()))};
    }
    static DiscreteFunction constant(const LevelGraph& g, double c) {
        return {g.level(), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.num_vertices()), c)};
    }

    double operator[](int v) const { return values[v]; }
    double& operator[](int v) { return values[v]; }
};

/// Real values on the 3^m level-m cells, indexed by word rank.
struct CellField {
    int level = 0;
    Eigen::VectorXd values;

    static CellField constant(int m, double c) {
        return {m, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pow3(m)), c)};
    }
    double operator[](std::size_t c) const { return values[static_cast<Eigen::Index>(c)]; }
};

inline double edge_conductance(int m) { return std::pow(kEnergyRenormalization, m); }

inline void check_level(const LevelGraph& g, const DiscreteFunction& u) {
    if (u.level != g.level() || static_cast<std::size_t>(u.values.size()) != g.num_vertices())
        throw DomainError("function of level " + std::to_string(u.level) + " used with a level-" +
                          std::to_string(g.level()) + " graph");
}

/// E^(m)(u, v) = (5/3)^m sum over edges of (u(x)-u(y))(v(x)-v(y)).
inline double energy_bilinear(const LevelGraph& g, const DiscreteFunction& u, const DiscreteFunction& v) {
    check_level(g, u);
    check_level(g, v);
    double s = 0.0;
    for (const auto& e : g.edges()) s += (u[e[0]] - u[e[1]]) * (v[e[0]] - v[e[1]]);
    return edge_conductance(g.level()) * s;
}

inline double energy(const LevelGraph& g, const DiscreteFunction& u) {
    check_level(g, u);
    double s = 0.0;
    for (const auto& e : g.edges()) {
        const double d = u[e[0]] - u[e[1]];
        s += d * d;
    }
    return edge_conductance(g.level()) * s;
}

/// One refinement step: each level-m cell with corner values b gives its
/// child i the corner values A_i b.
inline DiscreteFunction harmonic_refine(const LevelGraph& coarse, const LevelGraph& fine, const DiscreteFunction& u) {
    check_level(coarse, u);
    if (fine.level() != coarse.level() + 1) throw DomainError("harmonic_refine needs consecutive levels");
    DiscreteFunction out = DiscreteFunction::zero(fine);
    const auto& cc = coarse.cells();
    const auto& fc = fine.cells();
    for (std::size_t c = 0; c < cc.size(); ++c) {
        const double b[3] = {u[cc[c][0]], u[cc[c][1]], u[cc[c][2]]};
        for (int i = 0; i < 3; ++i) {
            const auto& child = fc[3 * c + static_cast<std::size_t>(i)];
            const auto& a = kHarmonicTimes5[static_cast<std::size_t>(i)];
            for (int j = 0; j < 3; ++j)
                out[child[j]] = (a[j][0] * b[0] + a[j][1] * b[1] + a[j][2] * b[2]) / 5.0;
        }
    }
    return out;
}

/// Piecewise-harmonic extension of u from its level to `target`.
inline DiscreteFunction harmonic_extend(const DiscreteFunction& u, int target) {
    if (target < u.level) throw DomainError("harmonic_extend target below the source level");
    DiscreteFunction cur = u;
    auto g = shared_graph(u.level);
    check_level(*g, u);
    for (int l = u.level; l < target; ++l) {
        auto next = shared_graph(l + 1);
        cur = harmonic_refine(*g, *next, cur);
        g = std::move(next);
    }
    return cur;
}

/// Restriction of a level-m function to the coarser vertex set V_k.
inline DiscreteFunction restrict_to(const DiscreteFunction& u, int k) {
    if (k > u.level) throw DomainError("restrict_to target above the source level");
    const auto fine = shared_graph(u.level);
    const auto coarse = shared_graph(k);
    DiscreteFunction out = DiscreteFunction::zero(*coarse);
    for (const auto& v : coarse->vertices()) out[v.id] = u[fine->find(coarse->lattice_at(v.id, u.level))];
    return out;
}

/// The harmonic function with h(q0)=0, h(q1)=h(q2)=1 at level m.
inline DiscreteFunction reference_harmonic(int m) {
    DiscreteFunction h = DiscreteFunction::zero(*shared_graph(0));
    h[1] = 1.0;
    h[2] = 1.0;
    return harmonic_extend(h, m);
}

/// Localized energy of each cell: (5/3)^m times the sum over its three edges.
inline CellField energy_measure_cells(const LevelGraph& g, const DiscreteFunction& u, const DiscreteFunction& v) {
    check_level(g, u);
    check_level(g, v);
    CellField out{g.level(), Eigen::VectorXd(static_cast<Eigen::Index>(g.num_cells()))};
    const double k = edge_conductance(g.level());
    const auto& edges = g.edges();
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        double s = 0.0;
        for (std::size_t e = 3 * c; e < 3 * c + 3; ++e)
            s += (u[edges[e][0]] - u[edges[e][1]]) * (v[edges[e][0]] - v[edges[e][1]]);
        out.values[static_cast<Eigen::Index>(c)] = k * s;
    }
    return out;
}

inline CellField energy_measure_cells(const LevelGraph& g, const DiscreteFunction& u) {
    return energy_measure_cells(g, u, u);
}

/// Cell gradients grad u|_w = mu_<u,h>(w) / sqrt(mu_<h>(w) mu(w)), with h the
/// reference harmonic function. Linear in u, so it is stored as three
/// per-vertex coefficients per cell.
class GradientOperator {
public:
    GradientOperator(std::shared_ptr<const LevelGraph> graph, const KusuokaWeights& kw)
        : graph_(std::move(graph)) {
        const auto& g = *graph_;
        if (kw.level() != g.level()) throw DomainError("Kusuoka weights and graph levels differ");
        const DiscreteFunction h = reference_harmonic(g.level());
        const CellField eh = energy_measure_cells(g, h);
        const double k = edge_conductance(g.level());
        coeff_.resize(g.num_cells());
        degenerate_.clear();
        for (std::size_t c = 0; c < g.num_cells(); ++c) {
            const auto& t = g.cells()[c];
            const double denom_sq = eh[c] * kw.value(c);
            std::array<double, 3> a{0.0, 0.0, 0.0};
            if (denom_sq > 0.0) {
                const double s = k / std::sqrt(denom_sq);
                // sum over edges (j,l) of (u_j - u_l)(h_j - h_l)
                const double h0 = h[t[0]], h1 = h[t[1]], h2 = h[t[2]];
                a[0] = s * ((h0 - h1) + (h0 - h2));
                a[1] = s * (-(h0 - h1) + (h1 - h2));
                a[2] = s * (-(h0 - h2) - (h1 - h2));
            } else {
                degenerate_.push_back(static_cast<int>(c));
            }
            coeff_[c] = a;
        }
    }

    CellField apply(const DiscreteFunction& u) const {
        check_level(*graph_, u);
        CellField out{u.level, Eigen::VectorXd(static_cast<Eigen::Index>(coeff_.size()))};
        const auto& cells = graph_->cells();
        for (std::size_t c = 0; c < coeff_.size(); ++c) {
            const auto& t = cells[c];
            out.values[static_cast<Eigen::Index>(c)] =
                coeff_[c][0] * u[t[0]] + coeff_[c][1] * u[t[1]] + coeff_[c][2] * u[t[2]];
        }
        return out;
    }

    /// Cells where mu(w) = 0 or mu_<h>(w) = 0; their gradient is defined as 0.
    const std::vector<int>& degenerate_cells() const noexcept { return degenerate_; }
    const std::vector<std::array<double, 3>>& coefficients() const noexcept { return coeff_; }
    const LevelGraph& graph() const noexcept { return *graph_; }

private:
    std::shared_ptr<const LevelGraph> graph_;
    std::vector<std::array<double, 3>> coeff_;
    std::vector<int> degenerate_;
};

inline CellField gradient_cells(const DiscreteFunction& u, const KusuokaWeights& kw) {
    return GradientOperator(shared_graph(u.level), kw).apply(u);
}

/// Mean of u over the three corners of each cell.
inline CellField cell_means(const LevelGraph& g, const DiscreteFunction& u) {
    check_level(g, u);
    CellField out{g.level(), Eigen::VectorXd(static_cast<Eigen::Index>(g.num_cells()))};
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        const auto& t = g.cells()[c];
        out.values[static_cast<Eigen::Index>(c)] = (u[t[0]] + u[t[1]] + u[t[2]]) / 3.0;
    }
    return out;
}

inline double oscillation(const DiscreteFunction& u) { return u.values.maxCoeff() - u.values.minCoeff(); }

/// Graph Laplacian of the level-m network with conductance (5/3)^m per edge.
inline Eigen::SparseMatrix<double> network_laplacian(const LevelGraph& g) {
    const double k = edge_conductance(g.level());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * g.edges().size());
    for (const auto& e : g.edges()) {
        t.emplace_back(e[0], e[0], k);
        t.emplace_back(e[1], e[1], k);
        t.emplace_back(e[0], e[1], -k);
        t.emplace_back(e[1], e[0], -k);
    }
    const auto n = static_cast<Eigen::Index>(g.num_vertices());
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

/// Effective resistances on one level-m network; factorizes the grounded
/// Laplacian once and answers many pair queries.
class ResistanceSolver {
public:
    explicit ResistanceSolver(std::shared_ptr<const LevelGraph> graph) : graph_(std::move(graph)) {
        const Eigen::SparseMatrix<double> L = network_laplacian(*graph_);
        // ground vertex 0
        const Eigen::Index n = L.rows() - 1;
        std::vector<Eigen::Triplet<double>> t;
        for (int k = 0; k < L.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(L, k); it; ++it)
                if (it.row() > 0 && it.col() > 0) t.emplace_back(it.row() - 1, it.col() - 1, it.value());
        reduced_.resize(n, n);
        reduced_.setFromTriplets(t.begin(), t.end());
        if (n > 0) {
            solver_.compute(reduced_);
            if (solver_.info() != Eigen::Success) throw Error("grounded network Laplacian factorization failed");
        }
    }

    /// 1 / min{E(u) : u(x)=0, u(y)=1}; zero when x == y.
    double operator()(int x, int y) const {
        if (x == y) return 0.0;
        const Eigen::Index n = reduced_.rows();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        if (x > 0) rhs[x - 1] += 1.0;
        if (y > 0) rhs[y - 1] -= 1.0;
        const Eigen::VectorXd pot = solver_.solve(rhs);
        auto at = [&](int v) { return v == 0 ? 0.0 : pot[v - 1]; };
        return at(x) - at(y);
    }

    const LevelGraph& graph() const noexcept { return *graph_; }

private:
    std::shared_ptr<const LevelGraph> graph_;
    Eigen::SparseMatrix<double> reduced_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

inline double effective_resistance(const LevelGraph& g, int x, int y) {
    if (x == y) return 0.0;
    return ResistanceSolver(std::make_shared<const LevelGraph>(g))(x, y);
}

}  // namespace gasket
