#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <lapacke.h>

#include "gasket/error.hpp"
#include "gasket/forms.hpp"
#include "gasket/kusuoka.hpp"
#include "gasket/level_graph.hpp"

namespace gasket {

inline constexpr int kMaxEigenLevel = 7;

enum class Boundary { Dirichlet, Neumann };

inline const char* to_string(Boundary b) { return b == Boundary::Dirichlet ? "dirichlet" : "neumann"; }

/// Stiffness K from E^(m) and lumped mass M (each cell's nu-mass 3^-m split
/// equally over its corners) on the degrees of freedom of one boundary
/// condition: interior vertices for Dirichlet, all vertices for Neumann.
struct OperatorPair {
    int level = 0;
    Boundary boundary = Boundary::Dirichlet;
    std::shared_ptr<const LevelGraph> graph;
    std::vector<int> dof_of_vertex;
    std::vector<int> vertex_of_dof;
    Eigen::SparseMatrix<double> K;
    Eigen::VectorXd mass;

    Eigen::Index dofs() const { return static_cast<Eigen::Index>(vertex_of_dof.size()); }

    /// Values of u on the degrees of freedom (boundary values dropped for Dirichlet).
    Eigen::VectorXd to_dofs(const DiscreteFunction& u) const {
        check_level(*graph, u);
        Eigen::VectorXd x(dofs());
        for (Eigen::Index i = 0; i < dofs(); ++i) x[i] = u[vertex_of_dof[static_cast<std::size_t>(i)]];
        return x;
    }

    /// Vertex function from dof values; V0 is zero for Dirichlet.
    DiscreteFunction from_dofs(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        DiscreteFunction u = DiscreteFunction::zero(*graph);
        for (Eigen::Index i = 0; i < dofs(); ++i) u[vertex_of_dof[static_cast<std::size_t>(i)]] = x[i];
        return u;
    }

    double mass_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        return a.cwiseProduct(mass).dot(b);
    }
};

inline OperatorPair assemble(int m, Boundary boundary) {
    OperatorPair op;
    op.level = m;
    op.boundary = boundary;
    op.graph = shared_graph(m);
    const auto& g = *op.graph;
    op.dof_of_vertex.assign(g.num_vertices(), -1);
    for (const auto& v : g.vertices()) {
        if (boundary == Boundary::Dirichlet && v.is_boundary) continue;
        op.dof_of_vertex[static_cast<std::size_t>(v.id)] = static_cast<int>(op.vertex_of_dof.size());
        op.vertex_of_dof.push_back(v.id);
    }
    const double k = edge_conductance(m);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * g.edges().size());
    for (const auto& e : g.edges()) {
        const int a = op.dof_of_vertex[static_cast<std::size_t>(e[0])];
        const int b = op.dof_of_vertex[static_cast<std::size_t>(e[1])];
        if (a >= 0) t.emplace_back(a, a, k);
        if (b >= 0) t.emplace_back(b, b, k);
        if (a >= 0 && b >= 0) {
            t.emplace_back(a, b, -k);
            t.emplace_back(b, a, -k);
        }
    }
    op.K.resize(op.dofs(), op.dofs());
    op.K.setFromTriplets(t.begin(), t.end());
    op.mass.resize(op.dofs());
    const double cell_mass = 1.0 / static_cast<double>(pow3(m));
    for (Eigen::Index i = 0; i < op.dofs(); ++i)
        op.mass[i] = cell_mass * static_cast<double>(g.cells_of(op.vertex_of_dof[static_cast<std::size_t>(i)]).size()) / 3.0;
    return op;
}

/// Full generalized eigensystem K phi = lambda M phi with M-orthonormal phi.
struct SpectralDecomposition {
    std::shared_ptr<const OperatorPair> op;
    Eigen::VectorXd eigenvalues;
    /// Column k is phi_k on the dofs.
    Eigen::MatrixXd phi;
    double max_residual = 0.0;

    int level() const { return op->level; }
    Boundary boundary() const { return op->boundary; }
    const LevelGraph& graph() const { return *op->graph; }

    /// phi_k^t M x for all k.
    Eigen::VectorXd coefficients(const Eigen::VectorXd& x) const {
        return phi.transpose() * x.cwiseProduct(op->mass);
    }

    /// Mode value phi_k(v) at a vertex (zero on V0 for Dirichlet).
    double mode_at(Eigen::Index k, int vertex) const {
        const int d = op->dof_of_vertex[static_cast<std::size_t>(vertex)];
        return d < 0 ? 0.0 : phi(d, k);
    }
};

inline SpectralDecomposition eigendecompose(std::shared_ptr<const OperatorPair> op) {
    if (op->level > kMaxEigenLevel)
        throw ResourceLimitError("dense eigendecomposition is limited to level " + std::to_string(kMaxEigenLevel));
    const Eigen::Index n = op->dofs();
    const Eigen::VectorXd inv_sqrt_mass = op->mass.cwiseSqrt().cwiseInverse();
    // symmetric standard form M^-1/2 K M^-1/2
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < op->K.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(op->K, k); it; ++it)
            a(it.row(), it.col()) = it.value() * inv_sqrt_mass[it.row()] * inv_sqrt_mass[it.col()];

    Eigen::VectorXd w(n);
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', static_cast<lapack_int>(n), a.data(), static_cast<lapack_int>(n), w.data());
    if (info != 0) throw Error("eigensolver failed to converge (LAPACK info " + std::to_string(info) + ")");

    SpectralDecomposition sd;
    sd.op = std::move(op);
    sd.eigenvalues = w;
    sd.phi = inv_sqrt_mass.asDiagonal() * a;
    for (Eigen::Index k = 0; k < n; ++k) {
        // sign convention: the entry of largest magnitude (first one on ties) is positive
        Eigen::Index imax = 0;
        sd.phi.col(k).cwiseAbs().maxCoeff(&imax);
        if (sd.phi(imax, k) < 0) sd.phi.col(k) *= -1.0;
    }
    if (sd.boundary() == Boundary::Neumann && n > 0) sd.eigenvalues[0] = std::max(0.0, sd.eigenvalues[0]);

    const double lmax = n > 0 ? std::max(1.0, sd.eigenvalues.cwiseAbs().maxCoeff()) : 1.0;
    const Eigen::MatrixXd r = sd.op->K * sd.phi - sd.op->mass.asDiagonal() * sd.phi * sd.eigenvalues.asDiagonal();
    for (Eigen::Index k = 0; k < n; ++k) sd.max_residual = std::max(sd.max_residual, r.col(k).norm());
    if (sd.max_residual > 1e-9 * lmax) {
        std::ostringstream msg;
        msg << "eigensolver residual " << sd.max_residual << " exceeds 1e-9 * lambda_max (" << lmax << ")";
        throw Error(msg.str());
    }
    return sd;
}

inline SpectralDecomposition eigendecompose(const OperatorPair& op) {
    return eigendecompose(std::make_shared<const OperatorPair>(op));
}

/// P_t psi = sum_k exp(-lambda_k t) (phi_k^t M psi) phi_k; psi is zeroed on V0.
inline DiscreteFunction heat_apply(const SpectralDecomposition& sd, double t, const DiscreteFunction& psi) {
    if (t < 0) throw DomainError("heat_apply needs t >= 0");
    Eigen::VectorXd c = sd.coefficients(sd.op->to_dofs(psi));
    c.array() *= (-t * sd.eigenvalues.array()).exp();
    return sd.op->from_dofs(sd.phi * c);
}

/// Heat kernel density with respect to the lumped nu-weights.
inline double heat_kernel(const SpectralDecomposition& sd, double t, int x, int y) {
    if (t <= 0) throw DomainError("heat_kernel needs t > 0");
    int dx = sd.op->dof_of_vertex[static_cast<std::size_t>(x)];
    int dy = sd.op->dof_of_vertex[static_cast<std::size_t>(y)];
    if (dx < 0 || dy < 0) return 0.0;
    if (dx > dy) std::swap(dx, dy);  // bitwise symmetric
    double s = 0.0;
    for (Eigen::Index k = 0; k < sd.eigenvalues.size(); ++k)
        s += std::exp(-sd.eigenvalues[k] * t) * sd.phi(dx, k) * sd.phi(dy, k);
    return s;
}

/// Heat trace sum_k exp(-lambda_k t).
inline double heat_trace(const SpectralDecomposition& sd, double t) {
    return (-t * sd.eigenvalues.array()).exp().sum();
}

/// Vertex loads b_x = sum over cells w containing x of g(w) mu(w) / 3, on the dofs.
inline Eigen::VectorXd measure_load(const OperatorPair& op, const CellField& g, const KusuokaWeights& kw) {
    if (g.level != op.level || kw.level() != op.level) throw DomainError("cell field, weights and operator levels differ");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(op.dofs());
    const auto& cells = op.graph->cells();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const double load = g[c] * kw.value(c) / 3.0;
        if (load == 0.0) continue;
        for (int v : cells[c]) {
            const int d = op.dof_of_vertex[static_cast<std::size_t>(v)];
            if (d >= 0) b[d] += load;
        }
    }
    return b;
}

/// P_t(g mu) = sum_k exp(-lambda_k t) <g, phi_k>_mu phi_k, with
/// <g, phi_k>_mu = sum_w g(w) mean_w(phi_k) mu(w).
inline DiscreteFunction heat_apply_measure(const SpectralDecomposition& sd, double t, const CellField& g,
                                           const KusuokaWeights& kw) {
    if (t <= 0) throw DomainError("heat_apply_measure needs t > 0");
    Eigen::VectorXd c = sd.phi.transpose() * measure_load(*sd.op, g, kw);
    c.array() *= (-t * sd.eigenvalues.array()).exp();
    return sd.op->from_dofs(sd.phi * c);
}

/// rho_alpha(x, y) = sum_k phi_k(x) phi_k(y) / (alpha + lambda_k).
inline double resolvent_kernel(const SpectralDecomposition& sd, double alpha, int x, int y) {
    if (alpha <= 0) throw DomainError("resolvent_kernel needs alpha > 0");
    int dx = sd.op->dof_of_vertex[static_cast<std::size_t>(x)];
    int dy = sd.op->dof_of_vertex[static_cast<std::size_t>(y)];
    if (dx < 0 || dy < 0) return 0.0;
    if (dx > dy) std::swap(dx, dy);  // bitwise symmetric
    double s = 0.0;
    for (Eigen::Index k = 0; k < sd.eigenvalues.size(); ++k) s += sd.phi(dx, k) * sd.phi(dy, k) / (alpha + sd.eigenvalues[k]);
    return s;
}

/// Discrete dual norm of the F-norm u^t (M + K) u: sqrt(v^t M (M+K)^-1 M v).
class DualNorm {
public:
    explicit DualNorm(std::shared_ptr<const OperatorPair> op) : op_(std::move(op)) {
        Eigen::SparseMatrix<double> a = op_->K;
        for (Eigen::Index i = 0; i < op_->dofs(); ++i) a.coeffRef(i, i) += op_->mass[i];
        solver_.compute(a);
        if (solver_.info() != Eigen::Success) throw Error("M + K factorization failed");
    }

    double operator()(const Eigen::VectorXd& dofs) const {
        const Eigen::VectorXd mv = dofs.cwiseProduct(op_->mass);
        const Eigen::VectorXd x = solver_.solve(mv);
        return std::sqrt(std::max(0.0, mv.dot(x)));
    }

    double operator()(const DiscreteFunction& v) const { return (*this)(op_->to_dofs(v)); }

private:
    std::shared_ptr<const OperatorPair> op_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

inline double dual_norm(const OperatorPair& op, const DiscreteFunction& v) {
    if (op.boundary != Boundary::Dirichlet) throw DomainError("dual_norm expects a Dirichlet assembly");
    return DualNorm(std::make_shared<const OperatorPair>(op))(v);
}

/// L^2(nu) norm with the lumped mass: sqrt(u^t M u) over the dofs.
inline double l2_nu(const OperatorPair& op, const DiscreteFunction& u) {
    const Eigen::VectorXd x = op.to_dofs(u);
    return std::sqrt(op.mass_inner(x, x));
}

}  // namespace gasket
