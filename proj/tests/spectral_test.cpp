#include <gtest/gtest.h>

#include <random>

#include "gasket/constants.hpp"
#include "gasket/spectral.hpp"

using namespace gasket;

namespace {

std::shared_ptr<const SpectralDecomposition> dirichlet(int m) {
    static std::map<int, std::shared_ptr<const SpectralDecomposition>> cache;
    auto& slot = cache[m];
    if (!slot)
        slot = std::make_shared<const SpectralDecomposition>(
            eigendecompose(std::make_shared<const OperatorPair>(assemble(m, Boundary::Dirichlet))));
    return slot;
}

DiscreteFunction random_dirichlet(const OperatorPair& op, std::mt19937_64& rng, bool nonnegative = false) {
    std::normal_distribution<double> n;
    Eigen::VectorXd x(op.dofs());
    for (auto& v : x) v = nonnegative ? std::abs(n(rng)) : n(rng);
    return op.from_dofs(x);
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

// Composite Simpson on geometric panels: oracle for the Laplace transform of the heat kernel.
double laplace_transform_of_kernel(const SpectralDecomposition& sd, double alpha, int x, int y) {
    auto f = [&](double t) { return std::exp(-alpha * t) * heat_kernel(sd, t, x, y); };
    // p(0, x, y) is finite on a graph: delta_xy / M_xx
    auto f0 = [&](double t) {
        if (t > 0) return f(t);
        const int d = sd.op->dof_of_vertex[static_cast<std::size_t>(x)];
        return x == y ? 1.0 / sd.op->mass[d] : 0.0;
    };
    const double decay = alpha + sd.eigenvalues[0];
    const double t_end = 60.0 / decay;
    std::vector<double> edges{0.0};
    for (double t = 1e-7; t < t_end; t *= 1.5) edges.push_back(t);
    edges.push_back(t_end);
    double total = 0.0;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double a = edges[p], b = edges[p + 1];
        const int n = 64;
        const double h = (b - a) / n;
        double s = f0(a) + f0(b);
        for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f0(a + i * h);
        total += s * h / 3.0;
    }
    return total;
}

}  // namespace

TEST(Assemble, DirichletLevelOne) {
    const auto op = assemble(1, Boundary::Dirichlet);
    EXPECT_EQ(op.K.rows(), 3);
    EXPECT_EQ(op.K.cols(), 3);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(op.mass[i], 2.0 / 9.0, 1e-16);
    const Eigen::MatrixXd k = op.K;
    EXPECT_TRUE(k.isApprox(k.transpose()));
}

TEST(Assemble, NeumannMassIsProbability) {
    for (int m = 0; m <= 6; ++m) {
        const auto op = assemble(m, Boundary::Neumann);
        EXPECT_NEAR(op.mass.sum(), 1.0, 1e-14);
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(op.dofs());
        EXPECT_LT((op.K * ones).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GT(op.mass.minCoeff(), 0.0);
        const auto& g = *op.graph;
        for (int b : g.boundary_vertices()) EXPECT_NEAR(op.mass[op.dof_of_vertex[b]], 1.0 / (3.0 * pow3(m)), 1e-16);
    }
}

TEST(Assemble, QuadraticFormIsEnergy) {
    std::mt19937_64 rng(1);
    const auto op = assemble(5, Boundary::Dirichlet);
    for (int trial = 0; trial < 100; ++trial) {
        const auto u = random_dirichlet(op, rng);
        const Eigen::VectorXd x = op.to_dofs(u);
        const double e = energy(*op.graph, u);
        EXPECT_NEAR(x.dot(op.K * x), e, 1e-12 * e);
    }
}

TEST(Eigen, ResidualOrthonormalityAndOrder) {
    const auto sd = dirichlet(5);
    EXPECT_LE(sd->max_residual, 1e-9 * sd->eigenvalues.maxCoeff());
    const Eigen::MatrixXd gram = sd->phi.transpose() * sd->op->mass.asDiagonal() * sd->phi;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index k = 1; k < sd->eigenvalues.size(); ++k) EXPECT_LE(sd->eigenvalues[k - 1], sd->eigenvalues[k]);
    EXPECT_GT(sd->eigenvalues[0], 0.0);
}

TEST(Eigen, NeumannGroundStateIsConstant) {
    const auto sd = eigendecompose(assemble(4, Boundary::Neumann));
    EXPECT_NEAR(sd.eigenvalues[0], 0.0, 1e-9);
    const Eigen::VectorXd phi0 = sd.phi.col(0);
    EXPECT_LT((phi0.array() - 1.0).abs().maxCoeff(), 1e-9);  // M-normalized with unit total mass
    EXPECT_GT(sd.eigenvalues[1], 1.0);
}

TEST(Eigen, GroundEigenvalueConverges) {
    std::vector<double> l1;
    for (int m = 2; m <= 6; ++m) l1.push_back(dirichlet(m)->eigenvalues[0]);
    double prev = 1e300;
    for (std::size_t i = 1; i < l1.size(); ++i) {
        const double rel = std::abs(l1[i] - l1[i - 1]) / l1[i - 1];
        if (i >= 2) EXPECT_LT(rel, prev) << "m=" << i + 2;
        prev = rel;
    }
}

TEST(Eigen, LevelCap) { EXPECT_THROW(eigendecompose(assemble(8, Boundary::Dirichlet)), ResourceLimitError); }

TEST(Heat, IdentityEigenfunctionAndSemigroup) {
    const auto sd = dirichlet(4);
    const auto& op = *sd->op;
    std::mt19937_64 rng(2);
    const auto psi = random_dirichlet(op, rng);
    EXPECT_LT((heat_apply(*sd, 0.0, psi).values - psi.values).cwiseAbs().maxCoeff(), 1e-10);

    // V0 values are projected out
    DiscreteFunction with_boundary = psi;
    for (int b : op.graph->boundary_vertices()) with_boundary[b] = 5.0;
    EXPECT_LT((heat_apply(*sd, 0.0, with_boundary).values - psi.values).cwiseAbs().maxCoeff(), 1e-10);

    const Eigen::Index k = 3;
    const auto phik = op.from_dofs(sd->phi.col(k));
    const auto evolved = heat_apply(*sd, 0.01, phik);
    EXPECT_LT((evolved.values - std::exp(-sd->eigenvalues[k] * 0.01) * phik.values).cwiseAbs().maxCoeff(), 1e-10);

    const auto a = heat_apply(*sd, 0.03, psi);
    const auto b = heat_apply(*sd, 0.01, heat_apply(*sd, 0.02, psi));
    EXPECT_LT((a.values - b.values).norm(), 1e-10);
    EXPECT_THROW(heat_apply(*sd, -1.0, psi), DomainError);
}

TEST(Heat, ContractionAndPositivity) {
    const auto sd = dirichlet(4);
    const auto& op = *sd->op;
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto psi = random_dirichlet(op, rng, true);
        const double t = 1e-4 * (1 + trial);
        const auto u = heat_apply(*sd, t, psi);
        EXPECT_GE(u.values.minCoeff(), -1e-10);
        EXPECT_LE(u.values.maxCoeff(), psi.values.maxCoeff() + 1e-10);
        EXPECT_LE(l2_nu(op, u), l2_nu(op, psi) + 1e-12);
    }
    for (int trial = 0; trial < 20; ++trial) {
        const auto psi = random_dirichlet(op, rng);
        const auto u = heat_apply(*sd, 0.002, psi);
        EXPECT_GE(u.values.minCoeff(), std::min(psi.values.minCoeff(), 0.0) - 1e-10);
        EXPECT_LE(u.values.maxCoeff(), std::max(psi.values.maxCoeff(), 0.0) + 1e-10);
    }
}

TEST(HeatKernel, SymmetricAndSubMarkov) {
    const auto sd = dirichlet(4);
    const auto& op = *sd->op;
    for (double t : {1e-3, 1e-2, 0.1}) {
        for (Eigen::Index i = 0; i < op.dofs(); i += 7) {
            const int x = op.vertex_of_dof[static_cast<std::size_t>(i)];
            double mass = 0.0;
            for (Eigen::Index j = 0; j < op.dofs(); ++j) {
                const int y = op.vertex_of_dof[static_cast<std::size_t>(j)];
                const double p = heat_kernel(*sd, t, x, y);
                if (j % 11 == 0) EXPECT_EQ(p, heat_kernel(*sd, t, y, x));
                EXPECT_GE(p, -1e-8);
                mass += p * op.mass[j];
            }
            EXPECT_LE(mass, 1.0 + 1e-10);
        }
    }
    EXPECT_EQ(heat_kernel(*sd, 0.1, 0, 5), 0.0);
}

TEST(HeatKernel, HeatTraceScalingExponent) {
    const int m = 6;
    const auto sd = dirichlet(m);
    std::vector<double> ts, tr;
    // resolved window: two decimation periods above the mesh time scale
    for (double lt = std::log(std::pow(5.0, -(m - 1))); lt <= std::log(std::pow(5.0, -(m - 3))) + 1e-9; lt += 0.05) {
        ts.push_back(std::exp(lt));
        tr.push_back(heat_trace(*sd, std::exp(lt)));
    }
    EXPECT_NEAR(loglog_slope(ts, tr), -constants().d_s / 2.0, 0.05);
}

TEST(HeatMeasure, ZeroAndDuality) {
    const int m = 4;
    const auto sd = dirichlet(m);
    const auto kw = kusuoka_weights(m);
    const auto& op = *sd->op;
    const auto& g = *op.graph;
    EXPECT_EQ(heat_apply_measure(*sd, 0.01, CellField::constant(m, 0.0), kw).values.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(heat_apply_measure(*sd, 0.0, CellField::constant(m, 1.0), kw), DomainError);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 10; ++trial) {
        CellField gf{m, Eigen::VectorXd(static_cast<Eigen::Index>(g.num_cells()))};
        for (auto& v : gf.values) v = n(rng);
        const auto v = random_dirichlet(op, rng);
        const double t = 0.005 * (trial + 1);
        const auto pg = heat_apply_measure(*sd, t, gf, kw);
        const double lhs = op.mass_inner(op.to_dofs(pg), op.to_dofs(v));
        const auto pv_bar = cell_means(g, heat_apply(*sd, t, v));
        double rhs = 0.0;
        for (std::size_t c = 0; c < g.num_cells(); ++c) rhs += gf[c] * pv_bar[c] * kw.value(c);
        EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
    }
}

TEST(HeatMeasure, SingleCellSourceIsNonnegative) {
    const int m = 4;
    const auto sd = dirichlet(m);
    const auto kw = kusuoka_weights(m);
    for (std::size_t cell : {0ul, 13ul, 40ul, 80ul}) {
        CellField gf = CellField::constant(m, 0.0);
        gf.values[static_cast<Eigen::Index>(cell)] = 1.0;
        for (double t : {1e-4, 1e-3, 1e-2, 0.1}) EXPECT_GE(heat_apply_measure(*sd, t, gf, kw).values.minCoeff(), -1e-8);
    }
}

TEST(Resolvent, SymmetricAndMatchesLaplaceTransform) {
    const auto sd = dirichlet(3);
    const auto& g = sd->graph();
    const int x = reference_vertex(g);
    for (int y : {x, g.interior_vertices()[4], g.interior_vertices()[20]}) {
        const double r = resolvent_kernel(*sd, 2.0, x, y);
        EXPECT_EQ(r, resolvent_kernel(*sd, 2.0, y, x));
        const double oracle = laplace_transform_of_kernel(*sd, 2.0, x, y);
        EXPECT_NEAR(r, oracle, 1e-6 * std::abs(oracle));
    }
    EXPECT_THROW(resolvent_kernel(*sd, 0.0, x, x), DomainError);
}

TEST(Resolvent, LipschitzInResistance) {
    const int m = 5;
    const auto sd = dirichlet(m);
    ResistanceSolver res(shared_graph(m));
    const auto& g = sd->graph();
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(g.num_vertices()) - 1);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int x = pick(rng), y = pick(rng), z = pick(rng);
        if (x == y) continue;
        const double d = std::abs(resolvent_kernel(*sd, 1.0, x, z) - resolvent_kernel(*sd, 1.0, y, z));
        worst = std::max(worst, d / res(x, y));
    }
    EXPECT_TRUE(std::isfinite(worst));
    EXPECT_LT(worst, 10.0);
    RecordProperty("C_alpha", std::to_string(worst));
}

TEST(DualNorm, ValuesAndBounds) {
    const auto sd = dirichlet(4);
    const auto& op = *sd->op;
    EXPECT_EQ(dual_norm(op, DiscreteFunction::zero(*op.graph)), 0.0);
    DualNorm dn(sd->op);
    for (Eigen::Index k : {0, 1, 5, 50}) {
        const auto phik = op.from_dofs(sd->phi.col(k));
        EXPECT_NEAR(dn(phik), 1.0 / std::sqrt(1.0 + sd->eigenvalues[k]), 1e-10);
    }
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto v = random_dirichlet(op, rng);
        EXPECT_LE(dn(v), l2_nu(op, v) + 1e-14);
    }
    EXPECT_THROW(dual_norm(assemble(2, Boundary::Neumann), DiscreteFunction::zero(*shared_graph(2))), DomainError);
}
