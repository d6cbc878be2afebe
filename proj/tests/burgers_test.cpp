#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <memory>

#include "gasket/burgers.hpp"

using namespace gasket;

namespace {

std::shared_ptr<const SpectralDecomposition> dirichlet(int m) {
    static std::map<int, std::shared_ptr<const SpectralDecomposition>> cache;
    auto& p = cache[m];
    if (!p) p = std::make_shared<const SpectralDecomposition>(eigendecompose(assemble(m, Boundary::Dirichlet)));
    return p;
}

DiscreteFunction reflected(const DiscreteFunction& u) {
    const auto& g = *shared_graph(u.level);
    DiscreteFunction r = u;
    for (int v = 0; v < g.num_vertices(); ++v) r[reflect_q1_q2(g, v)] = u[v];
    return r;
}

// |u o s - sign u| over all times
double parity_defect(const std::vector<DiscreteFunction>& u, double sign) {
    double d = 0.0;
    for (const auto& x : u) d = std::max(d, (reflected(x).values - sign * x.values).cwiseAbs().maxCoeff());
    return d;
}

BurgersConfig config(int m, double scale, int steps) {
    BurgersConfig c;
    c.psi = center_bump(m);
    c.psi.values *= scale;
    c.grid = TimeGrid::uniform(0.5, steps);
    return c;
}

}  // namespace

TEST(Burgers, ZeroDataStaysZero) {
    const int m = 4;
    BurgersConfig c = config(m, 0.0, 32);
    const auto r = solve_burgers(*dirichlet(m), *shared_kusuoka_weights(m), c);
    EXPECT_EQ(sup_abs(r.solution.u), 0.0);
    EXPECT_TRUE(max_principle_report(r.solution).pass);
}

TEST(Burgers, SymmetricDataStaysSymmetric) {
    const int m = 5;
    const auto sd = dirichlet(m);
    BurgersConfig c = config(m, 0.5, 64);
    c.psi.values += 0.3 * sd->op->from_dofs(sd->phi.col(0)).values;
    ASSERT_LT(parity_defect({c.psi}, 1.0), 1e-14);
    const auto r = solve_burgers(*sd, *shared_kusuoka_weights(m), c);
    EXPECT_LT(parity_defect(r.solution.u, 1.0), 1e-8);
}

// The drift ubar grad u is even under the swap when u is odd (the reference harmonic
// function is swap-invariant), so odd data acquires an even part. The heat part alone stays odd.
TEST(Burgers, AntisymmetricDataAcquiresEvenPart) {
    const int m = 5;
    const auto sd = dirichlet(m);
    const auto& g = sd->graph();
    // odd combination of eigenfunctions
    DiscreteFunction psi = DiscreteFunction::zero(g);
    for (Eigen::Index k = 0; k < 6; ++k) {
        const auto phi = sd->op->from_dofs(sd->phi.col(k));
        psi.values += phi.values - reflected(phi).values;
    }
    psi.values *= 0.5 / psi.values.cwiseAbs().maxCoeff();
    ASSERT_LT(parity_defect({psi}, -1.0), 1e-12);
    BurgersConfig c;
    c.psi = psi;
    c.grid = TimeGrid::uniform(0.5, 64);
    const auto heat = solve_semilinear(*sd, *shared_kusuoka_weights(m), psi, zero_source(), c.grid);
    EXPECT_LT(parity_defect(heat.u, -1.0), 1e-10);
    const auto r = solve_burgers(*sd, *shared_kusuoka_weights(m), c);
    EXPECT_GT(parity_defect(r.solution.u, -1.0), 1e-6);
}

TEST(Burgers, OuterIteratesObeyBoundAndDissipationFit) {
    const int m = 5;
    BurgersConfig c = config(m, 0.5, 128);
    const auto r = solve_burgers(*dirichlet(m), *shared_kusuoka_weights(m), c);
    for (double s : r.iterate_sup) EXPECT_LE(s, r.psi_sup * (1 + c.slack));
    EXPECT_TRUE(std::isfinite(r.dissipation_C));
    EXPECT_LT(r.outer_distances.back(), c.outer_tol);
    for (std::size_t i = 1; i < r.outer_distances.size(); ++i) EXPECT_LT(r.outer_distances[i], r.outer_distances[i - 1]);
}

TEST(Burgers, OuterToleranceSelfConvergence) {
    const int m = 5;
    const auto sd = dirichlet(m);
    BurgersConfig c = config(m, 0.5, 64);
    c.outer_tol = 1e-5;
    const auto loose = solve_burgers(*sd, *shared_kusuoka_weights(m), c);
    c.outer_tol = 1e-6;
    const auto tight = solve_burgers(*sd, *shared_kusuoka_weights(m), c);
    double d = 0.0;
    for (std::size_t n = 0; n < c.grid.size(); ++n) {
        DiscreteFunction x = loose.solution.u[n];
        x.values -= tight.solution.u[n].values;
        d = std::max(d, l2_nu(*sd->op, x));
    }
    EXPECT_LE(d, 1e-5);
}

TEST(Burgers, DivergenceReportsLog) {
    const int m = 4;
    BurgersConfig c = config(m, 0.5, 32);
    c.outer_tol = 1e-300;
    c.outer_max_iter = 2;
    try {
        solve_burgers(*dirichlet(m), *shared_kusuoka_weights(m), c);
        FAIL();
    } catch (const NonConvergenceError& e) {
        EXPECT_EQ(e.log().size(), 2u);
    }
}

TEST(MaxPrinciple, HeatFlowPassesWithZeroSlack) {
    const int m = 5;
    const auto sd = dirichlet(m);
    const auto grid = TimeGrid::uniform(0.5, 64);
    const auto sol = solve_semilinear(*sd, *shared_kusuoka_weights(m), center_bump(m), zero_source(), grid);
    const auto r = max_principle_report(sol, 0.0);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.observed, 0.0);
    EXPECT_EQ(r.sup_per_time.size(), grid.size());
}

TEST(MaxPrinciple, ScaledSnapshotFails) {
    const int m = 5;
    const auto sd = dirichlet(m);
    const auto grid = TimeGrid::uniform(0.5, 2048);
    auto u = solve_semilinear(*sd, *shared_kusuoka_weights(m), sd->op->from_dofs(sd->phi.col(0)), zero_source(), grid).u;
    const auto before = max_principle_report(u, 0.01);
    EXPECT_TRUE(before.pass);
    const auto worst = std::max_element(before.sup_per_time.begin() + 1, before.sup_per_time.end()) - before.sup_per_time.begin();
    u[static_cast<std::size_t>(worst)].values *= 1.1;
    const auto r = max_principle_report(u, 0.01);
    EXPECT_FALSE(r.pass);
    EXPECT_GT(r.observed, 0.01);
}

TEST(MaxPrinciple, ReferenceRunAndRefinement) {
    const int m = 6;
    const auto sd = dirichlet(m);
    const auto r1 = solve_burgers(*sd, *shared_kusuoka_weights(m), config(m, 0.5, kDefaultSteps));
    const auto r2 = solve_burgers(*sd, *shared_kusuoka_weights(m), config(m, 0.5, 2 * kDefaultSteps));
    const auto a = max_principle_report(r1.solution, 0.01);
    const auto b = max_principle_report(r2.solution, 0.01);
    EXPECT_TRUE(a.pass);
    EXPECT_NEAR(a.bound, 0.5, 1e-15);
    EXPECT_LE(b.observed, a.observed);
    RecordProperty("slack_N", std::to_string(a.observed));
    RecordProperty("slack_2N", std::to_string(b.observed));
}
