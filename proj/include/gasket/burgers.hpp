#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gasket/pde.hpp"

namespace gasket {

struct BurgersConfig {
    DiscreteFunction psi;
    TimeGrid grid = TimeGrid::uniform(0.5, kDefaultSteps);
    double outer_tol = 1e-8;
    int outer_max_iter = 50;
    double inner_tol = 1e-10;
    int inner_max_iter = 100;
    double slack = 0.01;  // relative, for the uniform bound on outer iterates
};

struct BurgersSolution {
    PDESolution solution;
    std::vector<double> outer_distances;  // sup_t |u^n - u^{n-1}|_{L^2(nu)}
    std::vector<int> inner_iterations;
    std::vector<double> iterate_sup;      // sup_t max_x |u^n|, n = 0, 1, ...
    double psi_sup = 0.0;
    double dissipation_C = 0.0;           // smallest C with d/dt|u|^2 <= -E(u)/2 + C|u|^2 on the grid
};

inline double sup_abs(const std::vector<DiscreteFunction>& u) {
    double s = 0.0;
    for (const auto& x : u) s = std::max(s, x.values.cwiseAbs().maxCoeff());
    return s;
}

/// Fitted constant of the dissipation estimate, from forward differences.
inline double dissipation_constant(const EnergyReport& r, const TimeGrid& grid) {
    double C = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
        const double u2 = r.l2[n] * r.l2[n];
        if (u2 <= 0) continue;
        const double d = (r.l2[n + 1] * r.l2[n + 1] - u2) / grid.dt(static_cast<int>(n));
        C = std::max(C, (d + 0.5 * r.energy[n]) / u2);
    }
    return std::isfinite(C) ? C : 0.0;
}

/// Outer frozen-drift iteration: step n solves du = Lu dt + ubar^{n-1} grad u dmu.
inline BurgersSolution solve_burgers(const SpectralDecomposition& sd, const KusuokaWeights& kw, const BurgersConfig& cfg) {
    cfg.grid.validate();
    check_dirichlet_data(sd, cfg.psi);
    if (!(cfg.outer_tol > 0) || !(cfg.inner_tol > 0)) throw DomainError("tolerances must be positive");
    if (cfg.outer_max_iter < 1) throw DomainError("outer_max_iter must be >= 1");
    const double K = cfg.psi.values.cwiseAbs().maxCoeff();
    if (!std::isfinite(K)) throw DomainError("initial data must be bounded");

    const CellOperators ops(*sd.op, kw);
    BurgersSolution out;
    out.psi_sup = K;
    PDESolution prev = solve_semilinear(sd, kw, cfg.psi, zero_source(), cfg.grid, cfg.inner_tol, cfg.inner_max_iter);
    out.iterate_sup.push_back(sup_abs(prev.u));

    for (int n = 1; n <= cfg.outer_max_iter; ++n) {
        // frozen drift: cell means of the previous iterate
        const Eigen::MatrixXd drift = ops.mean * (sd.phi * prev.modes);
        SourceFunction f{"burgers-drift",
                         [&drift](std::size_t i, double, std::size_t c, double, double z) {
                             return drift(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) * z;
                         },
                         K};
        PDESolution next = solve_semilinear(sd, kw, cfg.psi, f, cfg.grid, cfg.inner_tol, cfg.inner_max_iter);
        double d = 0.0;
        for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
            DiscreteFunction diff = next.u[i];
            diff.values -= prev.u[i].values;
            d = std::max(d, l2_nu(*sd.op, diff));
        }
        out.outer_distances.push_back(d);
        out.inner_iterations.push_back(next.iterations);
        out.iterate_sup.push_back(sup_abs(next.u));
        prev = std::move(next);
        if (d < cfg.outer_tol) {
            out.dissipation_C = dissipation_constant(energy_report(sd, prev), cfg.grid);
            out.solution = std::move(prev);
            return out;
        }
    }
    throw NonConvergenceError("outer iteration did not reach tolerance in " + std::to_string(cfg.outer_max_iter) + " steps",
                              out.outer_distances);
}

struct MaxPrincipleReport {
    std::vector<double> sup_per_time;
    double bound = 0.0;     // |psi|_inf
    double slack = 0.0;     // allowed relative excess
    double observed = 0.0;  // max(0, sup_t |u|_inf / bound - 1)
    bool pass = false;
};

inline MaxPrincipleReport max_principle_report(const std::vector<DiscreteFunction>& u, double slack = 0.01) {
    if (u.empty()) throw DomainError("empty solution");
    if (!(slack >= 0)) throw DomainError("slack must be nonnegative");
    MaxPrincipleReport r;
    r.slack = slack;
    r.bound = u.front().values.cwiseAbs().maxCoeff();
    double sup = 0.0;
    for (const auto& x : u) {
        r.sup_per_time.push_back(x.values.cwiseAbs().maxCoeff());
        sup = std::max(sup, r.sup_per_time.back());
    }
    r.observed = r.bound > 0 ? std::max(0.0, sup / r.bound - 1.0) : (sup > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.pass = std::isfinite(sup) && sup <= r.bound * (1.0 + slack);
    return r;
}

inline MaxPrincipleReport max_principle_report(const PDESolution& sol, double slack = 0.01) {
    return max_principle_report(sol.u, slack);
}

}  // namespace gasket
