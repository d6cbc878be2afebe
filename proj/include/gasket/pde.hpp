#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gasket/error.hpp"
#include "gasket/forms.hpp"
#include "gasket/kusuoka.hpp"
#include "gasket/parallel.hpp"
#include "gasket/spectral.hpp"

namespace gasket {

inline constexpr int kDefaultSteps = 256;

/// 0 = t_0 < t_1 < ... < t_N = T.
struct TimeGrid {
    double T = 0.0;
    std::vector<double> times;

    static TimeGrid uniform(double T, int steps) {
        if (!(T > 0)) throw DomainError("time horizon must be positive");
        if (steps < 2) throw DomainError("a time grid needs at least two steps");
        TimeGrid g;
        g.T = T;
        g.times.resize(static_cast<std::size_t>(steps) + 1);
        for (int n = 0; n <= steps; ++n) g.times[static_cast<std::size_t>(n)] = T * n / steps;
        g.times.back() = T;
        return g;
    }

    int steps() const { return static_cast<int>(times.size()) - 1; }
    std::size_t size() const { return times.size(); }
    double dt(int n) const { return times[static_cast<std::size_t>(n) + 1] - times[static_cast<std::size_t>(n)]; }

    void validate() const {
        if (times.size() < 3) throw DomainError("a time grid needs at least two steps");
        if (times.front() != 0.0) throw DomainError("time grid must start at 0");
        for (std::size_t n = 1; n < times.size(); ++n)
            if (!(times[n] > times[n - 1])) throw DomainError("time grid must be strictly increasing");
        if (T != times.back()) throw DomainError("time grid must end at T");
    }
};

/// Trapezoid rule for samples on the grid.
inline double trapezoid(const TimeGrid& grid, const std::vector<double>& f) {
    double s = 0.0;
    for (int n = 0; n < grid.steps(); ++n) s += 0.5 * grid.dt(n) * (f[static_cast<std::size_t>(n)] + f[static_cast<std::size_t>(n) + 1]);
    return s;
}

namespace detail {

/// (1 - e^-z) / z
inline double phi1(double z) { return z < 1e-8 ? 1.0 - 0.5 * z : -std::expm1(-z) / z; }

/// (z - 1 + e^-z) / z^2
inline double phi2(double z) {
    if (z < 1e-2) return 0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0 + z * z * z * z / 720.0;
    return (z + std::expm1(-z)) / (z * z);
}

}  // namespace detail

/// Sparse cell operators on the Dirichlet dofs: cell means, gradients and mu-loads.
struct CellOperators {
    Eigen::SparseMatrix<double> mean;  // cells x dofs
    Eigen::SparseMatrix<double> grad;  // cells x dofs
    Eigen::SparseMatrix<double> load;  // dofs x cells, b = load * g  (b_x = sum g(w) mu(w) / 3)

    CellOperators(const OperatorPair& op, const KusuokaWeights& kw) {
        const auto& g = *op.graph;
        if (kw.level() != g.level()) throw DomainError("Kusuoka weights and operator levels differ");
        const GradientOperator gradient(op.graph, kw);
        std::vector<Eigen::Triplet<double>> tm, tg, tl;
        for (std::size_t c = 0; c < g.num_cells(); ++c) {
            const auto& t = g.cells()[c];
            for (int j = 0; j < 3; ++j) {
                const int d = op.dof_of_vertex[static_cast<std::size_t>(t[static_cast<std::size_t>(j)])];
                if (d < 0) continue;
                const auto row = static_cast<int>(c);
                tm.emplace_back(row, d, 1.0 / 3.0);
                tg.emplace_back(row, d, gradient.coefficients()[c][static_cast<std::size_t>(j)]);
                tl.emplace_back(d, row, kw.value(c) / 3.0);
            }
        }
        const auto cells = static_cast<Eigen::Index>(g.num_cells());
        mean.resize(cells, op.dofs());
        grad.resize(cells, op.dofs());
        load.resize(op.dofs(), cells);
        mean.setFromTriplets(tm.begin(), tm.end());
        grad.setFromTriplets(tg.begin(), tg.end());
        load.setFromTriplets(tl.begin(), tl.end());
    }
};

/// Mode coefficients of the Duhamel convolution for mode sources G (modes x times),
/// linear in time on each step, integrated exactly against the exponential kernel.
inline Eigen::MatrixXd duhamel_modes(const SpectralDecomposition& sd, const Eigen::MatrixXd& G, const TimeGrid& grid) {
    const Eigen::Index modes = sd.eigenvalues.size();
    if (G.rows() != modes || G.cols() != static_cast<Eigen::Index>(grid.size())) throw DomainError("source shape mismatch");
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(modes, G.cols());
    parallel_chunks(static_cast<std::size_t>(modes), 16, [&](std::size_t b, std::size_t e, std::size_t) {
        for (auto k = static_cast<Eigen::Index>(b); k < static_cast<Eigen::Index>(e); ++k) {
            const double lambda = sd.eigenvalues[k];
            double c = 0.0;
            for (int n = 0; n < grid.steps(); ++n) {
                const double h = grid.dt(n);
                const double z = lambda * h;
                const double i0 = h * detail::phi1(z);
                const double i1 = h * detail::phi2(z);
                c = std::exp(-z) * c + (i0 - i1) * G(k, n) + i1 * G(k, n + 1);
                C(k, n + 1) = c;
            }
        }
    });
    return C;
}

/// Mode sources <g(t_n), phi_k>_mu for cell fields given as a cells x times matrix.
inline Eigen::MatrixXd source_modes(const SpectralDecomposition& sd, const CellOperators& ops, const Eigen::MatrixXd& g) {
    const Eigen::MatrixXd b = ops.load * g;
    return sd.phi.transpose() * b;
}

inline Eigen::MatrixXd to_matrix(const std::vector<CellField>& g) {
    if (g.empty()) throw DomainError("empty source");
    Eigen::MatrixXd out(g.front().values.size(), static_cast<Eigen::Index>(g.size()));
    for (std::size_t n = 0; n < g.size(); ++n) {
        if (g[n].values.size() != out.rows()) throw DomainError("source levels differ across times");
        out.col(static_cast<Eigen::Index>(n)) = g[n].values;
    }
    return out;
}

/// u(t_n) = int_0^t_n P_{t_n - s}(g(s) mu) ds at every grid time.
inline std::vector<DiscreteFunction> duhamel(const SpectralDecomposition& sd, const KusuokaWeights& kw,
                                             const std::vector<CellField>& g, const TimeGrid& grid) {
    grid.validate();
    if (g.size() != grid.size()) throw DomainError("source must be given at every grid time");
    const CellOperators ops(*sd.op, kw);
    const Eigen::MatrixXd C = duhamel_modes(sd, source_modes(sd, ops, to_matrix(g)), grid);
    const Eigen::MatrixXd U = sd.phi * C;
    std::vector<DiscreteFunction> out;
    out.reserve(grid.size());
    for (Eigen::Index n = 0; n < U.cols(); ++n) out.push_back(sd.op->from_dofs(U.col(n)));
    return out;
}

struct PDESolution {
    TimeGrid grid;
    std::vector<DiscreteFunction> u;
    std::vector<CellField> grad;
    Eigen::MatrixXd modes;               // phi-coefficients, modes x times
    std::vector<double> picard_distances;
    int iterations = 0;
};

/// Heat-flow coefficients e^{-lambda_k t_n} <psi, phi_k>_nu.
inline Eigen::MatrixXd heat_modes(const SpectralDecomposition& sd, const DiscreteFunction& psi, const TimeGrid& grid) {
    const Eigen::VectorXd c = sd.coefficients(sd.op->to_dofs(psi));
    Eigen::MatrixXd A(c.size(), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t n = 0; n < grid.size(); ++n)
        A.col(static_cast<Eigen::Index>(n)) = c.cwiseProduct((-grid.times[n] * sd.eigenvalues.array()).exp().matrix());
    return A;
}

inline void check_dirichlet_data(const SpectralDecomposition& sd, const DiscreteFunction& psi) {
    if (sd.boundary() != Boundary::Dirichlet) throw DomainError("the parabolic solvers need a Dirichlet decomposition");
    check_level(sd.graph(), psi);
    for (int b : sd.graph().boundary_vertices())
        if (psi[b] != 0.0) throw DomainError("initial data must vanish on V0");
}

inline PDESolution finish_solution(const SpectralDecomposition& sd, const CellOperators& ops, const TimeGrid& grid,
                                   Eigen::MatrixXd modes) {
    PDESolution sol;
    sol.grid = grid;
    const Eigen::MatrixXd U = sd.phi * modes;
    const Eigen::MatrixXd Z = ops.grad * U;
    for (Eigen::Index n = 0; n < U.cols(); ++n) {
        sol.u.push_back(sd.op->from_dofs(U.col(n)));
        sol.grad.push_back(CellField{sd.level(), Z.col(n)});
    }
    sol.modes = std::move(modes);
    return sol;
}

/// u(t) = P_t psi + int_0^t P_{t-s}(g(s) mu) ds.
inline PDESolution solve_linear(const SpectralDecomposition& sd, const KusuokaWeights& kw, const DiscreteFunction& psi,
                                const std::vector<CellField>& g, const TimeGrid& grid) {
    grid.validate();
    check_dirichlet_data(sd, psi);
    if (g.size() != grid.size()) throw DomainError("source must be given at every grid time");
    const CellOperators ops(*sd.op, kw);
    Eigen::MatrixXd A = heat_modes(sd, psi, grid) + duhamel_modes(sd, source_modes(sd, ops, to_matrix(g)), grid);
    return finish_solution(sd, ops, grid, std::move(A));
}

/// f(t, w, y, z): source evaluated per grid time index and cell, from the cell mean y and
/// the cell gradient z. Lipschitz in (y, z) with constant lipschitz_K.
struct SourceFunction {
    std::string name;
    std::function<double(std::size_t time_index, double t, std::size_t cell, double y, double z)> f;
    double lipschitz_K = 0.0;

    double operator()(std::size_t n, double t, std::size_t cell, double y, double z) const { return f(n, t, cell, y, z); }
};

inline SourceFunction zero_source() {
    return {"zero", [](std::size_t, double, std::size_t, double, double) { return 0.0; }, 0.0};
}

inline SourceFunction constant_source(double c) {
    return {"constant", [c](std::size_t, double, std::size_t, double, double) { return c; }, 0.0};
}

/// Piecewise-harmonic tent: 1 on V1 minus V0, 0 on V0.
inline DiscreteFunction center_bump(int m) {
    if (m < 1) throw DomainError("center bump needs level >= 1");
    const auto g = shared_graph(1);
    DiscreteFunction u = DiscreteFunction::zero(*g);
    for (int v : g->interior_vertices()) u[v] = 1.0;
    return harmonic_extend(u, m);
}

/// K (sin y + sin z) + 1: Lipschitz with constant K and f(., 0, 0) = 1.
inline SourceFunction sine_source(double K) {
    return {"sine", [K](std::size_t, double, std::size_t, double y, double z) { return K * (std::sin(y) + std::sin(z)) + 1.0; }, K};
}

/// ||f(., 0, 0)||_{L^2(0,T; L^2(mu))} by the trapezoid rule.
inline double source_zero_norm(const SourceFunction& f, const KusuokaWeights& kw, const TimeGrid& grid) {
    std::vector<double> v(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        double s = 0.0;
        for (std::size_t c = 0; c < kw.size(); ++c) {
            const double x = f(n, grid.times[n], c, 0.0, 0.0);
            s += x * x * kw.value(c);
        }
        v[n] = s;
    }
    return std::sqrt(trapezoid(grid, v));
}

/// Largest observed |f(y,z) - f(y',z')| / (|y-y'| + |z-z'|) on random probes.
inline double sampled_lipschitz(const SourceFunction& f, const TimeGrid& grid, std::size_t cells, int probes,
                                std::uint64_t seed = 7, double radius = 3.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-radius, radius);
    std::uniform_int_distribution<std::size_t> pick_t(0, grid.size() - 1), pick_c(0, cells - 1);
    double worst = 0.0;
    for (int i = 0; i < probes; ++i) {
        const std::size_t n = pick_t(rng), c = pick_c(rng);
        const double y = u(rng), z = u(rng), y2 = u(rng), z2 = u(rng);
        const double d = std::abs(y - y2) + std::abs(z - z2);
        if (d == 0.0) continue;
        worst = std::max(worst, std::abs(f(n, grid.times[n], c, y, z) - f(n, grid.times[n], c, y2, z2)) / d);
    }
    return worst;
}

/// sup_t |a_n|_{L^2(nu)} + (int E(a) dt)^(1/2) for mode coefficients a.
inline double picard_distance(const SpectralDecomposition& sd, const TimeGrid& grid, const Eigen::MatrixXd& d) {
    double sup = 0.0;
    std::vector<double> e(grid.size());
    for (Eigen::Index n = 0; n < d.cols(); ++n) {
        sup = std::max(sup, d.col(n).norm());
        e[static_cast<std::size_t>(n)] = d.col(n).cwiseAbs2().dot(sd.eigenvalues);
    }
    return sup + std::sqrt(std::max(0.0, trapezoid(grid, e)));
}

/// Picard iteration u^n = P_t psi + int P_{t-s}(f(s, u^{n-1}, grad u^{n-1}) mu) ds from u^0 = P_t psi.
inline PDESolution solve_semilinear(const SpectralDecomposition& sd, const KusuokaWeights& kw, const DiscreteFunction& psi,
                                    const SourceFunction& f, const TimeGrid& grid, double tol = 1e-10, int max_iter = 100) {
    grid.validate();
    check_dirichlet_data(sd, psi);
    if (!(tol > 0)) throw DomainError("tolerance must be positive");
    const CellOperators ops(*sd.op, kw);
    const Eigen::MatrixXd heat = heat_modes(sd, psi, grid);
    Eigen::MatrixXd A = heat;
    std::vector<double> log;
    const auto cells = static_cast<std::size_t>(ops.mean.rows());
    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::MatrixXd U = sd.phi * A;
        const Eigen::MatrixXd Y = ops.mean * U;
        const Eigen::MatrixXd Z = ops.grad * U;
        Eigen::MatrixXd F(Y.rows(), Y.cols());
        parallel_chunks(grid.size(), 8, [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t n = b; n < e; ++n)
                for (std::size_t c = 0; c < cells; ++c) {
                    const auto r = static_cast<Eigen::Index>(c), col = static_cast<Eigen::Index>(n);
                    F(r, col) = f(n, grid.times[n], c, Y(r, col), Z(r, col));
                }
        });
        Eigen::MatrixXd next = heat + duhamel_modes(sd, source_modes(sd, ops, F), grid);
        const double d = picard_distance(sd, grid, next - A);
        log.push_back(d);
        A.swap(next);
        if (d < tol) {
            PDESolution sol = finish_solution(sd, ops, grid, std::move(A));
            sol.picard_distances = std::move(log);
            sol.iterations = it;
            return sol;
        }
    }
    throw NonConvergenceError("Picard iteration did not reach tolerance in " + std::to_string(max_iter) + " iterations",
                              std::move(log));
}

/// Norms of a solution: sup_t |u|_{L^2(nu)}, |u|_{L^2(0,T;F)} and |d_t u|_{L^2(0,T;F^-1)}
/// (forward differences, assigned to the left end of each step).
struct EnergyReport {
    double sup_l2 = 0.0;
    double l2_F = 0.0;
    double dual_dt = 0.0;
    std::vector<double> l2;       // |u(t_n)|_{L^2(nu)}
    std::vector<double> energy;   // E(u(t_n))
};

inline EnergyReport energy_report(const SpectralDecomposition& sd, const PDESolution& sol) {
    const auto& grid = sol.grid;
    Eigen::MatrixXd A = sol.modes;
    if (A.size() == 0) {
        A.resize(sd.eigenvalues.size(), static_cast<Eigen::Index>(sol.u.size()));
        for (std::size_t n = 0; n < sol.u.size(); ++n) A.col(static_cast<Eigen::Index>(n)) = sd.coefficients(sd.op->to_dofs(sol.u[n]));
    }
    EnergyReport r;
    std::vector<double> f(grid.size());
    for (Eigen::Index n = 0; n < A.cols(); ++n) {
        const double l2 = A.col(n).norm();
        const double e = A.col(n).cwiseAbs2().dot(sd.eigenvalues);
        r.l2.push_back(l2);
        r.energy.push_back(e);
        r.sup_l2 = std::max(r.sup_l2, l2);
        f[static_cast<std::size_t>(n)] = l2 * l2 + e;
    }
    r.l2_F = std::sqrt(trapezoid(grid, f));
    const Eigen::ArrayXd inv_one_plus = (1.0 + sd.eigenvalues.array()).inverse();
    double s = 0.0;
    for (int n = 0; n < grid.steps(); ++n) {
        const double h = grid.dt(n);
        const Eigen::ArrayXd d = (A.col(n + 1) - A.col(n)).array() / h;
        s += h * (d.square() * inv_one_plus).sum();
    }
    r.dual_dt = std::sqrt(s);
    return r;
}

/// |g|_{L^2(0,T; L^2(mu))} of a cell-field source.
inline double source_norm(const std::vector<CellField>& g, const KusuokaWeights& kw, const TimeGrid& grid) {
    std::vector<double> v(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) {
        double s = 0.0;
        for (std::size_t c = 0; c < kw.size(); ++c) s += g[n][c] * g[n][c] * kw.value(c);
        v[n] = s;
    }
    return std::sqrt(trapezoid(grid, v));
}

/// Empirical constant in  sup|u|_2 + |u|_{L^2 F} + |d_t u|_{L^2 F^-1} <= C (|psi|_2 + |g|_{L^2 L^2(mu)}).
inline double linear_bound_constant(const EnergyReport& r, double psi_l2, double g_norm) {
    const double rhs = psi_l2 + g_norm;
    return rhs > 0 ? (r.sup_l2 + r.l2_F + r.dual_dt) / rhs : 0.0;
}

struct HolderReport {
    std::vector<double> deltas;
    std::vector<double> time_increments;   // max over window and vertices of |u(t+delta) - u(t)|
    std::vector<double> time_quotients;    // increments / delta^theta
    double theta = 0.45;
    double time_slope = 0.0;
    double time_constant = 0.0;            // max quotient
    double fine_time_slope = 0.0;          // slope over the finer half of the deltas
    bool time_bounded = false;             // fine_time_slope >= theta: the quotient cannot grow as delta -> 0
    std::vector<int> levels;
    std::vector<double> space_increments;  // max |u(x) - u(y)| over edges of level-j cells
    std::vector<double> space_resistance;  // mean R(x, y) over (sampled) such edges
    double space_slope = 0.0;
};

/// Regressions of time and space increments over the window [T/4, T] and at t = T.
inline HolderReport holder_report(const PDESolution& sol, const ResistanceSolver& resistance, double theta = 0.45,
                                  int first_level = 1, std::size_t resistance_samples = 48) {
    const auto& grid = sol.grid;
    const double T = grid.T;
    HolderReport r;
    r.theta = theta;
    std::size_t n0 = 0;
    while (n0 < grid.size() && grid.times[n0] < T / 4 - 1e-12 * T) ++n0;
    const double h = grid.dt(static_cast<int>(n0));
    for (std::size_t stride = 1; n0 + stride < grid.size() && stride * h <= T / 4 * (1 + 1e-9); stride *= 2) {
        double worst = 0.0;
        for (std::size_t n = n0; n + stride < grid.size(); ++n)
            worst = std::max(worst, (sol.u[n + stride].values - sol.u[n].values).cwiseAbs().maxCoeff());
        const double delta = grid.times[n0 + stride] - grid.times[n0];
        r.deltas.push_back(delta);
        r.time_increments.push_back(worst);
        r.time_quotients.push_back(worst / std::pow(delta, theta));
    }
    if (r.deltas.size() < 2) throw DomainError("time window too short for a Hoelder regression");
    for (double x : r.time_increments)
        if (!(x > 0)) throw DomainError("degenerate solution: no time variation");
    std::vector<double> ld, li;
    for (std::size_t i = 0; i < r.deltas.size(); ++i) {
        ld.push_back(std::log(r.deltas[i]));
        li.push_back(std::log(r.time_increments[i]));
    }
    const auto slope = [](const std::vector<double>& x, const std::vector<double>& y) {
        const double n = static_cast<double>(x.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mx += x[i] / n;
            my += y[i] / n;
        }
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
        }
        return sxy / sxx;
    };
    r.time_slope = slope(ld, li);
    r.time_constant = *std::max_element(r.time_quotients.begin(), r.time_quotients.end());
    const std::size_t half = std::max<std::size_t>(2, (ld.size() + 1) / 2);
    r.fine_time_slope = slope(std::vector<double>(ld.begin(), ld.begin() + static_cast<std::ptrdiff_t>(half)),
                              std::vector<double>(li.begin(), li.begin() + static_cast<std::ptrdiff_t>(half)));
    r.time_bounded = std::isfinite(r.time_constant) && r.fine_time_slope >= theta;

    const DiscreteFunction& u = sol.u.back();
    const int m = u.level;
    const auto fine = shared_graph(m);
    for (int j = first_level; j <= m; ++j) {
        const auto coarse = shared_graph(j);
        double worst = 0.0, rsum = 0.0;
        std::size_t rcount = 0;
        const std::size_t edges = coarse->edges().size();
        const std::size_t stride = std::max<std::size_t>(1, edges / resistance_samples);
        for (std::size_t e = 0; e < edges; ++e) {
            const auto& ed = coarse->edges()[e];
            const int x = fine->find(coarse->lattice_at(ed[0], m));
            const int y = fine->find(coarse->lattice_at(ed[1], m));
            worst = std::max(worst, std::abs(u[x] - u[y]));
            if (e % stride == 0) {
                rsum += resistance(x, y);
                ++rcount;
            }
        }
        r.levels.push_back(j);
        r.space_increments.push_back(worst);
        r.space_resistance.push_back(rsum / static_cast<double>(rcount));
    }
    std::vector<double> lr, ls;
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
        if (!(r.space_increments[i] > 0)) throw DomainError("degenerate solution: no spatial variation");
        lr.push_back(std::log(r.space_resistance[i]));
        ls.push_back(std::log(r.space_increments[i]));
    }
    if (lr.size() < 2) throw DomainError("need at least two levels for the space regression");
    r.space_slope = slope(lr, ls);
    return r;
}

}  // namespace gasket
