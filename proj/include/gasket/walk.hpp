#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "gasket/error.hpp"
#include "gasket/kusuoka.hpp"
#include "gasket/parallel.hpp"
#include "gasket/pde.hpp"
#include "gasket/spectral.hpp"

namespace gasket {

struct WalkConfig {
    int level = 5;
    std::size_t n_paths = 100000;
    std::uint64_t master_seed = 1;
    double T = 0.2;
    double beta_cap = 4.0;
    double T_cap = 1.0;

    void validate() const {
        if (level < 1) throw DomainError("walk level must be >= 1");
        if (n_paths < 1) throw DomainError("n_paths must be >= 1");
        if (!(T >= 0) || !std::isfinite(T)) throw DomainError("horizon must be finite and nonnegative");
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of path `index`; depends on nothing else.
inline std::uint64_t path_seed(std::uint64_t master, std::uint64_t index) { return splitmix64(splitmix64(master) ^ index); }

/// Uniform on [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Continuous-time chain with generator M^-1 K on all level-m vertices, plus
/// the density rho = mu_lumped / nu_lumped of the additive functional.
struct WalkChain {
    std::shared_ptr<const LevelGraph> graph;
    std::vector<double> rate;                     // K_xx / M_xx
    std::vector<std::vector<int>> targets;        // neighbours
    std::vector<std::vector<double>> cumulative;  // cumulative jump probabilities
    std::vector<double> nu;                       // lumped mass
    std::vector<double> mu;                       // each cell's Kusuoka weight split over its 3 vertices
    std::vector<double> rho;
    std::vector<char> boundary;

    int level() const { return graph->level(); }
    std::size_t size() const { return rate.size(); }
};

inline WalkChain build_walk_chain(int m) {
    const OperatorPair op = assemble(m, Boundary::Neumann);
    const auto kw = shared_kusuoka_weights(m);
    const auto& g = *op.graph;
    const std::size_t n = g.num_vertices();
    WalkChain c;
    c.graph = op.graph;
    c.rate.assign(n, 0.0);
    c.targets.assign(n, {});
    c.cumulative.assign(n, {});
    c.nu.assign(n, 0.0);
    c.mu.assign(n, 0.0);
    c.rho.assign(n, 0.0);
    c.boundary.assign(n, 0);
    for (int b : g.boundary_vertices()) c.boundary[static_cast<std::size_t>(b)] = 1;
    for (Eigen::Index i = 0; i < op.K.outerSize(); ++i) {
        const auto v = static_cast<std::size_t>(op.vertex_of_dof[static_cast<std::size_t>(i)]);
        double diag = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(op.K, i); it; ++it) {
            if (it.row() == i) {
                diag = it.value();
            } else if (it.value() < 0) {
                c.targets[v].push_back(op.vertex_of_dof[static_cast<std::size_t>(it.row())]);
                c.cumulative[v].push_back(-it.value());
            }
        }
        for (std::size_t j = 1; j < c.cumulative[v].size(); ++j) c.cumulative[v][j] += c.cumulative[v][j - 1];
        for (double& p : c.cumulative[v]) p /= c.cumulative[v].back();
        c.nu[v] = op.mass[i];
        c.rate[v] = diag / op.mass[i];
    }
    for (std::size_t w = 0; w < g.num_cells(); ++w)
        for (int v : g.cells()[w]) c.mu[static_cast<std::size_t>(v)] += kw->value(w) / 3.0;
    for (std::size_t v = 0; v < n; ++v) c.rho[v] = c.mu[v] / c.nu[v];
    return c;
}

inline std::shared_ptr<const WalkChain> shared_walk_chain(int m) {
    static std::mutex lock;
    static std::map<int, std::shared_ptr<const WalkChain>> cache;
    std::lock_guard<std::mutex> guard(lock);
    auto& p = cache[m];
    if (!p) p = std::make_shared<const WalkChain>(build_walk_chain(m));
    return p;
}

struct PathEnd {
    int state = -1;
    double stop_time = 0.0;  // min(T, first hitting time of V0) when killed, else T
    bool killed = false;     // hit V0 before T
};

/// Runs one path from x0 up to time T, calling visit(x, s_begin, s_end) for
/// every sojourn. With `killing`, the path stops on entering V0.
template <class Visit>
PathEnd run_path(const WalkChain& c, int x0, double T, std::mt19937_64& rng, bool killing, Visit&& visit) {
    int x = x0;
    double s = 0.0;
    for (;;) {
        if (killing && c.boundary[static_cast<std::size_t>(x)]) return {x, s, true};
        const auto xs = static_cast<std::size_t>(x);
        const double hold = -std::log1p(-unit_uniform(rng)) / c.rate[xs];
        if (s + hold >= T) {
            visit(x, s, T);
            return {x, T, false};
        }
        visit(x, s, s + hold);
        s += hold;
        const double u = unit_uniform(rng);
        const auto& cum = c.cumulative[xs];
        const auto j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        x = c.targets[xs][std::min(j, cum.size() - 1)];
    }
}

struct KilledPath {
    std::vector<double> jump_times;  // entry time of each state; starts at 0
    std::vector<int> states;
    double kill_time = 0.0;          // sigma^(T)
    bool hit_boundary = false;
};

inline void check_start(const WalkChain& c, int x0) {
    if (x0 < 0 || static_cast<std::size_t>(x0) >= c.size()) throw DomainError("start vertex out of range");
    if (c.boundary[static_cast<std::size_t>(x0)]) throw DomainError("start vertex lies on V0");
}

inline KilledPath simulate_killed_path(const WalkChain& c, int x0, double T, std::uint64_t master_seed, std::uint64_t index) {
    check_start(c, x0);
    std::mt19937_64 rng(path_seed(master_seed, index));
    KilledPath p;
    const auto end = run_path(c, x0, T, rng, true, [&](int x, double a, double) {
        p.jump_times.push_back(a);
        p.states.push_back(x);
    });
    if (end.killed) {
        p.jump_times.push_back(end.stop_time);
        p.states.push_back(end.state);
    }
    p.kill_time = end.stop_time;
    p.hit_boundary = end.killed;
    return p;
}

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error with a reduction that depends only on sample order.
inline MCEstimate summarize(const std::vector<double>& v) {
    MCEstimate e;
    e.n = v.size();
    if (v.empty()) return e;
    e.mean = pairwise_sum(v) / static_cast<double>(v.size());
    if (v.size() > 1) {
        std::vector<double> sq(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - e.mean) * (v[i] - e.mean);
        e.std_error = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return e;
}

/// One value per path, computed in parallel with per-path seeds.
template <class PathValue>
std::vector<double> sample_paths(std::size_t n, std::uint64_t master_seed, PathValue&& value) {
    std::vector<double> out(n);
    parallel_chunks(n, 64, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) {
            std::mt19937_64 rng(path_seed(master_seed, i));
            out[i] = value(rng);
        }
    });
    return out;
}

/// E[psi(X_T); T < sigma].
inline MCEstimate fk_heat(const WalkChain& c, const WalkConfig& cfg, int x0, const DiscreteFunction& psi) {
    cfg.validate();
    check_start(c, x0);
    if (psi.level != c.level()) throw DomainError("initial data level differs from the walk level");
    for (int b : c.graph->boundary_vertices())
        if (psi[b] != 0.0) throw DomainError("initial data must vanish on V0");
    return summarize(sample_paths(cfg.n_paths, cfg.master_seed, [&](std::mt19937_64& rng) {
        const auto end = run_path(c, x0, cfg.T, rng, true, [](int, double, double) {});
        return end.killed ? 0.0 : psi[end.state];
    }));
}

/// Per-vertex source g(t, x) on a time grid, linear in t between nodes, with
/// its running time integral for exact sojourn integrals.
class VertexSource {
public:
    VertexSource(TimeGrid grid, Eigen::MatrixXd values) : grid_(std::move(grid)), g_(std::move(values)) {
        grid_.validate();
        if (g_.cols() != static_cast<Eigen::Index>(grid_.size())) throw DomainError("source has wrong number of time columns");
        if (!g_.allFinite()) throw DomainError("source must be bounded");
        F_ = Eigen::MatrixXd::Zero(g_.rows(), g_.cols());
        for (Eigen::Index n = 1; n < g_.cols(); ++n)
            F_.col(n) = F_.col(n - 1) + 0.5 * grid_.dt(static_cast<int>(n - 1)) * (g_.col(n - 1) + g_.col(n));
    }

    /// Constant value everywhere.
    static VertexSource constant(std::size_t vertices, const TimeGrid& grid, double c) {
        return {grid, Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(vertices), static_cast<Eigen::Index>(grid.size()), c)};
    }

    const TimeGrid& grid() const { return grid_; }
    const Eigen::MatrixXd& values() const { return g_; }

    /// int_0^t g(r, x) dr for 0 <= t <= T.
    double primitive(int x, double t) const {
        const auto& ts = grid_.times;
        t = std::clamp(t, 0.0, ts.back());
        auto n = static_cast<Eigen::Index>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
        n = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(ts.size()) - 2);
        const double h = ts[static_cast<std::size_t>(n) + 1] - ts[static_cast<std::size_t>(n)];
        const double r = t - ts[static_cast<std::size_t>(n)];
        const double a = g_(x, n), b = g_(x, n + 1);
        return F_(x, n) + r * a + 0.5 * r * r * (b - a) / h;
    }

private:
    TimeGrid grid_;
    Eigen::MatrixXd g_, F_;
};

/// Vertex values of a cell source: mu-weighted average over the cells at each vertex,
/// so that rho(x) nu(x) g(x) equals the lumped load sum_w mu(w) g(w) / 3.
inline VertexSource vertex_source(const WalkChain& c, const KusuokaWeights& kw, const TimeGrid& grid, const std::vector<CellField>& g) {
    if (g.size() != grid.size()) throw DomainError("source has wrong number of time slices");
    const auto& gr = *c.graph;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.size()), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t n = 0; n < grid.size(); ++n)
        for (std::size_t w = 0; w < gr.num_cells(); ++w)
            for (int x : gr.cells()[w]) v(x, static_cast<Eigen::Index>(n)) += kw.value(w) / 3.0 * g[n].values[static_cast<Eigen::Index>(w)];
    for (std::size_t x = 0; x < c.size(); ++x)
        if (c.mu[x] > 0) v.row(static_cast<Eigen::Index>(x)) /= c.mu[x];
    return {grid, std::move(v)};
}

/// E[ int_0^{sigma^(T)} g(T - s, X_s) rho(X_s) ds ]; T is the source grid's horizon.
inline MCEstimate fk_source(const WalkChain& c, const WalkConfig& cfg, int x0, const VertexSource& g) {
    cfg.validate();
    check_start(c, x0);
    if (g.values().rows() != static_cast<Eigen::Index>(c.size())) throw DomainError("source level differs from the walk level");
    const double T = g.grid().times.back();
    return summarize(sample_paths(cfg.n_paths, cfg.master_seed, [&](std::mt19937_64& rng) {
        double acc = 0.0;
        run_path(c, x0, T, rng, true, [&](int x, double a, double b) {
            acc += c.rho[static_cast<std::size_t>(x)] * (g.primitive(x, T - a) - g.primitive(x, T - b));
        });
        return acc;
    }));
}

/// E[exp(beta A_{T ^ sigma})] with A_t = int_0^t rho(X_s) ds.
inline MCEstimate qv_exponential_moment(const WalkChain& c, const WalkConfig& cfg, int x0, double beta) {
    cfg.validate();
    check_start(c, x0);
    if (!(beta >= 0) || beta > cfg.beta_cap) throw DomainError("beta outside [0, beta_cap]");
    if (cfg.T > cfg.T_cap) throw DomainError("horizon exceeds T_cap");
    const auto A = sample_paths(cfg.n_paths, cfg.master_seed, [&](std::mt19937_64& rng) {
        double acc = 0.0;
        run_path(c, x0, cfg.T, rng, true, [&](int x, double a, double b) { acc += c.rho[static_cast<std::size_t>(x)] * (b - a); });
        return acc;
    });
    const double limit = std::log(std::numeric_limits<double>::max()) - 1.0;
    std::size_t over = 0;
    for (double a : A) over += beta * a > limit ? 1 : 0;
    if (over > 0) {
        const double q = 1.0 - static_cast<double>(over) / static_cast<double>(A.size());
        throw OverflowGuardError("exponential moment overflows above empirical quantile " + std::to_string(q), q);
    }
    std::vector<double> v(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) v[i] = std::exp(beta * A[i]);
    return summarize(v);
}

/// Fraction of paths absorbed in V0 before T.
inline double killing_probability(const WalkChain& c, const WalkConfig& cfg, int x0) {
    cfg.validate();
    check_start(c, x0);
    const auto k = sample_paths(cfg.n_paths, cfg.master_seed, [&](std::mt19937_64& rng) {
        return run_path(c, x0, cfg.T, rng, true, [](int, double, double) {}).killed ? 1.0 : 0.0;
    });
    return pairwise_sum(k) / static_cast<double>(k.size());
}

/// Mean holding time over `jumps` sojourns of the unkilled walk.
inline double mean_holding_time(const WalkChain& c, int x0, std::size_t jumps, std::uint64_t seed) {
    if (jumps < 1) throw DomainError("need at least one jump");
    std::mt19937_64 rng(path_seed(seed, 0));
    std::vector<double> holds(jumps);
    auto x = static_cast<std::size_t>(x0);
    for (auto& h : holds) {
        h = -std::log1p(-unit_uniform(rng)) / c.rate[x];
        const auto& cum = c.cumulative[x];
        const auto j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), unit_uniform(rng)) - cum.begin());
        x = static_cast<std::size_t>(c.targets[x][std::min(j, cum.size() - 1)]);
    }
    return pairwise_sum(holds) / static_cast<double>(jumps);
}

/// Time fractions spent at each vertex by one unkilled path of length T.
inline std::vector<double> occupation_distribution(const WalkChain& c, int x0, double T, std::uint64_t seed) {
    if (!(T > 0) || !std::isfinite(T)) throw DomainError("horizon must be positive");
    std::mt19937_64 rng(path_seed(seed, 0));
    std::vector<double> occ(c.size(), 0.0);
    run_path(c, x0, T, rng, false, [&](int x, double a, double b) { occ[static_cast<std::size_t>(x)] += b - a; });
    for (double& o : occ) o /= T;
    return occ;
}

/// sum (p - q)^2 / q.
inline double chi_square_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw DomainError("distributions differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]) / q[i];
    return s;
}

}  // namespace gasket
