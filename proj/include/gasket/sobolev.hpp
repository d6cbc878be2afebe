#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gasket/constants.hpp"
#include "gasket/error.hpp"
#include "gasket/forms.hpp"
#include "gasket/kusuoka.hpp"
#include "gasket/level_graph.hpp"
#include "gasket/spectral.hpp"

namespace gasket {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// A finite Borel measure given by its cell masses at every level it supports.
/// Exponents may be +infinity.
struct MeasureSpec {
    std::string name;
    std::function<Eigen::VectorXd(int)> level_weights;  // masses of level-m cells by word rank
    double delta_bar = 1.0;
    double delta_underbar = 1.0;
    double C_sigma = 1.0;
    int max_level = kMaxKusuokaLevel;

    Eigen::VectorXd weights(int m) const {
        if (m < 0 || m > max_level)
            throw ResourceLimitError("measure '" + name + "' is tabulated up to level " + std::to_string(max_level));
        return level_weights(m);
    }
    double cell_weight(const Word& w) const { return weights(w.size())[static_cast<Eigen::Index>(w.index())]; }
};

inline MeasureSpec nu_measure() {
    MeasureSpec s;
    s.name = "nu";
    s.level_weights = [](int m) {
        return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pow3(m)), 1.0 / static_cast<double>(pow3(m)));
    };
    s.max_level = kDefaultMaxLevel;
    return s;
}

/// Kusuoka measure; upper exponent delta_s, lower exponent 1.
inline MeasureSpec mu_measure() {
    MeasureSpec s;
    s.name = "mu";
    s.level_weights = [](int m) {
        const auto& v = shared_kusuoka_weights(m)->values();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    s.delta_bar = constants().delta_s;
    s.delta_underbar = 1.0;
    s.C_sigma = 1.0;
    return s;
}

namespace detail {

/// Number of level-m cells containing a gasket point with lattice coordinates p at level `level`.
/// Returns 0 if the point is not in the cell.
inline int dirac_share(LatticePoint p, int level, const Word& w) {
    const int m = w.size();
    const int fine = std::max(m, level);
    const std::int64_t up_p = std::int64_t{1} << (fine - level);
    const std::int64_t up_c = std::int64_t{1} << (fine - m);
    const LatticePoint q{p.a * up_p, p.b * up_p};
    const LatticePoint c0 = cell_corner(w, 0);
    const std::int64_t da = q.a - c0.a * up_c, db = q.b - c0.b * up_c;
    if (da < 0 || db < 0 || da + db > up_c) return 0;
    const bool on_coarse_lattice = q.a % up_c == 0 && q.b % up_c == 0;
    if (!on_coarse_lattice) return 1;
    const std::int64_t a = q.a / up_c, b = q.b / up_c, side = std::int64_t{1} << m;
    const bool boundary = (a == 0 && b == 0) || (a == side && b == 0) || (a == 0 && b == side);
    return boundary ? 1 : 2;
}

}  // namespace detail

/// Unit point mass at a vertex of V_level, split equally over the cells that share it.
inline MeasureSpec dirac_measure(LatticePoint p, int level) {
    MeasureSpec s;
    s.name = "dirac";
    s.level_weights = [p, level](int m) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pow3(m)));
        // only cells along the point's address can contain it; a scan is cheap at tabulated levels
        for (std::uint64_t c = 0; c < pow3(m); ++c) {
            const int share = detail::dirac_share(p, level, Word::from_index(c, m));
            if (share) w[static_cast<Eigen::Index>(c)] = 1.0 / share;
        }
        return w;
    };
    s.delta_bar = kInfinity;
    s.delta_underbar = kInfinity;
    s.C_sigma = 1.0;
    s.max_level = kDefaultMaxLevel;
    return s;
}

/// A measure tabulated at one level; coarser levels by summation.
inline MeasureSpec tabulated_measure(std::string name, int level, Eigen::VectorXd weights, double delta_bar = 1.0,
                                     double delta_underbar = 1.0, double C_sigma = kInfinity) {
    if (static_cast<std::uint64_t>(weights.size()) != pow3(level)) throw DomainError("table size is not 3^level");
    if (weights.minCoeff() < 0) throw DomainError("negative cell weight in measure table");
    MeasureSpec s;
    s.name = std::move(name);
    auto table = std::make_shared<const Eigen::VectorXd>(std::move(weights));
    s.level_weights = [table, level](int m) {
        Eigen::VectorXd w = *table;
        for (int l = level; l > m; --l) {
            Eigen::VectorXd c(w.size() / 3);
            for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = w[3 * i] + w[3 * i + 1] + w[3 * i + 2];
            w.swap(c);
        }
        return w;
    };
    s.delta_bar = delta_bar;
    s.delta_underbar = delta_underbar;
    s.C_sigma = C_sigma;
    s.max_level = level;
    return s;
}

/// CSV rows "word,weight" (optional header), all words of one length.
inline MeasureSpec measure_from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open measure file " + path);
    std::string line;
    int level = -1;
    std::vector<std::pair<std::uint64_t, double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DomainError("measure file line without comma: " + line);
        const std::string word = line.substr(0, comma);
        if (word == "word") continue;
        const Word w{std::string_view(word)};
        if (level < 0) level = w.size();
        if (w.size() != level) throw DomainError("measure file mixes word lengths");
        rows.emplace_back(w.index(), std::stod(line.substr(comma + 1)));
    }
    if (level < 0) throw DomainError("empty measure file " + path);
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pow3(level)));
    for (const auto& [c, v] : rows) weights[static_cast<Eigen::Index>(c)] += v;
    return tabulated_measure("file:" + path, level, std::move(weights));
}

/// Largest relative mismatch between parent masses and the sums of their children.
inline double additivity_defect(const MeasureSpec& spec, int m_max) {
    double worst = 0.0;
    Eigen::VectorXd parent = spec.weights(0);
    for (int m = 1; m <= m_max; ++m) {
        const Eigen::VectorXd child = spec.weights(m);
        for (Eigen::Index c = 0; c < parent.size(); ++c) {
            const double s = child[3 * c] + child[3 * c + 1] + child[3 * c + 2];
            worst = std::max(worst, std::abs(s - parent[c]) / std::max(parent.cwiseAbs().maxCoeff(), 1e-300));
        }
        parent = child;
    }
    return worst;
}

/// (sum_w |u_bar(w)|^p sigma(w))^(1/p) with cell means u_bar; p = inf is the vertex maximum.
inline double lp_norm(const DiscreteFunction& u, const Eigen::VectorXd& cell_weights, double p) {
    if (!(p >= 1.0)) throw DomainError("lp_norm needs p >= 1");
    if (std::isinf(p)) return u.values.cwiseAbs().maxCoeff();
    const auto g = shared_graph(u.level);
    if (static_cast<std::size_t>(cell_weights.size()) != g->num_cells()) throw DomainError("weights and function levels differ");
    const CellField bar = cell_means(*g, u);
    double s = 0.0;
    for (std::size_t c = 0; c < g->num_cells(); ++c)
        s += std::pow(std::abs(bar[c]), p) * cell_weights[static_cast<Eigen::Index>(c)];
    return std::pow(s, 1.0 / p);
}

inline double lp_norm(const DiscreteFunction& u, const MeasureSpec& spec, double p) {
    return lp_norm(u, spec.weights(u.level), p);
}

struct ExponentPair {
    double a1 = 0.0;
    double a2 = 0.0;
};

/// Which measure condition the exponents come from.
/// Upper: sigma(S) <= C nu(S)^(1/delta), gasket with two scale regimes.
/// Lower: the reverse bound with sigma and nu exchanged.
/// Compact / CompactExchanged: single-exponent versions on the compact gasket.
enum class ExponentMode { Upper, Lower, Compact, CompactExchanged };

namespace detail {

inline double positive_part(double x) { return x > 0 ? x : 0.0; }
inline double inv(double x) { return std::isinf(x) ? 0.0 : 1.0 / x; }

inline double upper_exponent(double p, double q, double delta) {
    const double ds = constants().delta_s;
    return positive_part((inv(p) - inv(q) * inv(delta)) / (inv(p) + 1.0 / (2.0 * ds)));
}

inline double lower_exponent(double p, double q, double delta) {
    const double ds = constants().delta_s;
    const double x = inv(p) * inv(delta);
    return positive_part((x - inv(q)) / (x + 1.0 / (2.0 * ds)));
}

}  // namespace detail

inline ExponentPair exponent_formula(double p, double q, double delta_bar, double delta_underbar,
                                     ExponentMode mode = ExponentMode::Compact) {
    if (!(p >= 1.0) || !(q >= p) || !(q >= 2.0)) throw DomainError("exponents need 1 <= p <= q, q >= 2");
    if (!(delta_underbar > 0) || !(delta_bar >= delta_underbar)) throw DomainError("need 0 < delta_underbar <= delta_bar");
    switch (mode) {
        case ExponentMode::Upper:
            return {detail::upper_exponent(p, q, delta_bar), detail::upper_exponent(p, q, delta_underbar)};
        case ExponentMode::Lower:
            return {detail::lower_exponent(p, q, delta_underbar), detail::lower_exponent(p, q, delta_bar)};
        case ExponentMode::Compact: {
            const double a = detail::upper_exponent(p, q, delta_bar);
            return {a, a};
        }
        case ExponentMode::CompactExchanged: {
            const double a = detail::lower_exponent(p, q, delta_underbar);
            return {a, a};
        }
    }
    return {};
}

/// Default distinguished corner of a cell: the fixed point of its last map.
inline int default_bump_corner(const Word& w) { return w.empty() ? 0 : w[w.size() - 1] - 1; }

/// Piecewise-harmonic bump: 1 at F_w(q_corner), 0 at every other vertex of V_{|w|+1},
/// harmonically extended to `level`.
inline DiscreteFunction bump_function(const Word& w, int level, int corner) {
    const int k = w.size();
    if (level < k + 1) throw DomainError("bump_function needs a working level above the cell level");
    if (corner < 0 || corner > 2) throw DomainError("corner must be 0, 1 or 2");
    const auto g = shared_graph(k + 1);
    const LatticePoint p = cell_corner(w, corner);
    DiscreteFunction h = DiscreteFunction::zero(*g);
    h[g->find({2 * p.a, 2 * p.b})] = 1.0;
    return harmonic_extend(h, level);
}

inline DiscreteFunction bump_function(const Word& w, int level) { return bump_function(w, level, default_bump_corner(w)); }

/// Vertex id of the bump's peak at the working level.
inline int bump_peak(const Word& w, int level, int corner) {
    const auto g = shared_graph(level);
    const LatticePoint p = cell_corner(w, corner);
    const std::int64_t s = std::int64_t{1} << (level - w.size());
    return g->find({p.a * s, p.b * s});
}

inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw DomainError("degenerate regression: all abscissae equal");
    return sxy / sxx;
}

struct MeasureConditionReport {
    double best_C = 0.0;                   // max over cells of sigma(S) / nu(S)^(1/delta_bar)
    std::vector<double> level_C;           // same, per level 1..m_max
    std::vector<std::pair<Word, double>> violating;  // cells above the declared C_sigma (first 100)
    std::size_t violating_count = 0;
    std::vector<double> exponent_ones;     // log sigma(S_{1^m}) / log nu(S_{1^m})
    std::vector<double> exponent_min;      // min over cells of log sigma / log nu
    // regression slopes of log sigma against log nu over the upper half of the levels;
    // the pointwise quotients above carry a log(prefactor)/m bias
    double fitted_exponent_ones = kInfinity;
    double fitted_exponent_min = kInfinity;
};

inline MeasureConditionReport check_measure_condition(const MeasureSpec& spec, int m_max) {
    MeasureConditionReport r;
    for (int m = 1; m <= m_max; ++m) {
        const Eigen::VectorXd w = spec.weights(m);
        const double nu = 1.0 / static_cast<double>(pow3(m));
        const double scale = std::pow(nu, detail::inv(spec.delta_bar));
        double level_max = 0.0, emin = kInfinity;
        for (Eigen::Index c = 0; c < w.size(); ++c) {
            const double ratio = w[c] / scale;
            level_max = std::max(level_max, ratio);
            if (ratio > spec.C_sigma * (1 + 1e-12)) {
                if (r.violating.size() < 100) r.violating.emplace_back(Word::from_index(static_cast<std::uint64_t>(c), m), ratio);
                ++r.violating_count;
            }
            if (w[c] > 0) emin = std::min(emin, std::log(w[c]) / std::log(nu));
        }
        r.level_C.push_back(level_max);
        r.best_C = std::max(r.best_C, level_max);
        const double ones = w[0];
        r.exponent_ones.push_back(ones > 0 ? std::log(ones) / std::log(nu) : kInfinity);
        r.exponent_min.push_back(emin);
    }
    std::vector<double> lnu, lones, lmax;
    bool ones_ok = true;
    for (int m = std::max(1, (m_max + 1) / 2); m <= m_max; ++m) {
        const Eigen::VectorXd w = spec.weights(m);
        lnu.push_back(-m * std::log(3.0));
        ones_ok = ones_ok && w[0] > 0;
        lones.push_back(w[0] > 0 ? std::log(w[0]) : 0.0);
        lmax.push_back(std::log(w.maxCoeff()));
    }
    if (lnu.size() >= 2) {
        if (ones_ok) r.fitted_exponent_ones = regression_slope(lnu, lones);
        r.fitted_exponent_min = regression_slope(lnu, lmax);
    }
    return r;
}

/// Named test functions at one level.
struct TestCorpus {
    int level = 0;
    bool dirichlet = true;
    std::vector<std::string> ids;
    std::vector<DiscreteFunction> members;

    void add(std::string id, DiscreteFunction u) {
        if (u.values.maxCoeff() - u.values.minCoeff() == 0.0) return;  // constants carry no information
        ids.push_back(std::move(id));
        members.push_back(std::move(u));
    }
};

struct CorpusOptions {
    bool dirichlet = true;
    int bump_max_level = -1;     // -1: level - 2
    int random_harmonic = 8;
    int harmonic_level = 2;
    int random_vertex = 4;
    int eigenfunctions = 0;
    const SpectralDecomposition* eigen = nullptr;  // required if eigenfunctions > 0
    std::uint64_t seed = 1;
};

inline TestCorpus build_corpus(int m, const CorpusOptions& opt = {}) {
    TestCorpus corpus;
    corpus.level = m;
    corpus.dirichlet = opt.dirichlet;
    const auto g = shared_graph(m);
    auto on_boundary = [&](int v) { return g->vertices()[static_cast<std::size_t>(v)].is_boundary; };

    const int kmax = opt.bump_max_level < 0 ? m - 2 : std::min(opt.bump_max_level, m - 1);
    for (int k = 0; k <= kmax; ++k) {
        std::vector<Word> words;
        if (k <= 2) {
            for (std::uint64_t c = 0; c < pow3(k); ++c) words.push_back(Word::from_index(c, k));
        } else {
            for (int s = 1; s <= 3; ++s) words.push_back(Word::repeat(s, k));
        }
        for (const auto& w : words)
            for (int j = 0; j < 3; ++j) {
                if (opt.dirichlet && on_boundary(bump_peak(w, m, j))) continue;
                corpus.add("bump:" + (w.empty() ? std::string("-") : w.str()) + ":" + std::to_string(j), bump_function(w, m, j));
            }
    }

    if (opt.eigenfunctions > 0) {
        if (!opt.eigen || opt.eigen->level() != m) throw DomainError("corpus eigenfunctions need a decomposition at the same level");
        const auto& op = *opt.eigen->op;
        const Eigen::Index n = std::min<Eigen::Index>(opt.eigenfunctions, opt.eigen->eigenvalues.size());
        for (Eigen::Index k = 0; k < n; ++k) corpus.add("eigen:" + std::to_string(k), op.from_dofs(opt.eigen->phi.col(k)));
    }

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    const int hl = std::min(opt.harmonic_level, m);
    const auto gh = shared_graph(hl);
    for (int i = 0; i < opt.random_harmonic; ++i) {
        DiscreteFunction u = DiscreteFunction::zero(*gh);
        for (const auto& v : gh->vertices())
            if (!(opt.dirichlet && v.is_boundary)) u[v.id] = normal(rng);
        corpus.add("harmonic:" + std::to_string(i), harmonic_extend(u, m));
    }
    for (int i = 0; i < opt.random_vertex; ++i) {
        DiscreteFunction u = DiscreteFunction::zero(*g);
        for (const auto& v : g->vertices())
            if (!(opt.dirichlet && v.is_boundary)) u[v.id] = normal(rng);
        corpus.add("random:" + std::to_string(i), std::move(u));
    }
    return corpus;
}

/// centered: c = midrange; dirichlet: c = 0 and u must vanish on V0;
/// additive: C [E^(a/2) |u|_p^(1-a) + |u|_p] on the right.
enum class InequalityForm { Centered, Dirichlet, Additive };

struct InequalityRow {
    std::string id;
    double energy = 0.0;
    double lhs = 0.0;       // |u - c|_{L^q(sigma)}
    double p_norm = 0.0;    // |u - c|_{L^p(nu)}
    double ratio = 0.0;
    bool skipped = false;
    std::string note;
};

struct InequalityReport {
    std::vector<InequalityRow> rows;
    double max_ratio = 0.0;
    std::string argmax;
};

inline InequalityRow inequality_ratio(const DiscreteFunction& u, const Eigen::VectorXd& sigma, const Eigen::VectorXd& nu, double p,
                                      double q, double a, InequalityForm form) {
    const auto g = shared_graph(u.level);
    InequalityRow row;
    if (form == InequalityForm::Dirichlet)
        for (int b : g->boundary_vertices())
            if (u[b] != 0.0) throw DomainError("dirichlet form needs u = 0 on V0");
    if (u.values.maxCoeff() == u.values.minCoeff()) {
        row.skipped = true;
        row.note = "constant";
        return row;
    }
    DiscreteFunction v = u;
    if (form == InequalityForm::Centered) v.values.array() -= 0.5 * (u.values.maxCoeff() + u.values.minCoeff());
    row.energy = energy(*g, u);
    row.lhs = lp_norm(v, sigma, q);
    row.p_norm = lp_norm(v, nu, p);
    double rhs = std::pow(row.energy, a / 2.0) * std::pow(row.p_norm, 1.0 - a);
    if (form == InequalityForm::Additive) rhs += row.p_norm;
    if (!(rhs > 0.0)) {
        row.skipped = true;
        row.note = "zero right-hand side";
        return row;
    }
    row.ratio = row.lhs / rhs;
    return row;
}

/// Empirical constant of |u-c|_{L^q(sigma)} <= C E(u)^(a/2) |u-c|_{L^p(nu)}^(1-a) over a corpus.
inline InequalityReport verify_inequality(const TestCorpus& corpus, const MeasureSpec& sigma, double p, double q, double a,
                                          InequalityForm form) {
    if (corpus.members.empty()) throw DomainError("empty corpus");
    const Eigen::VectorXd sw = sigma.weights(corpus.level);
    const Eigen::VectorXd nw = nu_measure().weights(corpus.level);
    InequalityReport r;
    for (std::size_t i = 0; i < corpus.members.size(); ++i) {
        auto row = inequality_ratio(corpus.members[i], sw, nw, p, q, a, form);
        row.id = corpus.ids[i];
        if (!row.skipped && row.ratio > r.max_ratio) {
            r.max_ratio = row.ratio;
            r.argmax = row.id;
        }
        r.rows.push_back(std::move(row));
    }
    return r;
}

/// Per-scale data of the bump family h_k = bump(symbol^k) at working level k + depth.
struct BumpScale {
    int k = 0;
    double log_q_norm = 0.0;
    double log_sqrt_energy = 0.0;
    double log_p_norm = 0.0;
};

struct OptimalExponentFit {
    double a = 0.0;
    double slope_q = 0.0;
    double slope_energy = 0.0;  // of log E^(1/2)
    double slope_p = 0.0;
    std::vector<BumpScale> scales;
};

inline std::vector<BumpScale> bump_scales(const MeasureSpec& sigma, double p, double q, int k_min, int k_max, int symbol = 1,
                                          int depth = 3) {
    std::vector<BumpScale> out;
    const MeasureSpec nu = nu_measure();
    for (int k = k_min; k <= k_max; ++k) {
        const Word w = Word::repeat(symbol, k);
        const int level = k + depth;
        const auto h = bump_function(w, level);
        out.push_back({k, std::log(lp_norm(h, sigma, q)), 0.5 * std::log(energy(*shared_graph(level), h)),
                       std::log(lp_norm(h, nu, p))});
    }
    return out;
}

/// Exponent balancing the scaling of |h|_q against E^(a/2)|h|_p^(1-a) along the bump family.
inline OptimalExponentFit estimate_optimal_exponent(const MeasureSpec& sigma, double p, double q, int k_max, int symbol = 1,
                                                    int depth = 3) {
    if (k_max < 2) throw DomainError("optimal exponent regression needs at least two scales");
    if (depth < 2) throw DomainError("bump working level must be at least two above the cell level");
    OptimalExponentFit fit;
    fit.scales = bump_scales(sigma, p, q, 1, k_max, symbol, depth);
    std::vector<double> k, lq, le, lp;
    for (const auto& s : fit.scales) {
        k.push_back(s.k);
        lq.push_back(s.log_q_norm);
        le.push_back(s.log_sqrt_energy);
        lp.push_back(s.log_p_norm);
    }
    fit.slope_q = regression_slope(k, lq);
    fit.slope_energy = regression_slope(k, le);
    fit.slope_p = regression_slope(k, lp);
    const double den = fit.slope_energy - fit.slope_p;
    if (std::abs(den) < 1e-12) throw DomainError("degenerate regression: energy and p-norm scale alike");
    fit.a = std::max(0.0, (fit.slope_q - fit.slope_p) / den);
    return fit;
}

/// Ratios |h_k|_{L^q(sigma)} / (E^(a/2) |h_k|_{L^p(nu)}^(1-a)) along the bump family.
inline std::vector<double> bump_family_ratios(const MeasureSpec& sigma, double p, double q, double a, int k_max, int symbol = 1,
                                              int depth = 3) {
    std::vector<double> r;
    for (const auto& s : bump_scales(sigma, p, q, 1, k_max, symbol, depth))
        r.push_back(std::exp(s.log_q_norm - a * s.log_sqrt_energy - (1 - a) * s.log_p_norm));
    return r;
}

}  // namespace gasket
