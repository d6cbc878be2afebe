// Command-line front end: one subcommand per workbench task.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gasket/acceptance.hpp"
#include "gasket/burgers.hpp"
#include "gasket/io.hpp"
#include "gasket/pde.hpp"
#include "gasket/sobolev.hpp"
#include "gasket/spectral.hpp"
#include "gasket/walk.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace gasket;

namespace {

constexpr const char* kVersion = "1.0.0";

/// Bad option values; reported like parse errors (exit 2, nothing written).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double parse_number(const std::string& s, const std::string& what) {
    if (s == "inf" || s == "infinity" || s == "Inf") return kInfinity;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw UsageError("");
        return v;
    } catch (...) {
        throw UsageError("invalid " + what + ": '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> v;
    for (const auto& x : split(s, ',')) v.push_back(parse_number(x, what));
    if (v.empty()) throw UsageError("empty " + what);
    return v;
}

/// "4..7" or "4,5,7".
std::vector<int> parse_levels(const std::string& s) {
    std::vector<int> out;
    const auto dots = s.find("..");
    if (dots != std::string::npos) {
        const int a = static_cast<int>(parse_number(s.substr(0, dots), "level range"));
        const int b = static_cast<int>(parse_number(s.substr(dots + 2), "level range"));
        if (a > b) throw UsageError("empty level range '" + s + "'");
        for (int m = a; m <= b; ++m) out.push_back(m);
    } else {
        for (double x : parse_list(s, "levels")) out.push_back(static_cast<int>(x));
    }
    return out;
}

Boundary parse_boundary(const std::string& s) {
    if (s == "dirichlet") return Boundary::Dirichlet;
    if (s == "neumann") return Boundary::Neumann;
    throw UsageError("boundary must be dirichlet or neumann");
}

int parse_vertex(const std::string& s, const LevelGraph& g) {
    if (s.empty() || s == "ref") return reference_vertex(g);
    const int v = static_cast<int>(parse_number(s, "vertex"));
    if (v < 0 || static_cast<std::size_t>(v) >= g.num_vertices()) throw UsageError("vertex " + s + " out of range");
    return v;
}

/// zero | center[:scale] | eigen:k[:scale] | bump:<word>[:scale]
DiscreteFunction parse_psi(const std::string& spec, int m, const std::function<const SpectralDecomposition&()>& sd) {
    const auto parts = split(spec, ':');
    if (parts.empty()) throw UsageError("empty initial data");
    const std::string& kind = parts[0];
    auto scale = [&](std::size_t i) { return parts.size() > i ? parse_number(parts[i], "scale") : 1.0; };
    DiscreteFunction u;
    if (kind == "zero") {
        u = DiscreteFunction::zero(*shared_graph(m));
    } else if (kind == "center") {
        u = center_bump(m);
        u.values *= scale(1);
    } else if (kind == "eigen" && parts.size() >= 2) {
        const int k = static_cast<int>(parse_number(parts[1], "mode index"));
        const auto& d = sd();
        if (k < 0 || k >= d.phi.cols()) throw UsageError("mode index out of range");
        u = d.op->from_dofs(d.phi.col(k));
        u.values *= scale(2);
    } else if (kind == "bump" && parts.size() >= 2) {
        try {
            const Word w(parts[1]);
            u = bump_function(w, m);
        } catch (const std::exception& e) {
            throw UsageError(std::string("invalid bump: ") + e.what());
        }
        u.values *= scale(2);
        for (int b : shared_graph(m)->boundary_vertices())
            if (u[b] != 0.0) throw UsageError("bump does not vanish on V0; pick another word");
    } else {
        throw UsageError("unknown initial data '" + spec + "' (zero | center[:s] | eigen:k[:s] | bump:<word>[:s])");
    }
    return u;
}

/// zero | constant:c | sine:K, optionally prefixed by "builtin:".
SourceFunction parse_source(std::string spec) {
    if (spec.rfind("builtin:", 0) == 0) spec = spec.substr(8);
    const auto parts = split(spec, ':');
    if (parts.empty()) throw UsageError("empty source");
    if (parts[0] == "zero") return zero_source();
    if (parts[0] == "constant" && parts.size() == 2) return constant_source(parse_number(parts[1], "constant"));
    if (parts[0] == "sine" && parts.size() <= 2) return sine_source(parts.size() == 2 ? parse_number(parts[1], "K") : 1.0);
    throw UsageError("unknown source '" + spec + "' (zero | constant:c | sine:K)");
}

/// nu | mu | dirac:<vertex id at the finest level> | file:<csv>
MeasureSpec parse_measure(const std::string& spec, int finest) {
    if (spec == "nu") return nu_measure();
    if (spec == "mu") return mu_measure();
    if (spec.rfind("dirac:", 0) == 0) {
        const auto g = shared_graph(finest);
        const int v = parse_vertex(spec.substr(6), *g);
        return dirac_measure(g->vertices()[static_cast<std::size_t>(v)].lattice, finest);
    }
    if (spec.rfind("file:", 0) == 0) {
        if (!fs::exists(spec.substr(5))) throw UsageError("measure file not found: " + spec.substr(5));
        return measure_from_csv(spec.substr(5));
    }
    throw UsageError("unknown measure '" + spec + "' (nu | mu | dirac:<vertex> | file:<csv>)");
}

InequalityForm parse_form(const std::string& s) {
    if (s == "dirichlet") return InequalityForm::Dirichlet;
    if (s == "centered") return InequalityForm::Centered;
    if (s == "additive") return InequalityForm::Additive;
    throw UsageError("form must be dirichlet, centered or additive");
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
    auto q = p;
    q.replace_extension();
    q += suffix;
    return q;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// One subcommand run: computation plus the files it produced.
struct Run {
    std::string command;
    fs::path primary;                  // manifest defaults to <primary>.manifest.json
    std::function<json(Run&)> body;   // returns the summary recorded in the manifest
    std::vector<std::string> outputs;

    void write(const fs::path& p, const std::string& content, bool binary = false) {
        io::write_atomic(p, content, binary);
        outputs.push_back(p.string());
    }
};

json versions() {
    return {{"gasket", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__},
            {"cplusplus", __cplusplus},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION}};
}

// ---- subcommand bodies -------------------------------------------------------

json run_topology(Run& run, int m) {
    const auto g = shared_graph(m);
    const std::int64_t den = std::int64_t{1} << (m + 1);
    json j;
    j["level"] = m;
    j["coordinate_denominator"] = den;
    j["coordinates"] = "x = x_num / den, y = y_num * sqrt(3) / den";
    j["vertices"] = json::array();
    for (const auto& v : g->vertices())
        j["vertices"].push_back({{"id", v.id},
                                 {"x_num", v.x_numerator()},
                                 {"y_num", v.y_sqrt3_numerator()},
                                 {"x", std::to_string(v.x_numerator()) + "/" + std::to_string(den)},
                                 {"y", std::to_string(v.y_sqrt3_numerator()) + "*sqrt(3)/" + std::to_string(den)},
                                 {"boundary", v.is_boundary}});
    j["edges"] = g->edges();
    j["cells"] = json::array();
    for (std::size_t c = 0; c < g->num_cells(); ++c)
        j["cells"].push_back({{"word", Word::from_index(c, m).str()}, {"vertices", g->cells()[c]}});
    run.write(run.primary, dump(j));
    return {{"vertices", g->num_vertices()}, {"edges", g->edges().size()}, {"cells", g->num_cells()}};
}

json run_kusuoka(Run& run, int m) {
    const auto kw = kusuoka_weights(m);
    io::Csv csv({"word", "numerator", "denominator", "value"});
    for (std::size_t c = 0; c < kw.size(); ++c) {
        const Rational w = kw.weight(c);
        csv.row(Word::from_index(c, m).str(), boost::multiprecision::numerator(w).str(), boost::multiprecision::denominator(w).str(), kw.value(c));
    }
    run.write(run.primary, csv.str());
    return {{"cells", kw.size()}, {"common_denominator", to_bigint(kw.common_denominator()).str()}};
}

json run_resistance(Run& run, int m, const std::string& pairs_file) {
    const auto g = shared_graph(m);
    std::vector<std::pair<int, int>> pairs;
    if (pairs_file.empty()) {
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) pairs.emplace_back(corner_vertex(*g, a), corner_vertex(*g, b));
    } else {
        std::ifstream in(pairs_file);
        if (!in) throw UsageError("cannot read pairs file " + pairs_file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto f = split(line, ',');
            if (f.size() != 2) throw UsageError("pairs file lines must be 'x,y': " + line);
            if (f[0] == "x") continue;  // header
            pairs.emplace_back(parse_vertex(f[0], *g), parse_vertex(f[1], *g));
        }
    }
    const ResistanceSolver rs(g);
    io::Csv csv({"x", "y", "resistance"});
    for (const auto& [a, b] : pairs) csv.row(a, b, rs(a, b));
    run.write(run.primary, csv.str());
    return {{"pairs", pairs.size()}};
}

json run_eigen(Run& run, int m, Boundary b) {
    const auto sd = eigendecompose(assemble(m, b));
    io::BinaryWriter w;
    const auto rows = static_cast<std::uint64_t>(sd.phi.rows()), cols = static_cast<std::uint64_t>(sd.phi.cols());
    w.u64(rows);
    w.u64(cols);
    for (Eigen::Index k = 0; k < sd.eigenvalues.size(); ++k) w.f64(sd.eigenvalues[k]);
    for (Eigen::Index i = 0; i < sd.phi.rows(); ++i)
        for (Eigen::Index k = 0; k < sd.phi.cols(); ++k) w.f64(sd.phi(i, k));
    run.write(run.primary, w.str(), true);
    io::Csv ids({"row", "vertex"});
    for (std::size_t i = 0; i < sd.op->vertex_of_dof.size(); ++i) ids.row(i, sd.op->vertex_of_dof[i]);
    run.write(sibling(run.primary, ".vertices.csv"), ids.str());
    return {{"rows", rows}, {"modes", cols}, {"lambda_1", sd.eigenvalues[0]}, {"max_residual", sd.max_residual}};
}

struct HeatArgs {
    int level = 5;
    std::string boundary = "dirichlet";
    bool kernel = false, trace = false;
    std::string times = "0.001,0.01,0.1";
    std::string x = "ref", y = "";
    std::string psi = "center";
};

json run_heat(Run& run, const HeatArgs& a) {
    const auto ts = parse_list(a.times, "times");
    for (double t : ts)
        if (!(t > 0) || !std::isfinite(t)) throw UsageError("times must be positive");
    const Boundary b = parse_boundary(a.boundary);
    const auto g = shared_graph(a.level);
    const int x = parse_vertex(a.x, *g);
    const int y = a.y.empty() ? x : parse_vertex(a.y, *g);
    std::unique_ptr<SpectralDecomposition> sd;
    auto get = [&]() -> const SpectralDecomposition& {
        if (!sd) sd = std::make_unique<SpectralDecomposition>(eigendecompose(assemble(a.level, b)));
        return *sd;
    };
    json summary{{"times", ts.size()}};
    if (a.kernel) {
        io::Csv csv({"t", "x", "y", "p"});
        std::vector<double> lt, lp;
        for (double t : ts) {
            const double p = heat_kernel(get(), t, x, y);
            csv.row(t, x, y, p);
            if (p > 0) {
                lt.push_back(std::log(t));
                lp.push_back(std::log(p));
            }
        }
        run.write(run.primary, csv.str());
        if (lt.size() >= 2) summary["loglog_slope"] = regression_slope(lt, lp);
    } else if (a.trace) {
        io::Csv csv({"t", "trace"});
        for (double t : ts) csv.row(t, heat_trace(get(), t));
        run.write(run.primary, csv.str());
    } else {
        const auto psi = parse_psi(a.psi, a.level, get);
        if (b == Boundary::Dirichlet)
            for (int v : g->boundary_vertices())
                if (psi[v] != 0.0) throw UsageError("initial data must vanish on V0 for dirichlet");
        io::Csv csv({"t", "vertex", "value"});
        for (double t : ts) {
            const auto u = heat_apply(get(), t, psi);
            for (int v = 0; v < static_cast<int>(g->num_vertices()); ++v) csv.row(t, v, u[v]);
        }
        run.write(run.primary, csv.str());
    }
    return summary;
}

struct SobolevArgs {
    std::string measure = "mu";
    std::string p = "2", q = "2";
    std::string mode = "verify";
    std::string levels = "4..6";
    std::string a = "";
    std::string form = "dirichlet";
    int k_max = 5;
    std::string summary;
};

json run_sobolev(Run& run, const SobolevArgs& s) {
    const double p = parse_number(s.p, "p"), q = parse_number(s.q, "q");
    const auto levels = parse_levels(s.levels);
    const int finest = *std::max_element(levels.begin(), levels.end());
    const MeasureSpec sigma = parse_measure(s.measure, finest);
    json j{{"measure", sigma.name}, {"p", s.p}, {"q", s.q}, {"mode", s.mode}};
    const fs::path summary_path = s.summary.empty() ? sibling(run.primary, ".json") : fs::path(s.summary);
    if (s.mode == "verify") {
        const auto formula = exponent_formula(p, q, sigma.delta_bar, sigma.delta_underbar);
        const double a = s.a.empty() ? formula.a1 : parse_number(s.a, "a");
        const InequalityForm form = parse_form(s.form);
        io::Csv csv({"level", "member", "energy", "lhs", "p_norm", "ratio", "skipped"});
        j["a"] = a;
        j["formula_exponent"] = formula.a1;
        j["levels"] = json::array();
        for (int m : levels) {
            CorpusOptions opt;
            opt.dirichlet = form == InequalityForm::Dirichlet;
            const auto rep = verify_inequality(build_corpus(m, opt), sigma, p, q, a, form);
            for (const auto& r : rep.rows) csv.row(m, r.id, r.energy, r.lhs, r.p_norm, r.ratio, r.skipped ? 1 : 0);
            j["levels"].push_back({{"level", m}, {"max_ratio", rep.max_ratio}, {"argmax", rep.argmax}});
        }
        run.write(run.primary, csv.str());
    } else if (s.mode == "optimal") {
        const auto fit = estimate_optimal_exponent(sigma, p, q, s.k_max);
        io::Csv csv({"k", "log_q_norm", "log_sqrt_energy", "log_p_norm"});
        for (const auto& b : fit.scales) csv.row(b.k, b.log_q_norm, b.log_sqrt_energy, b.log_p_norm);
        run.write(run.primary, csv.str());
        j["a"] = fit.a;
        j["slopes"] = {{"q_norm", fit.slope_q}, {"sqrt_energy", fit.slope_energy}, {"p_norm", fit.slope_p}};
        j["formula_exponent"] = exponent_formula(p, q, sigma.delta_bar, sigma.delta_underbar).a1;
    } else if (s.mode == "condition") {
        const auto rep = check_measure_condition(sigma, finest);
        io::Csv csv({"level", "constant"});
        for (std::size_t i = 0; i < rep.level_C.size(); ++i) csv.row(i + 1, rep.level_C[i]);
        run.write(run.primary, csv.str());
        j["best_C"] = rep.best_C;
        j["violating_count"] = rep.violating_count;
        j["exponent_ones"] = rep.exponent_ones;
        j["exponent_min"] = rep.exponent_min;
        j["fitted_exponent_ones"] = rep.fitted_exponent_ones;
        j["fitted_exponent_min"] = rep.fitted_exponent_min;
    } else {
        throw UsageError("mode must be verify, optimal or condition");
    }
    run.write(summary_path, dump(j));
    return j;
}

struct SolveArgs {
    int level = 5;
    double T = 0.5;
    int steps = kDefaultSteps;
    std::string f = "sine:1";
    std::string psi = "center";
    double tol = 1e-10;
    int max_iter = 100;
    int every = 1;
    std::string grad, report;
    // burgers only
    double outer_tol = 1e-8;
    double slack = 0.01;
};

void write_solution(Run& run, const PDESolution& sol, int every, const fs::path& grad_path) {
    io::Csv csv({"time", "vertex", "value"});
    io::Csv gcsv({"time", "word", "gradient"});
    const int m = sol.u.front().level;
    for (std::size_t n = 0; n < sol.grid.size(); n += static_cast<std::size_t>(every)) {
        const double t = sol.grid.times[n];
        for (Eigen::Index v = 0; v < sol.u[n].values.size(); ++v) csv.row(t, static_cast<long>(v), sol.u[n].values[v]);
        for (Eigen::Index c = 0; c < sol.grad[n].values.size(); ++c)
            gcsv.row(t, Word::from_index(static_cast<std::uint64_t>(c), m).str(), sol.grad[n].values[c]);
    }
    run.write(run.primary, csv.str());
    run.write(grad_path, gcsv.str());
}

void check_grid(const SolveArgs& a) {
    if (!(a.T > 0) || !std::isfinite(a.T)) throw UsageError("T must be positive");
    if (a.steps < 2) throw UsageError("steps must be >= 2");
    if (a.every < 1) throw UsageError("every must be >= 1");
    if (!(a.tol > 0)) throw UsageError("tol must be positive");
}

json run_solve(Run& run, const SolveArgs& a) {
    check_grid(a);
    const auto f = parse_source(a.f);
    const auto sd = eigendecompose(assemble(a.level, Boundary::Dirichlet));
    const auto psi = parse_psi(a.psi, a.level, [&]() -> const SpectralDecomposition& { return sd; });
    const auto kw = shared_kusuoka_weights(a.level);
    const auto grid = TimeGrid::uniform(a.T, a.steps);
    const auto sol = solve_semilinear(sd, *kw, psi, f, grid, a.tol, a.max_iter);
    write_solution(run, sol, a.every, a.grad.empty() ? sibling(run.primary, "_grad.csv") : fs::path(a.grad));
    const auto e = energy_report(sd, sol);
    json j{{"level", a.level},
           {"T", a.T},
           {"steps", a.steps},
           {"source", f.name},
           {"iterations", sol.iterations},
           {"picard_distances", sol.picard_distances},
           {"norms", {{"sup_l2", e.sup_l2}, {"l2_F", e.l2_F}, {"dual_dt", e.dual_dt}}},
           {"lipschitz_probe", sampled_lipschitz(f, grid, kw->size(), 2000)}};
    try {
        const auto h = holder_report(sol, ResistanceSolver(shared_graph(a.level)));
        j["holder"] = {{"time_slope", h.time_slope},
                       {"fine_time_slope", h.fine_time_slope},
                       {"time_constant", h.time_constant},
                       {"space_slope", h.space_slope}};
    } catch (const DomainError& err) {
        j["holder"] = {{"skipped", err.what()}};
    }
    run.write(a.report.empty() ? sibling(run.primary, ".json") : fs::path(a.report), dump(j));
    return j;
}

json run_burgers(Run& run, const SolveArgs& a) {
    check_grid(a);
    if (!(a.outer_tol > 0)) throw UsageError("outer-tol must be positive");
    const auto sd = eigendecompose(assemble(a.level, Boundary::Dirichlet));
    BurgersConfig c;
    c.psi = parse_psi(a.psi, a.level, [&]() -> const SpectralDecomposition& { return sd; });
    c.grid = TimeGrid::uniform(a.T, a.steps);
    c.outer_tol = a.outer_tol;
    c.inner_tol = a.tol;
    c.inner_max_iter = a.max_iter;
    c.slack = a.slack;
    const auto b = solve_burgers(sd, *shared_kusuoka_weights(a.level), c);
    write_solution(run, b.solution, a.every, a.grad.empty() ? sibling(run.primary, "_grad.csv") : fs::path(a.grad));
    const auto mp = max_principle_report(b.solution, a.slack);
    json j{{"level", a.level},
           {"T", a.T},
           {"steps", a.steps},
           {"psi_sup", b.psi_sup},
           {"outer_distances", b.outer_distances},
           {"inner_iterations", b.inner_iterations},
           {"iterate_sup", b.iterate_sup},
           {"dissipation_constant", b.dissipation_C},
           {"max_principle", {{"pass", mp.pass}, {"slack", mp.slack}, {"observed_excess", mp.observed}, {"sup_per_time", mp.sup_per_time}}}};
    run.write(a.report.empty() ? sibling(run.primary, ".json") : fs::path(a.report), dump(j));
    return {{"pass", mp.pass}, {"observed_excess", mp.observed}, {"outer_iterations", b.outer_distances.size()}};
}

struct WalkArgs {
    int level = 5;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    std::string mode = "heat";
    double T = 0.2;
    double beta = 1.0;
    std::string psi = "center";
    std::string x = "ref";
    int steps = 64;
};

json run_walk(Run& run, const WalkArgs& a) {
    if (a.paths < 1) throw UsageError("paths must be >= 1");
    if (!(a.T > 0)) throw UsageError("T must be positive");
    const auto chain = shared_walk_chain(a.level);
    const int x0 = parse_vertex(a.x, *chain->graph);
    if (chain->boundary[static_cast<std::size_t>(x0)]) throw UsageError("start vertex lies on V0");
    WalkConfig cfg;
    cfg.level = a.level;
    cfg.n_paths = a.paths;
    cfg.master_seed = a.seed;
    cfg.T = a.T;
    json j{{"level", a.level}, {"paths", a.paths}, {"seed", a.seed}, {"mode", a.mode}, {"T", a.T}, {"start_vertex", x0}};
    auto put = [&](const MCEstimate& e) {
        j["estimate"] = e.mean;
        j["stderr"] = e.std_error;
    };
    if (a.mode == "heat") {
        std::unique_ptr<SpectralDecomposition> sd;
        auto get = [&]() -> const SpectralDecomposition& {
            if (!sd) sd = std::make_unique<SpectralDecomposition>(eigendecompose(assemble(a.level, Boundary::Dirichlet)));
            return *sd;
        };
        const auto psi = parse_psi(a.psi, a.level, get);
        put(fk_heat(*chain, cfg, x0, psi));
        j["psi"] = a.psi;
        j["spectral"] = heat_apply(get(), a.T, psi)[x0];
    } else if (a.mode == "source") {
        const auto kw = shared_kusuoka_weights(a.level);
        const auto grid = TimeGrid::uniform(a.T, std::max(2, a.steps));
        const std::vector<CellField> ones(grid.size(), CellField::constant(a.level, 1.0));
        put(fk_source(*chain, cfg, x0, vertex_source(*chain, *kw, grid, ones)));
        const auto sd = eigendecompose(assemble(a.level, Boundary::Dirichlet));
        j["source"] = "constant:1";
        j["duhamel"] = duhamel(sd, *kw, ones, grid).back()[x0];
    } else if (a.mode == "expmoment") {
        put(qv_exponential_moment(*chain, cfg, x0, a.beta));
        j["beta"] = a.beta;
    } else {
        throw UsageError("mode must be heat, source or expmoment");
    }
    if (j.contains("spectral")) j["z"] = std::abs(j["estimate"].get<double>() - j["spectral"].get<double>()) / j["stderr"].get<double>();
    if (j.contains("duhamel")) j["z"] = std::abs(j["estimate"].get<double>() - j["duhamel"].get<double>()) / j["stderr"].get<double>();
    run.write(run.primary, dump(j));
    return j;
}

json run_acceptance_cmd(Run& run, bool quick, std::uint64_t seed, bool& ok) {
    AcceptanceOptions o;
    o.quick = quick;
    o.seed = seed;
    json timings = json::object();
    const auto rs = run_acceptance(o, [&](const CriterionResult& r) {
        std::cout << verdict_line(r) << std::endl;
        timings[r.id] = r.seconds;
    });
    ok = acceptance_ok(rs);
    run.write(run.primary, dump(acceptance_json(rs, o)));
    return {{"all_attainable_pass", ok}, {"seconds", timings}};
}

// ---- config file -------------------------------------------------------------

/// Turns `key = value` lines into `--key=value` tokens for keys not already
/// given on the command line, so flags override the file.
std::vector<std::string> config_tokens(const std::string& path, const std::vector<std::string>& args) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::set<std::string> given;
    for (const auto& a : args)
        if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
    std::vector<std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        if (given.count(key)) continue;
        out.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    // --config is handled before CLI11 sees the arguments.
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!config_path.empty()) {
        try {
            const auto extra = config_tokens(config_path, args);
            args.insert(args.end(), extra.begin(), extra.end());
        } catch (const UsageError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }

    CLI::App app{"Numerical workbench for analysis on the Sierpinski gasket"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    std::string manifest;
    app.add_option("--threads", threads, "worker threads (default: GASKET_THREADS, then all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
    app.add_option("--config", config_path, "key=value file mirroring the flags; flags win");
    app.set_version_flag("--version", kVersion);

    Run run;
    // Separate storage per subcommand: default_val writes through immediately.
    std::map<std::string, int> levels;
    std::map<std::string, std::string> outs;
    auto add_level = [&](CLI::App* s, int def) {
        s->add_option("--level,-m", levels[s->get_name()], "gasket level m")->default_val(def)->check(CLI::Range(0, kDefaultMaxLevel));
    };
    auto add_out = [&](CLI::App* s, const std::string& def) {
        s->add_option("--out,-o", outs[s->get_name()], "output file")->default_val(def);
    };

    auto* topo = app.add_subcommand("topology", "vertices, edges and cells of V_m as JSON");
    add_level(topo, 2);
    add_out(topo, "graph.json");
    topo->callback([&] { run = {"topology", outs["topology"], [&](Run& r) { return run_topology(r, levels["topology"]); }}; });

    auto* kus = app.add_subcommand("kusuoka", "exact Kusuoka cell weights as CSV");
    add_level(kus, 2);
    add_out(kus, "weights.csv");
    kus->callback([&] { run = {"kusuoka", outs["kusuoka"], [&](Run& r) { return run_kusuoka(r, levels["kusuoka"]); }}; });

    std::string pairs;
    auto* res = app.add_subcommand("resistance", "effective resistances between vertex pairs");
    add_level(res, 3);
    add_out(res, "resistance.csv");
    res->add_option("--pairs", pairs, "CSV of 'x,y' vertex ids (default: the three corner pairs)");
    res->callback([&] { run = {"resistance", outs["resistance"], [&](Run& r) { return run_resistance(r, levels["resistance"], pairs); }}; });

    std::string boundary = "dirichlet";
    auto* eig = app.add_subcommand("eigen", "full eigendecomposition, little-endian binary");
    add_level(eig, 4);
    add_out(eig, "spec.bin");
    eig->add_option("--boundary", boundary, "dirichlet | neumann")->default_val("dirichlet");
    eig->callback([&] {
        if (levels["eigen"] > kMaxEigenLevel) throw CLI::ValidationError("--level", "eigen supports levels up to " + std::to_string(kMaxEigenLevel));
        run = {"eigen", outs["eigen"], [&](Run& r) { return run_eigen(r, levels["eigen"], parse_boundary(boundary)); }};
    });

    HeatArgs heat;
    auto* ht = app.add_subcommand("heat", "heat semigroup, kernel or trace at given times");
    ht->add_option("--level,-m", heat.level)->default_val(5)->check(CLI::Range(0, kMaxEigenLevel));
    add_out(ht, "heat.csv");
    ht->add_option("--boundary", heat.boundary)->default_val("dirichlet");
    ht->add_flag("--kernel", heat.kernel, "p_t(x, y) instead of P_t psi");
    ht->add_flag("--trace", heat.trace, "sum_k exp(-lambda_k t)");
    ht->add_option("--times", heat.times, "comma-separated times")->default_val("0.001,0.01,0.1");
    ht->add_option("--x", heat.x, "vertex id or 'ref' for (1/2, 0)")->default_val("ref");
    ht->add_option("--y", heat.y, "second vertex (default: x)");
    ht->add_option("--psi", heat.psi, "initial data")->default_val("center");
    ht->callback([&] {
        if (heat.kernel && heat.trace) throw CLI::ValidationError("--kernel and --trace are exclusive");
        run = {"heat", outs["heat"], [&](Run& r) { return run_heat(r, heat); }};
    });

    SobolevArgs sob;
    auto* sb = app.add_subcommand("sobolev", "Sobolev-type inequality checks");
    add_out(sb, "sobolev.csv");
    sb->add_option("--measure", sob.measure, "nu | mu | dirac:<vertex> | file:<csv>")->default_val("mu");
    sb->add_option("--p", sob.p)->default_val("2");
    sb->add_option("--q", sob.q, "number or inf")->default_val("2");
    sb->add_option("--mode", sob.mode, "verify | optimal | condition")->default_val("verify");
    sb->add_option("--levels", sob.levels, "e.g. 4..7 or 4,6")->default_val("4..6");
    sb->add_option("--a", sob.a, "exponent for verify (default: formula value)");
    sb->add_option("--form", sob.form, "dirichlet | centered | additive")->default_val("dirichlet");
    sb->add_option("--k-max", sob.k_max, "largest bump scale for optimal")->default_val(5)->check(CLI::Range(2, 9));
    sb->add_option("--summary", sob.summary, "JSON summary (default: <out>.json)");
    sb->callback([&] { run = {"sobolev", outs["sobolev"], [&](Run& r) { return run_sobolev(r, sob); }}; });

    SolveArgs sol, burg;
    burg.psi = "center:0.5";
    auto add_pde = [&](CLI::App* s, SolveArgs& sol) {
        s->add_option("--level,-m", sol.level)->default_val(5)->check(CLI::Range(1, kMaxEigenLevel));
        s->add_option("--T", sol.T)->default_val(0.5);
        s->add_option("--steps", sol.steps)->default_val(kDefaultSteps);
        s->add_option("--psi", sol.psi, "zero | center[:s] | eigen:k[:s] | bump:<word>[:s]")->default_str(sol.psi);
        s->add_option("--tol", sol.tol, "Picard tolerance")->default_val(1e-10);
        s->add_option("--max-iter", sol.max_iter)->default_val(100);
        s->add_option("--every", sol.every, "write every k-th time")->default_val(1);
        s->add_option("--grad", sol.grad, "gradient CSV (default: <out>_grad.csv)");
        s->add_option("--report", sol.report, "JSON diagnostics (default: <out>.json)");
    };
    auto* sv = app.add_subcommand("solve", "semilinear equation by Picard iteration");
    add_pde(sv, sol);
    add_out(sv, "sol.csv");
    sv->add_option("--f", sol.f, "zero | constant:c | sine:K")->default_val("sine:1");
    sv->callback([&] { run = {"solve", outs["solve"], [&](Run& r) { return run_solve(r, sol); }}; });

    auto* bg = app.add_subcommand("burgers", "Burgers equation by frozen-drift iteration");
    add_pde(bg, burg);
    add_out(bg, "burgers.csv");
    bg->add_option("--outer-tol", burg.outer_tol)->default_val(1e-8);
    bg->add_option("--slack", burg.slack, "relative slack of the maximum principle")->default_val(0.01);
    bg->callback([&] {
        run = {"burgers", outs["burgers"], [&](Run& r) { return run_burgers(r, burg); }};
    });

    WalkArgs walk;
    auto* wk = app.add_subcommand("walk", "Monte Carlo with the killed random walk");
    wk->add_option("--level,-m", walk.level)->default_val(5)->check(CLI::Range(1, kMaxEigenLevel));
    wk->add_option("--paths", walk.paths)->default_val(100000);
    wk->add_option("--seed", walk.seed)->default_val(1);
    wk->add_option("--mode", walk.mode, "heat | source | expmoment")->default_val("heat");
    wk->add_option("--T", walk.T)->default_val(0.2);
    wk->add_option("--beta", walk.beta)->default_val(1.0);
    wk->add_option("--psi", walk.psi)->default_val("center");
    wk->add_option("--x", walk.x, "start vertex id or 'ref'")->default_val("ref");
    wk->add_option("--steps", walk.steps, "time grid for the source mode")->default_val(64);
    add_out(wk, "mc.json");
    wk->callback([&] { run = {"walk", outs["walk"], [&](Run& r) { return run_walk(r, walk); }}; });

    bool quick = false, accepted = true;
    std::uint64_t acc_seed = AcceptanceOptions{}.seed;
    auto* acc = app.add_subcommand("acceptance", "run every acceptance criterion");
    acc->add_flag("--quick", quick, "smaller levels and sample sizes");
    acc->add_option("--seed", acc_seed)->default_val(AcceptanceOptions{}.seed);
    add_out(acc, "acceptance.json");
    acc->callback([&] { run = {"acceptance", outs["acceptance"], [&](Run& r) { return run_acceptance_cmd(r, quick, acc_seed, accepted); }}; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 consumes from the back
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (threads > 0) set_thread_count(threads);

    CLI::App* sub = app.get_subcommands().front();
    const fs::path manifest_path = manifest.empty() ? fs::path(run.primary.string() + ".manifest.json") : fs::path(manifest);
    const auto t0 = std::chrono::steady_clock::now();
    json m{{"command", run.command}, {"argv", args}, {"config", sub->config_to_str(true, false)}, {"versions", versions()}};
    if (!config_path.empty()) m["config_file"] = config_path;
    int code = 0;
    try {
        m["summary"] = run.body(run);
        m["status"] = "ok";
        if (run.command == "acceptance" && !accepted) {
            m["status"] = "criteria failed";
            code = 1;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& f : run.outputs) {
            std::error_code ec;
            fs::remove(f, ec);
        }
        return 2;
    } catch (const NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        m["status"] = "failed";
        m["error"] = e.what();
        m["log"] = e.log();
        code = 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        m["status"] = "failed";
        m["error"] = e.what();
        code = 1;
    }
    m["outputs"] = run.outputs;
    m["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m["threads"] = thread_count();
    try {
        io::write_atomic(manifest_path, dump(m));
    } catch (const std::exception& e) {
        std::cerr << "error: cannot write manifest: " << e.what() << "\n";
        return 1;
    }
    return code;
}
