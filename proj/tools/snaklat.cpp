#include "snaklat/config.hpp"
#include "snaklat/io.hpp"
#include "snaklat/snaklat.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace snaklat;

namespace {

struct Run {
    const StudyConfig& cfg;
    fs::path dir;
    std::vector<std::string> outputs;
    json summary = json::object();

    fs::path file(const std::string& name) {
        outputs.push_back(name);
        return dir / name;
    }
    bool csv() const { return cfg.output.wants("csv"); }
    bool js() const { return cfg.output.wants("json"); }
};

json pattern_json(const PatternId& p) { return {{"N", p.N}, {"M", p.M}, {"variant", to_string(p.variant)}}; }

Vector continued_state(const SteadyState& prob, const PatternId& id, double mu, double d, int steps,
                       const NewtonOptions& opt = {}) {
    PatternId p = id;
    p.symmetry = prob.grid().symmetry();
    Vector u = anti_continuum_pattern(prob.grid(), p, mu, prob.model()).values;
    if (d != 0.0) u = natural_continuation(prob, u, mu, 0.0, Parameter::D, d, steps, opt);
    return u;
}

void cmd_solve(Run& r) {
    const SolveRun& s = r.cfg.solve;
    const SteadyState prob(r.cfg.grid.wedge(), r.cfg.model.build());
    std::ofstream log = io::open_out(r.file("convergence.log"));
    NewtonOptions opt;
    opt.tol = s.tol;
    opt.log = &log;
    const Vector u = continued_state(prob, s.pattern, s.mu, s.d, s.d_steps, opt);
    const double res = prob.residual(u, s.mu, s.d).lpNorm<Eigen::Infinity>();
    log << "final residual " << res << '\n';
    if (!(res <= s.tol)) throw Error(ErrorKind::NoConvergence, "residual " + std::to_string(res) + " above tolerance");
    const Field f(prob.grid(), u);
    if (r.js()) io::write_profile_json(r.file("profile.json"), f);
    if (r.csv()) io::write_profile_csv(r.file("profile.csv"), f);
    r.summary = {{"pattern", pattern_json(s.pattern)}, {"mu", s.mu}, {"d", s.d}, {"residual", res}};
    if (s.spectrum) {
        const SpectrumReport rep = unstable_count(prob, u, s.mu, s.d);
        io::write_json(r.file("spectrum.json"), io::spectrum_json(rep));
        r.summary["n_unstable"] = rep.n_unstable;
    }
    std::cout << "solve " << to_string(s.pattern) << " residual " << res << '\n';
}

void cmd_snake(Run& r) {
    const SnakeOptions& o = r.cfg.snake;
    const SteadyState prob(r.cfg.grid.wedge(), r.cfg.model.build());
    const SnakeResult res = snake_study(prob, o);
    io::write_branch_csv(r.file("branch.csv"), res.branch);
    auto out = io::open_out(r.file("folds.csv"));
    out << "index,mu,d,refined,cell_n,cell_m,orbit,alt_count,crossing,tracked,immediate\n";
    json folds = json::array();
    for (std::size_t k = 0; k < res.folds.size(); ++k) {
        const SnakeFold& f = res.folds[k];
        const int cc = f.crossing ? f.crossing->count : -1;
        out << f.fold.branch_index << ',' << f.fold.mu << ',' << f.fold.d << ',' << f.fold.refined << ',' << f.cell.n << ','
            << f.cell.m << ',' << f.orbit << ',' << f.expected_alt << ',' << cc << ','
            << (f.crossing ? f.crossing->tracked : -1) << ',' << (f.crossing ? f.crossing->immediate : -1) << '\n';
        folds.push_back({{"index", f.fold.branch_index}, {"mu", f.fold.mu}, {"cell", {f.cell.n, f.cell.m}},
                         {"orbit", f.orbit}, {"crossing", cc}, {"error", f.crossing_error}});
        if (r.js()) {
            std::ostringstream name;
            name << "fold_" << std::setw(3) << std::setfill('0') << k << ".json";
            io::write_profile_json(r.file(name.str()), Field(prob.grid(), f.fold.u));
        }
    }
    r.summary = {{"points", res.branch.points.size()}, {"end_reason", res.branch.end_reason}, {"folds", folds}};
    std::cout << "snake " << res.branch.points.size() << " points, " << res.folds.size() << " folds ("
              << res.branch.end_reason << ")\n";
}

void cmd_asym(Run& r) {
    const SteadyState prob(r.cfg.grid.wedge(), r.cfg.model.build());
    const AsymResult res = asym_study(prob, r.cfg.asym);
    io::write_branch_csv(r.file("primary.csv"), res.primary);
    auto out = io::open_out(r.file("asym_branches.csv"));
    out << "branch,sector,start_index,lambda,sign,points,returned,reconnect_index,reconnect_fold,reconnect_mu,reconnected\n";
    json rows = json::array();
    for (std::size_t k = 0; k < res.branches.size(); ++k) {
        const AsymBranch& b = res.branches[k];
        out << k << ',' << to_string(b.sector) << ',' << b.start_index << ',' << b.lambda << ',' << b.sign << ','
            << b.branch.points.size() << ',' << b.returned << ',' << b.reconnect_index << ',' << b.reconnect_fold << ','
            << b.reconnect_mu << ',' << b.reconnected << '\n';
        if (r.csv()) io::write_branch_csv(r.file("asym_" + std::to_string(k) + ".csv"), b.branch);
        rows.push_back({{"sector", to_string(b.sector)}, {"reconnect_fold", b.reconnect_fold},
                        {"reconnected", b.reconnected}, {"error", b.error}});
    }
    r.summary = {{"origin_fold", res.origin_fold}, {"origin_mu", res.origin_mu},
                 {"one_dimensional", res.one_dimensional}, {"two_dimensional", res.two_dimensional},
                 {"reconnected", res.reconnected()}, {"distinct_folds", res.distinct_folds}, {"branches", rows}};
    std::cout << "asym " << res.branches.size() << " branches, " << res.reconnected() << " reconnected at "
              << res.distinct_folds << " distinct folds\n";
}

void cmd_isola(Run& r) {
    const SteadyState prob(r.cfg.grid.wedge(), r.cfg.model.build());
    const IsolaResult res = isola_study(prob, r.cfg.isola);
    io::write_branch_csv(r.file("isola.csv"), res.isola);
    r.summary = {{"closed", res.closed}, {"points", res.isola.points.size()}, {"folds", res.folds},
                 {"mu_min", res.mu_min}, {"mu_max", res.mu_max}, {"end_reason", res.isola.end_reason}};
    if (res.primary_distance) {
        r.summary["primary_distance"] = *res.primary_distance;
        r.summary["merged"] = res.merged;
    }
    std::cout << "isola closed=" << res.closed << " points " << res.isola.points.size() << '\n';
}

void cmd_cusp(Run& r) {
    const CuspRun& c = r.cfg.cusp;
    std::ofstream log = io::open_out(r.file("cusp.log"));
    const CuspSequence seq = cusp_sequence(r.cfg.model.build(), r.cfg.grid.nd, r.cfg.grid.symmetry, c.n_first, c.n_last,
                                           c.cusp, c.switchback, &log);
    io::write_cusp_csv(r.file("cusp.csv"), seq);
    json rows = json::array();
    for (const CuspRow& row : seq.rows)
        rows.push_back({{"N", row.N}, {"mu", row.mu}, {"d", row.d}, {"gap", row.gap}, {"nullity", row.nullity},
                        {"converged", row.converged}, {"sector", to_string(row.sector)}, {"residual", row.residual},
                        {"message", row.message}});
    r.summary = {{"rows", rows}};
    if (!seq.fit) throw Error(ErrorKind::NoConvergence, "fewer than three switchbacks located");
    io::write_json(r.file("cusp_fit.json"), io::cusp_fit_json(*seq.fit));
    r.summary["fit"] = io::cusp_fit_json(*seq.fit);
    std::cout << "cusp fit mu_inf " << seq.fit->mu_inf << " d_inf " << seq.fit->d_inf << " rho " << seq.fit->rho << '\n';
}

void cmd_simulate(Run& r) {
    const SimulateRun& s = r.cfg.simulate;
    const SteadyState prob(r.cfg.grid.wedge(), r.cfg.model.build());
    const Vector u = continued_state(prob, s.pattern, s.mu, s.d, 10);
    const SteadyState full = full_problem(prob);
    const Vector U = to_full(prob, u);
    Vector U0 = U;
    double lambda = NAN;
    if (s.perturbation == "random") {
        std::mt19937_64 rng(r.cfg.seed);
        std::uniform_real_distribution<double> dist(-s.amplitude, s.amplitude);
        for (Eigen::Index i = 0; i < U0.size(); ++i) U0[i] += dist(rng);
    } else if (s.perturbation == "unstable") {
        const auto es = dense_eigen(full.jacobian(U, s.mu, s.d));
        const Eigen::Index top = es.eigenvalues().size() - 1;
        lambda = es.eigenvalues()[top];
        if (!(lambda > 0.0)) throw Error(ErrorKind::NoConvergence, "state has no unstable eigenvalue");
        const Vector v = es.eigenvectors().col(top);
        U0 += s.amplitude * v / v.lpNorm<Eigen::Infinity>();
    }
    const Trajectory tr = integrate(full, U0, s.mu, s.d, s.t_end, s.dynamics, &U);
    io::write_trajectory_csv(r.file("trajectory.csv"), tr);
    r.summary = {{"pattern", pattern_json(s.pattern)}, {"final_deviation", tr.deviation.back()}, {"steps", tr.steps},
                 {"rejected", tr.rejected}};
    if (s.perturbation == "unstable") {
        r.summary["eigenvalue"] = lambda;
        try {
            r.summary["growth_rate"] = growth_rate(tr, s.fit_lo, s.fit_hi);
        } catch (const Error& e) {
            r.summary["growth_rate_error"] = e.what();
        }
    }
    std::cout << "simulate final deviation " << tr.deviation.back() << '\n';
}

void cmd_reduced(Run& r) {
    const ReducedRun& s = r.cfg.reduced;
    const auto [lo, hi] = reduced_range(s.id);
    auto out = io::open_out(r.file("reduced.csv"));
    out << "s,u1,u2,d,residual\n";
    double worst = 0.0;
    for (int k = 0; k < s.samples; ++k) {
        const double x = lo + (hi - lo) * k / (s.samples - 1);
        const ReducedPoint p = reduced_branch(s.id, x);
        double res = 0.0;
        for (double v : reduced_residual(s.id, p)) res = std::max(res, std::abs(v));
        worst = std::max(worst, res);
        out << x << ',' << p.u[0] << ',';
        if (p.u.size() > 1) out << p.u[1];
        out << ',' << p.d << ',' << res << '\n';
    }
    const auto [sf, df] = reduced_fold(s.id);
    r.summary = {{"id", to_string(s.id)}, {"s_fold", sf}, {"d_fold", df}, {"max_residual", worst}};
    io::write_json(r.file("reduced.json"), r.summary);
    std::cout << "reduced " << to_string(s.id) << " fold (" << sf << ", " << df << ")\n";
}

void cmd_verify(Run& r) {
    const VerifyRun& s = r.cfg.verify;
    const Nonlinearity nl = r.cfg.model.build();
    const GridSpec w = r.cfg.grid.wedge();
    if (s.pattern.N > w.nd()) throw Error(ErrorKind::Config, "pattern exceeds domain");
    StepConfig step = r.cfg.step;
    step.h_max = s.h_max;
    step.h_init = std::min(step.h_init, s.h_max);
    PatternId id = s.pattern;
    id.symmetry = w.symmetry();
    const FoldPrediction pred = fold_prediction(s.ending);
    const NormalForm nf = normal_form(nl, pred.at_one);
    const FitReport rep = verify_asymptotics(s.ending, s.d_hat, pattern_fold_finder(w, nl, id, s.mu_start, s.direction, step), nf);
    r.summary = io::fit_report_json(rep);
    io::write_json(r.file("fit.json"), r.summary);
    std::cout << "verify-asym " << to_string(s.ending) << " exponent " << rep.exponent << " coefficient "
              << rep.coefficient << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localized lattice patterns: continuation, stability and bifurcation studies"};
    std::string command, config_path, out_dir;
    std::int64_t seed = -1;
    app.add_option("command", command, "Study to run")->required()->check(CLI::IsMember(commands()));
    app.add_option("--config", config_path, "JSON study configuration")->required();
    app.add_option("--out", out_dir, "Output directory (overrides output.directory)");
    app.add_option("--seed", seed, "RNG seed (overrides seed)")->check(CLI::NonNegativeNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    StudyConfig cfg;
    try {
        json j = read_json_file(config_path);
        cfg = parse_config(j, command);
        if (!out_dir.empty()) cfg.output.directory = out_dir;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    }

    json echo = cfg.source;
    echo["output"]["directory"] = cfg.output.directory;
    echo["seed"] = cfg.seed;
    Run run{cfg, fs::path(cfg.output.directory), {}, json::object()};
    const auto t0 = std::chrono::steady_clock::now();
    int code = 0;
    std::string message;
    try {
        fs::create_directories(run.dir);
        if (command == "solve") cmd_solve(run);
        else if (command == "snake") cmd_snake(run);
        else if (command == "asym") cmd_asym(run);
        else if (command == "isola") cmd_isola(run);
        else if (command == "cusp") cmd_cusp(run);
        else if (command == "simulate") cmd_simulate(run);
        else if (command == "reduced") cmd_reduced(run);
        else cmd_verify(run);
    } catch (const Error& e) {
        code = e.exit_code();
        message = std::string(to_string(e.kind())) + ": " + e.what();
    } catch (const fs::filesystem_error& e) {
        code = 1;
        message = std::string("IoError: ") + e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        if (!run.summary.empty() || code == 0) io::write_json(run.dir / "summary.json", run.summary);
        json m = io::manifest_json(command, echo, cfg.seed, wall, code, run.outputs);
        if (!message.empty()) m["error"] = message;
        io::write_json(run.dir / "manifest.json", m);
    } catch (const std::exception& e) {
        std::cerr << "error: cannot write manifest: " << e.what() << '\n';
        if (code == 0) code = 1;
    }
    if (code != 0) std::cerr << "error: " << message << '\n';
    return code;
}
