#pragma once

#include "snaklat/asymptotics.hpp"
#include "snaklat/codim2.hpp"
#include "snaklat/continuation.hpp"
#include "snaklat/dynamics.hpp"
#include "snaklat/studies.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace snaklat {

using json = nlohmann::json;

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"solve", "snake", "asym", "isola", "cusp", "simulate", "reduced", "verify-asym"};
    return c;
}

inline Symmetry symmetry_from_string(const std::string& s) {
    if (s == "off_site") return Symmetry::OffSite;
    if (s == "on_site") return Symmetry::OnSite;
    if (s == "none") return Symmetry::None;
    throw Error(ErrorKind::Config, "unknown symmetry '" + s + "'");
}

inline SectorKind sector_from_string(const std::string& s) {
    for (SectorKind k : all_sectors)
        if (to_string(k) == s) return k;
    throw Error(ErrorKind::Config, "unknown sector '" + s + "'");
}

/// Reads the keys of one JSON object, remembering which were consumed so that
/// leftovers can be rejected.
class KeyReader {
public:
    KeyReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error(ErrorKind::Config, where() + " must be an object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    template <class T>
    T get(const std::string& k, T fallback) {
        seen_.insert(k);
        if (!j_.contains(k)) return fallback;
        return convert<T>(k);
    }

    template <class T>
    T required(const std::string& k) {
        seen_.insert(k);
        if (!j_.contains(k)) throw Error(ErrorKind::Config, "missing key " + child(k));
        return convert<T>(k);
    }

    KeyReader sub(const std::string& k) {
        seen_.insert(k);
        static const json empty = json::object();
        return KeyReader(j_.contains(k) ? j_.at(k) : empty, child(k));
    }

    const json* raw(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k) ? &j_.at(k) : nullptr;
    }

    std::string child(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw Error(ErrorKind::Config, "unknown key " + child(it.key()));
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    template <class T>
    T convert(const std::string& k) const {
        try {
            return j_.at(k).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Config, "bad value for " + child(k) + ": " + e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

struct ModelConfig {
    Family family = Family::CubicQuintic;
    /// Polynomial family only: [mu_power, u_power, coefficient] triples.
    std::vector<Term> terms;
    double mu_lo = 0.0;
    double mu_hi = 1.0;

    Nonlinearity build() const {
        if (family == Family::Polynomial) return Nonlinearity::polynomial(terms, mu_lo, mu_hi);
        return builtin_nonlinearity(family);
    }
};

struct GridConfig {
    int nd = 20;
    Symmetry symmetry = Symmetry::OffSite;

    GridSpec wedge() const { return GridSpec::wedge(nd, symmetry); }
};

struct OutputConfig {
    std::string directory = "out";
    std::vector<std::string> formats{"json", "csv"};

    bool wants(const std::string& f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
};

struct SolveRun {
    PatternId pattern{3, 2};
    double mu = 0.5;
    double d = 1e-3;
    int d_steps = 10;
    double tol = 1e-10;
    bool spectrum = true;
};

struct CuspRun {
    int n_first = 4;
    int n_last = 10;
    CuspOptions cusp;
    SwitchbackOptions switchback;
};

struct SimulateRun {
    PatternId pattern{3, 2};
    double mu = 0.5;
    double d = 1e-3;
    double t_end = 200.0;
    /// none, random (uniform in [-amplitude, amplitude]) or unstable (leading eigenvector).
    std::string perturbation = "random";
    double amplitude = 1e-3;
    DynamicsConfig dynamics;
    /// Deviation band used for the growth-rate fit.
    double fit_lo = 1e-5;
    double fit_hi = 1e-2;
};

struct ReducedRun {
    ReducedId id = ReducedId::PitchInterior;
    int samples = 101;
};

struct VerifyRun {
    Ending ending = Ending::PitchforkInterior;
    PatternId pattern{3, 1};
    double mu_start = 0.3;
    int direction = -1;
    /// Couplings in normal-form units.
    std::vector<double> d_hat{1e-5, 1e-4, 1e-3};
    double h_max = 0.005;
};

struct StudyConfig {
    std::string command;
    json source;
    ModelConfig model;
    GridConfig grid;
    StepConfig step;
    OutputConfig output;
    std::uint64_t seed = 0;

    SolveRun solve;
    SnakeOptions snake;
    AsymOptions asym;
    IsolaOptions isola;
    CuspRun cusp;
    SimulateRun simulate;
    ReducedRun reduced;
    VerifyRun verify;
};

namespace detail {

inline PatternId read_pattern(KeyReader r, PatternId fallback) {
    PatternId p = fallback;
    p.N = r.get<int>("N", p.N);
    p.M = r.get<int>("M", p.M);
    const std::string v = r.get<std::string>("variant", to_string(p.variant));
    if (v == "ubar") p.variant = Variant::UBar;
    else if (v == "vbar") p.variant = Variant::VBar;
    else throw Error(ErrorKind::Config, "unknown pattern variant '" + v + "'");
    r.finish();
    validate(p);
    return p;
}

inline void read_step(KeyReader r, StepConfig& c) {
    c.h_init = r.get<double>("h_init", c.h_init);
    c.h_min = r.get<double>("h_min", c.h_min);
    c.h_max = r.get<double>("h_max", c.h_max);
    c.max_points = r.get<std::size_t>("max_points", c.max_points);
    c.tol = r.get<double>("tol", c.tol);
    c.max_corrector = r.get<int>("max_corrector", c.max_corrector);
    r.finish();
    if (!(c.h_min > 0.0 && c.h_min <= c.h_init && c.h_init <= c.h_max))
        throw Error(ErrorKind::Config, "continuation steps must satisfy 0 < h_min <= h_init <= h_max");
    if (c.max_points < 2) throw Error(ErrorKind::Config, "continuation.max_points must be at least 2");
}

inline void positive(double x, const std::string& name) {
    if (!(x > 0.0)) throw Error(ErrorKind::Config, name + " must be positive");
}

inline void read_run(StudyConfig& c, KeyReader r, const StepConfig& step) {
    const std::string& cmd = c.command;
    if (cmd == "solve") {
        SolveRun& s = c.solve;
        s.pattern = read_pattern(r.sub("pattern"), s.pattern);
        s.mu = r.get<double>("mu", s.mu);
        s.d = r.get<double>("d", s.d);
        s.d_steps = r.get<int>("d_steps", s.d_steps);
        s.tol = r.get<double>("tol", s.tol);
        s.spectrum = r.get<bool>("spectrum", s.spectrum);
        if (s.d < 0.0) throw Error(ErrorKind::Config, "run.d must be non-negative");
        if (s.d_steps < 1) throw Error(ErrorKind::Config, "run.d_steps must be positive");
    } else if (cmd == "snake") {
        SnakeOptions& s = c.snake;
        s.step.h_init = step.h_init;
        s.step.h_min = step.h_min;
        s.step.max_corrector = step.max_corrector;
        s.step.tol = step.tol;
        s.step.h_max = r.get<double>("h_max", std::min(step.h_max, s.step.h_max));
        s.step.max_points = r.get<std::size_t>("max_points", std::max(step.max_points, s.step.max_points));
        s.start = read_pattern(r.sub("start"), s.start);
        s.mu_start = r.get<double>("mu_start", s.mu_start);
        s.d = r.get<double>("d", s.d);
        s.n_max = r.get<int>("n_max", s.n_max);
        s.direction = r.get<int>("direction", s.direction);
        s.mu_min = r.get<double>("mu_min", s.mu_min);
        s.mu_max = r.get<double>("mu_max", s.mu_max);
        s.stability = r.get<bool>("stability", s.stability);
        s.crossing_counts = r.get<bool>("crossing_counts", s.crossing_counts);
        if (s.direction != 1 && s.direction != -1) throw Error(ErrorKind::Config, "run.direction must be 1 or -1");
        if (s.n_max < 1) throw Error(ErrorKind::Config, "run.n_max must be positive");
    } else if (cmd == "asym") {
        AsymOptions& a = c.asym;
        a.origin = read_pattern(r.sub("origin"), a.origin);
        a.d = r.get<double>("d", a.d);
        a.mu_start = r.get<double>("mu_start", a.mu_start);
        a.extra_cells = r.get<int>("extra_cells", a.extra_cells);
        a.window_mu = r.get<double>("window_mu", a.window_mu);
        a.eps_rel = r.get<double>("eps_rel", a.eps_rel);
        a.rise = r.get<double>("rise", a.rise);
        a.primary_step.h_max = a.branch_step.h_max = r.get<double>("h_max", a.branch_step.h_max);
        a.branch_step.max_points = r.get<std::size_t>("max_points", a.branch_step.max_points);
        positive(a.d, "run.d");
        positive(a.eps_rel, "run.eps_rel");
    } else if (cmd == "isola") {
        IsolaOptions& s = c.isola;
        s.base = read_pattern(r.sub("base"), s.base);
        if (const json* cells = r.raw("minus_cells")) {
            s.minus_cells.clear();
            try {
                for (const auto& p : *cells) s.minus_cells.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
            } catch (const json::exception&) {
                throw Error(ErrorKind::Config, "run.minus_cells must be a list of [n, m] pairs");
            }
        }
        s.mu_seed = r.get<double>("mu_seed", s.mu_seed);
        s.d = r.get<double>("d", s.d);
        s.d_steps = r.get<int>("d_steps", s.d_steps);
        s.merge_check = r.get<bool>("merge_check", s.merge_check);
        s.merge_tol = r.get<double>("merge_tol", s.merge_tol);
        s.merge_points = r.get<std::size_t>("merge_points", s.merge_points);
        s.step.h_max = r.get<double>("h_max", s.step.h_max);
        s.step.max_points = r.get<std::size_t>("max_points", s.step.max_points);
        positive(s.d, "run.d");
    } else if (cmd == "cusp") {
        CuspRun& s = c.cusp;
        s.n_first = r.get<int>("n_first", s.n_first);
        s.n_last = r.get<int>("n_last", s.n_last);
        s.cusp.tol = r.get<double>("tol", s.cusp.tol);
        s.cusp.nullity_tol = r.get<double>("nullity_tol", s.cusp.nullity_tol);
        s.cusp.newton_iter = r.get<int>("newton_iter", s.cusp.newton_iter);
        s.cusp.lm_iter = r.get<int>("lm_iter", s.cusp.lm_iter);
        if (const json* secs = r.raw("sectors")) {
            s.cusp.sectors.clear();
            if (!secs->is_array()) throw Error(ErrorKind::Config, "run.sectors must be a list");
            for (const auto& x : *secs) {
                if (!x.is_string()) throw Error(ErrorKind::Config, "run.sectors must be a list of names");
                const SectorKind k = sector_from_string(x.get<std::string>());
                if (k == SectorKind::Trivial) throw Error(ErrorKind::Config, "run.sectors excludes the trivial sector");
                s.cusp.sectors.push_back(k);
            }
        }
        SwitchbackOptions& b = s.switchback;
        b.mu_start = r.get<double>("mu_start", b.mu_start);
        b.d_start = r.get<double>("d_start", b.d_start);
        b.d_step = r.get<double>("d_step", b.d_step);
        b.d_max = r.get<double>("d_max", b.d_max);
        b.d_tol = r.get<double>("d_tol", b.d_tol);
        if (s.n_first < 4 || s.n_last > 16 || s.n_first > s.n_last)
            throw Error(ErrorKind::Config, "cusp N range must lie in [4, 16]");
    } else if (cmd == "simulate") {
        SimulateRun& s = c.simulate;
        s.pattern = read_pattern(r.sub("pattern"), s.pattern);
        s.mu = r.get<double>("mu", s.mu);
        s.d = r.get<double>("d", s.d);
        s.t_end = r.get<double>("t_end", s.t_end);
        s.perturbation = r.get<std::string>("perturbation", s.perturbation);
        s.amplitude = r.get<double>("amplitude", s.amplitude);
        DynamicsConfig& dc = s.dynamics;
        dc.atol = r.get<double>("atol", dc.atol);
        dc.rtol = r.get<double>("rtol", dc.rtol);
        dc.h_init = r.get<double>("h_init", dc.h_init);
        dc.h_max = r.get<double>("h_max", dc.h_max);
        dc.stride = r.get<std::size_t>("stride", dc.stride);
        dc.implicit = r.get<bool>("implicit", dc.implicit);
        dc.dt = r.get<double>("dt", dc.dt);
        s.fit_lo = r.get<double>("fit_lo", s.fit_lo);
        s.fit_hi = r.get<double>("fit_hi", s.fit_hi);
        positive(s.t_end, "run.t_end");
        if (s.perturbation != "none" && s.perturbation != "random" && s.perturbation != "unstable")
            throw Error(ErrorKind::Config, "run.perturbation must be none, random or unstable");
        if (s.d < 0.0) throw Error(ErrorKind::Config, "run.d must be non-negative");
    } else if (cmd == "reduced") {
        ReducedRun& s = c.reduced;
        const std::string id = r.get<std::string>("id", to_string(s.id));
        try {
            s.id = reduced_from_string(id);
        } catch (const Error& e) {
            throw Error(ErrorKind::Config, e.what());
        }
        s.samples = r.get<int>("samples", s.samples);
        if (s.samples < 2) throw Error(ErrorKind::Config, "run.samples must be at least 2");
    } else if (cmd == "verify-asym") {
        VerifyRun& s = c.verify;
        const std::string e = r.get<std::string>("ending", to_string(s.ending));
        try {
            s.ending = ending_from_string(e);
        } catch (const Error& err) {
            throw Error(ErrorKind::Config, err.what());
        }
        s.pattern = read_pattern(r.sub("pattern"), s.pattern);
        s.mu_start = r.get<double>("mu_start", s.mu_start);
        s.direction = r.get<int>("direction", s.direction);
        s.d_hat = r.get<std::vector<double>>("d_hat", s.d_hat);
        s.h_max = r.get<double>("h_max", s.h_max);
        positive(s.h_max, "run.h_max");
        if (s.d_hat.size() < 3) throw Error(ErrorKind::Config, "run.d_hat needs at least three values");
        for (double x : s.d_hat) positive(x, "run.d_hat entries");
        if (s.direction != 1 && s.direction != -1) throw Error(ErrorKind::Config, "run.direction must be 1 or -1");
    }
    r.finish();
}

}  // namespace detail

/// Validates a parsed config for `command`. Unknown keys anywhere are rejected.
inline StudyConfig parse_config(const json& j, const std::string& command) {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
        throw Error(ErrorKind::Config, "unknown command '" + command + "'");
    StudyConfig c;
    c.command = command;
    c.source = j;
    KeyReader top(j, "");

    KeyReader m = top.sub("model");
    c.model.family = family_from_string(m.get<std::string>("family", to_string(c.model.family)));
    if (const json* coeffs = m.raw("coefficients")) {
        if (c.model.family != Family::Polynomial)
            throw Error(ErrorKind::Config, "model.coefficients applies to the polynomial family only");
        try {
            for (const auto& t : *coeffs) c.model.terms.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>()});
        } catch (const json::exception&) {
            throw Error(ErrorKind::Config, "model.coefficients must be [mu_power, u_power, value] triples");
        }
    }
    if (c.model.family == Family::Polynomial && c.model.terms.empty())
        throw Error(ErrorKind::Config, "polynomial family needs model.coefficients");
    c.model.mu_lo = m.get<double>("mu_lo", c.model.mu_lo);
    c.model.mu_hi = m.get<double>("mu_hi", c.model.mu_hi);
    m.finish();

    KeyReader g = top.sub("grid");
    c.grid.nd = g.get<int>("nd", c.grid.nd);
    c.grid.symmetry = symmetry_from_string(g.get<std::string>("symmetry", to_string(c.grid.symmetry)));
    g.finish();
    if (c.grid.nd < 1) throw Error(ErrorKind::Config, "grid.nd must be positive");
    if (c.grid.symmetry == Symmetry::None) throw Error(ErrorKind::Config, "grid.symmetry must be off_site or on_site");

    detail::read_step(top.sub("continuation"), c.step);

    KeyReader o = top.sub("output");
    c.output.directory = o.get<std::string>("directory", c.output.directory);
    c.output.formats = o.get<std::vector<std::string>>("formats", c.output.formats);
    o.finish();
    for (const std::string& f : c.output.formats)
        if (f != "json" && f != "csv") throw Error(ErrorKind::Config, "output.formats accepts json and csv");

    c.seed = top.get<std::uint64_t>("seed", c.seed);
    detail::read_run(c, top.sub("run"), c.step);
    top.finish();

    auto fits = [&](const PatternId& p) {
        if (p.N > c.grid.nd) throw Error(ErrorKind::Config, "pattern exceeds domain");
    };
    if (command == "solve") fits(c.solve.pattern);
    if (command == "snake") {
        fits(c.snake.start);
        if (c.snake.n_max > c.grid.nd) throw Error(ErrorKind::Config, "pattern exceeds domain");
    }
    if (command == "asym") fits(c.asym.origin);
    if (command == "isola") fits(c.isola.base);
    if (command == "simulate") fits(c.simulate.pattern);
    if (command == "verify-asym") fits(c.verify.pattern);
    if (command == "cusp" && c.cusp.n_last >= c.grid.nd) throw Error(ErrorKind::Config, "pattern exceeds domain");
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Config, "config '" + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace snaklat
