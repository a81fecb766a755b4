#pragma once

#include "snaklat/continuation.hpp"
#include "snaklat/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace snaklat {

/// Wedge cells above `threshold`: the size of a ubar-type pattern.
inline int filled_cells(const Vector& u, double threshold = 0.5) {
    return static_cast<int>((u.array() > threshold).count());
}

/// Wedge cells of ubar(N,M): all rows below N plus M cells of row N.
inline int pattern_cells(const PatternId& id) { return (id.N - 1) * id.N / 2 + id.M; }

/// Site carrying the largest weighted null-vector entry. Without a null vector the cell
/// changing most between the neighbours of the fold stands in.
inline Site critical_cell(const GridSpec& wedge, const Branch& branch, const FoldPoint& fold) {
    Vector score;
    if (fold.phi.size() == static_cast<Eigen::Index>(wedge.size())) {
        score = fold.phi.cwiseAbs();
    } else {
        const std::size_t i = fold.branch_index;
        const std::size_t a = i > 0 ? i - 1 : i;
        const std::size_t b = std::min(i + 1, branch.points.size() - 1);
        score = (branch.points[b].u - branch.points[a].u).cwiseAbs();
    }
    Eigen::Index k = 0;
    score.maxCoeff(&k);
    return wedge.site(static_cast<std::size_t>(k));
}

/// Symmetric-averaged field on a full square without symmetry constraint; the sup-norm
/// distance to it measures how far a state is from D4 symmetry.
inline double asymmetry(const GridSpec& full, const Vector& U) {
    const Field f(full, U);
    const int s = reflection_offset(full.centering());
    double worst = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        double avg = 0.0;
        for (D4 g : d4_elements) avg += f.at(act(g, full.site(i), s));
        worst = std::max(worst, std::abs(U[static_cast<Eigen::Index>(i)] - avg / 8.0));
    }
    return worst;
}

// ---------------------------------------------------------------------------------------
// Snaking diagram with fold refinement, stability tags and crossing counts.

struct SnakeOptions {
    PatternId start{1, 1};
    double mu_start = 0.5;
    double d = 1e-3;
    /// Last pattern size N* reached by the run: the branch stops after ubar(N*,N*).
    int n_max = 4;
    int direction = -1;
    double mu_min = -0.05;
    double mu_max = 1.05;
    int d_steps = 10;
    bool stability = true;
    bool crossing_counts = true;
    StepConfig step = [] {
        StepConfig c;
        c.h_max = 0.005;
        c.max_points = 20000;
        return c;
    }();
};

struct SnakeFold {
    FoldPoint fold;
    Site cell;
    int orbit = 0;
    /// Count from the critical-cell orbit and from the alternative M-indexing (four when
    /// the cell sits just below the diagonal, eight otherwise, off-site).
    int expected_orbit = 0;
    int expected_alt = 0;
    std::optional<CrossingCount> crossing;
    std::string crossing_error;
    bool right = false;
};

struct SnakeResult {
    Branch branch;
    std::vector<SnakeFold> folds;
};

inline int alternative_count(Site c, Symmetry sym) {
    if (sym != Symmetry::OffSite) return orbit_size(c, sym);
    return c.m == c.n - 1 ? 4 : 8;
}

inline SnakeResult snake_study(const SteadyState& prob, const SnakeOptions& opt) {
    const GridSpec& w = prob.grid();
    if (w.kind() != GridKind::Wedge) throw Error(ErrorKind::Config, "snake runs on a wedge grid");
    if (opt.n_max > w.nd()) throw Error(ErrorKind::Config, "pattern exceeds domain");
    validate(opt.start);
    if (opt.start.N > w.nd()) throw Error(ErrorKind::Config, "pattern exceeds domain");
    const Nonlinearity& nl = prob.model();
    const auto [lo, hi] = nl.window();

    SnakeResult out;
    out.branch.grid = w;
    const bool range_ok = opt.mu_min < hi && opt.mu_max > lo && opt.mu_min < opt.mu_max;
    if (!range_ok || !(opt.mu_start > lo && opt.mu_start < hi) || opt.mu_start < opt.mu_min || opt.mu_start > opt.mu_max) {
        out.branch.events.push_back({0, EventKind::End});
        out.branch.end_reason = "outside bistable window";
        return out;
    }

    PatternId id = opt.start;
    id.symmetry = w.symmetry();
    Vector u = anti_continuum_pattern(w, id, opt.mu_start, nl).values;
    if (opt.d != 0.0) u = natural_continuation(prob, u, opt.mu_start, 0.0, Parameter::D, opt.d, opt.d_steps);

    const int target = 2 * (opt.n_max * (opt.n_max + 1) / 2 - pattern_cells(opt.start));
    StepConfig cfg = opt.step;
    cfg.direction = opt.direction;
    cfg.p_min = opt.mu_min;
    cfg.p_max = opt.mu_max;
    cfg.tag_stability = opt.stability;
    cfg.stop = [&, user = opt.step.stop](const Branch& b) {
        if (user && user(b)) return true;
        int k = 0;
        for (const Event& e : b.events) k += e.kind == EventKind::Fold;
        const double mu = b.points.back().mu;
        return k >= target && (opt.direction < 0 ? mu < opt.mu_start : mu > opt.mu_start);
    };
    out.branch = continue_branch(prob, make_point(prob, u, opt.mu_start, opt.d), Parameter::Mu, cfg);

    for (FoldPoint& f : detect_and_refine_folds(prob, out.branch)) {
        SnakeFold sf;
        sf.cell = critical_cell(w, out.branch, f);
        sf.orbit = orbit_size(sf.cell, w.symmetry());
        sf.expected_orbit = sf.orbit;
        sf.expected_alt = alternative_count(sf.cell, w.symmetry());
        sf.right = f.mu > 0.5 * (lo + hi);
        if (opt.crossing_counts) {
            try {
                sf.crossing = crossing_count_at_fold(prob, out.branch, f);
            } catch (const Error& e) {
                sf.crossing_error = e.what();
            }
        }
        sf.fold = std::move(f);
        out.folds.push_back(std::move(sf));
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Asymmetric branches leaving the right fold of a ubar pattern.

struct AsymOptions {
    PatternId origin{3, 1};
    double d = 1e-3;
    /// Primary branch: from ubar(1,1) at mu_start downward until `extra_cells` cells
    /// beyond the origin pattern are filled.
    double mu_start = 0.5;
    int extra_cells = 8;
    /// Points of the primary branch with mu above this bracket the origin fold.
    double window_mu = 0.95;
    double eps_rel = 1e-2;
    /// A switched branch stops once its asymmetry has grown `rise` times and fallen
    /// back below its starting value.
    double rise = 3.0;
    StepConfig primary_step = [] {
        StepConfig c;
        c.h_max = 0.005;
        c.max_points = 20000;
        c.p_min = -0.05;
        c.p_max = 1.05;
        return c;
    }();
    StepConfig branch_step = [] {
        StepConfig c;
        c.h_max = 0.005;
        c.max_points = 20000;
        c.p_min = -0.05;
        c.p_max = 1.05;
        return c;
    }();
};

struct AsymBranch {
    SectorKind sector = SectorKind::Sign1;
    /// Primary point the switch started from and the sector eigenvalue there.
    std::size_t start_index = 0;
    double lambda = 0.0;
    /// Side of the primary branch the switch left from (+1 or -1 along the eigenvector).
    double sign = 1.0;
    Branch branch;
    double asym_start = 0.0;
    double asym_max = 0.0;
    double asym_end = 0.0;
    bool returned = false;
    std::size_t reconnect_index = 0;
    double reconnect_distance = 0.0;
    /// Primary fold nearest the reconnection point.
    std::size_t reconnect_fold = 0;
    double reconnect_mu = 0.0;
    bool reconnected = false;
    std::string error;
};

struct AsymResult {
    Branch primary;
    std::vector<std::size_t> folds;
    std::size_t origin_fold = 0;
    double origin_mu = 0.0;
    std::size_t window_lo = 0;
    std::size_t window_hi = 0;
    std::vector<AsymBranch> branches;
    int one_dimensional = 0;
    int two_dimensional = 0;
    int distinct_folds = 0;

    int reconnected() const {
        return static_cast<int>(std::count_if(branches.begin(), branches.end(), [](const AsymBranch& b) { return b.reconnected; }));
    }
};

namespace detail {

/// The k eigenpairs of a dense symmetric matrix closest to zero.
inline std::vector<std::pair<double, Vector>> nearest_zero_modes(const Eigen::MatrixXd& A, int k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(A.rows()));
    for (Eigen::Index i = 0; i < A.rows(); ++i) idx[static_cast<std::size_t>(i)] = i;
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(es.eigenvalues()[a]) < std::abs(es.eigenvalues()[b]);
    });
    std::vector<std::pair<double, Vector>> out;
    for (int j = 0; j < k && j < static_cast<int>(idx.size()); ++j)
        out.emplace_back(es.eigenvalues()[idx[static_cast<std::size_t>(j)]], es.eigenvectors().col(idx[static_cast<std::size_t>(j)]));
    return out;
}

}  // namespace detail

inline AsymResult asym_study(const SteadyState& prob, const AsymOptions& opt) {
    const GridSpec& w = prob.grid();
    if (w.kind() != GridKind::Wedge) throw Error(ErrorKind::Config, "asymmetric study runs from a wedge grid");
    validate(opt.origin);
    if (opt.origin.N > w.nd()) throw Error(ErrorKind::Config, "pattern exceeds domain");
    const Nonlinearity& nl = prob.model();
    const auto [lo, hi] = nl.window();
    const double d = opt.d;

    AsymResult res;
    PatternId first{1, 1, Variant::UBar, w.symmetry()};
    Vector u = anti_continuum_pattern(w, first, opt.mu_start, nl).values;
    u = natural_continuation(prob, u, opt.mu_start, 0.0, Parameter::D, d, 10);
    const int stop_cells = pattern_cells(opt.origin) + opt.extra_cells;
    StepConfig pc = opt.primary_step;
    pc.direction = -1;
    pc.stop = [&](const Branch& b) {
        return filled_cells(b.points.back().u) >= stop_cells && b.points.back().mu < opt.mu_start;
    };
    res.primary = continue_branch(prob, make_point(prob, u, opt.mu_start, d), Parameter::Mu, pc);
    const Branch& prim = res.primary;

    bool found = false;
    for (const FoldPoint& f : detect_and_refine_folds(prob, prim)) {
        res.folds.push_back(f.branch_index);
        if (found || f.mu < 0.5 * (lo + hi)) continue;
        const Site c = critical_cell(w, prim, f);
        if (c.n == opt.origin.N && c.m == opt.origin.M) {
            res.origin_fold = f.branch_index;
            res.origin_mu = f.mu;
            found = true;
        }
    }
    if (!found) throw Error(ErrorKind::NoConvergence, "right fold of " + to_string(opt.origin) + " not reached");

    std::size_t a = res.origin_fold, b = res.origin_fold;
    while (a > 0 && prim.points[a - 1].mu > opt.window_mu) --a;
    while (b + 1 < prim.points.size() && prim.points[b + 1].mu > opt.window_mu) ++b;
    res.window_lo = a;
    res.window_hi = b;

    const SteadyState full = full_problem(prob);
    const std::vector<SectorKind> sectors{SectorKind::Sign1, SectorKind::Sign2, SectorKind::Sign3, SectorKind::TwoDimAxis,
                                          SectorKind::TwoDimDiagonal};
    std::vector<SparseMatrix> basis;
    for (SectorKind k : sectors) basis.push_back(sector_basis(full.grid(), k));
    auto sector_matrix = [&](std::size_t i, std::size_t s) {
        const BranchPoint& bp = prim.points[i];
        return Eigen::MatrixXd(sector_operator(basis[s], full.jacobian(to_full(prob, bp.u), bp.mu, bp.d)));
    };
    auto positives = [&](std::size_t i, std::size_t s) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sector_matrix(i, s), Eigen::EigenvaluesOnly);
        return static_cast<int>((es.eigenvalues().array() > 0.0).count());
    };

    const GridSpec fg = GridSpec::full_square(w.nd(), Symmetry::None, w.symmetry());
    const SteadyState fp(fg, nl);
    struct Seed {
        std::size_t sector, index;
        double lambda;
        Vector psi;
    };
    std::vector<Seed> seeds;
    for (std::size_t s = 0; s < 4; ++s) {
        int prev = positives(a, s);
        for (std::size_t i = a; i < b; ++i) {
            const int next = positives(i + 1, s);
            const int delta = std::abs(next - prev);
            prev = next;
            if (delta == 0) continue;
            std::vector<std::size_t> targets{s};
            if (sectors[s] == SectorKind::TwoDimAxis) targets.push_back(4);
            for (std::size_t t : targets) {
                auto ma = detail::nearest_zero_modes(sector_matrix(i, t), delta);
                auto mb = detail::nearest_zero_modes(sector_matrix(i + 1, t), delta);
                const bool use_a = std::abs(ma.front().first) <= std::abs(mb.front().first);
                for (auto& [lam, v] : use_a ? ma : mb)
                    seeds.push_back({t, use_a ? i : i + 1, lam, basis[t] * v});
            }
        }
    }

    std::vector<Vector> prim_full;
    for (const BranchPoint& q : prim.points) prim_full.push_back(to_full(prob, q.u));
    auto trace = [&](const Seed& sd, double sign) {
        AsymBranch ab;
        ab.sector = sectors[sd.sector];
        ab.start_index = sd.index;
        ab.lambda = sd.lambda;
        ab.sign = sign;
        const BranchPoint& bp = prim.points[sd.index];
        const Vector& U0 = prim_full[sd.index];
        try {
            const BranchPoint sp = switch_branch(fp, U0, bp.mu, d, sign * sd.psi,
                                                 opt.eps_rel * std::max(1.0, U0.lpNorm<Eigen::Infinity>()));
            ab.asym_start = asymmetry(fg, sp.u);
            StepConfig bc = opt.branch_step;
            double amax = 0.0;
            bool back = false;
            bc.stop = [&](const Branch& br) {
                const double x = asymmetry(fg, br.points.back().u);
                amax = std::max(amax, x);
                back = amax > opt.rise * ab.asym_start && x < ab.asym_start;
                return back;
            };
            ab.branch = continue_branch(fp, sp, Parameter::Mu, bc);
            ab.asym_max = amax;
            ab.returned = back;
        } catch (const Error& e) {
            ab.error = e.what();
            return ab;
        }
        const BranchPoint& last = ab.branch.points.back();
        ab.asym_end = asymmetry(fg, last.u);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < prim.points.size(); ++q) {
            const double dist = (prim_full[q] - last.u).norm() + std::abs(prim.points[q].mu - last.mu);
            if (dist < best) {
                best = dist;
                ab.reconnect_index = q;
            }
        }
        ab.reconnect_distance = best;
        const auto gap = [&](std::size_t x) { return x > ab.reconnect_index ? x - ab.reconnect_index : ab.reconnect_index - x; };
        std::size_t nearest = res.folds.front();
        for (std::size_t f : res.folds)
            if (gap(f) < gap(nearest)) nearest = f;
        ab.reconnect_fold = nearest;
        ab.reconnect_mu = prim.points[nearest].mu;
        ab.reconnected = ab.returned && nearest != res.origin_fold;
        return ab;
    };

    std::set<std::size_t> distinct;
    for (const Seed& sd : seeds) {
        AsymBranch ab = trace(sd, 1.0);
        if (!ab.reconnected) {
            AsymBranch other = trace(sd, -1.0);
            if (other.reconnected) ab = std::move(other);
        }
        if (ab.reconnected) distinct.insert(ab.reconnect_fold);
        if (sector_irrep(ab.sector) == Irrep::TwoDim) ++res.two_dimensional;
        else ++res.one_dimensional;
        res.branches.push_back(std::move(ab));
    }
    res.distinct_folds = static_cast<int>(distinct.size());
    return res;
}

// ---------------------------------------------------------------------------------------
// Isolas seeded from a ubar pattern with extra u_- cells.

struct IsolaOptions {
    PatternId base{4, 1};
    std::vector<Site> minus_cells{{3, 3}};
    double mu_seed = 0.75;
    double d = 0.12;
    int d_steps = 40;
    /// Compare against the primary branch through the base pattern.
    bool merge_check = false;
    double merge_tol = 5e-3;
    std::size_t merge_points = 6000;
    StepConfig step = [] {
        StepConfig c;
        c.h_max = 0.01;
        c.max_points = 20000;
        c.p_min = -0.05;
        c.p_max = 1.05;
        return c;
    }();
};

struct IsolaResult {
    Branch isola;
    bool closed = false;
    double mu_min = 0.0;
    double mu_max = 0.0;
    int folds = 0;
    /// Distance from the isola to the primary branch (when checked).
    std::optional<double> primary_distance;
    bool merged = false;
};

inline Vector isola_seed(const SteadyState& prob, const IsolaOptions& opt) {
    const GridSpec& w = prob.grid();
    validate(opt.base);
    if (opt.base.N > w.nd()) throw Error(ErrorKind::Config, "pattern exceeds domain");
    PatternId id = opt.base;
    id.symmetry = w.symmetry();
    Field s = anti_continuum_pattern(w, id, opt.mu_seed, prob.model());
    for (Site c : opt.minus_cells) {
        if (!w.contains(c)) throw Error(ErrorKind::Config, "seed cell outside the wedge");
        s.at(c) = prob.model().u_minus(opt.mu_seed);
    }
    return natural_continuation(prob, s.values, opt.mu_seed, 0.0, Parameter::D, opt.d, opt.d_steps);
}

inline IsolaResult isola_study(const SteadyState& prob, const IsolaOptions& opt) {
    IsolaResult r;
    const Vector u = isola_seed(prob, opt);
    r.isola = trace_isola(prob, make_point(prob, u, opt.mu_seed, opt.d), Parameter::Mu, opt.step);
    r.closed = r.isola.closed;
    r.mu_min = std::numeric_limits<double>::infinity();
    r.mu_max = -r.mu_min;
    for (const BranchPoint& p : r.isola.points) {
        r.mu_min = std::min(r.mu_min, p.mu);
        r.mu_max = std::max(r.mu_max, p.mu);
    }
    for (const Event& e : r.isola.events) r.folds += e.kind == EventKind::Fold;
    if (!opt.merge_check) return r;

    PatternId id = opt.base;
    id.symmetry = prob.grid().symmetry();
    const Vector v = natural_continuation(prob, anti_continuum_pattern(prob.grid(), id, opt.mu_seed, prob.model()).values,
                                          opt.mu_seed, 0.0, Parameter::D, opt.d, opt.d_steps);
    double best = std::numeric_limits<double>::infinity();
    for (int dir : {1, -1}) {
        StepConfig c = opt.step;
        c.direction = dir;
        c.max_points = opt.merge_points;
        c.detect_closure = false;
        const Branch pb = continue_branch(prob, make_point(prob, v, opt.mu_seed, opt.d), Parameter::Mu, c);
        std::vector<double> pn;
        for (const BranchPoint& p : pb.points) pn.push_back(p.u.norm());
        for (const BranchPoint& q : r.isola.points) {
            const double qn = q.u.norm();
            for (std::size_t k = 0; k < pb.points.size(); ++k) {
                if (std::abs(qn - pn[k]) >= best) continue;
                best = std::min(best, (q.u - pb.points[k].u).norm() + std::abs(q.mu - pb.points[k].mu));
            }
        }
    }
    r.primary_distance = best;
    r.merged = !r.closed && best < opt.merge_tol;
    return r;
}

}  // namespace snaklat
